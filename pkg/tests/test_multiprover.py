"""Multi-prover paths through the transforms: the constructions must handle
several provers whose optimal shared state is genuinely entangled."""

import math

import numpy as np

from qmip import fixtures
from qmip.adversary import optimal_shared_state
from qmip.circuits import Circuit
from qmip.model import (ProtocolInstance, ProverStrategy, run, validate)
from qmip.transforms import (halve_turns, make_perfectly_rewindable,
                             parallel_repetition_fresh_provers,
                             rewind_to_perfect_completeness,
                             sequential_repetition, to_public_coin_3turn)

COS2_PI_8 = (1.0 + 1.0 / math.sqrt(2.0)) / 2.0


def test_two_prover_rewinding_with_entangled_state():
    # flag normalization on the two-prover game: the eigen-optimal shared
    # state is the maximally correlated pair, and the rewound system accepts
    # the honest (still entangled) provers with certainty
    res = make_perfectly_rewindable(fixtures.chsh())
    amps = res.instance.shared.amplitudes
    epr = np.zeros(4, dtype=complex)
    epr[0] = epr[3] = 1 / math.sqrt(2)
    assert abs(abs(np.vdot(epr, amps)) - 1.0) <= 1e-9
    p, _ = optimal_shared_state(res.instance.verifier, res.instance.provers)
    assert abs(p - 0.5) <= 1e-9

    rw = rewind_to_perfect_completeness(res.instance)
    assert rw.instance.k == 2 and rw.instance.m == 6
    assert abs(rw.report.output_honest - 1.0) <= 1e-9
    assert abs(rw.report.extras["p3"] - 1.0) <= 1e-9


def test_odd_turn_rewinding_full_checks():
    res = make_perfectly_rewindable(fixtures.five_turn_yes())
    out = rewind_to_perfect_completeness(res.instance)
    assert out.instance.m == 18  # padded to 6 turns, then tripled
    assert abs(out.report.output_honest - 1.0) <= 1e-9


def _delayed_chsh():
    """The two-prover game stretched over five turns: questions at turn 2,
    answers at turn 3, padding elsewhere."""
    base = fixtures.chsh()
    ident = Circuit(())
    spec = base.verifier
    from dataclasses import replace
    from qmip.model import ApplyStep, VerifierTurn
    turns = (spec.turns[0], VerifierTurn((ApplyStep(ident),)))
    new_spec = replace(spec, m=5, turns=turns)
    provers = tuple(
        ProverStrategy(p.index, (ident, p.circuits[0], ident))
        for p in base.provers)
    return ProtocolInstance(new_spec, provers, base.shared, base.meta)


def test_two_prover_halving():
    inst = _delayed_chsh()
    assert validate(inst) == []
    c = run(inst).acceptance
    assert abs(c - COS2_PI_8) <= 1e-12
    res = halve_turns(inst)
    assert res.report.output_shape == (2, 3)
    assert abs(res.report.output_honest - (1 + c) / 2) <= 1e-9


def test_two_prover_public_coin():
    pr = parallel_repetition_fresh_provers(fixtures.three_turn(), 2)
    pc = to_public_coin_3turn(pr.instance)
    assert pc.report.output_shape == (2, 3)
    assert abs(pc.report.output_honest - (1 + 0.75 ** 2) / 2) <= 1e-9


def test_two_prover_broadcast_purifies_exactly():
    # the coin XOR-broadcast writes into several message registers; its
    # coherent form must still match branch enumeration exactly
    from qmip.model import purify_coins
    pc = to_public_coin_3turn(
        parallel_repetition_fresh_provers(fixtures.three_turn(), 2).instance)
    a = run(pc.instance).acceptance
    b = run(purify_coins(pc.instance)).acceptance
    assert abs(a - b) <= 1e-10


def test_sequential_repetition_odd_turns_seam():
    sr = sequential_repetition(fixtures.three_turn(), 2)
    # odd copies need one separating verifier turn: m' = n*m + (n-1)
    assert sr.instance.m == 7
    assert abs(sr.report.output_honest - 0.75 ** 2) <= 1e-9
    assert validate(sr.instance) == []
