"""Protocol model: validation, execution, coins, purification."""

from dataclasses import replace

import numpy as np
import pytest

from qmip import fixtures
from qmip.circuits import Circuit, cnot, x
from qmip.config import BudgetError, RunConfig, ValidationError
from qmip.linalg import ProjectorOp, StateVector
from qmip.model import (AcceptRule, ApplyStep, CoinStep, FinalDecision,
                        ProtocolInstance, ProverStrategy, Register,
                        RegisterLayout, VerifierSpec, VerifierTurn,
                        acceptance_probability, is_public_coin, purify_coins,
                        run, turn_owner, validate)
from qmip.transforms import (direct_two_turn, halve_turns,
                             to_public_coin_3turn)


def test_validate_well_formed_fixture():
    assert validate(fixtures.guess()) == []


def test_validate_prover_locality():
    inst = fixtures.chsh()
    bad = list(inst.provers)
    # prover 2 reaching into M1
    bad[1] = ProverStrategy(2, (Circuit((x(("M1", 0)),)),))
    problems = validate(inst.with_provers(bad))
    assert any("prover 2 acts outside (P2, M2)" in p for p in problems)


def test_validate_unequal_message_sizes():
    with pytest.raises(ValidationError, match="unequal|message"):
        lay = RegisterLayout((
            Register("V", 1, "verifier"),
            Register("M1", 1, "message"), Register("M2", 2, "message"),
            Register("P1", 1, "prover"), Register("P2", 1, "prover")))
        inst = fixtures.chsh()
        spec = replace(inst.verifier, layout=lay)
        problems = validate(ProtocolInstance(spec, inst.provers, inst.shared))
        if problems:
            raise ValidationError("; ".join(problems))


def test_turn_owner_parity():
    # even turn count: verifier first; odd: provers first; last always provers
    for m in range(1, 13):
        assert turn_owner(m, m) == "P"
        if m >= 2:
            assert turn_owner(m, 1) == ("V" if m % 2 == 0 else "P")
        owners = [turn_owner(m, t) for t in range(1, m + 1)]
        for a, b in zip(owners, owners[1:]):
            assert a != b


def test_prover_turn_counts():
    for name in ("guess", "five_turn_yes", "nine_turn_yes", "three_turn"):
        inst = fixtures.BUILDERS[name]()
        m = inst.m
        expected = (m + 1) // 2 if m % 2 else m // 2
        for p in inst.provers:
            assert len(p.circuits) == expected


def test_run_examples():
    assert acceptance_probability(fixtures.always()) == 1.0
    assert acceptance_probability(fixtures.never()) == 0.0
    assert abs(acceptance_probability(fixtures.guess()) - 0.5) < 1e-12


def test_run_determinism_bitwise():
    inst = fixtures.chsh()
    a = run(inst).acceptance
    b = run(inst).acceptance
    assert a == b


def test_snapshot_norms_are_one():
    tr = run(fixtures.five_turn_yes(), keep_snapshots=True)
    assert len(tr.snapshots) == 5
    for _, _, st in tr.snapshots:
        assert abs(st.norm() - 1.0) <= 1e-10


def test_branch_mass_conservation():
    # coin branches partition probability: acceptance <= 1 and each branch's
    # banked masses never exceed 1
    inst = halve_turns(fixtures.five_turn_yes()).instance
    tr = run(inst)
    assert len(tr.branches) == 2
    for rec in tr.branches:
        assert rec.weight == 0.5
        assert -1e-12 <= rec.branch_acceptance <= 1 + 1e-12


def test_coin_budget():
    inst = halve_turns(fixtures.five_turn_yes()).instance
    with pytest.raises(BudgetError):
        run(inst, config=RunConfig(max_branches=1))


def test_qubit_budget():
    with pytest.raises(BudgetError):
        run(fixtures.chsh(), config=RunConfig(max_qubits=3))


def _hidden_coin_variant():
    """GUESS with the hidden coin implemented as an explicit coin turn that is
    broadcast to nobody (private classical randomness)."""
    lay = RegisterLayout((Register("V", 2, "verifier"),
                          Register("M1", 1, "message"),
                          Register("P1", 1, "prover")))
    spec = VerifierSpec(
        lay, 2,
        (VerifierTurn((CoinStep("h", 1, recipients=(), record=(("V", 0),)),)),),
        FinalDecision(
            (ApplyStep(Circuit((cnot(("M1", 0), ("V", 1)),
                                cnot(("V", 0), ("V", 1)), x(("V", 1))))),),
            (AcceptRule((ProjectorOp.output_one(("V", 1)),)),)),
        output_qubit=("V", 1))
    shared = StateVector(np.array([1, 0], dtype=complex), (("P1", 1),))
    return ProtocolInstance(spec, (ProverStrategy(1, (Circuit(()),)),), shared)


def test_private_coin_matches_hadamard_model():
    # branch-enumerated private coin vs the committed coherent-H fixture
    coin_version = _hidden_coin_variant()
    assert abs(acceptance_probability(coin_version)
               - acceptance_probability(fixtures.guess())) < 1e-12


def test_purify_equals_branch_enumeration():
    cases = [
        halve_turns(fixtures.five_turn_yes()).instance,
        to_public_coin_3turn(fixtures.three_turn()).instance,
        direct_two_turn(fixtures.three_turn()).instance,
        _hidden_coin_variant(),
    ]
    for inst in cases:
        a = run(inst).acceptance
        b = run(purify_coins(inst)).acceptance
        assert abs(a - b) <= 1e-10


def test_purified_instance_is_coin_free_and_valid():
    inst = purify_coins(halve_turns(fixtures.five_turn_yes()).instance)
    assert validate(inst) == []
    from qmip.model import coin_steps
    assert coin_steps(inst.verifier) == []


def test_is_public_coin_classification():
    pc = to_public_coin_3turn(fixtures.three_turn()).instance
    assert is_public_coin(pc.verifier)
    assert not is_public_coin(fixtures.chsh().verifier)
    # halving output broadcasts but also applies circuits after the coin
    hv = halve_turns(fixtures.five_turn_yes()).instance
    assert not is_public_coin(hv.verifier)


def test_accept_rules_must_cover_branches():
    inst = halve_turns(fixtures.five_turn_yes()).instance
    spec = inst.verifier
    broken = replace(spec, final=FinalDecision(spec.final.steps,
                                               spec.final.accept[:1]))
    problems = validate(replace(inst, verifier=broken))
    assert any("cover" in p for p in problems)


def test_purify_rejects_conditioned_accept_events():
    from qmip.config import PreconditionError
    from qmip.transforms import (make_perfectly_rewindable,
                                 rewind_to_perfect_completeness)
    rw = make_perfectly_rewindable(fixtures.good()).instance
    rewound = rewind_to_perfect_completeness(rw).instance
    with pytest.raises(PreconditionError, match="accept events"):
        purify_coins(rewound)
