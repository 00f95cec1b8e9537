"""Optimization over dishonest provers and shared states.

Two engines:

* `optimal_shared_state`: with all prover circuits fixed, acceptance is a
  quadratic form <Phi| A |Phi> on the joint prover space. A is assembled
  exactly by simulating computational basis vectors, and the best shared
  state is the top eigenvector.

* `seesaw`: alternating best-response ascent. Each prover-turn unitary is
  relaxed through the bilinear form Re<phi| (tail) (U x I) (head) |psi> whose
  exact maximizer over unitaries is the polar factor of the environment
  operator E (assembled by one forward and one backward pass per coin branch,
  with environment operators averaged across branches). The shared state is
  re-optimized by the eigensolver. Both moves are exact maximizations of the
  surrogate, so the per-sweep value trace is non-decreasing.

Everything is seeded: restart r uses default_rng([seed, r]).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .circuits import Circuit, Gate, ry
from .config import (DEFAULT_RUN_CONFIG, NumericalCheckError,
                     PreconditionError, RunConfig, ValidationError)
from .linalg import ProjectorOp, Qubit, StateVector, polar_unitary, random_unitary
from .model import (FlatBranch, ProtocolInstance, ProverStrategy,
                    Register, RegisterLayout, VerifierSpec, flatten, run)

_SWAP4 = np.array(
    [[1, 0, 0, 0],
     [0, 0, 1, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1]], dtype=np.complex128)


# ---------------------------------------------------------------------------
# batched simulation engine (columns = independent initial vectors)


class _Sim:
    def __init__(self, layout: RegisterLayout):
        self.layout = layout
        self.n = layout.total_qubits
        self.dim = 2 ** self.n
        self.pos: dict[Qubit, int] = {}
        off = 0
        for r in layout.registers:
            for i in range(r.qubits):
                self.pos[(r.name, i)] = off + i
            off += r.qubits

    def apply(self, cols: np.ndarray, matrix: np.ndarray,
              qubits: Sequence[Qubit]) -> np.ndarray:
        d = len(qubits)
        axes = [self.pos[q] for q in qubits]
        b = cols.shape[1]
        tensor = cols.reshape([2] * self.n + [b])
        m = matrix.reshape([2] * (2 * d))
        out = np.tensordot(m, tensor, axes=(list(range(d, 2 * d)), axes))
        out = np.moveaxis(out, list(range(d)), axes)
        return np.ascontiguousarray(out.reshape(self.dim, b))

    def apply_gate(self, cols: np.ndarray, gate: Gate) -> np.ndarray:
        if gate.controls:
            qubits = tuple(q for q, _ in gate.controls) + gate.targets
            return self.apply(cols, gate.full_matrix(), qubits)
        return self.apply(cols, gate.matrix, gate.targets)

    def project(self, cols: np.ndarray, p: ProjectorOp) -> np.ndarray:
        b = cols.shape[1]
        if p.kind == "complement":
            return cols - self.project(cols, p.inner)
        tensor = cols.reshape([2] * self.n + [b])
        out = np.zeros_like(tensor)
        sl = [slice(None)] * (self.n + 1)
        if p.kind == "output_one":
            sl[self.pos[p.qubits[0]]] = 1
        else:  # all_zero
            for q in p.qubits:
                sl[self.pos[q]] = 0
        out[tuple(sl)] = tensor[tuple(sl)]
        return out.reshape(self.dim, b)

    def project_all(self, cols: np.ndarray,
                    projectors: Sequence[ProjectorOp]) -> np.ndarray:
        for p in projectors:
            cols = self.project(cols, p)
        return cols

    def front(self, vec: np.ndarray, qubits: Sequence[Qubit]) -> np.ndarray:
        """Reshape a single state to (2^d, env) with the given qubits leading."""
        d = len(qubits)
        axes = [self.pos[q] for q in qubits]
        tensor = vec.reshape([2] * self.n)
        tensor = np.moveaxis(tensor, axes, list(range(d)))
        return tensor.reshape(2 ** d, -1)


def _initial_columns(sim: _Sim, layout: RegisterLayout,
                     prover_cols: np.ndarray) -> np.ndarray:
    """|0...0>_(V,M) (x) each column of prover_cols."""
    vm_dim = 2 ** sum(r.qubits for r in layout.verifier_side + layout.messages)
    d_p, b = prover_cols.shape
    cols = np.zeros((vm_dim * d_p, b), dtype=np.complex128)
    cols[:d_p, :] = prover_cols
    return cols


def _prover_dim(layout: RegisterLayout) -> int:
    return 2 ** sum(r.qubits for r in layout.provers)


Assignment = dict[tuple[int, int], np.ndarray]


def _evolve(sim: _Sim, branch: FlatBranch, cols: np.ndarray,
            assignment: Assignment | None,
            collect: list | None = None) -> np.ndarray:
    """Run one branch's ops on the columns. Events deflate; if `collect` is
    given, the projected event columns (and finally the accepted columns) are
    appended to it."""
    for op in branch.ops:
        if op.kind == "gate":
            cols = sim.apply_gate(cols, op.gate)
        elif op.kind == "prover":
            cols = sim.apply(cols, assignment[op.prover_key], op.qubits)
        elif op.kind == "event":
            projected = sim.project_all(cols, op.projectors)
            if collect is not None:
                collect.append(projected)
            cols = cols - projected
    accepted = sim.project_all(cols, branch.accept)
    if collect is not None:
        collect.append(accepted)
    return cols


def _branch_value(sim: _Sim, branch: FlatBranch, col: np.ndarray,
                  assignment: Assignment | None) -> float:
    hits: list[np.ndarray] = []
    _evolve(sim, branch, col, assignment, collect=hits)
    return sum(float(np.vdot(v, v).real) for v in hits)


def _value(sim: _Sim, branches: Sequence[FlatBranch], init: np.ndarray,
           assignment: Assignment | None) -> float:
    return sum(br.weight * _branch_value(sim, branch=br, col=init.copy(),
                                         assignment=assignment)
               for br in branches)


# ---------------------------------------------------------------------------
# optimal shared state


def _acceptance_operator(sim: _Sim, layout: RegisterLayout,
                         branches: Sequence[FlatBranch],
                         assignment: Assignment | None,
                         basis_cols: np.ndarray) -> np.ndarray:
    """A with <Phi|A|Phi> = acceptance, restricted to span(basis columns)."""
    b = basis_cols.shape[1]
    a = np.zeros((b, b), dtype=np.complex128)
    for br in branches:
        hits: list[np.ndarray] = []
        _evolve(sim, br, _initial_columns(sim, layout, basis_cols),
                assignment, collect=hits)
        for v in hits:
            a += br.weight * (v.conj().T @ v)
    return (a + a.conj().T) / 2.0


def optimal_shared_state(verifier: VerifierSpec,
                         provers: Sequence[ProverStrategy],
                         config: RunConfig = DEFAULT_RUN_CONFIG,
                         check: bool = True) -> tuple[float, StateVector]:
    """Best a-priori shared state for fixed prover circuits, by eigensolver.

    Returns (p_max, state). With check=True the state is re-simulated and
    must reproduce p_max within 1e-9.
    """
    layout = verifier.layout
    d_p = _prover_dim(layout)
    if d_p > 2 ** 12:
        raise PreconditionError(
            f"joint prover space 2^{int(math.log2(d_p))} exceeds the eigensolver budget")
    dummy = StateVector(np.eye(d_p, dtype=np.complex128)[:, 0],
                        tuple((r.name, r.qubits) for r in layout.provers))
    inst = ProtocolInstance(verifier, tuple(provers), dummy)
    branches = flatten(inst, config=config)
    sim = _Sim(layout)
    a = _acceptance_operator(sim, layout, branches, None,
                             np.eye(d_p, dtype=np.complex128))
    vals, vecs = np.linalg.eigh(a)
    p_max = float(vals[-1])
    vec = vecs[:, -1]
    state = StateVector(vec / np.linalg.norm(vec),
                        tuple((r.name, r.qubits) for r in layout.provers))
    if check:
        resim = run(inst.with_shared(state), config=config).acceptance
        if abs(resim - p_max) > 1e-9:
            raise NumericalCheckError(
                f"eigenvalue {p_max:.12f} vs re-simulated {resim:.12f}")
    return p_max, state


# ---------------------------------------------------------------------------
# see-saw


@dataclass(frozen=True)
class SeesawConfig:
    prover_dims: tuple[int, ...]          # qubits of each P_i
    restarts: int = 20
    max_sweeps: int = 60
    convergence_tol: float = 1e-9
    seed: int = 0
    product_groups: tuple[tuple[int, ...], ...] | None = None
    # product_groups partitions prover indices into groups that may not share
    # entanglement across group boundaries (see parallel repetition audits)

    def __post_init__(self):
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.convergence_tol <= 0:
            raise ValidationError("convergence_tol must be > 0")


@dataclass(frozen=True)
class AdversaryResult:
    value: float
    strategies: tuple[ProverStrategy, ...]
    shared: StateVector
    trace: tuple[float, ...]              # per-sweep values of the best restart
    converged: bool
    restart_values: tuple[float, ...]
    prover_dims: tuple[int, ...]


def resize_prover_registers(verifier: VerifierSpec,
                            prover_dims: Sequence[int]) -> VerifierSpec:
    layout = verifier.layout
    if len(prover_dims) != layout.k:
        raise ValidationError(f"need {layout.k} prover dimensions")
    provers = tuple(Register(r.name, int(d), "prover")
                    for r, d in zip(layout.provers, prover_dims))
    new_layout = RegisterLayout(layout.verifier_side + layout.messages + provers)
    return replace(verifier, layout=new_layout)


def strategies_from_assignment(verifier: VerifierSpec,
                               assignment: Assignment) -> tuple[ProverStrategy, ...]:
    layout = verifier.layout
    n_turns = verifier.prover_turn_count()
    out = []
    for i in range(1, layout.k + 1):
        qs = tuple(layout.qubits_of(layout.provers[i - 1].name)
                   + layout.qubits_of(layout.messages[i - 1].name))
        circuits = tuple(
            Circuit((Gate("U", assignment[(i, t)], qs),), label=f"P{i} turn {t}")
            for t in range(1, n_turns + 1))
        out.append(ProverStrategy(i, circuits))
    return tuple(out)


def _environment_update(sim: _Sim, branches: Sequence[FlatBranch],
                        init: np.ndarray, assignment: Assignment,
                        key: tuple[int, int]) -> np.ndarray:
    """Replace assignment[key] by the polar factor of its environment operator."""
    d = assignment[key].shape[0]
    env = np.zeros((d, d), dtype=np.complex128)
    for br in branches:
        idx = next(i for i, op in enumerate(br.ops)
                   if op.kind == "prover" and op.prover_key == key)
        qubits = br.ops[idx].qubits
        # forward to just before the variable
        chi = init.copy()
        for op in br.ops[:idx]:
            if op.kind == "gate":
                chi = sim.apply_gate(chi, op.gate)
            elif op.kind == "prover":
                chi = sim.apply(chi, assignment[op.prover_key], op.qubits)
            elif op.kind == "event":
                chi = chi - sim.project_all(chi, op.projectors)
        # forward through the tail, stashing event hits
        phi = sim.apply(chi, assignment[key], qubits)
        stash: dict[int, np.ndarray] = {}
        for j, op in enumerate(br.ops[idx + 1:], start=idx + 1):
            if op.kind == "gate":
                phi = sim.apply_gate(phi, op.gate)
            elif op.kind == "prover":
                phi = sim.apply(phi, assignment[op.prover_key], op.qubits)
            elif op.kind == "event":
                hit = sim.project_all(phi, op.projectors)
                stash[j] = hit
                phi = phi - hit
        mu = sim.project_all(phi, br.accept)
        # backward to just after the variable, accumulating event terms
        for j in range(len(br.ops) - 1, idx, -1):
            op = br.ops[j]
            if op.kind == "gate":
                mu = sim.apply_gate(mu, op.gate.dagger())
            elif op.kind == "prover":
                mu = sim.apply(mu, assignment[op.prover_key].conj().T, op.qubits)
            elif op.kind == "event":
                mu = mu - sim.project_all(mu, op.projectors)
                mu = mu + stash[j]
        c = sim.front(mu[:, 0], qubits).conj() @ sim.front(chi[:, 0], qubits).T
        env += br.weight * c.conj()
    new_u = polar_unitary(env).matrix
    assignment[key] = new_u
    return new_u


def _product_state_update(sim: _Sim, layout: RegisterLayout,
                          branches: Sequence[FlatBranch],
                          assignment: Assignment,
                          groups: Sequence[Sequence[int]],
                          group_states: list[np.ndarray]) -> np.ndarray:
    """One round of per-group eigen-updates under a product constraint.

    Groups must be contiguous in the prover register order. Returns the full
    product state.
    """
    reg_dims = [2 ** r.qubits for r in layout.provers]
    for gi, group in enumerate(groups):
        dims = [reg_dims[i - 1] for i in group]
        d_g = int(np.prod(dims))
        basis = np.eye(d_g, dtype=np.complex128)
        factors = []
        for gj, _ in enumerate(groups):
            if gj == gi:
                factors.append(basis)
            else:
                factors.append(group_states[gj][:, None])
        cols = factors[0]
        for f in factors[1:]:
            cols = np.kron(cols, f)
        a = _acceptance_operator(sim, layout, branches, assignment, cols)
        _, vecs = np.linalg.eigh(a)
        group_states[gi] = vecs[:, -1] / np.linalg.norm(vecs[:, -1])
    full = group_states[0]
    for st in group_states[1:]:
        full = np.kron(full, st)
    return full


def seesaw(verifier: VerifierSpec, cfg: SeesawConfig,
           config: RunConfig = DEFAULT_RUN_CONFIG) -> AdversaryResult:
    """Alternating maximization over prover unitaries and the shared state.

    Returns the best restart. The trace holds one value per sweep and is
    non-decreasing; the final value is re-simulated through the plain
    executor and must agree within 1e-9.
    """
    spec = resize_prover_registers(verifier, cfg.prover_dims)
    layout = spec.layout
    if cfg.product_groups is not None:
        flat = [i for g in cfg.product_groups for i in g]
        if sorted(flat) != list(range(1, layout.k + 1)):
            raise ValidationError("product groups must partition the provers")
    branches = flatten(verifier=spec, config=config)
    sim = _Sim(layout)
    d_p = _prover_dim(layout)
    keys = sorted({op.prover_key for br in branches for op in br.ops
                   if op.kind == "prover"},
                  key=lambda k: (k[1], k[0]))
    dims = {key: 2 ** (layout.provers[key[0] - 1].qubits
                       + layout.message_qubits) for key in keys}

    best: tuple[float, int, Assignment, np.ndarray, list[float], bool] | None = None
    restart_values = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        assignment: Assignment = {k: random_unitary(dims[k], rng) for k in keys}
        if cfg.product_groups is None:
            group_states = None
        else:
            group_states = []
            for g in cfg.product_groups:
                d_g = int(np.prod([2 ** layout.provers[i - 1].qubits for i in g]))
                v = rng.standard_normal(d_g) + 1j * rng.standard_normal(d_g)
                group_states.append(v / np.linalg.norm(v))
        shared = None
        trace: list[float] = []
        converged = False
        prev = -1.0
        for _ in range(cfg.max_sweeps):
            if cfg.product_groups is None:
                basis = np.eye(d_p, dtype=np.complex128)
                a = _acceptance_operator(sim, layout, branches, assignment, basis)
                _, vecs = np.linalg.eigh(a)
                shared = vecs[:, -1] / np.linalg.norm(vecs[:, -1])
            else:
                shared = _product_state_update(sim, layout, branches, assignment,
                                               cfg.product_groups, group_states)
            init = _initial_columns(sim, layout, shared[:, None])
            for key in keys:
                _environment_update(sim, branches, init, assignment, key)
            value = _value(sim, branches, init, assignment)
            trace.append(value)
            if value - prev < cfg.convergence_tol:
                converged = True
                break
            prev = value
        restart_values.append(trace[-1])
        cand = (trace[-1], -r, assignment, shared, trace, converged)
        if best is None or cand[:2] > best[:2]:
            best = cand

    value, _, assignment, shared, trace, converged = best
    strategies = strategies_from_assignment(spec, assignment)
    shared_state = StateVector(shared, tuple((r.name, r.qubits)
                                             for r in layout.provers))
    inst = ProtocolInstance(spec, strategies, shared_state)
    resim = run(inst, config=config).acceptance
    if abs(resim - value) > 1e-9:
        raise NumericalCheckError(
            f"see-saw value {value:.12f} vs re-simulated {resim:.12f}")
    return AdversaryResult(resim, strategies, shared_state, tuple(trace),
                           converged, tuple(restart_values), cfg.prover_dims)


def random_search(verifier: VerifierSpec, prover_dims: Sequence[int],
                  samples: int, seed: int = 0,
                  config: RunConfig = DEFAULT_RUN_CONFIG) -> float:
    """Best acceptance over `samples` Haar-random strategies and states.

    A lower-bound oracle, independent of the see-saw path.
    """
    spec = resize_prover_registers(verifier, prover_dims)
    layout = spec.layout
    branches = flatten(verifier=spec, config=config)
    sim = _Sim(layout)
    d_p = _prover_dim(layout)
    keys = sorted({op.prover_key for br in branches for op in br.ops
                   if op.kind == "prover"})
    dims = {key: 2 ** (layout.provers[key[0] - 1].qubits
                       + layout.message_qubits) for key in keys}
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        assignment = {k: random_unitary(dims[k], rng) for k in keys}
        v = rng.standard_normal(d_p) + 1j * rng.standard_normal(d_p)
        v /= np.linalg.norm(v)
        init = _initial_columns(sim, layout, v[:, None])
        best = max(best, _value(sim, branches, init, assignment))
    return best


# ---------------------------------------------------------------------------
# exhaustive grid oracle


def _grid_turn_unitary(theta0: float, theta1: float) -> np.ndarray:
    """Message-bit-controlled RY on the private qubit, then swap the private
    qubit into the message slot. Basis order (P, M), big-endian P."""
    c = np.zeros((4, 4), dtype=np.complex128)
    for m_bit, theta in ((0, theta0), (1, theta1)):
        r = ry(theta)
        for p_out in (0, 1):
            for p_in in (0, 1):
                c[2 * p_out + m_bit, 2 * p_in + m_bit] = r[p_out, p_in]
    return _SWAP4 @ c


def brute_force_value(verifier: VerifierSpec, grid: float = math.pi / 64,
                      max_evals: int = 200_000,
                      config: RunConfig = DEFAULT_RUN_CONFIG) -> float:
    """Exhaustive grid over a two-angle-per-turn strategy family.

    Every prover turn must act on a (1 private qubit, 1 message qubit) pair.
    Each turn's unitary is a message-controlled RY pair followed by a swap;
    the shared state is eigen-optimized exactly at every grid point, so the
    result is a guaranteed lower bound on the true optimum. If the grid would
    exceed `max_evals`, prover 1's turns are pinned to the canonical angles
    (0, pi/2), which preserves the lower-bound guarantee.
    """
    layout = verifier.layout
    if layout.message_qubits != 1 or any(r.qubits != 1 for r in layout.provers):
        raise PreconditionError(
            "grid search needs 1-qubit private and message registers per prover turn")
    spec = verifier
    branches = flatten(verifier=spec, config=config)
    sim = _Sim(layout)
    d_p = _prover_dim(layout)
    keys = sorted({op.prover_key for br in branches for op in br.ops
                   if op.kind == "prover"})
    points = max(2, int(round(2 * math.pi / grid)))
    angles = [2 * math.pi * j / points for j in range(points)]

    free = list(keys)
    pinned: dict[tuple[int, int], tuple[float, float]] = {}
    if points ** (2 * len(free)) > max_evals:
        for key in keys:
            if key[0] == 1:
                pinned[key] = (0.0, math.pi / 2)
        free = [k for k in keys if k not in pinned]
    if points ** (2 * len(free)) > max_evals:
        raise PreconditionError(
            f"grid of {points}^{2*len(free)} points exceeds the exhaustion "
            f"budget ({max_evals})")

    basis = np.eye(d_p, dtype=np.complex128)
    best = 0.0
    assignment: Assignment = {
        k: _grid_turn_unitary(*pinned[k]) for k in pinned}
    for combo in itertools.product(angles, repeat=2 * len(free)):
        for j, key in enumerate(free):
            assignment[key] = _grid_turn_unitary(combo[2 * j], combo[2 * j + 1])
        a = _acceptance_operator(sim, layout, branches, assignment, basis)
        top = float(np.linalg.eigvalsh(a)[-1])
        if top > best:
            best = top
    return min(best, 1.0)
