"""Exact dense linear algebra over partitioned qubit registers.

State vectors are indexed big-endian: the first qubit of the first register
in the layout is the most significant bit of the amplitude index. Everything
is plain complex128 numpy; at desk scale (<= ~22 qubits total, operator
targets <= ~10 qubits) dense is both exact and fast enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances, ValidationError

Qubit = tuple[str, int]          # (register name, qubit index within register)
Layout = tuple[tuple[str, int], ...]   # ordered (register name, qubit count)


def _as_layout(layout: Iterable[Sequence]) -> Layout:
    out = tuple((str(name), int(n)) for name, n in layout)
    names = [name for name, _ in out]
    if len(set(names)) != len(names):
        raise ValidationError(f"register names not unique: {names}")
    for name, n in out:
        if n < 0:
            raise ValidationError(f"register {name} has negative size")
    return out


@dataclass(frozen=True)
class StateVector:
    """Normalized amplitude vector over an ordered set of named registers."""

    amplitudes: np.ndarray
    layout: Layout
    normalized: bool = True

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "layout", _as_layout(self.layout))
        n = self.n_qubits
        if amps.shape != (2**n,):
            raise ValidationError(
                f"amplitude vector has length {amps.shape}, layout needs 2^{n}"
            )
        if self.normalized:
            err = abs(np.linalg.norm(amps) - 1.0)
            if err > DEFAULT_TOLERANCES.state_norm * 10**3:
                # loose gate here; strict checks live with the callers that
                # promise normalization (file loading, run()).
                raise ValidationError(f"state norm deviates from 1 by {err:.3e}")

    @property
    def n_qubits(self) -> int:
        return sum(n for _, n in self.layout)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def register_sizes(self) -> dict[str, int]:
        return dict(self.layout)

    def qubit_position(self, qubit: Qubit) -> int:
        """Global big-endian position of (register, index)."""
        reg, idx = qubit
        offset = 0
        for name, n in self.layout:
            if name == reg:
                if not 0 <= idx < n:
                    raise ValidationError(f"qubit index {idx} out of range for {reg}({n})")
                return offset + idx
            offset += n
        raise ValidationError(f"unknown register {reg!r}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.n_qubits)

    def with_amplitudes(self, amps: np.ndarray, normalized: bool | None = None) -> "StateVector":
        return StateVector(amps, self.layout,
                           self.normalized if normalized is None else normalized)


def zero_state(layout: Iterable[Sequence]) -> StateVector:
    lay = _as_layout(layout)
    n = sum(q for _, q in lay)
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps, lay)


def tensor_states(a: StateVector, b: StateVector) -> StateVector:
    """a (x) b, with a's registers preceding b's."""
    return StateVector(np.kron(a.amplitudes, b.amplitudes),
                       a.layout + b.layout,
                       a.normalized and b.normalized)


def basis_state(layout: Iterable[Sequence], bits: Sequence[int]) -> StateVector:
    lay = _as_layout(layout)
    n = sum(q for _, q in lay)
    if len(bits) != n:
        raise ValidationError("bit string length does not match layout")
    idx = 0
    for b in bits:
        idx = (idx << 1) | (int(b) & 1)
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[idx] = 1.0
    return StateVector(amps, lay)


def reorder_registers(state: StateVector, new_order: Sequence[str]) -> StateVector:
    """Permute the register order of `state` (same registers, new layout order)."""
    old_names = [name for name, _ in state.layout]
    if sorted(new_order) != sorted(old_names):
        raise ValidationError("new_order must be a permutation of the register names")
    sizes = state.register_sizes()
    positions: dict[str, list[int]] = {}
    off = 0
    for name, n in state.layout:
        positions[name] = list(range(off, off + n))
        off += n
    perm = [p for name in new_order for p in positions[name]]
    tensor = state.tensor().transpose(perm)
    layout = tuple((name, sizes[name]) for name in new_order)
    return StateVector(tensor.reshape(-1), layout, state.normalized)


@dataclass(frozen=True)
class UnitaryOp:
    """A 2^d x 2^d unitary acting on an ordered list of target qubits."""

    matrix: np.ndarray
    targets: tuple[Qubit, ...] = ()
    label: str = ""
    tolerances: Tolerances = field(default_factory=lambda: DEFAULT_TOLERANCES, repr=False)

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", tuple((str(r), int(i)) for r, i in self.targets))
        d = m.shape[0]
        if m.ndim != 2 or m.shape[0] != m.shape[1] or d & (d - 1):
            raise ValidationError(f"operator matrix must be square power-of-two, got {m.shape}")
        if self.targets and 2 ** len(self.targets) != d:
            raise ValidationError(
                f"{len(self.targets)} targets do not match a {d}x{d} matrix"
            )
        err = np.abs(m.conj().T @ m - np.eye(d)).max()
        if err > self.tolerances.unitarity:
            raise ValidationError(f"operator not unitary (||U^dag U - I|| = {err:.3e})")

    @property
    def arity(self) -> int:
        return int(np.log2(self.matrix.shape[0]))

    def dagger(self) -> "UnitaryOp":
        return UnitaryOp(self.matrix.conj().T, self.targets,
                         label=self.label + "^dag" if self.label else "",
                         tolerances=self.tolerances)


# ---------------------------------------------------------------------------
# projectors


@dataclass(frozen=True)
class ProjectorOp:
    """One of: output-qubit-is-1, all-listed-qubits-are-0, complement-of(P).

    complement(all_zero(())) is the never-accept projector (all_zero on an
    empty list is the identity).
    """

    kind: str                     # "output_one" | "all_zero" | "complement"
    qubits: tuple[Qubit, ...] = ()
    inner: "ProjectorOp | None" = None

    def __post_init__(self):
        if self.kind not in ("output_one", "all_zero", "complement"):
            raise ValidationError(f"unknown projector kind {self.kind!r}")
        if self.kind == "output_one" and len(self.qubits) != 1:
            raise ValidationError("output_one takes exactly one qubit")
        if self.kind == "complement" and self.inner is None:
            raise ValidationError("complement needs an inner projector")
        object.__setattr__(self, "qubits", tuple((str(r), int(i)) for r, i in self.qubits))

    @staticmethod
    def output_one(qubit: Qubit) -> "ProjectorOp":
        return ProjectorOp("output_one", (qubit,))

    @staticmethod
    def all_zero(qubits: Iterable[Qubit]) -> "ProjectorOp":
        return ProjectorOp("all_zero", tuple(qubits))

    @staticmethod
    def complement(inner: "ProjectorOp") -> "ProjectorOp":
        return ProjectorOp("complement", (), inner)

    @staticmethod
    def never() -> "ProjectorOp":
        return ProjectorOp.complement(ProjectorOp.all_zero(()))

    def target_qubits(self) -> tuple[Qubit, ...]:
        if self.kind == "complement":
            return self.inner.target_qubits()
        return self.qubits


def _target_axes(state: StateVector, qubits: Sequence[Qubit]) -> list[int]:
    axes = [state.qubit_position(q) for q in qubits]
    if len(set(axes)) != len(axes):
        raise ValidationError(f"duplicate target qubits: {qubits}")
    return axes


def apply(state: StateVector, op: UnitaryOp) -> StateVector:
    """Return U|psi> with the same layout. Norm is preserved by unitarity."""
    amps = apply_matrix(state, op.matrix, op.targets)
    return state.with_amplitudes(amps)


def apply_matrix(state: StateVector, matrix: np.ndarray,
                 targets: Sequence[Qubit]) -> np.ndarray:
    """Apply an arbitrary (not necessarily unitary) matrix on target qubits.

    Index-permutation application: reshape to a [2]*n tensor, contract the
    target axes against the matrix, move the axes back. O(2^n * 2^d) work,
    never materializes a 2^n x 2^n matrix.
    """
    n = state.n_qubits
    d = len(targets)
    if matrix.shape != (2**d, 2**d):
        raise ValidationError(f"matrix shape {matrix.shape} does not fit {d} targets")
    if d == 0:
        return state.amplitudes * matrix[0, 0]
    axes = _target_axes(state, targets)
    psi = state.tensor()
    m = matrix.reshape([2] * (2 * d))
    psi = np.tensordot(m, psi, axes=(list(range(d, 2 * d)), axes))
    # tensordot left the target axes first; restore original ordering
    psi = np.moveaxis(psi, list(range(d)), axes)
    return np.ascontiguousarray(psi.reshape(-1))


def project(state: StateVector, p: ProjectorOp) -> np.ndarray:
    """Return the (unnormalized) amplitudes of P|psi>."""
    amps = state.amplitudes
    n = state.n_qubits
    if p.kind == "output_one":
        pos = state.qubit_position(p.qubits[0])
        tensor = amps.reshape([2] * n).copy()
        sl = [slice(None)] * n
        sl[pos] = 0
        tensor[tuple(sl)] = 0.0
        return tensor.reshape(-1)
    if p.kind == "all_zero":
        if not p.qubits:
            return amps.copy()
        tensor = amps.reshape([2] * n).copy()
        mask = np.zeros([2] * n, dtype=bool)
        sl = [slice(None)] * n
        for q in p.qubits:
            sl[state.qubit_position(q)] = 0
        mask[tuple(sl)] = True
        tensor[~mask] = 0.0
        return tensor.reshape(-1)
    # complement
    return amps - project(state, p.inner)


def project_norm_sq(state: StateVector, p: ProjectorOp) -> float:
    """||P |psi>||^2, clipped into [0, 1] for normalized inputs."""
    val = float(np.linalg.norm(project(state, p)) ** 2)
    if state.normalized:
        val = min(max(val, 0.0), 1.0)
    return val


# ---------------------------------------------------------------------------
# density-operator utilities


def _check_density(rho: np.ndarray, tol: Tolerances, name: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"{name} is not square")
    if np.abs(rho - rho.conj().T).max() > tol.hermiticity * 10**2:
        raise ValidationError(f"{name} is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol.trace:
        raise ValidationError(f"{name} does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -tol.psd:
        raise ValidationError(f"{name} is not positive semidefinite")
    return rho


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def _pure_part(rho: np.ndarray, tol: float = 1e-12) -> np.ndarray | None:
    """Return the state vector if rho is (numerically) rank one, else None."""
    purity = float(np.trace(rho @ rho).real)
    if abs(purity - 1.0) > 1e-10:
        return None
    vals, vecs = np.linalg.eigh(rho)
    return vecs[:, -1]


def fidelity(rho: np.ndarray, sigma: np.ndarray,
             tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """F(rho, sigma) = tr sqrt(sqrt(rho) sigma sqrt(rho)), in [0, 1].

    For a pair of pure states the overlap |<phi|psi>| is computed directly;
    the matrix square-root path is kept for mixed inputs.
    """
    rho = _check_density(rho, tolerances, "rho")
    sigma = _check_density(sigma, tolerances, "sigma")
    if rho.shape != sigma.shape:
        raise ValidationError(
            f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    phi = _pure_part(rho)
    psi = _pure_part(sigma)
    if phi is not None and psi is not None:
        return float(min(abs(np.vdot(phi, psi)), 1.0))
    if phi is not None:
        # F = sqrt(<phi| sigma |phi>)
        return float(min(np.sqrt(max(np.vdot(phi, sigma @ phi).real, 0.0)), 1.0))
    if psi is not None:
        return float(min(np.sqrt(max(np.vdot(psi, rho @ psi).real, 0.0)), 1.0))
    s = _psd_sqrt(rho)
    vals = np.linalg.eigvalsh(s @ sigma @ s)
    return float(min(np.sqrt(np.clip(vals, 0.0, None)).sum(), 1.0))


def pure_fidelity(phi: np.ndarray, psi: np.ndarray) -> float:
    """|<phi|psi>| for unit vectors."""
    return float(abs(np.vdot(np.asarray(phi), np.asarray(psi))))


# ---------------------------------------------------------------------------
# eigenproblems and polar decomposition


def max_eigenpair(h: np.ndarray,
                  tolerances: Tolerances = DEFAULT_TOLERANCES
                  ) -> tuple[float, np.ndarray]:
    """Maximum eigenvalue and a unit eigenvector of a Hermitian matrix."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError("eigensolver input is not square")
    herm_err = np.abs(h - h.conj().T).max()
    if herm_err > tolerances.hermiticity:
        raise ValidationError(f"input not Hermitian (deviation {herm_err:.3e})")
    vals, vecs = np.linalg.eigh(h)
    v = vecs[:, -1]
    return float(vals[-1]), v / np.linalg.norm(v)


def polar_unitary(a: np.ndarray, targets: Sequence[Qubit] = (),
                  tolerances: Tolerances = DEFAULT_TOLERANCES) -> UnitaryOp:
    """The unitary maximizing Re tr(U^dag a): U = V W^dag from a = V S W^dag.

    Rank-deficient inputs are allowed; any completion of the SVD basis is a
    valid maximizer. tr(U^dag a) equals the sum of singular values (real,
    nonnegative).
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("polar decomposition input is not square")
    v, _, wh = np.linalg.svd(a)
    return UnitaryOp(v @ wh, tuple(targets), tolerances=tolerances)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    # fix the phase ambiguity so the distribution is exactly Haar
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    k = rank or dim
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
