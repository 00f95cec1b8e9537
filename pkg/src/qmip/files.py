"""Protocol description files: a human-diffable JSON schema.

Complex numbers are [re, im] pairs; matrices are row-major. Gates come from
the named vocabulary (H, X, Y, Z, S, CNOT, TOFFOLI, SWAP, CPHASE) or are
explicit unitaries ("U" with a matrix); any gate can carry a list of
(qubit, bit) controls, and a step can reference a named circuit. Loading
validates everything and anchors error messages with structural paths.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .circuits import Circuit, Gate, GATE_NAMES, _SQ, _SWAP
from .config import DEFAULT_TOLERANCES, ValidationError
from .linalg import ProjectorOp, StateVector
from .model import (AcceptNowStep, AcceptRule, ApplyStep, CoinStep,
                    FinalDecision, InstanceMeta, ProtocolInstance,
                    ProverStrategy, Register, RegisterLayout, VerifierSpec,
                    VerifierTurn, turn_owner, validate)

FORMAT_TAG = "qmip-protocol/1"
STRATEGY_TAG = "qmip-strategy/1"

PROJ_OUTPUT_ONE = "output-qubit-is-1"
PROJ_ALL_ZERO = "all-listed-qubits-are-0"
PROJ_COMPLEMENT = "complement-of"


def _err(path: str, msg: str) -> ValidationError:
    return ValidationError(f"{path}: {msg}")


# ---------------------------------------------------------------------------
# complex / matrix encoding


def _c_enc(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _c_dec(v, path: str) -> complex:
    if not (isinstance(v, list) and len(v) == 2):
        raise _err(path, "complex numbers are [re, im] pairs")
    return complex(float(v[0]), float(v[1]))


def _mat_enc(m: np.ndarray) -> list[list[list[float]]]:
    return [[_c_enc(z) for z in row] for row in np.asarray(m)]


def _mat_dec(v, path: str) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise _err(path, "matrix must be a non-empty row-major list")
    return np.array([[_c_dec(z, path) for z in row] for row in v],
                    dtype=np.complex128)


def _qubit_enc(q) -> list:
    return [q[0], q[1]]


def _qubit_dec(v, path: str) -> tuple[str, int]:
    if not (isinstance(v, list) and len(v) == 2):
        raise _err(path, "qubits are [register, index] pairs")
    return (str(v[0]), int(v[1]))


# ---------------------------------------------------------------------------
# gates and circuits


def _gate_enc(g: Gate) -> dict:
    out: dict[str, Any] = {"gate": g.name, "targets": [_qubit_enc(t) for t in g.targets]}
    if g.name == "U" or g.name not in GATE_NAMES:
        out["gate"] = "U"
        out["matrix"] = _mat_enc(g.matrix)
    elif g.name == "SWAP":
        pass
    if g.controls:
        out["controls"] = [[_qubit_enc(q), b] for q, b in g.controls]
    return out


def _check_unitary(name: str, m: np.ndarray, path: str) -> None:
    d = m.shape[0]
    if m.ndim != 2 or m.shape[0] != m.shape[1] or d & (d - 1):
        raise _err(path, f"gate {name} matrix must be square power-of-two")
    dev = float(np.abs(m.conj().T @ m - np.eye(d)).max())
    if dev > DEFAULT_TOLERANCES.unitarity:
        raise _err(path, f"gate {name} not unitary (||U^dag U - I|| = {dev:.3e})")


def _gate_dec(v, circuits: dict[str, Circuit], path: str) -> list[Gate]:
    if not isinstance(v, dict) or "gate" not in v:
        raise _err(path, "gate entries are objects with a 'gate' field")
    name = v["gate"]
    controls = tuple((_qubit_dec(c[0], f"{path}.controls"), int(c[1]) & 1)
                     for c in v.get("controls", []))
    if name == "CIRCUIT":
        ref = v.get("ref")
        if ref not in circuits:
            raise _err(path, f"unknown circuit reference {ref!r}")
        circ = circuits[ref]
        if controls:
            circ = circ.controlled(controls)
        return list(circ.gates)
    targets = [_qubit_dec(t, f"{path}.targets") for t in v.get("targets", [])]
    if name in ("H", "X", "Y", "Z", "S"):
        if len(targets) != 1:
            raise _err(path, f"{name} takes one target")
        return [Gate(name, _SQ[name], tuple(targets), controls)]
    if name == "CNOT":
        if len(targets) != 2:
            raise _err(path, "CNOT takes [control, target]")
        return [Gate("X", _SQ["X"], (targets[1],),
                     ((targets[0], 1),) + controls)]
    if name == "TOFFOLI":
        if len(targets) != 3:
            raise _err(path, "TOFFOLI takes [control, control, target]")
        return [Gate("X", _SQ["X"], (targets[2],),
                     ((targets[0], 1), (targets[1], 1)) + controls)]
    if name == "SWAP":
        if len(targets) != 2:
            raise _err(path, "SWAP takes two targets")
        return [Gate("SWAP", _SWAP, tuple(targets), controls)]
    if name == "CPHASE":
        if not targets:
            raise _err(path, "CPHASE needs at least one qubit")
        return [Gate("Z", _SQ["Z"], (targets[-1],),
                     tuple((q, 1) for q in targets[:-1]) + controls)]
    if name == "U":
        m = _mat_dec(v.get("matrix"), f"{path}.matrix")
        if m.shape[0] != 2 ** len(targets):
            raise _err(path, f"matrix of size {m.shape[0]} does not fit "
                             f"{len(targets)} targets")
        _check_unitary("U", m, path)
        return [Gate("U", m, tuple(targets), controls)]
    raise _err(path, f"unknown gate {name!r}")


def _circuit_enc(c: Circuit) -> list[dict]:
    return [_gate_enc(g) for g in c.gates]


def _circuit_dec(v, circuits: dict[str, Circuit], path: str) -> Circuit:
    if v is None:
        return Circuit(())
    if isinstance(v, str):
        if v not in circuits:
            raise _err(path, f"unknown circuit {v!r}")
        return circuits[v]
    if not isinstance(v, list):
        raise _err(path, "circuits are names or gate lists")
    gates: list[Gate] = []
    for i, gv in enumerate(v):
        gates.extend(_gate_dec(gv, circuits, f"{path}[{i}]"))
    return Circuit(tuple(gates))


# ---------------------------------------------------------------------------
# projectors


def _proj_enc(p: ProjectorOp) -> dict:
    if p.kind == "output_one":
        return {"type": PROJ_OUTPUT_ONE, "qubit": _qubit_enc(p.qubits[0])}
    if p.kind == "all_zero":
        return {"type": PROJ_ALL_ZERO, "qubits": [_qubit_enc(q) for q in p.qubits]}
    return {"type": PROJ_COMPLEMENT, "inner": _proj_enc(p.inner)}


def _proj_dec(v, path: str) -> ProjectorOp:
    if not isinstance(v, dict) or "type" not in v:
        raise _err(path, "projectors are objects with a 'type' field")
    t = v["type"]
    if t == PROJ_OUTPUT_ONE:
        return ProjectorOp.output_one(_qubit_dec(v.get("qubit"), path))
    if t == PROJ_ALL_ZERO:
        return ProjectorOp.all_zero(
            tuple(_qubit_dec(q, path) for q in v.get("qubits", [])))
    if t == PROJ_COMPLEMENT:
        return ProjectorOp.complement(_proj_dec(v.get("inner"), f"{path}.inner"))
    raise _err(path, f"unknown projector type {t!r}")


def _when_enc(w) -> list | None:
    return None if w is None else [w[0], w[1]]


def _when_dec(v, path: str):
    if v is None:
        return None
    if not (isinstance(v, list) and len(v) == 2):
        raise _err(path, "conditions are [coin id, outcome] pairs")
    return (str(v[0]), str(v[1]))


# ---------------------------------------------------------------------------
# instance <-> dict


def instance_to_dict(instance: ProtocolInstance) -> dict:
    spec = instance.verifier
    layout = spec.layout
    circuits: dict[str, list] = {}

    def name_circuit(base: str, c: Circuit) -> str:
        nm = base
        i = 2
        while nm in circuits:
            nm = f"{base}_{i}"
            i += 1
        circuits[nm] = _circuit_enc(c)
        return nm

    turns_out: list[dict] = []
    v_idx = 0
    p_idx = 0
    for t in range(1, spec.m + 1):
        if turn_owner(spec.m, t) == "V":
            v_idx += 1
            steps_out = []
            for s in spec.turns[v_idx - 1].steps:
                if isinstance(s, ApplyStep):
                    steps_out.append({
                        "apply": name_circuit(f"v{v_idx}", s.circuit),
                        "when": _when_enc(s.when)})
                elif isinstance(s, CoinStep):
                    steps_out.append({"coin": {
                        "id": s.coin_id, "flips": s.flips,
                        "recipients": list(s.recipients),
                        "record": None if s.record is None
                        else [_qubit_enc(q) for q in s.record]}})
                else:
                    steps_out.append({
                        "accept_now": [_proj_enc(p) for p in s.projectors],
                        "when": _when_enc(s.when)})
            turns_out.append({"owner": "verifier", "steps": steps_out})
        else:
            p_idx += 1
            entry = {}
            for p in instance.provers:
                entry[str(p.index)] = name_circuit(
                    f"p{p.index}_t{p_idx}", p.circuits[p_idx - 1])
            turns_out.append({"owner": "provers", "circuits": entry})

    final_steps = []
    for s in spec.final.steps:
        if isinstance(s, ApplyStep):
            final_steps.append({"apply": name_circuit("final", s.circuit),
                                "when": _when_enc(s.when)})
        else:
            final_steps.append({"accept_now": [_proj_enc(p) for p in s.projectors],
                                "when": _when_enc(s.when)})
    accept = [{"projectors": [_proj_enc(p) for p in rule.projectors],
               "when": _when_enc(rule.when)} for rule in spec.final.accept]

    meta = instance.meta
    return {
        "format": FORMAT_TAG,
        "meta": {
            "name": meta.name, "role": meta.role,
            "claimed_completeness": meta.claimed_completeness,
            "claimed_soundness": meta.claimed_soundness,
            "notes": list(meta.notes),
        },
        "registers": [{"name": r.name, "qubits": r.qubits, "role": r.role}
                      for r in layout.registers],
        "circuits": circuits,
        "turns": turns_out,
        "final": {"steps": final_steps, "accept": accept},
        "output_qubit": None if spec.output_qubit is None
        else _qubit_enc(spec.output_qubit),
        "shared_state": {"amplitudes": [_c_enc(z)
                                        for z in instance.shared.amplitudes]},
    }


def instance_from_dict(data: dict) -> ProtocolInstance:
    if not isinstance(data, dict) or data.get("format") != FORMAT_TAG:
        raise _err("format", f"expected {FORMAT_TAG!r}")
    regs = []
    for i, rv in enumerate(data.get("registers", [])):
        path = f"registers[{i}]"
        try:
            regs.append(Register(str(rv["name"]), int(rv["qubits"]),
                                 str(rv["role"])))
        except (KeyError, TypeError) as e:
            raise _err(path, f"malformed register entry ({e})")
    layout = RegisterLayout(tuple(regs))

    circuits: dict[str, Circuit] = {}
    for name, cv in data.get("circuits", {}).items():
        circuits[name] = _circuit_dec(cv, circuits, f"circuits.{name}")

    turns_v: list[VerifierTurn] = []
    prover_circuits: dict[int, list[Circuit]] = {
        i: [] for i in range(1, layout.k + 1)}
    turns = data.get("turns", [])
    m = len(turns)
    for t, tv in enumerate(turns, start=1):
        path = f"turns[{t-1}]"
        owner = tv.get("owner")
        expected = "verifier" if turn_owner(m, t) == "V" else "provers"
        if owner != expected:
            raise _err(path, f"turn {t} must belong to the {expected} "
                             f"(alternation with the last turn for the provers)")
        if owner == "verifier":
            steps: list = []
            for si, sv in enumerate(tv.get("steps", [])):
                spath = f"{path}.steps[{si}]"
                if "apply" in sv:
                    steps.append(ApplyStep(
                        _circuit_dec(sv["apply"], circuits, spath),
                        _when_dec(sv.get("when"), spath)))
                elif "coin" in sv:
                    cv = sv["coin"]
                    rec = cv.get("record")
                    steps.append(CoinStep(
                        str(cv.get("id", f"coin{t}")), int(cv.get("flips", 1)),
                        tuple(int(r) for r in cv.get("recipients", [])),
                        None if rec is None else tuple(
                            _qubit_dec(q, spath) for q in rec)))
                elif "accept_now" in sv:
                    steps.append(AcceptNowStep(
                        tuple(_proj_dec(p, spath) for p in sv["accept_now"]),
                        _when_dec(sv.get("when"), spath)))
                else:
                    raise _err(spath, "steps are apply / coin / accept_now")
            turns_v.append(VerifierTurn(tuple(steps)))
        else:
            entry = tv.get("circuits", {})
            for i in range(1, layout.k + 1):
                prover_circuits[i].append(
                    _circuit_dec(entry.get(str(i)), circuits,
                                 f"{path}.circuits.{i}"))

    fv = data.get("final", {})
    final_steps: list = []
    for si, sv in enumerate(fv.get("steps", [])):
        spath = f"final.steps[{si}]"
        if "apply" in sv:
            final_steps.append(ApplyStep(
                _circuit_dec(sv["apply"], circuits, spath),
                _when_dec(sv.get("when"), spath)))
        elif "accept_now" in sv:
            final_steps.append(AcceptNowStep(
                tuple(_proj_dec(p, spath) for p in sv["accept_now"]),
                _when_dec(sv.get("when"), spath)))
        else:
            raise _err(spath, "final steps are apply / accept_now")
    accept = tuple(
        AcceptRule(tuple(_proj_dec(p, f"final.accept[{i}]")
                         for p in rv.get("projectors", [])),
                   _when_dec(rv.get("when"), f"final.accept[{i}]"))
        for i, rv in enumerate(fv.get("accept", [])))

    out_q = data.get("output_qubit")
    spec = VerifierSpec(layout, m, tuple(turns_v),
                        FinalDecision(tuple(final_steps), accept),
                        None if out_q is None else _qubit_dec(out_q, "output_qubit"))

    sv = data.get("shared_state", {})
    prover_layout = tuple((r.name, r.qubits) for r in layout.provers)
    if "amplitudes" in sv:
        amps = np.array([_c_dec(z, "shared_state.amplitudes")
                         for z in sv["amplitudes"]], dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-9:
            raise _err("shared_state", f"amplitudes not normalized "
                                       f"(||psi|| deviates by {abs(norm-1.0):.3e})")
        shared = StateVector(amps / norm, prover_layout)
    elif "circuit" in sv:
        from .circuits import apply_circuit
        from .linalg import zero_state
        prep = _circuit_dec(sv["circuit"], circuits, "shared_state.circuit")
        shared = apply_circuit(zero_state(prover_layout), prep)
    else:
        raise _err("shared_state", "needs amplitudes or a preparation circuit")

    mv = data.get("meta", {})
    meta = InstanceMeta(
        name=str(mv.get("name", "")),
        role=mv.get("role"),
        claimed_completeness=mv.get("claimed_completeness"),
        claimed_soundness=mv.get("claimed_soundness"),
        notes=tuple(mv.get("notes", [])))

    provers = tuple(ProverStrategy(i, tuple(prover_circuits[i]))
                    for i in range(1, layout.k + 1))
    instance = ProtocolInstance(spec, provers, shared, meta)
    problems = validate(instance)
    if problems:
        raise ValidationError("; ".join(problems))
    return instance


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=1)


def save(instance: ProtocolInstance, path: str | Path) -> str:
    text = canonical_json(instance_to_dict(instance)) + "\n"
    Path(path).write_text(text)
    return text


def load(path: str | Path) -> ProtocolInstance:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{p}: line {e.lineno}: {e.msg}")
    try:
        return instance_from_dict(data)
    except ValidationError as e:
        raise ValidationError(f"{p}: {e}")


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# strategy files (adversary output) and run records


def strategy_to_dict(result) -> dict:
    return {
        "format": STRATEGY_TAG,
        "value": result.value,
        "prover_dims": list(result.prover_dims),
        "strategies": [
            {"index": p.index,
             "turns": [_circuit_enc(c) for c in p.circuits]}
            for p in result.strategies],
        "shared": [_c_enc(z) for z in result.shared.amplitudes],
        "trace": list(result.trace),
        "converged": result.converged,
        "restart_values": list(result.restart_values),
    }


def load_strategy(path: str | Path) -> dict:
    p = Path(path)
    data = json.loads(p.read_text())
    if data.get("format") != STRATEGY_TAG:
        raise ValidationError(f"{p}: expected {STRATEGY_TAG!r}")
    dims = [int(d) for d in data["prover_dims"]]
    strategies = []
    for sv in data["strategies"]:
        circuits = tuple(_circuit_dec(cv, {}, "strategy")
                         for cv in sv["turns"])
        strategies.append(ProverStrategy(int(sv["index"]), circuits))
    amps = np.array([_c_dec(z, "shared") for z in data["shared"]],
                    dtype=np.complex128)
    return {"prover_dims": dims, "strategies": tuple(strategies),
            "shared_amplitudes": amps, "value": float(data["value"])}


@dataclass(frozen=True)
class RunRecord:
    command: str
    input_digest: str
    seed: int | None
    acceptance: float | None = None
    transform_report: dict | None = None
    adversary: dict | None = None
    verdict: str | None = None
    wall_time_s: float | None = None

    def as_json_line(self) -> str:
        data = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(data, sort_keys=True)
