"""Protocol file format: round-trips, digests, error anchoring."""

import json

import numpy as np
import pytest

from qmip import fixtures, files
from qmip.config import ValidationError
from qmip.model import run, validate
from qmip.transforms import (halve_turns, make_perfectly_rewindable,
                             rewind_to_perfect_completeness)


def test_roundtrip_all_fixtures(tmp_path):
    for name, builder in fixtures.BUILDERS.items():
        inst = builder()
        path = tmp_path / f"{name}.json"
        files.save(inst, path)
        loaded = files.load(path)
        assert validate(loaded) == []
        assert loaded.verifier.layout == inst.verifier.layout
        assert abs(run(loaded).acceptance - run(inst).acceptance) <= 1e-12


def test_roundtrip_transform_outputs(tmp_path):
    for inst in (halve_turns(fixtures.five_turn_yes()).instance,
                 make_perfectly_rewindable(fixtures.ent()).instance):
        path = tmp_path / "t.json"
        files.save(inst, path)
        loaded = files.load(path)
        assert abs(run(loaded).acceptance - run(inst).acceptance) <= 1e-12


def test_digest_stable_across_identical_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    files.save(fixtures.guess(), a)
    files.save(fixtures.guess(), b)
    assert files.digest(a) == files.digest(b)


def test_save_is_deterministic(tmp_path):
    t1 = files.save(fixtures.chsh(), tmp_path / "c1.json")
    t2 = files.save(fixtures.chsh(), tmp_path / "c2.json")
    assert t1 == t2


def test_non_unitary_gate_rejected(tmp_path):
    data = files.instance_to_dict(fixtures.always())
    # corrupt the final circuit with a non-unitary matrix gate
    name = next(iter(data["circuits"]))
    data["circuits"][name] = [
        {"gate": "U", "targets": [["V", 0]],
         "matrix": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]}]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match=r"not unitary \(\|\|U\^dag U - I\|\|"):
        files.load(path)


def test_unnormalized_shared_state_rejected(tmp_path):
    data = files.instance_to_dict(fixtures.always())
    data["shared_state"] = {"amplitudes": [[0.5, 0.0], [0.0, 0.0]]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match="not normalized"):
        files.load(path)


def test_parse_error_carries_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"format": "qmip-protocol/1",\n  "registers": [}')
    with pytest.raises(ValidationError, match="line 2"):
        files.load(path)


def test_error_paths_are_anchored(tmp_path):
    data = files.instance_to_dict(fixtures.guess())
    data["turns"][1]["circuits"]["1"] = "no-such-circuit"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match=r"turns\[1\]"):
        files.load(path)


def test_wrong_turn_owner_rejected(tmp_path):
    data = files.instance_to_dict(fixtures.guess())
    data["turns"][0]["owner"] = "provers"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match="must belong to the verifier"):
        files.load(path)


def test_shared_state_by_preparation_circuit(tmp_path):
    data = files.instance_to_dict(fixtures.guess())
    data["circuits"]["prep"] = [{"gate": "H", "targets": [["P1", 0]]}]
    data["shared_state"] = {"circuit": "prep"}
    path = tmp_path / "prep.json"
    path.write_text(json.dumps(data))
    inst = files.load(path)
    assert np.allclose(np.abs(inst.shared.amplitudes) ** 2, [0.5, 0.5])


def test_named_gate_sugar(tmp_path):
    data = files.instance_to_dict(fixtures.guess())
    data["circuits"]["extra"] = [
        {"gate": "CNOT", "targets": [["V", 0], ["V", 1]]},
        {"gate": "TOFFOLI", "targets": [["V", 0], ["V", 1], ["V", 1]]},
    ]
    path = tmp_path / "sugar.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match="overlapping"):
        files.load(path)  # the Toffoli reuses a control as target


def test_run_record_determinism():
    a = files.RunRecord("simulate", "abc", 7, acceptance=0.5)
    b = files.RunRecord("simulate", "abc", 7, acceptance=0.5)
    assert a.as_json_line() == b.as_json_line()
    # wall time excluded from the comparison surface by putting it last
    c = files.RunRecord("simulate", "abc", 7, acceptance=0.5, wall_time_s=1.0)
    assert json.loads(c.as_json_line())["acceptance"] == 0.5


def test_roundtrip_rewound_instance(tmp_path):
    # accept events, a private coin, and branch-keyed never-accept rules all
    # have to survive serialization
    rw = make_perfectly_rewindable(fixtures.ent()).instance
    rewound = rewind_to_perfect_completeness(rw).instance
    path = tmp_path / "rewound.json"
    files.save(rewound, path)
    loaded = files.load(path)
    tr_a, tr_b = run(rewound), run(loaded)
    assert abs(tr_a.acceptance - tr_b.acceptance) <= 1e-12
    assert [r.history for r in tr_a.branches] == [r.history for r in tr_b.branches]
