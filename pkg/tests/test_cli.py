import json
import random

import pytest

from contfactor import serialize as ser
from contfactor import star as st
from contfactor.campaigns import random_element
from contfactor.cli import main
from contfactor.matalg import Element, standard_embedding
from contfactor.scalar import GF, QQ, QQI
from contfactor.stabilize import generate_instance


def _run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


@pytest.mark.parametrize("f", [QQ, QQI, GF(11)], ids=lambda f: f.name)
def test_element_round_trip(f):
    rng = random.Random(1)
    for _ in range(10):
        x = random_element(rng, [2, 3], f)
        doc = json.loads(ser.dumps(ser.element_to_json(x)))
        assert ser.element_from_json(doc, f) == x


def test_hom_round_trip():
    h = standard_embedding([1, 2], [5], [[1, 2]], QQ)
    back = ser.hom_from_json(json.loads(ser.dumps(ser.hom_to_json(h))), QQ)
    assert back.images() == h.images() and back.verify()


def test_instance_and_pair_round_trip(tmp_path):
    inst = generate_instance(3, 2, 8, budget=1)
    path = tmp_path / "inst.json"
    ser.write(ser.instance_to_json(inst), str(path))
    back = ser.instance_from_json(ser.load(str(path)))
    assert back.eps == inst.eps and back.approximants == inst.approximants
    assert back.rho.images() == inst.rho.images() and back.A.hom.images() == inst.A.hom.images()

    p = st.projection_onto((QQI(1, 1), QQI(1)), QQI)
    q = Element.unit([2], QQI, 0, 0, 0)
    assert ser.pair_from_json(json.loads(ser.dumps(ser.pair_to_json(p, q)))) == (p, q)


def test_schema_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "schema": "contfactor/1",\n  "kind": \n}\n')
    with pytest.raises(ser.SchemaError) as exc:
        ser.load(str(bad))
    assert exc.value.where == f"{bad}:4:1"
    with pytest.raises(ser.SchemaError):
        ser.check_schema({"schema": "other/1", "kind": "projection-pair"}, "projection-pair")
    with pytest.raises(ser.SchemaError):
        ser.pair_from_json({"schema": ser.SCHEMA, "kind": "stabilization-instance"})
    with pytest.raises(ser.SchemaError) as exc:
        ser.element_from_json([[["1", "2"]]], QQ, "$.p")
    assert exc.value.where == "$.p[0]"
    h = ser.hom_to_json(standard_embedding([2], [4], [[2]], QQ))
    h["images"][0]["image"] = ser.element_to_json(2 * Element.unit([4], QQ, 0, 0, 0))
    with pytest.raises(ser.SchemaError):
        ser.hom_from_json(h, QQ)


def test_cli_input_errors(tmp_path):
    assert main(["halperin", "--theta", "3/2"]) == 1
    assert main(["halperin", "--theta", "x"]) == 1
    assert main(["halperin", "--field", "gf:12"]) == 1
    assert main(["halperin", "--stages", "0"]) == 1
    assert main(["no-such-command"]) == 1
    assert main(["star-equiv", str(tmp_path / "missing.json")]) == 1


def test_cli_infeasible_ambient(tmp_path, capsys):
    code, doc = _run(["halperin", "--theta", "1/3", "--stages", "3", "--ambient", "27720"], tmp_path)
    assert code == 3 and doc is None
    assert "109798920" in capsys.readouterr().err


def test_cli_halperin_report(tmp_path):
    code, doc = _run(["halperin", "--theta", "1/3", "--stages", "1", "--ambient", "2520"], tmp_path)
    assert code == 0 and doc["verdict"] == "pass" and doc["kind"] == "run-report"
    assert [s["q"] for s in doc["chain"]["stages"]] == [1, 84]


def test_cli_gen_and_star_equiv(tmp_path):
    pair = tmp_path / "pair.json"
    assert main(["gen", "projection-pair", "--field", "qi", "--discriminant", "3", "--out", str(pair)]) == 0
    code, doc = _run(["star-equiv", str(pair)], tmp_path)
    assert code == 0 and doc["equivalent"] is True and doc["star_equivalent"] is False
    assert doc["witness"] is None

    assert main(["gen", "projection-pair", "--field", "qi", "--discriminant", "2", "--out", str(pair)]) == 0
    code, doc = _run(["star-equiv", str(pair)], tmp_path)
    assert code == 0 and doc["star_equivalent"] is True and doc["witness"] is not None

    assert main(["gen", "projection-pair", "--field", "q"]) == 1


def test_cli_gen_and_stabilize(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["gen", "stabilization", "--p", "2", "--ambient", "8", "--seed", "5", "--out", str(inst)]) == 0
    code, doc = _run(["stabilize", str(inst)], tmp_path)
    assert code == 0 and doc["verdict"] == "pass"
    assert doc["max_distance"] is not None and doc["assertions"]


def test_cli_bounds_report_structure(tmp_path):
    code, doc = _run(["bounds", "--trials", "20", "--kp-trials", "5", "--seed", "1"], tmp_path)
    assert code == 0 and doc["verdict"] == "pass"
    assert doc["config"] == {"trials": 20, "kp_trials": 5, "field": "qi", "ambient": 6, "seed": 1}
    assert len(doc["campaigns"]) == 4 and set(doc["timing"]) == {"seconds"}
