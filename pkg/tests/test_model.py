import json

import pytest

from myoctrl.model import (SHIPPED_MODELS, ModelError, ModelSyntaxError, parse_model,
                           serialize_model, shipped_model, shipped_path, validate)

from conftest import build, hinge, model_doc, muscle, seg


def _doc(name):
    return json.loads(shipped_path(f"{name}.json").read_text())


def test_pendulum1_counts():
    m = shipped_model("pendulum1")
    assert m.dim_q == 1
    assert len(m.muscles) == 2


def test_walker2d_counts_match_independent_file_count():
    doc = _doc("walker2d")
    m = shipped_model("walker2d")
    assert len(m.segments) == len(doc["segments"]) == 7
    assert len(m.joints) == len(doc["joints"]) == 9
    assert len(m.muscles) == len(doc["muscles"]) == 18
    free = [j for j in doc["joints"] if not j.get("coupling") and not j.get("locked")]
    assert m.dim_q == len(free)
    clustered = {n for c in doc["clusters"] for n in c["members"]}
    assert m.action_dim == len(doc["clusters"]) + len(doc["muscles"]) - len(clustered)


@pytest.mark.parametrize("name", SHIPPED_MODELS)
def test_shipped_models_valid(name):
    assert validate(shipped_model(name)) == []


@pytest.mark.parametrize("name", SHIPPED_MODELS)
def test_round_trip_bit_exact(name):
    m = shipped_model(name)
    text = serialize_model(m)
    m2 = parse_model(text)
    assert m2 == m
    assert serialize_model(m2) == text


def _pendulum_doc():
    return model_doc([seg("base", 1.0, 0.01), seg("arm", 1.0, 0.02, "base", com=(0, -0.25))],
                     [hinge("swing", "arm", (-1.0, 1.0))],
                     [muscle("flex", [("base", (0.1, 0)), ("arm", (0, -0.3))])])


def test_builder_doc_is_valid():
    assert validate(build(_pendulum_doc())) == []


def test_bad_range_names_joint():
    doc = _pendulum_doc()
    doc["joints"][0]["range"] = [1.0, 1.0]
    with pytest.raises(ModelError) as e:
        build(doc)
    assert any("swing" in v for v in e.value.violations)


def test_one_path_point_names_muscle():
    doc = _pendulum_doc()
    doc["muscles"][0]["path"] = doc["muscles"][0]["path"][:1]
    with pytest.raises(ModelError) as e:
        build(doc)
    assert any("flex" in v for v in e.value.violations)


def test_shared_cluster_member_names_both_clusters():
    doc = _pendulum_doc()
    doc["muscles"].append(muscle("ext", [("base", (-0.1, 0)), ("arm", (0, -0.3))]))
    doc["clusters"] = [{"name": "ca", "members": ["flex"]}, {"name": "cb", "members": ["flex", "ext"]}]
    with pytest.raises(ModelError) as e:
        build(doc)
    msg = " ".join(e.value.violations)
    assert "ca" in msg and "cb" in msg


def test_reports_every_violation():
    doc = _pendulum_doc()
    doc["joints"][0]["range"] = [2.0, 1.0]
    doc["segments"][1]["mass"] = -1.0
    doc["muscles"][0]["f_max"] = 0.0
    with pytest.raises(ModelError) as e:
        build(doc)
    assert len(e.value.violations) >= 3


def test_dangling_reference():
    doc = _pendulum_doc()
    doc["joints"][0]["child"] = "nowhere"
    with pytest.raises(ModelError) as e:
        build(doc)
    assert any("nowhere" in v for v in e.value.violations)


def test_syntax_error_has_position():
    with pytest.raises(ModelSyntaxError) as e:
        parse_model(b'{"name": "x",\n "segments": [}')
    assert "line 2" in str(e.value)


def test_phantom_mass_floor():
    doc = _pendulum_doc()
    doc["segments"].append(seg("ph", 1e-7, 0.0, "arm", phantom=True))
    with pytest.raises(ModelError):
        build(doc)
    doc["segments"][-1]["mass"] = 1e-6
    assert validate(build(doc)) == []


def test_non_unit_axis_rejected():
    doc = _pendulum_doc()
    doc["joints"][0]["axis"] = [0.0, 0.0, 1.0 + 1e-9]
    with pytest.raises(ModelError):
        build(doc)


def test_coupled_joint_excluded_from_q():
    doc = _pendulum_doc()
    doc["segments"].append(seg("tip", 0.5, 0.01, "arm", pos=(0, -0.5), com=(0, -0.1)))
    doc["joints"].append(dict(hinge("slave", "tip"),
                              coupling={"master_joint": "swing", "poly_coeffs": [0.0, 0.5]}))
    m = build(doc)
    assert m.dim_q == 1
    assert m.coordinate_names == ["swing"]
