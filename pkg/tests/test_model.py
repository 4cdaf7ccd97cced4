import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from numeraire.model import (PREDICTABLE_JUMP, TRUNCATED, UNTRUNCATED, LevyAtomMeasure,
                             LocalTriplet, ModelValidationError, Portfolio, dump_model,
                             load_model, make_model, parse_model, portfolio_from_dict,
                             portfolio_to_dict, predictable_jump_warnings, serialize_model,
                             sigma_special_check, truncation_convert)


def step(**kw):
    base = {"t_end": 1.0, "delta_a": 1.0, "kind": "continuous", "b": [0.05], "c": [0.04],
            "atoms": []}
    base.update(kw)
    return base


def test_minimal_model_parses():
    m = parse_model({"dimension": 1, "steps": [step()]})
    assert m.n_steps == 1 and m.dimension == 1
    assert m.triplets[0].drift[0] == 0.05 and m.triplets[0].diffusion[0, 0] == 0.04


def test_clock_normalization_error():
    doc = {"dimension": 1, "steps": [step(t_end=0.5, delta_a=0.75), step(delta_a=0.75)]}
    with pytest.raises(ModelValidationError, match="clock normalization A_T <= 1 violated"):
        parse_model(doc)


def test_predictable_jump_load_error_names_step():
    doc = {"dimension": 1, "steps": [step(kind="predictable_jump", delta_a=0.6, b=[0.0], c=[0.0],
                                          atoms=[{"x": [0.1], "k": 1.0}, {"x": [-0.1], "k": 1.0}])]}
    with pytest.raises(ModelValidationError, match=r"step 0:.*delta_A \* K\(R\^d\) <= 1"):
        parse_model(doc)


@pytest.mark.parametrize("doc, match", [
    ({"steps": []}, "dimension"),
    ({"dimension": 1}, "steps"),
    ({"dimension": 1, "steps": [{"t_end": 1, "b": [0], "c": [0]}]}, "delta_a"),
    ({"dimension": 2, "steps": [step()]}, "dimension mismatch"),
    ({"dimension": 1, "steps": [step(atoms=[{"x": [0.1]}])]}, "'k'"),
    ({"dimension": 1, "steps": [step(atoms=[{"x": [0.1], "k": "a"}])]}, "k must be a number"),
    ({"dimension": 1, "steps": [step(drift_convention="other")]}, "drift_convention"),
])
def test_schema_violations(doc, match):
    with pytest.raises(ModelValidationError, match=match):
        parse_model(doc)


@pytest.mark.parametrize("atoms, match", [
    ([{"x": [0.0], "k": 1.0}], "zero jump"),
    ([{"x": [0.1], "k": 0.0}], "> 0"),
    ([{"x": [0.1], "k": 1.0}, {"x": [0.1], "k": 2.0}], "distinct"),
])
def test_atom_invariants(atoms, match):
    with pytest.raises(ModelValidationError, match=match):
        parse_model({"dimension": 1, "steps": [step(atoms=atoms)]})


def test_atom_count_limit():
    atoms = [{"x": [0.01 * (i + 1)], "k": 0.1} for i in range(5)]
    with pytest.raises(ModelValidationError, match="exceed"):
        parse_model({"dimension": 1, "steps": [step(atoms=atoms)]}, max_atoms=4)


def test_diffusion_checks():
    with pytest.raises(ModelValidationError, match="symmetric"):
        LocalTriplet.from_values([0, 0], [[1, 0.5], [0.4, 1]]).validate()
    with pytest.raises(ModelValidationError, match="semidefinite"):
        LocalTriplet.from_values([0], [[-1e-6]]).validate()
    clipped = LocalTriplet.from_values([0], [[-1e-11]]).validate()
    assert clipped.diffusion[0, 0] == 0.0
    with pytest.raises(ModelValidationError, match="finite"):
        LocalTriplet.from_values([np.nan], [[0.0]]).validate()


def test_truncation_examples():
    K = LevyAtomMeasure(np.array([[2.0]]), np.array([0.3]))
    assert truncation_convert([0.1], K, UNTRUNCATED)[0] == pytest.approx(0.7, abs=1e-15)
    small = LevyAtomMeasure(np.array([[0.5], [-1.0]]), np.array([1.0, 2.0]))
    assert truncation_convert([0.1], small, UNTRUNCATED)[0] == 0.1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3),
                          st.floats(0.01, 3)), min_size=0, max_size=6,
                unique_by=lambda t: round(t[0], 6)),
       st.floats(-1, 1))
def test_truncation_roundtrip(atoms, bh):
    K = LevyAtomMeasure(np.array([[x] for x, _ in atoms]).reshape(-1, 1),
                        np.array([k for _, k in atoms]))
    b = truncation_convert([bh], K, UNTRUNCATED)
    back = truncation_convert(b, K, TRUNCATED)
    assert abs(back[0] - bh) <= 1e-14 * max(1.0, abs(b[0]))


def test_truncated_drift_in_file(models_dir):
    m = load_model(models_dir / "jump_diffusion_2d.json")
    tr = m.triplets[0]
    np.testing.assert_allclose(tr.drift, [0.06 + 0.05 * 1.5, 0.03], atol=1e-15)
    np.testing.assert_allclose(tr.truncated_drift(), [0.06, 0.03], atol=1e-15)


def test_serialization_roundtrip(models_dir):
    m = load_model(models_dir / "jump_diffusion_2d.json")
    again = parse_model(dump_model(m))
    assert dump_model(again) == dump_model(m)
    assert serialize_model(m)["schema_version"] == "1"


def test_sigma_special_and_warnings():
    tr = LocalTriplet.from_values([0.0], [[0.0]], [([2.0], 0.5), ([0.5], 1.0)])
    m = make_model([tr], [1.0])
    assert sigma_special_check(m)[0] == pytest.approx(0.5 * 2.0 + 0.25)
    jump = LocalTriplet.from_values([0.05], [[0.0]], [([0.1], 0.5)])
    pj = make_model([jump], [1.0], kinds=[PREDICTABLE_JUMP])
    assert predictable_jump_warnings(pj) == []
    off = make_model([LocalTriplet.from_values([0.0], [[0.0]], [([0.1], 0.5)])], [1.0],
                     kinds=[PREDICTABLE_JUMP])
    assert len(predictable_jump_warnings(off)) == 1


def test_portfolio_domain():
    tr = LocalTriplet.from_values([0.1], [[0.0]], [([-0.5], 1.0)])
    m = make_model([tr], [1.0])
    Portfolio([[1.9]]).validate(m)
    with pytest.raises(ModelValidationError, match="step 0"):
        Portfolio([[2.0]]).validate(m)
    g = Portfolio([[0.25]])
    assert np.array_equal(portfolio_from_dict(json.dumps(portfolio_to_dict(g))).weights, g.weights)
