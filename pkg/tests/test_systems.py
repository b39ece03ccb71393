import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsmlab.systems import (ControlRange, DomainError, NoiseSpec, circle, eval_map, finite_system, load_table,
                            make_fin3, make_identity, make_two_basin, relabel, trajectory)


def test_circle_map_value():
    spec = circle("circle1", sigma=0.1, amp=0.05, alpha=0.09)
    x, w = 0.3, 0.5
    expected = (x + 0.1 * math.cos(2 * math.pi * x) + 0.05 * w + 0.09) % 1.0
    assert eval_map(spec, x, w) == pytest.approx(expected, abs=1e-15)


def test_circle2_uses_double_frequency():
    spec = circle("circle2", alpha=0.0, amp=0.0)
    assert eval_map(spec, 0.25, 0.0) == pytest.approx(0.25 + 0.1 * math.cos(math.pi), abs=1e-15)


def test_wraps_into_unit_interval():
    spec = circle("circle1", alpha=0.09)
    assert 0.0 <= eval_map(spec, 0.999, 1.0) < 1.0


def test_alpha0_is_tangency_value():
    assert circle("circle1", sigma=0.1, amp=0.05).alpha0 == pytest.approx(0.05)


def test_fin3_table():
    spec = make_fin3()
    assert [eval_map(spec, 0, w) for w in ("a", "b")] == [0, 1]
    assert [eval_map(spec, 1, w) for w in ("a", "b")] == [0, 2]
    assert trajectory(spec, 0, ["b", "b"]) == [0, 1, 2]


def test_finite_domain_error():
    with pytest.raises(DomainError):
        eval_map(make_fin3(), 5, "a")


def test_control_range_validation():
    with pytest.raises(ValueError):
        ControlRange("interval", 1.0, -1.0)
    with pytest.raises(ValueError):
        ControlRange("finite", values=())
    with pytest.raises(ValueError):
        NoiseSpec("uniform_finite", ControlRange("interval", -1, 1))


def test_identity_fixes_every_state():
    spec = make_identity(5)
    assert all(eval_map(spec, s, w) == s for s in range(5) for w in ("a", "b"))


def test_relabel_conjugates():
    spec = make_two_basin()
    perm = [3, 2, 1, 0, 4]
    other = relabel(spec, perm)
    for s in range(5):
        for w in ("a", "b"):
            assert eval_map(other, perm[s], w) == perm[eval_map(spec, s, w)]
    assert other.q_states == (0, 1, 2, 3)


def test_load_table(tmp_path):
    p = tmp_path / "sys.json"
    p.write_text(json.dumps({"controls": ["a", "b"], "table": [[0, 1], [0, 2], [2, 2]], "q_states": [0, 1]}))
    spec = load_table(p)
    assert spec.table == make_fin3().table and spec.q_states == (0, 1)


@given(st.floats(0, 1, exclude_max=True), st.floats(-1, 1), st.sampled_from(["circle1", "circle2"]))
def test_image_in_unit_interval(x, w, fam):
    y = eval_map(circle(fam, alpha=0.09), x, w)
    assert 0.0 <= y < 1.0


@settings(max_examples=50)
@given(st.floats(0, 1, exclude_max=True), st.floats(-1, 1), st.floats(0, 1))
def test_shift_is_conjugation(x, w, c):
    base = circle("circle1", alpha=0.09)
    shifted = circle("circle1", alpha=0.09, shift=c)
    y = eval_map(shifted, (x + c) % 1.0, w)
    expected = (eval_map(base, x, w) + c) % 1.0
    d = abs(y - expected)
    assert min(d, 1 - d) < 1e-12
