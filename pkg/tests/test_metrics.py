import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xmvae import kernels
from xmvae.errors import ShapeError
from xmvae.metrics import (
    joint_errors,
    mean_epe,
    median_epe,
    pcf,
    pck,
    read_curve,
    threshold_grid,
    write_curve,
    write_table,
)

from oracles import joint_errors_loop, mean_loop, median_loop, pcf_loop, pck_loop


def test_identical_poses_have_zero_error():
    x = np.random.default_rng(0).normal(size=(4, 63))
    np.testing.assert_array_equal(joint_errors(x, x), 0.0)


def test_single_joint_offset():
    gt = np.zeros((1, 63))
    pred = gt.copy()
    pred[0, 3:6] = [3.0, 4.0, 0.0]
    e = joint_errors(pred, gt)
    assert e[0, 1] == 5.0
    assert e.sum() == 5.0


def test_three_dimensional_input_layout():
    rng = np.random.default_rng(1)
    p, g = rng.normal(size=(3, 21, 2)), rng.normal(size=(3, 21, 2))
    np.testing.assert_array_equal(joint_errors(p, g), joint_errors(p.reshape(3, 42), g.reshape(3, 42), 2))


def test_shape_errors():
    with pytest.raises(ShapeError):
        joint_errors(np.zeros((2, 63)), np.zeros((3, 63)))
    with pytest.raises(ShapeError):
        joint_errors(np.zeros((2, 62)), np.zeros((2, 62)), 3)


def test_median_of_even_count():
    assert median_epe([[1.0, 2.0, 3.0, 10.0]]) == 2.5


def test_pck_pcf_example():
    errors = np.array([[1.0, 2.0], [3.0, 0.5]])
    np.testing.assert_array_equal(pck(errors, [0.0, 1.0, 2.0, 3.0]), [0.0, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(pcf(errors, [0.0, 2.0, 3.0]), [0.0, 0.5, 1.0])


def test_threshold_is_inclusive():
    assert pck([[2.0]], [2.0])[0] == 1.0


def test_saturating_threshold():
    e = np.abs(np.random.default_rng(2).normal(size=(10, 21)))
    assert pck(e, [e.max()])[0] == pcf(e, [e.max()])[0] == 1.0


def test_empty_errors_rejected():
    with pytest.raises(ValueError):
        mean_epe(np.zeros((0, 21)))
    with pytest.raises(ValueError):
        pck([[1.0]], [-1.0])


def test_threshold_grid():
    np.testing.assert_array_equal(threshold_grid("0:10:3"), [0.0, 5.0, 10.0])
    np.testing.assert_array_equal(threshold_grid("1, 2.5"), [1.0, 2.5])


@given(
    st.integers(1, 6),
    st.sampled_from([2, 3]),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=80, deadline=None)
def test_matches_scalar_loop(frames, dim, seed):
    rng = np.random.default_rng(seed)
    pred = rng.normal(0, 20, size=(frames, 21 * dim))
    gt = rng.normal(0, 20, size=(frames, 21 * dim))
    grid = np.sort(rng.uniform(0, 60, size=7))
    e = joint_errors(pred, gt, dim)
    ref = joint_errors_loop(pred.tolist(), gt.tolist(), dim)
    np.testing.assert_allclose(e, ref, rtol=1e-12, atol=0)
    assert mean_epe(e) == pytest.approx(mean_loop(ref), rel=1e-12)
    assert median_epe(e) == pytest.approx(median_loop(ref), rel=1e-12)
    np.testing.assert_array_equal(pck(e, grid), pck_loop(ref, grid))
    np.testing.assert_array_equal(pcf(e, grid), pcf_loop(ref, grid))


@given(arrays(np.float64, (5, 21), elements=st.floats(0, 100)), st.floats(0, 100))
@settings(max_examples=80, deadline=None)
def test_pcf_never_exceeds_pck(errors, d):
    assert pcf(errors, [d])[0] <= pck(errors, [d])[0]


@given(arrays(np.float64, (4, 21), elements=st.floats(0, 50)))
@settings(max_examples=40, deadline=None)
def test_curves_are_monotone(errors):
    grid = np.linspace(0, 60, 13)
    assert np.all(np.diff(pck(errors, grid)) >= 0)
    assert np.all(np.diff(pcf(errors, grid)) >= 0)


@pytest.mark.parametrize("name", kernels.available_backends())
def test_backends_agree_bit_for_bit(name):
    rng = np.random.default_rng(3)
    pred, gt = rng.normal(size=(50, 63)), rng.normal(size=(50, 63))
    grid = np.linspace(0, 4, 9)
    previous = kernels.backend()
    try:
        kernels.set_backend("python")
        ref_e = joint_errors(pred, gt)
        ref_c = pck(ref_e, grid), pcf(ref_e, grid)
        kernels.set_backend(name)
        e = joint_errors(pred, gt)
        assert e.tobytes() == ref_e.tobytes()
        assert pck(e, grid).tobytes() == ref_c[0].tobytes()
        assert pcf(e, grid).tobytes() == ref_c[1].tobytes()
    finally:
        kernels.set_backend(previous)


def test_curve_roundtrip(tmp_path):
    grid = np.linspace(0, 1, 5)
    vals = np.array([0.0, 0.1, 1 / 3, 0.9, 1.0])
    write_curve(tmp_path / "c.csv", grid, vals)
    g, v = read_curve(tmp_path / "c.csv")
    assert g.tobytes() == grid.tobytes() and v.tobytes() == vals.tobytes()


def test_table_marks_missing_cells(tmp_path):
    write_table(tmp_path / "t.csv", [{"a": 1, "b": 0.5}, {"a": 2}], ["a", "b"])
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,0.5\n2,NA\n"
