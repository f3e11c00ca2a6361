import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stokesae.dataio.scaling import (
    DegenerateProfileError,
    degenerate_mask,
    scale_i,
    scale_profiles,
    scale_v,
    unscale,
)


def test_i_min_max():
    out, (lo, hi) = scale_i([2.0, 4.0, 6.0])
    assert out.tolist() == [0.0, 0.5, 1.0] and (lo, hi) == (2.0, 6.0)


def test_i_custom_range():
    out, _ = scale_i([2.0, 4.0, 6.0], a=-1.0, b=1.0)
    assert out.tolist() == [-1.0, 0.0, 1.0]


def test_v_divides_by_larger_extremum():
    out, div = scale_v([-2.0, 1.0])
    assert out.tolist() == [-1.0, 0.5] and div == 2.0


def test_v_positive_dominant():
    out, div = scale_v([-1.0, 4.0, 2.0])
    assert out.tolist() == [-0.25, 1.0, 0.5] and div == 4.0


def test_v_tie_uses_max():
    out, div = scale_v([-3.0, 3.0])
    assert out.tolist() == [-1.0, 1.0] and div == 3.0


def test_v_single_signed():
    # an all-negative profile keeps its sign and ends at -1
    out, _ = scale_v([-4.0, -2.0, -1.0])
    assert out.tolist() == [-1.0, -0.5, -0.25]


def test_constant_i_rejected():
    with pytest.raises(DegenerateProfileError):
        scale_i(np.full(112, 5.0))


def test_zero_v_rejected():
    with pytest.raises(DegenerateProfileError):
        scale_v(np.zeros(112))


def test_degenerate_mask():
    p = np.ones((3, 112, 2))
    p[1, :, 0] = np.arange(112)
    p[2, :, 0] = np.arange(112)
    p[2, :, 1] = 0
    assert degenerate_mask(p).tolist() == [True, False, True]


def test_batch_matches_single(rng):
    p = rng.standard_normal((5, 112, 2)) * 100 + [1000, 0]
    batch, params = scale_profiles(p)
    for k in range(5):
        i, _ = scale_i(p[k, :, 0])
        v, _ = scale_v(p[k, :, 1])
        np.testing.assert_array_equal(batch[k, :, 0], i)
        np.testing.assert_array_equal(batch[k, :, 1], v)
    assert len(params) == 5


def test_param_count_mismatch(rng):
    _, params = scale_profiles(rng.standard_normal((3, 112, 2)))
    with pytest.raises(ValueError):
        unscale(np.zeros((2, 112, 2)), params)


profile_values = st.floats(-1e5, 1e5, allow_nan=False, width=64)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (2, 112, 2), elements=profile_values))
def test_round_trip_property(p):
    if degenerate_mask(p).any():
        return
    scaled, params = scale_profiles(p)
    assert scaled[..., 0].min() >= 0 and scaled[..., 0].max() <= 1
    assert np.abs(scaled[..., 1]).max() == 1.0
    back = unscale(scaled, params)
    scale = np.abs(p).max(axis=1, keepdims=True)
    assert np.all(np.abs(back - p) <= 1e-6 * scale)


def test_round_trip_float32_storage(rng):
    p = rng.uniform(500, 30000, (1000, 112, 2))
    p[..., 1] -= 15000
    scaled, params = scale_profiles(p)
    back = unscale(scaled.astype(np.float32), params)
    rel = np.abs(back - p) / np.abs(p).max(axis=1, keepdims=True)
    assert rel.max() < 1e-6
