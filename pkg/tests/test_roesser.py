import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipcert.roesser import (
    ReshapeMap,
    realize_conv1d,
    realize_conv2d,
    realize_strided,
    reshape_kernel,
    simulate,
)

from _reference import direct_conv1d, direct_conv2d

rng = np.random.default_rng(20240811)


def test_conv1d_impulse_response():
    # scalar taps K = (2, 3): impulse in, taps out, then silence
    model = realize_conv1d(np.array([[[2.0]], [[3.0]]]))
    u = np.zeros((5, 1))
    u[0, 0] = 1.0
    y = simulate(model, u)
    assert y.shape == (6, 1)
    np.testing.assert_allclose(y[:, 0], [2.0, 3.0, 0.0, 0.0, 0.0, 0.0])


def test_state_dimensions():
    m1 = realize_conv1d(rng.standard_normal((4, 5, 3)))
    assert m1.state_dims == (3 * 3,)          # c_in * r
    m2 = realize_conv2d(rng.standard_normal((3, 5, 7, 2)))
    assert m2.state_dims == (7 * 2, 2 * 4)    # (c_out * r1, c_in * r2)
    assert not m2.A[1][0].any()               # row states never feed column states


@pytest.mark.parametrize("r,c_out,c_in,N", [(0, 1, 1, 4), (1, 2, 3, 6), (3, 4, 2, 9), (4, 1, 4, 12)])
def test_conv1d_matches_direct(r, c_out, c_in, N):
    kernel = rng.standard_normal((r + 1, c_out, c_in))
    bias = rng.standard_normal(c_out)
    u = rng.standard_normal((N, c_in))
    y = simulate(realize_conv1d(kernel, bias), u)
    np.testing.assert_allclose(y, direct_conv1d(kernel, u, bias), atol=1e-12)


@pytest.mark.parametrize("r1,r2,c_out,c_in,N1,N2", [
    (0, 0, 2, 2, 3, 3),
    (1, 1, 1, 1, 4, 4),
    (2, 0, 2, 3, 5, 4),   # degenerate column extent
    (0, 3, 3, 1, 4, 6),   # degenerate row extent
    (2, 3, 2, 2, 7, 8),
    (4, 4, 3, 2, 10, 9),
])
def test_conv2d_matches_direct(r1, r2, c_out, c_in, N1, N2):
    kernel = rng.standard_normal((r1 + 1, r2 + 1, c_out, c_in))
    bias = rng.standard_normal(c_out)
    u = rng.standard_normal((N1, N2, c_in))
    y = simulate(realize_conv2d(kernel, bias), u)
    np.testing.assert_allclose(y, direct_conv2d(kernel, u, bias), atol=1e-12)


def test_conv2d_output_window_override():
    kernel = rng.standard_normal((3, 3, 2, 2))
    u = rng.standard_normal((6, 6, 2))
    y = simulate(realize_conv2d(kernel), u, out_shape=(4, 4))
    ref = direct_conv2d(kernel, u, out_shape=(4, 4))
    np.testing.assert_allclose(y, ref, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    r1=st.integers(0, 3), r2=st.integers(0, 3),
    c_out=st.integers(1, 3), c_in=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_conv2d_fidelity_property(r1, r2, c_out, c_in, seed):
    g = np.random.default_rng(seed)
    kernel = g.standard_normal((r1 + 1, r2 + 1, c_out, c_in))
    u = g.standard_normal((g.integers(1, 8), g.integers(1, 8), c_in))
    y = simulate(realize_conv2d(kernel), u)
    err = np.abs(y - direct_conv2d(kernel, u)).max()
    assert err <= 1e-10


def test_reshape_map_preserves_norm():
    # pixel stacking is a permutation of entries plus zero padding
    rmap = ReshapeMap(stride=(2, 2), c_in=3)
    u = rng.standard_normal((5, 7, 3))
    v = rmap.apply(u)
    assert v.shape == (3, 4, 12)
    assert np.isclose(np.linalg.norm(v), np.linalg.norm(u))


def test_reshape_kernel_extents():
    kernel = rng.standard_normal((5, 4, 2, 3))       # r = (4, 3)
    new = reshape_kernel(kernel, (2, 2))
    assert new.shape == (3, 3, 2, 12)                # r' = ceil(r/s) = (2, 2)


@pytest.mark.parametrize("stride,r,c_out,c_in,N", [
    ((2,), 3, 2, 2, 11),
    ((3,), 4, 1, 3, 13),
    ((2,), 0, 2, 1, 6),
])
def test_strided_1d_matches_direct(stride, r, c_out, c_in, N):
    kernel = rng.standard_normal((r + 1, c_out, c_in))
    bias = rng.standard_normal(c_out)
    u = rng.standard_normal((N, c_in))
    rmap, model = realize_strided(kernel, bias, stride)
    y = simulate(model, rmap.apply(u))
    # strided conv: y[j] = g + sum_t K[t] u[s j - t]
    out_len = (N + r - 1) // stride[0] + 1
    ref = direct_conv1d(kernel, u, bias, stride=stride[0], out_len=out_len)
    np.testing.assert_allclose(y[:out_len], ref, atol=1e-12)


@pytest.mark.parametrize("stride,r1,r2,c_out,c_in,N1,N2", [
    ((2, 2), 3, 3, 2, 1, 9, 8),
    ((2, 3), 2, 4, 1, 2, 10, 12),
    ((2, 2), 1, 1, 3, 2, 7, 7),
])
def test_strided_2d_matches_direct(stride, r1, r2, c_out, c_in, N1, N2):
    kernel = rng.standard_normal((r1 + 1, r2 + 1, c_out, c_in))
    bias = rng.standard_normal(c_out)
    u = rng.standard_normal((N1, N2, c_in))
    rmap, model = realize_strided(kernel, bias, stride)
    y = simulate(model, rmap.apply(u))
    out_shape = ((N1 + r1 - 1) // stride[0] + 1, (N2 + r2 - 1) // stride[1] + 1)
    ref = direct_conv2d(kernel, u, bias, stride=stride, out_shape=out_shape)
    np.testing.assert_allclose(y[:out_shape[0], :out_shape[1]], ref, atol=1e-12)


def test_strided_stride1_is_plain_realization():
    kernel = rng.standard_normal((3, 3, 2, 2))
    rmap, model = realize_strided(kernel, None, (1, 1))
    assert rmap.copies == 1
    plain = realize_conv2d(kernel)
    np.testing.assert_array_equal(model.full_A(), plain.full_A())
    np.testing.assert_array_equal(model.D, plain.D)


def test_describe_mentions_every_block():
    model = realize_conv2d(rng.standard_normal((2, 2, 1, 1)))
    text = model.describe()
    for token in ("A[1][1]", "A[2][2]", "B[1]", "C[2]", "D ="):
        assert token in text
