import numpy as np
import pytest

from lipcert.network import (
    AvgPool,
    Conv1D,
    Conv2D,
    FullyConnected,
    Interface,
    MaxPool,
    Network,
    StateSpace,
    evaluate,
)
from lipcert.spectral import (
    avgpool_matrix,
    conv_adjoint,
    maxpool_window_multiplicity,
    operator_norm,
    pool_lipschitz,
    power_iteration,
    _conv_geometry,
)
from lipcert.network import _conv_eval

from _reference import dense_matrix_of

rng = np.random.default_rng(99)


def test_power_iteration_matches_svd():
    A = rng.standard_normal((7, 5))
    sigma, converged = power_iteration(lambda v: A @ v, lambda v: A.T @ v, 5)
    assert converged
    assert abs(sigma - np.linalg.svd(A, compute_uv=False)[0]) < 1e-9


def test_fc_operator_norm():
    layer = FullyConnected(rng.standard_normal((6, 9)), np.zeros(6))
    sigma, _ = operator_norm(layer, Interface(0, 9))
    assert abs(sigma - np.linalg.svd(layer.weight, compute_uv=False)[0]) < 1e-8


@pytest.mark.parametrize("padding,stride", [("full", (1, 1)), ("valid", (1, 1)),
                                            ("same", (2, 2)), ("full", (2, 1))])
def test_conv_adjoint_inner_product(padding, stride):
    kernel = rng.standard_normal((3, 4, 2, 3))
    shape = Interface(2, 3, (9, 10))
    layer = Conv2D(kernel, np.zeros(2), stride, padding)
    out, anchors = _conv_geometry(layer, shape)
    u = rng.standard_normal(shape.array_shape())
    y = rng.standard_normal(out + (2,))
    Au = _conv_eval(kernel, np.zeros(2), u, stride, anchors, out)
    Aty = conv_adjoint(kernel, y, stride, anchors, shape.support)
    assert abs(np.vdot(Au, y) - np.vdot(u, Aty)) < 1e-10 * (1 + abs(np.vdot(Au, y)))


@pytest.mark.parametrize("padding", ["full", "valid", "same"])
def test_conv_norm_matches_dense_svd(padding):
    kernel = rng.standard_normal((3, 2, 3))
    shape = Interface(1, 3, (12,))
    layer = Conv1D(kernel, np.zeros(2), (1,), padding)
    net = Network(shape, [layer])
    out_shape = evaluate(net, np.zeros(shape.array_shape())).shape
    M = dense_matrix_of(lambda u: evaluate(net, u), shape.array_shape(), out_shape)
    sigma, _ = operator_norm(layer, shape)
    svd = np.linalg.svd(M, compute_uv=False)[0]
    # near-degenerate leading singular values slow power iteration down;
    # the estimate approaches from below
    assert sigma <= svd * (1 + 1e-9)
    assert abs(sigma - svd) < 2e-3 * svd


def test_strided_conv2d_norm_matches_dense_svd():
    kernel = rng.standard_normal((4, 4, 2, 1))
    shape = Interface(2, 1, (8, 8))
    layer = Conv2D(kernel, np.zeros(2), (2, 2), "same")
    net = Network(shape, [layer])
    out_shape = evaluate(net, np.zeros(shape.array_shape())).shape
    M = dense_matrix_of(lambda u: evaluate(net, u), shape.array_shape(), out_shape)
    sigma, _ = operator_norm(layer, shape)
    assert abs(sigma - np.linalg.svd(M, compute_uv=False)[0]) < 1e-8


def test_ssm_norm_matches_dense_svd():
    layer = StateSpace(np.array([[0.6, 0.1], [0.0, 0.4]]), rng.standard_normal((2, 2)),
                       rng.standard_normal((1, 2)), rng.standard_normal((1, 2)), np.zeros(1))
    shape = Interface(1, 2, (20,))
    net = Network(shape, [layer])
    M = dense_matrix_of(lambda u: evaluate(net, u), shape.array_shape(), (20, 1))
    sigma, _ = operator_norm(layer, shape)
    assert abs(sigma - np.linalg.svd(M, compute_uv=False)[0]) < 1e-8


def test_avgpool_mu_non_overlapping():
    assert pool_lipschitz(AvgPool((1, 1), (2, 2)), Interface(2, 1, (8, 8))) == 0.5
    assert pool_lipschitz(MaxPool((1, 1), (2, 2)), Interface(2, 1, (8, 8))) == 1.0


def test_avgpool_mu_overlapping_matches_matrix_norm():
    layer = AvgPool((2, 2), (2, 2))   # 3x3 windows, stride 2: overlap
    shape = Interface(2, 1, (7, 7))
    M = avgpool_matrix(layer.extent, layer.stride, shape.support)
    mu = pool_lipschitz(layer, shape)
    assert abs(mu - np.linalg.svd(M, compute_uv=False)[0]) < 1e-9


def test_maxpool_overlap_multiplicity():
    # 3x3 windows stride 2 on 7x7: interior rows/cols are shared by 2 windows per axis
    assert maxpool_window_multiplicity((2, 2), (2, 2), (7, 7)) == 4
    mu = pool_lipschitz(MaxPool((2, 2), (2, 2)), Interface(2, 1, (7, 7)))
    assert mu == 2.0


def test_avgpool_matrix_row_of_quarters():
    M = avgpool_matrix((1, 1), (2, 2), (2, 2))
    np.testing.assert_allclose(M, np.full((1, 4), 0.25))
