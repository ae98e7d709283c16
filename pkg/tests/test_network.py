import numpy as np
import pytest

from lipcert.errors import ModelError, SplitError
from lipcert.network import (
    Activation,
    AvgPool,
    Conv1D,
    Conv2D,
    Flatten,
    FullyConnected,
    GroupSort,
    Interface,
    MaxPool,
    Network,
    Residual,
    StateSpace,
    evaluate,
    split_subnetworks,
    to_units,
    trace_shapes,
)

from _reference import direct_conv1d, direct_conv2d

rng = np.random.default_rng(7)


def fc(c_out, c_in, scale=1.0):
    return FullyConnected(scale * rng.standard_normal((c_out, c_in)), rng.standard_normal(c_out))


def lenet_like():
    layers = [
        Conv2D(rng.standard_normal((5, 5, 6, 1)), np.zeros(6), (1, 1), "valid"),
        Activation("relu"),
        AvgPool((1, 1), (2, 2)),
        Conv2D(rng.standard_normal((5, 5, 16, 6)), np.zeros(16), (1, 1), "valid"),
        Activation("relu"),
        AvgPool((1, 1), (2, 2)),
        Flatten(),
        fc(120, 256), Activation("relu"),
        fc(84, 120), Activation("relu"),
        fc(10, 84),
    ]
    return Network(Interface(2, 1, (28, 28)), layers)


def test_trace_lenet_supports():
    shapes = trace_shapes(lenet_like())
    supports = [(s.signal_dims, s.channels, s.support) for s in shapes]
    assert supports[0] == (2, 1, (28, 28))
    assert supports[1] == (2, 6, (24, 24))    # valid 5x5 shrinks by 4
    assert supports[3] == (2, 6, (12, 12))
    assert supports[4] == (2, 16, (8, 8))
    assert supports[6] == (2, 16, (4, 4))
    assert supports[7] == (0, 256, ())
    assert supports[-1] == (0, 10, ())


def test_trace_same_padding_preserves_support():
    net = Network(Interface(2, 1, (28, 28)),
                  [Conv2D(rng.standard_normal((5, 5, 6, 1)), np.zeros(6), (1, 1), "same")])
    assert trace_shapes(net)[-1].support == (28, 28)


def test_trace_same_padding_strided():
    net = Network(Interface(2, 1, (28, 28)),
                  [Conv2D(rng.standard_normal((4, 4, 16, 1)), np.zeros(16), (2, 2), "same"),
                   Conv2D(rng.standard_normal((4, 4, 32, 16)), np.zeros(32), (2, 2), "same"),
                   Flatten()])
    shapes = trace_shapes(net)
    assert shapes[1].support == (14, 14)
    assert shapes[2].support == (7, 7)
    assert shapes[3].channels == 7 * 7 * 32


def test_groupsort_divisibility_error():
    net = Network(Interface(0, 10), [GroupSort(3)])
    with pytest.raises(ModelError, match="group size does not divide channels"):
        trace_shapes(net)


def test_flatten_on_vector_interface_rejected():
    net = Network(Interface(0, 10), [Flatten()])
    with pytest.raises(ModelError, match="flatten applied at d = 0"):
        trace_shapes(net)


def test_conv_after_flatten_rejected():
    net = Network(Interface(1, 2, (8,)),
                  [Flatten(), fc(4, 16)])
    trace_shapes(net)   # fine: only dense after flatten
    bad = Network(Interface(2, 1, (8, 8)),
                  [Flatten(), fc(64, 64)])
    bad.layers.insert(1, Flatten())
    with pytest.raises(ModelError):
        trace_shapes(bad)


def test_residual_interface_mismatch():
    inner = Network(Interface(0, 3), [fc(5, 3)])
    net = Network(Interface(0, 3), [Residual(inner)])
    with pytest.raises(ModelError, match="preserve the interface"):
        trace_shapes(net)


def test_evaluate_identity_fc():
    net = Network(Interface(0, 3), [FullyConnected(np.eye(3), np.zeros(3))])
    np.testing.assert_array_equal(evaluate(net, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_evaluate_relu():
    net = Network(Interface(0, 2), [Activation("relu")])
    np.testing.assert_array_equal(evaluate(net, np.array([-1.0, 2.0])), [0.0, 2.0])


def test_evaluate_maxpool_1d():
    net = Network(Interface(1, 1, (4,)), [MaxPool((1,), (2,))])
    y = evaluate(net, np.array([3.0, 1.0, 4.0, 1.0]).reshape(4, 1))
    np.testing.assert_array_equal(y[:, 0], [3.0, 4.0])


def test_evaluate_avgpool_2d():
    net = Network(Interface(2, 1, (2, 2)), [AvgPool((1, 1), (2, 2))])
    u = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    np.testing.assert_allclose(evaluate(net, u), [[[2.5]]])


def test_evaluate_groupsort():
    net = Network(Interface(0, 4), [GroupSort(2)])
    np.testing.assert_array_equal(evaluate(net, np.array([3.0, 1.0, 0.0, 5.0])), [1.0, 3.0, 0.0, 5.0])


def test_evaluate_flatten_is_channel_fastest():
    net = Network(Interface(2, 2, (2, 2)), [Flatten()])
    u = np.arange(8.0).reshape(2, 2, 2)
    # flat[(i1*N2 + i2)*c + q] = u[i1, i2, q]
    np.testing.assert_array_equal(evaluate(net, u), np.arange(8.0))


@pytest.mark.parametrize("padding", ["full", "valid", "same"])
@pytest.mark.parametrize("stride", [1, 2])
def test_evaluate_conv1d_against_direct(padding, stride):
    kernel = rng.standard_normal((4, 2, 3))
    bias = rng.standard_normal(2)
    u = rng.standard_normal((11, 3))
    net = Network(Interface(1, 3, (11,)), [Conv1D(kernel, bias, (stride,), padding)])
    y = evaluate(net, u)
    shapes = trace_shapes(net)
    from lipcert.network import conv_out_length
    out, anchor = conv_out_length(11, 3, stride, padding)
    assert y.shape == (out, 2) == shapes[-1].array_shape()
    ref = direct_conv1d(kernel, u, bias, stride=stride, anchor=anchor, out_len=out)
    np.testing.assert_allclose(y, ref, atol=1e-12)


@pytest.mark.parametrize("padding", ["full", "valid", "same"])
def test_evaluate_conv2d_against_direct(padding):
    from lipcert.network import conv_out_length
    kernel = rng.standard_normal((3, 4, 2, 2))
    bias = rng.standard_normal(2)
    u = rng.standard_normal((9, 8, 2))
    net = Network(Interface(2, 2, (9, 8)), [Conv2D(kernel, bias, (2, 1), padding)])
    y = evaluate(net, u)
    (o1, a1), (o2, a2) = conv_out_length(9, 2, 2, padding), conv_out_length(8, 3, 1, padding)
    ref = direct_conv2d(kernel, u, bias, stride=(2, 1), anchor=(a1, a2), out_shape=(o1, o2))
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_evaluate_ssm_impulse():
    # x[i+1] = 0.5 x + u, y = x: impulse response (0, 1, 0.5, 0.25, ...)
    layer = StateSpace(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]),
                       np.array([[0.0]]), np.zeros(1))
    net = Network(Interface(1, 1, (5,)), [layer])
    u = np.zeros((5, 1)); u[0, 0] = 1.0
    np.testing.assert_allclose(evaluate(net, u)[:, 0], [0.0, 1.0, 0.5, 0.25, 0.125])


def test_evaluate_residual():
    inner = Network(Interface(0, 2), [FullyConnected(np.eye(2), np.zeros(2)),
                                      Activation("relu"),
                                      FullyConnected(2 * np.eye(2), np.zeros(2))])
    net = Network(Interface(0, 2), [Residual(inner)])
    np.testing.assert_allclose(evaluate(net, np.array([1.0, -1.0])), [3.0, -1.0])


def test_linear_network_matches_matrix_product():
    W1, W2 = rng.standard_normal((4, 6)), rng.standard_normal((3, 4))
    b1, b2 = rng.standard_normal(4), rng.standard_normal(3)
    net = Network(Interface(0, 6), [FullyConnected(W1, b1), FullyConnected(W2, b2)])
    u = rng.standard_normal(6)
    np.testing.assert_allclose(evaluate(net, u), W2 @ (W1 @ u + b1) + b2, rtol=1e-12)


def test_evaluate_shape_mismatch():
    net = Network(Interface(0, 3), [fc(2, 3)])
    with pytest.raises(ModelError, match="input shape"):
        evaluate(net, np.zeros(4))


# --- units and splitting ---


def fc_net(widths):
    layers = []
    for c_in, c_out in zip(widths, widths[1:]):
        layers += [fc(c_out, c_in), Activation("relu")]
    layers.pop()   # no activation after the last layer
    return Network(Interface(0, widths[0]), layers)


def test_units_pair_linear_with_activation():
    units = to_units(fc_net([4, 4, 4, 4, 4]))
    assert [u.kind for u in units] == ["linear"] * 4
    assert [u.has_activation for u in units] == [True, True, True, False]


def test_units_structural_layers_are_single():
    units = to_units(lenet_like())
    assert [u.kind for u in units] == ["linear", "pool", "linear", "pool", "flatten",
                                       "linear", "linear", "linear"]


def test_split_per_layer():
    groups = split_subnetworks(fc_net([4] * 5), "layer")
    assert [len(g) for g in groups] == [1, 1, 1, 1]


def test_split_group_size():
    net = fc_net([4] * 33)   # 32 linear units
    groups = split_subnetworks(net, "group:4")
    assert len(groups) == 8
    assert all(len(g) == 4 for g in groups)


def test_split_explicit_cuts():
    groups = split_subnetworks(fc_net([4] * 4), "cuts:2")   # 3 units, cut after 2
    assert [len(g) for g in groups] == [2, 1]


def test_split_mono():
    groups = split_subnetworks(fc_net([4] * 4), "mono")
    assert len(groups) == 1 and len(groups[0]) == 3


def test_split_cut_out_of_range():
    with pytest.raises(SplitError, match="out of range"):
        split_subnetworks(fc_net([4] * 4), "cuts:3")


def test_split_bad_policy():
    with pytest.raises(SplitError):
        split_subnetworks(fc_net([4] * 4), "third-layer")
    with pytest.raises(SplitError):
        split_subnetworks(fc_net([4] * 4), "group:x")
