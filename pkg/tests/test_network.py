import json

import numpy as np
import pytest

from probcert.ellipsoid import Ellipsoid, sample
from probcert.errors import DimensionMismatch, InvalidDims, ParseError, UnsupportedActivation
from probcert.network import (
    Layer,
    Network,
    dumps_network,
    forward,
    gen_random_network,
    load_network,
    network_to_dict,
    preactivation_bounds,
)


def _hand_net():
    return Network((
        Layer([[1.0, -1.0], [0.5, 2.0]], [0.0, -1.0]),
        Layer([[1.0, 1.0]], [0.25]),
    ))


def test_forward_matches_hand_computation():
    net = _hand_net()
    # hidden pre-activations: (1 - 2, 0.5 + 4 - 1) = (-1, 3.5) -> relu (0, 3.5)
    assert forward(net, [1.0, 2.0]) == pytest.approx([3.75])


def test_forward_batches_rows():
    net = gen_random_network(3, (3, 5, 4, 2))
    x = np.random.default_rng(0).standard_normal((7, 3))
    batch = forward(net, x)
    assert batch.shape == (7, 2)
    for row, out in zip(x, batch):
        np.testing.assert_allclose(forward(net, row), out, rtol=0, atol=1e-14)


def test_forward_rejects_wrong_input_dim():
    with pytest.raises(DimensionMismatch):
        forward(_hand_net(), [1.0, 2.0, 3.0])


def test_layer_shape_checks():
    with pytest.raises(DimensionMismatch):
        Layer(np.ones((2, 3)), np.ones(3))
    with pytest.raises(ParseError):
        Layer([[np.nan]], [0.0])


def test_network_chain_checks():
    with pytest.raises(DimensionMismatch):
        Network((Layer(np.ones((3, 2)), np.zeros(3)), Layer(np.ones((1, 2)), np.zeros(1))))
    with pytest.raises(DimensionMismatch):
        Network((Layer(np.ones((3, 2)), np.zeros(3)),))
    with pytest.raises(UnsupportedActivation):
        Network(_hand_net().layers, activation="tanh")


def test_layers_are_read_only():
    net = _hand_net()
    with pytest.raises(ValueError):
        net.layers[0].W[0, 0] = 5.0


def test_gen_random_network_is_seeded_and_scaled():
    a = gen_random_network(7, (2, 400, 2))
    b = gen_random_network(7, (2, 400, 2))
    c = gen_random_network(8, (2, 400, 2))
    assert a.dims == (2, 400, 2)
    np.testing.assert_array_equal(a.layers[0].W, b.layers[0].W)
    assert not np.array_equal(a.layers[0].W, c.layers[0].W)
    # entries are N(0, 1/n_in): second layer has n_in = 400
    assert np.std(a.layers[0].W) == pytest.approx(1 / np.sqrt(2), rel=0.1)
    assert np.std(a.layers[1].W) == pytest.approx(1 / np.sqrt(400), rel=0.1)


@pytest.mark.parametrize("dims", [(2, 3), (2, 0, 2), ()])
def test_gen_random_network_rejects_bad_dims(dims):
    with pytest.raises(InvalidDims):
        gen_random_network(0, dims)


def test_serialization_round_trip_is_bit_exact():
    net = gen_random_network(11, (3, 6, 5, 2))
    back = load_network(dumps_network(net))
    assert back.dims == net.dims
    for la, lb in zip(net.layers, back.layers):
        np.testing.assert_array_equal(la.W, lb.W)
        np.testing.assert_array_equal(la.b, lb.b)


@pytest.mark.parametrize("text", [
    "not json",
    "[]",
    json.dumps({"layers": [{"W": [[1.0]]}]}),
    json.dumps({"layers": [{"W": [1.0, 2.0], "b": [0.0]}]}),
])
def test_load_network_rejects_malformed(text):
    with pytest.raises(ParseError):
        load_network(text)


def test_load_network_rejects_other_activation():
    doc = network_to_dict(_hand_net())
    doc["activation"] = "sigmoid"
    with pytest.raises(UnsupportedActivation):
        load_network(json.dumps(doc))


def test_preactivation_bounds_contain_samples_and_are_attained():
    rng = np.random.default_rng(5)
    layer = gen_random_network(2, (3, 8, 1)).layers[0]
    g = rng.standard_normal((3, 3))
    e = Ellipsoid(rng.standard_normal(3), g @ g.T + 0.1 * np.eye(3))
    lo, hi = preactivation_bounds(e, layer)
    pre = sample(e, 10_000, 1, mode="uniform") @ layer.W.T + layer.b
    assert np.all(pre >= lo - 1e-12) and np.all(pre <= hi + 1e-12)
    # the support point e.center + S w / sqrt(w^T S w) reaches the upper bound exactly
    for i, w in enumerate(layer.W):
        x = e.center + e.shape @ w / np.sqrt(w @ e.shape @ w)
        assert w @ x + layer.b[i] == pytest.approx(hi[i], abs=1e-12)


def test_preactivation_bounds_dimension_check():
    with pytest.raises(DimensionMismatch):
        preactivation_bounds(Ellipsoid(np.zeros(3), np.eye(3)), _hand_net().layers[0])


def test_forward_is_lipschitz_on_segments():
    net = gen_random_network(4, (2, 20, 20, 2))
    lip = np.prod([np.linalg.norm(layer.W, 2) for layer in net.layers])
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.standard_normal((2, 2))
        ts = np.linspace(0.0, 1.0, 2001)
        ys = forward(net, a + ts[:, None] * (b - a))
        jumps = np.linalg.norm(np.diff(ys, axis=0), axis=1)
        step = np.linalg.norm(b - a) * (ts[1] - ts[0])
        assert np.all(jumps <= lip * step * (1 + 1e-9))
