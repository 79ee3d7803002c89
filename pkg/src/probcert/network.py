"""Feed-forward ReLU networks: evaluation, (de)serialization, pre-activation bounds."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ellipsoid import Ellipsoid
from .errors import DimensionMismatch, InvalidDims, ParseError, UnsupportedActivation


@dataclass(frozen=True, eq=False)
class Layer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if w.ndim != 2:
            raise DimensionMismatch(f"weight matrix must be 2-D, got shape {w.shape}")
        if w.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"W has {w.shape[0]} rows but b has length {b.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ParseError("layer contains non-finite values")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "b", b)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True, eq=False)
class Network:
    """``x -> relu(W0 x + b0) -> ... -> W_last x + b_last``.

    Every layer but the last is followed by the activation.
    """

    layers: tuple[Layer, ...]
    activation: str = "relu"

    def __post_init__(self):
        layers = tuple(self.layers)
        if self.activation != "relu":
            raise UnsupportedActivation(f"unsupported activation {self.activation!r}")
        if len(layers) < 2:
            raise DimensionMismatch("a network needs at least one hidden layer and an output layer")
        for k in range(1, len(layers)):
            if layers[k].n_in != layers[k - 1].n_out:
                raise DimensionMismatch(
                    f"layer {k} expects {layers[k].n_in} inputs but layer {k - 1} "
                    f"produces {layers[k - 1].n_out}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0].n_in,) + tuple(layer.n_out for layer in self.layers)

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layers) - 1

    def __call__(self, x):
        return forward(self, x)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network on one input or a batch of inputs (rows)."""
    h = np.asarray(x, dtype=float)
    if h.shape[-1] != net.dims[0]:
        raise DimensionMismatch(f"input has dimension {h.shape[-1]}, network expects {net.dims[0]}")
    for layer in net.layers[:-1]:
        h = np.maximum(h @ layer.W.T + layer.b, 0.0)
    last = net.layers[-1]
    return h @ last.W.T + last.b


def preactivation_bounds(e: Ellipsoid, layer: Layer) -> tuple[np.ndarray, np.ndarray]:
    """Exact range of ``W x + b`` over ``x`` in ``e``, row by row."""
    if layer.n_in != e.dim:
        raise DimensionMismatch(f"layer expects {layer.n_in} inputs, ellipsoid has dim {e.dim}")
    mid = layer.W @ e.center + layer.b
    rad = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", layer.W, e.shape, layer.W), 0.0))
    return mid - rad, mid + rad


def gen_random_network(seed: int, dims) -> Network:
    """Random network with i.i.d. ``N(0, 1/n_in)`` weights and biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 3 or any(d < 1 for d in dims):
        raise InvalidDims(f"need at least 3 positive layer sizes, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / np.sqrt(n_in)
        w = rng.standard_normal((n_out, n_in)) * scale
        b = rng.standard_normal(n_out) * scale
        layers.append(Layer(w, b))
    return Network(tuple(layers))


# -- serialization ------------------------------------------------------------

def network_to_dict(net: Network) -> dict:
    return {
        "activation": net.activation,
        "layers": [{"W": layer.W.tolist(), "b": layer.b.tolist()} for layer in net.layers],
    }


def network_from_dict(doc) -> Network:
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise ParseError("network document must be an object with a 'layers' list")
    activation = doc.get("activation", "relu")
    if activation != "relu":
        raise UnsupportedActivation(f"unsupported activation {activation!r}")
    layers = []
    for k, entry in enumerate(doc["layers"]):
        try:
            w = np.array(entry["W"], dtype=float)
            b = np.array(entry["b"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"layer {k}: {exc}") from None
        if w.ndim != 2 or b.ndim != 1:
            raise ParseError(f"layer {k}: W must be a matrix and b a vector")
        layers.append(Layer(w, b))
    return Network(tuple(layers), activation)


def dumps_network(net: Network) -> str:
    # json emits repr() floats, which round-trip exactly
    return json.dumps(network_to_dict(net))


def load_network(document: str) -> Network:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return network_from_dict(doc)
