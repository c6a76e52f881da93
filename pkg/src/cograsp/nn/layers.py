"""Parameter store and the small layer modules used by the embedding towers."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .tensor import (ShapeMismatch, Tensor, concat, conv2d, gru_sequence, layer_norm, linear, relu)

__all__ = [
    "ParameterStore",
    "Linear",
    "LayerNorm",
    "MLP",
    "BiGRU",
    "ConvEncoder",
    "save_weights",
    "load_weights",
    "WEIGHTS_FORMAT",
    "WEIGHTS_VERSION",
]

WEIGHTS_FORMAT = "cograsp.weights"
WEIGHTS_VERSION = 1


class ParameterStore:
    """Named trainable tensors in creation order."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ShapeMismatch(f"parameter names differ: missing {sorted(missing)}, extra {sorted(extra)}")
        for k, t in self.params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != t.data.shape:
                raise ShapeMismatch(f"{k}: stored shape {v.shape}, expected {t.data.shape}")
            t.data = v.copy()


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class Linear:
    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = store.add(f"{name}.w", _glorot(rng, n_in, n_out, (n_in, n_out)))
        self.b = store.add(f"{name}.b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, n: int, eps: float = 1e-5):
        self.gamma = store.add(f"{name}.gamma", np.ones(n))
        self.beta = store.add(f"{name}.beta", np.zeros(n))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class MLP:
    """Linear -> LayerNorm -> ReLU for every hidden layer, then a plain output layer."""

    def __init__(self, store: ParameterStore, name: str, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("an MLP needs input and output sizes")
        self.hidden = []
        for k in range(len(sizes) - 2):
            self.hidden.append((Linear(store, f"{name}.l{k}", sizes[k], sizes[k + 1], rng),
                                LayerNorm(store, f"{name}.ln{k}", sizes[k + 1])))
        self.out = Linear(store, f"{name}.l{len(sizes) - 2}", sizes[-2], sizes[-1], rng)

    def __call__(self, x: Tensor) -> Tensor:
        for lin, ln in self.hidden:
            x = relu(ln(lin(x)))
        return self.out(x)


class BiGRU:
    """Forward and reversed GRU over a (T, in) sequence; output (T, 2H), forward channels first."""

    def __init__(self, store: ParameterStore, name: str, n_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.dirs = []
        for d in ("fw", "bw"):
            wx = store.add(f"{name}.{d}.wx", _glorot(rng, n_in, hidden, (n_in, 3 * hidden)))
            wh = store.add(f"{name}.{d}.wh", _glorot(rng, hidden, hidden, (hidden, 3 * hidden)))
            b = store.add(f"{name}.{d}.b", np.zeros(3 * hidden))
            self.dirs.append((wx, wh, b))

    def __call__(self, x: Tensor) -> Tensor:
        fw = gru_sequence(x, *self.dirs[0])
        bw = gru_sequence(x, *self.dirs[1], reverse=True)
        return concat([fw, bw], axis=-1)


class ConvEncoder:
    """Strided 3x3 convolutions with ReLU, then global average pooling."""

    def __init__(self, store: ParameterStore, name: str, channels: list[int], rng: np.random.Generator,
                 in_channels: int = 1):
        self.layers = []
        c_in = in_channels
        for k, c in enumerate(channels):
            w = store.add(f"{name}.c{k}.w", rng.normal(0.0, math.sqrt(2.0 / (9 * c_in)), size=(c, c_in, 3, 3)))
            b = store.add(f"{name}.c{k}.b", np.zeros(c))
            self.layers.append((w, b))
            c_in = c
        self.out_dim = c_in

    def __call__(self, img: Tensor) -> Tensor:
        x = img
        for w, b in self.layers:
            x = relu(conv2d(x, w, b, stride=2, pad=1))
        return x.reshape(x.shape[0], -1).mean(axis=1).reshape(1, -1)


def save_weights(state: dict[str, np.ndarray], path, extra: dict | None = None) -> None:
    """JSON weight file; floats are written with full round-trip precision."""
    doc = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "params": {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in state.items()},
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_weights(path) -> tuple[dict[str, np.ndarray], dict]:
    from ..dataset import CorruptFile, FormatVersionMismatch

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"cannot read weights from {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise CorruptFile(f"{path} is not a weight file")
    if doc.get("version") != WEIGHTS_VERSION:
        raise FormatVersionMismatch(f"weight file version {doc.get('version')!r}, expected {WEIGHTS_VERSION}")
    state = {}
    try:
        for k, v in doc["params"].items():
            arr = np.array(v["values"], dtype=np.float64)
            if arr.size != math.prod(v["shape"]):
                raise CorruptFile(f"{k}: {arr.size} values for shape {v['shape']}")
            state[k] = arr.reshape(v["shape"])
    except (KeyError, TypeError) as exc:
        raise CorruptFile(f"malformed parameter entry in {path}") from exc
    return state, doc
