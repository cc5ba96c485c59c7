"""Layered feature maps, reverse-mode gradients, SGD training and the model file.

Every layer works on batches: activations carry a leading batch axis, so
``forward`` maps ``(B, *in_shape)`` to ``(B, *out_shape)``. ``backward`` is the
vector-Jacobian product at activations ``a`` (batch of 1 or ``N``) for ``N``
cotangents, which lets one sweep produce the gradients of all ``h`` output
units at once.
"""

import copy
import math
from dataclasses import dataclass

import numpy as np

from .formats import (FormatError, check_version, decode_f64, dump_json, encode_f64,
                      parse_json, require, shape_field)
from .tensor import DimensionError, Rng, as_tensor

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, iteration, loss):
        super().__init__(f"training diverged at iteration {iteration} (loss={loss})")
        self.iteration = iteration


class UnsupportedLayerError(FormatError):
    pass


class Layer:
    kind = None
    weighted = False
    in_shape = None
    out_shape = None

    def bind(self, in_shape):
        """Validate ``in_shape``, precompute index tables, return the output shape."""
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(self._output_shape(self.in_shape))
        return self.out_shape

    def _output_shape(self, in_shape):
        raise NotImplementedError

    def forward(self, a):
        raise NotImplementedError

    def backward(self, a, g):
        raise NotImplementedError

    def params(self):
        return {}

    @property
    def n_in(self):
        return math.prod(self.in_shape)

    @property
    def n_out(self):
        return math.prod(self.out_shape)

    def __repr__(self):
        return f"{self.kind}({self.in_shape} -> {self.out_shape})"


class Dense(Layer):
    """Affine map on the flattened input; weight is ``(d_in, d_out)``."""

    kind = "Dense"
    weighted = True

    def __init__(self, weight, bias=None):
        self.weight = as_tensor(weight)
        if self.weight.ndim != 2:
            raise DimensionError(f"{self.kind} weight must be 2-D, got {self.weight.shape}")
        self.bias = None if bias is None else as_tensor(bias, (self.weight.shape[1],))

    def _output_shape(self, in_shape):
        if math.prod(in_shape) != self.weight.shape[0]:
            raise DimensionError(
                f"{self.kind} expects {self.weight.shape[0]} inputs, got shape {in_shape}")
        return (self.weight.shape[1],)

    def apply(self, a, weight, bias=None):
        z = a.reshape(a.shape[0], -1) @ weight
        return z if bias is None else z + bias

    def apply_transpose(self, g, weight):
        out = g.reshape(g.shape[0], -1) @ weight.T
        return out.reshape((g.shape[0],) + self.in_shape)

    def forward(self, a):
        return self.apply(a, self.weight, self.bias)

    def backward(self, a, g):
        return self.apply_transpose(g, self.weight)

    def param_grads(self, a, g):
        grads = {"weight": a.reshape(a.shape[0], -1).T @ g.reshape(g.shape[0], -1)}
        if self.bias is not None:
            grads["bias"] = g.reshape(g.shape[0], -1).sum(axis=0)
        return grads

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p


class LinearProjection(Dense):
    """Bias-free projection appended to a feature map to shrink its dimension."""

    kind = "LinearProjection"

    def __init__(self, weight):
        super().__init__(weight, None)


class Conv2D(Layer):
    """Valid-padding 2-D convolution; weight is ``(c_out, c_in, kh, kw)``."""

    kind = "Conv2D"
    weighted = True

    def __init__(self, weight, bias=None, stride=1):
        self.weight = as_tensor(weight)
        if self.weight.ndim != 4:
            raise DimensionError(f"Conv2D weight must be 4-D, got {self.weight.shape}")
        self.bias = None if bias is None else as_tensor(bias, (self.weight.shape[0],))
        self.stride = _pair(stride)

    def _output_shape(self, in_shape):
        c_out, c_in, kh, kw = self.weight.shape
        if len(in_shape) != 3 or in_shape[0] != c_in:
            raise DimensionError(f"Conv2D expects ({c_in}, H, W) input, got {in_shape}")
        _, H, W = in_shape
        if kh > H or kw > W:
            raise DimensionError(f"kernel {kh}x{kw} larger than input {H}x{W}")
        sy, sx = self.stride
        Ho, Wo = (H - kh) // sy + 1, (W - kw) // sx + 1
        # patches[p, q]: flat input index feeding kernel tap q at output position p
        ci, dy, dx = np.meshgrid(np.arange(c_in), np.arange(kh), np.arange(kw), indexing="ij")
        taps = (ci * H * W + dy * W + dx).ravel()
        oy, ox = np.meshgrid(np.arange(Ho) * sy, np.arange(Wo) * sx, indexing="ij")
        base = (oy * W + ox).ravel()
        self._patches = base[:, None] + taps[None, :]
        return (c_out, Ho, Wo)

    def _columns(self, a):
        return a.reshape(a.shape[0], -1)[:, self._patches]

    def apply(self, a, weight, bias=None):
        c_out = weight.shape[0]
        z = self._columns(a) @ weight.reshape(c_out, -1).T
        z = z.transpose(0, 2, 1).reshape((a.shape[0],) + self.out_shape)
        return z if bias is None else z + bias[:, None, None]

    def apply_transpose(self, g, weight):
        c_out = weight.shape[0]
        n = g.shape[0]
        gp = g.reshape(n, c_out, -1).transpose(0, 2, 1) @ weight.reshape(c_out, -1)
        out = np.zeros((n, self.n_in))
        # one tap at a time: indices within a tap column are distinct
        for q in range(self._patches.shape[1]):
            out[:, self._patches[:, q]] += gp[:, :, q]
        return out.reshape((n,) + self.in_shape)

    def forward(self, a):
        return self.apply(a, self.weight, self.bias)

    def backward(self, a, g):
        return self.apply_transpose(g, self.weight)

    def param_grads(self, a, g):
        c_out = self.weight.shape[0]
        gm = g.reshape(g.shape[0], c_out, -1)
        grads = {"weight": np.einsum("bcp,bpq->cq", gm, self._columns(a))
                 .reshape(self.weight.shape)}
        if self.bias is not None:
            grads["bias"] = gm.sum(axis=(0, 2))
        return grads

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p


class ReLU(Layer):
    kind = "ReLU"

    def _output_shape(self, in_shape):
        return in_shape

    def forward(self, a):
        return np.maximum(a, 0.0)

    def backward(self, a, g):
        # subgradient convention: d relu(0) = 0
        return g * (a > 0)


class _GroupReduce(Layer):
    """Output unit k reduces the input entries listed in ``self._groups[k]``.

    Groups list flat input indices in ascending order, so ``argmax``/``argmin``
    picking the first extremum gives lowest-index tie breaking.
    """

    reduce = None  # "max", "min" or "sum"

    def _reduce(self, a):
        vals = a.reshape(a.shape[0], -1)[:, self._groups]
        if self.reduce == "sum":
            return vals.sum(axis=2)
        if self.reduce == "max":
            return vals.max(axis=2)
        return vals.min(axis=2)

    def forward(self, a):
        return self._reduce(a).reshape((a.shape[0],) + self.out_shape)

    def winners(self, a):
        """Position within each group of the selected entry, shape ``(B, n_out)``."""
        vals = a.reshape(a.shape[0], -1)[:, self._groups]
        return vals.argmax(axis=2) if self.reduce == "max" else vals.argmin(axis=2)

    def backward(self, a, g):
        n = g.shape[0]
        gf = g.reshape(n, -1)
        out = np.zeros((n, self.n_in))
        groups = self._groups
        disjoint = np.unique(groups).size == groups.size
        if self.reduce == "sum":
            if disjoint:
                out[:, groups] = gf[:, :, None]
            else:
                for q in range(groups.shape[1]):
                    out[:, groups[:, q]] += gf
        elif a.shape[0] == 1:
            # one set of winners shared by every column
            sel = groups[np.arange(groups.shape[0]), self.winners(a)[0]]
            if disjoint:
                out[:, sel] = gf
            else:
                np.add.at(out, (slice(None), sel), gf)
        else:
            win = np.broadcast_to(self.winners(a), gf.shape)
            for q in range(groups.shape[1]):
                rows, ks = np.nonzero(win == q)
                out[rows, groups[ks, q]] += gf[rows, ks]
        return out.reshape((n,) + self.in_shape)


def _window_groups(in_shape, window, stride):
    strides = np.cumprod((1,) + tuple(in_shape[::-1]))[:-1][::-1]
    out_shape = tuple((n - w) // s + 1 for n, w, s in zip(in_shape, window, stride))
    base = np.zeros(1, dtype=np.int64)
    offs = np.zeros(1, dtype=np.int64)
    for n_out, w, s, st in zip(out_shape, window, stride, strides):
        base = (base[:, None] + (np.arange(n_out) * s * st)[None, :]).ravel()
        offs = (offs[:, None] + (np.arange(w) * st)[None, :]).ravel()
    return out_shape, base[:, None] + offs[None, :]


class _Pool(_GroupReduce):
    def __init__(self, window, stride=None):
        self.window = _tuple(window)
        self.stride = self.window if stride is None else _tuple(stride)
        if len(self.stride) != len(self.window):
            raise DimensionError("pool window and stride must have the same rank")
        if any(v <= 0 for v in self.window + self.stride):
            raise DimensionError("pool window and stride must be positive")

    def _output_shape(self, in_shape):
        if len(self.window) != len(in_shape):
            raise DimensionError(
                f"{self.kind} window {self.window} does not match input rank of {in_shape}")
        if any(w > n for w, n in zip(self.window, in_shape)):
            raise DimensionError(f"{self.kind} window {self.window} exceeds input {in_shape}")
        out_shape, self._groups = _window_groups(in_shape, self.window, self.stride)
        return out_shape


class MaxPool(_Pool):
    kind = "MaxPool"
    reduce = "max"


class MinPool(_Pool):
    kind = "MinPool"
    reduce = "min"


class SumPool(_Pool):
    kind = "SumPool"
    reduce = "sum"


class BranchMax(_GroupReduce):
    """Max over ``branches`` consecutive slices of the leading axis."""

    kind = "BranchMax"
    reduce = "max"

    def __init__(self, branches):
        self.branches = int(branches)
        if self.branches <= 0:
            raise DimensionError("BranchMax needs at least one branch")

    def _output_shape(self, in_shape):
        if in_shape[0] % self.branches:
            raise DimensionError(
                f"leading extent {in_shape[0]} is not a multiple of {self.branches} branches")
        window = (self.branches,) + (1,) * (len(in_shape) - 1)
        out_shape, self._groups = _window_groups(in_shape, window, window)
        return out_shape


class Shift(Layer):
    """Channel gather with spatial translation and zero fill.

    Output channel c copies input channel ``sources[c]`` translated by
    ``offsets[c] = (dy, dx)``: ``out[c, y, x] = in[sources[c], y - dy, x - dx]``,
    zero where that position falls outside the map.
    """

    kind = "Shift"

    def __init__(self, sources, offsets):
        self.sources = [int(s) for s in sources]
        self.offsets = [tuple(int(v) for v in o) for o in offsets]
        if len(self.sources) != len(self.offsets) or not self.sources:
            raise DimensionError("Shift needs one (dy, dx) offset per output channel")
        if any(len(o) != 2 for o in self.offsets):
            raise DimensionError("Shift offsets are (dy, dx) pairs")

    @classmethod
    def translate(cls, channels, offset):
        return cls(range(channels), [offset] * channels)

    def _output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise DimensionError(f"Shift expects (C, H, W) input, got {in_shape}")
        C, H, W = in_shape
        for s, (dy, dx) in zip(self.sources, self.offsets):
            if not 0 <= s < C:
                raise DimensionError(f"Shift source channel {s} out of range for {C} channels")
            if abs(dy) >= H or abs(dx) >= W:
                raise DimensionError(f"Shift offset {(dy, dx)} exceeds spatial extent {(H, W)}")
        y, x = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
        index = np.full((len(self.sources), H * W), -1, dtype=np.int64)
        for c, (s, (dy, dx)) in enumerate(zip(self.sources, self.offsets)):
            sy, sx = y - dy, x - dx
            ok = (sy >= 0) & (sy < H) & (sx >= 0) & (sx < W)
            index[c] = np.where(ok, s * H * W + sy * W + sx, -1).ravel()
        self._index = index
        return (len(self.sources), H, W)

    def forward(self, a):
        af = a.reshape(a.shape[0], -1)
        idx = self._index.ravel()
        out = np.where(idx >= 0, af[:, np.maximum(idx, 0)], 0.0)
        return out.reshape((a.shape[0],) + self.out_shape)

    def backward(self, a, g):
        n = g.shape[0]
        gf = g.reshape(n, len(self.sources), -1)
        out = np.zeros((n, self.n_in))
        # a channel's own index map is injective; channels may share a source
        for c in range(len(self.sources)):
            ok = self._index[c] >= 0
            out[:, self._index[c][ok]] += gf[:, c, ok]
        return out.reshape((n,) + self.in_shape)


LAYER_KINDS = {cls.kind: cls for cls in
               (Dense, Conv2D, ReLU, MaxPool, MinPool, SumPool, Shift, BranchMax,
                LinearProjection)}


class NetworkGraph:
    """Ordered layer chain with its input shape; shapes are checked on construction."""

    def __init__(self, layers, input_shape, zero_bias=None, meta=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.shapes = [self.input_shape]
        for layer in self.layers:
            self.shapes.append(layer.bind(self.shapes[-1]))
        has_bias = any(np.any(p.get("bias", 0.0) != 0.0) for p in
                       (layer.params() for layer in self.layers))
        if zero_bias and has_bias:
            raise ValueError("graph flagged zero_bias has a nonzero bias")
        self.zero_bias = not has_bias
        self.meta = dict(meta or {})

    @property
    def output_dim(self):
        return math.prod(self.shapes[-1])

    @property
    def input_dim(self):
        return math.prod(self.input_shape)

    def __repr__(self):
        inner = ", ".join(layer.kind for layer in self.layers)
        return f"NetworkGraph({list(self.input_shape)}: {inner})"

    def check_input(self, x):
        x = as_tensor(x)
        if x.shape != self.input_shape:
            if x.size == self.input_dim:
                return x.reshape(self.input_shape)
            raise DimensionError(f"input shape {x.shape} does not match {self.input_shape}")
        return x

    def forward_batch(self, X):
        acts = [X]
        for layer in self.layers:
            acts.append(layer.forward(acts[-1]))
        return acts

    def backward(self, acts, g):
        """Pull cotangents ``g`` of the last layer back to the input."""
        for layer, a in zip(reversed(self.layers), reversed(acts[:-1])):
            g = layer.backward(a, g)
        return g

    def features(self, x):
        return forward(self, x)[-1].ravel()


@dataclass
class SimilarityModel:
    """``y(x, x') = <phi(x), phi(x')>`` with an optional projection on top of ``net``."""

    net: NetworkGraph
    projection: LinearProjection = None

    def __post_init__(self):
        layers = list(self.net.layers)
        if self.projection is not None:
            layers.append(self.projection)
        self._graph = NetworkGraph(layers, self.net.input_shape, meta=self.net.meta)

    @property
    def graph(self):
        return self._graph

    @property
    def input_shape(self):
        return self.net.input_shape

    @property
    def zero_bias(self):
        return self._graph.zero_bias


def as_graph(model):
    return model.graph if isinstance(model, SimilarityModel) else model


def forward(net, x):
    """Activations ``[x, a_1, ..., a_L]``; the last entry is ``phi(x)``."""
    net = as_graph(net)
    x = net.check_input(x)
    return [a[0] for a in net.forward_batch(x[None])]


def similarity(model, x, xprime):
    net = as_graph(model)
    return float(net.features(x) @ net.features(xprime))


def jacobian(net, x, acts=None):
    """``(d, h)`` matrix whose column m is the gradient of ``phi_m`` at ``x``."""
    net = as_graph(net)
    x = net.check_input(x)
    if acts is None:
        acts = net.forward_batch(x[None])
    h = net.output_dim
    seed = np.eye(h).reshape((h,) + net.shapes[-1])
    g = net.backward(acts, seed)
    return g.reshape(h, -1).T


def gradient(net, x, m):
    """Gradient of output unit ``m`` with respect to ``x`` (shape of ``x``)."""
    net = as_graph(net)
    x = net.check_input(x)
    h = net.output_dim
    if not 0 <= m < h:
        raise IndexError(f"output index {m} out of range for {h} outputs")
    acts = net.forward_batch(x[None])
    seed = np.zeros((1, h))
    seed[0, m] = 1.0
    return net.backward(acts, seed.reshape((1,) + net.shapes[-1]))[0]


@dataclass
class TrainConfig:
    iterations: int = 10000
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.0
    # learning rate decays linearly to learning_rate * final_lr_fraction
    final_lr_fraction: float = 1.0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        # zero is accepted: it freezes the weights
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0.0 <= self.final_lr_fraction <= 1.0:
            raise ValueError("final_lr_fraction must lie in [0, 1]")

    def lr_at(self, iteration):
        frac = iteration / max(self.iterations - 1, 1)
        return self.learning_rate * (1.0 - (1.0 - self.final_lr_fraction) * frac)


def array_sampler(xa, xb, targets):
    """Sampler drawing minibatches with replacement from fixed arrays."""
    xa, xb, targets = as_tensor(xa), as_tensor(xb), as_tensor(targets).ravel()
    if not len(targets):
        raise ValueError("dataset is empty")

    def sample(rng, n):
        idx = rng.integers(len(targets), n)
        return xa[idx], xb[idx], targets[idx]
    return sample


def train_mse(net, data, cfg, history=None):
    """Fit ``<phi(x), phi(x')>`` to targets by minibatch SGD on squared error.

    ``data`` is either a callable ``sample(rng, n) -> (xa, xb, t)`` producing a
    fresh minibatch (a training stream), or a sequence of ``((x, x'), t)``
    items sampled with replacement. Returns the trained copy of ``net`` and the
    mean batch loss over the last ``min(100, iterations)`` iterations.
    """
    if not callable(data):
        items = list(data)
        if not items:
            raise ValueError("dataset is empty")
        data = array_sampler([p[0][0] for p in items], [p[0][1] for p in items],
                             [p[1] for p in items])
    net = copy.deepcopy(net)
    rng = Rng(cfg.seed)
    tail = min(100, cfg.iterations)
    recent = []
    weighted = [layer for layer in net.layers if layer.weighted]
    velocity = {}
    for it in range(cfg.iterations):
        xa, xb, t = data(rng, cfg.batch_size)
        xa = xa.reshape((len(t),) + net.input_shape)
        xb = xb.reshape((len(t),) + net.input_shape)
        acts_a = net.forward_batch(xa)
        acts_b = net.forward_batch(xb)
        fa = acts_a[-1].reshape(len(t), -1)
        fb = acts_b[-1].reshape(len(t), -1)
        err = np.einsum("bh,bh->b", fa, fb) - t
        loss = float(np.mean(err ** 2))
        if not math.isfinite(loss):
            raise TrainingError(it, loss)
        if history is not None:
            history.append(loss)
        if it >= cfg.iterations - tail:
            recent.append(loss)
        scale = 2.0 / len(t) * err[:, None]
        grads = {id(layer): {} for layer in weighted}
        for acts, g in ((acts_a, scale * fb), (acts_b, scale * fa)):
            g = g.reshape((len(t),) + net.shapes[-1])
            for layer, a in zip(reversed(net.layers), reversed(acts[:-1])):
                if layer.weighted:
                    for name, val in layer.param_grads(a, g).items():
                        acc = grads[id(layer)]
                        acc[name] = acc.get(name, 0.0) + val
                g = layer.backward(a, g)
        lr = cfg.lr_at(it)
        if lr:
            for layer in weighted:
                for name, val in grads[id(layer)].items():
                    if cfg.momentum:
                        key = (id(layer), name)
                        val = velocity[key] = cfg.momentum * velocity.get(key, 0.0) + val
                    setattr(layer, name, getattr(layer, name) - lr * val)
    return net, float(np.mean(recent))


# -- model file -------------------------------------------------------------

def _layer_to_dict(layer):
    d = {"kind": layer.kind}
    if isinstance(layer, Dense):
        d.update(d_in=layer.weight.shape[0], d_out=layer.weight.shape[1],
                 weight=encode_f64(layer.weight))
        if layer.kind == "Dense":
            d["bias"] = None if layer.bias is None else encode_f64(layer.bias)
    elif isinstance(layer, Conv2D):
        c_out, c_in, kh, kw = layer.weight.shape
        d.update(c_out=c_out, c_in=c_in, kh=kh, kw=kw, stride=list(layer.stride),
                 weight=encode_f64(layer.weight),
                 bias=None if layer.bias is None else encode_f64(layer.bias))
    elif isinstance(layer, _Pool):
        d.update(window=list(layer.window), stride=list(layer.stride))
    elif isinstance(layer, Shift):
        d.update(sources=list(layer.sources), offsets=[list(o) for o in layer.offsets])
    elif isinstance(layer, BranchMax):
        d.update(branches=layer.branches)
    return d


def _int_list(doc, key, prefix):
    value = require(doc, key, list, prefix)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise FormatError("expected a list of integers", field=f"{prefix}{key}")
    return value


def _optional_blob(doc, key, shape, prefix):
    value = doc.get(key)
    return None if value is None else decode_f64(value, shape, f"{prefix}{key}")


def _layer_from_dict(d, prefix):
    kind = require(d, "kind", str, prefix)
    if kind not in LAYER_KINDS:
        raise UnsupportedLayerError(f"unsupported layer kind '{kind}'", field=f"{prefix}kind")
    if kind in ("Dense", "LinearProjection"):
        d_in = require(d, "d_in", int, prefix)
        d_out = require(d, "d_out", int, prefix)
        w = decode_f64(d.get("weight"), (d_in, d_out), f"{prefix}weight")
        if kind == "LinearProjection":
            return LinearProjection(w)
        return Dense(w, _optional_blob(d, "bias", (d_out,), prefix))
    if kind == "Conv2D":
        dims = [require(d, k, int, prefix) for k in ("c_out", "c_in", "kh", "kw")]
        w = decode_f64(d.get("weight"), dims, f"{prefix}weight")
        b = _optional_blob(d, "bias", (dims[0],), prefix)
        return Conv2D(w, b, stride=_int_list(d, "stride", prefix))
    if kind in ("MaxPool", "MinPool", "SumPool"):
        return LAYER_KINDS[kind](_int_list(d, "window", prefix), _int_list(d, "stride", prefix))
    if kind == "Shift":
        offsets = require(d, "offsets", list, prefix)
        return Shift(_int_list(d, "sources", prefix), offsets)
    if kind == "BranchMax":
        return BranchMax(require(d, "branches", int, prefix))
    return ReLU()


def save_model(net, meta=None):
    """Serialize a graph to the JSON model document (bytes)."""
    net = as_graph(net)
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "zero_bias": bool(net.zero_bias),
        "layers": [_layer_to_dict(layer) for layer in net.layers],
    }
    meta = dict(net.meta, **(meta or {}))
    if meta:
        doc["meta"] = meta
    return dump_json(doc)


def load_model(payload):
    doc = parse_json(payload)
    check_version(doc, MODEL_FORMAT_VERSION)
    input_shape = shape_field(doc, "input_shape")
    zero_bias = require(doc, "zero_bias", bool)
    layer_docs = require(doc, "layers", list)
    layers = []
    for i, ld in enumerate(layer_docs):
        prefix = f"layers[{i}]."
        if not isinstance(ld, dict):
            raise FormatError("expected an object", field=f"layers[{i}]")
        try:
            layers.append(_layer_from_dict(ld, prefix))
        except DimensionError as exc:
            raise FormatError(str(exc), field=f"layers[{i}]") from None
    meta = doc.get("meta") or {}
    if not isinstance(meta, dict):
        raise FormatError("expected an object", field="meta")
    try:
        return NetworkGraph(layers, input_shape, zero_bias=zero_bias, meta=meta)
    except (DimensionError, ValueError) as exc:
        raise FormatError(str(exc), field="layers") from None


def _pair(v):
    t = _tuple(v)
    if len(t) == 1:
        t = t * 2
    if len(t) != 2 or min(t) <= 0:
        raise DimensionError(f"expected a positive (y, x) pair, got {v}")
    return t


def _tuple(v):
    if isinstance(v, (int, np.integer)):
        return (int(v),)
    return tuple(int(x) for x in v)
