"""First-order relevance propagation producing one input map per output unit.

Relevance is carried with the output units as a leading axis: an array of
shape ``(h, *layer_shape)`` holds, for each feature-map unit ``m``, the
relevance of every neuron of the current layer. ``lrp_explain`` starts from
``R[m, k] = a_k * [k == m]`` at the top and sweeps all ``h`` columns down
together.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .network import ReLU, as_graph, forward
from .tensor import as_tensor

# budget, in float64 entries, for one layer of a relevance sweep
_CHUNK_BUDGET = 2 ** 24


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class ZB:
    """Box bounds for the z^B input rule, scalars or arrays shaped like the input."""

    lower: object
    upper: object

    def arrays(self, shape):
        lo = np.broadcast_to(as_tensor(self.lower), shape)
        hi = np.broadcast_to(as_tensor(self.upper), shape)
        return lo, hi

    def to_dict(self):
        return {"rule": "zB", "lower": np.asarray(self.lower).tolist(),
                "upper": np.asarray(self.upper).tolist()}


@dataclass
class GammaSchedule:
    """Per-layer gamma for weighted layers plus the input-layer rule.

    ``gammas`` maps a layer index (position in the layer list) to its gamma;
    layers not listed use ``default``.
    """

    gammas: dict = field(default_factory=dict)
    default: float = 0.0
    input_rule: ZB = None

    def __post_init__(self):
        self.gammas = {int(k): float(v) for k, v in self.gammas.items()}
        self.default = float(self.default)
        if self.default < 0 or any(g < 0 for g in self.gammas.values()):
            raise ValueError("gamma must be non-negative")

    @classmethod
    def uniform(cls, gamma, input_rule=None):
        return cls({}, gamma, input_rule)

    def gamma(self, layer_index):
        return self.gammas.get(layer_index, self.default)

    @property
    def is_zero(self):
        return self.default == 0 and not any(self.gammas.values()) and self.input_rule is None

    @classmethod
    def parse(cls, text, input_rule=None):
        """Parse ``"0.09"`` or ``"0.1,0-3=0.5,7=0"`` (a bare number sets the default)."""
        default = 0.0
        gammas = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in part:
                default = float(part)
                continue
            key, val = part.split("=", 1)
            m = re.fullmatch(r"\s*(\d+)\s*(?:-\s*(\d+))?\s*", key)
            if not m:
                raise ValueError(f"bad layer selector '{key}' in gamma schedule")
            lo = int(m.group(1))
            hi = int(m.group(2)) if m.group(2) else lo
            for i in range(lo, hi + 1):
                gammas[i] = float(val)
        return cls(gammas, default, input_rule)

    def to_dict(self):
        return {"default": self.default,
                "layers": {str(k): v for k, v in sorted(self.gammas.items())},
                "input_rule": None if self.input_rule is None else self.input_rule.to_dict()}

    @classmethod
    def from_dict(cls, d):
        rule = d.get("input_rule")
        zb = None if rule is None else ZB(np.asarray(rule["lower"]), np.asarray(rule["upper"]))
        return cls({int(k): v for k, v in d.get("layers", {}).items()},
                   d.get("default", 0.0), zb)


@dataclass
class RelevanceFactors:
    """``values[i, m]``: relevance of input feature ``i`` for output unit ``m``."""

    values: np.ndarray
    dropped: int = 0

    @property
    def shape(self):
        return self.values.shape


def _columns(R, shape):
    single = R.shape == tuple(shape)
    return (R[None] if single else R), single


def _safe_ratio(R, z):
    """``R / z`` with zero where ``z == 0``, plus the count of dropped nonzero ``R``."""
    zero = z == 0
    s = np.divide(R, z, out=np.zeros(np.broadcast_shapes(R.shape, z.shape)), where=~zero)
    dropped = int(np.count_nonzero(zero & (R != 0)))
    return s, dropped


def _rho(w, gamma):
    return w if gamma == 0 else w + gamma * np.maximum(w, 0.0)


def lrp_dense_gamma(a, layer, R_upper, gamma, diagnostics=None):
    """LRP-gamma through a Dense, Conv2D or LinearProjection layer.

    ``R_lower[j] = sum_k a_j rho(w_jk) / z_k * R_upper[k]`` with
    ``rho(w) = w + gamma * max(w, 0)`` and ``z_k = sum_j a_j rho(w_jk) + rho(b_k)``.
    Relevance above a zero ``z_k`` is dropped and counted in ``diagnostics``.
    """
    a = as_tensor(a).reshape(layer.in_shape)
    R, single = _columns(as_tensor(R_upper), layer.out_shape)
    if R.shape[1:] != layer.out_shape:
        raise ValueError(f"relevance shape {R.shape} does not match layer output {layer.out_shape}")
    w = _rho(layer.weight, gamma)
    b = None if layer.bias is None else _rho(layer.bias, gamma)
    z = layer.apply(a[None], w, b)
    s, dropped = _safe_ratio(R, z)
    out = a[None] * layer.apply_transpose(s, w)
    if diagnostics is not None:
        diagnostics["dropped"] = diagnostics.get("dropped", 0) + dropped
    return out[0] if single else out


def lrp_pool(a, layer, R_upper, diagnostics=None):
    """Propagation through a positively homogeneous layer (pools, BranchMax, Shift, ReLU).

    ``R_lower[j] = sum_k a_j [grad a_k]_j / z_k * R_upper[k]`` where
    ``z_k = sum_j a_j [grad a_k]_j``, which equals ``a_k`` for these layers. Max
    and min pools send everything to the selected entry; sum pools split in
    proportion to ``a_j``.
    """
    a = as_tensor(a).reshape(layer.in_shape)
    R, single = _columns(as_tensor(R_upper), layer.out_shape)
    if R.shape[1:] != layer.out_shape:
        raise ValueError(f"relevance shape {R.shape} does not match layer output {layer.out_shape}")
    if isinstance(layer, ReLU):
        active = a[None] > 0
        out = np.where(active, R, 0.0)
        dropped = int(np.count_nonzero(~active & (R != 0)))
    else:
        z = layer.forward(a[None])
        s, dropped = _safe_ratio(R, z)
        out = a[None] * layer.backward(a[None], s)
    if diagnostics is not None:
        diagnostics["dropped"] = diagnostics.get("dropped", 0) + dropped
    return out[0] if single else out


def lrp_input_zb(x, layer, R_upper, bounds, diagnostics=None):
    """z^B rule for the first weighted layer with box constraints ``lower <= x <= upper``.

    ``R_j = sum_k (x_j w_jk - l_j w_jk^+ - h_j w_jk^-) / z_k * R_k`` where ``z_k``
    is the sum of the numerators over ``j``.
    """
    x = as_tensor(x).reshape(layer.in_shape)
    if not isinstance(bounds, ZB):
        bounds = ZB(*bounds)
    lo, hi = bounds.arrays(x.shape)
    if not np.all(lo < hi):
        raise BoundsError("z^B bounds need lower < upper everywhere")
    if np.any(x < lo) or np.any(x > hi):
        raise BoundsError("input lies outside the z^B bounds")
    R, single = _columns(as_tensor(R_upper), layer.out_shape)
    w = layer.weight
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    z = layer.apply(x[None], w) - layer.apply(lo[None], wp) - layer.apply(hi[None], wn)
    s, dropped = _safe_ratio(R, z)
    out = (x[None] * layer.apply_transpose(s, w)
           - lo[None] * layer.apply_transpose(s, wp)
           - hi[None] * layer.apply_transpose(s, wn))
    if diagnostics is not None:
        diagnostics["dropped"] = diagnostics.get("dropped", 0) + dropped
    return out[0] if single else out


def propagate(net, acts, R, schedule, diagnostics=None):
    """Sweep relevance columns ``R`` (shape ``(n, *out_shape)``) to the input."""
    for i in range(len(net.layers) - 1, -1, -1):
        layer, a = net.layers[i], acts[i]
        if layer.weighted:
            if i == 0 and schedule.input_rule is not None:
                R = lrp_input_zb(a, layer, R, schedule.input_rule, diagnostics)
            else:
                R = lrp_dense_gamma(a, layer, R, schedule.gamma(i), diagnostics)
        else:
            R = lrp_pool(a, layer, R, diagnostics)
    return R


def lrp_explain(net, x, schedule=None, acts=None):
    """Relevance of every input feature for every feature-map unit, as ``(d, h)``."""
    net = as_graph(net)
    schedule = schedule or GammaSchedule()
    x = net.check_input(x)
    if acts is None:
        acts = forward(net, x)
    top = acts[-1].ravel()
    h = top.size
    widest = max(math.prod(s) for s in net.shapes)
    chunk = max(1, min(h, _CHUNK_BUDGET // max(widest, 1)))
    diagnostics = {"dropped": 0}
    out = np.empty((h, x.size))
    for start in range(0, h, chunk):
        stop = min(h, start + chunk)
        R = np.zeros((stop - start, h))
        R[np.arange(stop - start), np.arange(start, stop)] = top[start:stop]
        R = R.reshape((stop - start,) + net.shapes[-1])
        out[start:stop] = propagate(net, acts, R, schedule, diagnostics).reshape(stop - start, -1)
    return RelevanceFactors(out.T.copy(), diagnostics["dropped"])
