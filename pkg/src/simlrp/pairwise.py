"""Pairwise explanations of dot-product similarity.

``bilrp`` combines one first-order relevance sweep per input into
``R[i, i'] = sum_m R[i, m] R'[i', m]``. ``bilrp_direct`` propagates the full
pair matrix layer by layer and serves as the reference for small networks.
The gradient baselines (Hessian x Product, Curvature, Saliency), group pooling
and the average cosine score live here too.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .formats import (FormatError, check_version, decode_f64, dump_json, encode_f64,
                      parse_json, require, shape_field)
from .lrp import GammaSchedule, ZB, lrp_explain
from .network import ReLU, as_graph, forward, jacobian, save_model, similarity
from .tensor import as_tensor, outer_accumulate

EXPLANATION_FORMAT_VERSION = 1
DIRECT_MAX_UNITS = 64
METHODS = ("BiLRP", "HP", "Saliency", "Curvature")


class DirectSizeError(ValueError):
    pass


@dataclass
class PairwiseExplanation:
    """A ``(d, d')`` relevance matrix, stored densely or as two ``(d, h)`` factors."""

    values: np.ndarray = None
    factors: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values is None and self.factors is None:
            raise ValueError("explanation needs values or factors")
        if self.factors is not None:
            fx, fxp = (as_tensor(f) for f in self.factors)
            if fx.ndim != 2 or fxp.ndim != 2 or fx.shape[1] != fxp.shape[1]:
                raise ValueError(f"factor shapes {fx.shape} and {fxp.shape} do not pair up")
            self.factors = (fx, fxp)
        if self.values is not None:
            self.values = as_tensor(self.values)

    @property
    def shape(self):
        if self.values is not None:
            return self.values.shape
        return (self.factors[0].shape[0], self.factors[1].shape[0])

    @property
    def dense(self):
        """The materialized matrix; factor products sum over ``m`` in index order."""
        if self.values is None:
            fx, fxp = self.factors
            acc = np.zeros((fx.shape[0], fxp.shape[0]))
            for m in range(fx.shape[1]):
                acc = outer_accumulate(fx[:, m], fxp[:, m], acc)
            self.values = acc
        return self.values

    @property
    def total(self):
        if self.values is None:
            fx, fxp = self.factors
            return float(fx.sum(axis=0) @ fxp.sum(axis=0))
        return float(self.values.sum())

    @property
    def method(self):
        return self.meta.get("method")


def model_hash(model):
    return hashlib.sha256(save_model(as_graph(model))).hexdigest()[:16]


def _meta(method, model, schedule=None, **extra):
    meta = {"method": method}
    if model is not None:
        meta["model_hash"] = model_hash(model)
    if schedule is not None:
        meta["gamma_schedule"] = schedule.to_dict()
    meta.update(extra)
    return meta


def bilrp(model, x, xprime, schedule=None, input_ids=None):
    """BiLRP explanation in factored form."""
    net = as_graph(model)
    schedule = schedule or GammaSchedule()
    fa = lrp_explain(net, x, schedule)
    fb = lrp_explain(net, xprime, schedule)
    meta = _meta("BiLRP", net, schedule, dropped=fa.dropped + fb.dropped)
    if input_ids is not None:
        meta["input_ids"] = list(input_ids)
    return PairwiseExplanation(factors=(fa.values, fb.values), meta=meta)


def _contributions(layer, a, gamma, zb=None):
    """``P[j, k]``: share of neuron j in the pre-normalization message to neuron k.

    Weighted layers give ``a_j rho(w_jk)`` (or the z^B numerator at the input);
    homogeneous layers give ``a_j [grad a_k]_j``. Both come from the layer's
    explicit matrix form, built by pushing basis vectors through it.
    """
    n_in = layer.n_in
    a = a.ravel()
    if layer.weighted:
        if layer.bias is not None and np.any(layer.bias != 0):
            raise ValueError("direct propagation supports zero-bias layers only")
        basis = np.eye(n_in).reshape((n_in,) + layer.in_shape)
        w = layer.apply(basis, layer.weight).reshape(n_in, -1)
        if zb is not None:
            lo, hi = (v.ravel() for v in zb.arrays(layer.in_shape))
            return a[:, None] * w - lo[:, None] * np.maximum(w, 0) - hi[:, None] * np.minimum(w, 0)
        return a[:, None] * (w + gamma * np.maximum(w, 0))
    n_out = layer.n_out
    if isinstance(layer, ReLU):
        jac = np.diag((a > 0).astype(float))
    else:
        seed = np.eye(n_out).reshape((n_out,) + layer.out_shape)
        jac = layer.backward(a.reshape((1,) + layer.in_shape), seed).reshape(n_out, n_in)
    return a[:, None] * jac.T


def _direct_step(Pa, Pb, R):
    """One layer of the pair rule, evaluating every ``(k, k')`` message literally."""
    n_in, n_out = Pa.shape
    m_in, m_out = Pb.shape
    out = np.zeros((n_in, m_in))
    dropped = 0
    for k in range(n_out):
        msgs = Pa[:, k][:, None, None] * Pb[None, :, :]      # (j, j', k')
        denom = msgs.sum(axis=(0, 1))
        live = denom != 0
        dropped += int(np.count_nonzero(~live & (R[k] != 0)))
        scale = np.zeros(m_out)
        scale[live] = R[k, live] / denom[live]
        out += (msgs * scale).sum(axis=2)
    return out, dropped


def bilrp_direct(model, x, xprime, schedule=None):
    """Pair-matrix propagation of BiLRP; limited to layers of at most 64 units."""
    net = as_graph(model)
    schedule = schedule or GammaSchedule()
    for shape in net.shapes:
        if math.prod(shape) > DIRECT_MAX_UNITS:
            raise DirectSizeError(
                f"layer with {math.prod(shape)} units exceeds the direct limit of "
                f"{DIRECT_MAX_UNITS}; use bilrp() for the factored computation")
    acts_a = forward(net, x)
    acts_b = forward(net, xprime)
    top_a, top_b = acts_a[-1].ravel(), acts_b[-1].ravel()
    R = np.diag(top_a * top_b)
    dropped = 0
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        zb = schedule.input_rule if (i == 0 and layer.weighted) else None
        g = schedule.gamma(i)
        Pa = _contributions(layer, acts_a[i], g, zb)
        Pb = _contributions(layer, acts_b[i], g, zb)
        R, d = _direct_step(Pa, Pb, R)
        dropped += d
    return PairwiseExplanation(values=R, meta=_meta("BiLRP", net, schedule, direct=True,
                                                    dropped=dropped))


def _gi_factors(net, x):
    x = net.check_input(x)
    return jacobian(net, x) * x.ravel()[:, None]


def _require_homogeneous(net):
    if not net.zero_bias:
        raise ValueError("model has nonzero biases; it is not positively homogeneous")


def hessian_product(model, x, xprime):
    """``sum_m GI(phi_m, x) (x) GI(phi_m, x')`` accumulated over ``m`` in order."""
    net = as_graph(model)
    _require_homogeneous(net)
    ga, gb = _gi_factors(net, x), _gi_factors(net, xprime)
    acc = np.zeros((ga.shape[0], gb.shape[0]))
    for m in range(ga.shape[1]):
        acc = outer_accumulate(ga[:, m], gb[:, m], acc)
    return PairwiseExplanation(values=acc, meta=_meta("HP", net))


def mixed_hessian(model, x, xprime):
    """Cross second derivatives of ``y``: ``sum_m grad phi_m(x) (x) grad phi_m(x')``."""
    net = as_graph(model)
    _require_homogeneous(net)
    ja = jacobian(net, x)
    jb = jacobian(net, xprime)
    acc = np.zeros((ja.shape[0], jb.shape[0]))
    for m in range(ja.shape[1]):
        acc = outer_accumulate(ja[:, m], jb[:, m], acc)
    return acc


def curvature(model, x, xprime):
    net = as_graph(model)
    return PairwiseExplanation(values=mixed_hessian(net, x, xprime) ** 2,
                               meta=_meta("Curvature", net))


def saliency(x, xprime):
    x = as_tensor(x).ravel()
    xprime = as_tensor(xprime).ravel()
    return PairwiseExplanation(values=np.multiply.outer(x, xprime) ** 2,
                               meta={"method": "Saliency"})


class Partition:
    """Disjoint groups of feature indices covering ``range(size)``."""

    def __init__(self, groups, size=None):
        self.groups = [np.asarray(g, dtype=np.int64).ravel() for g in groups]
        flat = np.concatenate(self.groups) if self.groups else np.zeros(0, np.int64)
        size = flat.size if size is None else int(size)
        if flat.size != size or np.any(np.bincount(flat, minlength=size) != 1) \
                or (flat.size and (flat.min() < 0 or flat.max() >= size)):
            raise ValueError(f"groups do not form a partition of {size} features")
        self.size = size
        self.labels = np.empty(size, dtype=np.int64)
        for gi, g in enumerate(self.groups):
            self.labels[g] = gi

    def __len__(self):
        return len(self.groups)

    @classmethod
    def singletons(cls, size):
        return cls([[i] for i in range(size)], size)

    @classmethod
    def contiguous(cls, size, block):
        return cls([range(s, min(s + block, size)) for s in range(0, size, block)], size)

    @classmethod
    def superpixels(cls, shape, pool):
        """Square ``pool x pool`` blocks over the last two axes; leading axes are merged.

        Trailing partial blocks are kept when ``pool`` does not divide an extent.
        Groups are ordered row-major over the block grid.
        """
        shape = tuple(shape)
        H, W = shape[-2:]
        channels = math.prod(shape[:-2])
        gw = -(-W // pool)
        y, x = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
        block = np.tile(((y // pool) * gw + (x // pool)).ravel(), channels)
        n_groups = -(-H // pool) * gw
        order = np.argsort(block, kind="stable")
        bounds = np.searchsorted(block[order], np.arange(n_groups + 1))
        return cls([order[bounds[i]:bounds[i + 1]] for i in range(n_groups)], block.size)

    def indicator(self):
        S = np.zeros((len(self.groups), self.size))
        S[self.labels, np.arange(self.size)] = 1.0
        return S


def _group_rows(M, partition):
    out = np.zeros((len(partition),) + M.shape[1:])
    np.add.at(out, partition.labels, M)
    return out


def coarse_grain(R, p, pprime):
    """Sum relevance over feature groups: ``R[I, I'] = sum_{i in I, i' in I'} R[i, i']``."""
    expl = R if isinstance(R, PairwiseExplanation) else PairwiseExplanation(values=R)
    d, dp = expl.shape
    if p.size != d or pprime.size != dp:
        raise ValueError(f"partitions of sizes ({p.size}, {pprime.size}) do not fit "
                         f"explanation shape {expl.shape}")
    meta = dict(expl.meta, coarse=[len(p), len(pprime)])
    if expl.values is None:
        fx, fxp = expl.factors
        return PairwiseExplanation(factors=(_group_rows(fx, p), _group_rows(fxp, pprime)),
                                   meta=meta)
    pooled = _group_rows(_group_rows(expl.values, p).T, pprime).T
    return PairwiseExplanation(values=pooled, meta=meta)


def acs(explanations, ground_truths):
    """Mean cosine similarity between explanations and ground-truth matrices."""
    explanations = list(explanations)
    ground_truths = list(ground_truths)
    if not explanations:
        raise ValueError("acs needs at least one explanation")
    if len(explanations) != len(ground_truths):
        raise ValueError("explanations and ground truths must pair up")
    scores = []
    for e, gt in zip(explanations, ground_truths):
        v = (e.dense if isinstance(e, PairwiseExplanation) else as_tensor(e)).ravel()
        g = as_tensor(gt).ravel()
        if v.shape != g.shape:
            raise ValueError(f"explanation of size {v.size} vs ground truth of size {g.size}")
        gn = np.linalg.norm(g)
        if gn == 0:
            raise ValueError("ground truth is all zero")
        vn = np.linalg.norm(v)
        scores.append(0.0 if vn == 0 else float(v @ g) / (vn * gn))
    return float(np.mean(scores))


# -- explanation file ---------------------------------------------------------

def save_explanation(expl, shape_x=None, shape_xprime=None, similarity_value=None,
                     dense=False):
    """Serialize an explanation; factored ones keep factors, ``dense=True`` adds the matrix."""
    d, dp = expl.shape
    doc = {
        "format_version": EXPLANATION_FORMAT_VERSION,
        "method": expl.meta.get("method", "BiLRP"),
        "shape_x": list(shape_x or (d,)),
        "shape_xprime": list(shape_xprime or (dp,)),
        "gamma_schedule": expl.meta.get("gamma_schedule"),
        "similarity_value": similarity_value,
        "meta": {k: v for k, v in expl.meta.items() if k not in ("method", "gamma_schedule")},
    }
    if expl.factors is not None:
        fx, fxp = expl.factors
        doc["factors"] = {"h": fx.shape[1], "fx": encode_f64(fx), "fxprime": encode_f64(fxp)}
    if expl.factors is None or dense:
        doc["dense"] = encode_f64(expl.dense)
    return dump_json(doc)


def load_explanation(payload):
    doc = parse_json(payload)
    check_version(doc, EXPLANATION_FORMAT_VERSION)
    method = require(doc, "method", str)
    if method not in METHODS:
        raise FormatError(f"unknown method '{method}'", field="method")
    sx = shape_field(doc, "shape_x")
    sxp = shape_field(doc, "shape_xprime")
    d, dp = math.prod(sx), math.prod(sxp)
    meta = dict(doc.get("meta") or {}, method=method, shape_x=list(sx), shape_xprime=list(sxp))
    if doc.get("gamma_schedule") is not None:
        meta["gamma_schedule"] = doc["gamma_schedule"]
    if doc.get("similarity_value") is not None:
        meta["similarity_value"] = require(doc, "similarity_value", float)
    values = factors = None
    if doc.get("dense") is not None:
        values = decode_f64(doc["dense"], (d, dp), "dense")
    if doc.get("factors") is not None:
        fdoc = require(doc, "factors", dict)
        h = require(fdoc, "h", int, "factors.")
        factors = (decode_f64(fdoc.get("fx"), (d, h), "factors.fx"),
                   decode_f64(fdoc.get("fxprime"), (dp, h), "factors.fxprime"))
    if values is None and factors is None:
        raise FormatError("needs 'dense' or 'factors'", field="dense")
    return PairwiseExplanation(values=values, factors=factors, meta=meta)


def explain(model, x, xprime, method, schedule=None):
    """Dispatch by method name: ``bilrp``, ``hp``, ``saliency`` or ``curvature``."""
    key = method.lower()
    if key == "bilrp":
        return bilrp(model, x, xprime, schedule)
    if key == "hp":
        return hessian_product(model, x, xprime)
    if key == "saliency":
        return saliency(x, xprime)
    if key == "curvature":
        return curvature(model, x, xprime)
    raise ValueError(f"unknown method '{method}'")


__all__ = [
    "DirectSizeError", "PairwiseExplanation", "Partition", "ZB", "acs", "bilrp",
    "bilrp_direct", "coarse_grain", "curvature", "explain", "hessian_product",
    "load_explanation", "mixed_hessian", "saliency", "save_explanation", "similarity",
]
