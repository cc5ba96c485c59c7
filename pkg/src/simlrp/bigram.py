"""Bigram feature map on top of ten digit-detection maps.

Feature ``j*10 + k`` responds to digit ``j`` followed by digit ``k`` a few
pixels to its right::

    phi_jk = sum_{y,x} max_t min(A_j[y, x], A_k[y, x + s_t])

The min acts as a soft AND, the max over shifts as a soft OR and the global
sum pool makes the feature translation invariant. Every stage is positively
homogeneous and bias-free.
"""

import numpy as np

from .network import BranchMax, MinPool, NetworkGraph, Shift, SumPool

N_DIGITS = 10
DEFAULT_SHIFTS = (8, 10, 12)


def build_bigram_graph(shape=(64, 64), shifts=DEFAULT_SHIFTS):
    """Graph mapping ``(10, H, W)`` digit maps to the 100 bigram features.

    Shift output channels are laid out as ``((j*10 + k)*T + t)*2 + {0, 1}``
    holding ``A_j`` and ``A_k`` moved left by ``s_t``, so the channel-pair min
    and the branch max both reduce consecutive channels.
    """
    H, W = (int(v) for v in shape)
    shifts = [int(s) for s in shifts]
    if not shifts:
        raise ValueError("at least one shift is required")
    for s in shifts:
        if s < 0 or s >= W:
            raise ValueError(f"shift {s} exceeds the map width {W}")
    sources, offsets = [], []
    for j in range(N_DIGITS):
        for k in range(N_DIGITS):
            for s in shifts:
                sources += [j, k]
                offsets += [(0, 0), (0, -s)]
    layers = [Shift(sources, offsets), MinPool((2, 1, 1)), BranchMax(len(shifts)),
              SumPool((1, H, W))]
    meta = {"task": "bigram", "shifts": shifts}
    return NetworkGraph(layers, (N_DIGITS, H, W), zero_bias=True, meta=meta)


def blob_maps(placements, shape=(64, 64), sigma=2.0):
    """Synthetic detector output: one Gaussian blob per ``(digit, y, x)`` placement."""
    H, W = shape
    maps = np.zeros((N_DIGITS, H, W))
    y, x = np.mgrid[0:H, 0:W]
    for digit, cy, cx in placements:
        if not 0 <= digit < N_DIGITS:
            raise ValueError(f"digit {digit} out of range")
        blob = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * sigma ** 2))
        maps[digit] = np.maximum(maps[digit], blob)
    return maps


def feature_index(j, k):
    return j * N_DIGITS + k
