import math

import numpy as np
import pytest

from simlrp.network import (BranchMax, Conv2D, Dense, MaxPool, MinPool, NetworkGraph, ReLU,
                            Shift, SumPool)
from simlrp.tensor import Rng


def he(rng, n_in, n_out):
    return rng.standard_normal((n_in, n_out)) * math.sqrt(2.0 / n_in)


def random_mlp(rng, sizes, bias=False, top_relu=False):
    """Dense/ReLU stack; the top layer is linear unless ``top_relu``."""
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = he(rng, a, b)
        layers.append(Dense(w, rng.standard_normal(b) * 0.1 if bias else None))
        if i < len(sizes) - 2 or top_relu:
            layers.append(ReLU())
    return NetworkGraph(layers, (sizes[0],))


def random_relu_net(rng, max_layers=5, max_units=64):
    """Zero-bias Dense/ReLU net with at most ``max_layers`` weighted layers."""
    depth = 1 + rng.integers(max_layers)
    sizes = [2 + rng.integers(max_units - 1) for _ in range(depth + 1)]
    return random_mlp(rng, [int(s) for s in sizes])


def random_pool_net(rng, variant=None):
    """Small zero-bias graph mixing Dense/ReLU with the homogeneous layers.

    Every layer has at most 64 units so the direct oracle applies.
    """
    variant = rng.integers(4) if variant is None else variant
    if variant == 0:
        # Shift -> channel-pair MinPool -> spatial MaxPool -> dense head
        C, H, W = 2, 4, 4
        sources = [int(s) for s in rng.integers(C, (4,))]
        offsets = [(int(rng.integers(3)) - 1, int(rng.integers(3)) - 1) for _ in range(4)]
        layers = [Shift(sources, offsets), MinPool((2, 1, 1)), MaxPool((1, 2, 2)),
                  Dense(he(rng, 8, 6)), ReLU(), Dense(he(rng, 6, 4))]
        return NetworkGraph(layers, (C, H, W))
    if variant == 1:
        # dense -> 1-D max/sum pooling
        layers = [Dense(he(rng, 12, 48)), ReLU(), MaxPool((2,)), Dense(he(rng, 24, 24)),
                  ReLU(), SumPool((3,)), Dense(he(rng, 8, 5))]
        return NetworkGraph(layers, (12,))
    if variant == 2:
        # Shift branches reduced by BranchMax, then a global sum
        C, H, W = 2, 2, 4
        T = 3
        sources, offsets = [], []
        for t in range(T):
            for c in range(C):
                sources.append(c)
                offsets.append((0, -t))
        layers = [Shift(sources, offsets), BranchMax(T), SumPool((1, H, 2), (1, H, 2)),
                  Dense(he(rng, 4, 6)), ReLU(), Dense(he(rng, 6, 3))]
        return NetworkGraph(layers, (C, H, W))
    # dense -> min pool with overlapping windows -> dense
    layers = [Dense(he(rng, 10, 20)), ReLU(), MinPool((3,), (2,)), Dense(he(rng, 9, 7)),
              ReLU(), Dense(he(rng, 7, 4))]
    return NetworkGraph(layers, (10,))


def random_conv_net(rng):
    layers = [Conv2D(rng.standard_normal((3, 2, 3, 3)) * 0.5), ReLU(), MaxPool((1, 2, 2)),
              Dense(he(rng, 3 * 2 * 2, 5))]
    return NetworkGraph(layers, (2, 6, 6))


def random_input(rng, net, positive=False):
    x = rng.standard_normal(net.input_shape)
    return np.abs(x) if positive else x


@pytest.fixture
def rng():
    return Rng(1234)
