"""Dense float64 tensors and a seeded counter-based random generator.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. The helpers here only add the explicit shape checks the rest of the
package relies on.
"""

import math

import numpy as np

__all__ = [
    "DimensionError",
    "Rng",
    "as_tensor",
    "matmul",
    "outer_accumulate",
    "rng_gaussian",
]

_U64 = (1 << 64) - 1
_INV_2_53 = 1.0 / float(1 << 53)


class DimensionError(ValueError):
    """Raised when tensor extents do not conform."""


def as_tensor(values, shape=None):
    t = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if t.size != math.prod(shape):
            raise DimensionError(f"cannot view {t.size} values as shape {shape}")
        t = t.reshape(shape)
    return t


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def outer_accumulate(u, v, acc):
    """Return ``acc + u (x) v`` without modifying ``acc``."""
    u = as_tensor(u).ravel()
    v = as_tensor(v).ravel()
    acc = as_tensor(acc)
    if acc.shape != (u.size, v.size):
        raise DimensionError(
            f"accumulator shape {acc.shape} does not match ({u.size}, {v.size})")
    return acc + np.multiply.outer(u, v)


class Rng:
    """Seeded Philox-4x64 stream.

    Raw 64-bit words come from numpy's ``Philox`` bit generator keyed with the
    seed, whose output is fixed by the Random123 reference. Uniforms take the
    top 53 bits of each word; normals use the Box-Muller transform on pairs of
    uniforms, so the derived streams do not depend on numpy's sampler
    internals.
    """

    algorithm = "philox4x64-boxmuller"

    def __init__(self, seed=0):
        self.seed = int(seed) & _U64
        self._bits = np.random.Philox(key=self.seed)

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def raw(self, n):
        return self._bits.random_raw(int(n)).astype(np.uint64)

    def uniform(self, shape=()):
        """Uniform draws on [0, 1)."""
        n = math.prod(_shape(shape))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(_shape(shape))

    def standard_normal(self, shape=()):
        shape = _shape(shape)
        n = math.prod(shape)
        k = (n + 1) // 2
        words = self.raw(2 * k) >> np.uint64(11)
        # u1 in (0, 1] keeps the log finite
        u1 = (words[0::2].astype(np.float64) + 1.0) * _INV_2_53
        u2 = words[1::2].astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * k)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:n].reshape(shape)

    def integers(self, high, shape=()):
        """Integers uniform on ``[0, high)``."""
        u = self.uniform(shape)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def child(self, stream):
        """Independent generator derived from this seed and a stream index."""
        return Rng((self.seed * 0x9E3779B97F4A7C15 + int(stream) + 1) & _U64)


def _shape(shape):
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def rng_gaussian(rng, shape, scale=None):
    """Gaussian tensor scaled by ``1/sqrt(shape[-1])`` unless ``scale`` is given.

    The default scaling is the one used for random projection weights of
    shape ``(h_in, h_out)``.
    """
    shape = _shape(shape)
    if scale is None:
        scale = 1.0 / math.sqrt(shape[-1]) if shape else 1.0
    return rng.standard_normal(shape) * scale
