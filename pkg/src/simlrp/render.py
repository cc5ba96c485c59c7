"""Rendering of pairwise explanations as connections between super-pixels.

Relevance is pooled on square super-pixels, normalized by the fourth root of
its mean fourth power, soft-thresholded at ``l``, saturated at ``h`` and mapped
to opacity ``|R|^p``. Positive scores are drawn red, negative ones blue.
"""

import base64
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .pairwise import PairwiseExplanation, Partition, coarse_grain
from .tensor import as_tensor

RED = "#e41a1c"
BLUE = "#377eb8"

# canvas geometry, in output pixels
MARGIN = 10
GAP = 40
STROKE_WIDTH = 1.5


@dataclass(frozen=True)
class RenderParams:
    pool: int
    l: float
    h: float
    p: float

    def __post_init__(self):
        if int(self.pool) != self.pool or self.pool < 1:
            raise ValueError(f"pool must be a positive integer, got {self.pool}")
        if not self.l >= 0:
            raise ValueError(f"l must be >= 0, got {self.l}")
        if not self.h > self.l:
            raise ValueError(f"h must exceed l, got h={self.h}, l={self.l}")
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @classmethod
    def parse(cls, text):
        """``"pool,l,h,p"``, e.g. ``"8,0.25,13,2"``."""
        parts = [s.strip() for s in str(text).split(",")]
        if len(parts) != 4:
            raise ValueError(f"render parameters need 4 values pool,l,h,p; got '{text}'")
        try:
            pool = float(parts[0])
            l, h, p = (float(s) for s in parts[1:])
        except ValueError:
            raise ValueError(f"render parameters must be numbers, got '{text}'") from None
        if pool != int(pool):
            raise ValueError(f"pool must be an integer, got {parts[0]}")
        return cls(int(pool), l, h, p)


# settings used for the published figures, keyed by dataset
PARAMETER_TABLE = {
    "pascal-voc": RenderParams(8, 0.25, 13, 2),
    "faces": RenderParams(4, 0.3, 60, 1),
    "ucf-sports": RenderParams(8, 0.25, 20, 1),
    "sphaera-illustrations": RenderParams(6, 0.25, 15, 2),
    "sphaera-tables": RenderParams(20, 0.01, 4, 2),
}


@dataclass(frozen=True)
class Connection:
    a: int
    b: int
    color: str
    opacity: float


def shrink(Rc, params):
    """Normalize, sparsify and saturate a coarse-grained matrix into [-1, 1]."""
    Rc = as_tensor(Rc)
    scale = np.mean(Rc ** 4) ** 0.25
    if scale == 0 or not np.isfinite(scale):
        return np.zeros_like(Rc)
    Rn = Rc / scale
    Rn = Rn - np.clip(Rn, -params.l, params.l)
    delta = params.h - params.l
    return np.clip(Rn, -delta, delta) / delta


def pooled(R, params, shape_a, shape_b):
    expl = R if isinstance(R, PairwiseExplanation) else PairwiseExplanation(values=as_tensor(R))
    pa = Partition.superpixels(shape_a, params.pool)
    pb = Partition.superpixels(shape_b, params.pool)
    return coarse_grain(expl, pa, pb).dense


def render(R, params, shape_a, shape_b):
    """Connections between super-pixel groups, sorted by ``(a, b)``."""
    S = shrink(pooled(R, params, shape_a, shape_b), params)
    out = []
    for a, b in zip(*np.nonzero(S)):
        v = S[a, b]
        out.append(Connection(int(a), int(b), "red" if v > 0 else "blue",
                              float(abs(v) ** params.p)))
    return out


def to_rgb8(image):
    """Raster as ``(H, W, 3)`` uint8: 8-bit arrays pass through, floats are min-max scaled."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[0] in (1, 3) and img.shape[2] not in (1, 3):
        img = np.moveaxis(img, 0, -1)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"cannot interpret raster of shape {np.shape(image)} as an image")
    if img.dtype == np.uint8:
        return img
    img = img.astype(np.float64)
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return np.round(img * 255).astype(np.uint8)


def _png_uri(rgb):
    buf = io.BytesIO()
    Image.fromarray(rgb, "RGB").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _center(group, H, W, pool):
    gw = math.ceil(W / pool)
    gy, gx = divmod(group, gw)
    y0, x0 = gy * pool, gx * pool
    return x0 + min(pool, W - x0) / 2.0, y0 + min(pool, H - y0) / 2.0


def emit_svg(connections, image_a, image_b, pool, scale=1.0):
    """SVG with both images side by side and one line per connection.

    Output is a pure function of the arguments: attributes are written in a
    fixed order and numbers with fixed precision.
    """
    rgb_a, rgb_b = to_rgb8(image_a), to_rgb8(image_b)
    (Ha, Wa), (Hb, Wb) = rgb_a.shape[:2], rgb_b.shape[:2]
    na = math.ceil(Ha / pool) * math.ceil(Wa / pool)
    nb = math.ceil(Hb / pool) * math.ceil(Wb / pool)
    ox_b = MARGIN + Wa * scale + GAP
    width = ox_b + Wb * scale + MARGIN
    height = 2 * MARGIN + max(Ha, Hb) * scale

    def num(v):
        return f"{v:.2f}"

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                     width=num(width), height=num(height),
                     viewBox=f"0 0 {num(width)} {num(height)}")
    for rgb, ox in ((rgb_a, MARGIN), (rgb_b, ox_b)):
        ET.SubElement(svg, "image", x=num(ox), y=num(MARGIN),
                      width=num(rgb.shape[1] * scale), height=num(rgb.shape[0] * scale),
                      href=_png_uri(rgb))
    group = ET.SubElement(svg, "g", fill="none")
    group.set("stroke-width", num(STROKE_WIDTH))
    group.set("stroke-linecap", "round")
    for c in connections:
        if not 0 <= c.a < na or not 0 <= c.b < nb:
            raise ValueError(f"connection ({c.a}, {c.b}) does not fit the super-pixel grids "
                             f"of {na} and {nb} groups")
        xa, ya = _center(c.a, Ha, Wa, pool)
        xb, yb = _center(c.b, Hb, Wb, pool)
        line = ET.SubElement(group, "line",
                             x1=num(MARGIN + xa * scale), y1=num(MARGIN + ya * scale),
                             x2=num(ox_b + xb * scale), y2=num(MARGIN + yb * scale),
                             stroke=RED if c.color == "red" else BLUE)
        line.set("stroke-opacity", f"{c.opacity:.6f}")
    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"
