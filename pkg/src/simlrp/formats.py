"""Shared encoding for the JSON documents written by this package.

Numeric blocks are stored as base64 strings of little-endian float64 values
in row-major order. Raw input grids (``--x`` files, image rasters, pair
files) use the same encoding.
"""

import base64
import binascii
import json
import math

import numpy as np

from .tensor import as_tensor

TENSOR_FORMAT_VERSION = 1
PAIRS_FORMAT_VERSION = 1


class FormatError(ValueError):
    """A document could not be parsed. The message names the offset or field."""

    def __init__(self, message, field=None, offset=None):
        where = []
        if offset is not None:
            where.append(f"offset {offset}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.field = field
        self.offset = offset


def encode_f64(array):
    data = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return base64.b64encode(data).decode("ascii")


def decode_f64(text, shape, field):
    if not isinstance(text, str):
        raise FormatError("expected a base64 string", field=field)
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise FormatError(f"invalid base64 ({exc})", field=field) from None
    shape = tuple(int(s) for s in shape)
    n = math.prod(shape)
    if len(raw) != 8 * n:
        raise FormatError(
            f"expected {8 * n} bytes for shape {list(shape)}, got {len(raw)}", field=field)
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def parse_json(payload):
    if isinstance(payload, (bytes, bytearray)):
        try:
            payload = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("payload is not UTF-8", offset=exc.start) from None
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, offset=exc.pos) from None
    if not isinstance(doc, dict):
        raise FormatError("top-level value must be an object", offset=0)
    return doc


def dump_json(doc):
    return (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode("utf-8")


def require(doc, key, kind, prefix=""):
    name = f"{prefix}{key}"
    if key not in doc:
        raise FormatError("missing", field=name)
    value = doc[key]
    if kind is int and isinstance(value, bool):
        raise FormatError("expected an integer", field=name)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind):
        raise FormatError(f"expected {kind.__name__}", field=name)
    return value


def shape_field(doc, key, prefix=""):
    value = require(doc, key, list, prefix)
    if not value or not all(isinstance(s, int) and not isinstance(s, bool) and s > 0
                            for s in value):
        raise FormatError("expected a list of positive integers", field=f"{prefix}{key}")
    return tuple(value)


def check_version(doc, supported, prefix=""):
    version = require(doc, "format_version", int, prefix)
    if version != supported:
        raise FormatError(f"unsupported format_version {version}", field="format_version")
    return version


def save_tensor(array):
    """Serialize one tensor as ``{format_version, shape, data}``."""
    t = as_tensor(array)
    return dump_json({
        "format_version": TENSOR_FORMAT_VERSION,
        "shape": list(t.shape) or [1],
        "data": encode_f64(t),
    })


def load_tensor(payload):
    doc = parse_json(payload)
    check_version(doc, TENSOR_FORMAT_VERSION)
    shape = shape_field(doc, "shape")
    return decode_f64(doc.get("data"), shape, "data")


def save_pairs(pairs):
    """Serialize a list of ``(x, x')`` pairs that share one shape."""
    pairs = [(as_tensor(a), as_tensor(b)) for a, b in pairs]
    if not pairs:
        raise ValueError("no pairs to save")
    shape = pairs[0][0].shape
    for a, b in pairs:
        if a.shape != shape or b.shape != shape:
            raise ValueError("all pair members must share one shape")
    return dump_json({
        "format_version": PAIRS_FORMAT_VERSION,
        "shape": list(shape),
        "pairs": [{"x": encode_f64(a), "xprime": encode_f64(b)} for a, b in pairs],
    })


def load_pairs(payload):
    doc = parse_json(payload)
    check_version(doc, PAIRS_FORMAT_VERSION)
    shape = shape_field(doc, "shape")
    items = require(doc, "pairs", list)
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise FormatError("expected an object", field=f"pairs[{i}]")
        out.append((decode_f64(item.get("x"), shape, f"pairs[{i}].x"),
                     decode_f64(item.get("xprime"), shape, f"pairs[{i}].xprime")))
    return out
