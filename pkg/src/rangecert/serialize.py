"""JSON encoding of operator representations.

Complex scalars are a JSON number (real) or ``[re, im]``.  Operators are
objects tagged by ``"type"``; decays by ``"kind"``.
"""

from __future__ import annotations

import numpy as np

from .operators import (
    Decay,
    Dense,
    DirectSum,
    EPBlock,
    EPDiag,
    FiniteRankPerturb,
    GeometricDecay,
    LineDecay,
    OperatorRep,
    ProductDecay,
)


def encode_scalar(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def decode_scalar(obj) -> complex:
    if isinstance(obj, bool):
        raise ValueError("booleans are not scalars")
    if isinstance(obj, (int, float)):
        return complex(obj)
    if isinstance(obj, list) and len(obj) == 2 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in obj
    ):
        return complex(obj[0], obj[1])
    raise ValueError(f"expected a number or [re, im], got {obj!r}")


def encode_array(a):
    a = np.asarray(a)
    if a.ndim == 0:
        return encode_scalar(a)
    return [encode_array(x) for x in a]


def decode_array(obj, ndim: int) -> np.ndarray:
    if ndim == 0:
        return np.asarray(decode_scalar(obj))
    if not isinstance(obj, list):
        raise ValueError(f"expected a nested list of depth {ndim}")
    items = [decode_array(x, ndim - 1) for x in obj]
    if not items:
        return np.zeros((0,) * ndim, dtype=complex)
    return np.array(items, dtype=complex)


def _encode_vec(v):
    if isinstance(v, tuple):
        return {"parts": [_encode_vec(x) for x in v]}
    return encode_array(v)


def _decode_vec(obj):
    if isinstance(obj, dict):
        return tuple(_decode_vec(x) for x in obj["parts"])
    return decode_array(obj, 1)


def encode_decay(d: Decay) -> dict:
    if isinstance(d, GeometricDecay):
        return {"kind": "geometric", "coeffs": encode_array(d.coeffs), "ratio": d.ratio}
    if isinstance(d, LineDecay):
        return {"kind": "line", "source": encode_op(d.source), "mode": d.mode,
                "offset": d.offset}
    if isinstance(d, ProductDecay):
        return {"kind": "product", "left": encode_op(d.left), "right": encode_op(d.right),
                "offset": d.offset}
    raise TypeError(f"cannot encode decay {type(d).__name__}")


def decode_decay(obj, d: int):
    if obj is None:
        return None
    kind = obj.get("kind")
    if kind == "geometric":
        c = obj["coeffs"]
        nd = 1 if d == 1 and all(not isinstance(x, list) or len(x) == 2 and not isinstance(x[0], list)
                                 for x in c) else 3
        return GeometricDecay(decode_array(c, nd), float(obj["ratio"]))
    if kind == "line":
        src = decode_op(obj["source"])
        if not isinstance(src, EPDiag):
            raise ValueError("line decay source must be ep_diag")
        return LineDecay(src, obj.get("mode", "cos"), int(obj.get("offset", 0)))
    if kind == "product":
        return ProductDecay(decode_op(obj["left"]), decode_op(obj["right"]), int(obj["offset"]))
    raise ValueError(f"unknown decay kind {kind!r}")


def encode_op(a: OperatorRep) -> dict:
    if isinstance(a, Dense):
        return {"type": "dense", "data": encode_array(a.m)}
    if isinstance(a, EPDiag):
        out = {"type": "ep_diag", "head": encode_array(a.head_values),
               "tail": encode_array(a.tail_values)}
    elif isinstance(a, EPBlock):
        out = {"type": "ep_block", "d": a.d, "head": encode_array(a.head),
               "tail": encode_array(a.tail_period)}
    elif isinstance(a, FiniteRankPerturb):
        return {"type": "finite_rank_perturb", "base": encode_op(a.base),
                "left": [_encode_vec(v) for v in a.left],
                "right": [_encode_vec(v) for v in a.right]}
    elif isinstance(a, DirectSum):
        return {"type": "direct_sum", "parts": [encode_op(p) for p in a.parts]}
    else:
        raise TypeError(f"cannot encode operator {type(a).__name__}")
    if a.tail_decay is not None:
        out["decay"] = encode_decay(a.tail_decay)
    return out


def decode_op(obj) -> OperatorRep:
    if not isinstance(obj, dict):
        raise ValueError("operator must be a JSON object")
    kind = obj.get("type")
    if kind == "dense":
        return Dense(decode_array(obj["data"], 2))
    if kind == "ep_diag":
        return EPDiag(decode_array(obj.get("head", []), 1), decode_array(obj["tail"], 1),
                      decode_decay(obj.get("decay"), 1))
    if kind == "ep_block":
        d = int(obj["d"])
        head = decode_array(obj.get("head", []), 3)
        return EPBlock(d, head.reshape(-1, d, d), decode_array(obj["tail"], 3),
                       decode_decay(obj.get("decay"), d))
    if kind == "finite_rank_perturb":
        return FiniteRankPerturb(decode_op(obj["base"]),
                                 [_decode_vec(v) for v in obj.get("left", [])],
                                 [_decode_vec(v) for v in obj.get("right", [])])
    if kind == "direct_sum":
        return DirectSum(decode_op(p) for p in obj["parts"])
    raise ValueError(f"unknown operator type {kind!r}")
