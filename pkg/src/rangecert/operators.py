"""Structured bounded operators on l2 with exact essential-spectral calculus.

Representations
---------------
``Dense``
    A finite matrix ``C^n -> C^m``.
``EPBlock``
    Block-diagonal operator on ``l2(N; C^d)``: a finite head of ``d x d``
    blocks followed by an eventually periodic tail, optionally plus a decaying
    term (see :class:`Decay`).
``EPDiag``
    The ``d = 1`` case, with scalar data.
``FiniteRankPerturb``
    ``base + sum_i left_i (x) right_i^*`` with finitely supported vectors.
``DirectSum``
    Orthogonal direct sum of parts.

Vectors in a sequence space are 1-D arrays of flattened coordinates
(``block * d + component``) with implicit zeros past the end; vectors in a
direct-sum space are tuples with one entry per part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernel, tolerances
from .errors import IncompatibleShapes, NotSelfAdjoint, UnsupportedComposition

# A decaying term is dropped from enumeration once its envelope falls below
# this multiple of the tail scale.
_ENVELOPE_FLOOR = 4 * kernel.EPS
_MAX_ENUMERATION = 1_000_000
_CHUNK = 65_536


# ---------------------------------------------------------------- spaces


@dataclass(frozen=True)
class FiniteSpace:
    n: int


@dataclass(frozen=True)
class SeqSpace:
    d: int


@dataclass(frozen=True)
class SumSpace:
    parts: tuple


def _coerce_vec(x, space):
    if isinstance(space, SumSpace):
        if not isinstance(x, (tuple, list)) or len(x) != len(space.parts):
            raise IncompatibleShapes("direct-sum vector needs one entry per part")
        return tuple(_coerce_vec(xi, s) for xi, s in zip(x, space.parts))
    v = np.asarray(x, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    if isinstance(space, FiniteSpace):
        if v.size > space.n:
            raise IncompatibleShapes(f"vector of length {v.size} in C^{space.n}")
        return np.concatenate([v, np.zeros(space.n - v.size, dtype=complex)])
    pad = (-v.size) % space.d
    return np.concatenate([v, np.zeros(pad, dtype=complex)]) if pad else v


def _vdot(r, x):
    """``<x, r>`` (linear in ``x``)."""
    if isinstance(r, tuple):
        return sum((_vdot(ri, xi) for ri, xi in zip(r, x)), 0j)
    n = min(r.size, x.size)
    return complex(np.vdot(r[:n], x[:n]))


def _axpy(a, x, y):
    """``a * x + y``."""
    if isinstance(x, tuple):
        return tuple(_axpy(a, xi, yi) for xi, yi in zip(x, y))
    n = max(x.size, y.size)
    out = np.zeros(n, dtype=complex)
    out[: x.size] += a * x
    out[: y.size] += y
    return out


def _zero_like(x):
    if isinstance(x, tuple):
        return tuple(_zero_like(xi) for xi in x)
    return np.zeros(0, dtype=complex)


def _vec_equal(a, b):
    if isinstance(a, tuple) or isinstance(b, tuple):
        return (
            isinstance(a, tuple)
            and isinstance(b, tuple)
            and len(a) == len(b)
            and all(_vec_equal(x, y) for x, y in zip(a, b))
        )
    return a.shape == b.shape and bool(np.array_equal(a, b))


def split_budget(n: int, weights: Optional[Sequence[float]], parts: int) -> list[int]:
    """Split ``n`` truncation units across ``parts`` proportionally to
    ``weights`` (equal split by default); remainders go to the earliest parts."""
    if weights is None:
        weights = [1.0] * parts
    if len(weights) != parts or any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ValueError("allocation needs one nonnegative weight per part")
    total = float(sum(weights))
    raw = [n * w / total for w in weights]
    out = [int(math.floor(r)) for r in raw]
    rest = n - sum(out)
    order = sorted(range(parts), key=lambda k: (-(raw[k] - out[k]), k))
    for k in order[:rest]:
        out[k] += 1
    return out


def _truncate_vec(x, space, n, allocation=None):
    if isinstance(space, SumSpace):
        budgets = split_budget(n, allocation, len(space.parts))
        return np.concatenate(
            [_truncate_vec(xi, s, b) for xi, s, b in zip(x, space.parts, budgets)]
        )
    size = truncated_dim(space, n)
    out = np.zeros(size, dtype=complex)
    k = min(size, x.size)
    out[:k] = x[:k]
    return out


def truncated_dim(space, n: int, allocation=None) -> int:
    if isinstance(space, FiniteSpace):
        return min(n, space.n)
    if isinstance(space, SeqSpace):
        return n * space.d
    budgets = split_budget(n, allocation, len(space.parts))
    return sum(truncated_dim(s, b) for s, b in zip(space.parts, budgets))


def section_layout(space, n: int, allocation=None):
    """Which coordinates an ``n``-truncation keeps: per direct-sum part, the
    kept dimension.  Two truncations of the same space line up row for row
    exactly when their layouts are equal."""
    if isinstance(space, SumSpace):
        budgets = split_budget(n, allocation, len(space.parts))
        return tuple(truncated_dim(s, b) for s, b in zip(space.parts, budgets))
    return truncated_dim(space, n)


def _support(x) -> int:
    """Index one past the last nonzero coordinate."""
    nz = np.flatnonzero(x)
    return int(nz[-1]) + 1 if nz.size else 0


# ---------------------------------------------------------------- decays


def _lcm(*ns):
    out = 1
    for n in ns:
        out = out * n // math.gcd(out, n)
    return out


class Decay:
    """A block sequence ``D_j -> 0`` added to the periodic tail of an
    :class:`EPBlock` at tail index ``j``.

    Subclasses evaluate ``D_j`` exactly and certify a geometric envelope
    ``||D_j|| <= C * rho**j`` with ``rho < 1``; compactness of the decaying
    term is read off that envelope, never estimated.
    """

    d: int
    period: int

    def at(self, j: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def full(self, j: np.ndarray, periodic: np.ndarray) -> np.ndarray:
        """Periodic part plus decay at tail indices ``j``."""
        return periodic + self.at(j)

    def bound(self) -> tuple[float, float]:
        raise NotImplementedError

    def adjoint(self) -> "Decay":
        raise NotImplementedError

    def shift(self, m: int) -> "Decay":
        raise NotImplementedError

    def hermitian(self) -> Optional[bool]:
        """Structural answer when available, ``None`` to request a numeric check."""
        return None

    def pencil_samples(self, q: int, period: int, ref: float):
        """Decay blocks representative of phase ``q`` far out in the tail,
        used to detect rank growth.  ``None`` requests generic probing."""
        return None

    def envelope(self, j) -> np.ndarray:
        c, rho = self.bound()
        return c * np.power(rho, np.asarray(j, dtype=float))


@dataclass(frozen=True, eq=False)
class GeometricDecay(Decay):
    """``D_j = coeffs[j mod p] * ratio**j``."""

    coeffs: np.ndarray  # (p, d, d)
    ratio: float

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c.reshape(-1, 1, 1)
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] == 0:
            raise ValueError("decay coefficients must be a nonempty list of square blocks")
        if not np.all(np.isfinite(c)):
            raise ValueError("decay coefficients must be finite")
        r = float(self.ratio)
        if not abs(r) < 1.0:
            raise ValueError(f"decay ratio must satisfy |ratio| < 1, got {r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "ratio", r)

    @property
    def d(self):
        return self.coeffs.shape[1]

    @property
    def period(self):
        return self.coeffs.shape[0]

    def at(self, j):
        j = np.asarray(j)
        return self.coeffs[j % self.period] * np.power(self.ratio, j.astype(float))[:, None, None]

    def bound(self):
        c = max(kernel.spectral_norm(b) for b in self.coeffs)
        return c, abs(self.ratio)

    def adjoint(self):
        return GeometricDecay(np.conj(np.swapaxes(self.coeffs, 1, 2)), self.ratio)

    def shift(self, m):
        rolled = np.roll(self.coeffs, -m, axis=0) * self.ratio**m
        return GeometricDecay(rolled, self.ratio)

    def hermitian(self):
        return all(kernel.hermitian_defect(b) <= tolerances.tol(tolerances.HERMITIAN_RTOL)
                   for b in self.coeffs)

    def pencil_samples(self, q, period, ref):
        # rank(T + t c) is constant in t except at finitely many points
        c = self.coeffs[q % self.period]
        cn = kernel.spectral_norm(c)
        if cn == 0.0:
            return [np.zeros_like(c)]
        return [c * (t * max(ref, cn) / cn) for t in (0.0371, 0.211, 0.613)]

    def __eq__(self, other):
        return (
            isinstance(other, GeometricDecay)
            and self.ratio == other.ratio
            and self.coeffs.shape == other.coeffs.shape
            and bool(np.array_equal(self.coeffs, other.coeffs))
        )

    __hash__ = None


def line_projection(x: np.ndarray, mode: str) -> np.ndarray:
    """Orthogonal projections in ``C^2`` onto lines, one per entry of ``x``.

    ``mode="cos"``: the line ``(c, sqrt(1 - c^2))`` with ``c = clip(Re x, 0, 1)``.
    ``mode="graph"``: the line spanned by ``(1, x)``.
    """
    x = np.asarray(x, dtype=complex)
    if mode == "cos":
        c = np.clip(x.real, 0.0, 1.0)
        s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
        v = np.stack([c + 0j, s + 0j], axis=-1)
    elif mode == "graph":
        nrm = np.sqrt(1.0 + np.abs(x) ** 2)
        v = np.stack([1.0 / nrm + 0j, x / nrm], axis=-1)
    else:
        raise ValueError(f"unknown line mode {mode!r}")
    return v[..., :, None] * v[..., None, :].conj()


@dataclass(frozen=True, eq=False)
class LineDecay(Decay):
    """Rank-one projection blocks onto lines driven by a scalar sequence.

    ``source`` is an :class:`EPDiag` without head; its entry at tail index
    ``j + offset`` selects the line (see :func:`line_projection`).  The
    decay is the projection minus the projection at the periodic limit.
    """

    source: "EPDiag"
    mode: str = "cos"
    offset: int = 0

    def __post_init__(self):
        if self.source.head_len:
            raise ValueError("line source must have an empty head")
        if self.mode not in ("cos", "graph"):
            raise ValueError(f"unknown line mode {self.mode!r}")
        if self.mode == "cos":
            vals = self.source.tail_period[:, 0, 0]
            if np.any(np.abs(vals.imag) > 0) or np.any(vals.real < 0) or np.any(vals.real > 1):
                raise ValueError("cosines must be real and lie in [0, 1]")

    d = 2

    @property
    def period(self):
        p = self.source.period
        if self.source.tail_decay is not None:
            p = _lcm(p, self.source.tail_decay.period)
        return p

    def _lines(self, j, limit):
        idx = np.asarray(j) + self.offset
        if limit:
            x = self.source.tail_period[idx % self.source.period, 0, 0]
        else:
            x = self.source.blocks_at(idx)[:, 0, 0]
        return line_projection(x, self.mode)

    def at(self, j):
        return self._lines(j, False) - self._lines(j, True)

    def full(self, j, periodic):
        return self._lines(j, False)

    def bound(self):
        dec = self.source.tail_decay
        if dec is None:
            return 0.0, 0.0
        c, rho = dec.bound()
        c *= rho ** self.offset
        if self.mode == "graph":
            # ||P_a - P_b|| <= |a - b| for lines spanned by (1, a), (1, b)
            return c, rho
        # arccos is 1/2-Hoelder with constant pi / sqrt(2)
        return math.pi / math.sqrt(2.0) * math.sqrt(c), math.sqrt(rho)

    def adjoint(self):
        return self

    def shift(self, m):
        return LineDecay(self.source, self.mode, self.offset + m)

    def hermitian(self):
        return True

    def __eq__(self, other):
        return (
            isinstance(other, LineDecay)
            and self.mode == other.mode
            and self.offset == other.offset
            and self.source == other.source
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ProductDecay(Decay):
    """Decaying part of the blockwise product ``left * right`` starting at the
    absolute block index ``offset`` (at least both heads)."""

    left: "EPBlock"
    right: "EPBlock"
    offset: int

    def __post_init__(self):
        if self.offset < max(self.left.head_len, self.right.head_len):
            raise ValueError("product offset must cover both heads")
        if self.left.d != self.right.d:
            raise IncompatibleShapes("block sizes differ")

    @property
    def d(self):
        return self.left.d

    @property
    def period(self):
        ps = [self.left.period, self.right.period]
        for side in (self.left, self.right):
            if side.tail_decay is not None:
                ps.append(side.tail_decay.period)
        return _lcm(*ps)

    def _parts(self, j):
        i = np.asarray(j) + self.offset
        return self.left.blocks_at(i), self.right.blocks_at(i), i

    def full(self, j, periodic):
        a, b, _ = self._parts(j)
        return a @ b

    def at(self, j):
        a, b, i = self._parts(j)
        return a @ b - self.left.periodic_at(i) @ self.right.periodic_at(i)

    def _side(self, side):
        top = max(kernel.spectral_norm(b) for b in side.tail_period)
        if side.tail_decay is None:
            return top, 0.0, 0.0
        c, rho = side.tail_decay.bound()
        return top, c * rho ** (self.offset - side.head_len), rho

    def bound(self):
        lt, lc, lr = self._side(self.left)
        rt, rc, rr = self._side(self.right)
        return lc * (rt + rc) + lt * rc, max(lr, rr)

    def adjoint(self):
        return ProductDecay(self.right.adjoint(), self.left.adjoint(), self.offset)

    def shift(self, m):
        return ProductDecay(self.left, self.right, self.offset + m)

    def __eq__(self, other):
        return (
            isinstance(other, ProductDecay)
            and self.offset == other.offset
            and self.left == other.left
            and self.right == other.right
        )

    __hash__ = None


def as_decay(obj, d: int = 1) -> Optional[Decay]:
    if obj is None or isinstance(obj, Decay):
        return obj
    coeffs, ratio = obj
    c = np.asarray(coeffs, dtype=complex)
    if d == 1 and c.ndim == 1:
        c = c.reshape(-1, 1, 1)
    return GeometricDecay(c, ratio)


# ---------------------------------------------------------------- operators


class OperatorRep:
    """Base class; concrete subclasses are immutable value types."""

    domain: object
    codomain: object

    def adjoint(self) -> "OperatorRep":
        raise NotImplementedError

    def truncate(self, n: int, allocation=None) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x):
        raise NotImplementedError

    def __hash__(self):
        return id(self)


class Dense(OperatorRep):
    def __init__(self, m):
        m = kernel.as_dense(m).copy()
        m.setflags(write=False)
        self.m = m

    @property
    def domain(self):
        return FiniteSpace(self.m.shape[1])

    @property
    def codomain(self):
        return FiniteSpace(self.m.shape[0])

    @property
    def shape(self):
        return self.m.shape

    def adjoint(self):
        return Dense(self.m.conj().T)

    def truncate(self, n, allocation=None):
        if n < 1:
            raise ValueError("truncation size must be at least 1")
        return np.array(self.m[:n, :n])

    def apply(self, x):
        return self.m @ _coerce_vec(x, self.domain)

    def __eq__(self, other):
        return isinstance(other, Dense) and self.m.shape == other.m.shape and bool(
            np.array_equal(self.m, other.m)
        )

    __hash__ = OperatorRep.__hash__

    def __repr__(self):
        return f"Dense(shape={self.m.shape})"


def _as_blocks(data, d, what):
    arr = np.array(data, dtype=complex)
    if arr.size == 0:
        return np.zeros((0, d, d), dtype=complex)
    if arr.ndim != 3 or arr.shape[1:] != (d, d):
        raise ValueError(f"{what}: expected a list of {d}x{d} blocks, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: entries must be finite")
    return arr


class EPBlock(OperatorRep):
    """Eventually periodic block-diagonal operator on ``l2(N; C^d)``.

    Block ``i`` is ``head[i]`` for ``i < len(head)``; otherwise, with
    ``j = i - len(head)``, it is ``tail_period[j mod p] + D_j`` where ``D_j``
    is the optional decaying term.
    """

    def __init__(self, d, head, tail_period, tail_decay=None):
        d = int(d)
        if d < 1:
            raise ValueError("block size must be positive")
        head = _as_blocks(head, d, "head")
        tail = _as_blocks(tail_period, d, "tail_period")
        if tail.shape[0] == 0:
            raise ValueError("tail_period must be nonempty")
        tail_decay = as_decay(tail_decay, d)
        if tail_decay is not None:
            if tail_decay.d != d:
                raise ValueError("decay block size differs from operator block size")
            if isinstance(tail_decay, GeometricDecay) and tail_decay.period != tail.shape[0]:
                raise ValueError("geometric decay needs one coefficient per tail phase")
        head.setflags(write=False)
        tail.setflags(write=False)
        self.d = d
        self.head = head
        self.tail_period = tail
        self.tail_decay = tail_decay

    @property
    def domain(self):
        return SeqSpace(self.d)

    codomain = domain

    @property
    def head_len(self):
        return self.head.shape[0]

    @property
    def period(self):
        return self.tail_period.shape[0]

    def _new(self, head, tail, decay):
        return EPBlock(self.d, head, tail, decay)

    # evaluation ---------------------------------------------------------

    def periodic_at(self, i) -> np.ndarray:
        """Periodic tail blocks at absolute indices ``i >= head_len``."""
        i = np.asarray(i)
        return self.tail_period[(i - self.head_len) % self.period]

    def blocks_at(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64).reshape(-1)
        out = np.empty((i.size, self.d, self.d), dtype=complex)
        h = self.head_len
        in_head = i < h
        if np.any(in_head):
            out[in_head] = self.head[i[in_head]]
        t = ~in_head
        if np.any(t):
            it = i[t]
            per = self.periodic_at(it)
            out[t] = per if self.tail_decay is None else self.tail_decay.full(it - h, per)
        return out

    def blocks(self, start, stop) -> np.ndarray:
        return self.blocks_at(np.arange(start, stop))

    def truncate(self, n, allocation=None):
        if n < 1:
            raise ValueError("truncation size must be at least 1")
        b = self.blocks(0, n)
        d = self.d
        out = np.zeros((n * d, n * d), dtype=complex)
        rows = np.arange(n)[:, None, None] * d + np.arange(d)[None, :, None]
        cols = np.arange(n)[:, None, None] * d + np.arange(d)[None, None, :]
        out[rows, cols] = b
        return out

    def apply(self, x):
        x = _coerce_vec(x, self.domain)
        nb = x.size // self.d
        if nb == 0:
            return x
        return np.einsum("kij,kj->ki", self.blocks(0, nb), x.reshape(nb, self.d)).reshape(-1)

    # structure ----------------------------------------------------------

    def adjoint(self):
        ct = lambda a: np.conj(np.swapaxes(a, 1, 2))  # noqa: E731
        dec = None if self.tail_decay is None else self.tail_decay.adjoint()
        return self._new(ct(self.head), ct(self.tail_period), dec)

    def shifted(self, k: int) -> "EPBlock":
        """The operator restricted to blocks ``k, k+1, ...``."""
        h = self.head_len
        if k <= h:
            return self._new(self.head[k:], self.tail_period, self.tail_decay)
        m = k - h
        tail = np.roll(self.tail_period, -m, axis=0)
        dec = None if self.tail_decay is None else self.tail_decay.shift(m)
        return self._new(np.zeros((0, self.d, self.d)), tail, dec)

    def is_self_adjoint(self) -> bool:
        rtol = tolerances.tol(tolerances.HERMITIAN_RTOL)
        for b in list(self.head) + list(self.tail_period):
            if kernel.hermitian_defect(b) > rtol:
                return False
        if self.tail_decay is None:
            return True
        flag = self.tail_decay.hermitian()
        if flag is not None:
            return flag
        ref = max(1.0, max(kernel.spectral_norm(b) for b in self.tail_period))
        for chunk in _decay_range(self.tail_decay, ref):
            blocks = self.tail_decay.at(chunk)
            defect = np.max(np.abs(blocks - np.conj(np.swapaxes(blocks, 1, 2))))
            if defect > rtol * ref:
                return False
        return True

    def __eq__(self, other):
        return (
            isinstance(other, EPBlock)
            and type(self) is type(other)
            and self.d == other.d
            and self.head.shape == other.head.shape
            and self.tail_period.shape == other.tail_period.shape
            and bool(np.array_equal(self.head, other.head))
            and bool(np.array_equal(self.tail_period, other.tail_period))
            and self.tail_decay == other.tail_decay
        )

    __hash__ = OperatorRep.__hash__

    def __repr__(self):
        return (f"{type(self).__name__}(d={self.d}, head={self.head_len}, "
                f"period={self.period}, decay={type(self.tail_decay).__name__})")


class EPDiag(EPBlock):
    """Eventually periodic diagonal operator on ``l2(N)``.

    Entry ``i`` is ``head[i]`` for ``i < len(head)``, otherwise
    ``tail_period[j mod p] + coeffs[j mod p] * ratio**j`` with
    ``j = i - len(head)``; ``tail_decay`` is ``(coeffs, ratio)`` or any
    :class:`Decay` with ``d = 1``.
    """

    def __init__(self, head=(), tail_period=(0.0,), tail_decay=None):
        head = np.asarray(head, dtype=complex).reshape(-1, 1, 1)
        tail = np.asarray(tail_period, dtype=complex).reshape(-1, 1, 1)
        super().__init__(1, head, tail, tail_decay)

    def _new(self, head, tail, decay):
        return EPDiag(np.asarray(head).reshape(-1), np.asarray(tail).reshape(-1), decay)

    @classmethod
    def from_block(cls, b: EPBlock) -> "EPDiag":
        if b.d != 1:
            raise ValueError("only d = 1 block operators are diagonal")
        return cls(b.head.reshape(-1), b.tail_period.reshape(-1), b.tail_decay)

    def entries(self, n: int) -> np.ndarray:
        return self.blocks(0, n)[:, 0, 0]

    @property
    def head_values(self):
        return self.head[:, 0, 0]

    @property
    def tail_values(self):
        return self.tail_period[:, 0, 0]


def _decay_range(decay: Decay, ref: float):
    """Chunks of tail indices until the envelope drops below the float floor."""
    c, rho = decay.bound()
    stop = _enumeration_length(c, rho, ref)
    for start in range(0, stop, _CHUNK):
        yield np.arange(start, min(stop, start + _CHUNK))


def _enumeration_length(c: float, rho: float, ref: float) -> int:
    floor = _ENVELOPE_FLOOR * ref
    if c <= floor:
        return 0
    if rho == 0.0:
        return 1
    n = int(math.ceil(math.log(floor / c) / math.log(rho))) + 1
    return min(max(n, 1), _MAX_ENUMERATION)


def enumeration_capped(decay: Decay, ref: float) -> bool:
    c, rho = decay.bound()
    if c <= _ENVELOPE_FLOOR * ref or rho == 0.0:
        return False
    return math.ceil(math.log(_ENVELOPE_FLOOR * ref / c) / math.log(rho)) + 1 > _MAX_ENUMERATION


class FiniteRankPerturb(OperatorRep):
    """``base + sum_i left_i right_i^*`` with finitely supported vectors."""

    def __init__(self, base: OperatorRep, left, right):
        left, right = list(left), list(right)
        if len(left) != len(right):
            raise ValueError("left and right families must have equal cardinality")
        self.base = base
        self.left = tuple(_coerce_vec(v, base.codomain) for v in left)
        self.right = tuple(_coerce_vec(v, base.domain) for v in right)

    @property
    def domain(self):
        return self.base.domain

    @property
    def codomain(self):
        return self.base.codomain

    @property
    def rank_bound(self):
        return len(self.left)

    def adjoint(self):
        return FiniteRankPerturb(self.base.adjoint(), self.right, self.left)

    def truncate(self, n, allocation=None):
        out = self.base.truncate(n, allocation)
        for lv, rv in zip(self.left, self.right):
            lt = _truncate_vec(lv, self.codomain, n, allocation)
            rt = _truncate_vec(rv, self.domain, n, allocation)
            out = out + np.outer(lt, rt.conj())
        return out

    def apply(self, x):
        x = _coerce_vec(x, self.domain)
        y = self.base.apply(x)
        for lv, rv in zip(self.left, self.right):
            y = _axpy(_vdot(rv, x), lv, y)
        return y

    def __eq__(self, other):
        return (
            isinstance(other, FiniteRankPerturb)
            and self.base == other.base
            and len(self.left) == len(other.left)
            and all(_vec_equal(a, b) for a, b in zip(self.left, other.left))
            and all(_vec_equal(a, b) for a, b in zip(self.right, other.right))
        )

    __hash__ = OperatorRep.__hash__

    def __repr__(self):
        return f"FiniteRankPerturb(base={self.base!r}, rank<={len(self.left)})"


class DirectSum(OperatorRep):
    def __init__(self, parts):
        parts = tuple(parts)
        if not parts:
            raise ValueError("direct sum needs at least one part")
        self.parts = parts

    @property
    def domain(self):
        return SumSpace(tuple(p.domain for p in self.parts))

    @property
    def codomain(self):
        return SumSpace(tuple(p.codomain for p in self.parts))

    def adjoint(self):
        return DirectSum(p.adjoint() for p in self.parts)

    def truncate(self, n, allocation=None):
        budgets = split_budget(n, allocation, len(self.parts))
        mats = [p.truncate(b) if b > 0 else None for p, b in zip(self.parts, budgets)]
        rows = [0 if m is None else m.shape[0] for m in mats]
        cols = [0 if m is None else m.shape[1] for m in mats]
        out = np.zeros((sum(rows), sum(cols)), dtype=complex)
        r = c = 0
        for m, nr, nc in zip(mats, rows, cols):
            if m is not None:
                out[r:r + nr, c:c + nc] = m
            r, c = r + nr, c + nc
        return out

    def apply(self, x):
        x = _coerce_vec(x, self.domain)
        return tuple(p.apply(xi) for p, xi in zip(self.parts, x))

    def __eq__(self, other):
        return (
            isinstance(other, DirectSum)
            and len(self.parts) == len(other.parts)
            and all(a == b for a, b in zip(self.parts, other.parts))
        )

    __hash__ = OperatorRep.__hash__

    def __repr__(self):
        return f"DirectSum({list(self.parts)!r})"


def as_rep(a) -> OperatorRep:
    return a if isinstance(a, OperatorRep) else Dense(a)


# ---------------------------------------------------------------- operations


def adjoint(a) -> OperatorRep:
    return as_rep(a).adjoint()


def truncate(a, n: int, allocation=None) -> np.ndarray:
    """Leading principal section in the canonical basis (``n`` blocks for
    block operators, ``n`` units split by ``allocation`` for direct sums)."""
    return as_rep(a).truncate(n, allocation)


def compose(a, b) -> OperatorRep:
    """Exact representation of the product ``a b``."""
    a, b = as_rep(a), as_rep(b)
    if a.domain != b.codomain:
        raise IncompatibleShapes(f"cannot compose {a!r} after {b!r}: "
                                 f"{a.domain} != {b.codomain}")
    if isinstance(a, FiniteRankPerturb) or isinstance(b, FiniteRankPerturb):
        return _compose_frp(a, b)
    if isinstance(a, Dense) and isinstance(b, Dense):
        return Dense(a.m @ b.m)
    if isinstance(a, EPBlock) and isinstance(b, EPBlock):
        return _compose_blocks(a, b)
    if isinstance(a, DirectSum) and isinstance(b, DirectSum) and len(a.parts) == len(b.parts):
        return DirectSum(compose(x, y) for x, y in zip(a.parts, b.parts))
    raise UnsupportedComposition(f"no exact product for {type(a).__name__} and {type(b).__name__}")


def _compose_blocks(a: EPBlock, b: EPBlock) -> EPBlock:
    h = max(a.head_len, b.head_len)
    period = _lcm(a.period, b.period)
    head = a.blocks(0, h) @ b.blocks(0, h)
    idx = np.arange(h, h + period)
    tail = a.periodic_at(idx) @ b.periodic_at(idx)
    decay = None
    if a.tail_decay is not None or b.tail_decay is not None:
        decay = ProductDecay(a, b, h)
    if isinstance(a, EPDiag) and isinstance(b, EPDiag):
        return EPDiag(head.reshape(-1), tail.reshape(-1), decay)
    return EPBlock(a.d, head, tail, decay)


def _split_frp(a):
    if isinstance(a, FiniteRankPerturb):
        base, ls, rs = _split_frp(a.base)
        return base, ls + list(a.left), rs + list(a.right)
    return a, [], []


def _compose_frp(a, b):
    # (A0 + sum l r*) B = A0 B0 + A0 (B - B0) + sum l (B* r)*
    a0, al, ar = _split_frp(a)
    b0, bl, br = _split_frp(b)
    base = compose(a0, b0)
    lefts, rights = [], []
    bstar = b.adjoint()
    for lv, rv in zip(al, ar):
        lefts.append(lv)
        rights.append(bstar.apply(rv))
    for lv, rv in zip(bl, br):
        lefts.append(a0.apply(lv))
        rights.append(rv)
    return FiniteRankPerturb(base, lefts, rights)


def scaled(a, c: complex) -> OperatorRep:
    """``c * a``."""
    a = as_rep(a)
    if isinstance(a, Dense):
        return Dense(c * a.m)
    if isinstance(a, DirectSum):
        return DirectSum(scaled(p, c) for p in a.parts)
    if isinstance(a, FiniteRankPerturb):
        return FiniteRankPerturb(scaled(a.base, c), [_axpy(c, l, _zero_like(l)) for l in a.left],
                                 a.right)
    dec = a.tail_decay
    if dec is None or isinstance(dec, GeometricDecay):
        if dec is not None:
            dec = GeometricDecay(c * dec.coeffs, dec.ratio)
        return a._new(c * a.head, c * a.tail_period, dec)
    eye = np.eye(a.d)[None] * c
    ident = EPDiag((), (c,)) if isinstance(a, EPDiag) else EPBlock(a.d, (), eye)
    return compose(a, ident)


# ---------------------------------------------------------------- normal form


def _hoist(a):
    """Write ``a`` as (perturbation-free base, lefts, rights)."""
    if isinstance(a, FiniteRankPerturb):
        base, ls, rs = _hoist(a.base)
        return base, ls + list(a.left), rs + list(a.right)
    if isinstance(a, DirectSum):
        bases, ls, rs = [], [], []
        hoisted = [_hoist(p) for p in a.parts]
        for k, (base, pl, pr) in enumerate(hoisted):
            bases.append(base)
            for lv, rv in zip(pl, pr):
                ls.append(tuple(lv if i == k else _zero_like_space(p.codomain)
                                for i, p in enumerate(a.parts)))
                rs.append(tuple(rv if i == k else _zero_like_space(p.domain)
                                for i, p in enumerate(a.parts)))
        return DirectSum(bases), ls, rs
    return a, [], []


def _zero_like_space(space):
    if isinstance(space, SumSpace):
        return tuple(_zero_like_space(s) for s in space.parts)
    return _coerce_vec(np.zeros(0), space)


def _leaves(a):
    if isinstance(a, DirectSum):
        out = []
        for p in a.parts:
            out.extend(_leaves(p))
        return out
    return [a]


def _flatten_vec(x):
    if isinstance(x, tuple):
        out = []
        for xi in x:
            out.extend(_flatten_vec(xi))
        return out
    return [x]


def pieces(a) -> list:
    """Unitarily equivalent orthogonal decomposition into ``Dense`` and
    ``EPBlock`` pieces, each mapping its own domain block to its own
    codomain block.  Finite-rank perturbations are absorbed into a single
    dense piece covering the leading blocks they touch."""
    base, ls, rs = _hoist(as_rep(a))
    leaves = _leaves(base)
    if not ls:
        return leaves
    flat_l = [_flatten_vec(v) for v in ls]
    flat_r = [_flatten_vec(v) for v in rs]
    row_sections, col_sections, heads, tails = [], [], [], []
    for k, leaf in enumerate(leaves):
        if isinstance(leaf, Dense):
            heads.append(leaf.m)
            row_sections.append(leaf.m.shape[0])
            col_sections.append(leaf.m.shape[1])
            continue
        reach = max([_support(v[k]) for v in flat_l] + [_support(v[k]) for v in flat_r])
        nb = -(-reach // leaf.d)
        if nb:
            heads.append(leaf.truncate(nb))
        else:
            heads.append(np.zeros((0, 0), dtype=complex))
        row_sections.append(nb * leaf.d)
        col_sections.append(nb * leaf.d)
        tails.append(leaf.shifted(nb))
    m = np.zeros((sum(row_sections), sum(col_sections)), dtype=complex)
    r = c = 0
    for h, nr, nc in zip(heads, row_sections, col_sections):
        m[r:r + nr, c:c + nc] = h
        r, c = r + nr, c + nc

    def gather(vecs, sections):
        out = np.zeros(sum(sections), dtype=complex)
        pos = 0
        for v, n in zip(vecs, sections):
            k = min(n, v.size)
            out[pos:pos + k] = v[:k]
            pos += n
        return out

    for lv, rv in zip(flat_l, flat_r):
        m += np.outer(gather(lv, row_sections), gather(rv, col_sections).conj())
    return [Dense(m)] + tails


# ---------------------------------------------------------------- essential


@dataclass(frozen=True)
class EssentialSpectrumSet:
    """Essential spectrum of a self-adjoint operator as a finite point set.

    ``finite_dimensional`` marks the finite-dimensional case, whose
    essential spectrum is empty.
    """

    points: tuple
    finite_dimensional: bool = False

    @property
    def min(self) -> Optional[float]:
        return self.points[0] if self.points else None

    def __contains__(self, x):
        return any(abs(x - p) <= tolerances.DEDUP for p in self.points)


def _dedup(values) -> tuple:
    vals = sorted(float(v) for v in values)
    out = []
    for v in vals:
        if not out or v - out[-1] > tolerances.DEDUP:
            out.append(v)
    return tuple(out)


def is_self_adjoint(a) -> bool:
    a = as_rep(a)
    if a.domain != a.codomain:
        return False
    for p in pieces(a):
        if isinstance(p, Dense):
            if p.m.shape[0] != p.m.shape[1]:
                return False
            if kernel.hermitian_defect(p.m) > tolerances.tol(tolerances.HERMITIAN_RTOL):
                return False
        elif not p.is_self_adjoint():
            return False
    return True


def essential_spectrum(c) -> EssentialSpectrumSet:
    c = as_rep(c)
    if not is_self_adjoint(c):
        raise NotSelfAdjoint(f"{c!r} is not self-adjoint")
    return _ess_points(c)


def _ess_points(c) -> EssentialSpectrumSet:
    if isinstance(c, Dense):
        return EssentialSpectrumSet((), True)
    if isinstance(c, FiniteRankPerturb):
        return _ess_points(c.base)
    if isinstance(c, DirectSum):
        sets = [_ess_points(p) for p in c.parts]
        pts = [x for s in sets for x in s.points]
        return EssentialSpectrumSet(_dedup(pts), all(s.finite_dimensional for s in sets))
    vals = []
    for b in c.tail_period:
        vals.extend(kernel.eigvalsh(b))
    return EssentialSpectrumSet(_dedup(vals))


def is_compact(a) -> bool:
    a = as_rep(a)
    if isinstance(a, Dense):
        return True
    if isinstance(a, FiniteRankPerturb):
        return is_compact(a.base)
    if isinstance(a, DirectSum):
        return all(is_compact(p) for p in a.parts)
    return not np.any(a.tail_period)


def tail_norm(a: EPBlock) -> float:
    return max(kernel.spectral_norm(b) for b in a.tail_period)
