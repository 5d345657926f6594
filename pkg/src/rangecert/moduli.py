"""Reduced minimum modulus, its essential version, essential norms and
``m_e``, computed exactly on the structured classes of
:mod:`rangecert.operators` and with finite-dimensional conventions on dense
matrices.

Everything here works on the normal form :func:`operators.pieces`: an
orthogonal sum of dense pieces and eventually periodic block pieces, over
which every functional is a min or a max.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernel, tolerances
from .errors import NotCompactWitness, NotSelfAdjoint
from .operators import (
    Dense,
    DirectSum,
    EPBlock,
    EPDiag,
    _lcm,
    _decay_range,
    as_rep,
    enumeration_capped,
    essential_spectrum,
    is_compact,
    is_self_adjoint,
    pieces,
    split_budget,
    tail_norm,
    truncate,
)


@functools.total_ordering
class ExtendedReal:
    """A real number or ``+inf``, kept distinct from float sentinels.

    Moduli are nonnegative; ``m_e`` of a self-adjoint operator may be
    negative, so the type itself only requires a finite real when not
    infinite.
    """

    __slots__ = ("value", "infinite")

    def __init__(self, value: float = 0.0, infinite: bool = False):
        if infinite:
            value = math.inf
        else:
            value = float(value)
            if math.isinf(value) and value > 0:
                infinite = True
            elif not math.isfinite(value):
                raise ValueError(f"not an extended real: {value!r}")
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "infinite", infinite)

    def __setattr__(self, name, value):
        raise AttributeError("ExtendedReal is immutable")

    @property
    def is_finite(self):
        return not self.infinite

    def __float__(self):
        return self.value

    def _other(self, other):
        if isinstance(other, ExtendedReal):
            return other.value
        return float(other)

    def __eq__(self, other):
        try:
            return self.value == self._other(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other):
        return self.value < self._other(other)

    def __hash__(self):
        return hash(self.value)

    def __repr__(self):
        return "ExtendedReal(inf)" if self.infinite else f"ExtendedReal({self.value!r})"

    def __str__(self):
        return "inf" if self.infinite else repr(self.value)

    def to_json(self):
        return "inf" if self.infinite else self.value

    @classmethod
    def from_json(cls, obj):
        if obj == "inf":
            return INF
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise ValueError(f"expected a number or 'inf', got {obj!r}")
        return cls(obj)


INF = ExtendedReal(infinite=True)


def ext(x) -> ExtendedReal:
    return x if isinstance(x, ExtendedReal) else ExtendedReal(x)


def ext_min(values) -> ExtendedReal:
    out = INF
    for v in values:
        v = ext(v)
        if v < out:
            out = v
    return out


@dataclass(frozen=True)
class Modulus:
    """A reduced minimum modulus and the closedness it implies."""

    value: ExtendedReal
    range_closed: bool
    estimate_only: bool = False


@dataclass(frozen=True)
class ModuliReport:
    gamma: ExtendedReal
    gamma_e: ExtendedReal
    ess_norm: float
    range_closed: bool
    cokernel_finite: bool
    estimate_only: bool = False

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma.to_json(),
            "gamma_e": self.gamma_e.to_json(),
            "ess_norm": self.ess_norm,
            "range_closed": self.range_closed,
            "cokernel_finite": self.cokernel_finite,
            "estimate_only": self.estimate_only,
        }

    @classmethod
    def from_json(cls, obj) -> "ModuliReport":
        return cls(
            ExtendedReal.from_json(obj["gamma"]),
            ExtendedReal.from_json(obj["gamma_e"]),
            float(obj["ess_norm"]),
            bool(obj["range_closed"]),
            bool(obj["cokernel_finite"]),
            bool(obj.get("estimate_only", False)),
        )


# ---------------------------------------------------------------- block analysis


def _singular_values(blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Singular values of stacked blocks and the mask of the nonzero ones.

    Scalars are zero only when exactly zero; larger blocks use the scale-aware
    rank tolerance of each block.
    """
    if blocks.shape[0] == 0:
        return np.zeros((0, blocks.shape[1])), np.zeros((0, blocks.shape[1]), dtype=bool)
    s = np.linalg.svd(blocks, compute_uv=False)
    d = blocks.shape[1]
    if d == 1:
        return s, s > 0
    return s, s > tolerances.tol(d * kernel.EPS) * s[:, :1]


def _min_nonzero(blocks: np.ndarray) -> Optional[float]:
    s, mask = _singular_values(blocks)
    return float(s[mask].min()) if mask.any() else None


@dataclass(frozen=True)
class _Phase:
    limit: np.ndarray
    rank: int
    eventual_rank: int
    min_nonzero: Optional[float]


def _probe_indices(decay, q, period, ref):
    c, rho = decay.bound()
    target = 1e-2 * ref
    if c <= target or rho == 0.0:
        jmin = 0
    else:
        jmin = math.ceil(math.log(target / c) / math.log(rho))
    m0 = max(0, -(-(jmin - q) // period))
    return np.array([q + period * (m0 + k) for k in range(3)])


def _phases(ep: EPBlock) -> list:
    dec = ep.tail_decay
    period = ep.period if dec is None else _lcm(ep.period, dec.period)
    ref = max(1.0, tail_norm(ep))
    out = []
    for q in range(period):
        t = ep.tail_period[q % ep.period]
        s, mask = _singular_values(t[None])
        rank = int(mask.sum())
        mn = float(s[mask].min()) if rank else None
        eventual = rank
        if dec is not None and dec.bound()[1] > 0.0 and dec.bound()[0] > 0.0:
            samples = dec.pencil_samples(q, period, ref)
            if samples is not None:
                blocks = t[None] + np.asarray(samples)
            else:
                j = _probe_indices(dec, q, period, ref)
                blocks = dec.full(j, np.broadcast_to(t, (j.size,) + t.shape))
            _, m = _singular_values(np.asarray(blocks))
            eventual = max(rank, int(m.sum(axis=1).max()))
        out.append(_Phase(t, rank, eventual, mn))
    return out


def _block_gamma(ep: EPBlock) -> Modulus:
    phases = _phases(ep)
    if any(ph.eventual_rank > ph.rank for ph in phases):
        # nonzero singular values accumulate at 0 without reaching it
        return Modulus(ExtendedReal(0.0), False)
    cands = [_min_nonzero(ep.head)]
    cands.extend(ph.min_nonzero for ph in phases)
    estimate = False
    if ep.tail_decay is not None:
        ref = max(1.0, tail_norm(ep))
        for chunk in _decay_range(ep.tail_decay, ref):
            cands.append(_min_nonzero(ep.blocks_at(ep.head_len + chunk)))
        estimate = enumeration_capped(ep.tail_decay, ref)
    value = ext_min(c for c in cands if c is not None)
    return Modulus(value, value > 0, estimate)


def _dense_gamma(m: np.ndarray) -> Modulus:
    s = kernel.svd_values(m)
    if s.size == 0:
        return Modulus(INF, True)
    nz = s[s > kernel.default_rank_tol(m, float(s[0]))]
    if nz.size == 0:
        return Modulus(INF, True)
    v = ExtendedReal(float(nz[-1]))
    return Modulus(v, v > 0)


def _block_gamma_e(ep: EPBlock) -> tuple[ExtendedReal, bool]:
    """Essential reduced minimum modulus and whether the cokernel is finite."""
    phases = _phases(ep)
    if all(ph.eventual_rank == 0 for ph in phases):
        return INF, True
    if any(ph.eventual_rank > ph.rank for ph in phases):
        return ExtendedReal(0.0), False
    return ext_min(ph.min_nonzero for ph in phases if ph.rank), False


# ---------------------------------------------------------------- public API


def gamma(a) -> Modulus:
    """Reduced minimum modulus: the infimum of ``||Ax||`` over unit vectors
    orthogonal to ``Ker(A)``; ``+inf`` for the zero operator.  The range is
    closed exactly when the value is positive."""
    parts = pieces(as_rep(a))
    results = [_dense_gamma(p.m) if isinstance(p, Dense) else _block_gamma(p) for p in parts]
    value = ext_min(r.value for r in results)
    return Modulus(value, value > 0, any(r.estimate_only for r in results))


def gamma_e(a) -> ExtendedReal:
    """Essential reduced minimum modulus, ``sqrt(min sigma_e(B))`` with
    ``B = A*A`` on the orthogonal complement of the kernel; ``+inf`` when
    that complement is finite-dimensional."""
    return _gamma_e_and_cokernel(a)[0]


def _gamma_e_and_cokernel(a):
    value, finite = INF, True
    for p in pieces(as_rep(a)):
        if isinstance(p, Dense):
            continue
        v, f = _block_gamma_e(p)
        value = ext_min([value, v])
        finite = finite and f
    return value, finite


def essential_norm(a) -> float:
    """Distance to the compact operators: the largest tail block norm."""
    a = as_rep(a)
    if isinstance(a, Dense):
        return 0.0
    if isinstance(a, DirectSum):
        return max(essential_norm(p) for p in a.parts)
    if isinstance(a, EPBlock):
        return tail_norm(a)
    return essential_norm(a.base)


def m_e(c) -> ExtendedReal:
    """Supremum of ``m`` with ``C + K >= m I`` for some compact self-adjoint
    ``K``: the bottom of the essential spectrum, ``+inf`` in finite
    dimension."""
    spec = essential_spectrum(c)
    if not spec.points:
        return INF
    return ExtendedReal(spec.points[0])


def moduli_report(a) -> ModuliReport:
    g = gamma(a)
    ge, finite = _gamma_e_and_cokernel(a)
    return ModuliReport(g.value, ge, essential_norm(a), g.range_closed, finite, g.estimate_only)


# ---------------------------------------------------------------- truncations


def cokernel_basis(a, n: int, allocation=None) -> np.ndarray:
    """Orthonormal columns spanning the truncated ``H_1 (-) Ker(A)``.

    Block operators are handled blockwise (structural zeros for scalars);
    everything else uses the numerical row space of the truncation.
    """
    a = as_rep(a)
    if isinstance(a, EPBlock):
        d = a.d
        blocks = a.blocks(0, n)
        if d == 1:
            nz = np.flatnonzero(blocks[:, 0, 0])
            q = np.zeros((n, nz.size), dtype=complex)
            q[nz, np.arange(nz.size)] = 1.0
            return q
        _, s, vh = np.linalg.svd(blocks)
        mask = s > tolerances.tol(d * kernel.EPS) * s[:, :1]
        cols = []
        for k in range(n):
            for i in np.flatnonzero(mask[k]):
                v = np.zeros(n * d, dtype=complex)
                v[k * d:(k + 1) * d] = vh[k, i].conj()
                cols.append(v)
        if not cols:
            return np.zeros((n * d, 0), dtype=complex)
        return np.stack(cols, axis=1)
    if isinstance(a, DirectSum):
        budgets = split_budget(n, allocation, len(a.parts))
        bases = [cokernel_basis(p, b) if b > 0 else None for p, b in zip(a.parts, budgets)]
        rows = [0 if q is None else q.shape[0] for q in bases]
        cols = [0 if q is None else q.shape[1] for q in bases]
        out = np.zeros((sum(rows), sum(cols)), dtype=complex)
        r = c = 0
        for q, nr, nc in zip(bases, rows, cols):
            if q is not None:
                out[r:r + nr, c:c + nc] = q
            r, c = r + nr, c + nc
        return out
    return kernel.row_space_basis(truncate(a, n, allocation))


@dataclass(frozen=True)
class WitnessResult:
    passed: bool
    margin: float
    lambda_min: float


def gamma_e_witness_check(a, t, gamma_value: float, n: int) -> WitnessResult:
    """Check ``||Ax||^2 + ||Tx||^2 >= gamma^2 ||x||^2`` on the truncated
    cokernel of ``A`` for a compact witness ``T``.  A pass is evidence that
    ``gamma_e(A) >= gamma``."""
    a, t = as_rep(a), as_rep(t)
    if not is_compact(t):
        raise NotCompactWitness("witness operator must be compact")
    if gamma_value < 0:
        raise ValueError("gamma must be nonnegative")
    an = truncate(a, n)
    tn = truncate(t, n)
    if tn.shape[1] != an.shape[1]:
        raise ValueError("witness and operator have different domains")
    q = cokernel_basis(a, n)
    if q.shape[1] == 0:
        return WitnessResult(True, math.inf, math.inf)
    s = q.conj().T @ (an.conj().T @ an + tn.conj().T @ tn) @ q
    lam = kernel.eigh(s, vectors=False).min
    margin = lam - gamma_value**2
    slack = tolerances.tol(tolerances.EIG_RESIDUAL) * max(1.0, kernel.spectral_norm(s))
    return WitnessResult(margin >= -slack, margin, lam)


def m_e_bruteforce_oracle(c, rank_budget: int, n: int) -> float:
    """Largest ``lambda_min`` of the ``n``-section of a self-adjoint diagonal
    operator over perturbations of rank at most ``rank_budget``.

    For a diagonal matrix the optimum lifts the ``rank_budget`` smallest
    entries, leaving the next order statistic.
    """
    c = as_rep(c)
    if not isinstance(c, EPDiag):
        raise TypeError("brute-force oracle is defined for diagonal operators only")
    if not is_self_adjoint(c):
        raise NotSelfAdjoint("oracle needs real diagonal data")
    if not 0 <= rank_budget < n:
        raise ValueError("rank budget must lie in [0, n)")
    vals = np.sort(c.entries(n).real)
    return float(vals[rank_budget])
