"""Closed-form model families with analytic oracles, and a portable
pseudorandom generator for fuzzing.

Two-subspace models live on ``l2(N; C^2)``: in block ``k`` the first
subspace is the line ``e_1`` and the second is a line at angle ``theta_k``
to it, so every quantity of interest reduces to ``2 x 2`` algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .certify import SystemSpec
from .moduli import INF, ExtendedReal
from .operators import EPBlock, EPDiag, LineDecay, _lcm, line_projection

E11 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class ModelSystem:
    system: SystemSpec
    oracle: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AngleModel:
    """Cosines of the per-block angles: a head, a periodic tail, and an
    optional decay ``(coeffs, ratio)`` added as ``coeffs[j mod p] * ratio**j``
    at tail index ``j`` (the sum is clipped to ``[0, 1]``)."""

    head_cos: tuple = ()
    tail_cos_period: tuple = (0.0,)
    decay: Optional[tuple] = None

    def __post_init__(self):
        head = tuple(float(c) for c in self.head_cos)
        tail = tuple(float(c) for c in self.tail_cos_period)
        if not tail:
            raise ValueError("tail_cos_period must be nonempty")
        if any(not 0.0 <= c <= 1.0 for c in head + tail):
            raise ValueError("cosines must lie in [0, 1]")
        object.__setattr__(self, "head_cos", head)
        object.__setattr__(self, "tail_cos_period", tail)
        if self.decay is not None:
            coeffs, ratio = self.decay
            coeffs = tuple(float(c) for c in coeffs)
            if len(coeffs) != len(tail):
                raise ValueError("decay needs one coefficient per tail phase")
            if not abs(ratio) < 1:
                raise ValueError("decay ratio must satisfy |ratio| < 1")
            object.__setattr__(self, "decay", (coeffs, float(ratio)))

    def source(self) -> EPDiag:
        """The cosine sequence as a diagonal operator."""
        return EPDiag(self.head_cos, self.tail_cos_period, self.decay)

    def cosines(self, n: int) -> np.ndarray:
        return np.clip(self.source().entries(n).real, 0.0, 1.0)


def _line_operator(seq: EPDiag, mode: str) -> EPBlock:
    head = line_projection(seq.head_values, mode)
    tail = line_projection(seq.tail_values, mode)
    decay = None
    if seq.tail_decay is not None:
        decay = LineDecay(EPDiag((), seq.tail_values, seq.tail_decay), mode)
    return EPBlock(2, head, tail, decay)


def _pair_oracle(cos_fn, ess_cos: float) -> dict:
    def gram_eigs(n):
        c = cos_fn(n)
        return np.sort(np.concatenate([1.0 - c, 1.0 + c]))

    return {
        "ess_cos": ess_cos,
        "eps": ess_cos,
        "gamma": (1.0, 1.0),
        "certified": ess_cos < 1.0,
        "cosines": cos_fn,
        "per_block_gram_eigs": gram_eigs,
    }


def two_subspace_system(model: AngleModel) -> ModelSystem:
    """Projections onto ``e_1`` and onto the line at ``cos theta_k`` in each
    block.  Oracle: ``||P_1 P_2||_e`` is the largest tail cosine, the
    per-block eigenvalues of ``P_1 + P_2`` (and of the Gram matrix) are
    ``1 +- cos theta_k``, certified iff that cosine is below 1."""
    p1 = EPBlock(2, (), [E11])
    p2 = _line_operator(model.source(), "cos")
    system = SystemSpec((p1, p2), ("P1", "P2"))
    return ModelSystem(system, _pair_oracle(model.cosines, max(model.tail_cos_period)))


def graph_cosines(a: EPDiag, n: int) -> np.ndarray:
    return 1.0 / np.sqrt(1.0 + np.abs(a.entries(n)) ** 2)


def graph_example(a: EPDiag) -> ModelSystem:
    """Projections onto ``Y (+) 0`` and onto ``Graph(A) = {(y, Ay)}`` for a
    diagonal ``A``, in the basis pairing ``y_k`` with ``z_k``.  Block ``k``
    holds lines at ``cos theta_k = 1 / sqrt(1 + |a_k|^2)``; entries of ``A``
    tending to 0 make the cosines tend to 1 and the sum of the two subspaces
    non-closed."""
    if not isinstance(a, EPDiag):
        raise TypeError("graph_example needs a diagonal operator")
    p1 = EPBlock(2, (), [E11])
    p2 = _line_operator(a, "graph")
    ess_cos = float(np.max(1.0 / np.sqrt(1.0 + np.abs(a.tail_values) ** 2)))
    system = SystemSpec((p1, p2), ("P_Y", "P_graph"))
    return ModelSystem(system, _pair_oracle(lambda n: graph_cosines(a, n), ess_cos))


@dataclass(frozen=True)
class Pattern:
    """Eventually periodic 0/1 membership sequence."""

    head: tuple = ()
    tail: tuple = (0,)

    def __post_init__(self):
        head = tuple(int(b) for b in self.head)
        tail = tuple(int(b) for b in self.tail)
        if not tail or any(b not in (0, 1) for b in head + tail):
            raise ValueError("patterns are 0/1 sequences with a nonempty tail")
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail", tail)

    def bit(self, i: int) -> int:
        if i < len(self.head):
            return self.head[i]
        return self.tail[(i - len(self.head)) % len(self.tail)]


def coordinate_projection_system(patterns: Sequence) -> ModelSystem:
    """Coordinate projections ``P_i`` onto the indices where pattern ``i`` is 1.

    Oracle, by direct inspection of the patterns: ``||P_i P_j||_e`` is 1 when
    both patterns are 1 at some index of the common tail period, else 0;
    ``gamma_e(P_i)`` is 1 when the tail contains a 1, else ``+inf``.
    """
    pats = [p if isinstance(p, Pattern) else Pattern(**p) if isinstance(p, dict) else Pattern(*p)
            for p in patterns]
    ops = [EPDiag(p.head, p.tail) for p in pats]
    start = max(len(p.head) for p in pats)
    period = _lcm(*(len(p.tail) for p in pats))
    n = len(pats)
    eps = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and any(pats[i].bit(k) and pats[j].bit(k)
                              for k in range(start, start + period)):
                eps[i, j] = 1.0
    gammas = tuple(ExtendedReal(1.0) if any(p.tail) else INF for p in pats)
    system = SystemSpec(tuple(ops), tuple(f"P{k + 1}" for k in range(n)))
    return ModelSystem(system, {"eps": eps, "gamma": gammas})


# ---------------------------------------------------------------- fuzzing


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 stream: output ``k`` (``k = 1, 2, ...``) is the SplitMix64
    finalizer applied to ``seed + k * 0x9E3779B97F4A7C15 (mod 2^64)``.

    Doubles in ``[0, 1)`` are ``(x >> 11) * 2^-53``.  Everything is defined
    on 64-bit unsigned arithmetic, so streams reproduce in any language.
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(int(seed) & _MASK)
        self.counter = 0

    def next_u64(self, count: int) -> np.ndarray:
        k = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            z = self.seed + k * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, count: int) -> np.ndarray:
        return (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def integers(self, low: int, high: int, count: int) -> np.ndarray:
        """Integers in ``[low, high]`` via ``low + floor(u * (high - low + 1))``."""
        u = self.uniform(count)
        return low + np.floor(u * (high - low + 1)).astype(np.int64)


def random_block_hermitian(seed: int, n_blocks: int, max_block: int) -> tuple[np.ndarray, tuple]:
    """Hermitian matrix ``(X + X*) / 2`` with entries of ``X`` uniform in the
    square ``[-1, 1) + i[-1, 1)``; block sizes uniform in ``[1, max_block]``.
    The stream draws block sizes first, then real parts, then imaginary
    parts, row-major."""
    if n_blocks < 1 or max_block < 1:
        raise ValueError("block count and size must be positive")
    rng = SplitMix64(seed)
    sizes = tuple(int(s) for s in rng.integers(1, max_block, n_blocks))
    n = sum(sizes)
    re = 2.0 * rng.uniform(n * n) - 1.0
    im = 2.0 * rng.uniform(n * n) - 1.0
    x = (re + 1j * im).reshape(n, n)
    return 0.5 * (x + x.conj().T), sizes


def trial_seed(seed: int, trial: int) -> int:
    """Seed of fuzz trial ``trial`` (0-based): output ``trial + 1`` of the
    base stream."""
    rng = SplitMix64(seed)
    rng.counter = trial
    return int(rng.next_u64(1)[0])
