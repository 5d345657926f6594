"""Certificate pipeline for closedness of a sum of operator ranges.

Given operators ``A_1..A_n`` with closed ranges and a common codomain, the
pipeline gathers lower bounds ``gamma_k <= gamma_e(A_k)`` and upper bounds
``eps_ij >= ||A_i* A_j||_e``, assembles the symmetric matrix ``M`` with
``gamma_i^2`` on the diagonal and ``-eps_ij`` off it, and certifies that the
ranges are essentially linearly independent with a closed sum when ``M`` is
positive definite.  A negative outcome asserts nothing.

The truncation diagnostics (Gram spectra, kernel counts, the gap check on
``sum A_k A_k*``) are evidence, never proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernel, tolerances
from .errors import (
    HypothesisViolated,
    IncompatibleShapes,
    MissingOverride,
    PartitionMismatch,
    TruncationUnavailable,
    UnsupportedComposition,
)
from .moduli import ExtendedReal, ModuliReport, cokernel_basis, essential_norm, ext, moduli_report
from .operators import adjoint, as_rep, compose, section_layout, truncate

CAP_FACTOR = 1e3


@dataclass(frozen=True)
class SystemSpec:
    """Operators ``A_1..A_n`` into a shared codomain.

    ``allocation`` optionally gives, per operator, the weights used to split
    truncation budgets across direct-sum parts (``None`` for equal split).
    """

    operators: tuple
    labels: tuple = ()
    allocation: tuple = ()

    def __post_init__(self):
        ops = tuple(as_rep(a) for a in self.operators)
        if not ops:
            raise ValueError("a system needs at least one operator")
        cod = ops[0].codomain
        for a in ops[1:]:
            if a.codomain != cod:
                raise IncompatibleShapes("operators must share a codomain")
        labels = tuple(self.labels) or tuple(f"A{k + 1}" for k in range(len(ops)))
        if len(labels) != len(ops) or len(set(labels)) != len(labels):
            raise ValueError("labels must be unique, one per operator")
        alloc = tuple(self.allocation) or (None,) * len(ops)
        if len(alloc) != len(ops):
            raise ValueError("allocation needs one entry per operator")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "allocation", alloc)

    @property
    def n(self):
        return len(self.operators)

    def index(self, key) -> int:
        if isinstance(key, int):
            if not 0 <= key < self.n:
                raise IndexError(key)
            return key
        return self.labels.index(key)


@dataclass
class CertificateInputs:
    gamma_lb: list
    eps_ub: np.ndarray
    gamma_provenance: list
    eps_provenance: list
    moduli: list = field(default_factory=list)
    cap: Optional[float] = None

    def __post_init__(self):
        e = np.asarray(self.eps_ub, dtype=float)
        n = len(self.gamma_lb)
        if e.shape != (n, n):
            raise ValueError("eps matrix must be n x n")
        if not np.array_equal(e, e.T):
            raise ValueError("eps matrix must be symmetric")
        if np.any(np.diag(e) != 0) or np.any(e < 0):
            raise ValueError("eps must be nonnegative with zero diagonal")
        self.gamma_lb = [ext(g) for g in self.gamma_lb]
        if not all(g > 0 for g in self.gamma_lb):
            raise HypothesisViolated("every gamma_k must be positive")
        self.eps_ub = e

    def gamma_values(self) -> np.ndarray:
        """Gammas as floats, infinite entries replaced by the cap."""
        cap = self.cap
        if cap is None and any(not float(g) < math.inf for g in self.gamma_lb):
            cap = default_cap(self.gamma_lb, self.eps_ub)
        return np.array([cap if math.isinf(float(g)) else float(g) for g in self.gamma_lb])


def default_cap(gammas, eps) -> float:
    finite = [float(g) for g in gammas if math.isfinite(float(g))]
    return CAP_FACTOR * max([1.0] + finite + [float(x) for x in np.ravel(eps)])


def _lookup(overrides: dict, system: SystemSpec, kind: str) -> dict:
    out = {}
    for key, value in (overrides or {}).get(kind, {}).items():
        if kind == "gamma":
            out[system.index(key)] = float(value)
        else:
            i, j = (system.index(k) for k in key)
            if i == j:
                raise ValueError("eps overrides are for distinct operators")
            out[(min(i, j), max(i, j))] = float(value)
    return out


def compute_inputs(system: SystemSpec, overrides: Optional[dict] = None) -> CertificateInputs:
    """Exact ``gamma_k = gamma_e(A_k)`` and ``eps_ij = ||A_i* A_j||_e`` where
    available; ``overrides`` (``{"gamma": {label: value}, "eps": {(label,
    label): value}}``) supply or tighten-check bounds.  Overrides that
    contradict an exact value in the unsafe direction are rejected."""
    g_over = _lookup(overrides, system, "gamma")
    e_over = _lookup(overrides, system, "eps")
    n = system.n
    reports: list[ModuliReport] = []
    gammas, gprov = [], []
    for k, (a, label) in enumerate(zip(system.operators, system.labels)):
        rep = moduli_report(a)
        reports.append(rep)
        if not rep.range_closed:
            raise HypothesisViolated(f"range of {label} is not closed (gamma = {rep.gamma})",
                                     label)
        ge = rep.gamma_e
        if k in g_over:
            g = g_over[k]
            if not g > 0:
                raise HypothesisViolated(f"gamma override for {label} must be positive", label)
            if ge.is_finite and g > float(ge) * (1 + 1e-12):
                raise HypothesisViolated(
                    f"gamma override {g} for {label} exceeds gamma_e = {ge}", label)
            gammas.append(ExtendedReal(g))
            gprov.append("user-supplied")
        else:
            if not ge > 0:
                raise HypothesisViolated(f"gamma_e({label}) = 0", label)
            gammas.append(ge)
            gprov.append("estimate" if rep.estimate_only and ge.is_finite else "exact")
    eps = np.zeros((n, n))
    eprov = [["exact" if i == j else "" for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            computed = None
            try:
                ai, aj = system.operators[i], system.operators[j]
                e1 = essential_norm(compose(adjoint(ai), aj))
                e2 = essential_norm(compose(adjoint(aj), ai))
                computed = max(e1, e2)
            except (UnsupportedComposition, IncompatibleShapes):
                pass
            if (i, j) in e_over:
                v = e_over[(i, j)]
                if v < 0:
                    raise ValueError("eps overrides must be nonnegative")
                if computed is not None and v < computed - 1e-12 * max(1.0, computed):
                    raise HypothesisViolated(
                        f"eps override {v} for ({system.labels[i]}, {system.labels[j]}) "
                        f"is below the exact essential norm {computed}")
                val, prov = v, "user-supplied"
            elif computed is None:
                raise MissingOverride(
                    f"no exact product for ({system.labels[i]}, {system.labels[j]}); "
                    "supply an eps override", (system.labels[i], system.labels[j]))
            else:
                val, prov = computed, "exact"
            eps[i, j] = eps[j, i] = val
            eprov[i][j] = eprov[j][i] = prov
    cap = None
    if any(g.infinite for g in gammas):
        cap = default_cap(gammas, eps)
    return CertificateInputs(gammas, eps, gprov, eprov, reports, cap)


@dataclass(frozen=True, eq=False)
class CertificateMatrix:
    M: np.ndarray
    lambda_min: float
    diag_dominant: bool
    dominance_margin: float


def build_M(inputs: CertificateInputs) -> CertificateMatrix:
    g = inputs.gamma_values()
    m = -inputs.eps_ub.copy()
    np.fill_diagonal(m, g**2)
    lam = kernel.eigh(m, vectors=False).min
    margin = float(np.min(g**2 - inputs.eps_ub.sum(axis=1)))
    dominant = margin > tolerances.tol(tolerances.PD_BOUNDARY)
    return CertificateMatrix(m, lam, dominant, margin)


@dataclass
class Verdict:
    certified: bool
    lambda_min_M: float
    fast_path: Optional[str]
    claims: dict
    cap: Optional[float] = None
    diagnostics: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "lambda_min_M": self.lambda_min_M,
            "fast_path": self.fast_path,
            "claims": dict(self.claims),
            "cap": self.cap,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, obj) -> "Verdict":
        return cls(obj["certified"], obj["lambda_min_M"], obj["fast_path"], dict(obj["claims"]),
                   obj.get("cap"), obj.get("diagnostics"))


def decide(cm: CertificateMatrix, cap: Optional[float] = None) -> Verdict:
    certified = cm.lambda_min > tolerances.tol(tolerances.PD_BOUNDARY)
    return Verdict(
        certified=certified,
        lambda_min_M=cm.lambda_min,
        fast_path="diag_dominance" if certified and cm.diag_dominant else None,
        claims={
            "sum_closed_guaranteed": certified,
            "essentially_linearly_independent_guaranteed": certified,
        },
        cap=cap,
    )


def certify(system: SystemSpec, inputs: Optional[CertificateInputs] = None) -> Verdict:
    """Certified exactly when ``lambda_min(M)`` is positive; the boundary
    ``lambda_min(M) = 0`` is outside the hypothesis and not certified."""
    if inputs is None:
        inputs = compute_inputs(system)
    return decide(build_M(inputs), inputs.cap)


# ---------------------------------------------------------------- Gram machinery


@dataclass(frozen=True, eq=False)
class GramAssembly:
    G: np.ndarray
    Gamma: np.ndarray
    partition: tuple

    def block(self, i, j) -> np.ndarray:
        off = np.concatenate([[0], np.cumsum(self.partition)])
        return self.G[off[i]:off[i + 1], off[j]:off[j + 1]]


def _sections(system: SystemSpec, n: int):
    mats, layout = [], None
    for a, label, alloc in zip(system.operators, system.labels, system.allocation):
        this = section_layout(a.codomain, n, alloc)
        if layout is None:
            layout = this
        elif this != layout:
            raise TruncationUnavailable(
                f"truncated codomain of {label} keeps {this}, expected {layout}", label)
        mats.append((truncate(a, n, alloc), alloc))
    return mats


def assemble_gram(system: SystemSpec, n: int) -> GramAssembly:
    """Truncated ``Gamma(x_1..x_n) = sum A_i x_i`` on the cokernels
    ``K_i = H_i (-) Ker(A_i)`` and ``G = Gamma* Gamma``, whose ``(i, j)``
    block is ``A_i* A_j`` restricted to ``K_j``."""
    cols, parts = [], []
    for (m, alloc), a in zip(_sections(system, n), system.operators):
        q = cokernel_basis(a, n, alloc)
        cols.append(m @ q)
        parts.append(q.shape[1])
    gam = np.concatenate(cols, axis=1)
    g = gam.conj().T @ gam
    return GramAssembly(0.5 * (g + g.conj().T), gam, tuple(parts))


def zero_threshold(mat: np.ndarray) -> float:
    """``dim * eps * ||mat||``: eigenvalues at or below count as zero."""
    if mat.size == 0:
        return 0.0
    return tolerances.tol(mat.shape[0] * kernel.EPS * kernel.spectral_norm(mat))


@dataclass(frozen=True)
class KernelEstimate:
    sizes: tuple
    counts: tuple
    stabilized: bool
    value: Optional[int]


def kernel_dimension_estimate(system: SystemSpec, sizes: Sequence[int],
                              tol: Optional[float] = None) -> KernelEstimate:
    """Count near-zero eigenvalues of ``G_N`` for each ``N``; the count
    stabilizing over the three largest ``N`` is a numerical witness of
    essential linear independence."""
    sizes = tuple(int(s) for s in sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("truncation sizes must be strictly increasing")
    counts = []
    for n in sizes:
        g = assemble_gram(system, n).G
        w = kernel.eigvalsh(g)
        t = zero_threshold(g) if tol is None else tol
        counts.append(int(np.count_nonzero(w <= t)))
    stable = len(counts) >= 3 and len(set(counts[-3:])) == 1
    return KernelEstimate(sizes, tuple(counts), stable, counts[-1] if stable else None)


@dataclass(frozen=True)
class GapCheck:
    passed: bool
    smallest_nonzero: float
    threshold: float


def lemma1_gap_check(system: SystemSpec, n: int, eps: float) -> GapCheck:
    """Whether the truncated ``sum A_k A_k*`` has no eigenvalue in
    ``(tol, eps)``.  Diagnostic only: finite sections can pollute the gap,
    and a failure says nothing about non-closedness."""
    s = sum(m @ m.conj().T for m, _ in _sections(system, n))
    w = kernel.eigvalsh(s)
    t = zero_threshold(s)
    nonzero = w[w > t]
    smallest = float(nonzero[0]) if nonzero.size else math.inf
    return GapCheck(not np.any((w > t) & (w < eps)), smallest, t)


@dataclass(frozen=True)
class Lemma2Result:
    lambda_min_actual: float
    lambda_min_bound: float
    passed: bool

    @property
    def slack(self):
        return self.lambda_min_actual - self.lambda_min_bound


def lemma2_matrix(h: np.ndarray, partition: Sequence[int]) -> np.ndarray:
    """Comparison matrix with ``lambda_min`` of the diagonal blocks on the
    diagonal and minus the norms of the off-diagonal blocks elsewhere."""
    off = np.concatenate([[0], np.cumsum(partition)])
    n = len(partition)
    m = np.zeros((n, n))
    for i in range(n):
        hi = slice(off[i], off[i + 1])
        m[i, i] = kernel.eigh(h[hi, hi], vectors=False).min
        for j in range(i + 1, n):
            a = kernel.spectral_norm(h[hi, off[j]:off[j + 1]])
            m[i, j] = m[j, i] = -a
    return m


def lemma2_bound_check(h, partition: Sequence[int]) -> Lemma2Result:
    """Finite-dimensional block bound ``lambda_min(H) >= lambda_min(M)``."""
    h = kernel.check_hermitian(h)
    partition = [int(p) for p in partition]
    if any(p < 1 for p in partition) or sum(partition) != h.shape[0]:
        raise PartitionMismatch(
            f"partition {partition} does not tile a {h.shape[0]}x{h.shape[0]} matrix")
    bound = kernel.eigh(lemma2_matrix(h, partition), vectors=False).min
    actual = kernel.eigh(h, vectors=False).min
    ok = actual >= bound - tolerances.tol(tolerances.LEMMA2_SLACK)
    return Lemma2Result(actual, bound, ok)
