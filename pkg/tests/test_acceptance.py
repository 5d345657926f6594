"""Acceptance criteria AC-1 .. AC-10, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the pytest terminal
summary, before asserting.
"""

import math
import subprocess
import sys

import numpy as np
import scipy.linalg

from rangecert.certify import (
    CertificateInputs,
    assemble_gram,
    build_M,
    certify,
    compute_inputs,
    decide,
    kernel_dimension_estimate,
    lemma2_bound_check,
)
from rangecert.models import (
    AngleModel,
    Pattern,
    coordinate_projection_system,
    graph_example,
    random_block_hermitian,
    trial_seed,
    two_subspace_system,
)
from rangecert.moduli import essential_norm, gamma, m_e, m_e_bruteforce_oracle
from rangecert.operators import (
    Dense,
    EPBlock,
    EPDiag,
    FiniteRankPerturb,
    essential_spectrum,
)


def _record(log, cid, ok, detail):
    log.append(f"{cid} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def _comparison_min(h, sizes):
    off = np.concatenate([[0], np.cumsum(sizes)])
    k = len(sizes)
    m = np.zeros((k, k))
    for i in range(k):
        si = slice(off[i], off[i + 1])
        m[i, i] = scipy.linalg.eigvalsh(h[si, si])[0]
        for j in range(k):
            if i != j:
                m[i, j] = -scipy.linalg.norm(h[si, off[j]:off[j + 1]], 2)
    return scipy.linalg.eigvalsh(m)[0]


def test_ac1_block_eigenvalue_bound(acceptance_log):
    worst = math.inf
    for t in range(1000):
        s = trial_seed(2026, t)
        h, sizes = random_block_hermitian(s, 2 + s % 3, 30)
        slack = scipy.linalg.eigvalsh(h)[0] - _comparison_min(h, sizes)
        worst = min(worst, slack)
        assert lemma2_bound_check(h, sizes).passed
    eq = lemma2_bound_check(np.array([[2.0, 1.0], [1.0, 2.0]]), (1, 1)).slack
    ok = worst >= -1e-9 and abs(eq) <= 1e-12
    _record(acceptance_log, "AC-1", ok,
            f"1000 cases, min slack {worst:.3g} (>= -1e-9); equality slack {eq:.1e} (<= 1e-12)")


def test_ac2_gamma_equivalences(acceptance_log):
    rng = np.random.default_rng(2)
    worst_eq = worst_ray = 0.0
    for _ in range(200):
        m, n = rng.integers(1, 9, 2)
        r = rng.integers(0, min(m, n) + 1)
        a = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        g = gamma(Dense(a)).value
        w = scipy.linalg.eigvalsh(a.T @ a)
        cut = max(m, n) * np.finfo(float).eps * max(1.0, w[-1]) * 10
        nz = w[w > cut]
        if nz.size == 0:
            assert g.infinite
            continue
        worst_eq = max(worst_eq, abs(float(g) - math.sqrt(nz[0])))
        q = scipy.linalg.orth(a.T)
        x = q @ rng.standard_normal((q.shape[1], 50))
        ratios = np.linalg.norm(a @ x, axis=0) / np.linalg.norm(x, axis=0)
        worst_ray = max(worst_ray, float(g) - ratios.min())
    ok = worst_eq <= 1e-9 and worst_ray <= 1e-8
    _record(acceptance_log, "AC-2", ok,
            f"200 matrices, |svd - sqrt(eig)| <= {worst_eq:.2g} (1e-9), "
            f"Rayleigh undercut {worst_ray:.2g} (1e-8)")


def test_ac3_m_e_oracle(acceptance_log):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        h, p = rng.integers(0, 7), rng.integers(1, 5)
        c = EPDiag(rng.uniform(-3, 3, h), rng.uniform(-3, 3, p))
        n = h + p * (h + 6)
        limit = [m_e_bruteforce_oracle(c, budget, n) for budget in (h, h + 1, h + 2)]
        assert len(set(limit)) == 1
        worst = max(worst, abs(float(m_e(c)) - limit[0]))
    _record(acceptance_log, "AC-3", worst <= 1e-9, f"50 diagonal operators, max deviation {worst:.2g}")


def test_ac4_constant_angle(acceptance_log):
    model = two_subspace_system(AngleModel((), (0.5,)))
    v = certify(model.system)
    worst = 0.0
    for n in (50, 200, 800):
        w = scipy.linalg.eigvalsh(assemble_gram(model.system, n).G)
        ref = np.array([0.5] * n + [1.5] * n)
        worst = max(worst, float(np.max(np.abs(w - ref))))
    ok = v.certified and abs(v.lambda_min_M - 0.5) <= 1e-12 and worst <= 1e-10
    _record(acceptance_log, "AC-4", ok,
            f"certified {v.certified}, lambda_min {v.lambda_min_M!r} (0.5 +- 1e-12), "
            f"Gram vs {{0.5, 1.5}} at N=50,200,800: {worst:.2g} (1e-10)")


def test_ac5_graph_example(acceptance_log):
    model = graph_example(EPDiag([], [0.0], ([1.0], 0.5)))
    inputs = compute_inputs(model.system)
    v = certify(model.system, inputs)
    counts = kernel_dimension_estimate(model.system, (50, 100, 200, 400)).counts
    increasing = all(b > a for a, b in zip(counts, counts[1:]))
    eps12 = float(inputs.eps_ub[0, 1])
    ok = eps12 == 1.0 and not v.certified and increasing
    _record(acceptance_log, "AC-5", ok,
            f"eps12 {eps12!r}, certified {v.certified}, kernel counts {list(counts)}")


def test_ac6_disjoint_coordinate_projections(acceptance_log):
    # heads overlap (compact products); tails from index 2 are pairwise disjoint
    pats = [Pattern((1, 1), (1, 0, 0)), Pattern((0, 1), (0, 1, 0)), Pattern((1, 0), (0, 0, 1))]
    model = coordinate_projection_system(pats)
    base = compute_inputs(model.system)
    zero = bool(np.all(base.eps_ub == 0.0))
    caps = (1.0, 2.0, 1e3, 1e8, 1e15)
    verdicts = []
    for cap in caps:
        inp = CertificateInputs(base.gamma_lb, base.eps_ub, base.gamma_provenance,
                                base.eps_provenance, base.moduli, cap)
        verdicts.append(decide(build_M(inp), cap).certified)
    default = certify(model.system, base).certified
    ok = zero and all(verdicts) and default
    _record(acceptance_log, "AC-6", ok,
            f"eps exactly 0: {zero}; certified for default cap and caps {caps}: {verdicts}")


def test_ac7_fast_path(acceptance_log):
    eps = np.full((3, 3), 0.4) - 0.4 * np.eye(3)
    inp = CertificateInputs([1.0] * 3, eps, ["user-supplied"] * 3, [["user-supplied"] * 3] * 3)
    cm = build_M(inp)
    v = decide(cm)
    ref = scipy.linalg.eigvalsh(cm.M)[0]
    ok = (v.certified and v.fast_path == "diag_dominance"
          and abs(cm.lambda_min - 0.2) <= 1e-12 and abs(cm.lambda_min - ref) <= 1e-12)
    _record(acceptance_log, "AC-7", ok,
            f"fast path {v.fast_path}, lambda_min {cm.lambda_min!r} (0.2 +- 1e-12), "
            f"reference {float(ref)!r}")


def _weyl_case(rng, k):
    if k % 2:
        base = EPDiag(rng.uniform(-2, 2, rng.integers(0, 4)), rng.uniform(-2, 2, rng.integers(1, 4)))
        size = 6
    else:
        x = rng.standard_normal((rng.integers(1, 3), 2, 2))
        base = EPBlock(2, [], x + np.swapaxes(x, 1, 2))
        size = 8
    r = rng.integers(1, 4)
    vecs = [rng.standard_normal(size) for _ in range(r)]
    coef = rng.uniform(-3, 3, r)
    return base, FiniteRankPerturb(base, [c * v for c, v in zip(coef, vecs)], vecs)


def test_ac8_finite_rank_invariance(acceptance_log):
    rng = np.random.default_rng(8)
    same = 0
    for k in range(100):
        base, pert = _weyl_case(rng, k)
        if (essential_spectrum(pert) == essential_spectrum(base)
                and essential_norm(pert) == essential_norm(base)):
            same += 1
    _record(acceptance_log, "AC-8", same == 100, f"{same}/100 cases identical to their bases")


def test_ac9_boundary(acceptance_log):
    model = two_subspace_system(AngleModel((), (1.0,), ((-0.5,), 0.5)))
    v = certify(model.system)
    ok = abs(v.lambda_min_M) <= 1e-12 and not v.certified
    _record(acceptance_log, "AC-9", ok,
            f"lambda_min {v.lambda_min_M!r} (0 +- 1e-12), certified {v.certified}")


def test_ac10_fuzz_determinism(acceptance_log):
    cmd = [sys.executable, "-m", "rangecert.cli", "fuzz-lemma2", "--trials", "300", "--seed", "31337"]
    runs = [subprocess.run(cmd, capture_output=True, timeout=300) for _ in range(2)]
    ok = runs[0].returncode == runs[1].returncode == 0 and runs[0].stdout == runs[1].stdout
    _record(acceptance_log, "AC-10", ok,
            f"two runs, {len(runs[0].stdout)} bytes each, byte-identical {runs[0].stdout == runs[1].stdout}")
