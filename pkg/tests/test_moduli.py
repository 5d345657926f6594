import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangecert.errors import NotCompactWitness
from rangecert.moduli import (
    INF,
    ExtendedReal,
    ModuliReport,
    cokernel_basis,
    essential_norm,
    gamma,
    gamma_e,
    gamma_e_witness_check,
    m_e,
    m_e_bruteforce_oracle,
    moduli_report,
)
from rangecert.operators import Dense, DirectSum, EPBlock, EPDiag, FiniteRankPerturb, truncate

entry = st.one_of(st.just(0.0), st.floats(0.05, 3), st.floats(-3, -0.05))


def _min_nonzero(values):
    nz = [abs(v) for v in values if v != 0]
    return min(nz) if nz else math.inf


@settings(max_examples=80, deadline=None)
@given(st.lists(entry, max_size=4), st.lists(entry, min_size=1, max_size=4))
def test_diagonal_moduli_closed_form(head, tail):
    a = EPDiag(head, tail)
    assert float(gamma(a).value) == pytest.approx(_min_nonzero(head + tail), rel=1e-14)
    assert float(gamma_e(a)) == pytest.approx(_min_nonzero(tail), rel=1e-14)
    assert essential_norm(a) == pytest.approx(max(abs(t) for t in tail))


def test_periodic_block_gamma_matches_exact_section():
    rng = np.random.default_rng(4)
    tail = rng.standard_normal((2, 3, 3))
    tail[1, :, 2] = 0.0  # rank-deficient phase
    head = rng.standard_normal((1, 3, 3))
    a = EPBlock(3, head, tail)
    s = np.linalg.svd(truncate(a, 1 + 2 * 3), compute_uv=False)
    ref = s[s > 1e-12].min()
    assert float(gamma(a).value) == pytest.approx(ref, rel=1e-12)
    tail_s = np.concatenate([np.linalg.svd(t, compute_uv=False) for t in tail])
    assert float(gamma_e(a)) == pytest.approx(tail_s[tail_s > 1e-12].min(), rel=1e-12)


def test_reference_values():
    a = EPDiag([0.1], [1.0, 2.0])
    assert float(gamma(a).value) == pytest.approx(0.1)
    assert float(gamma_e(a)) == 1.0 and essential_norm(a) == 2.0


def test_decay_to_zero_gives_nonclosed_range():
    a = EPDiag([], [0.0], ([1.0], 0.5))
    g = gamma(a)
    assert g.value == 0 and not g.range_closed
    assert gamma_e(a) == 0 and essential_norm(a) == 0.0


def test_decay_to_nonzero_limit_keeps_range_closed():
    a = EPDiag([], [1.0], ([1.0], 0.5))
    assert gamma(a).value == 1.0 and gamma_e(a) == 1.0


def test_dense_moduli():
    a = np.diag([2.0, 0.0, 1.0])
    assert gamma(Dense(a)).value == 1.0
    assert gamma(Dense(np.zeros((2, 2)))).value == INF
    assert gamma_e(Dense(np.eye(3))) == INF
    assert essential_norm(Dense(np.eye(3))) == 0.0


def test_dense_gamma_against_gram_eigenvalues():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
        w = np.linalg.eigvalsh(a.T @ a)
        assert float(gamma(Dense(a)).value) == pytest.approx(math.sqrt(w[w > 1e-9][0]), rel=1e-9)


def test_finite_rank_perturbation_keeps_essential_quantities():
    base = EPDiag([], [0.3])
    a = FiniteRankPerturb(base, [[1.0, 2.0]], [[1.0, 2.0]])
    assert essential_norm(a) == essential_norm(base)
    assert gamma_e(a) == gamma_e(base)


def test_direct_sum_takes_extremes():
    a = DirectSum([EPDiag([], [0.5]), EPDiag([], [3.0])])
    assert gamma_e(a) == 0.5 and essential_norm(a) == 3.0


def test_m_e_and_oracle():
    c = EPDiag([-7.0], [2.0, 5.0])
    assert m_e(c) == 2.0
    assert m_e_bruteforce_oracle(c, 0, 10) == -7.0
    assert m_e_bruteforce_oracle(c, 1, 10) == 2.0
    assert m_e(Dense(np.eye(2))) == INF


def test_cokernel_basis_is_orthonormal_row_space():
    rng = np.random.default_rng(8)
    tail = rng.standard_normal((1, 2, 2))
    tail[0, :, 1] = 0.0
    a = EPBlock(2, [], tail)
    q = cokernel_basis(a, 6)
    assert q.shape == (12, 6)
    assert np.allclose(q.conj().T @ q, np.eye(6))
    m = truncate(a, 6)
    assert np.allclose(m @ q @ q.conj().T, m)


def test_witness_check():
    a = EPDiag([0.1], [1.0, 2.0])
    t = EPDiag([1.0], [0.0])
    assert gamma_e_witness_check(a, t, 1.0, 20).passed
    assert not gamma_e_witness_check(a, t, 1.5, 20).passed
    with pytest.raises(NotCompactWitness):
        gamma_e_witness_check(a, EPDiag([], [1.0]), 1.0, 10)


def test_extended_real_order_and_json():
    assert ExtendedReal(3.0) < INF and not INF < ExtendedReal(1e308)
    assert INF.to_json() == "inf" and ExtendedReal.from_json("inf") == INF
    assert ExtendedReal.from_json(2.5) == 2.5
    with pytest.raises(ValueError):
        ExtendedReal(float("nan"))
    with pytest.raises(ValueError):
        ExtendedReal.from_json("2.5")


def test_moduli_report_round_trip():
    for a in (EPDiag([0.1], [1.0, 2.0]), Dense(np.eye(2)), EPDiag([], [0.0], ([1.0], 0.5))):
        r = moduli_report(a)
        again = ModuliReport.from_json(json.loads(json.dumps(r.to_json())))
        assert again == r
