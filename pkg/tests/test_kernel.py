import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bisection_eigenvalues, power_norm, random_hermitian
from rangecert import kernel
from rangecert.errors import NonHermitian


@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_eigenvalues_match_inertia_bisection(n):
    h = random_hermitian(np.random.default_rng(n), n)
    ref = bisection_eigenvalues(h)
    assert np.allclose(kernel.eigvalsh(h), ref, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**31))
def test_eigh_residual_and_orthonormality(n, seed):
    h = random_hermitian(np.random.default_rng(seed), n)
    spec = kernel.eigh(h)
    v, w = spec.vectors, spec.values
    scale = max(1.0, np.linalg.norm(h, 2))
    assert np.max(np.linalg.norm(h @ v - v * w, axis=0)) <= 1e-9 * scale
    assert np.allclose(v.conj().T @ v, np.eye(n), atol=1e-10)
    assert np.all(np.diff(w) >= 0)
    assert spec.min == w[0] and spec.max == w[-1]


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitian):
        kernel.eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_tiny_asymmetry_is_tolerated():
    h = np.array([[1.0, 1.0 + 1e-15], [1.0, 2.0]])
    assert kernel.eigvalsh(h).shape == (2,)


def test_closed_form_2x2():
    w = kernel.eigvalsh(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert w.tolist() == pytest.approx([1.0, 3.0], abs=1e-15)


def test_svd_values_descending_and_norm():
    a = np.random.default_rng(3).standard_normal((6, 4))
    s = kernel.svd_values(a)
    assert np.all(np.diff(s) <= 0)
    assert kernel.spectral_norm(a) == pytest.approx(power_norm(a), rel=1e-10)


def test_numerical_rank_of_low_rank_product():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 7))
    assert kernel.numerical_rank(a) == 3
    assert kernel.numerical_rank(np.zeros((3, 3))) == 0


def test_row_space_basis_spans_cokernel():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 6))
    q = kernel.row_space_basis(a)
    assert q.shape == (6, 2)
    assert np.allclose(q.conj().T @ q, np.eye(2), atol=1e-12)
    # the projection onto span(q) fixes the rows of a
    assert np.allclose(a @ q @ q.conj().T, a, atol=1e-12)
