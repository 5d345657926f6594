"""Reference computations that avoid the code paths under test."""

import numpy as np
import scipy.linalg


def count_below(h: np.ndarray, x: float) -> int:
    """Eigenvalues of ``h`` strictly below ``x``, by Sylvester inertia of an
    LDL* factorization of ``h - x I``."""
    _, d, _ = scipy.linalg.ldl(h - x * np.eye(h.shape[0]), hermitian=True)
    # d is block diagonal with 1x1 and 2x2 blocks; a 2x2 block is small enough
    # to diagonalize by its closed form.
    neg, i, n = 0, 0, d.shape[0]
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0:
            a, b, c = d[i, i].real, d[i + 1, i], d[i + 1, i + 1].real
            tr, det = a + c, a * c - abs(b) ** 2
            disc = np.sqrt(max(tr * tr / 4 - det, 0.0))
            neg += int(tr / 2 - disc < 0) + int(tr / 2 + disc < 0)
            i += 2
        else:
            neg += int(d[i, i].real < 0)
            i += 1
    return neg


def bisection_eigenvalues(h: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """All eigenvalues of a Hermitian matrix by inertia bisection."""
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    radius = float(np.max(np.sum(np.abs(h), axis=1))) + 1.0
    out = np.empty(n)
    for k in range(n):
        lo, hi = -radius, radius
        while hi - lo > tol * max(1.0, radius):
            mid = 0.5 * (lo + hi)
            if count_below(h, mid) > k:
                hi = mid
            else:
                lo = mid
        out[k] = 0.5 * (lo + hi)
    return out


def power_norm(a: np.ndarray, iters: int = 2000, seed: int = 0) -> float:
    """Spectral norm by power iteration on ``a* a``."""
    a = np.asarray(a, dtype=complex)
    if not a.any():
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[1]) + 1j * rng.standard_normal(a.shape[1])
    for _ in range(iters):
        y = a.conj().T @ (a @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
    return float(np.linalg.norm(a @ x) / np.linalg.norm(x))


def splitmix64_scalar(seed: int, count: int) -> list:
    """Textbook stateful SplitMix64 in pure Python integers."""
    mask = (1 << 64) - 1
    state = seed & mask
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def random_hermitian(rng, n: int) -> np.ndarray:
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (x + x.conj().T)
