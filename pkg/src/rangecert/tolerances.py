"""Numerical tolerances shared by every module.

All defaults are multiplied by the ``RCC_TOLERANCE_SCALE`` environment
variable (float, default 1.0), read at call time so tests and the
``selftest`` command can perturb it.
"""

from __future__ import annotations

import contextlib
import os

ENV_VAR = "RCC_TOLERANCE_SCALE"

HERMITIAN_RTOL = 1e-12
EIG_RESIDUAL = 1e-9
ORTHONORMAL = 1e-10
DEDUP = 1e-12
PD_BOUNDARY = 1e-12
LEMMA2_SLACK = 1e-9
GRAM_IDENTITY = 1e-10


_extra = [1.0]


def scale() -> float:
    raw = os.environ.get(ENV_VAR, "").strip()
    base = 1.0
    if raw:
        try:
            base = float(raw)
        except ValueError:
            raise ValueError(f"{ENV_VAR} must be a float, got {raw!r}") from None
    return base * _extra[-1]


@contextlib.contextmanager
def scaled(factor: float):
    """Multiply every tolerance by ``factor`` inside the block."""
    factor = float(factor)
    if not factor > 0:
        raise ValueError("tolerance scale must be positive")
    _extra.append(_extra[-1] * factor)
    try:
        yield
    finally:
        _extra.pop()


def tol(value: float) -> float:
    """Return ``value`` multiplied by the current tolerance scale."""
    return value * scale()
