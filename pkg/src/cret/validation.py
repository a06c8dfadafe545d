"""Input validation helpers shared by the estimator-style classes."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument


def check_alpha(alpha: float) -> float:
    """Validate a miscoverage level, returning it as a plain float."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def check_lambda(lam: float) -> float:
    """Validate a rank-discount strength in [0, 1]."""
    lam = float(lam)
    if not np.isfinite(lam) or not 0.0 <= lam <= 1.0:
        raise InvalidArgument(f"lambda must lie in [0, 1], got {lam}")
    return lam


def check_positive_int(value: int, name: str) -> int:
    value = int(value)
    if value < 1:
        raise InvalidArgument(f"{name} must be >= 1, got {value}")
    return value


def check_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise InvalidArgument(f"{name} must be a finite value >= 0, got {value}")
    return value
