"""Effective sample counts under correlated segments, and N0 count scaling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidCorrelation, InvalidCount

__all__ = [
    "DurationConfig",
    "neff_discrete",
    "neff_limit",
    "neff_continuous",
    "scale_count",
    "count_scale",
    "neff_table",
    "ar1_mean_variance",
]


def _check_r(r):
    if not 0.0 <= r <= 1.0:
        raise InvalidCorrelation(f"correlation r must lie in [0, 1], got {r}")


@dataclass(frozen=True)
class DurationConfig:
    """Correlation coefficient ``r`` and target segment count ``n0``.

    ``n0=None`` means unbounded (N0 = N, i.e. no scaling).
    """

    r: float = 0.9
    n0: Optional[float] = None

    def __post_init__(self):
        _check_r(self.r)
        if self.n0 is not None and not self.n0 > 0:
            raise InvalidCount(f"n0 must be positive, got {self.n0}")


def neff_discrete(n, r):
    """Exact effective count of ``n`` AR(1)-correlated samples."""
    _check_r(r)
    if int(n) != n or n < 1:
        raise InvalidCount(f"n must be a positive integer, got {n}")
    n = int(n)
    j = np.arange(1, n)
    # powers via exp/log would lose r=0 and r=1 exactness
    total = float(np.sum((n - j) / n * np.power(float(r), j)))
    return n / (1.0 + 2.0 * total)


def neff_limit(n, r):
    """Large-N approximation ``(1 - r) / (1 + r) * n``."""
    _check_r(r)
    if n < 1:
        raise InvalidCount(f"n must be >= 1, got {n}")
    return (1.0 - r) / (1.0 + r) * n


def neff_continuous(n, r):
    """``min(n, ((1 - r) n + 2 r) / (1 + r))``; accepts soft (real) counts."""
    _check_r(r)
    if not n >= 0:
        raise InvalidCount(f"n must be >= 0, got {n}")
    return min(n, ((1.0 - r) * n + 2.0 * r) / (1.0 + r))


def count_scale(cfg: DurationConfig, file_total) -> float:
    """Multiplier ``min(1, n0 / file_total)`` applied to observed counts."""
    if not file_total > 0:
        raise InvalidCount(f"file_total must be positive, got {file_total}")
    if cfg.n0 is None:
        return 1.0
    return min(1.0, cfg.n0 / file_total)


def scale_count(n, cfg: DurationConfig, file_total):
    if not n >= 0:
        raise InvalidCount(f"count must be >= 0, got {n}")
    # soft counts may exceed the total by rounding noise
    if n > file_total * (1.0 + 1e-9):
        raise InvalidCount(f"count {n} exceeds file total {file_total}")
    return n * count_scale(cfg, file_total)


def neff_table(r, max_n):
    """Rows ``(N, discrete, limit, continuous)`` for N = 1..max_n."""
    return [(n, neff_discrete(n, r), neff_limit(n, r), neff_continuous(n, r))
            for n in range(1, max_n + 1)]


def ar1_mean_variance(n, r):
    """Variance of the mean of ``n`` unit-variance AR(1) samples (= 1/neff)."""
    return 1.0 / neff_discrete(n, r)

