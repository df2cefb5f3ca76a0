"""Leave-one-out Gaussian PLDA clustering.

Everything here works in the diagonalised PLDA space: within-class
covariance is the identity and across-class covariance is ``diag(psi)``.
Speaker models are kept as sufficient statistics (soft count, sum of
embeddings); leave-one-out scoring subtracts a segment's own contribution
from those statistics instead of re-enrolling from scratch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .duration import DurationConfig, count_scale, neff_continuous, scale_count
from .errors import EmptyInput, InactiveSpeaker

__all__ = [
    "SpeakerModel",
    "Responsibilities",
    "ClusterConfig",
    "IterationRecord",
    "ClusterResult",
    "kmeans_init",
    "enroll_speaker",
    "log_predictive",
    "speaker_stats",
    "loo_posteriors",
    "loo_posteriors_all",
    "update_weights",
    "cluster",
]

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_WEIGHT_FLOOR = 1e-300
_KMEANS_MAX_ITER = 50


@dataclass
class SpeakerModel:
    mean: np.ndarray
    cov: np.ndarray
    weight: float = 0.0
    eff_count: float = 0.0
    active: bool = True


@dataclass
class Responsibilities:
    """Soft segment-to-speaker assignments, shape ``(n_segments, n_speakers)``."""

    matrix: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.active = np.asarray(self.active, dtype=bool)
        if self.matrix.ndim != 2 or self.active.shape != (self.matrix.shape[1],):
            raise ValueError("responsibility matrix and active mask disagree in shape")

    @classmethod
    def one_hot(cls, labels, n_speakers, active=None) -> "Responsibilities":
        labels = np.asarray(labels, dtype=np.int64)
        mat = np.zeros((labels.size, n_speakers))
        mat[np.arange(labels.size), labels] = 1.0
        if active is None:
            active = mat.sum(axis=0) > 0
        return cls(mat, active)

    @property
    def n_segments(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_speakers(self) -> int:
        return self.matrix.shape[1]

    def labels(self) -> np.ndarray:
        return np.argmax(self.matrix, axis=1)

    def check(self, atol=1e-9) -> None:
        m = self.matrix
        if np.any(m < -atol) or np.any(m > 1 + atol):
            raise AssertionError("responsibilities outside [0, 1]")
        if not np.allclose(m.sum(axis=1), 1.0, rtol=0.0, atol=atol):
            raise AssertionError("responsibility rows do not sum to 1")
        if np.any(m[:, ~self.active] != 0.0):
            raise AssertionError("inactive speaker column is not zero")


@dataclass(frozen=True)
class ClusterConfig:
    max_speakers: int = 10
    max_iterations: int = 20
    posterior_change_tol: float = 1e-4
    prune_threshold: float = 1e-3
    duration: DurationConfig = field(default_factory=DurationConfig)
    seed: int = 0
    update: str = "sequential"

    def __post_init__(self):
        if self.max_speakers < 1:
            raise ValueError("max_speakers must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.posterior_change_tol < 0:
            raise ValueError("posterior_change_tol must be >= 0")
        if not 0 <= self.prune_threshold < 1.0 / self.max_speakers:
            raise ValueError("prune_threshold must lie in [0, 1/max_speakers)")
        if self.update not in ("sequential", "parallel"):
            raise ValueError("update must be 'sequential' or 'parallel'")


@dataclass
class IterationRecord:
    iteration: int
    n_active: int
    max_change: float


@dataclass
class ClusterResult:
    responsibilities: Responsibilities
    models: List[SpeakerModel]
    weights: np.ndarray
    log: List[IterationRecord]

    @property
    def n_active(self) -> int:
        return int(self.responsibilities.active.sum())


def kmeans_init(X, k, seed) -> Responsibilities:
    """Hard k-means assignments (k-means++ seeding, at most 50 Lloyd steps).

    With fewer segments than clusters every segment gets its own cluster
    and the remaining columns are inactive. Clusters left empty after
    Lloyd iterations are inactive too.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("k-means needs at least one segment")
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        return Responsibilities.one_hot(np.arange(n), k)

    rng = np.random.default_rng(seed)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))

    labels = None
    for _ in range(_KMEANS_MAX_ITER):
        new_labels, _ = kernels.nearest_centroid(X, centers)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
    return Responsibilities.one_hot(labels, k)


def _enroll_scaled(soft_count, mean_sum, psi, r, scale) -> SpeakerModel:
    soft_count = max(float(soft_count), 0.0)
    if soft_count == 0.0:
        return SpeakerModel(np.zeros_like(psi), psi.copy(), eff_count=0.0)
    n_eff = neff_continuous(soft_count * scale, r)
    denom = psi * n_eff + 1.0
    # psi / (psi + 1/n_eff) * zbar, rearranged to stay finite as n_eff -> 0
    mean = psi * (n_eff / soft_count) * mean_sum / denom
    cov = psi / denom
    return SpeakerModel(mean, cov, eff_count=n_eff)


def enroll_speaker(soft_count, mean_sum, psi, duration: DurationConfig, file_total) -> SpeakerModel:
    """Posterior speaker model from sufficient statistics.

    The observed count is first scaled by ``min(1, n0 / file_total)``, then
    reduced to an effective count with the continuous correlation formula.
    The ML mean estimate has variance ``1 / n_eff`` per coordinate, and a
    zero count returns the prior (mean 0, cov psi).
    """
    psi = np.asarray(psi, dtype=np.float64)
    mean_sum = np.asarray(mean_sum, dtype=np.float64)
    soft_count = max(float(soft_count), 0.0)
    scaled = scale_count(soft_count, duration, file_total)
    scale = scaled / soft_count if soft_count > 0 else 1.0
    return _enroll_scaled(soft_count, mean_sum, psi, duration.r, scale)


def log_predictive(z, model: SpeakerModel) -> float:
    """log N(z; mean, I + diag(cov))."""
    if model is None or not model.active:
        raise InactiveSpeaker("cannot score against an inactive speaker")
    z = np.asarray(z, dtype=np.float64)
    var = 1.0 + model.cov
    diff = z - model.mean
    return -0.5 * float(np.sum(np.log(var) + _LOG_2PI + diff * diff / var))


def speaker_stats(Z, resp: Responsibilities):
    """Per-speaker soft counts and embedding sums."""
    gamma = resp.matrix
    return gamma.sum(axis=0), gamma.T @ np.asarray(Z, dtype=np.float64)


def _log_weights(weights, active):
    lw = np.log(np.maximum(weights, _WEIGHT_FLOOR))
    return np.where(active, lw, -np.inf)


def _normalize_log_rows(scores, active):
    out = np.zeros_like(scores)
    s = scores[:, active]
    s = s - s.max(axis=1, keepdims=True)
    p = np.exp(s)
    out[:, active] = p / p.sum(axis=1, keepdims=True)
    return out


def _loo_rows(rows, Z, resp, psi, weights, cfg, file_total, count_unit):
    Z = np.asarray(Z, dtype=np.float64)
    counts, sums = speaker_stats(Z, resp)
    active = resp.active & (np.asarray(weights) > 0)
    scale = _count_factor(cfg, Z.shape[0], file_total, count_unit)
    scores = kernels.loo_log_scores(
        Z[rows], resp.matrix[rows], counts, sums, psi,
        _log_weights(np.asarray(weights, dtype=np.float64), active),
        active, cfg.duration.r, scale)
    return _normalize_log_rows(scores, active)


def _count_factor(cfg, n_segments, file_total, count_unit):
    # observed count -> count fed to the correlation formula
    if file_total is None:
        file_total = n_segments * count_unit
    return count_unit * count_scale(cfg.duration, file_total)


def loo_posteriors(n, Z, resp: Responsibilities, psi, weights, cfg: ClusterConfig,
                   file_total=None, count_unit=1.0) -> np.ndarray:
    """Posterior row for segment ``n`` with its own statistics left out."""
    if not 0 <= n < resp.n_segments:
        raise IndexError(f"segment index {n} out of range [0, {resp.n_segments})")
    return _loo_rows(slice(n, n + 1), Z, resp, psi, weights, cfg, file_total, count_unit)[0]


def loo_posteriors_all(Z, resp: Responsibilities, psi, weights, cfg: ClusterConfig,
                       file_total=None, count_unit=1.0) -> np.ndarray:
    """All leave-one-out posterior rows from one frozen statistics snapshot."""
    return _loo_rows(slice(None), Z, resp, psi, weights, cfg, file_total, count_unit)


def _loo_sweep(Z, resp, psi, weights, cfg, scale):
    """Gauss-Seidel variant: each segment's new row enters the statistics
    before the next segment is scored. Parallel updates from one snapshot
    can trap small speakers in a two-cycle where their segments keep
    swapping clusters."""
    # statistics only see surviving speakers, same as the parallel path
    gamma = np.where(resp.active[None, :], resp.matrix, 0.0)
    counts, sums = speaker_stats(Z, Responsibilities(gamma, resp.active))
    return kernels.loo_sweep(Z, gamma, counts, sums, psi,
                             _log_weights(weights, resp.active), resp.active,
                             cfg.duration.r, scale)


def _prune(weights, active, prune_threshold):
    keep = active & (weights >= prune_threshold)
    if not keep.any():
        keep = np.zeros_like(active)
        keep[np.argmax(np.where(active, weights, -np.inf))] = True
    w = np.where(keep, weights, 0.0)
    return w / w.sum(), keep


def update_weights(resp: Responsibilities, prune_threshold):
    """Maximum-likelihood weights, then drop speakers below the threshold.

    Returns ``(weights, active)``; the largest speaker always survives.
    """
    w = np.where(resp.active, resp.matrix.sum(axis=0), 0.0) / resp.n_segments
    return _prune(w, resp.active.copy(), prune_threshold)


def cluster(Z, psi, cfg: ClusterConfig, init: Optional[Responsibilities] = None,
            init_weights=None, file_total=None, count_unit=1.0) -> ClusterResult:
    """Alternate model enrollment, weight update/pruning and LOO assignment.

    Parameters
    ----------
    Z : (N, D) array
        Projected embeddings.
    psi : (D,) array
        Across-class variances in the projected space.
    init : Responsibilities, optional
        Starting assignments; k-means with ``cfg.max_speakers`` clusters if absent.
    init_weights : array, optional
        Weights for the first iteration instead of the ML estimate.
    file_total : float, optional
        Segment total for N0 scaling; defaults to ``N * count_unit``.
    count_unit : float
        Independent-observation equivalent of one segment. The fine pass
        uses ``n_coarse / n_fine`` so its overlapped segments carry the
        same total evidence as the coarse pass.
    """
    Z = np.asarray(Z, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise EmptyInput("clustering needs at least one segment")
    n = Z.shape[0]
    scale = _count_factor(cfg, n, file_total, count_unit)
    resp = init if init is not None else kmeans_init(Z, cfg.max_speakers, cfg.seed)
    if resp.n_segments != n:
        raise ValueError(f"init has {resp.n_segments} rows for {n} segments")

    history = []
    for it in range(1, cfg.max_iterations + 1):
        if it == 1 and init_weights is not None:
            w0 = np.where(resp.active, np.asarray(init_weights, dtype=np.float64), 0.0)
            weights, active = _prune(w0 / w0.sum(), resp.active.copy(), cfg.prune_threshold)
        else:
            weights, active = update_weights(resp, cfg.prune_threshold)
        frozen = Responsibilities(resp.matrix, active)
        if cfg.update == "parallel":
            new = loo_posteriors_all(Z, frozen, psi, weights, cfg, file_total, count_unit)
        else:
            new = _loo_sweep(Z, frozen, psi, weights, cfg, scale)
        change = float(np.max(np.abs(new - resp.matrix)))
        resp = Responsibilities(new, active)
        history.append(IterationRecord(it, int(active.sum()), change))
        log.debug("iteration %d: %d active, max change %.3g", it, active.sum(), change)
        if change < cfg.posterior_change_tol:
            break

    counts, sums = speaker_stats(Z, resp)
    weights = np.where(resp.active, counts, 0.0) / n
    models = []
    for i in range(resp.n_speakers):
        m = _enroll_scaled(counts[i], sums[i], psi, cfg.duration.r, scale)
        m.weight = float(weights[i])
        m.active = bool(resp.active[i])
        models.append(m)
    return ClusterResult(resp, models, weights, history)
