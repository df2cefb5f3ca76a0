"""Coarse-then-fine two-pass diarization.

Pass 1 clusters long, non-overlapping windows from a k-means start. Pass 2
re-segments the same speech at a finer step with heavily overlapped
windows, initialises from the pass-1 labels and runs a couple of
iterations to sharpen the speaker boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .cluster import ClusterConfig, ClusterResult, Responsibilities, cluster
from .errors import EmptyCoarse, InvalidSad, NoSpeech
from .formats import EmbeddingTable, RttmRecord
from .plda import PldaParams, length_normalize, project
from .synth import window_embedding

__all__ = [
    "Segment",
    "PassConfig",
    "PASS1_DEFAULT",
    "PASS2_DEFAULT",
    "EmbeddingSource",
    "FrameAggregateSource",
    "WindowTableSource",
    "DiarizeConfig",
    "PassResult",
    "TwoPassResult",
    "segment_timeline",
    "label_intervals",
    "map_labels",
    "labels_to_rttm",
    "run_two_pass",
    "diarize",
]

log = logging.getLogger(__name__)

_EPS = 1e-9


@dataclass(frozen=True)
class Segment:
    start: float
    duration: float
    embedding: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.start < 0 or self.duration <= 0:
            raise ValueError(f"invalid segment ({self.start}, {self.duration})")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def midpoint(self) -> float:
        return self.start + 0.5 * self.duration


@dataclass(frozen=True)
class PassConfig:
    window: float
    step: float
    max_iterations: int

    def __post_init__(self):
        if not 0 < self.step <= self.window:
            raise ValueError("need 0 < step <= window")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def label_offset(self) -> float:
        """Offset of the step-long interval each window labels (its centre)."""
        return 0.5 * (self.window - self.step)


PASS1_DEFAULT = PassConfig(window=2.0, step=2.0, max_iterations=20)
PASS2_DEFAULT = PassConfig(window=1.25, step=0.25, max_iterations=2)


class EmbeddingSource(Protocol):
    def embed(self, start: float, duration: float) -> np.ndarray:
        ...


class FrameAggregateSource:
    """Average frame vectors inside each window, then length-normalise."""

    def __init__(self, table: EmbeddingTable):
        self.table = table

    def embed(self, start, duration):
        return window_embedding(self.table, start, duration)


class WindowTableSource:
    """Precomputed window embeddings; row ``i`` is the window starting at
    ``table.start + i * table.step``. Lookups take the nearest start."""

    def __init__(self, table: EmbeddingTable):
        self.table = table

    def embed(self, start, duration):
        idx = int(round((start - self.table.start) / self.table.step))
        idx = min(max(idx, 0), len(self.table) - 1)
        return length_normalize(self.table.rows[idx])


Region = Tuple[float, float]


def _check_sad(sad):
    prev_end = -np.inf
    for start, end in sad:
        if end <= start:
            raise InvalidSad(f"SAD region ({start}, {end}) has end <= start")
        if start < prev_end:
            raise InvalidSad(f"SAD region starting at {start} overlaps or is unsorted")
        prev_end = end


def _region_segments(a, b, cfg: PassConfig):
    segs = []
    k = 0
    while True:
        s = round(a + k * cfg.step, 9)
        if s + cfg.window > b + _EPS:
            break
        segs.append((s, cfg.window))
        k += 1
    tail = round(a + k * cfg.step, 9)
    if b - tail >= 0.5 * cfg.step - _EPS and b - tail > _EPS:
        segs.append((tail, round(b - tail, 9)))
    if not segs:
        segs.append((a, b - a))
    return segs


def segment_timeline(sad: Sequence[Region], cfg: PassConfig) -> List[Segment]:
    """Cut every SAD region into windows of ``cfg.window`` every ``cfg.step``.

    A remainder of at least ``step/2`` after the last full window becomes a
    shortened final segment; regions too short for either get one segment
    covering the whole region.
    """
    _check_sad(sad)
    return [Segment(s, d) for a, b in sad for s, d in _region_segments(a, b, cfg)]


def label_intervals(sad: Sequence[Region], segments: Sequence[Segment], cfg: PassConfig):
    """Time span each segment's label covers, as a list of (start, end).

    Segment ``k`` labels ``[s_k + off, s_{k+1} + off)`` with ``off`` the
    window-centring offset; the first segment of a region extends back to
    the region start and the last forward to its end, so labels tile
    each SAD region without gaps.
    """
    _check_sad(sad)
    out = [None] * len(segments)
    off = cfg.label_offset
    j = 0
    for a, b in sad:
        idx = []
        while j < len(segments) and segments[j].start < b - _EPS:
            idx.append(j)
            j += 1
        for pos, k in enumerate(idx):
            lo = a if pos == 0 else min(max(segments[k].start + off, a), b)
            hi = b if pos == len(idx) - 1 else min(max(segments[idx[pos + 1]].start + off, a), b)
            out[k] = (lo, hi)
    if j != len(segments):
        raise InvalidSad("segments fall outside the SAD regions")
    return out


def map_labels(coarse: Sequence[Segment], coarse_labels, fine: Sequence[Segment],
               n_speakers, active=None) -> Responsibilities:
    """One-hot initialisation for fine segments from the coarse labels.

    A fine segment takes the label of the coarse segment holding its
    midpoint (intervals are ``[start, end)`` so a midpoint on a boundary
    goes right). Midpoints in gaps take the nearest coarse segment.
    """
    if len(coarse) == 0:
        raise EmptyCoarse("no coarse segments to map from")
    order = np.argsort([c.start for c in coarse], kind="stable")
    starts = np.array([coarse[i].start for i in order])
    ends = np.array([coarse[i].end for i in order])
    labels = np.asarray(coarse_labels)[order]
    out = np.empty(len(fine), dtype=np.int64)
    for n, seg in enumerate(fine):
        m = seg.midpoint
        idx = int(np.searchsorted(starts, m, side="right")) - 1
        if idx >= 0 and m < ends[idx]:
            out[n] = labels[idx]
            continue
        left = m - ends[idx] if idx >= 0 else np.inf
        right = starts[idx + 1] - m if idx + 1 < len(starts) else np.inf
        out[n] = labels[idx + 1] if right <= left else labels[idx]
    resp = Responsibilities.one_hot(out, n_speakers)
    if active is not None:
        resp.active = resp.active & np.asarray(active, dtype=bool)
    return resp


def speaker_name(index: int) -> str:
    return f"spk{index}"


def labels_to_rttm(sad, segments, labels, cfg: PassConfig, recording_id) -> List[RttmRecord]:
    """Tile the SAD regions with labelled intervals and merge equal neighbours."""
    spans = label_intervals(sad, segments, cfg)
    records = []
    cur = None
    for (lo, hi), lab in zip(spans, labels):
        if hi - lo <= _EPS:
            continue
        if cur is not None and cur[2] == lab and abs(cur[1] - lo) <= _EPS:
            cur[1] = hi
            continue
        if cur is not None:
            records.append(cur)
        cur = [lo, hi, lab]
    if cur is not None:
        records.append(cur)
    return [RttmRecord(recording_id, lo, hi - lo, speaker_name(int(lab))) for lo, hi, lab in records]


@dataclass(frozen=True)
class DiarizeConfig:
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    pass1: PassConfig = PASS1_DEFAULT
    pass2: PassConfig = PASS2_DEFAULT
    pass2_enabled: bool = True


@dataclass
class PassResult:
    segments: List[Segment]
    labels: np.ndarray
    result: ClusterResult
    records: List[RttmRecord]


@dataclass
class TwoPassResult:
    pass1: PassResult
    pass2: Optional[PassResult]

    @property
    def records(self) -> List[RttmRecord]:
        return (self.pass2 or self.pass1).records


def _embed(source, plda, segments):
    raw = np.array([source.embed(s.start, s.duration) for s in segments])
    return project(plda, raw)


def run_two_pass(source: EmbeddingSource, sad: Sequence[Region], plda: PldaParams,
                 cfg: DiarizeConfig = DiarizeConfig(), recording_id="rec",
                 source2: Optional[EmbeddingSource] = None) -> TwoPassResult:
    sad = list(sad)
    if not sad:
        raise NoSpeech("SAD has no speech regions")
    coarse = segment_timeline(sad, cfg.pass1)
    X1 = _embed(source, plda, coarse)
    cfg1 = replace(cfg.cluster, max_iterations=cfg.pass1.max_iterations)
    res1 = cluster(X1, plda.psi, cfg1)
    lab1 = res1.responsibilities.labels()
    p1 = PassResult(coarse, lab1, res1, labels_to_rttm(sad, coarse, lab1, cfg.pass1, recording_id))
    log.info("pass 1: %d segments, %d iterations, %d speakers",
             len(coarse), len(res1.log), res1.n_active)
    if not cfg.pass2_enabled:
        return TwoPassResult(p1, None)

    fine = segment_timeline(sad, cfg.pass2)
    X2 = _embed(source2 or source, plda, fine)
    init = map_labels(coarse, lab1, fine, res1.responsibilities.n_speakers,
                      active=res1.responsibilities.active)
    cfg2 = replace(cfg.cluster, max_iterations=cfg.pass2.max_iterations)
    res2 = cluster(X2, plda.psi, cfg2, init=init, init_weights=res1.weights,
                   file_total=len(coarse), count_unit=len(coarse) / len(fine))
    lab2 = res2.responsibilities.labels()
    p2 = PassResult(fine, lab2, res2, labels_to_rttm(sad, fine, lab2, cfg.pass2, recording_id))
    log.info("pass 2: %d segments, %d iterations, %d speakers",
             len(fine), len(res2.log), res2.n_active)
    return TwoPassResult(p1, p2)


def diarize(source: EmbeddingSource, sad: Sequence[Region], plda: PldaParams,
            cfg: DiarizeConfig = DiarizeConfig(), recording_id="rec",
            source2: Optional[EmbeddingSource] = None) -> List[RttmRecord]:
    """Two-pass diarization of one recording; returns hypothesis RTTM records."""
    return run_two_pass(source, sad, plda, cfg, recording_id, source2).records
