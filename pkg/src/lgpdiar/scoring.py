"""Diarization error rate with a forgiveness collar and overlap exclusion.

Times are converted to integer milliseconds before any interval
arithmetic so that boundaries compare exactly.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyReference, RecordingMismatch
from .formats import RttmRecord

__all__ = ["DerOptions", "DerBreakdown", "optimal_mapping", "score_der", "score_corpus"]


@dataclass(frozen=True)
class DerOptions:
    collar: float = 0.25
    score_overlap: bool = False

    def __post_init__(self):
        if self.collar < 0:
            raise ValueError("collar must be >= 0")


@dataclass(frozen=True)
class DerBreakdown:
    missed: float
    false_alarm: float
    confusion: float
    scored_total: float

    @property
    def errors(self) -> float:
        return self.missed + self.false_alarm + self.confusion

    @property
    def der(self) -> float:
        if self.scored_total > 0:
            return self.errors / self.scored_total
        return 0.0 if self.errors == 0 else float("inf")

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(self.missed + other.missed,
                            self.false_alarm + other.false_alarm,
                            self.confusion + other.confusion,
                            self.scored_total + other.scored_total)

    def format(self) -> str:
        return (f"missed={self.missed:.3f}s false_alarm={self.false_alarm:.3f}s "
                f"confusion={self.confusion:.3f}s scored={self.scored_total:.3f}s "
                f"DER={100 * self.der:.3f}%")


def _assignment_value(m):
    if m.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(m, maximize=True)
    return float(m[rows, cols].sum())


def optimal_mapping(overlap) -> Dict[int, int]:
    """Injective ref->hyp mapping maximising total matched overlap.

    Among optimal matchings the lexicographically smallest one is returned:
    reference speakers are fixed in index order, each to the lowest hyp
    index that still admits an optimal completion. When there are more
    reference than hypothesis speakers some references stay unmatched.
    """
    m = np.asarray(overlap, dtype=np.float64)
    n_ref, n_hyp = m.shape
    if n_ref == 0 or n_hyp == 0:
        return {}
    if n_ref > n_hyp:
        # dummy columns (sorted after real ones) stand for "unmatched"
        m = np.hstack([m, np.zeros((n_ref, n_ref - n_hyp))])
    best = _assignment_value(m)
    tol = 1e-9 * max(1.0, abs(best))
    free = list(range(m.shape[1]))
    fixed = 0.0
    mapping = {}
    for i in range(n_ref):
        rest = np.arange(i + 1, n_ref)
        for j in free:
            others = [c for c in free if c != j]
            total = fixed + m[i, j] + _assignment_value(m[np.ix_(rest, others)])
            if total >= best - tol:
                break
        fixed += m[i, j]
        free.remove(j)
        if j < n_hyp:
            mapping[i] = j
    return mapping


def _to_ms(t) -> int:
    return int(round(t * 1000.0))


def _speaker_intervals(records):
    spans = defaultdict(list)
    for r in records:
        spans[r.speaker].append((_to_ms(r.onset), _to_ms(r.onset + r.duration)))
    merged = {}
    for spk, ivs in spans.items():
        out = []
        for a, b in sorted(ivs):
            if b <= a:
                continue
            if out and a <= out[-1][1]:
                out[-1][1] = max(out[-1][1], b)
            else:
                out.append([a, b])
        merged[spk] = np.array(out, dtype=np.int64).reshape(-1, 2)
    return merged


def _covers(ivs, mids):
    # mids are half-integers, never on a boundary
    idx = np.searchsorted(ivs[:, 0], mids, side="right") - 1
    ok = idx >= 0
    res = np.zeros(mids.shape, dtype=bool)
    res[ok] = mids[ok] < ivs[idx[ok], 1]
    return res


def _recording_id(records, what):
    ids = {r.recording_id for r in records}
    if len(ids) > 1:
        raise RecordingMismatch(f"{what} spans several recordings: {sorted(ids)}")
    return ids.pop() if ids else None


def score_der(reference: Sequence[RttmRecord], hypothesis: Sequence[RttmRecord],
              opts: DerOptions = DerOptions()) -> DerBreakdown:
    """Score one recording. Returns component times in seconds."""
    if not reference:
        raise EmptyReference("reference RTTM has no records")
    ref_id = _recording_id(reference, "reference")
    hyp_id = _recording_id(hypothesis, "hypothesis")
    if hyp_id is not None and hyp_id != ref_id:
        raise RecordingMismatch(f"reference is {ref_id!r} but hypothesis is {hyp_id!r}")

    ref = _speaker_intervals(reference)
    hyp = _speaker_intervals(hypothesis)
    ref_spk, hyp_spk = sorted(ref), sorted(hyp)
    collar = _to_ms(opts.collar)

    points = set()
    edges = []
    for ivs in ref.values():
        for a, b in ivs:
            edges.extend((a, b))
    for ivs in list(ref.values()) + list(hyp.values()):
        points.update(ivs.ravel().tolist())
    if collar > 0:
        for t in edges:
            points.update((t - collar, t + collar))
    grid = np.array(sorted(points), dtype=np.int64)
    if grid.size < 2:
        return DerBreakdown(0.0, 0.0, 0.0, 0.0)
    dur = np.diff(grid).astype(np.float64)
    mids = grid[:-1] + 0.5

    ref_on = np.array([_covers(ref[s], mids) for s in ref_spk]).reshape(len(ref_spk), -1)
    hyp_on = np.array([_covers(hyp[s], mids) for s in hyp_spk]).reshape(len(hyp_spk), -1)
    n_ref = ref_on.sum(axis=0)
    n_hyp = hyp_on.sum(axis=0)

    scored = np.ones(mids.shape, dtype=bool)
    if collar > 0:
        e = np.array(sorted(set(edges)), dtype=np.float64)
        nearest = np.abs(mids[:, None] - e[None, :]).min(axis=1)
        scored &= nearest > collar
    if not opts.score_overlap:
        scored &= n_ref <= 1

    w = np.where(scored, dur, 0.0)
    overlap = (ref_on * w) @ hyp_on.T.astype(np.float64)
    mapping = optimal_mapping(overlap)
    n_correct = np.zeros(mids.shape)
    for i, j in mapping.items():
        n_correct += ref_on[i] & hyp_on[j]

    missed = float(np.sum(w * np.maximum(n_ref - n_hyp, 0)))
    false_alarm = float(np.sum(w * np.maximum(n_hyp - n_ref, 0)))
    confusion = float(np.sum(w * (np.minimum(n_ref, n_hyp) - n_correct)))
    total = float(np.sum(w * n_ref))
    return DerBreakdown(missed / 1000.0, false_alarm / 1000.0, confusion / 1000.0, total / 1000.0)


def score_corpus(reference: Iterable[RttmRecord], hypothesis: Iterable[RttmRecord],
                 opts: DerOptions = DerOptions()) -> DerBreakdown:
    """Time-weighted DER over every recording in the reference."""
    ref_by, hyp_by = defaultdict(list), defaultdict(list)
    for r in reference:
        ref_by[r.recording_id].append(r)
    for r in hypothesis:
        hyp_by[r.recording_id].append(r)
    if not ref_by:
        raise EmptyReference("reference RTTM has no records")
    extra = set(hyp_by) - set(ref_by)
    if extra:
        raise RecordingMismatch(f"hypothesis recordings missing from reference: {sorted(extra)}")
    total = DerBreakdown(0.0, 0.0, 0.0, 0.0)
    for rec in sorted(ref_by):
        total = total + score_der(ref_by[rec], hyp_by.get(rec, []), opts)
    return total
