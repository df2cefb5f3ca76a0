"""Synthetic conversations drawn from the PLDA model with AR(1) channels.

Frames are ``z_t = y_spk(t) + c_t`` where speaker latents ``y`` come from
``N(0, diag(psi))`` and the channel follows
``c_t = r c_{t-1} + sqrt(1 - r^2) e_t``. Window embeddings average frames
and length-normalise, standing in for an embedding extractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import kernels
from .duration import ar1_mean_variance
from .errors import EmptyWindow
from .formats import EmbeddingTable, RttmRecord
from .plda import length_normalize

__all__ = [
    "SynthConfig",
    "Conversation",
    "sample_speakers",
    "sample_conversation",
    "window_embedding",
    "window_frame_range",
    "matched_plda",
]


@dataclass(frozen=True)
class SynthConfig:
    num_speakers: int = 2
    dim: int = 64
    psi: tuple | float = 9.0
    r: float = 0.0
    frame_step: float = 0.1
    turn_mean: float = 6.0
    file_length: float = 60.0
    seed: int = 0
    jump_prob: float = 0.2
    min_turn: float = 1.0
    pause_prob: float = 1.0
    pause_mean: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "psi", tuple(float(p) for p in np.broadcast_to(self.psi, (self.dim,))))
        if self.num_speakers < 1 or self.dim < 1:
            raise ValueError("num_speakers and dim must be >= 1")
        if not 0.0 <= self.r < 1.0:
            raise ValueError("frame correlation r must lie in [0, 1)")
        if self.frame_step <= 0 or self.turn_mean <= 0:
            raise ValueError("frame_step and turn_mean must be positive")
        if self.file_length < self.turn_mean:
            raise ValueError("file_length must be >= turn_mean")
        if not 0 <= self.min_turn < self.turn_mean:
            raise ValueError("min_turn must lie in [0, turn_mean)")
        if not 0.0 <= self.pause_prob <= 1.0 or self.pause_mean <= 0:
            raise ValueError("need pause_prob in [0, 1] and pause_mean > 0")
        if min(self.psi) < 0:
            raise ValueError("psi entries must be nonnegative")

    @property
    def n_frames(self) -> int:
        return int(round(self.file_length / self.frame_step))


@dataclass
class Conversation:
    """Sampled frames plus ground truth. ``frame_speakers`` is -1 in pauses."""

    frames: EmbeddingTable
    truth: List[RttmRecord]
    frame_speakers: np.ndarray
    latents: np.ndarray
    sad: List[Tuple[float, float]]


def sample_speakers(k, psi, seed):
    """``k`` independent latents from ``N(0, diag(psi))``."""
    psi = np.asarray(psi, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((k, psi.size)) * np.sqrt(psi)


def _turn_sequence(cfg, rng):
    n_frames = cfg.n_frames
    min_frames = int(round(cfg.min_turn / cfg.frame_step))
    k = cfg.num_speakers
    labels = np.empty(n_frames, dtype=np.int64)
    pos = 0
    spk = int(rng.integers(k))
    while pos < n_frames:
        dur = cfg.min_turn + rng.exponential(cfg.turn_mean - cfg.min_turn)
        length = max(1, int(round(dur / cfg.frame_step)))
        # a leftover too short to be a turn joins the final one
        if n_frames - (pos + length) < max(min_frames, 1):
            length = n_frames - pos
        labels[pos:pos + length] = spk
        pos += length
        if cfg.pause_prob > 0 and pos < n_frames and rng.random() < cfg.pause_prob:
            gap = max(1, int(round(rng.exponential(cfg.pause_mean) / cfg.frame_step)))
            if n_frames - (pos + gap) >= max(min_frames, 1):
                labels[pos:pos + gap] = -1
                pos += gap
        if k > 1:
            nxt = (spk + 1) % k
            if k > 2 and rng.random() < cfg.jump_prob:
                others = [s for s in range(k) if s != spk]
                nxt = others[int(rng.integers(len(others)))]
            spk = nxt
    return labels


def _runs(labels):
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [labels.size]))
    return zip(starts, ends)


def _labels_to_rttm(labels, frame_step, recording_id):
    return [RttmRecord(recording_id, s * frame_step, (e - s) * frame_step, f"spk{labels[s]}")
            for s, e in _runs(labels) if labels[s] >= 0]


def _labels_to_sad(labels, frame_step):
    return [(s * frame_step, e * frame_step) for s, e in _runs(labels >= 0) if labels[s] >= 0]


def sample_conversation(cfg: SynthConfig, recording_id="synth") -> Conversation:
    spk_seq, turn_seq, chan_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    latents = sample_speakers(cfg.num_speakers, cfg.psi, spk_seq)
    labels = _turn_sequence(cfg, np.random.default_rng(turn_seq))
    noise = np.random.default_rng(chan_seq).standard_normal((labels.size, cfg.dim))
    # pause frames carry the channel only
    speech = np.where(labels[:, None] >= 0, latents[np.maximum(labels, 0)], 0.0)
    frames = speech + kernels.ar1_filter(noise, cfg.r)
    return Conversation(
        frames=EmbeddingTable(frames, cfg.frame_step, 0.0),
        truth=_labels_to_rttm(labels, cfg.frame_step, recording_id),
        frame_speakers=labels,
        latents=latents,
        sad=_labels_to_sad(labels, cfg.frame_step),
    )


def window_frame_range(table: EmbeddingTable, start, duration):
    """Half-open frame index range whose timestamps fall in [start, start+duration)."""
    eps = 1e-9
    lo = math.ceil((start - table.start) / table.step - eps)
    hi = math.ceil((start + duration - table.start) / table.step - eps)
    return max(lo, 0), min(hi, len(table))


def window_embedding(table: EmbeddingTable, start, duration):
    lo, hi = window_frame_range(table, start, duration)
    if hi <= lo:
        raise EmptyWindow(f"no frames in [{start:.3f}, {start + duration:.3f})")
    return length_normalize(table.rows[lo:hi].mean(axis=0))


def matched_plda(cfg: SynthConfig, window=2.0):
    """Approximate (sigma_wc, sigma_ac) of length-normalised window embeddings.

    Window means carry channel variance ``1 / neff(n_frames, r)``; length
    normalisation divides by roughly ``sqrt(sum(psi) + D * that)``.
    """
    n = max(1, int(round(window / cfg.frame_step)))
    psi = np.asarray(cfg.psi)
    v = ar1_mean_variance(n, cfg.r)
    s2 = 1.0 / (psi.sum() + cfg.dim * v)
    return s2 * v * np.eye(cfg.dim), s2 * np.diag(psi)
