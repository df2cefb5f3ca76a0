"""Readers and writers for RTTM, SAD label files and embedding tables.

Readers fail fast on malformed input; writers are byte-deterministic.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .errors import DimMismatch, InvertedInterval, NegativeDuration, ParseError

__all__ = [
    "RttmRecord",
    "parse_rttm",
    "read_rttm",
    "format_rttm",
    "write_rttm",
    "parse_sad",
    "read_sad",
    "write_sad",
    "merge_regions",
    "EmbeddingTable",
    "parse_embedding_table",
    "read_embedding_table",
    "format_embedding_table",
    "write_embedding_table",
]

_NA = "<NA>"


@dataclass(frozen=True)
class RttmRecord:
    recording_id: str
    onset: float
    duration: float
    speaker: str

    @property
    def end(self) -> float:
        return self.onset + self.duration


def _float(tok, what, path, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", path, lineno) from None


def parse_rttm(text: str, path=None) -> List[RttmRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 10:
            raise ParseError(f"expected 10 fields, found {len(toks)}", path, lineno)
        if toks[0] != "SPEAKER":
            raise ParseError(f"unsupported record type {toks[0]!r}", path, lineno)
        onset = _float(toks[3], "onset", path, lineno)
        dur = _float(toks[4], "duration", path, lineno)
        if dur <= 0:
            raise NegativeDuration(f"non-positive duration {toks[4]}", path, lineno)
        if onset < 0:
            raise ParseError(f"negative onset {toks[3]}", path, lineno)
        records.append(RttmRecord(toks[1], onset, dur, toks[7]))
    return records


def read_rttm(path) -> List[RttmRecord]:
    return parse_rttm(Path(path).read_text(), path)


def format_rttm(records: Iterable[RttmRecord]) -> str:
    return "".join(
        f"SPEAKER {r.recording_id} 1 {r.onset:.3f} {r.duration:.3f} "
        f"{_NA} {_NA} {r.speaker} {_NA} {_NA}\n"
        for r in records
    )


def write_rttm(path, records: Iterable[RttmRecord]) -> None:
    Path(path).write_text(format_rttm(records))


Region = Tuple[float, float]


def merge_regions(regions: Iterable[Region]) -> List[Region]:
    """Sort regions and merge those that touch or overlap."""
    out: List[Region] = []
    for start, end in sorted(regions):
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], end))
        else:
            out.append((start, end))
    return out


def parse_sad(text: str, path=None) -> Dict[str, List[Region]]:
    regions = defaultdict(list)
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 3:
            raise ParseError(f"expected '<rec> <start> <end>', found {len(toks)} fields",
                             path, lineno)
        start = _float(toks[1], "start", path, lineno)
        end = _float(toks[2], "end", path, lineno)
        if end <= start:
            raise InvertedInterval(f"end {toks[2]} <= start {toks[1]}", path, lineno)
        if start < 0:
            raise ParseError(f"negative start {toks[1]}", path, lineno)
        regions[toks[0]].append((start, end))
    return {rec: merge_regions(regs) for rec, regs in regions.items()}


def read_sad(path) -> Dict[str, List[Region]]:
    return parse_sad(Path(path).read_text(), path)


def write_sad(path, recording_id: str, regions: Iterable[Region]) -> None:
    Path(path).write_text("".join(f"{recording_id} {s:.3f} {e:.3f}\n" for s, e in regions))


@dataclass
class EmbeddingTable:
    """Time-ordered vectors; row ``i`` sits at ``start + i * step`` seconds."""

    rows: np.ndarray
    step: float
    start: float = 0.0

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if self.step <= 0:
            raise ValueError("step must be positive")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(len(self))


def parse_embedding_table(text: str, path=None) -> EmbeddingTable:
    lines = text.splitlines()
    if not lines:
        raise ParseError("missing '#DIM' header", path, 1)
    head = lines[0].split()
    if len(head) != 6 or head[0] != "#DIM" or head[2] != "STEP" or head[4] != "START":
        raise ParseError("header must read '#DIM <D> STEP <s> START <t>'", path, 1)
    try:
        dim = int(head[1])
        step = float(head[3])
        start = float(head[5])
    except ValueError:
        raise ParseError("non-numeric header field", path, 1) from None
    if dim < 1 or step <= 0:
        raise ParseError("header needs D >= 1 and STEP > 0", path, 1)
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != dim:
            raise DimMismatch(f"expected {dim} values, found {len(toks)}", path, lineno)
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            raise ParseError("non-numeric value", path, lineno) from None
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(arr, step, start)


def read_embedding_table(path) -> EmbeddingTable:
    return parse_embedding_table(Path(path).read_text(), path)


def format_embedding_table(table: EmbeddingTable) -> str:
    parts = [f"#DIM {table.dim} STEP {table.step:.9g} START {table.start:.9g}\n"]
    parts.extend(" ".join(f"{v:.17g}" for v in row) + "\n" for row in table.rows)
    return "".join(parts)


def write_embedding_table(path, table: EmbeddingTable) -> None:
    Path(path).write_text(format_embedding_table(table))
