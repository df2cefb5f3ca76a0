"""Command-line front end: ``lgpdiar {diarize,synth,score,neff}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from .cluster import ClusterConfig
from .duration import DurationConfig, neff_table
from .errors import LgpError, ParseError
from .formats import (read_embedding_table, read_rttm, read_sad, write_embedding_table,
                      write_rttm, write_sad)
from .plda import read_plda, write_plda
from .scoring import DerOptions, score_corpus
from .synth import SynthConfig, matched_plda, sample_conversation
from .two_pass import (DiarizeConfig, FrameAggregateSource, PassConfig, WindowTableSource,
                       run_two_pass)


# defaults for every key a --config file may set
RUN_DEFAULTS = {
    "r": 0.9,
    "n0": "none",
    "max_speakers": 10,
    "seed": 0,
    "prune_threshold": 1e-3,
    "update": "sequential",
    "source": "frames",
    "pass1_window": 2.0,
    "pass1_step": 2.0,
    "pass1_iterations": 20,
    "pass2_window": 1.25,
    "pass2_step": 0.25,
    "pass2_iterations": 2,
    "pass2": True,
}


@dataclass(frozen=True)
class Job:
    recording_id: Optional[str]
    embeddings: str
    sad: str
    embeddings2: Optional[str]
    out: str


def _parse_n0(value):
    if value is None or str(value).lower() == "none":
        return None
    return float(value)


def resolve_run_config(args) -> dict:
    """Merge flags over the optional JSON config over built-in defaults."""
    merged = dict(RUN_DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", args.config, exc.lineno) from None
        unknown = set(loaded) - set(RUN_DEFAULTS)
        if unknown:
            raise ParseError(f"unknown config keys: {', '.join(sorted(unknown))}", args.config)
        merged.update(loaded)
    for key in RUN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def diarize_config(run: dict) -> DiarizeConfig:
    duration = DurationConfig(r=float(run["r"]), n0=_parse_n0(run["n0"]))
    ccfg = ClusterConfig(max_speakers=int(run["max_speakers"]), seed=int(run["seed"]),
                         prune_threshold=float(run["prune_threshold"]),
                         update=run["update"], duration=duration)
    return DiarizeConfig(
        cluster=ccfg,
        pass1=PassConfig(float(run["pass1_window"]), float(run["pass1_step"]),
                         int(run["pass1_iterations"])),
        pass2=PassConfig(float(run["pass2_window"]), float(run["pass2_step"]),
                         int(run["pass2_iterations"])),
        pass2_enabled=bool(run["pass2"]),
    )


def _pick_sad(sad_map, rec, path):
    if rec is not None and rec in sad_map:
        return rec, sad_map[rec]
    if rec is not None and len(sad_map) != 1:
        raise ParseError(f"recording {rec!r} not found", path)
    if len(sad_map) != 1:
        raise ParseError(f"{len(sad_map)} recordings present; choose one with --rec", path)
    (only, regions), = sad_map.items()
    return rec or only, regions


def _source(kind, path):
    table = read_embedding_table(path)
    return FrameAggregateSource(table) if kind == "frames" else WindowTableSource(table)


def run_job(job: Job, plda_path: str, run: dict):
    """Diarize one recording; returns the iteration-log lines."""
    plda = read_plda(plda_path)
    rec, sad = _pick_sad(read_sad(job.sad), job.recording_id, job.sad)
    source = _source(run["source"], job.embeddings)
    source2 = _source(run["source"], job.embeddings2) if job.embeddings2 else None
    result = run_two_pass(source, sad, plda, diarize_config(run), rec, source2)
    write_rttm(job.out, result.records)
    lines = []
    for name, p in (("pass1", result.pass1), ("pass2", result.pass2)):
        if p is None:
            continue
        for it in p.result.log:
            lines.append(f"{rec}\t{name}\t{it.iteration}\t{it.n_active}\t{it.max_change:.6g}")
    return lines


def _read_manifest(path, out_dir) -> List[Job]:
    jobs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) not in (3, 4):
                raise ParseError("expected: rec_id embeddings sad [embeddings2]", path, lineno)
            rec = parts[0]
            jobs.append(Job(rec, parts[1], parts[2], parts[3] if len(parts) == 4 else None,
                            str(Path(out_dir) / f"{rec}.rttm")))
    if not jobs:
        raise ParseError("manifest lists no recordings", path)
    return jobs


def cmd_diarize(args) -> int:
    run = resolve_run_config(args)
    diarize_config(run)  # validate before touching any input
    if args.manifest:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        jobs = _read_manifest(args.manifest, args.out)
    else:
        if not (args.embeddings and args.sad):
            raise LgpError("--embeddings and --sad are required without --manifest")
        jobs = [Job(args.rec, args.embeddings, args.sad, args.embeddings2, args.out)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_job, j, args.plda, run) for j in jobs]
            logs = [f.result() for f in futures]
    else:
        logs = [run_job(j, args.plda, run) for j in jobs]
    if args.log:
        with open(args.log, "w") as fh:
            fh.write("recording\tpass\titeration\tactive\tmax_change\n")
            for lines in logs:
                fh.writelines(line + "\n" for line in lines)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(num_speakers=args.speakers, dim=args.dim, psi=args.psi, r=args.r,
                      frame_step=args.frame_step, turn_mean=args.turn_mean,
                      file_length=args.length, seed=args.seed, min_turn=args.min_turn,
                      pause_prob=args.pause_prob)
    conv = sample_conversation(cfg, args.rec)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_embedding_table(f"{prefix}.emb", conv.frames)
    write_rttm(f"{prefix}.rttm", conv.truth)
    write_sad(f"{prefix}.sad", args.rec, conv.sad)
    write_plda(f"{prefix}.plda", *matched_plda(cfg, args.window))
    return 0


def cmd_score(args) -> int:
    ref = read_rttm(args.ref)
    hyp = read_rttm(args.hyp)
    breakdown = score_corpus(ref, hyp, DerOptions(args.collar, not args.ignore_overlap))
    print(breakdown.format())
    return 0


def cmd_neff(args) -> int:
    print(f"{'N':>5} {'discrete':>12} {'limit':>12} {'continuous':>12}")
    for n, d, lim, c in neff_table(args.r, args.max_n):
        print(f"{n:>5d} {d:>12.6f} {lim:>12.6f} {c:>12.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgpdiar",
                                     description="Leave-one-out Gaussian PLDA diarization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser(
        "diarize", help="two-pass diarization of one recording or a manifest",
        description="Precedence: command-line flags > --config JSON file > built-in defaults. "
                    f"Config keys: {', '.join(RUN_DEFAULTS)}.")
    d.add_argument("--plda", required=True, help="PLDA model file")
    d.add_argument("--embeddings", help="embedding table used by pass 1 (and pass 2)")
    d.add_argument("--embeddings2", help="optional separate table for pass 2")
    d.add_argument("--sad", help="speech activity file")
    d.add_argument("--rec", help="recording id to take from the SAD file")
    d.add_argument("--out", required=True,
                   help="output RTTM (a directory when --manifest is given)")
    d.add_argument("--manifest", help="lines of: rec_id embeddings sad [embeddings2]")
    d.add_argument("--jobs", type=int, default=1, help="parallel recordings (manifest)")
    d.add_argument("--log", help="write per-iteration log (TSV)")
    d.add_argument("--config", help="JSON file with run settings")
    d.add_argument("--r", type=float, help="correlation of successive segments [0.9]")
    d.add_argument("--n0", help="target segment count, or 'none' for no scaling [none]")
    d.add_argument("--max-speakers", type=int, help="initial speaker count K [10]")
    d.add_argument("--seed", type=int, help="k-means++ seed [0]")
    d.add_argument("--prune-threshold", type=float, help="weight pruning level [1e-3]")
    d.add_argument("--update", choices=["sequential", "parallel"],
                   help="responsibility sweep order [sequential]")
    d.add_argument("--source", choices=["frames", "windows"],
                   help="table holds frame vectors to average, or window embeddings [frames]")
    d.add_argument("--pass1-window", type=float)
    d.add_argument("--pass1-step", type=float)
    d.add_argument("--pass1-iterations", type=int)
    d.add_argument("--pass2-window", type=float)
    d.add_argument("--pass2-step", type=float)
    d.add_argument("--pass2-iterations", type=int)
    d.add_argument("--no-pass2", dest="pass2", action="store_const", const=False,
                   help="stop after the coarse pass")
    d.set_defaults(func=cmd_diarize)

    s = sub.add_parser("synth", help="synthetic conversation with matched PLDA")
    s.add_argument("--out-prefix", required=True,
                   help="writes PREFIX.emb, PREFIX.rttm, PREFIX.sad, PREFIX.plda")
    s.add_argument("--rec", default="synth")
    s.add_argument("--speakers", type=int, default=2)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--psi", type=float, default=9.0, help="across-class variance per dim")
    s.add_argument("--r", type=float, default=0.0, help="frame-level channel correlation")
    s.add_argument("--frame-step", type=float, default=0.1)
    s.add_argument("--turn-mean", type=float, default=6.0)
    s.add_argument("--min-turn", type=float, default=1.0)
    s.add_argument("--pause-prob", type=float, default=1.0)
    s.add_argument("--length", type=float, default=60.0)
    s.add_argument("--window", type=float, default=2.0, help="window the PLDA is matched to")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("score", help="diarization error rate")
    c.add_argument("--ref", required=True)
    c.add_argument("--hyp", required=True)
    c.add_argument("--collar", type=float, default=0.25)
    c.add_argument("--ignore-overlap", action="store_true",
                   help="drop regions where several reference speakers talk")
    c.set_defaults(func=cmd_score)

    n = sub.add_parser("neff", help="effective sample count table")
    n.add_argument("--r", type=float, required=True)
    n.add_argument("--max-n", type=int, default=50)
    n.set_defaults(func=cmd_neff)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (LgpError, ValueError, OSError) as exc:
        print(f"lgpdiar {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
