"""Command line interface.

Subcommands:
  simulate   scenario config -> frames file (multi-walker, or a labeled
             single-subject corpus with mode=corpus)
  train      corpus frames file -> model file; prints the loss curve as CSV
  run        frames file + model file -> report file
  eval       report file + ground-truth frames file -> metrics (+ CSV)
  gradcheck  verify analytic gradients against finite differences
  bench      latency distribution of the full loop on a synthetic scenario

All tunables come from a key=value config file (see ``formats``); every key
has a default matching the standard indoor-monitoring parameter set.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from gaittrack import formats, metrics, pipeline, simulator
from gaittrack.classifier import network, serialize, training
from gaittrack.clustering import Frame

log = logging.getLogger("gaittrack")


def _load_config(path: str | None) -> dict:
    return formats.parse_config(path) if path else {}


def _cmd_simulate(args) -> int:
    values = _load_config(args.scenario)
    mode = values.get("mode", "scenario")
    if mode == "corpus":
        ids = [int(s) for s in str(values.get("subjects", "0,1,2,3,4,5,6,7")
                                   ).split(",")]
        bank = simulator.default_profiles(max(ids) + 1)
        walks = simulator.training_walks(
            [bank[i] for i in ids],
            minutes_per_subject=float(values.get("minutes_per_subject", 1.0)),
            rooms=int(values.get("rooms", 3)),
            seed=int(values.get("seed", 0)),
            fps=float(values.get("fps", simulator.DEFAULT_FPS)))
        frames: list[Frame] = []
        truth = []
        for subject, walk in walks:
            for frame in walk:
                frames.append(frame)
                truth.append([(subject, 0.0, 0.0)])
        formats.write_frames(args.out, frames, truth)
        print(f"wrote {len(frames)} corpus frames "
              f"({len(walks)} walks) to {args.out}")
        return 0
    scenario = formats.scenario_from(values)
    frames, truth = simulator.generate(scenario)
    formats.write_frames(args.out, frames, truth)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _read_corpus_file(path: str, n_subjects: int) -> training.TrainingCorpus:
    frames, truth = formats.read_frames(path)
    if truth is None:
        raise ValueError(f"{path}: corpus frames need ground-truth labels")
    walks: list[tuple[int, list[Frame]]] = []
    prev_k = None
    prev_subject = None
    for frame, gt in zip(frames, truth):
        if len(gt) != 1:
            raise ValueError(f"{path}: corpus frames must carry exactly one "
                             f"subject, frame {frame.k} has {len(gt)}")
        subject = gt[0][0]
        if prev_k is None or frame.k <= prev_k or subject != prev_subject:
            walks.append((subject, []))
        walks[-1][1].append(frame)
        prev_k, prev_subject = frame.k, subject
    return simulator.corpus_from_walks(walks, n_subjects)


def _cmd_train(args) -> int:
    values = _load_config(args.config)
    cfg = formats.train_config_from(values)
    n_subjects = int(values.get("num_subjects", 8))
    corpus = _read_corpus_file(args.corpus, n_subjects)
    log.info("training on %d windows, %d classes", len(corpus.windows),
             n_subjects)
    model, logbook = training.train(corpus, cfg)
    serialize.save_model(model, args.out)
    sys.stdout.write(logbook.as_csv())
    print(f"# best epoch {logbook.best_epoch}; model -> {args.out} "
          f"({model.parameter_count} parameters)")
    return 0


def _cmd_run(args) -> int:
    values = _load_config(args.config)
    cfg = formats.pipeline_config_from(values)
    model = serialize.load_model(args.model) if args.model else None
    frames, _ = formats.read_frames(args.frames)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write('{"format": "gaittrack-report", "version": 1}\n')
        import json as _json

        def sink(rep):
            fh.write(_json.dumps(formats.report_to_record(rep)) + "\n")

        summary = pipeline.run(frames, cfg, model, sink)
    print(f"processed {summary.n_frames} frames; per-frame p95 "
          f"{summary.p95_total_ms:.1f} ms (tracking {summary.p95_track_ms:.1f}, "
          f"inference {summary.p95_infer_ms:.1f}); {summary.respawns} respawns")
    return 0


def _cmd_eval(args) -> int:
    reports = formats.read_report(args.report)
    _frames, truth = formats.read_frames(args.frames)
    if truth is None:
        print(f"error: {args.frames} carries no ground truth", file=sys.stderr)
        return 2
    hyp = metrics.reports_to_hypotheses(reports)
    result = metrics.evaluate(truth, hyp, match_radius=args.radius,
                              merge=not args.no_merge)
    print(f"MOTA      {result.mota:.4f}  (miss {result.misses}, "
          f"fp {result.false_positives}, mismatch {result.mismatches}, "
          f"gt {result.gt_total})")
    for subject, acc in result.per_subject_accuracy.items():
        print(f"subject {subject}: accuracy {acc:.4f} over "
              f"{result.per_subject_frames[subject]} tracked frames")
    print(f"weighted identification accuracy {result.weighted_accuracy:.4f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("metric,subject,value\n")
            fh.write(f"mota,,{result.mota:.6f}\n")
            fh.write(f"weighted_accuracy,,{result.weighted_accuracy:.6f}\n")
            for subject, acc in result.per_subject_accuracy.items():
                fh.write(f"accuracy,{subject},{acc:.6f}\n")
        print(f"metrics CSV -> {args.csv}")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    model = network.TcpcnModel(4, seed=args.seed, dtype=np.float64, p_drop=0.0)
    seq = rng.standard_normal((2, 6, 8, 5))
    y = np.eye(4)[rng.integers(0, 4, size=2)]
    err = network.grad_check(model, seq, y, n_samples=200, rng=rng)
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err <= 1e-3 else 1


def _cmd_bench(args) -> int:
    values = _load_config(args.config)
    cfg = formats.pipeline_config_from(values)
    model = serialize.load_model(args.model) if args.model else None
    if model is None:
        cfg.classify = False
    bank = simulator.default_profiles(max(args.subjects, 3))
    scenario = simulator.Scenario(profiles=bank[:args.subjects],
                                  duration=args.frames, seed=cfg.seed)
    frames, _ = simulator.generate(scenario)
    summary = pipeline.run(frames, cfg, model)
    track_ms = np.array([r.t_track_ms for r in summary.reports])
    infer_ms = np.array([r.t_infer_ms for r in summary.reports])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("k,t_track_ms,t_infer_ms\n")
        for rep in summary.reports:
            fh.write(f"{rep.k},{rep.t_track_ms:.3f},{rep.t_infer_ms:.3f}\n")
    total = track_ms + infer_ms
    print(f"frames: {len(total)}")
    print(f"tracking  ms: mean {track_ms.mean():.2f}  p50 "
          f"{np.percentile(track_ms, 50):.2f}  p95 {np.percentile(track_ms, 95):.2f}")
    print(f"inference ms: mean {infer_ms.mean():.2f}  p50 "
          f"{np.percentile(infer_ms, 50):.2f}  p95 {np.percentile(infer_ms, 95):.2f}")
    print(f"total     ms: p95 {np.percentile(total, 95):.2f} "
          f"({1000.0 / max(np.percentile(total, 95), 1e-9):.1f} fps sustained)")
    print(f"latency CSV -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaittrack",
        description="Track and identify walkers in sparse radar point-clouds")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="scenario config -> frames file")
    p.add_argument("--scenario", help="key=value scenario config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="corpus frames file -> model file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("run", help="frames + model -> report file")
    p.add_argument("--frames", required=True)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="report + ground truth -> metrics")
    p.add_argument("--report", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--no-merge", action="store_true",
                   help="score raw track indices without identity merging")
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("bench", help="latency distribution on synthetic data")
    p.add_argument("--frames", type=int, default=600)
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--model")
    p.add_argument("--config")
    p.add_argument("--out", default="latency.csv")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
