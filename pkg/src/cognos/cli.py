"""Command-line front end.

    cognos synth SPEC.json --out PREFIX
    cognos train TRAIN.csv --config CFG.json --out MODEL.json [--seed N]
    cognos score MODEL.json TEST.csv --out SCORES [--lambda X] [--raw]
    cognos eval SCORES LABELS --ratio R
    cognos diagnose MODEL.json DATA.csv --out PREFIX
    cognos ablate TRAIN.csv TEST.csv --labels LABELS --config CFG.json

Data goes to the declared files or standard output; log messages and
errors go to standard error. The exit status is 0 only on success.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, ingest, metrics, pipeline
from .backbone import load_checkpoint, save_checkpoint
from .core import MultiSeries

log = logging.getLogger("cognos")

ABLATION_ROWS = (
    ("gwnr", "COGNOS (GWNR + KS)"),
    ("mse_plus_smooth", "w/o GWNR + KS"),
    ("gwnr_no_smooth", "w/ GWNR + w/o Filter"),
    ("vanilla_mse", "w/o GWNR + w/o Filter"),
)


class CliError(Exception):
    pass


def _fmt(v: float) -> str:
    return "%.17g" % v


def _sidecar(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.name + suffix)


def _load_series(path, labels_path=None, label_column=None) -> MultiSeries:
    series = ingest.load_csv(path, label_column=label_column)
    if labels_path is not None:
        labels = ingest.load_labels(labels_path)
        if labels.size != series.T:
            raise CliError(f"{labels_path}: {labels.size} labels for {series.T} rows in {path}")
        series = MultiSeries(series.values, labels, series.channel_names)
    return series


def _run_config(args) -> pipeline.RunConfig:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "lam", None) is not None:
        cfg = replace(cfg, lam=args.lam)
    if getattr(args, "ratio", None) is not None:
        cfg = replace(cfg, ratio=args.ratio)
    return cfg


def write_scores(scores, path) -> None:
    """One aggregated score per line, plus ``<path>.channels`` with one row per timestep."""
    Path(path).write_text("".join(_fmt(v) + "\n" for v in scores.aggregated), encoding="utf-8")
    rows = (" ".join(_fmt(v) for v in row) + "\n" for row in scores.per_channel)
    _sidecar(path, ".channels").write_text("".join(rows), encoding="utf-8")


def read_scores(path) -> np.ndarray:
    out = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        cell = line.strip()
        if not cell:
            continue
        try:
            out.append(float(cell))
        except ValueError:
            raise CliError(f"{path}: line {line_no}: cannot parse score {cell!r}") from None
    if not out:
        raise CliError(f"{path}: no scores")
    scores = np.asarray(out)
    if not np.all(np.isfinite(scores)):
        raise CliError(f"{path}: non-finite score at line {int(np.flatnonzero(~np.isfinite(scores))[0]) + 1}")
    return scores


def write_history(history, path) -> None:
    lines = ["epoch,mse,mmd,acf,total\n"]
    for i, rec in enumerate(history):
        lines.append(",".join([str(i), _fmt(rec.mse), _fmt(rec.mmd), _fmt(rec.acf), _fmt(rec.total)]) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def ablation_table(results: dict) -> str:
    width = max(len(name) for _, name in ABLATION_ROWS)
    head = f"{'variant':<{width}}  {'AP':>6}  {'AR':>6}  {'AF':>6}"
    lines = [head, "-" * len(head)]
    for mode, name in ABLATION_ROWS:
        avg = results[mode].report.average
        lines.append(f"{name:<{width}}  {avg.precision:6.3f}  {avg.recall:6.3f}  {avg.f:6.3f}")
    return "\n".join(lines) + "\n"


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = ingest.SyntheticSpec.from_json(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    series = ingest.generate_synthetic(spec)
    prefix = Path(args.out)
    ingest.write_csv(series, _sidecar(prefix, ".csv"))
    ingest.write_labels(series.labels, _sidecar(prefix, ".labels"))
    log.info("wrote %d rows to %s.csv and %s.labels", series.T, prefix, prefix)
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    series = _load_series(args.train, label_column=args.label_column)
    stage = pipeline.fit_stage(cfg, series)
    save_checkpoint(stage.model, args.out)
    history_path = args.history or _sidecar(args.out, ".history.csv")
    write_history(stage.history, history_path)
    log.info("trained %s for %d epochs; checkpoint %s, history %s", cfg.mode, len(stage.history), args.out, history_path)
    return 0


def cmd_score(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if model.normalizer is None or model.measurement_noise is None:
        raise CliError(f"{args.checkpoint}: checkpoint lacks normalizer or measurement noise; was it written by train?")
    series = _load_series(args.test, label_column=args.label_column)
    if series.D != model.channels:
        raise CliError(f"{args.test} has {series.D} channels, model expects {model.channels}")
    res = pipeline.residuals_for(model, series)
    lam = 1.0 if args.lam is None else args.lam
    scores = pipeline.score_residuals(model, res, not args.raw, lam, args.aggregate)
    write_scores(scores, args.out)
    log.info("wrote %d scores to %s", series.T, args.out)
    return 0


def cmd_eval(args) -> int:
    scores = read_scores(args.scores)
    labels = ingest.load_labels(args.labels)
    if labels.size != scores.size:
        raise CliError(f"{scores.size} scores but {labels.size} labels")
    report = metrics.evaluate_scores(scores, labels, args.ratio)
    sys.stdout.write(report.to_json())
    return 0


def cmd_diagnose(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if model.normalizer is None:
        raise CliError(f"{args.checkpoint}: checkpoint lacks a normalizer")
    series = _load_series(args.data, label_column=args.label_column)
    if series.D != model.channels:
        raise CliError(f"{args.data} has {series.D} channels, model expects {model.channels}")
    res = pipeline.residuals_for(model, series)
    verdicts = diagnostics.write_channel_files(res, args.out, list(series.channel_names), args.max_lag, args.alpha)
    for name, v in zip(series.channel_names, verdicts):
        log.info("%s: %s", name, v.line())
    worst = max(range(len(verdicts)), key=lambda d: abs(verdicts[d].worst_value))
    overall = diagnostics.Verdict(all(v.passed for v in verdicts), verdicts[worst].worst_lag, verdicts[worst].worst_value)
    sys.stdout.write(f"{overall.line()} channel={series.channel_names[worst]}\n")
    return 0


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    train = _load_series(args.train, label_column=args.label_column)
    test = _load_series(args.test, args.labels, args.label_column)
    if test.labels is None:
        raise CliError("ablate needs test labels (--labels or --label-column)")
    results = pipeline.ablation(cfg, train, test)
    sys.stdout.write(ablation_table(results))
    if args.out:
        doc = {"config": cfg.to_dict(), "reports": {m: r.report.to_dict() for m, r in results.items()}}
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cognos", description="Residual-whitening anomaly detection with Kalman smoothing.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on standard error")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    s.add_argument("spec", help="JSON dataset specification")
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.labels")
    s.add_argument("--seed", type=int, help="override the spec seed")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a backbone and write a checkpoint")
    s.add_argument("train", help="training CSV (normal data)")
    s.add_argument("--config", help="flat JSON run configuration")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--history", help="loss history CSV (default: OUT.history.csv)")
    s.add_argument("--seed", type=int)
    s.add_argument("--label-column")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="anomaly scores for a CSV")
    s.add_argument("checkpoint")
    s.add_argument("test", help="CSV to score")
    s.add_argument("--out", required=True, help="score file; per-channel scores go to OUT.channels")
    s.add_argument("--lambda", dest="lam", type=float, help="process/measurement noise ratio (default 1.0)")
    s.add_argument("--raw", action="store_true", help="skip smoothing: squared residuals summed over channels")
    s.add_argument("--aggregate", choices=("sum", "mean"), default="sum")
    s.add_argument("--label-column")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("eval", help="metrics report for a score file")
    s.add_argument("scores")
    s.add_argument("labels")
    s.add_argument("--ratio", type=float, required=True, help="fraction of timesteps flagged")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("diagnose", help="ACF and Q-Q data of the residuals")
    s.add_argument("checkpoint")
    s.add_argument("data")
    s.add_argument("--out", required=True, help="prefix for PREFIX.<channel>.acf.txt and .qq.txt")
    s.add_argument("--max-lag", type=int, default=10)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--label-column")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("ablate", help="compare the four training/scoring variants")
    s.add_argument("train")
    s.add_argument("test")
    s.add_argument("--labels", help="test labels, one 0/1 per line")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--ratio", type=float)
    s.add_argument("--out", help="also write the reports as JSON")
    s.add_argument("--label-column")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except pipeline.PipelineError as exc:
        print(f"cognos {args.command}: {exc}", file=sys.stderr)
    except (CliError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"cognos {args.command}: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
