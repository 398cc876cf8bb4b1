"""Command line entry point: ``botgraph {synth,extract,train,eval,predict}``.

Exit codes: 0 success, 2 input/format error, 3 configuration error,
4 numeric divergence or convergence failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from . import __version__
from .errors import BotgraphError, ConfigurationError, InputFormatError
from .evaluation import (
    EVAL_MODES,
    ConfusionCounts,
    EvalReport,
    SplitConfig,
    evaluate_modes,
    metrics,
    score_samples,
    split,
)
from .graphfeat import N_FEATURES, ConvergenceConfig, canonical_mode
from .ingest import GroundTruth, read_events, read_ground_truth, write_events_csv, write_ground_truth
from .model import TrainConfig, load_model, load_model_document, predict_scores, save_model, train
from .pipeline import (
    CACHE_MAGIC,
    cache_meta,
    extract_features,
    format_cache,
    prepare_series,
    prepare_windows,
    read_cache,
    write_cache,
)
from .plotting import plot_loss_history
from .reporting import config_line, write_report
from .synth import PATTERNS, ScenarioSpec, default_suite, format_spec, generate, read_spec
from .timeseries import SamplingConfig, assemble, slice_windows, stack, write_windows_csv
from .windowing import WindowConfig

log = logging.getLogger("botgraph")


# ------------------------------------------------------------------- parsing


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1, help="feature-extraction processes")
    g.add_argument("--window-s", type=float, default=300.0)
    g.add_argument("--step-s", type=float, default=150.0)
    g.add_argument("--graph-mode", choices=("multi", "weighted"), default="multi")
    g.add_argument("--epsilon", type=float, default=1e-6)
    g.add_argument("--max-iters", type=int, default=10000)
    g.add_argument("--epochs", type=int, default=200)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--malicious-weight", type=float, default=6.0)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--threshold", type=float, default=0.5)
    g.add_argument("-v", "--verbose", action="store_true")


def _sampling_args(p):
    p.add_argument("--neg-pos-ratio", type=int, default=10)
    p.add_argument("--slice-len", type=int, default=5)
    p.add_argument("--slice-overlap", type=int, default=2)
    p.add_argument("--no-undersample", action="store_true", help="keep every benign host")
    p.add_argument("--train-fraction", type=float, default=0.7)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="botgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"botgraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled capture")
    _common(p)
    p.add_argument("--spec", help="key=value scenario file")
    p.add_argument("--pattern", choices=PATTERNS)
    p.add_argument("--bots", type=int)
    p.add_argument("--benign", type=int)
    p.add_argument("--duration-s", type=float)
    p.add_argument("--out", help="event CSV to write")
    p.add_argument("--truth", help="ground-truth CSV to write")
    p.add_argument("--suite", help="write the default three-pattern suite into this directory")

    p = sub.add_parser("extract", help="capture -> per-interval feature cache")
    _common(p)
    p.add_argument("input", help="event CSV or classic pcap")
    p.add_argument("--truth", help="ground-truth CSV (host,infection_time_s)")
    p.add_argument("--out", required=True, help="feature cache to write")
    p.add_argument("--name", help="collection name recorded in the cache")
    p.add_argument("--duration-s", type=float, help="capture duration (default: last timestamp)")
    p.add_argument("--timing-report", help="JSON timing report path (default: <out>.timing.json)")
    p.add_argument(
        "--benchmark-workers",
        help="comma-separated worker counts to time (e.g. 1,4); output must match across them",
    )

    p = sub.add_parser("train", help="feature caches -> model")
    _common(p)
    _sampling_args(p)
    p.add_argument("caches", nargs="+")
    p.add_argument("--model", required=True, help="model file to write")
    p.add_argument("--history", help="loss history CSV (default: <model>.history.csv)")
    p.add_argument("--manifest", help="split manifest JSON (default: <model>.split.json)")
    p.add_argument("--full", action="store_true", help="train on every host, no held-out split")
    p.add_argument("--windows-dump", help="write the training windows as CSV")

    p = sub.add_parser("eval", help="run an evaluation protocol and write reports")
    _common(p)
    _sampling_args(p)
    p.add_argument("caches", nargs="+")
    p.add_argument("--mode", choices=EVAL_MODES, default="combined")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--model", help="score with this model instead of training")
    p.add_argument("--diagonal", choices=("within", "full"), default="within")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("predict", help="per-host verdicts for a capture")
    _common(p)
    p.add_argument("input", help="event CSV, pcap, or feature cache")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="verdict CSV")
    p.add_argument("--duration-s", type=float)
    return parser


def _window_cfg(a):
    return WindowConfig(a.window_s, a.step_s)


def _conv_cfg(a):
    return ConvergenceConfig(epsilon=a.epsilon, max_iters=a.max_iters)


def _train_cfg(a):
    return TrainConfig(
        epochs=a.epochs,
        learning_rate=a.lr,
        malicious_weight=a.malicious_weight,
        batch_size=a.batch_size,
        seed=a.seed,
    )


def _sampling_cfg(a):
    return SamplingConfig(a.neg_pos_ratio, a.slice_len, a.slice_overlap, a.seed)


# ------------------------------------------------------------------ commands


def cmd_synth(a) -> int:
    if a.suite:
        outdir = Path(a.suite)
        outdir.mkdir(parents=True, exist_ok=True)
        for spec in default_suite(a.seed):
            _write_scenario(spec, outdir / f"{spec.label}.csv", outdir / f"{spec.label}.truth.csv")
        return 0
    spec = read_spec(a.spec) if a.spec else ScenarioSpec(seed=a.seed)
    overrides = {}
    if a.pattern:
        overrides["pattern"] = a.pattern
    if a.bots is not None:
        overrides["bot_hosts"] = a.bots
    if a.benign is not None:
        overrides["benign_hosts"] = a.benign
    if a.duration_s is not None:
        overrides["duration_s"] = a.duration_s
    spec = replace(spec, **overrides)
    if not (a.out and a.truth):
        raise ConfigurationError("synth needs --out and --truth (or --suite DIR)")
    _write_scenario(spec, Path(a.out), Path(a.truth))
    return 0


def _write_scenario(spec, events_path: Path, truth_path: Path):
    events, truth = generate(spec)
    write_events_csv(events, events_path)
    write_ground_truth(truth, truth_path)
    events_path.with_suffix(".spec").write_text(format_spec(spec), encoding="utf-8")
    log.info("wrote %d events, %d bots -> %s", len(events), len(truth), events_path)


def _load_truth(path) -> GroundTruth:
    if not path:
        log.warning("no ground truth given: every host labeled benign")
        return GroundTruth()
    if not Path(path).exists():
        log.warning("ground truth %s not found: every host labeled benign", path)
        return GroundTruth()
    return read_ground_truth(path)


def cmd_extract(a) -> int:
    window, conv = _window_cfg(a), _conv_cfg(a)
    mode = canonical_mode(a.graph_mode)
    truth = _load_truth(a.truth)
    counts = [a.workers]
    if a.benchmark_workers:
        counts = [int(x) for x in a.benchmark_workers.split(",") if x.strip()]
    runs = []
    for w in counts:
        res = extract_features(read_events(a.input), window, mode, conv, w, a.duration_s)
        runs.append(res)
    result = runs[-1]
    name = a.name or Path(a.input).stem
    meta = cache_meta(window, mode, conv, result.starts, truth, name, Path(a.input).name)
    write_cache(a.out, meta, result.features)

    reference = format_cache(meta, runs[0].features)
    identical = all(format_cache(meta, r.features) == reference for r in runs)
    base = runs[0].report.wall_s
    timing = {
        "config": meta | {"truth": None, "interval_starts": None},
        "runs": [r.report.as_dict() for r in runs],
        "speedup_vs_first": [base / r.report.wall_s if r.report.wall_s > 0 else None for r in runs],
        "identical_output": identical,
    }
    tpath = a.timing_report or str(a.out) + ".timing.json"
    Path(tpath).write_text(json.dumps(timing, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    rep = result.report
    print(
        f"{rep.intervals} intervals, {rep.events} events, {rep.wall_s:.2f} s "
        f"({rep.throughput:.0f} events/s, workers={rep.workers}, mode={mode})"
    )
    if len(runs) > 1:
        for r, sp in zip(runs, timing["speedup_vs_first"]):
            print(f"  workers={r.report.workers}: {r.report.wall_s:.2f} s, speedup {sp:.2f}x")
        print(f"  identical output across worker counts: {identical}")
        if not identical:
            raise BotgraphError("feature output differs across worker counts")
    return 0


def _load_windows(a):
    caches = [read_cache(p) for p in a.caches]
    sampling = _sampling_cfg(a)
    series = prepare_series(caches, sampling, do_undersample=not a.no_undersample)
    return caches, sampling, series, prepare_windows(series, sampling)


def _pipeline_config(a, caches, sampling) -> dict:
    return {
        "caches": [c.name for c in caches],
        "feature_config": {k: caches[0].meta.get(k) for k in ("window_s", "step_s", "graph_mode", "epsilon", "damping")},
        "sampling": asdict(sampling),
        "undersample": not a.no_undersample,
        "train_fraction": None if getattr(a, "full", False) else a.train_fraction,
    }


def cmd_train(a) -> int:
    caches, sampling, series, windows = _load_windows(a)
    samples = [s for name in windows for s in windows[name]]
    if not any(s.label for s in samples):
        raise ConfigurationError("no malicious windows in the training data")
    tcfg = _train_cfg(a)
    pcfg = _pipeline_config(a, caches, sampling)
    if a.full:
        train_set, test_set = samples, []
    else:
        train_set, test_set = split(samples, SplitConfig(a.train_fraction, a.seed))
    X, y = stack(train_set)
    result = train(X, y, tcfg)
    train_scores = predict_scores(result.params, X)
    counts = ConfusionCounts.from_scores(train_scores, y, a.threshold)
    acc = float(metrics(counts).accuracy)

    manifest = {
        "config": pcfg,
        "train": [list(k) for k in sorted({s.key for s in train_set})],
        "test": [list(k) for k in sorted({s.key for s in test_set})],
    }
    extra = {"pipeline": pcfg, "split_manifest": manifest, "train_accuracy": acc,
             "initial_loss": result.initial_loss}
    save_model(result.params, tcfg, a.model, extra)
    hist_path = a.history or str(a.model) + ".history.csv"
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write(config_line({"train": asdict(tcfg), **pcfg}))
        fh.write("epoch,loss\n")
        fh.write(f"0,{result.initial_loss!r}\n")
        for k, v in enumerate(result.history, start=1):
            fh.write(f"{k},{v!r}\n")
    plot_loss_history(
        [result.initial_loss] + list(result.history), str(a.model) + ".loss.svg", config=extra["pipeline"]
    )
    man_path = a.manifest or str(a.model) + ".split.json"
    Path(man_path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if a.windows_dump:
        write_windows_csv(train_set, a.windows_dump)
    final = result.history[-1] if result.history else result.initial_loss
    print(
        f"trained on {len(train_set)} windows ({int(y.sum())} malicious), "
        f"loss {result.initial_loss:.4g} -> {final:.4g}, train accuracy {acc:.4f}"
    )
    return 0


def cmd_eval(a) -> int:
    caches, sampling, series, windows = _load_windows(a)
    tcfg = _train_cfg(a)
    pcfg = _pipeline_config(a, caches, sampling)
    if a.model:
        params = load_model(a.model)
        doc = load_model_document(a.model)
        manifest = (doc.get("metadata") or {}).get("split_manifest") or {}
        held_out = {tuple(k) for k in manifest.get("test", [])}
        pooled = [s for name in windows for s in windows[name]]
        if held_out and any(s.key in held_out for s in pooled):
            pooled = [s for s in pooled if s.key in held_out]
        res = score_samples(params, pooled, f"model:{Path(a.model).name}", train_sets=[], test_sets=list(windows))
        report = EvalReport("model", [res], list(windows), config={"model": str(a.model), **pcfg})
    else:
        report = evaluate_modes(
            windows, a.mode, tcfg, SplitConfig(a.train_fraction, a.seed), a.diagonal, a.workers
        )
        report.config.update(pcfg)
    single = [r.name for r in report.results if r.curve is None]
    write_report(report, a.out, figures=not a.no_figures)
    for r in report.results:
        print(f"{r.name}: AUROC {r.auroc if r.auroc is None else round(r.auroc, 4)}")
    if single:
        raise ConfigurationError(f"single-class test set in {', '.join(single)}: ROC undefined")
    return 0


def cmd_predict(a) -> int:
    params = load_model(a.model)
    doc = load_model_document(a.model)
    if params.input_dim != N_FEATURES:
        raise InputFormatError(
            f"model expects {params.input_dim} features per interval, extractor produces {N_FEATURES}"
        )
    pipe = (doc.get("metadata") or {}).get("pipeline") or {}
    samp = pipe.get("sampling") or {}
    sampling = SamplingConfig(
        slice_len=int(samp.get("slice_len", 5)), slice_overlap=int(samp.get("slice_overlap", 2))
    )
    with open(a.input, "rb") as fh:
        is_cache = fh.read(len(CACHE_MAGIC)) == CACHE_MAGIC.encode()
    if is_cache:
        cache = read_cache(a.input)
        intervals, starts = cache.intervals, cache.starts
    else:
        res = extract_features(
            read_events(a.input), _window_cfg(a), canonical_mode(a.graph_mode), _conv_cfg(a), a.workers, a.duration_s
        )
        intervals, starts = res.features, res.starts
    series = assemble(intervals, None, starts=starts)
    config = {"model": str(a.model), "threshold": a.threshold, "sampling": asdict(sampling),
              "input": Path(a.input).name}
    flagged = 0
    with open(a.out, "w", encoding="utf-8") as fh:
        fh.write(config_line(config))
        fh.write("host,windows,max_score,mean_score,verdict\n")
        for s in series:
            wins = slice_windows([s], sampling)
            if not wins:
                fh.write(f"{s.host},0,,,insufficient data\n")
                continue
            X, _ = stack(wins)
            scores = predict_scores(params, X)
            top = float(scores.max())
            verdict = "botnet" if top >= a.threshold else "normal"
            flagged += verdict == "botnet"
            fh.write(f"{s.host},{len(wins)},{top!r},{float(scores.mean())!r},{verdict}\n")
    print(f"{len(series)} hosts, {flagged} flagged as botnet at threshold {a.threshold}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except BotgraphError as exc:
        print(f"botgraph {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
