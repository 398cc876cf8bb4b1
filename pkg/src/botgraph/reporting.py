"""Write evaluation reports: text summary, JSON lines, ROC CSVs and figures."""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import List

import numpy as np

from . import plotting
from .evaluation import EvalReport, ModeResult


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "result"


def _fmt(v, digits=4):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "n/a"
    return f"{v:.{digits}f}"


def config_line(config: dict) -> str:
    return "# config " + json.dumps(config, sort_keys=True, default=str) + "\n"


def write_roc_csv(result: ModeResult, path, config: dict) -> None:
    curve = result.curve
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_line(config))
        fh.write("fpr,tpr,threshold\n")
        for f, t, th in zip(curve.fpr.tolist(), curve.tpr.tolist(), curve.thresholds.tolist()):
            fh.write(f"{f!r},{t!r},{th!r}\n")


def format_text(report: EvalReport) -> str:
    lines: List[str] = [f"evaluation mode: {report.mode}", f"collections: {', '.join(report.names)}", ""]
    for res in report.results:
        s = res.summary()
        m = s["metrics"]
        lines.append(f"[{res.name}]")
        lines.append(
            f"  test windows {s['test_windows']} (positive {s['test_positive_windows']}, "
            f"benign:malicious {_fmt(s['class_ratio_benign_per_malicious'], 2)}), "
            f"train hosts {s['train_hosts']}, test hosts {s['test_hosts']}"
        )
        lines.append(f"  AUROC {_fmt(s['auroc'])}")
        lines.append(
            "  @0.5        acc {a} tpr {tpr} tnr {tnr} fpr {fpr} fnr {fnr} prec {p} f1 {f}".format(
                a=_fmt(m["accuracy"]), tpr=_fmt(m["tpr"]), tnr=_fmt(m["tnr"]), fpr=_fmt(m["fpr"]),
                fnr=_fmt(m["fnr"]), p=_fmt(m["precision"]), f=_fmt(m["f_measure"]),
            )
        )
        if "youden_metrics" in s:
            ym = s["youden_metrics"]
            lines.append(
                "  @Youden {t} acc {a} tpr {tpr} tnr {tnr} fpr {fpr} (threshold chosen on the test ROC)".format(
                    t=_fmt(s["youden_threshold"]), a=_fmt(ym["accuracy"]), tpr=_fmt(ym["tpr"]),
                    tnr=_fmt(ym["tnr"]), fpr=_fmt(ym["fpr"]),
                )
            )
        for w in s["warnings"]:
            lines.append(f"  WARNING: {w}")
        lines.append("")
    if report.matrix is not None:
        avg = report.row_averages()
        lines.append("AUROC matrix (rows: test collection, columns: train collection)")
        header = "test\\train".ljust(14) + "".join(n[:9].rjust(10) for n in report.names) + "Avg".rjust(10)
        lines.append(header)
        for i, name in enumerate(report.names):
            row = "".join(_fmt(v, 2).rjust(10) for v in report.matrix[i])
            lines.append(name[:13].ljust(14) + row + _fmt(avg[i], 2).rjust(10))
        lines.append("")
    return "\n".join(lines)


def write_report(report: EvalReport, outdir, figures: bool = True) -> List[Path]:
    """Write every report artifact into ``outdir``; returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    cfg = report.config

    p = outdir / "report.txt"
    p.write_text(config_line(cfg) + format_text(report), encoding="utf-8")
    written.append(p)

    p = outdir / "metrics.jsonl"
    with open(p, "w", encoding="utf-8") as fh:
        for res in report.results:
            fh.write(json.dumps({"config": cfg, **res.summary()}, sort_keys=True) + "\n")
    written.append(p)

    for res in report.results:
        if res.curve is None:
            continue
        stem = "roc_" + _slug(res.name.replace("->", "_to_"))
        p = outdir / f"{stem}.csv"
        write_roc_csv(res, p, cfg)
        written.append(p)
        if figures:
            p = outdir / f"{stem}.svg"
            plotting.plot_roc(res.curve, p, title=res.name, config=cfg)
            written.append(p)

    if report.matrix is not None:
        avg = report.row_averages()
        p = outdir / "auroc_matrix.csv"
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(config_line(cfg))
            fh.write("test\\train," + ",".join(report.names) + ",Avg\n")
            for i, name in enumerate(report.names):
                vals = [repr(float(v)) if np.isfinite(v) else "" for v in report.matrix[i]]
                fh.write(name + "," + ",".join(vals) + "," + (repr(float(avg[i])) if np.isfinite(avg[i]) else "") + "\n")
        written.append(p)
        if figures:
            p = outdir / "auroc_matrix.svg"
            plotting.plot_auroc_matrix(report.matrix, report.names, p, avg, config=cfg)
            written.append(p)
    return written
