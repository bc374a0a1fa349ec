"""Writers for all file artifacts: metric/ablation/history CSVs, attention
heatmaps (CSV + SVG) and Shapley reports (CSV + text).

Every file starts with a comment line embedding the run's config hash and
seed. Score files contain no wall-clock values and are byte-reproducible;
per-sample timing goes to its own CSV because it never is.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import InputFormatError
from .explain import HeatmapExport, ShapleyReport
from .training import EpochStats, MetricsReport


def _fmt(x: float) -> str:
    return repr(float(x))


def header_comment(kind: str, config_hash: str, seed: int) -> str:
    return f"# fusenews {kind} config_hash={config_hash} seed={seed}\n"


def write_metrics_csv(report: MetricsReport, path: str, config_hash: str) -> None:
    """One row per fold plus one aggregate row (means, with std columns).

    Scores only, so two identical runs produce identical bytes.
    """
    score_cols = ("accuracy", "precision", "recall", "f1")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("metrics", config_hash, report.seed))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["fold", "n", "tp", "fp", "fn", "tn"]
            + list(score_cols)
            + [f"{c}_std" for c in score_cols]
            + ["flags"]
        )
        for f in report.folds:
            writer.writerow(
                [f.fold, f.cm.total, f.cm.tp, f.cm.fp, f.cm.fn, f.cm.tn]
                + [_fmt(getattr(f, c)) for c in score_cols]
                + ["", "", "", ""]
                + [";".join(f.flags)]
            )
        writer.writerow(
            ["aggregate", sum(f.cm.total for f in report.folds), "", "", "", ""]
            + [_fmt(report.mean(c)) for c in score_cols]
            + [_fmt(report.std(c)) for c in score_cols]
            + [""]
        )


def write_timings_csv(report: MetricsReport, path: str, config_hash: str) -> None:
    """Wall-clock per-sample processing time per fold; not reproducible by nature."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("timings", config_hash, report.seed))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fold", "time_ms_per_sample"])
        for f in report.folds:
            writer.writerow([f.fold, _fmt(f.time_ms)])
        writer.writerow(["aggregate_mean", _fmt(report.mean("time_ms"))])


def metrics_text(report: MetricsReport, title: str = "cross-validation") -> str:
    out = io.StringIO()
    out.write(f"{title} over {len(report.folds)} folds (seed {report.seed})\n")
    for f in report.folds:
        out.write(
            f"  fold {f.fold}: n={f.cm.total} acc={f.accuracy:.4f} "
            f"P={f.precision:.4f} R={f.recall:.4f} F1={f.f1:.4f} "
            f"({f.time_ms:.3f} ms/sample)\n"
        )
    for m in ("accuracy", "precision", "recall", "f1"):
        out.write(f"  {m}: {report.mean(m):.4f} +/- {report.std(m):.4f}\n")
    out.write(f"  time: {report.mean('time_ms'):.3f} ms/sample\n")
    return out.getvalue()


def write_metrics_text(report: MetricsReport, path: str, config_hash: str, title: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header_comment("report", config_hash, report.seed))
        fh.write(metrics_text(report, title))


def write_ablation_csv(
    rows: list[tuple[str, MetricsReport]], path: str, config_hash: str, seed: int
) -> None:
    """One row per structural configuration; F1/precision/recall tracked."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("ablation", config_hash, seed))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "config",
                "f1_mean",
                "f1_std",
                "precision_mean",
                "precision_std",
                "recall_mean",
                "recall_std",
                "accuracy_mean",
                "accuracy_std",
            ]
        )
        for name, report in rows:
            writer.writerow(
                [
                    name,
                    _fmt(report.mean("f1")),
                    _fmt(report.std("f1")),
                    _fmt(report.mean("precision")),
                    _fmt(report.std("precision")),
                    _fmt(report.mean("recall")),
                    _fmt(report.std("recall")),
                    _fmt(report.mean("accuracy")),
                    _fmt(report.std("accuracy")),
                ]
            )


def write_history_csv(history: list[EpochStats], path: str, config_hash: str, seed: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("history", config_hash, seed))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_f1"])
        for h in history:
            writer.writerow([h.epoch, _fmt(h.train_loss), _fmt(h.val_loss), _fmt(h.val_f1)])


# ---------------------------------------------------------------------------
# Attention heatmaps
# ---------------------------------------------------------------------------

def write_heatmap_csv(export: HeatmapExport, path: str, config_hash: str, seed: int) -> None:
    """All per-head maps plus the head average, one block per head."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("attention-heatmap", config_hash, seed))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["head", "row"] + export.labels)
        heads: list[tuple[str, np.ndarray]] = [
            (str(h), export.per_head[h]) for h in range(export.per_head.shape[0])
        ]
        heads.append(("mean", export.averaged))
        for head_name, matrix in heads:
            for i, row_label in enumerate(export.labels):
                writer.writerow([head_name, row_label] + [_fmt(v) for v in matrix[i]])


def parse_heatmap_csv(path: str) -> dict[str, np.ndarray]:
    """Inverse of :func:`write_heatmap_csv`: head name -> matrix."""
    blocks: dict[str, list[list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise InputFormatError("empty heatmap file", path=path)
    for row in rows[1:]:
        blocks.setdefault(row[0], []).append([float(v) for v in row[2:]])
    return {head: np.array(mat, dtype=np.float64) for head, mat in blocks.items()}


def heatmap_svg(export: HeatmapExport, config_hash: str, seed: int) -> str:
    """Standalone SVG grid of the head-averaged attention map."""
    matrix = export.averaged
    n = matrix.shape[0]
    cell = 42
    margin_left, margin_top = 150, 120
    width = margin_left + n * cell + 20
    height = margin_top + n * cell + 20
    vmax = float(matrix.max()) if matrix.size else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f"<!-- fusenews attention-heatmap config_hash={config_hash} seed={seed} -->",
        '<style>text{font-family:monospace;font-size:11px;}</style>',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(n):
        for j in range(n):
            frac = matrix[i, j] / vmax if vmax > 0 else 0.0
            # white -> dark blue ramp
            r = int(255 - 205 * frac)
            g = int(255 - 180 * frac)
            b = 255
            x = margin_left + j * cell
            y = margin_top + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({r},{g},{b})" stroke="#888"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle">'
                f"{matrix[i, j]:.2f}</text>"
            )
    for i, label in enumerate(export.labels):
        y = margin_top + i * cell + cell / 2 + 4
        parts.append(f'<text x="{margin_left - 6}" y="{y}" text-anchor="end">{label}</text>')
        x = margin_left + i * cell + cell / 2
        parts.append(
            f'<text x="{x}" y="{margin_top - 8}" text-anchor="start" '
            f'transform="rotate(-60 {x} {margin_top - 8})">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_heatmap_svg(export: HeatmapExport, path: str, config_hash: str, seed: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(heatmap_svg(export, config_hash, seed))


# ---------------------------------------------------------------------------
# Shapley reports
# ---------------------------------------------------------------------------

def write_shapley_csv(report: ShapleyReport, path: str, config_hash: str, seed: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("shapley", config_hash, seed))
        writer = csv.writer(fh, lineterminator="\n")
        has_err = report.stderr is not None
        writer.writerow(["feature", "phi", "rank"] + (["stderr"] if has_err else []))
        ranks = {player: rank + 1 for rank, player in enumerate(report.ranking())}
        for i, name in enumerate(report.players):
            row = [name, _fmt(report.phi[i]), ranks[i]]
            if has_err:
                row.append(_fmt(report.stderr[i]))
            writer.writerow(row)
        writer.writerow(["_base_value", _fmt(report.base_value), ""] + ([""] if has_err else []))
        writer.writerow(["_prediction", _fmt(report.prediction), ""] + ([""] if has_err else []))


def shapley_text(report: ShapleyReport) -> str:
    out = io.StringIO()
    out.write("Shapley attribution of the fake-class probability\n")
    out.write(f"  baseline value: {report.base_value:.6f}\n")
    out.write(f"  prediction:     {report.prediction:.6f}\n")
    out.write(f"  efficiency residual: {report.efficiency_residual:.3e}\n")
    for rank, idx in enumerate(report.ranking(), start=1):
        line = f"  {rank}. {report.players[idx]:<22s} {report.phi[idx]:+.6f}"
        if report.stderr is not None:
            line += f" (se {report.stderr[idx]:.6f})"
        out.write(line + "\n")
    return out.getvalue()


def write_shapley_text(report: ShapleyReport, path: str, config_hash: str, seed: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header_comment("shapley-summary", config_hash, seed))
        fh.write(shapley_text(report))
