"""Report rendering: association/discrimination tables, ROC and confusion SVGs.

Everything here is presentation. Inputs are the JSON-shaped dicts the
pipeline's assoc and discrim stages wrote; no statistic is recomputed,
numbers are only formatted. Text tables round to 2 decimals (p to 3),
the CSV companions carry full-precision reprs so a reader can recover
the exact JSON values.
"""

from __future__ import annotations

import os
import re
from xml.sax.saxutils import escape

from .artifacts import atomic_write_text
from .errors import ValidationError

TABLE1_TXT = "table1.txt"
TABLE1_CSV = "table1.csv"
TABLE2_TXT = "table2.txt"
TABLE2_CSV = "table2.csv"
ROC_SVG = "roc.svg"

SVG_WIDTH = 480
SVG_HEIGHT = 480
MARGIN_L = 60
MARGIN_T = 20
MARGIN_R = 20
MARGIN_B = 50

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def format_p(p: float) -> str:
    """Three decimals, floored at the conventional reporting limit."""
    if p < 0.001:
        return "<0.001"
    return f"{p:.3f}"


def dagger(p: float) -> str:
    # strict: p exactly 0.05 is not significant
    return "†" if p < 0.05 else ""


def format_or_row(label: str, odds_ratio: float, lo: float, hi: float, p: float) -> str:
    return (
        f"{label} | {odds_ratio:.2f} | [{lo:.2f}, {hi:.2f}] | {format_p(p)}{dagger(p)}"
    )


def format_metric_cell(point: float, lo: float, hi: float) -> str:
    return f"{point:.2f} [{lo:.2f}-{hi:.2f}]"


def slugify(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")


def x_px(fpr: float) -> float:
    return MARGIN_L + fpr * (SVG_WIDTH - MARGIN_L - MARGIN_R)


def y_px(tpr: float) -> float:
    return SVG_HEIGHT - MARGIN_B - tpr * (SVG_HEIGHT - MARGIN_T - MARGIN_B)


def px(v: float) -> str:
    return f"{v:.2f}"


def _dnpi_stats(result: dict) -> dict:
    for pred in result["predictors"]:
        if pred["name"] == "dnpi":
            return pred
    raise ValidationError(
        f"association result {result.get('label')!r} has no dnpi predictor"
    )


def render_table1(association: dict) -> tuple[str, str]:
    """Association table as (txt, csv) strings."""
    results = association["results"]
    txt_lines = ["Model | OR | 95% CI | p", "----- | -- | ------ | -"]
    csv_lines = [
        "label,odds_ratio,ci_lo,ci_hi,p_value,beta,std_error,n,n_dropped,converged"
    ]
    for result in results:
        stats = _dnpi_stats(result)
        lo, hi = stats["ci95"]
        txt_lines.append(
            format_or_row(result["label"], stats["odds_ratio"], lo, hi, stats["p_value"])
        )
        csv_lines.append(
            ",".join(
                [
                    _csv_quote(result["label"]),
                    repr(stats["odds_ratio"]),
                    repr(lo),
                    repr(hi),
                    repr(stats["p_value"]),
                    repr(stats["beta"]),
                    repr(stats["std_error"]),
                    str(result["n"]),
                    str(result["n_dropped"]),
                    str(result["converged"]),
                ]
            )
        )
    return "\n".join(txt_lines) + "\n", "\n".join(csv_lines) + "\n"


def render_table2(discrimination: dict) -> tuple[str, str]:
    """Discrimination table as (txt, csv) strings."""
    reports = discrimination["reports"]
    txt_lines = [
        "Model | Balanced accuracy | AUC | F1",
        "----- | ----------------- | --- | --",
    ]
    csv_lines = [
        "label,auc,auc_lo,auc_hi,balanced_accuracy,ba_lo,ba_hi,f1,f1_lo,f1_hi,"
        "sensitivity,specificity,threshold,achieved_fpr,fpr_cap,n_eval"
    ]
    for rep in reports:
        ba = format_metric_cell(rep["balanced_accuracy"], *rep["ba_ci95"])
        auc = format_metric_cell(rep["auc"], *rep["auc_ci95"])
        f1 = format_metric_cell(rep["f1"], *rep["f1_ci95"])
        txt_lines.append(f"{rep['label']} | {ba} | {auc} | {f1}")
        csv_lines.append(
            ",".join(
                [
                    _csv_quote(rep["label"]),
                    repr(rep["auc"]),
                    repr(rep["auc_ci95"][0]),
                    repr(rep["auc_ci95"][1]),
                    repr(rep["balanced_accuracy"]),
                    repr(rep["ba_ci95"][0]),
                    repr(rep["ba_ci95"][1]),
                    repr(rep["f1"]),
                    repr(rep["f1_ci95"][0]),
                    repr(rep["f1_ci95"][1]),
                    repr(rep["sensitivity"]),
                    repr(rep["specificity"]),
                    repr(rep["threshold"]),
                    repr(rep["achieved_fpr"]),
                    repr(rep["fpr_cap"]),
                    str(rep["n_eval"]),
                ]
            )
        )
    return "\n".join(txt_lines) + "\n", "\n".join(csv_lines) + "\n"


def _csv_quote(value: str) -> str:
    if any(c in value for c in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def _svg_header(width: int, height: int) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        'font-family="sans-serif" font-size="12">'
    )


def render_roc_svg(discrimination: dict) -> str:
    """All models' ROC curves with shaded bootstrap bands, one SVG."""
    reports = discrimination["reports"]
    parts = [_svg_header(SVG_WIDTH, SVG_HEIGHT)]
    parts.append(
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>'
    )
    # axes with ticks at 0, 0.5, 1
    parts.append(
        f'<line x1="{px(x_px(0))}" y1="{px(y_px(0))}" x2="{px(x_px(1))}" '
        f'y2="{px(y_px(0))}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{px(x_px(0))}" y1="{px(y_px(0))}" x2="{px(x_px(0))}" '
        f'y2="{px(y_px(1))}" stroke="black"/>'
    )
    for tick in (0.0, 0.5, 1.0):
        tx, ty = x_px(tick), y_px(tick)
        base = y_px(0)
        parts.append(
            f'<line x1="{px(tx)}" y1="{px(base)}" x2="{px(tx)}" y2="{px(base + 5)}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(tx)}" y="{px(base + 18)}" text-anchor="middle">{tick:g}</text>'
        )
        parts.append(
            f'<line x1="{px(x_px(0))}" y1="{px(ty)}" x2="{px(x_px(0) - 5)}" '
            f'y2="{px(ty)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(x_px(0) - 8)}" y="{px(ty + 4)}" text-anchor="end">{tick:g}</text>'
        )
    parts.append(
        f'<text x="{px((x_px(0) + x_px(1)) / 2)}" y="{px(y_px(0) + 35)}" '
        'text-anchor="middle">False positive rate</text>'
    )
    parts.append(
        f'<text x="15" y="{px((y_px(0) + y_px(1)) / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 15 {px((y_px(0) + y_px(1)) / 2)})">'
        "True positive rate</text>"
    )
    # chance diagonal
    parts.append(
        f'<line x1="{px(x_px(0))}" y1="{px(y_px(0))}" x2="{px(x_px(1))}" '
        f'y2="{px(y_px(1))}" stroke="#999" stroke-dasharray="4 3"/>'
    )
    for k, rep in enumerate(reports):
        color = _PALETTE[k % len(_PALETTE)]
        band = rep.get("bootstrap", {}).get("roc_band")
        if band:
            fwd = [
                f"{px(x_px(f))},{px(y_px(t))}"
                for f, t in zip(band["fpr"], band["tpr_hi"])
            ]
            back = [
                f"{px(x_px(f))},{px(y_px(t))}"
                for f, t in zip(reversed(band["fpr"]), reversed(band["tpr_lo"]))
            ]
            parts.append(
                f'<polygon points="{" ".join(fwd + back)}" fill="{color}" '
                'fill-opacity="0.15" stroke="none"/>'
            )
        pts = " ".join(
            f"{px(x_px(fpr))},{px(y_px(tpr))}" for fpr, tpr, _ in rep["roc_points"]
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    # legend, bottom right of the plot area
    legend_x = x_px(0.42)
    legend_y = y_px(0.05) - 16 * len(reports)
    for k, rep in enumerate(reports):
        color = _PALETTE[k % len(_PALETTE)]
        ly = legend_y + 16 * k
        lo, hi = rep["auc_ci95"]
        parts.append(
            f'<line x1="{px(legend_x)}" y1="{px(ly - 4)}" x2="{px(legend_x + 20)}" '
            f'y2="{px(ly - 4)}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{px(legend_x + 26)}" y="{px(ly)}">'
            f"{escape(rep['label'])}: AUC {rep['auc']:.2f} "
            f"[{lo:.2f}, {hi:.2f}]</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_confusion_svg(report: dict) -> str:
    """2x2 confusion matrix at the fixed-FPR operating point."""
    c = report["confusion"]
    width, height = 380, 300
    cell = 100
    ox, oy = 120, 90
    parts = [_svg_header(width, height)]
    parts.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    parts.append(
        f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="14">'
        f"{escape(report['label'])}</text>"
    )
    parts.append(
        f'<text x="{width / 2}" y="42" text-anchor="middle" fill="#555">'
        f"threshold {report['threshold']:.3f}, FPR cap {report['fpr_cap']:.2f}, "
        f"achieved {report['achieved_fpr']:.3f}</text>"
    )
    grid = [
        ("Actual +", (c["tp"], c["fn"])),
        ("Actual -", (c["fp"], c["tn"])),
    ]
    parts.append(
        f'<text x="{ox + cell / 2}" y="{oy - 10}" text-anchor="middle">Pred +</text>'
    )
    parts.append(
        f'<text x="{ox + cell * 1.5}" y="{oy - 10}" text-anchor="middle">Pred -</text>'
    )
    for i, (row_label, counts) in enumerate(grid):
        y = oy + i * cell
        parts.append(
            f'<text x="{ox - 10}" y="{y + cell / 2 + 4}" text-anchor="end">'
            f"{row_label}</text>"
        )
        for j, count in enumerate(counts):
            x = ox + j * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                'fill="#f0f0f0" stroke="#333"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 5}" '
                f'text-anchor="middle" font-size="18">{count}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_reports(association: dict, discrimination: dict, out_dir: str) -> list[str]:
    """Write every report file; returns the file names written."""
    t1_txt, t1_csv = render_table1(association)
    t2_txt, t2_csv = render_table2(discrimination)
    written = {
        TABLE1_TXT: t1_txt,
        TABLE1_CSV: t1_csv,
        TABLE2_TXT: t2_txt,
        TABLE2_CSV: t2_csv,
        ROC_SVG: render_roc_svg(discrimination),
    }
    for rep in discrimination["reports"]:
        written[f"confusion_{slugify(rep['label'])}.svg"] = render_confusion_svg(rep)
    os.makedirs(out_dir, exist_ok=True)
    for name, content in written.items():
        atomic_write_text(os.path.join(out_dir, name), content)
    return sorted(written)
