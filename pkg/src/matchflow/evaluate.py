"""Endpoint-error and outlier metrics, per-frame reports, and the
directory-level benchmark harness."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError
from .flow import FlowField
from .flowio import read_flow_any

FL_ABS_THRESH = 3.0
FL_REL_THRESH = 0.05


@dataclass
class EvalReport:
    """Mean endpoint errors and outlier rates, split by optional region
    masks; counts record how many pixels entered each category."""

    epe_all: float | None = None
    epe_matched: float | None = None
    epe_unmatched: float | None = None
    fl_all: float | None = None
    fl_bg: float | None = None
    fl_fg: float | None = None
    counts: dict[str, int] = field(default_factory=dict)

    def as_keyvalues(self) -> list[tuple[str, str]]:
        out = []
        for name in ("epe_all", "epe_matched", "epe_unmatched", "fl_all", "fl_bg", "fl_fg"):
            value = getattr(self, name)
            if value is not None:
                out.append((name, "%.6f" % value))
        for name in sorted(self.counts):
            out.append(("count_" + name, str(self.counts[name])))
        return out


def _evaluated_mask(est: FlowField, gt: FlowField, region_mask: np.ndarray | None) -> np.ndarray:
    if (est.width, est.height) != (gt.width, gt.height):
        raise InvalidInputError("estimate and ground-truth dimensions differ")
    mask = gt.valid.copy()
    if region_mask is not None:
        region_mask = np.asarray(region_mask, dtype=bool)
        if region_mask.shape != mask.shape:
            raise InvalidInputError("region mask shape mismatch")
        mask &= region_mask
    return mask


def endpoint_errors(est: FlowField, gt: FlowField) -> np.ndarray:
    return np.hypot(est.u - gt.u, est.v - gt.v)


def epe(est: FlowField, gt: FlowField, region_mask: np.ndarray | None = None) -> float:
    """Mean Euclidean endpoint error over ground-truth-valid pixels."""
    mask = _evaluated_mask(est, gt, region_mask)
    if not mask.any():
        raise UndefinedMetricError("no pixels to evaluate")
    return float(endpoint_errors(est, gt)[mask].mean())


def fl_outlier_rate(est: FlowField, gt: FlowField, region_mask: np.ndarray | None = None) -> float:
    """Percentage of evaluated pixels whose endpoint error exceeds both
    3 px and 5% of the ground-truth magnitude."""
    mask = _evaluated_mask(est, gt, region_mask)
    if not mask.any():
        raise UndefinedMetricError("no pixels to evaluate")
    err = endpoint_errors(est, gt)[mask]
    gt_mag = np.hypot(gt.u, gt.v)[mask]
    outlier = (err > FL_ABS_THRESH) & (err > FL_REL_THRESH * gt_mag)
    return float(outlier.mean() * 100.0)


def evaluate_pair(est: FlowField, gt: FlowField,
                  fg_mask: np.ndarray | None = None,
                  unmatched_mask: np.ndarray | None = None) -> EvalReport:
    """All metrics for one frame.

    fg_mask marks foreground objects (for the bg/fg outlier split);
    unmatched_mask marks occluded pixels (for the matched/unmatched EPE
    split). Splits are reported only when their mask is provided.
    """
    report = EvalReport()
    report.epe_all = epe(est, gt)
    report.fl_all = fl_outlier_rate(est, gt)
    report.counts["all"] = int(_evaluated_mask(est, gt, None).sum())
    if unmatched_mask is not None:
        unmatched_mask = np.asarray(unmatched_mask, dtype=bool)
        matched = ~unmatched_mask
        for name, m in (("matched", matched), ("unmatched", unmatched_mask)):
            sel = _evaluated_mask(est, gt, m)
            report.counts[name] = int(sel.sum())
            if sel.any():
                setattr(report, "epe_" + name, epe(est, gt, m))
    if fg_mask is not None:
        fg_mask = np.asarray(fg_mask, dtype=bool)
        for name, m in (("bg", ~fg_mask), ("fg", fg_mask)):
            sel = _evaluated_mask(est, gt, m)
            report.counts[name] = int(sel.sum())
            if sel.any():
                setattr(report, "fl_" + name, fl_outlier_rate(est, gt, m))
    return report


def aggregate_reports(reports: list[EvalReport]) -> EvalReport:
    """Mean of each metric over the frames that define it; counts summed."""
    agg = EvalReport()
    for name in ("epe_all", "epe_matched", "epe_unmatched", "fl_all", "fl_bg", "fl_fg"):
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if values:
            setattr(agg, name, float(np.mean(values)))
    for r in reports:
        for key, n in r.counts.items():
            agg.counts[key] = agg.counts.get(key, 0) + n
    return agg


def format_report_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Aligned text table, one row per frame plus whatever metrics exist."""
    headers = ["frame", "epe_all", "epe_matched", "epe_unmatched", "fl_all", "fl_bg", "fl_fg"]
    table = [headers]
    for name, rep in rows:
        cells = [name]
        for metric in headers[1:]:
            value = getattr(rep, metric)
            cells.append("%.4f" % value if value is not None else "-")
        table.append(cells)
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in table]
    return "\n".join(lines)


def _load_mask_png(path: str) -> np.ndarray:
    import cv2

    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputError(f"cannot decode mask {path}")
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    return raw > 0


def _find_flow_files(directory: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() in (".flo", ".png"):
            out.setdefault(stem, os.path.join(directory, name))
    return out


def run_eval(est_dir: str, gt_dir: str,
             fg_mask_dir: str | None = None,
             unmatched_mask_dir: str | None = None):
    """Pair flow files by filename stem and evaluate each pair.

    Returns (per-frame list of (stem, EvalReport), aggregate EvalReport,
    list of stems that had no readable counterpart).
    """
    est_files = _find_flow_files(est_dir)
    gt_files = _find_flow_files(gt_dir)
    rows: list[tuple[str, EvalReport]] = []
    missing: list[str] = []
    for stem in sorted(gt_files):
        if stem not in est_files:
            missing.append(stem)
            continue
        try:
            est = read_flow_any(est_files[stem])
            gt = read_flow_any(gt_files[stem])
        except Exception:
            missing.append(stem)
            continue
        fg = occ = None
        if fg_mask_dir is not None:
            p = os.path.join(fg_mask_dir, stem + ".png")
            fg = _load_mask_png(p) if os.path.exists(p) else None
        if unmatched_mask_dir is not None:
            p = os.path.join(unmatched_mask_dir, stem + ".png")
            occ = _load_mask_png(p) if os.path.exists(p) else None
        rows.append((stem, evaluate_pair(est, gt, fg_mask=fg, unmatched_mask=occ)))
    aggregate = aggregate_reports([r for _, r in rows]) if rows else EvalReport()
    return rows, aggregate, missing
