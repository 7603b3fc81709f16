"""Precision/recall/F1, threshold sweeps, ROC/AUC and per-clone-type reports.

A pair is predicted a clone when its score is ``>= sigma``, the same rule
the prediction path uses.  Metrics whose denominator is zero are reported
as 0 and flagged, never as NaN.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateValidation, LengthMismatch, MissingTypeTags, SingleClass

NON_CLONE = "NonClone"
GRID_STEP = 0.01


@dataclass(frozen=True)
class Prf:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    # names of metrics that had a zero denominator
    undefined: tuple[str, ...] = ()

    def as_tuple(self) -> tuple[float, float, float]:
        return self.precision, self.recall, self.f1


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
    bad = set(np.unique(y).tolist()) - {-1, 1}
    if bad:
        raise ValueError(f"labels must be -1 or +1, got {sorted(bad)}")
    return s, y


def prf_from_counts(tp: int, fp: int, fn: int) -> Prf:
    undefined = []
    if tp + fp:
        p = tp / (tp + fp)
    else:
        p = 0.0
        undefined.append("precision")
    if tp + fn:
        r = tp / (tp + fn)
    else:
        r = 0.0
        undefined.append("recall")
    if p + r:
        f1 = 2 * p * r / (p + r)
    else:
        f1 = 0.0
        undefined.append("f1")
    return Prf(p, r, f1, tp, fp, fn, tuple(undefined))


def prf(scores: Sequence[float], labels: Sequence[int], sigma: float) -> Prf:
    s, y = _check(scores, labels)
    pred = s >= sigma
    pos = y == 1
    return prf_from_counts(int(np.sum(pred & pos)), int(np.sum(pred & ~pos)), int(np.sum(~pred & pos)))


def default_grid(step: float = GRID_STEP) -> np.ndarray:
    n = int(round(2.0 / step))
    return np.round(np.linspace(-1.0, 1.0, n + 1), 10)


@dataclass(frozen=True)
class SweepPoint:
    sigma: float
    precision: float
    recall: float
    f1: float
    positives: int


def sweep(scores: Sequence[float], labels: Sequence[int], grid: Sequence[float] | None = None) -> list[SweepPoint]:
    s, y = _check(scores, labels)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise ValueError("sweep grid must be sorted ascending")
    out = []
    for sigma in grid:
        r = prf(s, y, float(sigma))
        out.append(SweepPoint(float(sigma), r.precision, r.recall, r.f1, r.tp + r.fp))
    return out


def near_best_interval(curve: Sequence[SweepPoint], fraction: float = 0.95) -> tuple[float, float, float]:
    """Longest contiguous run of grid points with F1 >= fraction * best F1.

    Returns ``(lo, hi, width)``; width is ``hi - lo``.
    """
    if not curve:
        return 0.0, 0.0, 0.0
    best = max(p.f1 for p in curve)
    cut = fraction * best
    span, start = None, None
    for k, p in enumerate(curve):
        if p.f1 >= cut and best > 0:
            start = k if start is None else start
            width = curve[k].sigma - curve[start].sigma
            if span is None or width > span[2]:
                span = (curve[start].sigma, curve[k].sigma, width)
        else:
            start = None
    return span or (0.0, 0.0, 0.0)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> tuple[list[tuple[float, float]], float]:
    """ROC points over the distinct score thresholds and the trapezoid AUC.

    Tied scores move the curve diagonally, which is what gives ties half
    credit in the area.
    """
    s, y = _check(scores, labels)
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both positive and negative pairs")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tps = np.cumsum(y_sorted == 1)
    fps = np.cumsum(y_sorted != 1)
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    tpr = np.r_[0, tps[ends]] / n_pos
    fpr = np.r_[0, fps[ends]] / n_neg
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


def tune_threshold(scores: Sequence[float], labels: Sequence[int]) -> tuple[float, Prf]:
    """F1-maximizing cut over all observed scores.

    Every distinct score u defines the cut "positive iff s >= u", valid for
    any sigma in ``(next lower score, u]``.  Among optimal cuts the widest
    interval wins (ties: the higher one) and its midpoint is returned; an
    interval unbounded below returns its upper end.
    """
    s, y = _check(scores, labels)
    n_pos = int(np.sum(y == 1))
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateValidation("threshold tuning needs both clone and non-clone pairs")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tps = np.cumsum(y_sorted == 1)
    fps = np.cumsum(y_sorted != 1)
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    best = None
    for k, e in enumerate(ends):
        tp, fp = int(tps[e]), int(fps[e])
        fn = n_pos - tp
        hi = float(s_sorted[e])
        lo = float(s_sorted[ends[k + 1]]) if k + 1 < len(ends) else -np.inf
        # F1 = 2tp / (2tp + fp + fn), compared exactly as a fraction
        num, den = 2 * tp, 2 * tp + fp + fn
        width = hi - lo
        key = (num, den, width, hi)
        if best is None or _better(key, best[0]):
            best = (key, lo, hi, tp, fp, fn)
    _, lo, hi, tp, fp, fn = best
    sigma = hi if np.isinf(lo) else (lo + hi) / 2.0
    return sigma, prf_from_counts(tp, fp, fn)


def _better(a, b) -> bool:
    fa, fb = a[0] * b[1], b[0] * a[1]
    if fa != fb:
        return fa > fb
    return (a[2], a[3]) > (b[2], b[3])


def per_type_report(scores: Sequence[float], labels: Sequence[int], types: Sequence[str | None], sigma: float) -> dict[str, Prf]:
    """Metrics per clone type: that type's true pairs against all non-clone pairs."""
    s, y = _check(scores, labels)
    if len(types) != s.size:
        raise LengthMismatch(f"{len(types)} type tags for {s.size} pairs")
    if any(t is None or t == "" for t, lab in zip(types, y) if lab == 1):
        raise MissingTypeTags("every clone pair needs a clone-type tag")
    tags = np.asarray([t or NON_CLONE for t in types], dtype=object)
    neg = y != 1
    out = {}
    for tag in sorted({t for t, lab in zip(tags, y) if lab == 1}):
        keep = neg | ((tags == tag) & (y == 1))
        out[tag] = prf(s[keep], y[keep], sigma)
    return out


@dataclass
class EvalReport:
    sigma: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    roc: list[tuple[float, float]]
    sweep: list[SweepPoint]
    per_type: dict[str, Prf]
    n_pairs: int
    undefined: list[str] = field(default_factory=list)
    negatives_convention: str = "each clone type is scored against all non-clone pairs"

    def to_json(self) -> str:
        data = asdict(self)
        data["roc"] = [list(p) for p in self.roc]
        data["per_type"] = {k: {"precision": v.precision, "recall": v.recall, "f1": v.f1,
                                "tp": v.tp, "fp": v.fp, "fn": v.fn} for k, v in self.per_type.items()}
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        lines = [
            f"pairs      {self.n_pairs}",
            f"sigma      {self.sigma:.4f}",
            f"precision  {self.precision:.4f}",
            f"recall     {self.recall:.4f}",
            f"F1         {self.f1:.4f}",
            f"AUC        {'n/a' if self.auc is None else f'{self.auc:.4f}'}",
        ]
        if self.per_type:
            lines.append("")
            lines.append(f"{'type':<10} {'P':>7} {'R':>7} {'F1':>7}")
            for tag, r in self.per_type.items():
                lines.append(f"{tag:<10} {r.precision:7.4f} {r.recall:7.4f} {r.f1:7.4f}")
            lines.append(f"({self.negatives_convention})")
        return "\n".join(lines) + "\n"

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sigma", "precision", "recall", "f1", "positives"])
        for p in self.sweep:
            w.writerow([p.sigma, p.precision, p.recall, p.f1, p.positives])
        return buf.getvalue()

    def roc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        w.writerows(self.roc)
        return buf.getvalue()


def evaluate(scores: Sequence[float], labels: Sequence[int], sigma: float,
             types: Sequence[str | None] | None = None, grid: Sequence[float] | None = None) -> EvalReport:
    r = prf(scores, labels, sigma)
    try:
        roc, auc = roc_auc(scores, labels)
    except SingleClass:
        roc, auc = [], None
    per_type = {}
    if types is not None and any(t for t in types):
        per_type = per_type_report(scores, labels, types, sigma)
    return EvalReport(sigma, r.precision, r.recall, r.f1, auc, roc, sweep(scores, labels, grid),
                      per_type, len(scores), list(r.undefined))


def plot_curves(report: EvalReport, sweep_path, roc_path) -> None:
    """Render the threshold sweep and ROC curve to image files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    sig = [p.sigma for p in report.sweep]
    for name in ("precision", "recall", "f1"):
        ax.plot(sig, [getattr(p, name) for p in report.sweep], label=name)
    ax.axvline(report.sigma, color="grey", linestyle=":")
    ax.set_xlabel("threshold")
    ax.legend()
    fig.tight_layout()
    fig.savefig(sweep_path)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(4, 4))
    if report.roc:
        fpr, tpr = zip(*report.roc)
        ax.plot(fpr, tpr, label=f"AUC {report.auc:.3f}")
        ax.legend()
    ax.plot([0, 1], [0, 1], color="grey", linestyle=":")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    fig.tight_layout()
    fig.savefig(roc_path)
    plt.close(fig)
