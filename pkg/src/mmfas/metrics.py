"""Presentation-attack-detection metrics: confusion counts, APCER/NPCER/ACER, ROC and TPR@FPR.

Positive class is *live* (label 1). A sample is predicted live when its score
(live-class probability) is ``>= threshold``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

FPR_BUDGETS = (1e-2, 1e-3, 1e-4)
LIVE, SPOOF = 1, 0


class UndefinedRateError(ValueError):
    """A rate's denominator is empty (one class missing)."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


@dataclass
class EvalReport:
    counts: ConfusionCounts
    threshold: float
    apcer: float
    npcer: float
    acer: float
    roc: list[tuple[float, float]] = field(default_factory=list)
    tpr_at_fpr: dict[float, float] = field(default_factory=dict)

    def flat(self) -> dict[str, float]:
        out = {
            "threshold": self.threshold,
            "tp": self.counts.tp,
            "tn": self.counts.tn,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "apcer": self.apcer,
            "npcer": self.npcer,
            "acer": self.acer,
        }
        for budget in FPR_BUDGETS:
            out[_budget_key(budget)] = self.tpr_at_fpr.get(budget, float("nan"))
        return out

    def to_text(self) -> str:
        lines = []
        for key, value in self.flat().items():
            if isinstance(value, float) and key != "threshold":
                lines.append(f"{key}={round_half_up(value, 4)}")
            else:
                lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        out = self.flat()
        out["counts"] = asdict(self.counts)
        out["roc"] = [list(p) for p in self.roc]
        return out

    def save(self, text_path, json_path=None) -> None:
        Path(text_path).write_text(self.to_text())
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _budget_key(budget: float) -> str:
    return f"tpr_at_fpr_1e{-int(round(math.log10(budget)))}"


def round_half_up(value: float, ndigits: int = 2) -> float:
    """Decimal half-up rounding of the shortest repr of ``value`` (``2.235 -> 2.24``)."""
    quant = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(value))).quantize(quant, rounding=ROUND_HALF_UP))


def _as_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size == 0:
        raise ValueError("no samples to score")
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isin(labels, (SPOOF, LIVE))):
        raise ValueError("labels must be 0 (spoof) or 1 (live)")
    return scores, labels.astype(np.int64)


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    scores, labels = _as_scores_labels(scores, labels)
    pred_live = scores >= threshold
    live = labels == LIVE
    return ConfusionCounts(
        tp=int(np.sum(pred_live & live)),
        tn=int(np.sum(~pred_live & ~live)),
        fp=int(np.sum(pred_live & ~live)),
        fn=int(np.sum(~pred_live & live)),
    )


def pad_rates(c: ConfusionCounts) -> tuple[float, float, float]:
    """``(APCER, NPCER, ACER)`` in percent."""
    if c.tn + c.fp == 0:
        raise UndefinedRateError("APCER undefined: no spoof samples")
    if c.fn + c.tp == 0:
        raise UndefinedRateError("NPCER undefined: no live samples")
    apcer = 100.0 * c.fp / (c.tn + c.fp)
    npcer = 100.0 * c.fn / (c.fn + c.tp)
    return apcer, npcer, (apcer + npcer) / 2.0


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """``(fpr, tpr)`` for every distinct score threshold plus ``+inf``, sorted ascending."""
    scores, labels = _as_scores_labels(scores, labels)
    n_live = int(np.sum(labels == LIVE))
    n_spoof = labels.size - n_live
    if n_live == 0 or n_spoof == 0:
        raise UndefinedRateError("ROC needs both live and spoof samples")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    is_live = labels[order] == LIVE
    tp = np.cumsum(is_live)
    fp = np.cumsum(~is_live)
    # last index of each run of equal scores: thresholds at distinct values
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    points = [(0.0, 0.0)]
    points += [(fp[i] / n_spoof, tp[i] / n_live) for i in last]
    return [(float(f), float(t)) for f, t in points]


def tpr_at_fpr(roc: list[tuple[float, float]], budget: float) -> float:
    """Best TPR among operating points with ``FPR <= budget`` (no interpolation)."""
    feasible = [tpr for fpr, tpr in roc if fpr <= budget]
    return max(feasible) if feasible else 0.0


def roc_and_tpr(scores, labels, budgets=FPR_BUDGETS):
    roc = roc_points(scores, labels)
    return roc, {b: tpr_at_fpr(roc, b) for b in budgets}


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    counts = confusion(scores, labels, threshold)
    apcer, npcer, acer = pad_rates(counts)
    roc, tprs = roc_and_tpr(scores, labels)
    return EvalReport(counts, threshold, apcer, npcer, acer, roc, tprs)


def write_scores(path, sample_ids, labels, scores) -> None:
    with open(path, "w") as fh:
        for sid, label, score in zip(sample_ids, labels, scores):
            fh.write(f"{sid}\t{int(label)}\t{float(score)!r}\n")


def read_scores(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids, labels, scores = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            sid, label, score = parts
            if label not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
            ids.append(sid)
            labels.append(int(label))
            scores.append(float(score))
    return ids, np.asarray(labels, dtype=np.int64), np.asarray(scores, dtype=np.float64)
