"""Sequence fidelity metrics between predicted and ground-truth actions, and detector quality."""
from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Optional, Sequence

from .core import ActionKind, TouchDetection, TouchReplayError
from .detect import iou


class EmptyTruth(TouchReplayError):
    pass


def levenshtein(pred: Sequence[Hashable], truth: Sequence[Hashable]) -> int:
    prev = list(range(len(truth) + 1))
    for i, a in enumerate(pred, 1):
        cur = [i]
        for j, b in enumerate(truth, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a != b)))
        prev = cur
    return prev[-1]


def longest_common_block(pred: Sequence[Hashable], truth: Sequence[Hashable]) -> int:
    """Length of the longest contiguous run present in both sequences."""
    best = 0
    prev = [0] * (len(truth) + 1)
    for a in pred:
        cur = [0] * (len(truth) + 1)
        for j, b in enumerate(truth, 1):
            if a == b:
                cur[j] = prev[j - 1] + 1
                best = max(best, cur[j])
        prev = cur
    return best


def lcs(pred: Sequence[Hashable], truth: Sequence[Hashable]) -> tuple[int, float]:
    """Contiguous longest common block and its ratio to the ground-truth length."""
    if not truth:
        raise EmptyTruth("ratio undefined for an empty ground truth")
    n = longest_common_block(pred, truth)
    return n, n / len(truth)


def lcs_subsequence(pred: Sequence[Hashable], truth: Sequence[Hashable]) -> tuple[int, float]:
    """Classic (non-contiguous) longest common subsequence and its ratio."""
    if not truth:
        raise EmptyTruth("ratio undefined for an empty ground truth")
    prev = [0] * (len(truth) + 1)
    for a in pred:
        cur = [0]
        for j, b in enumerate(truth, 1):
            cur.append(prev[j - 1] + 1 if a == b else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1], prev[-1] / len(truth)


@dataclass
class PoolCounts:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None


@dataclass
class PrecisionRecall:
    overall: PoolCounts
    per_kind: dict[str, PoolCounts]

    @property
    def precision(self) -> Optional[float]:
        return self.overall.precision

    @property
    def recall(self) -> Optional[float]:
        return self.overall.recall


def _key(k) -> str:
    return k.value if isinstance(k, ActionKind) else str(k)


def precision_recall(pred_pool: Iterable[Hashable], truth_pool: Iterable[Hashable]) -> PrecisionRecall:
    """Multiset matching of action kinds; undefined ratios are ``None``."""
    p = Counter(_key(k) for k in pred_pool)
    t = Counter(_key(k) for k in truth_pool)
    per_kind = {}
    tot = PoolCounts(0, 0, 0)
    for k in sorted(set(p) | set(t)):
        tp = min(p[k], t[k])
        c = PoolCounts(tp, p[k] - tp, t[k] - tp)
        per_kind[k] = c
        tot = PoolCounts(tot.tp + c.tp, tot.fp + c.fp, tot.fn + c.fn)
    return PrecisionRecall(tot, per_kind)


def detection_map(pred: Sequence[TouchDetection], truth: dict[int, Sequence[tuple]],
                  iou_threshold: float = 0.5) -> tuple[Optional[float], Optional[float]]:
    """Detector quality as (TP/(TP+FP), TP/(TP+FN)).

    ``truth`` maps a frame index to its ground-truth boxes. Predictions are
    matched greedily by descending confidence (ties by bbox) to the unmatched
    truth box of highest IoU in the same frame.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    used = {f: [False] * len(b) for f, b in truth.items()}
    tp = fp = 0
    for d in sorted(pred, key=lambda d: (-d.confidence, d.frame_index, tuple(d.bbox))):
        boxes = truth.get(d.frame_index, ())
        best, best_iou = None, iou_threshold
        for i, b in enumerate(boxes):
            if used[d.frame_index][i]:
                continue
            v = iou(d.bbox, b)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = i, v
        if best is None:
            fp += 1
        else:
            used[d.frame_index][best] = True
            tp += 1
    n_truth = sum(len(b) for b in truth.values())
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / n_truth if n_truth else None
    return precision, recall


def positional_key(tolerance: float):
    """Action equality by kind plus centroid within ``tolerance`` pixels."""
    from .scriptgen import centroid

    class _Pos:
        __slots__ = ("kind", "xy")

        def __init__(self, action):
            self.kind = action.kind
            self.xy = centroid(action.track)

        def __eq__(self, other):
            return self.kind == other.kind and math.dist(self.xy, other.xy) <= tolerance

        def __hash__(self):
            return hash(self.kind)

    return _Pos


@dataclass
class EvalReport:
    levenshtein: int
    lcs_len: int
    lcs_ratio: float
    lcs_subsequence_len: int
    precision: Optional[float]
    recall: Optional[float]
    precision_per_kind: dict[str, Optional[float]] = field(default_factory=dict)
    recall_per_kind: dict[str, Optional[float]] = field(default_factory=dict)
    counts_per_kind: dict[str, dict[str, int]] = field(default_factory=dict)
    scenario_success: bool = False
    pred_len: int = 0
    truth_len: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def evaluate(pred, truth, position_tolerance: Optional[float] = None) -> EvalReport:
    """Compare two ActionLists.

    Sequence metrics compare action kinds. ``scenario_success`` requires a
    positional-mode edit distance of 0: same kinds in order with centroids
    within ``position_tolerance`` pixels (kinds only when it is ``None``).
    """
    pk, tk = [a.kind for a in pred], [a.kind for a in truth]
    lev = levenshtein(pk, tk)
    if tk:
        n, ratio = lcs(pk, tk)
        ns, _ = lcs_subsequence(pk, tk)
    else:
        n, ns = 0, 0
        ratio = 1.0 if not pk else 0.0
    pr = precision_recall(pk, tk)
    if position_tolerance is None:
        success = lev == 0
    else:
        key = positional_key(position_tolerance)
        success = levenshtein([key(a) for a in pred], [key(a) for a in truth]) == 0
    return EvalReport(
        levenshtein=lev, lcs_len=n, lcs_ratio=ratio, lcs_subsequence_len=ns,
        precision=pr.precision, recall=pr.recall,
        precision_per_kind={k: c.precision for k, c in pr.per_kind.items()},
        recall_per_kind={k: c.recall for k, c in pr.per_kind.items()},
        counts_per_kind={k: asdict(c) for k, c in pr.per_kind.items()},
        scenario_success=success, pred_len=len(pk), truth_len=len(tk),
    )


@dataclass
class CorpusSummary:
    rows: list[tuple[str, EvalReport]]

    @property
    def lcs_ratio(self) -> float:
        """Matched contiguous actions over all ground-truth actions in the corpus."""
        total = sum(r.truth_len for _, r in self.rows)
        return sum(r.lcs_len for _, r in self.rows) / total if total else 1.0

    def pooled(self) -> PrecisionRecall:
        per: dict[str, PoolCounts] = {}
        for _, r in self.rows:
            for k, c in r.counts_per_kind.items():
                acc = per.get(k, PoolCounts(0, 0, 0))
                per[k] = PoolCounts(acc.tp + c["tp"], acc.fp + c["fp"], acc.fn + c["fn"])
        tot = PoolCounts(sum(c.tp for c in per.values()), sum(c.fp for c in per.values()),
                         sum(c.fn for c in per.values()))
        return PrecisionRecall(tot, dict(sorted(per.items())))

    def fraction_exact(self) -> float:
        return sum(r.levenshtein == 0 for _, r in self.rows) / len(self.rows) if self.rows else 1.0

    def mean_levenshtein(self) -> float:
        return sum(r.levenshtein for _, r in self.rows) / len(self.rows) if self.rows else 0.0

    def write_csv(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "levenshtein", "lcs_ratio", "precision", "recall", "success"])
            for sid, r in self.rows:
                w.writerow([sid, r.levenshtein, f"{r.lcs_ratio:.4f}",
                            "" if r.precision is None else f"{r.precision:.4f}",
                            "" if r.recall is None else f"{r.recall:.4f}", int(r.scenario_success)])
        return path
