"""IoU matching, precision/recall curves, all-point AP and F1 per class.

Label files use the one-stage-detector text layout with coordinates
normalised to [0, 1]::

    ground truth:  class_id cx cy w h
    detections:    class_id confidence cx cy w h

A manifest lists ``image_id width height gt_path det_path`` per line.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorruptData, MixedClassOrImage, NoGroundTruth

TP, FP = True, False


@dataclass(frozen=True, order=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self!r}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @classmethod
    def from_normalized(cls, cx, cy, w, h, width, height) -> "BBox":
        return cls((cx - w / 2) * width, (cy - h / 2) * height,
                   (cx + w / 2) * width, (cy + h / 2) * height)


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: BBox

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be >= 0")


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    box: BBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PRCurve:
    points: tuple  # (recall, precision) per detection, descending confidence
    total_gt: int


@dataclass(frozen=True)
class ClassReport:
    class_id: int
    ap: float | None
    f1: float | None
    tp: int
    fp: int
    fn: int
    n_gt: int

    @property
    def absent(self) -> bool:
        return self.n_gt == 0


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _check_homogeneous(dets, gts):
    keys = {(d.image_id, d.class_id) for d in dets} | {(g.image_id, g.class_id) for g in gts}
    if len(keys) > 1:
        raise MixedClassOrImage(f"records span several (image, class) pairs: {sorted(keys)}")


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thr: float = 0.5):
    """Greedy matching for one image and class; returns a TP/FP flag per input detection.

    Detections are visited by confidence (highest first), then by their best
    IoU against any ground truth, then by input position. Each picks the
    still-unmatched ground truth of highest IoU, lowest index on ties.
    """
    _check_homogeneous(dets, gts)
    ious = [[iou(d.box, g.box) for g in gts] for d in dets]
    best = [max(row, default=0.0) for row in ious]
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, -best[i], i))
    taken = [False] * len(gts)
    flags = [FP] * len(dets)
    for i in order:
        pick, pick_iou = -1, -1.0
        for j, v in enumerate(ious[i]):
            if not taken[j] and v > pick_iou:
                pick, pick_iou = j, v
        if pick >= 0 and pick_iou >= iou_thr:
            taken[pick] = True
            flags[i] = TP
    return flags


def pr_curve(scored: Iterable, total_gt: int) -> PRCurve:
    """Cumulative precision/recall from ``(confidence, is_tp)`` pairs.

    Within a group of equal confidences false positives are counted first,
    so the curve never claims precision that no confidence threshold could
    realise.
    """
    if total_gt < 0:
        raise ValueError("total_gt must be >= 0")
    ordered = sorted(scored, key=lambda s: (-s[0], bool(s[1])))
    tp = fp = 0
    points = []
    for _, hit in ordered:
        if hit:
            tp += 1
        else:
            fp += 1
        recall = tp / total_gt if total_gt else 0.0
        points.append((recall, tp / (tp + fp)))
    return PRCurve(tuple(points), total_gt)


def average_precision(curve: PRCurve) -> float:
    """All-point interpolated AP: step sum under the monotone precision envelope."""
    if curve.total_gt <= 0:
        raise NoGroundTruth("AP undefined without ground truth")
    if not curve.points:
        return 0.0
    recalls = [0.0] + [r for r, _ in curve.points]
    precisions = [p for _, p in curve.points]
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    return math.fsum((recalls[i + 1] - recalls[i]) * envelope[i] for i in range(len(envelope)))


def _group(records):
    groups = defaultdict(list)
    for r in records:
        groups[(r.image_id, r.class_id)].append(r)
    return groups


def _det_key(d: Detection):
    b = d.box
    return (-d.confidence, b.x_min, b.y_min, b.x_max, b.y_max)


def _gt_key(g: GroundTruth):
    b = g.box
    return (b.x_min, b.y_min, b.x_max, b.y_max)


def score_class(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thr: float = 0.5):
    """``(confidence, is_tp)`` for every detection of one class across images.

    Records are put into a canonical order first so the outcome does not
    depend on how the caller happened to list them.
    """
    det_groups, gt_groups = _group(dets), _group(gts)
    scored = []
    for key in sorted(det_groups):
        ds = sorted(det_groups[key], key=_det_key)
        gs = sorted(gt_groups.get(key, []), key=_gt_key)
        flags = match_detections(ds, gs, iou_thr)
        scored.extend((d.confidence, f) for d, f in zip(ds, flags))
    return scored


def _f1(tp, fp, fn):
    den = 2 * tp + fp + fn
    return 2 * tp / den if den else 0.0


def f1_at_threshold(dets, gts, conf_thr: float = 0.25, iou_thr: float = 0.5):
    """``(f1, tp, fp, fn)`` keeping detections with confidence >= ``conf_thr``."""
    if not 0.0 <= conf_thr <= 1.0:
        raise ValueError("conf_thr must lie in [0, 1]")
    if not gts:
        raise NoGroundTruth("F1 undefined without ground truth")
    kept = [d for d in dets if d.confidence >= conf_thr]
    scored = score_class(kept, gts, iou_thr)
    tp = sum(1 for _, hit in scored if hit)
    fp = len(scored) - tp
    fn = len(gts) - tp
    return _f1(tp, fp, fn), tp, fp, fn


def max_f1(dets, gts, iou_thr: float = 0.5):
    """Best ``(f1, tp, fp, fn)`` over every distinct confidence threshold."""
    if not gts:
        raise NoGroundTruth("F1 undefined without ground truth")
    best = (0.0, 0, 0, len(gts))
    for thr in sorted({d.confidence for d in dets}, reverse=True):
        cand = f1_at_threshold(dets, gts, thr, iou_thr)
        if cand[0] > best[0]:
            best = cand
    return best


def evaluate(dets, gts, classes, conf_thr: float = 0.25, iou_thr: float = 0.5,
             f1_mode: str = "threshold"):
    """One :class:`ClassReport` per requested class, in the given order.

    ``f1_mode`` is ``"threshold"`` (fixed ``conf_thr`` operating point) or
    ``"max"`` (best F1 over all thresholds).
    """
    if f1_mode not in ("threshold", "max"):
        raise ValueError(f"unknown f1_mode {f1_mode!r}")
    by_cls_d, by_cls_g = defaultdict(list), defaultdict(list)
    for d in dets:
        by_cls_d[d.class_id].append(d)
    for g in gts:
        by_cls_g[g.class_id].append(g)
    reports = []
    for c in classes:
        cd, cg = by_cls_d.get(c, []), by_cls_g.get(c, [])
        if not cg:
            fp = len([d for d in cd if d.confidence >= conf_thr])
            reports.append(ClassReport(c, None, None, 0, fp, 0, 0))
            continue
        ap = average_precision(pr_curve(score_class(cd, cg, iou_thr), len(cg)))
        if f1_mode == "max":
            f1, tp, fp, fn = max_f1(cd, cg, iou_thr)
        else:
            f1, tp, fp, fn = f1_at_threshold(cd, cg, conf_thr, iou_thr)
        reports.append(ClassReport(c, ap, f1, tp, fp, fn, len(cg)))
    return reports


def macro_average(reports, metric: str = "ap"):
    vals = [getattr(r, metric) for r in reports if not r.absent]
    return math.fsum(vals) / len(vals) if vals else None


# -- file formats --------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    width: int
    height: int
    gt_path: str
    det_path: str


def read_manifest(path) -> list:
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise CorruptData(f"{path}:{lineno}: expected 'image_id width height gt_path det_path'")
        try:
            entries.append(ManifestEntry(parts[0], int(parts[1]), int(parts[2]), parts[3], parts[4]))
        except ValueError:
            raise CorruptData(f"{path}:{lineno}: width/height must be integers") from None
    return entries


def _rows(path, ncols):
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != ncols:
            raise CorruptData(f"{path}:{lineno}: expected {ncols} fields, got {len(parts)}")
        try:
            yield int(parts[0]), [float(v) for v in parts[1:]]
        except ValueError:
            raise CorruptData(f"{path}:{lineno}: non-numeric field") from None


def read_ground_truth(path, image_id, width, height) -> list:
    out = []
    for cls, (cx, cy, w, h) in _rows(path, 5):
        try:
            out.append(GroundTruth(image_id, cls, BBox.from_normalized(cx, cy, w, h, width, height)))
        except ValueError as exc:
            raise CorruptData(f"{path}: {exc}") from None
    return out


def read_detections(path, image_id, width, height) -> list:
    out = []
    for cls, (conf, cx, cy, w, h) in _rows(path, 6):
        try:
            out.append(Detection(image_id, cls, BBox.from_normalized(cx, cy, w, h, width, height), conf))
        except ValueError as exc:
            raise CorruptData(f"{path}: {exc}") from None
    return out


def load_records(manifest_path, det_dir=None, gt_root=None):
    """Ground truth and detections for every manifest image.

    ``gt_path`` resolves against ``gt_root`` (default: the manifest's folder)
    and ``det_path`` against ``det_dir`` (same default).
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    gt_root = Path(gt_root) if gt_root is not None else base
    det_dir = Path(det_dir) if det_dir is not None else base
    gts, dets = [], []
    for e in read_manifest(manifest_path):
        gts.extend(read_ground_truth(gt_root / e.gt_path, e.image_id, e.width, e.height))
        dets.extend(read_detections(det_dir / e.det_path, e.image_id, e.width, e.height))
    return dets, gts
