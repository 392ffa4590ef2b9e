"""Segmentation quality metrics: DSC, IoU, recall, precision, HD95, ASSD.

Overlap metrics come from per-class confusion counts; surface distances use
4-connectivity boundary extraction and the exact Euclidean distance
transform, scaled by the physical pixel spacing. Report rows carry defined
flags so the overall (unweighted class mean) row stays honest when a class
is empty.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .errors import ContractError
from .loss import IGNORE_INDEX


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    name: str
    dsc: float
    iou: float
    recall: float
    precision: float
    hd95_um: float | None
    assd_um: float | None
    defined: bool              # class present in pred or gt
    distances_defined: bool    # class present in both


@dataclass(frozen=True)
class MetricsReport:
    classes: tuple[ClassMetrics, ...]
    overall: dict
    spacing_um: float

    def to_json(self) -> str:
        payload = {
            "spacing_um": self.spacing_um,
            "classes": [asdict(c) for c in self.classes],
            "overall": self.overall,
        }
        return json.dumps(payload, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["class", "dsc", "iou", "recall", "precision", "hd95_um", "assd_um", "defined"]
        )
        fmt = lambda v: "" if v is None else f"{v:.6f}"
        for c in self.classes:
            writer.writerow(
                [c.name, fmt(c.dsc), fmt(c.iou), fmt(c.recall), fmt(c.precision),
                 fmt(c.hd95_um), fmt(c.assd_um), str(c.defined).lower()]
            )
        o = self.overall
        writer.writerow(
            ["overall", fmt(o["dsc"]), fmt(o["iou"]), fmt(o["recall"]), fmt(o["precision"]),
             fmt(o["hd95_um"]), fmt(o["assd_um"]), ""]
        )
        return buf.getvalue()


def overlap_metrics(pred: np.ndarray, gt: np.ndarray, class_id: int, ignore_index: int = IGNORE_INDEX):
    """(dsc, iou, recall, precision) from the binarized class confusion counts.

    Pixels where gt equals the ignore value are excluded. When the class is
    empty in both masks all four metrics are 1 by convention; other 0/0
    ratios resolve to 0.
    """
    if pred.shape != gt.shape:
        raise ContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    valid = gt != ignore_index
    p = (pred == class_id) & valid
    g = (gt == class_id) & valid
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0, 1.0, 1.0, 1.0
    dsc = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    return dsc, iou, recall, precision


_CROSS = ndimage.generate_binary_structure(2, 1)


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """4-connectivity boundary: mask minus its erosion (border pixels count)."""
    eroded = ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)
    return mask & ~eroded


def surface_distances(
    pred: np.ndarray,
    gt: np.ndarray,
    class_id: int,
    spacing_um: float = 1.0,
):
    """(hd95_um, assd_um) over the union of both directed boundary-distance multisets.

    HD95 is the linearly interpolated 95th percentile; ASSD the mean. Returns
    (None, None) when the class is empty in either mask (undefined).
    """
    if pred.shape != gt.shape:
        raise ContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    pb = boundary_mask(pred == class_id)
    gb = boundary_mask(gt == class_id)
    if not pb.any() or not gb.any():
        return None, None
    dist_to_g = ndimage.distance_transform_edt(~gb)
    dist_to_p = ndimage.distance_transform_edt(~pb)
    # sorting makes the reduction order-independent, so swapping pred/gt is
    # an exact symmetry
    union = np.sort(np.concatenate([dist_to_g[pb], dist_to_p[gb]]))
    hd95 = float(np.percentile(union, 95)) * spacing_um
    assd = float(union.mean()) * spacing_um
    return hd95, assd


def evaluate(
    pred: np.ndarray,
    gt: np.ndarray,
    class_table: list[tuple[int, str]] | list[int],
    spacing_um: float = 1.0,
    ignore_index: int = IGNORE_INDEX,
) -> MetricsReport:
    """Per-class metric rows plus the unweighted overall mean over defined rows."""
    if pred.shape != gt.shape:
        raise ContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    entries = [(c, f"class{c}") if isinstance(c, (int, np.integer)) else (int(c[0]), str(c[1]))
               for c in class_table]
    valid = gt != ignore_index
    rows = []
    for class_id, name in entries:
        in_pred = bool(np.any((pred == class_id) & valid))
        in_gt = bool(np.any((gt == class_id) & valid))
        dsc, iou, recall, precision = overlap_metrics(pred, gt, class_id, ignore_index)
        hd95, assd = surface_distances(pred, gt, class_id, spacing_um)
        rows.append(
            ClassMetrics(
                class_id=class_id,
                name=name,
                dsc=dsc,
                iou=iou,
                recall=recall,
                precision=precision,
                hd95_um=hd95,
                assd_um=assd,
                defined=in_pred or in_gt,
                distances_defined=hd95 is not None,
            )
        )
    overall = {}
    overlap_rows = [r for r in rows if r.defined]
    for key in ("dsc", "iou", "recall", "precision"):
        vals = [getattr(r, key) for r in overlap_rows]
        overall[key] = float(np.mean(vals)) if vals else None
    dist_rows = [r for r in rows if r.distances_defined]
    overall["hd95_um"] = float(np.mean([r.hd95_um for r in dist_rows])) if dist_rows else None
    overall["assd_um"] = float(np.mean([r.assd_um for r in dist_rows])) if dist_rows else None
    return MetricsReport(classes=tuple(rows), overall=overall, spacing_um=spacing_um)


def write_report(report: MetricsReport, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            f.write(report.to_csv())
    if json_path is not None:
        with open(json_path, "w") as f:
            f.write(report.to_json())
