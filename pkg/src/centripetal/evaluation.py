"""Detection scoring: raster polygon IoU and greedy one-to-one matching into
precision / recall / F-measure.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import Polygon, _fill_ring


@dataclass
class EvalReport:
    precision: float
    recall: float
    fmeasure: float
    matches: list          # (det_index, gt_index, iou)
    num_ignored_dets: int

    def as_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "fmeasure": self.fmeasure,
            "matches": [list(m) for m in self.matches],
            "num_ignored_dets": self.num_ignored_dets,
        }


def _grid_bbox(poly, height, width):
    xmin, ymin, xmax, ymax = poly.bounds
    x0 = max(int(np.floor(xmin)), 0)
    y0 = max(int(np.floor(ymin)), 0)
    x1 = min(int(np.ceil(xmax)) + 1, width)
    y1 = min(int(np.ceil(ymax)) + 1, height)
    return x0, y0, x1, y1


def polygon_iou(a, b, height, width):
    """Raster IoU of two polygons on an H x W pixel grid (0 if the union is
    empty).  Computed on the union of their grid-clipped bounding boxes, which
    is identical to full-grid rasterization."""
    if not isinstance(a, Polygon):
        a = Polygon(a)
    if not isinstance(b, Polygon):
        b = Polygon(b)
    ax0, ay0, ax1, ay1 = _grid_bbox(a, height, width)
    bx0, by0, bx1, by1 = _grid_bbox(b, height, width)
    x0, y0 = min(ax0, bx0), min(ay0, by0)
    x1, y1 = max(ax1, bx1), max(ay1, by1)
    if x0 >= x1 or y0 >= y1:
        return 0.0
    shift = np.array([x0, y0], dtype=np.float64)
    ra = _fill_ring(a.points - shift, y1 - y0, x1 - x0)
    rb = _fill_ring(b.points - shift, y1 - y0, x1 - x0)
    union = int(np.sum(ra | rb))
    if union == 0:
        return 0.0
    return float(np.sum(ra & rb)) / union


def match_and_score(dets, gts, height, width, iou_thr=0.5):
    """Greedy one-to-one IoU matching of detections against ground truth.

    Detections overlapping an ignored ground-truth region above the threshold
    are removed from the precision denominator first; the remaining pairs are
    matched by descending IoU and accepted at IoU >= threshold.  Indices in the
    match list refer to the original input lists.
    """
    if not 0.0 < iou_thr < 1.0:
        raise ValueError("iou threshold must be in (0, 1)")
    # No simplicity gate here: decoded contours of diagonally joined pixel sets
    # are weakly simple (a corner may repeat) and raster IoU handles them.
    ignored_gts = [g for g in gts if g.ignore]
    valid_gts = [(gi, g) for gi, g in enumerate(gts) if not g.ignore]

    valid_dets = []
    num_ignored_dets = 0
    for di, det in enumerate(dets):
        covered = any(
            polygon_iou(det.polygon, ig.polygon, height, width) > iou_thr
            for ig in ignored_gts
        )
        if covered:
            num_ignored_dets += 1
        else:
            valid_dets.append((di, det))

    candidates = []
    for di, det in valid_dets:
        for gi, gt in valid_gts:
            iou = polygon_iou(det.polygon, gt.polygon, height, width)
            if iou >= iou_thr:
                candidates.append((iou, di, gi))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    used_dets, used_gts = set(), set()
    matches = []
    for iou, di, gi in candidates:
        if di in used_dets or gi in used_gts:
            continue
        used_dets.add(di)
        used_gts.add(gi)
        matches.append((di, gi, iou))

    precision = len(matches) / len(valid_dets) if valid_dets else 0.0
    recall = len(matches) / len(valid_gts) if valid_gts else 0.0
    if precision + recall > 0:
        fmeasure = 2.0 * precision * recall / (precision + recall)
    else:
        fmeasure = 0.0
    return EvalReport(
        precision=precision,
        recall=recall,
        fmeasure=fmeasure,
        matches=matches,
        num_ignored_dets=num_ignored_dets,
    )
