"""Shared fixtures: synthetic scene generation and independent test oracles.

Oracles here deliberately avoid the package's own code paths (pure-python
loops, union-find, scipy hulls) so the dual-route checks stay meaningful.
"""

import numpy as np
import pytest

from centripetal import (
    Polygon,
    TextAnnotation,
    connected_components,
    generate_labels,
    rasterize,
    shrink_polygon,
)


# ---------------------------------------------------------------------------
# scene generation

def scene_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _convex_blob(rng, cx, cy, rx, ry):
    count = int(rng.integers(6, 12))
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, count))
    radii = rng.uniform(0.7, 1.0, count)
    pts = np.stack(
        [cx + rx * radii * np.cos(angles), cy + ry * radii * np.sin(angles)], axis=1
    )
    hull_pts = _hull(pts)
    if len(hull_pts) < 3:
        return None
    return Polygon(hull_pts)


def _hull(points):
    pts = sorted(map(tuple, points))

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and (
                (out[-1][0] - out[-2][0]) * (p[1] - out[-2][1])
                - (out[-1][1] - out[-2][1]) * (p[0] - out[-2][0])
            ) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    return lower[:-1] + upper[:-1]


def random_scene(seed, height=None, width=None, max_instances=10, min_instances=1):
    """Non-overlapping fat convex instances with surviving kernels.

    Bounding boxes are kept 4 px apart so rasters never touch, kernels never
    merge, and the decode round trip is exact.
    """
    rng = scene_rng(seed)
    if height is None:
        height = int(rng.integers(256, 641))
    if width is None:
        width = int(rng.integers(256, 641))
    target = int(rng.integers(min_instances, max_instances + 1))
    annotations = []
    boxes = []
    for _ in range(200):
        if len(annotations) >= target:
            break
        rx_hi = min(70.0, width / 5)
        ry_hi = min(48.0, height / 5)
        rx = float(rng.uniform(min(16.0, rx_hi), rx_hi))
        ry = float(rng.uniform(min(12.0, ry_hi), ry_hi))
        cx = float(rng.uniform(rx + 4, width - rx - 4))
        cy = float(rng.uniform(ry + 4, height - ry - 4))
        box = (cx - rx - 4, cy - ry - 4, cx + rx + 4, cy + ry + 4)
        if any(b[0] < box[2] and box[0] < b[2] and b[1] < box[3] and box[1] < b[3]
               for b in boxes):
            continue
        poly = _convex_blob(rng, cx, cy, rx, ry)
        if poly is None:
            continue
        try:
            poly.validate()
        except Exception:
            continue
        kernel = shrink_polygon(poly, 0.7)
        if kernel is None:
            continue
        # One aggregation seed per instance: kernel and region rasters must
        # each form a single 8-connected component (thin diagonal slivers can
        # fragment, which decodes as several instances by design).
        kernel_raster = rasterize(kernel, height, width)
        region_raster = rasterize(poly, height, width)
        if kernel_raster.sum() < 4 or region_raster.sum() < 40:
            continue
        if connected_components(kernel_raster, 8).max() != 1:
            continue
        if connected_components(region_raster, 8).max() != 1:
            continue
        annotations.append(
            TextAnnotation(polygon=poly, ignore=False, id=len(annotations) + 1)
        )
        boxes.append(box)
    assert len(annotations) >= min_instances
    return annotations, height, width


def encoded_scene(seed, **kwargs):
    annotations, height, width = random_scene(seed, **kwargs)
    bundle = generate_labels(annotations, height, width)
    return annotations, bundle


@pytest.fixture
def small_scene():
    return encoded_scene(7, height=96, width=128, max_instances=3)


# ---------------------------------------------------------------------------
# oracles

def point_in_polygon_oracle(px, py, points):
    """Even-odd crossing number, pure python."""
    inside = False
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        if y1 == y2:
            continue
        if (y1 <= py < y2) or (y2 <= py < y1):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px > xint:
                inside = not inside
    return inside


def rasterize_oracle(points, height, width):
    mask = np.zeros((height, width), dtype=bool)
    for y in range(height):
        for x in range(width):
            mask[y, x] = point_in_polygon_oracle(x + 0.5, y + 0.5, points)
    return mask


def erode_oracle(mask):
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if not (0 <= ny < h and 0 <= nx < w and mask[ny, nx]):
                        ok = False
            out[y, x] = ok
    return out


def union_find_components(mask, connectivity=8):
    """Classic union-find labelling, ids dense in raster order of first pixel."""
    h, w = mask.shape
    parent = {}

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    if connectivity == 8:
        neighbors = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
    else:
        neighbors = ((-1, 0), (0, -1))
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            idx = y * w + x
            parent[idx] = idx
            for dy, dx in neighbors:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx]:
                    union(idx, ny * w + nx)

    labels = np.zeros((h, w), dtype=np.int32)
    next_id = 0
    ids = {}
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                root = find(y * w + x)
                if root not in ids:
                    next_id += 1
                    ids[root] = next_id
                labels[y, x] = ids[root]
    return labels


def nearest_reference_oracle(pixels, references):
    """Exact integer nearest-reference search with raster-order tie breaking,
    via plain numpy broadcasting (no scipy)."""
    py = pixels[:, 0][:, None].astype(np.int64)
    px = pixels[:, 1][:, None].astype(np.int64)
    ry = references[:, 0][None, :].astype(np.int64)
    rx = references[:, 1][None, :].astype(np.int64)
    d2 = (py - ry) ** 2 + (px - rx) ** 2
    best = np.argmin(d2, axis=1)  # first minimum = raster order
    return references[best], d2[np.arange(len(pixels)), best]


def min_rect_area_oracle(points):
    """Minimum oriented-box area by projecting every input point onto each
    hull edge direction (scipy hull, full projections)."""
    from scipy.spatial import ConvexHull

    pts = np.asarray(points, dtype=np.float64)
    pts = np.unique(pts, axis=0)
    if len(pts) == 1:
        return 0.0
    try:
        hull = ConvexHull(pts)
        vertices = pts[hull.vertices]
    except Exception:  # collinear input
        return 0.0
    best = np.inf
    n = len(vertices)
    for i in range(n):
        edge = vertices[(i + 1) % n] - vertices[i]
        norm = np.hypot(edge[0], edge[1])
        if norm == 0:
            continue
        u = edge / norm
        v = np.array([-u[1], u[0]])
        pu = pts @ u
        pv = pts @ v
        best = min(best, (pu.max() - pu.min()) * (pv.max() - pv.min()))
    return float(best)
