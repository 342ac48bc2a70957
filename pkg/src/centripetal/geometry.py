"""Exact and raster geometry primitives: polygon inset, rasterization, erosion,
connected components, contour tracing, and minimum-area rectangles.

Grid convention: pixel (x, y) covers the unit square [x, x+1) x [y, y+1) and its
center sits at (x + 0.5, y + 0.5).  Masks are boolean (H, W) arrays indexed
[y, x]; polygon vertices are (x, y) pairs.
"""

import numpy as np
from scipy import ndimage
import shapely.geometry

from .errors import EmptyComponent, InvalidPolygon

# Edge-walk direction codes: right, down, left, up (y grows downward).
_DIR_VEC = ((1, 0), (0, 1), (-1, 0), (0, -1))
_LEFT_OF = (3, 0, 1, 2)
_RIGHT_OF = (1, 2, 3, 0)
# Pixel offsets (from a corner) that must be region / background for an edge
# leaving that corner in the given direction to be a boundary edge.
_REGION_SIDE = ((0, 0), (-1, 0), (-1, -1), (0, -1))
_OTHER_SIDE = ((0, -1), (0, 0), (-1, 0), (-1, -1))


class Polygon:
    """Simple closed polygon stored as an (N, 2) float array of (x, y) vertices.

    Construction enforces only structure (>= 3 finite vertices after dropping
    consecutive duplicates); call :meth:`validate` for the full simplicity and
    area check, and :meth:`normalized` for counter-clockwise storage (positive
    shoelace area).
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise InvalidPolygon("polygon needs at least 3 (x, y) vertices")
        if not np.isfinite(pts).all():
            raise InvalidPolygon("polygon vertices must be finite")
        if np.array_equal(pts[0], pts[-1]):
            pts = pts[:-1]
        dup = np.all(pts == np.roll(pts, 1, axis=0), axis=1)
        if dup.any():
            pts = pts[~dup]
        if pts.shape[0] < 3:
            raise InvalidPolygon("polygon collapses to fewer than 3 distinct vertices")
        self.points = pts

    def __repr__(self):
        return f"Polygon({self.points.tolist()!r})"

    def signed_area(self):
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def area(self):
        return abs(self.signed_area())

    @property
    def perimeter(self):
        d = np.roll(self.points, -1, axis=0) - self.points
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @property
    def bounds(self):
        """(xmin, ymin, xmax, ymax)."""
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def normalized(self):
        """Return the same ring stored counter-clockwise (signed area > 0)."""
        if self.signed_area() < 0:
            return Polygon(self.points[::-1])
        return self

    def validate(self):
        """Raise :class:`InvalidPolygon` unless the ring is simple with area > 0."""
        shape = shapely.geometry.Polygon(self.points)
        if not shape.is_valid or shape.area <= 0.0:
            raise InvalidPolygon("polygon must be simple with positive area")
        return self

    def translated(self, dx, dy):
        return Polygon(self.points + np.array([dx, dy], dtype=np.float64))


def shrink_polygon(poly, ratio):
    """Inset a polygon by the perimeter-and-area offset for a shrink ratio.

    The inset distance is ``area * (1 - ratio**2) / perimeter``.  Returns None
    when the inset consumes the polygon; if it splits the polygon, the largest
    piece is kept.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"shrink ratio must be in (0, 1], got {ratio}")
    poly = poly.normalized()
    poly.validate()
    if ratio == 1.0:
        return poly
    offset = poly.area * (1.0 - ratio * ratio) / poly.perimeter
    inset = shapely.geometry.Polygon(poly.points).buffer(
        -offset, join_style="mitre", mitre_limit=10.0
    )
    if inset.is_empty:
        return None
    if inset.geom_type == "MultiPolygon":
        inset = max(inset.geoms, key=lambda g: g.area)
    if inset.geom_type != "Polygon" or inset.area <= 0.0:
        return None
    ring = np.asarray(inset.exterior.coords, dtype=np.float64)[:-1]
    if ring.shape[0] < 3:
        return None
    return Polygon(ring).normalized()


def _fill_ring(points, height, width):
    """Even-odd scanline fill of one ring; a cell is set iff its center is
    strictly on the inside-parity side.  Exact for rings whose vertical edges
    sit on representable coordinates (all rectilinear contours)."""
    mask_flips = np.zeros((height, width + 1), dtype=np.int32)
    x1 = points[:, 0]
    y1 = points[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        if ey1 == ey2:
            continue
        ylo, yhi = (ey1, ey2) if ey1 < ey2 else (ey2, ey1)
        r0 = max(int(np.ceil(ylo - 0.5)), 0)
        r1 = min(int(np.ceil(yhi - 0.5)) - 1, height - 1)
        if r0 > r1:
            continue
        rows = np.arange(r0, r1 + 1)
        yc = rows + 0.5
        xint = ex1 + (yc - ey1) * (ex2 - ex1) / (ey2 - ey1)
        cols = np.floor(xint - 0.5).astype(np.int64) + 1
        np.add.at(mask_flips, (rows, np.clip(cols, 0, width)), 1)
    return (np.cumsum(mask_flips, axis=1)[:, :width] % 2).astype(bool)


def rasterize(poly, height, width):
    """Rasterize a polygon: a cell is set iff its center lies inside the ring
    under the even-odd rule.  Cells outside the grid are clipped."""
    if height <= 0 or width <= 0:
        raise ValueError("grid dimensions must be positive")
    if not isinstance(poly, Polygon):
        poly = Polygon(poly)
    return _fill_ring(poly.points, height, width)


def erode(mask):
    """Morphological erosion with a full 3x3 window; pixels beyond the grid
    border count as background."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    p = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
    p[1:-1, 1:-1] = m
    return (
        p[:-2, :-2] & p[:-2, 1:-1] & p[:-2, 2:]
        & p[1:-1, :-2] & p[1:-1, 1:-1] & p[1:-1, 2:]
        & p[2:, :-2] & p[2:, 1:-1] & p[2:, 2:]
    )


def connected_components(mask, connectivity=8):
    """Label connected regions of a binary mask.

    Ids are dense 1..N and follow the raster-scan order of each component's
    first pixel, independent of the underlying labelling pass.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = np.asarray(mask, dtype=bool)
    if connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    else:
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    labels, count = ndimage.label(m, structure=structure)
    labels = labels.astype(np.int32, copy=False)
    if count == 0:
        return labels
    # First-occurrence index per id without sorting: with duplicate indices the
    # last fancy assignment wins, and we iterate positions in reverse.
    flat = labels.ravel()
    first = np.zeros(count + 1, dtype=np.int64)
    first[flat[::-1]] = np.arange(flat.size - 1, -1, -1, dtype=np.int64)
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[1 + np.argsort(first[1:], kind="stable")] = np.arange(
        1, count + 1, dtype=np.int32
    )
    return remap[labels]


def extract_contour(mask, component_id=None):
    """Trace the outer boundary of a pixel region as a rectilinear polygon.

    Vertices lie on the integer corner grid, so rasterizing the result
    reproduces the traced pixels exactly for hole-free regions.  Regions joined
    only diagonally are kept inside the ring (the shared corner is passed
    through, appearing twice).  Collinear corners are dropped.
    """
    grid = np.asarray(mask)
    if component_id is not None:
        region = grid == component_id
    else:
        region = grid.astype(bool)
    if region.ndim != 2 or not region.any():
        raise EmptyComponent("no pixels to trace")
    h, w = region.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = region
    flat = padded.tobytes()
    stride = w + 2

    start_flat = int(np.argmax(region.ravel()))
    y0, x0 = divmod(start_flat, w)
    # First pixel in raster order: its top edge is a boundary edge going right.
    cx, cy, d = x0, y0, 0
    verts = [(x0, y0)]
    for _ in range(8 * (h + 2) * (w + 2)):
        dx, dy = _DIR_VEC[d]
        cx += dx
        cy += dy
        nd = -1
        for cand in (_LEFT_OF[d], d, _RIGHT_OF[d]):
            rox, roy = _REGION_SIDE[cand]
            nox, noy = _OTHER_SIDE[cand]
            if flat[(cy + roy + 1) * stride + (cx + rox + 1)] and not flat[
                (cy + noy + 1) * stride + (cx + nox + 1)
            ]:
                nd = cand
                break
        if nd < 0:
            raise RuntimeError("contour tracing lost the boundary")
        if cx == x0 and cy == y0:
            break
        if nd != d:
            verts.append((cx, cy))
        d = nd
    else:
        raise RuntimeError("contour tracing did not close")
    return Polygon(verts).normalized()


def _convex_hull(points):
    """Monotone-chain hull, counter-clockwise by shoelace sign, strictly convex
    (collinear boundary points dropped)."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2:
                a, b = chain[-2], chain[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.float64)


def min_area_rect(points):
    """Minimum-area oriented rectangle enclosing the points, via rotating
    calipers on the convex hull.

    Returns ``((cx, cy), (width, height), angle)`` with angle in degrees
    normalized to [-90, 0); width is the side along the angle direction.
    Collinear input yields a zero-height rectangle.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError("need an (N, 2) array with at least one point")
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")
    hull = _convex_hull(pts)
    if len(hull) == 1:
        return (float(hull[0, 0]), float(hull[0, 1])), (0.0, 0.0), -90.0
    if len(hull) == 2:
        edge = hull[1] - hull[0]
        length = float(np.hypot(edge[0], edge[1]))
        u = edge / length
        center = (hull[0] + hull[1]) / 2.0
        angle = float(np.degrees(np.arctan2(u[1], u[0])))
        w, h, angle = _normalize_rect(length, 0.0, angle)
        return (float(center[0]), float(center[1])), (w, h), angle

    n = len(hull)
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])

    u0 = edges[0] / lengths[0]
    proj = hull @ u0
    j = int(np.argmax(proj))  # farthest along the edge direction
    l = int(np.argmin(proj))  # farthest against it
    k = int(np.argmax(hull @ np.array([-u0[1], u0[0]])))  # farthest inward

    best = None
    for i in range(n):
        u = edges[i] / lengths[i]
        v = np.array([-u[1], u[0]])
        for _ in range(n):
            if np.dot(u, hull[(j + 1) % n] - hull[j]) > 1e-12:
                j = (j + 1) % n
            else:
                break
        for _ in range(n):
            if np.dot(u, hull[(l + 1) % n] - hull[l]) < -1e-12:
                l = (l + 1) % n
            else:
                break
        for _ in range(n):
            if np.dot(v, hull[(k + 1) % n] - hull[k]) > 1e-12:
                k = (k + 1) % n
            else:
                break
        umin, umax = float(np.dot(u, hull[l])), float(np.dot(u, hull[j]))
        vmin, vmax = float(np.dot(v, hull[i])), float(np.dot(v, hull[k]))
        area = (umax - umin) * (vmax - vmin)
        if best is None or area < best[0]:
            best = (area, u, v, umin, umax, vmin, vmax)

    _, u, v, umin, umax, vmin, vmax = best
    center = ((umin + umax) / 2.0) * u + ((vmin + vmax) / 2.0) * v
    angle = float(np.degrees(np.arctan2(u[1], u[0])))
    w, h, angle = _normalize_rect(umax - umin, vmax - vmin, angle)
    return (float(center[0]), float(center[1])), (w, h), angle


def _normalize_rect(w, h, angle):
    """Fold an oriented-box angle into [-90, 0), swapping sides per quarter turn."""
    folded = angle % 90.0 - 90.0
    quarter_turns = round((folded - angle) / 90.0)
    if quarter_turns % 2 != 0:
        w, h = h, w
    return float(w), float(h), folded


def _round_half_inplace(buf):
    """In-place round-half-away-from-zero on a float64 buffer; returns int64."""
    np.add(buf, np.copysign(0.5, buf), out=buf)
    np.trunc(buf, out=buf)
    return buf.astype(np.int64)


def round_half_from_zero(values):
    """Round to the nearest integer with halves away from zero, per component."""
    return _round_half_inplace(np.array(values, dtype=np.float64))
