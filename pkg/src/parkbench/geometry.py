"""2D geometric substrate: poses, polygons, occupancy grids, clearance fields.

Everything here is immutable after construction and safe to share across
threads. Distances are meters, angles radians. The normalized clearance
field (``EsdfGrid``) maps every workspace point to ``[0, 1]``: zero on
obstacles, one at or beyond the safety distance ``d0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryError

TWO_PI = 2.0 * math.pi

# Area below which a polygon (or clipped fragment) counts as degenerate.
_AREA_EPS = 1e-12


def wrap_angle(a: float) -> float:
    """Wrap an angle to the interval (-pi, pi]."""
    return -((-a + math.pi) % TWO_PI - math.pi)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose (rear-axle center for vehicles); heading auto-wrapped."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.psi)):
            raise GeometryError(f"non-finite pose ({self.x}, {self.y}, {self.psi})")
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def heading_vector(self) -> np.ndarray:
        return np.array([math.cos(self.psi), math.sin(self.psi)])


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    cross = x[:-1] @ y[1:] - x[1:] @ y[:-1] + x[-1] * y[0] - x[0] * y[-1]
    return 0.5 * float(cross)


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    """True if open segments p1-p2 and q1-q2 cross at an interior point."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_properly_intersect(a1, a2, v[j], v[(j + 1) % n]):
                return False
    return True


def _is_convex(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cross < -1e-12:
            return False
    return True


def _point_in_triangle(p, a, b, c) -> bool:
    def side(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

    d1, d2, d3 = side(a, b, p), side(b, c, p), side(c, a, p)
    neg = (d1 < -1e-12) or (d2 < -1e-12) or (d3 < -1e-12)
    pos = (d1 > 1e-12) or (d2 > 1e-12) or (d3 > 1e-12)
    return not (neg and pos)


def _ear_clip(v: np.ndarray) -> list[np.ndarray]:
    """Triangulate a simple CCW polygon by ear clipping."""
    idx = list(range(len(v)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise GeometryError("ear clipping failed to converge")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = v[i0], v[i1], v[i2]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= 1e-12:
                continue  # reflex or collinear corner
            if any(_point_in_triangle(v[j], a, b, c) for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append(np.array([a, b, c]))
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            raise GeometryError("ear clipping found no ear (polygon not simple?)")
    tris.append(np.array([v[idx[0]], v[idx[1]], v[idx[2]]]))
    return tris


class Polygon:
    """Simple polygon with counterclockwise winding.

    Vertex order is normalized to CCW at construction. Construction rejects
    fewer than 3 vertices, (near-)zero area, and self-intersecting rings.
    Non-convex polygons are decomposed into convex parts (triangles) once,
    so all downstream clipping runs convex-vs-convex.
    """

    __slots__ = ("vertices", "area", "convex_parts", "bbox", "centroid")

    def __init__(self, vertices) -> None:
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError(f"vertices must be an (N, 2) array, got shape {v.shape}")
        if len(v) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon has non-finite vertices")
        if np.any(np.all(np.isclose(v, np.roll(v, -1, axis=0), atol=1e-12), axis=1)):
            raise GeometryError("polygon has repeated consecutive vertices")
        area = _signed_area(v)
        if area < 0:
            v = v[::-1].copy()
            area = -area
        if area <= _AREA_EPS:
            raise GeometryError(f"degenerate polygon (area {area:.3g})")
        if not _is_simple(v):
            raise GeometryError("polygon is self-intersecting")
        v.flags.writeable = False
        self.vertices = v
        self.area = area
        parts = (v,) if _is_convex(v) else tuple(_ear_clip(v))
        self.convex_parts = parts
        self.bbox = (float(v[:, 0].min()), float(v[:, 1].min()),
                     float(v[:, 0].max()), float(v[:, 1].max()))
        cx = float(np.mean(v[:, 0]))
        cy = float(np.mean(v[:, 1]))
        self.centroid = np.array([cx, cy])

    def __repr__(self) -> str:
        return f"Polygon({len(self.vertices)} vertices, area={self.area:.3f})"

    @classmethod
    def _trusted_convex(cls, v: np.ndarray) -> "Polygon":
        # fast path for generated rectangles; skips validation
        self = cls.__new__(cls)
        v.flags.writeable = False
        self.vertices = v
        self.area = _signed_area(v)
        self.convex_parts = (v,)
        x, y = v[:, 0], v[:, 1]
        self.bbox = (float(x.min()), float(y.min()), float(x.max()), float(y.max()))
        self.centroid = np.array([float(x.mean()), float(y.mean())])
        return self

    @property
    def edges(self) -> np.ndarray:
        """Edge segments as an (N, 2, 2) array."""
        return np.stack([self.vertices, np.roll(self.vertices, -1, axis=0)], axis=1)

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Crossing-number containment test for an (N, 2) batch of points."""
        return points_in_ring(points, self.vertices)


def points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Vectorized even-odd containment of points in a closed ring."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px, py = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
        inside ^= crosses & (px < xint)
    return inside


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject against a convex CCW clipper.

    Returns the clipped vertex loop, possibly empty.
    """
    output = [tuple(p) for p in subject]
    n = len(clipper)
    for i in range(n):
        if not output:
            return np.empty((0, 2))
        cx1, cy1 = clipper[i]
        cx2, cy2 = clipper[(i + 1) % n]
        ex, ey = cx2 - cx1, cy2 - cy1
        inputs = output
        output = []
        prev = inputs[-1]
        prev_side = ex * (prev[1] - cy1) - ey * (prev[0] - cx1)
        for cur in inputs:
            cur_side = ex * (cur[1] - cy1) - ey * (cur[0] - cx1)
            if cur_side >= 0:
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output.append((prev[0] + t * (cur[0] - prev[0]),
                                   prev[1] + t * (cur[1] - prev[1])))
                output.append(cur)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output.append((prev[0] + t * (cur[0] - prev[0]),
                               prev[1] + t * (cur[1] - prev[1])))
            prev, prev_side = cur, cur_side
    return np.array(output) if output else np.empty((0, 2))


def _loop_area(v: np.ndarray) -> float:
    if len(v) < 3:
        return 0.0
    return abs(_signed_area(v))


def intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of a ∩ b via pairwise clipping of convex parts."""
    ax1, ay1, ax2, ay2 = a.bbox
    bx1, by1, bx2, by2 = b.bbox
    if ax2 < bx1 or bx2 < ax1 or ay2 < by1 or by2 < ay1:
        return 0.0
    total = 0.0
    for pa in a.convex_parts:
        for pb in b.convex_parts:
            total += _loop_area(clip_convex(pa, pb))
    return total


def overlap_score(a: Polygon, b: Polygon) -> float:
    """Intersection area normalized by the smaller polygon's area, in [0, 1].

    Symmetric in its arguments; 1.0 when the smaller polygon is fully
    contained in the larger one.
    """
    if a.area <= _AREA_EPS or b.area <= _AREA_EPS:
        raise GeometryError("overlap_score requires polygons with positive area")
    ratio = intersection_area(a, b) / min(a.area, b.area)
    return min(1.0, max(0.0, ratio))


def polygons_intersect(a: Polygon, b: Polygon) -> bool:
    """True if the polygons share interior area (edge touching does not count)."""
    return intersection_area(a, b) > 1e-9


def footprint(pose: Pose2D, length: float, width: float, rear_overhang: float) -> Polygon:
    """Oriented rectangle for a vehicle body with rear-axle center at ``pose``.

    The body extends ``rear_overhang`` behind the axle and
    ``length - rear_overhang`` ahead of it, ``width/2`` to each side.
    """
    if length <= 0 or width <= 0:
        raise GeometryError(f"invalid body dimensions {length} x {width}")
    if not (0 <= rear_overhang < length):
        raise GeometryError(f"rear_overhang {rear_overhang} outside [0, length)")
    xf = length - rear_overhang
    xr = -rear_overhang
    hw = width / 2.0
    local = np.array([(xr, -hw), (xf, -hw), (xf, hw), (xr, hw)])
    c, s = math.cos(pose.psi), math.sin(pose.psi)
    rot = np.array([[c, -s], [s, c]])
    return Polygon._trusted_convex(local @ rot.T + [pose.x, pose.y])


def footprint_boundary_points(pose: Pose2D, length: float, width: float,
                              rear_overhang: float, per_edge: int = 20) -> np.ndarray:
    """Evenly spaced samples along the footprint boundary (4*per_edge points)."""
    local = _boundary_template(length, width, rear_overhang, per_edge)
    c, s = math.cos(pose.psi), math.sin(pose.psi)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + [pose.x, pose.y]


def _boundary_template(length: float, width: float, rear_overhang: float,
                       per_edge: int) -> np.ndarray:
    xf = length - rear_overhang
    xr = -rear_overhang
    hw = width / 2.0
    corners = np.array([(xr, -hw), (xf, -hw), (xf, hw), (xr, hw)])
    pts = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        t = np.arange(per_edge)[:, None] / per_edge
        pts.append(a + t * (b - a))
    return np.vstack(pts)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy lattice; ``cells[row, col]`` with row along +y."""

    origin: tuple[float, float]
    resolution: float
    width: int
    height: int
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise GeometryError(f"resolution must be positive, got {self.resolution}")
        if self.cells.shape != (self.height, self.width):
            raise GeometryError("cells shape does not match width/height")
        self.cells.flags.writeable = False

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.resolution, y0 + self.height * self.resolution)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.width) + 0.5) * self.resolution
        ys = y0 + (np.arange(self.height) + 0.5) * self.resolution
        return xs, ys


@dataclass(frozen=True)
class EsdfGrid:
    """Normalized clearance field on the same lattice as its occupancy grid.

    Values live in [0, 1]: 0 on occupied cells, 1 wherever clearance
    reaches the safety distance ``d0``, linear in between.
    """

    origin: tuple[float, float]
    resolution: float
    width: int
    height: int
    values: np.ndarray
    d0: float

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.resolution, y0 + self.height * self.resolution)


def build_esdf(grid: OccupancyGrid, d0: float = 1.0) -> EsdfGrid:
    """Normalized clearance field from an occupancy grid.

    Per-cell value is ``min(d0, distance to nearest occupied cell) / d0``
    with distances measured center-to-center; occupied cells are 0.
    """
    if d0 <= 0:
        raise GeometryError(f"safety distance must be positive, got {d0}")
    occ = grid.cells
    if not occ.any():
        values = np.ones_like(occ, dtype=float)
    else:
        dist = ndimage.distance_transform_edt(~occ) * grid.resolution
        values = np.minimum(dist, d0) / d0
    return EsdfGrid(grid.origin, grid.resolution, grid.width, grid.height, values, d0)


def esdf_query(esdf: EsdfGrid, points) -> np.ndarray | float:
    """Bilinear clearance lookup; points outside the grid extent read 1.0.

    Accepts a single (2,) point or an (N, 2) batch.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    x0, y0, x1, y1 = esdf.extent
    res = esdf.resolution
    out = np.ones(len(pts))
    inside = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
    if inside.any():
        p = pts[inside]
        gx = (p[:, 0] - x0) / res - 0.5
        gy = (p[:, 1] - y0) / res - 0.5
        ix0 = np.clip(np.floor(gx).astype(int), 0, esdf.width - 1)
        iy0 = np.clip(np.floor(gy).astype(int), 0, esdf.height - 1)
        ix1 = np.minimum(ix0 + 1, esdf.width - 1)
        iy1 = np.minimum(iy0 + 1, esdf.height - 1)
        fx = np.clip(gx - ix0, 0.0, 1.0)
        fy = np.clip(gy - iy0, 0.0, 1.0)
        v = esdf.values
        top = v[iy0, ix0] * (1 - fx) + v[iy0, ix1] * fx
        bot = v[iy1, ix0] * (1 - fx) + v[iy1, ix1] * fx
        out[inside] = top * (1 - fy) + bot * fy
    if single:
        return float(out[0])
    return out


def _cells_on_segment(p, q, origin, res, width, height):
    """Indices (row, col) of every cell a segment passes through.

    Splits the segment at lattice-line crossings and marks the cell holding
    each sub-interval midpoint; exact for any direction, ties included.
    """
    x0, y0 = origin
    px, py = (p[0] - x0) / res, (p[1] - y0) / res
    qx, qy = (q[0] - x0) / res, (q[1] - y0) / res
    ts = [0.0, 1.0]
    dx, dy = qx - px, qy - py
    if dx != 0:
        for gx in range(int(math.floor(min(px, qx))) + 1, int(math.ceil(max(px, qx)))):
            ts.append((gx - px) / dx)
    if dy != 0:
        for gy in range(int(math.floor(min(py, qy))) + 1, int(math.ceil(max(py, qy)))):
            ts.append((gy - py) / dy)
    ts = sorted(t for t in ts if 0.0 <= t <= 1.0)
    cells = set()
    for t0, t1 in zip(ts[:-1], ts[1:]):
        tm = 0.5 * (t0 + t1)
        cx = int(math.floor(px + tm * dx))
        cy = int(math.floor(py + tm * dy))
        if 0 <= cx < width and 0 <= cy < height:
            cells.add((cy, cx))
    return cells


def rasterize_scene(boundary: Polygon, obstacles, resolution: float,
                    margin_cells: int = 2) -> OccupancyGrid:
    """Conservative occupancy raster of a bounded scene.

    A cell is occupied when it intersects any obstacle polygon or is not
    fully inside the boundary polygon (the exterior counts as occupied, so
    clearance fields respect the walls).
    """
    bx0, by0, bx1, by1 = boundary.bbox
    x0 = bx0 - margin_cells * resolution
    y0 = by0 - margin_cells * resolution
    width = int(math.ceil((bx1 - x0) / resolution)) + margin_cells
    height = int(math.ceil((by1 - y0) / resolution)) + margin_cells

    # corner lattice: (height+1) x (width+1) points
    cx = x0 + np.arange(width + 1) * resolution
    cy = y0 + np.arange(height + 1) * resolution
    gx, gy = np.meshgrid(cx, cy)
    corners = np.column_stack([gx.ravel(), gy.ravel()])

    inside = points_in_ring(corners, boundary.vertices).reshape(height + 1, width + 1)
    all4_inside = inside[:-1, :-1] & inside[:-1, 1:] & inside[1:, :-1] & inside[1:, 1:]
    crossed = np.zeros((height, width), dtype=bool)
    for p, q in boundary.edges:
        for (r, c) in _cells_on_segment(p, q, (x0, y0), resolution, width, height):
            crossed[r, c] = True
    occupied = ~(all4_inside & ~crossed)

    for poly in obstacles:
        hit = points_in_ring(corners, poly.vertices).reshape(height + 1, width + 1)
        any_corner = hit[:-1, :-1] | hit[:-1, 1:] | hit[1:, :-1] | hit[1:, 1:]
        occupied |= any_corner
        for p, q in poly.edges:
            for (r, c) in _cells_on_segment(p, q, (x0, y0), resolution, width, height):
                occupied[r, c] = True
        for vx, vy in poly.vertices:
            col = int(math.floor((vx - x0) / resolution))
            row = int(math.floor((vy - y0) / resolution))
            if 0 <= col < width and 0 <= row < height:
                occupied[row, col] = True
    return OccupancyGrid((x0, y0), resolution, width, height, occupied)


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def segments_of(boundary: Polygon, obstacles) -> np.ndarray:
    """All scene edges stacked into an (S, 2, 2) array for ray casting."""
    segs = [boundary.edges]
    for poly in obstacles:
        segs.append(poly.edges)
    return np.concatenate(segs, axis=0)


def ray_cast(segments: np.ndarray, origin, angle: float, max_range: float) -> float:
    """Distance from origin along ``angle`` to the first edge hit.

    Clamped to ``max_range``; rays into open space return ``max_range``.
    """
    return float(ray_cast_fan(segments, origin, np.array([angle]), max_range)[0])


def ray_cast_fan(segments: np.ndarray, origin, angles: np.ndarray,
                 max_range: float) -> np.ndarray:
    """Vectorized multi-ray cast; one distance per angle."""
    if max_range <= 0:
        raise GeometryError(f"max_range must be positive, got {max_range}")
    o = np.asarray(origin, dtype=float)
    d = np.column_stack([np.cos(angles), np.sin(angles)])  # (R, 2)
    p = segments[:, 0, :]                                  # (S, 2)
    e = segments[:, 1, :] - p                              # (S, 2)
    po = p[None, :, :] - o[None, None, :]                  # (1, S, 2)
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]  # (R, S)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (po[:, :, 0] * e[None, :, 1] - po[:, :, 1] * e[None, :, 0]) / denom
        s = (po[:, :, 0] * d[:, None, 1] - po[:, :, 1] * d[:, None, 0]) / denom
    valid = (np.abs(denom) > 1e-12) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    return np.minimum(t.min(axis=1), max_range)
