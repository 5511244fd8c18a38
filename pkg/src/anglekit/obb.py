"""Oriented bounding-box geometry.

Long-side boxes (w is the longest side, theta in [0, 180) degrees), corner
conversions, minimum-area rectangle fitting, convex polygon intersection,
rotated IoU, axis-aligned GIoU, and greedy rotated NMS. All functions are
pure and operate on immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateQuadError, InvalidInputError

Point = tuple[float, float]

# Intersection slivers below this area (px^2) are numerical noise.
_SLIVER_AREA = 1e-12


@dataclass(frozen=True)
class OrientedBox:
    """Five-parameter long-side box: center, long side w, short side h, theta.

    theta is the angle (degrees) between the long side and the x axis,
    reduced modulo 180 on construction. Exact squares are reduced modulo 90,
    since both representatives describe the same corner set.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        values = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"non-finite box parameters: {values}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"box sides must be positive, got w={self.w}, h={self.h}")
        if self.w < self.h:
            raise InvalidInputError(f"long-side box requires w >= h, got w={self.w}, h={self.h}")
        period = 90.0 if self.w == self.h else 180.0
        object.__setattr__(self, "theta", self.theta % period)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class AxisAlignedBox:
    """Axis-aligned box as center plus width/height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h)):
            raise InvalidInputError("non-finite box parameters")
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"box sides must be positive, got w={self.w}, h={self.h}")


def _signed_area(vertices: Sequence[Point]) -> float:
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def _is_convex_ccw(vertices: Sequence[Point]) -> bool:
    n = len(vertices)
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        cx, cy = vertices[(i + 2) % n]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if cross < 0.0:
            return False
    return True


@dataclass(frozen=True)
class QuadPolygon:
    """Convex quadrilateral with vertices in counter-clockwise order."""

    vertices: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.vertices) != 4:
            raise InvalidInputError("quad requires exactly 4 vertices")
        pts = tuple((float(x), float(y)) for x, y in self.vertices)
        if not all(math.isfinite(x) and math.isfinite(y) for x, y in pts):
            raise InvalidInputError("non-finite quad vertices")
        object.__setattr__(self, "vertices", pts)
        if _signed_area(pts) <= 0.0:
            raise DegenerateQuadError("quad must be counter-clockwise with positive area")
        if not _is_convex_ccw(pts):
            raise DegenerateQuadError("quad must be convex")

    @classmethod
    def from_points(cls, points: Sequence[Point]) -> "QuadPolygon":
        """Build a quad from 4 points in any winding, normalizing to CCW.

        Points given in an order that zig-zags are re-sorted around their
        centroid. Duplicate or collinear point sets raise DegenerateQuadError.
        """
        if len(points) != 4:
            raise DegenerateQuadError("expected exactly 4 points")
        pts = [(float(x), float(y)) for x, y in points]
        for i in range(4):
            for j in range(i + 1, 4):
                if pts[i] == pts[j]:
                    raise DegenerateQuadError(f"duplicate point {pts[i]}")

        def ordered_ccw(candidate):
            area = _signed_area(candidate)
            if area < 0.0:
                candidate = list(reversed(candidate))
                area = -area
            if area < _SLIVER_AREA or not _is_convex_ccw(candidate):
                return None
            return candidate

        result = ordered_ccw(pts)
        if result is None:
            cx = sum(p[0] for p in pts) / 4.0
            cy = sum(p[1] for p in pts) / 4.0
            result = ordered_ccw(sorted(pts, key=lambda p: math.atan2(p[1] - cy, p[0] - cx)))
        if result is None:
            raise DegenerateQuadError("points do not form a convex quad")
        return cls(tuple(result))

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)


def longside(cx: float, cy: float, w: float, h: float, theta: float) -> OrientedBox:
    """Normalize an arbitrary (w, h, theta) description into long-side form.

    If w < h the sides are swapped and theta advances by 90 degrees; the
    resulting box covers the identical point set.
    """
    if w < h:
        w, h, theta = h, w, theta + 90.0
    return OrientedBox(cx, cy, w, h, theta)


def from_acute90(cx: float, cy: float, w_cv: float, h_cv: float, theta_cv: float) -> OrientedBox:
    """Convert an acute-angle (OpenCV-style) box into long-side form.

    theta_cv in (0, 90] is the angle of the w_cv side measured from the
    x axis. The output encloses the identical point set.
    """
    if not (w_cv > 0 and h_cv > 0):
        raise InvalidInputError(f"box sides must be positive, got w={w_cv}, h={h_cv}")
    if not (0.0 < theta_cv <= 90.0):
        raise InvalidInputError(f"acute convention requires 0 < theta <= 90, got {theta_cv}")
    return longside(cx, cy, w_cv, h_cv, theta_cv)


def to_corners(box: OrientedBox) -> QuadPolygon:
    """Corner polygon of a box, counter-clockwise."""
    rad = math.radians(box.theta)
    ux, uy = math.cos(rad), math.sin(rad)
    vx, vy = -uy, ux
    a, b = 0.5 * box.w, 0.5 * box.h
    return QuadPolygon((
        (box.cx + a * ux + b * vx, box.cy + a * uy + b * vy),
        (box.cx - a * ux + b * vx, box.cy - a * uy + b * vy),
        (box.cx - a * ux - b * vx, box.cy - a * uy - b * vy),
        (box.cx + a * ux - b * vx, box.cy + a * uy - b * vy),
    ))


def from_corners(quad: QuadPolygon) -> OrientedBox:
    """Minimum-area enclosing rectangle of a quad, in long-side form.

    Scans the edge-aligned orientations of the convex quad (rotating
    calipers for four points); for exact rectangle inputs this round-trips
    to_corners within 1e-6 px.
    """
    pts = quad.vertices
    best = None
    for i in range(4):
        px, py = pts[i]
        qx, qy = pts[(i + 1) % 4]
        ex, ey = qx - px, qy - py
        norm = math.hypot(ex, ey)
        if norm < 1e-12:
            continue
        ux, uy = ex / norm, ey / norm
        su = [x * ux + y * uy for x, y in pts]
        sv = [y * ux - x * uy for x, y in pts]
        lo_u, hi_u = min(su), max(su)
        lo_v, hi_v = min(sv), max(sv)
        area = (hi_u - lo_u) * (hi_v - lo_v)
        if best is None or area < best[0]:
            best = (area, ux, uy, lo_u, hi_u, lo_v, hi_v)
    if best is None:
        raise DegenerateQuadError("quad has no usable edges")
    _, ux, uy, lo_u, hi_u, lo_v, hi_v = best
    cu, cv = 0.5 * (lo_u + hi_u), 0.5 * (lo_v + hi_v)
    cx = cu * ux - cv * uy
    cy = cu * uy + cv * ux
    side_u = hi_u - lo_u
    side_v = hi_v - lo_v
    theta = math.degrees(math.atan2(uy, ux))
    return longside(cx, cy, side_u, side_v, theta)


def _clip_by_edge(subject: list[Point], ax: float, ay: float, bx: float, by: float) -> list[Point]:
    # Keeps the part of the subject on the left of the directed edge a->b.
    ex, ey = bx - ax, by - ay
    out: list[Point] = []
    n = len(subject)
    for i in range(n):
        sx, sy = subject[i - 1]
        px, py = subject[i]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= 0.0
        p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
        if p_in != s_in:
            dx, dy = px - sx, py - sy
            denom = ex * dy - ey * dx
            if denom != 0.0:
                t = (ex * (ay - sy) - ey * (ax - sx)) / denom
                out.append((sx + t * dx, sy + t * dy))
        if p_in:
            out.append((px, py))
    return out


def convex_intersection_area(a: QuadPolygon, b: QuadPolygon) -> float:
    """Intersection area of two convex quads (Sutherland-Hodgman clipping)."""
    poly = list(a.vertices)
    clip = b.vertices
    for i in range(4):
        if not poly:
            return 0.0
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % 4]
        poly = _clip_by_edge(poly, ax, ay, bx, by)
    if len(poly) < 3:
        return 0.0
    area = abs(_signed_area(poly))
    if area < _SLIVER_AREA:
        return 0.0
    return min(area, a.area, b.area)


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two oriented boxes, in [0, 1]."""
    qa = to_corners(a)
    qb = to_corners(b)
    # Cheap axis-aligned reject before clipping.
    axs = [p[0] for p in qa.vertices]
    ays = [p[1] for p in qa.vertices]
    bxs = [p[0] for p in qb.vertices]
    bys = [p[1] for p in qb.vertices]
    if max(axs) < min(bxs) or max(bxs) < min(axs) or max(ays) < min(bys) or max(bys) < min(ays):
        return 0.0
    inter = convex_intersection_area(qa, qb)
    union = qa.area + qb.area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def aabb_giou(a: AxisAlignedBox, b: AxisAlignedBox) -> float:
    """Generalized IoU of two axis-aligned boxes, in (-1, 1]."""
    ar, al = a.cx + 0.5 * a.w, a.cx - 0.5 * a.w
    at, ab = a.cy + 0.5 * a.h, a.cy - 0.5 * a.h
    br, bl = b.cx + 0.5 * b.w, b.cx - 0.5 * b.w
    bt, bb = b.cy + 0.5 * b.h, b.cy - 0.5 * b.h
    iw = max(0.0, min(ar, br) - max(al, bl))
    ih = max(0.0, min(at, bt) - max(ab, bb))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    iou = inter / union
    cw = max(ar, br) - min(al, bl)
    ch = max(at, bt) - min(ab, bb)
    enclosing = cw * ch
    return iou - (enclosing - union) / enclosing


def rotated_nms(
    items: Sequence[tuple[OrientedBox, float, object]],
    iou_threshold: float,
    class_agnostic: bool = False,
) -> list[int]:
    """Greedy NMS over (box, score, category) items.

    Returns indices of kept items in descending score order (equal scores
    break toward the lower input index). An item is suppressed when its
    rotated IoU with an already-kept item of the same suppression group
    (same category unless class_agnostic) exceeds iou_threshold.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise InvalidInputError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    for _, score, _ in items:
        if not math.isfinite(score):
            raise InvalidInputError(f"non-finite score {score}")
    order = sorted(range(len(items)), key=lambda i: (-items[i][1], i))
    suppressed = [False] * len(items)
    kept: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(i)
        box_i, _, cat_i = items[i]
        for j in order[pos + 1:]:
            if suppressed[j]:
                continue
            box_j, _, cat_j = items[j]
            if not class_agnostic and cat_i != cat_j:
                continue
            if rotated_iou(box_i, box_j) > iou_threshold:
                suppressed[j] = True
    return kept
