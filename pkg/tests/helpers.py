"""Independent oracles shared by the unit and acceptance tests.

Everything here is deliberately written from scratch against the same
contracts as the library, without reusing its internals, so that the two
routes stay independent.
"""

import math

import numpy as np

from anglekit import OrientedBox, rotated_iou, to_corners


def random_longside_box(rng, span=3.0):
    cx, cy = rng.uniform(-span, span, size=2)
    s1, s2 = rng.uniform(0.5, 3.0, size=2)
    w, h = max(s1, s2), min(s1, s2)
    if w == h:
        w += 1e-6
    return OrientedBox(cx, cy, w, h, rng.uniform(0.0, 180.0))


def overlapping_box_pair(rng):
    a = random_longside_box(rng, span=1.0)
    b = random_longside_box(rng, span=1.0)
    return a, b


def points_in_box(xs, ys, box):
    """Vectorized membership test against an oriented box."""
    rad = math.radians(box.theta)
    c, s = math.cos(rad), math.sin(rad)
    dx, dy = xs - box.cx, ys - box.cy
    lu = dx * c + dy * s
    lv = -dx * s + dy * c
    return (np.abs(lu) <= box.w / 2.0) & (np.abs(lv) <= box.h / 2.0)


def points_in_ccw_quad(xs, ys, vertices):
    """Vectorized membership test against a convex CCW polygon."""
    inside = np.ones(xs.shape, dtype=bool)
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        inside &= (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0) >= 0.0
    return inside


def mc_iou_estimate(box_a, box_b, n_samples, rng):
    """Monte-Carlo IoU over the joint bounding region of the two boxes."""
    corners = list(to_corners(box_a).vertices) + list(to_corners(box_b).vertices)
    xs = [p[0] for p in corners]
    ys = [p[1] for p in corners]
    px = rng.uniform(min(xs), max(xs), size=n_samples)
    py = rng.uniform(min(ys), max(ys), size=n_samples)
    in_a = points_in_box(px, py, box_a)
    in_b = points_in_box(px, py, box_b)
    n_union = int(np.count_nonzero(in_a | in_b))
    if n_union == 0:
        return 0.0
    return int(np.count_nonzero(in_a & in_b)) / n_union


def mc_intersection_fraction(quad_a, quad_b, n_samples, rng):
    """Monte-Carlo estimate of intersection area over bounding-region area."""
    corners = list(quad_a.vertices) + list(quad_b.vertices)
    xs = [p[0] for p in corners]
    ys = [p[1] for p in corners]
    lo_x, hi_x, lo_y, hi_y = min(xs), max(xs), min(ys), max(ys)
    px = rng.uniform(lo_x, hi_x, size=n_samples)
    py = rng.uniform(lo_y, hi_y, size=n_samples)
    both = points_in_ccw_quad(px, py, quad_a.vertices) & points_in_ccw_quad(px, py, quad_b.vertices)
    frac = np.count_nonzero(both) / n_samples
    bbox_area = (hi_x - lo_x) * (hi_y - lo_y)
    return frac, bbox_area


def brute_force_min_rect_area(points, step_deg=0.01):
    """Minimum bounding-rectangle area over a grid of orientations."""
    pts = np.asarray(points, dtype=float)
    best = math.inf
    for phi in np.arange(0.0, 90.0, step_deg):
        rad = math.radians(phi)
        c, s = math.cos(rad), math.sin(rad)
        u = pts[:, 0] * c + pts[:, 1] * s
        v = -pts[:, 0] * s + pts[:, 1] * c
        area = (u.max() - u.min()) * (v.max() - v.min())
        if area < best:
            best = area
    return best


def reference_nms(items, iou_threshold, class_agnostic=False):
    """Plain O(n^2) greedy NMS written directly against the contract."""
    n = len(items)
    order = sorted(range(n), key=lambda i: (-items[i][1], i))
    alive = [True] * n
    kept = []
    for i in order:
        if not alive[i]:
            continue
        kept.append(i)
        for j in order:
            if j == i or not alive[j]:
                continue
            if not class_agnostic and items[i][2] != items[j][2]:
                continue
            if rotated_iou(items[i][0], items[j][0]) > iou_threshold:
                alive[j] = False
        alive[i] = False
    return kept


def reference_match(dets, gts, iou_threshold):
    """From-scratch single-category matcher following the VOC-style protocol.

    Returns (tp, fp, gt_matched) lists aligned with the inputs.
    """
    det_order = sorted(range(len(dets)),
                       key=lambda i: (-dets[i].score, dets[i].image_id, i))
    tp = [False] * len(dets)
    fp = [False] * len(dets)
    claimed = [False] * len(gts)
    for di in det_order:
        det = dets[di]
        candidates = [gi for gi, gt in enumerate(gts)
                      if gt.image_id == det.image_id and (gt.difficult or not claimed[gi])]
        best_gi, best_iou = -1, 0.0
        for gi in candidates:
            iou = rotated_iou(det.box, gts[gi].box)
            if iou > best_iou:
                best_gi, best_iou = gi, iou
        if best_gi < 0 or best_iou < iou_threshold:
            fp[di] = True
        elif not gts[best_gi].difficult:
            tp[di] = True
            claimed[best_gi] = True
    return tp, fp, claimed


def reference_voc07_ap(recall, precision):
    levels = [i / 10.0 for i in range(11)]
    bests = []
    for level in levels:
        best = 0.0
        for r, p in zip(recall, precision):
            if r >= level and p > best:
                best = p
        bests.append(best)
    return math.fsum(bests) / 11.0


def reference_voc12_ap(recall, precision):
    mrec = [0.0] + list(recall) + [1.0]
    mpre = [0.0] + list(precision) + [0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    terms = []
    for i in range(len(mrec) - 1):
        if mrec[i + 1] != mrec[i]:
            terms.append((mrec[i + 1] - mrec[i]) * mpre[i + 1])
    return math.fsum(terms)


def reference_evaluate(gts, dets, iou_threshold, mode):
    """Scripted per-category AP computation independent of the evaluator."""
    categories = sorted({g.category for g in gts})
    aps = {}
    for cat in categories:
        cat_gts = [g for g in gts if g.category == cat]
        cat_dets = [d for d in dets if d.category == cat]
        tp, fp, _ = reference_match(cat_dets, cat_gts, iou_threshold)
        order = sorted(range(len(cat_dets)),
                       key=lambda i: (-cat_dets[i].score, cat_dets[i].image_id, i))
        npos = sum(1 for g in cat_gts if not g.difficult)
        rec, prec, tp_cum, fp_cum = [], [], 0, 0
        for di in order:
            if tp[di]:
                tp_cum += 1
            elif fp[di]:
                fp_cum += 1
            else:
                continue
            rec.append(tp_cum / npos if npos else 0.0)
            prec.append(tp_cum / (tp_cum + fp_cum))
        if npos == 0 or not rec:
            aps[cat] = 0.0
        elif mode == "voc07":
            aps[cat] = reference_voc07_ap(rec, prec)
        else:
            aps[cat] = reference_voc12_ap(rec, prec)
    return aps
