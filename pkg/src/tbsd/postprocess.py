"""Closed defect regions from pixel masks, and pixelwise TPR/FPR scoring."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline


@dataclass
class DefectRegion:
    knots: np.ndarray  # (k, 2) boundary knots, (row, col)
    curve: np.ndarray  # (s, 2) closed polyline, first point not repeated
    area: np.ndarray  # (N, 2) integer pixels inside the curve

    def to_mask(self, shape) -> np.ndarray:
        out = np.zeros(shape, bool)
        if self.area.size:
            out[self.area[:, 0], self.area[:, 1]] = True
        return out


def points_in_polygon(points, polygon) -> np.ndarray:
    """Even-odd rule for ``points`` (N, 2) against a closed ``polygon`` (M, 2)."""
    P = np.asarray(points, dtype=float)
    V = np.asarray(polygon, dtype=float)
    y, x = P[:, 0][:, None], P[:, 1][:, None]
    y0, x0 = V[:, 0][None, :], V[:, 1][None, :]
    V1 = np.roll(V, -1, axis=0)
    y1, x1 = V1[:, 0][None, :], V1[:, 1][None, :]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (x < xcross)
    return (hits.sum(axis=1) % 2).astype(bool)


def closed_curve(knots, density: int = 4) -> np.ndarray:
    """Periodic cubic spline through ``knots`` in order, sampled ``density`` times per knot."""
    K = np.asarray(knots, dtype=float)
    closed = np.vstack([K, K[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    t = np.concatenate([[0.0], np.cumsum(np.maximum(seg, 1e-9))])
    spline = CubicSpline(t, closed, bc_type="periodic")
    s = np.linspace(0.0, t[-1], density * len(K), endpoint=False)
    return spline(s)


def boundary_knots(pixels, max_rotate: int = 36, push: float = 0.5) -> np.ndarray:
    """Farthest pixel from the centroid in each of ``max_rotate`` angular sectors.

    Knots are pushed ``push`` pixels further out along their ray so the
    curve encloses whole boundary pixels.  Empty sectors give no knot.
    """
    P = np.asarray(pixels, dtype=float)
    c = P.mean(axis=0)
    d = P - c
    ang = np.arctan2(-d[:, 0], d[:, 1]) % (2 * np.pi)
    rad = np.hypot(d[:, 0], d[:, 1])
    sector = np.minimum((ang / (2 * np.pi / max_rotate)).astype(int), max_rotate - 1)
    knots = []
    for k in range(max_rotate):
        sel = np.flatnonzero(sector == k)
        if sel.size == 0:
            continue
        j = sel[np.argmax(rad[sel])]
        if rad[j] > 0:
            knots.append(P[j] + push * d[j] / rad[j])
        else:
            knots.append(P[j])
    return np.array(knots).reshape(-1, 2)


def close_regions(mask, max_rotate: int = 36, d_max: int = 5) -> list[DefectRegion]:
    """Group defect pixels and replace each group by the area inside a smooth closed boundary.

    Groups are connected components after dilating the mask by ``d_max``
    (Chebyshev).  Groups yielding fewer than 3 knots, or a degenerate curve,
    keep their own pixels as the area.
    """
    if max_rotate < 8 or d_max < 1:
        raise ValueError("need max_rotate >= 8 and d_max >= 1")
    M = np.asarray(mask, dtype=bool)
    if not M.any():
        return []
    grown = ndimage.binary_dilation(M, structure=np.ones((2 * d_max + 1, 2 * d_max + 1), bool))
    labels, count = ndimage.label(grown, structure=np.ones((3, 3), bool))
    regions = []
    for k in range(1, count + 1):
        pix = np.argwhere(M & (labels == k))
        if pix.size == 0:
            continue
        knots = boundary_knots(pix, max_rotate)
        if len(knots) < 3:
            regions.append(DefectRegion(knots, knots.copy(), pix))
            continue
        curve = closed_curve(knots)
        r0, c0 = np.floor(curve.min(axis=0)).astype(int)
        r1, c1 = np.ceil(curve.max(axis=0)).astype(int)
        r0, c0 = max(r0, 0), max(c0, 0)
        r1, c1 = min(r1, M.shape[0] - 1), min(c1, M.shape[1] - 1)
        rr, cc = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
        cand = np.column_stack([rr.ravel(), cc.ravel()])
        inside = cand[points_in_polygon(cand, curve)]
        regions.append(DefectRegion(knots, curve, inside if inside.size else pix))
    return regions


def regions_mask(regions, shape) -> np.ndarray:
    out = np.zeros(shape, bool)
    for r in regions:
        out |= r.to_mask(shape)
    return out


@dataclass(frozen=True)
class MetricReport:
    tpr: float
    fpr: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred_mask, truth_mask) -> MetricReport:
    """Pixelwise confusion counts; a rate with an empty denominator is NaN."""
    p = np.asarray(pred_mask, dtype=bool)
    t = np.asarray(truth_mask, dtype=bool)
    if p.shape != t.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {t.shape}")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(np.sum(~p & ~t))
    tpr = tp / (tp + fn) if tp + fn else float("nan")
    fpr = fp / (fp + tn) if fp + tn else float("nan")
    return MetricReport(tpr, fpr, tp, fp, tn, fn)
