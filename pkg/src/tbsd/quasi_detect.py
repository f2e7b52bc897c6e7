"""Rotational line sampling and texture-direction detection.

Angles follow the usual y-up convention around the datum point: ``alpha = 0``
points along increasing columns and ``alpha = pi/2`` towards row 0.  Angles
are directions, so they are folded into ``[0, pi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class SamplingConfig:
    line_count: int = 9
    line_width: int = 5
    center_gap: float = 7.0
    max_rotate: int = 36
    datum: tuple[float, float] | None = None  # (row, col); image centre when None
    # which sampling direction carries the larger deviation
    high_along: str = "expansion"
    # below this max|F| / max std the paired score is uninformative; None disables the fallback
    isotropy_ratio: float | None = 0.25

    def __post_init__(self):
        if self.line_count < 1 or self.line_width < 1 or self.max_rotate < 2:
            raise ValueError("line_count, line_width must be >= 1 and max_rotate >= 2")
        if self.center_gap <= 0:
            raise ValueError("center_gap must be positive")
        if self.high_along not in ("expansion", "extension"):
            raise ValueError("high_along must be 'expansion' or 'extension'")

    @property
    def unit_angle(self) -> float:
        return np.pi / self.max_rotate


def direction_vector(alpha: float) -> np.ndarray:
    """(drow, dcol) step for a direction in y-up image coordinates."""
    return np.array([-np.sin(alpha), np.cos(alpha)])


def _line_coords(shape, alpha, config: SamplingConfig, center):
    m, n = shape
    u = direction_vector(alpha)
    v = direction_vector(alpha + np.pi / 2)
    half = int(np.ceil(np.hypot(m, n)))
    t = np.arange(-half, half + 1, dtype=float)
    offsets = (np.arange(config.line_count) - (config.line_count - 1) / 2) * config.center_gap
    widths = np.arange(config.line_width) - (config.line_width - 1) / 2
    lines = []
    for off in offsets:
        base = center[:, None] + off * v[:, None] + u[:, None] * t[None, :]
        keep = (base[0] >= 0) & (base[0] <= m - 1) & (base[1] >= 0) & (base[1] <= n - 1)
        base = base[:, keep]
        if base.shape[1] == 0:
            continue
        lines.append(base[:, None, :] + widths[None, :, None] * v[:, None, None])
    return lines


def lsera_sample(image, config: SamplingConfig = SamplingConfig()) -> list[list[np.ndarray]]:
    """Per rotation index ``k``, the samples along each parallel line at angle ``k*pi/K``.

    Every sample is the mean of ``line_width`` bilinear reads spaced one pixel
    apart perpendicular to the line.  Lines are clipped to the image.
    """
    Y = np.asarray(image, dtype=float)
    m, n = Y.shape
    center = np.array(config.datum if config.datum is not None else ((m - 1) / 2, (n - 1) / 2), float)
    if not (0 <= center[0] <= m - 1 and 0 <= center[1] <= n - 1):
        raise ValueError("datum point lies outside the image")
    out = []
    for k in range(config.max_rotate):
        alpha = k * config.unit_angle
        per_line = []
        for coords in _line_coords(Y.shape, alpha, config, center):
            flat = coords.reshape(2, -1)
            vals = ndimage.map_coordinates(Y, flat, order=1, mode="nearest")
            per_line.append(vals.reshape(coords.shape[1:]).mean(axis=0))
        if not per_line or sum(len(p) for p in per_line) < 2:
            raise ValueError(f"no usable samples at angle index {k}; image too small")
        out.append(per_line)
    return out


@dataclass(frozen=True)
class DirectionSet:
    extension: tuple[float, ...]
    expansion: tuple[float, ...]
    threshold: float
    scores: tuple[float, ...] = field(default_factory=tuple)
    unit_angle: float = np.pi / 36
    rule: str = "paired"  # or "peaks" when the isotropic fallback fired

    @property
    def expansion_deg(self) -> list[float]:
        return [float(np.round(np.degrees(a), 9)) for a in self.expansion]

    @property
    def extension_deg(self) -> list[float]:
        return [float(np.round(np.degrees(a), 9)) for a in self.extension]

    def report(self) -> dict:
        return {
            "unit_angle_deg": float(np.degrees(self.unit_angle)),
            "threshold": self.threshold,
            "rule": self.rule,
            "scores": list(self.scores),
            "expansion_deg": self.expansion_deg,
            "extension_deg": self.extension_deg,
        }

    @classmethod
    def from_expansion_deg(cls, angles, max_rotate: int = 36) -> "DirectionSet":
        """Direction set for known expansion angles, snapped to the unit grid."""
        unit = np.pi / max_rotate
        ks = sorted({int(round(np.radians(a) / unit)) % max_rotate for a in angles})
        exp = tuple(k * unit for k in ks)
        ext = tuple(((k + max_rotate // 2) % max_rotate) * unit for k in ks) if max_rotate % 2 == 0 else tuple(
            (a + np.pi / 2) % np.pi for a in exp
        )
        return cls(ext, exp, float("nan"), (), unit, "given")


def angle_stds(samples) -> np.ndarray:
    """Standard deviation of the concatenated lines at every angle; round-off level values become 0."""
    stds = np.empty(len(samples))
    for k, lines in enumerate(samples):
        vals = np.concatenate([np.asarray(s, float) for s in lines]) if lines else np.empty(0)
        if vals.size == 0:
            raise ValueError(f"empty sample set at angle index {k}")
        sd = vals.std()
        # interpolation round-off on flat data is not texture
        stds[k] = 0.0 if sd <= 1e-12 * (1.0 + np.abs(vals).max()) else sd
    return stds


def direction_scores(samples) -> np.ndarray:
    """``F(k) = std(S_k) - std(S_{k + K/2})`` with stds over concatenated lines."""
    K = len(samples)
    if K == 0 or K % 2:
        raise ValueError("need an even, nonzero number of angles to pair k with k + pi/2")
    stds = angle_stds(samples)
    return stds - np.roll(stds, -K // 2)


def std_peaks(stds, q: float = 0.5) -> tuple[list[int], float]:
    """Circular runs of ``stds`` above ``q (max - min) + min``, one index per run.

    Each run contributes its excess-weighted centroid, rounded to the grid.
    """
    s = np.asarray(stds, dtype=float)
    K = s.size
    lo, hi = float(s.min()), float(s.max())
    phi = q * (hi - lo) + lo
    above = s > phi
    if hi <= lo or above.all():
        return [], phi
    start = int(np.flatnonzero(~above)[0])
    picks, run = [], []
    for i in range(start, start + K + 1):
        k = i % K
        if above[k] and i < start + K:
            run.append(i)
            continue
        if run:
            idx = np.array(run, dtype=float)
            w = s[np.array(run) % K] - phi
            picks.append(int(np.round(np.sum(idx * w) / np.sum(w))) % K)
            run = []
    return sorted(set(picks)), phi


def detect_directions(samples, unit_angle: float | None = None, q: float = 0.5,
                      high_along: str = "expansion", isotropy_ratio: float | None = None) -> DirectionSet:
    """Threshold the paired deviation scores into texture directions.

    ``phi = q (max|F| - min|F|) + min|F|`` and index ``k`` is selected when
    ``F(k) > phi``.  With ``high_along='extension'`` a selected angle is an
    extension direction and its perpendicular joins the expansion set; with
    ``'expansion'`` the selected angle is itself the expansion direction.

    A pattern repeating along two perpendicular-ish directions with equal
    strength (a symmetric cross) makes ``F`` vanish everywhere.  When
    ``isotropy_ratio`` is set and ``max|F| < isotropy_ratio * max std``, the
    peaks of the raw per-angle deviation are selected instead.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if high_along not in ("expansion", "extension"):
        raise ValueError("high_along must be 'expansion' or 'extension'")
    F = direction_scores(samples)
    K = F.size
    unit = np.pi / K if unit_angle is None else float(unit_angle)
    a = np.abs(F)
    phi = float(q * (a.max() - a.min()) + a.min())
    picked = [k for k in range(K) if F[k] > phi]
    rule = "paired"
    stds = angle_stds(samples)
    if isotropy_ratio is not None and stds.max() > 0 and a.max() < isotropy_ratio * stds.max():
        picked, phi = std_peaks(stds, q)
        rule = "peaks"
    half = K // 2
    if high_along == "extension":
        ext_k, exp_k = picked, [(k + half) % K for k in picked]
    else:
        exp_k, ext_k = picked, [(k + half) % K for k in picked]
    return DirectionSet(
        tuple(k * unit for k in ext_k),
        tuple(k * unit for k in exp_k),
        float(phi),
        tuple(float(f) for f in F),
        unit,
        rule,
    )


def find_directions(image, config: SamplingConfig = SamplingConfig(), q: float = 0.5) -> DirectionSet:
    return detect_directions(lsera_sample(image, config), config.unit_angle, q, config.high_along,
                             config.isotropy_ratio)
