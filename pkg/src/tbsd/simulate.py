"""Synthetic textured images with planted anomalies and exact ground truth.

An image is ``clip(background + texture + anomaly + noise, 0, 1)``.  The
background is a gentle quadratic polynomial, the texture a family of
parallel anti-aliased lines per expansion angle, and anomalies are flat
offsets on disks, squares or irregular blobs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .decompose import Decomposition

FAMILIES = ("Prior One-direction", "Non-prior One-direction", "Non-prior Crossing")
SHAPES = ("disk", "square", "blob")


@dataclass(frozen=True)
class Anomaly:
    shape: str
    center: tuple[float, float]  # (row, col)
    size: float  # square side or disk/blob diameter, pixels
    amplitude: float
    phase: float = 0.0  # blob lobe orientation

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown anomaly shape {self.shape!r}")
        if self.size <= 0:
            raise ValueError("anomaly size must be positive")

    def footprint(self, shape) -> np.ndarray:
        m, n = shape
        r, c = np.mgrid[0:m, 0:n].astype(float)
        dr, dc = r - self.center[0], c - self.center[1]
        half = self.size / 2
        if self.shape == "square":
            return (np.abs(dr) < half) & (np.abs(dc) < half)
        rad = np.hypot(dr, dc)
        if self.shape == "disk":
            return rad <= half
        ang = np.arctan2(-dr, dc)
        return rad <= half * (0.75 + 0.25 * np.sin(3 * ang + self.phase))

    def inside(self, shape) -> bool:
        m, n = shape
        half = self.size / 2
        r, c = self.center
        return half <= r <= m - 1 - half and half <= c <= n - 1 - half


@dataclass(frozen=True)
class SimSpec:
    size: tuple[int, int] = (344, 351)
    pattern: str = "cross"
    angles: tuple[float, ...] = (45.0, 135.0)  # expansion directions, degrees
    spacing: float = 10.0
    amplitude: float = 0.3
    background: tuple[float, ...] = (0.5, 0.06, -0.04, 0.03, 0.02, -0.03)
    anomalies: tuple[Anomaly, ...] = ()
    noise: float = 0.01
    jitter: float = 0.0  # max per-line offset, pixels
    line_width: float = 1.0  # half-width of the line core, pixels
    phase: float | None = None  # line offset; drawn from the seed when None
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in ("one_direction", "cross"):
            raise ValueError("pattern must be 'one_direction' or 'cross'")
        if self.pattern == "one_direction" and len(self.angles) != 1:
            raise ValueError("one_direction needs exactly one angle")
        if self.pattern == "cross" and len(self.angles) != 2:
            raise ValueError("cross needs exactly two angles")
        if self.spacing < 2:
            raise ValueError("spacing must be at least 2")
        if self.noise < 0 or self.jitter < 0:
            raise ValueError("noise and jitter must be nonnegative")
        if not 0 < self.line_width <= self.spacing / 5:
            raise ValueError("line_width must lie in (0, spacing / 5]")
        object.__setattr__(self, "anomalies", tuple(
            a if isinstance(a, Anomaly) else Anomaly(**a) for a in self.anomalies))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anomalies"] = [asdict(a) for a in self.anomalies]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        d = dict(d)
        for key in ("size", "angles", "background"):
            if key in d:
                d[key] = tuple(d[key])
        d["anomalies"] = tuple(
            Anomaly(a["shape"], tuple(a["center"]), a["size"], a["amplitude"], a.get("phase", 0.0))
            for a in d.get("anomalies", ())
        )
        return cls(**d)

    def quasi_sigma(self) -> float:
        """Bound on one spacing window's l2 deviation caused by line jitter.

        The line profile is ``1.5 * amplitude / line_width``-Lipschitz, so a
        shift of at most ``jitter`` moves each of ``spacing`` samples by at
        most that much.
        """
        lip = 1.5 * abs(self.amplitude) / self.line_width
        return lip * self.jitter * float(np.sqrt(np.ceil(self.spacing)))


def line_profile(d, amplitude: float = 1.0, width: float = 1.0) -> np.ndarray:
    """Zero-mean anti-aliased line: a tent of half-width ``width`` with half-height negative shoulders."""
    tri = lambda u: np.maximum(0.0, 1.0 - np.abs(u))
    d = np.asarray(d, dtype=float) / width
    return amplitude * (tri(d) - 0.5 * tri(np.abs(d) - 1.5))


def line_texture(shape, angle_deg: float, spacing: float, amplitude: float,
                 phase: float = 0.0, jitter: float = 0.0, rng=None, width: float = 1.0) -> np.ndarray:
    """Parallel lines repeating every ``spacing`` pixels along ``angle_deg``.

    ``angle_deg`` is the expansion direction (y-up, measured from the +column
    axis about the image centre); lines run perpendicular to it.
    """
    m, n = shape
    r, c = np.mgrid[0:m, 0:n].astype(float)
    a = np.radians(angle_deg)
    d = (c - (n - 1) / 2) * np.cos(a) - (r - (m - 1) / 2) * np.sin(a) + phase
    k = np.floor(d / spacing + 0.5)
    u = d - k * spacing
    if jitter > 0:
        if rng is None:
            raise ValueError("jitter needs a random generator")
        ks = np.unique(k).astype(int)
        shifts = dict(zip(ks, rng.uniform(-jitter, jitter, ks.size)))
        u = u - np.vectorize(shifts.get)(k.astype(int))
    return line_profile(u, amplitude, width)


def polynomial_background(shape, coeffs) -> np.ndarray:
    """``c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2`` on ``[-1, 1]^2``."""
    m, n = shape
    y, x = np.meshgrid(np.linspace(-1, 1, m), np.linspace(-1, 1, n), indexing="ij")
    terms = [np.ones_like(x), x, y, x * x, x * y, y * y]
    coeffs = tuple(coeffs)
    if len(coeffs) > len(terms):
        raise ValueError("at most 6 polynomial coefficients")
    out = np.zeros(shape)
    for cf, t in zip(coeffs, terms):
        out += cf * t
    return out


@dataclass
class SimResult:
    image: np.ndarray
    truth: np.ndarray
    components: Decomposition
    spec: SimSpec


def generate(spec: SimSpec) -> SimResult:
    rng = np.random.default_rng(spec.seed)
    shape = tuple(spec.size)
    phase = rng.uniform(0, spec.spacing) if spec.phase is None else spec.phase
    bg = polynomial_background(shape, spec.background)
    tex = np.zeros(shape)
    for ang in spec.angles:
        tex += line_texture(shape, ang, spec.spacing, spec.amplitude, phase, spec.jitter, rng,
                            spec.line_width)
    anom = np.zeros(shape)
    truth = np.zeros(shape, bool)
    for a in spec.anomalies:
        if not a.inside(shape):
            raise ValueError(f"anomaly at {a.center} with size {a.size} leaves the image")
        fp = a.footprint(shape)
        anom[fp] = a.amplitude
        truth |= fp
    truth &= anom != 0
    if truth.mean() > 0.10:
        raise ValueError("anomaly footprint exceeds 10% of the image")
    noise = rng.normal(0.0, spec.noise, shape) if spec.noise > 0 else np.zeros(shape)
    image = np.clip(bg + tex + anom + noise, 0.0, 1.0)
    return SimResult(image, truth, Decomposition(bg, tex, anom, noise), spec)


def random_anomalies(shape, rng, count=(1, 3), size=None, amplitude=(0.2, 0.35)):
    """Random disks, squares and blobs; sizes default to 4-8.7% of the shorter side (14-30 px at 344)."""
    m, n = shape
    if size is None:
        s = min(m, n)
        size = (max(3.0, 0.04 * s), max(4.0, 0.087 * s))
    out = []
    for _ in range(int(rng.integers(count[0], count[1] + 1))):
        s = float(rng.uniform(*size))
        half = s / 2 + 1
        center = (float(rng.uniform(half, m - 1 - half)), float(rng.uniform(half, n - 1 - half)))
        amp = float(rng.uniform(*amplitude)) * (1 if rng.random() < 0.5 else -1)
        out.append(Anomaly(SHAPES[int(rng.integers(3))], center, s, amp, float(rng.uniform(0, 2 * np.pi))))
    return tuple(out)


@dataclass
class Family:
    name: str
    train: SimSpec
    tests: list[SimSpec]
    prior_directions: tuple[float, ...] | None

    def manifest(self, paths: dict | None = None) -> dict:
        paths = paths or {}
        return {
            "family": self.name,
            "prior_directions_deg": None if self.prior_directions is None else list(self.prior_directions),
            "train": {"seed": self.train.seed, "spec": self.train.to_dict(), **paths.get("train", {})},
            "images": [
                {"seed": s.seed, "spec": s.to_dict(), **paths.get(i, {})} for i, s in enumerate(self.tests)
            ],
        }


FAMILY_ANGLES = {
    "Prior One-direction": ("one_direction", (30.0,)),
    "Non-prior One-direction": ("one_direction", (60.0,)),
    "Non-prior Crossing": ("cross", (45.0, 135.0)),
}


def fixture_suite(count: int = 5, size=(344, 351), seed: int = 0, out_dir=None, **spec_kw) -> dict[str, Family]:
    """The three simulation families, each a defect-free training image plus ``count`` test images.

    Training and test images of a family share texture angles.  Prior
    families hand their angles to the learner; non-prior ones leave
    directions to detection.  With ``out_dir`` the images, truth masks and a
    ``manifest.json`` per family are written.
    """
    suite = {}
    root = np.random.SeedSequence(seed)
    for name, child in zip(FAMILIES, root.spawn(len(FAMILIES))):
        pattern, angles = FAMILY_ANGLES[name]
        seeds = [int(s.generate_state(1)[0]) for s in child.spawn(count + 1)]
        base = SimSpec(size=tuple(size), pattern=pattern, angles=angles, **spec_kw)
        train = replace(base, seed=seeds[0], anomalies=())
        tests = []
        for s in seeds[1:]:
            anoms = random_anomalies(tuple(size), np.random.default_rng([s, 1]))
            tests.append(replace(base, seed=s, anomalies=anoms))
        suite[name] = Family(name, train, tests, angles if name.startswith("Prior") else None)
    if out_dir is not None:
        write_suite(suite, out_dir)
    return suite


def family_slug(name: str) -> str:
    return name.lower().replace(" ", "_").replace("-", "_")


def write_suite(suite: dict[str, Family], out_dir) -> None:
    from .io import write_mask, write_png, write_json

    out = Path(out_dir)
    for fam in suite.values():
        d = out / family_slug(fam.name)
        paths: dict = {}
        res = generate(fam.train)
        write_png(d / "train.png", res.image)
        paths["train"] = {"image": "train.png"}
        for i, spec in enumerate(fam.tests):
            res = generate(spec)
            write_png(d / f"test_{i:03d}.png", res.image)
            write_mask(d / f"truth_{i:03d}.png", res.truth)
            paths[i] = {"image": f"test_{i:03d}.png", "truth": f"truth_{i:03d}.png"}
        write_json(d / "manifest.json", fam.manifest(paths))
