"""Periodic and quasi-periodic 1D/2D signal sets.

A signal set is a finite, real-valued 1D array.  A periodic set repeats a
mode of length ``T`` over a domain of length ``n``; a quasi-periodic set is
split into segments that each stay within an l2-ball of radius ``sigma``
around a common mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lcm
from typing import Sequence

import numpy as np


def as_signal(values) -> np.ndarray:
    """Validate and return a 1D float signal."""
    s = np.asarray(values, dtype=float)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("a signal must be a nonempty 1D sequence")
    if not np.all(np.isfinite(s)):
        raise ValueError("signal values must be finite")
    return s


@dataclass(frozen=True)
class PeriodicSpec:
    mode: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "mode", as_signal(self.mode))
        T = self.period
        if not 1 < T < self.n:
            raise ValueError(f"period must satisfy 1 < T < n, got T={T}, n={self.n}")

    @property
    def period(self) -> int:
        return int(self.mode.size)


@dataclass(frozen=True)
class QuasiSpec:
    """Mode, segmentation, control limit and domain of a quasi-periodic set."""

    mode: np.ndarray
    segments: tuple[int, ...]
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mode", as_signal(self.mode))
        segs = tuple(int(t) for t in self.segments)
        object.__setattr__(self, "segments", segs)
        if len(segs) < 2:
            raise ValueError("a quasi-periodic segmentation needs at least 2 segments")
        if min(segs) < 1:
            raise ValueError("segment lengths must be positive")
        if self.mode.size > min(segs):
            raise ValueError("mode length must not exceed the shortest segment")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def period(self) -> int:
        return int(self.mode.size)

    @property
    def n(self) -> int:
        return int(sum(self.segments))

    def bounds(self) -> list[tuple[int, int]]:
        """Half-open index range of every segment."""
        edges = np.concatenate([[0], np.cumsum(self.segments)])
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    @classmethod
    def from_periodic(cls, spec: PeriodicSpec, sigma: float = 0.0) -> "QuasiSpec":
        T, n = spec.period, spec.n
        segs = [T] * (n // T)
        if n % T:
            # the truncated tail is shorter than the mode; fold it into the last segment
            segs[-1] += n % T
        return cls(spec.mode, tuple(segs), sigma)


def make_periodic(spec: PeriodicSpec) -> np.ndarray:
    """Duplicate the mode over the domain, truncating the last copy."""
    return np.resize(spec.mode, spec.n)


def detect_period(signal, tol: float = 1e-9) -> int | None:
    """Smallest ``T`` in (1, n) with ``|s[i+T] - s[i]| <= tol`` everywhere."""
    s = as_signal(signal)
    n = s.size
    if n < 3:
        raise ValueError("period detection needs at least 3 samples")
    for T in range(2, n):
        if np.max(np.abs(s[T:] - s[:-T])) <= tol:
            return T
    return None


def _extend(s: np.ndarray, N: int) -> np.ndarray:
    if s.size >= N:
        return s[:N]
    T = detect_period(s) if s.size >= 3 else None
    return np.resize(s[: T or s.size], N)


def compose(signals: Sequence, weights: Sequence[float]) -> np.ndarray:
    """Weighted pointwise sum on the common domain ``N = max n_k``.

    Shorter signals are continued by their own periodic extension.
    """
    if len(signals) == 0:
        raise ValueError("compose needs at least one signal")
    if len(weights) != len(signals):
        raise ValueError("one weight per signal is required")
    sigs = [as_signal(s) for s in signals]
    N = max(s.size for s in sigs)
    out = np.zeros(N)
    for s, w in zip(sigs, weights):
        out += float(w) * _extend(s, N)
    return out


def make_quasi(spec: QuasiSpec, jitter_seed: int = 0) -> np.ndarray:
    """Generate a signal that is quasi-periodic under ``spec``.

    Every segment repeats the mode (leading-aligned, truncated to the segment
    length) plus a random perturbation whose norm over the first ``T``
    entries is strictly below ``sigma``.
    """
    rng = np.random.default_rng(jitter_seed)
    T = spec.period
    pieces = []
    for t in spec.segments:
        seg = np.resize(spec.mode, t)
        if spec.sigma > 0:
            z = rng.standard_normal(t)
            head = np.linalg.norm(z[:T])
            if head > 0:
                z *= spec.sigma * rng.uniform(0.0, 0.999) / head
            seg = seg + z
        pieces.append(seg)
    return np.concatenate(pieces)


def verify_quasi(signal, spec: QuasiSpec) -> tuple[bool, list[float]]:
    """Check every segment against the mode.

    Returns ``(ok, deviations)`` where ``deviations[m]`` is the squared l2
    distance between the first ``T`` entries of segment ``m`` and the mode.
    """
    s = as_signal(signal)
    if s.size != spec.n:
        raise ValueError(f"segmentation covers {spec.n} samples, signal has {s.size}")
    T = spec.period
    devs = [float(np.sum((s[a : a + T] - spec.mode) ** 2)) for a, _ in spec.bounds()]
    limit = spec.sigma**2 + 1e-12
    return all(d <= limit for d in devs), devs


def composite_quasi_bound(
    components: Sequence[tuple[np.ndarray, QuasiSpec]],
    weights: Sequence[float],
    shared_segment: tuple[int, int],
) -> tuple[float, float]:
    """Both sides of the Cauchy-Schwarz bound for a weighted composite.

    ``lhs`` is the squared deviation of the composite from the composite mode
    on ``shared_segment``; ``bound`` is
    ``sum(beta**2) * sum((||S_k on segment|| + sigma_k)**2)``.  Modes of
    different length are compared on their common leading part.
    """
    if len(components) == 0 or len(weights) != len(components):
        raise ValueError("need one weight per component")
    a, b = shared_segment
    T = min(spec.period for _, spec in components)
    beta = np.asarray(weights, dtype=float)
    diff = np.zeros(T)
    norms = []
    for (sig, spec), w in zip(components, beta):
        s = as_signal(sig)
        if s.size != spec.n:
            raise ValueError("component length does not match its segmentation")
        if not (0 <= a < b <= s.size):
            raise ValueError(f"segment [{a}, {b}) out of range for a component of length {s.size}")
        if (a, b) not in spec.bounds():
            raise ValueError(f"[{a}, {b}) is not a segment of every component")
        diff += w * (s[a : a + T] - spec.mode[:T])
        norms.append(np.linalg.norm(s[a:b]) + spec.sigma)
    lhs = float(diff @ diff)
    bound = float(np.sum(beta**2) * np.sum(np.square(norms)))
    return lhs, bound


def outer_2d(row_signal, col_signal) -> np.ndarray:
    """2D signal matrix ``M[i, j] = row[i] * col[j]``."""
    return np.outer(as_signal(row_signal), as_signal(col_signal))


def lcm_of(periods: Sequence[int]) -> int:
    return lcm(*[int(p) for p in periods])
