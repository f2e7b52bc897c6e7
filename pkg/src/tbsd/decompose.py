"""Smooth-plus-sparse decomposition of defect-free images.

Alternates a penalised B-spline background fit with soft-thresholding of the
remainder, which yields a sparse texture estimate used for basis learning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .smooth_basis import SmoothBasis, hat_operator, smoothing_penalty


def soft_threshold(x, t: float):
    """Proximal map of ``2t|z|`` for the loss ``(z - x)^2``: ``sgn(x)(|x| - t)_+``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass
class Decomposition:
    """``Y = background + texture + anomaly + residual``."""

    background: np.ndarray
    texture: np.ndarray
    anomaly: np.ndarray
    residual: np.ndarray
    theta: np.ndarray | None = None
    theta_t: np.ndarray | None = None
    history: list[float] = field(default_factory=list)

    def total(self) -> np.ndarray:
        return self.background + self.texture + self.anomaly + self.residual


def as_image(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or min(Y.shape) < 1:
        raise ValueError("an image must be a nonempty 2D array")
    if not np.all(np.isfinite(Y)):
        raise ValueError("image contains non-finite values")
    return Y


def model1_objective(Y, background, texture, theta, basis: SmoothBasis, lam, gamma) -> float:
    """``||e||^2 + lam theta^T R theta + gamma ||C_tex||_1``."""
    e = Y - background - texture
    return float(np.sum(e * e) + smoothing_penalty(theta, basis, lam) + gamma * np.abs(texture).sum())


def low_rank_decompose(
    Y,
    basis: SmoothBasis,
    lam: float = 0.1,
    gamma: float = 0.2,
    iter_times: int = 1,
    rel_tol: float | None = None,
    track: bool = False,
) -> Decomposition:
    """Estimate background and texture of a defect-free image.

    Starting from a zero texture, repeats ``iter_times`` times:
    background <- H(Y - texture), texture <- S_{gamma/2}(Y - background).
    With ``track`` the objective is recorded after every half-step.  A
    relative-change stop is applied only when ``rel_tol`` is given.
    """
    Y = as_image(Y)
    if Y.shape != basis.shape:
        raise ValueError(f"image shape {Y.shape} does not match basis shape {basis.shape}")
    if iter_times < 1:
        raise ValueError("iter_times must be at least 1")
    if lam <= 0 or gamma <= 0:
        raise ValueError("lam and gamma must be positive")
    H = hat_operator(basis, lam)
    tex = np.zeros_like(Y)
    history: list[float] = []
    theta = None
    for _ in range(iter_times):
        theta = H.coefficients(Y - tex)
        bg = basis.reconstruct(theta)
        if track:
            history.append(model1_objective(Y, bg, tex, theta, basis, lam, gamma))
        new_tex = soft_threshold(Y - bg, gamma / 2)
        if track:
            history.append(model1_objective(Y, bg, new_tex, theta, basis, lam, gamma))
        change = np.linalg.norm(new_tex - tex)
        tex = new_tex
        if rel_tol is not None and change <= rel_tol * max(np.linalg.norm(tex), 1e-300):
            break
    return Decomposition(bg, tex, np.zeros_like(Y), Y - bg - tex, theta=theta, history=history)
