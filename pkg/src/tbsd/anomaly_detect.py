"""Anomaly detection on textured defect images.

The defect image is split into a smooth background ``B theta``, a texture
``B_t theta_t`` over a tile grid, and a sparse anomaly ``C_a``, by one pass
(or ``iter_times`` passes) of block-coordinate updates.  A smooth-plus-sparse
baseline without texture is provided for comparison.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .decompose import Decomposition, as_image, soft_threshold
from .smooth_basis import SmoothBasis, hat_operator, smoothing_penalty
from .texture_learning import TextureBasis, TileLayout, reconstruct_texture


@dataclass(frozen=True)
class DetectionParams:
    lam: float = 0.1
    gamma: float = 0.2
    eta: float = 0.05
    iter_times: int = 1
    phi_bt: float = 0.5
    phi_a: float = 0.02
    binarize_eps: float = 1e-3
    tile_layers: int = 2
    tile_edge: str = "inside"

    def __post_init__(self):
        if not (self.lam > 0 and self.gamma > 0 and self.eta > 0):
            raise ValueError("lam, gamma and eta must be positive")
        if self.iter_times < 1:
            raise ValueError("iter_times must be at least 1")
        if not 0 < self.phi_bt:
            raise ValueError("phi_bt must be positive")
        if not 0 < self.phi_a < 1:
            raise ValueError("phi_a must lie in (0, 1)")
        if self.binarize_eps < 0:
            raise ValueError("binarize_eps must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_theta_t(residual, basis: TextureBasis, gamma: float, layout: TileLayout | None = None) -> np.ndarray:
    """Per-tile ``S_{gamma/2}(B_t^T r)``; returns an ``(n_tiles, K_t)`` array."""
    r = as_image(residual)
    if layout is None:
        layout = TileLayout(r.shape, basis.patch_shape)
    if tuple(layout.patch_shape) != tuple(basis.patch_shape):
        raise ValueError("tiles do not conform to the basis patch shape")
    return soft_threshold(basis.project(layout.extract(r)), gamma / 2)


def model2_objective(Y, dec: Decomposition, basis: SmoothBasis, lam, gamma, eta) -> float:
    """``||Y - B theta - B_t theta_t - C_a||^2 + pen + gamma|theta_t|_1 + eta|C_a|_1``."""
    e = Y - dec.background - dec.texture - dec.anomaly
    tt = 0.0 if dec.theta_t is None else np.abs(dec.theta_t).sum()
    return float(
        np.sum(e * e)
        + smoothing_penalty(dec.theta, basis, lam)
        + gamma * tt
        + eta * np.abs(dec.anomaly).sum()
    )


def tbsd_detect(
    Y,
    smooth: SmoothBasis,
    texture_basis: TextureBasis,
    params: DetectionParams = DetectionParams(),
    layout: TileLayout | None = None,
    track: bool = False,
) -> Decomposition:
    """Decompose a defect image into background, texture and anomaly.

    Each pass updates, in order,
    ``C_bg <- H(Y - B_t theta_t - C_a)``,
    ``theta_t <- S_{gamma/2}(B_t^T (Y - C_bg - C_a))``,
    ``C_a <- S_{eta/2}(Y - C_bg - phi_bt B_t theta_t)``,
    from ``theta_t = 0`` and ``C_a = 0``.  The residual closes the sum, so it
    also holds the ``(1 - phi_bt)`` share of the texture.  With ``track`` the
    objective is recorded after every block update.
    """
    Y = as_image(Y)
    if Y.shape != smooth.shape:
        raise ValueError(f"image shape {Y.shape} does not match basis shape {smooth.shape}")
    if texture_basis.n_atoms == 0:
        raise ValueError("empty texture basis; use ssd_baseline_detect instead")
    if layout is None:
        layout = TileLayout(Y.shape, texture_basis.patch_shape, params.tile_layers, params.tile_edge)
    H = hat_operator(smooth, params.lam)
    theta_t = np.zeros((layout.n_tiles, texture_basis.n_atoms))
    tex = np.zeros_like(Y)
    anom = np.zeros_like(Y)
    history: list[float] = []
    dec = Decomposition(np.zeros_like(Y), tex, anom, Y.copy(), theta_t=theta_t)

    def log():
        if track:
            history.append(model2_objective(Y, dec, smooth, params.lam, params.gamma, params.eta))

    for _ in range(params.iter_times):
        theta = H.coefficients(Y - tex - anom)
        bg = smooth.reconstruct(theta)
        dec.background, dec.theta = bg, theta
        log()
        theta_t = estimate_theta_t(Y - bg - anom, texture_basis, params.gamma, layout)
        tex = reconstruct_texture(texture_basis, theta_t, layout)
        dec.texture, dec.theta_t = tex, theta_t
        log()
        anom = soft_threshold(Y - bg - params.phi_bt * tex, params.eta / 2)
        dec.anomaly = anom
        log()
    dec.residual = Y - dec.background - dec.texture - dec.anomaly
    dec.history = history
    return dec


def ssd_baseline_detect(
    Y, smooth: SmoothBasis, params: DetectionParams = DetectionParams(), track: bool = False
) -> Decomposition:
    """Smooth background plus sparse anomaly, with no texture model.

    Alternates ``C_bg <- H(Y - C_a)`` and ``C_a <- S_{eta/2}(Y - C_bg)``.
    """
    Y = as_image(Y)
    if Y.shape != smooth.shape:
        raise ValueError(f"image shape {Y.shape} does not match basis shape {smooth.shape}")
    H = hat_operator(smooth, params.lam)
    anom = np.zeros_like(Y)
    zero = np.zeros_like(Y)
    history: list[float] = []
    theta = None
    for _ in range(params.iter_times):
        theta = H.coefficients(Y - zero - anom)
        bg = smooth.reconstruct(theta)
        if track:
            e = Y - bg - anom
            history.append(float(np.sum(e * e) + smoothing_penalty(theta, smooth, params.lam)
                                 + params.eta * np.abs(anom).sum()))
        anom = soft_threshold(Y - bg - zero, params.eta / 2)
        if track:
            e = Y - bg - anom
            history.append(float(np.sum(e * e) + smoothing_penalty(theta, smooth, params.lam)
                                 + params.eta * np.abs(anom).sum()))
    return Decomposition(bg, zero, anom, Y - bg - zero - anom, theta=theta, history=history)


@dataclass(frozen=True)
class AnomalyMask:
    mask: np.ndarray
    proportion: float
    alarm: bool


def anomaly_mask(decomp: Decomposition, binarize_eps: float = 1e-3, phi_a: float = 0.02) -> AnomalyMask:
    """Pixels with ``|C_a| > binarize_eps``; alarm when their share exceeds ``phi_a``."""
    mask = np.abs(decomp.anomaly) > binarize_eps
    prop = float(mask.mean()) if mask.size else 0.0
    return AnomalyMask(mask, prop, prop > phi_a)
