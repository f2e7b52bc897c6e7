"""Separable B-spline bases and roughness penalties for the smooth background.

The background of an ``m x n`` image is modelled as ``B_y @ theta @ B_x.T``
with clamped uniform B-spline design matrices per axis.  Coefficients are
fitted with a first-difference roughness penalty ``R = D.T @ D``.

The separable fit ``theta = A_y^-1 B_y^T M B_x A_x^-1`` with
``A = B^T B + lam R`` is the exact minimiser of the tensor-product ridge
problem

    ||M - B_y theta B_x^T||^2 + pen(theta)

whose penalty is ``lam (tr(theta^T R_y theta G_x) + tr(theta^T G_y theta R_x))
+ lam^2 tr(theta^T R_y theta R_x)`` with ``G = B^T B``; see
:func:`smoothing_penalty`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline


def build_bspline_basis(axis_length: int, k: int, L: int = 3) -> np.ndarray:
    """Design matrix of ``k + L - 1`` clamped B-splines of degree ``L``.

    ``k`` is the number of uniformly spaced breakpoints over
    ``[0, axis_length - 1]`` (endpoints included), evaluated at every pixel.
    """
    if L < 0:
        raise ValueError("degree must be nonnegative")
    if k < 2:
        raise ValueError("need at least 2 breakpoints")
    p = k + L - 1
    if axis_length < L + 1 or axis_length < p:
        raise ValueError(
            f"{axis_length} pixels cannot support {p} basis functions of degree {L}"
        )
    end = float(axis_length - 1)
    t = np.r_[[0.0] * L, np.linspace(0.0, end, k), [end] * L]
    x = np.arange(axis_length, dtype=float)
    return BSpline.design_matrix(x, t, L).toarray()


def build_roughness(p: int) -> np.ndarray:
    """``D.T @ D`` for the ``(p-1) x p`` first-difference matrix ``D``."""
    if p < 2:
        raise ValueError("roughness needs at least 2 coefficients")
    D = np.diff(np.eye(p), axis=0)
    return D.T @ D


def default_knots(axis_length: int, L: int = 3) -> int:
    """Breakpoint count giving one basis function per ~max(8, n/12) pixels."""
    per = max(8.0, axis_length / 12.0)
    p = max(L + 1, int(round(axis_length / per)))
    p = min(p, axis_length)
    return max(2, p - L + 1)


@dataclass(frozen=True)
class SmoothBasis:
    Bx: np.ndarray
    By: np.ndarray
    Rx: np.ndarray
    Ry: np.ndarray
    degree: int = 3
    kx: int = 2
    ky: int = 2

    @classmethod
    def for_shape(cls, shape, k=None, degree: int = 3) -> "SmoothBasis":
        """Basis for an ``(m, n)`` image; ``k`` is an int, a ``(ky, kx)`` pair or None."""
        m, n = shape
        if k is None:
            ky, kx = default_knots(m, degree), default_knots(n, degree)
        elif np.isscalar(k):
            ky = kx = int(k)
        else:
            ky, kx = (int(v) for v in k)
        Bx = build_bspline_basis(n, kx, degree)
        By = build_bspline_basis(m, ky, degree)
        return cls(Bx, By, build_roughness(Bx.shape[1]), build_roughness(By.shape[1]), degree, kx, ky)

    @property
    def shape(self) -> tuple[int, int]:
        return self.By.shape[0], self.Bx.shape[0]

    def reconstruct(self, theta: np.ndarray) -> np.ndarray:
        return self.By @ theta @ self.Bx.T


def _coef_map(B: np.ndarray, R: np.ndarray, lam: float) -> np.ndarray:
    """``(B^T B + lam R)^-1 B^T``; minimum-norm least squares when singular at lam=0."""
    A = B.T @ B + lam * R
    try:
        cf = linalg.cho_factor(A)
    except linalg.LinAlgError:
        if lam == 0:
            return np.linalg.pinv(B)
        raise ValueError("normal matrix B^T B + lam R is singular") from None
    return linalg.cho_solve(cf, B.T)


@dataclass(frozen=True)
class HatOperator:
    """Per-axis smoothers; the 2D smoother is ``M -> H_y M H_x^T``."""

    Hx: np.ndarray
    Hy: np.ndarray
    lam: float
    Sx: np.ndarray
    Sy: np.ndarray

    def apply(self, M: np.ndarray) -> np.ndarray:
        return self.Hy @ M @ self.Hx.T

    def coefficients(self, M: np.ndarray) -> np.ndarray:
        return self.Sy @ M @ self.Sx.T


def hat_operator(basis: SmoothBasis, lam: float) -> HatOperator:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    Sx = _coef_map(basis.Bx, basis.Rx, lam)
    Sy = _coef_map(basis.By, basis.Ry, lam)
    Hx = basis.Bx @ Sx
    Hy = basis.By @ Sy
    # symmetrise away round-off
    return HatOperator(0.5 * (Hx + Hx.T), 0.5 * (Hy + Hy.T), float(lam), Sx, Sy)


def estimate_theta(Y_minus_tex: np.ndarray, basis: SmoothBasis, lam: float) -> np.ndarray:
    """Closed-form smooth coefficients for ``Y - C_tex``."""
    M = np.asarray(Y_minus_tex, dtype=float)
    if M.shape != basis.shape:
        raise ValueError(f"image shape {M.shape} does not match basis shape {basis.shape}")
    return hat_operator(basis, lam).coefficients(M)


def smoothing_penalty(theta: np.ndarray, basis: SmoothBasis, lam: float) -> float:
    """Tensor-product roughness ``lam theta^T R theta`` matching the separable fit."""
    Gx = basis.Bx.T @ basis.Bx
    Gy = basis.By.T @ basis.By
    Ry, Rx = basis.Ry, basis.Rx
    first = np.sum((Ry @ theta) * (theta @ Gx)) + np.sum((Gy @ theta) * (theta @ Rx))
    second = np.sum((Ry @ theta) * (theta @ Rx))
    return float(lam * first + lam**2 * second)
