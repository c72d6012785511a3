"""Acoustic/vortical splitting of velocity fluctuations.

The curl-free part ``u_a = grad(phi)`` carries all pressure coupling; the
divergence-free remainder ``u_v`` is convected by the base flow. On a
periodic grid the split is an exact Fourier-space projection. The uniform
(zero-wavevector) part of the input goes to ``u_v``, which keeps ``u_a``
mean-free and ``phi`` well defined.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baseflow import BaseFlow
from .errors import CFLError, ContractError
from .fields import Grid, ScalarField, VectorField, advect, curl, div, fft, ifft, laplacian
from .perturbation import CFL_LIMITS, _shear_block


@dataclass
class SplitVelocity:
    u_a: VectorField
    u_v: VectorField
    phi: ScalarField

    @property
    def grid(self) -> Grid:
        return self.u_a.grid

    def recombine(self) -> np.ndarray:
        return self.u_a.values + self.u_v.values

    def certificates(self) -> dict:
        """Max-norm curl of ``u_a`` and divergence of ``u_v`` with pass flags."""
        g = self.grid
        curl_ua = float(np.max(np.abs(curl(self.u_a.values, g))))
        div_uv = float(np.max(np.abs(div(self.u_v.values, g))))
        ua_max = float(np.max(np.abs(self.u_a.values)))
        uv_max = float(np.max(np.abs(self.u_v.values)))
        return {
            "curl_ua": curl_ua,
            "div_uv": div_uv,
            "ua_max": ua_max,
            "uv_max": uv_max,
            "curl_free": curl_ua < 1e-10 * ua_max + 1e-14,
            "div_free": div_uv < 1e-10 * uv_max + 1e-14,
        }


def _project(uh: np.ndarray, grid: Grid):
    """Fourier coefficients of the curl-free part and of its potential."""
    k = grid.wavenumbers
    k2 = grid.k_squared
    safe = np.where(k2 > 0, k2, 1.0)
    kdotu = sum(ki * uh[i] for i, ki in enumerate(k))
    coef = np.where(k2 > 0, kdotu / safe, 0.0)
    ua_h = np.stack([ki * coef for ki in k])
    phi_h = -1j * coef
    return ua_h, phi_h


def helmholtz_split(u_prime) -> SplitVelocity:
    """Exact spectral split of a periodic vector field into ``grad(phi) + u_v``."""
    if isinstance(u_prime, VectorField):
        grid, values = u_prime.grid, u_prime.values
    else:
        raise ContractError("helmholtz_split expects a VectorField")
    ua_h, phi_h = _project(fft(values, grid), grid)
    u_a = ifft(ua_h, grid)
    return SplitVelocity(VectorField(grid, u_a), VectorField(grid, values - u_a), ScalarField(grid, ifft(phi_h, grid)))


def split_values(u: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Array form of the split: ``(u_a, u_v)``."""
    ua_h, _ = _project(fft(u, grid), grid)
    u_a = ifft(ua_h, grid)
    return u_a, u - u_a


def ua_from_divergence(div_ua, grid: Grid) -> np.ndarray:
    """Invert ``div`` on curl-free fields: ``u_a_hat = -i k w_hat / |k|^2``."""
    w = div_ua.values if isinstance(div_ua, ScalarField) else np.asarray(div_ua)
    k2 = grid.k_squared
    wh = fft(w, grid)
    coef = np.where(k2 > 0, wh / np.where(k2 > 0, k2, 1.0), 0.0)
    return np.stack([ifft(-1j * ki * coef, grid) for ki in grid.wavenumbers])


# ---------------------------------------------------------------------------
# acoustic subsystem


def acoustic_rhs(p: np.ndarray, w: np.ndarray, u_bar: np.ndarray, rho_bar: float, c: float, grid: Grid,
                 source: np.ndarray | None = None):
    """Rates of ``(p', w = div u_a)`` under the base-flow material derivative.

    ``Dp'/Dt = -rho_bar c^2 w`` and ``Dw/Dt = -(lap p' + S)/rho_bar``, with
    ``D/Dt = d/dt + u_bar . grad``. Eliminating ``w`` gives the convective
    wave equation ``(1/c^2) D^2 p'/Dt^2 - lap p' = S``.
    """
    rate_p = -advect(u_bar, p, grid) - rho_bar * c**2 * w
    forcing = laplacian(p, grid)
    if source is not None:
        forcing = forcing + source
    rate_w = -advect(u_bar, w, grid) - forcing / rho_bar
    return rate_p, rate_w


def rk4_acoustic(p, w, bf: BaseFlow, t: float, dt: float, source_at=None):
    """One RK4 step of :func:`acoustic_rhs`; ``source_at(t)`` returns a raster or None."""
    grid, rb, c = bf.grid, bf.rho_bar, bf.c
    number = dt * (bf.max_speed() + c) / grid.min_spacing
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    if number > CFL_LIMITS["central"] * (1 + 1e-9):
        raise CFLError(f"CFL number {number:.4g} exceeds {CFL_LIMITS['central']}")
    src = source_at if source_at is not None else (lambda _t: None)
    ua, um, ub = bf.u_bar_at(t), bf.u_bar_at(t + 0.5 * dt), bf.u_bar_at(t + dt)
    sa, sm, sb = src(t), src(t + 0.5 * dt), src(t + dt)
    k1 = acoustic_rhs(p, w, ua, rb, c, grid, sa)
    k2 = acoustic_rhs(p + 0.5 * dt * k1[0], w + 0.5 * dt * k1[1], um, rb, c, grid, sm)
    k3 = acoustic_rhs(p + 0.5 * dt * k2[0], w + 0.5 * dt * k2[1], um, rb, c, grid, sm)
    k4 = acoustic_rhs(p + dt * k3[0], w + dt * k3[1], ub, rb, c, grid, sb)
    p_new = p + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    w_new = w + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(p_new)) and np.all(np.isfinite(w_new))):
        raise ContractError(f"non-finite acoustic state after step at t={t}")
    return p_new, w_new


def acoustic_subsystem_step(p_prime: ScalarField, div_ua: ScalarField, bf: BaseFlow, t: float, dt: float):
    """Advance the closed acoustic pair ``(p', div u_a)`` by one RK4 step."""
    p, w = rk4_acoustic(p_prime.values, div_ua.values, bf, t, dt)
    return ScalarField(p_prime.grid, p), ScalarField(p_prime.grid, w)


def _values(f):
    return f.values if isinstance(f, (ScalarField, VectorField)) else np.asarray(f)


def vortical_constraint_residual(u_v_series, u_a_series, bf: BaseFlow, t: float, dt: float) -> np.ndarray:
    """Residual of ``curl(D u_v/Dt) + curl(div(u_a (x) u_bar))`` at ``t + dt/2``.

    ``u_v_series``/``u_a_series`` hold samples at ``t, t + dt, ...``; the
    first two are used with a centred time difference. Returns a scalar
    raster in 2D and a vector raster in 3D.
    """
    if len(u_v_series) < 2 or len(u_a_series) < 2:
        raise ContractError("need at least two consecutive samples")
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    grid = bf.grid
    v0, v1 = _values(u_v_series[0]), _values(u_v_series[1])
    a_mid = 0.5 * (_values(u_a_series[0]) + _values(u_a_series[1]))
    v_mid = 0.5 * (v0 + v1)
    ub = bf.u_bar_at(t + 0.5 * dt)
    material = (v1 - v0) / dt + advect(ub, v_mid, grid)
    # div(a (x) b)_j = d_i(a_j b_i)
    flux_div = np.stack([div(a_mid[j] * ub, grid) for j in range(grid.dim)])
    return curl(material + flux_div, grid)


# ---------------------------------------------------------------------------
# Fourier-space projectors


@dataclass
class ProjectorSet:
    """Projectors for one wavevector in ``(p', u')`` coordinates."""

    alpha: np.ndarray
    R: np.ndarray
    Lambda: np.ndarray
    R_inv: np.ndarray
    I_a: np.ndarray
    I_v: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def acoustic(self) -> np.ndarray:
        return self.R @ self.I_a @ self.R_inv

    @property
    def vortical(self) -> np.ndarray:
        return self.R @ self.I_v @ self.R_inv

    def expected_acoustic(self) -> np.ndarray:
        d = len(self.alpha)
        out = np.zeros((d + 1, d + 1))
        out[0, 0] = 1.0
        out[1:, 1:] = self.B
        return out

    def expected_vortical(self) -> np.ndarray:
        d = len(self.alpha)
        out = np.zeros((d + 1, d + 1))
        out[1:, 1:] = self.C
        return out


def spectral_projectors(alpha, u_bar, rho_bar: float, c: float, grid: Grid | None = None) -> ProjectorSet:
    """Build ``R``, ``Lambda``, ``R^{-1}`` and the acoustic/vortical selectors.

    ``alpha`` is an integer wavevector; with a grid it is scaled to physical
    units. The columns of ``R`` are the two acoustic directions
    ``(1, +-alpha_hat/(c rho_bar))`` followed by ``d-1`` shear directions.
    The frequency slot of ``Lambda`` is filled with ``u_bar . alpha``; only
    the spatial projectors are used downstream.
    """
    a = np.asarray(alpha, dtype=float)
    if grid is not None:
        a = 2 * np.pi * a / np.asarray(grid.length)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ContractError("alpha must be nonzero")
    ah = a / norm
    d = a.size
    R = np.zeros((d + 1, d + 1))
    R[0, :2] = 1.0
    R[1:, 0] = ah / (c * rho_bar)
    R[1:, 1] = -ah / (c * rho_bar)
    R[1:, 2:] = _shear_block(ah)
    omega = float(np.asarray(u_bar, dtype=float) @ a)
    lam = np.full(d + 1, omega)
    lam[0] -= norm * c
    lam[1] += norm * c
    I_a = np.zeros((d + 1, d + 1))
    I_a[0, 0] = I_a[1, 1] = 1.0
    B = np.outer(ah, ah)
    ps = ProjectorSet(a, R, np.diag(lam), np.linalg.inv(R), I_a, np.eye(d + 1) - I_a, B, np.eye(d) - B)
    err = max(np.max(np.abs(ps.acoustic - ps.expected_acoustic())), np.max(np.abs(ps.vortical - ps.expected_vortical())))
    if err > 1e-10:
        raise ContractError(f"projector structure check failed (deviation {err:.3g})")
    return ps
