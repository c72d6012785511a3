"""Linear conservation law for first-order fluctuations about a base flow.

The state is ``U = (p'/(rho_bar c^2), rho_bar u')`` and evolves by

    dU/dt + d/dx_i (A_i U) = 0,
    A_i = u_bar_i I + (1/rho_bar) e_1 e_{i+1}^T + rho_bar c^2 e_{i+1} e_1^T,

with ``u_bar(t, x)`` taken from a :class:`~pathacoustics.baseflow.BaseFlow`.
Two spatial discretisations are provided: spectral differentiation of the
fluxes ("central", non-dissipative) and a first-order finite-volume scheme
with characteristic flux splitting ("upwind"). Both use classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import afld
from .baseflow import BaseFlow
from .errors import CFLError, ContractError
from .fields import Grid, ScalarField, VectorField, fft, ifft

FLUX_MODES = ("upwind", "central")
CFL_LIMITS = {"upwind": 0.5, "central": 0.3}


@dataclass
class PerturbationState:
    """Conserved fluctuation variables stacked as ``U[0] = U1``, ``U[1:] = Umom``."""

    grid: Grid
    U: np.ndarray  # (dim + 1, *n)
    rho_bar: float
    c: float

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        if self.U.shape != (self.grid.dim + 1, *self.grid.shape):
            raise ContractError(f"state shape {self.U.shape} does not match grid {self.grid.shape}")
        if not (self.rho_bar > 0 and self.c > 0):
            raise ContractError("rho_bar and c must be positive")
        if not np.all(np.isfinite(self.U)):
            raise ContractError("perturbation state contains non-finite values")

    @classmethod
    def from_primitive(cls, grid: Grid, p_prime, u_prime, rho_bar: float, c: float) -> "PerturbationState":
        U = np.concatenate([np.asarray(p_prime)[None] / (rho_bar * c**2), rho_bar * np.asarray(u_prime)])
        return cls(grid, U, rho_bar, c)

    @classmethod
    def zeros(cls, grid: Grid, rho_bar: float, c: float) -> "PerturbationState":
        return cls(grid, np.zeros((grid.dim + 1, *grid.shape)), rho_bar, c)

    @property
    def U1(self) -> ScalarField:
        return ScalarField(self.grid, self.U[0])

    @property
    def Umom(self) -> VectorField:
        return VectorField(self.grid, self.U[1:])

    @property
    def p_prime(self) -> np.ndarray:
        return self.rho_bar * self.c**2 * self.U[0]

    @property
    def u_prime(self) -> np.ndarray:
        return self.U[1:] / self.rho_bar

    @property
    def rho_prime(self) -> np.ndarray:
        return self.p_prime / self.c**2

    def with_U(self, U: np.ndarray) -> "PerturbationState":
        return PerturbationState(self.grid, U, self.rho_bar, self.c)

    def __add__(self, other: "PerturbationState") -> "PerturbationState":
        return self.with_U(self.U + other.U)

    def __mul__(self, a: float) -> "PerturbationState":
        return self.with_U(a * self.U)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# coefficient matrices


def _unit(nu, tol: float = 1e-12) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > tol:
        raise ContractError(f"direction must be a unit vector, |nu| = {np.linalg.norm(nu)}")
    return nu


def coefficient_matrix(u_bar, rho_bar: float, c: float, nu) -> np.ndarray:
    """``A(nu) = A_i nu_i`` at a single point."""
    nu = _unit(nu)
    u_bar = np.asarray(u_bar, dtype=float)
    d = nu.size
    A = float(u_bar @ nu) * np.eye(d + 1)
    A[0, 1:] += nu / rho_bar
    A[1:, 0] += rho_bar * c**2 * nu
    return A


def flux(U: np.ndarray, u_bar: np.ndarray, rho_bar: float, c: float, axis: int) -> np.ndarray:
    """``F_i(U) = u_bar_i U + (U_{i+1}/rho_bar) e_1 + rho_bar c^2 U_1 e_{i+1}`` on rasters."""
    F = u_bar[axis] * U
    F[0] += U[axis + 1] / rho_bar
    F[axis + 1] += rho_bar * c**2 * U[0]
    return F


@dataclass
class CoefficientSet:
    """Per-cell coefficient matrices ``A_i`` for a base velocity raster."""

    matrices: np.ndarray  # (dim, dim+1, dim+1, *n)
    flux_mode: str = "upwind"

    @classmethod
    def build(cls, u_bar: np.ndarray, rho_bar: float, c: float, flux_mode: str = "upwind") -> "CoefficientSet":
        d = u_bar.shape[0]
        spatial = u_bar.shape[1:]
        A = np.zeros((d, d + 1, d + 1, *spatial))
        for i in range(d):
            for r in range(d + 1):
                A[i, r, r] = u_bar[i]
            A[i, 0, i + 1] = 1.0 / rho_bar
            A[i, i + 1, 0] = rho_bar * c**2
        return cls(A, flux_mode)

    def apply(self, U: np.ndarray, axis: int) -> np.ndarray:
        return np.einsum("rs...,s...->r...", self.matrices[axis], U)


def _shear_block(nu: np.ndarray) -> np.ndarray:
    """Columns ``nu_p e_m - nu_m e_p`` (m != p), spanning the plane normal to nu.

    ``p`` is the last axis, except when that component is small (3D only),
    where the columns would degenerate; then the dominant axis is used.
    """
    d = nu.size
    p = d - 1
    if abs(nu[p]) < 0.25:
        p = int(np.argmax(np.abs(nu)))
    cols = []
    for m in range(d):
        if m == p:
            continue
        w = np.zeros(d)
        w[m] = nu[p]
        w[p] = -nu[m]
        cols.append(w)
    return np.stack(cols, axis=1)


def _parse_coefficient_matrix(A: np.ndarray):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (3, 4):
        raise ContractError(f"expected a (d+1)x(d+1) coefficient matrix, got shape {A.shape}")
    top, left = A[0, 1:], A[1:, 0]
    inv_rho = np.linalg.norm(top)
    rho_c2 = np.linalg.norm(left)
    if inv_rho == 0 or rho_c2 == 0:
        raise ContractError("direction is zero; the zero wavevector must be handled separately")
    rho_bar = 1.0 / inv_rho
    nu = top * rho_bar
    c = math.sqrt(rho_c2 / rho_bar)
    un = float(A[0, 0])
    ref = coefficient_matrix(np.zeros_like(nu), rho_bar, c, nu / np.linalg.norm(nu)) + un * np.eye(len(A))
    if np.max(np.abs(ref - A)) > 1e-10 * max(1.0, np.max(np.abs(A))):
        raise ContractError("matrix does not have the coefficient-matrix structure")
    return un, rho_bar, c, nu / np.linalg.norm(nu)


def eigenvectors(nu, rho_bar: float, c: float):
    """Analytic right/left eigenvectors of ``A(nu)`` in the order ``[r-, shear..., r+]``."""
    nu = np.asarray(nu, dtype=float)
    d = nu.size
    W = _shear_block(nu)
    R = np.zeros((d + 1, d + 1))
    R[0, 0] = R[0, d] = 1.0
    R[1:, 0] = -rho_bar * c * nu
    R[1:, d] = rho_bar * c * nu
    R[1:, 1:d] = W
    Rinv = np.zeros((d + 1, d + 1))
    Rinv[0, 0] = Rinv[d, 0] = 0.5
    Rinv[0, 1:] = -nu / (2 * rho_bar * c)
    Rinv[d, 1:] = nu / (2 * rho_bar * c)
    Rinv[1:d, 1:] = np.linalg.solve(W.T @ W, W.T)
    return R, Rinv


def eigendecompose(A: np.ndarray, acoustic_first: bool = False):
    """``A(nu) = R diag(lam) R^{-1}`` from the analytic eigenvectors.

    Returns ``(R, Lambda, R_inv)`` with Lambda a diagonal matrix sorted
    ascending (columns ``[r-, shear..., r+]``). ``acoustic_first=True`` puts the
    acoustic pair first: ``[r-, r+, shear...]``.
    """
    un, rho_bar, c, nu = _parse_coefficient_matrix(A)
    d = nu.size
    R, Rinv = eigenvectors(nu, rho_bar, c)
    lam = np.full(d + 1, un)
    lam[0] -= c
    lam[d] += c
    if acoustic_first:
        perm = [0, d, *range(1, d)]
        R, Rinv, lam = R[:, perm], Rinv[perm], lam[perm]
    return R, np.diag(lam), Rinv


# ---------------------------------------------------------------------------
# spatial operators


def rhs_central(U: np.ndarray, u_bar: np.ndarray, rho_bar: float, c: float, grid: Grid) -> np.ndarray:
    """``-d_i(A_i U)`` with spectral derivatives."""
    acc = 0
    for i, k in enumerate(grid.wavenumbers):
        acc = acc + 1j * k * fft(flux(U, u_bar, rho_bar, c, i), grid)
    return -ifft(acc, grid)


def rhs_upwind(U: np.ndarray, u_bar: np.ndarray, rho_bar: float, c: float, grid: Grid) -> np.ndarray:
    """``-d_i(A_i U)`` by first-order finite volumes with characteristic upwinding.

    Eigenvectors for a coordinate direction do not depend on ``u_bar``, so
    only the face eigenvalues ``u_face + {-c, 0, ..., c}`` vary in space.
    """
    d = grid.dim
    out = np.zeros_like(U)
    base = np.zeros(d + 1)
    base[0], base[d] = -c, c
    for i in range(d):
        ax = 1 + i
        nu = np.zeros(d)
        nu[i] = 1.0
        R, Rinv = eigenvectors(nu, rho_bar, c)
        WL = np.einsum("rs,s...->r...", Rinv, U)
        WR = np.roll(WL, -1, axis=ax)
        u_face = 0.5 * (u_bar[i] + np.roll(u_bar[i], -1, axis=i))
        lam = base.reshape(-1, *([1] * d)) + u_face[None]
        Fw = np.maximum(lam, 0.0) * WL + np.minimum(lam, 0.0) * WR
        F = np.einsum("rs,s...->r...", R, Fw)
        out -= (F - np.roll(F, 1, axis=ax)) / grid.spacing[i]
    return out


def _rhs(mode: str):
    if mode == "central":
        return rhs_central
    if mode == "upwind":
        return rhs_upwind
    raise ContractError(f"unknown flux mode {mode!r}; expected one of {FLUX_MODES}")


def max_stable_dt(bf: BaseFlow, mode: str = "central", cfl: float | None = None) -> float:
    limit = CFL_LIMITS[mode] if cfl is None else cfl
    return limit * bf.grid.min_spacing / (bf.max_speed() + bf.c)


def check_cfl(bf: BaseFlow, dt: float, mode: str) -> float:
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    number = dt * (bf.max_speed() + bf.c) / bf.grid.min_spacing
    if number > CFL_LIMITS[mode] * (1 + 1e-9):
        raise CFLError(f"CFL number {number:.4g} exceeds {CFL_LIMITS[mode]} for {mode} mode")
    return number


def step(state: PerturbationState, bf: BaseFlow, t: float, dt: float, mode: str = "upwind") -> PerturbationState:
    """One classical RK4 step of the fluctuation system."""
    rhs = _rhs(mode)
    check_cfl(bf, dt, mode)
    bf.grid.require_same(state.grid, "state and base flow")
    g, rb, c = state.grid, state.rho_bar, state.c
    ua, um, ub = bf.u_bar_at(t), bf.u_bar_at(t + 0.5 * dt), bf.u_bar_at(t + dt)
    U = state.U
    k1 = rhs(U, ua, rb, c, g)
    k2 = rhs(U + 0.5 * dt * k1, um, rb, c, g)
    k3 = rhs(U + 0.5 * dt * k2, um, rb, c, g)
    k4 = rhs(U + dt * k3, ub, rb, c, g)
    out = U + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise ContractError(f"non-finite state after step at t={t}")
    return state.with_U(out)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[PerturbationState] = field(repr=False)
    mode: str = "upwind"

    def __len__(self):
        return len(self.states)

    @property
    def p_prime(self) -> np.ndarray:
        return np.stack([s.p_prime for s in self.states])


def evolve(state: PerturbationState, bf: BaseFlow, dt: float, nsteps: int, t0: float = 0.0,
           mode: str = "upwind", store_every: int = 1) -> Trajectory:
    """Advance ``nsteps`` steps, keeping every ``store_every``-th state (and the last)."""
    if store_every < 1:
        raise ContractError("store_every must be >= 1")
    times, states = [t0], [state]
    t = t0
    for j in range(1, nsteps + 1):
        state = step(state, bf, t, dt, mode)
        t = t0 + j * dt
        if j % store_every == 0 or j == nsteps:
            times.append(t)
            states.append(state)
    return Trajectory(np.array(times), states, mode)


def residual_ma_re(provider) -> float:
    """Ma/Re, the size of the neglected viscous term."""
    if provider.mach == 0 or math.isinf(provider.reynolds):
        return 0.0
    return provider.mach / provider.reynolds


def fluctuations_from_flow(snapshot, bf: BaseFlow) -> PerturbationState:
    """First-order fluctuations ``u' = u - u_bar(t)``, ``p' = p - p_bar``."""
    grid = snapshot.grid
    grid.require_same(bf.grid, "snapshot and base flow")
    u_prime = snapshot.u.values - bf.u_bar_at(snapshot.t)
    p_prime = snapshot.p.values - bf.p_bar
    return PerturbationState.from_primitive(grid, p_prime, u_prime, bf.rho_bar, bf.c)


# ---------------------------------------------------------------------------
# checkpoints


def write_state(state: PerturbationState, directory, stem: str = "state", t: float = 0.0, mode: str = "upwind") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    afld.write_field(directory / f"{stem}.U1.afld", state.U1)
    afld.write_field(directory / f"{stem}.Umom.afld", state.Umom)
    meta = {"t": repr(float(t)), "rho_bar": repr(state.rho_bar), "c": repr(state.c), "flux_mode": mode}
    path = directory / f"{stem}.meta"
    path.write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    return path


def read_state(directory, stem: str = "state"):
    """Returns ``(state, t, flux_mode)``."""
    directory = Path(directory)
    meta = {}
    for line in (directory / f"{stem}.meta").read_text().splitlines():
        if line.strip():
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
    U1 = afld.read_field(directory / f"{stem}.U1.afld")
    Umom = afld.read_field(directory / f"{stem}.Umom.afld", U1.grid)
    state = PerturbationState(U1.grid, np.concatenate([U1.values[None], Umom.values]), float(meta["rho_bar"]), float(meta["c"]))
    return state, float(meta["t"]), meta["flux_mode"]
