"""Energy, symmetrizer, intensity and scale-separation diagnostics.

For the fluctuation state ``U`` the energy density and flux are

    eta = (p'^2/c^2 + rho_bar^2 |u'|^2) / 2,
    q_i = eta u_bar_i + rho_bar p' u'_i,

which also equal ``V^T A0 V / 2`` and ``V^T A_i V / 2`` in the symmetric
variables ``V = (rho_bar p', rho_bar u')``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baseflow import BaseFlow
from .errors import ContractError
from .fields import Grid, ScalarField, VectorField, div
from .perturbation import PerturbationState, Trajectory
from .splitting import split_values


@dataclass
class SymmetrizerSet:
    A_hat_0: np.ndarray  # (d+1, d+1)
    A_hat: np.ndarray  # (d, d+1, d+1, *n)

    def max_asymmetry(self) -> float:
        a0 = np.max(np.abs(self.A_hat_0 - self.A_hat_0.T))
        ai = np.max(np.abs(self.A_hat - np.swapaxes(self.A_hat, 1, 2)))
        return float(max(a0, ai))


def symmetrize(state: PerturbationState, bf: BaseFlow, t: float = 0.0):
    """Symmetric variables ``V`` and the matrices ``A0``, ``A_i`` at time t."""
    rb, c, grid = state.rho_bar, state.c, state.grid
    d = grid.dim
    if abs(bf.rho_bar - rb) > 1e-14 * rb or abs(bf.c - c) > 1e-14 * c:
        raise ContractError("state and base flow disagree on rho_bar or c")
    V = state.U.copy()
    V[0] *= rb**2 * c**2
    A0 = np.eye(d + 1)
    A0[0, 0] = 1.0 / (rb**2 * c**2)
    u_bar = bf.u_bar_at(t)
    A = np.zeros((d, d + 1, d + 1, *grid.shape))
    for i in range(d):
        A[i, 0, 0] = u_bar[i] / (rb**2 * c**2)
        for j in range(1, d + 1):
            A[i, j, j] = u_bar[i]
        A[i, 0, i + 1] = 1.0 / rb
        A[i, i + 1, 0] = 1.0 / rb
    sym = SymmetrizerSet(A0, A)
    if sym.max_asymmetry() > 1e-14:
        raise ContractError("symmetrizer is not symmetric")
    return V, sym


def quadratic_form(M: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Pointwise ``V^T M V`` for a constant or per-cell matrix."""
    if M.ndim == 2:
        return np.einsum("r...,rs,s...->...", V, M, V)
    return np.einsum("r...,rs...,s...->...", V, M, V)


def energy_density(state: PerturbationState) -> ScalarField:
    p, u = state.p_prime, state.u_prime
    eta = 0.5 * (p**2 / state.c**2 + state.rho_bar**2 * np.sum(u**2, axis=0))
    return ScalarField(state.grid, eta)


def energy_flux(state: PerturbationState, bf: BaseFlow, t: float = 0.0) -> VectorField:
    eta = energy_density(state).values
    q = eta[None] * bf.u_bar_at(t) + state.rho_bar * state.p_prime[None] * state.u_prime
    return VectorField(state.grid, q)


def total(values: np.ndarray, grid: Grid) -> float:
    """Integral over the box (cell-centre rule)."""
    return float(np.sum(values) * grid.cell_volume)


def energy_balance_residual(before: PerturbationState, middle: PerturbationState, after: PerturbationState,
                            dt: float, bf: BaseFlow, t: float) -> np.ndarray:
    """``d eta/dt + div q`` at ``t`` from states at ``t - dt, t, t + dt``."""
    rate = (energy_density(after).values - energy_density(before).values) / (2 * dt)
    return rate + div(energy_flux(middle, bf, t).values, middle.grid)


@dataclass
class EnergyReport:
    times: np.ndarray
    total_eta: np.ndarray
    total_acoustic: np.ndarray
    total_vortical: np.ndarray
    drift: np.ndarray

    COLUMNS = ("t", "total_eta", "total_acoustic", "total_vortical", "drift")

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.drift))) if len(self.drift) else 0.0

    @property
    def split_mismatch(self) -> np.ndarray:
        """``|eta - (acoustic + vortical)| / eta`` per time (0 where eta is 0)."""
        gap = np.abs(self.total_eta - self.total_acoustic - self.total_vortical)
        return np.where(self.total_eta > 0, gap / np.where(self.total_eta > 0, self.total_eta, 1.0), gap)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for row in zip(self.times, self.total_eta, self.total_acoustic, self.total_vortical, self.drift):
                writer.writerow([repr(float(v)) for v in row])
        return path


def conservation_drift(trajectory: Trajectory) -> EnergyReport:
    """Total energy per stored time, its acoustic/vortical shares and relative drift."""
    times, tot, ac, vo = [], [], [], []
    for t, s in zip(trajectory.times, trajectory.states):
        grid, rb = s.grid, s.rho_bar
        u_a, u_v = split_values(s.u_prime, grid)
        times.append(float(t))
        tot.append(total(energy_density(s).values, grid))
        ac.append(0.5 * total(s.p_prime**2 / s.c**2 + rb**2 * np.sum(u_a**2, axis=0), grid))
        vo.append(0.5 * total(rb**2 * np.sum(u_v**2, axis=0), grid))
    tot = np.array(tot)
    e0 = tot[0] if len(tot) else 0.0
    drift = (tot - e0) / e0 if e0 > 0 else np.zeros_like(tot)
    return EnergyReport(np.array(times), tot, np.array(ac), np.array(vo), drift)


# ---------------------------------------------------------------------------
# intensity


@dataclass
class IntensityField:
    I: VectorField
    window: float
    div_norm: float
    samples: int = 0

    def __post_init__(self):
        if not self.window > 0:
            raise ContractError("intensity window must be positive")

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.I.values**2, axis=0))


def intensity(trajectory: Trajectory, bf: BaseFlow, window: float, start: int = 0) -> IntensityField:
    """Time average of ``E u_bar + p' u'`` over ``window``.

    ``E = (p'^2/(rho_bar c^2) + rho_bar |u'|^2)/2``. The window must span a
    whole number of stored intervals; the average is the arithmetic mean of
    the samples ``start, ..., start + m - 1`` (exact for periodic signals
    sampled over one period).
    """
    times = np.asarray(trajectory.times)
    if len(times) < 2:
        raise ContractError("trajectory too short for a time average")
    spacing = np.diff(times)
    h = float(spacing[0])
    if np.max(np.abs(spacing - h)) > 1e-9 * h:
        raise ContractError("stored trajectory must be uniformly spaced in time")
    m = window / h
    count = int(round(m))
    if count < 1 or abs(m - count) > 1e-6 * max(1.0, m):
        raise ContractError(f"window {window} is not a whole number of stored steps ({h})")
    if start + count > len(times) - 1:
        raise ContractError(f"window {window} exceeds the trajectory")
    acc = 0.0
    for k in range(start, start + count):
        s = trajectory.states[k]
        E = 0.5 * (s.p_prime**2 / (s.rho_bar * s.c**2) + s.rho_bar * np.sum(s.u_prime**2, axis=0))
        acc = acc + E[None] * bf.u_bar_at(times[k]) + s.p_prime[None] * s.u_prime
    mean = acc / count
    grid = trajectory.states[0].grid
    return IntensityField(VectorField(grid, mean), window, float(np.max(np.abs(div(mean, grid)))), count)


# ---------------------------------------------------------------------------
# scale separation


@dataclass
class ScaleReport:
    density_ratio: float
    velocity_ratio: float
    pressure_ratio: float
    fluctuation_mach: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _safe_ratio(num: float, den: float) -> float:
    if num == 0:
        return 0.0
    return num / den if den > 0 else math.inf


def scale_separation(provider, bf: BaseFlow, t: float) -> ScaleReport:
    """Maxima of ``|rho'|/rho_bar``, ``|u'|/|u_bar|``, ``|p'|/p_bar`` and ``|u'|/c``."""
    snap = provider.sample(bf.grid, t)
    u_bar = bf.u_bar_at(t)
    u_prime = snap.u.values - u_bar
    speed_prime = float(np.max(np.sqrt(np.sum(u_prime**2, axis=0))))
    speed_bar = float(np.max(np.sqrt(np.sum(u_bar**2, axis=0))))
    rho_prime = float(np.max(np.abs(snap.rho.values - bf.rho_bar)))
    p_prime = float(np.max(np.abs(snap.p.values - bf.p_bar)))
    return ScaleReport(
        density_ratio=rho_prime / bf.rho_bar,
        velocity_ratio=_safe_ratio(speed_prime, speed_bar),
        pressure_ratio=_safe_ratio(p_prime, abs(bf.p_bar)),
        fluctuation_mach=speed_prime / bf.c,
    )
