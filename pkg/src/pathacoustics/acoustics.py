"""Sound sources and the convective wave equation.

Two quadrupole sources are provided: Lighthill's ``d_i d_j (rho u_i u_j)``
built from the full flow, and the fluctuation source
``rho_bar d_i d_j (u'_i u'_j)`` built from ``u' = u - u_bar``. Both use
two-thirds-rule truncation of the factors and of the product.

The wave solver integrates the first-order pair ``(p', w)`` of
:func:`pathacoustics.splitting.acoustic_rhs`, which is equivalent to
``(1/c^2) D^2 p'/Dt^2 - lap p' = S`` with ``D/Dt = d/dt + u_bar . grad``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .baseflow import BaseFlow
from .errors import ContractError, WindowError
from .fields import Grid, ScalarField, VectorField, advect, dealiased_product, div, fft, ifft, l2_norm, truncate
from .perturbation import evolve, fluctuations_from_flow, max_stable_dt
from .splitting import rk4_acoustic

SOURCE_KINDS = ("lighthill", "true_source")


@dataclass
class SourceField:
    kind: str
    s: ScalarField
    t: float = 0.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ContractError(f"unknown source kind {self.kind!r}")

    @property
    def mean(self) -> float:
        return float(np.mean(self.s.values))


def _double_div_products(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    """``d_i d_j`` of the dealiased products ``a_i b_j``.

    Factors are truncated once; the truncation of each product is folded
    into the Fourier-space double divergence.
    """
    d = grid.dim
    ta = [truncate(x, grid) for x in a]
    tb = ta if b is a else [truncate(x, grid) for x in b]
    k = grid.wavenumbers
    acc = 0
    for i in range(d):
        for j in range(d):
            if b is a and j < i:
                continue
            weight = k[i] * k[j] * (1.0 if (i == j or b is not a) else 2.0)
            acc = acc - weight * fft(ta[i] * tb[j], grid)
    return ifft(acc * grid.dealias_mask, grid)


def lighthill_source(snapshot) -> SourceField:
    """``d_i d_j (rho u_i u_j)`` of a flow snapshot."""
    grid = snapshot.grid
    u = snapshot.u.values
    mom = np.stack([dealiased_product(snapshot.rho.values, ui, grid) for ui in u])
    s = _double_div_products(mom, u, grid)
    return SourceField("lighthill", ScalarField(grid, s), snapshot.t)


def true_source(u_prime, rho_bar: float, t: float = 0.0) -> SourceField:
    """``rho_bar d_i d_j (u'_i u'_j)``."""
    grid, u = u_prime.grid, u_prime.values
    s = rho_bar * _double_div_products(u, u, grid)
    return SourceField("true_source", ScalarField(grid, s), t)


@dataclass
class SourceSeries:
    """Sources at increasing times, linear in time in between."""

    times: np.ndarray
    fields: list[SourceField] = field(repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.fields) or len(self.times) == 0:
            raise ContractError("times and fields must be non-empty and of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ContractError("source times must be strictly increasing")

    def covers(self, t0: float, t1: float) -> bool:
        slack = 1e-9 * max(1.0, abs(t1))
        return self.times[0] <= t0 + slack and self.times[-1] >= t1 - slack

    def __call__(self, t: float) -> np.ndarray:
        times = self.times
        if len(times) == 1:
            return self.fields[0].s.values
        slack = 1e-9 * max(1.0, abs(times[-1]))
        if t < times[0] - slack or t > times[-1] + slack:
            raise WindowError(f"no source data at t={t}")
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = min(max((t - times[j]) / (times[j + 1] - times[j]), 0.0), 1.0)
        return (1 - w) * self.fields[j].s.values + w * self.fields[j + 1].s.values


def material_derivative(rate: np.ndarray, f: np.ndarray, u_bar: np.ndarray, grid: Grid) -> np.ndarray:
    """``df/dt + u_bar . grad f`` given the time derivative ``rate``."""
    return rate + advect(u_bar, f, grid)


@dataclass
class WaveSolution:
    times: np.ndarray
    p: list[np.ndarray] = field(repr=False)
    w: list[np.ndarray] = field(repr=False)


def _steps(T: float, dt: float) -> tuple[int, float]:
    if not T > 0 or not dt > 0:
        raise ContractError("T and dt must be positive")
    n = max(1, math.ceil(T / dt - 1e-9))
    return n, T / n


def solve_convective_wave(p0, p0_rate, bf: BaseFlow, source, T: float, dt: float, t0: float = 0.0,
                          store_every: int = 1, w0=None) -> WaveSolution:
    """Integrate the convective wave equation from ``t0`` to ``t0 + T``.

    ``p0_rate`` is ``dp'/dt`` at ``t0``; it fixes ``w0 = -(dp'/dt + u_bar.grad p')/(rho_bar c^2)``
    unless ``w0`` is given. ``source`` is None, a :class:`SourceSeries` or a
    callable ``t -> raster``. The step is shrunk so that T is hit exactly.
    """
    grid = bf.grid
    p = p0.values if isinstance(p0, ScalarField) else np.asarray(p0, dtype=float)
    if w0 is None:
        rate = p0_rate.values if isinstance(p0_rate, ScalarField) else np.asarray(p0_rate, dtype=float)
        w = -material_derivative(rate, p, bf.u_bar_at(t0), grid) / (bf.rho_bar * bf.c**2)
    else:
        w = w0.values if isinstance(w0, ScalarField) else np.asarray(w0, dtype=float)
    if isinstance(source, SourceSeries) and not source.covers(t0, t0 + T):
        raise WindowError(f"source series does not cover [{t0}, {t0 + T}]")
    nsteps, dt = _steps(T, dt)
    times, ps, ws = [t0], [p], [w]
    for j in range(1, nsteps + 1):
        p, w = rk4_acoustic(p, w, bf, t0 + (j - 1) * dt, dt, source)
        if j % store_every == 0 or j == nsteps:
            times.append(t0 + j * dt)
            ps.append(p)
            ws.append(w)
    return WaveSolution(np.array(times), ps, ws)


# ---------------------------------------------------------------------------
# source comparison


@dataclass
class SourceComparison:
    times: np.ndarray
    l2_true_vs_theorem1: np.ndarray
    l2_lighthill_vs_theorem1: np.ndarray
    l2_true_vs_lighthill: np.ndarray
    phase_shift: np.ndarray
    mode: tuple[int, ...]

    COLUMNS = ("t", "l2_true_vs_theorem1", "l2_lighthill_vs_theorem1", "l2_true_vs_lighthill")

    def rows(self):
        for k, t in enumerate(self.times):
            yield (t, self.l2_true_vs_theorem1[k], self.l2_lighthill_vs_theorem1[k], self.l2_true_vs_lighthill[k])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for row in self.rows():
                writer.writerow([repr(float(v)) for v in row])
        return path


class _CachedSource:
    def __init__(self, fn: Callable[[float], np.ndarray]):
        self.fn = fn
        self.cache: dict[float, np.ndarray] = {}

    def __call__(self, t):
        t = float(t)
        if t not in self.cache:
            if len(self.cache) > 8:
                self.cache.pop(next(iter(self.cache)))
            self.cache[t] = self.fn(t)
        return self.cache[t]


def dominant_mode(p: np.ndarray, grid: Grid) -> tuple[int, ...]:
    """Integer wavevector of the largest nonzero Fourier coefficient."""
    ph = np.abs(fft(p, grid))
    ph[(0,) * grid.dim] = 0.0
    idx = np.unravel_index(int(np.argmax(ph)), ph.shape)
    return tuple(int(np.fft.fftfreq(n, 1.0 / n)[i]) for n, i in zip(grid.n, idx))


def _coef(p: np.ndarray, grid: Grid, mode) -> complex:
    idx = tuple(int(m) % n for m, n in zip(mode, grid.n))
    return complex(fft(p, grid)[idx] / grid.size)


def compare_sources(provider, bf: BaseFlow, T: float, dt: float | None = None, t0: float | None = None,
                    lighthill_kind: str = "true_source", store_every: int = 1) -> SourceComparison:
    """Fluctuation pressure from three models on the same flow.

    * the linear fluctuation system (central mode), initialised from the flow;
    * the convective wave equation driven by the fluctuation source;
    * the rest-medium wave equation (``u_bar`` set to zero in propagation),
      driven by ``lighthill_kind`` (``"true_source"`` or ``"lighthill"``).

    All three share ``p'(t0)`` and ``dp'/dt(t0)``. ``phase_shift`` is the
    unwrapped phase of the convective solution relative to the forward-running
    part of the rest-medium solution, at the dominant wavevector of ``p'(t0)``.
    """
    grid = bf.grid
    t0 = bf.times[0] if t0 is None else t0
    if dt is None:
        dt = max_stable_dt(bf, "central")
    nsteps, dt = _steps(T, dt)
    state0 = fluctuations_from_flow(provider.sample(grid, t0), bf)
    traj = evolve(state0, bf, dt, nsteps, t0=t0, mode="central", store_every=store_every)

    rho_bar, c = bf.rho_bar, bf.c

    def fluct_source(t):
        snap = provider.sample(grid, t)
        return true_source(VectorField(grid, snap.u.values - bf.u_bar_at(t)), rho_bar, t).s.values

    def lighthill_fn(t):
        if lighthill_kind == "lighthill":
            return lighthill_source(provider.sample(grid, t)).s.values
        if lighthill_kind == "true_source":
            return fluct_source(t)
        raise ContractError(f"unknown source kind {lighthill_kind!r}")

    p0 = state0.p_prime
    div_u = div(state0.u_prime, grid)
    conv = solve_convective_wave(p0, None, bf, _CachedSource(fluct_source), T, dt, t0, store_every, w0=div_u)

    rest = BaseFlow.uniform(grid, np.zeros(grid.dim), c, rho_bar)
    rest = BaseFlow(grid, bf.tau, rest.times, rest.u_bar, bf.p_bar, rho_bar, c)
    w_rest = div_u + advect(bf.u_bar_at(t0), p0, grid) / (rho_bar * c**2)
    light = solve_convective_wave(p0, None, rest, _CachedSource(lighthill_fn), T, dt, t0, store_every, w0=w_rest)

    mode = dominant_mode(p0, grid) if np.any(p0) else (1,) + (0,) * (grid.dim - 1)
    kmag = float(np.linalg.norm(2 * np.pi * np.asarray(mode) / np.asarray(grid.length)))
    phases = []
    for pc, pl, wl in zip(conv.p, light.p, light.w):
        rate = -rho_bar * c**2 * wl
        forward = 0.5 * (_coef(pl, grid, mode) + 1j * _coef(rate, grid, mode) / (c * kmag))
        pc_hat = _coef(pc, grid, mode)
        phases.append(np.angle(pc_hat / forward) if abs(forward) > 0 and abs(pc_hat) > 0 else 0.0)

    p_th = [s.p_prime for s in traj.states]
    return SourceComparison(
        times=conv.times,
        l2_true_vs_theorem1=np.array([l2_norm(a - b, grid) for a, b in zip(conv.p, p_th)]),
        l2_lighthill_vs_theorem1=np.array([l2_norm(a - b, grid) for a, b in zip(light.p, p_th)]),
        l2_true_vs_lighthill=np.array([l2_norm(a - b, grid) for a, b in zip(conv.p, light.p)]),
        phase_shift=np.unwrap(np.array(phases)),
        mode=mode,
    )
