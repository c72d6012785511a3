"""Pathline-averaged base flow.

The base value of a flow quantity ``f`` at ``(t, x)`` is the time average of
``f`` over ``[t0, t0 + tau]`` taken along the pathline through ``(t, x)``.
It is obtained from two scalar transport problems driven by the full
velocity ``u``:

* forward accumulation ``dg/dt + u.grad g = f/tau`` with ``g(t0) = 0``;
  ``g(t0 + tau)`` holds each particle's average at its final position;
* backward end-value transport ``df0/dt + u.grad f0 = 0`` with
  ``f0(t0 + tau) = g(t0 + tau)``, which carries the average back along the
  pathlines to every earlier time.

Both are discretised semi-Lagrangian: one RK4 characteristic trace per step,
tensor cubic interpolation (optionally quasi-monotone), and trapezoidal
quadrature of the source along the characteristic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import afld
from .errors import CFLError, ContractError, WindowError
from .fields import Grid, ScalarField, VectorField, advect, div, grad
from .interpolation import CubicInterpolator, wrap
from .scenarios import FlowProvider

SL_CFL_CAP = 4.0


def time_grid(t0: float, t1: float, dt: float, extra=()) -> np.ndarray:
    """Nodes from t0 to t1 with spacing <= dt, including every ``extra`` time."""
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    nsteps = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    nodes = list(np.linspace(t0, t1, nsteps + 1))
    tol = 1e-12 * max(1.0, abs(t1 - t0))
    for t in extra:
        if t < t0 - tol or t > t1 + tol:
            raise WindowError(f"sample time {t} outside [{t0}, {t1}]")
        t = min(max(float(t), t0), t1)
        if min(abs(t - s) for s in nodes) > tol:
            nodes.append(t)
    return np.array(sorted(nodes))


class _FlowCache:
    """Memoises provider snapshots for the handful of times a step touches."""

    def __init__(self, provider: FlowProvider, grid: Grid, size: int = 8):
        self.provider = provider
        self.grid = grid
        self.size = size
        self._snaps: dict[float, object] = {}

    def snapshot(self, t):
        t = float(t)
        snap = self._snaps.get(t)
        if snap is None:
            snap = self.provider.sample(self.grid, t)
            if len(self._snaps) >= self.size:
                self._snaps.pop(next(iter(self._snaps)))
            self._snaps[t] = snap
        return snap

    def velocity(self, t):
        u = self.snapshot(t).u.values
        if not np.all(np.isfinite(u)):
            raise ContractError(f"non-finite velocity at t={t}")
        return u

    def quantity(self, symbol: str, t):
        snap = self.snapshot(t)
        if symbol == "p":
            return snap.p.values
        if symbol == "rho":
            return snap.rho.values
        if symbol.startswith("u"):
            i = int(symbol.lstrip("u_")) - 1
            if not 0 <= i < self.grid.dim:
                raise ContractError(f"no velocity component {symbol!r} in {self.grid.dim}D")
            return snap.u.values[i]
        raise ContractError(f"unknown flow quantity {symbol!r}")


def _check_cfl(u: np.ndarray, dt: float, grid: Grid) -> None:
    speed = float(np.max(np.sqrt(np.sum(u**2, axis=0))))
    ratio = abs(dt) * speed / grid.min_spacing
    if ratio > SL_CFL_CAP * (1 + 1e-12):
        raise CFLError(
            f"dt*max|u|/h = {ratio:.3g} exceeds {SL_CFL_CAP:g}; reduce dt to keep interpolation error bounded"
        )


def _trace(cache: _FlowCache, t_from: float, t_to: float, x0: np.ndarray | None = None) -> np.ndarray:
    """RK4 position at ``t_to`` of the particles at ``x0`` (default: cell centres) at ``t_from``."""
    grid = cache.grid
    h = t_to - t_from
    tm = t_from + 0.5 * h
    u_a, u_m, u_b = cache.velocity(t_from), cache.velocity(tm), cache.velocity(t_to)
    for u in (u_a, u_m, u_b):
        _check_cfl(u, h, grid)

    def vel(u, x):
        return CubicInterpolator(grid, x)(u)

    x = grid.mesh if x0 is None else x0
    k1 = u_a if x0 is None else vel(u_a, x)
    k2 = vel(u_m, x + 0.5 * h * k1)
    k3 = vel(u_m, x + 0.5 * h * k2)
    k4 = vel(u_b, x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


# ---------------------------------------------------------------------------
# pathlines


@dataclass
class Pathline:
    seed: np.ndarray
    times: np.ndarray
    positions: np.ndarray  # (K, dim), wrapped into the box


@dataclass
class Pathlines:
    times: np.ndarray
    positions: np.ndarray  # (K, M, dim)

    def __len__(self):
        return self.positions.shape[1]

    def __getitem__(self, i) -> Pathline:
        return Pathline(self.positions[0, i].copy(), self.times, self.positions[:, i])


def integrate_pathlines(provider: FlowProvider, grid: Grid, seeds, t0: float, t1: float, dt: float) -> Pathlines:
    """Integrate ``dx/dt = u(t, x)`` with classical RK4 from t0 to t1.

    Velocity is cubic-interpolated from the provider's raster on ``grid``;
    positions are wrapped periodically (seeds outside the box are wrapped too).
    """
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    provider.check_time(t0)
    provider.check_time(t1)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    cache = _FlowCache(provider, grid)
    times = time_grid(t0, t1, dt)
    x = wrap(seeds.T.copy(), grid)
    out = [x.T.copy()]
    for ta, tb in zip(times[:-1], times[1:]):
        x = wrap(_trace(cache, ta, tb, x), grid)
        out.append(x.T.copy())
    return Pathlines(times, np.stack(out))


# ---------------------------------------------------------------------------
# transport sweeps


Source = "str | Callable[[float], np.ndarray]"


def _source_fn(cache: _FlowCache, f) -> Callable[[float], np.ndarray]:
    if callable(f):
        return lambda t: np.asarray(f(t), dtype=float)
    return lambda t: cache.quantity(f, t)


def _forward_sweep(cache: _FlowCache, sources, times: np.ndarray, tau: float, monotone: bool) -> np.ndarray:
    grid = cache.grid
    fns = [_source_fn(cache, f) for f in sources]
    g = np.zeros((len(fns), *grid.shape))
    f_prev = np.stack([fn(times[0]) for fn in fns])
    for ta, tb in zip(times[:-1], times[1:]):
        dt = tb - ta
        interp = CubicInterpolator(grid, _trace(cache, tb, ta))
        f_next = np.stack([fn(tb) for fn in fns])
        g = interp(g, monotone) + (0.5 * dt / tau) * (interp(f_prev) + f_next)
        f_prev = f_next
    return g


def _backward_sweep(cache: _FlowCache, end_values: np.ndarray, times: np.ndarray, keep, monotone: bool) -> dict:
    """Carry ``end_values`` (stack ``(F, *n)``) from times[-1] back to times[0]."""
    f0 = end_values.copy()
    stored = {}
    if times[-1] in keep:
        stored[times[-1]] = f0.copy()
    for j in range(len(times) - 1, 0, -1):
        ta, tb = times[j - 1], times[j]
        f0 = CubicInterpolator(cache.grid, _trace(cache, ta, tb))(f0, monotone)
        if ta in keep:
            stored[ta] = f0.copy()
    return stored


def _resolve_window(provider: FlowProvider, tau):
    t0 = provider.t_start
    if tau is None:
        if not math.isfinite(provider.t_end):
            raise ContractError("tau is required for providers with an unbounded window")
        tau = provider.t_end - t0
    if not tau > 0:
        raise ContractError(f"tau must be positive, got {tau}")
    provider.check_time(t0 + tau)
    return t0, float(tau)


def accumulate_forward(provider: FlowProvider, f, tau: float, dt: float, grid: Grid, monotone: bool = False) -> ScalarField:
    """Solve ``dg/dt + u.grad g = f/tau``, ``g(t0) = 0``, and return ``g(t0 + tau)``.

    ``f`` is a flow quantity symbol (``"p"``, ``"rho"``, ``"u1"``...) or a
    callable returning a raster at time t. Unlimited interpolation (the
    default) keeps the map from ``f`` to ``g`` linear.
    """
    t0, tau = _resolve_window(provider, tau)
    cache = _FlowCache(provider, grid)
    g = _forward_sweep(cache, [f], time_grid(t0, t0 + tau, dt), tau, monotone)
    return ScalarField(grid, g[0])


def transport_backward(end_values: ScalarField, provider: FlowProvider, tau: float, dt: float,
                       sample_times, monotone: bool = True) -> list[ScalarField]:
    """Transport ``end_values`` (given at ``t0 + tau``) backward along pathlines.

    Returns the transported field at each of ``sample_times``.
    """
    grid = end_values.grid
    t0, tau = _resolve_window(provider, tau)
    times = time_grid(t0, t0 + tau, dt, sample_times)
    keep = {times[np.argmin(np.abs(times - t))] for t in sample_times}
    cache = _FlowCache(provider, grid)
    stored = _backward_sweep(cache, end_values.values[None], times, keep, monotone)
    return [ScalarField(grid, stored[times[np.argmin(np.abs(times - t))]][0]) for t in sample_times]


# ---------------------------------------------------------------------------
# base flow


@dataclass
class BaseFlow:
    """Pathline-averaged velocity samples plus the constant base pressure/density."""

    grid: Grid
    tau: float
    times: np.ndarray
    u_bar: np.ndarray  # (m, dim, *n)
    p_bar: float
    rho_bar: float
    c: float
    p_avg: np.ndarray | None = None  # (m, *n) averaged pressure before taking its mean

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.u_bar = np.asarray(self.u_bar, dtype=float)
        if self.u_bar.shape != (len(self.times), self.grid.dim, *self.grid.shape):
            raise ContractError(f"u_bar shape {self.u_bar.shape} does not match times/grid")
        if not (self.rho_bar > 0 and self.c > 0):
            raise ContractError("rho_bar and c must be positive")

    @classmethod
    def uniform(cls, grid: Grid, u0, c: float, rho_bar: float = 1.0, tau: float = math.inf) -> "BaseFlow":
        """Constant base state; valid at every time."""
        u = np.zeros(grid.dim)
        u[: len(u0)] = u0
        field = np.broadcast_to(u.reshape(-1, *([1] * grid.dim)), (grid.dim, *grid.shape)).copy()
        return cls(grid, tau, np.array([0.0]), field[None], rho_bar * c**2, rho_bar, c)

    @property
    def is_steady(self) -> bool:
        return len(self.times) == 1

    def u_bar_at(self, t: float) -> np.ndarray:
        """Base velocity at time t, linear in time between samples."""
        if self.is_steady:
            return self.u_bar[0]
        times = self.times
        slack = 1e-9 * max(1.0, abs(times[-1] - times[0]))
        if t < times[0] - slack or t > times[-1] + slack:
            raise WindowError(f"t={t} outside base-flow samples [{times[0]}, {times[-1]}]")
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = min(max((t - times[j]) / (times[j + 1] - times[j]), 0.0), 1.0)
        return (1.0 - w) * self.u_bar[j] + w * self.u_bar[j + 1]

    def max_speed(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.u_bar**2, axis=1))))


def default_sl_step(provider: FlowProvider, grid: Grid, tau: float, t0: float = 0.0, cfl: float = 2.0) -> float:
    """A step at the given semi-Lagrangian CFL, also capped at tau/16."""
    speed = max(float(np.max(np.linalg.norm(provider.velocity(grid, t), axis=0))) for t in (t0, t0 + 0.5 * tau, t0 + tau))
    dt = tau / 16.0
    if speed > 0:
        dt = min(dt, cfl * grid.min_spacing / speed)
    return dt


def compute_base_flow(provider: FlowProvider, grid: Grid, tau: float | None = None, dt: float | None = None,
                      sample_times=None, monotone: bool = True) -> BaseFlow:
    """Pathline averages of ``p`` and every velocity component.

    ``p_bar`` is the spatial mean of the averaged pressure (constant in
    theory), and ``rho_bar = p_bar / c**2``.
    """
    t0, tau = _resolve_window(provider, tau)
    if dt is None:
        dt = default_sl_step(provider, grid, tau, t0)
    if sample_times is None:
        sample_times = np.linspace(t0, t0 + tau, 9)
    sample_times = [float(t) for t in sample_times]
    times = time_grid(t0, t0 + tau, dt, sample_times)
    cache = _FlowCache(provider, grid)
    symbols = ["p"] + [f"u{i + 1}" for i in range(grid.dim)]
    g = _forward_sweep(cache, symbols, times, tau, monotone)
    keep = {times[np.argmin(np.abs(times - t))] for t in sample_times}
    stored = _backward_sweep(cache, g, times, keep, monotone)
    series = np.stack([stored[times[np.argmin(np.abs(times - t))]] for t in sample_times])
    p_avg = series[:, 0]
    p_bar = float(np.mean(p_avg))
    c = provider.c
    return BaseFlow(grid, tau, np.array(sample_times), series[:, 1:], p_bar, p_bar / c**2, c, p_avg)


@dataclass
class BaseFlowReport:
    max_div: float
    max_material: float
    max_transport: float
    max_grad_contraction: float
    rho_consistency: float
    p_bar_spread: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_base_flow_properties(bf: BaseFlow, provider: FlowProvider | None = None) -> BaseFlowReport:
    """Residuals of the base-flow properties; never raises.

    * ``max_div``: max |div u_bar| over samples
    * ``max_material``: max |(u_bar_{k+1}-u_bar_k)/dt + u_bar.grad u_bar| at midpoints
    * ``max_transport``: same with the driving flow u as the convecting velocity
    * ``max_grad_contraction``: max |d_i u_bar_j d_j u_bar_i|
    * ``rho_consistency``: |rho_bar - p_bar/c^2|
    * ``p_bar_spread``: max |averaged p - p_bar|
    """
    grid = bf.grid
    max_div = max(float(np.max(np.abs(div(u, grid)))) for u in bf.u_bar)
    contraction = 0.0
    for u in bf.u_bar:
        g = np.stack([grad(uj, grid) for uj in u])  # g[j, i] = d_i u_j
        contraction = max(contraction, float(np.max(np.abs(np.einsum("ji...,ij...->...", g, g)))))

    material = 0.0
    transport = math.nan if provider is None else 0.0
    for k in range(len(bf.times) - 1):
        dtk = bf.times[k + 1] - bf.times[k]
        rate = (bf.u_bar[k + 1] - bf.u_bar[k]) / dtk
        mid = 0.5 * (bf.u_bar[k + 1] + bf.u_bar[k])
        material = max(material, float(np.max(np.abs(rate + advect(mid, mid, grid)))))
        if provider is not None:
            try:
                u = provider.velocity(grid, 0.5 * (bf.times[k] + bf.times[k + 1]))
                transport = max(transport, float(np.max(np.abs(rate + advect(u, mid, grid)))))
            except (ValueError, ArithmeticError):
                transport = math.nan
    spread = 0.0 if bf.p_avg is None else float(np.max(np.abs(bf.p_avg - bf.p_bar)))
    return BaseFlowReport(
        max_div=max_div,
        max_material=material,
        max_transport=transport,
        max_grad_contraction=contraction,
        rho_consistency=abs(bf.rho_bar - bf.p_bar / bf.c**2),
        p_bar_spread=spread,
    )


# ---------------------------------------------------------------------------
# serialisation


def write_base_flow(bf: BaseFlow, directory, stem: str = "ubar") -> Path:
    """One AFLD file per sample, a ``time path`` manifest and a constants header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, (t, u) in enumerate(zip(bf.times, bf.u_bar)):
        name = f"{stem}_{k:04d}.afld"
        afld.write_field(directory / name, VectorField(bf.grid, u))
        lines.append(f"{float(t)!r} {name}")
    (directory / f"{stem}.manifest").write_text("\n".join(lines) + "\n")
    header = {"p_bar": float(bf.p_bar), "rho_bar": float(bf.rho_bar), "c": float(bf.c), "tau": float(bf.tau)}
    (directory / f"{stem}.constants").write_text("".join(f"{k} = {v!r}\n" for k, v in header.items()))
    return directory / f"{stem}.manifest"


def read_base_flow(directory, stem: str = "ubar") -> BaseFlow:
    directory = Path(directory)
    consts = {}
    for line in (directory / f"{stem}.constants").read_text().splitlines():
        if line.strip():
            key, value = (s.strip() for s in line.split("=", 1))
            consts[key] = float(value)
    times, fields = [], []
    grid = None
    for line in (directory / f"{stem}.manifest").read_text().splitlines():
        if not line.strip():
            continue
        t, name = line.split()
        f = afld.read_field(directory / name, grid)
        grid = f.grid
        times.append(float(t))
        fields.append(f.values)
    return BaseFlow(grid, consts["tau"], np.array(times), np.stack(fields), consts["p_bar"], consts["rho_bar"], consts["c"])
