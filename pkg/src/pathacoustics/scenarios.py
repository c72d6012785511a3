"""Unsteady flow providers.

Each provider returns the density, velocity, pressure and (constant) sound
speed of a flow at any time inside its validity window, evaluated at the
cell centres of a requested grid.  Analytic kinds are closed-form so that
downstream checks always have an independent reference; the snapshot kind
replays stored fields with linear interpolation in time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

import numpy as np
from numpy.polynomial import Polynomial

from . import afld
from .errors import ContractError, GridMismatchError, WindowError
from .fields import TWO_PI, Grid, ScalarField, VectorField


@dataclass
class FlowSnapshot:
    t: float
    rho: ScalarField
    u: VectorField
    p: ScalarField
    c: float

    def __post_init__(self):
        grid = self.rho.grid
        grid.require_same(self.u.grid, "snapshot fields")
        grid.require_same(self.p.grid, "snapshot fields")
        if not self.c > 0:
            raise ContractError("sound speed must be positive")
        if np.any(self.rho.values <= 0):
            raise ContractError("density must be positive")

    @property
    def grid(self) -> Grid:
        return self.rho.grid


@dataclass(frozen=True, kw_only=True)
class FlowProvider:
    """Common state of all providers: sound speed, Ma, Re, validity window."""

    kind: ClassVar[str] = "abstract"

    c: float = 1.0
    mach: float = 0.0
    reynolds: float = math.inf
    t_start: float = 0.0
    t_end: float = math.inf

    def __post_init__(self):
        if not self.c > 0:
            raise ContractError("c must be positive")
        if self.mach < 0 or not self.reynolds > 0:
            raise ContractError("mach must be >= 0 and reynolds > 0")
        if not self.t_end > self.t_start:
            raise ContractError("empty validity window")

    @property
    def window(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)

    def check_time(self, t: float) -> None:
        slack = 1e-12 * max(1.0, abs(t))
        if t < self.t_start - slack or t > self.t_end + slack:
            raise WindowError(f"t={t} outside validity window {self.window} of {self.kind}")

    def sample(self, grid: Grid, t: float) -> FlowSnapshot:
        self.check_time(t)
        rho, u, p = self._fields(grid, float(t))
        return FlowSnapshot(float(t), ScalarField(grid, rho), VectorField(grid, u), ScalarField(grid, p), self.c)

    def velocity(self, grid: Grid, t: float) -> np.ndarray:
        """Velocity raster ``(dim, *n)`` at time t (no snapshot wrapping)."""
        self.check_time(t)
        return self._fields(grid, float(t))[1]

    def _fields(self, grid: Grid, t: float):
        raise NotImplementedError

    def reference_state(self, grid: Grid) -> tuple[np.ndarray, float, float] | None:
        """(u0, p0, rho0) of the undisturbed medium when the kind defines one."""
        return None


def _default_p0(p0, rho0, c):
    return rho0 * c**2 if p0 is None else float(p0)


@dataclass(frozen=True, kw_only=True)
class UniformPlusPlaneWave(FlowProvider):
    """Uniform stream carrying a plane acoustic wave along integer mode ``mode``.

    ``p = p0 + P cos(k.x - w t)``, ``u = u0 + P/(rho0 c) cos(..) n``,
    ``rho = rho0 + P/c^2 cos(..)`` with ``w = k.u0 + c|k|``.  ``amplitude=0``
    gives plain uniform flow.
    """

    kind: ClassVar[str] = "uniform_plus_plane_wave"

    u0: tuple[float, ...] = (0.0, 0.0)
    rho0: float = 1.0
    p0: float | None = None
    amplitude: float = 0.0
    mode: tuple[int, ...] = (1, 0)
    phase: float = 0.0

    def wavevector(self, grid: Grid) -> np.ndarray:
        m = np.zeros(grid.dim)
        m[: len(self.mode)] = self.mode
        return TWO_PI * m / np.asarray(grid.length)

    def direction(self, grid: Grid) -> np.ndarray:
        k = self.wavevector(grid)
        nk = np.linalg.norm(k)
        return k / nk if nk > 0 else k

    def angular_frequency(self, grid: Grid) -> float:
        k = self.wavevector(grid)
        return float(k @ self._u0(grid) + self.c * np.linalg.norm(k))

    def period(self, grid: Grid) -> float:
        """Time for the wave to cross one wavelength relative to the stream."""
        return TWO_PI / (self.c * float(np.linalg.norm(self.wavevector(grid))))

    def _u0(self, grid: Grid) -> np.ndarray:
        u0 = np.zeros(grid.dim)
        u0[: len(self.u0)] = self.u0
        return u0

    def _fields(self, grid, t):
        p0 = _default_p0(self.p0, self.rho0, self.c)
        u0 = self._u0(grid)
        k = self.wavevector(grid)
        theta = np.tensordot(k, grid.mesh, axes=1) - self.angular_frequency(grid) * t + self.phase
        wave = self.amplitude * np.cos(theta) if self.amplitude else np.zeros(grid.shape)
        n = self.direction(grid)
        u = u0.reshape(-1, *([1] * grid.dim)) + (wave / (self.rho0 * self.c)) * n.reshape(-1, *([1] * grid.dim))
        return self.rho0 + wave / self.c**2, u, p0 + wave

    def reference_state(self, grid):
        return self._u0(grid), _default_p0(self.p0, self.rho0, self.c), self.rho0


@dataclass(frozen=True, kw_only=True)
class TaylorGreen(FlowProvider):
    """Steady inviscid Taylor-Green cell, ``u = U (sin x cos y, -cos x sin y)``.

    Coordinates are scaled by ``2 pi / L`` so any periodic box works; in 3D
    the cell is extruded along z with zero third component.
    """

    kind: ClassVar[str] = "taylor_green"

    velocity_scale: float = 1.0
    rho0: float = 1.0
    p0: float | None = None

    def _fields(self, grid, t):
        x = TWO_PI * grid.mesh[0] / grid.length[0]
        y = TWO_PI * grid.mesh[1] / grid.length[1]
        U = self.velocity_scale
        u = np.zeros((grid.dim, *grid.shape))
        u[0] = U * np.sin(x) * np.cos(y)
        u[1] = -U * np.cos(x) * np.sin(y)
        p = _default_p0(self.p0, self.rho0, self.c) + 0.25 * self.rho0 * U**2 * (np.cos(2 * x) + np.cos(2 * y))
        return np.full(grid.shape, self.rho0), u, p


def _smoothstep_down(s):
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


@dataclass(frozen=True, kw_only=True)
class SolidRotation(FlowProvider):
    """Rigid rotation about the box centre, faded out by a C2 radial cutoff.

    The angular velocity is ``omega`` for ``r <= 0.6 R`` and falls smoothly to
    zero at ``r = 0.8 R`` (R = half the smallest box length).  The profile is
    purely azimuthal, so the field is divergence-free and pathlines are
    circles.  The pressure balances the centripetal acceleration.
    """

    kind: ClassVar[str] = "solid_rotation"

    omega: float = TWO_PI
    rho0: float = 1.0
    p0: float | None = None
    inner_fraction: float = 0.6
    outer_fraction: float = 0.8

    def radii(self, grid: Grid) -> tuple[float, float]:
        half = 0.5 * min(grid.length)
        return self.inner_fraction * half, self.outer_fraction * half

    def centre(self, grid: Grid) -> np.ndarray:
        return 0.5 * np.asarray(grid.length)

    def profile(self, r, grid: Grid):
        r_in, r_out = self.radii(grid)
        return _smoothstep_down((np.asarray(r) - r_in) / (r_out - r_in))

    def _pressure(self, r, grid):
        # dp/dr = rho (omega w)^2 r; across the ramp w is a quintic in s = (r - r_in)/width
        r_in, r_out = self.radii(grid)
        width = r_out - r_in
        s = Polynomial([0.0, 1.0])
        w = 1 - 10 * s**3 + 15 * s**4 - 6 * s**5
        antider = (w**2 * Polynomial([r_in, width]) * width).integ()
        sc = np.clip((r - r_in) / width, 0.0, 1.0)
        rel = np.where(r <= r_in, 0.5 * r**2, 0.5 * r_in**2 + antider(sc))
        return _default_p0(self.p0, self.rho0, self.c) + self.rho0 * self.omega**2 * rel

    def _fields(self, grid, t):
        x0 = self.centre(grid)
        dx = grid.mesh[0] - x0[0]
        dy = grid.mesh[1] - x0[1]
        r = np.hypot(dx, dy)
        w = self.omega * self.profile(r, grid)
        u = np.zeros((grid.dim, *grid.shape))
        u[0] = -w * dy
        u[1] = w * dx
        return np.full(grid.shape, self.rho0), u, self._pressure(r, grid)


@dataclass(frozen=True, kw_only=True)
class OscillatingUniform(FlowProvider):
    """Spatially uniform stream ``u0 + A sin(2 pi t / period) e`` at constant pressure."""

    kind: ClassVar[str] = "oscillating_uniform"

    u0: tuple[float, ...] = (0.0, 0.0)
    osc_amplitude: float = 0.1
    osc_direction: tuple[float, ...] = (1.0, 0.0)
    osc_period: float = 1.0
    rho0: float = 1.0
    p0: float | None = None

    def _fields(self, grid, t):
        u0 = np.zeros(grid.dim)
        u0[: len(self.u0)] = self.u0
        e = np.zeros(grid.dim)
        e[: len(self.osc_direction)] = self.osc_direction
        e = e / np.linalg.norm(e)
        vel = u0 + self.osc_amplitude * math.sin(TWO_PI * t / self.osc_period) * e
        u = np.broadcast_to(vel.reshape(-1, *([1] * grid.dim)), (grid.dim, *grid.shape)).copy()
        return np.full(grid.shape, self.rho0), u, np.full(grid.shape, _default_p0(self.p0, self.rho0, self.c))


@dataclass(frozen=True, kw_only=True)
class SnapshotSeries(FlowProvider):
    """Stored snapshots on one grid, linearly interpolated in time."""

    kind: ClassVar[str] = "snapshot_series"

    grid: Grid = None
    times: tuple[float, ...] = ()
    rho: np.ndarray = field(default=None, repr=False)
    u: np.ndarray = field(default=None, repr=False)
    p: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.times) < 2:
            raise ContractError("snapshot_series needs at least 2 snapshots")
        times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ContractError("snapshot times must be strictly increasing")
        object.__setattr__(self, "t_start", float(times[0]))
        object.__setattr__(self, "t_end", float(times[-1]))
        super().__post_init__()

    def _bracket(self, t):
        times = np.asarray(self.times)
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = (t - times[j]) / (times[j + 1] - times[j])
        return j, min(max(w, 0.0), 1.0)

    def _fields(self, grid, t):
        self.grid.require_same(grid, "snapshot series and requested grid")
        j, w = self._bracket(t)

        def lerp(a):
            if w == 0.0:
                return a[j].copy()
            if w == 1.0:
                return a[j + 1].copy()
            return (1.0 - w) * a[j] + w * a[j + 1]

        return lerp(self.rho), lerp(self.u), lerp(self.p)


PROVIDER_KINDS = {
    cls.kind: cls
    for cls in (UniformPlusPlaneWave, TaylorGreen, SolidRotation, OscillatingUniform, SnapshotSeries)
}


def make_provider(kind: str, **params) -> FlowProvider:
    try:
        cls = PROVIDER_KINDS[kind]
    except KeyError:
        raise ContractError(f"unknown scenario kind {kind!r}; known: {sorted(PROVIDER_KINDS)}") from None
    return cls(**params)


def sample_flow(provider: FlowProvider, grid: Grid, t: float) -> FlowSnapshot:
    return provider.sample(grid, t)


# ---------------------------------------------------------------------------
# snapshot ingestion


def read_manifest(path) -> list[tuple[float, Path, Path, Path]]:
    """Parse ``time path_rho path_u path_p`` lines; relative paths resolve next to the manifest."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ContractError(f"{path}:{lineno}: expected 'time path_rho path_u path_p'")
        t = float(parts[0])
        files = [Path(p) if Path(p).is_absolute() else path.parent / p for p in parts[1:]]
        entries.append((t, *files))
    return entries


def ingest_snapshots(entries, c: float, mach: float = 0.0, reynolds: float = math.inf) -> SnapshotSeries:
    """Build a snapshot_series provider from ``(t, rho_path, u_path, p_path)`` entries."""
    if len(entries) < 2:
        raise ContractError("snapshot_series needs at least 2 snapshots")
    times = [float(e[0]) for e in entries]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ContractError(f"non-monotone snapshot times: {times}")
    grid = None
    rho, u, p = [], [], []
    for t, rho_path, u_path, p_path in entries:
        fr, fu, fp = afld.read_field(rho_path), afld.read_field(u_path), afld.read_field(p_path)
        if not isinstance(fu, VectorField) or isinstance(fr, VectorField) or isinstance(fp, VectorField):
            raise ContractError(f"snapshot at t={t}: expected scalar rho/p and vector u")
        for f in (fr, fu, fp):
            if grid is None:
                grid = f.grid
            elif not grid.same_as(f.grid):
                raise GridMismatchError(f"grid mismatch in snapshot at t={t}: {f.grid} vs {grid}")
        rho.append(fr.values)
        u.append(fu.values)
        p.append(fp.values)
    return SnapshotSeries(
        grid=grid, times=tuple(times), rho=np.stack(rho), u=np.stack(u), p=np.stack(p),
        c=c, mach=mach, reynolds=reynolds,
    )


def ingest_manifest(path, c: float, **kw) -> SnapshotSeries:
    return ingest_snapshots(read_manifest(path), c, **kw)


def write_snapshot_series(directory, snapshots: list[FlowSnapshot], name: str = "snap") -> Path:
    """Write snapshots as AFLD files plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, snap in enumerate(snapshots):
        stem = f"{name}_{i:04d}"
        for suffix, f in (("rho", snap.rho), ("u", snap.u), ("p", snap.p)):
            afld.write_field(directory / f"{stem}.{suffix}.afld", f)
        lines.append(f"{snap.t!r} {stem}.rho.afld {stem}.u.afld {stem}.p.afld")
    manifest = directory / f"{name}.manifest"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def impedance_check(provider: UniformPlusPlaneWave, snapshot: FlowSnapshot) -> dict:
    """Plane-wave impedance: compare ``p'/(u'.n)`` against ``rho0 c``.

    Fluctuations are taken about the provider's undisturbed state.  The ratio
    is evaluated only where ``|u'.n|`` exceeds 1e-3 of its maximum (elsewhere
    it is 0/0); ``max_residual`` is the division-free form ``|p' - rho0 c u'.n|``.
    """
    grid = snapshot.grid
    u0, p0, rho0 = provider.reference_state(grid)
    n = provider.direction(grid)
    pp = snapshot.p.values - p0
    un = np.tensordot(n, snapshot.u.values - u0.reshape(-1, *([1] * grid.dim)), axes=1)
    z = rho0 * provider.c
    mask = np.abs(un) > 1e-3 * np.max(np.abs(un)) if np.any(un) else np.zeros(grid.shape, bool)
    ratio_err = float(np.max(np.abs(pp[mask] / un[mask] - z))) if mask.any() else 0.0
    return {
        "impedance": z,
        "max_ratio_error": ratio_err,
        "max_residual": float(np.max(np.abs(pp - z * un))),
    }
