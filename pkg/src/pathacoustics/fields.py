"""Periodic Cartesian grids, field containers and differential operators.

All fields live on a uniform, fully periodic raster with values stored at
cell centres ``x_i = (i + 1/2) h``.  Vector data is laid out component-first,
``values[j]`` being the j-th component raster.

Spectral derivatives use wavenumbers ``k = 2*pi*m/L`` with the Nyquist mode
of every first derivative set to zero, so that grad/div/curl and the spectral
Helmholtz projector are mutually consistent and map real fields to real
fields.  The spectral Laplacian is defined as div(grad), i.e. it shares that
convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ContractError, GridMismatchError

TWO_PI = 2.0 * math.pi

DIFF_KINDS = ("grad", "div", "curl", "laplacian")
DIFF_METHODS = ("spectral", "central2", "central4")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic Cartesian grid in two or three dimensions."""

    n: tuple[int, ...]
    length: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        length = np.atleast_1d(np.asarray(self.length, dtype=float))
        if length.size == 1 and len(n) > 1:
            length = np.repeat(length, len(n))
        length = tuple(float(v) for v in length)
        if len(n) not in (2, 3):
            raise ContractError(f"grid dimension must be 2 or 3, got {len(n)}")
        if len(length) != len(n):
            raise ContractError("n and length must have the same number of axes")
        for ni in n:
            if ni < 4 or ni % 2:
                raise ContractError(f"cell counts must be even and >= 4, got {n}")
        for li in length:
            if not (li > 0 and math.isfinite(li)):
                raise ContractError(f"lengths must be positive and finite, got {length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)

    @classmethod
    def square(cls, n: int, length: float = TWO_PI, dim: int = 2) -> "Grid":
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(li / ni for li, ni in zip(self.length, self.n))

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self) -> list[np.ndarray]:
        """1D cell-centre coordinates along each axis."""
        return [(np.arange(ni) + 0.5) * hi for ni, hi in zip(self.n, self.spacing)]

    @cached_property
    def mesh(self) -> np.ndarray:
        """Cell-centre coordinates, shape ``(dim, *n)``."""
        out = np.stack(np.meshgrid(*self.coords(), indexing="ij"))
        out.setflags(write=False)
        return out

    def _broadcast(self, axis: int, vec: np.ndarray) -> np.ndarray:
        shape = [1] * self.dim
        shape[axis] = -1
        return vec.reshape(shape)

    @cached_property
    def mode_numbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavevector components, broadcastable; Nyquist kept as -n/2."""
        return tuple(
            self._broadcast(a, np.fft.fftfreq(ni, d=1.0 / ni)) for a, ni in enumerate(self.n)
        )

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Physical first-derivative wavenumbers with the Nyquist entry zeroed."""
        ks = []
        for a, (ni, li) in enumerate(zip(self.n, self.length)):
            m = np.fft.fftfreq(ni, d=1.0 / ni)
            m[ni // 2] = 0.0
            ks.append(self._broadcast(a, TWO_PI * m / li))
        return tuple(ks)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with ``|m_i| <= n_i/3`` on every axis."""
        mask = np.ones(self.n, dtype=bool)
        for m, ni in zip(self.mode_numbers, self.n):
            mask = mask & (np.abs(m) <= ni / 3.0)
        return mask

    def same_as(self, other: "Grid") -> bool:
        return self.n == other.n and self.length == other.length

    def require_same(self, other: "Grid", what: str = "fields") -> None:
        if not self.same_as(other):
            raise GridMismatchError(f"grid mismatch between {what}: {self} vs {other}")


def _check_finite(values: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(values)):
        raise ContractError(f"{what} contains non-finite values")


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"scalar values of shape {self.values.shape} on grid {self.grid.shape}"
            )
        _check_finite(self.values, "scalar field")

    rank = 0


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expect = (self.grid.dim, *self.grid.shape)
        if self.values.shape != expect:
            raise GridMismatchError(f"vector values of shape {self.values.shape}, expected {expect}")
        _check_finite(self.values, "vector field")

    rank = 1

    @property
    def components(self) -> list[ScalarField]:
        return [ScalarField(self.grid, v) for v in self.values]

    @classmethod
    def from_components(cls, components: list[ScalarField]) -> "VectorField":
        grid = components[0].grid
        for comp in components[1:]:
            grid.require_same(comp.grid, "vector components")
        return cls(grid, np.stack([comp.values for comp in components]))


@dataclass
class SpectralField:
    """Fourier coefficients normalised so that the DC entry is the mean."""

    grid: Grid
    coefficients: np.ndarray

    def __getitem__(self, mode):
        """Coefficient at an integer wavevector, negative indices allowed."""
        idx = tuple(int(m) % ni for m, ni in zip(mode, self.grid.n))
        return self.coefficients[idx]


# ---------------------------------------------------------------------------
# transforms


def fft(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return sfft.fftn(values, axes=axes)


def ifft(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return sfft.ifftn(coeffs, axes=axes).real


def transform(field, direction: str = "forward"):
    """Forward (divide by cell count) or inverse spatial Fourier transform."""
    if direction == "forward":
        if not isinstance(field, ScalarField):
            raise ContractError("forward transform expects a ScalarField")
        return SpectralField(field.grid, fft(field.values, field.grid) / field.grid.size)
    if direction == "inverse":
        if not isinstance(field, SpectralField):
            raise ContractError("inverse transform expects a SpectralField")
        if not np.all(np.isfinite(field.coefficients)):
            raise ContractError("spectral field contains non-finite values")
        return ScalarField(field.grid, ifft(field.coefficients * field.grid.size, field.grid))
    raise ContractError(f"unknown transform direction {direction!r}")


def truncate(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Remove the top third of the spectrum (two-thirds rule)."""
    return ifft(fft(values, grid) * grid.dealias_mask, grid)


def dealiased_product(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    return truncate(truncate(a, grid) * truncate(b, grid), grid)


def fourier_shift(values: np.ndarray, grid: Grid, shift) -> np.ndarray:
    """Translate band-limited data: returns ``f(x - shift)`` exactly.

    Nyquist content is dropped (its shifted counterpart would be complex).
    """
    phase = sum(k * s for k, s in zip(grid.wavenumbers, shift))
    return ifft(fft(values, grid) * np.exp(-1j * phase), grid)


# ---------------------------------------------------------------------------
# array-level operators


def _d1(values: np.ndarray, grid: Grid, axis: int, method: str) -> np.ndarray:
    """First derivative along ``axis`` of a raster (trailing dims are space)."""
    h = grid.spacing[axis]
    ax = values.ndim - grid.dim + axis
    if method == "central2":
        return (np.roll(values, -1, ax) - np.roll(values, 1, ax)) / (2 * h)
    if method == "central4":
        return (
            -np.roll(values, -2, ax)
            + 8 * np.roll(values, -1, ax)
            - 8 * np.roll(values, 1, ax)
            + np.roll(values, 2, ax)
        ) / (12 * h)
    raise ContractError(f"unknown method {method!r}")


def _d2(values: np.ndarray, grid: Grid, axis: int, method: str) -> np.ndarray:
    h = grid.spacing[axis]
    ax = values.ndim - grid.dim + axis
    if method == "central2":
        return (np.roll(values, -1, ax) - 2 * values + np.roll(values, 1, ax)) / h**2
    if method == "central4":
        return (
            -np.roll(values, -2, ax)
            + 16 * np.roll(values, -1, ax)
            - 30 * values
            + 16 * np.roll(values, 1, ax)
            - np.roll(values, 2, ax)
        ) / (12 * h**2)
    raise ContractError(f"unknown method {method!r}")


def grad(f: np.ndarray, grid: Grid, method: str = "spectral") -> np.ndarray:
    """Gradient of a scalar raster, shape ``(dim, *n)``."""
    if method == "spectral":
        fh = fft(f, grid)
        return np.stack([ifft(1j * k * fh, grid) for k in grid.wavenumbers])
    return np.stack([_d1(f, grid, a, method) for a in range(grid.dim)])


def div(u: np.ndarray, grid: Grid, method: str = "spectral") -> np.ndarray:
    if method == "spectral":
        uh = fft(u, grid)
        return ifft(sum(1j * k * uh[a] for a, k in enumerate(grid.wavenumbers)), grid)
    return sum(_d1(u[a], grid, a, method) for a in range(grid.dim))


def curl(u: np.ndarray, grid: Grid, method: str = "spectral") -> np.ndarray:
    """Scalar vorticity in 2D, vector curl in 3D."""
    if method == "spectral":
        uh = fft(u, grid)
        k = grid.wavenumbers

        def d(comp, axis):
            return 1j * k[axis] * uh[comp]

        if grid.dim == 2:
            return ifft(d(1, 0) - d(0, 1), grid)
        return np.stack(
            [ifft(d(2, 1) - d(1, 2), grid), ifft(d(0, 2) - d(2, 0), grid), ifft(d(1, 0) - d(0, 1), grid)]
        )

    def d(comp, axis):
        return _d1(u[comp], grid, axis, method)

    if grid.dim == 2:
        return d(1, 0) - d(0, 1)
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def laplacian(f: np.ndarray, grid: Grid, method: str = "spectral") -> np.ndarray:
    """Laplacian of a scalar raster or, componentwise, of a vector raster."""
    if method == "spectral":
        return ifft(-grid.k_squared * fft(f, grid), grid)
    return sum(_d2(f, grid, a, method) for a in range(grid.dim))


def advect(u: np.ndarray, f: np.ndarray, grid: Grid) -> np.ndarray:
    """``u . grad f`` for a scalar or (componentwise) vector raster ``f``."""
    if f.ndim == grid.dim:
        return np.einsum("i...,i...->...", u, grad(f, grid))
    return np.stack([advect(u, fj, grid) for fj in f])


def div_tensor(t: np.ndarray, grid: Grid) -> np.ndarray:
    """Row-wise divergence ``d_i T_ij`` of a ``(dim, dim, *n)`` raster."""
    th = fft(t, grid)
    k = grid.wavenumbers
    return np.stack([ifft(sum(1j * k[i] * th[i, j] for i in range(grid.dim)), grid) for j in range(grid.dim)])


def double_div(t: np.ndarray, grid: Grid) -> np.ndarray:
    """``d_i d_j T_ij`` computed in Fourier space."""
    th = fft(t, grid)
    k = grid.wavenumbers
    acc = 0
    for i in range(grid.dim):
        for j in range(grid.dim):
            acc = acc - k[i] * k[j] * th[i, j]
    return ifft(acc, grid)


def l2_norm(values: np.ndarray, grid: Grid) -> float:
    """Volume-normalised L2 norm, ``sqrt(mean |f|^2)`` over the cells."""
    vals = np.asarray(values)
    return float(np.sqrt(np.sum(vals**2) / grid.size))


def apply_diff_op(kind: str, field, method: str = "spectral"):
    """Apply grad/div/curl/laplacian to a ScalarField or VectorField.

    Raises ContractError on a rank mismatch or an unknown kind/method.
    """
    if kind not in DIFF_KINDS:
        raise ContractError(f"unknown operator {kind!r}")
    if method not in DIFF_METHODS:
        raise ContractError(f"unknown method {method!r}")
    grid = field.grid
    _check_finite(field.values)
    if kind == "grad":
        if not isinstance(field, ScalarField):
            raise ContractError("grad expects a scalar field")
        return VectorField(grid, grad(field.values, grid, method))
    if kind == "div":
        if not isinstance(field, VectorField):
            raise ContractError("div expects a vector field")
        return ScalarField(grid, div(field.values, grid, method))
    if kind == "curl":
        if not isinstance(field, VectorField):
            raise ContractError("curl expects a vector field")
        out = curl(field.values, grid, method)
        return ScalarField(grid, out) if grid.dim == 2 else VectorField(grid, out)
    out = laplacian(field.values, grid, method)
    return type(field)(grid, out)


def random_bandlimited(grid: Grid, rng: np.random.Generator, kmax: int = 8, components: int | None = None) -> np.ndarray:
    """Random real raster with spectral support ``|m_i| <= kmax`` and zero mean.

    ``components`` adds a leading axis (e.g. ``grid.dim`` for a vector field).
    """
    shape = grid.shape if components is None else (components, *grid.shape)
    mask = np.ones(grid.shape, dtype=bool)
    for m in grid.mode_numbers:
        mask &= np.abs(m) <= kmax
    mask[(0,) * grid.dim] = False
    coeffs = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    out = ifft(coeffs, grid)
    scale = np.max(np.abs(out))
    return out / scale if scale > 0 else out
