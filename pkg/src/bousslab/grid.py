"""Uniform symmetric periodic grid with spectral calculus.

All functions live on the torus [-L, L) sampled at n equispaced nodes
x_j = -L + j*dx.  Derivatives, antiderivatives and the regularized inverse
(1 - gamma*d_xx)^-1 are Fourier multipliers; integrals use the rectangle
rule, which is spectrally accurate for smooth periodic integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import io

import numpy as np


class GridMismatchError(ValueError):
    """Two grid functions on different grids were combined."""


class MeanNotZeroError(ValueError):
    """Antiderivative requested for a function with non-negligible mean."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-half_width, half_width)."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.n_points % 2 != 0 or self.n_points < 16:
            raise ValueError("n_points must be even and >= 16")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        n = self.n_points
        return -self.half_width + self.dx * np.arange(n)

    @cached_property
    def k_rfft(self) -> np.ndarray:
        """Wavenumbers of the real FFT modes, k_m = pi*m/L."""
        return np.pi / self.half_width * np.arange(self.n_points // 2 + 1)

    @cached_property
    def reflect_index(self) -> np.ndarray:
        """Index permutation realizing x -> -x on the periodic grid."""
        n = self.n_points
        return (n - np.arange(n)) % n

    @property
    def center_index(self) -> int:
        """Index of the node x = 0."""
        return self.n_points // 2

    def multiplier_deriv(self, order: int) -> np.ndarray:
        """(ik)^order on rfft modes; Nyquist zeroed for odd orders."""
        mult = (1j * self.k_rfft) ** order
        if order % 2 == 1:
            mult[-1] = 0.0
        return mult


@dataclass
class GridFunction:
    """Real samples of a function on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError("values must have shape (n_points,)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function samples must be finite")

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridMismatchError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    # -- io -----------------------------------------------------------------
    def to_csv(self, path, header_lines=()) -> None:
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("x,value\n")
            for x, v in zip(self.grid.x, self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")

    @staticmethod
    def from_csv(path) -> "GridFunction":
        xs, vs = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("x,"):
                    continue
                sx, sv = line.split(",")
                xs.append(float(sx))
                vs.append(float(sv))
        x = np.asarray(xs)
        n = len(x)
        half_width = -x[0]
        grid = GridSpec(half_width, n)
        if not np.allclose(grid.x, x, atol=1e-12 * max(1.0, half_width)):
            raise ValueError("CSV nodes are not a uniform symmetric grid")
        return GridFunction(grid, np.asarray(vs))

    def to_bytes(self) -> bytes:
        """Little-endian float64 samples, for golden files."""
        return self.values.astype("<f8").tobytes()

    @staticmethod
    def from_bytes(grid: GridSpec, raw: bytes) -> "GridFunction":
        return GridFunction(grid, np.frombuffer(raw, dtype="<f8").copy())


def sample(grid: GridSpec, fn) -> GridFunction:
    """Sample a callable on the grid nodes."""
    return GridFunction(grid, np.asarray(fn(grid.x), dtype=float))


# ---------------------------------------------------------------------------
# spectral calculus on raw arrays (hot paths) and GridFunction wrappers
# ---------------------------------------------------------------------------

def deriv_values(grid: GridSpec, values: np.ndarray, order: int) -> np.ndarray:
    if order not in (1, 2, 3, 4):
        raise ValueError("derivative order must be in {1, 2, 3, 4}")
    fh = np.fft.rfft(values)
    return np.fft.irfft(grid.multiplier_deriv(order) * fh, n=grid.n_points)


def deriv(f: GridFunction, order: int) -> GridFunction:
    """Spectral derivative of integer order 1..4."""
    return GridFunction(f.grid, deriv_values(f.grid, f.values, order))


def antideriv_values(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    fh = np.fft.rfft(values)
    k = grid.k_rfft
    out = np.zeros_like(fh)
    out[1:] = fh[1:] / (1j * k[1:])
    out[-1] = 0.0
    return np.fft.irfft(out, n=grid.n_points)


def antideriv(f: GridFunction, tol_mean: float | None = None) -> GridFunction:
    """Zero-mean antiderivative; rejects inputs with non-negligible mean.

    The Fourier zero mode of the result is set to 0, so deriv(antideriv(f))
    recovers f to machine precision for zero-mean f.
    """
    m = float(np.mean(f.values))
    scale = norm_l2(f)
    if tol_mean is None:
        tol_mean = 1e-8 * scale
    # mean over the torus corresponds to integral/(2L)
    if abs(m) * 2 * f.grid.half_width > tol_mean + 1e-300:
        raise MeanNotZeroError(
            f"mean {m:.3e} exceeds tolerance; antiderivative is ill-defined"
        )
    return GridFunction(f.grid, antideriv_values(f.grid, f.values))


def inv_helmholtz_values(grid: GridSpec, values: np.ndarray, gamma: float) -> np.ndarray:
    fh = np.fft.rfft(values)
    return np.fft.irfft(fh / (1.0 + gamma * grid.k_rfft**2), n=grid.n_points)


def inv_helmholtz(f: GridFunction, gamma: float) -> GridFunction:
    """Apply (1 - gamma*d_xx)^-1 via its Fourier symbol 1/(1 + gamma k^2)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return GridFunction(f.grid, inv_helmholtz_values(f.grid, f.values, gamma))


def inner_values(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b)) * grid.dx


def inner(f: GridFunction, g: GridFunction) -> float:
    """L2 inner product by the rectangle rule."""
    if f.grid != g.grid:
        raise GridMismatchError("inner product requires a common grid")
    return inner_values(f.grid, f.values, g.values)


def norm_l2(f: GridFunction) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def project_parity_values(grid: GridSpec, values: np.ndarray, parity: str) -> np.ndarray:
    refl = values[grid.reflect_index]
    if parity == "even":
        return 0.5 * (values + refl)
    if parity == "odd":
        return 0.5 * (values - refl)
    raise ValueError("parity must be 'even' or 'odd'")


def project_parity(f: GridFunction, parity: str) -> GridFunction:
    """Even/odd part of f using the grid's reflection symmetry."""
    return GridFunction(f.grid, project_parity_values(f.grid, f.values, parity))


def parity_error(f: GridFunction, parity: str) -> float:
    """Relative deviation of f from the requested parity class."""
    other = "odd" if parity == "even" else "even"
    bad = project_parity(f, other)
    scale = norm_l2(f)
    return norm_l2(bad) / scale if scale > 0 else 0.0


def spectral_upsample(f: GridFunction, factor: int) -> GridFunction:
    """Trigonometric interpolation onto a grid refined by an integer factor."""
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    if factor == 1:
        return f.copy()
    n = f.grid.n_points
    fine = GridSpec(f.grid.half_width, n * factor)
    fh = np.fft.rfft(f.values)
    out = np.zeros(n * factor // 2 + 1, dtype=complex)
    out[: n // 2 + 1] = fh
    out[n // 2] *= 0.5  # split the Nyquist mode symmetrically
    return GridFunction(fine, np.fft.irfft(out * factor, n=fine.n_points))
