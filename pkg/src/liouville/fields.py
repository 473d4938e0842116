"""Periodic scalar fields on the unit flat torus.

Uniform n x n grids over [0,1)^2 with values[i, j] sampled at (i/n, j/n).
The torus has unit volume, so the rectangle rule (a plain mean) is the
quadrature; for trigonometric polynomials below the Nyquist band it is
exact.  The Laplacian and its inverse act diagonally on Fourier modes,
and the Green's function with one Dirac source comes from a truncated
lattice sum folded onto the grid, so evaluation costs one FFT regardless
of the truncation radius.

Sign conventions: the Green's function G(x; q) satisfies -Lap G = delta_q
- 1 with zero mean, and behaves like -(1/2pi) log|x - q| near the
source.  Weights built from a singular profile are h_i = h_i^* *
exp(-4 pi sum_l gamma_l G(.; p_l)), vanishing to order |x - p_l|^(2
gamma_l) at each source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, IO, Sequence, Union

import numpy as np

from .counting import SingularProfile

__all__ = [
    "TorusGrid",
    "ScalarField",
    "GreenField",
    "quadrature",
    "ball_integral",
    "project_mean_zero",
    "inv_laplacian",
    "neg_laplacian",
    "green",
    "build_weights",
    "export_csv",
]

_MEAN_ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n x n sampling of the unit torus, n >= 16."""

    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 16:
            raise ValueError(f"grid size must be an integer >= 16, got {self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    def axes(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.axes()
        return np.meshgrid(x, x, indexing="ij")

    def node_index(self, point: Sequence[float]) -> tuple[int, int]:
        """Nearest grid node to a point, as integer indices mod n."""
        return (
            int(round(point[0] * self.n)) % self.n,
            int(round(point[1] * self.n)) % self.n,
        )

    def snap(self, point: Sequence[float]) -> tuple[float, float]:
        i, j = self.node_index(point)
        return (i / self.n, j / self.n)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Immutable real field on a TorusGrid.

    ``mean_zero=True`` asserts the zero-mean gauge; construction checks
    it to relative tolerance 1e-12 of the max norm.  The value array is
    copied and marked read-only.
    """

    grid: TorusGrid
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"values shape {v.shape} does not match grid {self.grid.n}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.mean_zero:
            scale = max(float(np.max(np.abs(v))), 1e-300)
            if abs(float(v.mean())) > _MEAN_ZERO_RTOL * scale:
                raise ValueError(
                    f"field flagged mean-zero but mean is {float(v.mean()):.3e}"
                )

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "ScalarField":
        return cls(grid, np.full((grid.n, grid.n), float(value)))

    @classmethod
    def from_function(
        cls, grid: TorusGrid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ) -> "ScalarField":
        x1, x2 = grid.coords()
        return cls(grid, np.broadcast_to(np.asarray(fn(x1, x2), dtype=np.float64), (grid.n, grid.n)))

    @property
    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


FieldLike = Union[ScalarField, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray], float, int]


def as_field_values(grid: TorusGrid, source: FieldLike, what: str = "field") -> np.ndarray:
    """Coerce a ScalarField, array, callable or scalar to an (n, n) array."""
    if isinstance(source, ScalarField):
        if source.grid.n != grid.n:
            raise ValueError(f"{what} lives on grid {source.grid.n}, expected {grid.n}")
        return source.values
    if callable(source):
        x1, x2 = grid.coords()
        source = source(x1, x2)
    arr = np.asarray(source, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full((grid.n, grid.n), float(arr))
    if arr.shape != (grid.n, grid.n):
        raise ValueError(f"{what} shape {arr.shape} does not match grid {grid.n}")
    return arr


def quadrature(field: ScalarField) -> float:
    """Integral over the unit torus: the plain mean of the samples."""
    return float(field.values.mean())


def _periodic_sq_dist(grid: TorusGrid, center: Sequence[float]) -> np.ndarray:
    x = grid.axes()
    d1 = np.abs(x - center[0] % 1.0)
    d2 = np.abs(x - center[1] % 1.0)
    d1 = np.minimum(d1, 1.0 - d1)
    d2 = np.minimum(d2, 1.0 - d2)
    return d1[:, None] ** 2 + d2[None, :] ** 2


def ball_integral(field: ScalarField, center: Sequence[float], radius: float) -> float:
    """Rectangle-rule integral over the periodic ball of given radius.

    The radius must satisfy 0 < radius < 1/4 so the ball is an embedded
    disc; nodes with periodic distance strictly below the radius count.
    """
    if not 0.0 < radius < 0.25:
        raise ValueError(f"ball radius must lie in (0, 1/4), got {radius}")
    mask = _periodic_sq_dist(field.grid, center) < radius * radius
    return float(field.values[mask].sum()) / (field.grid.n * field.grid.n)


def project_mean_zero(field: ScalarField) -> ScalarField:
    """Subtract the mean and flag the gauge."""
    return ScalarField(field.grid, field.values - field.values.mean(), mean_zero=True)


@lru_cache(maxsize=8)
def _spectral_multipliers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(inverse, forward) Laplacian symbols on the rfft2 layout for size n.

    Forward is 4 pi^2 |k|^2; inverse is its reciprocal with the zero mode
    annihilated.
    """
    kx = np.fft.fftfreq(n, d=1.0 / n)
    ky = np.fft.rfftfreq(n, d=1.0 / n)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    forward = 4.0 * math.pi**2 * k2
    inverse = np.zeros_like(forward)
    np.divide(1.0, forward, out=inverse, where=forward > 0)
    forward.setflags(write=False)
    inverse.setflags(write=False)
    return inverse, forward


def _inv_laplacian_values(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    inverse, _ = _spectral_multipliers(n)
    out = np.fft.irfft2(np.fft.rfft2(values) * inverse, s=(n, n))
    out -= out.mean()
    return out


def _neg_laplacian_values(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    _, forward = _spectral_multipliers(n)
    out = np.fft.irfft2(np.fft.rfft2(values) * forward, s=(n, n))
    out -= out.mean()
    return out


def inv_laplacian(field: ScalarField) -> ScalarField:
    """Solve -Lap w = f spectrally; input and output are mean zero."""
    scale = max(field.max_norm, 1e-300)
    if abs(float(field.values.mean())) > 1e-10 * scale:
        raise ValueError(
            "inverse Laplacian needs a mean-zero source; "
            f"mean is {float(field.values.mean()):.3e}"
        )
    return ScalarField(field.grid, _inv_laplacian_values(field.values), mean_zero=True)


def neg_laplacian(field: ScalarField) -> ScalarField:
    """Apply -Lap spectrally; the zero mode is removed."""
    return ScalarField(field.grid, _neg_laplacian_values(field.values), mean_zero=True)


@dataclass(frozen=True, eq=False)
class GreenField:
    """Sampled Green's function with one Dirac source.

    ``truncation`` is the lattice radius K of the Fourier sum; the field
    is mean zero and symmetric under swapping x with the source.
    """

    source: tuple[float, float]
    truncation: int
    field: ScalarField

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def green(grid: TorusGrid, source: Sequence[float], truncation: int | None = None) -> GreenField:
    """Truncated lattice-sum Green's function, -Lap G = delta_q - 1.

    Sums exp(2 pi i k.(x - q)) / (4 pi^2 |k|^2) over 0 < |k| <= K and
    evaluates on the grid by folding the coefficients modulo n into a
    single inverse FFT.  K defaults to 2n; modes beyond the Nyquist band
    alias down and sharpen the on-grid logarithmic profile near the
    source.  Requires K >= 8 for the sum to resemble a Green's function
    at all.
    """
    n = grid.n
    k_max = 2 * n if truncation is None else truncation
    if not isinstance(k_max, int) or k_max < 8:
        raise ValueError(f"truncation must be an integer >= 8, got {k_max}")
    q = (float(source[0]) % 1.0, float(source[1]) % 1.0)
    ks = np.arange(-k_max, k_max + 1)
    k1, k2 = np.meshgrid(ks, ks, indexing="ij")
    sq = k1 * k1 + k2 * k2
    mask = (sq > 0) & (sq <= k_max * k_max)
    coeff = np.zeros(sq.shape, dtype=np.complex128)
    phase = np.exp(-2j * np.pi * (k1[mask] * q[0] + k2[mask] * q[1]))
    coeff[mask] = phase / (4.0 * np.pi**2 * sq[mask])
    folded = np.zeros((n, n), dtype=np.complex128)
    np.add.at(folded, (np.mod(k1, n).ravel(), np.mod(k2, n).ravel()), coeff.ravel())
    vals = np.real(np.fft.ifft2(folded)) * (n * n)
    vals -= vals.mean()
    return GreenField(source=q, truncation=k_max, field=ScalarField(grid, vals, mean_zero=True))


def _neighbor_calibrated_value(
    factor: np.ndarray,
    node: tuple[int, int],
    banned: set[tuple[int, int]],
    gamma: float,
    spacing: float,
) -> float:
    """Finite stand-in for a negative-strength weight factor at its node.

    Near the node the factor behaves like c r^(2 gamma); the constant is
    read off the four axial neighbours and the node gets the equal-area
    cell average of c r^(2 gamma), which for gamma > -1 is c R^(2 gamma)
    / (1 + gamma) with R the equal-area cell radius.
    """
    n = factor.shape[0]
    i, j = node
    samples = []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = ((i + di) % n, (j + dj) % n)
        if nb in banned:
            continue
        samples.append(factor[nb] / spacing ** (2.0 * gamma))
    if not samples:
        raise ValueError("singular node has no regular neighbours")
    c = float(np.mean(samples))
    r_eff = spacing / math.sqrt(math.pi)
    return c * r_eff ** (2.0 * gamma) / (1.0 + gamma)


def build_weights(
    hstar: Sequence[FieldLike],
    profile: SingularProfile,
    grid: TorusGrid,
    truncation: int | None = None,
) -> tuple[ScalarField, ScalarField]:
    """Assemble the singular weights h_i from smooth positive h_i^*.

    Each source is snapped to its nearest grid node.  The shared factor
    exp(-4 pi sum_l gamma_l G_l) vanishes like r^(2 gamma_l) at a source
    with gamma_l > 0 and blows up for gamma_l < 0; on the grid the node
    value is set to 0 in the first case and to a neighbour-calibrated
    cell average in the second, so quadrature against the weight stays a
    consistent approximation of the true integral.
    """
    if len(hstar) != 2:
        raise ValueError("expected a pair of background intensities")
    base = [as_field_values(grid, h, f"hstar[{i}]") for i, h in enumerate(hstar)]
    for i, arr in enumerate(base):
        if arr.min() <= 0.0:
            raise ValueError(f"hstar[{i}] must be strictly positive")

    nodes = [grid.node_index(p) for p in profile.points]
    if len(set(nodes)) != len(nodes):
        raise ValueError("two singular points snap to the same grid node")

    log_factor = np.zeros((grid.n, grid.n))
    for point, gamma in zip(profile.points, profile.strengths):
        if gamma == 0:
            continue
        g = green(grid, grid.snap(point), truncation)
        log_factor -= 4.0 * math.pi * float(gamma) * g.values
    factor = np.exp(log_factor)

    node_set = set(nodes)
    for node, gamma in zip(nodes, profile.strengths):
        if gamma > 0:
            factor[node] = 0.0
        elif gamma < 0:
            factor[node] = _neighbor_calibrated_value(
                factor, node, node_set, float(gamma), grid.spacing
            )
    return (
        ScalarField(grid, base[0] * factor),
        ScalarField(grid, base[1] * factor),
    )


def export_csv(field: ScalarField, destination: Union[str, IO[str]]) -> None:
    """Write a field as x1,x2,value rows, x1-major, full float precision."""
    own = isinstance(destination, str)
    out = open(destination, "w") if own else destination
    try:
        out.write("x1,x2,value\n")
        n = field.grid.n
        x = field.grid.axes()
        v = field.values
        for i in range(n):
            x1 = format(x[i], ".17g")
            row = v[i]
            for j in range(n):
                out.write(f"{x1},{format(x[j], '.17g')},{format(row[j], '.17g')}\n")
    finally:
        if own:
            out.close()
