"""Fixed-point and Newton solver for the two-component system on the torus.

The mean-zero formulation is solved as u = T(u) where

    T_i(u) = (-Lap)^{-1} ( sum_j a_ij rho_j (h_j e^{u_j} / I_j - 1) ),
    I_j    = integral of h_j e^{u_j},

with the weights h_j carrying the singular sources.  A damped Picard
iteration from u = 0 handles the easy regions; once the residual is
small (or progress stalls) a Newton-Krylov polish on the equivalent
root problem -Lap u_i = sum_j a_ij rho_j (h_j e^{u_j}/I_j - 1) takes
over, with GMRES on the analytic Jacobian and an (I - Lap)^{-1}
preconditioner.  The convergence measure everywhere is the sup norm of
u - T(u).

Parameter continuation (sweeps along segments in the rho plane) reuses
each converged solution as the next starting point, classifies every
step exactly, and records non-convergence instead of failing.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import IO, Sequence, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .coupling import (
    CouplingMatrix,
    InvalidRhoError,
    RhoVector,
    SingularMatrixError,
    FULL_RANK,
    rank_class,
    symmetrize,
    validate_hypothesis,
    HypothesisError,
)
from .counting import OnCriticalSetError, SingularProfile, classify
from .fields import (
    ScalarField,
    TorusGrid,
    _inv_laplacian_values,
    _neg_laplacian_values,
    _spectral_multipliers,
    as_field_values,
    ball_integral,
    build_weights,
    green,
    quadrature,
)

__all__ = [
    "SolveConfig",
    "SolutionPair",
    "NonConvergenceError",
    "LocalMass",
    "LocalMassReport",
    "SweepRecord",
    "fixed_point_map",
    "residual",
    "solve",
    "energy",
    "local_masses",
    "reconstruct_original",
    "linear_rho_path",
    "sweep",
    "sweep_csv",
]

_FOUR_PI = 4.0 * math.pi
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SolveConfig:
    """Numerical parameters for a single solve.

    ``green_modes`` is the Green's function truncation radius (defaults
    to twice the grid size), ``newton_threshold`` the residual below
    which the Newton polish starts, ``stall_window`` how many nearly
    flat Picard steps are tolerated before switching anyway, and
    ``mass_radius`` the ball radius used for local mass integrals.
    """

    n: int = 128
    damping: float = 0.5
    max_iter: int = 2000
    tol: float = 1e-9
    use_newton: bool = True
    newton_threshold: float = 1e-3
    newton_max_iter: int = 40
    stall_window: int = 30
    gmres_rtol: float = 1e-4
    gmres_restart: int = 40
    gmres_maxiter: int = 120
    green_modes: int | None = None
    mass_radius: float = 0.125

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 16:
            raise ValueError(f"grid size must be an integer >= 16, got {self.n}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 0 or self.newton_max_iter < 0:
            raise ValueError("iteration limits must be nonnegative")
        if self.stall_window < 1:
            raise ValueError("stall window must be at least 1")
        if not 0.0 < self.mass_radius < 0.25:
            raise ValueError("mass radius must lie in (0, 1/4)")


class NonConvergenceError(Exception):
    """Iteration stopped above tolerance; carries the residual history
    and the last iterate for post-mortems."""

    def __init__(
        self,
        message: str,
        residual_history: Sequence[float],
        last_u1: ScalarField,
        last_u2: ScalarField,
    ):
        super().__init__(message)
        self.residual_history = tuple(residual_history)
        self.last_u1 = last_u1
        self.last_u2 = last_u2

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.inf


@dataclass(frozen=True)
class SolutionPair:
    """Converged mean-zero solution with its bookkeeping.

    ``normalizations`` are the integrals I_i of h_i e^{u_i},
    ``constants`` the additive constants -log I_i that normalize the
    reconstructed unshifted components.
    """

    u1: ScalarField
    u2: ScalarField
    weights: tuple[ScalarField, ScalarField]
    normalizations: tuple[float, float]
    constants: tuple[float, float]
    residual: float
    iterations: int
    newton_used: bool
    residual_history: tuple[float, ...]


def _rho_floats(rho: Union[RhoVector, Sequence[float]]) -> tuple[float, float]:
    if isinstance(rho, RhoVector):
        return rho.as_floats()
    r1, r2 = float(rho[0]), float(rho[1])
    if r1 < 0 or r2 < 0:
        raise InvalidRhoError(f"rho components must be >= 0, got ({r1}, {r2})")
    return r1, r2


class _Operator:
    """Raw-array evaluation of the fixed-point map and its linearization."""

    def __init__(
        self,
        matrix: CouplingMatrix,
        rho: Union[RhoVector, Sequence[float]],
        h1: np.ndarray,
        h2: np.ndarray,
    ):
        self.a = matrix.as_floats()
        self.r1, self.r2 = _rho_floats(rho)
        self.h1 = h1
        self.h2 = h2
        self.n = h1.shape[0]

    def sources(self, u1, u2):
        """Normalized densities minus one, plus the integrals I_j."""
        with np.errstate(over="ignore", invalid="ignore"):
            w1 = self.h1 * np.exp(u1)
            w2 = self.h2 * np.exp(u2)
        i1 = float(w1.mean())
        i2 = float(w2.mean())
        if not (math.isfinite(i1) and math.isfinite(i2)) or i1 <= 0.0 or i2 <= 0.0:
            raise FloatingPointError(
                "normalization integral vanished or overflowed"
            )
        return w1 / i1 - 1.0, w2 / i2 - 1.0, i1, i2

    def apply(self, u1, u2):
        s1, s2, _, _ = self.sources(u1, u2)
        (a11, a12), (a21, a22) = self.a
        f1 = a11 * self.r1 * s1 + a12 * self.r2 * s2
        f2 = a21 * self.r1 * s1 + a22 * self.r2 * s2
        return _inv_laplacian_values(f1), _inv_laplacian_values(f2)

    def residual_and_image(self, u1, u2):
        t1, t2 = self.apply(u1, u2)
        r = max(
            float(np.max(np.abs(u1 - t1))),
            float(np.max(np.abs(u2 - t2))),
        )
        return r, t1, t2

    def safe_residual(self, u1, u2) -> float:
        try:
            r, _, _ = self.residual_and_image(u1, u2)
        except FloatingPointError:
            return math.inf
        return r if math.isfinite(r) else math.inf


def fixed_point_map(
    u1: ScalarField,
    u2: ScalarField,
    rho: Union[RhoVector, Sequence[float]],
    matrix: CouplingMatrix,
    weights: Sequence[ScalarField],
) -> tuple[ScalarField, ScalarField]:
    """One application of T; outputs are mean zero by construction."""
    grid = u1.grid
    op = _Operator(matrix, rho, weights[0].values, weights[1].values)
    t1, t2 = op.apply(u1.values, u2.values)
    return (
        ScalarField(grid, t1, mean_zero=True),
        ScalarField(grid, t2, mean_zero=True),
    )


def residual(
    u1: ScalarField,
    u2: ScalarField,
    rho: Union[RhoVector, Sequence[float]],
    matrix: CouplingMatrix,
    weights: Sequence[ScalarField],
) -> float:
    """Sup norm of u - T(u), the convergence measure used throughout."""
    op = _Operator(matrix, rho, weights[0].values, weights[1].values)
    r, _, _ = op.residual_and_image(u1.values, u2.values)
    return r


def _newton_polish(op: _Operator, u1, u2, res, config: SolveConfig, history):
    """Newton-Krylov on -Lap u - N(u) = 0 with backtracking on |u - T(u)|.

    Returns (u1, u2, res, steps); raises NonConvergenceError via the
    caller when no descent direction is found.
    """
    n = op.n
    size = 2 * n * n
    inverse_mult, forward_mult = _spectral_multipliers(n)
    precond_mult = 1.0 / (1.0 + forward_mult)
    (a11, a12), (a21, a22) = op.a
    r1, r2 = op.r1, op.r2

    def split(z):
        return z[: n * n].reshape(n, n), z[n * n :].reshape(n, n)

    def precondition(z):
        v1, v2 = split(z)
        p1 = np.fft.irfft2(np.fft.rfft2(v1) * precond_mult, s=(n, n))
        p2 = np.fft.irfft2(np.fft.rfft2(v2) * precond_mult, s=(n, n))
        return np.concatenate([p1.ravel(), p2.ravel()])

    precond = LinearOperator((size, size), matvec=precondition, dtype=np.float64)

    steps = 0
    for _ in range(config.newton_max_iter):
        if res < config.tol:
            break
        s1, s2, _, _ = op.sources(u1, u2)
        n1 = s1 + 1.0
        n2 = s2 + 1.0
        g1 = _neg_laplacian_values(u1) - (a11 * r1 * s1 + a12 * r2 * s2)
        g2 = _neg_laplacian_values(u2) - (a21 * r1 * s1 + a22 * r2 * s2)
        rhs = -np.concatenate([g1.ravel(), g2.ravel()])

        def jacobian_apply(z):
            v1, v2 = split(z)
            q1 = n1 * v1 - n1 * (n1 * v1).mean()
            q2 = n2 * v2 - n2 * (n2 * v2).mean()
            j1 = _neg_laplacian_values(v1) - (a11 * r1 * q1 + a12 * r2 * q2)
            j2 = _neg_laplacian_values(v2) - (a21 * r1 * q1 + a22 * r2 * q2)
            return np.concatenate([j1.ravel(), j2.ravel()])

        jac = LinearOperator((size, size), matvec=jacobian_apply, dtype=np.float64)
        delta, _ = gmres(
            jac,
            rhs,
            rtol=config.gmres_rtol,
            atol=0.0,
            restart=config.gmres_restart,
            maxiter=config.gmres_maxiter,
            M=precond,
        )
        d1, d2 = split(delta)

        accepted = False
        alpha = 1.0
        for _ in range(13):
            c1 = u1 + alpha * d1
            c2 = u2 + alpha * d2
            c1 = c1 - c1.mean()
            c2 = c2 - c2.mean()
            cand = op.safe_residual(c1, c2)
            if cand < res:
                u1, u2, res = c1, c2, cand
                accepted = True
                break
            alpha *= 0.5
        steps += 1
        if not accepted:
            break
        history.append(res)
    return u1, u2, res, steps


def solve(
    rho: RhoVector,
    matrix: CouplingMatrix,
    profile: SingularProfile,
    hstar: Sequence | None = None,
    config: SolveConfig | None = None,
    initial=None,
    weights: Sequence[ScalarField] | None = None,
) -> SolutionPair:
    """Solve the mean-zero system for an admissible matrix and exact rho.

    Classifies rho first, so a parameter on the critical set raises
    OnCriticalSetError before any iteration runs.  ``hstar`` is the pair
    of smooth positive intensities (defaults to constants 1); prebuilt
    ``weights`` take precedence, which saves the Green's function
    assembly in sweeps.  ``initial`` may be a SolutionPair or a pair of
    fields/arrays for warm starts.
    """
    cfg = config if config is not None else SolveConfig()
    if not isinstance(rho, RhoVector):
        raise TypeError("solve needs an exact RhoVector, got " + type(rho).__name__)
    classify(matrix, rho, profile)  # raises off-hypothesis or on the critical set
    grid = TorusGrid(cfg.n)
    if weights is None:
        pair = (1.0, 1.0) if hstar is None else hstar
        weights = build_weights(pair, profile, grid, cfg.green_modes)
    else:
        weights = (
            ScalarField(grid, as_field_values(grid, weights[0], "weights[0]")),
            ScalarField(grid, as_field_values(grid, weights[1], "weights[1]")),
        )
    op = _Operator(matrix, rho, weights[0].values, weights[1].values)

    if initial is None:
        u1 = np.zeros((cfg.n, cfg.n))
        u2 = np.zeros((cfg.n, cfg.n))
    elif isinstance(initial, SolutionPair):
        u1 = initial.u1.values.copy()
        u2 = initial.u2.values.copy()
    else:
        u1 = as_field_values(grid, initial[0], "initial[0]").copy()
        u2 = as_field_values(grid, initial[1], "initial[1]").copy()
    u1 -= u1.mean()
    u2 -= u2.mean()

    history: list[float] = []

    def fail(message: str) -> NonConvergenceError:
        return NonConvergenceError(
            message,
            history,
            ScalarField(grid, u1 - u1.mean(), mean_zero=True),
            ScalarField(grid, u2 - u2.mean(), mean_zero=True),
        )

    try:
        res, t1, t2 = op.residual_and_image(u1, u2)
    except FloatingPointError:
        raise fail("normalization integral degenerate at the starting point")
    history.append(res)

    iterations = 0
    newton_used = False
    previous = res
    stall = 0
    omega = cfg.damping
    while res >= cfg.tol and iterations < cfg.max_iter:
        if cfg.use_newton and (res <= cfg.newton_threshold or stall >= cfg.stall_window):
            break
        u1 = (1.0 - omega) * u1 + omega * t1
        u2 = (1.0 - omega) * u2 + omega * t2
        iterations += 1
        try:
            res, t1, t2 = op.residual_and_image(u1, u2)
        except FloatingPointError:
            raise fail("fixed-point iteration diverged (degenerate normalization)")
        history.append(res)
        stall = stall + 1 if res > 0.98 * previous else 0
        previous = res

    if res >= cfg.tol and cfg.use_newton:
        newton_used = True
        u1, u2, res, steps = _newton_polish(op, u1, u2, res, cfg, history)
        iterations += steps

    if res >= cfg.tol:
        raise fail(
            f"residual {res:.3e} above tolerance {cfg.tol:.1e} "
            f"after {iterations} iterations"
        )

    u1 -= u1.mean()
    u2 -= u2.mean()
    _, _, i1, i2 = op.sources(u1, u2)
    return SolutionPair(
        u1=ScalarField(grid, u1, mean_zero=True),
        u2=ScalarField(grid, u2, mean_zero=True),
        weights=(weights[0], weights[1]),
        normalizations=(i1, i2),
        constants=(-math.log(i1), -math.log(i2)),
        residual=res,
        iterations=iterations,
        newton_used=newton_used,
        residual_history=tuple(history),
    )


def _full_forward_multiplier(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    return 4.0 * math.pi**2 * (k[:, None] ** 2 + k[None, :] ** 2)


def energy(
    u1: ScalarField,
    u2: ScalarField,
    rho: Union[RhoVector, Sequence[float]],
    matrix: CouplingMatrix,
    weights: Sequence[ScalarField],
) -> float:
    """Variational energy of a mean-zero pair.

    One half the inverse-matrix-weighted Dirichlet form minus
    sum_i rho_i log(integral of h_i e^{u_i}); the Dirichlet integrals are
    summed mode by mode, which is exact for grid-sampled fields.
    """
    det = matrix.det
    if det == 0:
        raise SingularMatrixError("energy needs an invertible coupling matrix")
    ainv = (
        (float(matrix.a22 / det), float(-matrix.a12 / det)),
        (float(-matrix.a21 / det), float(matrix.a11 / det)),
    )
    n = u1.grid.n
    w = _full_forward_multiplier(n)
    c1 = np.fft.fft2(u1.values) / (n * n)
    c2 = np.fft.fft2(u2.values) / (n * n)
    s11 = float(np.sum(w * (c1.real**2 + c1.imag**2)))
    s22 = float(np.sum(w * (c2.real**2 + c2.imag**2)))
    s12 = float(np.sum(w * (c1.real * c2.real + c1.imag * c2.imag)))
    dirichlet = 0.5 * (
        ainv[0][0] * s11 + (ainv[0][1] + ainv[1][0]) * s12 + ainv[1][1] * s22
    )
    r1, r2 = _rho_floats(rho)
    with np.errstate(over="ignore"):
        i1 = float((weights[0].values * np.exp(u1.values)).mean())
        i2 = float((weights[1].values * np.exp(u2.values)).mean())
    if not (math.isfinite(i1) and math.isfinite(i2)) or i1 <= 0 or i2 <= 0:
        raise FloatingPointError("normalization integral vanished or overflowed")
    return dirichlet - r1 * math.log(i1) - r2 * math.log(i2)


def _periodic_distance(p: Sequence[float], q: Sequence[float]) -> float:
    d1 = abs(p[0] - q[0]) % 1.0
    d2 = abs(p[1] - q[1]) % 1.0
    d1 = min(d1, 1.0 - d1)
    d2 = min(d2, 1.0 - d2)
    return math.hypot(d1, d2)


@dataclass(frozen=True)
class LocalMass:
    """Normalized concentration pair at one singular point.

    sigma1 carries the cross-coupling rescaling a21/a12; ``pohozaev`` is
    the symmetrized quadratic identity residue, which tends to zero for
    non-blowing-up families and to a root of the identity at blow-up.
    """

    point: tuple[float, float]
    strength: Fraction
    mass: Fraction
    sigma1: float
    sigma2: float
    pohozaev: float


@dataclass(frozen=True)
class LocalMassReport:
    masses: tuple[LocalMass, ...]
    rank: object
    proportional_gap: float | None
    radius: float


def local_masses(
    solution: SolutionPair,
    rho: RhoVector,
    matrix: CouplingMatrix,
    profile: SingularProfile,
    radius: float = 0.125,
) -> LocalMassReport:
    """Ball integrals of the normalized densities around each source.

    sigma_1l = (a21/a12) (1/2pi) int_{B(p_l, r)} rho_1 h_1 e^{u_1}/I_1,
    sigma_2l the same without the rescaling.  Balls must be pairwise
    disjoint.  For a rank-deficient matrix the report also carries the
    sup-norm gap of the proportionality identity u1 = (a11/a21) u2.
    """
    grid = solution.u1.grid
    snapped = [grid.snap(p) for p in profile.points]
    for i in range(len(snapped)):
        for j in range(i + 1, len(snapped)):
            if _periodic_distance(snapped[i], snapped[j]) <= 2.0 * radius:
                raise ValueError(
                    f"balls of radius {radius} around points {i} and {j} overlap"
                )
    sym = symmetrize(matrix)
    lam = float(sym.ratio)
    b11, b12, b22 = float(sym.b11), float(sym.b12), float(sym.b22)
    r1, r2 = rho.as_floats()
    i1, i2 = solution.normalizations
    dens1 = ScalarField(
        grid, r1 * solution.weights[0].values * np.exp(solution.u1.values) / i1
    )
    dens2 = ScalarField(
        grid, r2 * solution.weights[1].values * np.exp(solution.u2.values) / i2
    )
    rows = []
    for point, gamma, mu in zip(snapped, profile.strengths, profile.masses):
        sigma1 = lam * ball_integral(dens1, point, radius) / _TWO_PI
        sigma2 = ball_integral(dens2, point, radius) / _TWO_PI
        poh = (
            b11 * sigma1 * sigma1
            + 2.0 * b12 * sigma1 * sigma2
            + b22 * sigma2 * sigma2
            - 4.0 * float(mu) * (sigma1 + sigma2)
        )
        rows.append(
            LocalMass(
                point=point,
                strength=gamma,
                mass=mu,
                sigma1=sigma1,
                sigma2=sigma2,
                pohozaev=poh,
            )
        )
    rank = rank_class(matrix)
    gap = None
    if rank.kind != FULL_RANK:
        ratio = float(rank.ratio)
        gap = float(
            np.max(np.abs(solution.u1.values - ratio * solution.u2.values))
        )
    return LocalMassReport(
        masses=tuple(rows), rank=rank, proportional_gap=gap, radius=radius
    )


def reconstruct_original(
    solution: SolutionPair,
    profile: SingularProfile,
    truncation: int | None = None,
) -> tuple[ScalarField, ScalarField]:
    """Undo the source transformation: u_i^* = u_i - 4 pi sum_l gamma_l G_l + c_i.

    The constants c_i = -log I_i make the reconstructed components
    satisfy integral of h_i^* e^{u_i^*} = 1.  The Green's truncation
    must match the one used for the weights (same default).
    """
    grid = solution.u1.grid
    shift = np.zeros((grid.n, grid.n))
    for point, gamma in zip(profile.points, profile.strengths):
        if gamma == 0:
            continue
        shift += _FOUR_PI * float(gamma) * green(grid, grid.snap(point), truncation).values
    c1, c2 = solution.constants
    return (
        ScalarField(grid, solution.u1.values - shift + c1),
        ScalarField(grid, solution.u2.values - shift + c2),
    )


@dataclass(frozen=True)
class SweepRecord:
    """One step of a parameter sweep.

    ``region`` is the exact region index when classification succeeded;
    steps landing on the critical set have ``critical_index`` set
    instead and are never solved.  Failed solves keep the last iterate's
    statistics so blow-up trends remain visible.
    """

    t: Fraction
    rho: RhoVector
    region: int | None
    critical_index: int | None
    converged: bool
    residual: float | None
    max_u1: float | None
    max_u2: float | None
    energy: float | None
    sigmas: tuple[tuple[float, float], ...] | None
    message: str = ""


def linear_rho_path(
    start: RhoVector, stop: RhoVector, steps: int
) -> tuple[tuple[Fraction, RhoVector], ...]:
    """Exact affine path from start to stop with evenly spaced t in [0, 1]."""
    if not isinstance(steps, int) or steps < 1:
        raise ValueError("steps must be a positive integer")
    if steps == 1:
        return ((Fraction(0), start),)
    path = []
    for i in range(steps):
        t = Fraction(i, steps - 1)
        path.append(
            (
                t,
                RhoVector(
                    start.rho1 + t * (stop.rho1 - start.rho1),
                    start.rho2 + t * (stop.rho2 - start.rho2),
                ),
            )
        )
    return tuple(path)


def _sweep_step(
    t: Fraction,
    rho: RhoVector,
    matrix: CouplingMatrix,
    profile: SingularProfile,
    weights: tuple[ScalarField, ScalarField],
    config: SolveConfig,
    initial,
) -> tuple[SweepRecord, object]:
    try:
        where = classify(matrix, rho, profile)
    except OnCriticalSetError as exc:
        record = SweepRecord(
            t=t,
            rho=rho,
            region=None,
            critical_index=exc.index,
            converged=False,
            residual=None,
            max_u1=None,
            max_u2=None,
            energy=None,
            sigmas=None,
            message=str(exc),
        )
        return record, initial
    try:
        sol = solve(
            rho, matrix, profile, config=config, initial=initial, weights=weights
        )
    except NonConvergenceError as exc:
        record = SweepRecord(
            t=t,
            rho=rho,
            region=where.region_index,
            critical_index=None,
            converged=False,
            residual=exc.residual,
            max_u1=exc.last_u1.max_norm,
            max_u2=exc.last_u2.max_norm,
            energy=None,
            sigmas=None,
            message=str(exc),
        )
        return record, None
    sigmas = None
    if profile.size > 0:
        try:
            report = local_masses(
                sol, rho, matrix, profile, radius=config.mass_radius
            )
            sigmas = tuple((m.sigma1, m.sigma2) for m in report.masses)
        except ValueError:
            sigmas = None
    try:
        j = energy(sol.u1, sol.u2, rho, matrix, sol.weights)
    except SingularMatrixError:
        j = None
    record = SweepRecord(
        t=t,
        rho=rho,
        region=where.region_index,
        critical_index=None,
        converged=True,
        residual=sol.residual,
        max_u1=sol.u1.max_norm,
        max_u2=sol.u2.max_norm,
        energy=j,
        sigmas=sigmas,
        message="",
    )
    return record, (sol.u1.values, sol.u2.values)


def _sweep_worker(args):
    t, rho, matrix, profile, h1_values, h2_values, config = args
    grid = TorusGrid(config.n)
    weights = (ScalarField(grid, h1_values), ScalarField(grid, h2_values))
    record, _ = _sweep_step(t, rho, matrix, profile, weights, config, None)
    return record


def sweep(
    path: Sequence[tuple[Fraction, RhoVector]],
    matrix: CouplingMatrix,
    profile: SingularProfile,
    hstar: Sequence | None = None,
    config: SolveConfig | None = None,
    parallel: bool = False,
) -> list[SweepRecord]:
    """Solve along a parameter path, warm-starting consecutive steps.

    Weights are assembled once.  ``parallel=True`` distributes steps
    over processes with independent cold starts, trading continuation
    for throughput; the record order matches the path either way.
    """
    cfg = config if config is not None else SolveConfig()
    verdict = validate_hypothesis(matrix)
    if not verdict.ok:
        raise HypothesisError(
            "coupling matrix violates: " + ", ".join(verdict.violations)
        )
    grid = TorusGrid(cfg.n)
    pair = (1.0, 1.0) if hstar is None else hstar
    weights = build_weights(pair, profile, grid, cfg.green_modes)
    if parallel:
        jobs = [
            (t, rho, matrix, profile, weights[0].values, weights[1].values, cfg)
            for t, rho in path
        ]
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_sweep_worker, jobs))
    records = []
    carry = None
    for t, rho in path:
        record, carry = _sweep_step(t, rho, matrix, profile, weights, cfg, carry)
        records.append(record)
    return records


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def sweep_csv(
    records: Sequence[SweepRecord],
    destination: Union[str, IO[str]],
    profile_size: int,
) -> None:
    """Write sweep records as CSV, one sigma pair of columns per source."""
    header = "t,rho1,rho2,region,converged,residual,max_u1,max_u2,J"
    for l in range(1, profile_size + 1):
        header += f",sigma_1{l},sigma_2{l}"
    own = isinstance(destination, str)
    out = open(destination, "w") if own else destination
    try:
        out.write(header + "\n")
        for rec in records:
            r1, r2 = rec.rho.as_floats()
            if rec.critical_index is not None:
                region = f"OnCriticalSet({rec.critical_index})"
            else:
                region = _csv_cell(rec.region)
            cells = [
                _csv_cell(float(rec.t)),
                _csv_cell(r1),
                _csv_cell(r2),
                region,
                _csv_cell(rec.converged),
                _csv_cell(rec.residual),
                _csv_cell(rec.max_u1),
                _csv_cell(rec.max_u2),
                _csv_cell(rec.energy),
            ]
            for l in range(profile_size):
                if rec.sigmas is None or l >= len(rec.sigmas):
                    cells += ["", ""]
                else:
                    cells += [_csv_cell(rec.sigmas[l][0]), _csv_cell(rec.sigmas[l][1])]
            out.write(",".join(cells) + "\n")
    finally:
        if own:
            out.close()
