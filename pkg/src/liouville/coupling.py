"""Exact algebra for the 2x2 coupling matrix of a two-component
exponential system.

Matrix entries, parameter pairs and every derived quantity that feeds a
comparison (sign conditions, rank, boundary tests) are kept as
``fractions.Fraction`` so that predicates are decided exactly.  Floating
point appears only in convenience values such as logarithmic shifts.

Parameter vectors are stored as exact multiples of pi: ``RhoVector(2, 2)``
means (2*pi, 2*pi).  This convention is what makes "does rho sit on a
critical ratio" an exact rational question rather than a tolerance game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

__all__ = [
    "Rational",
    "HypothesisError",
    "SingularMatrixError",
    "InvalidRhoError",
    "CouplingMatrix",
    "HypothesisVerdict",
    "RhoVector",
    "SymmetrizedSystem",
    "RankClass",
    "FULL_RANK",
    "DEGENERATE_PROPORTIONAL",
    "DEGENERATE_EQUAL",
    "validate_hypothesis",
    "quadratic_form",
    "linear_form",
    "symmetrize",
    "rank_class",
    "intrinsic_rho",
]

Rational = Union[int, str, Fraction]


class HypothesisError(ValueError):
    """The coupling matrix violates the admissibility conditions."""


class SingularMatrixError(ValueError):
    """An operation needed the inverse of a rank-deficient matrix."""


class InvalidRhoError(ValueError):
    """A parameter vector has a negative component or is identically zero."""


def _rational(value: Rational, what: str) -> Fraction:
    # Floats are refused on purpose: Fraction(0.1) is the exact binary
    # expansion, not 1/10, and that silently poisons boundary tests.
    if isinstance(value, float):
        raise TypeError(
            f"{what} must be int, str or Fraction, not float; "
            f"pass '1/10' style strings to stay exact"
        )
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse {what} from {value!r}: {exc}") from None


@dataclass(frozen=True)
class CouplingMatrix:
    """Rational 2x2 coupling matrix [[a11, a12], [a21, a22]]."""

    a11: Fraction
    a12: Fraction
    a21: Fraction
    a22: Fraction

    def __post_init__(self) -> None:
        for name in ("a11", "a12", "a21", "a22"):
            object.__setattr__(self, name, _rational(getattr(self, name), name))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Rational]]) -> "CouplingMatrix":
        try:
            (a11, a12), (a21, a22) = rows
        except (TypeError, ValueError):
            raise ValueError("expected two rows of two entries") from None
        return cls(a11, a12, a21, a22)

    @property
    def det(self) -> Fraction:
        return self.a11 * self.a22 - self.a12 * self.a21

    def rows(self) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
        return ((self.a11, self.a12), (self.a21, self.a22))

    def as_floats(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (
            (float(self.a11), float(self.a12)),
            (float(self.a21), float(self.a22)),
        )


@dataclass(frozen=True)
class HypothesisVerdict:
    """Outcome of the admissibility check, listing violated inequalities."""

    ok: bool
    violations: tuple[str, ...]


def validate_hypothesis(matrix: CouplingMatrix) -> HypothesisVerdict:
    """Check the sign and dominance conditions on the coupling matrix.

    Admissible means: a11 >= 0, a22 >= 0 on the diagonal, strictly
    positive cross couplings a12 > 0, a21 > 0, and the column dominance
    a21 >= a11, a12 >= a22.  Each violated inequality is reported by
    name so callers can surface all of them at once.
    """
    checks = (
        ("a11 >= 0", matrix.a11 >= 0),
        ("a22 >= 0", matrix.a22 >= 0),
        ("a12 > 0", matrix.a12 > 0),
        ("a21 > 0", matrix.a21 > 0),
        ("a21 >= a11", matrix.a21 >= matrix.a11),
        ("a12 >= a22", matrix.a12 >= matrix.a22),
    )
    violations = tuple(name for name, ok in checks if not ok)
    return HypothesisVerdict(ok=not violations, violations=violations)


def _require_admissible(matrix: CouplingMatrix) -> None:
    verdict = validate_hypothesis(matrix)
    if not verdict.ok:
        raise HypothesisError(
            "coupling matrix violates: " + ", ".join(verdict.violations)
        )


@dataclass(frozen=True)
class RhoVector:
    """Nonnegative parameter pair, components in exact multiples of pi.

    ``RhoVector(Fraction(3, 2), 0)`` is the point (3*pi/2, 0).  The zero
    vector is excluded; it never indexes a meaningful problem and would
    make the classification ratio 0/0.
    """

    rho1: Fraction
    rho2: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho1", _rational(self.rho1, "rho1"))
        object.__setattr__(self, "rho2", _rational(self.rho2, "rho2"))
        if self.rho1 < 0 or self.rho2 < 0:
            raise InvalidRhoError(f"rho components must be >= 0, got {self}")
        if self.rho1 == 0 and self.rho2 == 0:
            raise InvalidRhoError("rho must not be identically zero")

    def as_floats(self) -> tuple[float, float]:
        """The actual values (rho1*pi, rho2*pi) as floats."""
        return (float(self.rho1) * math.pi, float(self.rho2) * math.pi)

    def scaled(self, factor: Rational) -> "RhoVector":
        t = _rational(factor, "factor")
        return RhoVector(self.rho1 * t, self.rho2 * t)


def quadratic_form(matrix: CouplingMatrix, rho: RhoVector) -> Fraction:
    """Evaluate (a11*a21/a12)*rho1^2 + 2*a21*rho1*rho2 + a22*rho2^2.

    Returned in units of pi^2 since rho components are multiples of pi.
    This is the quadratic functional whose position between consecutive
    critical values decides the region index.
    """
    _require_admissible(matrix)
    r1, r2 = rho.rho1, rho.rho2
    return (
        matrix.a11 * matrix.a21 / matrix.a12 * r1 * r1
        + 2 * matrix.a21 * r1 * r2
        + matrix.a22 * r2 * r2
    )


def linear_form(matrix: CouplingMatrix, rho: RhoVector) -> Fraction:
    """Evaluate (a21/a12)*rho1 + rho2, in units of pi.

    Strictly positive for every admissible matrix and nonzero rho, so the
    ratio quadratic_form/linear_form is always defined.
    """
    _require_admissible(matrix)
    return matrix.a21 / matrix.a12 * rho.rho1 + rho.rho2


@dataclass(frozen=True)
class SymmetrizedSystem:
    """Symmetric form B of the coupling matrix plus the component shift.

    ``ratio`` is a21/a12 kept exact; ``shift`` is log(ratio), the additive
    constant absorbed by the first component when passing to B.
    """

    b11: Fraction
    b12: Fraction
    b22: Fraction
    ratio: Fraction
    shift: float


def symmetrize(matrix: CouplingMatrix) -> SymmetrizedSystem:
    """Return the symmetric system equivalent to an admissible matrix.

    B = [[a11*a12/a21, a12], [a12, a22]]; rescaling the first parameter by
    a21/a12 and shifting the first component by log(a21/a12) turns the
    original system into the B-system, and the B quadratic form agrees
    with quadratic_form on the rescaled variables.
    """
    _require_admissible(matrix)
    ratio = matrix.a21 / matrix.a12
    return SymmetrizedSystem(
        b11=matrix.a11 * matrix.a12 / matrix.a21,
        b12=matrix.a12,
        b22=matrix.a22,
        ratio=ratio,
        shift=math.log(ratio),
    )


FULL_RANK = "full_rank"
DEGENERATE_PROPORTIONAL = "degenerate_proportional"
DEGENERATE_EQUAL = "degenerate_equal"


@dataclass(frozen=True)
class RankClass:
    """Rank classification; ``ratio`` = a11/a21 in the proportional case."""

    kind: str
    ratio: Fraction | None = None


def rank_class(matrix: CouplingMatrix) -> RankClass:
    """Classify an admissible matrix by rank.

    Admissible matrices satisfy det <= 0.  det < 0 gives full rank; det
    = 0 means the rows are proportional, u1 = (a11/a21)*u2 + const for
    solutions, with the equal-rows case singled out because there the
    two components coincide up to a constant.
    """
    _require_admissible(matrix)
    if matrix.det != 0:
        return RankClass(FULL_RANK)
    if matrix.a11 == matrix.a21 and matrix.a12 == matrix.a22:
        return RankClass(DEGENERATE_EQUAL, ratio=Fraction(1))
    return RankClass(DEGENERATE_PROPORTIONAL, ratio=matrix.a11 / matrix.a21)


def intrinsic_rho(matrix: CouplingMatrix, gamma_sum: Rational) -> RhoVector:
    """The parameter pair 4*pi*gamma_sum * (row sums of the inverse).

    With rho_i stored in pi units this is rho_i = 4 * s_i * gamma_sum
    where s_i is the i-th row sum of matrix^{-1}.  This is the natural
    parameter point attached to a singular profile with total strength
    ``gamma_sum``; its classification ratio is exactly 4*pi*gamma_sum.
    """
    _require_admissible(matrix)
    total = _rational(gamma_sum, "gamma_sum")
    det = matrix.det
    if det == 0:
        raise SingularMatrixError(
            "intrinsic rho needs an invertible matrix, determinant is zero"
        )
    row_sums = (
        (matrix.a22 - matrix.a12) / det,
        (matrix.a11 - matrix.a21) / det,
    )
    components = []
    for i, s in enumerate(row_sums, start=1):
        c = 4 * s * total
        if c < 0:
            raise InvalidRhoError(
                f"inverse row {i} gives intrinsic rho{i} = {c} * pi < 0"
            )
        components.append(c)
    return RhoVector(components[0], components[1])
