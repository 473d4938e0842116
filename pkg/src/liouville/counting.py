"""Critical-value enumeration and degree counting.

The degree of the singular system is a purely combinatorial quantity: it
depends on the surface only through its Euler characteristic, on the
singular sources only through their strengths, and on the parameter pair
only through which component of the complement of the critical set it
lies in.  Everything here is exact rational arithmetic.

The critical set consists of the values 8*pi*(m + sum_{l in S} mu_l)
over integers m >= 0 and subsets S of the singular points, mu_l = 1 +
gamma_l, with 0 removed.  Coefficients b_j come from expanding

    g(x) = (1 + x + x^2 + ...)^(-chi + N) * prod_l (1 - x^{mu_l})

where chi is the Euler characteristic and N the number of sources; for
chi - N > 0 the first factor is the polynomial (1 - x)^(chi - N).  The
degree in region k is 1 + b_1 + ... + b_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .coupling import (
    CouplingMatrix,
    Rational,
    RhoVector,
    _rational,
    linear_form,
    quadratic_form,
)

__all__ = [
    "Topology",
    "CLOSED_SURFACE",
    "PLANAR_DOMAIN",
    "SingularProfile",
    "CriticalSpectrum",
    "GeneratingSeries",
    "RegionClassification",
    "PartialSum",
    "OnCriticalSetError",
    "enumerate_spectrum",
    "expand_series",
    "classify",
    "degree",
    "torus_odd_degree",
    "positivity_scan",
]

CLOSED_SURFACE = "closed_surface"
PLANAR_DOMAIN = "planar_domain"

_TWO_PI = 2.0 * math.pi
_EIGHT_PI = 8.0 * math.pi


@dataclass(frozen=True)
class Topology:
    """Closed surface of given genus, or bounded planar domain with holes."""

    kind: str
    genus: int | None = None
    holes: int | None = None

    def __post_init__(self) -> None:
        if self.kind == CLOSED_SURFACE:
            if not isinstance(self.genus, int) or self.genus < 0:
                raise ValueError("closed surface needs integer genus >= 0")
            if self.holes is not None:
                raise ValueError("closed surface takes no hole count")
        elif self.kind == PLANAR_DOMAIN:
            if not isinstance(self.holes, int) or self.holes < 0:
                raise ValueError("planar domain needs integer holes >= 0")
            if self.genus is not None:
                raise ValueError("planar domain takes no genus")
        else:
            raise ValueError(f"unknown topology kind {self.kind!r}")

    @classmethod
    def closed_surface(cls, genus: int) -> "Topology":
        return cls(CLOSED_SURFACE, genus=genus)

    @classmethod
    def planar_domain(cls, holes: int) -> "Topology":
        return cls(PLANAR_DOMAIN, holes=holes)

    @property
    def euler_char(self) -> int:
        if self.kind == CLOSED_SURFACE:
            return 2 - 2 * self.genus  # type: ignore[operator]
        return 1 - self.holes  # type: ignore[operator]


@dataclass(frozen=True)
class SingularProfile:
    """Singular sources: locations on the unit square and strengths > -1.

    Locations matter only to the field solver; the combinatorics uses the
    strengths alone.  Strengths are exact rationals.  ``masses`` gives
    mu_l = 1 + gamma_l.
    """

    points: tuple[tuple[float, float], ...]
    strengths: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        strengths = tuple(
            _rational(g, f"strength {l}") for l, g in enumerate(self.strengths)
        )
        points = tuple(
            (float(p[0]) % 1.0, float(p[1]) % 1.0) for p in self.points
        )
        object.__setattr__(self, "strengths", strengths)
        object.__setattr__(self, "points", points)
        if len(points) != len(strengths):
            raise ValueError(
                f"{len(points)} points but {len(strengths)} strengths"
            )
        for l, g in enumerate(strengths):
            if g <= -1:
                raise ValueError(f"strength {l} is {g}, must exceed -1")
        if len(set(points)) != len(points):
            raise ValueError("singular points must be pairwise distinct")

    @classmethod
    def from_strengths(
        cls,
        strengths: Sequence[Rational],
        points: Sequence[Sequence[float]] | None = None,
    ) -> "SingularProfile":
        """Build a profile, placing points on the diagonal if not given."""
        n = len(strengths)
        if points is None:
            points = tuple(((2 * l + 1) / (2 * n), (2 * l + 1) / (2 * n)) for l in range(n))
        return cls(tuple((p[0], p[1]) for p in points), tuple(strengths))

    @property
    def size(self) -> int:
        return len(self.strengths)

    @property
    def masses(self) -> tuple[Fraction, ...]:
        return tuple(1 + g for g in self.strengths)

    @property
    def total_strength(self) -> Fraction:
        return sum(self.strengths, Fraction(0))


@dataclass(frozen=True)
class CriticalSpectrum:
    """Sorted positive critical values up to ``cutoff``, in units of 8*pi."""

    values: tuple[Fraction, ...]
    cutoff: Fraction


def enumerate_spectrum(profile: SingularProfile, cutoff: Rational) -> CriticalSpectrum:
    """List every critical value m + sum_{l in S} mu_l in (0, cutoff].

    Values are in units of 8*pi.  Merged coincidences appear once; the
    result is strictly increasing.
    """
    bound = _rational(cutoff, "cutoff")
    if bound <= 0:
        raise ValueError(f"cutoff must be positive, got {bound}")
    subset_sums = {Fraction(0)}
    for mu in profile.masses:
        subset_sums |= {s + mu for s in subset_sums}
    values = set()
    for s in subset_sums:
        if s > bound:
            continue
        for m in range(math.floor(bound - s) + 1):
            v = s + m
            if 0 < v <= bound:
                values.add(v)
    return CriticalSpectrum(tuple(sorted(values)), bound)


def _geometric_power_coefficient(power: int, j: int) -> int:
    """Coefficient of x^j in (1 + x + x^2 + ...)^power.

    Negative ``power`` means the reciprocal polynomial (1 - x)^(-power).
    """
    if power > 0:
        return math.comb(j + power - 1, power - 1)
    if power == 0:
        return 1 if j == 0 else 0
    p = -power
    if j > p:
        return 0
    return (-1) ** j * math.comb(p, j)


@dataclass(frozen=True, eq=True)
class GeneratingSeries:
    """Truncated expansion of g(x); ``terms`` maps exponent to coefficient.

    Exponents are rationals in units of 8*pi, coefficients are integers;
    zero coefficients are not stored.  Treat ``terms`` as read-only.
    """

    terms: Mapping[Fraction, int]
    cutoff: Fraction

    def coefficient(self, exponent: Rational) -> int:
        return self.terms.get(_rational(exponent, "exponent"), 0)

    def sorted_terms(self) -> tuple[tuple[Fraction, int], ...]:
        return tuple(sorted(self.terms.items()))


def expand_series(
    topology: Topology, profile: SingularProfile, cutoff: Rational
) -> GeneratingSeries:
    """Expand the counting series g(x) through exponents <= cutoff.

    The product prod_l (1 - x^{mu_l}) is opened into its 2^N signed
    subset terms and each is multiplied by the closed-form coefficients
    of the geometric-series power, so no truncated polynomial
    multiplication is involved.
    """
    bound = _rational(cutoff, "cutoff")
    if bound <= 0:
        raise ValueError(f"cutoff must be positive, got {bound}")
    power = -topology.euler_char + profile.size
    signed_offsets: list[tuple[int, Fraction]] = [(1, Fraction(0))]
    for mu in profile.masses:
        signed_offsets += [(-sign, off + mu) for sign, off in signed_offsets]
    terms: dict[Fraction, int] = {}
    for sign, offset in signed_offsets:
        if offset > bound:
            continue
        for j in range(math.floor(bound - offset) + 1):
            c = _geometric_power_coefficient(power, j)
            if c == 0:
                continue
            e = offset + j
            terms[e] = terms.get(e, 0) + sign * c
    cleaned = {e: c for e, c in terms.items() if c != 0}
    if cleaned.get(Fraction(0)) != 1:
        raise AssertionError("series must start with constant term 1")
    return GeneratingSeries(cleaned, bound)


class OnCriticalSetError(Exception):
    """The parameter ratio coincides with a critical value.

    ``index`` is the position of the value in the spectrum (0 meaning the
    excluded value 0 itself) and ``value`` the critical value in units of
    8*pi.
    """

    def __init__(self, index: int, value: Fraction):
        self.index = index
        self.value = value
        super().__init__(
            f"parameter lies on critical set Gamma_{index} (ratio = 8*pi * {value})"
        )


@dataclass(frozen=True)
class RegionClassification:
    """Which component of the complement of the critical set rho lies in.

    ``region_index`` = k means the ratio sits strictly between the k-th
    and (k+1)-th critical value (k = 0: below the first).  Exact fields
    are in units of 8*pi; ``ratio`` and ``bounds`` are the float values.
    """

    region_index: int
    ratio_over_8pi: Fraction
    lower_over_8pi: Fraction
    upper_over_8pi: Fraction
    spectrum: CriticalSpectrum

    @property
    def ratio(self) -> float:
        return _EIGHT_PI * float(self.ratio_over_8pi)

    @property
    def bounds(self) -> tuple[float, float]:
        return (
            _EIGHT_PI * float(self.lower_over_8pi),
            _EIGHT_PI * float(self.upper_over_8pi),
        )


def classify(
    matrix: CouplingMatrix, rho: RhoVector, profile: SingularProfile
) -> RegionClassification:
    """Locate quadratic_form/linear_form relative to the critical values.

    Exact: the ratio is a rational multiple of 8*pi and is compared to
    rational critical values, so landing on the critical set is detected
    reliably and raises OnCriticalSetError.
    """
    q = quadratic_form(matrix, rho)
    lform = linear_form(matrix, rho)
    ratio8 = q / (8 * lform)
    if ratio8 == 0:
        raise OnCriticalSetError(0, Fraction(0))
    spectrum = enumerate_spectrum(profile, ratio8 + 1)
    k = 0
    lower = Fraction(0)
    upper: Fraction | None = None
    for idx, value in enumerate(spectrum.values, start=1):
        if value == ratio8:
            raise OnCriticalSetError(idx, value)
        if value < ratio8:
            k = idx
            lower = value
        else:
            upper = value
            break
    if upper is None:  # unreachable: the spectrum contains every integer
        raise AssertionError("no critical value above the ratio")
    return RegionClassification(
        region_index=k,
        ratio_over_8pi=ratio8,
        lower_over_8pi=lower,
        upper_over_8pi=upper,
        spectrum=spectrum,
    )


def degree(
    matrix: CouplingMatrix,
    rho: RhoVector,
    topology: Topology,
    profile: SingularProfile,
) -> int:
    """Degree count for an admissible matrix and off-critical rho.

    1 plus the series coefficients at the critical values below the
    ratio.  Constant in each region; raises OnCriticalSetError on the
    critical set itself.
    """
    where = classify(matrix, rho, profile)
    series = expand_series(topology, profile, where.spectrum.cutoff)
    below = where.spectrum.values[: where.region_index]
    return 1 + sum(series.coefficient(v) for v in below)


def torus_odd_degree(profile: SingularProfile) -> int:
    """Closed form prod_l (1 + gamma_l) / 2 on the torus.

    Valid for positive integer strengths with odd total, evaluated at the
    intrinsic parameter point; the product is even exactly when the total
    is odd, so the division is exact.
    """
    total = 0
    product = 1
    for l, g in enumerate(profile.strengths):
        if g.denominator != 1 or g < 1:
            raise ValueError(
                f"strength {l} is {g}; closed form needs positive integers"
            )
        total += int(g)
        product *= 1 + int(g)
    if total % 2 == 0:
        raise ValueError(f"total strength {total} is even; closed form needs odd")
    assert product % 2 == 0
    return product // 2


@dataclass(frozen=True)
class PartialSum:
    """Row of a positivity table: d_k = 1 + b_1 + ... + b_k."""

    k: int
    exponent: Fraction
    coefficient: int
    partial_sum: int


def positivity_scan(
    topology: Topology, profile: SingularProfile, k_max: int
) -> tuple[PartialSum, ...]:
    """Tabulate partial sums of the series for integer strengths.

    Requires positive integer strengths and Euler characteristic <= 0;
    under those hypotheses every partial sum is a positive degree, and a
    violation would falsify the counting formula, so it raises.
    """
    if not isinstance(k_max, int) or k_max < 0:
        raise ValueError("k_max must be a nonnegative integer")
    for l, g in enumerate(profile.strengths):
        if g.denominator != 1 or g < 1:
            raise ValueError(
                f"strength {l} is {g}; positivity scan needs positive integers"
            )
    if topology.euler_char > 0:
        raise ValueError(
            f"Euler characteristic {topology.euler_char} > 0 not covered"
        )
    rows = [PartialSum(0, Fraction(0), 1, 1)]
    if k_max > 0:
        spectrum = enumerate_spectrum(profile, k_max)
        if len(spectrum.values) < k_max:  # integer spectrum: values are 1..k_max
            raise AssertionError("spectrum shorter than requested scan")
        series = expand_series(topology, profile, k_max)
        running = 1
        for k in range(1, k_max + 1):
            value = spectrum.values[k - 1]
            b = series.coefficient(value)
            running += b
            if running <= 0:
                raise ArithmeticError(
                    f"partial sum {running} <= 0 at k = {k}; counting formula violated"
                )
            rows.append(PartialSum(k, value, b, running))
    return tuple(rows)
