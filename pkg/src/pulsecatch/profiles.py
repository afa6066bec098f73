"""Normalized input intensity profiles r_in(tau) and resonator memory parameters.

Everything in this package is dimensionless: times are measured in units of
1/kappa_max and rates in units of kappa_max, so kappa_max itself is always 1.
A profile carries one excitation in total, i.e. the integral of r_in over
[0, inf) equals 1 (up to the truncation deficit of a Gaussian cut at tau = 0).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.special import erf

from .errors import DomainError

SQRT_2PI = math.sqrt(2.0 * math.pi)

EXPONENTIAL = "exponential"
GAUSSIAN = "gaussian"
TABULATED = "tabulated"

# Default Gaussian delay in units of sigma; covers 99.997% of the pulse.
DEFAULT_GAUSSIAN_OFFSET = 4.0
MIN_GAUSSIAN_OFFSET = 3.0


@dataclass(frozen=True, eq=False)
class InputProfile:
    """Input intensity profile r_in(tau), tau >= 0.

    Use the module-level constructors `exponential`, `gaussian` and
    `tabulated` instead of instantiating this class directly.

    Attributes:
        kind: one of "exponential", "gaussian", "tabulated".
        r: initial rate (exponential) or peak rate 1/(sigma*sqrt(2*pi))
            (Gaussian); None for tabulated profiles.
        sigma: Gaussian standard deviation; None otherwise.
        n: Gaussian offset multiplier, tau_0 = n*sigma; None otherwise.
        taus, rates: sample arrays for tabulated profiles; None otherwise.
    """

    kind: str
    r: float | None = None
    sigma: float | None = None
    n: float | None = None
    taus: np.ndarray | None = None
    rates: np.ndarray | None = None

    @property
    def tau0(self) -> float:
        """Pulse-center delay n*sigma (Gaussian only)."""
        if self.kind != GAUSSIAN:
            raise DomainError("tau0 is only defined for Gaussian profiles")
        return self.n * self.sigma

    @cached_property
    def _interp(self) -> PchipInterpolator:
        # Shape-preserving cubic keeps the interpolant inside the local data
        # range, so nonnegative samples can never interpolate negative.
        return PchipInterpolator(self.taus, self.rates, extrapolate=False)

    @cached_property
    def _interp_cum(self) -> PchipInterpolator:
        return self._interp.antiderivative()


def exponential(r: float) -> InputProfile:
    """Profile r_in(tau) = r * exp(-r*tau)."""
    if not (r > 0.0) or not math.isfinite(r):
        raise DomainError(f"exponential profile needs r > 0, got {r}")
    return InputProfile(kind=EXPONENTIAL, r=float(r))


def gaussian(r: float | None = None, sigma: float | None = None,
             n: float = DEFAULT_GAUSSIAN_OFFSET) -> InputProfile:
    """Gaussian profile with peak rate r = 1/(sigma*sqrt(2*pi)), centered at n*sigma.

    Exactly one of `r` (peak rate) or `sigma` must be given; the other is
    derived from the peak relation. The pulse is truncated at tau = 0 and is
    deliberately not renormalized; the missing tail erfc(n/sqrt(2))/2 is
    accounted for by `validate` and in loss bookkeeping.
    """
    if (r is None) == (sigma is None):
        raise DomainError("give exactly one of r or sigma for a Gaussian profile")
    if r is not None:
        if not (r > 0.0) or not math.isfinite(r):
            raise DomainError(f"gaussian profile needs r > 0, got {r}")
        sigma = 1.0 / (float(r) * SQRT_2PI)
    else:
        if not (sigma > 0.0) or not math.isfinite(sigma):
            raise DomainError(f"gaussian profile needs sigma > 0, got {sigma}")
        r = 1.0 / (float(sigma) * SQRT_2PI)
    n = float(n)
    if not math.isfinite(n) or n < MIN_GAUSSIAN_OFFSET:
        raise DomainError(
            f"gaussian offset multiplier n must be >= {MIN_GAUSSIAN_OFFSET}, got {n}"
        )
    return InputProfile(kind=GAUSSIAN, r=float(r), sigma=float(sigma), n=n)


def tabulated(taus, rates) -> InputProfile:
    """Tabulated profile from strictly increasing (tau_k, r_k) samples.

    Negative r_k are accepted at construction so that `validate` can name the
    violated invariant; every downstream solver requires a validated profile.
    """
    taus = np.asarray(taus, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if taus.ndim != 1 or taus.shape != rates.shape or taus.size < 2:
        raise DomainError("tabulated profile needs matching 1-d tau/rate arrays, >= 2 samples")
    if not np.all(np.isfinite(taus)) or not np.all(np.isfinite(rates)):
        raise DomainError("tabulated profile samples must be finite")
    if taus[0] < 0.0:
        raise DomainError("tabulated profile samples must start at tau >= 0")
    if not np.all(np.diff(taus) > 0.0):
        raise DomainError("tabulated profile taus must be strictly increasing")
    taus = taus.copy()
    rates = rates.copy()
    taus.setflags(write=False)
    rates.setflags(write=False)
    return InputProfile(kind=TABULATED, taus=taus, rates=rates)


@dataclass(frozen=True)
class MemoryParams:
    """Resonator memory parameters: intrinsic loss rate in units of kappa_max.

    kappa_max is the unit of every rate in this package and is therefore
    pinned to 1; the field exists so the convention is explicit at call sites.
    """

    kappa_i: float
    kappa_max: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.kappa_i < 1.0):
            raise DomainError(f"kappa_i must lie in [0, 1), got {self.kappa_i}")
        if self.kappa_max != 1.0:
            raise DomainError(
                "kappa_max is the rate unit and must be 1 (all inputs dimensionless)"
            )


def rate_at(profile: InputProfile, tau):
    """Evaluate r_in(tau); tau may be a scalar or an array, all entries >= 0."""
    if isinstance(tau, float) or isinstance(tau, int):
        # Scalar fast path: integrators and quadratures call this millions of
        # times, so the analytic families skip the array machinery entirely.
        if tau < 0.0:
            raise DomainError("rate_at requires tau >= 0")
        if profile.kind == EXPONENTIAL:
            return profile.r * math.exp(-profile.r * tau)
        if profile.kind == GAUSSIAN:
            z = (tau - profile.tau0) / profile.sigma
            return profile.r * math.exp(-0.5 * z * z)
        if tau < profile.taus[0] or tau > profile.taus[-1]:
            return 0.0
        return float(profile._interp(tau))
    arr = np.asarray(tau, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("rate_at requires tau >= 0")
    if profile.kind == EXPONENTIAL:
        out = profile.r * np.exp(-profile.r * arr)
    elif profile.kind == GAUSSIAN:
        z = (arr - profile.tau0) / profile.sigma
        out = profile.r * np.exp(-0.5 * z * z)
    else:
        out = profile._interp(np.clip(arr, profile.taus[0], profile.taus[-1]))
        out = np.where((arr < profile.taus[0]) | (arr > profile.taus[-1]), 0.0, out)
    if np.ndim(tau) == 0:
        return float(out)
    return out


def cumulative(profile: InputProfile, tau):
    """Analytic integral of r_in over [0, tau] (antiderivative for tabulated data).

    This is the closed-form companion to `total_excitation`, which integrates
    numerically; the two are cross-checked in the test suite rather than
    defined in terms of each other.
    """
    if isinstance(tau, float) or isinstance(tau, int):
        if tau < 0.0:
            raise DomainError("cumulative requires tau >= 0")
        if profile.kind == EXPONENTIAL:
            return -math.expm1(-profile.r * tau)
        if profile.kind == GAUSSIAN:
            root2 = math.sqrt(2.0)
            lo = math.erf(profile.tau0 / (profile.sigma * root2))
            return 0.5 * (math.erf((tau - profile.tau0) / (profile.sigma * root2)) + lo)
        t0, t1 = profile.taus[0], profile.taus[-1]
        return float(profile._interp_cum(min(max(tau, t0), t1))
                     - profile._interp_cum(t0))
    arr = np.asarray(tau, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("cumulative requires tau >= 0")
    if profile.kind == EXPONENTIAL:
        out = -np.expm1(-profile.r * arr)
    elif profile.kind == GAUSSIAN:
        root2 = math.sqrt(2.0)
        lo = erf(profile.tau0 / (profile.sigma * root2))
        out = 0.5 * (erf((arr - profile.tau0) / (profile.sigma * root2)) + lo)
    else:
        t0, t1 = profile.taus[0], profile.taus[-1]
        base = profile._interp_cum(t0)
        out = profile._interp_cum(np.clip(arr, t0, t1)) - base
    if np.ndim(tau) == 0:
        return float(out)
    return out


def horizon(profile: InputProfile) -> float:
    """Time by which the profile has delivered essentially all of its excitation.

    Used to bound every root search: tau_0 + 10*sigma for a Gaussian, 50/r for
    an exponential, the last sample for tabulated data.
    """
    if profile.kind == EXPONENTIAL:
        return 50.0 / profile.r
    if profile.kind == GAUSSIAN:
        return profile.tau0 + 10.0 * profile.sigma
    return float(profile.taus[-1])


def _quad_rate(profile: InputProfile, a: float, b: float) -> float:
    """Adaptive quadrature of rate_at over [a, b] to ~1e-12 absolute error."""
    if b <= a:
        return 0.0
    if profile.kind == TABULATED:
        # Integrate between sample knots in chunks; quad caps the number of
        # break points it accepts, and the interpolant is only C1 at knots.
        knots = profile.taus[(profile.taus > a) & (profile.taus < b)]
        edges = np.concatenate(([a], knots, [b]))
        total = 0.0
        step = 40
        for i in range(0, len(edges) - 1, step):
            lo = edges[i]
            hi = edges[min(i + step, len(edges) - 1)]
            pts = edges[i + 1:min(i + step, len(edges) - 1)]
            val, _ = quad(lambda s: rate_at(profile, s), lo, hi,
                          points=list(pts), limit=200, epsabs=1e-13, epsrel=1e-12)
            total += val
        return total
    pts = None
    if profile.kind == GAUSSIAN and a < profile.tau0 < b:
        pts = [profile.tau0]
    val, _ = quad(lambda s: rate_at(profile, s), a, b, points=pts,
                  limit=200, epsabs=1e-13, epsrel=1e-12)
    return val


def total_excitation(profile: InputProfile, tau_end: float) -> float:
    """Numerically integrate r_in over [0, tau_end] (tau_end may be inf)."""
    if tau_end < 0.0:
        raise DomainError("total_excitation requires tau_end >= 0")
    if tau_end == 0.0:
        return 0.0
    if math.isinf(tau_end):
        if profile.kind == TABULATED:
            return _quad_rate(profile, 0.0, float(profile.taus[-1]))
        cut = horizon(profile)
        head = _quad_rate(profile, 0.0, cut)
        tail, _ = quad(lambda s: rate_at(profile, s), cut, np.inf,
                       limit=200, epsabs=1e-13, epsrel=1e-12)
        return head + tail
    return _quad_rate(profile, 0.0, float(tau_end))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of `validate`: pass/fail plus the violated invariants by name."""

    ok: bool
    failures: tuple[str, ...]
    total: float
    deficit_bound: float


def validate(profile: InputProfile) -> ValidationReport:
    """Check the profile invariants; failures are reported, never raised."""
    failures: list[str] = []

    total = total_excitation(profile, math.inf)
    if profile.kind == GAUSSIAN:
        deficit_bound = 0.5 * math.erfc(profile.n / math.sqrt(2.0))
        if not (-1e-9 <= 1.0 - total <= deficit_bound + 1e-9):
            failures.append(f"normalization ≈ {total:.9g}")
    else:
        deficit_bound = 0.0
        if abs(total - 1.0) > 1e-6:
            failures.append(f"normalization ≈ {total:.9g}")

    if profile.kind == TABULATED:
        if np.any(profile.rates < 0.0):
            failures.append("nonnegativity")
    # Analytic families are nonnegative by construction; n >= 3 is enforced
    # structurally for Gaussians, so nothing further to check here.

    return ValidationReport(ok=not failures, failures=tuple(failures),
                            total=total, deficit_bound=deficit_bound)


def parse_profile(text: str) -> InputProfile:
    """Parse a profile literal: `exp:r=0.036`, `gauss:r=0.1533,n=4`, `table:<path.csv>`.

    Gaussian literals accept `sigma=` in place of `r=`; the table CSV has two
    columns `tau,r_in` with an optional header row.
    """
    head, sep, rest = text.partition(":")
    if not sep:
        raise DomainError(f"malformed profile literal {text!r}")
    head = head.strip().lower()
    if head == "table":
        return _load_table(rest.strip())
    kv: dict[str, float] = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise DomainError(f"malformed profile literal {text!r}")
            try:
                kv[key.strip().lower()] = float(val)
            except ValueError as exc:
                raise DomainError(f"bad number in profile literal {text!r}") from exc
    if head == "exp":
        if set(kv) != {"r"}:
            raise DomainError("exponential literal takes exactly r=<rate>")
        return exponential(kv["r"])
    if head == "gauss":
        extra = set(kv) - {"r", "sigma", "n"}
        if extra:
            raise DomainError(f"unknown gaussian parameters {sorted(extra)}")
        return gaussian(r=kv.get("r"), sigma=kv.get("sigma"),
                        n=kv.get("n", DEFAULT_GAUSSIAN_OFFSET))
    raise DomainError(f"unknown profile family {head!r}")


def _load_table(path_text: str) -> InputProfile:
    path = Path(path_text)
    if not path.is_file():
        raise DomainError(f"profile table not found: {path}")
    taus: list[float] = []
    rates: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                t, v = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if not taus:  # header row
                    continue
                raise DomainError(f"bad row in profile table {path}: {row!r}")
            taus.append(t)
            rates.append(v)
    if len(taus) < 2:
        raise DomainError(f"profile table {path} needs at least two samples")
    return tabulated(taus, rates)
