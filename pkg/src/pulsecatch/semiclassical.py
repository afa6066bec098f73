"""Optimal coupling for a classical field amplitude, and its quantum cross-check.

A variational treatment of a classical amplitude A(tau) absorbing a real
input A_in(tau) with zero output yields the same coupling law as the quantum
zero-reflection schedule in the lossless case:

    kappa(tau) = A_in^2(tau) / (A0^2 + int_{tau_i}^{tau} A_in^2(s) ds)

with the stored power A^2(tau) equal to the denominator. The branch with
A' = 0 (which maximizes, rather than nulls, the output) is deliberately not
implemented. The sign convention A <= 0 mirrors the quantum memory amplitude.

These are deliberately separate code paths from `protocol`: agreement between
the two (see `compare_with_full_quantum`) is a cross-check of both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import profiles as prof
from . import protocol
from .errors import DomainError


@dataclass(frozen=True)
class ClassicalField:
    """Real input amplitude A_in(tau) plus the seed stored in the memory.

    Attributes:
        a_in: real-valued input amplitude; A_in^2 is the input power.
        a0: initial stored amplitude (>= 0); a0 > 0 keeps the coupling
            finite at tau_i when the input starts from zero.
        tau_i: time at which the absorption stage begins.
        breakpoints: optional interior times where A_in is non-smooth,
            passed to the quadrature as split points.
    """

    a_in: Callable[[float], float]
    a0: float
    tau_i: float = 0.0
    breakpoints: tuple[float, ...] = ()
    # memo of the largest tau integrated so far -> integral value; sweeping
    # tau forward (the common pattern) then only integrates increments
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.a0 < 0.0:
            raise DomainError("the seed amplitude a0 must be >= 0")

    def _quad_piece(self, a: float, b: float) -> float:
        f = lambda s: self.a_in(s) ** 2
        pts = [p for p in self.breakpoints if a < p < b]
        total = 0.0
        edges = [a] + pts + [b]
        i = 0
        while i < len(edges) - 1:
            j = min(i + 40, len(edges) - 1)
            val, _ = quad(f, edges[i], edges[j], points=edges[i + 1:j] or None,
                          limit=200, epsabs=1e-12, epsrel=1e-12)
            total += val
            i = j
        return total

    def power_integral(self, tau: float) -> float:
        """int_{tau_i}^{tau} A_in^2(s) ds by adaptive quadrature (abs err <= 1e-10)."""
        if tau < self.tau_i:
            raise DomainError("tau must be >= tau_i")
        if tau == self.tau_i:
            return 0.0
        done_to = self.tau_i
        acc = 0.0
        if self._memo and self._memo["tau"] <= tau:
            done_to, acc = self._memo["tau"], self._memo["value"]
        value = acc + self._quad_piece(done_to, tau)
        if not self._memo or tau > self._memo["tau"]:
            self._memo["tau"] = tau
            self._memo["value"] = value
        return value


def field_from_profile(profile: prof.InputProfile, tau_i: float,
                       a0: float) -> ClassicalField:
    """Classical field with A_in = sqrt(r_in) of a (real) input profile."""
    a_in = lambda s: math.sqrt(prof.rate_at(profile, s))
    breaks = ()
    if profile.kind == prof.TABULATED:
        breaks = tuple(float(t) for t in profile.taus)
    elif profile.kind == prof.GAUSSIAN:
        breaks = (profile.tau0,)
    return ClassicalField(a_in=a_in, a0=a0, tau_i=tau_i, breakpoints=breaks)


def semiclassical_population(field: ClassicalField, tau: float) -> float:
    """Stored power A^2(tau) = A0^2 + int_{tau_i}^tau A_in^2."""
    return field.a0 ** 2 + field.power_integral(tau)


def semiclassical_coupling(field: ClassicalField, tau: float) -> float:
    """Output-nulling coupling kappa(tau) = A_in^2(tau) / A^2(tau)."""
    num = field.a_in(tau) ** 2
    den = semiclassical_population(field, tau)
    if den == 0.0:
        raise ZeroDivisionError(
            "stored power is zero: no seed and no input up to this tau"
        )
    return num / den


def stored_amplitude(field: ClassicalField, tau: float) -> float:
    """A(tau) <= 0, mirroring the quantum memory sign convention."""
    return -math.sqrt(semiclassical_population(field, tau))


def output_amplitude(field: ClassicalField, tau: float) -> float:
    """A_out = A_in + sqrt(kappa) A; identically zero under the optimal law."""
    return field.a_in(tau) + math.sqrt(semiclassical_coupling(field, tau)) \
        * stored_amplitude(field, tau)


def compare_with_full_quantum(profile: prof.InputProfile, *,
                              n_samples: int = 201) -> float:
    """Max relative deviation between quantum and semiclassical couplings.

    Builds the lossless (kappa_i = 0) quantum schedule, seeds the classical
    field at the threshold with A0^2 = beta^2(tau_c) = r_in(tau_c), and
    compares the two coupling laws pointwise over [tau_c, horizon]. The two
    are algebraically identical for real inputs without intrinsic loss, so
    the return value measures only the numerical routes (~1e-12 for the
    analytic families, interpolation-limited for tabulated data).
    """
    params = prof.MemoryParams(kappa_i=0.0)
    schedule = protocol.build_schedule(profile, params)
    tau_c = schedule.last_tau_c
    seed_sq = prof.rate_at(profile, tau_c)
    field = field_from_profile(profile, tau_c, math.sqrt(seed_sq))

    worst = 0.0
    end = prof.horizon(profile)
    for tau in np.linspace(tau_c, end, n_samples):
        k_q = schedule.stage2_kappa(float(tau))
        if k_q == 0.0:
            continue
        k_sc = semiclassical_coupling(field, float(tau))
        worst = max(worst, abs(k_q - k_sc) / k_q)
    return worst
