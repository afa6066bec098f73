"""Classical output-nulling coupling law and its agreement with the
zero-reflection quantum schedule (lossless case)."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulsecatch import profiles as prof
from pulsecatch import semiclassical as sc
from pulsecatch.errors import DomainError


def _const_field(c: float = 0.5, a0: float = 0.8, tau_i: float = 1.0) -> sc.ClassicalField:
    return sc.ClassicalField(a_in=lambda s: c, a0=a0, tau_i=tau_i)


def test_constant_field_closed_form():
    # A_in = c: population = a0^2 + c^2 (tau - tau_i), coupling is their ratio
    c, a0, t0 = 0.5, 0.8, 1.0
    f = _const_field(c, a0, t0)
    for tau in (1.0, 2.0, 7.5):
        pop = a0 * a0 + c * c * (tau - t0)
        assert sc.semiclassical_population(f, tau) == pytest.approx(pop, rel=1e-12)
        assert sc.semiclassical_coupling(f, tau) == pytest.approx(c * c / pop, rel=1e-12)
        assert sc.stored_amplitude(f, tau) == pytest.approx(-math.sqrt(pop), rel=1e-12)


def test_output_is_nulled():
    f = _const_field()
    for tau in (1.0, 3.0, 9.0):
        assert sc.output_amplitude(f, tau) == pytest.approx(0.0, abs=1e-12)
    g = sc.field_from_profile(prof.gaussian(sigma=1.5, n=4), 2.0, 0.3)
    for tau in (2.0, 5.0, 8.0):
        assert sc.output_amplitude(g, tau) == pytest.approx(0.0, abs=1e-12)


def test_zero_stored_power_is_an_error():
    f = sc.ClassicalField(a_in=lambda s: 0.0, a0=0.0)
    with pytest.raises(ZeroDivisionError):
        sc.semiclassical_coupling(f, 2.0)


def test_negative_seed_rejected():
    with pytest.raises(DomainError):
        sc.ClassicalField(a_in=lambda s: 1.0, a0=-0.1)


def test_power_integral_domain():
    f = _const_field(tau_i=2.0)
    with pytest.raises(DomainError):
        f.power_integral(1.0)
    assert f.power_integral(2.0) == 0.0


def test_power_integral_memoization_consistency():
    # sweeping forward must give the same values as fresh evaluation
    p = prof.gaussian(sigma=1.2, n=4)
    swept = sc.field_from_profile(p, 0.0, 0.1)
    taus = np.linspace(0.5, 11.0, 24)
    forward = [swept.power_integral(float(t)) for t in taus]
    for t, v in zip(taus, forward):
        fresh = sc.field_from_profile(p, 0.0, 0.1)
        assert fresh.power_integral(float(t)) == pytest.approx(v, abs=1e-11)
    # moving backward after a memoized sweep also works
    assert swept.power_integral(float(taus[3])) == pytest.approx(forward[3], abs=1e-11)


def test_field_from_profile_breakpoints():
    g = sc.field_from_profile(prof.gaussian(sigma=2.0, n=4), 0.0, 0.0)
    assert g.breakpoints == (8.0,)
    tab = prof.tabulated([0.0, 1.0, 2.0], [0.2, 0.6, 0.2])
    t = sc.field_from_profile(tab, 0.0, 0.0)
    assert t.breakpoints == (0.0, 1.0, 2.0)
    assert t.a_in(1.0) == pytest.approx(math.sqrt(0.6), rel=1e-12)


@pytest.mark.parametrize("make,bound", [
    (lambda: prof.exponential(0.036), 1e-9),
    (lambda: prof.gaussian(r=0.1533, n=4), 1e-9),
])
def test_quantum_agreement_analytic_families(make, bound):
    assert sc.compare_with_full_quantum(make()) <= bound


def test_quantum_agreement_tabulated():
    r = 0.2
    taus = np.linspace(0.0, prof.horizon(prof.exponential(r)), 6001)
    table = prof.tabulated(taus, r * np.exp(-r * taus))
    assert sc.compare_with_full_quantum(table, n_samples=101) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(split=st.floats(min_value=1.1, max_value=9.9),
       end=st.floats(min_value=10.0, max_value=14.0))
def test_power_integral_additivity(split, end):
    # int_{tau_i}^{end} = int_{tau_i}^{split} + int_{split}^{end}, evaluated
    # through independent field objects so the memo cannot simply cancel
    p = prof.gaussian(sigma=1.0, n=5)
    head = sc.field_from_profile(p, 1.0, 0.0).power_integral(split)
    tail = sc.field_from_profile(p, split, 0.0).power_integral(end)
    whole = sc.field_from_profile(p, 1.0, 0.0).power_integral(end)
    assert head + tail == pytest.approx(whole, abs=5e-11)
