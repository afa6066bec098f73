"""Generic amplitude integrator, energy bookkeeping and the Lindblad oracle."""
from __future__ import annotations

import math

import numpy as np
import pytest

from pulsecatch import dynamics as dyn
from pulsecatch import profiles as prof
from pulsecatch import protocol as proto
from pulsecatch.errors import DomainError

KI_OP = 1e-4


def _exp_setup(r: float = 0.036, ki: float = KI_OP):
    p = prof.exponential(r)
    params = prof.MemoryParams(kappa_i=ki)
    return p, params, proto.build_schedule(p, params)


def _unitarity_defect(tr: dyn.Trajectory) -> float:
    total = tr.beta1**2 + tr.beta**2 + tr.cum_reflection + tr.cum_intrinsic
    return float(np.max(np.abs(total - 1.0)))


# ---------------------------------------------------------------------------
# energy balance on the optimal schedules
# ---------------------------------------------------------------------------

def test_energy_balance_exponential_operating_point():
    p, params, sch = _exp_setup()
    tr = dyn.simulate_amplitudes(p, params, sch, 164.4, tol=1e-10)
    assert dyn.energy_balance_residual(tr) <= 50 * tr.tol
    assert _unitarity_defect(tr) <= 1e-9


def test_energy_balance_gaussian_operating_point():
    p = prof.gaussian(r=0.1533, n=4)
    params = prof.MemoryParams(kappa_i=KI_OP)
    sch = proto.build_schedule(p, params)
    tr = dyn.simulate_amplitudes(p, params, sch, prof.horizon(p), tol=1e-10)
    assert dyn.energy_balance_residual(tr) <= 50 * tr.tol
    assert _unitarity_defect(tr) <= 1e-9


def test_energy_balance_lossless():
    p, params, sch = _exp_setup(r=0.2, ki=0.0)
    tr = dyn.simulate_amplitudes(p, params, sch, prof.horizon(p), tol=1e-10)
    assert dyn.energy_balance_residual(tr) <= 50 * tr.tol
    assert _unitarity_defect(tr) <= 1e-9
    assert np.all(tr.cum_intrinsic == 0.0)


def test_residual_shrinks_with_tolerance():
    p, params, sch = _exp_setup()
    defects = []
    residuals = []
    for tol in (1e-6, 1e-8, 1e-10):
        tr = dyn.simulate_amplitudes(p, params, sch, 164.4, tol=tol)
        defects.append(_unitarity_defect(tr))
        residuals.append(dyn.energy_balance_residual(tr))
    assert defects[0] > defects[1] > defects[2]
    assert defects[0] > 10.0 * defects[1]
    assert residuals[0] > residuals[1] > residuals[2]


def test_max_step_controls_interpolant_error():
    # with long steps the dense-output interpolant dominates the residual
    p = prof.gaussian(r=0.1533, n=4)
    params = prof.MemoryParams(kappa_i=KI_OP)
    sch = proto.build_schedule(p, params)
    end = prof.horizon(p)
    coarse = dyn.simulate_amplitudes(p, params, sch, end, tol=1e-10, max_step=12.0)
    capped = dyn.simulate_amplitudes(p, params, sch, end, tol=1e-10)
    assert dyn.energy_balance_residual(capped) < 0.5 * dyn.energy_balance_residual(coarse)


def test_residual_detects_violations():
    # zero out the reflected channel of a healthy run: the bookkeeping
    # identity must break by roughly the stage-1 reflection scale
    p, params, sch = _exp_setup()
    tr = dyn.simulate_amplitudes(p, params, sch, 10.0, tol=1e-10, samples=2001)
    broken = dyn.Trajectory(
        taus=tr.taus.copy(), beta1=tr.beta1.copy(), beta=tr.beta.copy(),
        kappa=tr.kappa.copy(), r_in=tr.r_in.copy(),
        r_out=np.zeros_like(tr.r_out),
        cum_reflection=tr.cum_reflection.copy(),
        cum_intrinsic=tr.cum_intrinsic.copy(),
        kappa_i=tr.kappa_i, tol=tr.tol)
    # the uniform grid here is FD-limited, not integrator-limited, so the
    # healthy residual is only ~1e-6; the broken one is off by ~10^3 more
    assert dyn.energy_balance_residual(tr) < 1e-5
    assert dyn.energy_balance_residual(broken) > 1e-4


# ---------------------------------------------------------------------------
# closed-form oracles for the integrator itself
# ---------------------------------------------------------------------------

def test_seeded_memory_decays_exactly():
    # no input, constant kappa: beta(t) = beta0 e^{-(kappa+kappa_i)t/2} and
    # both loss integrals have elementary closed forms
    silent = prof.tabulated([0.0, 50.0], [0.0, 0.0])
    ki, kap, b0 = 2e-3, 0.3, -0.6
    params = prof.MemoryParams(kappa_i=ki)
    ts = np.linspace(0.0, 20.0, 2001)
    tr = dyn.simulate_amplitudes(silent, params, lambda t: kap, 20.0,
                                 tol=1e-11, samples=ts, beta0=b0)
    lam = kap + ki
    decay = b0 * np.exp(-0.5 * lam * ts)
    np.testing.assert_allclose(tr.beta, decay, atol=1e-10)
    scale = b0 * b0 * (1.0 - np.exp(-lam * ts)) / lam
    np.testing.assert_allclose(tr.cum_intrinsic, ki * scale, atol=1e-10)
    np.testing.assert_allclose(tr.cum_reflection, kap * scale, atol=1e-10)
    # the emitted power is kappa beta^2 when nothing arrives
    np.testing.assert_allclose(tr.r_out, kap * tr.beta**2, atol=1e-12)


def test_closed_coupler_reflects_everything():
    p = prof.exponential(0.3)
    params = prof.MemoryParams(kappa_i=0.0)
    tr = dyn.simulate_amplitudes(p, params, lambda t: 0.0, 30.0,
                                 tol=1e-11, samples=3001)
    assert np.max(np.abs(tr.beta)) == 0.0
    np.testing.assert_allclose(tr.r_out, tr.r_in, atol=1e-14)
    assert tr.cum_reflection[-1] == pytest.approx(
        prof.cumulative(p, 30.0), abs=1e-9)


def test_trajectory_matches_closed_population():
    from pulsecatch import closedform as cf
    p, params, sch = _exp_setup(r=0.2, ki=1e-3)
    ts = np.linspace(0.0, 40.0, 1501)
    tr = dyn.simulate_amplitudes(p, params, sch, 40.0, tol=1e-11, samples=ts)
    pops = np.array([cf.exp_population(0.2, 1e-3, float(t)) for t in ts])
    np.testing.assert_allclose(tr.beta**2, pops, atol=5e-10)
    assert np.all(tr.beta <= 0.0)
    assert np.all(np.diff(tr.beta1) <= 1e-15)  # source only empties


def test_callable_coupling_with_breakpoints_matches_schedule():
    p, params, sch = _exp_setup(r=0.2, ki=1e-3)

    def kappa_fn(t):
        return sch.kappa(t)

    kappa_fn.breakpoints = sch.breakpoints
    ts = np.linspace(0.0, 30.0, 1201)
    tr_sched = dyn.simulate_amplitudes(p, params, sch, 30.0, tol=1e-11, samples=ts)
    tr_call = dyn.simulate_amplitudes(p, params, kappa_fn, 30.0, tol=1e-11, samples=ts)
    np.testing.assert_allclose(tr_call.beta, tr_sched.beta, atol=1e-11)
    np.testing.assert_allclose(tr_call.cum_reflection, tr_sched.cum_reflection,
                               atol=1e-11)


def test_reflection_rate_interference():
    # a loaded memory with beta = -sqrt(r_in/kappa) cancels the output exactly
    assert dyn.reflection_rate(-math.sqrt(0.04), 1.0, 0.04) == pytest.approx(0.0, abs=1e-18)
    assert dyn.reflection_rate(0.0, 0.7, 0.04) == pytest.approx(0.04)
    out = dyn.reflection_rate(np.array([-0.2, 0.0]), np.array([1.0, 1.0]),
                              np.array([0.04, 0.04]))
    assert out[0] == pytest.approx(0.0, abs=1e-18)


# ---------------------------------------------------------------------------
# argument validation
# ---------------------------------------------------------------------------

def test_simulate_rejects_bad_arguments():
    p, params, sch = _exp_setup()
    with pytest.raises(DomainError):
        dyn.simulate_amplitudes(p, params, sch, 10.0, tol=1e-14)
    with pytest.raises(DomainError):
        dyn.simulate_amplitudes(p, params, sch, 10.0, tol=1e-5)
    with pytest.raises(DomainError):
        dyn.simulate_amplitudes(p, params, sch, -1.0)
    with pytest.raises(DomainError):
        dyn.simulate_amplitudes(p, params, sch, 10.0, beta0=0.5)
    with pytest.raises(DomainError):
        dyn.simulate_amplitudes(p, params, "not-a-coupling", 10.0)
    for bad in ([5.0, 1.0], [-1.0, 2.0], [0.0, 20.0], [3.0]):
        with pytest.raises(DomainError):
            dyn.simulate_amplitudes(p, params, sch, 10.0, samples=bad)


def test_residual_needs_three_samples():
    p, params, sch = _exp_setup()
    tr = dyn.simulate_amplitudes(p, params, sch, 10.0, samples=[0.0, 10.0])
    with pytest.raises(DomainError):
        dyn.energy_balance_residual(tr)


def test_trajectory_is_immutable():
    p, params, sch = _exp_setup()
    tr = dyn.simulate_amplitudes(p, params, sch, 5.0, samples=11)
    assert len(tr) == 11
    with pytest.raises(ValueError):
        tr.beta[0] = 1.0


# ---------------------------------------------------------------------------
# Lindblad oracle
# ---------------------------------------------------------------------------

def test_master_equation_state_invariants():
    p, params, sch = _exp_setup(r=0.2, ki=1e-3)
    states = dyn.simulate_master_equation(p, params, sch, 40.0, tol=1e-10,
                                          samples=201)
    assert len(states) == 201
    assert states[0].rho[1, 1] == pytest.approx(1.0)
    for dm in states[::10]:
        assert dm.trace == pytest.approx(1.0, abs=1e-10)
        assert dm.hermiticity_defect() <= 1e-12
        assert dm.min_eigenvalue() >= -1e-10


def test_master_equation_ground_state_collects_losses():
    p, params, sch = _exp_setup(r=0.2, ki=1e-3)
    ts = np.linspace(0.0, 40.0, 201)
    states = dyn.simulate_master_equation(p, params, sch, 40.0, tol=1e-10,
                                          samples=ts)
    tr = dyn.simulate_amplitudes(p, params, sch, 40.0, tol=1e-10, samples=ts)
    for i, dm in enumerate(states):
        lost = tr.cum_reflection[i] + tr.cum_intrinsic[i]
        assert float(np.real(dm.rho[0, 0])) == pytest.approx(lost, abs=1e-8)


def test_amplitudes_are_exact_reduction_of_master_equation():
    p, params, sch = _exp_setup(r=0.2, ki=1e-3)
    dev = dyn.verify_nonhermitian_reduction(p, params, sch, 40.0)
    assert dev <= 1e-8


def test_master_equation_rejects_bad_tol():
    p, params, sch = _exp_setup()
    with pytest.raises(DomainError):
        dyn.simulate_master_equation(p, params, sch, 10.0, tol=1e-15)
