"""Coefficient recovery from boundary flux: map pieces, gates, round trips."""

import math
import warnings

import numpy as np
import pytest

from subdiff.errors import AdmissibilityError, ConvergenceError, DomainError, GridMismatchError
from subdiff.forward import ProblemSpec
from subdiff.frackernel import TimeGrid
from subdiff.inverse import (
    InverseSpec,
    apply_L,
    compute_q0,
    estimate_CT,
    recover_q,
    synthesize_data,
    validate_theorem43,
)
from subdiff.profiles import Profile, constant
from subdiff.spectral import SpaceGrid, eigenvalue, eigenvalues


def sine_shape(sgrid, k=1):
    sh = math.sqrt(2.0) * np.sin(k * math.pi * sgrid.nodes / sgrid.length)
    sh[0] = sh[-1] = 0.0
    return sh


def const_mode_spec(n, q_of_t, m=32, K=8, T=0.5, c1=0.05):
    """Forward problem whose first mode sits at c1 for all time.

    Choosing f_1 = (lam_1^2 sigma + q) c1 balances the equation exactly, so
    the flux trace is constant and every node of the discrete solve is exact:
    recovery errors measured against it are pure iteration error.
    """
    tg, sg = TimeGrid(T, n), SpaceGrid(1.0, m)
    sigma = Profile(tg, 2.0 + np.sin(tg.nodes))
    qv = q_of_t(tg.nodes)
    lam1 = eigenvalue(1, 1.0)
    sh = sine_shape(sg)
    f = ((lam1 ** 2 * sigma.values + qv) * c1)[:, None] * sh[None, :]
    return ProblemSpec(sgrid=sg, tgrid=tg, rho=0.5, sigma=sigma,
                       q=Profile(tg, qv), f=f, phi=c1 * sh, K=K)


def smooth_mode_spec(n, T=0.5, c0=0.05, rho=0.5):
    """Single mode following c0 (1 + (t/T)^2): smooth flux, no start-up layer."""
    tg, sg = TimeGrid(T, n), SpaceGrid(1.0, 16)
    t = tg.nodes
    sigma = Profile(tg, 2.0 + np.sin(t))
    qv = np.full(n + 1, 0.3)
    lam1 = eigenvalue(1, 1.0)
    sh = sine_shape(sg)
    u1 = c0 * (1.0 + (t / T) ** 2)
    drho = 2.0 * c0 * t ** (2.0 - rho) / (T ** 2 * math.gamma(3.0 - rho))
    f = (drho + (lam1 ** 2 * sigma.values + qv) * u1)[:, None] * sh[None, :]
    return ProblemSpec(sgrid=sg, tgrid=tg, rho=rho, sigma=sigma,
                       q=Profile(tg, qv), f=f, phi=c0 * sh, K=4)


def bare_spec(n=64, m=16, K=4, phi1=None, T=1.0):
    """ProblemSpec without q, single-mode datum phi1 (default: flux 1 at x=0)."""
    tg, sg = TimeGrid(T, n), SpaceGrid(1.0, m)
    if phi1 is None:
        phi1 = 1.0 / (eigenvalue(1, 1.0) * math.sqrt(2.0))
    return ProblemSpec(sgrid=sg, tgrid=tg, rho=0.5, sigma=constant(tg, 1.0),
                       q=None, f=np.zeros((n + 1, m + 1)),
                       phi=phi1 * sine_shape(sg), K=K)


class TestInverseSpec:
    def test_rejects_spec_with_coefficient(self):
        spec = const_mode_spec(16, lambda t: np.full_like(t, 0.3))
        psi = constant(spec.tgrid, 1.0)
        with pytest.raises(DomainError):
            InverseSpec(spec=spec, psi=psi, psi0=0.5)

    def test_rejects_foreign_flux_grid(self):
        spec = bare_spec()
        with pytest.raises(GridMismatchError):
            InverseSpec(spec=spec, psi=constant(TimeGrid(2.0, 64), 1.0),
                        psi0=0.5)

    def test_rejects_nonpositive_floor(self):
        spec = bare_spec()
        with pytest.raises(AdmissibilityError):
            InverseSpec(spec=spec, psi=constant(spec.tgrid, 1.0), psi0=0.0)

    def test_rejects_flux_below_floor(self):
        spec = bare_spec()
        psi = Profile(spec.tgrid, 1.0 - 0.8 * spec.tgrid.nodes)
        with pytest.raises(AdmissibilityError):
            InverseSpec(spec=spec, psi=psi, psi0=0.5)

    def test_degenerate_flux_rejected_even_with_tiny_floor(self):
        spec = bare_spec(phi1=0.0)
        with pytest.raises(AdmissibilityError):
            InverseSpec(spec=spec, psi=constant(spec.tgrid, 0.0), psi0=1e-30)

    def test_warns_on_incompatible_start(self):
        spec = bare_spec(phi1=0.0)
        with pytest.warns(UserWarning, match="t=0"):
            InverseSpec(spec=spec, psi=constant(spec.tgrid, 1.0), psi0=0.5)

    def test_default_guess_is_clipped_window_midpoint(self):
        spec = bare_spec()  # sigma = 1: window (-pi^2, 0), midpoint < 0
        inv = InverseSpec(spec=spec, psi=constant(spec.tgrid, 1.0), psi0=0.5)
        assert np.all(inv.q_init.values == 0.0)

    def test_window_honours_declared_sigma_bounds(self):
        spec = bare_spec()
        tg = spec.tgrid
        wide = ProblemSpec(sgrid=spec.sgrid, tgrid=tg, rho=0.5,
                           sigma=Profile(tg, np.full(tg.n_steps + 1, 2.0),
                                         lower=0.5, upper=4.0),
                           q=None, f=spec.f, phi=spec.phi, K=spec.K)
        inv = InverseSpec(spec=wide, psi=constant(tg, 1.0), psi0=0.5)
        lo, hi = inv.q_window
        assert lo == pytest.approx(-0.5 * math.pi ** 2)
        assert hi == pytest.approx(3.5 * math.pi ** 2)


class TestComputeQ0:
    def test_constant_flux_zero_sourcefree_estimate(self):
        spec = bare_spec()
        inv = InverseSpec(spec=spec, psi=constant(spec.tgrid, 1.0), psi0=0.5)
        assert np.max(np.abs(compute_q0(inv).values)) == 0.0

    def test_linear_flux_closed_form(self):
        # D^0.5(1+t) = t^0.5/Gamma(1.5) and the L1 rule is exact on linears
        spec = bare_spec(n=512)
        t = spec.tgrid.nodes
        inv = InverseSpec(spec=spec, psi=Profile(spec.tgrid, 1.0 + t),
                          psi0=1.0)
        q0 = compute_q0(inv).values
        want = -np.sqrt(t[1:]) / (math.gamma(1.5) * (1.0 + t[1:]))
        assert np.max(np.abs(q0[1:] - want)) < 1e-12

    def test_first_node_is_quadratic_extrapolation(self):
        spec = bare_spec(n=512)
        inv = InverseSpec(spec=spec,
                          psi=Profile(spec.tgrid, 1.0 + spec.tgrid.nodes),
                          psi0=1.0)
        q0 = compute_q0(inv).values
        assert q0[0] == pytest.approx(3.0 * (q0[1] - q0[2]) + q0[3])

    def test_floor_violation_raises(self):
        spec = bare_spec()
        inv = InverseSpec(spec=spec, psi=constant(spec.tgrid, 1.0), psi0=0.5)
        inv.psi0 = 2.0  # tightened after the fact
        with pytest.raises(DomainError):
            compute_q0(inv)


class TestApplyL:
    def test_fixed_point_property(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            moved = apply_L(inv.q_true, inv).values
        assert np.max(np.abs(moved - inv.q_true.values)) < 1e-5

    def test_single_sweep_contracts_toward_truth(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            d0 = np.max(np.abs(inv.q_init.values - inv.q_true.values))
            d1 = np.max(np.abs(apply_L(inv.q_init, inv).values
                               - inv.q_true.values))
        assert d1 < d0

    def test_foreign_grid_guess_rejected(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
        with pytest.raises(GridMismatchError):
            apply_L(constant(TimeGrid(0.5, 64), 0.3), inv)


class TestEstimateCT:
    def test_zero_data_zero_estimate(self):
        tg, sg = TimeGrid(1.0, 8), SpaceGrid(1.0, 8)
        spec = ProblemSpec(sgrid=sg, tgrid=tg, rho=0.5,
                           sigma=constant(tg, 1.0), q=None,
                           f=np.zeros((9, 9)), phi=np.zeros(9), K=2)
        with pytest.warns(UserWarning):  # flux inconsistent with zero datum
            inv = InverseSpec(spec=spec, psi=constant(tg, 2.0), psi0=1.0)
        assert estimate_CT(inv) == 0.0

    def test_doubling_floor_halves_estimate(self):
        spec = bare_spec()
        psi = constant(spec.tgrid, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = estimate_CT(InverseSpec(spec=spec, psi=psi, psi0=0.25))
            b = estimate_CT(InverseSpec(spec=spec, psi=psi, psi0=0.5))
        assert a == pytest.approx(2.0 * b)
        assert a > 0.0

    def test_matches_direct_formula(self):
        spec = const_mode_spec(64, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            got = estimate_CT(inv)
        lam = eigenvalues(inv.spec.K, 1.0)
        s_phi = float(np.sum(lam ** 3 * np.abs(inv.phi_k)))
        s_f = float(np.max((lam ** 3) @ np.abs(inv.f_k)))
        head = inv.spec.t_final ** 0.5 / math.gamma(1.5)
        want = (inv.spec.sigma.vmax * head / (math.sqrt(6.0) * inv.psi0)
                * (head * s_f + s_phi))
        assert got == pytest.approx(want, rel=1e-12)


class TestConditionReport:
    def test_compatible_start_zero_defect(self):
        spec = bare_spec()  # datum tuned so phi_x(0) = 1 = psi(0)
        inv = InverseSpec(spec=spec, psi=constant(spec.tgrid, 1.0), psi0=0.5)
        rep = validate_theorem43(inv)
        assert rep.cond2_compatible
        assert rep.compat_defect < 1e-12
        assert rep.cond1_flux_floor

    def test_constant_sigma_fails_data_window(self):
        # M_sigma = m_sigma makes the strict upper bound negative
        spec = const_mode_spec(64, lambda t: np.full_like(t, 0.3))
        flat = ProblemSpec(sgrid=spec.sgrid, tgrid=spec.tgrid, rho=0.5,
                           sigma=constant(spec.tgrid, 2.0), q=spec.q,
                           f=spec.f, phi=spec.phi, K=spec.K)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(flat)
        rep = validate_theorem43(inv)
        assert rep.cond3_rhs < 0.0
        assert not rep.cond3_window
        assert not rep.all_passed

    def test_mixed_sign_modes_pass_data_window(self):
        # a small negative second mode cancels most of the first mode's
        # diffusion term in f_x(0,t), pulling T^rho q0 inside the window
        n, m = 256, 32
        tg, sg = TimeGrid(1.0, n), SpaceGrid(1.0, m)
        sigma = Profile(tg, 2.0 + 1.5 * np.sin(2.0 * math.pi * tg.nodes))
        qv = np.full(n + 1, 0.1)
        lam = eigenvalues(2, 1.0)
        c1, c2 = 0.05, -0.115 * 0.05
        f = (((lam[0] ** 2 * sigma.values + qv) * c1)[:, None]
             * sine_shape(sg)[None, :]
             + ((lam[1] ** 2 * sigma.values + qv) * c2)[:, None]
             * sine_shape(sg, 2)[None, :])
        phi = c1 * sine_shape(sg) + c2 * sine_shape(sg, 2)
        spec = ProblemSpec(sgrid=sg, tgrid=tg, rho=0.5, sigma=sigma,
                           q=Profile(tg, qv), f=f, phi=phi, K=8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
        rep = validate_theorem43(inv)
        assert rep.cond1_flux_floor and rep.cond2_compatible
        assert rep.cond3_window
        assert 0.0 <= rep.cond3_low and rep.cond3_high < rep.cond3_rhs


class TestRecoverQ:
    def test_round_trip_constant_coefficient(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            res = recover_q(inv, tol=1e-6, max_iter=300)
        assert res.recovery_error < 1e-3
        assert res.measured_ratio < 1.0
        assert res.clamp_count == 0
        assert res.flux_defect < 1e-6

    def test_round_trip_time_varying_coefficient(self):
        spec = const_mode_spec(128, lambda t: 0.2 + 0.1 * t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            res = recover_q(inv, tol=1e-6, max_iter=300)
        assert res.recovery_error < 5e-3

    def test_null_coefficient_recovered(self):
        spec = const_mode_spec(128, lambda t: np.zeros_like(t))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            inv.q_init = constant(inv.spec.tgrid, 1.0)  # force real motion
            res = recover_q(inv, tol=1e-6, max_iter=300)
        assert res.recovery_error < 1e-4

    def test_updates_decay_geometrically(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            res = recover_q(inv, tol=1e-6, max_iter=300)
        ups = res.iterates
        assert len(ups) > 5
        for a, b in zip(ups, ups[1:]):
            assert b <= (res.measured_ratio + 0.05) * a

    def test_iterate_traces_within_data_bound(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            res = recover_q(inv, tol=1e-6, max_iter=300)
        assert max(res.trace_sums) <= res.trace_bound + 1e-10

    def test_idempotent_at_truth(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            inv.q_init = inv.q_true
            res = recover_q(inv, tol=1e-5, max_iter=50)
        assert len(res.iterates) <= 2

    def test_nonconvergence_carries_diagnostics(self):
        spec = const_mode_spec(128, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
            with pytest.raises(ConvergenceError) as exc:
                recover_q(inv, tol=1e-12, max_iter=3)
        assert exc.value.iterations == 3
        assert exc.value.last_update > 0.0
        assert 0.0 < exc.value.contraction_estimate < 1.0

    def test_fixed_point_defect_shrinks_under_refinement(self):
        defects = []
        for n in (64, 128, 256):
            spec = smooth_mode_spec(n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                inv = synthesize_data(spec)
                moved = apply_L(inv.q_true, inv).values
            defects.append(np.max(np.abs(moved - inv.q_true.values)))
        assert defects[1] < 0.7 * defects[0]
        assert defects[2] < 0.7 * defects[1]


class TestSynthesizeData:
    def test_requires_true_coefficient(self):
        with pytest.raises(DomainError):
            synthesize_data(bare_spec())

    def test_rejects_negative_noise(self):
        spec = const_mode_spec(64, lambda t: np.full_like(t, 0.3))
        with pytest.raises(DomainError):
            synthesize_data(spec, noise_level=-0.1)

    def test_same_seed_bitwise_identical(self):
        spec = const_mode_spec(64, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = synthesize_data(spec, 0.01, seed=42).psi.values
            b = synthesize_data(spec, 0.01, seed=42).psi.values
            c = synthesize_data(spec, 0.01, seed=43).psi.values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_floor_is_flux_minimum_and_truth_recorded(self):
        spec = const_mode_spec(64, lambda t: np.full_like(t, 0.3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inv = synthesize_data(spec)
        assert inv.psi0 == pytest.approx(float(inv.psi.values.min()))
        assert inv.q_true is spec.q
        assert inv.spec.q is None

    def test_violent_noise_rejected(self):
        spec = const_mode_spec(64, lambda t: np.full_like(t, 0.3))
        with pytest.raises(AdmissibilityError):
            synthesize_data(spec, noise_level=2.0, seed=0)
