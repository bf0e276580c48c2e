import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from szilardlab.errors import ComputationError, CutoffError, DomainError, ValidationError
from szilardlab.switch import (DensityMatrix, SwitchParams, apply_lindblad, biased_gibbs,
                               build_hamiltonian, computation_cost, effective_temperature,
                               energy, evolve, evolve_series, lindblad_generator, min_work,
                               mixture, operators, pointer_error_analytic, pointer_error_numeric,
                               polaron_transform, resolve_cutoff, stationarity_residual,
                               trace_leak, tunneling_rate, uhlmann_fidelity)
from szilardlab.units import K_B_SI


def random_state(n, rng, rank=None):
    dim = 2 * n
    x = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = x @ x.conj().T
    return DensityMatrix((2, n), rho / np.trace(rho).real)


class TestParams:
    @pytest.mark.parametrize("field, kwargs", [
        ("omega0", dict(omega0=0, g=1, T=1, gamma=0.1)),
        ("g", dict(omega0=1, g=-1, T=1, gamma=0.1)),
        ("T", dict(omega0=1, g=1, T=-1, gamma=0.1)),
        ("gamma", dict(omega0=1, g=1, T=1, gamma=0)),
        ("Gamma_dephase", dict(omega0=1, g=1, T=1, gamma=0.1, Gamma_dephase=-1)),
        ("Gamma1", dict(omega0=1, g=1, T=1, gamma=0.1, Gamma1=-1)),
        ("fock_cutoff", dict(omega0=1, g=1, T=1, gamma=0.1, fock_cutoff=1.5)),
    ])
    def test_invalid(self, field, kwargs):
        with pytest.raises(ValidationError, match=field):
            SwitchParams(**kwargs)

    def test_auto_cutoff_meets_leak(self):
        p = SwitchParams(1.0, 1.0, 1.0, 0.1)
        n = resolve_cutoff(p)
        assert n >= 25
        assert trace_leak(p) < 1e-12

    def test_density_matrix_checks(self):
        with pytest.raises(ValidationError):
            DensityMatrix((2, 2), np.eye(4))
        with pytest.raises(ValidationError):
            DensityMatrix((2, 2), np.diag([1.5, -0.5, 0, 0]))
        with pytest.raises(ValidationError):
            DensityMatrix((2, 3), np.eye(4) / 4)


class TestHamiltonian:
    def test_uncoupled_spectrum(self):
        h = build_hamiltonian(SwitchParams(2.0, 0.0, 0.0, 0.1, fock_cutoff=20))
        ev = np.linalg.eigvalsh(h)
        np.testing.assert_allclose(ev, np.repeat(2.0 * np.arange(20), 2), atol=1e-12)

    @pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
    def test_ground_energy(self, g):
        p = SwitchParams(1.3, g, 0.0, 0.1, fock_cutoff=60)
        ev = np.linalg.eigvalsh(build_hamiltonian(p))
        exact = -1.3 * g**2
        assert ev[0] == pytest.approx(exact, rel=1e-6)
        assert ev[1] == pytest.approx(exact, rel=1e-6)
        np.testing.assert_allclose(ev[2:10], np.repeat(exact + 1.3 * np.arange(1, 5), 2), rtol=1e-6, atol=1e-9)

    def test_polaron_transform(self):
        p = SwitchParams(1.0, 1.5, 0.0, 0.1)
        h = polaron_transform(p, 40)
        low = np.r_[0:10, 40:50]
        target = np.diag(np.concatenate([np.arange(10), np.arange(10)]) - 1.5**2)
        np.testing.assert_allclose(h[np.ix_(low, low)], target, atol=1e-8)

    def test_cutoff_too_small(self):
        with pytest.raises(ValidationError, match="fock_cutoff"):
            build_hamiltonian(SwitchParams(1.0, 2.0, 0.0, 0.1, fock_cutoff=20))


class TestGenerator:
    def test_trace_preserving_random(self):
        rng = np.random.default_rng(4)
        p = SwitchParams(1.0, 0.8, 0.7, 0.3, 0.2, fock_cutoff=24)
        for _ in range(5):
            rho = random_state(24, rng)
            assert abs(np.trace(apply_lindblad(p, rho))) < 1e-12

    def test_superoperator_matches_matrix_form(self):
        rng = np.random.default_rng(5)
        p = SwitchParams(1.0, 0.8, 0.7, 0.3, 0.2, fock_cutoff=25)
        rho = random_state(25, rng).data
        vec = lindblad_generator(p) @ rho.reshape(-1, order="F")
        np.testing.assert_allclose(vec.reshape(50, 50, order="F"), apply_lindblad(p, rho), atol=1e-10)

    @pytest.mark.parametrize("g, T", [(0.5, 0.5), (1, 1), (2, 2), (2, 0.5)])
    def test_biased_gibbs_stationary(self, g, T):
        p = SwitchParams(1.0, g, T, 0.1, 0.05)
        for sign in (1, -1):
            assert stationarity_residual(p, biased_gibbs(p, sign)) < 1e-8

    @pytest.mark.parametrize("g", [0.5, 1.5])
    def test_zero_temperature_coherent_states(self, g):
        p = SwitchParams(1.0, g, 0.0, 0.2)
        for sign in (1, -1):
            rho = biased_gibbs(p, sign)
            assert rho.purity() == pytest.approx(1.0, abs=1e-10)
            assert stationarity_residual(p, rho) < 1e-10

    def test_superposition_not_stationary(self):
        p = SwitchParams(1.0, 1.0, 0.5, 0.1, 0.05)
        rho_p, rho_m = biased_gibbs(p, 1), biased_gibbs(p, -1)
        assert stationarity_residual(p, mixture([0.3, 0.7], [rho_p, rho_m])) < 1e-8
        n = rho_p.fock_cutoff
        psi = np.zeros(2 * n, dtype=complex)
        psi[0], psi[n] = 1 / math.sqrt(2), 1 / math.sqrt(2)
        cat = DensityMatrix((2, n), np.outer(psi, psi.conj()))
        assert stationarity_residual(p, cat) > 1e-2


class TestBiasedGibbs:
    def test_zero_coupling_is_thermal(self):
        p = SwitchParams(1.0, 0.0, 1.0, 0.1)
        rho = biased_gibbs(p, -1)
        n = rho.fock_cutoff
        q = math.exp(-1.0)
        np.testing.assert_allclose(np.diag(rho.block(1, 1)).real, (1 - q) * q ** np.arange(n), atol=1e-12)
        assert np.abs(rho.block(0, 0)).max() == 0

    @pytest.mark.parametrize("sign", [1, -1])
    @pytest.mark.parametrize("T", [0.0, 0.5, 2.0])
    def test_displacement_and_occupancy(self, sign, T):
        p = SwitchParams(1.0, 1.2, T, 0.1)
        rho = biased_gibbs(p, sign)
        ops = operators(p, rho.fock_cutoff)
        mean_a = rho.expectation(ops.a)
        assert mean_a == pytest.approx(sign * 1.2, abs=1e-10)
        shifted = ops.a - sign * 1.2 * np.eye(ops.a.shape[0])
        nbar = rho.expectation(shifted.conj().T @ shifted).real
        assert nbar == pytest.approx(p.occupation, abs=1e-8)

    def test_explicit_cutoff_leak_error(self):
        with pytest.raises(CutoffError):
            biased_gibbs(SwitchParams(1.0, 2.0, 5.0, 0.1, fock_cutoff=40), 1)

    def test_sign_validation(self):
        with pytest.raises(ValidationError):
            biased_gibbs(SwitchParams(1.0, 1.0, 1.0, 0.1), 0)


class TestEvolution:
    def test_mixture_invariant(self):
        p = SwitchParams(1.0, 0.7, 0.6, 0.5, 0.1)
        rho0 = mixture([0.4, 0.6], [biased_gibbs(p, 1), biased_gibbs(p, -1)])
        rho = evolve(rho0, p, 10 / p.gamma)
        assert rho.trace_distance(rho0) < 1e-6

    def test_relaxation_to_biased_gibbs(self):
        p = SwitchParams(1.0, 0.7, 0.5, 1.0, 0.0)
        n = resolve_cutoff(p)
        start = np.zeros((2 * n, 2 * n), dtype=complex)
        start[0, 0] = 1.0
        rho = evolve(DensityMatrix((2, n), start), p, 60.0)
        assert rho.trace_distance(biased_gibbs(p, 1)) < 1e-6

    def test_coherence_decay_rate(self):
        dephase = 0.3
        p = SwitchParams(1.0, 0.5, 0.0, 0.2, dephase, fock_cutoff=25)
        n = 25
        psi = np.zeros(2 * n, dtype=complex)
        psi[0] = psi[n] = 1 / math.sqrt(2)
        times = np.linspace(0, 4, 9)
        states = evolve_series(DensityMatrix((2, n), np.outer(psi, psi)), p, times)
        norms = np.array([s.coherence_norm() for s in states])
        assert np.all(np.diff(norms) < 0)
        rate = -np.polyfit(times, np.log(norms), 1)[0]
        assert rate >= 2 * dephase - 1e-9
        # every interval decays at least at the dephasing rate
        assert np.all(norms[1:] / norms[:-1] <= np.exp(-2 * dephase * np.diff(times)) * (1 + 1e-9))

    def test_unitary_limit_conserves_purity(self):
        p = SwitchParams(1.0, 0.5, 0.0, 1e-12, 0.0, fock_cutoff=25)
        psi = np.zeros(50, dtype=complex)
        psi[[0, 1, 26]] = [0.6, 0.48j, 0.64]
        rho0 = DensityMatrix((2, 25), np.outer(psi, psi.conj()))
        rho = evolve(rho0, p, 5.0)
        assert rho.purity() == pytest.approx(1.0, abs=1e-8)

    def test_expm_matches_rk(self):
        p = SwitchParams(1.0, 0.5, 0.8, 0.4, 0.2, fock_cutoff=25)
        rho0 = random_state(25, np.random.default_rng(8))
        a = evolve(rho0, p, 2.0, method="rk")
        b = evolve(rho0, p, 2.0, method="expm")
        assert a.trace_distance(b) < 1e-8

    def test_positivity_and_trace(self):
        p = SwitchParams(1.0, 1.0, 1.0, 0.3, 0.1, fock_cutoff=25)
        rho0 = random_state(25, np.random.default_rng(1), rank=2)
        for rho in evolve_series(rho0, p, [0.5, 1.0, 3.0]):
            assert np.linalg.eigvalsh(rho.data)[0] > -1e-10
            assert rho.eigenvalues().sum() == pytest.approx(1.0, abs=1e-9)

    def test_energy_of_ground_state(self):
        p = SwitchParams(1.0, 1.0, 0.0, 0.1)
        assert energy(biased_gibbs(p, 1), p) == pytest.approx(-1.0, abs=1e-10)

    def test_bad_inputs(self):
        p = SwitchParams(1.0, 0.5, 0.0, 0.1, fock_cutoff=25)
        rho = biased_gibbs(p, 1)
        with pytest.raises(DomainError):
            evolve(rho, p, -1.0)
        with pytest.raises(ValidationError):
            evolve(rho, SwitchParams(1.0, 0.5, 0.0, 0.1, fock_cutoff=30), 1.0)
        with pytest.raises(ValidationError):
            evolve(rho, p, 1.0, method="euler")


class TestPointerError:
    def test_zero_temperature_limit(self):
        assert pointer_error_analytic(SwitchParams(1.0, 0.7, 0.0, 0.1)).epsilon == pytest.approx(math.exp(-4 * 0.49))

    def test_high_temperature_limit(self):
        p = SwitchParams(1.0, 0.5, 1e4, 0.1)
        pe = pointer_error_analytic(p)
        assert pe.epsilon == pytest.approx(math.exp(-2 * 0.25 / 1e4), rel=1e-12)
        assert pe.theta == pytest.approx(1e4, rel=1e-8)

    def test_direct_value(self):
        pe = pointer_error_analytic(SwitchParams(1.0, 1.0, 1.0, 0.1))
        assert pe.epsilon == pytest.approx(math.exp(-4 * math.tanh(0.5)), rel=1e-14)
        assert pointer_error_numeric(SwitchParams(1.0, 1.0, 1.0, 0.1)) == pytest.approx(pe.epsilon, rel=1e-8)

    @settings(max_examples=60)
    @given(st.floats(0.01, 5), st.floats(0, 50), st.floats(0.1, 10))
    def test_closed_forms_identical(self, g, T, w0):
        pe = pointer_error_analytic(SwitchParams(w0, g, T, 0.1))
        assert pe.epsilon == pytest.approx(pe.epsilon_boltzmann, rel=1e-12)

    def test_zero_coupling_numeric(self):
        assert pointer_error_numeric(SwitchParams(1.0, 0.0, 1.0, 0.1)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
    def test_fidelity_convention_audit(self, g):
        p = SwitchParams(1.0, g, 0.0, 0.1)
        root = pointer_error_numeric(p, convention="root")
        assert root == pytest.approx(math.exp(-2 * g**2), rel=1e-9)
        assert pointer_error_numeric(p) == pytest.approx(pointer_error_analytic(p).epsilon, rel=1e-9)
        # the displacement-2g reading would predict a different value
        assert abs(pointer_error_numeric(p) - math.exp(-16 * g**2)) > 0.1 * pointer_error_numeric(p)

    @pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("x", [0.2, 1.0, 5.0])
    def test_numeric_matches_analytic(self, g, x):
        p = SwitchParams(1.0, g, 1 / x, 0.1)
        assert pointer_error_numeric(p) == pytest.approx(pointer_error_analytic(p).epsilon, rel=1e-3)

    def test_explicit_cutoff_nonconvergence(self):
        with pytest.raises(ComputationError):
            pointer_error_numeric(SwitchParams(1.0, 2.0, 5.0, 0.1, fock_cutoff=30))

    def test_generic_fidelity_agrees(self):
        p = SwitchParams(1.0, 1.0, 0.7, 0.1)
        a, b = biased_gibbs(p, 1), biased_gibbs(p, -1)
        f = uhlmann_fidelity(a.oscillator_marginal(), b.oscillator_marginal())
        assert f == pytest.approx(pointer_error_numeric(p, convention="root"), rel=1e-6)
        assert uhlmann_fidelity(a, a) == pytest.approx(1.0, abs=1e-6)
        assert uhlmann_fidelity(a, b) == pytest.approx(0.0, abs=1e-6)


class TestRatesAndWork:
    def test_effective_temperature(self):
        assert effective_temperature(2.0, 0.0) == 1.0
        assert effective_temperature(1.0, 1.0) == pytest.approx(1 / math.expm1(1) + 0.5)
        assert effective_temperature(1.0, 1e5) == pytest.approx(1e5, rel=1e-9)

    def test_tunneling_rate(self):
        assert tunneling_rate(SwitchParams(1.0, 0.0, 1.0, 0.1, Gamma1=0.3)) == 0.3
        p = SwitchParams(1.0, 2.0, 0.0, 0.1, Gamma1=0.3)
        assert tunneling_rate(p) == pytest.approx(0.3 * pointer_error_analytic(p).epsilon, rel=1e-12)
        assert tunneling_rate(p) == pytest.approx(0.3 * math.exp(-16), rel=1e-12)
        log1 = math.log(tunneling_rate(SwitchParams(1.0, 1.0, 0.8, 0.1, Gamma1=1.0)))
        log2 = math.log(tunneling_rate(SwitchParams(1.0, 2.0, 0.8, 0.1, Gamma1=1.0)))
        assert log2 == pytest.approx(4 * log1, rel=1e-12)

    def test_min_work(self):
        assert min_work(1 / math.e, 2.5) == pytest.approx(2.5)
        assert min_work(0.5, 300, units="si") == pytest.approx(K_B_SI * 300 * math.log(2), rel=1e-12)
        assert min_work(0.5, 300, units="si") == pytest.approx(2.87e-21, rel=2e-3)
        for bad in (0.0, 1.0, 1.5):
            with pytest.raises(DomainError):
                min_work(bad, 1.0)
        with pytest.raises(DomainError):
            min_work(0.5, 0.0)

    @settings(max_examples=60)
    @given(st.floats(0.05, 3), st.floats(0, 20), st.floats(0.2, 5))
    def test_min_work_loop(self, g, T, w0):
        pe = pointer_error_analytic(SwitchParams(w0, g, T, 0.1))
        if 0 < pe.epsilon < 1:
            assert min_work(pe.epsilon, pe.theta) == pytest.approx(2 * w0 * g**2, rel=1e-9)

    def test_computation_cost_figures(self):
        cost = computation_cost(1e21, 0.01, 0.01, 300.0, units="si")
        assert 1e2 <= cost.work <= 4e2
        assert 2 <= cost.landauer <= 4

    def test_computation_cost_unit_case(self):
        cost = computation_cost(1, 1 / math.e, 1 / math.e, 1.5)
        assert cost.work == pytest.approx(3.0)

    @given(st.floats(1, 1e30), st.floats(1.01, 100))
    def test_cost_ratio_monotone(self, n, factor):
        a = computation_cost(n, 0.1, 0.2, 1.0)
        b = computation_cost(n * factor, 0.1, 0.2, 1.0)
        assert a.ratio == pytest.approx((math.log(n) + math.log(10) + math.log(5)) / math.log(2))
        assert b.ratio > a.ratio

    @pytest.mark.parametrize("args", [(0.5, 0.1, 0.1, 1), (10, 0, 0.1, 1), (10, 0.1, 1.0, 1), (10, 0.1, 0.1, 0)])
    def test_computation_cost_domain(self, args):
        with pytest.raises(DomainError):
            computation_cost(*args)
