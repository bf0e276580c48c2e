import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from szilardlab.bath import (BathSpec, ModeSet, coherent_overlap, discretize,
                             displacement_norm_sq, fit_ir_scaling, ground_energy,
                             omega_min_from_size)
from szilardlab.errors import DomainError, ValidationError


def power_integral(p, lo, hi):
    """Closed-form integral of w^p over [lo, hi]."""
    if p == -1:
        return math.log(hi / lo)
    return (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)


class TestDiscretize:
    def test_single_flat_cell(self):
        modes = discretize(BathSpec(kappa=0, omega_min=1, omega_max=2, n_modes=1))
        assert modes.omegas[0] == pytest.approx(math.sqrt(2))
        assert modes.couplings[0] ** 2 == pytest.approx(1.0)

    def test_quadrature_amplitude_convention(self):
        spec = BathSpec(kappa=1, omega_min=0.01, omega_max=10, n_modes=400, convention="amplitude")
        modes = discretize(spec)
        exact = (10**3 - 0.01**3) / 3
        assert abs(np.sum(modes.couplings**2) / exact - 1) < 1e-6

    @pytest.mark.parametrize("kappa", [-2, -1, -0.5, 0, 0.4, 1])
    @pytest.mark.parametrize("convention", ["spectral", "amplitude"])
    def test_quadrature_consistency(self, kappa, convention):
        spec = BathSpec(kappa, 1e-3, 5.0, amplitude=0.7, n_modes=50, convention=convention)
        modes = discretize(spec)
        exact = 0.49 * power_integral(spec.power, 1e-3, 5.0)
        assert abs(np.sum(modes.couplings**2) / exact - 1) < 1e-6

    def test_modes_inside_band_and_ascending(self):
        spec = BathSpec(-0.7, 1e-4, 3.0, n_modes=97)
        modes = discretize(spec)
        assert len(modes) == 97
        assert modes.omegas[0] >= spec.omega_min and modes.omegas[-1] <= spec.omega_max
        assert np.all(np.diff(modes.omegas) > 0)
        assert np.all(modes.couplings >= 0)

    def test_log_spacing(self):
        modes = discretize(BathSpec(0, 1e-3, 1e3, n_modes=60))
        ratios = modes.omegas[1:] / modes.omegas[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    @pytest.mark.parametrize("field, kwargs", [
        ("omega_min", dict(kappa=0, omega_min=0.0, omega_max=1)),
        ("omega_min", dict(kappa=0, omega_min=-1.0, omega_max=1)),
        ("omega_max", dict(kappa=0, omega_min=2.0, omega_max=1)),
        ("kappa", dict(kappa=1.5, omega_min=0.1, omega_max=1)),
        ("kappa", dict(kappa=-2.5, omega_min=0.1, omega_max=1)),
        ("amplitude", dict(kappa=0, omega_min=0.1, omega_max=1, amplitude=0)),
        ("n_modes", dict(kappa=0, omega_min=0.1, omega_max=1, n_modes=0)),
        ("convention", dict(kappa=0, omega_min=0.1, omega_max=1, convention="ohmic")),
    ])
    def test_invalid_spec_names_field(self, field, kwargs):
        with pytest.raises(ValidationError, match=field):
            BathSpec(**kwargs)

    def test_csv_roundtrip(self, tmp_path):
        modes = discretize(BathSpec(-1, 1e-3, 1, n_modes=17))
        modes.to_csv(tmp_path / "modes.csv")
        assert (tmp_path / "modes.csv").read_text().splitlines()[0] == "omega,f"
        back = ModeSet.from_csv(tmp_path / "modes.csv")
        np.testing.assert_array_equal(back.omegas, modes.omegas)
        np.testing.assert_array_equal(back.couplings, modes.couplings)

    def test_modeset_rejects_mismatch(self):
        with pytest.raises(ValidationError):
            ModeSet(np.array([1.0, 2.0]), np.array([1.0]))
        with pytest.raises(ValidationError):
            ModeSet(np.array([1.0]), np.array([-1.0]))


class TestGroundEnergy:
    def test_single_mode(self):
        assert ground_energy(ModeSet.single(1.0, 1.0), 1.0) == -1.0

    def test_zero_coupling(self):
        assert ground_energy(discretize(BathSpec(-1, 1e-3, 1)), 0.0) == 0.0

    def test_subohmic_amplitude_convention(self):
        modes = discretize(BathSpec(-0.5, 1e-4, 1, n_modes=800, convention="amplitude"))
        exact = -(1 / 1e-4 - 1 / 1.0)
        assert ground_energy(modes, 1.0) == pytest.approx(exact, rel=1e-3)

    def test_subohmic_spectral_convention(self):
        modes = discretize(BathSpec(-0.5, 1e-4, 1, n_modes=800))
        exact = -power_integral(-1.5, 1e-4, 1.0)
        assert ground_energy(modes, 1.0) == pytest.approx(exact, rel=1e-4)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError):
            ground_energy(ModeSet.single(1, 1), -0.1)

    @given(st.floats(0.01, 10), st.floats(0.01, 10))
    def test_strictly_decreasing_in_lambda(self, lam1, dlam):
        modes = ModeSet(np.array([0.5, 1.0, 3.0]), np.array([0.2, 1.0, 0.4]))
        assert ground_energy(modes, lam1 + dlam) < ground_energy(modes, lam1) <= 0


class TestOverlap:
    def test_zero_coupling(self):
        assert coherent_overlap(ModeSet.single(1, 1), 0.0) == 1.0

    def test_single_mode(self):
        assert coherent_overlap(ModeSet.single(2.0, 1.0), 1.0) == pytest.approx(math.exp(-0.5))

    @given(st.floats(0.01, 3), st.floats(0.01, 3))
    def test_monotone_decreasing(self, lam1, dlam):
        modes = ModeSet(np.array([0.5, 1.0]), np.array([0.3, 0.2]))
        assert coherent_overlap(modes, lam1 + dlam) < coherent_overlap(modes, lam1)

    def test_ohmic_amplitude_converges(self):
        # |f|^2/w^2 = w^0 : integrable at 0, overlap tends to exp(-2 * omega_max)
        values = [coherent_overlap(discretize(BathSpec(1, w, 1.0, n_modes=400, convention="amplitude")), 1.0)
                  for w in (1e-2, 1e-4, 1e-6)]
        limit = math.exp(-2.0)
        assert values[-1] == pytest.approx(limit, rel=1e-5)
        assert values[-1] > 0.1

    @pytest.mark.parametrize("convention", ["amplitude", "spectral"])
    def test_kappa_04_diverges(self, convention):
        spec = BathSpec(0.4, 1e-2, 1.0, n_modes=2000, convention=convention)
        p = spec.power - 2
        logs = []
        for w in (1e-2, 1e-4, 1e-6, 1e-8):
            modes = discretize(spec.with_omega_min(w))
            logs.append(-2 * displacement_norm_sq(modes))
            assert logs[-1] == pytest.approx(-2 * power_integral(p, w, 1.0), rel=1e-3)
        assert all(b < a for a, b in zip(logs, logs[1:]))
        assert coherent_overlap(modes, 1.0) < 1e-6

    def test_spectral_ohmic_is_log_divergent(self):
        # spectral kappa = 1: |f|^2/w^2 = 1/w, the sum grows like log(1/omega_min)
        norms = [displacement_norm_sq(discretize(BathSpec(1, w, 1.0, n_modes=2000))) for w in (1e-2, 1e-4, 1e-6)]
        assert norms[1] - norms[0] == pytest.approx(math.log(100), rel=1e-4)
        assert norms[2] - norms[1] == pytest.approx(math.log(100), rel=1e-4)

    @pytest.mark.parametrize("kappa", [-1, -0.5, 0.4, 1])
    def test_disjointness_proxy(self, kappa):
        modes = discretize(BathSpec(kappa, 1e-9, 1.0, n_modes=400))
        assert coherent_overlap(modes, 1.0) < 1e-6


@pytest.mark.parametrize("kappa", [-1, -0.5, 0, 0.5, 1])
@pytest.mark.parametrize("convention", ["spectral", "amplitude"])
def test_refinement_convergence(kappa, convention):
    spec = BathSpec(kappa, 1e-3, 1.0, n_modes=600, convention=convention)
    coarse, fine = discretize(spec), discretize(BathSpec(kappa, 1e-3, 1.0, n_modes=1200, convention=convention))
    e1, e2 = ground_energy(coarse, 1.0), ground_energy(fine, 1.0)
    assert abs(e2 - e1) / abs(e2) < 1e-4
    o1, o2 = displacement_norm_sq(coarse), displacement_norm_sq(fine)
    assert abs(o2 - o1) / abs(o2) < 1e-4


class TestIRScaling:
    @pytest.mark.parametrize("kappa", [-1.0, -0.5])
    def test_fitted_exponent(self, kappa):
        spec = BathSpec(kappa, 1e-3, 1.0, n_modes=400)
        slope = fit_ir_scaling(spec, np.geomspace(1e-1, 1e-5, 5))
        assert slope == pytest.approx(kappa, abs=0.05)

    def test_amplitude_convention_doubles_exponent(self):
        spec = BathSpec(-0.5, 1e-3, 1.0, n_modes=400, convention="amplitude")
        assert fit_ir_scaling(spec, np.geomspace(1e-3, 1e-7, 5)) == pytest.approx(2 * spec.kappa, abs=0.05)
        assert spec.ir_exponent() == -1.0

    def test_amplitude_independent(self):
        a = fit_ir_scaling(BathSpec(-1, 1e-3, 1.0, amplitude=1.0), np.geomspace(1e-2, 1e-6, 6))
        b = fit_ir_scaling(BathSpec(-1, 1e-3, 1.0, amplitude=37.0), np.geomspace(1e-2, 1e-6, 6))
        assert a == pytest.approx(b, abs=1e-12)

    def test_positive_kappa_is_domain_error(self):
        with pytest.raises(DomainError):
            fit_ir_scaling(BathSpec(0.5, 1e-3, 1.0), np.geomspace(1e-1, 1e-5, 5))

    def test_insufficient_points(self):
        spec = BathSpec(-1, 1e-3, 1.0)
        with pytest.raises(ValidationError):
            fit_ir_scaling(spec, [1e-1, 1e-2, 1e-3, 1e-4])
        with pytest.raises(ValidationError):
            fit_ir_scaling(spec, np.geomspace(1e-1, 1e-3, 7))


def test_omega_min_from_size():
    assert omega_min_from_size(10.0, 3) == pytest.approx(1e-3)
    assert omega_min_from_size(2.0, 1, omega_ref=4.0) == 2.0
    with pytest.raises(ValidationError):
        omega_min_from_size(1.0, 0)


@settings(max_examples=50)
@given(kappa=st.floats(-2, 1), lo=st.floats(1e-6, 1.0), span=st.floats(1.5, 1e4), n=st.integers(1, 200))
def test_modeset_invariants(kappa, lo, span, n):
    spec = BathSpec(kappa, lo, lo * span, n_modes=n)
    modes = discretize(spec)
    assert len(modes) == n
    assert np.all(modes.omegas >= lo * (1 - 1e-12)) and np.all(modes.omegas <= lo * span * (1 + 1e-12))
    exact = power_integral(spec.power, lo, lo * span)
    assert np.sum(modes.couplings**2) == pytest.approx(exact, rel=1e-8)
