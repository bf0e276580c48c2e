"""Inserting a partition modeled as a spin coupled linearly to a bosonic bath.

Hamiltonian (hbar = 1)::

    H(t) = sum_k w_k a_k^dag a_k + lam(t) sigma_3 sum_k (f_k a_k^dag + conj(f_k) a_k)

Starting from ``|s> x |vacuum>`` the bath stays in a product of coherent
states. Amplitudes stored in :class:`CoherentAmplitudes` are the physical
eigenvalues of ``a_k`` for spin branch ``s = +-1``::

    alpha_k(t) = -i s f_k int_0^t exp(-i w_k (t - u)) lam(u) du

so the static ground configuration is ``alpha_k = -s lam f_k / w_k``.
Energies are even in ``s``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp

from .bath import ModeSet, ground_energy
from .errors import ComputationError, DomainError, ValidationError


@dataclass(frozen=True)
class RampProtocol:
    """Coupling schedule ``lam(t)`` rising from 0 to ``lambda_final`` at ``t0``.

    Without ``samples`` the ramp is linear. ``samples`` is a pair
    ``(times, values)`` interpolated linearly, with ``values[0] = 0`` at
    ``times[0] = 0`` and ``values[-1] = lambda_final`` at ``times[-1] = t0``.
    """
    lambda_final: float
    t0: float
    samples: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.lambda_final < 0:
            raise ValidationError(f"lambda_final={self.lambda_final!r} must be >= 0")
        if not self.t0 > 0:
            raise ValidationError(f"t0={self.t0!r} must be positive")
        if self.samples is not None:
            times = np.asarray(self.samples[0], dtype=float)
            values = np.asarray(self.samples[1], dtype=float)
            if times.shape != values.shape or times.size < 2:
                raise ValidationError("samples need matching times/values with at least two points")
            if np.any(np.diff(times) <= 0):
                raise ValidationError("sample times must be strictly increasing")
            if times[0] != 0 or not math.isclose(times[-1], self.t0):
                raise ValidationError("sample times must run from 0 to t0")
            if values[0] != 0 or not math.isclose(values[-1], self.lambda_final):
                raise ValidationError("sampled ramp must start at 0 and end at lambda_final")
            object.__setattr__(self, "samples", (times, values))

    def __call__(self, t):
        if self.samples is None:
            return self.lambda_final * np.clip(np.asarray(t, dtype=float) / self.t0, 0.0, 1.0)
        times, values = self.samples
        return np.interp(t, times, values, left=0.0, right=self.lambda_final)

    def breakpoints(self) -> np.ndarray:
        if self.samples is None:
            return np.array([0.0, self.t0])
        return self.samples[0]


@dataclass(frozen=True)
class CoherentAmplitudes:
    chis: np.ndarray
    time: float
    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValidationError(f"sign={self.sign!r} must be +1 or -1")
        if not np.all(np.isfinite(self.chis)):
            raise ComputationError("non-finite coherent amplitude")


@dataclass(frozen=True)
class WorkLedger:
    """Energy bookkeeping after inserting the partition.

    ``w_external = e_static + e_wave`` is the work done by the driving agent
    on the spin-bath system; ``e_wave`` leaves as a travelling wave and ends up
    as heat. ``e_thermal`` is the (protocol-independent) thermal energy of the
    bath, zero at T = 0.
    """
    e_static: float
    e_wave: float
    w_external: float
    t0: float
    lam: float
    e_thermal: float = 0.0

    @property
    def mean_energy(self) -> float:
        return self.w_external + self.e_thermal

    @property
    def dissipation_ratio(self) -> float:
        return self.e_wave / abs(self.e_static) if self.e_static else 0.0


@dataclass(frozen=True)
class CycleLedger:
    """Insert (ramp 0 -> lam), relax to the locked ground state, remove (lam -> 0)."""
    w_insert: float
    w_remove: float
    heat: float

    @property
    def w_net(self) -> float:
        """Net work done on the system over the cycle (never negative)."""
        return self.w_insert + self.w_remove

    @property
    def w_extracted(self) -> float:
        return -self.w_net


def _check_sign(sign):
    if sign not in (1, -1):
        raise ValidationError(f"sign={sign!r} must be +1 or -1")


def xi(omegas, t0: float) -> np.ndarray:
    """Linear-ramp factor ``(exp(i w t0) - 1) / (i w t0)``.

    Written as ``exp(i x/2) sin(x/2)/(x/2)``, which is accurate for every
    ``x = w t0`` including the sudden limit ``x -> 0``.
    """
    x = np.asarray(omegas, dtype=float) * t0
    return np.exp(0.5j * x) * np.sinc(x / (2 * np.pi))


def evolve_chi(modes: ModeSet, ramp: RampProtocol, t: float, sign: int = 1,
               epsabs: float = 1e-13, epsrel: float = 1e-12) -> CoherentAmplitudes:
    """Coherent amplitudes at time ``t`` by direct quadrature of the drive integral.

    Works for any ramp shape; used as the reference for the closed forms.
    """
    _check_sign(sign)
    if t < 0:
        raise DomainError(f"t={t!r} must be >= 0")
    # substitute u = t - s: int_0^t exp(-i w u) lam(t - u) du, split at ramp kinks
    kinks = t - ramp.breakpoints()
    edges = np.unique(np.concatenate([[0.0, t], kinks[(kinks > 0) & (kinks < t)]]))
    integrals = np.zeros(len(modes), dtype=complex)
    for k, w in enumerate(modes.omegas):
        total = 0j
        for lo, hi in zip(edges[:-1], edges[1:]):
            parts = []
            for weight in ("cos", "sin"):
                with warnings.catch_warnings():
                    warnings.simplefilter("error", IntegrationWarning)
                    try:
                        val, _ = quad(lambda u: float(ramp(t - u)), lo, hi, weight=weight, wvar=w,
                                      epsabs=epsabs, epsrel=epsrel, limit=400)
                    except IntegrationWarning as exc:
                        raise ComputationError(
                            f"quadrature did not converge for mode {k} (omega={w}): {exc}") from exc
                parts.append(val)
            total += parts[0] - 1j * parts[1]
        integrals[k] = total
    chis = -1j * sign * modes.couplings * integrals
    return CoherentAmplitudes(chis, float(t), sign)


def chi_linear_closed(modes: ModeSet, lam: float, t0: float, t: float, sign: int = 1) -> CoherentAmplitudes:
    """Closed-form amplitudes after a linear ramp of duration ``t0`` (needs ``t > t0``)::

        alpha_k = -s (lam f_k / w_k) (1 - exp(-i w_k t) xi_k)
    """
    _check_sign(sign)
    if t <= t0:
        raise DomainError(f"closed form holds for t > t0, got t={t}, t0={t0}")
    w, f = modes.omegas, modes.couplings
    x = xi(w, t0)
    if np.any(np.abs(x) > 1.0):
        raise ComputationError("|xi| exceeded 1")
    static = lam * f / w
    return CoherentAmplitudes(-sign * static * (1 - np.exp(-1j * w * t) * x), float(t), sign)


def energy_expectation_oracle(modes: ModeSet, chis, lam: float, sign: int) -> float:
    """``<H(lam)>`` in a product of coherent states with amplitudes ``chis``."""
    _check_sign(sign)
    alpha = np.asarray(getattr(chis, "chis", chis))
    w, f = modes.omegas, modes.couplings
    return float(np.sum(w * np.abs(alpha) ** 2) + sign * lam * np.sum(2 * np.real(np.conj(f) * alpha)))


def wave_energy(modes: ModeSet, lam: float, t0: float) -> float:
    """Energy radiated by a linear ramp: ``lam^2 sum |xi_k|^2 |f_k|^2 / w_k``."""
    w, f = modes.omegas, modes.couplings
    return lam**2 * float(np.sum(np.abs(xi(w, t0)) ** 2 * f**2 / w))


def post_insertion_energy(modes: ModeSet, lam: float, t0: float) -> WorkLedger:
    """Work ledger of a linear insertion ramp ``0 -> lam`` over ``t0``."""
    if lam < 0 or not t0 > 0:
        raise ValidationError("need lam >= 0 and t0 > 0")
    e_static = ground_energy(modes, lam)
    e_wave = wave_energy(modes, lam, t0)
    w_external = e_static + e_wave
    if e_wave < 0 or e_wave > abs(e_static) * (1 + 1e-12):
        raise ComputationError(f"wave energy {e_wave} outside [0, |E_g|={abs(e_static)}]")
    if lam > 0 and not w_external < 0:
        raise ComputationError(f"insertion work {w_external} is not negative")
    return WorkLedger(e_static, e_wave, w_external, t0, lam)


def removal_cost(modes: ModeSet, lam: float) -> float:
    """Minimal work to unlock the partition from the branch ground state: ``-E_g``."""
    return -ground_energy(modes, lam)


def removal_amplitudes(modes: ModeSet, lam: float, t0: float, sign: int = 1) -> np.ndarray:
    """Amplitudes right after a linear ramp ``lam -> 0`` started in the ground state."""
    _check_sign(sign)
    w, f = modes.omegas, modes.couplings
    return -sign * (lam * f / w) * np.conj(xi(w, t0))


def full_cycle(modes: ModeSet, lam: float, t0: float) -> CycleLedger:
    """Insert, let the wave dissipate, then remove with the same ramp speed.

    The removal work is ``-E_g`` plus the energy of the wave it launches,
    so the net work done on the system is ``2 e_wave >= 0``.
    """
    ledger = post_insertion_energy(modes, lam, t0)
    final = energy_expectation_oracle(modes, removal_amplitudes(modes, lam, t0), 0.0, 1)
    w_remove = final - ledger.e_static
    return CycleLedger(ledger.w_external, w_remove, heat=ledger.e_wave + final)


def branch_fidelity(plus: CoherentAmplitudes, minus: CoherentAmplitudes) -> float:
    """``|<alpha_+|alpha_->| = exp(-|alpha_+ - alpha_-|^2 / 2)`` for the two bath branches."""
    d = np.asarray(plus.chis) - np.asarray(minus.chis)
    return math.exp(-0.5 * float(np.sum(np.abs(d) ** 2)))


def bose_occupation(omegas, T: float) -> np.ndarray:
    w = np.asarray(omegas, dtype=float)
    if T == 0:
        return np.zeros_like(w)
    return 1.0 / np.expm1(w / T)


def thermal_branch_energy(modes: ModeSet, lam: float, t0: float, T: float) -> WorkLedger:
    """Finite-temperature ledger.

    Displacements commute with the drive, so a displaced thermal state evolves
    exactly like the coherent state it is centred on: work and dissipation are
    the T = 0 values and the mean energy gains ``sum_k w_k n(w_k, T)``.
    """
    if T < 0:
        raise ValidationError(f"T={T!r} must be >= 0")
    base = post_insertion_energy(modes, lam, t0)
    e_thermal = float(np.sum(modes.omegas * bose_occupation(modes.omegas, T)))
    return WorkLedger(base.e_static, base.e_wave, base.w_external, t0, lam, e_thermal)


def gaussian_moment_work(modes: ModeSet, ramp: RampProtocol, t_end: float, T: float, sign: int = 1,
                         rtol: float = 1e-12, atol: float = 1e-14) -> tuple[float, float]:
    """Integrate first moments and occupations of the Gaussian bath state.

    Returns ``(work, energy_change)``: the power integral ``int dlam/dt <dH/dlam>``
    and ``<H>(t_end) - <H>(0)``, both from the equations of motion

        d<a>/dt   = -i w <a> - i s lam f
        d<n>/dt   = -2 s lam Im(conj(f) <a>)

    starting from a thermal state at temperature ``T``.
    """
    _check_sign(sign)
    w, f = modes.omegas, modes.couplings.astype(complex)
    n0 = bose_occupation(w, T)
    m = len(modes)
    lam_dot = ramp.lambda_final / ramp.t0 if ramp.samples is None else None

    def lam_rate(t):
        if lam_dot is not None:
            return lam_dot if t < ramp.t0 else 0.0
        times, values = ramp.samples
        i = np.searchsorted(times, t, side="right") - 1
        if i < 0 or i >= len(times) - 1:
            return 0.0
        return (values[i + 1] - values[i]) / (times[i + 1] - times[i])

    def rhs(t, y):
        alpha = y[:m] + 1j * y[m:2 * m]
        lam = float(ramp(t))
        d_alpha = -1j * w * alpha - 1j * sign * lam * f
        d_n = -2 * sign * lam * np.imag(np.conj(f) * alpha)
        power = lam_rate(t) * sign * np.sum(2 * np.real(np.conj(f) * alpha))
        return np.concatenate([d_alpha.real, d_alpha.imag, d_n, [power]])

    y0 = np.concatenate([np.zeros(2 * m), n0, [0.0]])
    stops = [s for s in ramp.breakpoints() if 0 < s < t_end] + [t_end]
    t_prev, y = 0.0, y0
    for stop in stops:
        sol = solve_ivp(rhs, (t_prev, stop), y, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise ComputationError(f"moment integration failed: {sol.message}")
        t_prev, y = stop, sol.y[:, -1]
    alpha = y[:m] + 1j * y[m:2 * m]
    n = y[2 * m:3 * m]
    lam = float(ramp(t_end))
    energy = float(np.sum(w * n) + sign * lam * np.sum(2 * np.real(np.conj(f) * alpha)))
    return float(y[-1]), energy - float(np.sum(w * n0))


def ledger_row(kappa: float, omega_min: float, modes: ModeSet, lam: float, t0: float,
               overlap: float) -> dict:
    led = post_insertion_energy(modes, lam, t0)
    return {"kappa": kappa, "omega_min": omega_min, "t0": t0, "lambda": lam,
            "e_static": led.e_static, "e_wave": led.e_wave, "w_external": led.w_external,
            "overlap": overlap}


LEDGER_COLUMNS: Sequence[str] = ("kappa", "omega_min", "t0", "lambda", "e_static", "e_wave",
                                 "w_external", "overlap")
