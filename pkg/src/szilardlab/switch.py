"""A spin switch read out by a damped harmonic oscillator (pointer).

Hamiltonian on ``C^2 x Fock``::

    H = w0 a^dag a - w0 g (a^dag + a) sigma_3

The spin index 0 is ``sigma_3 = +1``. Writing ``b = a - g sigma_3`` the
oscillator relaxes towards ``<a> = +-g`` depending on the spin, and the
master equation

    L[rho] = -i[H, rho] + gamma D[b] rho + gamma exp(-w0/T) D[b^dag] rho
             + Gamma (sigma_3 rho sigma_3 - rho),
    D[c] rho = c rho c^dag - {c^dag c, rho} / 2,

has the biased Gibbs states ``|+-><+-| x D(+-g) rho_th D(+-g)^dag`` as fixed
points. Energies are in units with hbar = k_B = 1 unless ``units="si"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply

from .errors import ComputationError, CutoffError, DomainError, ValidationError
from .units import NATURAL, boltzmann_constant

CUTOFF_LEAK_TOL = 1e-8
AUTO_LEAK_TOL = 1e-12
MAX_CUTOFF = 2048
THERMAL_TAIL = 1e-18
DENSE_EXPM_MAX = 40
CONVERGENCE_TOL = 1e-3


@dataclass(frozen=True)
class SwitchParams:
    """Switch parameters.

    ``fock_cutoff=None`` lets :func:`resolve_cutoff` pick a truncation; an
    explicit value must be at least ``ceil((g + 4)**2)``.
    """
    omega0: float
    g: float
    T: float
    gamma: float
    Gamma_dephase: float = 0.0
    Gamma1: float = 0.0
    fock_cutoff: Optional[int] = None

    def __post_init__(self):
        if not (self.omega0 > 0 and math.isfinite(self.omega0)):
            raise ValidationError(f"omega0={self.omega0!r} must be positive")
        if not (self.g >= 0 and math.isfinite(self.g)):
            raise ValidationError(f"g={self.g!r} must be >= 0")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ValidationError(f"T={self.T!r} must be >= 0")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValidationError(f"gamma={self.gamma!r} must be positive")
        if not self.Gamma_dephase >= 0:
            raise ValidationError(f"Gamma_dephase={self.Gamma_dephase!r} must be >= 0")
        if not self.Gamma1 >= 0:
            raise ValidationError(f"Gamma1={self.Gamma1!r} must be >= 0")
        if self.fock_cutoff is not None:
            if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 2:
                raise ValidationError(f"fock_cutoff={self.fock_cutoff!r} must be an integer >= 2")
            object.__setattr__(self, "fock_cutoff", int(self.fock_cutoff))

    @property
    def boltzmann_factor(self) -> float:
        """``exp(-w0 / T)``, zero at T = 0."""
        if self.T == 0:
            return 0.0
        return math.exp(-self.omega0 / self.T)

    @property
    def occupation(self) -> float:
        """Bose occupation ``1 / (exp(w0/T) - 1)``."""
        if self.T == 0:
            return 0.0
        x = self.omega0 / self.T
        return 0.0 if x > 700 else 1.0 / math.expm1(x)


def minimum_cutoff(g: float) -> int:
    return math.ceil((g + 4) ** 2)


@dataclass(frozen=True)
class DensityMatrix:
    """State on ``C^2 x C^N``; ``data`` is ``(2N, 2N)`` with the spin as the outer index."""
    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        n = int(np.prod(dims))
        if data.shape != (n, n):
            raise ValidationError(f"data shape {data.shape} does not match dims {dims}")
        if abs(np.trace(data).real - 1) > 1e-10 or abs(np.trace(data).imag) > 1e-10:
            raise ValidationError(f"trace {np.trace(data)} differs from 1")
        if np.max(np.abs(data - data.conj().T), initial=0.0) > 1e-12:
            raise ValidationError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(data)[0] < -1e-10:
            raise ValidationError("density matrix has a negative eigenvalue")
        data.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @property
    def fock_cutoff(self) -> int:
        return self.dims[1]

    def eigenvalues(self) -> np.ndarray:
        """Spectrum with roundoff negatives clamped to zero."""
        return np.clip(np.linalg.eigvalsh(self.data), 0.0, None)

    def block(self, i: int, j: int) -> np.ndarray:
        """Oscillator operator ``<i| rho |j>`` for spin indices i, j."""
        n = self.fock_cutoff
        return self.data[i * n:(i + 1) * n, j * n:(j + 1) * n]

    def oscillator_marginal(self) -> np.ndarray:
        return self.block(0, 0) + self.block(1, 1)

    def spin_populations(self) -> tuple[float, float]:
        return float(np.trace(self.block(0, 0)).real), float(np.trace(self.block(1, 1)).real)

    def coherence_norm(self) -> float:
        """Trace norm of the off-diagonal spin block."""
        return float(np.linalg.svd(self.block(0, 1), compute_uv=False).sum())

    def purity(self) -> float:
        return float(np.real(np.vdot(self.data, self.data)))

    def trace_distance(self, other: "DensityMatrix") -> float:
        return 0.5 * float(np.abs(np.linalg.eigvalsh(self.data - other.data)).sum())

    def expectation(self, op) -> complex:
        return complex(np.sum(np.asarray(op).T * self.data))


class Operators(NamedTuple):
    a: np.ndarray
    sigma3: np.ndarray
    b: np.ndarray
    hamiltonian: np.ndarray


def _annihilation(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


def operators(params: SwitchParams, fock_cutoff: Optional[int] = None) -> Operators:
    """Dense ``a``, ``sigma_3``, ``b = a - g sigma_3`` and ``H`` on ``C^2 x C^N``."""
    n = fock_cutoff or resolve_cutoff(params)
    a = np.kron(np.eye(2), _annihilation(n))
    s3 = np.kron(np.diag([1.0, -1.0]), np.eye(n))
    w0, g = params.omega0, params.g
    h = w0 * a.T @ a - w0 * g * (a.T + a) @ s3
    return Operators(a, s3, a - g * s3, h)


def build_hamiltonian(params: SwitchParams) -> np.ndarray:
    """``H = w0 a^dag a - w0 g (a^dag + a) sigma_3`` on the truncated space."""
    n = resolve_cutoff(params)
    if n < minimum_cutoff(params.g):
        raise ValidationError(
            f"fock_cutoff={n} below the minimum ceil((g+4)^2)={minimum_cutoff(params.g)}")
    return operators(params, n).hamiltonian


def polaron_transform(params: SwitchParams, fock_cutoff: int, pad: int = 60) -> np.ndarray:
    """``U H U^dag`` with ``U = exp(g (a - a^dag) sigma_3)``.

    The unitary is built in a padded Fock space and cut back to
    ``fock_cutoff``; for a converged cutoff the low-lying block approaches
    ``w0 b^dag b - w0 g^2`` with ``b`` replaced by ``a``.
    """
    m = fock_cutoff + pad
    big = operators(replace(params, fock_cutoff=m), m)
    a = big.a
    u = expm(params.g * (a - a.T) @ big.sigma3)
    h = u @ big.hamiltonian @ u.conj().T
    keep = np.r_[0:fock_cutoff, m:m + fock_cutoff]
    return h[np.ix_(keep, keep)]


def _thermal_weights(params: SwitchParams) -> np.ndarray:
    if params.T == 0:
        return np.array([1.0])
    x = params.omega0 / params.T
    q = math.exp(-x)
    k = max(1, math.ceil(-math.log(THERMAL_TAIL) / x))
    if k > 50 * MAX_CUTOFF:
        raise CutoffError(f"thermal occupation too large to truncate (w0/T={x})")
    return -math.expm1(-x) * q ** np.arange(k)


@lru_cache(maxsize=32)
def _displacement(beta: float, m: int) -> np.ndarray:
    a = _annihilation(m)
    return expm(beta * (a.T - a))


def _displaced_factors(params: SwitchParams, sign: int, n: int):
    """``(V, p)`` with ``rho_osc ~= V diag(p) V^dag`` truncated to ``n`` Fock levels.

    ``V`` holds the first ``n`` rows of the displaced number states ``D(+-g)|k>``,
    computed in a padded space large enough that the kept columns are exact.
    """
    p = _thermal_weights(params)
    k = p.size
    m = math.ceil((math.sqrt(max(n, k)) + params.g + 8) ** 2)
    d = _displacement(sign * params.g, m)
    return d[:n, :k], p


def _leak(v: np.ndarray, p: np.ndarray) -> float:
    return float(1.0 - np.sum(p * np.sum(np.abs(v) ** 2, axis=0)))


def resolve_cutoff(params: SwitchParams, tol: float = AUTO_LEAK_TOL) -> int:
    """Explicit ``fock_cutoff`` if set, else the smallest doubling with trace leak < ``tol``.

    The doubling starts at ``ceil(g^2) + 10`` plus a thermal margin of
    ``10 (n_bar + 1)`` and never goes below ``ceil((g + 4)^2)``.
    """
    if params.fock_cutoff is not None:
        return params.fock_cutoff
    n = max(math.ceil(params.g**2) + 10 + math.ceil(10 * (params.occupation + 1)),
            minimum_cutoff(params.g))
    while n <= MAX_CUTOFF:
        v, p = _displaced_factors(params, 1, n)
        if _leak(v, p) < tol:
            return n
        n *= 2
    raise CutoffError(f"no Fock cutoff up to {MAX_CUTOFF} reaches trace leak {tol}")


def trace_leak(params: SwitchParams, fock_cutoff: Optional[int] = None) -> float:
    """Probability weight of the biased Gibbs state above the cutoff."""
    v, p = _displaced_factors(params, 1, fock_cutoff or resolve_cutoff(params))
    return _leak(v, p)


def biased_gibbs(params: SwitchParams, sign: int) -> DensityMatrix:
    """Stationary state ``|s><s| x (1 - q) exp(-(w0/T)(a^dag - s g)(a - s g))``.

    Built by displacing the thermal Fock-diagonal state; T = 0 gives the
    pure coherent state ``|s; s g>``. The truncated state is renormalized;
    a leak above ``CUTOFF_LEAK_TOL`` raises :class:`CutoffError`.
    """
    if sign not in (1, -1):
        raise ValidationError(f"sign={sign!r} must be +1 or -1")
    n = resolve_cutoff(params)
    v, p = _displaced_factors(params, sign, n)
    leak = _leak(v, p)
    if leak > CUTOFF_LEAK_TOL:
        raise CutoffError(f"trace leak {leak:.3e} above {CUTOFF_LEAK_TOL} at fock_cutoff={n}")
    osc = (v * p) @ v.conj().T
    osc = 0.5 * (osc + osc.conj().T) / (1.0 - leak)
    data = np.zeros((2 * n, 2 * n), dtype=complex)
    i = 0 if sign == 1 else 1
    data[i * n:(i + 1) * n, i * n:(i + 1) * n] = osc
    return DensityMatrix((2, n), data)


def mixture(weights: Sequence[float], states: Sequence[DensityMatrix]) -> DensityMatrix:
    if not math.isclose(sum(weights), 1.0, abs_tol=1e-12) or min(weights) < 0:
        raise ValidationError("mixture weights must be non-negative and sum to 1")
    data = sum(w * s.data for w, s in zip(weights, states))
    return DensityMatrix(states[0].dims, data)


class _Generator:
    """Matrix-form right-hand side of the master equation."""

    def __init__(self, params: SwitchParams, n: int):
        ops = operators(params, n)
        b = ops.b
        bd = b.conj().T
        gamma, q = params.gamma, params.boltzmann_factor
        damping = gamma * bd @ b + gamma * q * b @ bd
        self.k = ops.hamiltonian - 0.5j * damping
        self.kd = self.k.conj().T
        self.b, self.bd = b, bd
        self.gamma, self.gamma_up = gamma, gamma * q
        self.dephase = params.Gamma_dephase
        s = np.diag(ops.sigma3)
        self.flip = np.outer(s, s) - 1.0  # -2 on off-diagonal spin blocks

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.k @ rho - rho @ self.kd)
        out += self.gamma * self.b @ rho @ self.bd
        if self.gamma_up:
            out += self.gamma_up * self.bd @ rho @ self.b
        if self.dephase:
            out += self.dephase * self.flip * rho
        return out


def apply_lindblad(params: SwitchParams, rho) -> np.ndarray:
    """``L[rho]`` for a matrix or :class:`DensityMatrix` ``rho``."""
    data = np.asarray(getattr(rho, "data", rho))
    return _Generator(params, data.shape[0] // 2)(data)


def lindblad_generator(params: SwitchParams) -> sp.csr_matrix:
    """Sparse superoperator acting on column-stacked ``vec(rho)``.

    Uses ``vec(A rho B) = (B^T kron A) vec(rho)``.
    """
    n = resolve_cutoff(params)
    ops = operators(params, n)
    eye = sp.identity(2 * n, format="csr")
    h = sp.csr_matrix(ops.hamiltonian)
    b = sp.csr_matrix(ops.b)
    bd = b.conj().T.tocsr()

    def dissipator(c, cd):
        cdc = (cd @ c).tocsr()
        return sp.kron(cd.T, c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)

    gen = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    gen = gen + params.gamma * dissipator(b, bd)
    if params.boltzmann_factor:
        gen = gen + params.gamma * params.boltzmann_factor * dissipator(bd, b)
    if params.Gamma_dephase:
        s3 = sp.csr_matrix(ops.sigma3)
        gen = gen + params.Gamma_dephase * (sp.kron(s3, s3) - sp.identity((2 * n) ** 2))
    return gen.tocsr()


def stationarity_residual(params: SwitchParams, rho) -> float:
    """Trace norm ``||L[rho]||_1``."""
    return float(np.linalg.svd(apply_lindblad(params, rho), compute_uv=False).sum())


def _check_state(rho: DensityMatrix, params: SwitchParams):
    n = resolve_cutoff(params)
    if rho.dims != (2, n):
        raise ValidationError(f"state dims {rho.dims} do not match fock_cutoff={n}")
    return n


def evolve_series(rho: DensityMatrix, params: SwitchParams, times: Sequence[float],
                  dt_control: Optional[float] = None, method: str = "rk",
                  rtol: float = 1e-11, atol: float = 1e-13) -> list[DensityMatrix]:
    """States at each of ``times`` (ascending, starting at or after 0).

    ``method="rk"`` integrates the matrix equation with an adaptive 8th-order
    Runge-Kutta scheme (``dt_control`` caps the step). ``method="expm"``
    applies the exponential of the sparse superoperator and is restricted to
    ``fock_cutoff <= 40``.
    """
    n = _check_state(rho, params)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return []
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValidationError("times must be non-negative and ascending")
    dim = 2 * n
    if method == "expm":
        if n > DENSE_EXPM_MAX:
            raise ValidationError(f"expm evolution limited to fock_cutoff <= {DENSE_EXPM_MAX}")
        gen = lindblad_generator(params)
        vec = rho.data.reshape(-1, order="F")
        mats = [expm_multiply(gen * t, vec).reshape(dim, dim, order="F") for t in times]
    elif method == "rk":
        rhs_mat = _Generator(params, n)

        def rhs(_, y):
            return rhs_mat(y.reshape(dim, dim)).ravel()

        kwargs = dict(method="DOP853", rtol=rtol, atol=atol, t_eval=times)
        if dt_control is not None:
            kwargs["max_step"] = dt_control
        sol = solve_ivp(rhs, (0.0, float(times[-1])), rho.data.ravel().copy(), **kwargs)
        if not sol.success:
            raise ComputationError(f"integration failed: {sol.message}")
        mats = [sol.y[:, i].reshape(dim, dim) for i in range(times.size)]
    else:
        raise ValidationError(f"unknown method {method!r}")
    result = []
    for m in mats:
        drift = abs(np.trace(m) - 1)
        if drift > 1e-8:
            raise ComputationError(f"trace drift {drift:.2e} exceeds 1e-8")
        m = 0.5 * (m + m.conj().T)
        result.append(DensityMatrix((2, n), m / np.trace(m).real))
    return result


def evolve(rho: DensityMatrix, params: SwitchParams, t: float, dt_control: Optional[float] = None,
           method: str = "rk") -> DensityMatrix:
    """Propagate ``rho`` for a time ``t`` under the master equation."""
    if t < 0:
        raise DomainError(f"t={t!r} must be >= 0")
    if t == 0:
        return rho
    return evolve_series(rho, params, [t], dt_control, method)[0]


def effective_temperature(omega0: float, T: float) -> float:
    """``k_B Theta = w0 / (exp(w0/T) - 1) + w0 / 2`` (equals ``w0/2`` at T = 0)."""
    if T == 0:
        return omega0 / 2
    x = omega0 / T
    return omega0 * ((0.0 if x > 700 else 1.0 / math.expm1(x)) + 0.5)


class PointerError(NamedTuple):
    epsilon: float
    epsilon_boltzmann: float
    theta: float
    log_epsilon: float


def pointer_error_analytic(params: SwitchParams) -> PointerError:
    """Pointer-state error ``exp(-4 g^2 tanh(w0 / 2T))`` and its Boltzmann form.

    The same number is returned as ``exp(-2 |E_g| / k_B Theta)`` with
    ``|E_g| = w0 g^2``; the two exponents are compared and a mismatch beyond
    roundoff raises :class:`ComputationError`.
    """
    w0, g, T = params.omega0, params.g, params.T
    tanh = 1.0 if T == 0 else math.tanh(w0 / (2 * T))
    log_eps = -4 * g**2 * tanh
    theta = effective_temperature(w0, T)
    log_boltz = -2 * w0 * g**2 / theta
    if abs(log_eps - log_boltz) > 1e-12 * max(1.0, abs(log_eps)):
        raise ComputationError(f"closed forms disagree: {log_eps} vs {log_boltz}")
    return PointerError(math.exp(log_eps), math.exp(log_boltz), theta, log_eps)


def _sqrt_factor(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    # V diag(sqrt p) V^dag is the square root because the columns of V are orthonormal
    return (v * np.sqrt(p)) @ v.conj().T


def uhlmann_fidelity(rho, sigma) -> float:
    """Root fidelity ``Tr sqrt(sqrt(rho) sigma sqrt(rho)) = ||sqrt(rho) sqrt(sigma)||_1``."""
    def root(m):
        m = np.asarray(getattr(m, "data", m))
        w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
        return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.conj().T
    return float(np.linalg.svd(root(rho) @ root(sigma), compute_uv=False).sum())


def _pointer_fidelity(params: SwitchParams, n: int) -> float:
    vp, p = _displaced_factors(params, 1, n)
    vm, _ = _displaced_factors(params, -1, n)
    prod = _sqrt_factor(vp, p) @ _sqrt_factor(vm, p)
    return float(np.linalg.svd(prod, compute_uv=False).sum())


def pointer_error_numeric(params: SwitchParams, convention: str = "probability") -> float:
    """Distinguishability of the two pointer states from their density matrices.

    Computes the root fidelity ``F = Tr sqrt(sqrt(rho+) rho- sqrt(rho+))`` of
    the oscillator marginals on the truncated space. ``convention="probability"``
    returns ``F**2``, the transition probability, which is the quantity the
    closed form of :func:`pointer_error_analytic` reproduces (at T = 0,
    ``F = exp(-2 g^2)`` while the closed form is ``exp(-4 g^2)``);
    ``convention="root"`` returns ``F``.

    With an explicit ``fock_cutoff`` the result is compared against a 3/4
    cutoff and a relative change above ``1e-3`` raises :class:`ComputationError`.
    """
    if convention not in ("probability", "root"):
        raise ValidationError(f"convention={convention!r} must be 'probability' or 'root'")
    n = resolve_cutoff(params)
    f = _pointer_fidelity(params, n)
    if params.fock_cutoff is not None:
        coarse = _pointer_fidelity(params, max(2, (3 * n) // 4))
        if abs(coarse**2 - f**2) > CONVERGENCE_TOL * f**2:
            raise ComputationError(
                f"fidelity not converged at fock_cutoff={n}: {coarse**2:.6e} vs {f**2:.6e}")
    return f**2 if convention == "probability" else f


def tunneling_rate(params: SwitchParams) -> float:
    """Leading-order switching rate ``Gamma1 exp(-2 |E_g| / k_B Theta)``."""
    return params.Gamma1 * pointer_error_analytic(params).epsilon_boltzmann


def min_work(epsilon: float, Theta: float, units: str = NATURAL) -> float:
    """Work ``k_B Theta ln(1/epsilon)`` to encode a bit with error ``epsilon``."""
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon={epsilon!r} must lie in (0, 1)")
    if not Theta > 0:
        raise DomainError(f"Theta={Theta!r} must be positive")
    return boltzmann_constant(units) * Theta * -math.log(epsilon)


class ComputationCost(NamedTuple):
    work: float
    landauer: float

    @property
    def ratio(self) -> float:
        return self.work / self.landauer


def computation_cost(N: float, delta: float, kappa_ratio: float, T: float,
                     units: str = NATURAL) -> ComputationCost:
    """Minimal work of ``N`` gate operations with total failure probability ``delta``.

    ``W = k_B T N (ln N + ln 1/delta + ln 1/kappa_ratio)``, where ``kappa_ratio``
    is the ratio of decoherence to dissipation time. ``landauer`` is
    ``N k_B T ln 2`` for comparison.
    """
    if not N >= 1:
        raise DomainError(f"N={N!r} must be >= 1")
    if not 0 < delta < 1:
        raise DomainError(f"delta={delta!r} must lie in (0, 1)")
    if not 0 < kappa_ratio < 1:
        raise DomainError(f"kappa_ratio={kappa_ratio!r} must lie in (0, 1)")
    if not T > 0:
        raise DomainError(f"T={T!r} must be positive")
    kt = boltzmann_constant(units) * T
    work = kt * N * (math.log(N) - math.log(delta) - math.log(kappa_ratio))
    return ComputationCost(work, N * kt * math.log(2))


def energy(rho: DensityMatrix, params: SwitchParams) -> float:
    return float(rho.expectation(operators(params, rho.fock_cutoff).hamiltonian).real)
