"""Heat versus free-energy bookkeeping for a system coupled to a thermal reservoir.

A reservoir ``R`` starts in its Gibbs state and the system ``S`` in an
arbitrary state, uncorrelated. After any joint unitary the heat taken up by
the reservoir obeys

    dQ = Tr H_R (rho_R_out - rho_R_in)  >=  dF_S = F(rho_S_out) - F(rho_S_in),

with ``F(rho) = Tr(H rho) - k_B T S(rho)``. This module evaluates both sides,
fuzzes the inequality with Haar-random unitaries, and searches correlated
initial states, for which the bound can fail. Joint states are ordered
``R x S``; entropies are in nats.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import eigh

from .errors import ComputationError, DomainError, ValidationError
from .units import NATURAL, boltzmann_constant

EIG_CLAMP = 1e-14
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
SLACK_TOL = 1e-9

SeedLike = Union[int, np.random.Generator]


def _as_matrix(rho) -> np.ndarray:
    m = np.asarray(getattr(rho, "data", rho), dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    return m


def _check_hermitian(m: np.ndarray, what: str = "matrix") -> None:
    if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL * max(1.0, np.abs(m).max()):
        raise ValidationError(f"{what} is not Hermitian")


def _eigvalsh(rho) -> np.ndarray:
    m = _as_matrix(rho)
    _check_hermitian(m, "density matrix")
    return np.linalg.eigvalsh(m)


def von_neumann_entropy(rho) -> float:
    """``-Tr rho ln rho``; eigenvalues below ``EIG_CLAMP`` contribute nothing."""
    lam = _eigvalsh(rho)
    lam = lam[lam > EIG_CLAMP]
    return float(-np.sum(lam * np.log(lam)))


def relative_entropy(rho, sigma, log_sigma=None) -> float:
    """``Tr rho (ln rho - ln sigma)``.

    Returns ``math.inf`` when ``rho`` has weight above ``1e-12`` outside the
    support of ``sigma``. A precomputed ``log_sigma`` (for instance
    :func:`gibbs_log` for a thermal ``sigma``) avoids taking logarithms of
    tiny eigenvalues.
    """
    r, s = _as_matrix(rho), _as_matrix(sigma)
    if r.shape != s.shape:
        raise ValidationError(f"shape mismatch {r.shape} vs {s.shape}")
    _check_hermitian(r, "rho")
    _check_hermitian(s, "sigma")
    if log_sigma is None:
        w, v = np.linalg.eigh(s)
        support = w > EIG_CLAMP
        kernel = v[:, ~support]
        if np.real(np.trace(kernel.conj().T @ r @ kernel)) > 1e-12:
            return math.inf
        vs = v[:, support]
        log_sigma = (vs * np.log(w[support])) @ vs.conj().T
    lam = np.linalg.eigvalsh(r)
    lam = lam[lam > EIG_CLAMP]
    return float(np.sum(lam * np.log(lam)) - np.real(np.sum(log_sigma.T * r)))


def gibbs_state(hamiltonian, T: float) -> np.ndarray:
    """``exp(-H/T) / Z`` (k_B = 1 in the exponent)."""
    if not T > 0:
        raise DomainError(f"T={T!r} must be positive")
    h = _as_matrix(hamiltonian)
    _check_hermitian(h, "hamiltonian")
    w, v = np.linalg.eigh(h)
    p = np.exp(-(w - w[0]) / T)
    p /= p.sum()
    return (v * p) @ v.conj().T


def gibbs_log(hamiltonian, T: float) -> np.ndarray:
    """``ln Gibbs(H, T) = -H/T - ln Z`` evaluated without forming the state."""
    if not T > 0:
        raise DomainError(f"T={T!r} must be positive")
    h = _as_matrix(hamiltonian)
    w = np.linalg.eigvalsh(h)
    log_z = -w[0] / T + math.log(np.sum(np.exp(-(w - w[0]) / T)))
    return -h / T - log_z * np.eye(h.shape[0])


def free_energy(rho, hamiltonian, T: float, units: str = NATURAL) -> float:
    """``Tr(H rho) - k_B T S(rho)``; in SI mode ``H`` is in joules and ``T`` in kelvin."""
    if not T > 0:
        raise DomainError(f"T={T!r} must be positive")
    r, h = _as_matrix(rho), _as_matrix(hamiltonian)
    return float(np.real(np.sum(h.T * r)) - boltzmann_constant(units) * T * von_neumann_entropy(r))


def free_energy_identity_check(rho, hamiltonian, T: float) -> float:
    """Residual of ``F(rho) = F(rho_beta) + k_B T S(rho | rho_beta)``."""
    beta_state = gibbs_state(hamiltonian, T)
    lhs = free_energy(rho, hamiltonian, T)
    divergence = relative_entropy(rho, beta_state, log_sigma=gibbs_log(hamiltonian, T))
    rhs = free_energy(beta_state, hamiltonian, T) + T * divergence
    return abs(lhs - rhs)


@dataclass(frozen=True)
class QuantumSystem:
    hamiltonian: np.ndarray
    temperature: Optional[float] = None

    def __post_init__(self):
        h = _as_matrix(self.hamiltonian)
        if h.shape[0] < 2:
            raise ValidationError("a quantum system needs dim >= 2")
        _check_hermitian(h, "hamiltonian")
        if self.temperature is not None and not self.temperature > 0:
            raise ValidationError(f"temperature={self.temperature!r} must be positive")
        object.__setattr__(self, "hamiltonian", 0.5 * (h + h.conj().T))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def gibbs(self) -> np.ndarray:
        if self.temperature is None:
            raise DomainError("Gibbs state needs a temperature")
        return gibbs_state(self.hamiltonian, self.temperature)


def partial_trace(rho, dims: tuple, keep: str) -> np.ndarray:
    """Reduced state of ``R`` (``keep="R"``) or ``S`` (``keep="S"``) of a state on ``R x S``."""
    dr, ds = dims
    t = _as_matrix(rho).reshape(dr, ds, dr, ds)
    if keep == "R":
        return np.einsum("isjs->ij", t)
    if keep == "S":
        return np.einsum("rirj->ij", t)
    raise ValidationError(f"keep={keep!r} must be 'R' or 'S'")


@dataclass(frozen=True)
class JointState:
    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        m = _as_matrix(self.data)
        if len(dims) != 2 or m.shape[0] != dims[0] * dims[1]:
            raise ValidationError(f"data shape {m.shape} does not match dims {dims}")
        if abs(np.trace(m) - 1) > 1e-10:
            raise ValidationError(f"trace {np.trace(m)} differs from 1")
        if _eigvalsh(m)[0] < -1e-10:
            raise ValidationError("joint state is not positive semidefinite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", m)

    @classmethod
    def product(cls, rho_r, rho_s) -> "JointState":
        r, s = _as_matrix(rho_r), _as_matrix(rho_s)
        return cls((r.shape[0], s.shape[0]), np.kron(r, s))

    def reduced(self, keep: str) -> np.ndarray:
        return partial_trace(self.data, self.dims, keep)


@dataclass(frozen=True)
class LandauerReport:
    """Outcome of one process.

    ``slack = delta_q - delta_f_s`` tests the bound as stated. The unitary
    may also do work on ``S``, so the inequality that always holds for a
    product initial state is ``slack_total = delta_q + delta_e_s - delta_f_s
    >= 0``; the two coincide when ``H_S`` is zero (or proportional to 1).
    """
    delta_q: float
    delta_f_s: float
    slack: float
    holds: bool
    delta_e_s: float = 0.0

    @property
    def slack_total(self) -> float:
        return self.slack + self.delta_e_s

    def to_dict(self) -> dict:
        return {"deltaQ": self.delta_q, "deltaF_S": self.delta_f_s, "deltaE_S": self.delta_e_s,
                "slack": self.slack, "holds": self.holds}


def _check_unitary(u: np.ndarray, dim: int) -> None:
    if u.shape != (dim, dim):
        raise ValidationError(f"unitary shape {u.shape} does not match joint dimension {dim}")
    if np.abs(u.conj().T @ u - np.eye(dim)).max() > UNITARY_TOL:
        raise ValidationError("U is not unitary")


def heat_and_free_energy(rho_in, h_r, h_s, T: float, u) -> LandauerReport:
    """Both sides of the bound for an arbitrary (possibly correlated) initial joint state."""
    if not isinstance(rho_in, JointState):
        raise ValidationError("rho_in must be a JointState")
    h_r, h_s, u = _as_matrix(h_r), _as_matrix(h_s), _as_matrix(u)
    if rho_in.dims != (h_r.shape[0], h_s.shape[0]):
        raise ValidationError(f"state dims {rho_in.dims} do not match Hamiltonians")
    _check_unitary(u, rho_in.data.shape[0])
    out = u @ rho_in.data @ u.conj().T
    out = 0.5 * (out + out.conj().T)
    r_in, r_out = rho_in.reduced("R"), partial_trace(out, rho_in.dims, "R")
    s_in, s_out = rho_in.reduced("S"), partial_trace(out, rho_in.dims, "S")
    dq = float(np.real(np.sum(h_r.T * (r_out - r_in))))
    de = float(np.real(np.sum(h_s.T * (s_out - s_in))))
    df = free_energy(s_out, h_s, T) - free_energy(s_in, h_s, T)
    slack = dq - df
    return LandauerReport(dq, df, slack, slack >= -SLACK_TOL, de)


def landauer_check(rho_s, h_s, reservoir: QuantumSystem, u) -> LandauerReport:
    """Heat into ``reservoir`` versus the free-energy change of ``S`` under ``u``.

    The joint initial state is ``Gibbs(H_R, T) x rho_s``; ``holds`` is true
    when ``slack = dQ - dF_S >= -1e-9``.
    """
    rho_s, h_s = _as_matrix(rho_s), _as_matrix(h_s)
    if rho_s.shape != h_s.shape:
        raise ValidationError(f"rho_S shape {rho_s.shape} does not match H_S {h_s.shape}")
    joint = JointState.product(reservoir.gibbs(), rho_s)
    return heat_and_free_energy(joint, reservoir.hamiltonian, h_s, reservoir.temperature, u)


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Generator for one fuzz trial, seeded with the pair ``[master_seed, trial]``.

    Trials are therefore reproducible individually and independent of the
    order (or process) they run in.
    """
    return np.random.default_rng([int(master_seed), int(trial)])


def haar_unitary(dim: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-random unitary from the QR factorization of a complex Gaussian matrix.

    Each column of ``Q`` is multiplied by the phase of the matching diagonal
    entry of ``R``, which makes the distribution exactly Haar.
    """
    if dim < 1:
        raise ValidationError(f"dim={dim!r} must be >= 1")
    rng = _rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(dim: int, seed: SeedLike = None, rank: Optional[int] = None) -> np.ndarray:
    """Random mixed state ``G G^dag / Tr`` from a ``dim x rank`` complex Gaussian ``G``."""
    rng = _rng(seed)
    k = rank or dim
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hamiltonian(dim: int, seed: SeedLike = None, scale: float = 1.0) -> np.ndarray:
    rng = _rng(seed)
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (a + a.conj().T) / (2 * math.sqrt(dim))


def _check_dims(dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or min(dims) < 2 or max(dims) > 4:
        raise ValidationError(f"dims={dims} must be two factors between 2 and 4")
    return dims


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    report: LandauerReport

    def to_dict(self) -> dict:
        return {"trial": self.trial, "seed": self.seed, **self.report.to_dict()}


def _trial_inputs(dims, rng, random_h_s: bool):
    dr, ds = dims
    h_r = random_hamiltonian(dr, rng)
    h_s = random_hamiltonian(ds, rng) if random_h_s else np.zeros((ds, ds))
    return h_r, h_s


def product_trial(dims, T: float, master_seed: int, trial: int, random_h_s: bool = False) -> LandauerReport:
    """One fuzz trial: random ``H_R``, ``rho_S`` and a Haar unitary.

    ``H_S`` is zero unless ``random_h_s`` is set, in which case only
    ``slack_total`` is guaranteed non-negative.
    """
    dr, ds = dims
    rng = trial_rng(master_seed, trial)
    h_r, h_s = _trial_inputs(dims, rng, random_h_s)
    rho_s = random_density(ds, rng)
    u = haar_unitary(dr * ds, rng)
    return landauer_check(rho_s, h_s, QuantumSystem(h_r, T), u)


def correlated_state(rho_r: np.ndarray, rho_s: np.ndarray, rng: np.random.Generator) -> JointState:
    """Joint state with marginals exactly ``rho_r`` and ``rho_s`` plus random correlations.

    A random pure state on ``R x S x E`` (``dim E = dim R dim S``) is traced
    over ``E`` to give ``omega``; its correlation part
    ``C = omega - omega_R x omega_S`` has vanishing partial traces. The state
    ``rho_r x rho_s + t C`` keeps both marginals, and ``t`` is pushed to the
    largest value that keeps it positive.
    """
    dr, ds = rho_r.shape[0], rho_s.shape[0]
    d = dr * ds
    psi = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    omega = psi @ psi.conj().T
    omega /= np.trace(omega).real
    corr = omega - np.kron(partial_trace(omega, (dr, ds), "R"), partial_trace(omega, (dr, ds), "S"))
    base = np.kron(rho_r, rho_s)
    mu = eigh(corr, base, eigvals_only=True)
    t = -1.0 / mu[0] if mu[0] < 0 else 1.0
    joint = base + t * corr
    # remove the roundoff-level negative eigenvalue left at the boundary
    w, v = np.linalg.eigh(0.5 * (joint + joint.conj().T))
    joint = (v * np.clip(w, 0.0, None)) @ v.conj().T
    return JointState((dr, ds), joint / np.trace(joint).real)


def correlated_trial(dims, T: float, master_seed: int, trial: int, random_h_s: bool = False) -> LandauerReport:
    """One trial of the correlated search; the reservoir marginal is still Gibbs."""
    dr, ds = dims
    rng = trial_rng(master_seed, trial)
    h_r, h_s = _trial_inputs(dims, rng, random_h_s)
    rho_s = random_density(ds, rng)
    u = haar_unitary(dr * ds, rng)
    joint = correlated_state(gibbs_state(h_r, T), rho_s, rng)
    return heat_and_free_energy(joint, h_r, h_s, T, u)


TRIALS = {"product": product_trial, "correlated": correlated_trial}


def _run_chunk(args):
    mode, dims, T, master_seed, random_h_s, start, stop = args
    fn = TRIALS[mode]
    return [TrialRecord(i, master_seed, fn(dims, T, master_seed, i, random_h_s)) for i in range(start, stop)]


def run_trials(dims, trials: int, seed: int, T: float = 1.0, mode: str = "product",
               workers: int = 1, chunk: int = 2000, random_h_s: bool = False) -> list[TrialRecord]:
    """Run ``trials`` independent trials; records come back ordered by trial index."""
    dims = _check_dims(dims)
    if mode not in TRIALS:
        raise ValidationError(f"mode={mode!r} not in {sorted(TRIALS)}")
    if trials < 0:
        raise ValidationError(f"trials={trials!r} must be >= 0")
    if not T > 0:
        raise ValidationError(f"T={T!r} must be positive")
    jobs = [(mode, dims, T, seed, random_h_s, s, min(s + chunk, trials)) for s in range(0, trials, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return [rec for part in parts for rec in part]


def correlated_violation_search(dims, T: float, trials: int, seed: int, workers: int = 1) -> TrialRecord:
    """Trial with the most negative slack among correlated initial states.

    Returned even if its slack is non-negative.
    """
    records = run_trials(dims, trials, seed, T, mode="correlated", workers=workers)
    if not records:
        raise ValidationError("trials must be >= 1")
    return min(records, key=lambda rec: (rec.report.slack, rec.trial))


def entangled_erasure_example(T: float = 1.0) -> LandauerReport:
    """Bell state on ``R x S`` followed by a CNOT controlled by ``R``.

    ``S`` ends pure while the reservoir energy is unchanged, so the memory is
    reset at no heat cost: the slack is ``-T ln 2``. Uses ``H_R = diag(0, 1)``
    and ``H_S = 0``.
    """
    bell = np.zeros(4, dtype=complex)
    bell[[0, 3]] = 1 / math.sqrt(2)
    cnot = np.eye(4)[[0, 1, 3, 2]]
    joint = JointState((2, 2), np.outer(bell, bell.conj()))
    return heat_and_free_energy(joint, np.diag([0.0, 1.0]), np.zeros((2, 2)), T, cnot)


def monotonicity_slack(rho, sigma, dims) -> float:
    """``S(rho_RS | sigma_RS) - S(rho_S | sigma_S)``, never negative."""
    return (relative_entropy(rho, sigma)
            - relative_entropy(partial_trace(rho, dims, "S"), partial_trace(sigma, dims, "S")))


def total_free_energy_residual(rho_in, h_rs, T: float, u) -> float:
    """``|Tr H (rho_out - rho_in) - (F(rho_out) - F(rho_in))|`` for a global unitary."""
    r, h, u = _as_matrix(rho_in), _as_matrix(h_rs), _as_matrix(u)
    _check_unitary(u, r.shape[0])
    out = u @ r @ u.conj().T
    out = 0.5 * (out + out.conj().T)
    dw = float(np.real(np.sum(h.T * (out - r))))
    return abs(dw - (free_energy(out, h, T) - free_energy(r, h, T)))


@dataclass(frozen=True)
class ErgodicDecomposition:
    """State ``sum_j p_j rho_j`` with the ``rho_j`` on mutually orthogonal subspaces.

    Each ``rho_j`` is a unit-trace matrix on the full space.
    """
    blocks: tuple

    def __post_init__(self):
        blocks = tuple((float(p), _as_matrix(r)) for p, r in self.blocks)
        if not blocks:
            raise ValidationError("decomposition needs at least one block")
        probs = np.array([p for p, _ in blocks])
        if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
            raise ValidationError("block probabilities must be non-negative and sum to 1")
        shape = blocks[0][1].shape
        for _, r in blocks:
            if r.shape != shape:
                raise ValidationError("all blocks must live on the same space")
            if abs(np.trace(r) - 1) > 1e-10:
                raise ValidationError("each block must have unit trace")
        for i in range(len(blocks)):
            for j in range(i + 1, len(blocks)):
                if np.abs(blocks[i][1] @ blocks[j][1]).max() > 1e-10:
                    raise ValidationError(f"blocks {i} and {j} overlap")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def direct_sum(cls, probs: Sequence[float], blocks: Iterable) -> "ErgodicDecomposition":
        """Embed small block matrices along the diagonal of one larger space."""
        blocks = [_as_matrix(b) for b in blocks]
        dim = sum(b.shape[0] for b in blocks)
        full, start = [], 0
        for b in blocks:
            m = np.zeros((dim, dim), dtype=complex)
            m[start:start + b.shape[0], start:start + b.shape[0]] = b
            full.append(m)
            start += b.shape[0]
        return cls(tuple(zip(probs, full)))

    def state(self) -> np.ndarray:
        return sum(p * r for p, r in self.blocks)


def physical_entropy(decomp: ErgodicDecomposition, units: str = NATURAL) -> tuple[float, float]:
    """Average entropy inside the components and the entropy of the component weights.

    Returns ``(S_ph, I)`` with ``S_ph = k_B sum_j p_j S(rho_j)`` and
    ``I = -sum_j p_j ln p_j``. The additivity
    ``S(sum_j p_j rho_j) = sum_j p_j S(rho_j) + I`` is checked on the way.
    """
    probs = np.array([p for p, _ in decomp.blocks])
    inner = float(sum(p * von_neumann_entropy(r) for p, r in decomp.blocks))
    nz = probs[probs > 0]
    info = float(-np.sum(nz * np.log(nz)))
    residual = abs(von_neumann_entropy(decomp.state()) - inner - info)
    if residual > 1e-9:
        raise ComputationError(f"entropy additivity violated by {residual:.2e}")
    return boltzmann_constant(units) * inner, info
