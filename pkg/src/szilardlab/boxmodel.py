"""Particle in an infinite square well ``[-a, a]`` with a central barrier ``g delta(x)``.

Units: hbar = 2m = 1, so a plane wave ``sin(kx)`` has energy ``k**2``. A
physical energy follows by multiplying with ``hbar**2 / (2 m L**2)`` when
lengths are measured in units of ``L``.

Odd eigenstates vanish at the barrier and keep ``E_{2k+1} = ((k+1) pi / a)**2``
for every g. Even eigenstates have the form ``sin(q (a - |x|))``; the
derivative jump across the barrier gives the quantization condition

    g sin(q a) + 2 q cos(q a) = 0      (i.e. tan(q a) = -2 q / g)

with exactly one root in ``q a`` in ``((k + 1/2) pi, (k + 1) pi)`` for g > 0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import ComputationError, DomainError, ValidationError

INFINITE = math.inf

TAIL_TOL = 1e-12
LEVEL_CAP = 2_000_000


@dataclass(frozen=True)
class WellSpec:
    half_width: float
    barrier_g: float = 0.0

    def __post_init__(self):
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValidationError(f"half_width={self.half_width!r} must be positive and finite")
        if not (self.barrier_g >= 0):
            raise ValidationError(f"barrier_g={self.barrier_g!r} must be >= 0 or INFINITE")

    @property
    def infinite(self) -> bool:
        return self.barrier_g == INFINITE


@dataclass(frozen=True)
class LevelTable:
    """Ascending energies with parity tags.

    At g = INFINITE each energy appears twice; the degenerate pair is tagged
    ``even``/``odd`` in ``parity`` and ``L``/``R`` in ``localization``, which
    label two bases of the same two-dimensional eigenspace.
    """
    energies: np.ndarray
    parity: tuple
    localization: tuple

    def __len__(self):
        return len(self.energies)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "energy", "parity", "localization"])
            for i, (e, p, loc) in enumerate(zip(self.energies, self.parity, self.localization)):
                w.writerow([i, repr(float(e)), p, loc or "delocalized"])


def odd_wavenumber(spec: WellSpec, k: int) -> float:
    return (k + 1) * math.pi / spec.half_width


def even_wavenumber(spec: WellSpec, k: int) -> float:
    """Wavenumber q of the k-th even level (energy ``q**2``)."""
    a, g = spec.half_width, spec.barrier_g
    lo, hi = (k + 0.5) * math.pi / a, (k + 1) * math.pi / a
    if g == 0:
        return lo
    if spec.infinite:
        return hi

    def condition(q):
        return g * math.sin(q * a) + 2 * q * math.cos(q * a)

    try:
        return brentq(condition, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    except ValueError as exc:
        raise ComputationError(
            f"even level k={k}: quantization condition not bracketed on q in [{lo}, {hi}]") from exc


def spectrum(spec: WellSpec, n_levels: int) -> LevelTable:
    """Lowest ``n_levels`` energies of the well."""
    if n_levels < 1:
        raise ValidationError(f"n_levels={n_levels!r} must be >= 1")
    energies, parity, loc = [], [], []
    for n in range(n_levels):
        k = n // 2
        if n % 2:
            energies.append(odd_wavenumber(spec, k) ** 2)
            parity.append("odd")
            loc.append("R" if spec.infinite else None)
        else:
            energies.append(even_wavenumber(spec, k) ** 2)
            parity.append("even")
            loc.append("L" if spec.infinite else None)
    return LevelTable(np.array(energies), tuple(parity), tuple(loc))


def _grid(spec: WellSpec, x, n_points: int):
    if x is None:
        x = np.linspace(-spec.half_width, spec.half_width, n_points)
    return np.asarray(x, dtype=float)


def odd_state(spec: WellSpec, k: int, x=None, n_points: int = 100_001):
    """Normalized odd eigenfunction ``psi_{2k+1}``.

    Sign convention: the left half coincides with the left half of the
    asymptotic even state ``psi^inf_{2k}``.
    """
    x = _grid(spec, x, n_points)
    a = spec.half_width
    sign = -1.0 if k % 2 == 0 else 1.0
    return x, sign * np.sin(odd_wavenumber(spec, k) * x) / math.sqrt(a)


def even_state(spec: WellSpec, k: int, x=None, n_points: int = 100_001):
    """Normalized even eigenfunction ``psi^g_{2k} ~ sin(q (a - |x|))``."""
    x = _grid(spec, x, n_points)
    a = spec.half_width
    q = even_wavenumber(spec, k)
    norm_sq = a - math.sin(2 * q * a) / (2 * q)
    return x, np.sin(q * (a - np.abs(x))) / math.sqrt(norm_sq)


def localized_states(spec: WellSpec, k: int, x=None, n_points: int = 100_001):
    """Left/right localized combinations ``(psi^inf_{2k} +- psi_{2k+1}) / sqrt 2``.

    Only defined for an impenetrable barrier. Returns ``(x, phi_L, phi_R)``.
    """
    if not spec.infinite:
        raise DomainError("localized states are exact eigenstates only for barrier_g = INFINITE")
    x, even = even_state(spec, k, x, n_points)
    _, odd = odd_state(spec, k, x)
    return x, (even + odd) / math.sqrt(2), (even - odd) / math.sqrt(2)


def finite_difference_levels(spec: WellSpec, n_levels: int, n_cells: int = 4000) -> np.ndarray:
    """Independent check of the spectrum: second-order finite differences.

    The well is split into ``n_cells`` cells (``n_cells`` must be even so the
    barrier sits on a grid node); the delta barrier becomes a single-node
    potential of height ``g / dx``.
    """
    if spec.infinite:
        raise DomainError("finite-difference oracle needs a finite barrier")
    if n_cells % 2:
        raise ValidationError("n_cells must be even to place a node at x = 0")
    a = spec.half_width
    dx = 2 * a / n_cells
    diag = np.full(n_cells - 1, 2 / dx**2)
    diag[n_cells // 2 - 1] += spec.barrier_g / dx
    off = np.full(n_cells - 2, -1 / dx**2)
    return eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1), eigvals_only=True)


def _accessible_levels(spec: WellSpec, n: int, superselection: bool) -> np.ndarray:
    if spec.infinite and superselection:
        # one ergodic component: a single half-well of width a
        return (np.arange(1, n + 1) * math.pi / spec.half_width) ** 2
    return spectrum(spec, n).energies


def _tail_bound(spec: WellSpec, n: int, T: float, e0: float, superselection: bool) -> float:
    # every level obeys E_n >= (c (n+1))**2 (free-well values), bound the tail by a geometric series
    c = math.pi / spec.half_width if (spec.infinite and superselection) else math.pi / (2 * spec.half_width)
    e_next = (c * (n + 1)) ** 2
    ratio = math.exp(-(c**2) * (2 * n + 3) / T)
    return math.exp(-(e_next - e0) / T) / (1 - ratio)


def free_energy_from_levels(energies, T: float) -> float:
    """``-T ln sum exp(-E_n / T)`` evaluated without overflow."""
    energies = np.asarray(energies, dtype=float)
    return float(-T * logsumexp(-energies / T))


def gibbs_free_energy(spec: WellSpec, T: float, n_levels: Optional[int] = None,
                      superselection: bool = True) -> float:
    """Free energy ``-k_B T ln Z`` of the well (k_B = 1).

    With ``n_levels=None`` the level count grows until the neglected tail of
    the partition function is below ``TAIL_TOL`` of the retained sum.

    For an impenetrable barrier ``superselection`` selects what counts as
    accessible: ``True`` keeps the particle in one half (one ergodic
    component), ``False`` counts both halves, i.e. every level twice.
    """
    if not T > 0:
        raise ValidationError(f"T={T!r} must be positive")
    if n_levels is not None:
        return free_energy_from_levels(_accessible_levels(spec, n_levels, superselection), T)
    n = 16
    while True:
        levels = _accessible_levels(spec, n, superselection)
        e0 = levels[0]
        z = float(np.sum(np.exp(-(levels - e0) / T)))
        if _tail_bound(spec, n, T, e0, superselection) < TAIL_TOL * z:
            return free_energy_from_levels(levels, T)
        if n >= LEVEL_CAP:
            raise ComputationError(f"partition-function tail not below {TAIL_TOL} within {LEVEL_CAP} levels")
        n = min(2 * n, LEVEL_CAP)
