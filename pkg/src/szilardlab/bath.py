"""Power-law bosonic baths and their discretization into mode sets.

A bath is specified by a form factor on ``[omega_min, omega_max]``. Two
conventions for the exponent ``kappa`` are supported:

``"spectral"`` (default)
    ``|f(w)|^2 = A^2 w^kappa``. kappa = 1 is Ohmic, and the ground-state
    energy scales as ``-E_g ~ omega_min^kappa`` for kappa < 0.
``"amplitude"``
    ``|f(w)| = A w^kappa``, i.e. the spectral power is ``2 kappa``.

Scaling claims (exponents, divergence vs convergence) do not depend on the
amplitude ``A``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ValidationError

CONVENTIONS = ("spectral", "amplitude")
KAPPA_RANGE = (-2.0, 1.0)


@dataclass(frozen=True)
class BathSpec:
    kappa: float
    omega_min: float
    omega_max: float
    amplitude: float = 1.0
    n_modes: int = 400
    convention: str = "spectral"

    def __post_init__(self):
        if not math.isfinite(self.kappa) or not KAPPA_RANGE[0] <= self.kappa <= KAPPA_RANGE[1]:
            raise ValidationError(f"kappa={self.kappa!r} outside [{KAPPA_RANGE[0]}, {KAPPA_RANGE[1]}]")
        if not self.omega_min > 0:
            raise ValidationError(f"omega_min={self.omega_min!r} must be positive")
        if not self.omega_max > self.omega_min or not math.isfinite(self.omega_max):
            raise ValidationError(
                f"omega_max={self.omega_max!r} must be finite and exceed omega_min={self.omega_min!r}")
        if not self.amplitude > 0:
            raise ValidationError(f"amplitude={self.amplitude!r} must be positive")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValidationError(f"n_modes={self.n_modes!r} must be a positive integer")
        if self.convention not in CONVENTIONS:
            raise ValidationError(f"convention={self.convention!r} not in {CONVENTIONS}")

    @property
    def power(self) -> float:
        """Exponent p of the squared form factor, |f(w)|^2 = A^2 w^p."""
        return self.kappa if self.convention == "spectral" else 2.0 * self.kappa

    def form_factor_sq(self, omega):
        return self.amplitude**2 * np.asarray(omega, dtype=float) ** self.power

    def ir_exponent(self) -> float:
        """Exponent of ``-E_g`` versus ``omega_min`` in the infrared-divergent regime."""
        return self.power

    def with_omega_min(self, omega_min: float) -> "BathSpec":
        return replace(self, omega_min=omega_min)


@dataclass(frozen=True)
class ModeSet:
    """Discrete bath: frequencies ``omegas`` (ascending) and couplings ``couplings``."""
    omegas: np.ndarray
    couplings: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.omegas, dtype=float).ravel()
        f = np.array(self.couplings, dtype=float).ravel()
        if w.shape != f.shape:
            raise ValidationError(f"omegas and couplings lengths differ ({w.size} vs {f.size})")
        if w.size == 0:
            raise ValidationError("a mode set needs at least one mode")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("omegas must be positive and finite")
        if np.any(np.diff(w) < 0):
            raise ValidationError("omegas must be ascending")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValidationError("couplings must be non-negative and finite")
        w.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "couplings", f)

    def __len__(self):
        return self.omegas.size

    @classmethod
    def single(cls, omega: float, f: float) -> "ModeSet":
        return cls(np.array([omega]), np.array([f]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["omega", "f"])
            for w, f in zip(self.omegas, self.couplings):
                writer.writerow([repr(float(w)), repr(float(f))])

    @classmethod
    def from_csv(cls, path) -> "ModeSet":
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["omega"]) for r in rows]),
                   np.array([float(r["f"]) for r in rows]))


def _relative_expm1(s, h):
    # expm1(s h) / (s h), continuous at s = 0
    x = s * h
    return np.where(np.abs(x) < 1e-12, 1.0 + x / 2, np.expm1(x) / np.where(x == 0, 1.0, x))


def discretize(spec: BathSpec) -> ModeSet:
    """Split ``[omega_min, omega_max]`` into geometrically spaced cells.

    Each cell contributes one mode with ``f_k^2`` equal to the exact integral
    of ``|f(w)|^2`` over the cell and ``omega_k`` at the cell's mean-value
    point, so that ``f_k^2 = |f(omega_k)|^2 * width_k``. For a flat form factor
    the mean-value point is ambiguous and the geometric midpoint is used.
    """
    n = int(spec.n_modes)
    p = spec.power
    h = math.log(spec.omega_max / spec.omega_min) / n
    left = spec.omega_min * np.exp(h * np.arange(n))
    width = left * math.expm1(h)
    # mean of w^p over [e, e*r] is e^p * c(p+1)/c(1), with c(s) = expm1(s h)/(s h)
    mean_ratio = float(_relative_expm1(p + 1.0, h) / _relative_expm1(1.0, h))
    if abs(p) < 1e-10:
        omegas = left * math.exp(h / 2)
    else:
        omegas = left * mean_ratio ** (1.0 / p)
    f_sq = spec.amplitude**2 * left**p * mean_ratio * width
    return ModeSet(omegas, np.sqrt(f_sq))


def ground_energy(modes: ModeSet, lam: float) -> float:
    """Ground-state energy ``-lam^2 sum_k |f_k|^2 / omega_k`` (always <= 0)."""
    if lam < 0:
        raise ValidationError(f"lambda={lam!r} must be non-negative")
    return -lam**2 * float(np.sum(modes.couplings**2 / modes.omegas))


def displacement_norm_sq(modes: ModeSet) -> float:
    """``||f/omega||^2``, the squared distance scale of the two branch ground states."""
    return float(np.sum((modes.couplings / modes.omegas) ** 2))


def coherent_overlap(modes: ModeSet, lam: float) -> float:
    """Overlap ``<[lam f/w]|[-lam f/w]> = exp(-2 lam^2 ||f/w||^2)``."""
    if lam < 0:
        raise ValidationError(f"lambda={lam!r} must be non-negative")
    return math.exp(-2.0 * lam**2 * displacement_norm_sq(modes))


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit of ``log y = slope * log x + intercept``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def fit_ir_scaling(spec: BathSpec, omega_mins: Sequence[float], lam: float = 1.0) -> float:
    """Fitted exponent of ``-E_g`` against the infrared cutoff.

    ``spec`` supplies everything but ``omega_min``; one bath is discretized per
    entry of ``omega_mins``. For the spectral convention the result approaches
    ``kappa``.
    """
    if spec.kappa >= 0:
        raise DomainError(f"IR scaling law needs kappa < 0, got {spec.kappa}")
    omega_mins = np.asarray(sorted(omega_mins), dtype=float)
    if omega_mins.size < 5:
        raise ValidationError(f"need at least 5 omega_min values, got {omega_mins.size}")
    if math.log10(omega_mins[-1] / omega_mins[0]) < 3 - 1e-9:
        raise ValidationError("omega_min values must span at least 3 decades")
    if lam <= 0:
        raise ValidationError(f"lambda={lam!r} must be positive for a log fit")
    energies = [-ground_energy(discretize(spec.with_omega_min(w)), lam) for w in omega_mins]
    slope, _ = fit_power_law(omega_mins, energies)
    return slope


def omega_min_from_size(length: float, d: float, omega_ref: float = 1.0) -> float:
    """Infrared cutoff of a body of linear size ``length``: ``omega_ref * length**-d``.

    Only the scaling ``omega_min ~ L^-d`` is physical; ``omega_ref`` sets the
    (model-dependent) prefactor.
    """
    if length <= 0 or d <= 0 or omega_ref <= 0:
        raise ValidationError("length, d and omega_ref must be positive")
    return omega_ref * length ** (-d)
