"""Unit handling.

Everything internal uses hbar = 1 and k_B = 1, so temperatures and
frequencies are both measured in energy units. SI mode treats temperature
inputs as kelvin and multiplies energy-valued outputs by ``K_B_SI``.
"""
from scipy.constants import k as K_B_SI

NATURAL = "natural"
SI = "si"


def boltzmann_constant(units: str) -> float:
    if units == NATURAL:
        return 1.0
    if units == SI:
        return K_B_SI
    raise ValueError(f"unknown unit system {units!r}; expected 'natural' or 'si'")
