"""Numerical models for the energetics of Szilard-type partitions, pointer
states and Landauer-style bounds."""

__version__ = "0.1.0"
