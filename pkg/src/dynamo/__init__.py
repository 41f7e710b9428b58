"""Numerical companion for an alpha-effect kinematic dynamo construction with
z-independent ABC flows: pseudo-spectral solver, Bloch analysis, finite
dimensional spectral tools and an experiment runner."""

from .spectral import Grid3, PhysicalField, SpectralField
from .solver import EnergyHistory, SolverConfig, simulate
from .velocity import ABC, Generator, RescaledABC, Schedule, ScheduleParams, Zero, build_schedule

__all__ = [
    "ABC", "EnergyHistory", "Generator", "Grid3", "PhysicalField", "RescaledABC", "Schedule",
    "ScheduleParams", "SolverConfig", "SpectralField", "Zero", "build_schedule", "simulate",
]
