"""Simulation and noise spectroscopy of an injection-locked Josephson parametric oscillator."""

__version__ = "0.1.0"
