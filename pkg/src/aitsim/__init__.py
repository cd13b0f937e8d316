"""Simulation and parameter extraction for a resonator + transmon + HBAR system.

Submodules: :mod:`~aitsim.hilbert` (operators and superoperators),
:mod:`~aitsim.model` (parameters, Hamiltonians, design formulas),
:mod:`~aitsim.dynamics` (master-equation engine), :mod:`~aitsim.meanfield`
(mean-field engine), :mod:`~aitsim.spectroscopy` (sweeps and feature
extraction), :mod:`~aitsim.fitting` (least-squares extraction) and
:mod:`~aitsim.cli` (the ``ait-sim`` command).

Submodules are imported on first attribute access so that light commands do
not pay for compiling the mean-field kernel.
"""
from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("hilbert", "model", "dynamics", "meanfield", "spectroscopy", "fitting",
               "config", "cli", "fourier", "errors")


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = ["__version__", *_SUBMODULES]
