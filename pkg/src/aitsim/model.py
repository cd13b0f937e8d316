"""Device parameters, rotating-frame detunings and Hamiltonian builders.

Every user-facing frequency or rate is an ordinary frequency in Hz (the
``omega/2pi`` values a device table quotes).  The builders here are the single
place where they are multiplied by 2*pi; the operators they return are in rad/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError
from .hilbert import (
    HilbertLayout,
    OperatorMatrix,
    SuperOperatorMatrix,
    embed,
    ladder,
    liouvillian,
    qubit_ops,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhononMode:
    omega_p: float   # Hz
    gamma: float     # Hz, intrinsic linewidth
    g_qh: float      # Hz, qubit-phonon coupling

    def __post_init__(self):
        if not self.omega_p > 0:
            raise InvalidParameterError(f"phonon frequency must be > 0, got {self.omega_p}")
        if not self.gamma >= 0:
            raise InvalidParameterError(f"phonon linewidth must be >= 0, got {self.gamma}")
        if not np.isfinite(self.g_qh):
            raise InvalidParameterError("g_qh must be finite and real")


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the resonator + transmon + HBAR system (Hz).

    ``Gamma1`` defaults to ``2 * Gamma`` and ``Gamma_phi`` to 0, so the total
    qubit linewidth ``Gamma_phi + Gamma1 / 2`` equals ``Gamma``.  The
    ``resonator_qubit_*``, ``E_c`` and ``E_J`` fields are bookkeeping only and
    are not read by any solver.
    """

    omega_r: float
    kappa: float
    chi: float
    omega_eg: float
    Gamma: float
    phonon_modes: tuple[PhononMode, ...]
    Gamma1: float | None = None
    Gamma_phi: float = 0.0
    cavity_dim: int = 5
    phonon_dim: int = 5
    resonator_qubit_detuning: float | None = None
    resonator_qubit_coupling: float | None = None
    E_c: float | None = None
    E_J: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "phonon_modes", tuple(self.phonon_modes))
        if self.Gamma1 is None:
            object.__setattr__(self, "Gamma1", 2.0 * self.Gamma)
        for name in ("omega_r", "omega_eg"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")
        for name in ("kappa", "Gamma", "Gamma1", "Gamma_phi"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InvalidParameterError(f"{name} must be a finite rate >= 0, got {v}")
        if not np.isfinite(self.chi):
            raise InvalidParameterError("chi must be finite")
        if not self.phonon_modes:
            raise InvalidParameterError("at least one phonon mode is required")
        if self.cavity_dim < 2 or self.phonon_dim < 2:
            raise InvalidDimensionError("truncations must be >= 2")

    @property
    def n_modes(self) -> int:
        return len(self.phonon_modes)

    @property
    def mode(self) -> PhononMode:
        """The first (for single-mode use, the only) phonon mode."""
        return self.phonon_modes[0]

    def with_modes(self, modes: Sequence[PhononMode]) -> "SystemParams":
        return replace(self, phonon_modes=tuple(modes))

    def with_mode(self, **changes) -> "SystemParams":
        """Copy with fields of every phonon mode replaced (single-mode helper)."""
        return replace(self, phonon_modes=tuple(replace(m, **changes) for m in self.phonon_modes))

    def layout(self) -> HilbertLayout:
        return HilbertLayout.full(self.cavity_dim, [self.phonon_dim] * self.n_modes)

    def effective_layout(self) -> HilbertLayout:
        return HilbertLayout.effective([self.phonon_dim] * self.n_modes)

    @classmethod
    def table_s1(cls, **overrides) -> "SystemParams":
        """The reference measured device, single phonon mode."""
        base = dict(
            omega_r=4.910e9,
            kappa=2.897e6,
            chi=1.2e6,
            omega_eg=6.067e9,
            Gamma=425e3,
            phonon_modes=(PhononMode(omega_p=6.064e9, gamma=6.98e3, g_qh=197e3),),
            resonator_qubit_detuning=1.07e9,
            resonator_qubit_coupling=81.04e6,
            E_c=260e6,
            E_J=40.2e9,
        )
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class DriveParams:
    omega_d: float        # Hz, drive and rotating-frame frequency
    eps_d: float = 0.0    # Hz, qubit drive amplitude
    eps_p: float = 0.0    # Hz, resonator probe amplitude

    def __post_init__(self):
        if not (self.eps_d >= 0 and self.eps_p >= 0):
            raise InvalidParameterError("drive amplitudes must be >= 0")
        if not np.isfinite(self.omega_d):
            raise InvalidParameterError("omega_d must be finite")


@dataclass(frozen=True)
class Detunings:
    delta_b: tuple[float, ...]
    delta_q: float
    delta_r: float


def detunings(params: SystemParams, drive: DriveParams) -> Detunings:
    """Drive-frame detunings in Hz: ``omega_d - omega_x`` for each subsystem."""
    wd = drive.omega_d
    return Detunings(
        delta_b=tuple(wd - m.omega_p for m in params.phonon_modes),
        delta_q=wd - params.omega_eg,
        delta_r=wd - params.omega_r,
    )


def _check_full_layout(params: SystemParams, layout: HilbertLayout):
    dims = layout.subsystem_dims
    if len(dims) != 2 + params.n_modes or layout.qubit_slot != 1:
        raise InvalidDimensionError(
            f"layout {dims} is not cavity (x) qubit (x) {params.n_modes} phonon mode(s)"
        )


def full_hamiltonian(params: SystemParams, drive: DriveParams,
                     layout: HilbertLayout | None = None, sparse: bool = False) -> OperatorMatrix:
    """Dispersive resonator + driven qubit + Jaynes-Cummings phonon Hamiltonian, rad/s."""
    layout = layout or params.layout()
    _check_full_layout(params, layout)
    det = detunings(params, drive)
    sz, sm, spl = qubit_ops()
    a = embed(ladder(layout.subsystem_dims[0]), layout, 0, sparse)
    Sz = embed(sz, layout, 1, sparse)
    Sm = embed(sm, layout, 1, sparse)
    Sp = embed(spl, layout, 1, sparse)
    ad = a.dag()
    n_a = ad @ a

    H = (-TWO_PI * det.delta_q / 2) * Sz
    H = H + (-TWO_PI * det.delta_r) * n_a
    H = H + (TWO_PI * params.chi) * (n_a @ Sz)
    H = H + (TWO_PI * drive.eps_d) * (Sp + Sm)
    H = H + (TWO_PI * drive.eps_p) * (ad + a)
    for k, (mode, db) in enumerate(zip(params.phonon_modes, det.delta_b)):
        b = embed(ladder(layout.subsystem_dims[2 + k]), layout, 2 + k, sparse)
        H = H + (-TWO_PI * db) * (b.dag() @ b)
        H = H + (TWO_PI * mode.g_qh) * (b @ Sp + b.dag() @ Sm)
    return H


def effective_hamiltonian(params: SystemParams, drive: DriveParams, qubit_shift: float = 0.0,
                          layout: HilbertLayout | None = None, sparse: bool = False) -> OperatorMatrix:
    """Qubit-phonon Hamiltonian with the cavity eliminated; ``qubit_shift`` in Hz."""
    layout = layout or params.effective_layout()
    if len(layout.subsystem_dims) != 1 + params.n_modes or layout.qubit_slot != 0:
        raise InvalidDimensionError("effective layout must be qubit (x) phonon mode(s)")
    det = detunings(params, drive)
    delta_q_tilde = det.delta_q - qubit_shift
    sz, sm, spl = qubit_ops()
    Sz = embed(sz, layout, 0, sparse)
    Sm = embed(sm, layout, 0, sparse)
    Sp = embed(spl, layout, 0, sparse)
    H = (-TWO_PI * delta_q_tilde / 2) * Sz + (TWO_PI * drive.eps_d) * (Sp + Sm)
    for k, (mode, db) in enumerate(zip(params.phonon_modes, det.delta_b)):
        b = embed(ladder(layout.subsystem_dims[1 + k]), layout, 1 + k, sparse)
        H = H + (-TWO_PI * db) * (b.dag() @ b)
        H = H + (TWO_PI * mode.g_qh) * (b @ Sp + b.dag() @ Sm)
    return H


def full_collapses(params: SystemParams, layout: HilbertLayout | None = None,
                   sparse: bool = False) -> list[tuple[float, OperatorMatrix]]:
    """``[(gamma, b_k)..., (kappa, a), (Gamma1, sigma_-), (Gamma_phi/2, sigma_z)]`` in rad/s."""
    layout = layout or params.layout()
    _check_full_layout(params, layout)
    sz, sm, _ = qubit_ops()
    ops = [
        (TWO_PI * m.gamma, embed(ladder(layout.subsystem_dims[2 + k]), layout, 2 + k, sparse))
        for k, m in enumerate(params.phonon_modes)
    ]
    ops.append((TWO_PI * params.kappa, embed(ladder(layout.subsystem_dims[0]), layout, 0, sparse)))
    ops.append((TWO_PI * params.Gamma1, embed(sm, layout, 1, sparse)))
    ops.append((TWO_PI * params.Gamma_phi / 2, embed(sz, layout, 1, sparse)))
    return ops


def effective_collapses(params: SystemParams, dephasing_shift: float = 0.0,
                        layout: HilbertLayout | None = None,
                        sparse: bool = False) -> list[tuple[float, OperatorMatrix]]:
    """Collapse set of the cavity-eliminated model; ``dephasing_shift`` adds to Gamma_phi (Hz)."""
    layout = layout or params.effective_layout()
    sz, sm, _ = qubit_ops()
    ops = [
        (TWO_PI * m.gamma, embed(ladder(layout.subsystem_dims[1 + k]), layout, 1 + k, sparse))
        for k, m in enumerate(params.phonon_modes)
    ]
    ops.append((TWO_PI * params.Gamma1, embed(sm, layout, 0, sparse)))
    ops.append((TWO_PI * (params.Gamma_phi + dephasing_shift) / 2, embed(sz, layout, 0, sparse)))
    return ops


def full_liouvillian(params: SystemParams, drive: DriveParams,
                     layout: HilbertLayout | None = None, sparse: bool = False) -> SuperOperatorMatrix:
    layout = layout or params.layout()
    H = full_hamiltonian(params, drive, layout, sparse=sparse)
    return liouvillian(H, full_collapses(params, layout, sparse=sparse), sparse=sparse)


def _positive(name: str, *values: float):
    for v in values:
        if not (np.isfinite(v) and v > 0):
            raise InvalidParameterError(f"{name}: inputs must be positive, got {v}")


def fsr(v_s: float, t_s: float) -> float:
    """Free spectral range ``v_s / (2 t_s)`` of the substrate, Hz."""
    _positive("fsr", v_s, t_s)
    return v_s / (2.0 * t_s)


def piezo_fundamental(v_p: float, t_p: float) -> float:
    """Fundamental thickness resonance ``v_p / (2 t_p)`` of the piezo disk, Hz."""
    _positive("piezo_fundamental", v_p, t_p)
    return v_p / (2.0 * t_p)


def figures_of_merit(params: SystemParams) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-mode quality factor ``f_p / gamma`` and cooperativity ``4 g^2 / (Gamma gamma)``."""
    if not params.Gamma > 0:
        raise InvalidParameterError("qubit linewidth Gamma must be > 0")
    qs, cs = [], []
    for m in params.phonon_modes:
        if not m.gamma > 0:
            raise InvalidParameterError("phonon linewidth must be > 0")
        qs.append(m.omega_p / m.gamma)
        cs.append(4.0 * m.g_qh ** 2 / (params.Gamma * m.gamma))
    return tuple(qs), tuple(cs)


def comb_modes(center: float, spacing: float, n: int, gamma: float, g_qh: float) -> tuple[PhononMode, ...]:
    """``n`` equally spaced overtone modes centred on ``center`` (Hz)."""
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
    return tuple(PhononMode(omega_p=center + o, gamma=gamma, g_qh=g_qh) for o in offsets)
