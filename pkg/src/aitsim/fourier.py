"""One-sided Fourier transform of coherence/correlation series.

Both the master-equation and the mean-field engines turn a decaying series
``C(t)`` into a spectrum with :func:`one_sided_spectrum`, so cross-model
comparisons are free of transform artefacts.

The spectrum is normalised per Hz,

    S(f) = 2 Re  int_0^inf  exp(i 2 pi nu t) C(t) dt ,   nu = f - f_frame,

so that ``int S(f) df = Re C(0)`` and ``C(t) = exp((i 2 pi f0 - 2 pi h) t)``
maps to a unit-area Lorentzian centred at ``nu = -f0`` with FWHM ``2 h``.

Recipe: uniform time grid, trapezoid weights, zero padding by at least x4 (more
if the requested grid is finer than the padded bin spacing), linear
interpolation onto the requested frequencies.  An exponential tail window is
applied only when ``force=True``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NotDecayedError

DECAY_TOL = 1e-3
MIN_PAD = 4
MAX_FFT = 1 << 22


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    """Frequencies (Hz, ascending) with a real response and free-form metadata."""

    frequencies: np.ndarray
    values: np.ndarray
    absolute: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.shape != v.shape or f.ndim != 1:
            raise InvalidParameterError("frequencies and values must be 1-D arrays of equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise InvalidParameterError("frequencies must be strictly ascending")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("spectrum values must be finite")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.frequencies.size

    def normalized(self) -> "SpectrumTrace":
        peak = np.max(np.abs(self.values))
        vals = self.values / peak if peak > 0 else self.values.copy()
        return SpectrumTrace(self.frequencies, vals, self.absolute, {**self.meta, "normalized": True})

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.frequencies))


def params_hash(*objs) -> str:
    """Short stable hash of the ``repr`` of parameter objects."""
    h = hashlib.sha256("|".join(repr(o) for o in objs).encode())
    return h.hexdigest()[:16]


def grid_hash(frequencies: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(frequencies, dtype=float).tobytes()).hexdigest()[:16]


def time_grid(max_offset: float, slowest_rate: float, decay_tol: float = DECAY_TOL * 0.1,
              oversample: float = 2.0, min_points: int = 64) -> tuple[float, int]:
    """Pick ``(dt, n)`` for a series that must resolve ``|nu| <= max_offset`` Hz
    and decay (as ``exp(-2 pi slowest_rate t)``) below ``decay_tol``.

    ``dt`` puts the Nyquist frequency at ``oversample * max_offset``.
    """
    if not (max_offset > 0 and slowest_rate > 0):
        raise InvalidParameterError("max_offset and slowest_rate must be positive")
    dt = 1.0 / (2.0 * oversample * max_offset)
    t_max = math.log(1.0 / decay_tol) / (2.0 * math.pi * slowest_rate)
    n = max(min_points, int(math.ceil(t_max / dt)) + 1)
    return dt, n


def _pad_length(n: int, dt: float, df_target: float | None) -> int:
    need = MIN_PAD * n
    if df_target is not None and df_target > 0:
        need = max(need, int(math.ceil(1.0 / (dt * df_target))))
    npad = 1 << (need - 1).bit_length()
    return min(max(npad, n), max(MAX_FFT, n))


def is_decayed(values: np.ndarray, tol: float = DECAY_TOL) -> bool:
    v0 = abs(values[0])
    return bool(abs(values[-1]) <= tol * v0) if v0 > 0 else True


def one_sided_spectrum(times: np.ndarray, values: np.ndarray, frequencies: np.ndarray | None = None,
                       frame_frequency: float = 0.0, force: bool = False,
                       decay_tol: float = DECAY_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``S`` for a series recorded in a frame rotating at ``frame_frequency``.

    Returns ``(frequencies, S)`` with absolute frequencies in Hz.  Without a
    requested grid the full padded FFT axis is returned.  Raises
    :class:`NotDecayedError` if the final sample exceeds ``decay_tol`` times the
    initial one, unless ``force`` is set.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(values, dtype=complex)
    if t.ndim != 1 or t.shape != c.shape or t.size < 2:
        raise InvalidParameterError("times and values must be 1-D arrays of equal length >= 2")
    dt = t[1] - t[0]
    if abs(t[0]) > 1e-12 * dt or np.max(np.abs(np.diff(t) - dt)) > 1e-6 * dt:
        raise InvalidParameterError("series must be sampled uniformly starting at t = 0")

    if not is_decayed(c, decay_tol):
        if not force:
            raise NotDecayedError(
                f"series not decayed: |C(t_max)|/|C(0)| = {abs(c[-1]) / abs(c[0]):.3g} > {decay_tol}"
            )
        # tail window taking the final sample down to decay_tol of the start
        ratio = max(abs(c[-1]) / abs(c[0]), decay_tol)
        lam = math.log(ratio / decay_tol) / t[-1] if t[-1] > 0 else 0.0
        c = c * np.exp(-lam * t)

    nyquist = 0.5 / dt
    df_target = None
    if frequencies is not None:
        freqs = np.asarray(frequencies, dtype=float)
        nu = freqs - frame_frequency
        if freqs.size and np.max(np.abs(nu)) > nyquist:
            raise InvalidParameterError(
                f"requested offset {np.max(np.abs(nu)):.4g} Hz exceeds Nyquist {nyquist:.4g} Hz"
            )
        steps = np.diff(np.sort(freqs))
        if steps.size and np.any(steps > 0):
            df_target = 0.5 * np.min(steps[steps > 0])

    w = c.copy()
    w[0] *= 0.5
    npad = _pad_length(c.size, dt, df_target)
    # sum_n w_n exp(+i 2 pi nu_k t_n) == npad * ifft
    spec = np.fft.ifft(w, n=npad) * npad
    nu_axis = np.fft.fftfreq(npad, dt)
    spec = np.fft.fftshift(spec)
    nu_axis = np.fft.fftshift(nu_axis)
    s_axis = 2.0 * dt * spec.real
    if frequencies is None:
        return nu_axis + frame_frequency, s_axis
    return freqs, np.interp(nu, nu_axis, s_axis)
