"""Master-equation engine: propagation, steady states, regression spectra, two-tone traces."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import (
    DegenerateSteadyStateError,
    IntegrationError,
    InvalidParameterError,
    SweepPointError,
)
from .fourier import DECAY_TOL, SpectrumTrace, is_decayed, one_sided_spectrum, params_hash, time_grid
from .hilbert import (
    DensityState,
    HilbertLayout,
    OperatorMatrix,
    SuperOperatorMatrix,
    basis_projector,
    commutator_super,
    embed,
    ladder,
    liouvillian,
    qubit_ops,
    unvec,
    vec,
)
from .model import (
    TWO_PI,
    DriveParams,
    SystemParams,
    detunings,
    full_collapses,
    full_hamiltonian,
    full_liouvillian,
)

log = logging.getLogger(__name__)

# superoperator rows above which the two-tone sweep uses sparse LU (faster from ~300 rows)
SPARSE_THRESHOLD = 256
DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: list[DensityState]


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    """Samples of ``<sigma_-(t) sigma_+(0)>`` in the frame rotating at ``frame_frequency`` (Hz)."""

    times: np.ndarray
    values: np.ndarray
    frame_frequency: float = 0.0
    decayed: bool = True
    meta: dict = field(default_factory=dict)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def default_max_step(params: SystemParams) -> float:
    """Step cap of one tenth of the resonator decay time."""
    return 0.1 / (TWO_PI * params.kappa) if params.kappa > 0 else np.inf


def evolve(initial: DensityState | np.ndarray, L: SuperOperatorMatrix, times: Sequence[float],
           rtol: float = 1e-8, atol: float = 1e-10, max_step: float = np.inf,
           method: str = "rk") -> Trajectory:
    """Integrate ``d vec(rho)/dt = L vec(rho)`` and sample at ``times`` (seconds).

    ``method="rk"`` uses an adaptive 8(5,3) Dormand-Prince scheme; ``"expm"``
    uses exact exponential propagators (cheaper for long, uniformly sampled runs).
    Hermitian initial states are re-symmetrised at output.
    """
    layout = L.layout
    rho0 = initial.entries if isinstance(initial, DensityState) else np.asarray(initial, dtype=complex)
    n = layout.total_dim
    if rho0.shape != (n, n):
        raise InvalidParameterError("initial state does not match the Liouvillian layout")
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0.0:
        raise InvalidParameterError("times must start at 0")
    if np.any(np.diff(t) <= 0):
        raise InvalidParameterError("times must be strictly increasing")
    hermitian = np.allclose(rho0, rho0.conj().T, atol=1e-12)

    if method == "rk":
        ys = _evolve_rk(vec(rho0), L, t, rtol, atol, max_step)
    elif method == "expm":
        ys = _evolve_expm(vec(rho0), L, t)
    else:
        raise InvalidParameterError(f"unknown evolution method {method!r}")

    states = []
    for y in ys:
        m = unvec(y, n)
        states.append(DensityState(layout, _hermitize(m) if hermitian else m))
    return Trajectory(t, states)


def _evolve_rk(y0, L, t, rtol, atol, max_step):
    A = L.entries
    if t.size == 1:
        return [y0]
    sol = solve_ivp(lambda _, y: A @ y, (t[0], t[-1]), y0.astype(complex), method="DOP853",
                    t_eval=t, rtol=rtol, atol=atol, max_step=max_step)
    if sol.status != 0:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"integration failed at t = {reached:.6g} s: {sol.message}", reached)
    return [sol.y[:, k] for k in range(t.size)]


def _evolve_expm(y0, L, t):
    """Yield the state at every time in ``t`` (a generator, so long correlation
    records need not be held in memory)."""
    yield y0
    y = y0
    dts = np.diff(t)
    uniform = dts.size and np.allclose(dts, dts[0], rtol=1e-12, atol=0)
    if L.is_sparse:
        if uniform:
            ys = spla.expm_multiply(L.entries, y0, start=t[0], stop=t[-1], num=t.size, endpoint=True)
            yield from ys[1:]
            return
        for dt in dts:
            y = spla.expm_multiply(L.entries * dt, y)
            yield y
        return
    P = la.expm(L.entries * dts[0]) if uniform else None
    for dt in dts:
        y = (P if uniform else la.expm(L.entries * dt)) @ y
        yield y


def steady_state(L: SuperOperatorMatrix) -> DensityState:
    """Unique stationary state of ``L``.

    One (redundant) population row of ``L`` is replaced by the trace constraint and
    the linear system solved directly, with one step of iterative refinement.  If the
    bordered system is singular or badly conditioned the kernel is taken from an SVD
    instead, which also detects a degenerate (multi-dimensional) kernel.
    """
    n = L.layout.total_dim
    trace_row = vec(np.eye(n)).real
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0
    x = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", la.LinAlgWarning)
            warnings.simplefilter("error", spla.MatrixRankWarning)
            if L.is_sparse:
                A = L.entries.tolil(copy=True)
                A[0, :] = trace_row
                lu = spla.splu(A.tocsc())
                solve = lu.solve
            else:
                A = L.entries.copy()
                A[0, :] = trace_row
                lu = la.lu_factor(A)
                solve = lambda b: la.lu_solve(lu, b)  # noqa: E731
            x = solve(rhs)
            x = x + solve(rhs - A @ x)
        if not np.all(np.isfinite(x)):
            x = None
    except (la.LinAlgError, la.LinAlgWarning, spla.MatrixRankWarning, RuntimeError):
        x = None
    if x is None:
        x = _kernel_by_svd(L)

    rho = _hermitize(unvec(x, n))
    rho = rho / np.trace(rho).real
    return DensityState(L.layout, rho)


def _kernel_by_svd(L: SuperOperatorMatrix) -> np.ndarray:
    A = L.dense
    _, s, vh = la.svd(A)
    if s.size > 1 and s[-2] <= DEGENERACY_RTOL * s[0]:
        raise DegenerateSteadyStateError(
            f"Liouvillian kernel is degenerate (two smallest singular values "
            f"{s[-1]:.3g}, {s[-2]:.3g} relative to {s[0]:.3g})"
        )
    x = vh[-1].conj()
    n = L.layout.total_dim
    tr = np.trace(unvec(x, n))
    if abs(tr) < 1e-14:
        raise DegenerateSteadyStateError("kernel vector is traceless")
    return x / tr


def excited_projector(layout: HilbertLayout, sparse: bool = False) -> OperatorMatrix:
    if layout.qubit_slot is None:
        raise InvalidParameterError("layout has no qubit slot")
    return embed(basis_projector(2, 1), layout, layout.qubit_slot, sparse)


def qubit_population(state: DensityState) -> float:
    """Excited-state population of the qubit, ``Tr(P_e rho)``."""
    lay = state.layout
    dims = lay.subsystem_dims
    q = lay.qubit_slot
    if q is None:
        raise InvalidParameterError("layout has no qubit slot")
    rho = state.entries.reshape(dims + dims)
    nd = len(dims)
    # trace out everything but the qubit
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:nd])
    col = list(letters[:nd])
    col[q] = letters[nd]
    sub = "".join(row) + "".join(col) + "->" + row[q] + col[q]
    red = np.einsum(sub, rho)
    return float(red[1, 1].real)


def _sigma_ops(layout: HilbertLayout):
    _, sm, spl = qubit_ops()
    return embed(sm, layout, layout.qubit_slot).dense, embed(spl, layout, layout.qubit_slot).dense


def correlation_sigma(rho_ss: DensityState, L: SuperOperatorMatrix, t_max: float, n_samples: int,
                      frame_frequency: float = 0.0, method: str = "expm",
                      decay_tol: float = DECAY_TOL) -> CorrelationSeries:
    """``<sigma_-(t) sigma_+(0)>`` by evolving ``sigma_+ rho_ss`` under ``L`` (regression step).

    The series is flagged ``decayed=False`` when the final magnitude exceeds
    ``decay_tol`` times the initial one.
    """
    if n_samples < 2 or not t_max > 0:
        raise InvalidParameterError("need t_max > 0 and n_samples >= 2")
    layout = L.layout
    sm, spl = _sigma_ops(layout)
    x0 = spl @ rho_ss.entries
    times = np.linspace(0.0, t_max, n_samples)
    obs = vec(sm.T)
    if method == "expm":
        ys = _evolve_expm(vec(x0), L, times)
    elif method == "rk":
        ys = _evolve_rk(vec(x0), L, times, 1e-10, 1e-12, np.inf)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    values = np.array([obs @ y for y in ys])
    decayed = is_decayed(values, decay_tol)
    if not decayed:
        log.warning("correlation has not decayed by t_max = %.3g s (|C(t_max)/C(0)| = %.3g)",
                    t_max, abs(values[-1]) / abs(values[0]))
    return CorrelationSeries(times, values, frame_frequency, decayed)


def spectrum_from_correlation(series: CorrelationSeries, frequencies: np.ndarray | None = None,
                              force: bool = False) -> SpectrumTrace:
    """Qubit spectrum ``S(f)`` (per Hz, absolute frequency axis) from a correlation series."""
    freqs, s = one_sided_spectrum(series.times, series.values, frequencies,
                                  frame_frequency=series.frame_frequency, force=force)
    order = np.argsort(freqs, kind="stable")
    return SpectrumTrace(freqs[order], s[order], absolute=True,
                         meta={"model": "master_equation", "observable": "spectrum", **series.meta})


class _TwoToneME:
    """Liouvillian split as ``L = L_fixed + sum_x delta_x L_x`` for fast frame sweeps.

    Detunings enter ``H`` linearly, so rebuilding for a new drive frequency only
    rescales three precomputed commutator superoperators; working with detunings
    (not absolute GHz frequencies) avoids catastrophic cancellation.
    """

    def __init__(self, params: SystemParams, eps_d: float, eps_p: float, sparse: bool):
        self.params = params
        self.layout = params.layout()
        ref = DriveParams(omega_d=params.omega_eg, eps_d=eps_d, eps_p=eps_p)
        lay = self.layout
        H_ref = full_hamiltonian(params, ref, lay, sparse=sparse)
        # strip the detuning terms of the reference frame, keep couplings and drives
        det = detunings(params, ref)
        n_ops = self._number_ops(lay, sparse)
        H_fixed = H_ref
        for d, N in zip([det.delta_q, det.delta_r, *det.delta_b], n_ops):
            H_fixed = H_fixed + (TWO_PI * d) * N
        self.L_fixed = liouvillian(H_fixed, full_collapses(params, lay, sparse=sparse), sparse=sparse)
        self.L_parts = [commutator_super(-TWO_PI * N, sparse=sparse) for N in n_ops]

    @staticmethod
    def _number_ops(lay, sparse):
        sz, _, _ = qubit_ops()
        a = embed(ladder(lay.subsystem_dims[0]), lay, 0, sparse)
        ops = [0.5 * embed(sz, lay, 1, sparse), a.dag() @ a]
        for k in range(2, len(lay.subsystem_dims)):
            b = embed(ladder(lay.subsystem_dims[k]), lay, k, sparse)
            ops.append(b.dag() @ b)
        return ops

    def liouvillian(self, omega_d: float) -> SuperOperatorMatrix:
        det = detunings(self.params, DriveParams(omega_d=omega_d))
        L = self.L_fixed.entries
        for d, part in zip([det.delta_q, det.delta_r, *det.delta_b], self.L_parts):
            L = L + d * part.entries
        return SuperOperatorMatrix(self.layout, L)

    def population(self, omega_d: float) -> float:
        try:
            return qubit_population(steady_state(self.liouvillian(omega_d)))
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise SweepPointError(omega_d, exc) from exc


def two_tone_trace_me(params: SystemParams, eps_p: float, eps_d: float,
                      drive_freq_grid: Sequence[float], normalize: bool = True,
                      threads: int = 1, sparse: bool | None = None,
                      allow_multimode: bool = False) -> SpectrumTrace:
    """Steady-state excited population versus qubit drive frequency (master equation).

    Each grid point is an independent steady-state solve; ``threads > 1`` evaluates
    them concurrently and reassembles in grid order, so the result does not depend
    on scheduling.
    """
    if params.n_modes != 1 and not allow_multimode:
        raise InvalidParameterError("the master-equation engine handles exactly one phonon mode")
    grid = np.asarray(drive_freq_grid, dtype=float)
    if sparse is None:
        sparse = params.layout().total_dim ** 2 > SPARSE_THRESHOLD
    model = _TwoToneME(params, eps_d, eps_p, sparse)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pops = list(pool.map(model.population, grid))
    else:
        pops = [model.population(w) for w in grid]
    trace = SpectrumTrace(grid, np.array(pops), absolute=True, meta={
        "model": "master_equation",
        "observable": "excited_population",
        "params_hash": params_hash(params, eps_d, eps_p),
        "truncation": f"{params.cavity_dim}x2x{params.phonon_dim}",
    })
    return trace.normalized() if normalize else trace


def liouvillian_for(params: SystemParams, drive: DriveParams, sparse: bool = False) -> SuperOperatorMatrix:
    """Convenience alias for the full three-body Liouvillian."""
    return full_liouvillian(params, drive, sparse=sparse)


def spectrum_master_equation(params: SystemParams, drive: DriveParams, grid: Sequence[float],
                             t_max: float | None = None, dt: float | None = None,
                             force: bool = False) -> SpectrumTrace:
    """Regression spectrum of the full three-body model on ``grid`` (absolute Hz).

    The sampling follows the mean-field recipe: Nyquist at twice the largest
    offset from the frame (grid extent, qubit and phonon detunings, 10 Gamma~)
    and a record long enough for the slowest damping to fall by four decades.
    ``t_max``/``dt`` override either choice.  Dense propagation; slow above a
    few thousand superoperator rows.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidParameterError("empty frequency grid")
    det = detunings(params, drive)
    gamma_tilde = params.Gamma_phi + 0.5 * params.Gamma1
    max_offset = max(float(np.max(np.abs(grid - drive.omega_d))), abs(det.delta_q),
                     *(abs(d) for d in det.delta_b), 10 * gamma_tilde)
    rates = [gamma_tilde, 0.5 * params.Gamma1, 0.5 * params.kappa]
    rates += [0.5 * m.gamma for m in params.phonon_modes if m.g_qh != 0]
    rate = min(r for r in rates if r > 0)
    auto_dt, n = time_grid(max_offset, rate, decay_tol=DECAY_TOL * 0.1)
    dt = auto_dt if dt is None else dt
    t_max = auto_dt * (n - 1) if t_max is None else t_max
    n = max(2, int(np.ceil(t_max / dt - 1e-9)) + 1)
    L = full_liouvillian(params, drive)
    series = correlation_sigma(steady_state(L), L, dt * (n - 1), n, frame_frequency=drive.omega_d)
    trace = spectrum_from_correlation(series, grid, force=force)
    meta = {**trace.meta, "params_hash": params_hash(params, drive), "dt": dt, "n_times": n,
            "truncation": f"{params.cavity_dim}x2x{params.phonon_dim}"}
    return SpectrumTrace(trace.frequencies, trace.values, True, meta)
