"""Mean-field model of the qubit coupled to one or more phonon modes.

The readout resonator is eliminated: its qubit-state-conditioned coherent
amplitudes ``alpha_g``, ``alpha_e`` produce a qubit frequency shift and an extra
dephasing.  The remaining expectation values ``b_k = <b_k>``, ``s_- = <sigma_->``
and ``s_z = <sigma_z>`` obey

    d b_k  = (i Db_k - gamma_k / 2) b_k - i g_k s_-
    d s_-  = (i Dq~ - Gamma~) s_- + i s_z sum_k g_k b_k          [+ i eps_d s_z]
    d s_z  = 2i s_- (sum_k g_k b_k^* + eps_d) - 2i s_-^* (sum_k g_k b_k + eps_d)
             - Gamma1 (s_z + 1)

The bracketed drive term is off by default (``drive_in_coherence=False``); the
steady-population routine switches it on because without it a coherent drive
cannot build up any coherence.  With several modes the coupling enters as a
plain sum over modes, which is flagged in the output metadata.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, IntegrationError, InvalidParameterError
from .fourier import DECAY_TOL, SpectrumTrace, one_sided_spectrum, params_hash, time_grid
from .model import TWO_PI, DriveParams, SystemParams, detunings
from .odeint import STATUS_OK, integrate_mf

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CavityFields:
    alpha_g: complex | np.ndarray
    alpha_e: complex | np.ndarray


@dataclass(frozen=True)
class EffectiveQubitTerms:
    """Cavity-induced qubit shift and dephasing plus total linewidth, all in Hz."""

    omega_q_cav: float
    gamma_phi_cav: float
    gamma_tilde: float


@dataclass(frozen=True)
class MeanFieldState:
    b: tuple[complex, ...]
    s_minus: complex
    s_z: float

    @classmethod
    def ground(cls, n_modes: int = 1) -> "MeanFieldState":
        return cls(b=(0j,) * n_modes, s_minus=0j, s_z=-1.0)

    @classmethod
    def regression(cls, n_modes: int = 1) -> "MeanFieldState":
        """``(b, s_-, s_z) = (0, 1, 0)``: the state ``sigma_+ rho_s`` for a weakly driven qubit."""
        return cls(b=(0j,) * n_modes, s_minus=1.0 + 0j, s_z=0.0)

    def as_vector(self) -> np.ndarray:
        return np.array([*self.b, self.s_minus, self.s_z], dtype=complex)


@dataclass(frozen=True, eq=False)
class MeanFieldTrajectory:
    times: np.ndarray
    b: np.ndarray          # (n_times, n_modes)
    s_minus: np.ndarray
    s_z: np.ndarray        # complex storage; imaginary part stays at round-off
    meta: dict = field(default_factory=dict)

    def state(self, k: int) -> MeanFieldState:
        return MeanFieldState(tuple(self.b[k]), complex(self.s_minus[k]), float(self.s_z[k].real))


def _lambda(params: SystemParams, drive: DriveParams, sign: int) -> complex:
    """Fixed-point denominator ``i (Dr + sign chi) - kappa/2`` in Hz."""
    dr = detunings(params, drive).delta_r
    return 1j * (dr + sign * params.chi) - params.kappa / 2


def cavity_fields(params: SystemParams, drive: DriveParams, mode: str = "steady",
                  t: float | np.ndarray | None = None) -> CavityFields:
    """Qubit-state-conditioned resonator amplitudes.

    ``mode="steady"`` returns the fixed points ``alpha = i eps_p / (i(Dr -+ chi) - kappa/2)``;
    ``mode="transient"`` returns the exact solution from ``alpha(0) = 0`` at time(s) ``t``.
    """
    if not params.kappa > 0:
        raise InvalidParameterError("kappa must be > 0 for the cavity fields")
    lam_e = _lambda(params, drive, -1)
    lam_g = _lambda(params, drive, +1)
    if lam_e == 0 or lam_g == 0:
        raise InvalidParameterError("divergent cavity fixed point")
    ae = 1j * drive.eps_p / lam_e
    ag = 1j * drive.eps_p / lam_g
    if mode == "steady":
        return CavityFields(alpha_g=ag, alpha_e=ae)
    if mode == "transient":
        if t is None:
            raise InvalidParameterError("transient mode needs a time")
        tt = np.asarray(t, dtype=float)
        fg = ag * (1.0 - np.exp(TWO_PI * lam_g * tt))
        fe = ae * (1.0 - np.exp(TWO_PI * lam_e * tt))
        if tt.ndim == 0:
            return CavityFields(complex(fg), complex(fe))
        return CavityFields(fg, fe)
    raise InvalidParameterError(f"unknown cavity mode {mode!r}")


def effective_terms(fields: CavityFields, params: SystemParams) -> EffectiveQubitTerms:
    prod = fields.alpha_g * np.conj(fields.alpha_e)
    shift = 2.0 * params.chi * np.real(prod)
    deph = 2.0 * params.chi * np.imag(prod)
    gamma_tilde = params.Gamma_phi + deph + 0.5 * params.Gamma1
    return EffectiveQubitTerms(float(shift), float(deph), float(gamma_tilde))


def _terms(params: SystemParams, drive: DriveParams) -> EffectiveQubitTerms:
    if drive.eps_p == 0 or params.chi == 0:
        return EffectiveQubitTerms(0.0, 0.0, params.Gamma_phi + 0.5 * params.Gamma1)
    return effective_terms(cavity_fields(params, drive), params)


def _kernel_args(params: SystemParams, drive: DriveParams, drive_in_coherence: bool,
                 cavity_mode: str):
    det = detunings(params, drive)
    terms = _terms(params, drive)
    args = dict(
        delta_b=TWO_PI * np.array(det.delta_b, dtype=float),
        gamma_b=TWO_PI * np.array([m.gamma for m in params.phonon_modes], dtype=float),
        g=TWO_PI * np.array([m.g_qh for m in params.phonon_modes], dtype=float),
        delta_q=TWO_PI * (det.delta_q - terms.omega_q_cav),
        gamma_tilde=TWO_PI * terms.gamma_tilde,
        gamma1=TWO_PI * params.Gamma1,
        eps_d=TWO_PI * drive.eps_d,
        drive_coh=bool(drive_in_coherence),
        transient=False,
        chi=TWO_PI * params.chi,
        ag_ss=0j, ae_ss=0j, lam_g=0j, lam_e=0j,
        gamma_phi0=TWO_PI * params.Gamma_phi,
    )
    if cavity_mode == "transient" and drive.eps_p > 0:
        f = cavity_fields(params, drive)
        args.update(transient=True, delta_q=TWO_PI * det.delta_q,
                    ag_ss=complex(f.alpha_g), ae_ss=complex(f.alpha_e),
                    lam_g=TWO_PI * _lambda(params, drive, +1),
                    lam_e=TWO_PI * _lambda(params, drive, -1))
    elif cavity_mode not in ("steady", "transient"):
        raise InvalidParameterError(f"unknown cavity mode {cavity_mode!r}")
    return args, terms


def integrate_meanfield(params: SystemParams, drive: DriveParams, init: MeanFieldState,
                        t_max: float | None = None, rtol: float = 1e-8, atol: float = 1e-12,
                        times: Sequence[float] | None = None, n_samples: int = 1001,
                        drive_in_coherence: bool = False, cavity_mode: str = "steady",
                        max_steps: int = 50_000_000) -> MeanFieldTrajectory:
    """Integrate the mean-field equations from ``init`` in the frame of ``drive.omega_d``."""
    if len(init.b) != params.n_modes:
        raise InvalidParameterError("initial state has the wrong number of phonon modes")
    if times is None:
        if t_max is None or not t_max > 0:
            raise InvalidParameterError("give t_max > 0 or explicit sample times")
        times = np.linspace(0.0, t_max, n_samples)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise InvalidParameterError("sample times must start at 0 and increase strictly")
    args, terms = _kernel_args(params, drive, drive_in_coherence, cavity_mode)
    ys, status, t_reached, n_steps = integrate_mf(
        init.as_vector(), times, rtol, atol, max_steps,
        args["delta_b"], args["gamma_b"], args["g"], args["delta_q"], args["gamma_tilde"],
        args["gamma1"], args["eps_d"], args["drive_coh"], args["transient"], args["chi"],
        args["ag_ss"], args["ae_ss"], args["lam_g"], args["lam_e"], args["gamma_phi0"])
    if status != STATUS_OK:
        why = "step size underflow" if status == 1 else "step budget exhausted"
        raise IntegrationError(f"mean-field integration failed ({why}) at t = {t_reached:.6g} s",
                               float(t_reached))
    m = params.n_modes
    meta = {
        "model": "mean_field",
        "multimode_sum": m > 1,
        "drive_in_coherence": bool(drive_in_coherence),
        "cavity_mode": cavity_mode,
        "gamma_tilde_hz": terms.gamma_tilde,
        "omega_q_cav_hz": terms.omega_q_cav,
        "n_steps": int(n_steps),
    }
    return MeanFieldTrajectory(times, ys[:, :m], ys[:, m], ys[:, m + 1], meta)


def _slowest_rate(params: SystemParams, terms: EffectiveQubitTerms) -> float:
    rates = [terms.gamma_tilde, 0.5 * params.Gamma1]
    for mode in params.phonon_modes:
        if mode.g_qh != 0:
            rates.append(0.5 * mode.gamma)
    rate = min(rates)
    if not rate > 0:
        raise InvalidParameterError("a coupled mode or the qubit has zero damping; no spectrum exists")
    return rate


def spectrum_meanfield(params: SystemParams, drive: DriveParams, grid: Sequence[float],
                       t_max: float | None = None, rtol: float = 1e-8, force: bool = False,
                       drive_in_coherence: bool = False, cavity_mode: str = "steady",
                       decay_tol: float = DECAY_TOL, dt: float | None = None) -> SpectrumTrace:
    """Mean-field qubit spectrum on ``grid`` (absolute Hz), per-Hz normalisation.

    Integrates from ``(b, s_-, s_z) = (0, 1, 0)`` and transforms ``s_-(t)`` with the
    shared one-sided recipe.  ``drive.omega_d`` sets the rotating frame (and with it
    the resonator detuning).  Without ``t_max`` the record length is chosen so that
    the slowest damping rate has decayed by four decades.  Passing both ``t_max``
    and ``dt`` pins the time grid, which keeps the transform identical while
    parameters vary (as inside a fit).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidParameterError("empty frequency grid")
    terms = _terms(params, drive)
    det = detunings(params, drive)
    content = [abs(det.delta_q - terms.omega_q_cav), *(abs(d) for d in det.delta_b)]
    max_offset = max(np.max(np.abs(grid - drive.omega_d)), *content, 10 * terms.gamma_tilde)
    rate = _slowest_rate(params, terms)
    auto_dt, n = time_grid(max_offset, rate, decay_tol=decay_tol * 0.1)
    if dt is None:
        dt = auto_dt
    elif not dt > 0:
        raise InvalidParameterError("dt must be > 0")
    if t_max is None:
        t_max = auto_dt * (n - 1)
    n = max(2, int(math.ceil(t_max / dt - 1e-9)) + 1)
    times = dt * np.arange(n)
    traj = integrate_meanfield(params, drive, MeanFieldState.regression(params.n_modes),
                               times=times, rtol=rtol, drive_in_coherence=drive_in_coherence,
                               cavity_mode=cavity_mode)
    freqs, s = one_sided_spectrum(times, traj.s_minus, grid, frame_frequency=drive.omega_d,
                                  force=force, decay_tol=decay_tol)
    meta = {**traj.meta, "observable": "spectrum", "params_hash": params_hash(params, drive),
            "dt": dt, "n_times": n}
    return SpectrumTrace(freqs, s, absolute=True, meta=meta)


# --- steady state under a coherent qubit drive -------------------------------------------

def _stationary_pieces(sz, dq, gt, eps, K):
    """Coherence and total field at a trial ``s_z`` once ``b`` and ``s_-`` are slaved."""
    D = 1j * dq - gt - sz * K
    sm = -1j * sz * eps / D
    field = eps + 1j * sm * K
    return sm, field


def _sz_residual(sz, dq, gt, g1, eps, K):
    sm, field = _stationary_pieces(sz, dq, gt, eps, K)
    return -4.0 * np.imag(sm * np.conj(field)) - g1 * (sz + 1.0)


def _stationary_inputs(params: SystemParams, drive_freqs: np.ndarray, eps_d: float, eps_p: float):
    wd = np.asarray(drive_freqs, dtype=float)
    dq = np.empty_like(wd)
    gt = np.empty_like(wd)
    K = np.zeros(wd.shape, dtype=complex)
    for i, w in enumerate(wd):
        drv = DriveParams(omega_d=w, eps_d=eps_d, eps_p=eps_p)
        terms = _terms(params, drv)
        dq[i] = w - params.omega_eg - terms.omega_q_cav
        gt[i] = terms.gamma_tilde
    for m in params.phonon_modes:
        db = wd - m.omega_p
        with np.errstate(divide="ignore", invalid="ignore"):
            K += m.g_qh ** 2 / (1j * db - 0.5 * m.gamma)
    return dq, gt, K


def stationary_sz(params: SystemParams, drive_freqs: Sequence[float], eps_d: float,
                  eps_p: float = 0.0, n_scan: int = 201, n_bisect: int = 60):
    """Stationary ``s_z`` of the driven mean-field equations at each drive frequency.

    At a fixed point ``b_k`` and ``s_-`` are linear in the drive for given ``s_z``,
    which leaves one real equation ``F(s_z) = 0`` on ``[-1, 0]`` (no inversion is
    reachable with a zero-temperature phonon bath).  ``F(-1) >= 0 > F(0)`` brackets a
    root, found by vectorised bisection.  Returns ``(s_z, n_roots)``; ``n_roots > 1``
    marks frequencies where the mean-field equations are multistable.
    """
    wd = np.asarray(drive_freqs, dtype=float)
    dq, gt, K = _stationary_inputs(params, wd, eps_d, eps_p)
    dq, gt = TWO_PI * dq, TWO_PI * gt
    K = TWO_PI * K
    g1 = TWO_PI * params.Gamma1
    eps = TWO_PI * eps_d
    if eps_d == 0:
        return -np.ones_like(wd), np.ones(wd.shape, dtype=int)
    K = np.where(np.isfinite(K), K, 1e300)

    scan = np.linspace(-1.0, 0.0, n_scan)
    F = _sz_residual(scan[:, None], dq[None], gt[None], g1, eps, K[None])
    n_roots = np.sum(np.signbit(F[1:]) != np.signbit(F[:-1]), axis=0)

    lo = -np.ones_like(wd)
    hi = np.zeros_like(wd)
    f_lo = _sz_residual(lo, dq, gt, g1, eps, K)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        f_mid = _sz_residual(mid, dq, gt, g1, eps, K)
        same = np.signbit(f_mid) == np.signbit(f_lo)
        lo = np.where(same, mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi), n_roots


def _integrated_population(params: SystemParams, drive: DriveParams, t_budget: float | None,
                           tol: float = 1e-9) -> float:
    """Fallback: integrate from the ground state until the population stops moving."""
    rate = _slowest_rate(params, _terms(params, drive))
    t_budget = t_budget or 40.0 / (TWO_PI * rate)
    traj = integrate_meanfield(params, drive, MeanFieldState.ground(params.n_modes),
                               t_max=t_budget, n_samples=2001, drive_in_coherence=True)
    pop = 0.5 * (1.0 + traj.s_z.real)
    tail = pop[-200:]
    resid = float(np.max(tail) - np.min(tail))
    if resid > tol + 1e-6 * abs(pop[-1]):
        raise ConvergenceError(f"mean-field population still changing by {resid:.3g} "
                               f"at t = {t_budget:.3g} s", residual=resid)
    return float(pop[-1])


def steady_population_grid(params: SystemParams, drive_freqs: Sequence[float], eps_d: float,
                           eps_p: float = 0.0, drive_in_coherence: bool = True) -> np.ndarray:
    """Stationary excited population ``(1 + s_z)/2`` across a drive-frequency grid."""
    wd = np.asarray(drive_freqs, dtype=float)
    if not drive_in_coherence:
        # without the coherent-drive term s_- has no source; the ground state is the fixed point
        return np.zeros_like(wd)
    sz, n_roots = stationary_sz(params, wd, eps_d, eps_p)
    pop = 0.5 * (1.0 + sz)
    for i in np.flatnonzero(n_roots > 1):
        log.info("multistable mean-field point at %.9g Hz; selecting by integration", wd[i])
        pop[i] = _integrated_population(params, DriveParams(wd[i], eps_d, eps_p), None)
    return np.clip(pop, 0.0, 1.0)


def steady_population_meanfield(params: SystemParams, drive: DriveParams,
                                drive_in_coherence: bool = True) -> float:
    """Stationary excited-state population under the qubit drive ``drive``."""
    return float(steady_population_grid(params, [drive.omega_d], drive.eps_d, drive.eps_p,
                                        drive_in_coherence)[0])


def two_tone_trace_mf(params: SystemParams, eps_p: float, eps_d: float,
                      drive_freq_grid: Sequence[float], normalize: bool = True) -> SpectrumTrace:
    grid = np.asarray(drive_freq_grid, dtype=float)
    pops = steady_population_grid(params, grid, eps_d, eps_p)
    trace = SpectrumTrace(grid, pops, absolute=True, meta={
        "model": "mean_field",
        "observable": "excited_population",
        "multimode_sum": params.n_modes > 1,
        "drive_in_coherence": True,
        "params_hash": params_hash(params, eps_d, eps_p),
    })
    return trace.normalized() if normalize else trace
