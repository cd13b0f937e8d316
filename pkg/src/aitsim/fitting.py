"""Least-squares extraction of phonon parameters from qubit spectra.

The forward model is ``amplitude * S(f; params) + background`` with ``S`` the
mean-field spectrum (or, behind a flag, the master-equation spectrum).  The
optimiser is scipy's bounded trust-region least squares with forward-difference
Jacobians; it works on internally rescaled variables so that every free
parameter moves on an O(1) scale.  Uncertainties come from the covariance
``RSS / (N - k) * (J^T J)^-1`` evaluated at the optimum with a fresh
finite-difference Jacobian (relative step 1e-4 of each parameter's scale).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .dynamics import spectrum_master_equation
from .errors import AitSimError, InvalidParameterError
from .fourier import SpectrumTrace
from .meanfield import _terms, spectrum_meanfield
from .model import DriveParams, SystemParams
from .spectroscopy import dominant_feature, engine_name, find_ait_features

log = logging.getLogger(__name__)

FIT_PARAMS = ("gamma", "g_qh", "gamma_tilde", "omega_p_offset", "omega_q_offset",
              "amplitude", "background")
DEFAULT_FREE = ("gamma", "g_qh", "amplitude", "background", "omega_p_offset")
JAC_STEP = 1e-4
# residual assigned to every point when the forward model fails (effectively infinite cost)
FAILED_RESIDUAL = 1e10


@dataclass(frozen=True)
class FitConfig:
    """What to fit and how.

    ``bounds`` and ``initial`` map parameter names to ``(lo, hi)`` and start
    values; missing entries are filled from the data (see :func:`initial_guess`).
    ``multi_start`` > 0 adds that many extra starts drawn uniformly inside the
    bounds from a generator seeded with ``seed``; the best result wins.
    """

    free_params: tuple[str, ...] = DEFAULT_FREE
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    initial: Mapping[str, float] = field(default_factory=dict)
    max_iterations: int = 200
    tol: float = 1e-10
    engine: str = "mean_field"
    multi_start: int = 0
    seed: int = 0

    def __post_init__(self):
        free = tuple(self.free_params)
        object.__setattr__(self, "free_params", free)
        object.__setattr__(self, "engine", engine_name(self.engine))
        unknown = [p for p in (*free, *self.bounds, *self.initial) if p not in FIT_PARAMS]
        if unknown:
            raise InvalidParameterError(f"unknown fit parameter(s): {', '.join(sorted(set(unknown)))}")
        if len(set(free)) != len(free) or not free:
            raise InvalidParameterError("free_params must be a non-empty list without repeats")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise InvalidParameterError(f"bounds for {name}: need lower < upper, got ({lo}, {hi})")
            if name in self.initial and not lo <= self.initial[name] <= hi:
                raise InvalidParameterError(f"initial {name} = {self.initial[name]} outside bounds")
        if self.max_iterations < 1 or not self.tol > 0 or self.multi_start < 0:
            raise InvalidParameterError("max_iterations >= 1, tol > 0 and multi_start >= 0 required")


@dataclass(frozen=True, eq=False)
class FitResult:
    values: dict[str, float]
    uncertainties: dict[str, float]
    residual_norm: float
    initial_residual_norm: float
    n_iterations: int
    converged: bool
    model_values: np.ndarray
    meta: dict = field(default_factory=dict)

    def as_lines(self) -> list[str]:
        """``key=value`` text, one entry per line, values with 15 significant digits."""
        lines = [f"{k}={self.values[k]:.15g}" for k in self.values]
        lines += [f"{k}_sigma={self.uncertainties[k]:.15g}" for k in self.uncertainties]
        lines += [f"residual_norm={self.residual_norm:.15g}",
                  f"initial_residual_norm={self.initial_residual_norm:.15g}",
                  f"n_iterations={self.n_iterations}",
                  f"converged={str(self.converged).lower()}"]
        lines += [f"{k}={v}" for k, v in self.meta.items()]
        return lines


@dataclass(frozen=True, eq=False)
class ResidualSummary:
    frequencies: np.ndarray
    residuals: np.ndarray
    reduced_cost: float
    sign_balance: float  # mean residual in units of its standard error


# --- forward model -------------------------------------------------------------------------

def apply_overrides(params: SystemParams, drive: DriveParams,
                    free_values: Mapping[str, float]) -> SystemParams:
    """Copy of ``params`` with the physical fit parameters substituted.

    ``gamma``/``g_qh``/``omega_p_offset`` act on every phonon mode (the offset is
    added to each mode frequency).  ``gamma_tilde`` is the total qubit linewidth
    including the cavity-induced dephasing at this ``drive``; it is realised by
    adjusting ``Gamma1`` with ``Gamma_phi`` held.
    """
    changes = {}
    if "gamma" in free_values:
        changes["gamma"] = float(free_values["gamma"])
    if "g_qh" in free_values:
        changes["g_qh"] = float(free_values["g_qh"])
    out = params
    if changes or "omega_p_offset" in free_values:
        off = float(free_values.get("omega_p_offset", 0.0))
        out = out.with_modes([replace(m, omega_p=m.omega_p + off, **changes) for m in out.phonon_modes])
    if "omega_q_offset" in free_values:
        out = replace(out, omega_eg=out.omega_eg + float(free_values["omega_q_offset"]))
    if "gamma_tilde" in free_values:
        cav = _terms(out, drive).gamma_phi_cav
        gamma1 = 2.0 * (float(free_values["gamma_tilde"]) - out.Gamma_phi - cav)
        if not gamma1 >= 0:
            raise InvalidParameterError("gamma_tilde below the dephasing floor")
        out = replace(out, Gamma1=gamma1)
    return out


def _engine_spectrum(params, drive, grid, engine, time_grid):
    t_max, dt = time_grid if time_grid is not None else (None, None)
    if engine == "mean_field":
        return spectrum_meanfield(params, drive, grid, t_max=t_max, dt=dt)
    return spectrum_master_equation(params, drive, grid, t_max=t_max, dt=dt)


def forward_model(params: SystemParams, drive: DriveParams, grid: Sequence[float],
                  free_values: Mapping[str, float], engine: str = "mean_field",
                  time_grid: tuple[float, float] | None = None) -> SpectrumTrace:
    """``amplitude * S + background`` on ``grid`` with ``free_values`` substituted.

    Missing ``amplitude``/``background`` default to 1 and 0.  ``time_grid`` is an
    optional ``(t_max, dt)`` that pins the sampling of the underlying series.
    """
    grid = np.asarray(grid, dtype=float)
    spec = _engine_spectrum(apply_overrides(params, drive, free_values), drive, grid,
                            engine_name(engine), time_grid)
    amp = float(free_values.get("amplitude", 1.0))
    bg = float(free_values.get("background", 0.0))
    return SpectrumTrace(spec.frequencies, amp * spec.values + bg, spec.absolute,
                         {**spec.meta, "amplitude": amp, "background": bg})


def synthetic_spectrum(params: SystemParams, drive: DriveParams, grid: Sequence[float],
                       noise: float = 0.0, seed: int = 0) -> SpectrumTrace:
    """Peak-normalised mean-field spectrum plus Gaussian noise of standard deviation
    ``noise`` (in units of the peak), drawn from ``numpy.random.default_rng(seed)``."""
    clean = spectrum_meanfield(params, drive, np.asarray(grid, dtype=float)).normalized()
    rng = np.random.default_rng(seed)
    values = clean.values + noise * rng.normal(size=len(clean)) if noise > 0 else clean.values
    return SpectrumTrace(clean.frequencies, values, True,
                         {**clean.meta, "noise": noise, "seed": seed})


# --- initial guesses -------------------------------------------------------------------------

def initial_guess(data: SpectrumTrace, params: SystemParams, drive: DriveParams) -> dict[str, float]:
    """Data-driven start values for every fit parameter.

    The feature nearest the nominal phonon frequency supplies the dressed-mode
    shift ``delta`` and width ``w``.  With ``Delta = omega_eg - omega_p`` and the
    qubit linewidth ``G``, dispersive hybridisation gives
    ``g^2 ~ |delta| (Delta^2 + G^2) / |Delta|`` and ``gamma ~ w - 2 g^2 G / (Delta^2 + G^2)``.
    Amplitude and background come from a linear fit of the data to the model at
    those values.  Falls back to the nominal ``params`` when no feature is found.
    """
    mode = params.mode
    gt = _terms(params, drive).gamma_tilde
    delta_q = params.omega_eg - mode.omega_p
    guess = {"gamma": mode.gamma, "g_qh": mode.g_qh, "gamma_tilde": gt,
             "omega_p_offset": 0.0, "omega_q_offset": 0.0}
    feats = [f for f in find_ait_features(data) if abs(f.center - mode.omega_p) < 0.5 * gt]
    ft = dominant_feature(feats)
    if ft is not None and delta_q != 0:
        shift = abs(ft.center - mode.omega_p)
        denom = delta_q ** 2 + gt ** 2
        g2 = shift * denom / abs(delta_q)
        if g2 > 0:
            guess["g_qh"] = math.sqrt(g2)
        guess["gamma"] = max(ft.fwhm - 2.0 * g2 * gt / denom, 0.1 * ft.fwhm)
    return guess


def _linear_amp_bg(model: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    A = np.column_stack([model, np.ones_like(model)])
    (amp, bg), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(amp), float(bg)


def _default_bounds(name: str, x0: float, data_scale: float, gt: float) -> tuple[float, float]:
    if name in ("gamma", "g_qh", "gamma_tilde"):
        return (0.25 * x0, 4.0 * x0) if x0 > 0 else (0.0, 1.0)
    if name == "omega_p_offset":
        return (-0.2 * gt, 0.2 * gt)
    if name == "omega_q_offset":
        return (-gt, gt)
    if name == "amplitude":
        return (0.0, 10.0 * x0) if x0 > 0 else (0.0, 1.0)
    return (-data_scale, data_scale)


def _scale(name: str, x0: float, bounds: tuple[float, float], data_scale: float) -> float:
    if name == "background":
        return data_scale
    if x0 != 0:
        return abs(x0)
    return 0.25 * (bounds[1] - bounds[0])


# --- the fit ----------------------------------------------------------------------------------

def _jacobian(fun, u: np.ndarray, r0: np.ndarray) -> np.ndarray:
    J = np.empty((r0.size, u.size))
    for j in range(u.size):
        du = JAC_STEP * max(1.0, abs(u[j]))
        up = u.copy()
        up[j] += du
        J[:, j] = (fun(up) - r0) / du
    return J


def _covariance(J: np.ndarray, rss: float, n: int, k: int) -> np.ndarray | None:
    if n <= k:
        return None
    JTJ = J.T @ J
    try:
        w = np.linalg.eigvalsh(JTJ)
    except np.linalg.LinAlgError:
        return None
    if w[0] <= w[-1] * 1e-14 or not np.all(np.isfinite(w)):
        return None
    return rss / (n - k) * np.linalg.inv(JTJ)


def fit_spectrum(data: SpectrumTrace, params: SystemParams, drive: DriveParams,
                 config: FitConfig = FitConfig()) -> FitResult:
    """Least-squares fit of ``data`` with the forward model; deterministic given inputs."""
    free = config.free_params
    n, k = len(data), len(free)
    if n < 3 * k:
        raise InvalidParameterError(f"need at least {3 * k} data points for {k} free parameters")
    grid = data.frequencies
    y = data.values
    data_scale = float(np.max(np.abs(y))) or 1.0
    gt = _terms(params, drive).gamma_tilde

    guess = initial_guess(data, params, drive)
    guess.update({p: v for p, v in config.initial.items() if p not in ("amplitude", "background")})
    bounds = {p: tuple(config.bounds.get(p, _default_bounds(p, guess.get(p, 0.0), data_scale, gt)))
              for p in FIT_PARAMS if p not in ("amplitude", "background")}

    # pin the time grid at the slowest decay the bounds allow, so the transform is fixed
    slow = {p: bounds[p][0] for p in ("gamma",) if p in free}
    if "gamma_tilde" in free:
        slow["gamma_tilde"] = max(bounds["gamma_tilde"][0], 1e-3 * guess["gamma_tilde"])
    slow_params = apply_overrides(params, drive, slow)
    ref = spectrum_meanfield(slow_params, drive, grid)
    time_grid = (ref.meta["dt"] * (ref.meta["n_times"] - 1), ref.meta["dt"])

    phys = [p for p in free if p not in ("amplitude", "background")]
    shape = forward_model(params, drive, grid, {p: guess[p] for p in phys},
                          config.engine, time_grid).values
    amp0, bg0 = _linear_amp_bg(shape, y)
    guess["amplitude"] = config.initial.get("amplitude", amp0)
    guess["background"] = config.initial.get("background", bg0)
    for p in ("amplitude", "background"):
        bounds[p] = tuple(config.bounds.get(p, _default_bounds(p, guess[p], data_scale, gt)))

    x0 = np.array([float(np.clip(guess[p], *bounds[p])) for p in free])
    scales = np.array([_scale(p, guess[p], bounds[p], data_scale) for p in free])
    lo = np.array([bounds[p][0] for p in free]) / scales
    hi = np.array([bounds[p][1] for p in free]) / scales
    fixed = {p: guess[p] for p in ("amplitude", "background") if p not in free}
    n_failed = 0

    def residuals(u):
        nonlocal n_failed
        vals = dict(fixed, **{p: float(v) for p, v in zip(free, u * scales)})
        try:
            model = forward_model(params, drive, grid, vals, config.engine, time_grid).values
        except AitSimError as exc:
            n_failed += 1
            log.debug("forward model failed at %s: %s", vals, exc)
            return np.full(n, FAILED_RESIDUAL * data_scale)
        return model - y

    starts = [x0 / scales]
    if config.multi_start:
        rng = np.random.default_rng(config.seed)
        starts += [rng.uniform(lo, hi) for _ in range(config.multi_start)]
    r_init = residuals(starts[0])
    best = None
    for u0 in starts:
        res = least_squares(residuals, np.clip(u0, lo, hi), bounds=(lo, hi), method="trf",
                            x_scale=1.0, diff_step=JAC_STEP, ftol=config.tol, xtol=config.tol,
                            gtol=config.tol, max_nfev=config.max_iterations * (k + 1))
        if best is None or res.cost < best.cost:
            best = res

    u = best.x
    r = residuals(u)
    rss = float(r @ r)
    J = _jacobian(residuals, u, r)
    cov = _covariance(J, rss, n, k)
    if cov is None:
        sig = np.full(k, np.inf)
    else:
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * scales
    values = {p: float(v) for p, v in zip(free, u * scales)}
    meta = {
        "engine": config.engine,
        "free_params": ",".join(free),
        "fixed_gamma_tilde_hz": f"{gt:.15g}" if "gamma_tilde" not in free else "free",
        "initial_guess": ",".join(f"{p}:{guess[p]:.9g}" for p in free),
        "optimizer": "trust-region-reflective least squares",
        "optimizer_status": int(best.status),
        "n_function_evals": int(best.nfev),
        "failed_evaluations": n_failed,
        "multi_start": config.multi_start,
    }
    return FitResult(values=values, uncertainties={p: float(s) for p, s in zip(free, sig)},
                     residual_norm=math.sqrt(rss), initial_residual_norm=float(np.linalg.norm(r_init)),
                     n_iterations=int(best.njev or best.nfev), converged=bool(best.status > 0),
                     model_values=r + y, meta=meta)


def residual_diagnostics(data: SpectrumTrace, fit: FitResult) -> ResidualSummary:
    """Residuals (model - data) on the data grid, the reduced cost and the sign balance."""
    r = fit.model_values - data.values
    n, k = r.size, len(fit.values)
    rss = float(r @ r)
    reduced = rss / (n - k) if n > k else math.inf
    sd = float(np.std(r, ddof=1)) if n > 1 else 0.0
    balance = float(np.mean(r) / (sd / math.sqrt(n))) if sd > 0 else 0.0
    return ResidualSummary(data.frequencies, r, reduced, balance)


def profile_distance(data: SpectrumTrace, params: SystemParams, drive: DriveParams,
                     config: FitConfig, fit: FitResult, name: str, value: float) -> float:
    """Distance, in standard deviations, of ``name = value`` from the best fit.

    Refits with ``name`` held at ``value`` and returns ``sqrt(dRSS / s^2)`` with
    ``s^2 = RSS / (N - k)`` of the full fit (the likelihood-ratio measure).  Unlike
    the Jacobian uncertainty this stays meaningful at a parameter boundary, e.g.
    ``g_qh = 0``, where the spectrum depends on ``g_qh^2`` only.
    """
    if name not in config.free_params:
        raise InvalidParameterError(f"{name} is not a free parameter of this fit")
    free = tuple(p for p in config.free_params if p != name)
    if name in ("amplitude", "background"):
        held_params = params
        initial = {**{p: v for p, v in config.initial.items() if p in free}, name: value}
    else:
        held_params = apply_overrides(params, drive, {name: value})
        initial = {p: v for p, v in config.initial.items() if p in free}
    bounds = {p: b for p, b in config.bounds.items() if p in free}
    held = fit_spectrum(data, held_params, drive,
                        replace(config, free_params=free, initial=initial, bounds=bounds))
    n, k = len(data), len(config.free_params)
    s2 = fit.residual_norm ** 2 / (n - k)
    delta = max(held.residual_norm ** 2 - fit.residual_norm ** 2, 0.0)
    return math.sqrt(delta / s2) if s2 > 0 else math.inf
