"""Experiment-shaped sweeps: segmented grids, two-tone traces, Stark maps, feature extraction."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .dynamics import two_tone_trace_me
from .errors import InvalidParameterError
from .fourier import SpectrumTrace, grid_hash
from .meanfield import two_tone_trace_mf
from .model import DriveParams, SystemParams

ENGINES = ("mean_field", "master_equation")
_ALIASES = {"mf": "mean_field", "me": "master_equation"}

# points closer than this (Hz) are treated as the same frequency
DEDUP_TOL = 1e-3


def engine_name(engine: str) -> str:
    e = _ALIASES.get(engine, engine)
    if e not in ENGINES:
        raise InvalidParameterError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    return e


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    segments: tuple[tuple[float, float, float], ...]
    points: np.ndarray

    def __len__(self):
        return self.points.size

    @property
    def coarse_step(self) -> float:
        return max(s[2] for s in self.segments)

    @classmethod
    def from_segments(cls, segments: Sequence[tuple[float, float, float]]) -> "FrequencyGrid":
        pts = []
        for start, stop, step in segments:
            if not step > 0:
                raise InvalidParameterError("segment steps must be > 0")
            if stop < start:
                raise InvalidParameterError("segment stop must not precede start")
            n = int(np.floor((stop - start) / step + 1e-9))
            pts.append(start + step * np.arange(n + 1))
        return cls(tuple((float(a), float(b), float(c)) for a, b, c in segments),
                   _dedupe(np.concatenate(pts)))


def _dedupe(points: np.ndarray) -> np.ndarray:
    p = np.sort(np.asarray(points, dtype=float))
    if p.size == 0:
        return p
    keep = np.concatenate([[True], np.diff(p) > DEDUP_TOL])
    return p[keep]


def segmented_grid(fine_center: float, fine_span: float, fine_step: float,
                   coarse_span: float, coarse_step: float,
                   coarse_center: float | None = None) -> FrequencyGrid:
    """Union of a fine window around ``fine_center`` and a coarse window around
    ``coarse_center`` (defaults to ``fine_center``), sorted and deduplicated."""
    if not (fine_step > 0 and coarse_step > 0):
        raise InvalidParameterError("grid steps must be > 0")
    if not (0 < fine_span <= coarse_span):
        raise InvalidParameterError("need 0 < fine_span <= coarse_span")
    cc = fine_center if coarse_center is None else coarse_center
    return FrequencyGrid.from_segments([
        (cc - coarse_span / 2, cc + coarse_span / 2, coarse_step),
        (fine_center - fine_span / 2, fine_center + fine_span / 2, fine_step),
    ])


def multi_window_grid(centers: Sequence[float], fine_span: float, fine_step: float,
                      coarse_lo: float, coarse_hi: float, coarse_step: float) -> FrequencyGrid:
    """A coarse sweep with one fine window per entry of ``centers``."""
    segs = [(coarse_lo, coarse_hi, coarse_step)]
    segs += [(c - fine_span / 2, c + fine_span / 2, fine_step) for c in centers]
    return FrequencyGrid.from_segments(segs)


def _as_points(grid) -> np.ndarray:
    return grid.points if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)


@dataclass(frozen=True)
class AitFeature:
    center: float
    fwhm: float
    depth: float
    polarity: str  # "dip" | "peak"
    prominence: float = 0.0  # relative to the trace maximum


@dataclass(frozen=True, eq=False)
class StarkMap:
    qubit_freqs: np.ndarray
    drive_freqs: np.ndarray
    response: np.ndarray  # (n_qubit_freqs, n_drive_freqs)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.response.shape != (self.qubit_freqs.size, self.drive_freqs.size):
            raise InvalidParameterError("StarkMap response shape does not match its axes")

    def row(self, k: int) -> SpectrumTrace:
        return SpectrumTrace(self.drive_freqs, self.response[k], meta={"qubit_freq": float(self.qubit_freqs[k])})


def two_tone_sweep(params: SystemParams, drive: DriveParams, grid, engine: str = "mean_field",
                   threads: int = 1, normalize: bool = True) -> SpectrumTrace:
    """Normalised steady-state qubit population across ``grid`` with the chosen engine.

    ``drive.eps_d`` and ``drive.eps_p`` set the tone amplitudes; the grid supplies
    the drive frequencies, so ``drive.omega_d`` is ignored.
    """
    engine = engine_name(engine)
    pts = _as_points(grid)
    if engine == "master_equation":
        tr = two_tone_trace_me(params, drive.eps_p, drive.eps_d, pts, normalize=normalize, threads=threads)
    else:
        tr = two_tone_trace_mf(params, drive.eps_p, drive.eps_d, pts, normalize=normalize)
    return SpectrumTrace(tr.frequencies, tr.values, True,
                         {**tr.meta, "engine": engine, "grid_hash": grid_hash(pts)})


def stark_shift(stark_power_mw: float | np.ndarray, slope: float, omega_eg0: float):
    """Affine AC-Stark calibration ``omega_eg = omega_eg0 + slope * P`` (P linear, mW; slope Hz/mW)."""
    return omega_eg0 + slope * np.asarray(stark_power_mw, dtype=float)


def stark_sweep(params: SystemParams, drive: DriveParams, qubit_freqs: Sequence[float], grid,
                engine: str = "mean_field", threads: int = 1, normalize: bool = True) -> StarkMap:
    """One two-tone trace per effective qubit frequency; rows are independent and
    (with ``normalize``) each is scaled to its own maximum."""
    engine = engine_name(engine)
    if engine == "master_equation" and params.n_modes > 1:
        raise InvalidParameterError("multimode Stark sweeps require the mean-field engine")
    pts = _as_points(grid)
    qf = np.asarray(qubit_freqs, dtype=float)

    def row(w):
        return two_tone_sweep(replace(params, omega_eg=float(w)), drive, pts, engine,
                              normalize=normalize).values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, qf))
    else:
        rows = [row(w) for w in qf]
    return StarkMap(qf, pts, np.vstack(rows), meta={"engine": engine, "grid_hash": grid_hash(pts)})


# --- feature extraction --------------------------------------------------------------------

def _spacing_weights(f: np.ndarray) -> np.ndarray:
    d = np.diff(f)
    w = np.empty_like(f)
    w[0] = d[0]
    w[-1] = d[-1]
    w[1:-1] = 0.5 * (d[:-1] + d[1:])
    return w


def weighted_running_median(f: np.ndarray, y: np.ndarray, half_width: float) -> np.ndarray:
    """Median of ``y`` over ``|f' - f| <= half_width`` with each point weighted by the
    frequency span it represents, so densely sampled windows do not dominate."""
    w = _spacing_weights(f)
    lo = np.searchsorted(f, f - half_width * (1 + 1e-12), side="left")
    hi = np.searchsorted(f, f + half_width * (1 + 1e-12), side="right")
    out = np.empty_like(y)
    for i in range(f.size):
        out[i] = _weighted_median(y[lo[i]:hi[i]], w[lo[i]:hi[i]])
    return out


def smooth_background(f: np.ndarray, y: np.ndarray, half_width: float, anchor_step: float) -> np.ndarray:
    """Weighted running median evaluated on anchors ``anchor_step`` apart and linearly
    interpolated in between.

    Evaluating the median at every sample makes the background jump wherever a
    window edge crosses a grid point, which can land inside a narrow feature and
    bias its centre; the anchored version is continuous.
    """
    n = max(1, int(np.ceil((f[-1] - f[0]) / anchor_step - 1e-9)))
    anchors = np.linspace(f[0], f[-1], n + 1)
    w = _spacing_weights(f)
    vals = np.empty_like(anchors)
    for i, a in enumerate(anchors):
        lo = np.searchsorted(f, a - half_width * (1 + 1e-12), side="left")
        hi = np.searchsorted(f, a + half_width * (1 + 1e-12), side="right")
        vals[i] = _weighted_median(y[lo:hi], w[lo:hi])
    return np.interp(f, anchors, vals)


def _weighted_median(ys: np.ndarray, ws: np.ndarray) -> float:
    order = np.argsort(ys, kind="stable")
    cw = np.cumsum(ws[order])
    half = 0.5 * cw[-1]
    k = int(np.searchsorted(cw, half))
    if k + 1 < cw.size and abs(cw[k] - half) <= 1e-12 * cw[-1]:
        return 0.5 * (ys[order[k]] + ys[order[k + 1]])
    return ys[order[k]]


def _refine_extremum(f, y, i):
    if i == 0 or i == f.size - 1:
        return f[i]
    x0, x1, x2 = f[i - 1:i + 2]
    y0, y1, y2 = y[i - 1:i + 2]
    # vertex of the parabola through three (possibly unevenly spaced) points
    d = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d
    b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / d
    if a == 0:
        return f[i]
    xv = -b / (2 * a)
    return float(np.clip(xv, x0, x2))


def _crossing(f, sig, p, level, direction, stop):
    """Interpolated frequency where ``sig`` first falls below ``level`` walking from ``p``."""
    j = p
    while j != stop:
        nxt = j + direction
        if sig[nxt] < level:
            t = (sig[j] - level) / (sig[j] - sig[nxt])
            return f[j] + t * (f[nxt] - f[j])
        j = nxt
    return f[stop]


def _local_prominence(sig, p, lo, hi):
    """Prominence of ``sig[p]`` with its bases searched only inside ``[lo, hi)``.

    Each side runs until a higher sample or the window edge; the base on that side
    is the lowest sample passed.  Returns ``(prominence, left_base, right_base)``.
    """
    j = p
    while j > lo and sig[j - 1] <= sig[p]:
        j -= 1
    lb = j + int(np.argmin(sig[j:p + 1]))
    k = p
    while k < hi - 1 and sig[k + 1] <= sig[p]:
        k += 1
    rb = p + int(np.argmin(sig[p:k + 1]))
    return sig[p] - max(sig[lb], sig[rb]), lb, rb


def find_ait_features(trace: SpectrumTrace, min_prominence: float = 0.01,
                      background_points: int = 21, coarse_step: float | None = None,
                      max_fwhm: float | None = None, polarity: str = "both") -> list[AitFeature]:
    """Narrow dips/peaks on top of a smooth background.

    The background is a spacing-weighted running median over ``background_points``
    coarse grid steps, anchored every coarse step and interpolated (see
    :func:`smooth_background`).  ``coarse_step`` defaults to the larger of the widest
    grid spacing and a quarter of the span divided by ``background_points - 1``.  The
    same window bounds the prominence search, and prominence is capped at the
    height above the background.  ``min_prominence`` is relative to the
    largest ``|value|`` of the trace.  Centres come from parabolic refinement of the
    extremum, FWHM from interpolated half-prominence crossings.  Sorted by centre.
    """
    f = trace.frequencies
    y = trace.values
    if f.size < 5:
        raise InvalidParameterError("feature extraction needs at least 5 points")
    if polarity not in ("both", "dip", "peak"):
        raise InvalidParameterError(f"unknown polarity {polarity!r}")
    scale = np.max(np.abs(y))
    if scale == 0:
        return []
    if coarse_step is None:
        span = f[-1] - f[0]
        coarse_step = max(float(np.max(np.diff(f))), span / (4.0 * (background_points - 1)))
    half_width = 0.5 * (background_points - 1) * coarse_step
    bg = smooth_background(f, y, half_width, coarse_step)
    r = (y - bg) / scale
    lo_idx = np.searchsorted(f, f - half_width, side="left")
    hi_idx = np.searchsorted(f, f + half_width, side="right")

    found = []
    kinds = ("dip", "peak") if polarity == "both" else (polarity,)
    for kind in kinds:
        sig = -r if kind == "dip" else r
        cands, _ = find_peaks(sig)
        for p in cands:
            lo, hi = lo_idx[p], hi_idx[p]
            topo, _, _ = _local_prominence(sig, p, lo, hi)
            # height above the background, so a Fano partner does not inflate a feature
            prom = min(topo, sig[p])
            if prom < min_prominence:
                continue
            level = sig[p] - 0.5 * prom
            fl = _crossing(f, sig, p, level, -1, lo)
            fr = _crossing(f, sig, p, level, +1, hi - 1)
            fwhm = float(fr - fl)
            if not fwhm > 0 or (max_fwhm is not None and fwhm > max_fwhm):
                continue
            ref = abs(bg[p]) if kind == "dip" else abs(y[p])
            depth = float(np.clip(prom * scale / ref, 0.0, 1.0)) if ref > 0 else 1.0
            found.append(AitFeature(center=_refine_extremum(f, sig, p), fwhm=fwhm, depth=depth,
                                    polarity=kind, prominence=float(prom)))
    found.sort(key=lambda ft: (ft.center, ft.polarity))
    return found


def dominant_feature(features: Sequence[AitFeature], polarity: str | None = None) -> AitFeature | None:
    """The most prominent feature (optionally of one polarity)."""
    cands = [f for f in features if polarity is None or f.polarity == polarity]
    return max(cands, key=lambda ft: ft.prominence, default=None)


def ait_feature(trace: SpectrumTrace, omega_p: float, window: float, polarity: str | None = None,
                **kwargs) -> AitFeature | None:
    """The most prominent feature within ``window`` Hz of ``omega_p`` (``None`` if none).

    Extra keyword arguments go to :func:`find_ait_features`.
    """
    feats = [f for f in find_ait_features(trace, **kwargs) if abs(f.center - omega_p) <= window]
    return dominant_feature(feats, polarity)


@dataclass(frozen=True)
class FeatureTrack:
    """One feature followed across the rows of a Stark map."""

    rows: np.ndarray     # row indices where the feature was found
    centers: np.ndarray  # Hz, one per row in ``rows``

    @property
    def mean(self) -> float:
        return float(np.mean(self.centers))

    @property
    def spread(self) -> float:
        """Peak-to-peak excursion of the centre across rows (Hz)."""
        return float(np.ptp(self.centers))


def track_features(smap: StarkMap, polarity: str = "dip", min_prominence: float = 0.01,
                   link: float = 1e6, min_rows: int = 2, coarse_step: float | None = None) -> list[FeatureTrack]:
    """Group the features of every Stark-map row into tracks by drive frequency.

    Features are extracted row by row (:func:`find_ait_features`), pooled, sorted by
    centre and split wherever consecutive centres are more than ``link`` Hz apart.
    A track that contains more than one feature from the same row keeps the one
    nearest the track median.  Tracks seen in fewer than ``min_rows`` rows are
    dropped.  Sorted by mean centre.
    """
    found = []
    for k in range(smap.qubit_freqs.size):
        for ft in find_ait_features(smap.row(k), min_prominence=min_prominence,
                                    coarse_step=coarse_step, polarity=polarity):
            found.append((ft.center, k))
    if not found:
        return []
    found.sort()
    groups, current = [], [found[0]]
    for item in found[1:]:
        if item[0] - current[-1][0] > link:
            groups.append(current)
            current = []
        current.append(item)
    groups.append(current)

    tracks = []
    for grp in groups:
        med = float(np.median([c for c, _ in grp]))
        best: dict[int, float] = {}
        for c, k in grp:
            if k not in best or abs(c - med) < abs(best[k] - med):
                best[k] = c
        if len(best) >= min_rows:
            rows = np.array(sorted(best))
            tracks.append(FeatureTrack(rows, np.array([best[k] for k in rows])))
    return sorted(tracks, key=lambda t: t.mean)
