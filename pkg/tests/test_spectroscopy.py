from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aitsim.errors import InvalidParameterError
from aitsim.fourier import SpectrumTrace
from aitsim.model import DriveParams, SystemParams, comb_modes
from aitsim.spectroscopy import (
    FrequencyGrid,
    StarkMap,
    ait_feature,
    engine_name,
    find_ait_features,
    multi_window_grid,
    segmented_grid,
    smooth_background,
    stark_shift,
    stark_sweep,
    track_features,
    two_tone_sweep,
    weighted_running_median,
)


def lorentz(f, c, fwhm):
    h = fwhm / 2
    return h**2 / ((f - c) ** 2 + h**2)


# --- grids -------------------------------------------------------------------------------

def test_protocol_grid():
    g = segmented_grid(6.064e9, 200e3, 250.0, 20e6, 250e3)
    assert len(g) == 801 + 81 - 1  # the centre coincides
    assert np.all(np.diff(g.points) > 0)
    fine = g.points[np.abs(g.points - 6.064e9) <= 100e3]
    assert fine.size == 801
    assert g.coarse_step == 250e3


def test_degenerate_segmentation_is_uniform():
    g = segmented_grid(1e6, 1e5, 1e3, 1e5, 1e3)
    np.testing.assert_allclose(g.points, 1e6 + np.arange(-50e3, 50e3 + 1, 1e3))


@settings(max_examples=30)
@given(st.floats(1e3, 1e5), st.floats(1.0, 1e3), st.integers(2, 50), st.floats(-1e6, 1e6))
def test_grids_strictly_ascending(fine_span, fine_step, ratio, offset):
    g = segmented_grid(6e9, fine_span, fine_step, fine_span * ratio, fine_step * ratio * 3,
                       coarse_center=6e9 + offset)
    assert np.all(np.diff(g.points) > 0)


def test_grid_validation():
    with pytest.raises(InvalidParameterError):
        segmented_grid(1e6, 2e5, 1e3, 1e5, 1e3)
    with pytest.raises(InvalidParameterError):
        segmented_grid(1e6, 1e5, 0.0, 2e5, 1e3)
    with pytest.raises(InvalidParameterError):
        FrequencyGrid.from_segments([(2.0, 1.0, 0.1)])


def test_multi_window_grid_contains_every_window():
    centers = [6.0e9, 6.01e9, 6.02e9]
    g = multi_window_grid(centers, 1e4, 100.0, 5.99e9, 6.03e9, 1e6)
    for c in centers:
        assert np.sum(np.abs(g.points - c) <= 5e3) == 101


def test_engine_aliases():
    assert engine_name("me") == "master_equation" and engine_name("mf") == "mean_field"
    with pytest.raises(InvalidParameterError):
        engine_name("quantum_jumps")


def test_stark_shift_affine():
    np.testing.assert_allclose(stark_shift([0.0, 2.0], -1e6, 6.0e9), [6.0e9, 5.998e9])


# --- feature extraction -----------------------------------------------------------------

def test_synthetic_dip_on_flat_background():
    f = np.linspace(-2e6, 2e6, 4001)
    y = 1 - 0.5 * lorentz(f, 1.2e4, 1e4)
    [feat] = find_ait_features(SpectrumTrace(f, y))
    assert feat.polarity == "dip"
    assert feat.fwhm == pytest.approx(1e4, rel=0.05)
    assert feat.center == pytest.approx(1.2e4, abs=f[1] - f[0])
    assert feat.depth == pytest.approx(0.5, rel=0.02)


def test_flat_trace_has_no_features():
    f = np.linspace(0, 1e6, 101)
    assert find_ait_features(SpectrumTrace(f, np.ones_like(f))) == []
    assert find_ait_features(SpectrumTrace(f, np.zeros_like(f))) == []


def test_two_dips_sorted_by_center():
    f = np.linspace(-1e6, 1e6, 2001)
    y = 1 - 0.4 * lorentz(f, 3e5, 1e4) - 0.6 * lorentz(f, -2e5, 2e4)
    feats = find_ait_features(SpectrumTrace(f, y))
    assert [round(ft.center, -3) for ft in feats] == [-2e5, 3e5]
    assert feats[0].fwhm == pytest.approx(2e4, rel=0.05)


def test_dip_on_broad_line_segmented_grid():
    g = segmented_grid(0.0, 2e5, 250.0, 2e7, 2.5e5)
    f = g.points
    y = lorentz(f, 3e6, 8.5e5) * (1 - 0.8 * lorentz(f, 0.0, 1.2e4))
    feat = ait_feature(SpectrumTrace(f, y), 0.0, 5e4, coarse_step=g.coarse_step)
    assert feat.polarity == "dip"
    assert feat.center == pytest.approx(0.0, abs=250.0)
    # the median background sits ~4 % below the steep flank of the line, which
    # lowers the half-prominence level: the width is biased low by ~5 %
    assert feat.fwhm == pytest.approx(1.2e4, rel=0.1)


@settings(max_examples=30)
@given(st.floats(-3e5, 3e5), st.floats(5e3, 5e4), st.floats(0.05, 0.9), st.floats(-2e5, 2e5))
def test_mirrored_trace_gives_mirrored_centers(c, w, depth, tilt):
    f = np.linspace(-1e6, 1e6, 2001)
    y = 1 + tilt * f / 1e12 - depth * lorentz(f, c, w) + 0.3 * depth * lorentz(f, c + 3 * w, w)
    a = find_ait_features(SpectrumTrace(f, y))
    b = find_ait_features(SpectrumTrace(-f[::-1], y[::-1]))
    assert len(a) == len(b)
    for fa, fb in zip(a, reversed(b)):
        assert fb.center == pytest.approx(-fa.center, abs=1e-6)
        assert fb.fwhm == pytest.approx(fa.fwhm, rel=1e-9)
        assert fb.polarity == fa.polarity


def test_feature_invariants_hold():
    rng = np.random.default_rng(3)
    f = np.linspace(-1e6, 1e6, 1001)
    y = lorentz(f, 0, 4e5) + 0.02 * rng.normal(size=f.size)
    for ft in find_ait_features(SpectrumTrace(f, y)):
        assert ft.fwhm > 0 and 0 <= ft.depth <= 1


def test_feature_extraction_validation():
    f = np.arange(4.0)
    with pytest.raises(InvalidParameterError):
        find_ait_features(SpectrumTrace(f, f))
    with pytest.raises(InvalidParameterError):
        find_ait_features(SpectrumTrace(np.arange(9.0), np.ones(9)), polarity="bump")


def test_weighted_median_ignores_sampling_density():
    # dense cluster of high values should not dominate a span-weighted median
    f = np.concatenate([np.linspace(-10, -0.1, 10), np.linspace(0, 0.99, 100), np.linspace(1, 10, 10)])
    y = np.where((f >= 0) & (f < 1), 5.0, 1.0)
    bg = weighted_running_median(f, y, 20.0)
    assert np.all(bg == 1.0)
    assert np.all(smooth_background(f, y, 20.0, 1.0) == 1.0)


def test_background_is_continuous_across_window_edges():
    g = segmented_grid(0.0, 2e5, 250.0, 2e7, 2.5e5)
    f = g.points
    y = lorentz(f, 3e6, 8.5e5)
    bg = smooth_background(f, y, 2.5e6, 2.5e5)
    fine = np.abs(f) <= 1e5
    # piecewise linear between anchors: second differences vanish inside the fine window
    d2 = np.diff(bg[fine], 2)
    assert np.abs(d2[np.abs(f[fine][1:-1]) > 300]).max() < 1e-12


# --- two-tone and Stark sweeps ------------------------------------------------------------

@pytest.fixture(scope="module")
def fine_window():
    wp = 6.064e9
    return segmented_grid(wp, 60e3, 500.0, 4e6, 250e3)


def test_two_tone_sweep_engines_agree(fine_window):
    p = SystemParams.table_s1(cavity_dim=3, phonon_dim=3)
    drive = DriveParams(p.mode.omega_p, eps_d=1e3, eps_p=1e4)
    me = two_tone_sweep(p, drive, fine_window, "me")
    mf = two_tone_sweep(p, drive, fine_window, "mf")
    assert me.meta["engine"] == "master_equation" and mf.meta["grid_hash"] == me.meta["grid_hash"]
    wp = p.mode.omega_p
    for pol in ("dip", "peak"):
        a = ait_feature(me, wp, 3e4, pol, coarse_step=fine_window.coarse_step)
        b = ait_feature(mf, wp, 3e4, pol, coarse_step=fine_window.coarse_step)
        assert abs(a.center - b.center) <= 500.0
        assert a.fwhm == pytest.approx(b.fwhm, rel=0.1)


def test_two_tone_sweep_table_s1_feature_and_control(fine_window):
    p = SystemParams.table_s1()
    drive = DriveParams(p.mode.omega_p, eps_d=1e3, eps_p=1e4)
    tr = two_tone_sweep(p, drive, fine_window)
    dip = ait_feature(tr, p.mode.omega_p, p.mode.gamma, "dip", coarse_step=fine_window.coarse_step)
    assert dip is not None
    flat = two_tone_sweep(p.with_mode(g_qh=0.0), drive, fine_window)
    assert find_ait_features(flat, coarse_step=fine_window.coarse_step) == []


def test_two_tone_sweep_is_pure():
    p = SystemParams.table_s1(cavity_dim=3, phonon_dim=3)
    grid = p.mode.omega_p + np.linspace(-2e4, 2e4, 7)
    drive = DriveParams(p.mode.omega_p, 1e3, 1e4)
    a = two_tone_sweep(p, drive, grid, "me", threads=1)
    b = two_tone_sweep(p, drive, grid, "me", threads=4)
    c = two_tone_sweep(p, drive, grid[::-1].copy()[::-1], "me")
    assert np.array_equal(a.values, b.values) and np.array_equal(a.values, c.values)


def test_far_detuned_feature_is_dispersively_suppressed():
    """Absolute dip amplitude (population units) at |Delta| > 20 Gamma versus on resonance."""
    p = SystemParams.table_s1()
    wp = p.mode.omega_p
    g = FrequencyGrid.from_segments([(wp - 10e6, wp + 10e6, 250e3), (wp - 1e5, wp + 1e5, 250.0)])
    drive = DriveParams(wp, 1e3, 1e4)

    def amplitude(detuning):
        tr = two_tone_sweep(replace(p, omega_eg=wp + detuning), drive, g, normalize=False)
        ft = ait_feature(tr, wp, 3e4, "dip", coarse_step=g.coarse_step, min_prominence=1e-6)
        return 0.0 if ft is None else ft.prominence * np.abs(tr.values).max()

    on = amplitude(0.0)
    assert on > 0
    for d in (21 * p.Gamma, -21 * p.Gamma):
        assert amplitude(d) < 0.05 * on


def test_stark_row_reproduces_two_tone_sweep(fine_window):
    p = SystemParams.table_s1()
    drive = DriveParams(p.mode.omega_p, 1e3, 1e4)
    m = stark_sweep(p, drive, [p.mode.omega_p, p.omega_eg], fine_window)
    direct = two_tone_sweep(replace(p, omega_eg=p.mode.omega_p), drive, fine_window)
    assert np.array_equal(m.response[0], direct.values)
    assert m.response.shape == (2, len(fine_window))
    assert m.row(1).meta["qubit_freq"] == p.omega_eg


def test_stark_threads_bit_identical(fine_window):
    p = SystemParams.table_s1()
    drive = DriveParams(p.mode.omega_p, 1e3, 1e4)
    q = p.mode.omega_p + np.array([-2e6, 0.0, 2e6])
    a = stark_sweep(p, drive, q, fine_window, threads=1)
    b = stark_sweep(p, drive, q, fine_window, threads=3)
    assert np.array_equal(a.response, b.response)


def test_stark_feature_positions_stay_put():
    """The transparency dip hardly moves while the qubit moves by MHz.  It is not fixed
    to one fine step: the dispersive pull of the qubit shifts it by up to ~1 kHz here."""
    p = SystemParams.table_s1()
    wp = p.mode.omega_p
    g = segmented_grid(wp, 2e5, 250.0, 2e7, 2.5e5)
    drive = DriveParams(wp, 1e3, 1e4)
    q = wp + np.array([-3e6, -2e6, -1e6, 1e6, 2e6, 3e6])
    m = stark_sweep(p, drive, q, g)
    centers = [ait_feature(m.row(k), wp, 5e3, "dip", coarse_step=g.coarse_step, min_prominence=0.005).center
               for k in range(q.size)]
    assert max(centers) - min(centers) < 2e3
    assert (max(centers) - min(centers)) / (q.max() - q.min()) < 1e-3


def test_multimode_stark_requires_mean_field():
    p = SystemParams.table_s1(phonon_modes=comb_modes(6.064e9, 8.53e6, 3, 7e3, 2e5))
    with pytest.raises(InvalidParameterError):
        stark_sweep(p, DriveParams(6.064e9, 1e3, 1e4), [6.064e9], [6.064e9, 6.065e9], engine="me")


def test_track_features_groups_rows_by_mode():
    """Synthetic map: a peak moving across rows plus narrow dips at two fixed
    frequencies that wander by a few Hz on a flat background; one row has no dips."""
    f = np.linspace(-5e6, 5e6, 4001)
    qs = np.linspace(-2e6, 2e6, 9)
    rows = []
    for k, q in enumerate(qs):
        y = 1 + np.exp(-0.5 * ((f - (0.3 * q + 3e5)) / 2e4) ** 2)
        if k != 4:
            for c in (-1e6 + 3.0 * k, 2e6 - 2.0 * k):
                y = y - 0.2 * np.exp(-0.5 * ((f - c) / 1e4) ** 2)
        rows.append(y)
    smap = StarkMap(qs, f, np.vstack(rows))
    tracks = track_features(smap, polarity="dip", min_prominence=0.01)
    assert len(tracks) == 2
    for t, c0, slope in zip(tracks, (-1e6, 2e6), (3.0, -2.0)):
        assert list(t.rows) == [0, 1, 2, 3, 5, 6, 7, 8]
        np.testing.assert_allclose(t.centers, c0 + slope * t.rows, atol=30.0)
        assert t.spread < 100.0
    assert tracks[0].mean < tracks[1].mean
    assert track_features(smap, min_rows=10) == []
