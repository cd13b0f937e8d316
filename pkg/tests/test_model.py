import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aitsim.dynamics import evolve
from aitsim.errors import InvalidDimensionError, InvalidParameterError
from aitsim.hilbert import HilbertLayout, liouvillian
from aitsim.model import (
    DriveParams,
    PhononMode,
    SystemParams,
    comb_modes,
    detunings,
    effective_collapses,
    effective_hamiltonian,
    figures_of_merit,
    fsr,
    full_collapses,
    full_hamiltonian,
    piezo_fundamental,
)

freqs = st.floats(1e6, 1e10)


# --- parameter types --------------------------------------------------------------------

def test_gamma1_default_and_total_linewidth(table_s1):
    assert table_s1.Gamma1 == 2 * table_s1.Gamma
    assert table_s1.Gamma_phi == 0
    assert table_s1.Gamma_phi + table_s1.Gamma1 / 2 == table_s1.Gamma


@pytest.mark.parametrize("bad", [dict(kappa=-1.0), dict(omega_r=0.0), dict(phonon_modes=()),
                                 dict(cavity_dim=1), dict(Gamma_phi=float("nan"))])
def test_system_params_rejects_invalid(bad):
    with pytest.raises((InvalidParameterError, InvalidDimensionError)):
        SystemParams.table_s1(**bad)


def test_mode_and_drive_validation():
    with pytest.raises(InvalidParameterError):
        PhononMode(omega_p=6e9, gamma=-1.0, g_qh=1e5)
    with pytest.raises(InvalidParameterError):
        PhononMode(omega_p=-6e9, gamma=1.0, g_qh=1e5)
    with pytest.raises(InvalidParameterError):
        DriveParams(omega_d=6e9, eps_d=-1.0)


# --- detunings ----------------------------------------------------------------------------

def test_detunings_examples(table_s1):
    d = detunings(table_s1, DriveParams(omega_d=table_s1.mode.omega_p))
    assert d.delta_b == (0.0,)
    d = detunings(table_s1, DriveParams(omega_d=6.064e9))
    assert d.delta_q == pytest.approx(-3e6, abs=1e-3)
    assert d.delta_r == pytest.approx(1.154e9, abs=1e-3)


@given(freqs, freqs)
def test_detunings_antisymmetric(wd, wx):
    p1 = SystemParams.table_s1(omega_eg=wx, omega_r=wx,
                               phonon_modes=(PhononMode(omega_p=wx, gamma=1.0, g_qh=1.0),))
    p2 = SystemParams.table_s1(omega_eg=wd, omega_r=wd,
                               phonon_modes=(PhononMode(omega_p=wd, gamma=1.0, g_qh=1.0),))
    d1 = detunings(p1, DriveParams(omega_d=wd))
    d2 = detunings(p2, DriveParams(omega_d=wx))
    assert d1.delta_q == -d2.delta_q and d1.delta_r == -d2.delta_r
    assert d1.delta_b[0] == -d2.delta_b[0]


# --- Hamiltonians ---------------------------------------------------------------------

def test_full_hamiltonian_zero_on_resonance_without_couplings():
    w = 6e9
    p = SystemParams(omega_r=w, kappa=1.0, chi=0.0, omega_eg=w, Gamma=1.0,
                     phonon_modes=(PhononMode(omega_p=w, gamma=1.0, g_qh=0.0),),
                     cavity_dim=3, phonon_dim=3)
    H = full_hamiltonian(p, DriveParams(omega_d=w))
    assert np.abs(H.dense).max() == 0.0


def test_full_hamiltonian_hermitian_table_s1(table_s1, weak_drive):
    H = full_hamiltonian(table_s1, weak_drive).dense
    assert np.abs(H - H.conj().T).max() < 1e-12 * np.abs(H).max()


@given(st.floats(-5e6, 5e6), st.floats(0, 1e6), st.floats(0, 1e5), st.floats(0, 1e5),
       st.floats(-2e6, 2e6))
def test_hamiltonians_hermitian(offset, g, eps_d, eps_p, shift):
    p = SystemParams.table_s1(cavity_dim=3, phonon_dim=3).with_mode(g_qh=g)
    drive = DriveParams(omega_d=6.064e9 + offset, eps_d=eps_d, eps_p=eps_p)
    for H in (full_hamiltonian(p, drive), effective_hamiltonian(p, drive, shift)):
        d = H.dense
        assert np.abs(d - d.conj().T).max() <= 1e-12 * max(1.0, np.abs(d).max())


def test_vacuum_rabi_splitting_full_hamiltonian():
    g = 197e3
    w = 6.064e9
    p = SystemParams.table_s1(omega_eg=w, phonon_dim=3).with_mode(omega_p=w, g_qh=g)
    H = full_hamiltonian(p, DriveParams(omega_d=w)).dense / (2 * np.pi)
    nb = p.phonon_dim
    idx = lambda c, q, n: (c * 2 + q) * nb + n  # noqa: E731  (cavity, qubit, phonon)
    e0, g1 = idx(0, 1, 0), idx(0, 0, 1)
    ev = np.linalg.eigvalsh(H[np.ix_([e0, g1], [e0, g1])])
    assert ev[1] - ev[0] == pytest.approx(2 * g, rel=1e-12)
    # the pair is closed under H (no leakage out of the block)
    others = [k for k in range(H.shape[0]) if k not in (e0, g1)]
    assert np.abs(H[np.ix_(others, [e0, g1])]).max() == 0.0


def test_vacuum_rabi_splitting_exact_block():
    g = 197e3
    w = 6.064e9
    p = SystemParams.table_s1(omega_eg=w).with_mode(omega_p=w, g_qh=g)
    H = effective_hamiltonian(p, DriveParams(omega_d=w)).dense / (2 * np.pi)
    lay = p.effective_layout()
    # basis index of |q, n> with qubit slot first (sigma_z = diag(-1, +1): index 1 = excited)
    idx = lambda q, n: q * lay.subsystem_dims[1] + n  # noqa: E731
    e0, g1 = idx(1, 0), idx(0, 1)
    block = H[np.ix_([e0, g1], [e0, g1])]
    ev = np.linalg.eigvalsh(block)
    assert ev[1] - ev[0] == pytest.approx(2 * g, rel=1e-12)


def test_effective_equals_full_without_cavity_terms():
    p = SystemParams.table_s1(chi=0.0, cavity_dim=2, phonon_dim=3)
    drive = DriveParams(omega_d=p.omega_r, eps_d=3e5)  # delta_r = 0, eps_p = 0 -> no cavity terms
    Hf = full_hamiltonian(p, drive).dense
    He = effective_hamiltonian(p, drive).dense
    n_eff = He.shape[0]
    # cavity is slot 0, so the vacuum block is the leading n_eff x n_eff block
    np.testing.assert_allclose(Hf[:n_eff, :n_eff], He, atol=1e-6)
    np.testing.assert_allclose(Hf[n_eff:, n_eff:], He, atol=1e-6)


def test_effective_hamiltonian_shift_enters_delta_q():
    p = SystemParams.table_s1()
    drive = DriveParams(omega_d=6.064e9)
    H0 = effective_hamiltonian(p, drive, 0.0).dense
    Hs = effective_hamiltonian(p, drive, 1e5).dense
    diff = (Hs - H0) / (2 * np.pi)
    lay = p.effective_layout()
    # -(delta_q - s)/2 sigma_z - (-(delta_q)/2 sigma_z) = +s/2 sigma_z
    from aitsim.hilbert import embed, qubit_ops
    expected = 0.5e5 * embed(qubit_ops()[0], lay, 0).dense
    np.testing.assert_allclose(diff, expected, atol=1e-6)


def test_cavity_decouples_reduced_dynamics():
    """With chi = 0 and no probe the qubit-phonon reduced dynamics equals the effective model."""
    p = SystemParams.table_s1(chi=0.0, cavity_dim=2, phonon_dim=3)
    drive = DriveParams(omega_d=6.065e9, eps_d=2e5)
    Lf = liouvillian(full_hamiltonian(p, drive), full_collapses(p))
    Le = liouvillian(effective_hamiltonian(p, drive), effective_collapses(p))
    n_eff = p.effective_layout().total_dim
    rho_e = np.zeros((n_eff, n_eff), complex)
    rho_e[0, 0] = 1.0
    rho_f = np.zeros((2 * n_eff, 2 * n_eff), complex)
    rho_f[:n_eff, :n_eff] = rho_e
    times = np.linspace(0, 2e-6, 9)
    tf = evolve(rho_f, Lf, times, rtol=1e-11, atol=1e-13)
    te = evolve(rho_e, Le, times, rtol=1e-11, atol=1e-13)
    for sf, se in zip(tf.states, te.states):
        full = sf.entries.reshape(2, n_eff, 2, n_eff)
        reduced = np.einsum("aiaj->ij", full)
        assert np.abs(reduced - se.entries).max() < 1e-8


def test_layout_mismatch_rejected(table_s1, weak_drive):
    with pytest.raises(InvalidDimensionError):
        full_hamiltonian(table_s1, weak_drive, HilbertLayout((2, 2)))
    with pytest.raises(InvalidDimensionError):
        effective_hamiltonian(table_s1, weak_drive, layout=HilbertLayout((2, 3, 3)))


def test_multimode_hamiltonian_layout():
    modes = comb_modes(6.064e9, 8.53e6, 2, 6.98e3, 197e3)
    p = SystemParams.table_s1(phonon_modes=modes, cavity_dim=2, phonon_dim=2)
    H = full_hamiltonian(p, DriveParams(omega_d=6.064e9))
    assert H.layout.subsystem_dims == (2, 2, 2, 2)
    assert [m.omega_p for m in modes] == pytest.approx([6.064e9 - 4.265e6, 6.064e9 + 4.265e6])


# --- design formulas ------------------------------------------------------------------

def test_fsr_examples():
    assert fsr(1.11e4, 650e-6) == pytest.approx(8.538e6, abs=0.5e3)
    assert fsr(1.11e4, 500e-6) == pytest.approx(11.10e6, rel=1e-12)
    assert fsr(1.11e4, 1300e-6) == fsr(1.11e4, 650e-6) / 2


def test_piezo_examples():
    assert piezo_fundamental(1.14e4, 900e-9) == pytest.approx(6.333e9, abs=0.5e6)
    assert piezo_fundamental(1.11e4, 925e-9) == pytest.approx(6.0e9, rel=1e-12)
    assert piezo_fundamental(1.14e4, 1800e-9) == piezo_fundamental(1.14e4, 900e-9) / 2


@given(st.floats(1e2, 1e5), st.floats(1e-9, 1e-2), st.floats(0.1, 10.0))
def test_design_homogeneity(v, t, lam):
    for f in (fsr, piezo_fundamental):
        assert f(lam * v, t) == pytest.approx(lam * f(v, t), rel=1e-12)
        assert f(v, lam * t) == pytest.approx(f(v, t) / lam, rel=1e-12)


@pytest.mark.parametrize("args", [(0, 1), (1, 0), (-1, 1), (1, float("nan"))])
def test_design_rejects_nonpositive(args):
    with pytest.raises(InvalidParameterError):
        fsr(*args)
    with pytest.raises(InvalidParameterError):
        piezo_fundamental(*args)


def test_figures_of_merit(table_s1):
    (q,), (c,) = figures_of_merit(table_s1)
    assert q == pytest.approx(8.69e5, rel=1e-3)
    assert c == pytest.approx(52.3, abs=0.05)
    (q2,), (c2,) = figures_of_merit(table_s1.with_mode(gamma=2 * 6.98e3))
    assert q2 == q / 2 and c2 == pytest.approx(c / 2, rel=1e-15)


def test_figures_of_merit_rejects_zero_linewidths(table_s1):
    with pytest.raises(InvalidParameterError):
        figures_of_merit(table_s1.with_mode(gamma=0.0))
    with pytest.raises(InvalidParameterError):
        figures_of_merit(SystemParams.table_s1(Gamma=0.0))
