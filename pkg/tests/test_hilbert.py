import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given
from hypothesis import strategies as st

from aitsim.errors import InvalidDimensionError, InvalidParameterError, ModelError
from aitsim.hilbert import (
    DensityState,
    HilbertLayout,
    OperatorMatrix,
    commutator_super,
    dissipator,
    embed,
    ladder,
    liouvillian,
    qubit_ops,
    unvec,
    vec,
)

from conftest import random_density, random_hermitian


# --- ladder / Pauli algebra -----------------------------------------------------------------

def test_ladder_dim2():
    np.testing.assert_array_equal(ladder(2).dense, [[0, 1], [0, 0]])


def test_ladder_dim3_entries():
    a = ladder(3).dense
    assert a[0, 1] == 1 and a[1, 2] == pytest.approx(np.sqrt(2))
    assert np.count_nonzero(a) == 2


def test_ladder_commutator_dim8():
    a = ladder(8).dense
    c = a @ a.conj().T - a.conj().T @ a
    expected = np.eye(8)
    expected[-1, -1] = -7  # truncation artefact in the last level
    np.testing.assert_allclose(c, expected, atol=1e-12)


@pytest.mark.parametrize("dim", [0, 1, -3, 2.5])
def test_ladder_rejects_small_dims(dim):
    with pytest.raises(InvalidDimensionError):
        ladder(dim)


@given(st.integers(min_value=2, max_value=12))
def test_number_operator_diagonal(dim):
    a = ladder(dim).dense
    n = a.conj().T @ a
    np.testing.assert_allclose(n, np.diag(np.arange(dim)), atol=1e-12)


def test_pauli_algebra():
    sz, sm, sp = (o.dense for o in qubit_ops())
    np.testing.assert_allclose(sp @ sm + sm @ sp, np.eye(2))
    np.testing.assert_allclose(sz @ sp - sp @ sz, 2 * sp)
    np.testing.assert_allclose(sz @ sm - sm @ sz, -2 * sm)
    ground = np.array([1, 0])
    np.testing.assert_allclose(sz @ ground, -ground)


# --- embedding ---------------------------------------------------------------------------

def test_embed_slot0_is_kron_with_identity():
    sz = qubit_ops()[0]
    lay = HilbertLayout((2, 2))
    np.testing.assert_allclose(embed(sz, lay, 0).dense, np.kron(sz.dense, np.eye(2)))


def test_embed_trace_identity():
    a = ladder(3)
    lay = HilbertLayout((3, 2))
    assert np.trace(embed(a, lay, 0).dense) == pytest.approx(2 * np.trace(a.dense))


@given(st.integers(0, 2**31 - 1))
def test_embed_disjoint_supports_commute(seed):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout((3, 2, 2))
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    B = rng.normal(size=(2, 2))
    ea, eb = embed(A, lay, 0), embed(B, lay, 2)
    np.testing.assert_allclose((ea @ eb).dense, (eb @ ea).dense, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(0, 2))
def test_embed_is_multiplicative(seed, slot):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout((2, 3, 2))
    d = lay.subsystem_dims[slot]
    A, B = rng.normal(size=(d, d)), rng.normal(size=(d, d))
    lhs = embed(A @ B, lay, slot).dense
    rhs = (embed(A, lay, slot) @ embed(B, lay, slot)).dense
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_embed_sparse_matches_dense():
    lay = HilbertLayout.full(3, [3])
    a = ladder(3)
    np.testing.assert_allclose(embed(a, lay, 2, sparse=True).dense, embed(a, lay, 2).dense)


def test_embed_rejects_wrong_factor():
    with pytest.raises(InvalidDimensionError):
        embed(ladder(3), HilbertLayout((2, 2)), 0)
    with pytest.raises(InvalidDimensionError):
        embed(ladder(2), HilbertLayout((2, 2)), 5)


def test_layout_invariants():
    assert HilbertLayout.full(5, [5]).total_dim == 50
    assert HilbertLayout.effective([4, 4]).qubit_slot == 0
    with pytest.raises(InvalidDimensionError):
        HilbertLayout((3, 3), qubit_slot=0)
    with pytest.raises(InvalidDimensionError):
        HilbertLayout(())


# --- vectorisation and superoperators ------------------------------------------------------

@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_vec_roundtrip_and_sandwich_convention(seed, n):
    rng = np.random.default_rng(seed)
    A, B, rho = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for _ in range(3))
    np.testing.assert_array_equal(unvec(vec(rho), n), rho)
    # vec(A rho B^dag) = (conj(B) kron A) vec(rho)
    np.testing.assert_allclose(np.kron(B.conj(), A) @ vec(rho), vec(A @ rho @ B.conj().T), atol=1e-10)


def test_dissipator_decays_excited_projector():
    _, sm, _ = qubit_ops()
    ee = np.diag([0, 1]).astype(complex)
    out = dissipator(sm).apply(ee)
    np.testing.assert_allclose(out, np.diag([1, -1]), atol=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_dissipator_trace_preserving(seed):
    rng = np.random.default_rng(seed)
    o = OperatorMatrix(HilbertLayout.single(4), rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    rho = random_hermitian(4, rng)
    assert abs(np.trace(dissipator(o).apply(rho))) < 1e-12 * max(1.0, np.abs(o.dense).max() ** 2)


def test_dissipator_matches_direct_formula_on_thermal_state():
    a = ladder(4)
    p = np.exp(-0.7 * np.arange(4))
    rho = np.diag(p / p.sum()).astype(complex)
    A = a.dense
    direct = A @ rho @ A.conj().T - 0.5 * (A.conj().T @ A @ rho + rho @ A.conj().T @ A)
    np.testing.assert_allclose(dissipator(a).apply(rho), direct, atol=1e-14)


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_dissipator_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    D = dissipator(ladder(3))
    r1, r2 = random_hermitian(3, rng), random_hermitian(3, rng)
    np.testing.assert_allclose(D.apply(alpha * r1 + beta * r2),
                               alpha * D.apply(r1) + beta * D.apply(r2), atol=1e-12)


def test_sparse_superoperators_match_dense():
    lay = HilbertLayout.full(3, [2])
    a = embed(ladder(3), lay, 0)
    H = a.dag() @ a
    for builder in (dissipator, commutator_super):
        np.testing.assert_allclose(builder(H if builder is commutator_super else a, sparse=True).dense,
                                   builder(H if builder is commutator_super else a).dense, atol=1e-14)


# --- Liouvillian ------------------------------------------------------------------------

def _qubit_L(h=None, gamma1=0.0, **kw):
    sz, sm, _ = qubit_ops()
    H = h if h is not None else OperatorMatrix(sz.layout, np.zeros((2, 2)))
    return liouvillian(H, [(gamma1, sm)], **kw)


def test_liouvillian_exponential_decay():
    L = _qubit_L(gamma1=3.0)
    rho0 = np.diag([0, 1]).astype(complex)
    for t in (0.1, 0.5, 2.0):
        rho = unvec(la.expm(L.dense * t) @ vec(rho0), 2)
        assert rho[1, 1].real == pytest.approx(np.exp(-3.0 * t), rel=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_liouvillian_trace_annihilation(seed):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout.full(3, [2])
    H = OperatorMatrix(lay, random_hermitian(12, rng))
    ops = [(float(rng.uniform(0, 2)), embed(ladder(3), lay, 0)),
           (float(rng.uniform(0, 2)), embed(qubit_ops()[1], lay, 1))]
    L = liouvillian(H, ops)
    rho = random_density(12, rng)
    assert abs(np.trace(L.apply(rho))) < 1e-12 * max(1.0, np.abs(L.dense).max())


def test_unitary_evolution_conserves_purity():
    sz = qubit_ops()[0]
    L = _qubit_L(h=sz * 0.5 * 2.3)
    psi = np.array([1, 1]) / np.sqrt(2)
    rho0 = np.outer(psi, psi.conj())
    U = la.expm(-1j * 0.5 * 2.3 * sz.dense * 1.7)
    rho = unvec(la.expm(L.dense * 1.7) @ vec(rho0), 2)
    np.testing.assert_allclose(rho, U @ rho0 @ U.conj().T, atol=1e-10)
    assert DensityState(sz.layout, rho).purity() == pytest.approx(1.0, abs=1e-10)


def test_liouvillian_rejects_bad_inputs():
    sz, sm, _ = qubit_ops()
    with pytest.raises(ModelError):
        liouvillian(OperatorMatrix(sz.layout, [[0, 1], [0, 0]]), [])
    with pytest.raises(InvalidParameterError):
        liouvillian(sz, [(-1.0, sm)])


def test_density_state_validation():
    lay = HilbertLayout.single(2)
    DensityState(lay, np.diag([0.25, 0.75])).validate()
    with pytest.raises(ModelError):
        DensityState(lay, np.diag([0.5, 0.6])).validate()
    with pytest.raises(ModelError):
        DensityState(lay, np.diag([1.2, -0.2])).validate()
    with pytest.raises(ModelError):
        DensityState(lay, np.array([[0.5, 0.3], [0.0, 0.5]])).validate()
