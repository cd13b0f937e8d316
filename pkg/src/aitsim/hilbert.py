"""Operator algebra on truncated tensor-product spaces and Lindblad superoperators.

Conventions
-----------
* Subsystem order is cavity (x) qubit (x) phonon(s).
* The qubit basis is ``(|g>, |e>)`` so that ``sigma_z |e> = +|e>``.
* Density matrices are vectorised by column stacking, ``vec(rho) = rho.reshape(-1, order="F")``.
  Under this convention ``vec(A rho B^dagger) = (conj(B) kron A) vec(rho)``.
* Hamiltonians are stored in angular-frequency units (H / hbar, rad/s).

Entries are dense ``numpy`` arrays by default.  Passing ``sparse=True`` to the
superoperator builders returns ``scipy.sparse`` CSR matrices instead, which the
steady-state and propagation routines in :mod:`aitsim.dynamics` accept as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidDimensionError, InvalidParameterError, ModelError

HERMITIAN_RTOL = 1e-9


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered subsystem dimensions, with an optional designated qubit slot."""

    subsystem_dims: tuple[int, ...]
    qubit_slot: int | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        object.__setattr__(self, "subsystem_dims", dims)
        if not dims:
            raise InvalidDimensionError("layout needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise InvalidDimensionError(f"all subsystem dims must be >= 1, got {dims}")
        if self.qubit_slot is not None:
            if not 0 <= self.qubit_slot < len(dims):
                raise InvalidDimensionError(f"qubit slot {self.qubit_slot} out of range")
            if dims[self.qubit_slot] != 2:
                raise InvalidDimensionError("the qubit slot must have dimension 2")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.subsystem_dims))

    @classmethod
    def full(cls, cavity_dim: int, phonon_dims: Sequence[int]) -> "HilbertLayout":
        """cavity (x) qubit (x) phonons."""
        return cls((cavity_dim, 2, *phonon_dims), qubit_slot=1)

    @classmethod
    def effective(cls, phonon_dims: Sequence[int]) -> "HilbertLayout":
        """qubit (x) phonons (cavity adiabatically eliminated)."""
        return cls((2, *phonon_dims), qubit_slot=0)

    @classmethod
    def single(cls, dim: int) -> "HilbertLayout":
        return cls((dim,), qubit_slot=0 if dim == 2 else None)


def _as_entries(m):
    if sp.issparse(m):
        return m.tocsr()
    return np.asarray(m, dtype=complex)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    layout: HilbertLayout
    entries: np.ndarray | sp.spmatrix

    def __post_init__(self):
        e = _as_entries(self.entries)
        n = self.layout.total_dim
        if e.ndim != 2 or e.shape != (n, n):
            raise InvalidDimensionError(
                f"operator shape {e.shape} does not match layout total_dim {n}"
            )
        object.__setattr__(self, "entries", e)

    @property
    def dense(self) -> np.ndarray:
        return self.entries.toarray() if sp.issparse(self.entries) else self.entries

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.entries.conj().T)

    def _check(self, other: "OperatorMatrix"):
        if other.layout.subsystem_dims != self.layout.subsystem_dims:
            raise InvalidDimensionError("operators live on different layouts")

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.layout, self.entries @ other.entries)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.layout, self.entries + other.entries)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.layout, self.entries - other.entries)

    def __mul__(self, scalar) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.entries * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, -self.entries)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        d = self.dense
        scale = np.max(np.abs(d)) if d.size else 0.0
        return bool(np.max(np.abs(d - d.conj().T), initial=0.0) <= rtol * scale)


@dataclass(frozen=True, eq=False)
class SuperOperatorMatrix:
    layout: HilbertLayout
    entries: np.ndarray | sp.spmatrix

    def __post_init__(self):
        e = _as_entries(self.entries)
        n = self.layout.total_dim ** 2
        if e.shape != (n, n):
            raise InvalidDimensionError(f"superoperator shape {e.shape} != ({n}, {n})")
        object.__setattr__(self, "entries", e)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.entries)

    @property
    def dense(self) -> np.ndarray:
        return self.entries.toarray() if self.is_sparse else self.entries

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Return the matrix obtained from ``L @ vec(rho)``."""
        n = self.layout.total_dim
        return unvec(self.entries @ vec(rho), n)

    def __add__(self, other: "SuperOperatorMatrix") -> "SuperOperatorMatrix":
        return SuperOperatorMatrix(self.layout, self.entries + other.entries)

    def __mul__(self, scalar) -> "SuperOperatorMatrix":
        return SuperOperatorMatrix(self.layout, self.entries * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class DensityState:
    """Density matrix on a layout.  Call :meth:`validate` for physical states."""

    layout: HilbertLayout
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        n = self.layout.total_dim
        if e.shape != (n, n):
            raise InvalidDimensionError(f"state shape {e.shape} != ({n}, {n})")
        object.__setattr__(self, "entries", e)

    def validate(self, tol: float = 1e-8) -> "DensityState":
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ModelError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > tol:
            raise ModelError(f"density matrix trace is {np.trace(rho).real:.3g}, not 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
            raise ModelError("density matrix has negative eigenvalues")
        return self

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def min_eigenvalue(self) -> float:
        rho = self.entries
        return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape((n, n), order="F")


def basis_projector(dim: int, k: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[k, k] = 1.0
    return p


def ladder(dim: int) -> OperatorMatrix:
    """Truncated annihilation operator with ``a[n-1, n] = sqrt(n)``."""
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"ladder dimension must be an integer >= 2, got {dim}")
    dim = int(dim)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return OperatorMatrix(HilbertLayout.single(dim), a)


def qubit_ops() -> tuple[OperatorMatrix, OperatorMatrix, OperatorMatrix]:
    """``(sigma_z, sigma_minus, sigma_plus)`` in the ``(|g>, |e>)`` basis."""
    lay = HilbertLayout.single(2)
    sz = np.array([[-1, 0], [0, 1]], dtype=complex)
    sp_ = np.array([[0, 0], [1, 0]], dtype=complex)  # |e><g|
    return OperatorMatrix(lay, sz), OperatorMatrix(lay, sp_.conj().T), OperatorMatrix(lay, sp_)


def embed(op: OperatorMatrix | np.ndarray, layout: HilbertLayout, slot: int,
          sparse: bool = False) -> OperatorMatrix:
    """Kronecker-embed a single-subsystem factor into ``layout`` at ``slot``."""
    dims = layout.subsystem_dims
    if not 0 <= slot < len(dims):
        raise InvalidDimensionError(f"slot {slot} out of range for layout {dims}")
    m = op.dense if isinstance(op, OperatorMatrix) else np.asarray(op, dtype=complex)
    if m.shape != (dims[slot], dims[slot]):
        raise InvalidDimensionError(
            f"factor of shape {m.shape} does not fit slot {slot} of dim {dims[slot]}"
        )
    left = int(np.prod(dims[:slot]))
    right = int(np.prod(dims[slot + 1:]))
    if sparse:
        out = sp.kron(sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(m)),
                      sp.identity(right, format="csr"), format="csr")
    else:
        out = np.kron(np.kron(np.eye(left), m), np.eye(right))
    return OperatorMatrix(layout, out)


def _ident(n: int, sparse: bool):
    return sp.identity(n, dtype=complex, format="csr") if sparse else np.eye(n, dtype=complex)


def _kron(a, b, sparse: bool):
    return sp.kron(a, b, format="csr") if sparse else np.kron(a, b)


def _entries_for(op: OperatorMatrix, sparse: bool):
    e = op.entries
    if sparse:
        return sp.csr_matrix(e)
    return e.toarray() if sp.issparse(e) else e


def dissipator(op: OperatorMatrix, sparse: bool = False) -> SuperOperatorMatrix:
    """Superoperator of ``D[o] rho = o rho o^+ - 1/2 {o^+ o, rho}``."""
    n = op.layout.total_dim
    o = _entries_for(op, sparse)
    od_o = o.conj().T @ o
    eye = _ident(n, sparse)
    L = _kron(o.conj(), o, sparse) - 0.5 * _kron(eye, od_o, sparse) - 0.5 * _kron(od_o.T, eye, sparse)
    return SuperOperatorMatrix(op.layout, L)


def commutator_super(H: OperatorMatrix, sparse: bool = False) -> SuperOperatorMatrix:
    """Superoperator of ``-i [H, rho]``."""
    n = H.layout.total_dim
    h = _entries_for(H, sparse)
    eye = _ident(n, sparse)
    return SuperOperatorMatrix(H.layout, -1j * (_kron(eye, h, sparse) - _kron(h.T, eye, sparse)))


def liouvillian(H: OperatorMatrix,
                collapses: Sequence[tuple[float, OperatorMatrix]],
                sparse: bool = False) -> SuperOperatorMatrix:
    """Lindblad generator ``-i[H, .] + sum_k rate_k D[o_k]``.

    ``H`` is in rad/s and each ``rate`` multiplies its dissipator as written, so
    rates must also be angular.
    """
    if not H.is_hermitian():
        raise ModelError("Hamiltonian is not Hermitian within tolerance")
    L = commutator_super(H, sparse=sparse)
    for rate, op in collapses:
        if not np.isfinite(rate) or rate < 0:
            raise InvalidParameterError(f"collapse rate must be >= 0, got {rate}")
        if op.layout.subsystem_dims != H.layout.subsystem_dims:
            raise InvalidDimensionError("collapse operator layout does not match H")
        if rate == 0:
            continue
        L = L + rate * dissipator(op, sparse=sparse)
    return L
