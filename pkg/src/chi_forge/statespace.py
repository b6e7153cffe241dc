"""Dense linear algebra on tensor-product Hilbert spaces.

Composite indices are row-major over the factor list, so the first factor is
the most significant digit. All containers are frozen; operations return new
objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NEG_EIG_TOL = 1e-9


@dataclass(frozen=True)
class HilbertSpace:
    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lbl), int(d)) for lbl, d in self.factors)
        if not factors:
            raise ValueError("a Hilbert space needs at least one factor")
        labels = [lbl for lbl, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"factor labels must be unique, got {labels}")
        for lbl, d in factors:
            if d < 2:
                raise ValueError(f"factor {lbl!r} has dimension {d} < 2")
        object.__setattr__(self, "factors", factors)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"no factor labelled {label!r} in {self.labels}") from None

    def factor_dim(self, label) -> int:
        return self.dims[self.index(label)]

    def subspace(self, labels: Iterable) -> "HilbertSpace":
        keep = {str(lbl) for lbl in labels}
        return HilbertSpace(tuple(f for f in self.factors if f[0] in keep))

    def flat_index(self, digits: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(digits), self.dims))


def qubit_space(fock_dim: int | None = None, levels: int = 2) -> HilbertSpace:
    """Four atoms labelled "1".."4" with ``levels`` levels, plus an optional cavity "c"."""
    factors = [(str(l), levels) for l in range(1, 5)]
    if fock_dim is not None:
        factors.append(("c", fock_dim))
    return HilbertSpace(tuple(factors))


def _as_space(space) -> HilbertSpace:
    return space if isinstance(space, HilbertSpace) else HilbertSpace(tuple(space))


@dataclass(frozen=True)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise ValueError(f"expected {self.space.dim} amplitudes, got {amps.shape[0]}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.space.dims)

    def density(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(self.space, np.outer(a, a.conj()))


@dataclass(frozen=True)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_same_space(self.space, other.space)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            _check_same_space(self.space, other.space)
            return StateVector(self.space, self.matrix @ other.amplitudes)
        return NotImplemented

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_space(self.space, other.space)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same_space(self.space, other.space)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, c) -> "Operator":
        return Operator(self.space, c * self.matrix)

    __rmul__ = __mul__

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        return self.hermiticity_error() <= tol * scale

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_error() <= tol


@dataclass(frozen=True)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got {m.shape}")
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m)))):
            raise ValueError(f"density matrix not Hermitian (max |M - M^dag| = {herm:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-8:
            raise ValueError(f"density matrix trace {tr!r} differs from 1")
        lo = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
        if lo < -NEG_EIG_TOL:
            raise ValueError(f"density matrix has eigenvalue {lo:.3e} < -{NEG_EIG_TOL}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def expectation(self, psi: StateVector) -> float:
        _check_same_space(self.space, psi.space)
        a = psi.amplitudes
        return float(np.real(a.conj() @ self.matrix @ a))


def _check_same_space(a: HilbertSpace, b: HilbertSpace):
    if a != b:
        raise ValueError(f"space mismatch: {a.factors} vs {b.factors}")


def kron(*mats) -> np.ndarray:
    return reduce(np.kron, mats)


def tensor_embed(op, site, space: HilbertSpace) -> Operator:
    """Return I ⊗ ... ⊗ op ⊗ ... ⊗ I with ``op`` on the factor labelled ``site``."""
    m = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    k = space.index(site)
    d = space.dims[k]
    if m.shape != (d, d):
        raise ValueError(f"operator shape {m.shape} does not match factor {site!r} of dim {d}")
    left = int(np.prod(space.dims[:k], dtype=int))
    right = int(np.prod(space.dims[k + 1:], dtype=int))
    return Operator(space, np.kron(np.kron(np.eye(left), m), np.eye(right)))


def embed_many(ops: dict, space: HilbertSpace) -> Operator:
    """Product of single-site operators on distinct sites, keyed by factor label."""
    mats = []
    ops = {str(k): v for k, v in ops.items()}
    for lbl, d in space.factors:
        m = ops.pop(lbl, None)
        mats.append(np.eye(d) if m is None else np.asarray(m, dtype=complex))
    if ops:
        raise KeyError(f"unknown factor labels {sorted(ops)}")
    return Operator(space, kron(*mats))


def propagator(H: Operator, dt: float) -> Operator:
    """exp(-i H dt) through the Hermitian eigendecomposition."""
    if not H.is_hermitian():
        raise ValueError(f"propagator needs a Hermitian generator (error {H.hermiticity_error():.3e})")
    m = 0.5 * (H.matrix + H.matrix.conj().T)
    w, v = np.linalg.eigh(m)
    U = (v * np.exp(-1j * w * dt)) @ v.conj().T
    return Operator(H.space, U)


def partial_trace(state, keep) -> DensityMatrix:
    """Reduced density matrix on the factors in ``keep`` (kept in canonical order)."""
    keep = {str(k) for k in keep}
    if not keep:
        raise ValueError("keep must name at least one factor")
    space = state.space
    for k in keep:
        space.index(k)
    dims = space.dims
    kidx = [i for i, lbl in enumerate(space.labels) if lbl in keep]
    tidx = [i for i in range(len(dims)) if i not in kidx]
    dk = int(np.prod([dims[i] for i in kidx]))
    sub = space.subspace(keep)

    if isinstance(state, StateVector):
        psi = state.tensor().transpose(kidx + tidx).reshape(dk, -1)
        rho = psi @ psi.conj().T
    else:
        n = len(dims)
        r = state.matrix.reshape(dims + dims)
        perm = kidx + tidx + [n + i for i in kidx] + [n + i for i in tidx]
        dt = int(np.prod([dims[i] for i in tidx]))
        r = r.transpose(perm).reshape(dk, dt, dk, dt)
        rho = np.einsum("ajbj->ab", r)
    return DensityMatrix(sub, rho)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits; eigenvalues at or below 1e-12 contribute nothing."""
    p = np.linalg.eigvalsh(rho.matrix)
    p = p[p > 1e-12]
    return max(0.0, float(-np.sum(p * np.log2(p))))


def fidelity(a: StateVector, b: StateVector) -> float:
    _check_same_space(a.space, b.space)
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def basis_state(space: HilbertSpace, digits: Sequence[int]) -> StateVector:
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.flat_index(digits)] = 1.0
    return StateVector(space, amps)


_LEVEL = {"g": 0, "s": 1, "r": 2, "0": 0, "1": 1}


def ket(space: HilbertSpace, text: str, cavity: int = 0) -> StateVector:
    """Product basis state from a string like "gsgs"; a cavity factor, if any, gets ``cavity`` photons."""
    digits = [_LEVEL[ch] for ch in text]
    if len(digits) == len(space.dims) - 1:
        digits.append(cavity)
    return basis_state(space, digits)


def permute_factors(state: StateVector, order: Sequence) -> StateVector:
    """Reorder the factors of ``state`` to the label sequence ``order``."""
    order = [str(o) for o in order]
    axes = [state.space.index(o) for o in order]
    new_space = HilbertSpace(tuple(state.space.factors[i] for i in axes))
    return StateVector(new_space, state.tensor().transpose(axes).reshape(-1))
