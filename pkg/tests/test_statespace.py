import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from chi_forge.statespace import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    basis_state,
    embed_many,
    fidelity,
    ket,
    partial_trace,
    permute_factors,
    propagator,
    qubit_space,
    tensor_embed,
    von_neumann_entropy,
)

from conftest import random_hermitian, random_state

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def test_space_validation():
    with pytest.raises(ValueError):
        HilbertSpace((("a", 2), ("a", 3)))
    with pytest.raises(ValueError):
        HilbertSpace((("a", 1),))
    with pytest.raises(ValueError):
        HilbertSpace(())
    s = qubit_space(5)
    assert s.dims == (2, 2, 2, 2, 5) and s.dim == 80
    assert s.labels[-1] == "c"
    with pytest.raises(KeyError):
        s.index("7")


def test_flat_index_is_row_major():
    s = HilbertSpace((("a", 2), ("b", 3)))
    assert s.flat_index([1, 2]) == 5
    assert s.flat_index([0, 1]) == 1


def test_tensor_embed_matches_kron():
    s = qubit_space(3)
    a = np.diag(np.sqrt([1.0, 2.0]), 1)
    expected = np.kron(np.kron(np.kron(np.kron(np.eye(2), SX), np.eye(2)), np.eye(2)), np.eye(3))
    assert np.allclose(tensor_embed(SX, "2", s).matrix, expected)
    expected_c = np.kron(np.eye(16), a)
    assert np.allclose(tensor_embed(a, "c", s).matrix, expected_c)


def test_embed_many_two_sites():
    s = qubit_space()
    m = embed_many({1: SX, 3: SZ}, s).matrix
    assert np.allclose(m, np.kron(np.kron(np.kron(SX, np.eye(2)), SZ), np.eye(2)))
    with pytest.raises(KeyError):
        embed_many({9: SX}, s)


def test_embed_shape_mismatch():
    with pytest.raises(ValueError):
        tensor_embed(np.eye(3), "1", qubit_space())


def test_ket_and_cavity():
    s = qubit_space(4)
    psi = ket(s, "gsgs", cavity=2)
    assert psi.amplitudes[s.flat_index([0, 1, 0, 1, 2])] == 1
    assert psi.norm == pytest.approx(1.0)


def test_propagator_matches_expm(rng):
    s = HilbertSpace((("a", 2), ("b", 3)))
    H = Operator(s, random_hermitian(rng, 6))
    U = propagator(H, 0.7)
    assert np.allclose(U.matrix, expm(-0.7j * H.matrix), atol=1e-12)
    assert U.is_unitary()


def test_propagator_rejects_non_hermitian():
    s = HilbertSpace((("a", 2),))
    with pytest.raises(ValueError):
        propagator(Operator(s, np.array([[0, 1], [0, 0]])), 1.0)


def test_operator_algebra(rng):
    s = HilbertSpace((("a", 3),))
    A = Operator(s, rng.normal(size=(3, 3)))
    B = Operator(s, rng.normal(size=(3, 3)))
    assert np.allclose((A @ B).matrix, A.matrix @ B.matrix)
    assert np.allclose((A + B - A).matrix, B.matrix)
    assert np.allclose((2 * A).matrix, 2 * A.matrix)
    assert np.allclose(A.dag().dag().matrix, A.matrix)
    other = HilbertSpace((("b", 3),))
    with pytest.raises(ValueError):
        A @ Operator(other, np.eye(3))


def test_density_matrix_validation():
    s = HilbertSpace((("a", 2),))
    with pytest.raises(ValueError):
        DensityMatrix(s, np.array([[1, 1], [0, 0]]))
    with pytest.raises(ValueError):
        DensityMatrix(s, np.diag([0.6, 0.6]))
    with pytest.raises(ValueError):
        DensityMatrix(s, np.diag([1.1, -0.1]))
    rho = DensityMatrix(s, np.eye(2) / 2)
    assert rho.purity == pytest.approx(0.5)


def test_partial_trace_product_state(rng):
    s = HilbertSpace((("a", 2), ("b", 3)))
    a, b = random_state(rng, 2), random_state(rng, 3)
    psi = StateVector(s, np.kron(a, b))
    ra = partial_trace(psi, ["a"])
    assert np.allclose(ra.matrix, np.outer(a, a.conj()))
    rb = partial_trace(psi.density(), ["b"])
    assert np.allclose(rb.matrix, np.outer(b, b.conj()))
    assert von_neumann_entropy(ra) == pytest.approx(0.0, abs=1e-9)


def test_partial_trace_keeps_canonical_order(rng):
    s = qubit_space()
    psi = StateVector(s, random_state(rng, 16))
    r1 = partial_trace(psi, ["3", "1"])
    r2 = partial_trace(psi, ["1", "3"])
    assert r1.space.labels == ("1", "3")
    assert np.allclose(r1.matrix, r2.matrix)
    # state and density routes agree
    assert np.allclose(partial_trace(psi.density(), ["1", "3"]).matrix, r1.matrix)


def test_bell_state_entropy():
    s = HilbertSpace((("a", 2), ("b", 2)))
    psi = StateVector(s, np.array([1, 0, 0, 1]) / np.sqrt(2))
    r = partial_trace(psi, ["a"])
    assert np.allclose(r.matrix, np.eye(2) / 2)
    assert von_neumann_entropy(r) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_is_squared_overlap():
    s = HilbertSpace((("a", 2),))
    a = basis_state(s, [0])
    b = StateVector(s, np.array([1, 1]) / np.sqrt(2))
    assert fidelity(a, b) == pytest.approx(0.5)


def test_permute_factors_round_trip(rng):
    s = qubit_space()
    psi = StateVector(s, random_state(rng, 16))
    q = permute_factors(psi, ["3", "2", "1", "4"])
    assert q.space.labels == ("3", "2", "1", "4")
    back = permute_factors(q, ["1", "2", "3", "4"])
    assert np.allclose(back.amplitudes, psi.amplitudes)
    assert q.amplitudes[q.space.flat_index([1, 0, 0, 0])] == psi.amplitudes[s.flat_index([0, 0, 1, 0])]


@given(st.integers(0, 2**32 - 1), st.sampled_from(["1", "2", "3", "4", "c"]))
def test_embedding_preserves_hermiticity_and_spectrum(seed, site):
    rng = np.random.default_rng(seed)
    s = qubit_space(3)
    d = s.factor_dim(site)
    h = random_hermitian(rng, d)
    E = tensor_embed(h, site, s)
    assert E.is_hermitian()
    ev = np.linalg.eigvalsh(E.matrix)
    # each single-site eigenvalue appears with multiplicity dim/d
    assert np.allclose(np.sort(np.repeat(np.linalg.eigvalsh(h), s.dim // d)), ev)


@given(st.integers(0, 2**32 - 1), st.lists(st.sampled_from(["1", "2", "3", "4"]), min_size=1, max_size=4, unique=True))
def test_partial_trace_is_a_state(seed, keep):
    rng = np.random.default_rng(seed)
    psi = StateVector(qubit_space(), random_state(rng, 16))
    r = partial_trace(psi, keep)
    assert np.trace(r.matrix).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(r.matrix)[0] > -1e-12
    assert 0 <= von_neumann_entropy(r) <= len(keep) + 1e-9


@given(st.integers(0, 2**32 - 1))
def test_complementary_entropies_match(seed):
    rng = np.random.default_rng(seed)
    psi = StateVector(qubit_space(), random_state(rng, 16))
    a = von_neumann_entropy(partial_trace(psi, ["1", "3"]))
    b = von_neumann_entropy(partial_trace(psi, ["2", "4"]))
    assert a == pytest.approx(b, abs=1e-9)
