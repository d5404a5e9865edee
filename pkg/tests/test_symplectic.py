import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.linalg import cossin

from cvnoncl.errors import (
    BlockStructureError,
    DimensionError,
    NotSymmetricError,
    NotUnitaryError,
    UncertaintyViolationError,
    UnphysicalStateError,
)
from cvnoncl.gaussian import random_covariance
from cvnoncl.symplectic import (
    beam_splitter_unitary,
    check_unitary,
    complex_embed,
    complex_halve,
    cs_decompose,
    is_orthosymplectic,
    is_symplectic,
    mode_unitary_to_orthosymplectic,
    phase_shift_unitary,
    positive_part,
    random_orthosymplectic,
    random_unitary,
    rotation,
    symplectic_eigenvalues,
    symplectic_form,
    to_grouped,
    to_interleaved,
    williamson_decompose,
)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_symplectic_form_squares_to_minus_identity(n):
    Om = symplectic_form(n)
    assert_allclose(Om @ Om, -np.eye(2 * n))
    assert_allclose(Om.T, -Om)
    assert_allclose(Om[:2, :2], [[0, 1], [-1, 0]])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_mode_unitary_maps_to_orthosymplectic(n, rng):
    U = random_unitary(n, rng)
    R = mode_unitary_to_orthosymplectic(U)
    assert is_orthosymplectic(R)
    assert is_symplectic(R)
    assert_allclose(R.T @ R, np.eye(2 * n), atol=1e-12)


def test_orthosymplectic_map_is_a_homomorphism(rng):
    U, W = random_unitary(3, rng), random_unitary(3, rng)
    R = mode_unitary_to_orthosymplectic
    assert_allclose(R(U @ W), R(U) @ R(W), atol=1e-12)


def test_phase_shift_is_a_rotation():
    R = mode_unitary_to_orthosymplectic(phase_shift_unitary(0.3))
    assert_allclose(R, rotation(0.3), atol=1e-15)


def test_beam_splitter_block():
    U = beam_splitter_unitary(0.25, 0, 2, 3)
    assert_allclose(U[np.ix_([0, 2], [0, 2])], [[np.sqrt(0.75), -0.5], [0.5, np.sqrt(0.75)]])
    assert U[1, 1] == 1
    check_unitary(U)


@pytest.mark.parametrize("eta", [-0.1, 1.5])
def test_beam_splitter_rejects_bad_reflectivity(eta):
    with pytest.raises(ValueError):
        beam_splitter_unitary(eta)


def test_check_unitary_rejects_nonunitary():
    with pytest.raises(NotUnitaryError):
        check_unitary(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(DimensionError):
        check_unitary(np.ones((2, 3)))


def test_grouped_ordering_round_trip(rng):
    V = random_covariance(3, rng)
    G = to_grouped(V)
    assert_allclose(G[:3, :3], V[0::2, 0::2])
    assert_allclose(to_interleaved(G), V)


def test_complex_halve_round_trip(rng):
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    M = complex_embed(H)
    assert_allclose(complex_halve(M), H)


def test_complex_embed_doubles_the_spectrum(rng):
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = H + H.conj().T
    assert_allclose(np.linalg.eigvalsh(complex_embed(H)), np.repeat(np.linalg.eigvalsh(H), 2), atol=1e-12)


def test_complex_halve_rejects_wrong_blocks():
    with pytest.raises(BlockStructureError):
        complex_halve(np.diag([1.0, 2.0]))


def test_positive_part():
    M = np.diag([2.0, -1.0])
    assert_allclose(positive_part(M), np.diag([2.0, 0.0]))
    with pytest.raises(NotSymmetricError):
        positive_part(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_williamson_vacuum_is_trivial():
    S, d = williamson_decompose(0.5 * np.eye(4))
    assert_allclose(d, [0.5, 0.5])
    assert_allclose(S @ S.T, np.eye(4), atol=1e-12)


def test_williamson_single_mode():
    S, d = williamson_decompose(np.diag([2.0, 1.0]))
    assert_allclose(d, [np.sqrt(2.0)])
    assert_allclose(S @ S.T, np.diag([np.sqrt(2.0), 1 / np.sqrt(2.0)]), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_williamson_reconstructs(n, rng):
    V = random_covariance(n, rng, max_log_squeeze=1.5)
    S, d = williamson_decompose(V)
    assert is_symplectic(S, tol=1e-9)
    assert np.all(np.diff(d) <= 1e-12)
    assert_allclose(S @ np.diag(np.repeat(d, 2)) @ S.T, V, atol=1e-10)
    assert_allclose(symplectic_eigenvalues(V), d, atol=1e-10)


def test_williamson_flags_uncertainty_violation():
    with pytest.raises(UncertaintyViolationError):
        williamson_decompose(np.diag([0.2, 0.2]))
    S, d = williamson_decompose(np.diag([0.2, 0.2]), check_uncertainty=False)
    assert_allclose(d, [0.2])
    with pytest.raises(UnphysicalStateError):
        williamson_decompose(np.diag([1.0, -1.0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_symplectic_eigenvalues_invariant_under_symplectic_maps(seed, n):
    rng = np.random.default_rng(seed)
    V = random_covariance(n, rng)
    R = random_orthosymplectic(n, rng)
    assert_allclose(symplectic_eigenvalues(R @ V @ R.T), symplectic_eigenvalues(V), atol=1e-9)


PARTITIONS = [
    (1, 1, 1, 1),
    (2, 1, 1, 2),
    (3, 2, 2, 3),
    (2, 2, 2, 2),
    (3, 0, 2, 1),
    (0, 3, 1, 2),
    (1, 4, 3, 2),
    (4, 4, 1, 7),
    (5, 3, 6, 2),
]


@pytest.mark.parametrize("sizes", PARTITIONS)
def test_cs_decomposition_reconstructs(sizes, rng):
    n = sizes[0] + sizes[1]
    U = random_unitary(n, rng)
    dec = cs_decompose(U, *sizes)
    X, D, Y = dec
    assert_allclose(Y @ D @ X, U, atol=1e-11)
    for M in (X, D, Y):
        check_unitary(M, 1e-11)
    n_A, n_B, n_C, n_D = sizes
    assert_allclose(X[:n_A, n_A:], 0, atol=1e-12)
    assert_allclose(Y[:n_C, n_C:], 0, atol=1e-12)
    assert dec.n_beam_splitters == min(sizes)
    t = dec.transfers
    assert t["A->C"] + t["A->D"] + dec.n_beam_splitters == n_A
    assert t["A->C"] + t["B->C"] + dec.n_beam_splitters == n_C


def test_cs_decomposition_of_beam_splitter():
    dec = cs_decompose(beam_splitter_unitary(0.25), 1, 1, 1, 1)
    assert_allclose(dec.cosines, [np.sqrt(3) / 2])
    assert_allclose(dec.reflectivities(), [0.75])


def test_cs_decomposition_block_diagonal():
    U = np.kron(np.eye(2), np.eye(2))
    dec = cs_decompose(U.astype(complex), 2, 2, 2, 2)
    assert_allclose(dec.cosines, [1.0, 1.0])


def test_cs_decomposition_transfers_for_unbalanced_partition(rng):
    dec = cs_decompose(random_unitary(5, rng), 3, 2, 2, 3)
    assert dec.n_beam_splitters == 2
    assert dec.transfers["A->D"] == 1


@pytest.mark.parametrize("p", [1, 2, 3])
def test_cs_cosines_match_scipy(p, rng):
    n = 2 * p
    U = random_unitary(n, rng)
    _, cs, _ = cossin(U, p=p, q=p)
    ref = np.sort(np.abs(np.diag(cs[:p, :p])))
    assert_allclose(np.sort(np.abs(cs_decompose(U, p, p, p, p).cosines)), ref, atol=1e-10)


def test_cs_decomposition_rejects_bad_partition(rng):
    with pytest.raises(DimensionError):
        cs_decompose(random_unitary(3, rng), 1, 1, 2, 1)
