"""Symplectic linear algebra in the interleaved (x1, p1, ..., xn, pn) ordering.

Conventions: [x, p] = i, vacuum covariance I/2, x = (a + a^dag)/sqrt(2),
p = (a - a^dag)/(i sqrt(2)). A passive unitary U acting on annihilation
operators maps coherent amplitudes alpha -> U alpha.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from .errors import (
    BlockStructureError,
    DimensionError,
    NotSymmetricError,
    NotUnitaryError,
    UncertaintyViolationError,
    UnphysicalStateError,
)

UNITARY_TOL = 1e-9
SYMMETRY_TOL = 1e-9
BLOCK_TOL = 1e-9


def _check_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def _check_even(M, name="matrix"):
    M = _check_square(M, name)
    if M.shape[0] == 0 or M.shape[0] % 2:
        raise DimensionError(f"{name} must have even positive dimension, got {M.shape[0]}")
    return M


def check_symmetric(M, tol=SYMMETRY_TOL, name="matrix"):
    """Validate a real symmetric matrix and return it exactly symmetrised."""
    M = _check_square(M, name)
    if np.iscomplexobj(M):
        if np.max(np.abs(M.imag), initial=0.0) > tol:
            raise NotSymmetricError(f"{name} must be real")
        M = M.real
    M = np.asarray(M, dtype=float)
    scale = max(1.0, np.max(np.abs(M), initial=0.0))
    if np.max(np.abs(M - M.T), initial=0.0) > tol * scale:
        raise NotSymmetricError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def symplectic_form(n):
    """Direct sum of n copies of [[0, 1], [-1, 0]].

    Args:
        n: number of modes, at least 1.

    Returns:
        2n x 2n real array.
    """
    if int(n) != n or n < 1:
        raise DimensionError(f"mode count must be a positive integer, got {n}")
    return np.kron(np.eye(int(n)), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def n_modes_of(M):
    """Mode count of a 2n x 2n phase-space matrix."""
    return _check_even(M).shape[0] // 2


def check_unitary(U, tol=UNITARY_TOL):
    U = _check_square(U, "U").astype(complex)
    if U.shape[0] == 0:
        raise DimensionError("U must be non-empty")
    err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if err > tol:
        raise NotUnitaryError(f"||U^dag U - I|| = {err:.3g} exceeds {tol:g}")
    return U


def mode_unitary_to_orthosymplectic(U, tol=UNITARY_TOL):
    """Phase-space image R of a passive mode unitary U.

    Each 2x2 block is [[Re U_kl, -Im U_kl], [Im U_kl, Re U_kl]], so first
    moments of coherent states follow alpha -> U alpha.
    """
    U = check_unitary(U, tol)
    return complex_embed(U)


def beam_splitter_unitary(eta, i=0, j=1, n=2):
    """Mode unitary of a beam splitter with reflectivity eta between modes i and j.

    The (i, j) sub-block is [[sqrt(1-eta), -sqrt(eta)], [sqrt(eta), sqrt(1-eta)]].
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"reflectivity must lie in [0, 1], got {eta}")
    if i == j:
        raise DimensionError("beam splitter needs two distinct modes")
    if not (0 <= i < n and 0 <= j < n):
        raise DimensionError(f"mode indices ({i}, {j}) out of range for {n} modes")
    t, r = np.sqrt(1.0 - eta), np.sqrt(eta)
    U = np.eye(n, dtype=complex)
    U[i, i], U[i, j], U[j, i], U[j, j] = t, -r, r, t
    return U


def phase_shift_unitary(theta, i=0, n=1):
    U = np.eye(n, dtype=complex)
    U[i, i] = np.exp(1j * theta)
    return U


def rotation(theta):
    """Single-mode phase-space rotation for the phase shift e^{i theta}."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def is_symplectic(S, tol=1e-10):
    S = _check_even(S)
    Om = symplectic_form(S.shape[0] // 2)
    return np.max(np.abs(S.T @ Om @ S - Om)) <= tol


def is_orthosymplectic(R, tol=1e-10):
    R = _check_even(R)
    return is_symplectic(R, tol) and np.max(np.abs(R.T @ R - np.eye(R.shape[0]))) <= tol


def random_unitary(n, rng=None):
    """Haar-random n x n unitary."""
    if n == 1:
        rng = np.random.default_rng(rng)
        return np.array([[np.exp(2j * np.pi * rng.random())]])
    return unitary_group.rvs(n, random_state=rng)


def random_orthosymplectic(n, rng=None):
    return mode_unitary_to_orthosymplectic(random_unitary(n, rng))


def interleaved_to_grouped(n):
    """Permutation P with (x1..xn, p1..pn) = P @ (x1, p1, ..., xn, pn)."""
    order = np.concatenate([np.arange(0, 2 * n, 2), np.arange(1, 2 * n, 2)])
    return np.eye(2 * n)[order]


def to_grouped(M):
    P = interleaved_to_grouped(n_modes_of(M))
    return P @ M @ P.T


def to_interleaved(M):
    P = interleaved_to_grouped(n_modes_of(M))
    return P.T @ M @ P


def positive_part(M, tol=SYMMETRY_TOL):
    """[M]^+ = (|M| + M)/2 for a real symmetric M."""
    M = check_symmetric(M, tol)
    evals, evecs = np.linalg.eigh(M)
    P = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
    return 0.5 * (P + P.T)


def complex_halve(M, tol=BLOCK_TOL):
    """Map a 2n x 2n real matrix with blocks [[a, -b], [b, a]] to the n x n matrix a + ib.

    The map is an algebra isomorphism, so each eigenvalue of the result appears
    twice in the spectrum of M.
    """
    M = _check_even(np.asarray(M, dtype=float), "M")
    a = M[0::2, 0::2]
    b = M[1::2, 0::2]
    scale = max(1.0, np.max(np.abs(M), initial=0.0))
    err = max(np.max(np.abs(M[1::2, 1::2] - a)), np.max(np.abs(M[0::2, 1::2] + b)))
    if err > tol * scale:
        raise BlockStructureError(f"block structure violated by {err:.3g}")
    return a + 1j * b


def complex_embed(H):
    """Inverse of complex_halve."""
    H = _check_square(H, "H")
    n = H.shape[0]
    M = np.empty((2 * n, 2 * n))
    M[0::2, 0::2] = H.real
    M[1::2, 1::2] = H.real
    M[1::2, 0::2] = H.imag
    M[0::2, 1::2] = -H.imag
    return M


def _sqrtm_psd(V):
    evals, evecs = np.linalg.eigh(V)
    return (evecs * np.sqrt(evals)) @ evecs.T


def williamson_decompose(V, check_uncertainty=True, uncertainty_tol=1e-9):
    """Williamson normal form V = S D S^T.

    Uses the real Schur form of the antisymmetric matrix V^{1/2} Omega V^{1/2},
    whose 2x2 blocks carry the symplectic eigenvalues.

    Args:
        V: symmetric positive-definite 2n x 2n matrix.
        check_uncertainty: raise if the smallest symplectic eigenvalue is below 1/2.
        uncertainty_tol: slack for that check.

    Returns:
        (S, d): symplectic S and the symplectic eigenvalues d in descending order,
        so that V = S diag(d1, d1, ..., dn, dn) S^T.
    """
    V = check_symmetric(_check_even(V, "V"), name="V")
    n = V.shape[0] // 2
    evals = np.linalg.eigvalsh(V)
    if evals[0] <= 0:
        raise UnphysicalStateError(f"V is not positive definite (min eigenvalue {evals[0]:.3g})")
    root = _sqrtm_psd(V)
    A = root @ symplectic_form(n) @ root
    A = 0.5 * (A - A.T)
    T, O = linalg.schur(A, output="real")
    d = np.empty(n)
    for k in range(n):
        sl = slice(2 * k, 2 * k + 2)
        val = 0.5 * (T[2 * k, 2 * k + 1] - T[2 * k + 1, 2 * k])
        if val < 0:
            O[:, [2 * k, 2 * k + 1]] = O[:, [2 * k + 1, 2 * k]]
            val = -val
        d[k] = val
    order = np.argsort(-d, kind="stable")
    cols = np.ravel([[2 * k, 2 * k + 1] for k in order])
    O = O[:, cols]
    d = d[order]
    S = root @ O @ np.diag(np.repeat(d, 2) ** -0.5)
    if check_uncertainty and d[-1] < 0.5 - uncertainty_tol:
        raise UncertaintyViolationError(
            f"smallest symplectic eigenvalue {d[-1]:.6g} violates the uncertainty bound 1/2"
        )
    return S, d


def symplectic_eigenvalues(V):
    """Symplectic eigenvalues of V, descending, from the moduli of eig(i Omega V)."""
    V = check_symmetric(_check_even(V, "V"), name="V")
    n = V.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ V))
    return np.sort(ev)[::-1][::2]


@dataclass
class CSDecomposition:
    """U = Y @ D @ X with block-diagonal X = X_A + X_B and Y = Y_C + Y_D.

    Iterating yields (X, D, Y).
    """

    X: np.ndarray
    D: np.ndarray
    Y: np.ndarray
    cosines: np.ndarray
    partition: tuple
    transfers: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.X, self.D, self.Y))

    @property
    def n_beam_splitters(self):
        return len(self.cosines)

    def reflectivities(self):
        return self.cosines**2


def _complete_columns(Q, n_total):
    """Extend orthonormal columns Q (m x k) to an m x n_total orthonormal set."""
    m, k = Q.shape
    if n_total == k:
        return Q
    if k == 0:
        return np.eye(m, dtype=complex)[:, :n_total]
    extra = linalg.null_space(Q.conj().T)
    return np.hstack([Q, extra[:, : n_total - k]])


def cs_decompose(U, n_A, n_B, n_C, n_D, tol=1e-9, small=1e-8):
    """Cosine-sine decomposition of a passive unitary.

    Inputs are split into groups A, B and outputs into C, D. The middle factor
    has b = min(n_A, n_B, n_C, n_D) cosine/sine pairs (beam splitters of
    reflectivity c_i^2 between A_i, B_i) plus direct transfers of the
    remaining modes A->C, A->D, B->C, B->D. In block form (rows C|D,
    columns A|B), with the A columns ordered (pairs, A->C, A->D) and the B
    columns (pairs, B->D, B->C):

        [ C  0  0 | S  0  0 ]
        [ 0  I  0 | 0  0  0 ]
        [ 0  0  0 | 0  0  I ]
        [ S  0  0 |-C  0  0 ]
        [ 0  0  0 | 0  I  0 ]
        [ 0  0  I | 0  0  0 ]

    Args:
        U: n x n unitary.
        n_A, n_B: input partition sizes.
        n_C, n_D: output partition sizes.
        tol: unitarity and reconstruction tolerance.
        small: threshold under which a sine or cosine is treated as zero when
            completing the outer factors.

    Returns:
        CSDecomposition; iterates as (X, D, Y).
    """
    U = check_unitary(U, tol)
    n = U.shape[0]
    sizes = (n_A, n_B, n_C, n_D)
    if min(sizes) < 0 or n_A + n_B != n or n_C + n_D != n:
        raise DimensionError(f"partition {sizes} inconsistent with dimension {n}")
    b = min(sizes)
    t_AC = min(n_A, n_C) - b
    t_AD = n_A - b - t_AC
    t_BC = n_C - b - t_AC
    t_BD = n_B - b - t_BC

    U11, U12 = U[:n_C, :n_A], U[:n_C, n_A:]
    U21, U22 = U[n_C:, :n_A], U[n_C:, n_A:]

    W, sig, Vh = np.linalg.svd(U11) if U11.size else (np.eye(n_C), np.zeros(0), np.eye(n_A))
    sig = np.clip(sig, 0.0, 1.0)
    m = len(sig)
    # forced unit singular values first in the SVD; pairs go first in the canonical form
    order = list(range(t_AC, t_AC + b)) + list(range(t_AC))
    rows_C = order + list(range(m, n_C))
    cols_A = order + list(range(m, n_A))
    Y_C = W[:, rows_C].astype(complex)
    X_A = Vh[cols_A, :].astype(complex)
    c = sig[t_AC : t_AC + b].copy()
    s = np.sqrt(np.clip(1.0 - c**2, 0.0, 1.0))

    # Y_D from U21 X_A^dag = Y_D D21
    G = U21 @ X_A.conj().T
    known, idx = [], []
    for j in range(b):
        if s[j] > small:
            known.append(G[:, j] / s[j])
            idx.append(j)
    tail_cols = [G[:, b + t_AC + k] for k in range(t_AD)]
    Y_D = np.zeros((n_D, n_D), dtype=complex)
    fixed_slots = idx + list(range(b + t_BD, n_D))
    fixed_cols = known + tail_cols
    Q = np.column_stack(fixed_cols) if fixed_cols else np.zeros((n_D, 0), dtype=complex)
    full = _complete_columns(Q, n_D)
    free_slots = [k for k in range(n_D) if k not in fixed_slots]
    for slot, col in zip(fixed_slots + free_slots, full.T):
        Y_D[:, slot] = col

    # X_B rows from U12 (sine rows, B->C rows) or U22 (cosine rows, B->D rows)
    H12 = Y_C.conj().T @ U12
    H22 = Y_D.conj().T @ U22
    X_B = np.zeros((n_B, n_B), dtype=complex)
    for j in range(b):
        X_B[j] = H12[j] / s[j] if s[j] >= c[j] else -H22[j] / c[j]
    for k in range(t_BD):
        X_B[b + k] = H22[b + k]
    for k in range(t_BC):
        X_B[b + t_BD + k] = H12[b + t_AC + k]

    D = np.zeros((n, n))
    for j in range(b):
        D[j, j] = c[j]
        D[j, n_A + j] = s[j]
        D[n_C + j, j] = s[j]
        D[n_C + j, n_A + j] = -c[j]
    for k in range(t_AC):
        D[b + k, b + k] = 1.0
    for k in range(t_BC):
        D[b + t_AC + k, n_A + b + t_BD + k] = 1.0
    for k in range(t_BD):
        D[n_C + b + k, n_A + b + k] = 1.0
    for k in range(t_AD):
        D[n_C + b + t_BD + k, b + t_AC + k] = 1.0

    X = linalg.block_diag(X_A, X_B)
    Y = linalg.block_diag(Y_C, Y_D)
    err = np.max(np.abs(Y @ D @ X - U))
    if err > tol:
        raise np.linalg.LinAlgError(f"CS reconstruction error {err:.3g} exceeds {tol:g}")
    return CSDecomposition(
        X=X, D=D, Y=Y, cosines=c, partition=sizes,
        transfers={"A->C": t_AC, "A->D": t_AD, "B->C": t_BC, "B->D": t_BD},
    )
