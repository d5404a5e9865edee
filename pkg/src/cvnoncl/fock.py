"""Truncated Fock-space simulator for pure and mixed multi-mode states.

Pure states are amplitude tensors of shape (d,) * n; mixed states are dense
d^n x d^n matrices. Truncation is never renormalised away silently: every
constructor and operation reports the tail mass lost to the cutoff and raises
TruncationError when it exceeds the state's budget.
"""
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .errors import DimensionError, NotUnitaryError, TruncationError, UnphysicalStateError
from .symplectic import check_unitary

DEFAULT_BUDGET = 1e-10
THERMAL_BUDGET = 1e-12
MAX_DENSE_DIM = 4096
EIG_FLOOR = 1e-12
PAIR_FLOOR = 1e-14


@dataclass
class FockPure:
    """Pure state as an amplitude tensor of shape (cutoff,) * n_modes."""

    amplitudes: np.ndarray
    budget: float = DEFAULT_BUDGET

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.ndim < 1 or len(set(self.amplitudes.shape)) != 1:
            raise DimensionError("amplitude tensor must have equal cutoff on every mode")

    @property
    def n_modes(self):
        return self.amplitudes.ndim

    @property
    def cutoff(self):
        return self.amplitudes.shape[0]

    @property
    def vector(self):
        return self.amplitudes.ravel()

    @property
    def norm2(self):
        return float(np.vdot(self.vector, self.vector).real)

    @property
    def tail_mass(self):
        return max(0.0, 1.0 - self.norm2)

    def normalized(self):
        return FockPure(self.amplitudes / np.sqrt(self.norm2), self.budget)

    def density(self):
        v = self.vector
        return FockDensity(np.outer(v, v.conj()), self.n_modes, self.budget)


@dataclass
class FockDensity:
    """Mixed state as a dense hermitian matrix on the truncated space."""

    matrix: np.ndarray
    n_modes: int
    budget: float = DEFAULT_BUDGET

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        D = self.matrix.shape[0]
        if self.matrix.shape != (D, D):
            raise DimensionError("density matrix must be square")
        if D > MAX_DENSE_DIM:
            raise DimensionError(
                f"dense density matrices are limited to {MAX_DENSE_DIM} dimensions; "
                "lower the cutoff or use a pure state"
            )
        d = round(D ** (1.0 / self.n_modes))
        if d**self.n_modes != D:
            raise DimensionError(f"dimension {D} is not a power for {self.n_modes} modes")
        self.matrix = 0.5 * (self.matrix + self.matrix.conj().T)

    @property
    def cutoff(self):
        return round(self.matrix.shape[0] ** (1.0 / self.n_modes))

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)

    @property
    def tail_mass(self):
        return max(0.0, 1.0 - self.trace)

    @property
    def tensor(self):
        return self.matrix.reshape((self.cutoff,) * (2 * self.n_modes))

    def density(self):
        return self


ROUNDOFF = 1e-13


def _check_budget(tail, budget, required=None, what="state"):
    if tail > budget + ROUNDOFF:
        hint = f"; cutoff {required} would suffice" if required else ""
        raise TruncationError(
            f"{what} loses {tail:.3g} to truncation (budget {budget:g}){hint}",
            tail_mass=tail,
            required_cutoff=required,
        )


def _coherent_amplitudes(alpha, d):
    n = np.arange(d)
    if alpha == 0:
        out = np.zeros(d, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_cutoff(alpha, budget=DEFAULT_BUDGET):
    """Smallest cutoff whose coherent-state tail is within budget."""
    a2 = abs(alpha) ** 2
    d = 1
    limit = int(a2 + 12 * abs(alpha) + 60)
    amps = np.abs(_coherent_amplitudes(alpha, limit)) ** 2
    tails = 1.0 - np.cumsum(amps)
    while d < limit and tails[d - 1] > budget:
        d += 1
    return d


def _per_mode(values, n_modes=None):
    arr = np.atleast_1d(np.asarray(values, dtype=complex))
    if n_modes is not None and arr.size == 1:
        arr = np.repeat(arr, n_modes)
    return arr


def coherent_state(alpha, cutoff, budget=DEFAULT_BUDGET):
    """Product coherent state with amplitudes e^{-|a|^2/2} a^n / sqrt(n!) per mode.

    Args:
        alpha: complex amplitude or one per mode.
        cutoff: levels kept per mode.
        budget: allowed tail mass.
    """
    alphas = _per_mode(alpha)
    psi = np.ones((), dtype=complex)
    for a in alphas:
        psi = np.multiply.outer(psi, _coherent_amplitudes(a, cutoff))
    state = FockPure(psi, budget)
    if state.tail_mass > budget:
        need = max(coherent_cutoff(a, budget / len(alphas)) for a in alphas)
        _check_budget(state.tail_mass, budget, need, "coherent state")
    return state


def _cat_amplitudes(alpha, sign, d):
    amps = _coherent_amplitudes(alpha, d) + sign * _coherent_amplitudes(-alpha, d)
    return amps / np.sqrt(2.0 * (1.0 + sign * np.exp(-2.0 * abs(alpha) ** 2)))


def cat_cutoff(alpha, sign=1, budget=DEFAULT_BUDGET):
    """Smallest cutoff whose cat-state tail is within budget."""
    limit = int(abs(alpha) ** 2 + 12 * abs(alpha) + 60)
    tails = 1.0 - np.cumsum(np.abs(_cat_amplitudes(alpha, sign, limit)) ** 2)
    below = np.nonzero(tails <= budget + ROUNDOFF)[0]
    return int(below[0]) + 1 if below.size else limit


def cat_state(alpha, sign=1, cutoff=None, budget=DEFAULT_BUDGET):
    """(|a> + sign |-a>) normalised with the exact infinite-dimensional norm."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if alpha == 0 and sign == -1:
        raise UnphysicalStateError("odd cat with alpha = 0 is the null vector")
    if cutoff is None:
        cutoff = cat_cutoff(alpha, sign, budget)
    state = FockPure(_cat_amplitudes(alpha, sign, cutoff), budget)
    if state.tail_mass > budget:
        _check_budget(state.tail_mass, budget, cat_cutoff(alpha, sign, budget), "cat state")
    return state


def fock_superposition(coeffs, cutoff, n_modes=None, tol=1e-10):
    """Exact finite superposition sum_k c_k |level_k>.

    Args:
        coeffs: iterable of (level, amplitude); level is an int or a tuple per mode.
        cutoff: levels kept per mode.
    """
    coeffs = list(coeffs)
    if not coeffs:
        raise ValueError("empty superposition")
    levels = [tuple(np.atleast_1d(lv).astype(int)) for lv, _ in coeffs]
    if n_modes is None:
        n_modes = len(levels[0])
    psi = np.zeros((cutoff,) * n_modes, dtype=complex)
    for lv, (_, amp) in zip(levels, coeffs):
        if len(lv) != n_modes or max(lv) >= cutoff or min(lv) < 0:
            raise DimensionError(f"level {lv} outside cutoff {cutoff}")
        psi[lv] += complex(amp)
    norm2 = np.vdot(psi.ravel(), psi.ravel()).real
    if abs(norm2 - 1.0) > tol:
        raise ValueError(f"superposition is not normalised (norm^2 = {norm2:.12g})")
    return FockPure(psi)


def number_state(n, cutoff):
    return fock_superposition([(n, 1.0)], cutoff)


def thermal_minus_vacuum(p, cutoff, budget=THERMAL_BUDGET):
    """rho = (1 - p) sum_{n >= 1} p^{n-1} |n><n|, a thermal state with the vacuum removed."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    n = np.arange(cutoff)
    lam = np.where(n >= 1, (1 - p) * p ** np.maximum(n - 1, 0).astype(float), 0.0)
    rho = FockDensity(np.diag(lam), 1, budget)
    need = int(np.ceil(np.log(budget) / np.log(p))) + 1 if 0 < budget < 1 else None
    _check_budget(rho.tail_mass, budget, need, "thermal-minus-vacuum state")
    return rho


def thermal_state(nbar, cutoff, budget=THERMAL_BUDGET):
    """Single-mode thermal state with mean photon number nbar (variance nbar + 1/2)."""
    if nbar < 0:
        raise ValueError("mean photon number must be nonnegative")
    if nbar == 0:
        lam = np.zeros(cutoff)
        lam[0] = 1.0
    else:
        q = nbar / (nbar + 1.0)
        lam = (1 - q) * q ** np.arange(cutoff, dtype=float)
    rho = FockDensity(np.diag(lam), 1, budget)
    _check_budget(rho.tail_mass, budget, None, "thermal state")
    return rho


def _lower(d):
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)


def _apply_single(op, tensor, axis):
    """Apply a matrix op (d_out x d_in) to one axis of a tensor."""
    return np.moveaxis(np.tensordot(op, tensor, axes=(1, axis)), 0, axis)


def squeezed_thermal_state(s, d, cutoff, theta=0.0, budget=DEFAULT_BUDGET):
    """Single-mode Gaussian density with covariance d * R diag(s, 1/s) R^T.

    Built as S rho_th S^dag with the squeeze evaluated by expm on an enlarged
    space and then truncated.
    """
    if s <= 0 or d < 0.5:
        raise ValueError("need s > 0 and d >= 1/2")
    big = cutoff + 80
    r = 0.5 * np.log(s)
    a = _lower(big)
    z = -r * np.exp(2j * theta)  # anti-squeezes x at theta = 0
    S = linalg.expm(0.5 * (np.conj(z) * a @ a - z * a.conj().T @ a.conj().T))
    nbar = d - 0.5
    if nbar <= 0:
        lam = np.zeros(big)
        lam[0] = 1.0
    else:
        q = nbar / (nbar + 1.0)
        lam = (1 - q) * q ** np.arange(big, dtype=float)
    rho = (S * lam) @ S.conj().T
    out = FockDensity(rho[:cutoff, :cutoff], 1, budget)
    _check_budget(out.tail_mass, budget, None, "squeezed thermal state")
    return out


def tensor_product(*states):
    """Tensor product; pure if all factors are pure."""
    if all(isinstance(s, FockPure) for s in states):
        psi = np.ones((), dtype=complex)
        cut = {s.cutoff for s in states}
        if len(cut) != 1:
            raise DimensionError("factors must share a cutoff")
        for s in states:
            psi = np.multiply.outer(psi, s.amplitudes)
        return FockPure(psi, max(s.budget for s in states))
    mats = [s.density() for s in states]
    out = mats[0].matrix
    for m in mats[1:]:
        out = np.kron(out, m.matrix)
    return FockDensity(out, sum(m.n_modes for m in mats), max(m.budget for m in mats))


def random_pure_state(n_modes, cutoff, rng=None, max_level=None):
    """Normalised state with complex Gaussian amplitudes on levels < max_level."""
    rng = np.random.default_rng(rng)
    m = cutoff if max_level is None else min(max_level, cutoff)
    psi = np.zeros((cutoff,) * n_modes, dtype=complex)
    sub = rng.normal(size=(m,) * n_modes) + 1j * rng.normal(size=(m,) * n_modes)
    psi[(slice(0, m),) * n_modes] = sub
    psi /= np.linalg.norm(psi)
    return FockPure(psi)


def random_density(n_modes, cutoff, rank=2, rng=None, max_level=None):
    rng = np.random.default_rng(rng)
    weights = rng.dirichlet(np.ones(rank))
    D = cutoff**n_modes
    rho = np.zeros((D, D), dtype=complex)
    for w in weights:
        v = random_pure_state(n_modes, cutoff, rng, max_level).vector
        rho += w * np.outer(v, v.conj())
    return FockDensity(rho, n_modes)


# passive linear optics


@lru_cache(maxsize=64)
def _two_mode_table(u_key, d):
    """Images of |m, n> (m, n < d) under the two-mode unitary u, indexed [m, n, p] for |p, m+n-p>.

    Built by the stable creation-operator recursion
    U|m, n> = (u00 a1^dag + u10 a2^dag) U|m-1, n> / sqrt(m).
    """
    u = np.array(u_key, dtype=complex).reshape(2, 2)
    P = 2 * d - 1
    amp = np.zeros((d, d, P), dtype=complex)
    amp[0, 0, 0] = 1.0
    p = np.arange(P)
    sq_p = np.sqrt(p.astype(float))
    for N in range(1, 2 * d - 1):
        q = N - p
        sq_q = np.sqrt(np.clip(q, 0, None).astype(float))
        for m in range(max(0, N - d + 1), min(N, d - 1) + 1):
            n = N - m
            if m > 0:
                prev, col, norm = amp[m - 1, n], 0, np.sqrt(m)
            else:
                prev, col, norm = amp[m, n - 1], 1, np.sqrt(n)
            # a1^dag |p-1, q> = sqrt(p) |p, q>; a2^dag |p, q-1> = sqrt(q) |p, q>
            shifted1 = np.zeros(P, dtype=complex)
            shifted1[1:] = prev[:-1] * sq_p[1:]
            shifted2 = prev * sq_q * (q >= 1)
            amp[m, n] = (u[0, col] * shifted1 + u[1, col] * shifted2) / norm
    return amp


def _apply_two_mode(tensor, u, i, j, batch_axes=0):
    """Apply the Fock representation of a 2x2 mode unitary to axes i, j (after batch axes)."""
    d = tensor.shape[batch_axes]
    key = tuple(np.round(np.asarray(u, dtype=complex).ravel(), 15).tolist())
    amp = _two_mode_table(key, d)
    ai, aj = batch_axes + i, batch_axes + j
    T = np.moveaxis(tensor, (ai, aj), (-2, -1))
    shape = T.shape
    flat = T.reshape(-1, d, d)
    out = np.zeros_like(flat)
    for N in range(2 * d - 1):
        ms = np.arange(max(0, N - d + 1), min(N, d - 1) + 1)
        coeff = amp[ms, N - ms][:, ms]  # (input m, output p) with p restricted to the same window
        vals = flat[:, ms, N - ms]
        out[:, ms, N - ms] = vals @ coeff
    return np.moveaxis(out.reshape(shape), (-2, -1), (ai, aj))


def _givens_decomposition(U):
    """Factor U = G_1 ... G_m Dg into nearest-neighbour 2x2 unitaries and a diagonal.

    Returns (list of (mode_a, mode_b, 2x2 block) in application order, diagonal phases).
    Application order means: apply diagonal first, then the blocks in list order.
    """
    n = U.shape[0]
    W = U.copy()
    blocks = []
    for col in range(n - 1):
        for row in range(n - 1, col, -1):
            a, b = W[row - 1, col], W[row, col]
            r = np.hypot(abs(a), abs(b))
            if abs(b) < 1e-15:
                continue
            g = np.array([[np.conj(a), np.conj(b)], [-b, a]]) / r
            W[[row - 1, row], :] = g @ W[[row - 1, row], :]
            blocks.append((row - 1, row, g.conj().T))
    return blocks[::-1], np.diag(W).copy()


def _split_block(g):
    """Write a 2x2 unitary as diag(e^{i f1}, e^{i f2}) @ BS(eta) @ diag(e^{i h1}, e^{i h2})."""
    t = min(1.0, abs(g[0, 0]))
    if t >= 1 - 1e-15:
        return (np.angle(g[0, 0]), np.angle(g[1, 1])), 0.0, (0.0, 0.0)
    if t <= 1e-15:
        return (np.angle(-g[0, 1]), np.angle(g[1, 0])), 1.0, (0.0, 0.0)
    f1 = np.angle(g[0, 0])
    return (f1, np.angle(g[1, 0])), 1.0 - t * t, (0.0, np.angle(-g[0, 1]) - f1)


def _bs_matrix(eta):
    t, r = np.sqrt(1 - eta), np.sqrt(eta)
    return np.array([[t, -r], [r, t]], dtype=complex)


def _apply_phase(tensor, phi, mode, d, batch_axes=0, conj=False):
    ph = np.exp(1j * phi * np.arange(d))
    if conj:
        ph = ph.conj()
    shape = [1] * tensor.ndim
    shape[batch_axes + mode] = d
    return tensor * ph.reshape(shape)


def _apply_unitary_tensor(tensor, U, batch_axes=0, conj=False):
    """Apply the Fock representation of mode unitary U to a (batched) amplitude tensor.

    conj=True applies the complex-conjugate representation (for bra indices).
    """
    d = tensor.shape[batch_axes]
    blocks, diag = _givens_decomposition(U)
    out = tensor
    for k, ph in enumerate(diag):
        out = _apply_phase(out, np.angle(ph), k, d, batch_axes, conj)
    for a, b, g in blocks:
        (f1, f2), eta, (h1, h2) = _split_block(g)
        out = _apply_phase(out, h1, a, d, batch_axes, conj)
        out = _apply_phase(out, h2, b, d, batch_axes, conj)
        bs = _bs_matrix(eta)
        out = _apply_two_mode(out, bs, a, b, batch_axes)
        out = _apply_phase(out, f1, a, d, batch_axes, conj)
        out = _apply_phase(out, f2, b, d, batch_axes, conj)
    return out


def apply_mode_unitary(state, U, check=True):
    """Evolve a state under the passive linear network with mode unitary U.

    U is factored into nearest-neighbour beam splitters and phase shifters;
    each beam splitter acts exactly within every photon-number sector.
    Photons pushed above the cutoff are lost and checked against the budget.
    """
    U = check_unitary(U)
    if U.shape[0] != state.n_modes:
        raise DimensionError(f"unitary acts on {U.shape[0]} modes, state has {state.n_modes}")
    n = state.n_modes
    if isinstance(state, FockPure):
        out = FockPure(_apply_unitary_tensor(state.amplitudes, U), state.budget)
        before = state.norm2
        lost = max(0.0, before - out.norm2)
    else:
        T = state.tensor
        # ket axes 0..n-1, bra axes n..2n-1
        T = _apply_unitary_tensor(T, U, 0)
        T = np.moveaxis(T, list(range(n)), list(range(n, 2 * n)))
        T = _apply_unitary_tensor(T, U, 0, conj=True)
        T = np.moveaxis(T, list(range(n, 2 * n)), list(range(n)))
        D = state.matrix.shape[0]
        out = FockDensity(T.reshape(D, D), n, state.budget)
        lost = max(0.0, state.trace - out.trace)
    if check:
        _check_budget(state.tail_mass + lost, state.budget, None, "passive evolution")
    return out


# displacements and moments


def _displacement_matrix(alpha, d_in, d_out):
    big = max(d_in, d_out) + int(abs(alpha) ** 2 + 12 * abs(alpha) + 40)
    a = _lower(big)
    Dm = linalg.expm(alpha * a.conj().T - np.conj(alpha) * a)
    return Dm[:d_out, :d_in]


def apply_displacement(state, alpha, check=True):
    """Apply D(alpha_k) on every mode k; raises TruncationError past the budget."""
    n = state.n_modes
    alphas = _per_mode(alpha, n)
    if alphas.size != n:
        raise DimensionError("one displacement per mode expected")
    d = state.cutoff
    if isinstance(state, FockPure):
        T = state.amplitudes
        ext = d + int(np.max(np.abs(alphas)) ** 2 + 12 * np.max(np.abs(alphas)) + 10)
        for k, a in enumerate(alphas):
            if a == 0:
                continue
            T = _apply_single(_displacement_matrix(a, T.shape[k], ext), T, k)
        full = np.pad(T, [(0, ext - s) for s in T.shape]) if T.shape[0] != ext else T
        kept = full[(slice(0, d),) * n] if full.shape[0] > d else full
        out = FockPure(kept, state.budget)
        if check:
            lost = np.vdot(full.ravel(), full.ravel()).real - out.norm2
            tail = state.tail_mass + max(0.0, lost)
            need = None
            if tail > state.budget:
                need = d
                while need < ext:
                    sub = full[(slice(0, need),) * n]
                    if state.norm2 - np.vdot(sub.ravel(), sub.ravel()).real + state.tail_mass <= state.budget:
                        break
                    need += 1
            _check_budget(tail, state.budget, need, "displaced state")
        return out
    T = state.tensor
    for k, a in enumerate(alphas):
        if a == 0:
            continue
        M = _displacement_matrix(a, d, d)
        T = _apply_single(M, T, k)
        T = _apply_single(M.conj(), T, n + k)
    D = state.matrix.shape[0]
    out = FockDensity(T.reshape(D, D), n, state.budget)
    if check:
        _check_budget(state.tail_mass + max(0.0, state.trace - out.trace), state.budget, None, "displaced state")
    return out


def _quadrature_ops(d):
    """x and p on a space of dimension d (exact on vectors supported below d - 1)."""
    a = _lower(d)
    x = (a + a.T) / np.sqrt(2.0)
    p = (a - a.T) / (1j * np.sqrt(2.0))
    return x, p


def _q_images(tensor, n, batch_axes=0):
    """[q_s psi for s = 0..2n-1] on the tensor padded by one level per mode."""
    d = tensor.shape[batch_axes]
    pad = [(0, 0)] * batch_axes + [(0, 1)] * n
    T = np.pad(tensor, pad)
    x, p = _quadrature_ops(d + 1)
    out = []
    for k in range(n):
        out.append(_apply_single(x, T, batch_axes + k))
        out.append(_apply_single(p, T, batch_axes + k))
    return T, out


def quadrature_moments(state):
    """First moments tr(rho q) and covariance tr(rho {q_s, q_t}/2) - means.

    The state is normalised by its trace; a warning is issued if the tail
    mass exceeds the budget.
    """
    n = state.n_modes
    if state.tail_mass > state.budget:
        warnings.warn(f"tail mass {state.tail_mass:.3g} exceeds budget {state.budget:g}", RuntimeWarning)
    if isinstance(state, FockPure):
        T, qs = _q_images(state.amplitudes, n)
        norm = state.norm2
        flat = [q.ravel() for q in qs]
        t = T.ravel()
        mean = np.array([np.vdot(t, q).real for q in flat]) / norm
        G = np.array([[np.vdot(a, b) for b in flat] for a in flat]) / norm
    else:
        # diagonalise once; moments are weighted sums over eigenvectors
        lam, vecs = _support(state)
        norm = lam.sum()
        d = state.cutoff
        Psi = vecs.T.reshape((len(lam),) + (d,) * n)
        T, qs = _q_images(Psi, n, batch_axes=1)
        r = len(lam)
        flat = [q.reshape(r, -1) for q in qs]
        t = T.reshape(r, -1)
        mean = np.array([np.einsum("i,ij,ij->", lam, t.conj(), q).real for q in flat]) / norm
        G = np.array([[np.einsum("i,ij,ij->", lam, a.conj(), b) for b in flat] for a in flat]) / norm
    V = G.real - np.outer(mean, mean)
    return mean, 0.5 * (V + V.T)


def _support(state, floor=EIG_FLOOR):
    lam, vecs = np.linalg.eigh(state.matrix)
    keep = lam > floor
    if np.any(lam < -1e-10):
        raise UnphysicalStateError(f"density matrix has eigenvalue {lam.min():.3g} < 0")
    return lam[keep], vecs[:, keep]


def qfi_matrix(state):
    """QFI matrix F_st = 1/2 sum_ij (l_i - l_j)^2 / (l_i + l_j) <i|q_s|j><j|q_t|i>.

    The sum over the kernel of rho is done in closed form on a space padded by
    one level per mode, so the result is exact for states supported below the
    cutoff. For pure states F equals the covariance matrix.
    """
    n = state.n_modes
    rho = state.density()
    if rho.tail_mass > rho.budget:
        warnings.warn(f"tail mass {rho.tail_mass:.3g} exceeds budget {rho.budget:g}", RuntimeWarning)
    if isinstance(state, FockPure):
        lam = np.array([state.norm2])
        Psi = state.amplitudes[None]
    else:
        lam, vecs = _support(rho)
        Psi = vecs.T.reshape((len(lam),) + (rho.cutoff,) * n)
    lam = lam / lam.sum()
    r = len(lam)
    if isinstance(state, FockPure):
        Psi = Psi / np.sqrt(state.norm2)
    T, qs = _q_images(Psi, n, batch_axes=1)
    t = T.reshape(r, -1)
    flat = [q.reshape(r, -1) for q in qs]
    Q = [t.conj() @ q.T for q in flat]  # Q[s][i, j] = <psi_i|q_s|psi_j>
    L = lam[:, None] + lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(L > PAIR_FLOOR, (lam[:, None] - lam[None, :]) ** 2 / L, 0.0)
    m = 2 * n
    F = np.empty((m, m))
    for s in range(m):
        for u in range(s, m):
            pair = Q[s] * Q[u].T  # Q^s_ij Q^u_ji
            # kernel of rho: lam_i <q_s psi_i|(1 - P_support) q_u psi_i>
            kernel = np.einsum("i,ij,ij->", lam, flat[s].conj(), flat[u]) - np.sum(lam[:, None] * pair)
            F[s, u] = F[u, s] = 0.5 * np.sum(c * pair).real + kernel.real
    return F


# measurements


@dataclass
class MeasurementOutcome:
    outcome: tuple
    probability: float
    post_state: object


def _normalise_phase(psi):
    flat = psi.ravel()
    k = np.argmax(np.abs(flat))
    if abs(flat[k]) == 0:
        return psi
    return psi * (abs(flat[k]) / flat[k])


def _check_modes(state, modes):
    modes = sorted(set(int(m) for m in np.atleast_1d(modes)))
    if not modes:
        raise ValueError("measurement needs at least one mode")
    if modes[0] < 0 or modes[-1] >= state.n_modes:
        raise DimensionError(f"modes {modes} out of range for {state.n_modes} modes")
    return modes


def measure_photon_number(state, modes, min_probability=1e-15):
    """Photon counting on a subset of modes.

    Returns:
        list of MeasurementOutcome(outcome tuple, probability, normalised post-state
        on the remaining modes, or None if every mode was measured). Outcomes with
        probability below min_probability are dropped.
    """
    modes = _check_modes(state, modes)
    n = state.n_modes
    rest = [k for k in range(n) if k not in modes]
    d = state.cutoff
    results = []
    if isinstance(state, FockPure):
        T = np.moveaxis(state.amplitudes, modes, list(range(len(modes))))
        for out in product(range(d), repeat=len(modes)):
            sub = T[out]
            prob = float(np.vdot(np.ravel(sub), np.ravel(sub)).real)
            if prob < min_probability:
                continue
            post = FockPure(_normalise_phase(sub / np.sqrt(prob)), state.budget) if rest else None
            results.append(MeasurementOutcome(out, prob, post))
        return results
    T = state.tensor
    src = modes + [n + k for k in modes]
    T = np.moveaxis(T, src, list(range(2 * len(modes))))
    k = len(modes)
    for out in product(range(d), repeat=k):
        sub = T[out + out]
        if rest:
            Dr = d ** len(rest)
            M = sub.reshape(Dr, Dr)
            prob = float(np.trace(M).real)
        else:
            prob = float(np.real(sub))
        if prob < min_probability:
            continue
        post = FockDensity(M / prob, len(rest), state.budget) if rest else None
        results.append(MeasurementOutcome(out, prob, post))
    return results


@dataclass
class ProjectionResult:
    probability: float
    post_state: object
    null: bool = False


def _target_vector(target, d):
    if isinstance(target, str):
        target = (target,)
    kind = target[0]
    if kind == "vacuum":
        vec = np.zeros(d, dtype=complex)
        vec[0] = 1.0
    elif kind == "coherent":
        vec = _coherent_amplitudes(complex(target[1]), d)
    elif kind == "fock":
        level = int(target[1])
        if not 0 <= level < d:
            raise DimensionError(f"Fock level {level} outside cutoff {d}")
        vec = np.zeros(d, dtype=complex)
        vec[level] = 1.0
    else:
        raise ValueError(f"unknown projection target {kind!r}")
    return vec


def project_onto(state, mode, target="vacuum"):
    """Project one mode onto |0>, a coherent state or a Fock state.

    Args:
        target: "vacuum", ("coherent", alpha) or ("fock", level).

    Returns:
        ProjectionResult; probability 0 gives null=True and post_state None.
    """
    if not 0 <= mode < state.n_modes:
        raise DimensionError(f"mode {mode} out of range")
    d = state.cutoff
    vec = _target_vector(target, d)
    n = state.n_modes
    if isinstance(state, FockPure):
        sub = np.tensordot(vec.conj(), state.amplitudes, axes=(0, mode))
        prob = float(np.vdot(np.ravel(sub), np.ravel(sub)).real)
        if prob <= 0:
            return ProjectionResult(0.0, None, True)
        if n == 1:
            return ProjectionResult(prob, None)
        return ProjectionResult(prob, FockPure(_normalise_phase(sub / np.sqrt(prob)), state.budget))
    T = state.tensor
    T = np.tensordot(vec.conj(), T, axes=(0, mode))
    T = np.tensordot(vec, T, axes=(0, n - 1 + mode))
    if n == 1:
        prob = float(np.real(T))
        return ProjectionResult(prob, None, prob <= 0)
    Dr = d ** (n - 1)
    M = T.reshape(Dr, Dr)
    prob = float(np.trace(M).real)
    if prob <= 0:
        return ProjectionResult(0.0, None, True)
    return ProjectionResult(prob, FockDensity(M / prob, n - 1, state.budget))


def partial_trace(state, keep):
    """Reduced density matrix on the modes listed in keep."""
    keep = sorted(set(keep))
    n = state.n_modes
    d = state.cutoff
    drop = [k for k in range(n) if k not in keep]
    if isinstance(state, FockPure):
        T = np.moveaxis(state.amplitudes, keep, list(range(len(keep))))
        Dk = d ** len(keep)
        M = T.reshape(Dk, -1)
        return FockDensity(M @ M.conj().T, len(keep), state.budget)
    T = state.tensor
    for k in sorted(drop, reverse=True):
        m = T.ndim // 2
        T = np.trace(T, axis1=k, axis2=m + k)
    Dk = d ** len(keep)
    return FockDensity(T.reshape(Dk, Dk), len(keep), state.budget)


def fidelity(a, b):
    """Fidelity between a pure state and any state: <psi|rho|psi> (normalised)."""
    if isinstance(a, FockDensity) and isinstance(b, FockPure):
        a, b = b, a
    if not isinstance(a, FockPure):
        raise TypeError("at least one argument must be pure")
    va = a.vector / np.sqrt(a.norm2)
    if isinstance(b, FockPure):
        vb = b.vector / np.sqrt(b.norm2)
        return float(abs(np.vdot(va, vb)) ** 2)
    return float(np.vdot(va, b.matrix @ va).real / b.trace)
