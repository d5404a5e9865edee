"""Gaussian states: QFI, single-mode measures, convertibility and conditioning."""
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (
    DimensionError,
    NonclassicalAncillaError,
    NotPureError,
    UnphysicalStateError,
)
from .monotones import f_spectrum, g_spectrum
from .symplectic import (
    _check_even,
    check_symmetric,
    mode_unitary_to_orthosymplectic,
    random_orthosymplectic,
    rotation,
    symplectic_eigenvalues,
    symplectic_form,
)

PHYS_TOL = 1e-9
CLASSICAL_TOL = 1e-12
CONVERT_TOL = 1e-10
PURITY_TOL = 1e-6

P0 = "P0"
GPN = "GPN"


def _regime(regime):
    r = str(regime).upper()
    if r in ("P0", "GPN"):
        return r
    raise ValueError(f"regime must be P0 or GPN, got {regime!r}")


def check_physical(V, tol=PHYS_TOL):
    """Validate V + (i/2) Omega >= 0 and return V symmetrised."""
    V = check_symmetric(_check_even(V, "covariance"), tol=1e-9, name="covariance")
    Om = symplectic_form(V.shape[0] // 2)
    lo = np.linalg.eigvalsh(V + 0.5j * Om)[0]
    if lo < -tol:
        raise UnphysicalStateError(f"covariance violates the uncertainty principle (min eigenvalue {lo:.3g})")
    return V


@dataclass
class GaussianState:
    """First moments and covariance matrix in interleaved ordering."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.cov = check_physical(np.asarray(self.cov, dtype=float))
        if self.mean is None:
            self.mean = np.zeros(self.cov.shape[0])
        self.mean = np.asarray(self.mean, dtype=float)
        if self.mean.shape != (self.cov.shape[0],):
            raise DimensionError("mean length must match covariance dimension")

    @property
    def n_modes(self):
        return self.cov.shape[0] // 2

    def is_pure(self, tol=PURITY_TOL):
        return bool(np.all(np.abs(symplectic_eigenvalues(self.cov) - 0.5) <= tol))


def as_cov(state):
    return state.cov if isinstance(state, GaussianState) else check_physical(np.asarray(state, dtype=float))


def vacuum_cov(n=1):
    return 0.5 * np.eye(2 * n)


def squeezed_cov(s, theta=0.0):
    """Pure single-mode squeezed covariance diag(s/2, 1/(2s)) rotated by theta."""
    if s <= 0:
        raise ValueError("squeezing factor must be positive")
    R = rotation(theta)
    return R @ np.diag([s / 2.0, 1.0 / (2.0 * s)]) @ R.T


def thermal_cov(d, n=1):
    """Thermal covariance d * I with d >= 1/2."""
    if d < 0.5 - PHYS_TOL:
        raise UnphysicalStateError("thermal variance must be at least 1/2")
    return d * np.eye(2 * n)


def squeezed_thermal_cov(s, d, theta=0.0):
    """d * S S^T for the single-mode squeeze S = diag(sqrt s, 1/sqrt s), i.e. symplectic eigenvalue d."""
    return 2.0 * d * squeezed_cov(s, theta)


def two_mode_squeezed_cov(r):
    """Two-mode squeezed vacuum with squeezing parameter r."""
    c, s = np.cosh(2 * r) / 2.0, np.sinh(2 * r) / 2.0
    Z = np.diag([1.0, -1.0])
    return np.block([[c * np.eye(2), s * Z], [s * Z, c * np.eye(2)]])


def direct_sum(*covs):
    return linalg.block_diag(*covs)


def random_covariance(n, rng=None, max_log_squeeze=1.0, max_excess=1.0):
    """Random n-mode covariance S diag(d_1, d_1, ..., d_n, d_n) S^T.

    The symplectic is K1 diag(e^r, e^-r, ...) K2 with Haar K1, K2 and r uniform
    in [-max_log_squeeze, max_log_squeeze]; d_i - 1/2 is uniform in [0, max_excess].
    """
    rng = np.random.default_rng(rng)
    r = rng.uniform(-max_log_squeeze, max_log_squeeze, n)
    Z = np.diag(np.ravel([[np.exp(x), np.exp(-x)] for x in r]))
    S = random_orthosymplectic(n, rng) @ Z @ random_orthosymplectic(n, rng)
    d = 0.5 + max_excess * rng.random(n)
    V = S @ np.diag(np.repeat(d, 2)) @ S.T
    return 0.5 * (V + V.T)


def eig_pair(V):
    """(v_plus, v_minus) of a single-mode covariance."""
    V = np.asarray(V, dtype=float)
    if V.shape != (2, 2):
        raise DimensionError("single-mode covariance expected")
    lo, hi = np.linalg.eigvalsh(V)
    return float(hi), float(lo)


def cov_from_pair(v_plus, v_minus, theta=0.0):
    R = rotation(theta)
    return R @ np.diag([v_plus, v_minus]) @ R.T


def is_classical_gaussian(V):
    """True iff the smallest eigenvalue of V is at least 1/2."""
    V = check_physical(V)
    return bool(np.linalg.eigvalsh(V)[0] >= 0.5 - CLASSICAL_TOL)


def gaussian_qfi(V):
    """QFI matrix F = Omega V^{-1} Omega^T / 4 of a Gaussian state."""
    V = check_symmetric(_check_even(V, "V"), name="V")
    Om = symplectic_form(V.shape[0] // 2)
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise UnphysicalStateError("covariance matrix is singular") from exc
    if not np.all(np.isfinite(Vinv)) or np.linalg.cond(V) > 1e14:
        raise UnphysicalStateError("covariance matrix is singular")
    F = 0.25 * Om @ Vinv @ Om.T
    return 0.5 * (F + F.T)


def gaussian_fg_spectra(V):
    """f and g spectra of a Gaussian state, evaluated on its QFI matrix."""
    F = gaussian_qfi(check_physical(V))
    return f_spectrum(F), g_spectrum(F)


@dataclass
class NMeasures:
    n1: float
    n2: float
    n3: float
    v_plus: float
    v_minus: float


def n_measures(V):
    """N1 = max(1 - 2 v_-, 0), N2 = N1/(2 v_+ - 1), N3 = v_+ N2 (N2 = N3 = 0 when N1 = 0)."""
    V = np.asarray(V, dtype=float)
    if V.shape != (2, 2):
        raise DimensionError("n_measures needs a single-mode covariance; use pure_convertible for n modes")
    V = check_physical(V)
    vp, vm = eig_pair(V)
    n1 = max(1.0 - 2.0 * vm, 0.0)
    if n1 == 0.0:
        return NMeasures(0.0, 0.0, 0.0, vp, vm)
    n2 = n1 / (2.0 * vp - 1.0)
    return NMeasures(n1, n2, vp * n2, vp, vm)


@dataclass
class ConversionVerdict:
    """Outcome of a convertibility test.

    certificates lists the violated monotones as (name, source, target);
    checked lists every comparison made.
    """

    feasible: bool
    regime: str
    certificates: list = field(default_factory=list)
    checked: list = field(default_factory=list)

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "regime": self.regime,
            "certificates": [list(c) for c in self.certificates],
            "checked": [list(c) for c in self.checked],
        }


def _verdict(regime, pairs, tol):
    checked = [(name, float(s), float(t)) for name, s, t in pairs]
    bad = [c for c in checked if c[2] > c[1] + tol]
    return ConversionVerdict(feasible=not bad, regime=regime, certificates=bad, checked=checked)


def convertible(source, target, regime=P0, tol=CONVERT_TOL):
    """Single-mode Gaussian convertibility under P0 or GPN operations.

    P0: N1 and N2 must not increase. GPN: N1 and N3 must not increase.
    Means are ignored since displacements are free.
    """
    regime = _regime(regime)
    Vs, Vt = as_cov(source), as_cov(target)
    if Vs.shape != (2, 2) or Vt.shape != (2, 2):
        raise DimensionError("convertible handles single modes; use pure_convertible for n-mode pure states")
    ns, nt = n_measures(Vs), n_measures(Vt)
    second = ("N2", ns.n2, nt.n2) if regime == P0 else ("N3", ns.n3, nt.n3)
    return _verdict(regime, [("N1", ns.n1, nt.n1), second], tol)


def pure_convertible(s_source, s_target, tol=CONVERT_TOL):
    """n-mode pure Gaussian conversion: s_i(target) <= s_i(source) for all i."""
    src = np.asarray(s_source, dtype=float)
    tgt = np.asarray(s_target, dtype=float)
    for arr in (src, tgt):
        if np.any(arr < 1.0 - tol):
            raise ValueError("squeezing factors must be >= 1")
    src, tgt = np.sort(src)[::-1], np.sort(tgt)[::-1]
    n = max(len(src), len(tgt))
    src = np.pad(src, (0, n - len(src)), constant_values=1.0)
    tgt = np.pad(tgt, (0, n - len(tgt)), constant_values=1.0)
    pairs = [(f"s{i + 1}", a, b) for i, (a, b) in enumerate(zip(src, tgt))]
    return _verdict(GPN, pairs, tol)


def squeezing_spectrum(state, tol=PURITY_TOL):
    """Squeezing factors s_1 >= ... >= s_n >= 1 of a pure Gaussian state."""
    V = as_cov(state)
    d = symplectic_eigenvalues(V)
    if np.max(np.abs(d - 0.5)) > tol:
        raise NotPureError(f"state is mixed: symplectic eigenvalues {np.round(d, 8).tolist()} differ from 1/2")
    n = V.shape[0] // 2
    ev = np.sort(np.linalg.eigvalsh(2.0 * V))[::-1]
    return np.maximum(ev[:n], 1.0)


@dataclass
class RegionMembership:
    inside: bool
    margin: float
    slacks: tuple


def _horn_slacks(v, y, w, eta):
    vp, vm = v
    yp, ym = y
    wp, wm = w
    return (
        (1 - eta) * vp + eta * yp - wp,
        (1 - eta) * vp + eta * ym - wm,
        (1 - eta) * vm + eta * yp - wm,
    )


def p0_achievable_region(v, y, v_prime, tol=CONVERT_TOL):
    """Whether v' is reachable from v with a single classical ancilla y and one beam splitter.

    The reflectivity is fixed by the trace, eta = (tr V' - tr V) / (tr Y - tr V), and the
    eigenvalue inequalities for a sum of two symmetric 2x2 matrices are then checked directly.
    Writing them with eta eliminated gives three linear inequalities in (v'_+, v'_-) whose
    direction flips with the sign of tr Y - tr V.

    Args:
        v, y, v_prime: eigenvalue pairs (plus, minus).

    Returns:
        RegionMembership; slacks are the three eigenvalue inequalities at the implied eta and
        margin is their minimum together with the distance of eta from [0, 1].
    """
    v = tuple(sorted(map(float, v), reverse=True))
    y = tuple(sorted(map(float, y), reverse=True))
    w = tuple(sorted(map(float, v_prime), reverse=True))
    if y[1] < 0.5 - CLASSICAL_TOL:
        raise NonclassicalAncillaError("free ancillas must be classical (y_minus >= 1/2)")
    gap = sum(y) - sum(v)
    if abs(gap) > tol:
        eta = (sum(w) - sum(v)) / gap
        slacks = _horn_slacks(v, y, w, eta)
        margin = min(*slacks, eta, 1.0 - eta)
    else:
        # equal traces leave eta free: take the best eta among endpoints and crossings
        off = -abs(sum(w) - sum(v))
        lines = [(s0, s1 - s0) for s0, s1 in zip(_horn_slacks(v, y, w, 0.0), _horn_slacks(v, y, w, 1.0))]
        cands = [0.0, 1.0]
        for i in range(3):
            for j in range(i + 1, 3):
                da = lines[i][1] - lines[j][1]
                if abs(da) > 1e-15:
                    e = (lines[j][0] - lines[i][0]) / da
                    if 0.0 <= e <= 1.0:
                        cands.append(e)
        eta = max(cands, key=lambda e: min(_horn_slacks(v, y, w, e)))
        slacks = _horn_slacks(v, y, w, eta)
        margin = min(*slacks, off)
    return RegionMembership(inside=bool(margin >= -tol), margin=float(margin), slacks=tuple(map(float, slacks)))


def beam_splitter_blocks(V_S, V_A, eta):
    """Blocks (A, B, C) of R (V_S + V_A) R^T for a reflectivity-eta splitter."""
    V_S, V_A = np.asarray(V_S, float), np.asarray(V_A, float)
    A = (1 - eta) * V_S + eta * V_A
    B = eta * V_S + (1 - eta) * V_A
    C = np.sqrt(eta * (1 - eta)) * (V_S - V_A)
    return A, B, C


def pure_measurement_cov(z, theta=0.0):
    """Covariance of a pure squeezed projector; z -> infinity gives homodyne of x rotated by theta."""
    c, s = np.cos(theta), np.sin(theta)
    return 0.5 * np.array(
        [[c * c / z + z * s * s, (1 / z - z) * c * s], [(1 / z - z) * c * s, s * s / z + z * c * c]]
    )


def condition_on_gaussian_measurement(A, B, C, Z, mean_a=None, mean_b=None, outcome=None):
    """Conditional covariance A - C (B + Z)^{-1} C^T after projecting onto a pure Gaussian state.

    If mean_a, mean_b and outcome are all given, returns (cov, mean) with the
    standard Gaussian update mean_a + C (B + Z)^{-1} (outcome - mean_b).
    """
    A, B, C, Z = (np.asarray(m, dtype=float) for m in (A, B, C, Z))
    if Z.shape == (2, 2) and abs(np.linalg.det(Z) - 0.25) > 1e-6 * max(1.0, np.abs(Z).max() ** 2):
        raise UnphysicalStateError("measurement covariance must be pure (det Z = 1/4)")
    M = B + Z
    if np.linalg.cond(M) > 1e15:
        raise np.linalg.LinAlgError("B + Z is singular")
    K = np.linalg.solve(M, C.T).T
    out = A - K @ C.T
    out = 0.5 * (out + out.T)
    if mean_a is None or mean_b is None or outcome is None:
        return out
    mean = np.asarray(mean_a, float) + K @ (np.asarray(outcome, float) - np.asarray(mean_b, float))
    return out, mean


def condition_state(state, measured_modes, Z, outcome=None):
    """Project a subset of modes of a Gaussian state onto a pure Gaussian state with covariance Z.

    Args:
        state: GaussianState.
        measured_modes: list of mode indices.
        Z: covariance of the projector on those modes.
        outcome: measured first moments; defaults to the prior mean (most likely outcome).
    """
    n = state.n_modes
    meas = sorted(measured_modes)
    keep = [k for k in range(n) if k not in meas]
    qi = lambda modes: np.ravel([[2 * k, 2 * k + 1] for k in modes]).astype(int)
    ik, im = qi(keep), qi(meas)
    V = state.cov
    A, B, C = V[np.ix_(ik, ik)], V[np.ix_(im, im)], V[np.ix_(ik, im)]
    mb = state.mean[im]
    cov, mean = condition_on_gaussian_measurement(
        A, B, C, Z, state.mean[ik], mb, mb if outcome is None else outcome
    )
    return GaussianState(mean, cov)


def apply_passive_unitary(state, U):
    R = mode_unitary_to_orthosymplectic(U)
    return GaussianState(R @ state.mean, R @ state.cov @ R.T)


def _rot(R):
    if R is None:
        return np.eye(2)
    R = np.asarray(R, dtype=float)
    return rotation(float(R)) if R.ndim == 0 else R


def apply_beamsplitter_with_ancilla(V, Y, eta, R_S=None, R_A=None):
    """V' = (1-eta) R_S V R_S^T + eta R_A Y R_A^T with a classical ancilla Y.

    R_S and R_A accept 2x2 rotation matrices or angles.
    """
    V = check_physical(V)
    Y = check_physical(Y)
    if V.shape != (2, 2) or Y.shape != (2, 2):
        raise DimensionError("single-mode system and ancilla expected")
    if not is_classical_gaussian(Y):
        raise NonclassicalAncillaError("ancilla covariance must be classical")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("reflectivity must lie in [0, 1]")
    Rs, Ra = _rot(R_S), _rot(R_A)
    out = (1 - eta) * Rs @ V @ Rs.T + eta * Ra @ Y @ Ra.T
    return 0.5 * (out + out.T)


@dataclass
class FeedForwardResult:
    v_plus: float
    v_minus: float
    gamma: float


def homodyne_feedforward(v_plus, v_minus, eta):
    """Vacuum ancilla, splitter eta, homodyne on the noisy quadrature and linear-gain feed-forward.

    Returns:
        FeedForwardResult with the output eigenvalues and the optimal gain.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("reflectivity must lie in [0, 1]")
    if not (v_plus >= v_minus > 0) or v_plus * v_minus < 0.25 - PHYS_TOL:
        raise UnphysicalStateError("need v_plus >= v_minus > 0 and v_plus * v_minus >= 1/4")
    denom = eta * v_plus + (1 - eta) / 2.0
    gamma = np.sqrt(eta * (1 - eta)) * (v_plus - 0.5) / denom
    return FeedForwardResult(
        v_plus=float(0.5 * v_plus / denom),
        v_minus=float((1 - eta) * v_minus + eta / 2.0),
        gamma=float(gamma),
    )


def n3_value(v_plus, v_minus):
    """(1/2 - v_-) / (2 - 1/v_+), which equals N3 / 2 for nonclassical states."""
    return (0.5 - v_minus) / (2.0 - 1.0 / v_plus)
