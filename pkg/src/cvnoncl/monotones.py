"""Variance and QFI monotone spectra, plus the faithfulness and probability bounds."""
from dataclasses import dataclass, asdict

import numpy as np

from .errors import UnphysicalStateError
from .symplectic import (
    _check_even,
    check_symmetric,
    complex_halve,
    positive_part,
    symplectic_form,
)

PSD_TOL = 1e-9


def _desc(x):
    return np.sort(np.asarray(x, dtype=float))[::-1]


def partial_sums(spectrum):
    """Top-k sums for k = 1..len(spectrum)."""
    return np.cumsum(_desc(spectrum))


def symplectic_partial_sums(spectrum):
    """W_k from the w spectrum: the trace of V - I/2 over a k-mode symplectic subspace.

    Each w_i is a doubly degenerate eigenvalue of W, so the 2k-dimensional
    trace counts it twice. This makes W_n = V_2n.
    """
    return 2.0 * partial_sums(spectrum)


def v_spectrum(V):
    """Eigenvalues of V - I/2 in descending order (no clamping)."""
    V = check_symmetric(_check_even(V, "V"), name="V")
    return _desc(np.linalg.eigvalsh(V - 0.5 * np.eye(V.shape[0])))


def w_matrix(V):
    """W = (V + Omega V Omega^T - I)/2."""
    V = check_symmetric(_check_even(V, "V"), name="V")
    Om = symplectic_form(V.shape[0] // 2)
    W = 0.5 * (V + Om @ V @ Om.T - np.eye(V.shape[0]))
    return 0.5 * (W + W.T)


def w_spectrum(V):
    """Doubly degenerate eigenvalues of W, one copy each, descending."""
    return _desc(np.linalg.eigvalsh(complex_halve(w_matrix(V))))


def _check_qfi(F):
    F = check_symmetric(_check_even(F, "F"), name="F")
    lo = np.linalg.eigvalsh(F)[0]
    if lo < -PSD_TOL * max(1.0, np.max(np.abs(F))):
        raise UnphysicalStateError(f"QFI matrix is not positive semidefinite (min eigenvalue {lo:.3g})")
    return F


def f_spectrum(F):
    """Eigenvalues of [F - I/2]^+, descending."""
    F = _check_qfi(F)
    ev = np.linalg.eigvalsh(F - 0.5 * np.eye(F.shape[0]))
    return _desc(np.clip(ev, 0.0, None))


def g_matrix(F):
    """G = [F + Omega F Omega^T - I]^+ / 2."""
    F = _check_qfi(F)
    Om = symplectic_form(F.shape[0] // 2)
    return 0.5 * positive_part(F + Om @ F @ Om.T - np.eye(F.shape[0]))


def g_spectrum(F):
    """Doubly degenerate eigenvalues of G, one copy each, descending."""
    ev = np.linalg.eigvalsh(complex_halve(g_matrix(F)))
    return _desc(np.clip(ev, 0.0, None))


@dataclass
class MonotoneReport:
    """Spectra v, w, f, g and their partial sums (index k-1 holds the k-th sum).

    V, F and G are top-k sums of v, f and g; W is twice the top-k sum of w.
    """

    v: np.ndarray
    w: np.ndarray
    f: np.ndarray
    g: np.ndarray

    @property
    def V(self):
        return partial_sums(self.v)

    @property
    def W(self):
        return symplectic_partial_sums(self.w)

    @property
    def F(self):
        return partial_sums(self.f)

    @property
    def G(self):
        return partial_sums(self.g)

    @property
    def n_modes(self):
        return len(self.w)

    def partial(self, family, k):
        """Top-k sum of a family in {"V", "W", "F", "G"}; k past the end saturates."""
        sums = getattr(self, family)
        return float(sums[min(k, len(sums)) - 1])

    def to_dict(self):
        out = {name: np.asarray(val).tolist() for name, val in asdict(self).items()}
        out.update(
            {
                "V_partial": self.V.tolist(),
                "W_partial": self.W.tolist(),
                "F_partial": self.F.tolist(),
                "G_partial": self.G.tolist(),
            }
        )
        return out


def monotone_report(V, F):
    """Build a MonotoneReport from a covariance matrix and a QFI matrix."""
    return MonotoneReport(v=v_spectrum(V), w=w_spectrum(V), f=f_spectrum(F), g=g_spectrum(F))


def check_report_invariants(report, tol=1e-10):
    """Return a list of violated structural relations (empty if all hold)."""
    problems = []
    n = report.n_modes
    V, W = report.V, report.W
    for k in range(1, n + 1):
        if W[k - 1] > V[2 * k - 1] + tol:
            problems.append(f"W_{k} > V_{2 * k}")
    if abs(W[-1] - V[-1]) > tol:
        problems.append("W_n != V_2n")
    if np.any(report.f < 0) or np.any(report.g < 0):
        problems.append("negative f or g")
    return problems


@dataclass
class OverlapBound:
    lhs: float
    rhs: float
    holds: bool


def overlap_bound_check(state, cutoff_tol=1e-9):
    """Squared trace distance to the mean-matched coherent state against n * V_1.

    Args:
        state: pure Fock state (cvnoncl.fock.FockPure).

    Returns:
        OverlapBound with lhs = 1 - |<phi|psi>|^2, rhs = n_modes * V_1.
    """
    from . import fock

    mean, V = fock.quadrature_moments(state)
    n = state.n_modes
    alpha = (mean[0::2] + 1j * mean[1::2]) / np.sqrt(2.0)
    phi = fock.coherent_state(alpha, state.cutoff, budget=np.inf)
    ov = np.vdot(phi.amplitudes.ravel(), state.amplitudes.ravel())
    norm2 = np.vdot(phi.amplitudes.ravel(), phi.amplitudes.ravel()).real
    lhs = max(0.0, 1.0 - abs(ov) ** 2 / norm2)
    rhs = n * float(v_spectrum(V)[0])
    return OverlapBound(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + cutoff_tol))


def vidal_probability_bound(source_spectrum, target_spectrum):
    """Largest success probability allowed by the partial-sum monotones.

    p <= min_k S_k(source) / S_k(target), skipping k with S_k(target) <= 0.
    Source sums past the end of the source spectrum saturate at the full sum.

    Returns:
        float in [0, 1].
    """
    src = partial_sums(source_spectrum)
    tgt = partial_sums(target_spectrum)
    p = 1.0
    for k, t in enumerate(tgt):
        if t <= 0:
            continue
        s = src[min(k, len(src) - 1)] if len(src) else 0.0
        p = min(p, s / t)
    return float(np.clip(p, 0.0, 1.0))
