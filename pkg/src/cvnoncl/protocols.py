"""Free-operation instruments on Fock states and the checks built on them.

An instrument is a tree of ProtocolSteps. Each step attaches classical
ancillas (appended after the system modes), applies a passive unitary,
optionally measures some modes, optionally traces some out, then looks up a
feed-forward entry keyed by the outcome: a displacement on the surviving
modes and an optional next step.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fock
from .errors import DimensionError, NonclassicalAncillaError
from .monotones import f_spectrum, g_spectrum, partial_sums, symplectic_partial_sums, v_spectrum, w_spectrum
from .symplectic import beam_splitter_unitary, check_unitary, random_unitary

MEASUREMENT_KINDS = ("photon_count", "vacuum", "coherent")
PROB_FLOOR = 1e-15
MONO_TOL = 1e-8
FIT_TOL = 1e-6


@dataclass
class Ancilla:
    """Classical ancilla: a coherent state or a thermal state."""

    kind: str = "coherent"
    alpha: complex = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if self.kind not in ("coherent", "thermal"):
            raise NonclassicalAncillaError(
                f"ancilla kind {self.kind!r} is not classical; free operations use coherent or thermal ancillas"
            )
        if self.kind == "thermal" and self.nbar < 0:
            raise ValueError("thermal ancilla needs nbar >= 0")

    def state(self, cutoff, budget):
        if self.kind == "coherent":
            return fock.coherent_state(self.alpha, cutoff, budget)
        return fock.thermal_state(self.nbar, cutoff, budget)


@dataclass
class Measurement:
    modes: list
    kind: str = "photon_count"
    alpha: complex = 0.0

    def __post_init__(self):
        if self.kind not in MEASUREMENT_KINDS:
            raise ValueError(f"measurement kind must be one of {MEASUREMENT_KINDS}")
        self.modes = sorted(int(m) for m in self.modes)
        if not self.modes:
            raise ValueError("measurement needs at least one mode")


@dataclass
class FeedForward:
    """Displacement offset + gain * (total measured photon number), then an optional next step."""

    displacement: Optional[list] = None
    gain: Optional[list] = None
    next: Optional["ProtocolStep"] = None


@dataclass
class ProtocolStep:
    """One round of a free instrument.

    Args:
        ancilla: classical ancillas appended after the current modes.
        unitary: mode unitary over current + ancilla modes (None means identity).
        measurement: optional measurement on a subset of those modes.
        discard: modes traced out after the measurement (indices before removal).
        feed_forward: outcome key -> FeedForward; key "default" matches anything.
        allow_large_ancilla: skip the check that ancillas do not outnumber output modes.
    """

    ancilla: list = field(default_factory=list)
    unitary: Optional[np.ndarray] = None
    measurement: Optional[Measurement] = None
    discard: list = field(default_factory=list)
    feed_forward: dict = field(default_factory=dict)
    allow_large_ancilla: bool = False

    def __post_init__(self):
        self.ancilla = [a if isinstance(a, Ancilla) else Ancilla("coherent", complex(a)) for a in self.ancilla]
        self.discard = sorted(int(m) for m in self.discard)

    def n_out(self, n_in):
        total = n_in + len(self.ancilla)
        gone = set(self.discard) | set(self.measurement.modes if self.measurement else [])
        return total - len(gone)

    def validate(self, n_in, path="step"):
        total = n_in + len(self.ancilla)
        if self.unitary is not None:
            U = np.asarray(self.unitary)
            if U.shape != (total, total):
                raise DimensionError(f"{path}: unitary is {U.shape[0]}-mode but {total} modes are present")
            check_unitary(U)
        used = list(self.discard) + (self.measurement.modes if self.measurement else [])
        if any(m < 0 or m >= total for m in used) or len(set(used)) != len(used):
            raise DimensionError(f"{path}: measured/discarded modes {used} invalid for {total} modes")
        n_out = self.n_out(n_in)
        if n_out < 0:
            raise DimensionError(f"{path}: no modes left")
        if len(self.ancilla) > max(n_out, 0) and not self.allow_large_ancilla:
            raise DimensionError(
                f"{path}: {len(self.ancilla)} ancillas exceed the {n_out} output modes "
                "(set allow_large_ancilla to explore this)"
            )
        for key, ff in self.feed_forward.items():
            if ff.displacement is not None and len(ff.displacement) != n_out:
                raise DimensionError(f"{path}.feed_forward[{key}]: displacement length must be {n_out}")
            if ff.gain is not None and len(ff.gain) != n_out:
                raise DimensionError(f"{path}.feed_forward[{key}]: gain length must be {n_out}")
            if ff.next is not None:
                ff.next.validate(n_out, f"{path}.feed_forward[{key}].next")
        return n_out

    @property
    def is_p0(self):
        return self.measurement is None and all(ff.next is None or ff.next.is_p0 for ff in self.feed_forward.values())


@dataclass
class BranchOutcome:
    record: tuple
    probability: float
    post_state: object

    @property
    def is_overflow(self):
        return self.record == ("overflow",)


def outcome_key(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _record_sort_key(record):
    return tuple((0, r, "") if isinstance(r, tuple) else (1, (), str(r)) for r in record)


def _measure(state, meas):
    """List of (outcome, probability, post-state) for one measurement."""
    if meas.kind == "photon_count":
        return [(o.outcome, o.probability, o.post_state) for o in fock.measure_photon_number(state, meas.modes)]
    target = "vacuum" if meas.kind == "vacuum" else ("coherent", meas.alpha)
    tag = "vac" if meas.kind == "vacuum" else "coh"
    prob, post = 1.0, state
    for shift, m in enumerate(meas.modes):
        res = fock.project_onto(post, m - shift, target)
        prob *= res.probability
        post = res.post_state
        if res.null:
            break
    out = []
    if prob > PROB_FLOOR:
        out.append((tag, prob, post))
    rest = [k for k in range(state.n_modes) if k not in meas.modes]
    total = state.norm2 if isinstance(state, fock.FockPure) else state.trace
    if rest:
        reduced = fock.partial_trace(state, rest).matrix
        fail = reduced - (prob * post.density().matrix if prob > PROB_FLOOR else 0.0)
        fail_prob = float(np.trace(fail).real)
        if fail_prob > PROB_FLOOR:
            out.append(("not-" + tag, fail_prob, fock.FockDensity(fail / fail_prob, len(rest), state.budget)))
    elif total - prob > PROB_FLOOR:
        out.append(("not-" + tag, total - prob, None))
    return out


def _outcome_total(outcome):
    if isinstance(outcome, tuple):
        return float(sum(outcome))
    return 0.0


def _run(state, step, record, prob, out):
    if step is None:
        out.append(BranchOutcome(record, prob, state))
        return
    n_in = state.n_modes
    step.validate(n_in)
    s = state
    if step.ancilla:
        s = fock.tensor_product(s, *[a.state(s.cutoff, s.budget) for a in step.ancilla])
    if step.unitary is not None:
        s = fock.apply_mode_unitary(s, step.unitary)
    if step.measurement is None:
        results = [(None, 1.0, s)]
        measured = []
    else:
        results = _measure(s, step.measurement)
        measured = step.measurement.modes
    total = s.n_modes
    survivors = [k for k in range(total) if k not in measured]
    for outcome, p, post in results:
        rec = record if outcome is None else record + (outcome,)
        if post is None:
            out.append(BranchOutcome(rec, prob * p, None))
            continue
        if step.discard:
            keep = [i for i, k in enumerate(survivors) if k not in step.discard]
            post = fock.partial_trace(post, keep) if keep else None
            if post is None:
                out.append(BranchOutcome(rec, prob * p, None))
                continue
        ff = step.feed_forward.get(outcome_key(outcome)) if outcome is not None else None
        if ff is None:
            ff = step.feed_forward.get("default")
        nxt = None
        if ff is not None:
            shift = np.zeros(post.n_modes, dtype=complex)
            if ff.displacement is not None:
                shift += np.asarray(ff.displacement, dtype=complex)
            if ff.gain is not None:
                shift += np.asarray(ff.gain, dtype=complex) * _outcome_total(outcome)
            if np.any(shift != 0):
                post = fock.apply_displacement(post, shift)
            nxt = ff.next
        _run(post, nxt, rec, prob * p, out)


def run_instrument(state, protocol):
    """Enumerate every branch of an instrument.

    Returns:
        list of BranchOutcome sorted by record; truncation loss appears as a
        final ("overflow",) branch with post_state None.
    """
    out = []
    if protocol is not None:
        protocol.validate(state.n_modes)
    _run(state, protocol, (), 1.0, out)
    out.sort(key=lambda b: _record_sort_key(b.record))
    residual = 1.0 - sum(b.probability for b in out)
    if residual > PROB_FLOOR:
        out.append(BranchOutcome(("overflow",), residual, None))
    return out


def coarse_grain(branches, key=lambda record: ()):
    """Merge branches whose projected records coincide; merged states are probability-weighted mixtures."""
    groups = {}
    for b in branches:
        if b.is_overflow or b.post_state is None:
            continue
        groups.setdefault(key(b.record), []).append(b)
    merged = []
    for k, items in sorted(groups.items(), key=lambda kv: str(kv[0])):
        p = sum(b.probability for b in items)
        rho = sum(b.probability * b.post_state.density().matrix for b in items) / p
        merged.append(BranchOutcome(k, p, fock.FockDensity(rho, items[0].post_state.n_modes, items[0].post_state.budget)))
    return merged


# built-in instrument shapes


def loss_step(eta):
    """Vacuum ancilla, splitter of reflectivity eta, trace out the ancilla."""
    return ProtocolStep(ancilla=[0.0], unitary=beam_splitter_unitary(eta, 0, 1, 2), discard=[1])


def photon_subtraction_step(eta):
    """Vacuum ancilla, weak splitter, photon counting on the ancilla."""
    return ProtocolStep(
        ancilla=[0.0],
        unitary=beam_splitter_unitary(eta, 0, 1, 2),
        measurement=Measurement([1], "photon_count"),
    )


def cat_growth_step():
    """50/50 splitter on two modes, then project the second onto vacuum."""
    return ProtocolStep(unitary=beam_splitter_unitary(0.5, 0, 1, 2), measurement=Measurement([1], "vacuum"))


@dataclass
class CatGrowthReport:
    p_success: float
    output_state: object
    W1_before: float
    W1_after: float
    fidelity: float
    bound_slack: float
    bound_respected: bool

    @property
    def ratio(self):
        return self.W1_after / self.W1_before


def cat_growth_protocol(alpha, cutoff=None, budget=fock.DEFAULT_BUDGET, roundoff=1e-12):
    """Two even cats through a 50/50 splitter, second output projected onto vacuum.

    The success branch ideally holds the even cat of amplitude sqrt(2) alpha.
    bound_slack is W1(input pair) - p * W1(output); for this protocol it is
    zero analytically, so bound_respected allows `roundoff`.
    """
    if cutoff is None:
        cutoff = fock.coherent_cutoff(np.sqrt(2.0) * abs(alpha), budget / 10) + 5
    cat = fock.cat_state(alpha, 1, cutoff, budget)
    pair = fock.tensor_product(cat, cat)
    branches = run_instrument(pair, cat_growth_step())
    win = next(b for b in branches if b.record == ("vac",))
    _, V_in = fock.quadrature_moments(pair)
    _, V_out = fock.quadrature_moments(win.post_state)
    w_in = float(symplectic_partial_sums(w_spectrum(V_in))[0])
    w_out = float(symplectic_partial_sums(w_spectrum(V_out))[0])
    target = fock.cat_state(np.sqrt(2.0) * alpha, 1, cutoff, budget=np.inf)
    slack = w_in - win.probability * w_out
    return CatGrowthReport(
        p_success=win.probability,
        output_state=win.post_state,
        W1_before=w_in,
        W1_after=w_out,
        fidelity=fock.fidelity(win.post_state, target),
        bound_slack=slack,
        bound_respected=bool(slack >= -roundoff),
    )


# Kraus structure


@dataclass
class KrausFit:
    record: tuple
    M: np.ndarray
    delta: np.ndarray
    max_singular_value: float
    residual: float
    n_samples: int
    applicable: bool = True
    note: str = ""

    def contractive(self, tol=FIT_TOL):
        return self.applicable and self.max_singular_value <= 1.0 + tol


def coherent_parameters(state, v_tol=FIT_TOL):
    """Complex amplitudes of a state that is coherent; None if its covariance differs from I/2."""
    mean, V = fock.quadrature_moments(state)
    if np.max(np.abs(V - 0.5 * np.eye(V.shape[0]))) > v_tol:
        return None
    return (mean[0::2] + 1j * mean[1::2]) / np.sqrt(2.0)


def fit_affine(alphas, betas, record=()):
    """Least-squares fit beta = M alpha + delta over sample pairs."""
    A = np.asarray(alphas, dtype=complex)
    B = np.asarray(betas, dtype=complex)
    X = np.hstack([A, np.ones((A.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(X, B, rcond=None)
    M = coef[:-1].T
    delta = coef[-1]
    resid = float(np.max(np.abs(X @ coef - B))) if len(B) else np.inf
    sig = float(np.linalg.svd(M, compute_uv=False).max()) if M.size else 0.0
    return KrausFit(record, M, delta, sig, resid, len(A))


def fit_kraus_map(state_map, n_in, sample_count=12, alpha_magnitude=1.0, rng=None, record=("oracle",)):
    """Fit a raw map alpha -> output state (e.g. a non-free oracle) with the same machinery."""
    rng = np.random.default_rng(rng)
    alphas, betas = [], []
    for _ in range(sample_count):
        a = _sample_alpha(n_in, alpha_magnitude, rng)
        beta = coherent_parameters(state_map(a))
        if beta is None:
            return KrausFit(record, np.zeros((0, n_in)), np.zeros(0), np.nan, np.nan, 0, False, "output not coherent")
        alphas.append(a)
        betas.append(beta)
    return fit_affine(alphas, betas, record)


def _sample_alpha(n, mag, rng):
    r = mag * np.sqrt(rng.random(n))
    return r * np.exp(2j * np.pi * rng.random(n))


def verify_kraus_contraction(protocol, n_in, sample_count=12, alpha_magnitude=1.0, cutoff=None, rng=None,
                             min_probability=1e-8):
    """Fit (M, delta) for every fine-grained branch from coherent-state inputs.

    Returns:
        list of KrausFit, one per branch record seen with enough probability.
    """
    rng = np.random.default_rng(rng)
    if cutoff is None:
        cutoff = fock.coherent_cutoff(alpha_magnitude * np.sqrt(max(n_in, 1)) + 1.0, 1e-12) + 4
    data = {}
    inapplicable = {}
    for _ in range(sample_count):
        a = _sample_alpha(n_in, alpha_magnitude, rng)
        inp = fock.coherent_state(a, cutoff, budget=1e-9)
        for b in run_instrument(inp, protocol):
            if b.is_overflow or b.post_state is None or b.probability < min_probability:
                continue
            beta = coherent_parameters(b.post_state)
            if beta is None:
                inapplicable[b.record] = "branch output not coherent"
                continue
            data.setdefault(b.record, []).append((a, beta))
    fits = []
    for rec in sorted(set(data) | set(inapplicable), key=str):
        if rec in inapplicable:
            fits.append(KrausFit(rec, np.zeros((0, n_in)), np.zeros(0), np.nan, np.nan, 0, False, inapplicable[rec]))
            continue
        pairs = data[rec]
        if len(pairs) < n_in + 1:
            continue
        fits.append(fit_affine([p[0] for p in pairs], [p[1] for p in pairs], rec))
    return fits


def amplifier_oracle(g, cutoff):
    """Raw map |alpha> -> |g alpha>; a negative control that no ProtocolStep can express."""

    def state_map(alpha):
        return fock.coherent_state(g * np.asarray(alpha), cutoff, budget=1e-6)

    return state_map


# monotonicity


@dataclass
class MonotonicityVerdict:
    family: str
    branch_slacks: list
    ensemble_slack: float
    p0_slack: Optional[float]
    skipped: list
    tol: float = MONO_TOL
    ensemble_partial_slack: float = np.inf  # measured only, not part of holds

    @property
    def min_branch_slack(self):
        return min((s for _, _, s in self.branch_slacks), default=np.inf)

    @property
    def holds(self):
        ok = self.min_branch_slack >= -self.tol and self.ensemble_slack >= -self.tol
        return ok and (self.p0_slack is None or self.p0_slack >= -self.tol)


def _spectrum(state, family):
    if family in ("V", "W"):
        _, V = fock.quadrature_moments(state)
        return v_spectrum(V) if family == "V" else w_spectrum(V)
    F = fock.qfi_matrix(state)
    return f_spectrum(F) if family == "F" else g_spectrum(F)


def _count_ancillas(step):
    if step is None:
        return 0
    nested = max((_count_ancillas(ff.next) for ff in step.feed_forward.values()), default=0)
    return len(step.ancilla) + nested


def _sums(spec, family):
    return symplectic_partial_sums(spec) if family == "W" else partial_sums(spec)


def _merged_sums(spec, extra_zeros, family):
    return _sums(np.concatenate([spec, np.zeros(extra_zeros)]), family)


def check_monotonicity(state, protocol, family="V", tol=MONO_TOL, branches=None):
    """Check the monotone inequalities for one instrument run.

    Per branch: p_m S_k(out_m) <= S_k(in) for every k. Ensemble: sum_m p_m of
    the full sum stays below the input's; the same average for every k is
    recorded in ensemble_partial_slack but not asserted. The input spectrum is merged with
    the zero spectra of the classical ancillas, which is what the output is
    compared against. For P0 instruments and families F, G the spectra are
    also compared entry by entry.

    Args:
        branches: output of run_instrument(state, protocol), to reuse a run
            across families.

    Returns:
        MonotonicityVerdict with slacks (negative means violated).
    """
    family = family.upper()
    if family not in ("V", "W", "F", "G"):
        raise ValueError("family must be one of V, W, F, G")
    if family in ("V", "W") and not isinstance(state, fock.FockPure):
        raise ValueError("V and W are pure-state monotones here; use F or G for mixed inputs")
    per_mode = 2 if family in ("V", "F") else 1
    spec_in = _spectrum(state, family)
    n_anc = _count_ancillas(protocol)
    sums_in = _merged_sums(spec_in, per_mode * n_anc, family)
    if branches is None:
        branches = run_instrument(state, protocol)
    slacks, skipped = [], []
    ensemble = 0.0
    ensemble_k = np.zeros(len(sums_in))
    p0_slack = None
    for b in branches:
        if b.is_overflow or b.post_state is None:
            continue
        if family in ("V", "W") and not isinstance(b.post_state, fock.FockPure):
            skipped.append((b.record, "mixed branch"))
            continue
        spec_out = _spectrum(b.post_state, family)
        sums_out = _sums(spec_out, family)
        k_max = len(sums_out)
        ref = np.array([sums_in[min(k, len(sums_in)) - 1] for k in range(1, k_max + 1)])
        slack = float(np.min(ref - b.probability * sums_out))
        slacks.append((b.record, b.probability, slack))
        ensemble += b.probability * sums_out[-1]
        ensemble_k += b.probability * np.array([sums_out[min(k, k_max) - 1] for k in range(1, len(sums_in) + 1)])
        if protocol is not None and protocol.is_p0 and family in ("F", "G"):
            m = max(len(spec_in), len(spec_out))
            a = np.pad(np.sort(spec_in)[::-1], (0, m - len(spec_in)))
            c = np.pad(np.sort(spec_out)[::-1], (0, m - len(spec_out)))
            slack_p0 = float(np.min(a - c))
            p0_slack = slack_p0 if p0_slack is None else min(p0_slack, slack_p0)
    ens_slack = float(sums_in[-1] - ensemble) if not skipped else np.inf
    ens_k = float(np.min(sums_in - ensemble_k)) if not skipped and slacks else np.inf
    return MonotonicityVerdict(family, slacks, ens_slack, p0_slack, skipped, tol, ens_k)


def random_protocol(n_sys, rng=None, max_modes=3, kind="P1", max_ancilla_amp=0.25, max_thermal_nbar=0.0):
    """Random single-round instrument on n_sys system modes.

    kind "P1" measures a random nonempty proper subset by photon counting;
    kind "P0" traces out a random subset instead (possibly none).
    """
    rng = np.random.default_rng(rng)
    n_anc = int(rng.integers(0, max_modes - n_sys + 1))
    total = n_sys + n_anc
    if kind == "P1" and total == 1:
        n_anc, total = 1, n_sys + 1
    ancillas = []
    for _ in range(n_anc):
        if max_thermal_nbar > 0 and rng.random() < 0.5:
            ancillas.append(Ancilla("thermal", nbar=float(max_thermal_nbar * rng.random())))
        else:
            ancillas.append(Ancilla("coherent", complex(_sample_alpha(1, max_ancilla_amp, rng)[0])))
    U = random_unitary(total, rng)
    if kind == "P1":
        n_meas = int(rng.integers(1, total))
        modes = sorted(rng.choice(total, size=n_meas, replace=False).tolist())
        step = ProtocolStep(ancillas, U, Measurement(modes, "photon_count"))
    else:
        n_drop = int(rng.integers(0, total))
        drop = sorted(rng.choice(total, size=n_drop, replace=False).tolist())
        step = ProtocolStep(ancillas, U, discard=drop)
    if len(step.ancilla) > step.n_out(n_sys):
        step.allow_large_ancilla = True
    return step
