import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cvnoncl import gaussian as G
from cvnoncl.acceptance import homodyne_by_conditioning, reachability_margin
from cvnoncl.errors import (
    DimensionError,
    NonclassicalAncillaError,
    NotPureError,
    UnphysicalStateError,
)
from cvnoncl.symplectic import rotation


def test_squeezed_cov_eigenvalues():
    V = G.squeezed_cov(4.0)
    assert_allclose(V, np.diag([2.0, 0.125]))
    assert_allclose(G.eig_pair(G.squeezed_cov(4.0, 0.7)), (2.0, 0.125))


def test_squeezed_thermal_cov_has_symplectic_eigenvalue_d():
    from cvnoncl.symplectic import symplectic_eigenvalues

    assert_allclose(symplectic_eigenvalues(G.squeezed_thermal_cov(3.0, 1.2, 0.4)), [1.2])


@pytest.mark.parametrize(
    "V, exc",
    [
        (np.diag([0.2, 0.2]), UnphysicalStateError),
        (np.diag([1.0, -1.0]), UnphysicalStateError),
        (np.array([[1.0, 0.3], [0.0, 1.0]]), ValueError),
    ],
)
def test_check_physical_rejects(V, exc):
    with pytest.raises(exc):
        G.check_physical(V)


def test_gaussian_state_validates_mean():
    with pytest.raises(DimensionError):
        G.GaussianState(np.zeros(3), G.vacuum_cov())
    assert G.GaussianState(np.zeros(2), G.squeezed_cov(2.0)).is_pure()
    assert not G.GaussianState(np.zeros(2), G.thermal_cov(1.0)).is_pure()


@pytest.mark.parametrize("s, theta", [(1.0, 0.0), (4.0, 0.0), (2.5, 1.1)])
def test_qfi_equals_covariance_for_pure_states(s, theta):
    V = G.squeezed_cov(s, theta)
    assert_allclose(G.gaussian_qfi(V), V, atol=1e-12)


def test_qfi_of_thermal_state():
    assert_allclose(G.gaussian_qfi(G.thermal_cov(2.0, 2)), np.eye(4) / 8.0)
    with pytest.raises(UnphysicalStateError):
        G.gaussian_qfi(np.zeros((2, 2)))


def test_two_mode_squeezed_is_pure():
    V = G.two_mode_squeezed_cov(0.7)
    assert G.GaussianState(np.zeros(4), V).is_pure()
    assert_allclose(G.gaussian_qfi(V), V, atol=1e-12)


@pytest.mark.parametrize(
    "pair, expected",
    [
        ((1.0, 0.3), (0.4, 0.4, 0.4)),
        ((0.8, 0.35), (0.3, 0.5, 0.4)),
        ((2.0, 0.125), (0.75, 0.25, 0.5)),
        ((1.0, 0.6), (0.0, 0.0, 0.0)),
    ],
)
def test_n_measures(pair, expected):
    m = G.n_measures(np.diag(pair))
    assert_allclose((m.n1, m.n2, m.n3), expected, atol=1e-12)


def test_n3_value_is_half_of_n3():
    m = G.n_measures(np.diag([0.8, 0.35]))
    assert_allclose(G.n3_value(0.8, 0.35), m.n3 / 2)


@pytest.mark.parametrize(
    "regime, feasible, certificate",
    [("gpn", True, None), ("p0", False, "N2")],
)
def test_convertible_worked_example(regime, feasible, certificate):
    v = G.convertible(np.diag([1.0, 0.3]), np.diag([0.8, 0.35]), regime)
    assert v.feasible is feasible
    assert [c[0] for c in v.certificates] == ([] if certificate is None else [certificate])
    assert {c[0] for c in v.checked} == {"N1", "N2" if regime == "p0" else "N3"}


def test_convertible_rejects_multimode():
    with pytest.raises(DimensionError):
        G.convertible(G.vacuum_cov(2), G.vacuum_cov(2))


def test_pure_convertible():
    v = G.pure_convertible([4, 2], [5, 1])
    assert not v.feasible
    assert [c[0] for c in v.certificates] == ["s1"]
    assert G.pure_convertible([4, 2], [3]).feasible
    with pytest.raises(ValueError):
        G.pure_convertible([0.5], [1.0])


def test_squeezing_spectrum():
    V = G.direct_sum(G.squeezed_cov(4.0), G.squeezed_cov(2.0, 0.3))
    assert_allclose(G.squeezing_spectrum(V), [4.0, 2.0])
    with pytest.raises(NotPureError):
        G.squeezing_spectrum(G.thermal_cov(1.0))


def _region_oracle(v, y, w, n_theta=4001):
    """Sweep the relative rotation at the trace-implied eta and bracket the top eigenvalue."""
    eta = (sum(w) - sum(v)) / (sum(y) - sum(v))
    if not -1e-12 <= eta <= 1 + 1e-12:
        return False, np.inf
    tops = [
        np.linalg.eigvalsh((1 - eta) * np.diag(v) + eta * rotation(t) @ np.diag(y) @ rotation(t).T)[-1]
        for t in np.linspace(0.0, np.pi / 2, n_theta)
    ]
    lo, hi = min(tops), max(tops)
    return lo - 1e-9 <= w[0] <= hi + 1e-9, min(abs(w[0] - lo), abs(w[0] - hi))


def _physical_pair(rng):
    vm = 0.1 + 0.35 * rng.random()
    return (0.25 / vm * (1.0 + 2.0 * rng.random()), vm)


@pytest.mark.parametrize("seed", range(8))
def test_region_contains_every_splitter_output(seed):
    rng = np.random.default_rng(seed)
    v = _physical_pair(rng)
    y = tuple(sorted((0.5 + 3 * rng.random(), 0.5 + rng.random()), reverse=True))
    eta, theta = rng.random(), rng.uniform(0, np.pi)
    out = G.apply_beamsplitter_with_ancilla(np.diag(v), np.diag(y), eta, theta, 0.0)
    assert G.p0_achievable_region(v, y, G.eig_pair(out)).inside


@pytest.mark.parametrize("seed", range(8))
def test_region_agrees_with_rotation_sweep(seed):
    rng = np.random.default_rng(100 + seed)
    v = _physical_pair(rng)
    y = tuple(sorted((0.5 + 3 * rng.random(), 0.5 + rng.random()), reverse=True))
    checked = 0
    while checked < 20:
        w = tuple(sorted(rng.uniform(0.1, 4.0, size=2), reverse=True))
        ok, dist = _region_oracle(v, y, w)
        if np.isfinite(dist) and dist < 1e-4:
            continue
        assert G.p0_achievable_region(v, y, w).inside == ok, (v, y, w)
        checked += 1


def test_region_with_equal_traces():
    v, y = (1.5, 0.2), (1.2, 0.5)
    assert G.p0_achievable_region(v, y, (1.35, 0.35)).inside
    assert not G.p0_achievable_region(v, y, (1.4, 0.4)).inside


def test_region_rejects_nonclassical_ancilla():
    with pytest.raises(NonclassicalAncillaError):
        G.p0_achievable_region((1.0, 0.3), (2.0, 0.2), (1.0, 0.4))


def test_splitter_with_ancilla_matches_blocks():
    V, Y = G.squeezed_cov(3.0), G.thermal_cov(1.0)
    A, _, _ = G.beam_splitter_blocks(V, Y, 0.3)
    assert_allclose(G.apply_beamsplitter_with_ancilla(V, Y, 0.3), A)
    with pytest.raises(NonclassicalAncillaError):
        G.apply_beamsplitter_with_ancilla(V, G.squeezed_cov(2.0), 0.3)


def test_rotated_ancilla_is_accepted_as_matrix():
    V, Y = G.squeezed_cov(3.0), np.diag([2.0, 0.5])
    a = G.apply_beamsplitter_with_ancilla(V, Y, 0.4, R_A=0.5)
    b = G.apply_beamsplitter_with_ancilla(V, Y, 0.4, R_A=rotation(0.5))
    assert_allclose(a, b)


def test_conditioning_on_homodyne_limit():
    V = np.diag([2.0, 0.125])
    A, B, C = G.beam_splitter_blocks(V, G.vacuum_cov(), 0.5)
    out = G.condition_on_gaussian_measurement(A, B, C, G.pure_measurement_cov(1e8))
    assert_allclose(G.eig_pair(out), (0.8, 0.3125), atol=1e-7)


def test_conditioning_updates_the_mean():
    V = G.two_mode_squeezed_cov(0.5)
    A, B, C = V[:2, :2], V[2:, 2:], V[:2, 2:]
    cov, mean = G.condition_on_gaussian_measurement(A, B, C, G.vacuum_cov(), np.zeros(2), np.zeros(2), [1.0, 0.0])
    K = C @ np.linalg.inv(B + G.vacuum_cov())
    assert_allclose(mean, K @ [1.0, 0.0])
    assert_allclose(cov, A - K @ C.T)


def test_conditioning_rejects_mixed_measurement():
    V = G.two_mode_squeezed_cov(0.5)
    with pytest.raises(UnphysicalStateError):
        G.condition_on_gaussian_measurement(V[:2, :2], V[2:, 2:], V[:2, 2:], np.eye(2))


def test_condition_state_removes_measured_mode():
    st_ = G.GaussianState(np.zeros(4), G.two_mode_squeezed_cov(0.4))
    out = G.condition_state(st_, [1], G.vacuum_cov())
    assert out.n_modes == 1
    assert out.is_pure()


def test_homodyne_feedforward_example():
    res = G.homodyne_feedforward(2.0, 0.125, 0.5)
    assert_allclose((res.v_plus, res.v_minus, res.gamma), (0.8, 0.3125, 0.6))
    with pytest.raises(UnphysicalStateError):
        G.homodyne_feedforward(1.0, 0.1, 0.5)
    with pytest.raises(ValueError):
        G.homodyne_feedforward(2.0, 0.125, 1.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.02, 0.49), st.floats(1.0, 5.0), st.floats(0.0, 0.95))
def test_homodyne_feedforward_preserves_n3(v_minus, stretch, eta):
    v_plus = 0.25 / v_minus * stretch
    res = G.homodyne_feedforward(v_plus, v_minus, eta)
    before = G.n_measures(np.diag([v_plus, v_minus])).n3
    after = G.n_measures(np.diag([res.v_plus, res.v_minus])).n3
    assert abs(after - before) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.49), st.floats(1.0, 5.0), st.floats(0.01, 0.99))
def test_homodyne_feedforward_matches_schur_update(v_minus, stretch, eta):
    v_plus = 0.25 / v_minus * stretch
    res = G.homodyne_feedforward(v_plus, v_minus, eta)
    ref = homodyne_by_conditioning(v_plus, v_minus, eta)
    assert_allclose(sorted([res.v_plus, res.v_minus], reverse=True), ref, atol=1e-6)


@pytest.mark.parametrize(
    "source, target",
    [((1.0, 0.3), (0.8, 0.35)), ((2.0, 0.125), (1.0, 0.3)), ((1.0, 0.3), (3.0, 0.5)), ((0.6, 0.6), (0.7, 0.55))],
)
def test_p0_verdict_agrees_with_reachability_oracle(source, target):
    verdict = G.convertible(np.diag(source), np.diag(target), "p0")
    margin = reachability_margin(source, target)
    assert abs(margin) > 1e-6
    assert verdict.feasible == (margin > 0)


def test_random_covariance_is_physical(rng):
    for n in (1, 2, 3):
        G.check_physical(G.random_covariance(n, rng))


def test_is_classical_gaussian():
    assert G.is_classical_gaussian(G.thermal_cov(0.7))
    assert not G.is_classical_gaussian(G.squeezed_cov(1.5))
