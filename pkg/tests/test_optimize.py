import numpy as np
import pytest

from qentropy._descent import ROUNDING, descend
from qentropy.models import D2Model, RodModel, RodProfileModel, RTriple, TOReducedModel, rod_uniaxial_profile
from qentropy.optimize import (
    MinimizeOptions,
    NoConvergenceError,
    WindowError,
    classify,
    construct_d2_counterexample,
    minimize_multistart,
    rod_stationary_census,
    sample_start,
    verify_axisymmetry,
    verify_shared_eigenframe,
)
from qentropy.tensor_core import Rotation, to_coords


def kinds(points):
    return [p.kind for p in points]


def d2_coords(triple: RTriple) -> np.ndarray:
    q2, m = triple.to_d2()
    return np.concatenate([to_coords(q2), to_coords(m)])


def test_options_validation():
    with pytest.raises(ValueError):
        MinimizeOptions(n_starts=0)


def test_classify_spectrum():
    assert classify((1.0, 2.0)) == "minimizer"
    assert classify((-1.0, -2.0)) == "maximizer"
    assert classify((-1.0, 2.0)) == "saddle"
    assert classify((0.0, 2.0)) == "degenerate"


def test_rod_below_first_critical_single_point():
    pts = minimize_multistart(RodModel.from_chi(12.0), MinimizeOptions(n_starts=10))
    assert len(pts) == 1
    assert pts[0].kind == "minimizer"
    assert np.max(np.abs(pts[0].params)) <= 1e-7


def test_rod_profile_bistable_region():
    model = RodProfileModel(14.0)
    starts = [np.array([v]) for v in (0.29, 1 / 3, 0.57)]
    pts = minimize_multistart(model, MinimizeOptions(n_starts=1), starts=starts)
    by_x = sorted(pts, key=lambda p: p.params[0])
    xs = [p.params[0] for p in by_x]
    assert kinds(by_x) == ["minimizer", "maximizer", "minimizer"]
    assert xs[1] == pytest.approx(1 / 3, abs=1e-12)
    census = [x for x, _ in rod_stationary_census(14.0).roots]
    assert xs == pytest.approx(census, abs=1e-7)


def test_reduced_to_without_coupling():
    pts = minimize_multistart(TOReducedModel(0.0, 0.0), MinimizeOptions(n_starts=6))
    assert np.allclose(pts[0].params, 0, atol=1e-7)
    assert pts[0].kind == "minimizer"


def test_multistart_is_deterministic():
    m = D2Model(6.0, 5.0, 5.0)
    a = minimize_multistart(m, MinimizeOptions(n_starts=5, seed=3))
    b = minimize_multistart(m, MinimizeOptions(n_starts=5, seed=3))
    assert [p.energy for p in a] == [p.energy for p in b]
    assert all(np.array_equal(p.params, q.params) for p, q in zip(a, b))


def test_reported_grad_norm_is_true_gradient():
    m = RodModel.from_chi(14.0)
    for p in minimize_multistart(m, MinimizeOptions(n_starts=6)):
        assert np.linalg.norm(m.gradient(p.params)) == pytest.approx(p.grad_norm, abs=1e-12)
        assert p.grad_norm <= 1e-9


def test_sorted_by_energy_and_rotation_orbit():
    pts = minimize_multistart(RodModel.from_chi(14.0), MinimizeOptions(n_starts=10))
    es = [p.energy for p in pts]
    assert es == sorted(es)
    nem = [p for p in pts if np.max(np.abs(p.params)) > 1e-3]
    # a uniaxial Q has a two-dimensional rotation orbit
    assert all(p.orbit_dim == 2 for p in nem)


def test_no_convergence_raised():
    with pytest.raises(NoConvergenceError):
        minimize_multistart(RodModel.from_chi(14.0), MinimizeOptions(n_starts=1, max_iters=1),
                            starts=[np.full(5, 0.1)])


def test_descent_history_is_monotone():
    m = D2Model(8.0, 2.0, 1.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        res = descend(m.value, m.gradient, sample_start(m, rng), keep_history=True)
        h = res.values
        assert all(b <= a + ROUNDING * max(1.0, abs(a)) for a, b in zip(h, h[1:]))


def test_sample_start_in_domain():
    rng = np.random.default_rng(1)
    for m in (RodModel.from_chi(14.0), D2Model(1, 2, 3), TOReducedModel(30, 10), RodProfileModel(13)):
        for _ in range(20):
            assert m.value(sample_start(m, rng)) is not None


# --- census ----------------------------------------------------------------


@pytest.mark.parametrize(
    "chi,expected",
    [
        (12.0, ["minimizer"]),
        (13.065904, ["minimizer", "saddle"]),
        (13.3, ["minimizer", "maximizer", "minimizer"]),
        (13.5, ["saddle", "minimizer"]),
        (14.0, ["minimizer", "maximizer", "minimizer"]),
    ],
)
def test_rod_census(chi, expected):
    assert [k for _, k in rod_stationary_census(chi).roots] == expected


def test_census_saddle_location():
    x = rod_stationary_census(13.065904).roots[1][0]
    assert 6 * x**3 + 3 * x**2 == pytest.approx(1.0, abs=1e-9)
    assert x == pytest.approx(0.4246, abs=1e-4)


def test_census_roots_are_stationary():
    for chi in (13.3, 14.0, 20.0):
        for x, _ in rod_stationary_census(chi).roots:
            assert abs(rod_uniaxial_profile(x, chi)[1]) <= 1e-9


def test_census_rejects_nonpositive_chi():
    with pytest.raises(ValueError):
        rod_stationary_census(0.0)


# --- structural checks ---------------------------------------------------


def test_axisymmetry_examples():
    assert verify_axisymmetry(np.zeros(5))
    assert verify_axisymmetry(np.diag([0.2, -0.1, -0.1]))
    assert not verify_axisymmetry(np.diag([0.2, 0.05, -0.25]))
    rng = np.random.default_rng(2)
    p = Rotation.random(rng).m
    assert not verify_axisymmetry(p @ np.diag([0.3, -0.1, -0.2]) @ p.T)


def test_rod_minimizers_axisymmetric():
    for p in minimize_multistart(RodModel.from_chi(14.0), MinimizeOptions(n_starts=10)):
        assert verify_axisymmetry(p)


def test_shared_eigenframe_diagonal():
    r = RTriple(np.diag([0.5, 0.3, 0.2]), np.diag([0.25, 0.4, 0.35]), np.diag([0.25, 0.3, 0.45]))
    ok, norms = verify_shared_eigenframe(r)
    assert ok and max(norms) == 0.0


def test_d2_small_coefficient_stationary_points_commute():
    m = D2Model(4.0, 3.0, -2.0)
    for p in minimize_multistart(m, MinimizeOptions(n_starts=8)):
        assert verify_shared_eigenframe(m.triple(p.params))[0]


# --- counterexample ------------------------------------------------------


def test_counterexample_is_stationary_and_noncommuting():
    ce = construct_d2_counterexample(1 / 3, 0.2)
    # independent check: gradient of the D2 energy in its own coordinates
    g = D2Model(ce.c1, ce.c2, ce.c3).gradient(d2_coords(ce.triple))
    assert np.linalg.norm(g) <= 1e-10 * max(ce.c1, ce.c2, ce.c3)
    assert ce.residual <= 1e-10
    assert ce.commutator >= 0.01
    assert not verify_shared_eigenframe(ce.triple)[0]
    assert min(ce.c1, ce.c2, ce.c3) > 4


def test_counterexample_closed_form_at_one_third():
    # at a = 1/3 the stationarity conditions force c2 = c1 and r^2 = 1/12 - 3 (a^2 - c^2) / 4
    a, c = 1 / 3, 0.2
    ce = construct_d2_counterexample(a, c)
    assert ce.r_squared == pytest.approx(1 / 12 - 0.75 * (a * a - c * c), abs=1e-15)
    assert ce.r_squared == pytest.approx(0.03, abs=1e-14)
    assert ce.c1 == pytest.approx(1 / (a * a - c * c), rel=1e-14)
    assert ce.c2 == pytest.approx(ce.c1, rel=1e-12)


def test_counterexample_window_samples():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.uniform(0.26, 0.49)
        c = rng.uniform(abs(1 - 3 * a), a)
        ce = construct_d2_counterexample(a, c)
        g = D2Model(ce.c1, ce.c2, ce.c3).gradient(d2_coords(ce.triple))
        assert np.linalg.norm(g) <= 1e-9 * max(ce.c1, ce.c2, ce.c3)
        assert min(ce.c1, ce.c2, ce.c3) > 4


def test_counterexample_edge_is_diagonal():
    ce = construct_d2_counterexample(1 / 3, 0.0)
    assert ce.r == 0.0
    assert ce.c1 == pytest.approx(9.0)
    assert verify_shared_eigenframe(ce.triple)[0]


@pytest.mark.parametrize("a,c", [(0.2, 0.5), (0.25, 0.1), (0.5, 0.4), (0.45, 0.2), (0.3, 0.35)])
def test_counterexample_window_violations(a, c):
    with pytest.raises(WindowError, match="window violated"):
        construct_d2_counterexample(a, c)
