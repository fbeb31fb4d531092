import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qentropy import quasi_entropy as qe
from qentropy.acceptance import random_in_domain
from qentropy.tensor_core import Rotation, SymTensor, rotate_full, to_coords

ALL_GROUPS = qe.Q2_GROUPS + qe.Q4_GROUPS


def dinf(q):
    return qe.quasi_entropy_vec("Dinf", to_coords(np.asarray(q, dtype=float)))


def fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_isotropic_dinf_value():
    v = qe.quasi_entropy(qe.OrderParameterSet.zeros("Dinf"))
    assert v.in_domain
    assert v.value == pytest.approx(9 * math.log(3), abs=1e-12)


def test_group_name_lookup_and_shapes():
    assert qe.canonical_group("d2") == "D2"
    with pytest.raises(ValueError):
        qe.canonical_group("D5")
    assert [qe.group_dim(g) for g in ALL_GROUPS] == [5, 8, 18, 10, 9, 16, 23, 30]
    with pytest.raises(ValueError):
        qe.quasi_entropy_vec("Dinf", np.zeros(4))


def test_member_validation():
    with pytest.raises(ValueError):
        qe.OrderParameterSet("D2", {"Q2": SymTensor.zeros(2)})
    with pytest.raises(ValueError):
        qe.OrderParameterSet("Dinf", {"Q": SymTensor.zeros(3)})


def test_dinf_barrier_leading_term():
    # smallest eigenvalue of Q + I/3 is eps; the -ln eps term dominates
    prev = None
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        q = np.diag([eps - 1 / 3, 1 / 6 - eps / 2, 1 / 6 - eps / 2])
        v = dinf(q)
        assert v.in_domain
        if prev is not None:
            assert v.value - prev == pytest.approx(math.log(100), rel=1e-3)
        prev = v.value
    assert not dinf(np.diag([-0.34, 0.17, 0.17])).in_domain


def test_out_of_domain_is_flag_not_error():
    v = dinf(np.diag([2.0, -1.0, -1.0]))
    assert not v.in_domain and v.value == math.inf


def test_nan_input_rejected():
    x = np.zeros(5)
    x[2] = np.nan
    with pytest.raises(ValueError):
        qe.quasi_entropy_vec("Dinf", x)


def test_dinf_rotation_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = random_in_domain("Dinf", rng)
        q = qe.unpack("Dinf", x)["Q"]
        p = Rotation.random(rng).m
        assert dinf(rotate_full(q, p)).value == pytest.approx(dinf(q).value, abs=1e-10)


@pytest.mark.parametrize("group", ["O", "T"])
def test_zero_point_matches_block_evaluation(group):
    # hand evaluation of the blocks at zero: each block is constant there
    blocks = qe.explicit_blocks(group, qe.unpack(group, np.zeros(qe.group_dim(group))))
    want = sum(m * -math.log(np.linalg.det(b)) for m, b in blocks)
    got = qe.quasi_entropy(qe.OrderParameterSet.zeros(group))
    assert got.in_domain and math.isfinite(got.value)
    assert got.value == pytest.approx(want, rel=1e-12)


def test_tetrahedral_zero_equals_reduced_origin_up_to_constant():
    # the T-group value at zero differs from q4(0, 0) by the same constant as elsewhere
    z = qe.quasi_entropy(qe.OrderParameterSet.zeros("T")).value - qe.q4_reduced_st(0, 0).value
    other = qe.quasi_entropy(qe.st_embedding(0.1, 0.2)).value - qe.q4_reduced_st(0.1, 0.2).value
    assert z == pytest.approx(other, abs=1e-9)


@pytest.mark.parametrize("group", ["Dinf", "D2"])
def test_gradient_zero_at_isotropic_point(group):
    g = qe.quasi_entropy_gradient_vec(group, np.zeros(qe.group_dim(group)))
    assert np.max(np.abs(g)) <= 1e-12


@pytest.mark.parametrize("group", ALL_GROUPS)
def test_gradient_matches_finite_difference(group):
    rng = np.random.default_rng(7)
    for _ in range(5):
        x = random_in_domain(group, rng, 0.7)
        ga = qe.quasi_entropy_gradient_vec(group, x)
        gf = fd_grad(lambda z: qe.quasi_entropy_vec(group, z).value, x, 1e-5)
        assert np.linalg.norm(ga - gf) <= 1e-6 * max(1.0, np.linalg.norm(ga))


@pytest.mark.parametrize("group", qe.Q2_GROUPS)
def test_analytic_and_richardson_gradients_agree(group):
    rng = np.random.default_rng(8)
    x = random_in_domain(group, rng, 0.7)
    ga = qe.quasi_entropy_gradient_vec(group, x, analytic=True)
    gr = qe.quasi_entropy_gradient_vec(group, x, analytic=False)
    assert np.allclose(ga, gr, rtol=1e-6, atol=1e-6)


def test_gradient_outside_domain_raises():
    with pytest.raises(ValueError):
        qe.quasi_entropy_gradient_vec("Dinf", to_coords(np.diag([2.0, -1.0, -1.0])))


def test_gradient_keyed_by_member():
    p = qe.OrderParameterSet.zeros("C2")
    g = qe.quasi_entropy_gradient(p)
    assert {k: v.shape for k, v in g.items()} == {"Q1": (3,), "Q2": (5,), "M12": (5,), "M22": (5,)}


# --- marginals -----------------------------------------------------------


def test_marginal_c2_zero_q1_gives_zero_m22():
    rng = np.random.default_rng(3)
    for _ in range(3):
        x = random_in_domain("D2", rng, 0.8)
        res = qe.marginal_minimize("C2_over_M22", np.concatenate([np.zeros(3), x]),
                                   start=0.02 * rng.normal(size=5))
        assert np.max(np.abs(res.free)) <= 1e-6


def test_marginal_cinf_at_zero_is_isotropic_value():
    v = qe.quasi_entropy_marginal("Cinf_over_Q2", {"Q1": SymTensor.zeros(1)})
    assert v.value == pytest.approx(qe.quasi_entropy(qe.OrderParameterSet.zeros("Cinf")).value, abs=1e-9)


def test_marginal_below_every_completion():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 50:
        x = random_in_domain("C2", rng, 0.9)
        fixed = np.concatenate([x[:3], x[3:8], x[8:13]])
        m = qe.marginal_minimize("C2_over_M22", fixed).value
        assert m.in_domain
        assert m.value <= qe.quasi_entropy_vec("C2", x).value + 1e-10
        checked += 1


def test_marginal_infeasible_fixed_part():
    # |Q1| > 1 cannot be a mean of unit vectors
    v = qe.quasi_entropy_marginal("Cinf_over_Q2", {"Q1": SymTensor(1, [1.5, 0.0, 0.0])})
    assert not v.in_domain


def test_marginal_member_check():
    with pytest.raises(ValueError):
        qe.quasi_entropy_marginal("C2_over_M22", {"Q1": SymTensor.zeros(1)})


# --- reduced (s, t) form --------------------------------------------------


def test_reduced_origin_value():
    want = -2 * math.log(1 / 225) - 9 * math.log(1 / 15) - 3 * math.log(1 / 20) - 9 * math.log(1 / 60)
    v = qe.q4_reduced_st(0.0, 0.0)
    assert v.value == pytest.approx(want, abs=1e-12)
    assert v.value == pytest.approx(81.0409, abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.9, 0.99))
def test_reduced_even_in_s(s, t):
    a, b = qe.q4_reduced_st(s, t), qe.q4_reduced_st(-s, t)
    assert a.in_domain == b.in_domain
    if a.in_domain:
        assert a.value == b.value


def test_reduced_barrier_at_t_one():
    vals = [qe.q4_reduced_st(0.0, 1 - 10.0**-k).value for k in (2, 4, 6, 8)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] - vals[-2] == pytest.approx(12 * math.log(100), rel=1e-3)
    assert not qe.q4_reduced_st(0.0, 1.0).in_domain


def test_reduced_gradient_matches_fd():
    for s, t in [(0.1, 0.2), (-0.2, 0.5), (0.05, -0.3)]:
        g = qe.q4_reduced_st_gradient(s, t)
        gf = fd_grad(lambda z: qe.q4_reduced_st(z[0], z[1]).value, np.array([s, t]))
        assert np.allclose(g, gf, rtol=1e-6, atol=1e-6)


def test_embedding_matches_reduced_up_to_constant():
    pts = [(0.0, 0.0), (0.1, 0.2), (-0.2, 0.5), (0.15, -0.3), (0.05, 0.8)]
    diffs = [qe.quasi_entropy(qe.st_embedding(s, t)).value - qe.q4_reduced_st(s, t).value for s, t in pts]
    assert max(diffs) - min(diffs) <= 1e-8


def test_embedding_norms():
    p = qe.st_embedding(0.3, 0.4)
    assert p["T"].norm ** 2 == pytest.approx(0.09 / 6)
    assert p["O"].norm ** 2 == pytest.approx(0.3 * 0.16)
