import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qentropy.tensor_core import (
    EulerAngles,
    Rotation,
    SymTensor,
    SymTracelessTensor,
    TensorError,
    aux_tensor,
    coeffs_to_full,
    format_tensor,
    from_coords,
    identity_tensor,
    multidegrees,
    parse_tensor,
    parse_tensor_file,
    psi3,
    psi4,
    rotate_tensor,
    rotation_from_euler,
    sym_full,
    sym_part,
    tensor_dot,
    to_coords,
    traceless_basis,
    traceless_part,
)

E = np.eye(3)


def outer(*vs):
    out = np.asarray(vs[0], dtype=float)
    for v in vs[1:]:
        out = np.multiply.outer(out, v)
    return out


def random_sym(rng, order):
    return SymTensor(order, rng.normal(size=len(multidegrees(order))))


def brute_dot(a, b):
    return float(np.sum(a * b))


# --- storage -------------------------------------------------------------


@pytest.mark.parametrize("order", range(5))
def test_minimal_storage_size(order):
    assert len(multidegrees(order)) == math.comb(order + 2, 2)
    u = SymTensor.zeros(order)
    assert u.coeffs.size == math.comb(order + 2, 2)


@pytest.mark.parametrize("order", range(2, 5))
def test_full_expansion_is_symmetric(order):
    u = random_sym(np.random.default_rng(order), order)
    a = u.full
    for p in itertools.permutations(range(order)):
        assert np.allclose(a, a.transpose(p), atol=0)


def test_monomial_convention_m1m2():
    # coefficient 1 on m1 m2 means components (e1 e2 + e2 e1) / 2
    u = SymTensor.from_monomials(2, {(1, 1, 0): 1.0})
    assert np.allclose(u.full, (outer(E[0], E[1]) + outer(E[1], E[0])) / 2)


def test_bad_coefficient_count_rejected():
    with pytest.raises(TensorError):
        SymTensor(2, np.zeros(5))
    with pytest.raises(TensorError):
        SymTensor(5, np.zeros(21))


def test_non_traceless_rejected():
    with pytest.raises(TensorError):
        SymTracelessTensor(2, SymTensor.from_monomials(2, {(2, 0, 0): 1}).coeffs)


# --- rotations -----------------------------------------------------------


def test_euler_identity():
    assert np.allclose(rotation_from_euler(EulerAngles(0, 0, 0)).m, E)


def test_euler_j_theta():
    th = 0.7
    j = np.array([[1, 0, 0], [0, math.cos(th), -math.sin(th)], [0, math.sin(th), math.cos(th)]])
    assert np.allclose(rotation_from_euler(EulerAngles(0, 0, th)).m, j, atol=1e-15)


def test_euler_first_column():
    m = rotation_from_euler(EulerAngles(math.pi / 2, 0, 0)).m
    assert np.allclose(m[:, 0], [0, 1, 0], atol=1e-15)


def test_rotation_validation():
    with pytest.raises(TensorError):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(TensorError):
        Rotation(2 * E)


def test_rotate_identity_and_isotropic():
    rng = np.random.default_rng(0)
    u = random_sym(rng, 3)
    assert rotate_tensor(u, Rotation.identity()).allclose(u, 1e-14)
    p = Rotation.random(rng)
    assert rotate_tensor(identity_tensor(), p).allclose(identity_tensor(), 1e-14)


def test_dot_rotation_invariance_1000_draws():
    rng = np.random.default_rng(1)
    for n in range(1000):
        k = n % 5
        u, v = random_sym(rng, k), random_sym(rng, k)
        p = Rotation.random(rng)
        assert abs(tensor_dot(rotate_tensor(u, p), rotate_tensor(v, p)) - tensor_dot(u, v)) <= 1e-10 * max(
            1.0, abs(tensor_dot(u, v))
        )


@pytest.mark.parametrize("order", range(2, 5))
def test_rotation_commutes_with_traceless_part(order):
    rng = np.random.default_rng(order)
    for _ in range(20):
        u = random_sym(rng, order)
        p = Rotation.random(rng)
        a = rotate_tensor(traceless_part(u), p)
        b = traceless_part(rotate_tensor(u, p))
        assert a.allclose(b, 1e-10)


# --- symmetrization and traces --------------------------------------------


def test_sym_part_cases():
    rng = np.random.default_rng(2)
    u = random_sym(rng, 3)
    assert sym_part(u.full).allclose(u, 1e-14)
    assert sym_part(outer(E[0], E[1])).allclose(SymTensor.from_monomials(2, {(1, 1, 0): 1.0}), 1e-15)
    a = rng.normal(size=(3, 3))
    assert sym_part(a - a.T).allclose(SymTensor.zeros(2), 1e-15)


def test_traceless_examples():
    m1sq = SymTensor.from_full(outer(E[0], E[0]))
    assert np.allclose(traceless_part(m1sq).full, outer(E[0], E[0]) - E / 3)

    m1_4 = outer(E[0], E[0], E[0], E[0])
    want = m1_4 - 6 / 7 * sym_full(outer(outer(E[0], E[0]), E)) + 3 / 35 * sym_full(outer(E, E))
    assert np.allclose(traceless_part(SymTensor.from_full(m1_4)).full, want, atol=1e-15)

    i2 = SymTensor.from_full(sym_full(outer(E, E)))
    assert traceless_part(i2).allclose(SymTensor.zeros(4), 1e-15)


@pytest.mark.parametrize("order", range(2, 5))
def test_traceless_part_is_projection(order):
    rng = np.random.default_rng(10 + order)
    for _ in range(20):
        t = traceless_part(random_sym(rng, order))
        assert traceless_part(t).allclose(t, 1e-12)
        assert t.is_traceless()


def test_dot_examples():
    assert tensor_dot(identity_tensor(), identity_tensor()) == pytest.approx(3.0)
    q = traceless_part(SymTensor.from_full(outer(E[0], E[0])))
    assert tensor_dot(q, q) == pytest.approx(2 / 3)
    with pytest.raises(TensorError):
        tensor_dot(q, SymTensor.zeros(3))


@pytest.mark.parametrize("order", range(5))
def test_dot_matches_full_contraction(order):
    rng = np.random.default_rng(20 + order)
    for _ in range(100):
        u, v = random_sym(rng, order), random_sym(rng, order)
        assert tensor_dot(u, v) == pytest.approx(brute_dot(u.full, v.full), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("order", range(1, 5))
def test_basis_orthonormal_and_coords_round_trip(order):
    b = traceless_basis(order)
    gram = np.tensordot(b, b, axes=(list(range(1, order + 1)), list(range(1, order + 1))))
    assert np.allclose(gram, np.eye(2 * order + 1), atol=1e-13)
    x = np.random.default_rng(order).normal(size=2 * order + 1)
    assert np.allclose(to_coords(from_coords(order, x)), x, atol=1e-13)


# --- reshaping maps -------------------------------------------------------


def test_psi4_zero_and_symmetry():
    assert np.array_equal(psi4(SymTensor.zeros(4)), np.zeros((5, 5)))
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = psi4(random_sym(rng, 4))
        assert np.max(np.abs(m - m.T)) <= 1e-12


def test_psi4_row_two_entry():
    v = random_sym(np.random.default_rng(4), 4).full
    want = (v[1, 1, 1, 1] - v[1, 1, 2, 2] - v[2, 2, 1, 1] + v[2, 2, 2, 2]) / 4
    assert psi4(v)[1, 1] == pytest.approx(want, abs=1e-14)


def test_psi_on_tetrahedral_family():
    s, t = 0.3, 0.2
    tt = SymTensor.from_monomials(3, {(1, 1, 1): s})
    assert tt.full[0, 1, 2] == pytest.approx(s / 6)
    m3 = psi3(tt)
    nz = np.argwhere(np.abs(m3) > 0)
    assert all(abs(m3[i, j]) == pytest.approx(s / 6) for i, j in nz)

    o = SymTensor.from_monomials(4, {(2, 2, 0): t, (0, 2, 2): t, (2, 0, 2): t})
    o = traceless_part(o)
    assert o.full[0, 0, 0, 0] == pytest.approx(-t / 5)
    assert o.full[0, 0, 1, 1] == pytest.approx(t / 10)
    m4 = psi4(o)
    assert m4[0, 0] == pytest.approx(-t / 5)
    assert np.allclose(m4[2:, 2:], np.eye(3) * t / 10)


def test_aux_tensors():
    assert np.array_equal(aux_tensor("A1", np.zeros((3, 3, 3))), np.zeros((3,) * 4))
    assert np.array_equal(aux_tensor("A2", np.zeros((3, 3))), np.zeros((3,) * 4))
    rng = np.random.default_rng(5)
    q = traceless_part(random_sym(rng, 2))
    b1 = aux_tensor("B1", q)
    assert np.allclose(np.einsum("iji->j", b1), 0, atol=1e-14)
    t = traceless_part(random_sym(rng, 3))
    a1 = aux_tensor("A1", t)
    assert np.allclose(a1, a1.transpose(1, 0, 3, 2), atol=1e-14)
    # exchanging the index pairs flips the Levi-Civita sign
    assert np.allclose(a1, -a1.transpose(2, 3, 0, 1), atol=1e-14)
    with pytest.raises(TensorError):
        aux_tensor("A1", q)
    with pytest.raises(TensorError):
        aux_tensor("C9", q)


def test_a2_against_index_formula():
    q = traceless_part(random_sym(np.random.default_rng(6), 2)).full
    a2 = aux_tensor("A2", q)
    d = E
    for i, j, k, l in itertools.product(range(3), repeat=4):
        want = d[k, l] * q[i, j] + d[i, j] * q[k, l] - 0.75 * (
            d[i, k] * q[j, l] + d[j, l] * q[i, k] + d[i, l] * q[j, k] + d[j, k] * q[i, l]
        )
        assert a2[i, j, k, l] == pytest.approx(want, abs=1e-15)


# --- text format ----------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 4).flatmap(
    lambda k: st.tuples(st.just(k), arrays(np.float64, math.comb(k + 2, 2),
                                           elements=st.floats(-1e6, 1e6, allow_subnormal=False)))))
def test_text_round_trip(case):
    k, c = case
    u = SymTensor(k, c)
    assert parse_tensor(format_tensor(u)) == u


def test_parse_file_and_errors():
    got = parse_tensor_file(["# comment", "", "Q: 2; (2,0,0)=1; (0,2,0)=-1"])
    assert np.allclose(got["Q"].full, np.diag([1.0, -1.0, 0.0]))
    for bad in ["", "x; (1,0,0)=1", "1; (1,1,0)=2", "2; 1=3"]:
        with pytest.raises(TensorError):
            parse_tensor(bad)
    with pytest.raises(TensorError):
        parse_tensor_file(["Q 2"])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-10, 10)), st.integers(0, 2**32 - 1))
def test_coefficients_to_full_round_trip(c, seed):
    full = coeffs_to_full(2, c)
    assert np.allclose(SymTensor.from_full(full).coeffs, c, atol=1e-12)
    p = Rotation.random(np.random.default_rng(seed))
    u = SymTensor(2, c)
    assert rotate_tensor(u, p).norm == pytest.approx(u.norm, rel=1e-12, abs=1e-12)
