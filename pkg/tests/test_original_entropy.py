import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import dawsn, erf

from qentropy.original_entropy import (
    BinghamError,
    bingham_solve_so3,
    calibrate_nu,
    rod_entropy,
    rod_entropy_second_derivative,
    solve_rod_multiplier,
)
from qentropy.models import rod_uniaxial_profile
from qentropy.tensor_core import Rotation, SymTensor, SymTracelessTensor, rotate_tensor, traceless_part


def closed_form_z(b):
    """Z(b) = int_0^1 exp(b z^2) dz via Dawson / erf."""
    if b > 0:
        r = math.sqrt(b)
        return math.exp(b) * dawsn(r) / r
    if b < 0:
        r = math.sqrt(-b)
        return math.sqrt(math.pi) * erf(r) / (2 * r)
    return 1.0


def closed_form_x(b):
    # int_0^1 z^2 e^{b z^2} dz = (e^b - Z) / (2b)
    z = closed_form_z(b)
    return (math.exp(b) / z - 1) / (2 * b)


def uniaxial(x):
    return SymTracelessTensor(2, SymTensor.from_full(np.diag([x - 1 / 3, (1 / 3 - x) / 2, (1 / 3 - x) / 2])).coeffs)


def test_isotropic_multiplier():
    b_state = solve_rod_multiplier(1 / 3)
    assert b_state.b == pytest.approx(0.0, abs=1e-12)
    f, b = rod_entropy(1 / 3)
    assert f == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("x", [0.05, 0.2, 0.45, 0.6, 0.9])
def test_rod_solver_against_closed_form(x):
    st_ = solve_rod_multiplier(x)
    assert closed_form_x(st_.b) == pytest.approx(x, abs=1e-10)
    f, b = rod_entropy(x)
    assert f == pytest.approx(b * x - math.log(closed_form_z(b)), abs=1e-10)


def test_rod_x06_positive_multiplier():
    st_ = solve_rod_multiplier(0.6)
    assert st_.b > 0
    assert st_.x == pytest.approx(0.6, abs=1e-10)


def test_rod_domain_errors():
    for x in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            rod_entropy(x)


def test_second_derivative_values():
    assert rod_entropy_second_derivative(1 / 3) == pytest.approx(11.25, abs=1e-8)
    assert rod_entropy_second_derivative(0.999) > 1e3


@pytest.mark.parametrize("x", [0.25, 0.45])
def test_second_derivative_matches_fd(x):
    h = 1e-4
    fd = (rod_entropy(x + h)[0] - 2 * rod_entropy(x)[0] + rod_entropy(x - h)[0]) / h**2
    assert rod_entropy_second_derivative(x) == pytest.approx(fd, rel=1e-6)


def test_calibration():
    nu = calibrate_nu()
    assert nu == pytest.approx(5 / 9, abs=1e-9)
    assert 81 / 4 * nu == pytest.approx(45 / 4, abs=1e-8)
    # nu * profile'' at x = 1/3 and chi = 0 reproduces 81 nu / 4 with nu = 1
    assert rod_uniaxial_profile(1 / 3, 0.0)[2] == pytest.approx(81 / 4, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98))
def test_rod_entropy_midpoint_convex(x, y):
    mid = rod_entropy((x + y) / 2)[0]
    assert mid <= (rod_entropy(x)[0] + rod_entropy(y)[0]) / 2 + 1e-12


def test_so3_zero_targets():
    s = bingham_solve_so3([(uniaxial(1.0), SymTracelessTensor(2, np.zeros(6)))])
    assert s.f_ent == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(s.multipliers[0], 0, atol=1e-12)


def test_so3_reproduces_rod():
    # body axis m1 with <m1 m1> = diag(x, ...) is the rod problem
    body = traceless_part(SymTensor.from_full(np.diag([1.0, 0.0, 0.0])))
    s = bingham_solve_so3([(body, uniaxial(0.5))])
    assert s.f_ent == pytest.approx(rod_entropy(0.5)[0], abs=1e-6)
    assert s.residual <= 1e-8


def test_so3_rotation_invariant():
    rng = np.random.default_rng(0)
    body1 = traceless_part(SymTensor.from_full(np.diag([1.0, 0.0, 0.0])))
    body2 = traceless_part(SymTensor.from_full(np.diag([0.0, 1.0, -1.0]) / 2))
    t1 = SymTracelessTensor(2, SymTensor.from_full(np.diag([0.2, -0.1, -0.1])).coeffs)
    t2 = SymTracelessTensor(2, SymTensor.from_full(np.diag([-0.05, 0.1, -0.05])).coeffs)
    base = bingham_solve_so3([(body1, t1), (body2, t2)])
    p = Rotation.random(rng)
    rot = bingham_solve_so3([(body1, rotate_tensor(t1, p)), (body2, rotate_tensor(t2, p))])
    assert rot.f_ent == pytest.approx(base.f_ent, abs=1e-7)


def test_so3_quadrature_refinement():
    body = traceless_part(SymTensor.from_full(np.diag([1.0, 0.0, 0.0])))
    t = SymTracelessTensor(2, SymTensor.from_full(np.diag([0.25, -0.05, -0.2])).coeffs)
    a = bingham_solve_so3([(body, t)])
    b = bingham_solve_so3([(body, t)], n_alpha=64, n_angle=128)
    assert abs(a.f_ent - b.f_ent) <= 1e-9


def test_so3_infeasible_targets():
    body = traceless_part(SymTensor.from_full(np.diag([1.0, 0.0, 0.0])))
    # <m1 m1> would need a negative eigenvalue
    with pytest.raises(BinghamError):
        bingham_solve_so3([(body, SymTracelessTensor(2, SymTensor.from_full(np.diag([-0.5, 0.25, 0.25])).coeffs))])


def test_so3_input_validation():
    with pytest.raises(ValueError):
        bingham_solve_so3([])
    with pytest.raises(ValueError):
        bingham_solve_so3([(SymTensor.zeros(3), SymTensor.zeros(3))])
