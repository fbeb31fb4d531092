"""Maximum-entropy (Boltzmann form) entropy for prescribed averaged tensors.

Two solvers:

* the one-dimensional rod-like case, where the density on the unit sphere is
  proportional to exp(b z^2) and only x = <z^2> is prescribed;
* a general SO(3) moment matcher for targets of order 1 and 2, with density
  proportional to exp(sum_j B_j . (p o U_j)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cov_oracle import rotate_batch, so3_rule
from .tensor_core import SymTensor, from_coords, to_coords, traceless_basis

ROD_NODES = 64
NEWTON_TOL = 1e-14


@lru_cache(maxsize=None)
def _half_rule(n: int = ROD_NODES):
    # the integrand is even in z, so (1/2) * int_{-1}^{1} == int_0^1
    z, w = np.polynomial.legendre.leggauss(n)
    return (z + 1) / 2, w / 2


@dataclass(frozen=True)
class BinghamState1D:
    b: float
    x: float
    log_z: float

    @property
    def Z(self) -> float:
        return math.exp(self.log_z)


def _rod_moments(b: float):
    """(<z^2>, <z^4>, ln Z) for the density exp(b z^2) on [-1, 1]."""
    z, w = _half_rule()
    z2 = z * z
    shift = max(b, 0.0)  # largest exponent on [0,1]
    e = w * np.exp(b * z2 - shift)
    s = e.sum()
    m2 = float(e @ z2 / s)
    m4 = float(e @ (z2 * z2) / s)
    return m2, m4, shift + math.log(s)


def _check_x(x: float):
    if not (0.0 < x < 1.0):
        raise ValueError(f"x must lie in (0, 1), got {x}")


def solve_rod_multiplier(x: float) -> BinghamState1D:
    """Find b with <z^2>_b = x by Newton's method kept inside a bisection bracket."""
    _check_x(x)
    lo, hi = -1.0, 1.0
    while _rod_moments(lo)[0] > x:
        lo *= 2
    while _rod_moments(hi)[0] < x:
        hi *= 2
    b = 0.0 if lo < 0.0 < hi else (lo + hi) / 2
    for _ in range(200):
        m2, m4, log_z = _rod_moments(b)
        r = m2 - x
        if abs(r) <= NEWTON_TOL:
            break
        if r > 0:
            hi = b
        else:
            lo = b
        var = m4 - m2 * m2
        step = r / var if var > 0 else math.inf
        nb = b - step
        if not (lo < nb < hi):
            nb = (lo + hi) / 2
        if nb == b:
            break
        b = nb
    m2, _, log_z = _rod_moments(b)
    return BinghamState1D(b, m2, log_z)


def rod_entropy(x: float) -> tuple[float, float]:
    """(f_ent, b) with f_ent = b x - ln Z."""
    st = solve_rod_multiplier(x)
    return st.b * x - st.log_z, st.b


def rod_entropy_second_derivative(x: float) -> float:
    """d^2 f_ent / dx^2 = 1 / (<z^4> - <z^2>^2) at the solved multiplier."""
    st = solve_rod_multiplier(x)
    m2, m4, _ = _rod_moments(st.b)
    return 1.0 / (m4 - m2 * m2)


def calibrate_nu() -> float:
    """The nu making the quasi-entropy's uniaxial curvature at x=1/3 (81 nu / 4) match f_ent."""
    return 4.0 * rod_entropy_second_derivative(1.0 / 3.0) / 81.0


# ---------------------------------------------------------------------------
# SO(3) moment matching


class BinghamError(RuntimeError):
    pass


@dataclass(frozen=True)
class BinghamStateSO3:
    body_tensors: tuple[SymTensor, ...]
    targets: tuple[np.ndarray, ...]      # lab averages, full arrays
    multipliers: tuple[np.ndarray, ...]  # B_j, full arrays
    log_z: float
    f_ent: float
    residual: float
    iterations: int


def _coords(a: np.ndarray) -> np.ndarray:
    return a.copy() if a.ndim == 1 else to_coords(a)


def _full(order: int, c: np.ndarray) -> np.ndarray:
    return c.copy() if order == 1 else from_coords(order, c)


def _features(body: list[np.ndarray], frames: np.ndarray) -> np.ndarray:
    cols = []
    for u in body:
        r = rotate_batch(u, frames)
        if u.ndim == 1:
            cols.append(r)
        else:
            flat = r.reshape(len(frames), -1)
            cols.append(flat @ traceless_basis(u.ndim).reshape(2 * u.ndim + 1, -1).T)
    return np.concatenate(cols, axis=1)


def bingham_solve_so3(
    targets: list[tuple[SymTensor, SymTensor]],
    n_alpha: int = 32,
    n_angle: int = 64,
    tol: float = 1e-10,
    max_iters: int = 200,
) -> BinghamStateSO3:
    """Solve for multipliers B_j so that <p o U_j> equals each target.

    ``targets`` pairs a body tensor U_j (order 1 or 2, traceless) with its
    prescribed lab-frame average.
    """
    if not targets:
        raise ValueError("no targets given")
    body, goal, orders = [], [], []
    for u, v in targets:
        if u.order not in (1, 2) or v.order != u.order:
            raise ValueError("targets must pair tensors of equal order 1 or 2")
        if not (u.is_traceless() and v.is_traceless()):
            raise ValueError("targets must be traceless")
        body.append(np.asarray(u.full))
        goal.append(_coords(np.asarray(v.full)))
        orders.append(u.order)
    target = np.concatenate(goal)

    rule = so3_rule(n_alpha, n_angle)
    feats = _features(body, rule.frames)
    logw = np.log(rule.weights)

    def state(lam):
        ex = feats @ lam + logw
        top = ex.max()
        e = np.exp(ex - top)
        s = e.sum()
        p = e / s
        mean = p @ feats
        return mean, p, top + math.log(s)

    lam = np.zeros(feats.shape[1])
    mean, p, log_z = state(lam)
    res = float(np.linalg.norm(mean - target))
    it = 0
    while res > tol:
        it += 1
        if it > max_iters:
            raise BinghamError(f"no convergence after {max_iters} iterations; residual {res:.3e}")
        cov = (feats * p[:, None]).T @ feats - np.outer(mean, mean)
        step = np.linalg.solve(cov, target - mean)
        t = 1.0
        for _ in range(31):
            cand = lam + t * step
            c_mean, c_p, c_log_z = state(cand)
            c_res = float(np.linalg.norm(c_mean - target))
            if c_res < res:
                break
            t /= 2
        else:
            raise BinghamError(f"moment residual stalled at {res:.3e} (targets likely infeasible)")
        lam, mean, p, log_z, res = cand, c_mean, c_p, c_log_z, c_res
        if np.linalg.norm(lam) > 1e4:
            raise BinghamError(f"multipliers diverged (|B| = {np.linalg.norm(lam):.3e}); targets likely infeasible")

    mults, i = [], 0
    for k in orders:
        n = 3 if k == 1 else 2 * k + 1
        mults.append(_full(k, lam[i : i + n]))
        i += n
    return BinghamStateSO3(
        tuple(u for u, _ in targets),
        tuple(np.asarray(v.full) for _, v in targets),
        tuple(mults),
        log_z,
        float(lam @ target - log_z),
        res,
        it,
    )
