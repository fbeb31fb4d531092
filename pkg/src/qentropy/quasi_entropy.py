"""Closed-form log-determinant quasi-entropies for eight molecular point groups.

Each group has a fixed list of averaged symmetric traceless tensors (its
order parameters).  The quasi-entropy is a sum of ``-ln det`` over a few
small matrices built from those tensors; a point is in the domain when all of
them are positive definite.

Order parameters are exposed two ways: an ``OrderParameterSet`` of tensors,
and a flat coordinate vector in the orthonormal traceless basis of each
member (3 coordinates for a vector, 2k+1 for order k >= 2).  Optimizers work
on vectors, everything user-facing works on ``OrderParameterSet``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _descent
from .cov_oracle import logdet_pd
from .tensor_core import (
    LEVI_CIVITA,
    Rotation,
    SymTensor,
    SymTracelessTensor,
    a1_full,
    a2_full,
    b1_full,
    b2_full,
    from_coords,
    full_to_coeffs,
    psi3_full,
    psi4_full,
    rotate_full,
    to_coords,
)

# member name -> tensor order, per group
GROUP_MEMBERS: dict[str, tuple[tuple[str, int], ...]] = {
    "Dinf": (("Q", 2),),
    "Cinf": (("Q1", 1), ("Q2", 2)),
    "C2": (("Q1", 1), ("Q2", 2), ("M12", 2), ("M22", 2)),
    "D2": (("Q2", 2), ("M12", 2)),
    "O": (("O", 4),),
    "T": (("T", 3), ("O", 4)),
    "D4": (("Q2", 2), ("Q4", 4), ("M41", 4)),
    "D3": (("Q2", 2), ("M13", 3), ("Q4", 4), ("N4", 4)),
}
Q2_GROUPS = ("Dinf", "Cinf", "C2", "D2")
Q4_GROUPS = ("O", "T", "D4", "D3")

D_MAT = np.diag([1 / 15, 1 / 20, 1 / 20, 1 / 20, 1 / 20])
I3 = np.eye(3)


def canonical_group(name: str) -> str:
    for g in GROUP_MEMBERS:
        if g.lower() == name.strip().lower():
            return g
    raise ValueError(f"unknown group {name!r}; expected one of {', '.join(GROUP_MEMBERS)}")


def n_coords_of(order: int) -> int:
    return 3 if order == 1 else 2 * order + 1


def group_dim(group: str) -> int:
    return sum(n_coords_of(k) for _, k in GROUP_MEMBERS[group])


def _member_coords(arr: np.ndarray) -> np.ndarray:
    return np.array(arr, dtype=float) if arr.ndim == 1 else to_coords(arr)


def _member_full(order: int, coords: np.ndarray) -> np.ndarray:
    return np.array(coords, dtype=float) if order == 1 else from_coords(order, coords)


@dataclass(frozen=True)
class OrderParameterSet:
    """Group tag plus its averaged tensors (all symmetric traceless)."""

    group: str
    members: Mapping[str, SymTracelessTensor] = field(repr=False)

    def __post_init__(self):
        g = canonical_group(self.group)
        object.__setattr__(self, "group", g)
        want = dict(GROUP_MEMBERS[g])
        if set(self.members) != set(want):
            raise ValueError(f"group {g} needs members {sorted(want)}, got {sorted(self.members)}")
        mem = {}
        for name, order in GROUP_MEMBERS[g]:
            u = self.members[name]
            if not isinstance(u, SymTensor):
                raise TypeError(f"member {name} must be a SymTensor")
            if u.order != order:
                raise ValueError(f"member {name} must have order {order}, got {u.order}")
            mem[name] = u if isinstance(u, SymTracelessTensor) else SymTracelessTensor(u.order, u.coeffs)
        object.__setattr__(self, "members", mem)

    def __getitem__(self, name: str) -> SymTracelessTensor:
        return self.members[name]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v.full) for k, v in self.members.items()}

    def to_vector(self) -> np.ndarray:
        return np.concatenate([_member_coords(self.members[n].full) for n, _ in GROUP_MEMBERS[self.group]])

    @classmethod
    def from_vector(cls, group: str, x) -> "OrderParameterSet":
        group = canonical_group(group)
        return cls(group, {k: _tensor_from_full(a) for k, a in unpack(group, x).items()})

    @classmethod
    def zeros(cls, group: str) -> "OrderParameterSet":
        return cls.from_vector(group, np.zeros(group_dim(canonical_group(group))))

    def rotated(self, p: Rotation) -> "OrderParameterSet":
        return OrderParameterSet(
            self.group,
            {k: _tensor_from_full(rotate_full(v.full, p.m)) for k, v in self.members.items()},
        )


def _tensor_from_full(a: np.ndarray) -> SymTracelessTensor:
    return SymTracelessTensor(a.ndim, full_to_coeffs(a))


def unpack(group: str, x) -> dict[str, np.ndarray]:
    """Split a coordinate vector into full arrays per member."""
    x = np.asarray(x, dtype=float)
    if x.shape != (group_dim(group),):
        raise ValueError(f"group {group} expects {group_dim(group)} coordinates, got shape {x.shape}")
    out, i = {}, 0
    for name, order in GROUP_MEMBERS[group]:
        n = n_coords_of(order)
        out[name] = _member_full(order, x[i : i + n])
        i += n
    return out


def pack(group: str, arrays: Mapping[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([_member_coords(arrays[n]) for n, _ in GROUP_MEMBERS[group]])


# ---------------------------------------------------------------------------
# explicit block lists: (multiplicity, matrix)


def _skew(v: np.ndarray) -> np.ndarray:
    # S_ij = sum_s eps_ijs v_s
    return np.einsum("ijs,s->ij", LEVI_CIVITA, v)


def _blocks_dinf(a):
    q = a["Q"]
    return [(1, q + I3 / 3), (2, I3 / 3 - q / 2)]


def _blocks_cinf(a):
    q1, q2 = a["Q1"], a["Q2"]
    half = I3 / 3 - q2 / 2
    s = _skew(q1) / 2
    return [(1, I3 / 3 + q2 - np.outer(q1, q1)), (1, np.block([[half, s], [-s, half]]))]


def _blocks_c2(a):
    q1, q2, m1, m2 = a["Q1"], a["Q2"], a["M12"], a["M22"]
    half = I3 / 3 - q2 / 2
    s = _skew(q1) / 2
    return [
        (1, I3 / 3 + q2 - np.outer(q1, q1)),
        (1, np.block([[half + m1, m2 + s], [m2 - s, half - m1]])),
    ]


def _blocks_d2(a):
    q2, m1 = a["Q2"], a["M12"]
    half = I3 / 3 - q2 / 2
    return [(1, I3 / 3 + q2), (1, half + m1), (1, half - m1)]


def _blocks_o(a):
    po = psi4_full(a["O"])
    return [(2, D_MAT - po / 2), (3, D_MAT + po / 3)]


def _blocks_t(a):
    po = psi4_full(a["O"])
    pa = psi4_full(a1_full(a["T"])) / 2
    pt = psi3_full(a["T"])
    return [
        (1, np.block([[4 / 3 * D_MAT - 2 / 3 * po, pa], [pa.T, D_MAT - po / 2]])),
        (3, np.block([[I3 / 3, pt], [pt.T, D_MAT + po / 3]])),
    ]


def _d4_common(a):
    q2, q4 = a["Q2"], a["Q4"]
    a2 = a2_full(q2)
    first = [
        (1, q2 + I3 / 3),
        (1, psi4_full(q4 - 4 / 21 * a2 - np.multiply.outer(q2, q2)) + 4 / 3 * D_MAT),
    ]
    return first, a2


def _blocks_d4(a):
    q2, q4, m4 = a["Q2"], a["Q4"], a["M41"]
    blocks, a2 = _d4_common(a)
    pb = psi3_full(b1_full(q2)) / 4
    vec_block = -q2 / 2 + I3 / 3
    mixed = psi4_full(-q4 / 2 - a2 / 14) + D_MAT
    blocks += [
        (1, psi4_full(q4 / 8 + m4 / 8 + a2 / 7) + D_MAT),
        (1, psi4_full(q4 / 8 - m4 / 8 + a2 / 7) + D_MAT),
        (1, np.block([[vec_block, pb], [pb.T, mixed]])),
        (1, np.block([[vec_block, -pb], [-pb.T, mixed]])),
    ]
    return blocks


def _blocks_d3(a):
    q2, m3, q4, n4 = a["Q2"], a["M13"], a["Q4"], a["N4"]
    blocks, a2 = _d4_common(a)
    b1 = psi3_full(b1_full(q2)) / 4
    b2 = b2_full(m3)
    pm = psi3_full(m3) / 4
    vec_block = -q2 / 2 + I3 / 3
    even = psi4_full(q4 / 8 + a2 / 7) + D_MAT
    odd = psi4_full(-q4 / 2 - a2 / 14) + D_MAT
    # the frame-averaged epsilon terms enter with 1/4 inside the bracket
    up = psi4_full(n4 + b2 / 4) / 4
    dn = psi4_full(n4 - b2 / 4) / 4
    blocks += [
        (1, np.block([[vec_block, pm, b1], [pm.T, even, up], [b1.T, up.T, odd]])),
        # the m3 / (m2 m3) coupling carries the same 1/4 as its partner block
        (1, np.block([[vec_block, -b1, -pm], [-b1.T, odd, dn], [-pm.T, dn.T, even]])),
    ]
    return blocks


_BLOCKS: dict[str, Callable] = {
    "Dinf": _blocks_dinf,
    "Cinf": _blocks_cinf,
    "C2": _blocks_c2,
    "D2": _blocks_d2,
    "O": _blocks_o,
    "T": _blocks_t,
    "D4": _blocks_d4,
    "D3": _blocks_d3,
}


def explicit_blocks(group: str, arrays: Mapping[str, np.ndarray]) -> list[tuple[int, np.ndarray]]:
    return _BLOCKS[canonical_group(group)](arrays)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class QuasiEntropyValue:
    value: float
    in_domain: bool

    def __float__(self):
        return self.value


OUT_OF_DOMAIN = QuasiEntropyValue(math.inf, False)


def _value_from_blocks(blocks) -> QuasiEntropyValue:
    total = 0.0
    for mult, m in blocks:
        v = logdet_pd(m)
        if v is None:
            return OUT_OF_DOMAIN
        total += mult * v
    return QuasiEntropyValue(total, True)


def quasi_entropy_vec(group: str, x) -> QuasiEntropyValue:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("order parameters must be finite")
    return _value_from_blocks(_BLOCKS[group](unpack(group, x)))


def quasi_entropy(params: OrderParameterSet) -> QuasiEntropyValue:
    return _value_from_blocks(_BLOCKS[params.group](params.arrays()))


# ---------------------------------------------------------------------------
# gradients (in member coordinates)


def _coord_grad(g_full: np.ndarray) -> np.ndarray:
    """Coordinates of the gradient of a function of a traceless symmetric matrix.

    ``g_full`` is d f / d X as a plain 3x3 matrix; symmetrizing and reading off
    coordinates is exact because the basis is orthonormal and traceless.
    """
    return to_coords((g_full + g_full.T) / 2)


def _grad_dinf(a):
    q = a["Q"]
    return {"Q": _coord_grad(-np.linalg.inv(q + I3 / 3) + np.linalg.inv(I3 / 3 - q / 2))}


def _grad_d2(a):
    q2, m1 = a["Q2"], a["M12"]
    r1 = np.linalg.inv(I3 / 3 + q2)
    r2 = np.linalg.inv(I3 / 3 - q2 / 2 + m1)
    r3 = np.linalg.inv(I3 / 3 - q2 / 2 - m1)
    return {"Q2": _coord_grad(-r1 + r2 / 2 + r3 / 2), "M12": _coord_grad(-r2 + r3)}


def _grad_q1_block(q1, q2, big_inv):
    """Pieces shared by Cinf and C2: returns (dQ1 from both blocks, dQ2 from the first)."""
    r = np.linalg.inv(I3 / 3 + q2 - np.outer(q1, q1))
    x21 = big_inv[3:, :3]
    # d/dS_ab of -ln det of the 6x6 block
    d_s = -0.5 * (x21.T - x21)
    d_q1 = 2 * r @ q1 + np.einsum("abs,ab->s", LEVI_CIVITA, d_s)
    return d_q1, -r


def _grad_cinf(a):
    q1, q2 = a["Q1"], a["Q2"]
    big = _blocks_cinf(a)[1][1]
    x = np.linalg.inv(big)
    d_q1, d_q2 = _grad_q1_block(q1, q2, x)
    d_q2 = d_q2 + 0.5 * (x[:3, :3] + x[3:, 3:])
    return {"Q1": d_q1, "Q2": _coord_grad(d_q2)}


def _grad_c2(a):
    q1, q2 = a["Q1"], a["Q2"]
    big = _blocks_c2(a)[1][1]
    x = np.linalg.inv(big)
    d_q1, d_q2 = _grad_q1_block(q1, q2, x)
    d_q2 = d_q2 + 0.5 * (x[:3, :3] + x[3:, 3:])
    d_m1 = -x[:3, :3] + x[3:, 3:]
    d_m2 = -(x[3:, :3] + x[:3, 3:])
    return {"Q1": d_q1, "Q2": _coord_grad(d_q2), "M12": _coord_grad(d_m1), "M22": _coord_grad(d_m2)}


_ANALYTIC_GRAD = {"Dinf": _grad_dinf, "D2": _grad_d2, "Cinf": _grad_cinf, "C2": _grad_c2}

FD_STEP = 1e-6


def richardson_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences at h and h/2 combined to cancel the h^2 term."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1.0
        d1 = (f(x + h * e) - f(x - h * e)) / (2 * h)
        d2 = (f(x + h / 2 * e) - f(x - h / 2 * e)) / h
        g[i] = (4 * d2 - d1) / 3
    return g


def quasi_entropy_gradient_vec(group: str, x, analytic: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not quasi_entropy_vec(group, x).in_domain:
        raise ValueError("gradient requested outside the domain")
    if analytic and group in _ANALYTIC_GRAD:
        return pack(group, _ANALYTIC_GRAD[group](unpack(group, x)))

    def f(y):
        v = quasi_entropy_vec(group, y)
        if not v.in_domain:
            raise ValueError("finite-difference stencil left the domain; point is too close to the boundary")
        return v.value

    return richardson_gradient(f, x)


def quasi_entropy_gradient(params: OrderParameterSet, analytic: bool = True) -> dict[str, np.ndarray]:
    """Gradient keyed by member name, each in that member's coordinates."""
    g = quasi_entropy_gradient_vec(params.group, params.to_vector(), analytic)
    out, i = {}, 0
    for name, order in GROUP_MEMBERS[params.group]:
        n = n_coords_of(order)
        out[name] = g[i : i + n]
        i += n
    return out


# ---------------------------------------------------------------------------
# marginals: minimize over one tensor with the rest held fixed

MARGINALS = {
    # name: (group, free member)
    "Cinf_over_Q2": ("Cinf", "Q2"),
    "C2_over_M22": ("C2", "M22"),
}


@dataclass(frozen=True)
class MarginalResult:
    value: QuasiEntropyValue
    free: np.ndarray  # optimal coordinates of the free member
    iterations: int


def _free_slice(group: str, member: str) -> slice:
    i = 0
    for name, order in GROUP_MEMBERS[group]:
        n = n_coords_of(order)
        if name == member:
            return slice(i, i + n)
        i += n
    raise KeyError(member)


def _feasible_start(f_margin: Callable[[np.ndarray], float], n: int) -> np.ndarray | None:
    """Look for a point where every block is positive definite.

    Maximizes the smallest block eigenvalue with Nelder-Mead from the origin.
    """
    from scipy.optimize import minimize

    res = minimize(lambda z: -f_margin(z), np.zeros(n), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return res.x if -res.fun > 0 else None


def marginal_minimize(kind: str, fixed_vec: np.ndarray, tol: float = 1e-10,
                      start: np.ndarray | None = None) -> MarginalResult:
    """Minimize the quasi-entropy over the free member; ``fixed_vec`` omits it."""
    group, member = MARGINALS[kind]
    sl = _free_slice(group, member)
    fixed_vec = np.asarray(fixed_vec, dtype=float)
    if fixed_vec.size != group_dim(group) - (sl.stop - sl.start):
        raise ValueError(f"{kind} expects {group_dim(group) - (sl.stop - sl.start)} fixed coordinates")

    def embed(z):
        return np.concatenate([fixed_vec[: sl.start], z, fixed_vec[sl.start :]])

    def fun(z):
        v = quasi_entropy_vec(group, embed(z))
        return v.value if v.in_domain else None

    def grad(z):
        return pack(group, _ANALYTIC_GRAD[group](unpack(group, embed(z))))[sl]

    n = sl.stop - sl.start
    z0 = np.zeros(n) if start is None else np.asarray(start, dtype=float)
    if fun(z0) is None:
        z0 = np.zeros(n)
    if fun(z0) is None:

        def margin(z):
            return min(np.linalg.eigvalsh(m)[0] for _, m in _BLOCKS[group](unpack(group, embed(z))))

        z0 = _feasible_start(margin, n)
        if z0 is None:
            return MarginalResult(OUT_OF_DOMAIN, np.full(n, np.nan), 0)
    res = _descent.descend(fun, grad, z0, grad_tol=tol, max_iters=20000)
    return MarginalResult(QuasiEntropyValue(res.value, True), res.x, res.iterations)


def quasi_entropy_marginal(kind: str, fixed: Mapping[str, SymTensor]) -> QuasiEntropyValue:
    """Marginal quasi-entropy given every member except the free one."""
    group, member = MARGINALS[kind]
    want = [n for n, _ in GROUP_MEMBERS[group] if n != member]
    if set(fixed) != set(want):
        raise ValueError(f"{kind} needs fixed members {want}, got {sorted(fixed)}")
    vec = np.concatenate([_member_coords(np.asarray(fixed[n].full)) for n in want])
    return marginal_minimize(kind, vec).value


# ---------------------------------------------------------------------------
# tetrahedral / octahedral reduction to two scalars


def st_log_args(s: float, t: float) -> tuple[float, float, float, float, float]:
    """Arguments of the four logarithms, and the diagonal entry 1/15 + t/10."""
    a = 1 / 15 + t / 10
    return (a * a - s * s / 36, (1 - t) / 15, (1 - t) / 20, 1 / 60 + t / 90 - s * s / 36, a)


def q4_reduced_st(s: float, t: float) -> QuasiEntropyValue:
    """q4 on T = s e1e2e3, O = t (e1^2e2^2 + e2^2e3^2 + e3^2e1^2 - i^2/5)."""
    if not (math.isfinite(s) and math.isfinite(t)):
        raise ValueError("s and t must be finite")
    p, u, v, w, a = st_log_args(s, t)
    # a > 0 keeps the point in the component containing the origin, where
    # the 2x2 block the first factor comes from is positive definite
    if min(p, u, v, w, a) <= 0:
        return OUT_OF_DOMAIN
    return QuasiEntropyValue(-2 * math.log(p) - 9 * math.log(u) - 3 * math.log(v) - 9 * math.log(w), True)


def q4_reduced_st_gradient(s: float, t: float) -> np.ndarray:
    p, u, v, w, a = st_log_args(s, t)
    if min(p, u, v, w, a) <= 0:
        raise ValueError("gradient requested outside the domain")
    ds = -2 * (-s / 18) / p - 9 * (-s / 18) / w
    dt = -2 * (a / 5) / p + 9 / (1 - t) + 3 / (1 - t) - 9 * (1 / 90) / w
    return np.array([ds, dt])


def st_embedding(s: float, t: float) -> OrderParameterSet:
    """The T-group order parameters of the two-scalar family."""
    tt = SymTensor.from_monomials(3, {(1, 1, 1): s})
    o = SymTensor.from_monomials(
        4, {(2, 2, 0): 0.6 * t, (0, 2, 2): 0.6 * t, (2, 0, 2): 0.6 * t,
            (4, 0, 0): -0.2 * t, (0, 4, 0): -0.2 * t, (0, 0, 4): -0.2 * t}
    )
    return OrderParameterSet("T", {"T": tt, "O": o})


__all__ = [
    "GROUP_MEMBERS",
    "Q2_GROUPS",
    "Q4_GROUPS",
    "D_MAT",
    "OrderParameterSet",
    "QuasiEntropyValue",
    "canonical_group",
    "group_dim",
    "explicit_blocks",
    "quasi_entropy",
    "quasi_entropy_vec",
    "quasi_entropy_gradient",
    "quasi_entropy_gradient_vec",
    "quasi_entropy_marginal",
    "marginal_minimize",
    "q4_reduced_st",
    "q4_reduced_st_gradient",
    "st_embedding",
    "richardson_gradient",
    "unpack",
    "pack",
]
