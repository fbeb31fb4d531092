"""Symmetric (traceless) tensors on R^3 up to order 4.

Tensors are stored by their monomial coefficients: a symmetric tensor of
order k is written as a homogeneous polynomial

    U = sum c[k1,k2,k3] e1^k1 e2^k2 e3^k3

where a monomial stands for the symmetrized tensor product.  The component
U_{i1...ik} with multi-degree (k1,k2,k3) equals c / multinomial(k; k1,k2,k3),
so e.g. e1 e2 has U_12 = U_21 = 1/2.

Heavy numerics elsewhere in the package run on full 3^k numpy arrays; the
helpers here convert between the two representations.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_ORDER = 4
ATOL_CONSTRUCT = 1e-12

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in itertools.permutations(range(3)):
    LEVI_CIVITA[_i, _j, _k] = np.linalg.det(np.eye(3)[[_i, _j, _k]])
DELTA = np.eye(3)


class TensorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# multi-degree bookkeeping


@lru_cache(maxsize=None)
def multidegrees(order: int) -> tuple[tuple[int, int, int], ...]:
    """Multi-degrees (k1,k2,k3) with k1+k2+k3 = order, lexicographically descending."""
    out = []
    for k1 in range(order, -1, -1):
        for k2 in range(order - k1, -1, -1):
            out.append((k1, k2, order - k1 - k2))
    return tuple(out)


def multinomial(deg: Sequence[int]) -> int:
    return math.factorial(sum(deg)) // math.prod(math.factorial(d) for d in deg)


@lru_cache(maxsize=None)
def _expansion(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Index map from full array positions to multi-degree slots, and weights."""
    degs = multidegrees(order)
    slot = {d: n for n, d in enumerate(degs)}
    idx = np.zeros((3,) * order, dtype=int)
    for pos in itertools.product(range(3), repeat=order):
        d = tuple(pos.count(a) for a in range(3))
        idx[pos] = slot[d]
    mult = np.array([multinomial(d) for d in degs], dtype=float)
    return idx, mult


def coeffs_to_full(order: int, coeffs: np.ndarray) -> np.ndarray:
    if order == 0:
        return np.asarray(coeffs[0], dtype=float)
    idx, mult = _expansion(order)
    return (np.asarray(coeffs, dtype=float) / mult)[idx]


def full_to_coeffs(full: np.ndarray) -> np.ndarray:
    """Monomial coefficients of an (assumed symmetric) full array."""
    full = np.asarray(full, dtype=float)
    order = full.ndim
    if order == 0:
        return full.reshape(1).copy()
    _, mult = _expansion(order)
    reps = [sum(((a,) * n for a, n in enumerate(d)), ()) for d in multidegrees(order)]
    return np.array([full[r] for r in reps]) * mult


# ---------------------------------------------------------------------------
# tensor types


@dataclass(frozen=True)
class SymTensor:
    """Symmetric tensor of order 0..4 in minimal monomial storage."""

    order: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 0 <= self.order <= MAX_ORDER:
            raise TensorError(f"order must be in 0..{MAX_ORDER}, got {self.order}")
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != len(multidegrees(self.order)):
            raise TensorError(
                f"order {self.order} needs {len(multidegrees(self.order))} coefficients, got {c.size}"
            )
        if not np.all(np.isfinite(c)):
            raise TensorError("tensor coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # constructors -----------------------------------------------------------
    @classmethod
    def from_full(cls, full, check: bool = True) -> "SymTensor":
        full = np.asarray(full, dtype=float)
        if check and full.ndim >= 2:
            for perm in itertools.permutations(range(full.ndim)):
                if np.max(np.abs(full - full.transpose(perm)), initial=0.0) > ATOL_CONSTRUCT:
                    raise TensorError("array is not symmetric; use sym_part first")
        return cls(full.ndim, full_to_coeffs(full))

    @classmethod
    def from_monomials(cls, order: int, terms: dict) -> "SymTensor":
        """Build from {(k1,k2,k3): coefficient}."""
        degs = multidegrees(order)
        c = np.zeros(len(degs))
        for d, v in terms.items():
            d = tuple(d)
            if d not in degs:
                raise TensorError(f"multi-degree {d} does not have order {order}")
            c[degs.index(d)] += v
        return cls(order, c)

    @classmethod
    def zeros(cls, order: int) -> "SymTensor":
        return cls(order, np.zeros(len(multidegrees(order))))

    # views ------------------------------------------------------------------
    @cached_property
    def full(self) -> np.ndarray:
        a = coeffs_to_full(self.order, self.coeffs)
        a.setflags(write=False)
        return a

    def as_dict(self) -> dict:
        return {d: float(c) for d, c in zip(multidegrees(self.order), self.coeffs)}

    def trace(self) -> "SymTensor":
        if self.order < 2:
            raise TensorError("trace needs order >= 2")
        return SymTensor.from_full(np.trace(self.full, axis1=-2, axis2=-1), check=False)

    def is_traceless(self, atol: float = ATOL_CONSTRUCT) -> bool:
        if self.order < 2:
            return True
        return float(np.max(np.abs(np.trace(self.full, axis1=-2, axis2=-1)))) <= atol

    @property
    def norm(self) -> float:
        return math.sqrt(tensor_dot(self, self))

    # arithmetic -------------------------------------------------------------
    def _same(self, other: "SymTensor"):
        if not isinstance(other, SymTensor) or other.order != self.order:
            raise TensorError("tensor orders differ")

    def __add__(self, other):
        self._same(other)
        return SymTensor(self.order, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return SymTensor(self.order, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return SymTensor(self.order, self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return SymTensor(self.order, -self.coeffs)

    def __truediv__(self, s):
        return SymTensor(self.order, self.coeffs / float(s))

    def __eq__(self, other):
        return (
            isinstance(other, SymTensor)
            and other.order == self.order
            and np.array_equal(other.coeffs, self.coeffs)
        )

    def __hash__(self):
        return hash((self.order, self.coeffs.tobytes()))

    def allclose(self, other: "SymTensor", atol: float = 1e-12) -> bool:
        self._same(other)
        return bool(np.allclose(self.full, other.full, rtol=0.0, atol=atol))


class SymTracelessTensor(SymTensor):
    """Symmetric tensor whose every pair contraction vanishes."""

    def __post_init__(self):
        super().__post_init__()
        if not self.is_traceless():
            raise TensorError("tensor is not traceless")

    @classmethod
    def from_sym(cls, u: SymTensor) -> "SymTracelessTensor":
        return cls(u.order, u.coeffs)


def identity_tensor() -> SymTensor:
    """The order-2 identity e1^2 + e2^2 + e3^2."""
    return SymTensor.from_full(DELTA)


# ---------------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class EulerAngles:
    alpha: float
    beta: float
    gamma: float

    def wrapped(self) -> "EulerAngles":
        a = math.fmod(self.alpha, 2 * math.pi)
        b, g = self.beta, self.gamma
        if a < 0:
            a += 2 * math.pi
        if a > math.pi:
            # (a, b, g) and (2pi - a, b + pi, g + pi) give the same frame
            a = 2 * math.pi - a
            b += math.pi
            g += math.pi
        return EulerAngles(a, b % (2 * math.pi), g % (2 * math.pi))


@dataclass(frozen=True)
class Rotation:
    """Element of SO(3); column j of ``m`` is the body axis m_j."""

    m: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise TensorError("rotation matrix must be 3x3")
        if np.max(np.abs(m.T @ m - DELTA)) > ATOL_CONSTRUCT or abs(np.linalg.det(m) - 1.0) > ATOL_CONSTRUCT:
            raise TensorError("matrix is not in SO(3)")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.m @ other.m)

    @property
    def T(self) -> "Rotation":
        return Rotation(self.m.T)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(DELTA)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Rotation":
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
        # re-orthonormalize to push rounding below the construction tolerance
        u, _, vt = np.linalg.svd(m)
        return cls(u @ vt)


def euler_matrix(alpha, beta, gamma) -> np.ndarray:
    """Frame matrix (m1, m2, m3) for Euler angles; broadcasts over array inputs."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    ca, sa, cb, sb, cg, sg = np.broadcast_arrays(ca, sa, cb, sb, cg, sg)
    m = np.empty(ca.shape + (3, 3))
    m[..., 0, 0] = ca
    m[..., 0, 1] = -sa * cg
    m[..., 0, 2] = sa * sg
    m[..., 1, 0] = sa * cb
    m[..., 1, 1] = ca * cb * cg - sb * sg
    m[..., 1, 2] = -ca * cb * sg - sb * cg
    m[..., 2, 0] = sa * sb
    m[..., 2, 1] = ca * sb * cg + cb * sg
    m[..., 2, 2] = -ca * sb * sg + cb * cg
    return m


def rotation_from_euler(a: EulerAngles) -> Rotation:
    a = a.wrapped()
    return Rotation(euler_matrix(a.alpha, a.beta, a.gamma))


def rotate_full(full: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Replace e_i by the columns of p in every index of a full array."""
    out = np.asarray(full, dtype=float)
    for ax in range(out.ndim):
        out = np.moveaxis(np.tensordot(p, out, axes=([1], [ax])), 0, ax)
    return out


def rotate_tensor(u: SymTensor, p: Rotation) -> SymTensor:
    r = rotate_full(u.full, p.m)
    out = SymTensor(u.order, full_to_coeffs(r))
    if isinstance(u, SymTracelessTensor):
        # rounding may leave ~1e-16 traces; project them away
        return SymTracelessTensor.from_sym(traceless_part(out))
    return out


# ---------------------------------------------------------------------------
# symmetrization, traces, contraction


def sym_full(full: np.ndarray) -> np.ndarray:
    full = np.asarray(full, dtype=float)
    k = full.ndim
    if k < 2:
        return full.copy()
    perms = list(itertools.permutations(range(k)))
    return sum(full.transpose(p) for p in perms) / len(perms)


def sym_part(full) -> SymTensor:
    full = np.asarray(full, dtype=float)
    if full.ndim > MAX_ORDER:
        raise TensorError(f"order must be <= {MAX_ORDER}")
    return SymTensor(full.ndim, full_to_coeffs(sym_full(full)))


def _outer(*arrs) -> np.ndarray:
    out = np.asarray(arrs[0], dtype=float)
    for a in arrs[1:]:
        out = np.multiply.outer(out, a)
    return out


def traceless_full(full: np.ndarray) -> np.ndarray:
    """Traceless projection of a symmetric full array of order <= 4."""
    k = full.ndim
    if k < 2:
        return np.array(full, dtype=float)
    if k == 2:
        return full - np.trace(full) / 3.0 * DELTA
    if k == 3:
        return full - 0.6 * sym_full(_outer(DELTA, np.einsum("iij->j", full)))
    if k == 4:
        t2 = np.einsum("iikl->kl", full)
        t0 = np.trace(t2)
        return (
            full
            - 6.0 / 7.0 * sym_full(_outer(DELTA, t2))
            + 3.0 / 35.0 * t0 * sym_full(_outer(DELTA, DELTA))
        )
    raise TensorError(f"order must be <= {MAX_ORDER}")


def traceless_part(u: SymTensor) -> SymTracelessTensor:
    if u.order < 2:
        return SymTracelessTensor(u.order, u.coeffs)
    t = traceless_full(u.full)
    return SymTracelessTensor(u.order, full_to_coeffs(sym_full(t)))


def tensor_dot(u: SymTensor, v: SymTensor) -> float:
    """Full index contraction, evaluated on monomial coefficients."""
    if u.order != v.order:
        raise TensorError(f"cannot contract order {u.order} with order {v.order}")
    _, mult = _expansion(u.order) if u.order else (None, np.ones(1))
    return float(np.sum(u.coeffs * v.coeffs / mult))


# ---------------------------------------------------------------------------
# orthonormal bases and coordinates


@lru_cache(maxsize=None)
def traceless_basis(order: int) -> np.ndarray:
    """Orthonormal basis (2k+1, 3,...,3) of symmetric traceless tensors.

    Built by Gram-Schmidt over the traceless parts of the monomials, in
    multi-degree order, so the result is deterministic.
    """
    if order == 0:
        return np.ones((1,))
    vecs: list[np.ndarray] = []
    for d in multidegrees(order):
        c = np.zeros(len(multidegrees(order)))
        c[multidegrees(order).index(d)] = 1.0
        v = traceless_full(coeffs_to_full(order, c))
        for b in vecs:
            v = v - np.sum(v * b) * b
        n = math.sqrt(np.sum(v * v))
        if n > 1e-8:
            vecs.append(v / n)
    basis = np.array(vecs)
    assert basis.shape[0] == 2 * order + 1
    basis.setflags(write=False)
    return basis


def n_coords(order: int) -> int:
    return 2 * order + 1


def to_coords(full: np.ndarray) -> np.ndarray:
    b = traceless_basis(full.ndim)
    return np.tensordot(b, full, axes=full.ndim)


def from_coords(order: int, coords: np.ndarray) -> np.ndarray:
    return np.tensordot(np.asarray(coords, dtype=float), traceless_basis(order), axes=1)


def traceless_from_coords(order: int, coords) -> SymTracelessTensor:
    return SymTracelessTensor.from_sym(traceless_part(SymTensor.from_full(from_coords(order, coords), check=False)))


# ---------------------------------------------------------------------------
# reshaping maps

# rows: W^2_1..W^2_5 = e1^2 - i/3, (e2^2 - e3^2)/2, e1e2, e1e3, e2e3, read off
# an index pair: row 1 takes (11), row 2 takes ((22) - (33))/2, rows 3-5 the off-diagonals
_PAIR_SELECT = np.zeros((5, 3, 3))
_PAIR_SELECT[0, 0, 0] = 1.0
_PAIR_SELECT[1, 1, 1] = 0.5
_PAIR_SELECT[1, 2, 2] = -0.5
_PAIR_SELECT[2, 0, 1] = 1.0
_PAIR_SELECT[3, 0, 2] = 1.0
_PAIR_SELECT[4, 1, 2] = 1.0
PAIR_SELECT = _PAIR_SELECT.reshape(5, 9)


def psi3_full(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(3, 9) @ PAIR_SELECT.T


def psi4_full(v: np.ndarray) -> np.ndarray:
    return PAIR_SELECT @ np.asarray(v, dtype=float).reshape(9, 9) @ PAIR_SELECT.T


def _as_full(v, order: int) -> np.ndarray:
    a = v.full if isinstance(v, SymTensor) else np.asarray(v, dtype=float)
    if a.ndim != order:
        raise TensorError(f"expected an order-{order} tensor, got order {a.ndim}")
    return a


def psi3(v) -> np.ndarray:
    """3x5 matrix of an order-3 tensor."""
    return psi3_full(_as_full(v, 3))


def psi4(v) -> np.ndarray:
    """5x5 matrix of an order-4 tensor."""
    return psi4_full(_as_full(v, 4))


# ---------------------------------------------------------------------------
# auxiliary tensors


def a1_full(t: np.ndarray) -> np.ndarray:
    # (A1)_ijkl = eps_jks T_ils + eps_ils T_jks
    return np.einsum("jks,ils->ijkl", LEVI_CIVITA, t) + np.einsum("ils,jks->ijkl", LEVI_CIVITA, t)


def a2_full(q: np.ndarray) -> np.ndarray:
    d = DELTA
    return (
        np.einsum("kl,ij->ijkl", d, q)
        + np.einsum("ij,kl->ijkl", d, q)
        - 0.75
        * (
            np.einsum("ik,jl->ijkl", d, q)
            + np.einsum("jl,ik->ijkl", d, q)
            + np.einsum("il,jk->ijkl", d, q)
            + np.einsum("jk,il->ijkl", d, q)
        )
    )


def b1_full(q: np.ndarray) -> np.ndarray:
    # (B1)_ijk = eps_ijs Q_ks + eps_iks Q_js
    return np.einsum("ijs,ks->ijk", LEVI_CIVITA, q) + np.einsum("iks,js->ijk", LEVI_CIVITA, q)


def b2_full(m: np.ndarray) -> np.ndarray:
    # (B2)_ijkl = eps_iks M_jls + eps_jls M_iks
    return np.einsum("iks,jls->ijkl", LEVI_CIVITA, m) + np.einsum("jls,iks->ijkl", LEVI_CIVITA, m)


_AUX = {"A1": (3, a1_full), "A2": (2, a2_full), "B1": (2, b1_full), "B2": (3, b2_full)}


def aux_tensor(kind: str, u) -> np.ndarray:
    """Auxiliary tensors A1, A2, B1, B2 as full arrays (not symmetric in general)."""
    try:
        order, fn = _AUX[kind]
    except KeyError:
        raise TensorError(f"unknown auxiliary tensor {kind!r}") from None
    return fn(_as_full(u, order))


# ---------------------------------------------------------------------------
# text format:  "order; (k1,k2,k3)=coeff; ..."

_TERM = re.compile(r"^\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*=\s*(\S+)$")


def format_tensor(u: SymTensor, digits: int = 17) -> str:
    parts = [str(u.order)]
    for d, c in zip(multidegrees(u.order), u.coeffs):
        if c != 0.0:
            parts.append(f"({d[0]},{d[1]},{d[2]})={c:.{digits}g}")
    return "; ".join(parts)


def parse_tensor(text: str) -> SymTensor:
    fields = [f.strip() for f in text.strip().split(";") if f.strip()]
    if not fields:
        raise TensorError("empty tensor line")
    try:
        order = int(fields[0])
    except ValueError:
        raise TensorError(f"bad tensor order {fields[0]!r}") from None
    terms: dict = {}
    for f in fields[1:]:
        m = _TERM.match(f)
        if not m:
            raise TensorError(f"bad tensor term {f!r}")
        d = (int(m.group(1)), int(m.group(2)), int(m.group(3)))
        terms[d] = terms.get(d, 0.0) + float(m.group(4))
    return SymTensor.from_monomials(order, terms)


def parse_tensor_file(lines: Iterable[str]) -> dict[str, SymTensor]:
    """Read ``name: <tensor line>`` entries; blank lines and ``#`` comments skipped."""
    out = {}
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise TensorError(f"expected 'name: tensor', got {line!r}")
        name, body = line.split(":", 1)
        out[name.strip()] = parse_tensor(body)
    return out
