"""Covariance matrices of the orientation basis functions, built independently
of the closed forms in ``quasi_entropy``.

Two constructions:

* ``build_cov_w1``: the 9x9 covariance of the first-order functions e_i . m_j,
  assembled directly from the averaged tensors.
* ``build_cov_w2_sym``: the 34x34 covariance of the first- and second-order
  functions for the O, T, D4 and D3 groups.  Every average of a polynomial of
  degree <= 4 in the frame is fixed by the order parameters (after projecting
  onto group-invariant body tensors).  We build a signed density on SO(3)
  carrying exactly those averages, with components only in the irreducible
  pieces of degree <= 4, and integrate w w^T against it with a product rule
  that is exact for degree-8 integrands.  The covariance is then split into
  its connected blocks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor_core import (
    DELTA,
    LEVI_CIVITA,
    coeffs_to_full,
    euler_matrix,
    multidegrees,
    rotate_full,
    traceless_basis,
    traceless_full,
)

SYM_TOL = 1e-10


def logdet_pd(m) -> float | None:
    """-ln det m for a symmetric positive definite m, else None."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(m - m.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None
    d = np.diagonal(c)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return None
    return -2.0 * float(np.sum(np.log(d)))


# ---------------------------------------------------------------------------
# first-order covariance


@dataclass(frozen=True)
class W1Averages:
    """Averages of m_i (vectors) and of the traceless second-order monomials."""

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    Q2: np.ndarray   # <m1^2> - i/3
    M12: np.ndarray  # <m2^2 - m3^2> / 2
    m1m2: np.ndarray
    m1m3: np.ndarray
    m2m3: np.ndarray

    @classmethod
    def zeros(cls) -> "W1Averages":
        z3, z33 = np.zeros(3), np.zeros((3, 3))
        return cls(z3, z3, z3, z33, z33, z33, z33, z33)


def _eps(v):
    return np.einsum("ijs,s->ij", LEVI_CIVITA, v)


def build_cov_w1(av: W1Averages) -> np.ndarray:
    i3 = DELTA / 3
    diag = [av.Q2 + i3, i3 - av.Q2 / 2 + av.M12, i3 - av.Q2 / 2 - av.M12]
    # <m_a (x) m_b> = <m_a m_b> + (1/2) eps . <m_a x m_b>
    off = {
        (0, 1): av.m1m2 + _eps(av.m3) / 2,
        (0, 2): av.m1m3 - _eps(av.m2) / 2,
        (1, 2): av.m2m3 + _eps(av.m1) / 2,
    }
    second = np.zeros((9, 9))
    for a in range(3):
        second[3 * a : 3 * a + 3, 3 * a : 3 * a + 3] = diag[a]
    for (a, b), blk in off.items():
        second[3 * a : 3 * a + 3, 3 * b : 3 * b + 3] = blk
        second[3 * b : 3 * b + 3, 3 * a : 3 * a + 3] = blk.T
    mean = np.concatenate([av.m1, av.m2, av.m3])
    return second - np.outer(mean, mean)


def w1_averages_from(params) -> W1Averages:
    """Non-vanishing first/second-order averages for the Dinf, Cinf, C2 and D2 groups."""
    a = params.arrays()
    z3, z33 = np.zeros(3), np.zeros((3, 3))
    g = params.group
    if g == "Dinf":
        return W1Averages(z3, z3, z3, a["Q"], z33, z33, z33, z33)
    if g == "Cinf":
        return W1Averages(a["Q1"], z3, z3, a["Q2"], z33, z33, z33, z33)
    if g == "C2":
        return W1Averages(a["Q1"], z3, z3, a["Q2"], a["M12"], z33, z33, a["M22"])
    if g == "D2":
        return W1Averages(z3, z3, z3, a["Q2"], a["M12"], z33, z33, z33)
    raise ValueError(f"group {g} has no first-order covariance reduction")


# ---------------------------------------------------------------------------
# molecular symmetry groups and their invariant body tensors


def _mono(order: int, terms: dict) -> np.ndarray:
    degs = multidegrees(order)
    c = np.zeros(len(degs))
    for d, v in terms.items():
        c[degs.index(d)] = v
    return traceless_full(coeffs_to_full(order, c))


def _axis_rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


_CYCLIC = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float)  # e1->e2->e3->e1
_FLIP2 = np.diag([-1.0, 1.0, -1.0])
_FLIP1 = np.diag([1.0, -1.0, -1.0])

GROUP_GENERATORS: dict[str, list[np.ndarray]] = {
    "O": [_axis_rotation(math.pi / 2), _CYCLIC],
    "T": [_FLIP1, _FLIP2, _CYCLIC],
    "D4": [_axis_rotation(math.pi / 2), _FLIP2],
    "D3": [_axis_rotation(2 * math.pi / 3), _FLIP2],
}

_E1SQ = _mono(2, {(2, 0, 0): 1})
_E1_4 = _mono(4, {(4, 0, 0): 1})
_CUBIC = _mono(4, {(2, 2, 0): 1, (0, 2, 2): 1, (2, 0, 2): 1})

# member name -> body tensor whose frame average is that member
GROUP_INVARIANTS: dict[str, dict[str, np.ndarray]] = {
    "O": {"O": _CUBIC},
    "T": {"T": _mono(3, {(1, 1, 1): 1}), "O": _CUBIC},
    "D4": {"Q2": _E1SQ, "Q4": _E1_4, "M41": _mono(4, {(0, 4, 0): 1, (0, 2, 2): -6, (0, 0, 4): 1})},
    "D3": {
        "Q2": _E1SQ,
        "M13": _mono(3, {(0, 3, 0): 1, (0, 1, 2): -3}),
        "Q4": _E1_4,
        "N4": _mono(4, {(1, 2, 1): 3, (1, 0, 3): -1}),
    },
}


def _key(m: np.ndarray) -> bytes:
    # adding 0.0 folds -0.0 into 0.0 so equal matrices hash equally
    return (np.round(m, 8) + 0.0).tobytes()


@lru_cache(maxsize=None)
def group_elements(group: str) -> tuple[np.ndarray, ...]:
    """Closure of the generators under multiplication."""
    elems = [np.eye(3)]
    keys = {_key(np.eye(3))}
    frontier = [np.eye(3)]
    while frontier:
        nxt = []
        for a in frontier:
            for g in GROUP_GENERATORS[group]:
                b = a @ g
                k = _key(b)
                if k not in keys:
                    keys.add(k)
                    elems.append(b)
                    nxt.append(b)
        frontier = nxt
    return tuple(elems)


def group_average(group: str, u: np.ndarray) -> np.ndarray:
    els = group_elements(group)
    return sum(rotate_full(u, s) for s in els) / len(els)


def invariant_dimension(group: str, order: int) -> int:
    """Rank of the group projector on traceless tensors of the given order."""
    basis = traceless_basis(order)
    proj = np.array([np.tensordot(basis, group_average(group, b), axes=order) for b in basis])
    return int(np.linalg.matrix_rank(proj, tol=1e-9))


def _frame_average(group: str, arrays: Mapping[str, np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Return U_body -> <p o U_body> for the given order parameters."""
    inv = GROUP_INVARIANTS[group]

    def avg(u: np.ndarray) -> np.ndarray:
        k = u.ndim
        names = [n for n, b in inv.items() if b.ndim == k]
        if not names:
            return np.zeros_like(u)
        pu = group_average(group, u)
        mat = np.array([inv[n].reshape(-1) for n in names]).T
        coef, *_ = np.linalg.lstsq(mat, pu.reshape(-1), rcond=None)
        return sum(c * arrays[n] for c, n in zip(coef, names))

    return avg


# ---------------------------------------------------------------------------
# exact quadrature on SO(3)


@dataclass(frozen=True)
class SO3Rule:
    """Product rule in (cos alpha, beta, gamma); weights sum to one."""

    frames: np.ndarray  # (N, 3, 3)
    weights: np.ndarray  # (N,)
    _images: dict = field(default_factory=dict, repr=False, compare=False)

    def basis_images(self, order: int) -> np.ndarray:
        """(N, j, i) array of W_i . (p o W_j) over the orthonormal body basis of ``order``."""
        if order not in self._images:
            basis = _body_basis(order)
            axes = (list(range(1, order + 1)), list(range(1, order + 1)))
            self._images[order] = np.stack(
                [np.tensordot(rotate_batch(w, self.frames), basis, axes=axes) for w in basis], axis=1
            )
        return self._images[order]


@lru_cache(maxsize=None)
def so3_rule(n_alpha: int = 10, n_angle: int = 18) -> SO3Rule:
    # Gauss-Legendre in cos(alpha) is exact for the polynomial part in alpha;
    # the periodic trapezoid rule is exact for trigonometric degree < n_angle
    u, wu = np.polynomial.legendre.leggauss(n_alpha)
    ang = 2 * math.pi * np.arange(n_angle) / n_angle
    a, b, g = np.meshgrid(np.arccos(u), ang, ang, indexing="ij")
    w = np.broadcast_to((wu / 2)[:, None, None], a.shape) / n_angle**2
    return SO3Rule(euler_matrix(a.ravel(), b.ravel(), g.ravel()), w.ravel().copy())


def rotate_batch(u: np.ndarray, frames: np.ndarray) -> np.ndarray:
    """p o U at every frame; result (N, 3, ..., 3)."""
    k = u.ndim
    if k == 1:
        return np.einsum("nai,i->na", frames, u)
    if k == 2:
        return np.einsum("nai,nbj,ij->nab", frames, frames, u, optimize=True)
    if k == 3:
        return np.einsum("nai,nbj,nck,ijk->nabc", frames, frames, frames, u, optimize=True)
    return np.einsum("nai,nbj,nck,ndl,ijkl->nabcd", frames, frames, frames, frames, u, optimize=True)


def _body_basis(order: int) -> np.ndarray:
    return np.eye(3) if order == 1 else traceless_basis(order)


def pseudo_density(avg: Callable[[np.ndarray], np.ndarray], max_order: int, rule: SO3Rule) -> np.ndarray:
    """Signed density values at the rule's frames reproducing all averages up to ``max_order``.

    With an orthonormal body basis W_j of each irreducible piece, the functions
    W_i . (p o W_j) are orthogonal on SO(3) with squared norm 1/(2k+1), so
    rho(p) = 1 + sum_k (2k+1) sum_j <p o W_j> . (p o W_j).
    """
    rho = np.ones(len(rule.weights))
    for k in range(1, max_order + 1):
        basis = _body_basis(k)
        # lab coordinates of every <p o W_j>; averages are traceless, so the
        # contraction with p o W_j reduces to a dot product of coordinates
        coords = np.array([np.tensordot(basis, avg(w), axes=k) for w in basis])
        if not np.any(coords):
            continue
        rho += (2 * k + 1) * np.einsum("nji,ji->n", rule.basis_images(k), coords)
    return rho


# orthogonal, unnormalized second-order basis: m1^2 - i/3, (m2^2 - m3^2)/2, symmetrized m_i m_j
W2_BASIS = np.zeros((5, 3, 3))
W2_BASIS[0] = np.diag([2 / 3, -1 / 3, -1 / 3])
W2_BASIS[1] = np.diag([0.0, 0.5, -0.5])
for _n, (_i, _j) in enumerate([(0, 1), (0, 2), (1, 2)], start=2):
    W2_BASIS[_n, _i, _j] = W2_BASIS[_n, _j, _i] = 0.5

W1_LABELS = [f"e{i + 1}.m{j + 1}" for j in range(3) for i in range(3)]
W2_LABELS = W1_LABELS + [f"W{r + 1}.W{a + 1}(p)" for a in range(5) for r in range(5)]


def w2_functions(frames: np.ndarray) -> np.ndarray:
    """The 34 first/second-order functions at each frame, ordered as W2_LABELS."""
    first = frames.transpose(0, 2, 1).reshape(len(frames), 9)  # body index outer, lab inner
    rot = np.einsum("nai,nbj,kij->nkab", frames, frames, W2_BASIS, optimize=True)
    second = np.einsum("rab,nkab->nkr", W2_BASIS, rot).reshape(len(frames), 25)
    return np.concatenate([first, second], axis=1)


def w1_functions(frames: np.ndarray) -> np.ndarray:
    return frames.transpose(0, 2, 1).reshape(len(frames), 9)


def quadrature_covariance(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mean = weights @ values
    second = (values * weights[:, None]).T @ values
    return second - np.outer(mean, mean)


def cov_w1_by_quadrature(av: W1Averages) -> np.ndarray:
    """Same matrix as build_cov_w1, via the signed density (a cross-check route)."""
    rule = so3_rule()
    body_vec = {0: av.m1, 1: av.m2, 2: av.m3}
    pair = np.zeros((3, 3, 3, 3))  # <m_a m_b> traceless parts, symmetric in (a,b)
    pair[0, 0] = av.Q2
    pair[1, 1] = -av.Q2 / 2 + av.M12
    pair[2, 2] = -av.Q2 / 2 - av.M12
    pair[0, 1] = pair[1, 0] = av.m1m2
    pair[0, 2] = pair[2, 0] = av.m1m3
    pair[1, 2] = pair[2, 1] = av.m2m3

    def avg(u):
        if u.ndim == 1:
            return sum(u[j] * body_vec[j] for j in range(3))
        return np.einsum("ab,abij->ij", u, pair)

    rho = pseudo_density(avg, 2, rule)
    return quadrature_covariance(w1_functions(rule.frames), rule.weights * rho)


# ---------------------------------------------------------------------------
# symmetry-reduced second-order covariance


@dataclass(frozen=True)
class LabelledBlock:
    labels: tuple[str, ...]
    matrix: np.ndarray

    @property
    def neg_logdet(self) -> float | None:
        return logdet_pd(self.matrix)


@dataclass(frozen=True)
class CovW2Blocks:
    group: str
    full: np.ndarray
    blocks: tuple[LabelledBlock, ...]

    def neg_logdet(self) -> float | None:
        total = 0.0
        for b in self.blocks:
            v = b.neg_logdet
            if v is None:
                return None
            total += v
        return total

    def shapes(self) -> list[int]:
        return sorted((len(b.labels) for b in self.blocks), reverse=True)


def _connected_blocks(m: np.ndarray, labels: Sequence[str], rel_tol: float = 1e-12) -> list[LabelledBlock]:
    n = len(m)
    link = np.abs(m) > rel_tol * np.max(np.abs(m))
    seen = np.zeros(n, dtype=bool)
    out = []
    for start in range(n):
        if seen[start]:
            continue
        comp, stack = [], [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.nonzero(link[i] & ~seen)[0]:
                seen[j] = True
                stack.append(j)
        comp.sort()
        out.append(LabelledBlock(tuple(labels[i] for i in comp), m[np.ix_(comp, comp)]))
    return out


def build_cov_w2_sym(group: str, params) -> CovW2Blocks:
    if group != params.group:
        raise ValueError(f"parameters are for group {params.group}, not {group}")
    if group not in GROUP_INVARIANTS:
        raise ValueError(f"second-order covariance is only built for {', '.join(GROUP_INVARIANTS)}")
    rule = so3_rule()
    rho = pseudo_density(_frame_average(group, params.arrays()), 4, rule)
    cov = quadrature_covariance(w2_functions(rule.frames), rule.weights * rho)
    cov = (cov + cov.T) / 2
    return CovW2Blocks(group, cov, tuple(_connected_blocks(cov, W2_LABELS)))


def dump_blocks_csv(blocks: CovW2Blocks, path=None) -> str:
    """Write each block as a labelled CSV matrix separated by blank lines."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    for n, b in enumerate(blocks.blocks):
        wr.writerow([f"block {n}"] + list(b.labels))
        for lab, row in zip(b.labels, b.matrix):
            wr.writerow([lab] + [f"{v:.17g}" for v in row])
        wr.writerow([])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
