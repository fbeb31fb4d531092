"""Multi-start minimization, stationary-point classification and numeric
checks of the structural results for the rod and D2 models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._descent import descend
from .models import (
    D2Model,
    FreeEnergyModel,
    RTriple,
    critical_x,
    rod_profile_third_derivative,
    rod_uniaxial_profile,
)
from .tensor_core import Rotation, from_coords, to_coords

HESSIAN_STEP = 1e-4
DEGENERATE_EIG = 1e-7
ENERGY_MATCH = 1e-7
FINGERPRINT_MATCH = 1e-5
START_RADIUS = 0.3


class NoConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class MinimizeOptions:
    n_starts: int = 20
    grad_tol: float = 1e-9
    max_iters: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")


@dataclass(frozen=True)
class StationaryPoint:
    params: np.ndarray
    energy: float
    grad_norm: float
    hessian_spectrum: tuple[float, ...]  # transverse to the rotation orbit, sorted
    orbit_dim: int  # number of exact zero modes from rotating the point
    kind: str  # minimizer | saddle | maximizer | degenerate
    multiplicity: int = 1  # how many starts converged here
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# start sampling


def _simplex_traceless(rng: np.random.Generator) -> np.ndarray:
    lam = rng.dirichlet(np.ones(3))
    p = Rotation.random(rng).m
    return p @ np.diag(lam) @ p.T - np.eye(3) / 3


def _ball(rng: np.random.Generator, n: int, radius: float = START_RADIUS) -> np.ndarray:
    v = rng.normal(size=n)
    return radius * rng.uniform() ** (1 / n) * v / np.linalg.norm(v)


def sample_start(model: FreeEnergyModel, rng: np.random.Generator) -> np.ndarray:
    """Random in-domain start: order-2 members from a rotated simplex point,
    everything else uniform in a ball, then pulled toward the origin until
    the energy is defined."""
    if model.family == "rod_profile":
        return np.array([rng.uniform(0.01, 0.99)])
    if not model.layout:
        x = _ball(rng, model.dim, 2 * START_RADIUS)
    else:
        parts = []
        for _, k in model.layout:
            if k == 2:
                parts.append(to_coords(_simplex_traceless(rng)))
            else:
                parts.append(_ball(rng, 3 if k == 1 else 2 * k + 1))
        x = np.concatenate(parts)
    for _ in range(60):
        if model.value(x) is not None:
            return x
        x = x / 2
    return np.zeros(model.dim)


# ---------------------------------------------------------------------------
# Hessian and classification


def _axis_rotation(axis: int, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    i, j = [a for a in range(3) if a != axis]
    m = np.eye(3)
    m[i, i] = m[j, j] = c
    m[i, j], m[j, i] = -s, s
    return m


def orbit_tangents(model: FreeEnergyModel, x: np.ndarray, delta: float = 1e-6) -> np.ndarray:
    """Orthonormal basis (columns) of the tangent space to the rotation orbit of x."""
    if not model.layout:
        return np.zeros((model.dim, 0))
    cols = [
        (model.rotate(x, _axis_rotation(a, delta)) - model.rotate(x, _axis_rotation(a, -delta))) / (2 * delta)
        for a in range(3)
    ]
    u, s, _ = np.linalg.svd(np.array(cols).T, full_matrices=False)
    return u[:, s > 1e-6]


def fd_hessian(model: FreeEnergyModel, x: np.ndarray, h: float = HESSIAN_STEP) -> Optional[np.ndarray]:
    n = model.dim
    hess = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        if model.value(x + e) is None or model.value(x - e) is None:
            return None
        hess[:, j] = (model.gradient(x + e) - model.gradient(x - e)) / (2 * h)
    return (hess + hess.T) / 2


def classify(spectrum, tol: float = DEGENERATE_EIG) -> str:
    spec = np.asarray(spectrum)
    if spec.size == 0:
        return "degenerate"
    if np.any(np.abs(spec) <= tol):
        return "degenerate"
    if np.all(spec > 0):
        return "minimizer"
    if np.all(spec < 0):
        return "maximizer"
    return "saddle"


def analyze_point(model: FreeEnergyModel, x: np.ndarray) -> tuple[tuple[float, ...], int, str]:
    """Transverse Hessian spectrum, orbit dimension and kind."""
    hess = fd_hessian(model, x)
    if hess is None:
        return (), 0, "degenerate"
    tang = orbit_tangents(model, x)
    r = tang.shape[1]
    if r:
        q, _ = np.linalg.qr(np.hstack([tang, np.eye(model.dim)]))
        normal = q[:, r:]
        hess = normal.T @ hess @ normal
    spec = tuple(float(v) for v in np.sort(np.linalg.eigvalsh(hess)))
    return spec, r, classify(spec)


# ---------------------------------------------------------------------------
# multi-start driver


def _same_point(model, a: StationaryPoint, x: np.ndarray, e: float) -> bool:
    if abs(a.energy - e) > ENERGY_MATCH:
        return False
    return bool(np.max(np.abs(model.fingerprint(a.params) - model.fingerprint(x))) <= FINGERPRINT_MATCH)


def minimize_multistart(model: FreeEnergyModel, opts: MinimizeOptions = MinimizeOptions(),
                        starts: Optional[list] = None) -> list[StationaryPoint]:
    """Distinct converged stationary points, sorted by energy.

    Without explicit ``starts`` the isotropic state is tried first, followed by
    ``opts.n_starts`` random starts.
    """
    rng = np.random.default_rng(opts.seed)
    if starts is None:
        starts = [model.disordered()] + [sample_start(model, rng) for _ in range(opts.n_starts)]
    found: list[tuple[np.ndarray, float, float]] = []
    for x0 in starts:
        res = descend(model.value, model.gradient, x0, opts.grad_tol, opts.max_iters)
        if res.converged:
            found.append((res.x, res.value, res.grad_norm))
    if not found:
        raise NoConvergenceError(f"none of {len(starts)} starts reached gradient norm {opts.grad_tol:g}")
    found.sort(key=lambda t: t[1])
    points: list[StationaryPoint] = []
    for x, e, gn in found:
        for n, p in enumerate(points):
            if _same_point(model, p, x, e):
                points[n] = StationaryPoint(p.params, p.energy, p.grad_norm, p.hessian_spectrum,
                                            p.orbit_dim, p.kind, p.multiplicity + 1, p.summary)
                break
        else:
            spec, r, kind = analyze_point(model, x)
            points.append(StationaryPoint(x, e, gn, spec, r, kind, 1, model.summary(x)))
    return points


# ---------------------------------------------------------------------------
# rod model: census of uniaxial stationary points


@dataclass(frozen=True)
class CensusRecord:
    chi: float
    roots: tuple[tuple[float, str], ...]  # (x, kind), increasing x

    @property
    def count(self) -> int:
        return len(self.roots)


def _g(x: float, chi: float) -> float:
    # f'/nu = (3x - 1) g(x)
    return (3 * x + 1) / (x * (1 - x * x)) - chi / 2


def _bisect(fn, lo: float, hi: float, tol: float = 1e-15) -> float:
    flo = fn(lo)
    for _ in range(200):
        mid = (lo + hi) / 2
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return (lo + hi) / 2


def _classify_root(x: float, chi: float, double: bool) -> str:
    if double:
        return "saddle"
    d2 = rod_uniaxial_profile(x, chi)[2]
    if d2 > DEGENERATE_EIG:
        return "minimizer"
    if d2 < -DEGENERATE_EIG:
        return "maximizer"
    # f' = f'' = 0: no sign change of f' around an inflection point
    if abs(rod_profile_third_derivative(x)) > DEGENERATE_EIG:
        return "saddle"
    h = 1e-4
    left = rod_uniaxial_profile(x - h, chi)[1]
    right = rod_uniaxial_profile(x + h, chi)[1]
    return "saddle" if left * right > 0 else "degenerate"


def rod_stationary_census(chi: float, tangent_tol: float = 1e-6) -> CensusRecord:
    """All roots of f'(x) on (0, 1) for the uniaxial rod profile.

    Roots come from the factor (3x - 1) and from g(x) = 0, where g is convex
    with its minimum at the root x* of 6x^3 + 3x^2 = 1.  A minimum value
    within ``tangent_tol`` of zero is treated as a tangent (double) root, and
    a g-root within ``tangent_tol`` of 1/3 is merged with it.
    """
    if not chi > 0:
        raise ValueError("chi must be positive")
    xs = critical_x()
    gmin = _g(xs, chi)
    g_roots: list[tuple[float, bool]] = []
    if abs(gmin) <= tangent_tol:
        g_roots.append((xs, True))
    elif gmin < 0:
        fn = lambda x: _g(x, chi)  # noqa: E731
        g_roots.append((_bisect(fn, 1e-12, xs), False))
        g_roots.append((_bisect(fn, xs, 1 - 1e-12), False))
    roots: list[tuple[float, bool]] = []
    third = 1 / 3
    third_double = False
    for x, dbl in g_roots:
        if abs(x - third) <= tangent_tol or abs(_g(third, chi)) <= tangent_tol and abs(x - third) < 1e-3:
            third_double = True
        else:
            roots.append((x, dbl))
    roots.append((third, third_double))
    roots.sort()
    return CensusRecord(chi, tuple((x, _classify_root(x, chi, dbl)) for x, dbl in roots))


# ---------------------------------------------------------------------------
# structural checks


def verify_axisymmetry(q, tol: float = 1e-6) -> bool:
    """True when two eigenvalues of Q agree within tol. Accepts a StationaryPoint,
    5 coordinates, or a 3x3 matrix."""
    if isinstance(q, StationaryPoint):
        q = q.params
    q = np.asarray(q, dtype=float)
    if q.shape == (5,):
        q = from_coords(2, q)
    ev = np.linalg.eigvalsh(q)
    return bool(np.min(np.diff(ev)) <= tol)


def verify_shared_eigenframe(r: RTriple, tol: float = 1e-6) -> tuple[bool, tuple[float, float, float]]:
    def comm(a, b):
        return float(np.linalg.norm(a @ b - b @ a))

    norms = (comm(r.R1, r.R2), comm(r.R1, r.R3), comm(r.R2, r.R3))
    return norms[0] <= tol, norms


@dataclass(frozen=True)
class Counterexample:
    triple: RTriple
    c1: float
    c2: float
    c3: float
    r: float
    r_squared: float
    residual: float
    relative_residual: float
    commutator: float


class WindowError(ValueError):
    pass


def _el_residual(triple: RTriple, c) -> tuple[float, float]:
    """Largest traceless part of (R_i^-1 + c_i R_i) - (R_j^-1 + c_j R_j),
    absolute and relative to the largest entry of those matrices."""
    e = [np.linalg.inv(r) + ci * r for r, ci in zip((triple.R1, triple.R2, triple.R3), c)]
    worst = 0.0
    for a, b in ((0, 1), (0, 2), (1, 2)):
        d = e[a] - e[b]
        d = d - np.trace(d) / 3 * np.eye(3)
        worst = max(worst, float(np.max(np.abs(d))))
    return worst, worst / max(float(np.max(np.abs(m))) for m in e)


def construct_d2_counterexample(a: float, c: float) -> Counterexample:
    """A D2 stationary point whose R1 and R2 do not commute."""
    if not a > 0.25:
        raise WindowError(f"window violated: need a > 1/4, got a = {a}")
    if not a < 0.5:
        raise WindowError(f"window violated: need a < 1/2, got a = {a}")
    if not c >= abs(1 - 3 * a) - 1e-15:
        raise WindowError(f"window violated: need c >= |1 - 3a| = {abs(1 - 3 * a)}, got c = {c}")
    if not c < a:
        raise WindowError(f"window violated: need c < a, got c = {c}")
    lam = a * a - c * c
    r2 = (1 - 2 * a + lam) / 4 - a * (1 - 2 * a) ** 2 * lam / ((1 - 3 * a) * lam + a * (1 - 2 * a) * (4 * a - 1))
    if r2 < -1e-14:
        raise WindowError(f"window violated: no real r (r^2 = {r2})")
    r2 = max(r2, 0.0)  # r = 0 at the edge c = |1 - 3a| is the diagonal case
    r = math.sqrt(r2)
    c1 = 1 / lam
    c23 = 1 / ((1 - a) ** 2 / 4 - c * c / 4 - r2)
    r1 = np.diag([a + c, a - c, 1 - 2 * a])
    off = np.array([[0, r, 0], [r, 0, 0], [0, 0, 0]])
    base = np.diag([(1 - a - c) / 2, (1 - a + c) / 2, a])
    triple = RTriple(r1, base + off, base - off)
    res, rel = _el_residual(triple, (c1, c23, c23))
    return Counterexample(triple, c1, c23, c23, r, r2, res, rel, triple.commutator_norm())


def d2_stationary_triples(c, opts: MinimizeOptions) -> list[tuple[StationaryPoint, RTriple]]:
    model = D2Model(*c)
    return [(p, model.triple(p.params)) for p in minimize_multistart(model, opts)]
