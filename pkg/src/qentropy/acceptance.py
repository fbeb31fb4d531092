"""The numbered acceptance checks, shared by ``qentropy verify-all`` and the test suite.

Each check returns a CheckResult; a check passes only when every numeric
condition holds and it finished inside its time budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import quasi_entropy as qe
from ._descent import descend
from .cov_oracle import build_cov_w1, build_cov_w2_sym, logdet_pd, w1_averages_from
from .models import (
    BentCoreModel,
    D2Model,
    ModelCoefficients,
    RodModel,
    TOModel,
    TOReducedModel,
    critical_chi,
    critical_eta,
    to_reduced_energy,
)
from .optimize import (
    MinimizeOptions,
    construct_d2_counterexample,
    minimize_multistart,
    rod_stationary_census,
    sample_start,
    verify_axisymmetry,
    verify_shared_eigenframe,
    WindowError,
)
from .original_entropy import calibrate_nu, rod_entropy_second_derivative
from .phase_diagram import Axis, PhaseLabel, SweepSpec, sweep
from .tensor_core import Rotation, rotate_full

# placeholder bent-core coefficients (chosen so the D2 reduction has an ordered minimizer)
BENTCORE_DEMO = ModelCoefficients(nu=5 / 9, eta=1.0, c01=1.0, c02=-115 / 9, c03=-5.0, c04=-5 / 3)


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} [{self.number}] {self.name}: {self.detail} ({self.seconds:.2f} s, budget {self.budget:g} s)"


def _timed(number: int, name: str, budget: float, body: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = body()
    dt = time.perf_counter() - t0
    if dt > budget:
        detail += "; over time budget"
    return CheckResult(number, name, ok and dt <= budget, detail, dt, budget)


# ---------------------------------------------------------------------------
# random in-domain points


def random_in_domain(group: str, rng: np.random.Generator, max_frac: float = 0.95) -> np.ndarray:
    """Uniform fraction of the way from the origin to the domain boundary
    along a random direction (the domain is convex and contains the origin)."""
    d = rng.normal(size=qe.group_dim(group))
    d /= np.linalg.norm(d)
    hi = 1.0
    while qe.quasi_entropy_vec(group, hi * d).in_domain:
        hi *= 2
    lo = 0.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if qe.quasi_entropy_vec(group, mid * d).in_domain:
            lo = mid
        else:
            hi = mid
    return rng.uniform(0.0, max_frac) * lo * d


def _rotate_vec(group: str, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    return qe.pack(group, {k: rotate_full(v, p) for k, v in qe.unpack(group, x).items()})


# ---------------------------------------------------------------------------
# 1-3: rod model closed forms


def check_critical() -> CheckResult:
    def body():
        c1, c2 = critical_chi()
        e1, e2 = critical_eta(5 / 9)
        ok = abs(c1 / 2 - 6.532952) <= 1e-5 and abs(c2 / 2 - 6.75) <= 1e-12
        ok &= abs(e1 - 7.258835) <= 1e-5 and abs(e2 - 7.5) <= 1e-5
        return ok, f"chi/2 = {c1 / 2:.9g}, {c2 / 2:.9g}; eta = {e1:.9g}, {e2:.9g}"

    return _timed(1, "critical values", 1.0, body)


def check_calibrate() -> CheckResult:
    def body():
        nu = calibrate_nu()
        f2 = rod_entropy_second_derivative(1 / 3)
        ok = abs(nu - 5 / 9) <= 1e-9 and abs(f2 - 11.25) <= 1e-8
        return ok, f"nu = {nu:.12g}, f''(1/3) = {f2:.12g}"

    return _timed(2, "calibrated nu", 1.0, body)


CENSUS_EXPECTED = {
    12.0: ["minimizer"],
    13.065904: ["minimizer", "saddle"],
    13.3: ["minimizer", "maximizer", "minimizer"],
    13.5: ["saddle", "minimizer"],
    14.0: ["minimizer", "maximizer", "minimizer"],
}


def check_census() -> CheckResult:
    def body():
        bad = []
        for chi, kinds in CENSUS_EXPECTED.items():
            rec = rod_stationary_census(chi)
            got = [k for _, k in rec.roots]
            if got != kinds:
                bad.append(f"chi={chi}: {got}")
        # the saddle at chi_1 sits at the root of 6x^3 + 3x^2 = 1
        x_sad = rod_stationary_census(13.065904).roots[1][0]
        if abs(x_sad - 0.4246) > 1e-4:
            bad.append(f"x* = {x_sad}")
        counts = [rod_stationary_census(c).count for c in CENSUS_EXPECTED]
        return not bad, f"counts {counts}" + (f"; mismatches {bad}" if bad else "")

    return _timed(3, "rod stationary census", 1.0, body)


# ---------------------------------------------------------------------------
# 4-6: structural checks


def check_axisymmetry(n_per_chi: int = 100, seed: int = 0) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        n_conv = n_sym = n_total = 0
        for chi in (13.3, 14.0):
            model = RodModel.from_chi(chi)
            for _ in range(n_per_chi):
                n_total += 1
                res = descend(model.value, model.gradient, sample_start(model, rng))
                if res.converged:
                    n_conv += 1
                    n_sym += verify_axisymmetry(res.x)
        ok = n_conv == n_total and n_sym == n_conv
        return ok, f"{n_conv}/{n_total} converged, {n_sym} axisymmetric"

    return _timed(4, "rod minimizers are axisymmetric", 30.0, body)


def random_small_c(rng: np.random.Generator) -> tuple[float, float, float]:
    """Coefficient triple with min(c) <= 4."""
    while True:
        c = tuple(float(v) for v in rng.uniform(-4.0, 16.0, size=3))
        if min(c) <= 4:
            return c


def check_shared_eigenframe(n_triples: int = 50, seed: int = 0) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        worst, n_pts = 0.0, 0
        opts = MinimizeOptions(n_starts=8, seed=seed)
        for k in range(n_triples):
            c = random_small_c(rng)
            model = D2Model(*c)
            for p in minimize_multistart(model, MinimizeOptions(opts.n_starts, seed=seed + k)):
                n_pts += 1
                worst = max(worst, verify_shared_eigenframe(model.triple(p.params))[1][0])
        return worst <= 1e-6, f"{n_pts} stationary points over {n_triples} triples, max |[R1,R2]| = {worst:.3g}"

    return _timed(5, "D2 shared eigenframe when min c <= 4", 60.0, body)


def check_counterexample() -> CheckResult:
    def body():
        ce = construct_d2_counterexample(1 / 3, 0.2)
        rejected = False
        try:
            construct_d2_counterexample(0.2, 0.5)
        except WindowError:
            rejected = True
        c_ok = True
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.uniform(0.26, 0.49)
            c = rng.uniform(abs(1 - 3 * a), a)
            try:
                s = construct_d2_counterexample(a, c)
            except WindowError:
                continue
            c_ok &= min(s.c1, s.c2, s.c3) > 4
        r2_ok = abs(ce.r_squared - 1 / 30) <= 1e-12
        ok = r2_ok and ce.residual <= 1e-10 and ce.commutator >= 0.01 and rejected and c_ok
        return ok, (f"r^2 = {ce.r_squared:.12g} (expected 1/30 = {1 / 30:.12g}), residual = {ce.residual:.3g}, "
                    f"|[R1,R2]| = {ce.commutator:.6g}, window rejection {rejected}, all c > 4 {c_ok}")

    return _timed(6, "D2 counterexample", 1.0, body)


# ---------------------------------------------------------------------------
# 7: oracle equivalence


def check_oracles(n_q2: int = 100, n_q4: int = 20, seed: int = 0) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        worst2 = 0.0
        for g in qe.Q2_GROUPS:
            for _ in range(n_q2):
                x = random_in_domain(g, rng)
                params = qe.OrderParameterSet.from_vector(g, x)
                v = qe.quasi_entropy(params).value
                o = logdet_pd(build_cov_w1(w1_averages_from(params)))
                worst2 = max(worst2, abs(v - o) / max(1.0, abs(v)))
        worst4 = 0.0
        for g in qe.Q4_GROUPS:
            for _ in range(n_q4):
                xs = [random_in_domain(g, rng, 0.8) for _ in range(2)]
                ps = [qe.OrderParameterSet.from_vector(g, x) for x in xs]
                ex = [qe.quasi_entropy(p).value for p in ps]
                orc = [build_cov_w2_sym(g, p).neg_logdet() for p in ps]
                if None in orc:
                    worst4 = math.inf
                    continue
                worst4 = max(worst4, abs((orc[0] - orc[1]) - (ex[0] - ex[1])))
        return worst2 <= 1e-10 and worst4 <= 1e-8, f"q2 max rel diff {worst2:.3g}, q4 max diff-of-diff {worst4:.3g}"

    return _timed(7, "explicit formulas vs covariance oracles", 30.0, body)


# ---------------------------------------------------------------------------
# 8: property battery


def _min_block_eig(group: str, x: np.ndarray) -> float:
    return min(np.linalg.eigvalsh(m)[0] for _, m in qe.explicit_blocks(group, qe.unpack(group, x)))


def _fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def property_battery(seed: int = 0) -> dict[str, tuple[bool, str]]:
    rng = np.random.default_rng(seed)
    groups = qe.Q2_GROUPS + qe.Q4_GROUPS
    out = {}

    worst = 0.0
    for g in groups:
        for _ in range(25):
            x = random_in_domain(g, rng)
            p = Rotation.random(rng).m
            a, b = qe.quasi_entropy_vec(g, x).value, qe.quasi_entropy_vec(g, _rotate_vec(g, x, p)).value
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    out["rotation invariance"] = (worst <= 1e-9, f"max rel change {worst:.3g}")

    gap_min = math.inf
    for g in groups:
        for _ in range(25):
            x, y = random_in_domain(g, rng), random_in_domain(g, rng)
            if np.linalg.norm(x - y) < 1e-3:
                continue
            f = [qe.quasi_entropy_vec(g, v).value for v in (x, y, (x + y) / 2)]
            gap_min = min(gap_min, (f[0] + f[1]) / 2 - f[2])
    out["midpoint strict convexity"] = (gap_min >= 1e-12, f"smallest midpoint gap {gap_min:.3g}")

    ok, rises = True, []
    for g in groups:
        d = rng.normal(size=qe.group_dim(g))
        d /= np.linalg.norm(d)

        def t_at(target):
            lo, hi = 0.0, 1.0
            while qe.quasi_entropy_vec(g, hi * d).in_domain:
                hi *= 2
            for _ in range(200):
                mid = (lo + hi) / 2
                if qe.quasi_entropy_vec(g, mid * d).in_domain and _min_block_eig(g, mid * d) > target:
                    lo = mid
                else:
                    hi = mid
            return lo

        vals = [qe.quasi_entropy_vec(g, t_at(e) * d).value for e in (1e-2, 1e-4, 1e-6)]
        rise = vals[2] - vals[0]
        rises.append(rise)
        ok &= vals[0] < vals[1] < vals[2] and rise >= 0.9 * math.log(1e4)
        ok &= not qe.quasi_entropy_vec(g, 1.01 * t_at(0.0) * d + 1e-9 * d).in_domain
    out["barrier divergence"] = (ok, f"value rise from eigenvalue 1e-2 to 1e-6: min {min(rises):.3g} (needs >= 0.9 log 1e4)")

    worst = 0.0
    for g in groups:
        for _ in range(5):
            x = random_in_domain(g, rng, 0.7)
            ga = qe.quasi_entropy_gradient_vec(g, x)
            gf = _fd_grad(lambda z: qe.quasi_entropy_vec(g, z).value, x, 1e-5)
            worst = max(worst, float(np.linalg.norm(ga - gf) / max(1.0, np.linalg.norm(ga))))
    models = [RodModel(5 / 9, 7.0), D2Model(5.0, 2.0, -1.0), TOModel(5 / 9, 1.0, 20.0, 10.0),
              TOReducedModel(30.0, 10.0), BentCoreModel(BENTCORE_DEMO)]
    for m in models:
        for _ in range(3):
            x = sample_start(m, rng) * 0.7
            ga = m.gradient(x)
            gf = _fd_grad(m.value, x, 1e-5)
            worst = max(worst, float(np.linalg.norm(ga - gf) / max(1.0, np.linalg.norm(ga))))
    out["gradient vs finite difference"] = (worst <= 1e-6, f"max rel diff {worst:.3g}")

    worst = 0.0
    for _ in range(5):
        # start the inner descent away from zero so reaching zero is not automatic
        x = random_in_domain("D2", rng, 0.8)
        res = qe.marginal_minimize("C2_over_M22", np.concatenate([np.zeros(3), x]), start=0.02 * rng.normal(size=5))
        worst = max(worst, float(np.max(np.abs(res.free))))
        res = qe.marginal_minimize("Cinf_over_Q2", np.zeros(3), start=0.02 * rng.normal(size=5))
        worst = max(worst, float(np.max(np.abs(res.free))))
    out["marginal minimizers zero vanishing tensors"] = (worst <= 1e-6, f"max free component {worst:.3g}")

    worst = 0.0
    for _ in range(200):
        s, t = rng.uniform(-0.4, 0.4), rng.uniform(-0.5, 0.9)
        mu1, mu2 = rng.uniform(0, 60), rng.uniform(0, 30)
        a, b = to_reduced_energy(s, t, mu1, mu2), to_reduced_energy(-s, t, mu1, mu2)
        if a.in_domain != b.in_domain:
            worst = math.inf
        elif a.in_domain:
            worst = max(worst, abs(a.value - b.value))
    out["F(s,t) even in s"] = (worst <= 1e-12, f"max |F(s,t) - F(-s,t)| {worst:.3g}")
    return out


def check_properties(seed: int = 0) -> CheckResult:
    def body():
        res = property_battery(seed)
        failed = [k for k, (ok, _) in res.items() if not ok]
        detail = "; ".join(f"{k}: {d}" for k, (_, d) in res.items())
        return not failed, detail

    return _timed(8, "property battery", 60.0, body)


# ---------------------------------------------------------------------------
# 9: T/O phase diagram


TO_SWEEP = SweepSpec(
    "to",
    Axis("mu1_bar", 0.0, 60.0, 21),
    Axis("mu2_bar", 0.0, 30.0, 21),
    options=MinimizeOptions(n_starts=6, seed=0),
)


def tetrahedral_onsets(diagram) -> list[float]:
    """Smallest mu1_bar labelled Tetrahedral in each mu2_bar column (inf if none)."""
    grid = diagram.grid()
    mu1 = diagram.spec.axis1.values
    out = []
    for j in range(grid.shape[1]):
        rows = [i for i in range(grid.shape[0]) if grid[i, j] == PhaseLabel.Tetrahedral]
        out.append(float(mu1[rows[0]]) if rows else math.inf)
    return out


def check_to_diagram(spec: SweepSpec = TO_SWEEP) -> CheckResult:
    def body():
        d = sweep(spec)
        grid = d.grid()
        mu2 = spec.axis2.values
        failed = sum(nd.label == PhaseLabel.FAILED for nd in d.nodes)
        row0 = list(grid[0])
        oct_at = next((float(mu2[j]) for j in range(1, len(row0))
                       if row0[j - 1] == PhaseLabel.Iso and row0[j] == PhaseLabel.Octahedral), None)
        onsets = tetrahedral_onsets(d)
        n = len(onsets)
        levels = [0, n // 2, n - 1]
        picked = [onsets[k] for k in levels]
        mono = all(math.isfinite(v) for v in picked) and picked[0] >= picked[1] >= picked[2]
        ok = failed == 0 and oct_at is not None and mono
        return ok, (f"Iso->Octahedral at mu1_bar=0 near mu2_bar={oct_at}; tetrahedral onset mu1_bar at "
                    f"mu2_bar={[float(mu2[k]) for k in levels]}: {picked}; failed nodes {failed}")

    return _timed(9, "T/O phase diagram", 300.0, body)


# ---------------------------------------------------------------------------
# 10: bent-core reduction


def check_bentcore(coeffs: ModelCoefficients = BENTCORE_DEMO, n_starts: int = 3, seed: int = 0) -> CheckResult:
    def body():
        bc = BentCoreModel(coeffs)
        d2 = D2Model(*coeffs.d2_coefficients())
        opts = MinimizeOptions(n_starts=n_starts, seed=seed)
        bpts = [p for p in minimize_multistart(bc, opts) if p.kind != "saddle"]
        dpts = [p for p in minimize_multistart(d2, MinimizeOptions(n_starts=8, seed=seed)) if p.kind != "saddle"]
        q1 = max(float(np.linalg.norm(p.params[:3])) for p in bpts)
        fb = np.concatenate([np.linalg.eigvalsh(r) for r in
                             (lambda t: (t.R1, t.R2, t.R3))(bc.triple(bpts[0].params))])
        fd = np.concatenate([np.linalg.eigvalsh(r) for r in
                             (lambda t: (t.R1, t.R2, t.R3))(d2.triple(dpts[0].params))])
        diff = float(np.max(np.abs(fb - fd)))
        ordered = float(np.max(np.abs(fd - 1 / 3)))
        ok = q1 <= 1e-6 and diff <= 1e-6
        return ok, f"max |Q1| = {q1:.3g}, R-eigenvalue mismatch {diff:.3g} (distance from isotropic {ordered:.3g})"

    return _timed(10, "bent-core reduces to D2 with Q1 = 0", 60.0, body)


ALL_CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_critical,
    check_calibrate,
    check_census,
    check_axisymmetry,
    check_shared_eigenframe,
    check_counterexample,
    check_oracles,
    check_properties,
    check_to_diagram,
    check_bentcore,
)


def run_all(skip: tuple[int, ...] = ()) -> list[CheckResult]:
    return [c() for n, c in enumerate(ALL_CHECKS, start=1) if n not in skip]
