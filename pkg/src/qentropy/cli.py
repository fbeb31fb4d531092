"""Command-line front end: ``qentropy <subcommand> ...``.

Exit codes: 0 success, 1 a numeric check failed, 2 bad usage or input.
Error lines go to stderr prefixed with ``ERROR:``.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import acceptance
from . import quasi_entropy as qe
from .cov_oracle import build_cov_w1, build_cov_w2_sym, dump_blocks_csv, logdet_pd, w1_averages_from
from .models import ModelCoefficients, critical_chi, critical_eta
from .optimize import (
    MinimizeOptions,
    NoConvergenceError,
    WindowError,
    construct_d2_counterexample,
    minimize_multistart,
    rod_stationary_census,
)
from .original_entropy import calibrate_nu, rod_entropy_second_derivative
from .phase_diagram import SweepSpec, build_model, emit_csv, emit_plot_script, sweep, with_options
from .tensor_core import TensorError, parse_tensor_file


class UsageError(Exception):
    pass


def fmt(v: float) -> str:
    return f"{v:.9g}"


def _vec(v) -> str:
    return " ".join(fmt(float(x)) for x in np.ravel(v))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"ERROR: {message}", file=sys.stderr)
        sys.exit(2)


# ---------------------------------------------------------------------------
# helpers


def _load_params(group: str, path: str) -> qe.OrderParameterSet:
    try:
        with open(path) as fh:
            members = parse_tensor_file(fh)
    except OSError as e:
        raise UsageError(str(e)) from None
    return qe.OrderParameterSet(group, members)


def _load_coeffs(path: Optional[str], overrides: Sequence[str]) -> ModelCoefficients:
    text = ""
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as e:
            raise UsageError(str(e)) from None
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        text += "\n" + item
    return ModelCoefficients.parse(text)


def model_from_coefficients(family: str, c: ModelCoefficients):
    if family == "rod":
        return build_model("rod", {"nu": c.nu, "eta": c.eta if c.chi is None else c.chi * c.nu})
    if family == "d2":
        c1, c2, c3 = c.d2_coefficients()
        return build_model("d2", {"c1": c1, "c2": c2, "c3": c3})
    if family == "bentcore":
        return build_model("bentcore", {f: getattr(c, f) for f in ("nu", "eta", "c01", "c02", "c03", "c04")})
    if family == "to":
        m1, m2 = c.reduced_mu()
        return build_model("to", {"mu1_bar": m1, "mu2_bar": m2})
    if family == "to_full":
        if c.mu1 is None or c.mu2 is None:
            raise UsageError("to_full needs mu1 and mu2")
        return build_model("to_full", {"nu": c.nu, "eta": c.eta, "mu1": c.mu1, "mu2": c.mu2})
    raise UsageError(f"unknown model {family!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(args) -> int:
    params = _load_params(args.group, args.params_file)
    v = qe.quasi_entropy(params)
    if not v.in_domain:
        print("in_domain false")
        print("ERROR: parameters lie outside the quasi-entropy domain", file=sys.stderr)
        return 1
    print(f"quasi_entropy {fmt(v.value)}")
    return 0


def cmd_grad_check(args) -> int:
    params = _load_params(args.group, args.params_file)
    g = params.group
    x = params.to_vector()
    if not qe.quasi_entropy_vec(g, x).in_domain:
        print("ERROR: parameters lie outside the quasi-entropy domain", file=sys.stderr)
        return 2
    ga = qe.quasi_entropy_gradient_vec(g, x)
    h = 1e-5
    gf = np.array([
        (qe.quasi_entropy_vec(g, x + h * e).value - qe.quasi_entropy_vec(g, x - h * e).value) / (2 * h)
        for e in np.eye(len(x))
    ])
    rel = float(np.linalg.norm(ga - gf) / max(1.0, np.linalg.norm(ga)))
    kind = "analytic" if g in ("Dinf", "D2", "Cinf", "C2") else "richardson"
    print(f"gradient ({kind}) {_vec(ga)}")
    print(f"central_difference {_vec(gf)}")
    print(f"relative_difference {fmt(rel)}")
    ok = rel <= args.tol
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_minimize(args) -> int:
    coeffs = _load_coeffs(args.coeffs, args.set)
    model = model_from_coefficients(args.model, coeffs)
    opts = MinimizeOptions(args.n_starts, args.grad_tol, args.max_iters, args.seed)
    try:
        points = minimize_multistart(model, opts)
    except NoConvergenceError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 1
    for n, p in enumerate(points):
        print(f"point {n} energy {fmt(p.energy)} kind {p.kind} grad_norm {fmt(p.grad_norm)} "
              f"starts {p.multiplicity} orbit_dim {p.orbit_dim}")
        print(f"  hessian {_vec(p.hessian_spectrum)}")
        for k, v in p.summary.items():
            print(f"  {k} {_vec(v)}")
    return 0


def cmd_census(args) -> int:
    rec = rod_stationary_census(args.chi, args.tangent_tol)
    print(f"chi {fmt(rec.chi)} roots {rec.count}")
    for x, kind in rec.roots:
        print(f"  x {fmt(x)} {kind}")
    return 0


def cmd_critical(args) -> int:
    c1, c2 = critical_chi()
    e1, e2 = critical_eta(args.nu)
    print(f"chi1_half {fmt(c1 / 2)}")
    print(f"chi2_half {fmt(c2 / 2)}")
    print(f"eta1 {fmt(e1)}")
    print(f"eta2 {fmt(e2)}")
    return 0


def cmd_calibrate(args) -> int:
    print(f"nu {fmt(calibrate_nu())}")
    print(f"f_ent_second_derivative {fmt(rod_entropy_second_derivative(1 / 3))}")
    return 0


def cmd_counterexample(args) -> int:
    try:
        ce = construct_d2_counterexample(args.a, args.c)
    except WindowError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 2
    for name in ("R1", "R2", "R3"):
        m = getattr(ce.triple, name)
        print(f"{name} " + " | ".join(_vec(row) for row in m))
    print(f"c {fmt(ce.c1)} {fmt(ce.c2)} {fmt(ce.c3)}")
    print(f"r {fmt(ce.r)}")
    print(f"r_squared {fmt(ce.r_squared)}")
    print(f"euler_lagrange_residual {fmt(ce.residual)}")
    print(f"commutator_norm {fmt(ce.commutator)}")
    ok = ce.relative_residual <= 1e-10
    if not ok:
        print(f"ERROR: Euler-Lagrange residual {ce.residual:.3g} too large", file=sys.stderr)
    return 0 if ok else 1


def cmd_oracle_check(args) -> int:
    g = qe.canonical_group(args.group)
    rng = np.random.default_rng(args.seed)
    if g in qe.Q2_GROUPS:
        worst = 0.0
        for _ in range(args.n):
            p = qe.OrderParameterSet.from_vector(g, acceptance.random_in_domain(g, rng))
            v = qe.quasi_entropy(p).value
            o = logdet_pd(build_cov_w1(w1_averages_from(p)))
            worst = max(worst, abs(v - o) / max(1.0, abs(v)))
        ok = worst <= 1e-10
        print(f"group {g} points {args.n} max_relative_difference {fmt(worst)}")
    else:
        worst = 0.0
        for _ in range(args.n):
            ps = [qe.OrderParameterSet.from_vector(g, acceptance.random_in_domain(g, rng, 0.8)) for _ in range(2)]
            ex = [qe.quasi_entropy(p).value for p in ps]
            orc = [build_cov_w2_sym(g, p).neg_logdet() for p in ps]
            worst = max(worst, np.inf if None in orc else abs((orc[0] - orc[1]) - (ex[0] - ex[1])))
        blocks = build_cov_w2_sym(g, ps[0])
        ok = worst <= 1e-8
        print(f"group {g} pairs {args.n} max_difference_of_differences {fmt(worst)}")
        print(f"block_sizes {' '.join(map(str, blocks.shapes()))}")
        print(f"constant_offset {fmt(blocks.neg_logdet() - qe.quasi_entropy(ps[0]).value)}")
        if args.dump_blocks:
            dump_blocks_csv(blocks, args.dump_blocks)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    try:
        spec = SweepSpec.load(args.spec_file)
    except OSError as e:
        raise UsageError(str(e)) from None
    if args.seed is not None:
        spec = with_options(spec, seed=args.seed)
    d = sweep(spec)
    emit_csv(d, f"{args.out}.csv")
    emit_plot_script(d, f"{args.out}.gp")
    counts: dict[str, int] = {}
    for nd in d.nodes:
        counts[nd.label.value] = counts.get(nd.label.value, 0) + 1
    print(f"nodes {len(d.nodes)} " + " ".join(f"{k} {v}" for k, v in sorted(counts.items())))
    print(f"wrote {args.out}.csv {args.out}.gp")
    return 0


def cmd_verify_all(args) -> int:
    ok = True
    for n, check in enumerate(acceptance.ALL_CHECKS, start=1):
        if n in args.skip:
            print(f"SKIP [{n}]")
            continue
        res = check()
        print(res.line(), flush=True)
        ok &= res.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="qentropy", description="Quasi-entropy free energies for rigid molecules.")
    top.add_argument("--seed", type=int, default=None, help="random seed for sampled starts and points")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="evaluate the quasi-entropy of a parameter file")
    p.add_argument("--group", required=True)
    p.add_argument("--params-file", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="compare the gradient with central differences")
    p.add_argument("--group", required=True)
    p.add_argument("--params-file", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("minimize", help="multi-start minimization of a model energy")
    p.add_argument("--model", required=True, choices=["rod", "d2", "bentcore", "to", "to_full"])
    p.add_argument("--coeffs", help="key = value coefficient file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a coefficient")
    p.add_argument("--n-starts", type=int, default=20)
    p.add_argument("--grad-tol", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=5000)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("census", help="uniaxial stationary points of the rod model")
    p.add_argument("--chi", type=float, required=True)
    p.add_argument("--tangent-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("critical", help="critical interaction strengths of the rod model")
    p.add_argument("--nu", type=float, default=5 / 9)
    p.set_defaults(func=cmd_critical)

    p = sub.add_parser("calibrate", help="nu matching the maximum-entropy curvature at isotropy")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("counterexample", help="D2 stationary point with non-commuting R1, R2")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("oracle-check", help="explicit formula vs covariance oracle")
    p.add_argument("--group", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--dump-blocks", metavar="CSV", help="write the oracle blocks of one sample point")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("sweep", help="phase-diagram sweep")
    p.add_argument("--spec-file", required=True)
    p.add_argument("--out", required=True, help="output prefix for .csv and .gp files")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-all", help="run every acceptance check")
    p.add_argument("--skip", type=int, nargs="*", default=[], metavar="N")
    p.set_defaults(func=cmd_verify_all)
    return top


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("minimize", "oracle-check") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (UsageError, TensorError, ValueError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"ERROR: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
