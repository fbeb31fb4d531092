"""Parameter sweeps over the homogeneous models and phase labelling."""

from __future__ import annotations

import csv
import enum
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .models import (
    BentCoreModel,
    D2Model,
    ModelCoefficients,
    RodModel,
    TOModel,
    TOReducedModel,
    critical_chi,
    rod_uniaxial_profile,
)
from .optimize import MinimizeOptions, NoConvergenceError, minimize_multistart, rod_stationary_census

CLASSIFY_TOL = 1e-4
TIE_TOL = 1e-9
FAMILIES = ("rod", "d2", "bentcore", "to", "to_full")


class PhaseLabel(enum.Enum):
    Iso = "Iso"
    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    Biaxial = "Biaxial"
    Tetrahedral = "Tetrahedral"
    Octahedral = "Octahedral"
    FAILED = "FAILED"

    @property
    def symmetry_rank(self) -> int:
        """Lower is more symmetric; used to break energy ties."""
        return {"Iso": 0, "N1": 1, "N2": 1, "N3": 1, "Octahedral": 1, "Tetrahedral": 2, "Biaxial": 2}.get(self.value, 9)


# ---------------------------------------------------------------------------
# classification


def _eig_gaps(ev):
    ev = sorted(ev)
    return ev[1] - ev[0], ev[2] - ev[1]


def _classify_triple(eigs: list, tol: float) -> tuple[PhaseLabel, bool]:
    if all(abs(v - 1 / 3) <= tol for ev in eigs for v in ev):
        return PhaseLabel.Iso, False
    if any(min(_eig_gaps(ev)) > tol for ev in eigs):
        return PhaseLabel.Biaxial, False
    axis = []
    for ev in eigs:
        lo, hi = _eig_gaps(ev)
        ev = sorted(ev)
        # the eigenvalue that is not part of the equal pair
        axis.append(ev[2] if lo <= tol and hi > tol else ev[0] if hi <= tol and lo > tol else 1 / 3)
    big = [i for i, a in enumerate(axis) if a > 1 / 3 + tol]
    if len(big) == 1:
        return (PhaseLabel.N1, PhaseLabel.N2, PhaseLabel.N3)[big[0]], False
    return PhaseLabel.Iso, True


def classify_phase_flagged(family: str, summary: dict, tol: float = CLASSIFY_TOL) -> tuple[PhaseLabel, bool]:
    """(label, ambiguous).  Ambiguous summaries are labelled Iso."""
    if family in ("d2", "bentcore"):
        return _classify_triple([summary["R1"], summary["R2"], summary["R3"]], tol)
    if family in ("to", "to_full"):
        s, t = abs(summary["s"]), abs(summary["t"])
        if s > tol:
            return PhaseLabel.Tetrahedral, False
        if t > tol:
            return PhaseLabel.Octahedral, False
        return PhaseLabel.Iso, False
    if family == "rod":
        ev = sorted(summary["eigenvalues"])
        if max(abs(v) for v in ev) <= tol:
            return PhaseLabel.Iso, False
        if min(_eig_gaps(ev)) > tol:
            return PhaseLabel.Biaxial, False
        return PhaseLabel.N1, False
    raise ValueError(f"unknown family {family!r}")


def classify_phase(family: str, summary: dict, tol: float = CLASSIFY_TOL) -> PhaseLabel:
    label, ambiguous = classify_phase_flagged(family, summary, tol)
    if ambiguous:
        warnings.warn(f"ambiguous {family} minimizer at tolerance {tol:g}; labelled Iso", RuntimeWarning, stacklevel=2)
    return label


# ---------------------------------------------------------------------------
# sweep description


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError(f"axis {self.name}: steps must be at least 2")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class SweepSpec:
    family: str
    axis1: Axis
    axis2: Optional[Axis] = None
    fixed: dict = field(default_factory=dict)
    options: MinimizeOptions = MinimizeOptions(n_starts=8)
    tol: float = CLASSIFY_TOL

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        """Flat ``key = value`` text.  Axes are ``axis1 = name lo hi steps``;
        other numeric keys fix model coefficients."""
        vals: dict[str, str] = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            vals[k] = v
        if "family" not in vals or "axis1" not in vals:
            raise ValueError("sweep spec needs family and axis1")

        def axis(text):
            parts = text.split()
            if len(parts) != 4:
                raise ValueError(f"axis {text!r}: expected 'name lo hi steps'")
            return Axis(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))

        opt_keys = {"n_starts": int, "grad_tol": float, "max_iters": int, "seed": int}
        opts = {k: f(vals.pop(k)) for k, f in opt_keys.items() if k in vals}
        family = vals.pop("family")
        a1 = axis(vals.pop("axis1"))
        a2 = axis(vals.pop("axis2")) if "axis2" in vals else None
        tol = float(vals.pop("tol", CLASSIFY_TOL))
        fixed = {k: float(v) for k, v in vals.items()}
        return cls(family, a1, a2, fixed, MinimizeOptions(**{"n_starts": 8, **opts}), tol)

    @classmethod
    def load(cls, path) -> "SweepSpec":
        with open(path) as fh:
            return cls.parse(fh.read())


def build_model(family: str, params: dict):
    p = dict(params)
    if family == "rod":
        if "chi" in p:
            return RodModel.from_chi(p["chi"], p.get("nu", 5 / 9))
        return RodModel(p.get("nu", 5 / 9), p.get("eta", 0.0))
    if family == "d2":
        return D2Model(p.get("c1", 0.0), p.get("c2", 0.0), p.get("c3", 0.0))
    if family == "bentcore":
        return BentCoreModel(ModelCoefficients(**p))
    if family == "to":
        return TOReducedModel(p.get("mu1_bar", 0.0), p.get("mu2_bar", 0.0))
    if family == "to_full":
        return TOModel(p.get("nu", 5 / 9), p.get("eta", 1.0), p.get("mu1", 0.0), p.get("mu2", 0.0))
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class PhaseNode:
    index: int
    axis1: float
    axis2: float
    label: PhaseLabel
    energy: float
    summary: dict
    ambiguous: bool = False
    n_candidates: int = 0


@dataclass(frozen=True)
class PhaseDiagram:
    spec: SweepSpec
    nodes: tuple[PhaseNode, ...]

    def grid(self) -> np.ndarray:
        """Labels as an (n1, n2) object array."""
        n1 = self.spec.axis1.steps
        n2 = self.spec.axis2.steps if self.spec.axis2 else 1
        out = np.empty((n1, n2), dtype=object)
        for nd in self.nodes:
            out[nd.index // n2, nd.index % n2] = nd.label
        return out


def _node_params(spec: SweepSpec, v1: float, v2: Optional[float]) -> dict:
    p = dict(spec.fixed)
    p[spec.axis1.name] = float(v1)
    if spec.axis2 is not None:
        p[spec.axis2.name] = float(v2)
    return p


def solve_node(spec: SweepSpec, index: int) -> PhaseNode:
    n2 = spec.axis2.steps if spec.axis2 else 1
    i, j = divmod(index, n2)
    v1 = spec.axis1.values[i]
    v2 = spec.axis2.values[j] if spec.axis2 else 0.0
    model = build_model(spec.family, _node_params(spec, v1, v2))
    try:
        points = minimize_multistart(model, spec.options)
    except NoConvergenceError:
        return PhaseNode(index, float(v1), float(v2), PhaseLabel.FAILED, math.nan, {})
    minima = [p for p in points if p.kind in ("minimizer", "degenerate")] or points
    labelled = [(p, *classify_phase_flagged(spec.family, p.summary, spec.tol)) for p in minima]
    best_e = min(p.energy for p, _, _ in labelled)
    tied = [t for t in labelled if t[0].energy <= best_e + TIE_TOL]
    p, label, amb = min(tied, key=lambda t: (t[1].symmetry_rank, t[0].energy))
    return PhaseNode(index, float(v1), float(v2), label, float(p.energy), p.summary, amb, len(points))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QENTROPY_THREADS", "1")))
    except ValueError:
        return 1


def sweep(spec: SweepSpec, workers: Optional[int] = None) -> PhaseDiagram:
    """Lowest-energy phase at every grid node.  Nodes that fail to converge
    are recorded with label FAILED."""
    n = spec.axis1.steps * (spec.axis2.steps if spec.axis2 else 1)
    workers = _threads() if workers is None else max(1, workers)
    if workers == 1:
        nodes = [solve_node(spec, k) for k in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            nodes = list(ex.map(solve_node, [spec] * n, range(n)))
    nodes.sort(key=lambda nd: nd.index)
    return PhaseDiagram(spec, tuple(nodes))


def transition_point(values, labels, before: PhaseLabel, after_set) -> Optional[tuple[float, float]]:
    """First adjacent pair (v_i, v_{i+1}) where the label leaves ``before``
    for one in ``after_set``."""
    for k in range(len(values) - 1):
        if labels[k] == before and labels[k + 1] in after_set:
            return float(values[k]), float(values[k + 1])
    return None


# ---------------------------------------------------------------------------
# rod model: coexistence of the isotropic and nematic branches


def rod_coexistence_chi(tol: float = 1e-12) -> float:
    """chi at which the nematic branch x3 and the isotropic state 1/3 have equal
    reduced energy, found by bisection between the two stationary-point criticals."""

    def gap(chi):
        roots = rod_stationary_census(chi, tangent_tol=0.0).roots
        x3 = roots[-1][0]
        return rod_uniaxial_profile(x3, chi)[0] - rod_uniaxial_profile(1 / 3, chi)[0]

    lo, hi = critical_chi()
    lo += 1e-9
    hi -= 1e-9
    if not (gap(lo) > 0 > gap(hi)):
        raise RuntimeError("coexistence point not bracketed")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


# ---------------------------------------------------------------------------
# output


def _flatten(summary: dict) -> dict:
    out = {}
    for k, v in summary.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            for i, x in enumerate(v):
                out[f"{k}_{i}"] = x
        else:
            out[k] = v
    return out


def emit_csv(d: PhaseDiagram, path) -> None:
    flat = [_flatten(nd.summary) for nd in d.nodes]
    keys: list[str] = []
    for f in flat:
        keys += [k for k in f if k not in keys]
    a2 = d.spec.axis2.name if d.spec.axis2 else "axis2"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([d.spec.axis1.name, a2, "label", "energy", "ambiguous", *keys])
        for nd, f in zip(d.nodes, flat):
            w.writerow([f"{nd.axis1:.9g}", f"{nd.axis2:.9g}", nd.label.value, f"{nd.energy:.9g}",
                        int(nd.ambiguous), *(f"{f[k]:.9g}" if k in f else "" for k in keys)])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["label"] = PhaseLabel(r["label"])
    return rows


def emit_plot_script(d: PhaseDiagram, path) -> None:
    labels = list(PhaseLabel)
    code = {lab: i for i, lab in enumerate(labels)}
    a1 = d.spec.axis1.name
    a2 = d.spec.axis2.name if d.spec.axis2 else ""
    lines = [
        "# gnuplot script: phase map",
        "set terminal pngcairo size 800,640",
        f"set output '{os.path.splitext(os.path.basename(str(path)))[0]}.png'",
        f"set xlabel '{a1}'",
        f"set ylabel '{a2}'" if a2 else "unset ytics",
        f"set cbrange [-0.5:{len(labels) - 0.5}]",
        f"set palette maxcolors {len(labels)}",
        "set cbtics (" + ", ".join(f"'{lab.value}' {i}" for i, lab in enumerate(labels)) + ")",
        "$phases << EOD",
    ]
    lines += [f"{nd.axis1:.9g} {nd.axis2:.9g} {code[nd.label]}" for nd in d.nodes]
    lines += ["EOD", "plot $phases using 1:2:3 with points pointtype 5 pointsize 2 palette notitle", ""]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def with_options(spec: SweepSpec, **kw) -> SweepSpec:
    return replace(spec, options=replace(spec.options, **kw))
