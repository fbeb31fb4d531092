"""Homogeneous free energies built on the quasi-entropy.

Each model is quasi-entropy (times nu) plus a quadratic interaction.  The
``*Model`` classes expose a flat coordinate vector, a value that is ``None``
outside the domain, and an analytic gradient; the optimizers in
``optimize`` only talk to that interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from . import quasi_entropy as qe
from .cov_oracle import logdet_pd
from .quasi_entropy import QuasiEntropyValue, OUT_OF_DOMAIN
from .tensor_core import from_coords, rotate_full, to_coords

I3 = np.eye(3)
EnergyValue = QuasiEntropyValue


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class ModelCoefficients:
    nu: float = 5 / 9
    eta: float = 0.0
    c01: Optional[float] = None
    c02: Optional[float] = None
    c03: Optional[float] = None
    c04: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    c3: Optional[float] = None
    mu1: Optional[float] = None
    mu2: Optional[float] = None
    chi: Optional[float] = None
    mu1_bar: Optional[float] = None
    mu2_bar: Optional[float] = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if self._have_bentcore() and None not in (self.c1, self.c2, self.c3):
            for mine, derived in zip((self.c1, self.c2, self.c3), self._derived_d2()):
                if not math.isclose(mine, derived, rel_tol=1e-9, abs_tol=1e-12):
                    raise ValueError("c1, c2, c3 are inconsistent with c02, c03, c04, eta, nu")

    def _have_bentcore(self) -> bool:
        return None not in (self.c02, self.c03, self.c04)

    def _derived_d2(self) -> tuple[float, float, float]:
        k = -self.eta / self.nu
        return (k * (self.c02 - self.c04), k * (self.c03 - self.c04), k * self.c04)

    def d2_coefficients(self) -> tuple[float, float, float]:
        if None not in (self.c1, self.c2, self.c3):
            return (self.c1, self.c2, self.c3)
        if self._have_bentcore():
            return self._derived_d2()
        raise ValueError("need c1, c2, c3 or c02, c03, c04")

    def reduced_mu(self) -> tuple[float, float]:
        if None not in (self.mu1_bar, self.mu2_bar):
            return (self.mu1_bar, self.mu2_bar)
        if None not in (self.mu1, self.mu2):
            return (self.eta * self.mu1 / (6 * self.nu), 3 * self.eta * self.mu2 / (10 * self.nu))
        raise ValueError("need mu1_bar, mu2_bar or mu1, mu2")

    def rod_chi(self) -> float:
        return self.chi if self.chi is not None else self.eta / self.nu

    # flat key = value text ------------------------------------------------
    @classmethod
    def parse(cls, text: str) -> "ModelCoefficients":
        known = {f.name for f in fields(cls)}
        vals = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in known:
                raise ValueError(f"line {n}: unknown coefficient {k!r}")
            try:
                vals[k] = float(v)
            except ValueError:
                raise ValueError(f"line {n}: {v!r} is not a number") from None
        return cls(**vals)

    @classmethod
    def load(cls, path) -> "ModelCoefficients":
        with open(path) as fh:
            return cls.parse(fh.read())

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self) if getattr(self, f.name) is not None)


# ---------------------------------------------------------------------------
# R-triples (second moments of the three body axes)


@dataclass(frozen=True)
class RTriple:
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray

    def __post_init__(self):
        for name in ("R1", "R2", "R3"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (3, 3) or np.max(np.abs(m - m.T)) > 1e-10:
                raise ValueError(f"{name} must be a symmetric 3x3 matrix")
            if abs(np.trace(m) - 1) > 1e-10 or np.linalg.eigvalsh(m)[0] <= 0:
                raise ValueError(f"{name} must be positive definite with unit trace")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if np.max(np.abs(self.R1 + self.R2 + self.R3 - I3)) > 1e-10:
            raise ValueError("R1 + R2 + R3 must equal the identity")

    @classmethod
    def from_d2(cls, q2: np.ndarray, m12: np.ndarray) -> "RTriple":
        half = I3 / 3 - q2 / 2
        return cls(q2 + I3 / 3, half + m12, half - m12)

    def to_d2(self) -> tuple[np.ndarray, np.ndarray]:
        """(Q2, M12) with R1 = Q2 + I/3 and M12 = (R2 - R3)/2."""
        return self.R1 - I3 / 3, (self.R2 - self.R3) / 2

    def commutator_norm(self) -> float:
        return float(np.linalg.norm(self.R1 @ self.R2 - self.R2 @ self.R1))


# ---------------------------------------------------------------------------
# plain functions


def rod_energy(Q, coeffs: ModelCoefficients) -> EnergyValue:
    """nu q2(Q) - (eta/2)|Q|^2."""
    q = np.asarray(getattr(Q, "full", Q), dtype=float)
    v = qe.quasi_entropy_vec("Dinf", to_coords(q))
    if not v.in_domain:
        return OUT_OF_DOMAIN
    return EnergyValue(coeffs.nu * v.value - coeffs.eta / 2 * float(np.sum(q * q)), True)


def rod_uniaxial_profile(x: float, chi: float) -> tuple[float, float, float]:
    """(f, f', f'') divided by nu on R1 = diag(x, (1-x)/2, (1-x)/2)."""
    if not 0 < x < 1:
        raise ValueError(f"x must lie in (0, 1), got {x}")
    f = (
        -math.log(x)
        - 4 * math.log((1 - x) / 2)
        - 4 * math.log((1 + x) / 4)
        - chi / 2 * (x * x + (1 - x) ** 2 / 2 - 1 / 3)
    )
    d1 = (3 * x - 1) * ((3 * x + 1) / (x * (1 - x * x)) - chi / 2)
    d2 = 1 / x**2 + 4 / (1 - x) ** 2 + 4 / (1 + x) ** 2 - 1.5 * chi
    return f, d1, d2


def rod_profile_third_derivative(x: float) -> float:
    return -2 / x**3 + 8 / (1 - x) ** 3 - 8 / (1 + x) ** 3


def critical_x() -> float:
    """Root of 6x^3 + 3x^2 = 1 on (0, 1), by bisection."""
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-15:
        mid = (lo + hi) / 2
        if 6 * mid**3 + 3 * mid**2 - 1 > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


def critical_chi() -> tuple[float, float]:
    x = critical_x()
    return 2 * (3 * x + 1) / (x * (1 - x * x)), 13.5


def critical_eta(nu: float = 5 / 9) -> tuple[float, float]:
    c1, c2 = critical_chi()
    return nu * c1, nu * c2


def d2_energy(R: RTriple, c: Sequence[float]) -> EnergyValue:
    """-sum ln det R_i - (1/2) sum c_i |R_i|^2."""
    total = 0.0
    for r, ci in zip((R.R1, R.R2, R.R3), c):
        v = logdet_pd(r)
        if v is None:
            return OUT_OF_DOMAIN
        total += v - ci / 2 * float(np.sum(r * r))
    return EnergyValue(total, True)


def bentcore_interaction(q1, q2, m12, coeffs: ModelCoefficients) -> float:
    r1 = q2 + I3 / 3
    r2 = I3 / 3 - q2 / 2 + m12
    return coeffs.eta / 2 * (
        coeffs.c01 * float(q1 @ q1)
        + coeffs.c02 * float(np.sum(r1 * r1))
        + coeffs.c03 * float(np.sum(r2 * r2))
        + 2 * coeffs.c04 * float(np.sum(r1 * r2))
    )


def bentcore_energy(params: "qe.OrderParameterSet", coeffs: ModelCoefficients) -> EnergyValue:
    """nu * (C2 quasi-entropy minimized over M22) + bent-core interaction.

    ``params`` is a C2 order-parameter set; its M22 member is ignored.
    """
    a = params.arrays()
    fixed = np.concatenate([a["Q1"], to_coords(a["Q2"]), to_coords(a["M12"])])
    m = qe.marginal_minimize("C2_over_M22", fixed).value
    if not m.in_domain:
        return OUT_OF_DOMAIN
    return EnergyValue(coeffs.nu * m.value + bentcore_interaction(a["Q1"], a["Q2"], a["M12"], coeffs), True)


def to_energy(T, O, coeffs: ModelCoefficients) -> EnergyValue:
    """nu q4(T, O) - (eta/2)(mu1 |T|^2 + mu2 |O|^2)."""
    t = np.asarray(getattr(T, "full", T), dtype=float)
    o = np.asarray(getattr(O, "full", O), dtype=float)
    v = qe.quasi_entropy_vec("T", np.concatenate([to_coords(t), to_coords(o)]))
    if not v.in_domain:
        return OUT_OF_DOMAIN
    quad = coeffs.mu1 * float(np.sum(t * t)) + coeffs.mu2 * float(np.sum(o * o))
    return EnergyValue(coeffs.nu * v.value - coeffs.eta / 2 * quad, True)


def to_reduced_energy(s: float, t: float, mu1_bar: float, mu2_bar: float) -> EnergyValue:
    """F(s, t) / nu = q4(s, t) - mu1_bar s^2 / 2 - mu2_bar t^2 / 2."""
    v = qe.q4_reduced_st(s, t)
    if not v.in_domain:
        return OUT_OF_DOMAIN
    return EnergyValue(v.value - mu1_bar * s * s / 2 - mu2_bar * t * t / 2, True)


# ---------------------------------------------------------------------------
# coordinate models for the optimizers

Layout = tuple  # of (member name, tensor order)


def layout_dim(layout: Layout) -> int:
    return sum(qe.n_coords_of(k) for _, k in layout)


def unpack_layout(layout: Layout, x: np.ndarray) -> dict[str, np.ndarray]:
    out, i = {}, 0
    for name, k in layout:
        n = qe.n_coords_of(k)
        out[name] = x[i : i + n].copy() if k == 1 else from_coords(k, x[i : i + n])
        i += n
    return out


def pack_layout(layout: Layout, arrays: dict) -> np.ndarray:
    return np.concatenate([np.asarray(arrays[n]) if k == 1 else to_coords(arrays[n]) for n, k in layout])


@dataclass
class FreeEnergyModel:
    """Base class: subclasses set ``family``/``layout`` and implement value and gradient."""

    family: str = field(init=False, default="")
    layout: Layout = field(init=False, default=())

    @property
    def dim(self) -> int:
        return layout_dim(self.layout)

    def value(self, x: np.ndarray) -> Optional[float]:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def disordered(self) -> np.ndarray:
        """Coordinates of the isotropic state."""
        return np.zeros(self.dim)

    def rotate(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Rotate every member tensor by the frame matrix p (identity for scalar models)."""
        arrs = unpack_layout(self.layout, np.asarray(x, dtype=float))
        return pack_layout(self.layout, {k: rotate_full(v, p) for k, v in arrs.items()})

    def fingerprint(self, x: np.ndarray) -> np.ndarray:
        """Rotation-invariant summary used to merge equivalent stationary points."""
        arrs = unpack_layout(self.layout, np.asarray(x, dtype=float))
        parts = []
        for name, k in self.layout:
            a = arrs[name]
            parts.append(np.linalg.eigvalsh(a) if k == 2 else np.array([np.linalg.norm(a)]))
        return np.concatenate(parts)

    def summary(self, x: np.ndarray) -> dict:
        return {"fingerprint": self.fingerprint(x).tolist()}


@dataclass
class RodModel(FreeEnergyModel):
    nu: float = 5 / 9
    eta: float = 0.0

    def __post_init__(self):
        self.family = "rod"
        self.layout = (("Q", 2),)

    @classmethod
    def from_chi(cls, chi: float, nu: float = 5 / 9) -> "RodModel":
        return cls(nu=nu, eta=chi * nu)

    def value(self, x):
        v = qe.quasi_entropy_vec("Dinf", x)
        return self.nu * v.value - self.eta / 2 * float(x @ x) if v.in_domain else None

    def gradient(self, x):
        return self.nu * qe.quasi_entropy_gradient_vec("Dinf", x) - self.eta * x

    def summary(self, x):
        q = from_coords(2, x)
        return {"eigenvalues": np.linalg.eigvalsh(q).tolist()}


def _d2_pieces(x):
    q2 = from_coords(2, x[:5])
    m1 = from_coords(2, x[5:])
    half = I3 / 3 - q2 / 2
    return q2 + I3 / 3, half + m1, half - m1


@dataclass
class D2Model(FreeEnergyModel):
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        self.family = "d2"
        self.layout = (("Q2", 2), ("M12", 2))

    def value(self, x):
        total = 0.0
        for r, c in zip(_d2_pieces(x), (self.c1, self.c2, self.c3)):
            v = logdet_pd(r)
            if v is None:
                return None
            total += v - c / 2 * float(np.sum(r * r))
        return total

    def gradient(self, x):
        r1, r2, r3 = _d2_pieces(x)
        g1 = -np.linalg.inv(r1) - self.c1 * r1
        g2 = -np.linalg.inv(r2) - self.c2 * r2
        g3 = -np.linalg.inv(r3) - self.c3 * r3
        return np.concatenate([to_coords(g1 - g2 / 2 - g3 / 2), to_coords(g2 - g3)])

    def triple(self, x) -> RTriple:
        return RTriple(*_d2_pieces(x))

    def summary(self, x):
        return {f"R{i + 1}": np.linalg.eigvalsh(r).tolist() for i, r in enumerate(_d2_pieces(x))}


@dataclass
class BentCoreModel(FreeEnergyModel):
    """Coordinates (Q1, Q2, M12); M22 is minimized out at every evaluation."""

    coeffs: ModelCoefficients = field(default_factory=ModelCoefficients)

    def __post_init__(self):
        self.family = "bentcore"
        self.layout = (("Q1", 1), ("Q2", 2), ("M12", 2))
        if None in (self.coeffs.c01, self.coeffs.c02, self.coeffs.c03, self.coeffs.c04):
            raise ValueError("bent-core model needs c01, c02, c03, c04")
        self._last = None

    def _inner(self, x):
        key = x.tobytes()
        if self._last is not None and self._last[0] == key:
            return self._last[1]
        start = None if self._last is None or not self._last[1].value.in_domain else self._last[1].free
        res = qe.marginal_minimize("C2_over_M22", x, start=start)
        self._last = (key, res)
        return res

    def _quad(self, x):
        q1, q2, m = x[:3], x[3:8], x[8:]
        c = self.coeffs
        val = c.c01 * (q1 @ q1) + c.c02 * (q2 @ q2 + 1 / 3) + c.c03 * (1 / 3 + q2 @ q2 / 4 + m @ m - q2 @ m)
        val += 2 * c.c04 * (1 / 3 - q2 @ q2 / 2 + q2 @ m)
        grad = np.concatenate([
            2 * c.c01 * q1,
            2 * c.c02 * q2 + c.c03 * (q2 / 2 - m) + 2 * c.c04 * (-q2 + m),
            c.c03 * (2 * m - q2) + 2 * c.c04 * q2,
        ])
        return c.eta / 2 * float(val), c.eta / 2 * grad

    def value(self, x):
        res = self._inner(np.asarray(x, dtype=float))
        if not res.value.in_domain:
            return None
        return self.coeffs.nu * res.value.value + self._quad(x)[0]

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        res = self._inner(x)
        g = qe.quasi_entropy_gradient_vec("C2", np.concatenate([x, res.free]))
        # envelope theorem: at the inner optimum the M22 derivative vanishes,
        # so the outer gradient is the partial gradient in (Q1, Q2, M12)
        return self.coeffs.nu * g[:13] + self._quad(x)[1]

    def m22(self, x) -> np.ndarray:
        return self._inner(np.asarray(x, dtype=float)).free

    def triple(self, x) -> RTriple:
        return RTriple.from_d2(from_coords(2, x[3:8]), from_coords(2, x[8:]))

    def summary(self, x):
        s = {f"R{i + 1}": np.linalg.eigvalsh(r).tolist() for i, r in enumerate(_d2_pieces(x[3:]))}
        s["Q1_norm"] = float(np.linalg.norm(x[:3]))
        return s


@dataclass
class TOModel(FreeEnergyModel):
    """Full tetrahedral model in (T, O) coordinates."""

    nu: float = 5 / 9
    eta: float = 1.0
    mu1: float = 0.0
    mu2: float = 0.0

    def __post_init__(self):
        self.family = "to_full"
        self.layout = (("T", 3), ("O", 4))

    def value(self, x):
        v = qe.quasi_entropy_vec("T", x)
        if not v.in_domain:
            return None
        return self.nu * v.value - self.eta / 2 * (self.mu1 * float(x[:7] @ x[:7]) + self.mu2 * float(x[7:] @ x[7:]))

    def gradient(self, x):
        g = self.nu * qe.quasi_entropy_gradient_vec("T", x)
        g[:7] -= self.eta * self.mu1 * x[:7]
        g[7:] -= self.eta * self.mu2 * x[7:]
        return g

    def summary(self, x):
        # |T|^2 = s^2/6 and |O|^2 = 0.3 t^2 on the reduced family
        return {"s": math.sqrt(6) * float(np.linalg.norm(x[:7])), "t": float(np.linalg.norm(x[7:])) / math.sqrt(0.3)}


@dataclass
class TOReducedModel(FreeEnergyModel):
    """F(s, t) / nu on the two-scalar tetrahedral family."""

    mu1_bar: float = 0.0
    mu2_bar: float = 0.0

    def __post_init__(self):
        self.family = "to"
        self.layout = ()

    @property
    def dim(self) -> int:
        return 2

    def value(self, x):
        v = to_reduced_energy(x[0], x[1], self.mu1_bar, self.mu2_bar)
        return v.value if v.in_domain else None

    def gradient(self, x):
        g = qe.q4_reduced_st_gradient(x[0], x[1])
        return g - np.array([self.mu1_bar * x[0], self.mu2_bar * x[1]])

    def rotate(self, x, p):
        return np.asarray(x, dtype=float).copy()

    def fingerprint(self, x):
        return np.array([abs(x[0]), x[1]])

    def summary(self, x):
        return {"s": float(x[0]), "t": float(x[1])}


@dataclass
class RodProfileModel(FreeEnergyModel):
    """The one-variable uniaxial profile in x (already divided by nu)."""

    chi: float = 0.0

    def __post_init__(self):
        self.family = "rod_profile"
        self.layout = ()

    @property
    def dim(self) -> int:
        return 1

    def value(self, x):
        if not 0 < x[0] < 1:
            return None
        return rod_uniaxial_profile(float(x[0]), self.chi)[0]

    def gradient(self, x):
        return np.array([rod_uniaxial_profile(float(x[0]), self.chi)[1]])

    def rotate(self, x, p):
        return np.asarray(x, dtype=float).copy()

    def disordered(self):
        return np.array([1 / 3])

    def fingerprint(self, x):
        return np.asarray(x, dtype=float).copy()
