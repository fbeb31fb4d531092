"""Barrier-aware gradient descent shared by the marginal solver and the optimizers.

``fun`` returns None outside the domain; the line search treats that like a
failed sufficient-decrease test and halves the step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

ARMIJO_C = 1e-4
MAX_HALVINGS = 60
ROUNDING = 1e-14  # relative size of f changes treated as rounding noise


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    values: list  # accepted energies, in order


def descend(
    fun: Callable[[np.ndarray], Optional[float]],
    grad: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    grad_tol: float = 1e-9,
    max_iters: int = 5000,
    keep_history: bool = False,
) -> DescentResult:
    """Steepest descent with Barzilai-Borwein trial steps and Armijo backtracking.

    Accepted iterates satisfy the Armijo condition.  Once the predicted
    decrease drops below the rounding level of ``fun``, a step is accepted
    instead when the value stays within rounding and the gradient norm shrinks.
    """
    x = np.array(x0, dtype=float)
    f = fun(x)
    if f is None:
        raise ValueError("descent started outside the domain")
    g = grad(x)
    gn = float(np.linalg.norm(g))
    step = 1.0 / max(gn, 1.0)
    history = [f] if keep_history else []
    x_prev = g_prev = None
    it = 0
    while gn > grad_tol and it < max_iters:
        it += 1
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = float(s @ y)
            if sy > 0:
                # alternate the two BB step lengths; both are cheap curvature guesses
                step = float(s @ s) / sy if it % 2 else sy / float(y @ y)
        accepted = False
        t = step
        gnew = None
        noise = ROUNDING * max(1.0, abs(f))
        for _ in range(MAX_HALVINGS):
            xn = x - t * g
            fn = fun(xn)
            if fn is not None and fn <= f - ARMIJO_C * t * gn * gn:
                accepted = True
                break
            if fn is not None and fn <= f + noise:
                # the predicted decrease is below rounding of f: judge by the gradient instead
                gnew = grad(xn)
                if np.linalg.norm(gnew) < gn:
                    accepted = True
                    break
                gnew = None
            t /= 2
        if not accepted:
            # no decrease representable in floating point; we are at the noise floor
            break
        x_prev, g_prev = x, g
        x, f = xn, fn
        g = grad(x) if gnew is None else gnew
        gn = float(np.linalg.norm(g))
        step = t
        if keep_history:
            history.append(f)
    return DescentResult(x, f, gn, it, gn <= grad_tol, history)
