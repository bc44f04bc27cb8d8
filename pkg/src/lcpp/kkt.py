"""KKT residuals of ``min psi(x)  s.t.  g(x) <= eta`` at a candidate pair ``(x, y)``.

The Lagrangian subdifferential is ``grad psi(x) + y*(lam*d||x||_1 - grad h(x))``,
so its minimal-norm element has a coordinate-wise closed form.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError
from .penalty import PenaltySpec, g_value, h_grad


@dataclass(frozen=True)
class KktReport:
    feas_gap: float
    stat_resid: float
    cs_resid: float
    dual: float
    dual_upper: Optional[float] = None
    g: float = float("nan")
    eta: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)


def stationarity_vector(grad_psi, grad_h, x, y: float, lam: float) -> np.ndarray:
    """Per-coordinate minimal residual of ``grad_psi + y*(lam*s - grad_h)``, ``s in d|x|``."""
    if y < 0:
        raise ConfigurationError(f"multiplier must be nonnegative, got {y}")
    base = np.asarray(grad_psi, dtype=float) - y * np.asarray(grad_h, dtype=float)
    x = np.asarray(x, dtype=float)
    r = np.empty_like(base)
    nz = x != 0
    r[nz] = base[nz] + y * lam * np.sign(x[nz])
    # at x_i = 0: distance of base_i to [-y lam, y lam], signed toward the violation
    z = ~nz
    r[z] = np.sign(base[z]) * np.maximum(np.abs(base[z]) - y * lam, 0.0)
    return r


def stationarity_residual(obj, pen: PenaltySpec, x, y: float) -> float:
    """``dist(0, grad psi(x) + y*(lam d||x||_1 - grad h(x)))``."""
    x = np.asarray(x, dtype=float)
    r = stationarity_vector(obj.grad(x), h_grad(pen, x), x, y, pen.lambda_eff)
    return float(np.linalg.norm(r))


def kkt_report(obj, pen: PenaltySpec, x, y: float, eta: float, dual_upper: Optional[float] = None) -> KktReport:
    x = np.asarray(x, dtype=float)
    gx = g_value(pen, x)
    return KktReport(
        feas_gap=max(0.0, gx - eta),
        stat_resid=stationarity_residual(obj, pen, x, y),
        cs_resid=abs(y * (gx - eta)),
        dual=float(y),
        dual_upper=dual_upper,
        g=gx,
        eta=float(eta),
    )
