"""Separable nonconvex sparsity penalties of the form g(x) = lam*||x||_1 - h(x).

Every family is written as an l1 term minus a convex, continuously
differentiable function ``h``.  The l1 weight ``lam`` is derived from the
family parameters (never supplied independently), which guarantees
``|h'(x)| <= lam`` and ``h(0) = h'(0) = 0``.

Families and parameters
-----------------------
mcp      lam, theta > 0           h = x^2/(2 theta)  or  lam|x| - theta lam^2/2
scad     lam, theta > 1           h = 0, (x^2 - 2 lam|x| + lam^2)/(2(theta-1)), lam|x| - (theta+1) lam^2/2
exp      lam                      h = exp(-lam|x|) - 1 + lam|x|
log      theta > 0                lam = theta/log(1+theta)
lp-frac  theta > 1, eps > 0       p = 1/theta,  lam = eps^(p-1)/theta
lp-neg   p < 0, theta > 0         lam = -p theta

For ``lp-frac`` the concave part is shifted by the constant ``eps**p`` so that
``g(0) = 0``; gradients are unaffected.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError


class Family(str, enum.Enum):
    MCP = "mcp"
    SCAD = "scad"
    EXP = "exp"
    LOG = "log"
    LP_FRAC = "lp-frac"
    LP_NEG = "lp-neg"


@dataclass(frozen=True)
class PenaltyConstants:
    lambda_eff: float
    lip_h: float
    saturation: Optional[float]


@dataclass(frozen=True)
class PenaltySpec:
    """Immutable description of one penalty family.

    Parameters
    ----------
    family : Family or str
        One of ``mcp``, ``scad``, ``exp``, ``log``, ``lp-frac``, ``lp-neg``.
    lam : float, optional
        User l1 weight; required for MCP, SCAD and Exp, ignored otherwise.
    theta : float, optional
        Shape parameter (unused by Exp).
    p : float, optional
        Exponent of ``lp-neg`` (must be negative).  ``lp-frac`` derives its
        exponent as ``1/theta``.
    eps : float, optional
        Smoothing offset of ``lp-frac``.
    """

    family: Family
    lam: Optional[float] = None
    theta: Optional[float] = None
    p: Optional[float] = None
    eps: Optional[float] = None

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            names = ", ".join(f.value for f in Family)
            raise ConfigurationError(f"unknown penalty family {self.family!r} (expected one of {names})")
        object.__setattr__(self, "family", fam)
        self._validate()

    def _validate(self):
        fam = self.family

        def positive(name):
            val = getattr(self, name)
            if val is None or not math.isfinite(val) or val <= 0:
                raise ConfigurationError(f"{fam.value}: parameter {name} must be a positive finite number, got {val!r}")

        if fam in (Family.MCP, Family.SCAD, Family.EXP):
            positive("lam")
        if fam in (Family.MCP, Family.LOG, Family.LP_NEG):
            positive("theta")
        if fam is Family.SCAD:
            positive("theta")
            if self.theta <= 1:
                raise ConfigurationError(f"scad: theta must exceed 1, got {self.theta}")
        if fam is Family.LP_FRAC:
            positive("theta")
            positive("eps")
            # h'' = p(1-p)(|x|+eps)^(p-2) is nonnegative only for 0 < p < 1
            if self.theta <= 1:
                raise ConfigurationError(f"lp-frac: theta must exceed 1 (exponent 1/theta in (0,1)), got {self.theta}")
        if fam is Family.LP_NEG:
            if self.p is None or not math.isfinite(self.p) or self.p >= 0:
                raise ConfigurationError(f"lp-neg: exponent p must be negative, got {self.p!r}")

    # ------------------------------------------------------------------ constants
    @property
    def lambda_eff(self) -> float:
        fam = self.family
        if fam in (Family.MCP, Family.SCAD, Family.EXP):
            return float(self.lam)
        if fam is Family.LOG:
            return self.theta / math.log1p(self.theta)
        if fam is Family.LP_FRAC:
            return self.eps ** (1.0 / self.theta - 1.0) / self.theta
        return -self.p * self.theta

    @property
    def constants(self) -> PenaltyConstants:
        lam = self.lambda_eff
        fam = self.family
        # lip_h is sup|h''|; for the smooth families the supremum sits at x = 0
        if fam is Family.MCP:
            lip, sat = 1.0 / self.theta, _mcp_sat(lam, self.theta)
        elif fam is Family.SCAD:
            lip, sat = 1.0 / (self.theta - 1.0), _scad_sat(lam, self.theta)
        elif fam is Family.EXP:
            lip, sat = lam * lam, None
        elif fam is Family.LOG:
            lip, sat = self.theta ** 2 / math.log1p(self.theta), None
        elif fam is Family.LP_FRAC:
            p = 1.0 / self.theta
            lip, sat = p * (1.0 - p) * self.eps ** (p - 2.0), None
        else:
            lip, sat = self.p * (self.p - 1.0) * self.theta ** 2, None
        return PenaltyConstants(lambda_eff=lam, lip_h=lip, saturation=sat)

    @property
    def saturation(self) -> Optional[float]:
        return self.constants.saturation

    def describe(self) -> dict:
        out = {"family": self.family.value}
        for name in ("lam", "theta", "p", "eps"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out


def make_penalty(family: str, lam=None, theta=None, p=None, eps=None) -> PenaltySpec:
    """Build a spec, dropping parameters the family does not use."""
    try:
        fam = Family(family)
    except ValueError:
        return PenaltySpec(family)  # raises with the list of valid names
    uses = {
        Family.MCP: ("lam", "theta"),
        Family.SCAD: ("lam", "theta"),
        Family.EXP: ("lam",),
        Family.LOG: ("theta",),
        Family.LP_FRAC: ("theta", "eps"),
        Family.LP_NEG: ("p", "theta"),
    }
    given = {"lam": lam, "theta": theta, "p": p, "eps": eps}
    return PenaltySpec(fam, **{k: given[k] for k in uses[fam]})


def _mcp_sat(lam, theta):
    return 0.5 * theta * lam * lam


def _scad_sat(lam, theta):
    return 0.5 * (theta + 1.0) * lam * lam


def _scalar_or_array(values, like):
    return float(values) if np.ndim(like) == 0 else values


def h_value(spec: PenaltySpec, x):
    """Concave-part function ``h`` applied elementwise."""
    xa = np.asarray(x, dtype=float)
    a = np.abs(xa)
    lam = spec.lambda_eff
    fam = spec.family
    if fam is Family.MCP:
        th = spec.theta
        out = np.where(a <= th * lam, a * a / (2.0 * th), lam * a - th * lam * lam / 2.0)
    elif fam is Family.SCAD:
        th = spec.theta
        mid = (a * a - 2.0 * lam * a + lam * lam) / (2.0 * (th - 1.0))
        out = np.where(a <= lam, 0.0, np.where(a <= th * lam, mid, lam * a - 0.5 * (th + 1.0) * lam * lam))
    elif fam is Family.EXP:
        # expm1 keeps the small-|x| cancellation exact enough
        out = np.expm1(-lam * a) + lam * a
    elif fam is Family.LOG:
        out = lam * a - np.log1p(spec.theta * a) / math.log1p(spec.theta)
    elif fam is Family.LP_FRAC:
        p = 1.0 / spec.theta
        out = lam * a - ((a + spec.eps) ** p - spec.eps ** p)
    else:
        out = lam * a - (-np.expm1(spec.p * np.log1p(spec.theta * a)))
    return _scalar_or_array(out, x)


def h_grad(spec: PenaltySpec, x):
    """Derivative of ``h`` elementwise; odd, zero at the origin, bounded by ``lambda_eff``."""
    xa = np.asarray(x, dtype=float)
    a = np.abs(xa)
    s = np.sign(xa)
    lam = spec.lambda_eff
    fam = spec.family
    if fam is Family.MCP:
        th = spec.theta
        mag = np.where(a <= th * lam, a / th, lam)
    elif fam is Family.SCAD:
        th = spec.theta
        mag = np.where(a <= lam, 0.0, np.where(a <= th * lam, (a - lam) / (th - 1.0), lam))
    elif fam is Family.EXP:
        mag = -lam * np.expm1(-lam * a)
    elif fam is Family.LOG:
        th = spec.theta
        mag = lam * (th * a) / (1.0 + th * a)
    elif fam is Family.LP_FRAC:
        p = 1.0 / spec.theta
        eps = spec.eps
        # lam - p (a+eps)^(p-1) = lam (1 - (1 + a/eps)^(p-1))
        mag = -lam * np.expm1((p - 1.0) * np.log1p(a / eps))
    else:
        mag = -lam * np.expm1((spec.p - 1.0) * np.log1p(spec.theta * a))
    return _scalar_or_array(s * mag, x)


def g_scalar(spec: PenaltySpec, x):
    """Per-coordinate penalty ``lam*|x| - h(x)`` (elementwise)."""
    xa = np.asarray(x, dtype=float)
    a = np.abs(xa)
    lam = spec.lambda_eff
    fam = spec.family
    # closed forms avoid the cancellation in lam*|x| - h(x) for large |x|; at the
    # saturation kink the constant piece is used so the stored value is hit exactly
    if fam is Family.MCP:
        th = spec.theta
        out = np.where(a < th * lam, lam * a - a * a / (2.0 * th), _mcp_sat(lam, th))
    elif fam is Family.SCAD:
        th = spec.theta
        mid = lam * a - (a - lam) ** 2 / (2.0 * (th - 1.0))
        out = np.where(a <= lam, lam * a, np.where(a < th * lam, mid, _scad_sat(lam, th)))
    elif fam is Family.EXP:
        out = -np.expm1(-lam * a)
    elif fam is Family.LOG:
        out = np.log1p(spec.theta * a) / math.log1p(spec.theta)
    elif fam is Family.LP_FRAC:
        p = 1.0 / spec.theta
        out = (a + spec.eps) ** p - spec.eps ** p
    else:
        out = -np.expm1(spec.p * np.log1p(spec.theta * a))
    return _scalar_or_array(out, x)


def g_value(spec: PenaltySpec, x) -> float:
    """Penalty of a vector: sum over coordinates of ``lam*|x_i| - h(x_i)``."""
    return float(np.sum(g_scalar(spec, np.asarray(x, dtype=float))))


def majorant_data(spec: PenaltySpec, anchor):
    """Linearisation data of ``h`` at ``anchor``.

    Returns ``(grad_h, h_sum)`` so that the convex majorant is
    ``g_k(x) = lam*||x||_1 - h_sum - <grad_h, x - anchor>``.
    """
    a = np.asarray(anchor, dtype=float)
    return np.asarray(h_grad(spec, a), dtype=float).reshape(a.shape), float(np.sum(h_value(spec, a)))


def majorant_value(spec: PenaltySpec, grad_h, h_sum: float, anchor, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(spec.lambda_eff * np.sum(np.abs(x)) - h_sum - np.dot(grad_h, x - np.asarray(anchor, dtype=float)))
