"""Explicit upper bounds on the subproblem multipliers.

Because every per-coordinate majorant ``lam|x| - h(a) - h'(a)(x - a)`` is
minimised at ``x = 0``, the origin is the most feasible point of each
subproblem and weak duality at ``x = 0`` gives::

    y_k <= (psi_k(0) - psi_k(x_k*)) / (eta_k - g(x_prev) + sum_i (lam - |h'(x_prev_i)|) |x_prev_i|)

For SCAD and MCP the slack sum is bounded below by a function ``z`` of the
penalty value modulo the per-coordinate saturation, which in turn lets the
initial level ``eta0`` be picked so the denominator never collapses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, DegenerateLevelError
from .penalty import Family, PenaltySpec, h_grad

_DOMAIN_SLACK = 1e-12
_SNAP_RTOL = 1e-12


@dataclass(frozen=True)
class DualBoundInput:
    psi0: float
    psik: float
    eta_k: float
    g_prev: float
    slack_sum: float

    @property
    def denominator(self) -> float:
        return self.eta_k - self.g_prev + self.slack_sum


def generic_dual_bound(inp: DualBoundInput) -> Optional[float]:
    """``(psi0 - psik)/denominator``, or ``None`` when the denominator is not positive.

    ``psik`` must not exceed the subproblem optimum for the result to be a
    valid bound; pass a certified lower estimate when the optimum is unknown.
    """
    den = inp.denominator
    if not den > 0:
        return None
    return max(inp.psi0 - inp.psik, 0.0) / den


def slack_sum(pen: PenaltySpec, x) -> float:
    """``sum_i (lam - |h'(x_i)|) |x_i|``, nonnegative since ``|h'| <= lam``."""
    x = np.asarray(x, dtype=float)
    gap = np.maximum(pen.lambda_eff - np.abs(h_grad(pen, x)), 0.0)
    return float(np.sum(gap * np.abs(x)))


def _require(pen: PenaltySpec, fam: Family):
    if pen.family is not fam:
        raise ConfigurationError(f"expected a {fam.value} penalty, got {pen.family.value}")


def _check_domain(val: float, top: float, name: str) -> float:
    if not (-_DOMAIN_SLACK * max(1.0, top) <= val <= top * (1.0 + _DOMAIN_SLACK)):
        raise ConfigurationError(f"{name}: argument {val!r} outside [0, {top!r}]")
    return min(max(val, 0.0), top)


def z_scad(pen: PenaltySpec, gamma_resid: float) -> float:
    """Lower bound on the SCAD slack sum for residual penalty value ``gamma_resid``.

    Linear on ``[0, lam^2]``, then ``(t/lam) sqrt(2/(theta-1)) sqrt(sat - t)``
    up to the saturation value ``sat = lam^2 (theta+1)/2``.
    """
    _require(pen, Family.SCAD)
    lam, th = pen.lambda_eff, pen.theta
    sat = pen.saturation
    t = _check_domain(float(gamma_resid), sat, "z_scad")
    if t <= lam * lam:
        return t
    return t / lam * math.sqrt(2.0 / (th - 1.0)) * math.sqrt(max(sat - t, 0.0))


def z_mcp(pen: PenaltySpec, gamma_resid: float) -> float:
    """Lower bound on the MCP slack sum: ``t sqrt(1 - 2t/(theta lam^2))``."""
    _require(pen, Family.MCP)
    sat = pen.saturation
    t = _check_domain(float(gamma_resid), sat, "z_mcp")
    return t * math.sqrt(max(1.0 - t / sat, 0.0))


def z_value(pen: PenaltySpec, gamma_resid: float) -> float:
    if pen.family is Family.SCAD:
        return z_scad(pen, gamma_resid)
    if pen.family is Family.MCP:
        return z_mcp(pen, gamma_resid)
    raise ConfigurationError(f"no slack lower bound is available for {pen.family.value}")


def decompose_level(pen: PenaltySpec, value: float):
    """Split ``value = beta*sat + rest`` with ``beta`` the largest integer keeping ``rest >= 0``."""
    sat = pen.saturation
    if sat is None:
        raise ConfigurationError(f"{pen.family.value} has no finite saturation value")
    if value < 0:
        raise ConfigurationError(f"level must be nonnegative, got {value}")
    beta = math.floor(value / sat)
    rest = value - beta * sat
    # guard the floor against rounding on either side of a multiple
    if rest < 0:
        beta -= 1
        rest += sat
    elif rest >= sat:
        beta += 1
        rest -= sat
    # a sum of saturated coordinates can land a few ulps under a multiple of sat, where
    # the square root in z is infinitely steep; treat that as the multiple itself
    if sat - rest <= _SNAP_RTOL * max(1.0, value):
        beta += 1
        rest = 0.0
    return beta, rest


def eta0_auto_scad(pen: PenaltySpec, eta: float) -> float:
    """Initial level that keeps every bound denominator above ``min{lam^2, z(rest)/2}``.

    With ``eta = beta*sat + rest``: ``eta0 = beta*sat + rest/2`` when
    ``rest <= lam^2`` and ``beta*sat + min{lam^2, z(rest)}`` otherwise.
    """
    _require(pen, Family.SCAD)
    if not eta > 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    beta, rest = decompose_level(pen, eta)
    if rest == 0.0:
        raise DegenerateLevelError(
            f"eta={eta!r} is {beta} times the SCAD saturation value; the multiplier bound degenerates there")
    lam2 = pen.lambda_eff ** 2
    base = beta * pen.saturation
    if rest <= lam2:
        return base + rest / 2.0
    return base + min(lam2, z_scad(pen, rest))


def eta0_auto_mcp(pen: PenaltySpec, eta: float) -> float:
    """MCP counterpart: ``eta0 = beta*sat + rest/2``.

    The denominator is then at least ``min{z(rest/2), z(rest)} >= z(rest)/2``
    because ``z`` is concave with ``z(t) <= t``.
    """
    _require(pen, Family.MCP)
    if not eta > 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    beta, rest = decompose_level(pen, eta)
    if rest == 0.0:
        raise DegenerateLevelError(
            f"eta={eta!r} is {beta} times the MCP saturation value; the multiplier bound degenerates there")
    return beta * pen.saturation + rest / 2.0


def denominator_floor(pen: PenaltySpec, eta: float) -> float:
    """Guaranteed lower bound on the denominator when ``eta0`` comes from the auto rule."""
    _, rest = decompose_level(pen, eta)
    if pen.family is Family.SCAD:
        return min(pen.lambda_eff ** 2, z_scad(pen, rest) / 2.0)
    if pen.family is Family.MCP:
        return z_mcp(pen, rest) / 2.0
    raise ConfigurationError(f"no denominator floor is available for {pen.family.value}")
