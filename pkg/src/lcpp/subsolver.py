"""Inner solvers for the strongly convex LCPP subproblem.

Each subproblem is::

    min  psi(x) + gamma/2 ||x - c||^2     s.t.   ||x||_1 + <u, x> <= tau

where ``c`` is the previous outer iterate and ``(u, tau)`` is the majorant
constraint normalised by ``lam``.  All solvers move only through
:func:`lcpp.projection.project`, so every iterate is feasible.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import ConfigurationError, InfeasibleError
from .objective import Objective
from .projection import ProjectionProblem, ProjectionResult, constraint_value, project

ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class SubproblemSpec:
    objective: Objective
    prox_center: np.ndarray
    gamma: float
    u: np.ndarray
    tau: float
    lambda_eff: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.prox_center, dtype=float)
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "prox_center", c)
        object.__setattr__(self, "u", u)
        if self.gamma <= 0:
            raise ConfigurationError(f"proximal weight gamma must be positive, got {self.gamma}")
        if not self.tau > 0:
            raise InfeasibleError(f"subproblem level tau={self.tau!r} leaves no strictly feasible point")
        excess = constraint_value(c, u) - self.tau
        if excess > ACTIVE_TOL * max(1.0, self.tau):
            raise InfeasibleError(f"proximal center violates the subproblem constraint by {excess:.3e}")

    @property
    def strong_convexity(self) -> float:
        return self.gamma - self.objective.mu

    def value(self, x) -> float:
        dx = x - self.prox_center
        return self.objective.value(x) + 0.5 * self.gamma * float(np.dot(dx, dx))

    def grad(self, x) -> np.ndarray:
        return self.objective.grad(x) + self.gamma * (x - self.prox_center)

    def constraint(self, x) -> float:
        return constraint_value(x, self.u)

    def project(self, v) -> ProjectionResult:
        return project(ProjectionProblem(v, self.u, self.tau))


@dataclass
class InnerConfig:
    """Settings shared by the inner solvers.

    ``max_iters``/``tol`` drive BB and SGD; AC-SA runs exactly ``acsa_iters``
    steps when given, otherwise the budget derived from the curvature
    constants and the outer iteration count.
    """

    solver: str = "bb"
    max_iters: int = 10
    tol: float = 1e-5
    memory: int = 5
    sufficient_decrease: float = 1e-4
    step_min: float = 1e-10
    step_max: float = 1e10
    max_backtracks: int = 60
    batch_size: Optional[int] = None
    seed: int = 0
    acsa_iters: Optional[int] = None
    beta: float = 0.1
    sgd_scale: float = 1.0
    sgd_average: bool = True
    record_path: bool = False

    def __post_init__(self):
        if self.solver not in ("bb", "acsa", "sgd"):
            raise ConfigurationError(f"unknown inner solver {self.solver!r} (expected bb, acsa or sgd)")
        if self.max_iters < 1:
            raise ConfigurationError("inner iteration cap must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError("batch size must be at least 1")
        if self.acsa_iters is not None and self.acsa_iters < 1:
            raise ConfigurationError("AC-SA iteration count must be at least 1")


@dataclass
class SubsolverReport:
    x_out: np.ndarray
    iterations: int
    final_step: float
    dual_estimate: float
    rho: float
    zeta: float
    gap_bound: float
    solver: str
    budget: Optional[int] = None
    path: list = field(default_factory=list)


def dual_from_last_step(last_projection: ProjectionResult, step: float, lambda_eff: float) -> float:
    """Subproblem multiplier implied by a projected step ``x+ = P(x - step*grad)``.

    At a fixed point ``step*grad + y_proj*(u + s) = 0``; in the units of the
    unnormalised constraint ``g_k(x) <= eta_k`` that is ``y_proj/(step*lam)``.
    """
    if step <= 0:
        raise ConfigurationError("step must be positive")
    return last_projection.y / (step * lambda_eff)


def _residual_vector(grad, x, u, y):
    """Clamp residual of ``grad + y*(u + s)``, s in the subdifferential of ||x||_1."""
    base = grad + y * u
    nz = x != 0
    return np.where(nz, base + y * np.sign(x), np.sign(base) * np.maximum(np.abs(base) - y, 0.0))


def certify(spec: SubproblemSpec, x, y_hint: float = 0.0, grad=None):
    """Upper bound on ``psi_k(x) - min psi_k`` from strong convexity.

    For any ``v`` in ``grad psi_k(x) + N(x)`` the gap is at most
    ``||v||^2 / (2 m)``.  Normal-cone elements ``y*(u + s)`` are only
    available when the constraint is active at ``x``; the multiplier is picked
    to minimise ``||v||``.  Returns ``(bound, y)`` with ``y`` in normalised units.
    """
    m = spec.strong_convexity
    g = spec.grad(x) if grad is None else grad
    if m <= 0:
        return math.inf, 0.0
    slack = spec.tau - spec.constraint(x)
    if slack > ACTIVE_TOL * max(1.0, spec.tau):
        return float(np.dot(g, g)) / (2.0 * m), 0.0

    def r2(y):
        res = _residual_vector(g, x, spec.u, y)
        return float(np.dot(res, res))

    nz = x != 0
    coef = spec.u[nz] + np.sign(x[nz])
    denom = float(np.dot(coef, coef))
    y_ls = max(0.0, -float(np.dot(g[nz], coef)) / denom) if denom > 0 else 0.0
    hi = 2.0 * max(y_ls, y_hint, float(np.max(np.abs(g))) if g.size else 0.0) + 1e-12
    cands = [0.0, y_hint, y_ls]
    opt = minimize_scalar(r2, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12 * hi})
    cands.append(float(opt.x))
    y_best = min(cands, key=r2)
    return r2(y_best) / (2.0 * m), y_best


def solve_bb(spec: SubproblemSpec, cfg: InnerConfig, step0: Optional[float] = None) -> SubsolverReport:
    """Spectral projected gradient with a nonmonotone (max-of-window) line search.

    Starts at the proximal center.  A trial point ``P(x - a*g)`` is accepted
    when ``f(z) <= max(last values) - c/(2a) ||z - x||^2``; the step is halved
    otherwise.  The next trial step is the Barzilai-Borwein ratio ``s.s/s.r``
    clamped to ``[step_min, step_max]``.  Stops on
    ``||x_t - x_{t-1}|| / ||x_t|| <= tol`` or after ``max_iters`` iterations.
    """
    x = spec.prox_center.copy()
    f = spec.value(x)
    g = spec.grad(x)
    window = deque([f], maxlen=max(1, cfg.memory))
    lk = spec.objective.smooth_L + spec.gamma
    alpha = step0 if step0 is not None else 1.0 / lk
    alpha = min(max(alpha, cfg.step_min), cfg.step_max)
    last_proj, last_alpha = None, alpha
    path = [f] if cfg.record_path else []
    it = 0
    for it in range(1, cfg.max_iters + 1):
        ref = max(window)
        accepted = False
        for _ in range(cfg.max_backtracks):
            pr = spec.project(x - alpha * g)
            z = pr.x
            dz = z - x
            fz = spec.value(z)
            if fz <= ref - cfg.sufficient_decrease / (2.0 * alpha) * float(np.dot(dz, dz)):
                accepted = True
                break
            alpha *= 0.5
            if alpha < cfg.step_min:
                break
        if not accepted:
            break
        gz = spec.grad(z)
        s, r = dz, gz - g
        x, f, g = z, fz, gz
        window.append(f)
        last_proj, last_alpha = pr, alpha
        if cfg.record_path:
            path.append(f)
        nx = float(np.linalg.norm(x))
        ns = float(np.linalg.norm(s))
        if ns == 0.0 or ns <= cfg.tol * nx:
            break
        sr = float(np.dot(s, r))
        alpha = float(np.dot(s, s)) / sr if sr > 0 else cfg.step_max
        alpha = min(max(alpha, cfg.step_min), cfg.step_max)

    y_hint = last_proj.y / last_alpha if last_proj is not None else 0.0
    dual = dual_from_last_step(last_proj, last_alpha, spec.lambda_eff) if last_proj is not None else 0.0
    gap, _ = certify(spec, x, y_hint, grad=g)
    return SubsolverReport(x_out=x, iterations=it, final_step=last_alpha, dual_estimate=dual,
                           rho=0.0, zeta=gap, gap_bound=gap, solver="bb", path=path)


def acsa_budget(objective: Objective, gamma: float, outer_iters: int, batch_size: Optional[int] = None,
                beta: float = 0.1) -> int:
    """Inner iteration count ``T_k`` for AC-SA.

    ``max(2*sqrt(L/mu + 3), K*(M + sigma))`` when ``mu > 0`` and
    ``max(2*sqrt(2(1+beta)/beta), K*(M + sigma))`` in the convex case, with
    ``sigma`` the minibatch standard deviation (zero for full gradients).
    """
    L, mu, M = objective.smooth_L, objective.mu, objective.nonsmooth_M
    sigma = 0.0 if batch_size is None else objective.sigma / math.sqrt(batch_size)
    if mu > 0:
        base = 2.0 * math.sqrt(L / mu + 3.0)
    else:
        if not 0 < beta < 1:
            raise ConfigurationError("beta must lie in (0, 1)")
        base = 2.0 * math.sqrt(2.0 * (1.0 + beta) / beta)
    return max(1, math.ceil(base), math.ceil(outer_iters * (M + sigma)))


def theory_gamma(objective: Objective, beta: float = 0.1) -> float:
    """Proximal weight paired with :func:`acsa_budget`: ``3*mu``, or ``beta*L`` when convex."""
    if objective.mu > 0:
        return 3.0 * objective.mu
    return beta * objective.smooth_L


def _oracle(spec: SubproblemSpec, cfg: InnerConfig, rng, x):
    if cfg.batch_size is None:
        gpsi = spec.objective.grad(x)
    elif spec.objective.n is None:
        gpsi = spec.objective.stoch_grad(x, rng)
    else:
        gpsi = spec.objective.stoch_grad(x, spec.objective.sample_batch(rng, cfg.batch_size))
    return gpsi + spec.gamma * (x - spec.prox_center)


def solve_acsa(spec: SubproblemSpec, cfg: InnerConfig, outer_iters: int = 1,
               rng: Optional[np.random.Generator] = None) -> SubsolverReport:
    """Accelerated stochastic approximation for the strongly convex subproblem.

    Uses ``alpha_t = 2/(t+1)`` and ``gamma_t = 4 L/(t(t+1))`` with ``L`` the
    smoothness and ``m`` the strong convexity of ``psi_k``; each step is one
    projection.  Returns the aggregated point after exactly ``T`` steps.
    """
    m = spec.strong_convexity
    if m <= 0:
        raise ConfigurationError(f"AC-SA needs gamma > mu (got gamma={spec.gamma}, mu={spec.objective.mu})")
    T = cfg.acsa_iters if cfg.acsa_iters is not None else acsa_budget(
        spec.objective, spec.gamma, outer_iters, cfg.batch_size, cfg.beta)
    if T < 1:
        raise ConfigurationError("AC-SA needs at least one iteration")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    lk = spec.objective.smooth_L + spec.gamma
    x = spec.prox_center.copy()
    x_ag = x.copy()
    pr, step = None, 1.0
    for t in range(1, T + 1):
        a = 2.0 / (t + 1.0)
        gt = 4.0 * lk / (t * (t + 1.0))
        denom = gt + (1.0 - a * a) * m
        x_md = ((1.0 - a) * (m + gt) * x_ag + a * ((1.0 - a) * m + gt) * x) / denom
        G = _oracle(spec, cfg, rng, x_md)
        cc = (1.0 - a) * m + gt
        w = a * m + cc
        pr = spec.project((a * m * x_md + cc * x - a * G) / w)
        x = pr.x
        x_ag = a * x + (1.0 - a) * x_ag
        step = a / w

    sigma = 0.0 if cfg.batch_size is None else spec.objective.sigma / math.sqrt(cfg.batch_size)
    M = spec.objective.nonsmooth_M
    rho = 4.0 * lk / T ** 2
    zeta = 8.0 * (M * M + sigma * sigma) / (m * T)
    gap, _ = certify(spec, x_ag, pr.y / step)
    return SubsolverReport(x_out=x_ag, iterations=T, final_step=step,
                           dual_estimate=dual_from_last_step(pr, step, spec.lambda_eff),
                           rho=rho, zeta=zeta, gap_bound=gap, solver="acsa", budget=T)


def solve_sgd(spec: SubproblemSpec, cfg: InnerConfig, rng: Optional[np.random.Generator] = None) -> SubsolverReport:
    """Projected stochastic gradient with steps ``min(1/L, c/(m t))``.

    Returns the ``t``-weighted average of the iterates when
    ``cfg.sgd_average`` is set, the last iterate otherwise.  Full-batch mode
    (``batch_size=None``) is plain projected gradient descent.
    """
    m = spec.strong_convexity
    if m <= 0:
        raise ConfigurationError(f"SGD step schedule needs gamma > mu (got gamma={spec.gamma}, mu={spec.objective.mu})")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    lk = spec.objective.smooth_L + spec.gamma
    x = spec.prox_center.copy()
    avg = np.zeros_like(x)
    wsum = 0.0
    pr, step = None, 1.0 / lk
    for t in range(1, cfg.max_iters + 1):
        G = _oracle(spec, cfg, rng, x)
        step = min(1.0 / lk, cfg.sgd_scale / (m * t))
        pr = spec.project(x - step * G)
        x = pr.x
        avg += t * x
        wsum += t
    x_out = avg / wsum if cfg.sgd_average else x
    gap, _ = certify(spec, x_out, pr.y / step)
    return SubsolverReport(x_out=x_out, iterations=cfg.max_iters, final_step=step,
                           dual_estimate=dual_from_last_step(pr, step, spec.lambda_eff),
                           rho=0.0, zeta=gap, gap_bound=gap, solver="sgd")


def solve(spec: SubproblemSpec, cfg: InnerConfig, outer_iters: int = 1, rng=None, step0=None) -> SubsolverReport:
    if cfg.solver == "bb":
        return solve_bb(spec, cfg, step0=step0)
    if cfg.solver == "acsa":
        return solve_acsa(spec, cfg, outer_iters=outer_iters, rng=rng)
    return solve_sgd(spec, cfg, rng=rng)
