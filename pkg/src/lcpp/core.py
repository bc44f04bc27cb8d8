"""Outer level-constrained proximal point loop.

Iteration ``k`` linearises the concave part of ``g`` at ``x^{k-1}``, raises the
level to ``eta_k`` and solves::

    min  psi(x) + gamma/2 ||x - x^{k-1}||^2    s.t.   g_k(x) <= eta_k

with one of the inner solvers.  Since ``g <= g_k`` and ``g_k(x^{k-1}) =
g(x^{k-1}) <= eta_{k-1} < eta_k``, every iterate stays feasible for the
original constraint and the previous iterate is strictly feasible for the
next subproblem.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from . import dual_bounds
from .exceptions import ConfigurationError, StartupError
from .kkt import KktReport, kkt_report
from .objective import Objective
from .penalty import PenaltySpec, g_value, majorant_data, majorant_value
from .subsolver import InnerConfig, SubproblemSpec, SubsolverReport, solve, theory_gamma

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9


@dataclass
class LcppConfig:
    """Outer-loop settings.

    Parameters
    ----------
    eta : float
        Target level of ``g(x) <= eta``.
    eta0 : float or str, optional
        Initial level.  ``None`` means ``eta/2``; ``"auto-scad"`` and
        ``"auto-mcp"`` select the level that keeps the multiplier bound finite.
    gamma : float or "theory"
        Proximal weight.  ``"theory"`` uses ``3*mu`` (or ``beta*L`` when
        ``mu = 0``), matching the AC-SA budget.
    schedule : "theory" or "custom"
        ``theory`` gives ``eta_k = (k*eta + eta0)/(k+1)``; ``custom`` adds the
        increments in ``deltas``.
    outer_tol : float, optional
        Early exit once ``||x^k - x^{k-1}|| / max(1, ||x^k||) <= outer_tol``
        and ``eta - eta_k <= level_tol``.  ``None`` runs all ``outer_iters``.
    """

    eta: float
    eta0: Union[float, str, None] = None
    gamma: Union[float, str] = 1e-4
    outer_iters: int = 1000
    schedule: str = "theory"
    deltas: Optional[Sequence[float]] = None
    inner: InnerConfig = field(default_factory=InnerConfig)
    outer_tol: Optional[float] = None
    level_tol: float = math.inf
    seed: int = 0
    dual_bound_B: Optional[float] = None
    record_inner: bool = False

    def __post_init__(self):
        if not (isinstance(self.eta, (int, float)) and math.isfinite(self.eta)):
            raise ConfigurationError(f"eta must be a finite number, got {self.eta!r}")
        if self.outer_iters < 0:
            raise ConfigurationError("outer_iters must be nonnegative")
        if self.schedule not in ("theory", "custom"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r} (expected theory or custom)")
        if self.schedule == "custom" and self.deltas is None:
            raise ConfigurationError("custom schedule needs a list of level increments")
        if isinstance(self.gamma, str) and self.gamma != "theory":
            raise ConfigurationError(f"gamma must be a number or 'theory', got {self.gamma!r}")
        if isinstance(self.eta0, str) and self.eta0 not in ("auto-scad", "auto-mcp"):
            raise ConfigurationError(f"eta0 must be a number, 'auto-scad' or 'auto-mcp', got {self.eta0!r}")


def resolve_eta0(cfg: LcppConfig, pen: PenaltySpec) -> float:
    if cfg.eta0 is None:
        eta0 = cfg.eta / 2.0
    elif cfg.eta0 == "auto-scad":
        eta0 = dual_bounds.eta0_auto_scad(pen, cfg.eta)
    elif cfg.eta0 == "auto-mcp":
        eta0 = dual_bounds.eta0_auto_mcp(pen, cfg.eta)
    else:
        eta0 = float(cfg.eta0)
    if not eta0 < cfg.eta:
        raise ConfigurationError(f"eta0={eta0!r} must be below eta={cfg.eta!r}")
    return eta0


def resolve_gamma(cfg: LcppConfig, obj: Objective) -> float:
    gamma = theory_gamma(obj, cfg.inner.beta) if cfg.gamma == "theory" else float(cfg.gamma)
    if not gamma > obj.mu:
        raise ConfigurationError(f"gamma={gamma!r} must exceed mu={obj.mu!r} for strongly convex subproblems")
    return gamma


def level(cfg: LcppConfig, k: int, eta0: Optional[float] = None) -> float:
    """Level ``eta_k``; ``eta0`` must be passed when the config holds an auto rule."""
    if k < 0:
        raise ConfigurationError("level index must be nonnegative")
    if eta0 is None:
        if isinstance(cfg.eta0, str):
            raise ConfigurationError(f"resolve eta0={cfg.eta0!r} before asking for levels")
        eta0 = cfg.eta / 2.0 if cfg.eta0 is None else cfg.eta0
    e0 = float(eta0)
    if cfg.schedule == "theory":
        return (k * cfg.eta + e0) / (k + 1.0)
    deltas = np.asarray(cfg.deltas, dtype=float)
    if k > deltas.size:
        raise ConfigurationError(f"custom schedule has {deltas.size} increments, level {k} requested")
    if np.any(deltas <= 0):
        raise ConfigurationError("custom level increments must be positive")
    total = float(np.sum(deltas))
    if total > cfg.eta - e0:
        raise ConfigurationError(f"custom increments sum to {total!r}, more than eta - eta0 = {cfg.eta - e0!r}")
    return e0 + float(np.sum(deltas[:k]))


@dataclass
class TraceRecord:
    k: int
    eta_k: float
    psi: float
    g: float
    g_k: float
    inner_iters: int
    dual_est: float
    stat_resid: float
    cs_resid: float
    elapsed_s: float
    step_norm: float
    dual_upper_bound: Optional[float]
    bound_denominator: float
    gap_bound: float
    rho: float
    zeta: float
    inner_budget: Optional[int] = None
    inner_path: Optional[list] = None

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["inner_path"] is None:
            d.pop("inner_path")
        return d


@dataclass
class LcppState:
    k: int
    x: np.ndarray
    eta_k: float
    g_x: float
    last_majorant: Optional[tuple] = None
    trace: List[TraceRecord] = field(default_factory=list)
    bb_step: Optional[float] = None


@dataclass
class LcppResult:
    x_last: np.ndarray
    x_pick: np.ndarray
    pick_index: int
    trace: List[TraceRecord]
    kkt: KktReport
    kkt_last: KktReport
    eta0: float
    gamma: float
    iterations: int
    stopped_early: bool


class _Runner:
    """Holds the resolved constants of one run; ``step`` advances a state."""

    def __init__(self, cfg: LcppConfig, obj: Objective, pen: PenaltySpec, eta0: float, gamma: float, rng):
        self.cfg, self.obj, self.pen = cfg, obj, pen
        self.eta0, self.gamma = eta0, gamma
        self.rng = rng
        self.lam = pen.lambda_eff
        self.psi_zero = obj.value(np.zeros(obj.d))
        self.t0 = time.perf_counter()

    def step(self, state: LcppState) -> LcppState:
        cfg, obj, pen, lam = self.cfg, self.obj, self.pen, self.lam
        k = state.k + 1
        x_prev = state.x
        eta_k = level(cfg, k, self.eta0)
        if not eta_k < cfg.eta and cfg.schedule == "theory":
            raise ConfigurationError(f"level eta_{k}={eta_k!r} reached eta")
        grad_h, h_sum = majorant_data(pen, x_prev)
        lin = float(np.dot(grad_h, x_prev))
        tau = (eta_k + h_sum - lin) / lam
        spec = SubproblemSpec(obj, x_prev, self.gamma, -grad_h / lam, tau, lam)
        rep: SubsolverReport = solve(spec, cfg.inner, outer_iters=cfg.outer_iters, rng=self.rng, step0=state.bb_step)
        x = rep.x_out

        gk_x = majorant_value(pen, grad_h, h_sum, x_prev, x)
        g_x = g_value(pen, x)
        psi = obj.value(x)
        y = max(rep.dual_estimate, 0.0)
        kk = kkt_report(obj, pen, x, y, cfg.eta)

        dx = x - x_prev
        psik_lower = spec.value(x) - rep.gap_bound
        inp = dual_bounds.DualBoundInput(
            psi0=self.psi_zero + 0.5 * self.gamma * float(np.dot(x_prev, x_prev)),
            psik=psik_lower,
            eta_k=eta_k,
            g_prev=state.g_x,
            slack_sum=dual_bounds.slack_sum(pen, x_prev),
        )
        bound = dual_bounds.generic_dual_bound(inp) if math.isfinite(psik_lower) else None

        if g_x > gk_x + FEAS_TOL or gk_x > eta_k + FEAS_TOL:
            log.warning("feasibility chain violated at k=%d: g=%r g_k=%r eta_k=%r", k, g_x, gk_x, eta_k)

        rec = TraceRecord(
            k=k, eta_k=eta_k, psi=psi, g=g_x, g_k=gk_x, inner_iters=rep.iterations,
            dual_est=y, stat_resid=kk.stat_resid, cs_resid=kk.cs_resid,
            elapsed_s=time.perf_counter() - self.t0,
            step_norm=float(np.linalg.norm(dx)),
            dual_upper_bound=bound, bound_denominator=inp.denominator,
            gap_bound=rep.gap_bound, rho=rep.rho, zeta=rep.zeta, inner_budget=rep.budget,
            inner_path=rep.path if cfg.record_inner else None,
        )
        trace = state.trace
        trace.append(rec)
        return LcppState(k=k, x=x, eta_k=eta_k, g_x=g_x, last_majorant=(grad_h, h_sum), trace=trace,
                         bb_step=rep.final_step if rep.solver == "bb" else None)


def step(state: LcppState, cfg: LcppConfig, obj: Objective, pen: PenaltySpec, rng=None) -> LcppState:
    """One outer iteration from ``state`` (for callers driving the loop themselves)."""
    eta0 = resolve_eta0(cfg, pen)
    runner = _Runner(cfg, obj, pen, eta0, resolve_gamma(cfg, obj),
                     rng if rng is not None else np.random.default_rng(cfg.seed))
    return runner.step(state)


def initial_state(cfg: LcppConfig, obj: Objective, pen: PenaltySpec, x0=None) -> LcppState:
    eta0 = resolve_eta0(cfg, pen)
    x = np.zeros(obj.d) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (obj.d,):
        raise ConfigurationError(f"starting point must have length {obj.d}")
    gx = g_value(pen, x)
    if not gx < eta0:
        raise StartupError(f"starting point has g(x0)={gx!r}, which is not below eta0={eta0!r}")
    return LcppState(k=0, x=x, eta_k=eta0, g_x=gx)


def run(cfg: LcppConfig, obj: Objective, pen: PenaltySpec, x0=None) -> LcppResult:
    """Run the outer loop and report both the last iterate and a randomised pick.

    The pick is drawn uniformly from ``floor((K+1)/2) .. K`` using the run
    seed, before the loop starts.  If an early exit happens before the drawn
    index, the last iterate is used instead.
    """
    eta0 = resolve_eta0(cfg, pen)
    gamma = resolve_gamma(cfg, obj)
    state = initial_state(cfg, obj, pen, x0)
    pick_seq, inner_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    K = cfg.outer_iters
    pick = int(np.random.default_rng(pick_seq).integers((K + 1) // 2, K + 1)) if K > 0 else 0
    runner = _Runner(cfg, obj, pen, eta0, gamma, np.random.default_rng(inner_seq))

    x_pick = state.x.copy()
    stopped_early = False
    for _ in range(K):
        state = runner.step(state)
        if state.k == pick:
            x_pick = state.x.copy()
        if cfg.outer_tol is not None:
            rec = state.trace[-1]
            rel = rec.step_norm / max(1.0, float(np.linalg.norm(state.x)))
            if rel <= cfg.outer_tol and cfg.eta - state.eta_k <= cfg.level_tol and state.k < K:
                stopped_early = True
                break
    if state.k < pick:
        pick, x_pick = state.k, state.x.copy()

    def report(idx, x):
        if idx == 0:
            return kkt_report(obj, pen, x, 0.0, cfg.eta)
        rec = state.trace[idx - 1]
        return kkt_report(obj, pen, x, rec.dual_est, cfg.eta, dual_upper=rec.dual_upper_bound)

    return LcppResult(
        x_last=state.x, x_pick=x_pick, pick_index=pick, trace=state.trace,
        kkt=report(pick, x_pick), kkt_last=report(state.k, state.x),
        eta0=eta0, gamma=gamma, iterations=state.k, stopped_early=stopped_early,
    )


def with_inner(cfg: LcppConfig, **changes) -> LcppConfig:
    """Copy of ``cfg`` with fields of its inner config replaced."""
    return replace(cfg, inner=replace(cfg.inner, **changes))
