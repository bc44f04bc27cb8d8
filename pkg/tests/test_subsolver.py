import math

import numpy as np
import pytest

from lcpp.exceptions import ConfigurationError, InfeasibleError
from lcpp.objective import CustomObjective, Dataset, LogisticLoss
from lcpp.projection import ProjectionProblem, constraint_value, project
from lcpp.subsolver import (InnerConfig, SubproblemSpec, acsa_budget, certify, dual_from_last_step, solve_acsa,
                            solve_bb, solve_sgd)


def quad(center, d=None):
    center = np.atleast_1d(np.asarray(center, dtype=float))
    return CustomObjective(lambda x: 0.5 * float((x - center) @ (x - center)), lambda x: x - center,
                           d=center.size, mu=0.0, smooth_L=1.0)


@pytest.fixture(scope="module")
def desk_logistic():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(80, 15))
    b = np.sign(A @ rng.normal(size=15) + 0.3 * rng.normal(size=80))
    return LogisticLoss(Dataset(A, b))


def desk_spec(obj, gamma=0.05, seed=1):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.6, 0.6, obj.d)
    c = rng.normal(scale=0.1, size=obj.d)
    tau = constraint_value(c, u) + 1.0
    return SubproblemSpec(obj, c, gamma, u, tau, lambda_eff=2.0)


def reference_solution(spec, iters=10000):
    """Plain projected gradient with the exact smoothness constant of psi_k."""
    A = spec.objective.data.A
    L = 0.25 * np.linalg.norm(A, 2) ** 2 / A.shape[0] + spec.gamma
    x = spec.prox_center.copy()
    for _ in range(iters):
        x = spec.project(x - spec.grad(x) / L).x
    return x


class RecordingSpec(SubproblemSpec):
    def project(self, v):
        res = super().project(v)
        object.__getattribute__(self, "_seen").append(res.x.copy())
        return res


def recording(spec):
    rs = RecordingSpec(spec.objective, spec.prox_center, spec.gamma, spec.u, spec.tau, spec.lambda_eff)
    object.__setattr__(rs, "_seen", [])
    return rs


# ----------------------------------------------------------------------- BB
def test_bb_inactive_constraint_reaches_unconstrained_point():
    obj = quad([0.01, -0.02])
    spec = SubproblemSpec(obj, np.zeros(2), 1.0, np.zeros(2), 1e6, lambda_eff=1.0)
    rep = solve_bb(spec, InnerConfig(max_iters=50, tol=1e-12))
    assert np.allclose(rep.x_out, [0.005, -0.01], atol=1e-10)
    assert rep.dual_estimate == pytest.approx(0.0, abs=1e-12)


def test_bb_first_unit_step_is_the_projection():
    c = np.array([2.0, -1.0, 0.5])
    gamma = 1e-3
    x_prev = np.array([0.1, 0.0, 0.0])
    u = np.array([0.2, -0.3, 0.0])
    spec = SubproblemSpec(quad(c), x_prev, gamma, u, 1.0, lambda_eff=1.0)
    rep = solve_bb(spec, InnerConfig(max_iters=5, tol=1e-14), step0=1.0 / (1.0 + gamma))
    target = project(ProjectionProblem((c + gamma * x_prev) / (1.0 + gamma), u, 1.0)).x
    assert np.allclose(rep.x_out, target, atol=1e-12)


def test_bb_matches_long_run_reference(desk_logistic):
    spec = desk_spec(desk_logistic)
    ref = reference_solution(spec)
    rep = solve_bb(spec, InnerConfig(max_iters=500, tol=1e-12))
    assert spec.value(rep.x_out) - spec.value(ref) <= 1e-6


def test_bb_iterates_feasible_and_descending(desk_logistic):
    for seed in range(5):
        spec = recording(desk_spec(desk_logistic, seed=seed))
        rep = solve_bb(spec, InnerConfig(max_iters=40, memory=1))
        for x in spec._seen:
            assert constraint_value(x, spec.u) <= spec.tau + 1e-9
        assert spec.value(rep.x_out) <= spec.value(spec.prox_center) + 1e-12
        rep5 = solve_bb(desk_spec(desk_logistic, seed=seed), InnerConfig(max_iters=40))
        assert spec.value(rep5.x_out) <= spec.value(spec.prox_center) + 1e-12


def test_certified_gap_is_valid(desk_logistic):
    spec = desk_spec(desk_logistic, gamma=0.5)
    ref = reference_solution(spec)
    for iters in (1, 3, 10, 30):
        rep = solve_bb(spec, InnerConfig(max_iters=iters, tol=0.0))
        gap = spec.value(rep.x_out) - spec.value(ref)
        assert gap <= rep.gap_bound + 1e-12
        assert rep.rho == 0.0 and rep.zeta == rep.gap_bound


# --------------------------------------------------------------- dual estimate
def test_dual_estimate_one_dimensional():
    # psi = 0.5 (x-3)^2, gamma = 1, center 0, constraint 2|x| <= 2.  At x = 1 the
    # gradient of psi_k is -1, so the multiplier of |x| <= 1 is 1 and that of 2|x| <= 2 is 0.5
    spec = SubproblemSpec(quad([3.0]), np.zeros(1), 1.0, np.zeros(1), 1.0, lambda_eff=2.0)
    rep = solve_bb(spec, InnerConfig(max_iters=100, tol=1e-14))
    assert rep.x_out[0] == pytest.approx(1.0, abs=1e-12)
    assert rep.dual_estimate == pytest.approx(0.5, abs=1e-6)


def test_dual_estimate_step_invariance():
    spec = SubproblemSpec(quad([3.0, -1.0]), np.zeros(2), 1.0, np.array([0.2, 0.0]), 1.0, lambda_eff=1.5)
    x = solve_bb(spec, InnerConfig(max_iters=100, tol=1e-14)).x_out
    g = spec.grad(x)
    ests, ys = [], []
    for alpha in (0.1, 0.2, 0.4):
        pr = spec.project(x - alpha * g)
        assert np.allclose(pr.x, x, atol=1e-10)
        ys.append(pr.y)
        ests.append(dual_from_last_step(pr, alpha, 1.5))
    assert ys[1] == pytest.approx(2 * ys[0]) and ys[2] == pytest.approx(2 * ys[1])
    assert max(ests) - min(ests) <= 1e-9
    assert dual_from_last_step(spec.project(np.zeros(2)), 0.3, 1.5) == 0.0
    with pytest.raises(ConfigurationError):
        dual_from_last_step(pr, 0.0, 1.0)


def test_certify_inactive_uses_plain_gradient():
    spec = SubproblemSpec(quad([0.1]), np.zeros(1), 1.0, np.zeros(1), 10.0)
    bound, y = certify(spec, np.array([0.0]))
    assert y == 0.0 and bound == pytest.approx(0.1 ** 2 / 2.0)


# ---------------------------------------------------------------------- AC-SA
def nonconvex_separable(d=10, sigma=0.0):
    c = np.linspace(-1, 1, d)

    def val(x):
        return float(np.sum(np.log1p((x - c) ** 2)))

    def grad(x):
        return 2 * (x - c) / (1 + (x - c) ** 2)

    def noisy(x, rng):
        return grad(x) + sigma * rng.standard_normal(d) / math.sqrt(d)

    return CustomObjective(val, grad, d=d, mu=0.25, smooth_L=2.0, sigma=sigma, stoch_grad_fn=noisy)


def test_acsa_budget_formulas():
    obj = nonconvex_separable()
    T = acsa_budget(obj, 0.75, outer_iters=50)
    assert T == math.ceil(2 * math.sqrt(2.0 / 0.25 + 3))
    assert acsa_budget(obj, 0.75, outer_iters=5000) == T
    noisy = nonconvex_separable(sigma=2.0)
    assert acsa_budget(noisy, 0.75, outer_iters=40, batch_size=1) == 80
    assert acsa_budget(noisy, 0.75, outer_iters=80, batch_size=1) == 160
    assert acsa_budget(noisy, 0.75, outer_iters=80, batch_size=4) == 80
    convex = quad(np.zeros(2))
    assert acsa_budget(convex, 0.1, outer_iters=1, beta=0.1) == math.ceil(2 * math.sqrt(2 * 1.1 / 0.1))


def test_acsa_one_dimensional_quadratic():
    # psi_k = (x - 0.3)^2 + gamma/2 (x - c)^2 has its minimiser inside the feasible set
    obj = CustomObjective(lambda x: float((x[0] - 0.3) ** 2), lambda x: 2 * (x - 0.3), d=1, smooth_L=2.0)
    gamma, c = 0.5, np.array([-0.4])
    spec = SubproblemSpec(obj, c, gamma, np.zeros(1), 5.0)
    xstar = (0.6 + gamma * c[0]) / (2 + gamma)
    fstar = spec.value(np.array([xstar]))
    prev = math.inf
    for T in (1, 4, 16, 64):
        rep = solve_acsa(spec, InnerConfig(solver="acsa", acsa_iters=T))
        gap = spec.value(rep.x_out) - fstar
        assert gap <= 0.5 * rep.rho * (xstar - c[0]) ** 2 + rep.zeta + 1e-15
        assert gap <= prev + 1e-15
        prev = gap
        # strong convexity turns the value bound into a distance bound
        bound = 0.5 * rep.rho * (xstar - c[0]) ** 2 + rep.zeta
        assert (rep.x_out[0] - xstar) ** 2 <= 2 * bound / spec.strong_convexity + 1e-15


def test_acsa_contract_audit_deterministic(desk_logistic):
    spec = desk_spec(desk_logistic, gamma=0.3)
    ref = reference_solution(spec)
    for T in (5, 20, 80):
        rep = solve_acsa(spec, InnerConfig(solver="acsa", acsa_iters=T))
        gap = spec.value(rep.x_out) - spec.value(ref)
        assert gap <= 0.5 * rep.rho * float(np.sum((ref - spec.prox_center) ** 2)) + rep.zeta + 1e-12
        assert constraint_value(rep.x_out, spec.u) <= spec.tau + 1e-9


def test_acsa_contract_audit_stochastic(desk_logistic):
    spec = desk_spec(desk_logistic, gamma=0.3)
    ref = reference_solution(spec)
    gaps, bound = [], None
    for seed in range(20):
        rep = solve_acsa(spec, InnerConfig(solver="acsa", acsa_iters=100, batch_size=4), rng=np.random.default_rng(seed))
        gaps.append(spec.value(rep.x_out) - spec.value(ref))
        bound = 0.5 * rep.rho * float(np.sum((ref - spec.prox_center) ** 2)) + rep.zeta
    assert np.mean(gaps) <= bound


def test_acsa_feasible_iterates(desk_logistic):
    spec = recording(desk_spec(desk_logistic))
    solve_acsa(spec, InnerConfig(solver="acsa", acsa_iters=30, batch_size=8))
    assert len(spec._seen) == 30
    assert all(constraint_value(x, spec.u) <= spec.tau + 1e-9 for x in spec._seen)


def test_acsa_requires_strong_convexity():
    spec = SubproblemSpec(nonconvex_separable(), np.zeros(10), 0.2, np.zeros(10), 1.0)
    with pytest.raises(ConfigurationError):
        solve_acsa(spec, InnerConfig(solver="acsa", acsa_iters=3))
    with pytest.raises(ConfigurationError):
        InnerConfig(solver="acsa", acsa_iters=0)


# ------------------------------------------------------------------------ SGD
def test_sgd_full_batch_is_projected_gradient(desk_logistic):
    spec = desk_spec(desk_logistic)
    cfg = InnerConfig(solver="sgd", max_iters=25, sgd_average=False)
    rep = solve_sgd(spec, cfg)
    L = spec.objective.smooth_L + spec.gamma
    m = spec.gamma
    x = spec.prox_center.copy()
    for t in range(1, 26):
        x = spec.project(x - min(1 / L, 1 / (m * t)) * spec.grad(x)).x
    assert np.allclose(rep.x_out, x, atol=1e-14)


def test_sgd_reproducible(desk_logistic):
    spec = desk_spec(desk_logistic)
    cfg = InnerConfig(solver="sgd", max_iters=50, batch_size=5, seed=4)
    a, b = solve_sgd(spec, cfg), solve_sgd(spec, cfg)
    assert np.array_equal(a.x_out, b.x_out)


def test_sgd_close_to_reference(desk_logistic):
    spec = desk_spec(desk_logistic, gamma=0.5)
    ref = solve_bb(spec, InnerConfig(max_iters=2000, tol=1e-14)).x_out
    rep = solve_sgd(spec, InnerConfig(solver="sgd", max_iters=1000, batch_size=8, seed=0))
    assert spec.value(rep.x_out) - spec.value(ref) <= 1e-2
    assert constraint_value(rep.x_out, spec.u) <= spec.tau + 1e-9


# ------------------------------------------------------------------ validation
def test_subproblem_validation():
    obj = quad([1.0])
    with pytest.raises(InfeasibleError):
        SubproblemSpec(obj, np.array([2.0]), 1.0, np.zeros(1), 1.0)
    with pytest.raises(InfeasibleError):
        SubproblemSpec(obj, np.zeros(1), 1.0, np.zeros(1), 0.0)
    with pytest.raises(ConfigurationError):
        SubproblemSpec(obj, np.zeros(1), 0.0, np.zeros(1), 1.0)
    with pytest.raises(ConfigurationError):
        InnerConfig(solver="nag")
