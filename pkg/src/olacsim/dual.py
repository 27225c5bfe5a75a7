"""Dual function evaluation and maximization, plus exact primal-side oracles.

The dual of the static problem  min V * sum_i pi_i * f(i, x_i)  subject to
average arrivals <= average services is separable over states:

    g(gamma) = sum_i pi_i * min_x [ V*f(i,x) + gamma . (A(i,x) - mu(i,x)) ]

g is concave piecewise-linear in gamma; it is maximized here by projected
supergradient ascent. The same static problem is solved exactly as a linear
program over per-state action mixtures (the primal oracle), which also yields
the optimal multiplier through its dual prices. Analysis constants (slack
eta_0, polyhedral decay rho, attraction radius D_p) are derived from these
oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._simplex import solve_lp
from .model import NetworkInstance

__all__ = [
    "Multiplier",
    "DualSolverConfig",
    "DualSolveResult",
    "RandomizedPolicy",
    "PrimalSolution",
    "AnalysisConstants",
    "InstanceAnalysis",
    "InfeasibleInstanceError",
    "per_state_dual",
    "dual_value",
    "supergradient",
    "maximize_dual",
    "primal_oracle",
    "max_slack",
    "estimate_polyhedral_rho",
    "compute_analysis",
]

# A multiplier estimate is just a non-negative r-vector.
Multiplier = np.ndarray


class InfeasibleInstanceError(RuntimeError):
    """The static problem admits no stabilizing mixture (no slack)."""


@dataclass
class DualSolverConfig:
    """Projected supergradient ascent settings.

    step_rule "diminishing" uses a/(b + step_offset + k) at inner iteration k;
    "fixed" uses step_params[0]. step_params None defaults to
    (V * delta_max, 10). The ascent stops once the best value has not improved
    by more than ``tolerance`` over ``window`` consecutive iterations.
    ``step_offset`` shifts the diminishing schedule, which lets warm-started
    re-solves continue a schedule instead of restarting it.
    """

    max_iterations: int = 4000
    step_rule: str = "diminishing"
    step_params: tuple[float, ...] | None = None
    tolerance: float = 1e-9
    window: int = 200
    warm_start: np.ndarray | None = None
    step_offset: int = 0


@dataclass
class DualSolveResult:
    gamma: np.ndarray
    value: float
    converged: bool
    iterations: int


@dataclass
class RandomizedPolicy:
    """Per-state probability vectors over that state's actions."""

    per_state: list[np.ndarray]

    def validate(self, tol=1e-9) -> bool:
        return all(
            v.min(initial=0.0) >= -tol and abs(v.sum() - 1.0) <= tol for v in self.per_state
        )


@dataclass
class PrimalSolution:
    f_av_star: float
    policy: RandomizedPolicy
    multiplier_v1: np.ndarray  # optimal dual prices of the V=1 problem


@dataclass
class AnalysisConstants:
    B: float
    eta: float
    rho_hat: float
    D_p: float
    f_max: float


@dataclass
class InstanceAnalysis:
    """Everything the harness precomputes once per (instance, V)."""

    V: float
    f_av_star: float
    gamma_star: np.ndarray
    g_star: float
    eta_0: float
    constants: AnalysisConstants
    policy: RandomizedPolicy = field(repr=False, default=None)

    @property
    def xi(self) -> float:
        """Multiplier magnitude bound V*f_max/eta_0 (inf without slack)."""
        if self.eta_0 <= 0:
            return math.inf
        return self.V * self.constants.f_max / self.eta_0

    @property
    def polyhedral_confirmed(self) -> bool:
        return self.constants.rho_hat > 0


def _check_dims(instance: NetworkInstance, gamma, dist=None):
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (instance.r,):
        raise ValueError(f"multiplier has shape {gamma.shape}, expected ({instance.r},)")
    if dist is not None:
        dist = np.asarray(dist, dtype=float)
        if dist.shape != (instance.M,):
            raise ValueError(f"distribution has shape {dist.shape}, expected ({instance.M},)")
        return gamma, dist
    return gamma


def per_state_dual(instance: NetworkInstance, state_id: int, gamma, V: float):
    """Minimum of V*f + gamma.(A - mu) over one state's actions.

    Returns (value, argmin action id); exact ties go to the smallest id.
    """
    gamma = _check_dims(instance, gamma)
    if not 0 <= state_id < instance.M:
        raise KeyError(f"unknown state id {state_id}")
    if instance.action_counts[state_id] == 0:
        raise ValueError(f"state {state_id} has no actions")
    scores = V * instance.costs[state_id] + instance.drift[state_id] @ gamma
    k = int(np.argmin(scores))
    return float(scores[k]), k


def dual_value(instance: NetworkInstance, dist, gamma, V: float) -> float:
    """Distribution-weighted sum of per-state dual values."""
    gamma, dist = _check_dims(instance, gamma, dist)
    scores = V * instance.costs + instance.drift @ gamma
    return float(dist @ scores.min(axis=1))


def supergradient(instance: NetworkInstance, dist, gamma, V: float) -> np.ndarray:
    """A supergradient of the concave dual at gamma: the mean selected drift."""
    gamma, dist = _check_dims(instance, gamma, dist)
    scores = V * instance.costs + instance.drift @ gamma
    sel = scores.argmin(axis=1)
    return dist @ instance.drift[np.arange(instance.M), sel]


def maximize_dual(instance: NetworkInstance, dist, V: float, cfg: DualSolverConfig | None = None) -> DualSolveResult:
    """Projected supergradient ascent on gamma >= 0, tracking the best iterate.

    Subgradient steps are not monotone, so the best iterate by value (the warm
    start counts as iterate zero) is returned, together with a convergence
    flag that is False when the iteration cap was reached before the
    improvement-based stop triggered.
    """
    cfg = cfg or DualSolverConfig()
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (instance.M,):
        raise ValueError(f"distribution has shape {dist.shape}, expected ({instance.M},)")
    r = instance.r
    M, K = instance.costs.shape
    base = (V * instance.costs).ravel()
    drift2 = instance.drift.reshape(M * K, r)
    row0 = np.arange(M) * K

    if cfg.step_rule == "diminishing":
        if cfg.step_params is None:
            a, b = V * instance.delta_max, 10.0
        else:
            a, b = cfg.step_params
    elif cfg.step_rule == "fixed":
        a, b = (cfg.step_params or (1.0,))[0], None
    else:
        raise ValueError(f"unknown step rule {cfg.step_rule!r}")

    gamma = np.zeros(r) if cfg.warm_start is None else np.asarray(cfg.warm_start, dtype=float).copy()
    if gamma.shape != (r,):
        raise ValueError(f"warm start has shape {gamma.shape}, expected ({r},)")

    def evaluate(g):
        scores = base + drift2 @ g
        sel = scores.reshape(M, K).argmin(axis=1)
        rows = row0 + sel
        return float(dist @ scores[rows]), dist @ drift2[rows]

    best_value, grad = evaluate(gamma)
    best_gamma = gamma.copy()
    last_improve = 0
    converged = False
    iterations = 0
    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        step = a / (b + cfg.step_offset + it) if b is not None else a
        gamma = np.maximum(gamma + step * grad, 0.0)
        value, grad = evaluate(gamma)
        if value > best_value + cfg.tolerance:
            best_value = value
            best_gamma = gamma.copy()
            last_improve = it
        if it - last_improve >= cfg.window:
            converged = True
            break
    return DualSolveResult(best_gamma, best_value, converged, iterations)


def _policy_lp_columns(instance: NetworkInstance, dist):
    """Flattened mixture-variable LP data: objective and constraint rows."""
    dist = np.asarray(dist, dtype=float)
    counts = instance.action_counts
    n = int(counts.sum())
    c = np.empty(n)
    a_ub = np.empty((instance.r, n))
    a_eq = np.zeros((instance.M, n))
    pos = 0
    for i in range(instance.M):
        k = int(counts[i])
        c[pos : pos + k] = dist[i] * instance.costs[i, :k]
        a_ub[:, pos : pos + k] = dist[i] * instance.drift[i, :k].T
        a_eq[i, pos : pos + k] = 1.0
        pos += k
    return c, a_ub, a_eq, counts


def primal_oracle(instance: NetworkInstance, dist, V: float = 1.0) -> PrimalSolution:
    """Exact solution of the static problem over randomized per-state policies.

    Minimizes the mean cost subject to mean arrivals <= mean services, as a
    dense LP over the per-state mixture weights. Returns the unscaled optimum
    (no V factor) and an optimal policy; the LP dual prices give the optimal
    multiplier of the V=1 problem.
    """
    c, a_ub, a_eq, counts = _policy_lp_columns(instance, dist)
    res = solve_lp(c, a_ub=a_ub, b_ub=np.zeros(instance.r), a_eq=a_eq, b_eq=np.ones(instance.M))
    if res.status == "infeasible":
        raise InfeasibleInstanceError("no randomized policy satisfies the rate constraints")
    if res.status != "optimal":
        raise RuntimeError(f"primal oracle LP ended with status {res.status}")
    per_state = []
    pos = 0
    for i in range(instance.M):
        k = int(counts[i])
        per_state.append(np.maximum(res.x[pos : pos + k], 0.0))
        pos += k
    return PrimalSolution(
        f_av_star=float(res.objective),
        policy=RandomizedPolicy(per_state),
        multiplier_v1=np.maximum(res.duals_ub, 0.0),
    )


def max_slack(instance: NetworkInstance, dist) -> float:
    """Largest eta with mean arrivals <= mean services - eta under some policy.

    May be <= 0, which signals that no randomized policy stabilizes the given
    distribution with slack.
    """
    c, a_ub, a_eq, _ = _policy_lp_columns(instance, dist)
    n = c.size
    # maximize eta (free) -> split eta = ep - en, minimize -(ep - en)
    c_full = np.concatenate([np.zeros(n), [-1.0, 1.0]])
    a_ub_full = np.hstack([a_ub, np.ones((instance.r, 1)), -np.ones((instance.r, 1))])
    a_eq_full = np.hstack([a_eq, np.zeros((instance.M, 2))])
    res = solve_lp(c_full, a_ub=a_ub_full, b_ub=np.zeros(instance.r),
                   a_eq=a_eq_full, b_eq=np.ones(instance.M))
    if res.status != "optimal":
        raise RuntimeError(f"slack LP ended with status {res.status}")
    return float(-res.objective)


def estimate_polyhedral_rho(
    instance: NetworkInstance,
    dist,
    V: float,
    gamma_star,
    sample_count: int = 512,
    radius: float | None = None,
    seed: int = 0,
) -> float:
    """Sampled lower-decay-rate of the dual around its maximizer.

    Draws points on shells of distance up to ``radius`` around gamma_star
    (projected onto the non-negative orthant) and returns the minimum of
    (g(gamma_star) - g(gamma)) / ||gamma_star - gamma||. Non-positive output
    flags that the polyhedral decay condition is not numerically confirmed.
    This is a probe, not a proof.
    """
    gamma_star = np.asarray(gamma_star, dtype=float)
    if radius is None:
        radius = max(1.0, 0.05 * float(np.linalg.norm(gamma_star)))
    rng = np.random.default_rng(seed)
    g_star = dual_value(instance, dist, gamma_star, V)
    rho = math.inf
    for _ in range(sample_count):
        direction = rng.normal(size=instance.r)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        point = np.maximum(gamma_star + (radius * rng.random()) * direction / norm, 0.0)
        d = float(np.linalg.norm(point - gamma_star))
        if d < 1e-6:
            continue
        rho = min(rho, (g_star - dual_value(instance, dist, point, V)) / d)
    return float(rho) if math.isfinite(rho) else 0.0


def compute_analysis(
    instance: NetworkInstance,
    dist,
    V: float,
    solver_cfg: DualSolverConfig | None = None,
    rho_samples: int = 512,
    rho_radius: float | None = None,
    rho_seed: int = 0,
    eta_fraction: float = 0.1,
) -> InstanceAnalysis:
    """Oracle bundle per (instance, V): optimum, multiplier, slack, constants.

    The ascent is warm-started at the LP dual prices scaled by V; by weak
    duality its value can never exceed V*f_av_star, so equality certifies both
    oracles at once.

    eta = eta_fraction * rho_hat; any fraction in (0, 1) yields a valid drift
    margin. D_p = (B - eta^2)/(2(rho_hat - eta)) is increasing in eta, so the
    small default keeps the convergence-measurement radius close to its
    minimum B/(2 rho_hat), which matters on instances whose dual has shallow
    directions (large D_p otherwise swallows the whole approach path).
    """
    primal = primal_oracle(instance, dist)
    warm = V * primal.multiplier_v1
    cfg = solver_cfg or DualSolverConfig(max_iterations=2000, window=100)
    res = maximize_dual(instance, dist, V, replace(cfg, warm_start=warm))
    eta_0 = max_slack(instance, dist)
    rho_hat = estimate_polyhedral_rho(
        instance, dist, V, res.gamma, sample_count=rho_samples, radius=rho_radius, seed=rho_seed
    )
    if rho_hat > 0:
        if not 0 < eta_fraction < 1:
            raise ValueError("eta_fraction must lie in (0, 1)")
        eta = eta_fraction * rho_hat
        d_p = (instance.B - eta**2) / (2.0 * (rho_hat - eta))
    else:
        eta = math.nan
        d_p = math.nan
    constants = AnalysisConstants(B=instance.B, eta=eta, rho_hat=rho_hat, D_p=d_p, f_max=instance.f_max)
    return InstanceAnalysis(
        V=V,
        f_av_star=primal.f_av_star,
        gamma_star=res.gamma,
        g_star=res.value,
        eta_0=eta_0,
        constants=constants,
        policy=primal.policy,
    )
