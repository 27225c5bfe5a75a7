"""Per-slot decision rules: Backpressure, OLAC, OLAC2.

All three maximize  -V*f(s, x) + sum_j w_j * (mu_j(s, x) - A_j(s, x))
over the state's actions; they differ in the weight vector w and in what they
learn. Backpressure weighs by the queue backlog. OLAC weighs by the effective
backlog q + beta - theta, where beta is the learned multiplier and theta a
positive offset that lets the weights dip below the optimal multiplier
(enabling under-provisioned actions). OLAC2 runs Backpressure weights over
LIFO queues and performs a one-shot learn-and-adjust at slot T_l = round(V^c).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dual import DualSolverConfig, maximize_dual
from .learning import EmpiricalDistribution
from .model import NetworkInstance

__all__ = [
    "BACKPRESSURE",
    "OLAC",
    "OLAC2",
    "ControllerConfig",
    "bp_decide",
    "olac_decide",
    "Olac2Step",
    "olac2_step",
    "default_tracking_solver",
    "default_oneshot_solver",
]

BACKPRESSURE = "Backpressure"
OLAC = "OLAC"
OLAC2 = "OLAC2"
KINDS = (BACKPRESSURE, OLAC, OLAC2)


def default_tracking_solver(instance: NetworkInstance, V: float) -> DualSolverConfig:
    """Per-slot re-solve budget: cheap once warm, capped during early learning."""
    return DualSolverConfig(
        max_iterations=150,
        step_params=(V * instance.delta_max, 10.0),
        tolerance=1e-7 * max(1.0, V),
        window=8,
    )


def default_oneshot_solver(instance: NetworkInstance, V: float) -> DualSolverConfig:
    """Full-budget cold solve for the single learn step of OLAC2."""
    a = V * instance.delta_max
    return DualSolverConfig(
        max_iterations=max(5000, int(4 * a)),
        step_params=(a, 10.0),
        tolerance=1e-9 * max(1.0, V),
        window=800,
    )


@dataclass
class ControllerConfig:
    """Which rule to run and its knobs; unused knobs are ignored per kind."""

    kind: str
    V: float
    theta: np.ndarray | None = None          # OLAC; default (log V)^2 per queue
    theta_log_base: float = math.e
    c: float = 2.0 / 3.0                     # OLAC2 learn-time exponent
    relearn_period: int = 1                  # OLAC re-solve cadence
    solver: DualSolverConfig | None = None   # None: kind-appropriate default
    discipline: str | None = None            # None: FIFO (OLAC/BP), LIFO (OLAC2)
    prior: np.ndarray | None = None          # pseudo-counts for the empirical dist

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.V < 1:
            raise ValueError("V must be >= 1")
        if self.kind == OLAC2 and not 0 <= self.c < 1:
            raise ValueError("c must lie in [0, 1)")

    def resolved_theta(self, r: int) -> np.ndarray:
        if self.theta is not None:
            theta = np.asarray(self.theta, dtype=float)
            if theta.shape != (r,):
                raise ValueError(f"theta has shape {theta.shape}, expected ({r},)")
            if (theta <= 0).any():
                raise ValueError("theta must be componentwise positive")
            return theta
        return np.full(r, (math.log(self.V, self.theta_log_base)) ** 2 if self.V > 1 else 1.0)

    def resolved_discipline(self) -> str:
        if self.discipline is not None:
            if self.kind == OLAC and self.discipline != "FIFO":
                raise ValueError("OLAC requires FIFO queueing")
            if self.kind == OLAC2 and self.discipline != "LIFO":
                raise ValueError("OLAC2 requires LIFO queueing")
            return self.discipline
        return "LIFO" if self.kind == OLAC2 else "FIFO"

    def learn_slot(self) -> int:
        """OLAC2's one-shot learn time T_l = round(V^c), at least 1."""
        return max(1, round(self.V**self.c))


def _decide_weighted(instance: NetworkInstance, state_id: int, weights: np.ndarray, V: float) -> int:
    if not 0 <= state_id < instance.M:
        raise KeyError(f"unknown state id {state_id}")
    if instance.action_counts[state_id] == 0:
        raise ValueError(f"state {state_id} has no actions")
    # padded actions have cost +inf, hence score -inf; never selected
    scores = -V * instance.costs[state_id] - instance.drift[state_id] @ weights
    return int(np.argmax(scores))


def bp_decide(instance: NetworkInstance, state_id: int, q, V: float) -> int:
    """Max-weight rule: argmax of -V*f + q.(mu - A); ties to the smallest id."""
    q = np.asarray(q, dtype=float)
    if (q < 0).any():
        raise ValueError("queue backlog must be non-negative")
    return _decide_weighted(instance, state_id, q, V)


def olac_decide(instance: NetworkInstance, state_id: int, q, beta, theta, V: float) -> int:
    """Backpressure rule on the effective backlog q + beta - theta (unclamped)."""
    q = np.asarray(q, dtype=float)
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if (q < 0).any() or (beta < 0).any():
        raise ValueError("q and beta must be non-negative")
    if (theta <= 0).any():
        raise ValueError("theta must be positive")
    return _decide_weighted(instance, state_id, q + beta - theta, V)


@dataclass
class Olac2Step:
    action: int
    adjustment: np.ndarray | None = None
    solver_converged: bool | None = None


def olac2_step(
    instance: NetworkInstance,
    state_id: int,
    slot: int,
    q,
    ed: EmpiricalDistribution,
    cfg: ControllerConfig,
) -> Olac2Step:
    """Backpressure action, plus the one-shot backlog target at slot T_l.

    At slot T_l the empirical dual over the observations so far is solved and
    its maximizer returned as the adjustment target; the engine applies the
    adjustment before serving the slot.
    """
    action = bp_decide(instance, state_id, q, cfg.V)
    if slot == cfg.learn_slot():
        solver = cfg.solver or default_oneshot_solver(instance, cfg.V)
        result = maximize_dual(instance, ed.estimate(), cfg.V, solver)
        return Olac2Step(action=action, adjustment=result.gamma, solver_converged=result.converged)
    return Olac2Step(action=action)
