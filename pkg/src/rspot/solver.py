"""Margin-constrained RSP: block-coordinate ascent on the Lagrangian dual.

The input and output flow constraints are priced by Lagrange multipliers
that act as extra costs on the supernode edges (augmented costs). Each
sweep sets the input multipliers in closed form from the backward
variables, re-solves, then sets the output multipliers from the forward
variables. Both updates are exact maximizations of the concave dual over
their block, so the dual never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, NumericalError
from .extended import ExtendedGraph
from .rsp import RspSystem, build_system, edge_flows, expected_cost, optimal_policy

DUAL_BREAKDOWN = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    theta: float
    tol: float = 1e-8
    max_iter: int = 10000
    track_dual: bool = True

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be strictly positive, got {self.theta}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


def _center(lam, sigma):
    return lam - np.dot(sigma, lam)


def update_lambda_in(z_backward, sigma_in, theta):
    """Input multipliers ``log(z_kn) / theta``, centered on the ``sigma_in`` mean.

    ``z_backward`` and ``sigma_in`` are restricted to the input nodes.
    """
    z = np.asarray(z_backward, dtype=float)
    if np.any(z <= 0):
        raise NumericalError("non-positive backward variable at an input node")
    return _center(np.log(z) / theta, np.asarray(sigma_in, dtype=float))


def update_lambda_out(z_forward, sigma_out, p_sink, theta):
    """Output multipliers ``(log z_1l - log(sigma_l / p_ln)) / theta``, centered.

    All arguments are restricted to the output nodes; ``p_sink`` holds the
    reference transition probabilities into the target supernode.
    """
    z = np.asarray(z_forward, dtype=float)
    sigma = np.asarray(sigma_out, dtype=float)
    p_sink = np.asarray(p_sink, dtype=float)
    if np.any(p_sink <= 0):
        raise NumericalError("output node not wired to sink")
    if np.any(z <= 0):
        raise NumericalError("non-positive forward variable at an output node")
    return _center((np.log(z) - np.log(sigma / p_sink)) / theta, sigma)


def dual_value(sys: RspSystem, lambda_in, lambda_out, sigma_in, sigma_out, theta=None) -> float:
    """``-log(Z')/theta - lambda_in . sigma_in - lambda_out . sigma_out``."""
    theta = sys.theta if theta is None else theta
    return float(
        -np.log(sys.partition) / theta - np.dot(lambda_in, sigma_in) - np.dot(lambda_out, sigma_out)
    )


@dataclass(frozen=True, eq=False)
class MarginSolution:
    """Converged multipliers, augmented costs and optimal policy.

    ``system`` is the RSP system on the final augmented costs, from which
    flows, the partition function and the coupling are derived.
    """

    ext: ExtendedGraph
    config: SolverConfig
    lambda_in: np.ndarray
    lambda_out: np.ndarray
    augmented_costs: np.ndarray
    policy: np.ndarray
    system: RspSystem
    iterations: int
    converged: bool = True
    dual_trace: list = field(default_factory=list)
    normalization_trace: list = field(default_factory=list)

    @property
    def flows(self):
        return edge_flows(self.system)

    def residuals(self):
        """Constraint residuals ``(max |n_1i - s_in|, max |n_jn - s_out|)``."""
        return constraint_residuals(self.system, self.ext)

    def report(self) -> dict:
        r_in, r_out = self.residuals()
        c_aug, c_real = expected_costs_match(self)
        return {
            "theta": self.config.theta,
            "tol": self.config.tol,
            "max_iter": self.config.max_iter,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_in": r_in,
            "residual_out": r_out,
            "lambda_in": {self.ext.label(k): float(v) for k, v in zip(self.ext.inputs, self.lambda_in)},
            "lambda_out": {self.ext.label(k): float(v) for k, v in zip(self.ext.outputs, self.lambda_out)},
            "expected_cost": c_real,
            "expected_augmented_cost": c_aug,
            "free_energy": -float(np.log(self.system.partition)) / self.config.theta,
            "dual_trace": [float(v) for v in self.dual_trace],
            "extended_graph": {
                "provenance": self.ext.provenance,
                "mu": self.ext.mu,
                "mu_lower_bound": self.ext.mu_bound,
            },
        }


def _margin_flows(sys: RspSystem, ext: ExtendedGraph):
    z = sys.partition
    n_in = sys.W[ext.source, ext.inputs] * sys.z_backward[ext.inputs] / z
    n_out = sys.z_forward[ext.outputs] * sys.W[ext.outputs, ext.target] / z
    return n_in, n_out


def slackness(sys: RspSystem, ext: ExtendedGraph, lambda_in, lambda_out) -> float:
    """``lambda_in . (n_in - sigma_in) + lambda_out . (n_out - sigma_out)``.

    Equals the expected augmented cost minus the expected real cost.
    """
    n_in, n_out = _margin_flows(sys, ext)
    return float(np.dot(lambda_in, n_in - ext.sigma_in) + np.dot(lambda_out, n_out - ext.sigma_out))


def constraint_residuals(sys: RspSystem, ext: ExtendedGraph):
    n_in, n_out = _margin_flows(sys, ext)
    return (
        float(np.max(np.abs(n_in - ext.sigma_in))),
        float(np.max(np.abs(n_out - ext.sigma_out))),
    )


def solve_margins(ext: ExtendedGraph, cfg: SolverConfig) -> MarginSolution:
    """Run the dual block-coordinate ascent to convergence.

    Convergence is declared when the infinity-norm change of the stacked
    multipliers over one full sweep falls below ``cfg.tol`` and the
    complementary-slackness term ``|lambda . (n - sigma)|`` is below
    ``cfg.tol`` as well. The second test is what makes the expected
    augmented cost agree with the expected real cost to ``tol``; the
    multiplier change alone can stop a little early when the multipliers
    are spread over several units.

    Raises
    ------
    ConvergenceError
        After ``cfg.max_iter`` sweeps, carrying the last multipliers and
        the constraint residuals.
    NumericalError
        If a linear solve fails or the dual drops by more than 1e-6.
    """
    theta = cfg.theta
    p = ext.transitions
    src, tgt = ext.source, ext.target
    ins, outs = ext.inputs, ext.outputs
    s_in, s_out = ext.sigma_in, ext.sigma_out
    p_sink = p[outs, tgt]

    lam_in = np.zeros(ins.size)
    lam_out = np.zeros(outs.size)
    cost = np.array(ext.costs, dtype=float)
    sys = build_system(p, cost, theta, src, tgt)
    trace = [dual_value(sys, lam_in, lam_out, s_in, s_out)] if cfg.track_dual else []
    norms = []
    best = trace[0] if trace else None

    def record(sys_now):
        nonlocal best
        if not cfg.track_dual:
            return
        d = dual_value(sys_now, lam_in, lam_out, s_in, s_out)
        if d < best - DUAL_BREAKDOWN:
            raise NumericalError(
                f"dual decreased from {best:.12g} to {d:.12g}: numerical breakdown (underflow?)"
            )
        best = max(best, d)
        trace.append(d)

    for it in range(1, int(cfg.max_iter) + 1):
        new_in = update_lambda_in(sys.z_backward[ins], s_in, theta)
        change = np.max(np.abs(new_in - lam_in))
        lam_in = new_in
        cost[src, ins] = ext.costs[src, ins] + lam_in
        sys = build_system(p, cost, theta, src, tgt)
        record(sys)

        new_out = update_lambda_out(sys.z_forward[outs], s_out, p_sink, theta)
        change = max(change, np.max(np.abs(new_out - lam_out)))
        lam_out = new_out
        cost[outs, tgt] = ext.costs[outs, tgt] + lam_out
        sys = build_system(p, cost, theta, src, tgt)
        record(sys)
        norms.append((float(np.dot(lam_in, s_in)), float(np.dot(lam_out, s_out))))

        if change < cfg.tol and abs(slackness(sys, ext, lam_in, lam_out)) < cfg.tol:
            break
    else:
        raise ConvergenceError(
            f"no convergence after {cfg.max_iter} sweeps (last change {change:.3g})",
            lambda_in=lam_in,
            lambda_out=lam_out,
            residuals=constraint_residuals(sys, ext),
        )

    cost.setflags(write=False)
    return MarginSolution(
        ext=ext,
        config=cfg,
        lambda_in=lam_in,
        lambda_out=lam_out,
        augmented_costs=cost,
        policy=optimal_policy(sys),
        system=sys,
        iterations=it,
        dual_trace=trace,
        normalization_trace=norms,
    )


def expected_costs_match(sol: MarginSolution):
    """Expected augmented cost and expected real cost over the same flows."""
    n = edge_flows(sol.system).edge_flows
    return expected_cost(n, sol.augmented_costs), expected_cost(n, sol.ext.costs)
