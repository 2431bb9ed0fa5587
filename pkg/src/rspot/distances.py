"""Coupling matrix and margin-constrained bag-of-paths surprisal distance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .extended import MarginSpec, build_extended
from .graph import Graph
from .rsp import _Factorized
from .solver import MarginSolution, SolverConfig, solve_margins

SCHEMES = ("uniform", "degree", "inverse_degree")
_SCHEME_ALIASES = {"invdeg": "inverse_degree", "inverse-degree": "inverse_degree"}
OFFDIAG_MASS_WARN = 1e-6


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Joint probability of entering at an input node and leaving at an output node."""

    gamma: np.ndarray
    input_labels: tuple
    output_labels: tuple


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    delta: np.ndarray
    labels: tuple


@dataclass(frozen=True, eq=False)
class NodeWeights:
    v: np.ndarray
    scheme: str


def coupling_matrix(sol: MarginSolution) -> CouplingMatrix:
    """``gamma_ij = w'_1i z'_ij w'_jn / sum`` over input/output pairs.

    The needed block of the fundamental matrix is obtained with one LU
    factorization of ``I - W'`` and ``min(|In|, |Out|)`` right-hand sides.
    """
    if not sol.converged:
        raise InputError("coupling requires a converged margin solution")
    ext = sol.ext
    w = sol.system.W
    n = w.shape[0]
    ins, outs = ext.inputs, ext.outputs
    lu = _Factorized(w)
    if ins.size <= outs.size:
        rhs = np.zeros((n, ins.size))
        rhs[ins, np.arange(ins.size)] = 1.0
        # rows of Z' for the inputs, from (I - W')^T X = E_in
        block = lu.solve(rhs, transpose=True).T[:, outs]
    else:
        rhs = np.zeros((n, outs.size))
        rhs[outs, np.arange(outs.size)] = 1.0
        block = lu.solve(rhs)[ins, :]
    g = w[ext.source, ins][:, None] * block * w[outs, ext.target][None, :]
    gamma = g / g.sum()
    labels = ext.graph.labels
    return CouplingMatrix(
        gamma,
        tuple(labels[k - 1] for k in ins),
        tuple(labels[k - 1] for k in outs),
    )


def surprisal_distance(coupling: CouplingMatrix) -> DistanceMatrix:
    """``-(log gamma_ij + log gamma_ji) / 2`` off the diagonal, 0 on it."""
    gamma = np.asarray(coupling.gamma)
    if coupling.input_labels != coupling.output_labels:
        raise InputError("surprisal distance needs identical input and output node sets")
    off = ~np.eye(gamma.shape[0], dtype=bool)
    if np.any(gamma[off] <= 0):
        i, j = np.argwhere((gamma <= 0) & off)[0]
        a, b = coupling.input_labels[i], coupling.input_labels[j]
        raise NumericalError(f"disconnected pair ({a}, {b}) at this theta: zero coupling")
    logg = np.zeros_like(gamma)
    logg[off] = np.log(gamma[off])
    delta = -(logg + logg.T) / 2
    np.fill_diagonal(delta, 0.0)
    return DistanceMatrix(delta, coupling.input_labels)


def node_weights(g: Graph, scheme: str = "uniform") -> NodeWeights:
    """Positive node weights summing to one.

    ``degree`` uses ``d = A e``; ``inverse_degree`` uses ``1 / d``.
    """
    scheme = _SCHEME_ALIASES.get(scheme, scheme)
    if scheme not in SCHEMES:
        raise InputError(f"unknown weight scheme {scheme!r}")
    d = g.adjacency.sum(axis=1)
    if np.any(d <= 0):
        isolated = [g.labels[i] for i in np.flatnonzero(d <= 0)]
        raise InputError(f"nodes with zero degree: {isolated}")
    if scheme == "uniform":
        v = np.full(g.node_count, 1.0 / g.node_count)
    elif scheme == "degree":
        v = d / d.sum()
    else:
        v = (1 / d) / (1 / d).sum()
    return NodeWeights(v, scheme)


def cbop_solution(g: Graph, theta: float, scheme="uniform", cfg: SolverConfig | None = None,
                  mu_factor: float = 1.2) -> MarginSolution:
    """Margin solve with every node both input and output, ``sigma_in = sigma_out = v``."""
    v = node_weights(g, scheme).v
    ext = build_extended(g, MarginSpec(v, v), "consistent", mu_factor=mu_factor)
    cfg = cfg or SolverConfig(theta=theta)
    if cfg.theta != theta:
        raise InputError("theta disagrees with the solver configuration")
    return solve_margins(ext, cfg)


def cbop_distance(g: Graph, theta: float, scheme="uniform", cfg: SolverConfig | None = None,
                  mu_factor: float = 1.2) -> DistanceMatrix:
    """Surprisal distance between all node pairs of a strongly connected graph.

    Warns when the off-diagonal coupling mass is below 1e-6: at large
    ``theta`` the coupling collapses onto the diagonal and the distances
    carry little information.
    """
    sol = cbop_solution(g, theta, scheme, cfg, mu_factor)
    coupling = coupling_matrix(sol)
    gamma = coupling.gamma
    off_mass = gamma.sum() - np.trace(gamma)
    if off_mass < OFFDIAG_MASS_WARN:
        warnings.warn(
            f"off-diagonal coupling mass {off_mass:.3g} < {OFFDIAG_MASS_WARN}: "
            "theta too large for meaningful distances",
            RuntimeWarning,
            stacklevel=2,
        )
    return surprisal_distance(coupling)
