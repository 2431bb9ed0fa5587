"""Randomized shortest paths on a single-source, single-target graph.

All quantities stay in the linear domain. The fundamental matrix is never
formed; one LU factorization of ``I - W`` serves both the backward
(column ``target``) and forward (row ``source``) solves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import NumericalError

Z_UNDERFLOW = 1e-300
RCOND_MIN = 1e-14


def _dense(x):
    return x.toarray() if sp.issparse(x) else np.asarray(x, dtype=float)


def gibbs_weights(p, c, theta):
    """``W = P o exp(-theta C)``, zero off the support of ``P``."""
    p, c = _dense(p), _dense(c)
    on = p > 0
    w = np.zeros_like(p)
    w[on] = p[on] * np.exp(-theta * c[on])
    return w


class _Factorized:
    """LU factorization of ``I - W`` with a conditioning check."""

    def __init__(self, w):
        n = w.shape[0]
        m = np.eye(n) - w
        anorm = np.linalg.norm(m, 1)
        with warnings.catch_warnings():
            # singularity is reported below through the condition estimate
            warnings.simplefilter("ignore", la.LinAlgWarning)
            self.lu = la.lu_factor(m, check_finite=True)
        rcond, info = lapack.dgecon(self.lu[0], anorm, norm="1")
        if info != 0 or not rcond > RCOND_MIN:
            raise NumericalError(
                f"(I - W) is singular or near-singular (rcond={rcond:.3g}): "
                "target unreachable or theta too small for numerical rank"
            )

    def solve(self, rhs, transpose=False):
        return la.lu_solve(self.lu, rhs, trans=1 if transpose else 0)


@dataclass(frozen=True, eq=False)
class RspSystem:
    """Solved RSP system for one cost matrix and inverse temperature.

    Attributes
    ----------
    z_backward : (n,) ndarray
        ``z_kn``, total path weight from each node to the target.
    z_forward : (n,) ndarray
        ``z_1k``, total path weight from the source to each node.
    """

    theta: float
    transitions: np.ndarray
    costs: np.ndarray
    W: np.ndarray
    z_backward: np.ndarray
    z_forward: np.ndarray
    source: int = 0
    target: int = -1
    residuals: tuple = field(default=(0.0, 0.0))

    @property
    def partition(self) -> float:
        return float(self.z_backward[self.source])

    @property
    def node_count(self) -> int:
        return self.W.shape[0]


def build_system(p, c, theta: float, source: int = 0, target: int = -1) -> RspSystem:
    """Solve ``(I - W) z_b = e_target`` and ``(I - W^T) z_f = e_source``."""
    if not theta > 0:
        raise ValueError(f"theta must be strictly positive, got {theta}")
    p, c = np.array(_dense(p)), np.array(_dense(c))
    n = p.shape[0]
    target = target % n
    w = gibbs_weights(p, c, theta)
    fact = _Factorized(w)
    e_t = np.zeros(n)
    e_t[target] = 1.0
    e_s = np.zeros(n)
    e_s[source] = 1.0
    zb = fact.solve(e_t)
    zf = fact.solve(e_s, transpose=True)
    if not (np.all(np.isfinite(zb)) and np.all(np.isfinite(zf))):
        raise NumericalError("non-finite forward/backward variables")
    z = zb[source]
    if not z >= Z_UNDERFLOW:
        raise NumericalError(f"partition function {z:.3g} underflows: theta too large; rescale costs")
    res_b = np.abs(zb - w @ zb - e_t).max() / max(np.abs(zb).max(), 1.0)
    res_f = np.abs(zf - w.T @ zf - e_s).max() / max(np.abs(zf).max(), 1.0)
    for a in (p, c, w, zb, zf):
        a.setflags(write=False)
    return RspSystem(theta, p, c, w, zb, zf, source, target, (float(res_b), float(res_f)))


@dataclass(frozen=True, eq=False)
class FlowField:
    edge_flows: np.ndarray
    node_visits: np.ndarray
    expected_cost: float
    free_energy: float


def expected_cost(flows, costs) -> float:
    """Sum of edge flows times edge costs; off-support entries are ignored."""
    flows = np.asarray(flows)
    on = flows != 0
    return float(np.sum(flows[on] * np.asarray(costs)[on]))


def edge_flows(sys: RspSystem) -> FlowField:
    """Expected edge passages ``z_1i w_ij z_jn / Z`` and derived totals.

    ``node_visits[j]`` is ``z_1j z_jn / Z``, which counts the source's
    starting visit (so ``node_visits[source] == 1``); for every other node
    it equals the inflow ``sum_i n_ij``.
    """
    z = sys.partition
    n_ij = sys.z_forward[:, None] * sys.W * sys.z_backward[None, :] / z
    n_j = sys.z_forward * sys.z_backward / z
    return FlowField(n_ij, n_j, expected_cost(n_ij, sys.costs), free_energy(sys))


def free_energy(sys: RspSystem) -> float:
    return -np.log(sys.partition) / sys.theta


def optimal_policy(sys: RspSystem) -> np.ndarray:
    """Biased transition matrix ``p*_ij = w_ij z_jn / z_in``.

    The target row is left at zero (absorbing).
    """
    zb = sys.z_backward
    rows = np.ones(sys.node_count, dtype=bool)
    rows[sys.target] = False
    dead = np.flatnonzero(rows & (zb <= 0) & (sys.W.sum(axis=1) > 0))
    if dead.size:
        raise NumericalError(f"nodes {dead.tolist()} cannot reach the target (z_in = 0)")
    pol = np.zeros_like(sys.W)
    ok = rows & (zb > 0)
    pol[ok] = sys.W[ok] * zb[None, :] / zb[ok, None]
    return pol


@dataclass(frozen=True)
class PathSums:
    z_backward: np.ndarray
    z_forward: np.ndarray
    tail_bound: float
    terms: int


def path_sum_oracle(p, c, theta, max_len=None, tol=1e-12, source=0, target=-1) -> PathSums:
    """Forward/backward variables from the truncated series ``I + W + W^2 + ...``.

    Sums path weights length by length. The remainder after ``K`` terms is
    bounded entrywise by ``||W^K|| * s / (1 - q)`` in the infinity norm,
    where ``q = ||W^m|| < 1`` for the smallest such ``m`` and
    ``s = sum_{k<m} ||W^k||``. A nilpotent ``W`` (acyclic graph) gives an
    exact result with bound 0.

    Raises
    ------
    NumericalError
        If the bound is still above ``tol`` after ``max_len`` terms, or no
        power of ``W`` contracts.
    """
    w = gibbs_weights(p, c, theta)
    n = w.shape[0]
    target = target % n
    norm = lambda m: np.abs(m).sum(axis=1).max()

    # geometric envelope for the tail
    powk = np.eye(n)
    s = 0.0
    q = None
    for _ in range(4 * n + 1):
        s += norm(powk)
        powk = powk @ w
        if norm(powk) < 1:
            q = norm(powk)
            break
    if q is None:
        raise NumericalError("no power of W contracts; path series may diverge")
    envelope = s / (1 - q)

    limit = max_len if max_len is not None else 1_000_000
    zb = np.zeros(n)
    zf = np.zeros(n)
    vb = np.zeros(n)
    vb[target] = 1.0
    vf = np.zeros(n)
    vf[source] = 1.0
    powk = np.eye(n)
    bound = np.inf
    k = 0
    while k < limit:
        zb += vb
        zf += vf
        vb = w @ vb
        vf = vf @ w
        powk = powk @ w
        k += 1
        pn = norm(powk)
        bound = 0.0 if pn == 0 else pn * envelope
        if bound <= tol:
            break
    if bound > tol:
        raise NumericalError(f"tail bound {bound:.3g} after {k} terms exceeds {tol:.3g}; increase max_len")
    return PathSums(zb, zf, float(bound), k)
