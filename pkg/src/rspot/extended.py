"""Single-source / single-target extension of a graph.

The extended graph has ``n = N + 2`` nodes: index 0 is the source
supernode wired to the input nodes with probabilities ``sigma_in``, indices
``1..N`` are the original nodes, and index ``n - 1`` is the absorbing target
supernode fed by the output nodes. All supernode edges cost zero.

In ``consistent`` mode the killing probabilities ``alpha`` are chosen so
that the natural random walk on the extended graph leaves through each
output node with exactly the prescribed ``sigma_out``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import GraphError, InfeasibleError, MarginError
from .graph import Graph, natural_transitions, stationary_distribution

SUM_TOL = 1e-12
VISITS_TOL = 1e-10
PINV_RCOND = 1e-12
MU_FLOOR = 1e-6
DEFAULT_MU_FACTOR = 1.2


@dataclass(frozen=True, eq=False)
class MarginSpec:
    """Input and output flow distributions over the original nodes.

    ``inputs`` and ``outputs`` are the supports of the two vectors; a node
    may belong to both.
    """

    sigma_in: np.ndarray
    sigma_out: np.ndarray

    def __post_init__(self):
        s_in = np.array(self.sigma_in, dtype=float).ravel()
        s_out = np.array(self.sigma_out, dtype=float).ravel()
        if s_in.shape != s_out.shape:
            raise MarginError("sigma_in and sigma_out must have the same length")
        for name, s in (("sigma_in", s_in), ("sigma_out", s_out)):
            if not np.all(np.isfinite(s)) or np.any(s < 0):
                raise MarginError(f"{name} must be finite and non-negative")
            if abs(s.sum() - 1.0) > SUM_TOL:
                raise MarginError(f"{name} sums to {s.sum():.17g}, expected 1")
        s_in.setflags(write=False)
        s_out.setflags(write=False)
        object.__setattr__(self, "sigma_in", s_in)
        object.__setattr__(self, "sigma_out", s_out)

    @property
    def size(self) -> int:
        return self.sigma_in.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        return np.flatnonzero(self.sigma_in > 0)

    @property
    def outputs(self) -> np.ndarray:
        return np.flatnonzero(self.sigma_out > 0)

    @classmethod
    def from_labels(cls, g: Graph, sigma_in: Mapping[int, float], sigma_out: Mapping[int, float]):
        """Build margins from ``{node_label: value}`` maps; omitted nodes get 0."""
        s_in = np.zeros(g.node_count)
        s_out = np.zeros(g.node_count)
        for src, dst in ((sigma_in, s_in), (sigma_out, s_out)):
            for label, val in src.items():
                dst[g.index(label)] = val
        return cls(s_in, s_out)

    @classmethod
    def uniform(cls, g: Graph, inputs, outputs):
        return cls.from_labels(
            g, {k: 1 / len(inputs) for k in inputs}, {k: 1 / len(outputs) for k in outputs}
        )


def read_margins(path, g: Graph) -> MarginSpec:
    """Read a TSV with header ``node sigma_in sigma_out``."""
    s_in, s_out = {}, {}
    header_seen = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if not header_seen:
            if [f.lower() for f in fields] != ["node", "sigma_in", "sigma_out"]:
                raise MarginError(f"{path}:{lineno}: expected header 'node sigma_in sigma_out'")
            header_seen = True
            continue
        if len(fields) != 3:
            raise MarginError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
        try:
            node, a, b = int(fields[0]), float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise MarginError(f"{path}:{lineno}: {exc}") from None
        if node in s_in:
            raise MarginError(f"{path}:{lineno}: node {node} listed twice")
        s_in[node], s_out[node] = a, b
    if not header_seen:
        raise MarginError(f"{path}: empty margins file")
    try:
        return MarginSpec.from_labels(g, s_in, s_out)
    except GraphError as exc:
        raise MarginError(f"{path}: {exc}") from None


def _particular_visits(p: np.ndarray, m: MarginSpec) -> np.ndarray:
    n = p.shape[0]
    rhs = m.sigma_in - p.T @ m.sigma_out
    return np.linalg.pinv(np.eye(n) - p.T, rcond=PINV_RCOND) @ rhs


def mu_lower_bound(p, m: MarginSpec, pi=None) -> float:
    """Smallest persistence ``mu`` keeping expected visits above ``sigma_out``."""
    p = np.asarray(p, dtype=float)
    if pi is None:
        pi = stationary_distribution(p)
    assert np.all(pi > 0), "irreducible chains have a positive stationary vector"
    part = _particular_visits(p, m)
    return max(0.0, float(np.max((m.sigma_out - part) / pi)))


def expected_visits_unconstrained(p, m: MarginSpec, mu: float, pi=None) -> np.ndarray:
    """Expected visits ``pinv(I - P^T)(sigma_in - P^T sigma_out) + mu * pi``."""
    p = np.asarray(p, dtype=float)
    if pi is None:
        pi = stationary_distribution(p)
    visits = _particular_visits(p, m) + mu * pi
    short = m.sigma_out - visits
    if np.any(short > VISITS_TOL):
        i = int(np.argmax(short))
        raise InfeasibleError(
            f"mu too small: expected visits {visits[i]:.6g} below sigma_out {m.sigma_out[i]:.6g} "
            f"at node index {i}"
        )
    return visits


def compute_alpha(visits, m: MarginSpec) -> np.ndarray:
    """Killing probabilities ``alpha_i = sigma_out_i / visits_i``."""
    visits = np.asarray(visits, dtype=float)
    out = m.sigma_out > 0
    if np.any(visits[out] <= 0):
        raise InfeasibleError("zero expected visits at an output node")
    alpha = np.zeros_like(visits)
    alpha[out] = m.sigma_out[out] / visits[out]
    if np.any(alpha > 1 + VISITS_TOL):
        raise InfeasibleError(f"infeasible visits vector: alpha up to {alpha.max():.6g}")
    return np.minimum(alpha, 1.0)


def weights_from_alpha(alpha, g: Graph) -> np.ndarray:
    """Sink-edge weights ``w_i = alpha_i a_i. / (1 - alpha_i)``."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha >= 1):
        i = int(np.argmax(alpha))
        raise InfeasibleError(f"node {g.labels[i]} would become fully absorbing (alpha = 1)")
    return alpha * g.adjacency.sum(axis=1) / (1 - alpha)


@dataclass(frozen=True, eq=False)
class ExtendedGraph:
    """Extended graph with its adjacency, cost and transition matrices."""

    graph: Graph
    margins: MarginSpec
    adjacency: np.ndarray
    costs: np.ndarray
    transitions: np.ndarray
    alpha: np.ndarray
    w: np.ndarray
    provenance: str
    mu: float | None = None
    mu_bound: float | None = None
    inputs: np.ndarray = field(init=False)
    outputs: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in ("adjacency", "costs", "transitions", "alpha", "w"):
            getattr(self, name).setflags(write=False)
        object.__setattr__(self, "inputs", self.margins.inputs + 1)
        object.__setattr__(self, "outputs", self.margins.outputs + 1)

    @property
    def node_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def source(self) -> int:
        return 0

    @property
    def target(self) -> int:
        return self.node_count - 1

    @property
    def sigma_in(self) -> np.ndarray:
        return self.margins.sigma_in[self.inputs - 1]

    @property
    def sigma_out(self) -> np.ndarray:
        return self.margins.sigma_out[self.outputs - 1]

    def label(self, k: int) -> str:
        if k == self.source:
            return "source"
        if k == self.target:
            return "target"
        return str(self.graph.labels[k - 1])

    def check_wiring(self) -> list:
        """List problems with the source/target wiring (empty when well formed)."""
        issues = []
        p = self.transitions
        n = self.node_count
        if np.any(p[:, 0] != 0):
            issues.append("source supernode has incoming edges")
        if np.any(p[-1] != 0):
            issues.append("target supernode has outgoing edges")
        if not np.allclose(p[0, 1:-1], self.margins.sigma_in, atol=SUM_TOL, rtol=0):
            issues.append("source row differs from sigma_in")
        if np.any(p[self.outputs, -1] <= 0):
            issues.append("some output nodes are not wired to the target")
        # every node reachable from the source must be able to reach the target
        reach = _reachable(p > 0, 0)
        back = _reachable((p > 0).T, n - 1)
        stuck = [self.label(k) for k in np.flatnonzero(reach & ~back)]
        if stuck:
            issues.append(f"nodes reachable from the source cannot reach the target: {stuck}")
        return issues


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = list(nxt)
    return seen


def _assemble(g: Graph, m: MarginSpec, w: np.ndarray):
    N = g.node_count
    n = N + 2
    a = np.zeros((n, n))
    a[0, 1:-1] = m.sigma_in
    a[1:-1, 1:-1] = g.adjacency
    a[1:-1, -1] = w
    c = np.zeros((n, n))
    c[1:-1, 1:-1] = g.costs
    return a, c


def build_extended(
    g: Graph,
    m: MarginSpec,
    mode: str = "consistent",
    *,
    mu: float | None = None,
    mu_factor: float = DEFAULT_MU_FACTOR,
    weights=None,
) -> ExtendedGraph:
    """Build the extended graph.

    Parameters
    ----------
    g : Graph
    m : MarginSpec
        Margins indexed like ``g``'s nodes.
    mode : {"consistent", "user_weights"}
        ``consistent`` derives the sink weights from the margins so that the
        natural walk meets ``sigma_out`` exactly; it needs a strongly
        connected ``g``. ``user_weights`` takes the sink weights as given;
        the natural walk then generally does not meet ``sigma_out``.
    mu : float, optional
        Persistence parameter for ``consistent`` mode. Defaults to
        ``mu_factor * max(lower_bound, 1e-6)``.
    weights : array_like, optional
        Sink-edge weights for ``user_weights`` mode, one per node. Must be
        positive on the output nodes and zero elsewhere.
    """
    if m.size != g.node_count:
        raise MarginError(f"margins cover {m.size} nodes, graph has {g.node_count}")
    if m.inputs.size == 0 or m.outputs.size == 0:
        raise MarginError("input and output sets must be non-empty")
    N = g.node_count
    n = N + 2

    if mode == "consistent":
        if weights is not None:
            raise MarginError("weights are only accepted in user_weights mode")
        p = natural_transitions(g)
        pi = stationary_distribution(p)
        bound = mu_lower_bound(p, m, pi)
        if mu is None:
            mu = mu_factor * max(bound, MU_FLOOR)
        elif mu < bound - VISITS_TOL:
            raise InfeasibleError(f"mu too small: {mu:.6g} < lower bound {bound:.6g}")
        visits = expected_visits_unconstrained(p, m, mu, pi)
        alpha = compute_alpha(visits, m)
        w = weights_from_alpha(alpha, g)
        a, c = _assemble(g, m, w)
        t = np.zeros((n, n))
        t[0, 1:-1] = m.sigma_in
        t[1:-1, 1:-1] = (1 - alpha)[:, None] * p
        t[1:-1, -1] = alpha
        return ExtendedGraph(g, m, a, c, t, alpha, w, "consistent", float(mu), bound)

    if mode == "user_weights":
        if mu is not None:
            raise MarginError("mu is only used in consistent mode")
        if weights is None:
            raise MarginError("user_weights mode requires sink weights")
        w = np.array(weights, dtype=float).ravel()
        if w.shape != (N,):
            raise MarginError(f"expected {N} sink weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise MarginError("sink weights must be finite and non-negative")
        out = m.sigma_out > 0
        if np.any(w[out] <= 0):
            raise MarginError("every output node needs a positive sink weight")
        if np.any(w[~out] > 0):
            bad = [g.labels[i] for i in np.flatnonzero((w > 0) & ~out)]
            raise MarginError(f"sink weights on nodes outside the output set: {bad}")
        a, c = _assemble(g, m, w)
        t = natural_transitions(a, absorbing=(n - 1,))
        alpha = t[1:-1, -1].copy()
        return ExtendedGraph(g, m, a, c, t, alpha, w, "user_weights")

    raise MarginError(f"unknown mode {mode!r}")
