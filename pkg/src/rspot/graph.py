"""Weighted directed graphs, natural random walks and stationary vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import GraphError

ROW_SUM_TOL = 1e-12

COST_RULES = ("explicit", "reciprocal_weight")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """A weighted directed graph.

    Nodes carry arbitrary positive integer labels; internally they are
    indexed ``0..node_count-1`` in increasing label order. Costs are only
    meaningful where ``adjacency > 0``; entries off the support are kept
    at zero and never read.

    Parameters
    ----------
    adjacency : (N, N) ndarray
        Non-negative affinities, ``a_ij = 0`` meaning no edge.
    costs : (N, N) ndarray
        Non-negative edge costs on the support of ``adjacency``.
    labels : tuple of int
        External node ids, one per row.
    """

    adjacency: np.ndarray
    costs: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        a = _frozen(self.adjacency.toarray() if sp.issparse(self.adjacency) else self.adjacency)
        c = _frozen(self.costs.toarray() if sp.issparse(self.costs) else self.costs)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if c.shape != a.shape:
            raise GraphError(f"costs shape {c.shape} does not match adjacency {a.shape}")
        if a.shape[0] == 0:
            raise GraphError("graph has no nodes")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise GraphError("adjacency weights must be finite and non-negative")
        on = a > 0
        if np.any(~np.isfinite(c[on])) or np.any(c[on] < 0):
            raise GraphError("edge costs must be finite and non-negative")
        if np.any(c[~on] != 0):
            i, j = np.argwhere((c != 0) & ~on)[0]
            raise GraphError(f"cost given for missing edge ({i}, {j})")
        labels = tuple(int(x) for x in self.labels) or tuple(range(1, a.shape[0] + 1))
        if len(labels) != a.shape[0] or len(set(labels)) != len(labels):
            raise GraphError("labels must be unique, one per node")
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "labels", labels)

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def support(self) -> np.ndarray:
        return self.adjacency > 0

    def index(self, label: int) -> int:
        try:
            return self.labels.index(int(label))
        except ValueError:
            raise GraphError(f"unknown node {label}") from None

    def edges(self):
        """Yield ``(src_label, dst_label, weight, cost)`` in row-major order."""
        for i, j in zip(*np.nonzero(self.adjacency)):
            yield self.labels[i], self.labels[j], self.adjacency[i, j], self.costs[i, j]

    def symmetrized(self, reciprocal: bool = False) -> "Graph":
        """Undirected version with ``A <- (A + A^T)/2``.

        With ``reciprocal`` the costs are recomputed as ``1/a_ij`` on the
        symmetrized weights. Otherwise they are the weight-averaged costs of
        the two directions (a one-way edge keeps its cost both ways).
        """
        a, c = self.adjacency, self.costs
        a_sym = (a + a.T) / 2
        if reciprocal:
            c_sym = np.divide(1.0, a_sym, out=np.zeros_like(a), where=a_sym > 0)
        else:
            num = a * c + a.T * c.T
            c_sym = np.divide(num, a + a.T, out=np.zeros_like(a), where=a_sym > 0)
        return Graph(a_sym, c_sym, self.labels)


def from_matrices(adjacency, costs=None, cost_rule="explicit", labels=None) -> Graph:
    """Build a :class:`Graph` from dense or sparse matrices.

    With ``cost_rule="reciprocal_weight"`` the costs are ``1/a_ij`` on every
    edge and ``costs`` must be omitted.
    """
    a = adjacency.toarray() if sp.issparse(adjacency) else np.asarray(adjacency, dtype=float)
    if cost_rule not in COST_RULES:
        raise GraphError(f"unknown cost rule {cost_rule!r}")
    if cost_rule == "reciprocal_weight":
        if costs is not None:
            raise GraphError("explicit costs conflict with the reciprocal_weight rule")
        c = np.divide(1.0, a, out=np.zeros_like(a, dtype=float), where=a > 0)
    else:
        if costs is None:
            raise GraphError("explicit cost rule requires a cost matrix")
        c = costs.toarray() if sp.issparse(costs) else np.asarray(costs, dtype=float)
    return Graph(a, c, tuple(labels) if labels is not None else ())


def load_graph(
    edge_records: Iterable[Sequence],
    cost_rule: str = "explicit",
    nodes: Sequence[int] | None = None,
) -> Graph:
    """Build a graph from ``(src, dst, weight[, cost])`` records.

    Node ids are positive integers. Unless ``nodes`` is given, the node set
    is every id that appears in a record. Under ``explicit`` every record
    must carry a cost; under ``reciprocal_weight`` none may, and the cost
    of an edge is ``1 / weight``.
    """
    if cost_rule not in COST_RULES:
        raise GraphError(f"unknown cost rule {cost_rule!r}")
    parsed = []
    seen = set()
    for rec in edge_records:
        rec = tuple(rec)
        if len(rec) not in (3, 4):
            raise GraphError(f"edge record must have 3 or 4 fields: {rec!r}")
        i, j, w = int(rec[0]), int(rec[1]), float(rec[2])
        cost = rec[3] if len(rec) == 4 else None
        if i <= 0 or j <= 0:
            raise GraphError(f"node ids must be positive: {rec!r}")
        if not w > 0 or not np.isfinite(w):
            raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
        if (i, j) in seen:
            raise GraphError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
        if cost_rule == "reciprocal_weight":
            if cost is not None:
                raise GraphError(f"edge ({i}, {j}): cost given under reciprocal_weight rule")
            cost = 1.0 / w
        else:
            if cost is None:
                raise GraphError(f"edge ({i}, {j}) has no cost under explicit rule")
            cost = float(cost)
            if not cost >= 0 or not np.isfinite(cost):
                raise GraphError(f"edge ({i}, {j}) has invalid cost {cost}")
        parsed.append((i, j, w, cost))

    if nodes is None:
        labels = sorted({x for i, j, _, _ in parsed for x in (i, j)})
    else:
        labels = [int(x) for x in nodes]
        if any(x <= 0 for x in labels):
            raise GraphError("node ids must be positive")
    if not labels:
        raise GraphError("no edges and no nodes given")
    pos = {lab: k for k, lab in enumerate(labels)}
    a = np.zeros((len(labels), len(labels)))
    c = np.zeros_like(a)
    for i, j, w, cost in parsed:
        if i not in pos or j not in pos:
            raise GraphError(f"edge ({i}, {j}) references a node outside the node set")
        a[pos[i], pos[j]] = w
        c[pos[i], pos[j]] = cost
    return Graph(a, c, tuple(labels))


def read_edge_list(path, cost_rule: str | None = None) -> Graph:
    """Read a TSV edge list with header ``src dst weight [cost]``.

    Blank lines and ``#`` comments are skipped. When ``cost_rule`` is None
    it is ``explicit`` if the header has a cost column and
    ``reciprocal_weight`` otherwise.
    """
    header = None
    records = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if header is None:
            header = [f.lower() for f in fields]
            if header[:3] != ["src", "dst", "weight"] or len(header) > 4 or (
                len(header) == 4 and header[3] != "cost"
            ):
                raise GraphError(f"{path}:{lineno}: expected header 'src dst weight [cost]'")
            continue
        if len(fields) != len(header):
            raise GraphError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            rec = [int(fields[0]), int(fields[1]), float(fields[2])]
            if len(fields) == 4:
                rec.append(float(fields[3]))
        except ValueError as exc:
            raise GraphError(f"{path}:{lineno}: {exc}") from None
        records.append(rec)
    if header is None:
        raise GraphError(f"{path}: empty edge list")
    has_cost = len(header) == 4
    if cost_rule is None:
        cost_rule = "explicit" if has_cost else "reciprocal_weight"
    return load_graph(records, cost_rule)


def natural_transitions(g, absorbing: Sequence[int] = ()) -> np.ndarray:
    """Transition matrix of the natural random walk, ``p_ij = a_ij / a_i.``.

    Parameters
    ----------
    g : Graph or (N, N) array_like
        Graph or raw adjacency matrix.
    absorbing : sequence of int, optional
        Row indices allowed to have zero out-weight; their rows stay zero.
    """
    if isinstance(g, Graph):
        a, labels = g.adjacency, g.labels
    else:
        a = g.toarray() if sp.issparse(g) else np.asarray(g, dtype=float)
        labels = None
    rows = a.sum(axis=1)
    dangling = [i for i in np.flatnonzero(rows <= 0) if i not in set(absorbing)]
    if dangling:
        names = [labels[i] if labels else i for i in dangling]
        raise GraphError(f"node {names[0]} has no outgoing edge (dangling nodes: {names})")
    return np.divide(a, rows[:, None], out=np.zeros_like(a, dtype=float), where=rows[:, None] > 0)


def is_strongly_connected(a) -> bool:
    ncomp, _ = connected_components(sp.csr_matrix(np.asarray(a) > 0), directed=True, connection="strong")
    return ncomp == 1


@dataclass
class ValidationReport:
    strongly_connected: bool
    aperiodicity_checked: bool = False
    aperiodicity_note: str = "not checked; stationary vectors only need irreducibility"
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def to_dict(self):
        return {
            "strongly_connected": self.strongly_connected,
            "aperiodicity_checked": self.aperiodicity_checked,
            "aperiodicity_note": self.aperiodicity_note,
            "issues": list(self.issues),
        }


def validate_structure(g: Graph) -> ValidationReport:
    """Check strong connectivity and report every structural finding."""
    a = g.adjacency
    issues = []
    ncomp, comp = connected_components(sp.csr_matrix(a > 0), directed=True, connection="strong")
    strong = ncomp == 1
    if not strong:
        issues.append(f"graph is not strongly connected ({ncomp} strongly connected components)")
        no_out = [g.labels[i] for i in np.flatnonzero(a.sum(axis=1) == 0)]
        no_in = [g.labels[i] for i in np.flatnonzero(a.sum(axis=0) == 0)]
        if no_out:
            issues.append(f"nodes without outgoing edges: {no_out}")
        if no_in:
            issues.append(f"nodes without incoming edges: {no_in}")
    return ValidationReport(strongly_connected=strong, issues=issues)


def stationary_distribution(p) -> np.ndarray:
    """Equilibrium distribution of an irreducible transition matrix.

    Solves ``(I - P^T) pi = 0`` with ``sum(pi) = 1`` directly, so periodic
    chains are accepted.
    """
    p = p.toarray() if sp.issparse(p) else np.asarray(p, dtype=float)
    n = p.shape[0]
    if not is_strongly_connected(p):
        raise GraphError("transition matrix is reducible; no unique stationary distribution")
    m = np.eye(n) - p.T
    m[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = la.solve(m, rhs)
    # irreducible chains have a strictly positive pi; remove rounding noise
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
