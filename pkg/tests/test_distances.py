import itertools
import math
import warnings

import numpy as np
import pytest

from rspot import solver
from rspot.distances import (
    CouplingMatrix,
    cbop_distance,
    cbop_solution,
    coupling_matrix,
    node_weights,
    surprisal_distance,
)
from rspot.errors import InputError, NumericalError
from rspot.extended import MarginSpec, build_extended
from rspot.graph import load_graph
from rspot.rsp import gibbs_weights
from rspot.solver import SolverConfig

from oracles import BARBELL_EDGES, random_strong_graph, undirected


def coupling_by_inverse(sol):
    """Same coupling from an explicit inverse of I - W', without the LU path."""
    ext = sol.ext
    w = gibbs_weights(ext.transitions, sol.augmented_costs, sol.config.theta)
    z = np.linalg.inv(np.eye(len(w)) - w)
    g = w[0, ext.inputs][:, None] * z[np.ix_(ext.inputs, ext.outputs)] * w[ext.outputs, -1][None, :]
    return g / g.sum()


def test_single_pair_coupling_is_one():
    g = load_graph([(1, 2, 1.0, 1.0), (2, 3, 1.0, 1.0)])
    ext = build_extended(g, MarginSpec([1.0, 0, 0], [0, 0, 1.0]), "user_weights", weights=[0, 0, 1.0])
    c = coupling_matrix(solver.solve_margins(ext, SolverConfig(theta=1.0)))
    np.testing.assert_array_equal(c.gamma, [[1.0]])
    assert c.input_labels == (1,) and c.output_labels == (3,)


def test_two_node_symmetric_coupling():
    g = undirected([(1, 2)])
    sol = cbop_solution(g, 1.0)
    gamma = coupling_matrix(sol).gamma
    np.testing.assert_allclose(gamma, gamma.T, atol=1e-9)
    assert gamma[0, 0] == pytest.approx(gamma[1, 1], abs=1e-9)
    np.testing.assert_allclose(gamma.sum(axis=1), 0.5, atol=1e-8)
    np.testing.assert_allclose(gamma, coupling_by_inverse(sol), atol=1e-12)


def test_coupling_margins_dag7(dag7_ext):
    sol = solver.solve_margins(dag7_ext, SolverConfig(theta=1.0))
    c = coupling_matrix(sol)
    np.testing.assert_allclose(c.gamma.sum(axis=1), dag7_ext.sigma_in, atol=1e-8)
    np.testing.assert_allclose(c.gamma.sum(axis=0), dag7_ext.sigma_out, atol=1e-8)
    np.testing.assert_allclose(c.gamma, coupling_by_inverse(sol), atol=1e-12)
    assert c.input_labels == (2, 3) and c.output_labels == (7, 8)


def test_coupling_more_inputs_than_outputs(dag7):
    m = MarginSpec.from_labels(dag7, {2: 0.5, 3: 0.3, 5: 0.2}, {7: 0.6, 8: 0.4})
    ext = build_extended(dag7, m, "user_weights", weights=(m.sigma_out > 0).astype(float))
    sol = solver.solve_margins(ext, SolverConfig(theta=1.0))
    np.testing.assert_allclose(coupling_matrix(sol).gamma, coupling_by_inverse(sol), atol=1e-12)


def test_surprisal_examples():
    gamma = np.array([[0.5, math.exp(-2)], [math.exp(-4), 0.5]])
    d = surprisal_distance(CouplingMatrix(gamma, (1, 2), (1, 2))).delta
    np.testing.assert_allclose(d, [[0, 3], [3, 0]], atol=1e-14)
    d = surprisal_distance(CouplingMatrix(np.array([[0.2, 1.0], [1.0, 0.3]]), (1, 2), (1, 2))).delta
    np.testing.assert_array_equal(d, 0.0)


def test_surprisal_requires_square_labels():
    with pytest.raises(InputError):
        surprisal_distance(CouplingMatrix(np.ones((2, 2)), (1, 2), (1, 3)))


def test_surprisal_zero_coupling():
    with pytest.raises(NumericalError, match="disconnected"):
        surprisal_distance(CouplingMatrix(np.array([[0.5, 0.0], [0.5, 0.0]]), (1, 2), (1, 2)))


def test_node_weights():
    g = load_graph([(1, 2, 1.0, 1.0), (2, 1, 3.0, 1.0)])
    np.testing.assert_allclose(node_weights(g, "uniform").v, [0.5, 0.5])
    np.testing.assert_allclose(node_weights(g, "degree").v, [0.25, 0.75])
    np.testing.assert_allclose(node_weights(g, "inverse_degree").v, [0.75, 0.25])
    np.testing.assert_allclose(node_weights(g, "invdeg").v, [0.75, 0.25])
    with pytest.raises(InputError):
        node_weights(g, "pagerank")


def test_two_node_distance():
    d = cbop_distance(undirected([(1, 2)]), 1.0)
    assert d.labels == (1, 2)
    assert d.delta[0, 0] == 0 and d.delta[1, 1] == 0
    assert d.delta[0, 1] == d.delta[1, 0] > 0


def test_cycle_distance_invariance():
    d = cbop_distance(undirected([(1, 2), (2, 3), (3, 4), (4, 1)]), 1.0).delta
    adj = [d[i, (i + 1) % 4] for i in range(4)]
    opp = [d[i, (i + 2) % 4] for i in range(4)]
    np.testing.assert_allclose(adj, adj[0], atol=1e-7)
    np.testing.assert_allclose(opp, opp[0], atol=1e-7)
    assert opp[0] > adj[0]


def test_barbell_automorphism():
    d = cbop_distance(undirected(BARBELL_EDGES), 0.5).delta
    perm = [5, 4, 3, 2, 1, 0]  # 1<->6, 2<->5, 3<->4
    np.testing.assert_allclose(d[np.ix_(perm, perm)], d, atol=1e-7)


@pytest.mark.parametrize("scheme", ["uniform", "degree", "inverse_degree"])
def test_schemes_give_valid_distances(scheme):
    g = undirected(BARBELL_EDGES)
    sol = cbop_solution(g, 0.5, scheme)
    v = node_weights(g, scheme).v
    gamma = coupling_matrix(sol).gamma
    np.testing.assert_allclose(gamma.sum(axis=1), v, atol=1e-8)
    d = surprisal_distance(coupling_matrix(sol)).delta
    assert np.all(np.isfinite(d)) and np.all(d[~np.eye(6, dtype=bool)] > 0)


def test_large_theta_warns():
    with pytest.warns(RuntimeWarning, match="off-diagonal"):
        cbop_distance(undirected(BARBELL_EDGES), 20.0)


def test_moderate_theta_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        cbop_distance(undirected(BARBELL_EDGES), 0.5)


def test_triangle_inequality_survey(capsys):
    # the surprisal distance is not guaranteed to be a metric; count violations
    rng = np.random.default_rng(7)
    worst, violating, total = 0.0, 0, 0
    for k in range(50):
        g = random_strong_graph(rng, int(rng.integers(4, 8))).symmetrized(reciprocal=False)
        for theta in (0.1, 1.0):
            d = cbop_distance(g, theta).delta
            n = len(d)
            total += 1
            gaps = [d[i, j] - d[i, k] - d[k, j] for i, j, k in itertools.permutations(range(n), 3)]
            gap = max(gaps)
            if gap > 1e-9:
                violating += 1
                worst = max(worst, gap)
    with capsys.disabled():
        print(f"\ntriangle inequality: {violating}/{total} graphs with violations, worst excess {worst:.3g}")
    assert total == 100
