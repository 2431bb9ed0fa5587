"""Acceptance criteria, one test each.

Every test prints a single ``[Cn] PASS|FAIL`` line before asserting, so the
summary is visible in the pytest log even when a criterion fails. The last
two criteria aggregate over every margin solve made in the session, which is
why this module is collected last (see conftest.py).
"""

import time

import numpy as np
import pytest

from rspot import solver
from rspot.distances import cbop_solution, coupling_matrix, node_weights, surprisal_distance
from rspot.extended import MarginSpec, build_extended
from rspot.rsp import build_system, edge_flows, path_sum_oracle
from rspot.solver import SolverConfig, expected_costs_match

from conftest import SOLVES
from oracles import (
    BARBELL_EDGES,
    dag_2x2,
    min_transport_2x2,
    random_distribution,
    random_strong_graph,
    shortest_route_costs,
    simulate_kills,
    undirected,
)

pytestmark = pytest.mark.acceptance


def verdict(capsys, tag, ok, detail):
    with capsys.disabled():
        print(f"\n[{tag}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_c1_oracle_equivalence(capsys):
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst_excess, worst_bound, count = -np.inf, 0.0, 0
    for _ in range(100):
        n = int(rng.integers(5, 11))
        g = random_strong_graph(rng, n, cost_range=(0.1, 2.0))
        m = MarginSpec(random_distribution(rng, n, rng.integers(1, n + 1)),
                       random_distribution(rng, n, rng.integers(1, n + 1)))
        ext = build_extended(g, m)
        for theta in (0.5, 1.0):
            sys = build_system(ext.transitions, ext.costs, theta)
            ps = path_sum_oracle(ext.transitions, ext.costs, theta, tol=1e-8)
            # the bound covers the series remainder; add float rounding of the sums
            slack = ps.tail_bound + 1e-12 * max(1.0, np.abs(ps.z_backward).max(), np.abs(ps.z_forward).max())
            err = max(np.abs(sys.z_backward - ps.z_backward).max(),
                      np.abs(sys.z_forward - ps.z_forward).max())
            worst_excess = max(worst_excess, err - slack)
            worst_bound = max(worst_bound, ps.tail_bound)
            count += 1
    elapsed = time.perf_counter() - start
    ok = count == 200 and worst_excess <= 0 and worst_bound <= 1e-8 and elapsed < 30
    verdict(capsys, "C1", ok, f"{count} systems, max tail bound {worst_bound:.2e}, "
                              f"worst excess over bound {worst_excess:.2e}, {elapsed:.2f}s")


def test_c2_flow_is_gradient(capsys, dag7_ext):
    ext = dag7_ext
    theta, h = 1.0, 1e-6
    start = time.perf_counter()
    p, c = ext.transitions, np.array(ext.costs)
    flows = edge_flows(build_system(p, c, theta)).edge_flows
    worst = 0.0
    for i, j in zip(*np.nonzero(p)):
        up, dn = c.copy(), c.copy()
        up[i, j] += h
        dn[i, j] -= h
        grad = (np.log(build_system(p, up, theta).partition)
                - np.log(build_system(p, dn, theta).partition)) / (2 * h)
        worst = max(worst, abs(flows[i, j] + grad / theta))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 1
    verdict(capsys, "C2", ok, f"{int((p > 0).sum())} edges, max |flow - fd| {worst:.2e}, {elapsed:.3f}s")


def test_c3_margin_satisfaction(capsys, dag7_ext):
    start = time.perf_counter()
    sol = solver.solve_margins(dag7_ext, SolverConfig(theta=1.0, tol=1e-8))
    elapsed = time.perf_counter() - start
    res = max(sol.residuals())
    drop = min(0.0, float(np.min(np.diff(sol.dual_trace))))
    ok = sol.iterations <= 500 and res <= 1e-7 and drop >= -1e-10 and elapsed < 1
    verdict(capsys, "C3", ok, f"{sol.iterations} iterations, residual {res:.2e}, "
                              f"largest dual drop {abs(drop):.1e}, {elapsed:.3f}s")


def test_c4_transport_limit(capsys):
    g = dag_2x2()
    s_in, s_out = [0.7, 0.3], [0.4, 0.6]
    m = MarginSpec.from_labels(g, {1: s_in[0], 2: s_in[1]}, {5: s_out[0], 6: s_out[1]})
    ext = build_extended(g, m, "user_weights", weights=(m.sigma_out > 0).astype(float))
    start = time.perf_counter()
    route = shortest_route_costs(g.costs, g.support, [g.index(1), g.index(2)], [g.index(5), g.index(6)])
    best = min_transport_2x2(route, s_in, s_out)
    costs = []
    for theta in (0.01, 0.1, 1.0, 5.0, 20.0):
        sol = solver.solve_margins(ext, SolverConfig(theta=theta, tol=1e-10))
        costs.append(expected_costs_match(sol)[1])
    elapsed = time.perf_counter() - start
    rel = abs(costs[-1] - best) / best
    monotone = all(b <= a + 1e-10 for a, b in zip(costs, costs[1:]))
    ok = rel <= 0.01 and monotone and elapsed < 5
    verdict(capsys, "C4", ok, f"optimum {best:.6f}, <c> over theta "
                              f"{[round(x, 6) for x in costs]}, rel gap {rel:.2e}, {elapsed:.2f}s")


def test_c5_killing_consistency(capsys):
    rng = np.random.default_rng(99)
    walkers = 100_000
    start = time.perf_counter()
    worst = 0.0
    leaked = 0
    for n, k_in, k_out in ((4, 1, 2), (6, 2, 3), (8, 3, 4)):
        g = random_strong_graph(rng, n)
        m = MarginSpec(random_distribution(rng, n, k_in), random_distribution(rng, n, k_out))
        ext = build_extended(g, m)
        freq = simulate_kills(ext.transitions, walkers, rng) / walkers
        s = m.sigma_out
        out = s > 0
        se = np.sqrt(s[out] * (1 - s[out]) / walkers)
        worst = max(worst, float(np.max(np.abs(freq[out] - s[out]) / se)))
        leaked += int(np.count_nonzero(freq[~out]))
    elapsed = time.perf_counter() - start
    ok = worst <= 3 and leaked == 0 and elapsed < 10
    verdict(capsys, "C5", ok, f"3 instances x {walkers} walks, worst deviation {worst:.2f} SE, "
                              f"kills outside Out: {leaked}, {elapsed:.2f}s")


def test_c6_barbell_coupling_and_distance(capsys):
    g = undirected(BARBELL_EDGES)
    start = time.perf_counter()
    sol = cbop_solution(g, 0.1, "uniform")
    coupling = coupling_matrix(sol)
    delta = surprisal_distance(coupling).delta
    elapsed = time.perf_counter() - start
    v = node_weights(g, "uniform").v
    gamma = coupling.gamma
    margin_err = max(np.abs(gamma.sum(axis=1) - v).max(), np.abs(gamma.sum(axis=0) - v).max())
    sym = np.abs(delta - delta.T).max()
    diag = np.abs(np.diag(delta)).max()
    left, right = [g.index(k) for k in (1, 2, 3)], [g.index(k) for k in (4, 5, 6)]
    within = [delta[i, j] for side in (left, right) for i in side for j in side if i < j]
    cross = [delta[i, j] for i in left for j in right]
    ok = (margin_err <= 1e-8 and sym == 0 and diag == 0
          and max(within) < min(cross) and elapsed < 1)
    verdict(capsys, "C6", ok, f"margin error {margin_err:.1e}, asymmetry {sym:.1e}, "
                              f"max within {max(within):.4f} < min cross {min(cross):.4f}, {elapsed:.3f}s")


def test_c7_cost_identity_all_solves(capsys):
    gaps = [abs(a - r) for a, r in map(expected_costs_match, SOLVES)]
    worst = max(gaps) if gaps else np.inf
    ok = len(gaps) > 0 and worst <= 1e-8
    verdict(capsys, "C7", ok, f"{len(gaps)} converged solves, max |<c'> - <c>| {worst:.2e}")


def test_c8_lambda_normalization_all_solves(capsys):
    entries = [abs(x) for sol in SOLVES for pair in sol.normalization_trace for x in pair]
    worst = max(entries) if entries else np.inf
    ok = len(entries) > 0 and worst <= 1e-10
    verdict(capsys, "C8", ok, f"{len(entries) // 2} updates in {len(SOLVES)} solves, "
                              f"max |lambda . sigma| {worst:.2e}")
