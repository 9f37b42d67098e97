"""Acceptance criteria, one test per criterion.

Each check records a PASS/FAIL line (printed in the pytest terminal
summary, or directly when run as ``python3 tests/test_acceptance.py``).
Runtime limits are part of each criterion.
"""
import itertools
import time

import numpy as np
import pytest

from otng.graph import WeightedGraph, laplacian_matrix
from otng.manifold import (curvature, metric, parallel_transport, parameter_distance,
                           parameter_geodesic_flow, initial_parameter_momentum,
                           second_fundamental_form, solve_spd)
from otng.models import (convert_parameters, dirichlet_target, hierarchical_model,
                         hypercube_graph, independence_model, path_graph, simplex_chart,
                         square_graph, three_state_model)
from otng.optim import (PRECONDITIONERS, StepRule, expectation_objective, kl_objective,
                        moment_stop, natural_direction, natural_gradient_step, run_descent,
                        vector_field_scan)
from otng.simplex import (cotangent_flow, initial_momentum, static_lp_distance,
                          wasserstein_distance)

RESULTS = {}

Q1 = np.array([6.0, 1.0, 1.0]) / 8
Q2 = np.array([1.0, 6.0, 1.0]) / 8
Q3 = np.array([1.0, 1.0, 6.0]) / 8


def record(num, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    RESULTS[num] = (ok, f"{detail}; {elapsed:.2f}s (limit {limit:g}s)")
    return ok


def report_lines():
    return [f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {msg}" for k, (ok, msg) in sorted(RESULTS.items())]


# ---------------------------------------------------------------- 1

def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    g = path_graph(3)
    chart = simplex_chart(3, dependent=1)     # coordinates (p1, p3)
    err = err2 = 0.0
    for _ in range(100):
        p = rng.dirichlet(np.ones(3))
        while p.min() < 1e-3:
            p = rng.dirichlet(np.ones(3))
        G = metric(chart, g, chart.theta_of(p)).G
        ref = np.diag([1 / (1 - p[2]), 1 / (1 - p[0])])
        err = max(err, np.abs(G - ref).max())
        err2 = max(err2, np.abs(G - 2 * ref).max())
    elapsed = time.perf_counter() - t0
    return record(1, err <= 1e-8, f"max|G - diag(1/(1-p3), 1/(1-p1))| = {err:.3g} "
                  f"(against twice that diagonal: {err2:.1e})", elapsed, 1.0)


# ---------------------------------------------------------------- 2

def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    err = 0.0
    for _ in range(20):
        a, b = rng.uniform(0.02, 0.98, 2)
        w = rng.uniform(0.1, 10.0)
        g = WeightedGraph(2, [(0, 1, w)])
        W, _ = wasserstein_distance(g, np.array([a, 1 - a]), np.array([b, 1 - b]))
        err = max(err, abs(W - np.sqrt(2 * (a - b) ** 2 / w)))
    elapsed = time.perf_counter() - t0
    return record(2, err <= 1e-6, f"max|W - sqrt(2 dp^2 / w)| = {err:.2e} over 20 cases", elapsed, 5.0)


# ---------------------------------------------------------------- 3

def criterion_3():
    t0 = time.perf_counter()
    g = path_graph(3)
    _, p13 = wasserstein_distance(g, Q1, Q3)
    _, p12 = wasserstein_distance(g, Q1, Q2)
    _, p23 = wasserstein_distance(g, Q2, Q3)
    mid = p13.points[len(p13.points) // 2]
    # relabel 1<->3 and reverse time: q1->q2 becomes q2->q3
    image = p12.points[::-1, ::-1]
    sym = np.abs(image - p23.points).max()
    elapsed = time.perf_counter() - t0
    ok = mid[1] >= 1 / 8 + 0.01 and sym <= 1e-4
    return record(3, ok, f"midpoint p2 = {mid[1]:.4f} (need >= {1 / 8 + 0.01:.3f}); "
                  f"automorphism mismatch {sym:.1e}", elapsed, 30.0)


# ---------------------------------------------------------------- 4

def brute_force_lp(g, p0, p1, refine=3):
    """Enumerate 3x3 couplings whose entries lie on a grid of step 1/(8 refine)."""
    cost = g.shortest_paths ** 2
    step = 1.0 / (8 * refine)
    m = int(round(1 / step))
    best = np.inf
    for a, b, c, d in itertools.product(range(m + 1), repeat=4):
        P = np.empty((3, 3))
        P[0, 0], P[0, 1], P[1, 0], P[1, 1] = a * step, b * step, c * step, d * step
        P[0, 2] = p0[0] - P[0, 0] - P[0, 1]
        P[1, 2] = p0[1] - P[1, 0] - P[1, 1]
        P[2, 0] = p1[0] - P[0, 0] - P[1, 0]
        P[2, 1] = p1[1] - P[0, 1] - P[1, 1]
        P[2, 2] = p1[2] - P[0, 2] - P[1, 2]
        if P.min() < -1e-12 or abs(P[2].sum() - p0[2]) > 1e-12:
            continue
        best = min(best, float((P * cost).sum()))
    return best


def criterion_4():
    t0 = time.perf_counter()
    g = path_graph(3)
    W, _ = wasserstein_distance(g, Q1, Q3)
    lp = static_lp_distance(g, Q1, Q3)
    bf = brute_force_lp(g, Q1, Q3)
    elapsed = time.perf_counter() - t0
    ok = abs(W * W - lp) > 1e-3 and abs(lp - bf) <= 1e-12
    return record(4, ok, f"W^2 = {W * W:.5f}, LP = {lp:.5f}, brute force = {bf:.5f}", elapsed, 10.0)


# ---------------------------------------------------------------- 5

def criterion_5():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    model = independence_model()
    worst = {"lambda_min": np.inf, "H": 0.0, "B": 0.0, "R": 0.0}
    for _ in range(50):
        g = square_graph(*rng.uniform(0.1, 10.0, 4))
        xi = rng.uniform(0.05, 0.95, 2)
        m = metric(model, g, xi)
        worst["lambda_min"] = min(worst["lambda_min"], m.lambda_min)
        H = m.J @ solve_spd(m.G, m.J.T @ m.K)
        worst["H"] = max(worst["H"], np.abs(H @ H - H).max(), np.abs(H @ m.J - m.J).max())
        s = [m.J @ rng.standard_normal(2) for _ in range(4)]
        B = second_fundamental_form(model, g, xi, s[0], s[1])
        worst["B"] = max(worst["B"], np.abs(B @ m.K @ m.J).max())
        R = lambda a, b, c, d: curvature(model, g, xi, a, b, c, d)
        r = R(*s)
        worst["R"] = max(worst["R"], abs(r + R(s[1], s[0], s[2], s[3])),
                         abs(r + R(s[0], s[1], s[3], s[2])), abs(r - R(s[2], s[3], s[0], s[1])),
                         abs(r + R(s[1], s[2], s[0], s[3]) + R(s[2], s[0], s[1], s[3])))
    elapsed = time.perf_counter() - t0
    ok = (worst["lambda_min"] > 0 and worst["H"] <= 1e-10 and worst["B"] <= 1e-9
          and worst["R"] <= 1e-8)
    return record(5, ok, "min lambda_min {lambda_min:.3g}, projector {H:.1e}, B orthogonality {B:.1e}, "
                  "curvature identities {R:.1e}".format(**worst), elapsed, 20.0)


# ---------------------------------------------------------------- 6

def _random_instance(rng):
    kind = rng.integers(4)
    if kind == 0:
        return independence_model(), square_graph(*rng.uniform(0.1, 10, 4)), rng.uniform(0.1, 0.9, 2)
    if kind == 1:
        return three_state_model(), path_graph(3, rng.uniform(0.1, 10, 2)), rng.normal(size=2)
    if kind == 2:
        m = hierarchical_model(3, k=2, basis=["sigma", "pi"][rng.integers(2)])
        return m, hypercube_graph(3), rng.normal(scale=0.5, size=m.dim)
    n = int(rng.integers(2, 6))
    m = simplex_chart(n)
    return m, path_graph(n, rng.uniform(0.1, 10, n - 1)), rng.dirichlet(np.ones(n))[:-1]


def criterion_6():
    t0 = time.perf_counter()
    rng = np.random.default_rng(106)
    flow_err = 0.0
    for n in (2, 3, 4, 5):
        g = hypercube_graph(2) if n == 4 else path_graph(n, rng.uniform(0.5, 2, n - 1))
        chart = simplex_chart(n)
        p = rng.dirichlet(np.ones(n))
        obj = kl_objective(rng.dirichlet(np.ones(n)))
        v, _, _ = natural_direction(chart, g, chart.theta_of(p), obj, "wasserstein")
        pdot = -chart.jacobian(None) @ v
        ref = -laplacian_matrix(g, p) @ obj.grad(p)
        flow_err = max(flow_err, np.abs(pdot - ref).max())
    failures = 0
    for _ in range(50):
        model, g, theta = _random_instance(rng)
        obj = kl_objective(rng.dirichlet(np.ones(model.n_states)))
        F0 = obj.value(model.p(theta))
        for pre in PRECONDITIONERS:
            gamma, ok = 1.0, False
            for _ in range(31):
                th = natural_gradient_step(model, g, theta, obj, pre, gamma)
                if model.in_domain(th) and obj.value(model.p(th)) < F0:
                    ok = True
                    break
                gamma *= 0.5
            failures += not ok
    elapsed = time.perf_counter() - t0
    ok = flow_err <= 1e-10 and failures == 0
    return record(6, ok, f"simplex flow mismatch {flow_err:.1e}; {failures} of 150 steps failed to descend",
                  elapsed, 10.0)


# ---------------------------------------------------------------- 7

def criterion_7():
    t0 = time.perf_counter()
    model = independence_model()
    obj = expectation_objective([0.0, -2.0, -4.0, 6.0])
    grid = np.array([[0.7, 0.7], [1 / 6, 1 / 3]] + [[x, y] for x in np.linspace(0.05, 0.95, 10)
                                                     for y in np.linspace(0.05, 0.95, 10)])
    fisher = [vector_field_scan(model, square_graph(w_bd=w), obj, grid, "fisher") for w in (0.1, 1.0, 10.0)]
    fisher_diff = max(np.abs(fisher[0] - f).max() for f in fisher[1:])
    wa = vector_field_scan(model, square_graph(w_bd=0.1), obj, grid[:1], "wasserstein")[0, 2:]
    wb = vector_field_scan(model, square_graph(w_bd=10.0), obj, grid[:1], "wasserstein")[0, 2:]
    dir_diff = np.linalg.norm(wa / np.linalg.norm(wa) - wb / np.linalg.norm(wb))
    elapsed = time.perf_counter() - t0
    ok = fisher_diff <= 1e-10 and dir_diff > 1e-3
    return record(7, ok, f"Fisher field spread {fisher_diff:.1e}; Wasserstein direction change at "
                  f"(0.7, 0.7) = {dir_diff:.3f}", elapsed, 10.0)


# ---------------------------------------------------------------- 8

def criterion_8():
    t0 = time.perf_counter()
    n = 3
    g = hypercube_graph(n)
    ms = hierarchical_model(n, k=2, basis="sigma")
    mp = hierarchical_model(n, k=2, basis="pi")
    rng = np.random.default_rng(108)
    ratios = {pre: [] for pre in PRECONDITIONERS}
    disc = {pre: [] for pre in PRECONDITIONERS}
    for seed in range(3):
        ts = rng.normal(scale=0.5, size=ms.dim)
        tp = convert_parameters(ms, mp, ts)
        obj = kl_objective(dirichlet_target(2 ** n, seed).q)
        for pre in PRECONDITIONERS:
            d = []
            for gamma in (1e-2, 1e-3):
                a = ms.p(natural_gradient_step(ms, g, ts, obj, pre, gamma))
                b = mp.p(natural_gradient_step(mp, g, tp, obj, pre, gamma))
                d.append(np.abs(a - b).max())
            disc[pre].append(d)
            ratios[pre].append(d[0] / d[1] if d[1] > 0 else np.inf)
    elapsed = time.perf_counter() - t0
    nat_ok = all(50 <= r <= 200 for pre in ("fisher", "wasserstein") for r in ratios[pre])
    euc_ok = all(5 <= r <= 20 for r in ratios["euclidean"])
    bound = max(d[0] for pre in ("fisher", "wasserstein") for d in disc[pre])
    return record(8, nat_ok and euc_ok,
                  "discrepancy ratios (gamma 1e-2 / 1e-3): " + ", ".join(
                      f"{pre} [{min(ratios[pre]):.3g}, {max(ratios[pre]):.3g}]" for pre in PRECONDITIONERS)
                  + f"; natural-gradient discrepancy at gamma=1e-2 is {bound:.1e}",
                  elapsed, 30.0)


# ---------------------------------------------------------------- 9

def criterion_9():
    t0 = time.perf_counter()
    n = 4
    g = hypercube_graph(n)
    iters = {}
    unconverged = []
    for seed in range(5):
        q = dirichlet_target(2 ** n, seed).q
        obj = kl_objective(q)
        for k in range(1, n + 1):
            for basis in ("sigma", "pi"):
                model = hierarchical_model(n, k=k, basis=basis)
                for pre in PRECONDITIONERS:
                    tr = run_descent(model, g, np.zeros(model.dim), obj, pre, StepRule("adaptive", 1e-3),
                                     moment_stop(model, q, max_iters=50000))
                    iters[seed, k, basis, pre] = tr.iters
                    if tr.status != "moments":
                        unconverged.append((seed, k, basis, pre))
    spread = 0.0
    for seed in range(5):
        for k in range(1, n + 1):
            for pre in ("fisher", "wasserstein"):
                a, b = iters[seed, k, "sigma", pre], iters[seed, k, "pi", pre]
                spread = max(spread, abs(a - b) / max(a, b))
    elapsed = time.perf_counter() - t0
    ok = not unconverged and spread <= 0.10
    cells = sorted({(c[2], c[3]) for c in unconverged})
    return record(9, ok, f"{120 - len(unconverged)} of 120 runs hit the moment stop (unconverged cells: "
                  f"{cells or 'none'}); max relative sigma/pi iteration gap {spread:.1%}", elapsed, 600.0)


# ---------------------------------------------------------------- 10

def criterion_10():
    t0 = time.perf_counter()
    rng = np.random.default_rng(110)
    drift = 0.0
    for _ in range(3):
        g = path_graph(3, rng.uniform(0.5, 2.0, 2))
        p0, p1 = rng.dirichlet(5 * np.ones(3)), rng.dirichlet(5 * np.ones(3))
        _, path = wasserstein_distance(g, p0, p1)
        drift = max(drift, cotangent_flow(g, p0, initial_momentum(path), 1.0, 1000).drift)
    model = independence_model()
    g = square_graph(1.0, 0.1, 1.0, 1.0)
    xi0, xi1 = np.array([0.3, 0.6]), np.array([0.7, 0.4])
    _, path = parameter_distance(model, g, xi0, xi1)
    tr = parameter_geodesic_flow(model, g, xi0, initial_parameter_momentum(path), 1.0, 1000)
    drift = max(drift, tr.drift)
    m0 = metric(model, g, xi0)
    pt = parallel_transport(model, g, tr.interpolant(), m0.J @ np.array([1.0, -0.5]), 1.0, 1000)
    fd = 0.0
    h = 1e-6
    for _ in range(20):
        n = int(rng.integers(3, 9))
        q, p = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        for obj in (kl_objective(q), expectation_objective(rng.standard_normal(n))):
            grad = obj.grad(p)
            num = np.array([(obj.value(p + h * e) - obj.value(p - h * e)) / (2 * h) for e in np.eye(n)])
            fd = max(fd, np.linalg.norm(num - grad) / np.linalg.norm(grad))
    elapsed = time.perf_counter() - t0
    ok = drift <= 1e-6 and pt.norm_drift <= 1e-5 and fd <= 1e-6
    return record(10, ok, f"Hamiltonian drift {drift:.1e}; transport norm drift {pt.norm_drift:.1e}; "
                  f"gradient FD error {fd:.1e}", elapsed, 30.0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(check):
    ok = check()
    num = int(check.__name__.split("_")[1])
    assert ok, RESULTS[num][1]


if __name__ == "__main__":
    for check in CRITERIA:
        check()
    print("\n".join(report_lines()))
