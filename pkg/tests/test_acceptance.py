"""Acceptance gate: one pass/fail line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import itertools
import math
import time

import numpy as np
import pytest

from visual_roadmap.dataset import simulate
from visual_roadmap.experiments import (
    ExperimentSpec,
    audit_path,
    free_queries,
    plan_query,
    prepare,
    run_benchmark,
    scene_obstacle,
)
from visual_roadmap.imaging import RobotImage, hadamard_overlap
from visual_roadmap.metrics import ImageL2, RandomProjectionL2, make_metric, select_corners, shi_tomasi
from visual_roadmap.planners import GoldStandard
from visual_roadmap.roadmap import (
    VisualRoadmap,
    PrunedRoadmap,
    build_graph,
    insert_query,
    intrinsic_dimension,
    knn,
    prune_obstacle_nodes,
    prune_unsafe_edges,
    shortest_path,
)
from visual_roadmap.robots import contact_margin, geometric_collision, sample_configurations
from visual_roadmap.scene import load_scene

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}
METRICS = ("img-l2", "rp-l2", "theta-g", "itp-l2", "st-h")


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    return ok


@pytest.fixture(scope="module")
def standard():
    return load_scene("standard")


@pytest.fixture(scope="module")
def density_report():
    t0 = time.perf_counter()
    spec = ExperimentSpec("standard", (500, 1000, 2000, 5000), METRICS, ("none", "lts", "itp", "jnst"))
    report = run_benchmark(spec)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="module")
def standard_2000(standard):
    ds = simulate(standard, 2000)
    ds.features
    return ds


def test_c1_conservativeness(standard):
    t0 = time.perf_counter()
    robot = standard.robot
    Q = sample_configurations(5000, robot, 99)
    ds = simulate(standard, configs=Q)
    mask = scene_obstacle(standard)
    visual = ds.supports[:, mask.index[0]].any(axis=1)
    tol = 2.0 * standard.camera.pixel_size
    misses = excluded = geo_hits = 0
    for i in np.flatnonzero(~visual):
        if geometric_collision(ds.configs[i], robot, standard.obstacles):
            geo_hits += 1
            if abs(contact_margin(ds.configs[i], robot, standard.obstacles)) < tol:
                excluded += 1
            else:
                misses += 1
    elapsed = time.perf_counter() - t0
    ok = misses == 0 and elapsed < 300
    assert record(1, ok, f"{len(Q)} poses, {int(visual.sum())} visual hits, {misses} missed collisions, "
                         f"{excluded} within 2 px of contact, {elapsed:.0f}s")


def test_c2_table_ordering(density_report):
    report, _ = density_report
    n = 2000
    none = {m: report.bad_pct(n, m, "none") for m in METRICS}
    a = all(none[m] <= none["img-l2"] / 5.0 for m in ("theta-g", "itp-l2", "st-h"))
    b_fail = [(m, p) for m in METRICS for p in ("lts", "itp", "jnst") if report.bad_pct(n, m, p) > none[m]]
    itp, jnst = report.bad_pct(n, "st-h", "itp"), report.bad_pct(n, "st-h", "jnst")
    c = max(itp, jnst) <= 2.0 * min(itp, jnst) if min(itp, jnst) > 0 else max(itp, jnst) == 0
    wall = sum(r["wall_time"] for r in report.rows if r["density"] == n)
    detail = (
        "None: " + ", ".join(f"{m} {none[m]:.2f}%" for m in METRICS)
        + f"; (a) {'ok' if a else 'fail'}; (b) violations {b_fail or 'none'}"
        + f"; (c) st-h itp {itp:.2f}% jnst {jnst:.2f}%"
    )
    assert record(2, a and not b_fail and c, detail)


def _inversions(values):
    return [(b - a) / a for a, b in zip(values, values[1:]) if b > a and a > 0] + [
        math.inf for a, b in zip(values, values[1:]) if b > a and a == 0
    ]


def test_c3_density_monotonicity(density_report):
    report, elapsed = density_report
    dens = (500, 1000, 2000, 5000)
    ok, parts = True, []
    for m in METRICS:
        vals = [report.bad_pct(n, m, "none") for n in dens]
        inv = _inversions(vals)
        good = len(inv) == 0 or (len(inv) == 1 and inv[0] < 0.2)
        ok &= good
        parts.append(f"{m} " + "/".join(f"{v:.2f}" for v in vals) + ("" if good else " FAIL"))
    assert record(3, ok, "; ".join(parts) + f"; sweep {elapsed:.0f}s")


@pytest.mark.parametrize("preset", ["torus2", "mobile"])
def test_c4_manifold_dimension(preset):
    ds = simulate(load_scene(preset), 2000)
    res = intrinsic_dimension(ds, k=8, d_max=5)
    ratio = res.elbow_ratio(2)
    ok = res.residual[1] < 0.1 and ratio >= 3.0
    prev = RESULTS.get(4, "")
    line = f"{preset}: residual(2) {res.residual[1]:.3f}, elbow {ratio:.1f}"
    passed = ok and ("FAIL" not in prev)
    detail = (prev.split("(", 1)[1].rstrip(")") + "; " if prev else "") + line
    record(4, passed, detail)
    assert ok


def test_c5_random_projection(standard_2000):
    ds = standard_2000
    ex, rp = ImageL2(), RandomProjectionL2(2000, seed=11)
    assert ds.p == 100 * 100 * 3
    re, rr = ex.represent(ds), rp.represent(ds)
    rng = np.random.default_rng(12)
    pairs = []
    while len(pairs) < 200:
        a, b = rng.choice(ds.n, 2, replace=False)
        pairs.append((a, b))
    a, b = np.array(pairs).T
    de = np.array([ex.pairwise(re.take([i]), re.take([j]))[0, 0] for i, j in pairs])
    dr = np.array([rp.pairwise(rr.take([i]), rr.take([j]))[0, 0] for i, j in pairs])
    within = float(np.mean(np.abs(dr - de) / de <= 0.2))
    ne, _ = knn(ex, re, 8)
    nr, _ = knn(rp, rr, 8)
    overlap = float(np.mean([len(set(x) & set(y)) / 8 for x, y in zip(ne, nr)]))
    ok = within >= 0.99 and overlap >= 0.70
    assert record(5, ok, f"{within:.1%} of 200 pairs within 20%, mean 8-NN overlap {overlap:.1%}")


def test_c6_path_soundness(standard, standard_2000):
    mask = scene_obstacle(standard)
    gold = GoldStandard(standard.robot, standard.cameras, mask)
    queries = free_queries(standard, mask, 20, np.random.default_rng(606))
    gated = {("st-h", "itp"): 0.0, ("st-h", "jnst"): 0.0, ("st-h", "none"): 0.1, ("st-h", "lts"): 0.1,
             ("st-h", "lts-sup"): 0.1}
    ok, parts = True, []
    for (metric, planner), limit in gated.items():
        prep = prepare(standard_2000, mask, metric, planner)
        found = fails = 0
        for s, t in queries:
            out, store = plan_query(prep, s, t)
            if out.found:
                found += 1
                fails += not audit_path(out.path, store, gold)
        good = fails <= limit * len(queries)
        ok &= good
        parts.append(f"{metric}/{planner} {fails} failed of {found} paths")
    assert record(6, ok, "; ".join(parts))


def _graph(n, edges, weights):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    G = VisualRoadmap("t", 1, np.zeros((n, 1), np.int64), np.zeros((n, 1)), edges, np.asarray(weights, float), n)
    return PrunedRoadmap(G, None, np.ones(n, bool), edges, G.weights, np.ones(len(edges), bool), G.neighbors)


def _enumerate_shortest(n, edges, weights, s, t):
    adj = {i: {} for i in range(n)}
    for (i, j), w in zip(edges, weights):
        adj[i][j] = adj[j][i] = w
    best = math.inf

    def walk(u, seen, cost):
        nonlocal best
        if cost >= best:
            return
        if u == t:
            best = cost
            return
        for v, w in adj[u].items():
            if v not in seen:
                walk(v, seen | {v}, cost + w)

    walk(s, {s}, 0.0)
    return best


def _brute_response(img):
    """Structure-tensor minimum eigenvalue by explicit loops and eigvalsh."""
    H, W = img.shape
    P = np.pad(img, 2)
    kx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], float)
    gx = np.zeros((H + 2, W + 2))
    gy = np.zeros((H + 2, W + 2))
    for r in range(H + 2):
        for c in range(W + 2):
            patch = P[r : r + 3, c : c + 3]
            gx[r, c] = (patch * kx).sum()
            gy[r, c] = (patch * kx.T).sum()
    out = np.zeros((H, W))
    for r in range(H):
        for c in range(W):
            M = np.zeros((2, 2))
            for dr in range(3):
                for dc in range(3):
                    g = np.array([gx[r + dr, c + dc], gy[r + dr, c + dc]])
                    M += np.outer(g, g)
            out[r, c] = max(np.linalg.eigvalsh(M)[0], 0.0)
    return out


def _brute_corners(resp, quality=0.05, radius=3.0, cap=25):
    H, W = resp.shape
    top = resp.max()
    cands = []
    for r in range(H):
        for c in range(W):
            v = resp[r, c]
            if v <= quality * top:
                continue
            nb = resp[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2]
            if v >= nb.max():
                cands.append((-v, r, c))
    kept = []
    for _, r, c in sorted(cands):
        if all(math.hypot(c - x, r - y) > radius for x, y in kept):
            kept.append((c, r))
        if len(kept) == cap:
            break
    return np.array(kept, float).reshape(-1, 2)


def test_c7_oracle_equivalences(standard, standard_2000):
    rng = np.random.default_rng(77)
    notes = []
    # Dijkstra against exhaustive simple-path enumeration
    path_ok = True
    for _ in range(100):
        pairs = [(i, j) for i, j in itertools.combinations(range(10), 2) if rng.random() < 0.3]
        w = rng.integers(1, 20, len(pairs)).astype(float)
        res = shortest_path(_graph(10, pairs, w), 0, 9)
        best = _enumerate_shortest(10, pairs, w, 0, 9)
        path_ok &= (res.weight == best) if res.found else best == math.inf
    notes.append(f"dijkstra {'ok' if path_ok else 'mismatch'}")
    # node pruning against a direct Hadamard recomputation per node
    ds = standard_2000.subset(np.arange(500))
    mask = scene_obstacle(standard)
    Gp = prune_obstacle_nodes(build_graph(ds, "itp-l2"), ds, mask)
    b = RobotImage(np.repeat(mask.masks[0].astype(np.float32), 3), mask.views)
    direct = np.array([hadamard_overlap(ds.foreground(i), b) for i in range(ds.n)])
    prune_ok = bool(np.array_equal(~Gp.node_alive, direct))
    notes.append(f"pruning {'ok' if prune_ok else 'mismatch'}")
    # metric axioms on 1000 random triples
    axiom_ok = True
    for name in METRICS:
        m = make_metric(name)
        rep = m.represent(ds)
        T = rng.integers(0, ds.n, (1000, 3))
        D = m.pairwise(rep, rep)
        x, y, z = T.T
        scale = D.max()
        axiom_ok &= bool(np.all(D >= 0) and np.allclose(np.diag(D), 0, atol=1e-9 * scale))
        axiom_ok &= bool(np.allclose(D, D.T, atol=1e-9 * scale))
        axiom_ok &= bool(np.all(D[x, z] <= D[x, y] + D[y, z] + 1e-9 * scale))
    notes.append(f"metric axioms {'ok' if axiom_ok else 'violated'}")
    # Shi-Tomasi against a brute-force eigenvalue map
    st_ok = True
    for _ in range(20):
        img = np.zeros((28, 28))
        for _ in range(rng.integers(1, 3)):
            r, c = rng.integers(3, 17, 2)
            img[r : r + rng.integers(3, 8), c : c + rng.integers(3, 8)] = 1.0
        fast = shi_tomasi(img)
        slow = _brute_corners(_brute_response(img))
        if len(fast) != len(slow):
            st_ok = False
            continue
        d = np.linalg.norm(fast[:, None] - slow[None], axis=-1)
        st_ok &= bool(d.min(axis=1).max() <= 3.0 and d.min(axis=0).max() <= 3.0)
    notes.append(f"shi-tomasi {'ok' if st_ok else 'mismatch'}")
    assert record(7, path_ok and prune_ok and axiom_ok and st_ok, ", ".join(notes))


def test_c8_complexity_accounting(standard, standard_2000):
    ds = standard_2000
    mask = scene_obstacle(standard)
    m = make_metric("st-h")
    rep = m.represent(ds)
    Gp = prune_unsafe_edges(prune_obstacle_nodes(build_graph(ds, m, rep=rep), ds, mask), "jnst", mask)
    tests_ok = Gp.overlap_tests == ds.n
    n_alive = int(Gp.node_alive.sum())
    evals_ok = pops_ok = True
    max_pops = 0
    for s, t in free_queries(standard, mask, 10, np.random.default_rng(808)):
        before = m.evaluations
        try:
            Gq = insert_query(Gp, s, t, m, 8, "jnst", mask, rep=rep)
        except Exception:
            continue
        evals_ok &= m.evaluations - before == 2 * n_alive
        res = shortest_path(Gq, Gq.queries["start"], Gq.queries["goal"])
        max_pops = max(max_pops, res.pops)
        pops_ok &= res.pops <= Gq.n_nodes
    ok = tests_ok and evals_ok and pops_ok
    assert record(8, ok, f"overlap tests {Gp.overlap_tests} for n={ds.n}, insertion evaluations "
                         f"{'= 2n' if evals_ok else '!= 2n'} (n={n_alive}), max pops {max_pops}")
