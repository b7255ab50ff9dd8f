import numpy as np
import pytest

from cellmine.decompose import (
    DecomposeError,
    FeaturePoint,
    FeatureSpace,
    MixtureCoefficients,
    PolygonModel,
    build_feature_points,
    read_mixtures,
    read_vertices,
    render_components,
    select_representatives,
    simplex_volume,
    solve_mixture,
    write_mixtures,
    write_vertices,
)
from cellmine.spectrum import SpectralFeature, dft, reconstruct


def make_model(vertices, clusters=(1, 2, 3, 4)):
    space = FeatureSpace(("a", "b", "c"), np.zeros(3), np.ones(3))
    pts = [FeaturePoint(f"v{i}", np.asarray(v, dtype=float)) for i, v in enumerate(vertices)]
    return PolygonModel(pts, list(clusters), space)


def grid_search_simplex(v_matrix, f, fine=1000, coarse=100):
    """Independent oracle: exhaustive search over the barycentric grid.

    Two stages, both exhaustive over their grid: a full scan at step
    1/coarse, then a full scan at step 1/fine inside a window of +-5 coarse
    steps around the stage-1 winner. By convexity the fine-grid optimum lies
    within cond(edges) * sqrt(3) * (1/coarse) of the stage-1 winner, which the
    window covers for the well-conditioned simplices used in these tests
    (see random_simplex).
    """
    def scan(lo, hi, denom):
        axes = [np.arange(lo[d], hi[d] + 1) for d in range(3)]
        i, j, k = np.meshgrid(*axes, indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        remainder = denom - i - j - k
        mask = remainder >= 0
        x = np.stack([i[mask], j[mask], k[mask], remainder[mask]], axis=1) / denom
        resid = x @ v_matrix.T - f
        obj = np.sum(resid * resid, axis=1)
        best = int(np.argmin(obj))
        return x[best], float(obj[best])

    x0, _ = scan(np.zeros(3, dtype=int), np.full(3, coarse, dtype=int), coarse)
    scale = fine // coarse
    center = np.round(x0[:3] * fine).astype(int)
    lo = np.clip(center - 5 * scale, 0, fine)
    hi = np.clip(center + 5 * scale, 0, fine)
    x, obj = scan(lo, hi, fine)
    return x, np.sqrt(obj)


def full_grid_search(v_matrix, f, denom):
    """Single-stage exhaustive scan, used to validate the two-stage oracle."""
    axes = [np.arange(0, denom + 1)] * 3
    i, j, k = np.meshgrid(*axes, indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    remainder = denom - i - j - k
    mask = remainder >= 0
    x = np.stack([i[mask], j[mask], k[mask], remainder[mask]], axis=1) / denom
    resid = x @ v_matrix.T - f
    obj = np.sum(resid * resid, axis=1)
    best = int(np.argmin(obj))
    return x[best], float(np.sqrt(obj[best]))


def random_simplex(rng):
    """Random well-conditioned simplex: the grid oracle's two-stage window
    is only exhaustive-equivalent when the edge matrix is not too thin."""
    while True:
        vertices = rng.uniform(-2, 2, size=(4, 3))
        edges = (vertices[1:] - vertices[0]).T
        s = np.linalg.svd(edges, compute_uv=False)
        if s.min() >= 0.6 and s.max() / s.min() <= 2.2:
            assert simplex_volume(list(vertices)) > 1e-9
            return vertices


def test_two_stage_oracle_matches_full_enumeration():
    rng = np.random.default_rng(40)
    for _ in range(3):
        vertices = random_simplex(rng)
        v = vertices.T
        f = rng.uniform(-2, 2, size=3)
        x_two, r_two = grid_search_simplex(v, f, fine=100, coarse=20)
        x_full, r_full = full_grid_search(v, f, denom=100)
        assert r_two == pytest.approx(r_full, abs=1e-12)
        np.testing.assert_allclose(x_two, x_full, atol=1e-12)


def test_vertex_input_returns_one_hot():
    rng = np.random.default_rng(41)
    model = make_model(random_simplex(rng))
    for i in range(4):
        res = solve_mixture(model.vertices[i], model)
        expected = np.zeros(4)
        expected[i] = 1.0
        np.testing.assert_array_equal(res.x, expected)
        assert res.residual == 0.0


def test_interior_midpoint():
    rng = np.random.default_rng(42)
    model = make_model(random_simplex(rng))
    v = model.matrix
    f = 0.5 * v[:, 0] + 0.5 * v[:, 1]
    res = solve_mixture(f, model)
    np.testing.assert_allclose(res.x, [0.5, 0.5, 0.0, 0.0], atol=1e-6)
    assert res.residual < 1e-8


def test_interior_points_match_grid_oracle():
    rng = np.random.default_rng(43)
    for _ in range(25):
        vertices = random_simplex(rng)
        model = make_model(vertices)
        # plant weights on the 1e-3 grid so the fine grid contains the optimum
        raw = rng.integers(0, 1000, size=4).astype(float)
        if raw.sum() == 0:
            raw[0] = 1000
        counts = np.floor(1000 * raw / raw.sum()).astype(int)
        counts[3] = 1000 - counts[:3].sum()
        x_true = counts / 1000.0
        f = model.matrix @ x_true
        res = solve_mixture(f, model)
        x_oracle, _ = grid_search_simplex(model.matrix, f)
        np.testing.assert_allclose(res.x, x_oracle, atol=1e-6)
        assert res.residual < 1e-8


def test_exterior_points_match_oracle_projection_residual():
    rng = np.random.default_rng(44)
    for _ in range(15):
        model = make_model(random_simplex(rng))
        f = rng.uniform(-4, 4, size=3)
        res = solve_mixture(f, model)
        _, oracle_residual = grid_search_simplex(model.matrix, f)
        assert res.residual <= oracle_residual + 1e-12
        assert abs(res.residual - oracle_residual) < 1e-3


def test_kkt_conditions_at_solution():
    rng = np.random.default_rng(45)
    for _ in range(20):
        model = make_model(random_simplex(rng))
        f = rng.uniform(-3, 3, size=3)
        res = solve_mixture(f, model)
        v = model.matrix
        g = 2.0 * v.T @ (v @ res.x - f)
        support = res.x > 1e-10
        lam = -float(np.mean(g[support]))
        # stationarity on the support, dual feasibility off it
        assert np.max(np.abs(g[support] + lam)) < 1e-8
        if np.any(~support):
            assert np.min(g[~support] + lam) > -1e-8


def test_solution_invariant_to_vertex_reordering():
    rng = np.random.default_rng(46)
    model = make_model(random_simplex(rng))
    f = rng.uniform(-2, 2, size=3)
    base = solve_mixture(f, model)
    perm = rng.permutation(4)
    permuted = make_model([model.vertices[i].f for i in perm])
    res = solve_mixture(f, permuted)
    np.testing.assert_allclose(res.x[np.argsort(perm)], base.x, atol=1e-6)


def test_idempotent_on_projection():
    rng = np.random.default_rng(47)
    model = make_model(random_simplex(rng))
    f = rng.uniform(-4, 4, size=3)
    first = solve_mixture(f, model)
    f_r = model.matrix @ first.x
    second = solve_mixture(f_r, model)
    np.testing.assert_allclose(second.x, first.x, atol=1e-8)
    assert second.residual < 1e-8


def test_degenerate_model_rejected():
    flat = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.5, 0.5, 0.0],
    ]
    model = make_model(flat)
    with pytest.raises(DecomposeError, match="degenerate"):
        solve_mixture(np.array([0.2, 0.2, 0.5]), model)


def test_build_feature_points_standardizes():
    feats = [
        SpectralFeature(f"t{i}", 1.0, 0.1, float(i), 0.2 * i, 2.0 + i, 0.0)
        for i in range(6)
    ]
    points, space = build_feature_points(feats)
    coords = np.stack([p.f for p in points])
    np.testing.assert_allclose(coords.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(coords.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(space.inverse(points[3].f), [3.0, 0.6, 5.0], atol=1e-12)


def test_build_feature_points_rejects_flat_dimension():
    feats = [SpectralFeature(f"t{i}", 1, 0, 1.0, 0.5, 2, 0) for i in range(4)]
    with pytest.raises(DecomposeError, match="zero variance"):
        build_feature_points(feats)


def _blob_points(rng, centers, per_cluster=30, spread=0.15):
    points, assignments = [], {}
    for cluster, center in enumerate(centers, start=1):
        for i in range(per_cluster):
            tid = f"c{cluster}_{i:03d}"
            points.append(FeaturePoint(tid, center + rng.normal(0, spread, size=3)))
            assignments[tid] = cluster
    return points, assignments


def test_select_representatives_far_side_oracle():
    rng = np.random.default_rng(48)
    centers = np.array(
        [[3.0, 0, 0], [-3.0, 0, 0], [0, 3.0, 0], [0, 0, 3.0]]
    )
    points, assignments = _blob_points(rng, centers)
    space = FeatureSpace(("a", "b", "c"), np.zeros(3), np.ones(3))
    model = select_representatives(points, assignments, [1, 2, 3, 4], space,
                                   density_radius=0.8, min_density=3)
    # independent brute force with the same rule
    for slot, cluster in enumerate([1, 2, 3, 4]):
        best = None
        for p in points:
            if assignments[p.tower_id] != cluster:
                continue
            neighbors = sum(
                1
                for q in points
                if q.tower_id != p.tower_id and np.linalg.norm(q.f - p.f) <= 0.8
            )
            if neighbors < 3:
                continue
            sep = min(
                np.linalg.norm(q.f - p.f)
                for q in points
                if assignments[q.tower_id] != cluster
            )
            key = (-sep, -neighbors, p.tower_id)
            if best is None or key < best[0]:
                best = (key, p.tower_id)
        assert model.vertices[slot].tower_id == best[1]


def test_select_representatives_rejects_outlier():
    rng = np.random.default_rng(49)
    centers = np.array([[2.0, 0, 0], [-2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]])
    points, assignments = _blob_points(rng, centers, per_cluster=20, spread=0.1)
    outlier = FeaturePoint("c1_outlier", np.array([50.0, 0.0, 0.0]))
    points.append(outlier)
    assignments["c1_outlier"] = 1
    space = FeatureSpace(("a", "b", "c"), np.zeros(3), np.ones(3))
    model = select_representatives(points, assignments, [1, 2, 3, 4], space,
                                   density_radius=0.5, min_density=3)
    assert model.vertices[0].tower_id != "c1_outlier"


def test_select_representatives_singletons_with_zero_density():
    corners = np.array(
        [[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [1.0, 1.0, 1.0]]
    )
    points = [FeaturePoint(f"s{i}", corners[i]) for i in range(4)]
    assignments = {f"s{i}": i + 1 for i in range(4)}
    space = FeatureSpace(("a", "b", "c"), np.zeros(3), np.ones(3))
    model = select_representatives(points, assignments, [1, 2, 3, 4], space, min_density=0)
    assert [v.tower_id for v in model.vertices] == ["s0", "s1", "s2", "s3"]


def test_select_representatives_density_error_suggests_fix():
    points = [FeaturePoint(f"p{i}", np.array([float(i), 0, 0])) for i in range(8)]
    assignments = {f"p{i}": (i % 4) + 1 for i in range(8)}
    space = FeatureSpace(("a", "b", "c"), np.zeros(3), np.ones(3))
    with pytest.raises(DecomposeError, match="min-density"):
        select_representatives(points, assignments, [1, 2, 3, 4], space,
                               density_radius=0.1, min_density=5)


def test_render_components_single_vertex():
    n = 1008
    t = np.arange(n)
    vertex = np.cos(2 * np.pi * 7 * t / n)
    others = [np.cos(2 * np.pi * 14 * t / n)] * 3
    coeff = MixtureCoefficients("t", np.array([1.0, 0.0, 0.0, 0.0]), 0.0)
    comps = render_components(coeff, [vertex] + others, tower_scale=2.5)
    np.testing.assert_allclose(comps[0], 2.5 * reconstruct(dft(vertex)), atol=1e-9)
    assert np.allclose(comps[1:], 0.0)


def test_render_components_symmetric_quarters():
    n = 1008
    vertex = np.cos(2 * np.pi * 7 * np.arange(n) / n)
    coeff = MixtureCoefficients("t", np.full(4, 0.25), 0.0)
    comps = render_components(coeff, [vertex] * 4, tower_scale=1.0)
    for i in range(1, 4):
        np.testing.assert_allclose(comps[i], comps[0], atol=1e-12)


def test_mixture_and_vertices_io(tmp_path):
    rng = np.random.default_rng(50)
    model = make_model(random_simplex(rng))
    mix = solve_mixture(rng.uniform(-1, 1, size=3), model)
    mix = MixtureCoefficients("towerX", mix.x, mix.residual)
    mpath = write_mixtures(tmp_path / "m.csv", [mix])
    loaded = read_mixtures(mpath)[0]
    np.testing.assert_allclose(loaded.x, mix.x, rtol=0, atol=0)
    vpath = write_vertices(tmp_path / "v.json", model)
    loaded_model = read_vertices(vpath)
    assert [v.tower_id for v in loaded_model.vertices] == [
        v.tower_id for v in model.vertices
    ]
    np.testing.assert_allclose(loaded_model.matrix, model.matrix)
