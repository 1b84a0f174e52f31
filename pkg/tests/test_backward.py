import json

import numpy as np
import pytest

from spbe import (
    Belief,
    ExactGenerator,
    GridGenerator,
    HybridGenerator,
    NoFixedPointError,
    ResourceLimitError,
    SolverConfig,
    action_value,
    belief_key,
    build_solve_report,
    grid_points,
    initial_belief,
    instances,
    load_policy,
    nearest_grid_index,
    policy_document,
    render_report,
    solve,
    value_lookup,
)


def test_terminal_values_are_zero(reference_solved):
    spec, result = reference_solved
    gen = result.generator
    pi = initial_belief(spec)
    for i in range(2):
        for xi in range(2):
            assert gen.value(spec.horizon + 1, pi, i, xi) == 0.0
            assert value_lookup(result.values, spec.horizon + 1, pi, i, xi) == 0.0


def test_value_table_range_check(reference_solved):
    spec, result = reference_solved
    with pytest.raises(ValueError):
        result.values.lookup(0, initial_belief(spec), 0, 0)
    with pytest.raises(ValueError):
        result.values.lookup(spec.horizon + 2, initial_belief(spec), 0, 0)


def test_reference_solve_summary(reference_solved):
    spec, result = reference_solved
    assert result.ok
    assert result.root.residual == 0.0
    for i in range(2):
        np.testing.assert_allclose(result.root.values[i], [0.24, 0.24],
                                   atol=1e-12)
    # stage-1 play pools, so the only stage-2 belief ever touched is the prior
    stage2_keys = {key for (t, key), _ in result.generator.cached_entries()
                   if t == 2}
    assert stage2_keys == {belief_key(spec.prior)}


def test_belief_key_normalizes():
    key = belief_key(np.array([-0.0, 0.25000000049, 0.75]))
    assert key[0] == 0.0 and not np.signbit(key[0])
    assert key[1] == 0.25
    assert belief_key(np.array([0.1, 0.9])) == (0.1, 0.9)


def test_bellman_consistency(corpus_solves):
    for name in ("reference", "dominant_types", "single_player", "random_a"):
        spec, result = corpus_solves[name]
        gen = result.generator
        for t, pi, sol in gen.cached_points():
            if not sol.converged:
                continue
            v_next = lambda b, i, xi: gen.value(t + 1, b, i, xi)
            for i in range(spec.num_players):
                for xi in range(spec.type_counts[i]):
                    if (i, xi) in sol.degenerate_types:
                        continue
                    row = sol.prescription.rows[i][xi]
                    redo = sum(
                        row[a] * action_value(spec, t, pi, sol.prescription,
                                              i, xi, a, v_next)
                        for a in range(spec.action_counts[i])
                    )
                    assert abs(redo - float(sol.values[i][xi])) <= 1e-10


def test_value_bounds(corpus_solves):
    for name, (spec, result) in corpus_solves.items():
        if result.status != "ok":
            continue
        caps = [np.abs(spec.reward_tensor(t)).max()
                for t in range(1, spec.horizon + 1)]
        for (t, key), sol in result.generator.cached_entries():
            bound = sum(caps[t - 1:]) + 1e-9
            for arr in sol.values:
                assert np.all(np.abs(arr) <= bound)


def test_monotone_cache_and_reproducible_key_set():
    spec = instances.dominant_types_instance()
    first = solve(spec)
    keys_a = [k for k, _ in first.generator.cached_entries()]
    # querying more beliefs only grows the cache
    first.generator.value(2, Belief(np.array([0.7, 0.1, 0.1, 0.1]),
                                    (2, 2)), 0, 0)
    keys_grown = [k for k, _ in first.generator.cached_entries()]
    assert set(keys_a) <= set(keys_grown)
    second = solve(spec)
    keys_b = [k for k, _ in second.generator.cached_entries()]
    assert keys_a == keys_b


def test_no_fixed_point_routing():
    spec = instances.asymmetric_pennies_instance()
    cfg = SolverConfig(enable_support_enumeration=False, max_iterations=300)
    result = solve(spec, config=cfg)
    assert result.status == "failed"
    assert result.failure["kind"] == "no_fixed_point"
    assert result.failure["solver_status"] == "max_iterations"
    gen = ExactGenerator(spec, cfg)
    with pytest.raises(NoFixedPointError):
        gen.solution_at(1, initial_belief(spec))
    # a cached failure re-raises instead of re-solving
    with pytest.raises(NoFixedPointError):
        gen.solution_at(1, initial_belief(spec))
    assert gen.failed_points


def test_cache_budget_refusal():
    spec = instances.dominant_types_instance()
    result = solve(spec, cache_budget=2)
    assert result.status == "refused"
    assert result.failure["kind"] == "resource_limit"
    gen = ExactGenerator(spec, cache_budget=2)
    with pytest.raises(ResourceLimitError):
        gen.solution_at(1, initial_belief(spec))


def test_grid_points_shape_and_order():
    pts = grid_points(4, 10)
    assert pts.shape == (286, 4)
    np.testing.assert_allclose(pts.sum(axis=1), 1.0, atol=1e-12)
    as_tuples = [tuple(p) for p in pts]
    assert as_tuples == sorted(as_tuples)
    scaled = pts * 10
    np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)


def test_nearest_grid_index():
    pts = grid_points(2, 4)
    exact = np.array([0.25, 0.75])
    assert np.array_equal(pts[nearest_grid_index(pts, exact)], exact)
    off = np.array([0.26, 0.74])
    np.testing.assert_allclose(pts[nearest_grid_index(pts, off)],
                               [0.25, 0.75])
    # equidistant between (0.25, 0.75) and (0.5, 0.5): first minimal wins
    mid = np.array([0.375, 0.625])
    np.testing.assert_allclose(pts[nearest_grid_index(pts, mid)],
                               [0.25, 0.75])


def _build_grid(spec, threads=None, resolution=3):
    gen = GridGenerator(spec, SolverConfig(), resolution=resolution,
                        threads=threads)
    gen.build()
    return gen


def test_grid_build_coordination():
    spec = instances.coordination_instance()
    gen = _build_grid(spec)
    assert not gen.failed_points
    assert gen.solve_counts == {1: 20, 2: 20, 3: 20}
    # off-grid queries snap to the nearest point
    off = Belief(np.array([0.34, 0.16, 0.16, 0.34]), (2, 2))
    sol = gen.solution_at(2, off)
    assert sol.converged
    assert gen.snap_stats["queries"] > 0


def test_grid_threads_match_serial():
    spec = instances.coordination_instance()
    serial = _build_grid(spec)
    threaded = _build_grid(spec, threads=4)
    for t in (1, 2, 3):
        for a, b in zip(serial.tables[t], threaded.tables[t]):
            for i in range(spec.num_players):
                np.testing.assert_array_equal(a.prescription.rows[i],
                                              b.prescription.rows[i])
                np.testing.assert_array_equal(a.values[i], b.values[i])


def test_grid_solve_report():
    spec = instances.coordination_instance()
    result = solve(spec, mode="grid", resolution=3)
    assert result.status == "ok"
    report = build_solve_report(result)
    assert report["grid"]["points"] == 20
    assert report["grid"]["resolution"] == 3
    assert set(report["solve_counts"]) == {"1", "2", "3"}


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        solve(instances.matching_pennies_instance(), mode="magic")


def test_policy_document_round_trip(reference_solved):
    spec, result = reference_solved
    doc = policy_document(result)
    assert doc["format"] == "repeated-game-policy"
    text = render_report(doc)
    table = load_policy(json.loads(text), spec)
    for (t, key), sol in result.generator.cached_entries():
        if not sol.converged:
            continue
        got = table.solution_at(t, Belief(np.array(key), spec.type_counts))
        for i in range(spec.num_players):
            np.testing.assert_array_equal(got.prescription.rows[i],
                                          sol.prescription.rows[i])
            np.testing.assert_array_equal(got.values[i], sol.values[i])


def test_policy_rejects_wrong_game(reference_solved):
    _, result = reference_solved
    doc = policy_document(result)
    with pytest.raises(ValueError, match="different game"):
        load_policy(doc, instances.dominant_types_instance())
    with pytest.raises(ValueError, match="policy document"):
        load_policy({"format": "other"}, result.spec)


def test_table_lookup_and_hybrid_completion(reference_solved):
    spec, result = reference_solved
    doc = policy_document(result)
    doc["entries"] = [e for e in doc["entries"] if e["t"] == 1]
    table = load_policy(doc, spec)
    pi = initial_belief(spec)
    with pytest.raises(KeyError):
        table.solution_at(2, pi)
    hybrid = HybridGenerator(table, ExactGenerator(spec))
    assert hybrid.value(2, pi, 0, 0) == pytest.approx(0.24, abs=1e-12)
    hybrid.value(2, pi, 1, 1)
    assert hybrid.completions == 1


def test_report_bytes_deterministic():
    spec = instances.signaling_pennies_instance()
    blobs = []
    for _ in range(2):
        report = build_solve_report(solve(spec))
        del report["timing"]
        blobs.append(render_report(report).encode())
    assert blobs[0] == blobs[1]
