"""Backward value recursion over common beliefs.

Values are defined from the final stage backwards: beyond the horizon the
continuation value is zero, and at each stage t the value of (player,
type) at a common belief is read off the solved stage prescription, whose
own evaluation pulls stage-(t+1) values at the updated beliefs. Two
interchangeable generators drive this recursion:

``ExactGenerator``
    solves stage points lazily and memoizes by (stage, quantized belief).
    Solving the initial belief at stage 1 recursively solves every belief
    it touches; later queries (forward play, verification) hit the cache
    or trigger further exact solves. A cache budget bounds runaway
    recursion on large games.

``GridGenerator``
    precomputes whole per-stage tables on a simplex grid, coarsest first
    from the final stage, reading stage-(t+1) values at the nearest grid
    point. Queries snap to the nearest grid point, so answers are
    approximate but total.

Solved tables can be saved to a policy document and reloaded as a
``TableGenerator`` (exact key lookup), optionally backed by a lazy exact
fallback for keys the document does not carry.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .beliefs import Belief, Prescription, initial_belief
from .game import GameSpec
from .stage import SolverConfig, StageSolution, solve_stage_fixed_point

KEY_DIGITS = 9
DEFAULT_CACHE_BUDGET = 1_000_000

BeliefKey = tuple


class NoFixedPointError(RuntimeError):
    """A stage point failed to solve; carries where and how it failed."""

    def __init__(self, t: int, key: BeliefKey, status: str):
        super().__init__(
            f"stage {t} has no prescription fixed point at belief {list(key)} "
            f"(solver status: {status})"
        )
        self.t = t
        self.key = key
        self.status = status


class ResourceLimitError(RuntimeError):
    """A computation was refused because it exceeds a configured bound."""

    def __init__(self, message: str, limit: int):
        super().__init__(message)
        self.limit = limit


def belief_key(weights) -> BeliefKey:
    """Quantize belief weights to a hashable cache key.

    Rounds to 9 digits and normalizes negative zero so that beliefs equal
    to solver precision share a key.
    """
    q = np.round(np.asarray(weights, dtype=float), KEY_DIGITS)
    q[q == 0.0] = 0.0
    return tuple(float(v) for v in q)


def belief_from_key(key: BeliefKey, type_counts: tuple[int, ...]) -> Belief:
    return Belief(np.asarray(key, dtype=float), type_counts)


# ---------------------------------------------------------------------------
# Exact lazy generator
# ---------------------------------------------------------------------------

class ExactGenerator:
    """Lazily solved, memoized stage prescriptions.

    Every distinct (stage, quantized belief) pair is solved at most once;
    the memo makes repeated queries, forward play, and verification
    bit-identical. A failed stage point raises :class:`NoFixedPointError`
    and aborts whatever query needed it.
    """

    mode = "exact"

    def __init__(self, spec: GameSpec, config: SolverConfig | None = None,
                 cache_budget: int = DEFAULT_CACHE_BUDGET):
        self.spec = spec
        self.config = config or SolverConfig()
        self.cache_budget = cache_budget
        self._cache: dict[tuple[int, BeliefKey], StageSolution] = {}
        self._points: dict[tuple[int, BeliefKey], Belief] = {}

    def solution_at(self, t: int, pi: Belief) -> StageSolution:
        if not 1 <= t <= self.spec.horizon:
            raise ValueError(f"stage {t} outside horizon 1..{self.spec.horizon}")
        key = (t, belief_key(pi.weights))
        got = self._cache.get(key)
        if got is not None:
            if not got.converged:
                raise NoFixedPointError(t, key[1], got.status)
            return got
        if len(self._cache) >= self.cache_budget:
            raise ResourceLimitError(
                f"stage-point cache exceeded {self.cache_budget} entries; "
                "raise cache_budget or use grid mode",
                self.cache_budget,
            )
        solution = solve_stage_fixed_point(
            self.spec, t, pi, self._value_closure(t + 1), self.config
        )
        self._cache[key] = solution
        self._points[key] = pi
        if not solution.converged:
            raise NoFixedPointError(t, key[1], solution.status)
        return solution

    def value(self, t: int, pi: Belief, i: int, xi: int) -> float:
        if t > self.spec.horizon:
            return 0.0
        solution = self.solution_at(t, pi)
        return float(solution.values[i][xi])

    def _value_closure(self, t_next: int):
        def v_next(pi: Belief, i: int, xi: int) -> float:
            return self.value(t_next, pi, i, xi)
        return v_next

    @property
    def solve_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for (t, _key) in self._cache:
            counts[t] = counts.get(t, 0) + 1
        return counts

    @property
    def failed_points(self) -> list[tuple[int, BeliefKey, str]]:
        return [(t, key, sol.status) for (t, key), sol in self._cache.items()
                if not sol.converged]

    def cached_entries(self):
        """(stage, key, solution) triples in deterministic sorted order."""
        return sorted(self._cache.items(), key=lambda kv: (kv[0][0], kv[0][1]))

    def cached_points(self):
        """Like cached_entries, but pairs each solution with the exact
        belief it was solved at (keys quantize to 9 digits; consistency
        checks need the unrounded weights)."""
        out = []
        for (t, key), solution in self.cached_entries():
            out.append((t, self._points[(t, key)], solution))
        return out


# ---------------------------------------------------------------------------
# Grid generator
# ---------------------------------------------------------------------------

def grid_points(num_weights: int, resolution: int) -> np.ndarray:
    """All belief vectors with weights k/resolution, lexicographically
    ascending. Row count is C(resolution + num_weights - 1, num_weights - 1)."""
    if num_weights < 1 or resolution < 1:
        raise ValueError("need at least one weight and resolution >= 1")
    rows = []
    for cuts in itertools.combinations_with_replacement(
            range(resolution + 1), num_weights - 1):
        parts = []
        prev = 0
        for c in cuts:
            parts.append(c - prev)
            prev = c
        parts.append(resolution - prev)
        rows.append(parts)
    grid = np.asarray(sorted(rows), dtype=float) / float(resolution)
    grid.setflags(write=False)
    return grid


def nearest_grid_index(grid: np.ndarray, weights: np.ndarray) -> int:
    """Index of the grid row closest in L1; first (lex smallest) on ties."""
    dist = np.abs(grid - np.asarray(weights, dtype=float)).sum(axis=1)
    return int(np.argmin(dist))


class GridGenerator:
    """Per-stage prescription tables on a simplex grid.

    ``build`` solves every grid point at every stage, final stage first;
    stage-(t+1) values are read at the grid point nearest (L1) to the
    updated belief. Failed points are kept in the table with their failure
    status so the build can finish, but querying one raises. Build work
    within a stage can be spread over threads; points are independent given
    the frozen next-stage table, so the result does not depend on
    scheduling.
    """

    mode = "grid"

    def __init__(self, spec: GameSpec, config: SolverConfig | None = None,
                 resolution: int = 10, threads: int | None = None):
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        self.spec = spec
        self.config = config or SolverConfig()
        self.resolution = resolution
        self.threads = threads
        self.grid = grid_points(spec.num_joint_types, resolution)
        self.tables: dict[int, list[StageSolution]] = {}
        self.snap_stats = {"queries": 0, "max_snap_l1": 0.0}
        self._stats_lock = threading.Lock()
        self._built = False

    def build(self) -> None:
        if self._built:
            return
        n_points = self.grid.shape[0]
        for t in range(self.spec.horizon, 0, -1):
            v_next = self._table_value_closure(t + 1)

            def solve_point(idx: int) -> StageSolution:
                pi = Belief(self.grid[idx].copy(), self.spec.type_counts)
                return solve_stage_fixed_point(self.spec, t, pi, v_next, self.config)

            if self.threads and self.threads > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as pool:
                    table = list(pool.map(solve_point, range(n_points)))
            else:
                table = [solve_point(idx) for idx in range(n_points)]
            self.tables[t] = table
        self._built = True

    def _note_snap(self, snap: float) -> None:
        # max over the same query set regardless of thread scheduling
        with self._stats_lock:
            if snap > self.snap_stats["max_snap_l1"]:
                self.snap_stats["max_snap_l1"] = snap

    def _table_value_closure(self, t_next: int):
        def v_next(pi: Belief, i: int, xi: int) -> float:
            if t_next > self.spec.horizon:
                return 0.0
            idx = nearest_grid_index(self.grid, pi.weights)
            self._note_snap(float(np.abs(self.grid[idx] - pi.weights).sum()))
            return float(self.tables[t_next][idx].values[i][xi])
        return v_next

    def solution_at(self, t: int, pi: Belief) -> StageSolution:
        if not 1 <= t <= self.spec.horizon:
            raise ValueError(f"stage {t} outside horizon 1..{self.spec.horizon}")
        self.build()
        idx = nearest_grid_index(self.grid, pi.weights)
        self.snap_stats["queries"] += 1
        self._note_snap(float(np.abs(self.grid[idx] - pi.weights).sum()))
        solution = self.tables[t][idx]
        if not solution.converged:
            raise NoFixedPointError(t, belief_key(self.grid[idx]), solution.status)
        return solution

    def value(self, t: int, pi: Belief, i: int, xi: int) -> float:
        if t > self.spec.horizon:
            return 0.0
        return float(self.solution_at(t, pi).values[i][xi])

    @property
    def solve_counts(self) -> dict[int, int]:
        return {t: len(table) for t, table in self.tables.items()}

    @property
    def failed_points(self) -> list[tuple[int, BeliefKey, str]]:
        out = []
        for t in sorted(self.tables):
            for idx, sol in enumerate(self.tables[t]):
                if not sol.converged:
                    out.append((t, belief_key(self.grid[idx]), sol.status))
        return out


# ---------------------------------------------------------------------------
# Saved-policy generators
# ---------------------------------------------------------------------------

class TableGenerator:
    """Prescriptions served from a saved policy document, exact keys only."""

    mode = "table"

    def __init__(self, spec: GameSpec, entries: dict[tuple[int, BeliefKey], StageSolution]):
        self.spec = spec
        self.entries = entries

    def solution_at(self, t: int, pi: Belief) -> StageSolution:
        key = (t, belief_key(pi.weights))
        got = self.entries.get(key)
        if got is None:
            raise KeyError(
                f"policy table has no entry for stage {t} at belief {list(key[1])}"
            )
        return got

    def value(self, t: int, pi: Belief, i: int, xi: int) -> float:
        if t > self.spec.horizon:
            return 0.0
        return float(self.solution_at(t, pi).values[i][xi])


class HybridGenerator:
    """Table lookups with a lazy exact fallback for missing keys.

    Used when verifying a loaded policy file: the file pins behaviour at
    the beliefs it covers, and any belief the verification walk needs that
    the file lacks is solved fresh. ``completions`` counts the fallbacks.
    """

    mode = "table+exact"

    def __init__(self, table: TableGenerator, fallback: ExactGenerator):
        self.table = table
        self.fallback = fallback
        self.completions = 0

    @property
    def spec(self) -> GameSpec:
        return self.table.spec

    def solution_at(self, t: int, pi: Belief) -> StageSolution:
        try:
            return self.table.solution_at(t, pi)
        except KeyError:
            key = (t, belief_key(pi.weights))
            if key not in self.fallback._cache:
                self.completions += 1
            return self.fallback.solution_at(t, pi)

    def value(self, t: int, pi: Belief, i: int, xi: int) -> float:
        if t > self.table.spec.horizon:
            return 0.0
        return float(self.solution_at(t, pi).values[i][xi])


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

class ValueTable:
    """Stage-indexed value view over a generator.

    Stage T+1 answers zero identically; stages 1..T delegate to the
    generator, which solves lazily (exact mode) or snaps (grid mode).
    """

    def __init__(self, generator):
        self.generator = generator

    def lookup(self, t: int, pi: Belief, i: int, xi: int) -> float:
        spec = self.generator.spec
        if not 1 <= t <= spec.horizon + 1:
            raise ValueError(f"stage {t} outside 1..{spec.horizon + 1}")
        return self.generator.value(t, pi, i, xi)


def value_lookup(table, t: int, pi: Belief, i: int, xi: int) -> float:
    """Value of (i, xi) at stage t and belief pi; stage T+1 is zero."""
    if isinstance(table, ValueTable):
        return table.lookup(t, pi, i, xi)
    return ValueTable(table).lookup(t, pi, i, xi)


@dataclass
class SolveResult:
    """Outcome of a full solve: generator plus bookkeeping for reports."""

    spec: GameSpec
    mode: str
    config: SolverConfig
    generator: object
    status: str
    root: StageSolution | None = None
    failure: dict | None = None
    resolution: int | None = None
    timing_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def values(self) -> ValueTable:
        return ValueTable(self.generator)


def solve(
    spec: GameSpec,
    mode: str = "exact",
    config: SolverConfig | None = None,
    resolution: int = 10,
    threads: int | None = None,
    cache_budget: int = DEFAULT_CACHE_BUDGET,
) -> SolveResult:
    """Solve a game end to end in the requested mode.

    Exact mode solves the initial belief at stage 1, which recursively
    solves every stage point its evaluation touches. Grid mode builds the
    full per-stage tables. Solver failures and resource refusals are
    reported in the result, not raised.
    """
    config = config or SolverConfig()
    started = time.perf_counter()
    if mode == "exact":
        generator = ExactGenerator(spec, config, cache_budget=cache_budget)
        result = SolveResult(spec, mode, config, generator, "ok")
        try:
            result.root = generator.solution_at(1, initial_belief(spec))
        except NoFixedPointError as err:
            result.status = "failed"
            result.failure = {
                "kind": "no_fixed_point",
                "stage": err.t,
                "belief": list(err.key),
                "solver_status": err.status,
            }
        except ResourceLimitError as err:
            result.status = "refused"
            result.failure = {"kind": "resource_limit", "limit": err.limit,
                              "message": str(err)}
    elif mode == "grid":
        generator = GridGenerator(spec, config, resolution=resolution,
                                  threads=threads)
        result = SolveResult(spec, mode, config, generator, "ok",
                             resolution=resolution)
        generator.build()
        failed = generator.failed_points
        if failed:
            result.status = "partial"
            t0, key0, status0 = failed[0]
            result.failure = {
                "kind": "no_fixed_point",
                "stage": t0,
                "belief": list(key0),
                "solver_status": status0,
                "failed_points": len(failed),
            }
        else:
            try:
                result.root = generator.solution_at(1, initial_belief(spec))
            except NoFixedPointError:
                result.status = "partial"
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'exact' or 'grid'")
    result.timing_seconds = time.perf_counter() - started
    return result


def _rows_to_lists(prescription: Prescription) -> list[list[list[float]]]:
    return [[[float(v) for v in row] for row in player] for player in prescription.rows]


def _solution_entry(t: int, key: BeliefKey, solution: StageSolution) -> dict:
    return {
        "t": t,
        "belief": [float(v) for v in key],
        "rows": _rows_to_lists(solution.prescription),
        "values": [[float(v) for v in arr] for arr in solution.values],
        "residual": float(solution.residual),
        "status": solution.status,
        "method": solution.method,
        "restart_index": solution.restart_index,
    }


def build_solve_report(result: SolveResult) -> dict:
    """JSON-ready summary of a solve. Identical inputs give identical
    reports except for the ``timing`` block."""
    spec = result.spec
    report: dict = {
        "game": spec.digest(),
        "players": spec.num_players,
        "horizon": spec.horizon,
        "mode": result.mode,
        "status": result.status,
        "config": dataclasses.asdict(result.config),
        "solve_counts": {str(t): n for t, n in
                         sorted(result.generator.solve_counts.items())},
        "timing": {"seconds": result.timing_seconds},
    }
    if result.resolution is not None:
        report["grid"] = {
            "resolution": result.resolution,
            "points": int(result.generator.grid.shape[0]),
            "snap": {
                "queries": result.generator.snap_stats["queries"],
                "max_snap_l1": result.generator.snap_stats["max_snap_l1"],
            },
        }
    if result.root is not None:
        report["root"] = {
            "residual": float(result.root.residual),
            "prescription": _rows_to_lists(result.root.prescription),
            "values": [[float(v) for v in arr] for arr in result.root.values],
        }
    if result.failure is not None:
        report["failure"] = result.failure
    return report


def render_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Policy documents
# ---------------------------------------------------------------------------

POLICY_FORMAT = "repeated-game-policy"
POLICY_VERSION = 1


def policy_document(result: SolveResult) -> dict:
    """Serialize every solved stage point of a solve into a document."""
    entries = []
    generator = result.generator
    if isinstance(generator, ExactGenerator):
        for (t, key), solution in generator.cached_entries():
            if solution.converged:
                entries.append(_solution_entry(t, key, solution))
    elif isinstance(generator, GridGenerator):
        for t in sorted(generator.tables):
            for idx, solution in enumerate(generator.tables[t]):
                if solution.converged:
                    entries.append(
                        _solution_entry(t, belief_key(generator.grid[idx]), solution)
                    )
    else:
        raise TypeError("only exact and grid solves can be exported")
    return {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "game": result.spec.digest(),
        "mode": result.mode,
        "entries": entries,
    }


def load_policy(doc: dict, spec: GameSpec) -> TableGenerator:
    """Rebuild a table generator from a policy document for this game."""
    if doc.get("format") != POLICY_FORMAT:
        raise ValueError("not a policy document")
    if doc.get("game") != spec.digest():
        raise ValueError("policy document was produced for a different game")
    entries: dict[tuple[int, BeliefKey], StageSolution] = {}
    for entry in doc["entries"]:
        t = int(entry["t"])
        key = tuple(float(v) for v in entry["belief"])
        rows = tuple(
            np.asarray(player, dtype=float) for player in entry["rows"]
        )
        values = tuple(np.asarray(arr, dtype=float) for arr in entry["values"])
        for arr in values:
            arr.setflags(write=False)
        entries[(t, key)] = StageSolution(
            prescription=Prescription(rows),
            values=values,
            residual=float(entry["residual"]),
            status=entry["status"],
            method=entry.get("method"),
        )
    return TableGenerator(spec, entries)


def save_policy(result: SolveResult, path) -> None:
    Path(path).write_text(render_report(policy_document(result)) + "\n")


def load_policy_file(path, spec: GameSpec) -> TableGenerator:
    return load_policy(json.loads(Path(path).read_text()), spec)
