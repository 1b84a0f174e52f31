"""Per-stage equilibrium prescription solver.

At a fixed stage t and common belief pi, an equilibrium prescription is a
fixed point of the best-response correspondence of the agent-form game
whose agents are (player, type) pairs: every agent's row may put mass only
on actions maximizing that agent's conditional expected payoff, where the
payoff of an action is the expected stage reward plus the discounted
continuation value evaluated at the belief updated with the *candidate*
prescription. The candidate enters its own evaluation through the belief
update, which is what distinguishes this from a static Bayesian game and
why a solution need not exist.

Solution phases, tried in order and recorded in the result:

1. damped best-response iteration from the uniform prescription;
2. a scan of all pure agent profiles in lexicographic order;
3. damped best-response iteration from seeded Dirichlet restarts;
4. exhaustive support enumeration (small games only): for each support
   profile, solve the indifference system with continuation values frozen,
   refresh the freeze, and accept when the unfrozen residual clears the
   tolerance. For one or two players the frozen system is linear and
   solved by least squares; with three or more players it is multilinear
   and handed to a root finder.

Types whose current marginal is numerically zero take no part in the
fixed point. Their rows are filled in afterwards as best responses under
the uniform fallback conditional, so that play at publicly impossible
types is still optimal against the same fallback the verifier uses.
A failed solve is a reported status, never an exception.
"""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .beliefs import (
    EPS_DENOMINATOR,
    Belief,
    ConditionalBelief,
    Prescription,
    condition_on_type,
    update,
)
from .game import GameSpec, embedding_map, unflatten_joint

# Extra iterations allowed without any residual improvement before a
# restart is declared stuck (damped best responses cycle on games with
# only mixed equilibria; genuine convergence improves every few steps).
STALL_WINDOW = 60
SUPPORT_REFRESH_MAX = 60
FREEZE_STABLE_TOL = 1e-12
LSTSQ_CONSISTENCY_TOL = 1e-8

ValueFunction = Callable[[Belief, int, int], float]


def terminal_values(belief: Belief, i: int, xi: int) -> float:
    """Continuation value beyond the horizon: identically zero."""
    return 0.0


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the per-stage fixed-point search.

    ``tie_tol`` controls when best responses are treated as tied; under
    ``mix_ties`` a tied set is mixed uniformly, otherwise the
    lexicographically smallest maximizer is chosen.
    """

    fp_tol: float = 1e-8
    max_iterations: int = 10_000
    damping: float = 0.5
    restarts: int = 8
    rng_seed: int = 0
    enable_support_enumeration: bool = True
    support_enumeration_limit: int = 12
    mix_ties: bool = True
    tie_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.fp_tol <= 0:
            raise ValueError("fp_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be >= 1")


@dataclass(frozen=True)
class StageSolution:
    """A solved (or failed) stage point.

    values[i][xi] is the solved continuation-inclusive value of (i, xi) at
    this stage and belief. ``residual`` is the best-response gap maxed over
    agents with positive marginal; zero-marginal agents are listed in
    ``degenerate_types`` and excluded from it. ``status`` is one of
    ``converged``, ``max_iterations``, ``no_fixed_point``.
    """

    prescription: Prescription
    values: tuple[np.ndarray, ...]
    residual: float
    status: str
    method: str | None = None
    restart_index: int | None = None
    support_profile: tuple | None = None
    degenerate_types: tuple[tuple[int, int], ...] = ()

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# ---------------------------------------------------------------------------
# Public action value
# ---------------------------------------------------------------------------

def action_value(
    spec: GameSpec,
    t: int,
    pi: Belief,
    gamma: Prescription,
    i: int,
    xi: int,
    ai: int,
    v_next: ValueFunction,
) -> float:
    """Conditional expected payoff of action ai for agent (i, xi).

    The expectation weights the others' types by pi conditioned on xi and
    the others' actions by their candidate rows; each term adds the stage
    reward and the discounted continuation value at the belief updated
    with the *full* candidate gamma, own component included. Conditioning
    on a zero-marginal type uses the uniform fallback conditional.
    """
    problem = _StageProblem(spec, t, pi, v_next)
    return float(problem.q_row(gamma, i, xi, _ChildCache(problem, gamma))[ai])


def best_response_set(
    spec: GameSpec,
    t: int,
    pi: Belief,
    gamma: Prescription,
    i: int,
    xi: int,
    v_next: ValueFunction,
    tie_tol: float = 1e-12,
) -> list[int]:
    """Actions within tie_tol of the maximal action value, ascending."""
    problem = _StageProblem(spec, t, pi, v_next)
    q = problem.q_row(gamma, i, xi, _ChildCache(problem, gamma))
    top = float(q.max())
    return [a for a in range(q.shape[0]) if q[a] >= top - tie_tol]


# ---------------------------------------------------------------------------
# Internal evaluation machinery
# ---------------------------------------------------------------------------

class _StageProblem:
    """Precomputed tables for one (spec, stage, belief) evaluation context."""

    def __init__(self, spec: GameSpec, t: int, pi: Belief, v_next: ValueFunction):
        if pi.type_counts != spec.type_counts:
            raise ValueError("belief shape does not match the game")
        self.spec = spec
        self.t = t
        self.pi = pi
        self.v_next = v_next
        self.reward = spec.reward_tensor(t)
        self.discount = spec.discount
        self.type_counts = spec.type_counts
        self.action_counts = spec.action_counts
        self.agents: list[tuple[int, int]] = []
        self.corner_agents: list[tuple[int, int]] = []
        self.cond: dict[tuple[int, int], ConditionalBelief] = {}
        for i in range(spec.num_players):
            marginal = pi.type_marginal(i)
            for xi in range(self.type_counts[i]):
                self.cond[(i, xi)] = condition_on_type(pi, i, xi)
                if marginal[xi] > EPS_DENOMINATOR:
                    self.agents.append((i, xi))
                else:
                    self.corner_agents.append((i, xi))
        # others' flat spaces, per player
        self._other_types = {
            i: [unflatten_joint(k, self._others(self.type_counts, i))
                for k in range(self._other_size(self.type_counts, i))]
            for i in range(spec.num_players)
        }
        self._other_actions = {
            i: [unflatten_joint(k, self._others(self.action_counts, i))
                for k in range(self._other_size(self.action_counts, i))]
            for i in range(spec.num_players)
        }
        self._type_embed = {
            (i, xi): embedding_map(self.type_counts, i, xi)
            for i in range(spec.num_players) for xi in range(self.type_counts[i])
        }
        self._action_embed = {
            (i, ai): embedding_map(self.action_counts, i, ai)
            for i in range(spec.num_players) for ai in range(self.action_counts[i])
        }

    @staticmethod
    def _others(dims: Sequence[int], i: int) -> tuple[int, ...]:
        return tuple(dims[:i]) + tuple(dims[i + 1:])

    @staticmethod
    def _other_size(dims: Sequence[int], i: int) -> int:
        other = tuple(dims[:i]) + tuple(dims[i + 1:])
        return int(np.prod(other)) if other else 1

    def insert_component(self, partial: Sequence[int], i: int, value: int) -> tuple[int, ...]:
        return tuple(partial[:i]) + (value,) + tuple(partial[i:])

    def opponent_mix(self, gamma: Prescription, i: int, x_other: Sequence[int],
                     a_other: Sequence[int]) -> float:
        """Probability the other players' rows produce a_other at x_other."""
        p = 1.0
        pos = 0
        for j in range(self.spec.num_players):
            if j == i:
                continue
            p *= float(gamma.rows[j][x_other[pos], a_other[pos]])
            if p == 0.0:
                return 0.0
            pos += 1
        return p

    def q_row(self, gamma: Prescription, i: int, xi: int,
              children: "_ChildCache") -> np.ndarray:
        """Action-value vector of agent (i, xi) under candidate gamma."""
        cond = self.cond[(i, xi)].weights
        na = self.action_counts[i]
        q = np.zeros(na)
        type_embed = self._type_embed[(i, xi)]
        x_others = self._other_types[i]
        a_others = self._other_actions[i]
        for ai in range(na):
            action_embed = self._action_embed[(i, ai)]
            total = 0.0
            for ao_flat, a_other in enumerate(a_others):
                a_full = int(action_embed[ao_flat])
                stage_part = 0.0
                mass = 0.0
                for xo_flat, x_other in enumerate(x_others):
                    w = float(cond[xo_flat])
                    if w == 0.0:
                        continue
                    p = self.opponent_mix(gamma, i, x_other, a_other)
                    if p == 0.0:
                        continue
                    wp = w * p
                    mass += wp
                    stage_part += wp * float(self.reward[i, int(type_embed[xo_flat]), a_full])
                total += stage_part
                if mass > 0.0 and self.t < self.spec.horizon + 1:
                    total += mass * self.discount * children.value(a_full, i, xi)
            q[ai] = total
        return q

    def evaluate(self, gamma: Prescription, agents: Sequence[tuple[int, int]],
                 children: "_ChildCache | None" = None) -> dict[tuple[int, int], np.ndarray]:
        cache = children if children is not None else _ChildCache(self, gamma)
        return {(i, xi): self.q_row(gamma, i, xi, cache) for (i, xi) in agents}


class _ChildCache:
    """Updated beliefs and their continuation values for one candidate."""

    def __init__(self, problem: _StageProblem, gamma: Prescription):
        self.problem = problem
        self.gamma = gamma
        self._beliefs: dict[int, Belief] = {}
        self._values: dict[tuple[int, int, int], float] = {}

    def belief(self, a_flat: int) -> Belief:
        got = self._beliefs.get(a_flat)
        if got is None:
            a_tuple = unflatten_joint(a_flat, self.problem.action_counts)
            got = update(self.problem.pi, self.gamma, a_tuple)
            self._beliefs[a_flat] = got
        return got

    def value(self, a_flat: int, i: int, xi: int) -> float:
        key = (a_flat, i, xi)
        got = self._values.get(key)
        if got is None:
            got = float(self.problem.v_next(self.belief(a_flat), i, xi))
            self._values[key] = got
        return got


# ---------------------------------------------------------------------------
# Best-response iteration
# ---------------------------------------------------------------------------

def _residual(gamma: Prescription, qs: dict, agents) -> float:
    worst = 0.0
    for (i, xi) in agents:
        q = qs[(i, xi)]
        gap = float(q.max()) - float(gamma.rows[i][xi] @ q)
        if gap > worst:
            worst = gap
    return max(worst, 0.0)


def _br_row(q: np.ndarray, tie_tol: float, mix_ties: bool) -> np.ndarray:
    top = float(q.max())
    ties = np.flatnonzero(q >= top - tie_tol)
    row = np.zeros(q.shape[0])
    if mix_ties and ties.size > 1:
        row[ties] = 1.0 / ties.size
    else:
        row[int(ties[0])] = 1.0
    return row


def _apply_br(problem: _StageProblem, gamma: Prescription, qs: dict,
              config: SolverConfig, step: float) -> Prescription:
    rows = [r.copy() for r in gamma.rows]
    for (i, xi) in problem.agents:
        target = _br_row(qs[(i, xi)], config.tie_tol, config.mix_ties)
        rows[i][xi] = (1.0 - step) * rows[i][xi] + step * target
    return Prescription(tuple(rows))


def _polish(problem: _StageProblem, gamma: Prescription, res: float,
            config: SolverConfig) -> tuple[Prescription, float]:
    """Snap a converged iterate to its own best-response profile when that
    profile is at least as good. Strict equilibria then come out exactly
    pure instead of pure-up-to-damping-residue; interior points are left
    alone because their undamped best response is far from them."""
    qs = problem.evaluate(gamma, problem.agents)
    snapped = _apply_br(problem, gamma, qs, config, 1.0)
    snapped_res = _residual(snapped, problem.evaluate(snapped, problem.agents),
                            problem.agents)
    if snapped_res <= res:
        return snapped, snapped_res
    return gamma, res


def _iterate(problem: _StageProblem, gamma: Prescription,
             config: SolverConfig) -> tuple[Prescription, float, bool]:
    """Damped best-response iteration; returns the best iterate seen."""
    best_gamma, best_res = gamma, np.inf
    since_improved = 0
    for _ in range(config.max_iterations):
        qs = problem.evaluate(gamma, problem.agents)
        res = _residual(gamma, qs, problem.agents)
        if res < best_res - 1e-12:
            best_gamma, best_res = gamma, res
            since_improved = 0
        else:
            since_improved += 1
        if res <= config.fp_tol:
            gamma, res = _polish(problem, gamma, res, config)
            return gamma, res, True
        if since_improved > STALL_WINDOW:
            break
        gamma = _apply_br(problem, gamma, qs, config, config.damping)
    return best_gamma, best_res, False


def _dirichlet_start(problem: _StageProblem, rng: np.random.Generator) -> Prescription:
    rows = []
    for i in range(problem.spec.num_players):
        nt, na = problem.type_counts[i], problem.action_counts[i]
        rows.append(rng.dirichlet(np.ones(na), size=nt))
    return Prescription(tuple(rows))


def _pure_profiles(problem: _StageProblem):
    """All assignments of one pure action per active agent, lexicographic."""
    agents = problem.agents
    ranges = [range(problem.action_counts[i]) for (i, _) in agents]
    for combo in itertools.product(*ranges):
        rows = [np.full((problem.type_counts[i], problem.action_counts[i]),
                        1.0 / problem.action_counts[i])
                for i in range(problem.spec.num_players)]
        for (i, xi), a in zip(agents, combo):
            rows[i][xi] = 0.0
            rows[i][xi, a] = 1.0
        yield Prescription(tuple(rows))


# ---------------------------------------------------------------------------
# Support enumeration
# ---------------------------------------------------------------------------

def _support_profiles(problem: _StageProblem):
    """Support assignments for the active agents, largest total size first.

    Larger supports come first because games that reach enumeration at all
    have already failed the pure scan and the iterative phase, which catch
    strict equilibria; what remains is typically interior.
    """
    agents = problem.agents
    per_agent = []
    for (i, _) in agents:
        na = problem.action_counts[i]
        subsets = []
        for size in range(na, 0, -1):
            subsets.extend(itertools.combinations(range(na), size))
        per_agent.append(subsets)
    profiles = list(itertools.product(*per_agent))
    profiles.sort(key=lambda prof: (-sum(len(s) for s in prof), prof))
    return profiles


def _freeze_continuations(problem: _StageProblem, gamma: Prescription) -> dict:
    """Continuation value of every (agent, joint action) under candidate gamma."""
    cache = _ChildCache(problem, gamma)
    na_joint = problem.spec.num_joint_actions
    out = {}
    for (i, xi) in problem.agents:
        vals = np.zeros(na_joint)
        if problem.t < problem.spec.horizon + 1:
            for a_flat in range(na_joint):
                vals[a_flat] = cache.value(a_flat, i, xi)
        out[(i, xi)] = vals
    return out


def _q_frozen(problem: _StageProblem, gamma: Prescription, i: int, xi: int,
              frozen: dict) -> np.ndarray:
    """Action values under gamma with frozen continuation constants."""
    cond = problem.cond[(i, xi)].weights
    na = problem.action_counts[i]
    q = np.zeros(na)
    type_embed = problem._type_embed[(i, xi)]
    x_others = problem._other_types[i]
    a_others = problem._other_actions[i]
    cvals = frozen[(i, xi)]
    for ai in range(na):
        action_embed = problem._action_embed[(i, ai)]
        total = 0.0
        for ao_flat, a_other in enumerate(a_others):
            a_full = int(action_embed[ao_flat])
            for xo_flat, x_other in enumerate(x_others):
                w = float(cond[xo_flat])
                if w == 0.0:
                    continue
                p = problem.opponent_mix(gamma, i, x_other, a_other)
                if p == 0.0:
                    continue
                total += w * p * (
                    float(problem.reward[i, int(type_embed[xo_flat]), a_full])
                    + problem.discount * float(cvals[a_full])
                )
        q[ai] = total
    return q


def _solve_frozen_two_player(problem: _StageProblem, profile_map: dict,
                             frozen: dict) -> Prescription | None:
    """Solve the frozen indifference system exactly for N <= 2.

    For two players the indifference conditions of player i's agents are
    linear in the stacked support entries of the other player's rows, so
    each player's rows come out of one least-squares solve. For one player
    the support is feasible only when the frozen action values tie.
    """
    spec = problem.spec
    n = spec.num_players
    rows = [np.full((problem.type_counts[i], problem.action_counts[i]),
                    1.0 / problem.action_counts[i]) for i in range(n)]

    if n == 1:
        gamma_probe = Prescription(tuple(rows))
        for (i, xi) in problem.agents:
            support = profile_map[(i, xi)]
            q = _q_frozen(problem, gamma_probe, i, xi, frozen)
            vals = q[list(support)]
            if vals.max() - vals.min() > 1e-9:
                return None
            rows[i][xi] = 0.0
            rows[i][xi, list(support)] = 1.0 / len(support)
        return Prescription(tuple(rows))

    agents_of = {i: [xi for (j, xi) in problem.agents if j == i] for i in range(2)}
    for solved in (0, 1):
        # player `solved`'s rows are pinned by the *other* player's indifference
        other = 1 - solved
        unknowns: list[tuple[int, int]] = []  # (x_solved, a_solved)
        for xs in agents_of[solved]:
            for a in profile_map[(solved, xs)]:
                unknowns.append((xs, a))
        value_vars = list(agents_of[other])
        ncols = len(unknowns) + len(value_vars)
        rows_mat: list[np.ndarray] = []
        rhs: list[float] = []
        for xo in agents_of[other]:
            cond = problem.cond[(other, xo)].weights
            cvals = frozen[(other, xo)]
            for ao in profile_map[(other, xo)]:
                row_vec = np.zeros(ncols)
                for col, (xs, asol) in enumerate(unknowns):
                    # with two players the others-flat index of player
                    # `other` is exactly player `solved`'s coordinate
                    w = float(cond[xs])
                    if w == 0.0:
                        continue
                    x_full = int(problem._type_embed[(other, xo)][xs])
                    a_full = int(problem._action_embed[(other, ao)][asol])
                    row_vec[col] = w * (
                        float(problem.reward[other, x_full, a_full])
                        + problem.discount * float(cvals[a_full])
                    )
                row_vec[len(unknowns) + value_vars.index(xo)] = -1.0
                rows_mat.append(row_vec)
                rhs.append(0.0)
        for xs in agents_of[solved]:
            row_vec = np.zeros(ncols)
            for col, (x, a) in enumerate(unknowns):
                if x == xs:
                    row_vec[col] = 1.0
            rows_mat.append(row_vec)
            rhs.append(1.0)
        mat = np.asarray(rows_mat)
        vec = np.asarray(rhs)
        sol, *_ = np.linalg.lstsq(mat, vec, rcond=None)
        if not np.all(np.isfinite(sol)):
            return None
        scale = max(1.0, float(np.abs(vec).max()), float(np.abs(mat).max()))
        if float(np.abs(mat @ sol - vec).max()) > LSTSQ_CONSISTENCY_TOL * scale:
            return None
        if np.any(sol[: len(unknowns)] < -1e-8):
            return None
        rows[solved][...] = 0.0
        for col, (xs, a) in enumerate(unknowns):
            rows[solved][xs, a] = max(float(sol[col]), 0.0)
        sums = rows[solved].sum(axis=1)
        for xs in agents_of[solved]:
            if sums[xs] <= 0:
                return None
            rows[solved][xs] /= sums[xs]
        # rows of types not active keep the uniform placeholder
        for xs in range(problem.type_counts[solved]):
            if xs not in agents_of[solved]:
                rows[solved][xs] = 1.0 / problem.action_counts[solved]
    return Prescription(tuple(rows))


def _solve_frozen_multi(problem: _StageProblem, profile_map: dict,
                        frozen: dict, start: Prescription) -> Prescription | None:
    """Root-find the frozen indifference system for three or more players.

    The system is multilinear in the support entries, so unlike the
    two-player case there is no exact linear-algebra solve; scipy's hybrid
    root finder handles these desk-scale systems well when a solution on
    the support exists.
    """
    from scipy.optimize import root

    agents = problem.agents
    layout: list[tuple[int, int, tuple[int, ...]]] = []
    for (i, xi) in agents:
        layout.append((i, xi, tuple(profile_map[(i, xi)])))

    def unpack(z: np.ndarray) -> tuple[Prescription, np.ndarray]:
        rows = [np.full((problem.type_counts[i], problem.action_counts[i]),
                        1.0 / problem.action_counts[i])
                for i in range(problem.spec.num_players)]
        pos = 0
        for (i, xi, support) in layout:
            rows[i][xi] = 0.0
            for a in support:
                rows[i][xi, a] = z[pos]
                pos += 1
        vals = z[pos:]
        return Prescription(tuple(np.abs(r) for r in rows)), vals

    def equations(z: np.ndarray) -> np.ndarray:
        gamma, vals = unpack(z)
        out = []
        for k, (i, xi, support) in enumerate(layout):
            q = _q_frozen(problem, gamma, i, xi, frozen)
            for a in support:
                out.append(q[a] - vals[k])
            out.append(float(gamma.rows[i][xi].sum()) - 1.0)
        return np.asarray(out)

    # per agent: |support| indifference equations plus one normalization,
    # against |support| row entries plus one value variable, so the system
    # is square
    z0 = []
    for (i, xi, support) in layout:
        for a in support:
            z0.append(float(start.rows[i][xi, a]))
    z0.extend(0.0 for _ in layout)
    z0 = np.asarray(z0)
    try:
        result = root(equations, z0, method="hybr")
    except Exception:
        return None
    if not result.success and float(np.abs(equations(result.x)).max()) > 1e-9:
        return None
    gamma, _ = unpack(result.x)
    rows = [r.copy() for r in gamma.rows]
    for (i, xi, support) in layout:
        row = rows[i][xi]
        if np.any(row < -1e-8):
            return None
        row[row < 0] = 0.0
        s = row.sum()
        if s <= 0:
            return None
        rows[i][xi] = row / s
    return Prescription(tuple(rows))


def _solve_support(problem: _StageProblem, profile, config: SolverConfig) -> Prescription | None:
    """Find a candidate supported on `profile` that survives freeze refresh."""
    profile_map = {agent: support for agent, support in zip(problem.agents, profile)}
    rows = [np.full((problem.type_counts[i], problem.action_counts[i]),
                    1.0 / problem.action_counts[i])
            for i in range(problem.spec.num_players)]
    for (i, xi), support in profile_map.items():
        rows[i][xi] = 0.0
        rows[i][xi, list(support)] = 1.0 / len(support)
    gamma = Prescription(tuple(rows))

    for _ in range(SUPPORT_REFRESH_MAX):
        frozen = _freeze_continuations(problem, gamma)
        if problem.spec.num_players <= 2:
            solved = _solve_frozen_two_player(problem, profile_map, frozen)
        else:
            solved = _solve_frozen_multi(problem, profile_map, frozen, gamma)
        if solved is None:
            return None
        refrozen = _freeze_continuations(problem, solved)
        drift = 0.0
        for key, vals in frozen.items():
            drift = max(drift, float(np.abs(refrozen[key] - vals).max()))
        if drift <= FREEZE_STABLE_TOL:
            return solved
        mixed = [
            (1.0 - config.damping) * g + config.damping * s
            for g, s in zip(gamma.rows, solved.rows)
        ]
        gamma = Prescription(tuple(mixed))
    return None


def _enumeration_size(problem: _StageProblem) -> int:
    return sum(
        problem.type_counts[i] * problem.action_counts[i]
        for i in range(problem.spec.num_players)
    )


# ---------------------------------------------------------------------------
# Finalization
# ---------------------------------------------------------------------------

def _finalize(problem: _StageProblem, gamma: Prescription, config: SolverConfig,
              status: str, method: str | None, restart_index: int | None,
              support_profile=None) -> StageSolution:
    """Fill fallback rows for zero-marginal types and attach values.

    Zero-marginal rows never influence the belief update or any positive-
    marginal agent's payoff, so replacing them after the fixed point is
    settled cannot disturb it; making them best responses keeps play at
    publicly impossible types optimal under the same uniform fallback
    conditional the verifier conditions with.
    """
    cache = _ChildCache(problem, gamma)
    rows = [r.copy() for r in gamma.rows]
    corner_q: dict[tuple[int, int], np.ndarray] = {}
    for (i, xi) in problem.corner_agents:
        q = problem.q_row(gamma, i, xi, cache)
        corner_q[(i, xi)] = q
        rows[i][xi] = _br_row(q, config.tie_tol, config.mix_ties)
    final = Prescription(tuple(rows))

    values = [np.zeros(problem.type_counts[i]) for i in range(problem.spec.num_players)]
    qs = problem.evaluate(final, problem.agents, cache)
    for (i, xi) in problem.agents:
        values[i][xi] = float(final.rows[i][xi] @ qs[(i, xi)])
    for (i, xi) in problem.corner_agents:
        values[i][xi] = float(final.rows[i][xi] @ corner_q[(i, xi)])
    residual = _residual(final, qs, problem.agents)
    if status == "converged" and residual > config.fp_tol:
        status = "max_iterations"
    for arr in values:
        arr.setflags(write=False)
    return StageSolution(
        prescription=final,
        values=tuple(values),
        residual=residual,
        status=status,
        method=method,
        restart_index=restart_index,
        support_profile=support_profile,
        degenerate_types=tuple(problem.corner_agents),
    )


def _point_rng(config: SolverConfig, t: int, pi: Belief) -> np.random.Generator:
    """Seeded independently per (stage, belief) so that cache order cannot
    influence the draws of any other point."""
    key_bytes = np.round(pi.weights, 9).tobytes()
    return np.random.default_rng(
        np.random.SeedSequence([config.rng_seed, t, zlib.crc32(key_bytes)])
    )


def solve_stage_fixed_point(
    spec: GameSpec,
    t: int,
    pi: Belief,
    v_next: ValueFunction,
    config: SolverConfig | None = None,
) -> StageSolution:
    """Search for a stage-t equilibrium prescription at belief pi.

    Runs the phases described in the module docstring and returns the
    first candidate whose best-response residual over positive-marginal
    agents is at most ``config.fp_tol``. The outcome is deterministic in
    (spec, t, pi, config): random restarts are seeded per point.
    """
    config = config or SolverConfig()
    problem = _StageProblem(spec, t, pi, v_next)

    uniform = Prescription.uniform(problem.type_counts, problem.action_counts)
    gamma, res, ok = _iterate(problem, uniform, config)
    if ok:
        return _finalize(problem, gamma, config, "converged", "iteration", 0)
    best_gamma, best_res = gamma, res

    for pure in _pure_profiles(problem):
        qs = problem.evaluate(pure, problem.agents)
        res = _residual(pure, qs, problem.agents)
        if res <= config.fp_tol:
            return _finalize(problem, pure, config, "converged", "pure_scan", None)
        if res < best_res:
            best_gamma, best_res = pure, res

    rng = _point_rng(config, t, pi)
    for restart in range(1, config.restarts):
        gamma, res, ok = _iterate(problem, _dirichlet_start(problem, rng), config)
        if ok:
            return _finalize(problem, gamma, config, "converged", "iteration", restart)
        if res < best_res:
            best_gamma, best_res = gamma, res

    enumeration_ran = False
    if config.enable_support_enumeration and \
            _enumeration_size(problem) <= config.support_enumeration_limit:
        enumeration_ran = True
        for profile in _support_profiles(problem):
            candidate = _solve_support(problem, profile, config)
            if candidate is None:
                continue
            qs = problem.evaluate(candidate, problem.agents)
            res = _residual(candidate, qs, problem.agents)
            if res <= config.fp_tol:
                return _finalize(
                    problem, candidate, config, "converged",
                    "support_enumeration", None, support_profile=profile,
                )
            if res < best_res:
                best_gamma, best_res = candidate, res

    status = "no_fixed_point" if enumeration_ran else "max_iterations"
    return _finalize(problem, best_gamma, config, status, None, None)
