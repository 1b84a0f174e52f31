"""Independent reference computations for the test suite.

Everything here recomputes quantities from first principles with plain
Python loops, deliberately avoiding the library's own update, stage and
value machinery. GameSpec is used only as a data container (shapes,
reward lookups, discount).
"""

from __future__ import annotations

import itertools

EPS_DEN = 1e-12


def unflatten(flat: int, dims) -> tuple[int, ...]:
    out = []
    for d in reversed(dims):
        out.append(flat % d)
        flat //= d
    return tuple(reversed(out))


def flatten(idx, dims) -> int:
    flat = 0
    for k, d in zip(idx, dims):
        flat = flat * d + k
    return flat


def bayes_update_brute(weights, rows, action, type_dims):
    """Posterior over joint types after a public action profile.

    rows[i][xi][ai] is the prescribed probability. Returns the input
    weights (as a list) on a zero denominator, matching the convention
    that an impossible observation leaves the belief alone.
    """
    like = []
    for xf, w in enumerate(weights):
        x = unflatten(xf, type_dims)
        p = 1.0
        for i, ai in enumerate(action):
            p *= rows[i][x[i]][ai]
        like.append(float(w) * p)
    z = sum(like)
    if z <= EPS_DEN:
        return [float(w) for w in weights]
    return [v / z for v in like]


def q_vector_brute(spec, t, weights, rows, i, xi, value_fn):
    """Action values of agent (i, xi) against a full prescription profile.

    value_fn(posterior_weights, i, xi) supplies the stage-(t+1)
    continuation; pass ``lambda *a: 0.0`` at the last stage. Returns None
    when the agent's type has no mass under the belief.
    """
    type_dims = spec.type_counts
    act_dims = spec.action_counts
    n = spec.num_players
    others = [j for j in range(n) if j != i]

    slice_mass = []
    for xf, w in enumerate(weights):
        if unflatten(xf, type_dims)[i] == xi:
            slice_mass.append((xf, float(w)))
    marg = sum(w for _, w in slice_mass)
    if marg <= EPS_DEN:
        return None

    q = []
    for ai in range(act_dims[i]):
        total = 0.0
        for xf, w in slice_mass:
            x = unflatten(xf, type_dims)
            cw = w / marg
            for combo in itertools.product(*(range(act_dims[j]) for j in others)):
                a = [0] * n
                a[i] = ai
                for j, aj in zip(others, combo):
                    a[j] = aj
                p = 1.0
                for j in others:
                    p *= rows[j][x[j]][a[j]]
                if p == 0.0:
                    continue
                af = flatten(a, act_dims)
                r = spec.reward(t, i, xf, af)
                post = bayes_update_brute(weights, rows, a, type_dims)
                cont = value_fn(post, i, xi)
                total += cw * p * (r + spec.discount * cont)
        q.append(total)
    return q


def active_agents(spec, weights):
    """(player, type) pairs whose type has positive marginal mass."""
    type_dims = spec.type_counts
    out = []
    for i in range(spec.num_players):
        for xi in range(type_dims[i]):
            marg = sum(float(w) for xf, w in enumerate(weights)
                       if unflatten(xf, type_dims)[i] == xi)
            if marg > EPS_DEN:
                out.append((i, xi))
    return out


def residual_brute(spec, t, weights, rows, value_fn):
    """Largest one-step improvement any active agent can make."""
    worst = 0.0
    for (i, xi) in active_agents(spec, weights):
        q = q_vector_brute(spec, t, weights, rows, i, xi, value_fn)
        eq = sum(rows[i][xi][a] * q[a] for a in range(len(q)))
        worst = max(worst, max(q) - eq)
    return worst


def values_brute(spec, t, weights, rows, value_fn):
    """Expected value per (player, type) under the prescription itself."""
    out = {}
    for (i, xi) in active_agents(spec, weights):
        q = q_vector_brute(spec, t, weights, rows, i, xi, value_fn)
        out[(i, xi)] = sum(rows[i][xi][a] * q[a] for a in range(len(q)))
    return out


def single_player_optimum(spec):
    """Per-type optimal value over all history-dependent deterministic
    policies of a single decision maker. With one player the public
    history carries no payoff information, so the optimum separates
    across stages and types."""
    assert spec.num_players == 1
    na = spec.action_counts[0]

    def best(x, t):
        if t > spec.horizon:
            return 0.0
        return max(spec.reward(t, 0, x, a) + spec.discount * best(x, t + 1)
                   for a in range(na))

    return [best(x, 1) for x in range(spec.type_counts[0])]


def nash_grid_gap(spec, weights, rows, step=0.01):
    """Best improvement any agent finds on a coarse grid of mixed rows.

    One-shot games only (continuation fixed at zero). For each active
    agent the full q-vector is recomputed from scratch and every grid
    mixture over two actions is tried as a deviation.
    """
    assert spec.horizon == 1
    zero = lambda *a: 0.0
    steps = int(round(1.0 / step))
    gaps = {}
    for (i, xi) in active_agents(spec, weights):
        q = q_vector_brute(spec, 1, weights, rows, i, xi, zero)
        assert len(q) == 2, "grid oracle drives two-action rows"
        eq = sum(rows[i][xi][a] * q[a] for a in range(len(q)))
        best = max(
            (k / steps) * q[0] + (1.0 - k / steps) * q[1]
            for k in range(steps + 1)
        )
        gaps[(i, xi)] = best - eq
    return gaps
