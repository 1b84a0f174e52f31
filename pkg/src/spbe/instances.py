"""Built-in benchmark instances.

Small, hand-sized games used by the tests and handy for CLI experiments.
Each builder returns a fresh, validated GameSpec. ``corpus()`` bundles the
whole menagerie under stable names; everything in it is desk scale (the
largest has four joint types and horizon three).

Several instances have closed-form solutions worked out by hand in the
test suite, so changing any constant here means re-deriving the expected
values there.
"""

from __future__ import annotations

import numpy as np

from .game import GameSpec

__all__ = [
    "reference_instance",
    "matching_pennies_instance",
    "asymmetric_pennies_instance",
    "dominant_types_instance",
    "single_player_instance",
    "single_player_tied_instance",
    "bayesian_coordination_instance",
    "signaling_pennies_instance",
    "zero_reward_instance",
    "coordination_instance",
    "three_player_instance",
    "random_instance",
    "corpus",
]


def _match_tensor(spec_shape: tuple[int, int], sign: float = 1.0) -> np.ndarray:
    """(|X|, 4) tensor for a 2x2 matching game: +sign on match, -sign off."""
    nx, _ = spec_shape
    row = np.array([sign, -sign, -sign, sign])
    return np.tile(row, (nx, 1))


def reference_instance() -> GameSpec:
    """Two-player, two-type, two-action, horizon-2 benchmark.

    Stage 1 is matching pennies (type-independent): player 0 wants the
    actions to match, player 1 wants a mismatch. Stage 2 is a mild
    coordination game with a private nudge: both players get 0.2 for
    matching actions, plus 0.08 for playing the action with their own
    type's index. Types are positively correlated.

    The stage-1 prescription is (1/2, 1/2) for every type, so first-round
    play reveals nothing and the public belief stays at the prior. Stage 2
    separates: each type plays its own index. Total value works out to
    0.2 * 0.8 + 0.08 = 0.24 for every (player, type).
    """
    nx, na = 4, 4
    stage1 = np.stack([_match_tensor((nx, na), 1.0), _match_tensor((nx, na), -1.0)])
    stage2 = np.zeros((2, nx, na))
    for xf in range(nx):
        x = (xf // 2, xf % 2)
        for af in range(na):
            a = (af // 2, af % 2)
            match = 1.0 if a[0] == a[1] else 0.0
            for i in range(2):
                stage2[i, xf, af] = 0.2 * match + (0.08 if a[i] == x[i] else 0.0)
    return GameSpec(
        num_players=2,
        horizon=2,
        type_labels=(("lo", "hi"), ("lo", "hi")),
        action_labels=(("L", "R"), ("L", "R")),
        prior=np.array([0.4, 0.1, 0.1, 0.4]),
        rewards=(stage1, stage2),
        stationary=False,
    )


def matching_pennies_instance() -> GameSpec:
    """Plain one-shot matching pennies; a single dummy type per player."""
    stage = np.stack([_match_tensor((1, 4), 1.0), _match_tensor((1, 4), -1.0)])
    return GameSpec(
        num_players=2,
        horizon=1,
        type_labels=(("*",), ("*",)),
        action_labels=(("H", "T"), ("H", "T")),
        prior=np.array([1.0]),
        rewards=(stage,),
        stationary=True,
    )


def asymmetric_pennies_instance() -> GameSpec:
    """Zero-sum 2x2 with an interior equilibrium away from uniform.

    Player 0's payoff matrix is [[2, -1], [-1, 1]] and player 1 gets the
    negation. No pure equilibrium exists; the unique mixed point has both
    players at (0.4, 0.6). Damped best response cycles here, so this is
    the canonical exercise for the support-enumeration fallback.
    """
    p0 = np.array([[2.0, -1.0, -1.0, 1.0]])
    stage = np.stack([p0, -p0])
    return GameSpec(
        num_players=2,
        horizon=1,
        type_labels=(("*",), ("*",)),
        action_labels=(("H", "T"), ("H", "T")),
        prior=np.array([1.0]),
        rewards=(stage,),
        stationary=True,
    )


def dominant_types_instance() -> GameSpec:
    """Each player has a strictly dominant action equal to their type index.

    Reward is 1.2 for playing your own type's action, at every stage, so
    the best-response gap is 1.2 everywhere and first-stage play fully
    reveals the types. After that revelation most type profiles have zero
    posterior mass, which makes this the stress test for prescriptions at
    zero-probability types. Independent uniform prior, horizon 2; the
    value is 2.4 for every (player, type).
    """
    nx, na = 4, 4
    stage = np.zeros((2, nx, na))
    for xf in range(nx):
        x = (xf // 2, xf % 2)
        for af in range(na):
            a = (af // 2, af % 2)
            for i in range(2):
                stage[i, xf, af] = 1.2 if a[i] == x[i] else 0.0
    return GameSpec(
        num_players=2,
        horizon=2,
        type_labels=(("a", "b"), ("a", "b")),
        action_labels=(("A", "B"), ("A", "B")),
        prior=np.full(4, 0.25),
        rewards=(stage,),
        stationary=True,
    )


def single_player_instance() -> GameSpec:
    """Single decision maker, two types, two actions, horizon 2.

    Both stages have a strict best action per type, so the optimal values
    are easy to enumerate by hand: type 0 earns 1.0 + 1.0 = 2.0 and
    type 1 earns 0.7 + 0.9 = 1.6.
    """
    stage1 = np.array([[[1.0, 0.0], [0.0, 0.7]]])
    stage2 = np.array([[[0.2, 1.0], [0.9, 0.1]]])
    return GameSpec(
        num_players=1,
        horizon=2,
        type_labels=(("lo", "hi"),),
        action_labels=(("L", "R"),),
        prior=np.array([0.6, 0.4]),
        rewards=(stage1, stage2),
        stationary=False,
    )


def single_player_tied_instance() -> GameSpec:
    """Single player whose type 0 is exactly indifferent at stage 1.

    Both stage-1 actions pay type 0 exactly 0.5, so the tie-handling rule
    is observable: mixing spreads uniformly, purification picks action 0.
    Optimal values are 1.5 for type 0 and 1.8 for type 1.
    """
    stage1 = np.array([[[0.5, 0.5], [0.3, 0.9]]])
    stage2 = np.array([[[0.2, 1.0], [0.9, 0.1]]])
    return GameSpec(
        num_players=1,
        horizon=2,
        type_labels=(("lo", "hi"),),
        action_labels=(("L", "R"),),
        prior=np.array([0.5, 0.5]),
        rewards=(stage1, stage2),
        stationary=False,
    )


def bayesian_coordination_instance() -> GameSpec:
    """One-shot coordination with a private nudge and correlated types.

    Matching the other player pays 1; playing your own type's action adds
    0.4. Separating (play your type) is a strict equilibrium under the
    positively correlated prior.
    """
    nx, na = 4, 4
    stage = np.zeros((2, nx, na))
    for xf in range(nx):
        x = (xf // 2, xf % 2)
        for af in range(na):
            a = (af // 2, af % 2)
            match = 1.0 if a[0] == a[1] else 0.0
            for i in range(2):
                stage[i, xf, af] = match + (0.4 if a[i] == x[i] else 0.0)
    return GameSpec(
        num_players=2,
        horizon=1,
        type_labels=(("lo", "hi"), ("lo", "hi")),
        action_labels=(("L", "R"), ("L", "R")),
        prior=np.array([0.3, 0.2, 0.2, 0.3]),
        rewards=(stage,),
        stationary=True,
    )


def signaling_pennies_instance() -> GameSpec:
    """Matching pennies with a private truth-telling bonus, then a match game.

    Stage 1 is the +/-1 matching game plus 0.3 for playing your own type's
    action; the bonus tempts players to reveal while the pennies component
    punishes predictability. Stage 2 pays both players 0.5 for matching,
    which solves to the uniform prescription worth 0.25 at every belief.

    The stage-1 fixed point is interior and asymmetric across types:
    player 0 plays action 0 with probability 0.625 as type 0 and 0.375 as
    type 1, player 1 the mirror image. Every (player, type) is worth 0.4
    in total. Best-response iteration cycles, so this exercises support
    enumeration with active private types.
    """
    nx, na = 4, 4
    bonus = np.zeros((2, nx, na))
    for xf in range(nx):
        x = (xf // 2, xf % 2)
        for af in range(na):
            a = (af // 2, af % 2)
            for i in range(2):
                if a[i] == x[i]:
                    bonus[i, xf, af] = 0.3
    stage1 = np.stack([_match_tensor((nx, na), 1.0), _match_tensor((nx, na), -1.0)])
    stage1 = stage1 + bonus
    stage2 = np.zeros((2, nx, na))
    for af in range(na):
        if af // 2 == af % 2:
            stage2[:, :, af] = 0.5
    return GameSpec(
        num_players=2,
        horizon=2,
        type_labels=(("lo", "hi"), ("lo", "hi")),
        action_labels=(("L", "R"), ("L", "R")),
        prior=np.array([0.4, 0.1, 0.1, 0.4]),
        rewards=(stage1, stage2),
        stationary=False,
    )


def zero_reward_instance() -> GameSpec:
    """Everything pays zero. Every prescription is a fixed point; the
    solver should settle on the uniform one immediately."""
    stage = np.zeros((2, 4, 4))
    return GameSpec(
        num_players=2,
        horizon=2,
        type_labels=(("lo", "hi"), ("lo", "hi")),
        action_labels=(("L", "R"), ("L", "R")),
        prior=np.array([0.25, 0.25, 0.25, 0.25]),
        rewards=(stage,),
        stationary=True,
    )


def coordination_instance() -> GameSpec:
    """Repeated coordination with a private nudge, horizon 3.

    Same stage game as bayesian_coordination_instance but with a smaller
    nudge (0.2) repeated three times. Used by the grid-mode scale check:
    four joint types keeps the belief simplex three-dimensional.
    """
    nx, na = 4, 4
    stage = np.zeros((2, nx, na))
    for xf in range(nx):
        x = (xf // 2, xf % 2)
        for af in range(na):
            a = (af // 2, af % 2)
            match = 1.0 if a[0] == a[1] else 0.0
            for i in range(2):
                stage[i, xf, af] = match + (0.2 if a[i] == x[i] else 0.0)
    return GameSpec(
        num_players=2,
        horizon=3,
        type_labels=(("lo", "hi"), ("lo", "hi")),
        action_labels=(("L", "R"), ("L", "R")),
        prior=np.array([0.35, 0.15, 0.15, 0.35]),
        rewards=(stage,),
        stationary=True,
    )


def three_player_instance() -> GameSpec:
    """Three players in a cyclic matching game with no pure equilibrium.

    Player 0 wants to match player 1, player 1 wants to match player 2,
    and player 2 wants to differ from player 0. The unique equilibrium is
    all-uniform. One dummy type per player.
    """
    na = 8
    stage = np.zeros((3, 1, na))
    for af in range(na):
        a = (af // 4, (af // 2) % 2, af % 2)
        stage[0, 0, af] = 1.0 if a[0] == a[1] else -1.0
        stage[1, 0, af] = 1.0 if a[1] == a[2] else -1.0
        stage[2, 0, af] = 1.0 if a[2] != a[0] else -1.0
    return GameSpec(
        num_players=3,
        horizon=1,
        type_labels=(("*",), ("*",), ("*",)),
        action_labels=(("H", "T"), ("H", "T"), ("H", "T")),
        prior=np.array([1.0]),
        rewards=(stage,),
        stationary=True,
    )


def random_instance(seed: int, players: int = 2, types: int = 2,
                    actions: int = 2, horizon: int = 2,
                    discount: float = 1.0) -> GameSpec:
    """Seeded random instance: Dirichlet prior, rewards uniform in [-1, 1].

    The same seed always yields the same instance. No guarantee a fixed
    point exists, so callers that need solvability should check status.
    """
    rng = np.random.default_rng(seed)
    nx = types ** players
    na = actions ** players
    prior = rng.dirichlet(np.ones(nx))
    blocks = tuple(
        rng.uniform(-1.0, 1.0, size=(players, nx, na)) for _ in range(horizon)
    )
    type_labels = tuple(
        tuple(f"t{k}" for k in range(types)) for _ in range(players)
    )
    action_labels = tuple(
        tuple(f"a{k}" for k in range(actions)) for _ in range(players)
    )
    return GameSpec(
        num_players=players,
        horizon=horizon,
        type_labels=type_labels,
        action_labels=action_labels,
        prior=prior,
        rewards=blocks,
        stationary=False,
        discount=discount,
    )


def corpus() -> dict[str, GameSpec]:
    """Named bundle of instances that solve exactly within seconds.

    ``coordination_instance`` is deliberately not in here: its horizon-3
    lazy recursion touches thousands of stage points, which is exactly
    what grid mode is for. It stays available as its own builder.
    """
    return {
        "reference": reference_instance(),
        "matching_pennies": matching_pennies_instance(),
        "asymmetric_pennies": asymmetric_pennies_instance(),
        "dominant_types": dominant_types_instance(),
        "single_player": single_player_instance(),
        "single_player_tied": single_player_tied_instance(),
        "bayesian_coordination": bayesian_coordination_instance(),
        "signaling_pennies": signaling_pennies_instance(),
        "zero_reward": zero_reward_instance(),
        "three_player": three_player_instance(),
        "random_a": random_instance(7),
        "random_b": random_instance(23),
    }
