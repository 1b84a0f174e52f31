"""Common beliefs over joint types and their public Bayes updates.

The common belief is a distribution over the joint type vector held by an
outside observer of the public action history. After a joint action is
observed, each type's weight is multiplied by the probability every
player's prescription row assigned to that player's own action component,
then renormalized. Because the update divides by the total probability of
the observed action, the prescription probabilities of actions *not*
taken never enter, which is what makes the update independent of how the
prescriptions were produced.

Two fallbacks keep the operations total:

* an observed action whose total probability under the current belief is
  at most ``EPS_DENOMINATOR`` leaves the belief unchanged (this is also
  the off-path rule used throughout the package);
* conditioning on a type whose marginal is at most ``EPS_DENOMINATOR``
  returns the uniform conditional, flagged as degenerate.

All operations are pure: inputs are never mutated, and arrays inside
returned objects are read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import GameSpec, component_maps, embedding_map, flatten_joint

EPS_DENOMINATOR = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.flags.writeable:
        out = out.copy()
        out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Belief:
    """Distribution over flat joint types, tagged with the type shape."""

    weights: np.ndarray
    type_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        w = _frozen(self.weights)
        if w.ndim != 1 or w.shape[0] != int(np.prod(self.type_counts)):
            raise ValueError(
                f"belief needs {int(np.prod(self.type_counts))} weights, got {w.shape}"
            )
        object.__setattr__(self, "weights", w)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0.0)

    def type_marginal(self, i: int) -> np.ndarray:
        """Marginal distribution of player i's type."""
        counts = self.type_counts
        out = np.zeros(counts[i])
        for xi in range(counts[i]):
            out[xi] = float(self.weights[embedding_map(counts, i, xi)].sum())
        return out


@dataclass(frozen=True)
class Prescription:
    """One row-stochastic matrix per player: rows[i][xi] is a distribution
    over player i's actions prescribed to its type xi."""

    rows: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        frozen = []
        for i, row in enumerate(self.rows):
            arr = _frozen(row)
            if arr.ndim != 2:
                raise ValueError(f"prescription rows[{i}] must be 2-d")
            sums = arr.sum(axis=1)
            if np.any(arr < -1e-12) or np.any(np.abs(sums - 1.0) > 1e-9):
                raise ValueError(f"prescription rows[{i}] is not row-stochastic")
            frozen.append(arr)
        object.__setattr__(self, "rows", tuple(frozen))

    @property
    def type_counts(self) -> tuple[int, ...]:
        return tuple(r.shape[0] for r in self.rows)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(r.shape[1] for r in self.rows)

    @staticmethod
    def uniform(type_counts: Sequence[int], action_counts: Sequence[int]) -> "Prescription":
        return Prescription(tuple(
            np.full((nx, na), 1.0 / na)
            for nx, na in zip(type_counts, action_counts)
        ))


@dataclass(frozen=True)
class ConditionalBelief:
    """A player's belief over the others' joint types given its own type.

    ``degenerate`` marks the uniform fallback used when the conditioning
    type has (numerically) zero marginal.
    """

    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _frozen(self.weights))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def initial_belief(spec: GameSpec) -> Belief:
    """The prior as the stage-1 common belief."""
    return Belief(spec.prior, spec.type_counts)


def joint_action_likelihood(gamma: Prescription, a: Sequence[int]) -> np.ndarray:
    """For every flat joint type x, the probability that the prescription
    produces joint action a: the product over players of rows[i][x_i, a_i]."""
    counts = gamma.type_counts
    maps = component_maps(counts)
    like = np.ones(int(np.prod(counts)))
    for i, row in enumerate(gamma.rows):
        ai = a[i]
        if not 0 <= ai < row.shape[1]:
            raise ValueError(f"action component {ai} out of range for player {i}")
        like = like * row[maps[i], ai]
    return like


def update(pi: Belief, gamma: Prescription, a: Sequence[int]) -> Belief:
    """Posterior after publicly observing joint action a.

    Multiplies each type's weight by the prescription probability of the
    observed action and renormalizes. If the observed action has total
    probability <= EPS_DENOMINATOR under pi, the belief is returned
    unchanged. A likelihood that is constant across the support (pooling)
    also returns pi unchanged, exactly, rather than renormalizing.
    """
    if gamma.type_counts != pi.type_counts:
        raise ValueError(
            f"prescription type shape {gamma.type_counts} does not match "
            f"belief shape {pi.type_counts}"
        )
    like = joint_action_likelihood(gamma, a)
    z = float(pi.weights @ like)
    if z <= EPS_DENOMINATOR:
        return pi
    sup = pi.weights > 0.0
    sup_like = like[sup]
    if sup_like.size and np.all(sup_like == sup_like[0]):
        # pooling: the observation carries no information
        return pi
    post = pi.weights * like
    post /= post.sum()
    return Belief(post, pi.type_counts)


def type_marginal(pi: Belief, i: int) -> np.ndarray:
    return pi.type_marginal(i)


def condition_on_type(pi: Belief, i: int, xi: int) -> ConditionalBelief:
    """Belief over the other players' joint types given player i's type.

    The result is indexed row-major over players != i in ascending player
    order. When player i's marginal at xi is numerically zero the uniform
    conditional is returned with ``degenerate=True``; downstream consumers
    must surface that flag rather than hide it.
    """
    counts = pi.type_counts
    if not 0 <= i < len(counts):
        raise ValueError(f"player {i} out of range")
    if not 0 <= xi < counts[i]:
        raise ValueError(f"type {xi} out of range for player {i}")
    idx = embedding_map(counts, i, xi)
    slice_w = pi.weights[idx]
    mass = float(slice_w.sum())
    if mass <= EPS_DENOMINATOR:
        n = slice_w.shape[0]
        return ConditionalBelief(np.full(n, 1.0 / n), degenerate=True)
    return ConditionalBelief(slice_w / mass, degenerate=False)


def embed_type(type_counts: Sequence[int], i: int, xi: int, other_flat: int) -> int:
    """Full flat joint type from player i's type and the others' flat index."""
    return int(embedding_map(tuple(type_counts), i, xi)[other_flat])


def embed_action(action_counts: Sequence[int], i: int, ai: int, other_flat: int) -> int:
    """Full flat joint action from player i's action and the others' flat index."""
    return int(embedding_map(tuple(action_counts), i, ai)[other_flat])


def belief_entropy(pi: Belief) -> float:
    """Shannon entropy in nats, used in simulation summaries."""
    w = pi.weights[pi.weights > 0.0]
    return float(-(w * np.log(w)).sum())
