"""Entropy-driven genetic search over integer-grid configurations.

One candidate per evaluated step. Each proposal runs five stages: ancestor
selection from score-ranked history, an entropy-weighted branch choice
(re-evaluate a past state / super-merge top performers / recombine), uniform
crossover, entropy-governed mutation, and offspring selection against the
best-known configuration. High entropy favors exploration (recombination,
whole-history parents, large mutations, random offspring); low entropy favors
exploitation (top-k parents, re-evaluation, single-step deltas, offspring
nearest the best).

Everything is a pure function of (history, space, H, rng): a seeded rng makes
proposals bit-reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .model import Configuration, SearchSpace, StateRecord, ValidationError, round_half_up


class Branch(Enum):
    REEVALUATE = "reevaluate"
    SUPER_MERGE = "super_merge"
    RECOMBINE = "recombine"


class ProposalKind(str, Enum):
    BOOTSTRAP = "bootstrap"
    REEVALUATION = "reevaluation"
    SUPERMERGE = "supermerge"
    RECOMBINATION = "recombination"


@dataclass(frozen=True)
class Proposal:
    config: Configuration
    kind: ProposalKind
    parents: tuple[int, ...]


@dataclass(frozen=True)
class TunerParams:
    c_re: float = 0.3
    c_sm: float = 0.1
    top_k: int = 3
    batch: int = 4
    mut_frac: float = 0.5
    delta_frac: float = 0.1

    def __post_init__(self) -> None:
        if not 0 <= self.c_re + self.c_sm <= 1:
            raise ValidationError("branch coefficients must sum into [0, 1]")
        if self.top_k < 1 or self.batch < 1:
            raise ValidationError("top_k and batch must be >= 1")
        if not 0 < self.mut_frac <= 1 or not 0 < self.delta_frac <= 1:
            raise ValidationError("mut_frac and delta_frac must lie in (0, 1]")


def rank_history(history: list[StateRecord]) -> list[StateRecord]:
    """Score-descending; equal scores rank the later step first (freshness)."""
    return sorted(history, key=lambda r: (-r.score, -r.step_index))


def select_ancestors(
    history: list[StateRecord], h: float, top_k: int, rng: random.Random
) -> tuple[StateRecord, StateRecord]:
    if len(history) < 2:
        raise ValidationError("ancestor selection needs at least 2 records")
    ranked = rank_history(history)
    k = min(top_k, len(ranked))

    def draw() -> StateRecord:
        if rng.random() < h:
            return ranked[rng.randrange(len(ranked))]
        return ranked[rng.randrange(k)]

    parent_a = draw()
    parent_b = draw()
    attempts = 0
    while parent_b is parent_a and attempts < len(history):
        parent_b = draw()
        attempts += 1
    return parent_a, parent_b


def branch(h: float, c_re: float, c_sm: float, rng: random.Random) -> Branch:
    u = rng.random()
    cold = 1.0 - h
    if u < c_re * cold:
        return Branch.REEVALUATE
    if u < (c_re + c_sm) * cold:
        return Branch.SUPER_MERGE
    return Branch.RECOMBINE


def crossover(
    a: Configuration, b: Configuration, h: float, rng: random.Random
) -> Configuration:
    # h reserved: branch weights already gate how often crossover runs at all
    if set(a.genes) != set(b.genes):
        raise ValidationError("crossover parents disagree on gene set")
    genes = {}
    for name in sorted(a.genes):
        genes[name] = a.genes[name] if rng.random() < 0.5 else b.genes[name]
    return Configuration(genes=genes)


def mutate(
    cfg: Configuration,
    space: SearchSpace,
    h: float,
    mut_frac: float,
    delta_frac: float,
    rng: random.Random,
) -> Configuration:
    """Mutate n_mut = max(1, round(H * dims * mut_frac)) genes, chosen without
    replacement. Per gene: with probability H a large change (uniform over the
    other indices), else a small delta: a fixed shift of
    max(1, round(delta_frac * (n-1))) grid steps with random sign, clamped to
    range (mirrored when clamping would be a no-op). Keeping the small-delta
    size proportional to the index range (rather than shrinking it with H)
    is what keeps steps-to-target flat as values-per-parameter grows; with an
    H-scaled delta the walk degenerates to single-index moves and convergence
    time scales linearly with grid resolution. Every selected gene with more
    than one grid value is guaranteed to change; single-value genes cannot.
    """
    dims = space.dims
    n_mut = min(dims, max(1, round_half_up(h * dims * mut_frac)))
    chosen = rng.sample(list(space.names), n_mut)
    genes = dict(cfg.genes)
    for name in chosen:
        spec = space.spec(name)
        n = spec.n_values
        if n <= 1:
            continue
        old = genes[name]
        if rng.random() < h:
            new = (old + 1 + rng.randrange(n - 1)) % n
        else:
            delta = max(1, round_half_up(delta_frac * (n - 1)))
            shift = delta if rng.random() < 0.5 else -delta
            new = min(max(old + shift, 0), n - 1)
            if new == old:
                new = min(max(old - shift, 0), n - 1)
        genes[name] = new
    return Configuration(genes=genes)


def super_merge(
    history: list[StateRecord], top_k: int, rng: random.Random
) -> Configuration:
    """Gene-wise blend: each gene drawn from a uniformly chosen top-k record."""
    if not history:
        raise ValidationError("super_merge needs at least 1 record")
    top = rank_history(history)[: min(top_k, len(history))]
    genes = {}
    for name in sorted(top[0].config.genes):
        genes[name] = top[rng.randrange(len(top))].config.genes[name]
    return Configuration(genes=genes)


def l1_distance(a: Configuration, b: Configuration) -> int:
    if set(a.genes) != set(b.genes):
        raise ValidationError("distance over mismatched gene sets")
    return sum(abs(a.genes[name] - b.genes[name]) for name in a.genes)


def select_offspring(
    batch: list[Configuration], best: Configuration, h: float, rng: random.Random
) -> Configuration:
    if not batch:
        raise ValidationError("offspring selection over an empty batch")
    if rng.random() < h:
        return batch[rng.randrange(len(batch))]
    winner = batch[0]
    winner_dist = l1_distance(winner, best)
    for candidate in batch[1:]:
        d = l1_distance(candidate, best)
        if d < winner_dist:
            winner, winner_dist = candidate, d
    return winner


def bootstrap(space: SearchSpace, rng: random.Random) -> Configuration:
    return Configuration(genes={p.name: rng.randrange(p.n_values) for p in space.params})


def propose(
    history: list[StateRecord],
    space: SearchSpace,
    h: float,
    rng: random.Random,
    params: TunerParams = TunerParams(),
) -> Proposal:
    if len(history) < 2:
        return Proposal(config=bootstrap(space, rng), kind=ProposalKind.BOOTSTRAP, parents=())

    parent_a, parent_b = select_ancestors(history, h, params.top_k, rng)
    chosen_branch = branch(h, params.c_re, params.c_sm, rng)

    if chosen_branch is Branch.REEVALUATE:
        return Proposal(
            config=Configuration(genes=dict(parent_a.config.genes)),
            kind=ProposalKind.REEVALUATION,
            parents=(parent_a.step_index,),
        )

    if chosen_branch is Branch.SUPER_MERGE:
        top = rank_history(history)[: min(params.top_k, len(history))]
        return Proposal(
            config=super_merge(history, params.top_k, rng),
            kind=ProposalKind.SUPERMERGE,
            parents=tuple(r.step_index for r in top),
        )

    best = rank_history(history)[0].config
    batch = []
    for _ in range(params.batch):
        child = crossover(parent_a.config, parent_b.config, h, rng)
        batch.append(mutate(child, space, h, params.mut_frac, params.delta_frac, rng))
    return Proposal(
        config=select_offspring(batch, best, h, rng),
        kind=ProposalKind.RECOMBINATION,
        parents=(parent_a.step_index, parent_b.step_index),
    )
