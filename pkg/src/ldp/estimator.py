"""Exact and Monte Carlo estimation of pair-empirical ball probabilities,
and the empirical decay slopes they induce."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

TIE_GUARD = 1e-9

DP_PRUNE = 1e-300
DP_STATE_BUDGET = 50_000_000
MC_SHARD = 65_536
WILSON_Z = 1.959963984540054  # 95% two-sided


class EstimatorError(ValueError):
    """Invalid estimator input or exceeded exactness budget."""


@dataclass(frozen=True)
class PairCountDistribution:
    """Exact law of (terminal state, transition counts) after n steps.

    Keys of table are (state id, counts tuple aligned with edges); the
    pruning defect (total mass dropped below DP_PRUNE) is reported so the
    distribution's deficit from 1 is always accounted for.
    """

    n: int
    edges: tuple
    table: dict
    defect: float

    def total(self):
        return math.fsum(self.table.values())


def pair_count_distribution(chain, n, state_budget=DP_STATE_BUDGET):
    """Forward dynamic program over (current letter, transition counts).

    Exact apart from the reported pruning defect; raises when the layer
    grows past the state budget rather than degrading silently.
    """
    if n < 1:
        raise EstimatorError("horizon must be >= 1")
    edges = tuple(sorted(chain.kernel))
    eidx = {e: i for i, e in enumerate(edges)}
    zero = (0,) * len(edges)
    layer = {}
    for x, b in chain.beta.items():
        layer[(x, zero)] = layer.get((x, zero), 0.0) + b
    defect = 0.0
    for _ in range(n):
        nxt = {}
        for (x, counts), mass in layer.items():
            succs, probs = chain.row(x)
            for y, p in zip(succs, probs):
                w = mass * p
                if w < DP_PRUNE:
                    defect += w
                    continue
                i = eidx[(x, y)]
                key = (y, counts[:i] + (counts[i] + 1,) + counts[i + 1 :])
                nxt[key] = nxt.get(key, 0.0) + w
        if len(nxt) > state_budget:
            raise EstimatorError(
                f"dynamic program exceeded the state budget: {len(nxt)} reachable states"
            )
        layer = nxt
    return PairCountDistribution(n=n, edges=edges, table=layer, defect=defect)


class _BallTest:
    """Strict open-ball membership for integer count vectors.

    Distances are compared in floating point away from the boundary and in
    exact rational arithmetic within TIE_GUARD of it, so ties at radius
    delta are excluded exactly (counts are integers and the stored masses
    and radius are binary rationals).
    """

    def __init__(self, edges, mu, delta):
        self.mu_on = [mu.mass(e) for e in edges]
        self.off = math.fsum(m for u, m in mu.entries.items() if u not in set(edges))
        self.delta = delta
        # exact comparisons read radius and masses as their shortest decimal
        # forms, matching the decimal-literal file formats they come from
        self.mu_on_exact = [Fraction(str(m)) for m in self.mu_on]
        self.off_exact = sum(
            (Fraction(str(m)) for u, m in mu.entries.items() if u not in set(edges)),
            Fraction(0),
        )
        self.delta_exact = Fraction(str(delta))

    def tv_float(self, counts, n):
        return 0.5 * (
            math.fsum(abs(c / n - m) for c, m in zip(counts, self.mu_on)) + self.off
        )

    def hit(self, counts, n):
        tv = self.tv_float(counts, n)
        if abs(tv - self.delta) > TIE_GUARD:
            return tv < self.delta
        exact = sum(
            (abs(Fraction(int(c), n) - m) for c, m in zip(counts, self.mu_on_exact)),
            self.off_exact,
        )
        return exact < 2 * self.delta_exact


def ball_probability(chain, mu, delta, n, state_budget=DP_STATE_BUDGET):
    """Exact probability that the n-step pair empirical measure lands in the
    open TV ball of radius delta around mu; ties at the boundary excluded."""
    if mu.k != 2:
        raise EstimatorError("ball probabilities are about pair measures")
    if delta > 1.0:
        return 1.0
    dist = pair_count_distribution(chain, n, state_budget)
    return ball_probability_from(dist, mu, delta)


def ball_probability_from(dist, mu, delta):
    test = _BallTest(dist.edges, mu, delta)
    total = 0.0
    for (x, counts), mass in dist.table.items():
        if test.hit(counts, dist.n):
            total += mass
    return total


@dataclass(frozen=True)
class SlopeReport:
    """(1/n) log-probabilities of a shrinking-ball event over a horizon grid,
    with the 1/n-corrected extrapolated slope and the rate-function reference."""

    grid: tuple
    logprobs: tuple
    slope: float
    reference: float
    relative_gap: float
    delta: float


def rl_slope(chain, decomposition, mu, delta, n_grid, state_budget=DP_STATE_BUDGET):
    """Empirical decay slope of ball probabilities against the rate value.

    logprobs[i] = (1/n_i) log P(ball) with -inf for zero-probability grid
    points; the slope extrapolates the two largest finite grid points
    through a + b/n (the finite-size correction of the subadditive bounds
    is O(1/n)).
    """
    from .rates import rate_report

    n_grid = tuple(n_grid)
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise EstimatorError("horizon grid must be strictly increasing")
    logprobs = []
    for n in n_grid:
        p = ball_probability(chain, mu, delta, n, state_budget)
        logprobs.append(math.log(p) / n if p > 0.0 else -math.inf)
    finite = [(n, lp) for n, lp in zip(n_grid, logprobs) if lp > -math.inf]
    if len(finite) >= 2:
        (n1, y1), (n2, y2) = finite[-2], finite[-1]
        slope = (n2 * y2 - n1 * y1) / (n2 - n1)
    elif len(finite) == 1:
        slope = finite[0][1]
    else:
        slope = -math.inf
    reference = rate_report(chain, decomposition, mu).r_value
    if math.isfinite(reference) and reference > 0.0 and math.isfinite(slope):
        gap = abs(-slope - reference) / reference
    else:
        gap = math.inf
    return SlopeReport(
        grid=n_grid,
        logprobs=tuple(logprobs),
        slope=slope,
        reference=reference,
        relative_gap=gap,
        delta=delta,
    )


@dataclass(frozen=True)
class MonteCarloBall:
    estimate: float
    low: float
    high: float
    hits: int
    samples: int
    seed: int
    streams: int


def monte_carlo_ball(chain, mu, delta, n, samples, seed, workers=1, shard=MC_SHARD):
    """Sampled frequency of the ball event with a 95% Wilson interval.

    Trajectories are drawn with the Philox counter-based generator, one
    stream per fixed-size shard, so results depend on (seed, samples) only,
    never on the worker count.  Zero hits yield the interval [0, upper).
    """
    if samples < 1:
        raise EstimatorError("need at least one sample")
    if mu.k != 2:
        raise EstimatorError("ball probabilities are about pair measures")
    m = chain.n_states
    edges = tuple(sorted(chain.kernel))
    eidx = {e: i for i, e in enumerate(edges)}
    edge_of = np.full((m, m), -1, dtype=np.int64)
    trans_cum = np.zeros((m, m))
    trans_succ = np.zeros((m, m), dtype=np.int64)
    for x in range(m):
        succs, probs = chain.row(x)
        c = np.cumsum(probs)
        c[-1] = 1.0
        trans_cum[x, : len(succs)] = c
        trans_cum[x, len(succs) :] = 1.0
        trans_succ[x, : len(succs)] = succs
        if len(succs) < m:
            trans_succ[x, len(succs) :] = succs[-1]
        for y, _ in zip(succs, probs):
            edge_of[x, y] = eidx[(x, y)]
    beta_states = np.array(sorted(chain.beta))
    beta_cum = np.cumsum([chain.beta[x] for x in beta_states])
    beta_cum[-1] = 1.0
    mu_vec = np.array([mu.mass(e) for e in edges])
    off = math.fsum(m for u, m in mu.entries.items() if u not in set(edges))
    test = _BallTest(edges, mu, delta)

    def run_stream(stream_id, count):
        rng = np.random.Generator(np.random.Philox(key=[seed, stream_id]))
        x = beta_states[np.searchsorted(beta_cum, rng.random(count), side="right")]
        counts = np.zeros((count, len(edges)), dtype=np.int64)
        rows = np.arange(count)
        for _ in range(n):
            u = rng.random(count)
            pick = (u[:, None] >= trans_cum[x]).sum(axis=1)
            y = trans_succ[x, pick]
            np.add.at(counts, (rows, edge_of[x, y]), 1)
            x = y
        tv = 0.5 * (np.abs(counts / n - mu_vec).sum(axis=1) + off)
        sure = tv < delta - TIE_GUARD
        borderline = np.flatnonzero(np.abs(tv - delta) <= TIE_GUARD)
        hits = int(sure.sum())
        for i in borderline:
            if test.hit(counts[i], n):
                hits += 1
        return hits

    shards = [(i, min(shard, samples - i * shard)) for i in range((samples + shard - 1) // shard)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(lambda sc: run_stream(*sc), shards))
    else:
        hits = sum(run_stream(i, c) for i, c in shards)

    p_hat = hits / samples
    z2 = WILSON_Z**2
    denom = 1.0 + z2 / samples
    center = (p_hat + z2 / (2 * samples)) / denom
    half = WILSON_Z * math.sqrt(p_hat * (1 - p_hat) / samples + z2 / (4 * samples**2)) / denom
    return MonteCarloBall(
        estimate=p_hat,
        low=max(0.0, center - half),
        high=min(1.0, center + half),
        hits=hits,
        samples=samples,
        seed=seed,
        streams=len(shards),
    )
