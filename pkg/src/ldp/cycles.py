"""Minimal cycles, the greedy balanced-measure decomposition, and
constructive word approximation of balanced admissible pair measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .chain import word_probability
from .measures import (
    SparseMeasure,
    classify_admissible,
    in_allowed_support,
    is_balanced,
    marginal,
    tv_distance,
)
from .words import count_measure, empirical

APPROX_WORD_CAP = 2**20


class CycleError(ValueError):
    """Invalid input to a cycle decomposition."""


@dataclass(frozen=True)
class MinimalCycle:
    """A closed word visiting each of its letters exactly once.

    The word repeats its first letter at the end, so a self-loop is (x, x)
    and the shortest two-state cycle is (x, y, x).
    """

    word: tuple

    def __post_init__(self):
        w = self.word
        if len(w) < 2 or w[0] != w[-1]:
            raise CycleError(f"not a closed word: {w}")
        if len(set(w[:-1])) != len(w) - 1:
            raise CycleError(f"inner letters repeat: {w}")

    @property
    def n_edges(self):
        return len(self.word) - 1

    def edges(self):
        w = self.word
        return [(w[i], w[i + 1]) for i in range(len(w) - 1)]


def enumerate_minimal_cycles(chain, support, cap):
    """All positive-probability minimal cycles inside a state set.

    Every rotation is a distinct cycle.  The order is deterministic: by
    length first, then lexicographically by the letter sequence.  Returns
    (cycles, truncated); the flag is set when the cap cut the enumeration.
    """
    support = sorted(set(support))
    supp_set = set(support)
    cycles = []
    truncated = False

    def extend(path, on_path):
        nonlocal truncated
        if truncated:
            return
        # close back to the root when possible: the closing cycle at this
        # length sorts before any longer extension of the same prefix
        root = path[0]
        for y in chain.row(path[-1])[0]:
            if truncated:
                return
            if y not in supp_set:
                continue
            if y == root and len(path) == target_len:
                if len(cycles) >= cap:
                    truncated = True
                    return
                cycles.append(MinimalCycle(tuple(path) + (root,)))
            elif y not in on_path and len(path) < target_len:
                on_path.add(y)
                path.append(y)
                extend(path, on_path)
                path.pop()
                on_path.discard(y)

    for length in range(1, len(support) + 1):
        target_len = length
        if truncated:
            break
        for x in support:
            if truncated:
                break
            extend([x], {x})
    return cycles, truncated


def find_cycle_in(chain, nu):
    """A minimal cycle carried by a balanced nonnegative measure.

    Walks the conditional kernel of nu from the minimal-id support state,
    always taking the heaviest remaining edge (ties to the smallest id),
    until a state repeats; the extracted loop v satisfies nu >= alpha * counts(v)
    entrywise with alpha the minimal edge mass along the loop.
    """
    if nu.k != 2:
        raise CycleError("cycle extraction works on pair measures")
    if nu.total <= 0.0:
        raise CycleError("null measure carries no cycle")
    if not is_balanced(nu):
        raise CycleError("measure is not balanced")
    succ = {}
    for (x, y), m in nu.entries.items():
        succ.setdefault(x, []).append((y, m))
    start = min(succ)
    path = [start]
    seen = {start: 0}
    while True:
        x = path[-1]
        options = succ.get(x)
        if not options:
            raise CycleError("walk left the support; measure is not balanced")
        y = max(options, key=lambda it: (it[1], -it[0]))[0]
        if y in seen:
            loop = path[seen[y] :] + [y]
            cycle = MinimalCycle(tuple(loop))
            alpha = min(nu.mass(e) for e in cycle.edges())
            return cycle, alpha
        seen[y] = len(path)
        path.append(y)


@dataclass(frozen=True)
class CycleDecomposition:
    """Greedy cycle expansion of a balanced pair measure.

    approximant = sum_k coefficients[k] * counts(cycles[k]) is a balanced
    probability measure; tv_residual is its distance to the target.
    """

    cycles: tuple
    coefficients: tuple
    approximant: SparseMeasure
    tv_residual: float
    truncated: bool


def decompose_balanced(chain, mu, n_terms):
    """Greedy cycle decomposition of a balanced allowed-support measure.

    Cycles are enumerated inside the support (length then lex); the
    coefficient of each cycle is the minimal remaining mass over its edges.
    The enumeration is rotated so the first coefficient is positive, and the
    mass not covered by the first n_terms cycles is folded onto the first
    cycle to keep the approximant a probability measure.
    """
    mu.require_probability()
    if not is_balanced(mu):
        raise CycleError("measure is not balanced")
    if not in_allowed_support(chain, mu):
        raise CycleError("measure charges a forbidden transition")
    states = {x for u in mu.support() for x in u}
    cycles, truncated = enumerate_minimal_cycles(chain, states, cap=max(n_terms, 1))
    if not cycles:
        raise CycleError(
            "no positive-probability cycle inside the support; "
            "the measure cannot be balanced, admissible, and allowed"
        )

    remaining = dict(mu.entries)

    def greedy_coefficient(cycle):
        return max(0.0, min(remaining.get(e, 0.0) for e in cycle.edges()))

    # rotate so the first kept cycle has positive coefficient
    first_pos = None
    probe = dict(remaining)
    for i, c in enumerate(cycles):
        a = min(probe.get(e, 0.0) for e in c.edges())
        if a > 0.0:
            first_pos = i
            break
        for e in c.edges():
            if e in probe:
                probe[e] = max(0.0, probe[e] - a)
    if first_pos is None:
        raise CycleError("no cycle carries positive mass; measure is not balanced")
    rotated = cycles[first_pos:] + cycles[:first_pos]
    used = rotated[: n_terms]

    coeffs = []
    for c in used:
        a = greedy_coefficient(c)
        coeffs.append(a)
        if a > 0.0:
            for e in c.edges():
                remaining[e] = max(0.0, remaining[e] - a)
    covered = math.fsum(a * c.n_edges for a, c in zip(coeffs, used))
    coeffs[0] += (1.0 - covered) / used[0].n_edges

    approx_entries = {}
    for a, c in zip(coeffs, used):
        if a <= 0.0:
            continue
        for e in c.edges():
            approx_entries[e] = approx_entries.get(e, 0.0) + a
    approximant = SparseMeasure(2, approx_entries, prune=False)
    return CycleDecomposition(
        cycles=tuple(used),
        coefficients=tuple(coeffs),
        approximant=approximant,
        tv_residual=tv_distance(approximant, mu),
        truncated=truncated,
    )


@dataclass(frozen=True)
class ApproximatingWord:
    word: tuple
    tv_distance: float
    certified_bound: float
    n_cycles: int
    power_scale: int


def approximating_words(chain, decomposition, mu, m):
    """A positive-probability word whose pair empirical measure is 3/m-close.

    Decomposes mu into cycles at accuracy 1/m, orders the cycles along the
    admissible class order, connects consecutive blocks with shortest
    positive words, and raises each cycle to a power proportional to its
    coefficient, growing the scale geometrically until the certified bound
    (connector overhead + decomposition residual + rounding drift) is at
    most 3/m.
    """
    if mu.k != 2:
        raise CycleError("word approximation works on pair measures")
    verdict = classify_admissible(decomposition, mu)
    if not verdict.admissible:
        raise CycleError(f"measure is not admissible: {verdict.witness}")
    if not is_balanced(mu):
        raise CycleError("measure is not balanced")
    if not in_allowed_support(chain, mu):
        raise CycleError("measure charges a forbidden transition")

    target = 1.0 / m
    n_terms = 4
    decomp = decompose_balanced(chain, mu, n_terms)
    while decomp.tv_residual > target and not decomp.truncated:
        n_terms *= 2
        decomp = decompose_balanced(chain, mu, n_terms)
    if decomp.tv_residual > target:
        raise CycleError("cycle budget exhausted before reaching the target accuracy")

    class_of = decomposition.class_of
    pairs = [
        (c, a) for c, a in zip(decomp.cycles, decomp.coefficients) if a > 0.0
    ]
    class_pos = {j: i for i, j in enumerate(verdict.j_mu)}
    pairs.sort(key=lambda ca: class_pos[class_of[ca[0].word[0]]])
    cycles = [c for c, _ in pairs]
    alphas = [a for _, a in pairs]
    n_cyc = len(cycles)

    connectors = []
    from .words import _shortest_connector

    z = min(x for x in chain.beta if _start_reaches(chain, x, cycles[0].word[0]))
    first = _shortest_connector(chain, z, cycles[0].word[0])
    connectors.append((z,) + first)
    for i in range(1, n_cyc):
        x = cycles[i - 1].word[0]
        y = cycles[i].word[0]
        conn = _shortest_connector(chain, x, y)
        if conn is None:
            raise CycleError("admissible order does not connect consecutive cycles")
        connectors.append(conn)
    tau = max(len(c) for c in connectors)

    scale = max(2, math.ceil(2.0 / min(alphas)))
    while True:
        powers = [max(1, math.floor(a * scale)) for a in alphas]
        letters = []
        for conn, cyc, lam in zip(connectors, cycles, powers):
            letters.extend(conn)
            letters.extend(cyc.word[:-1] * lam)
            letters.append(cyc.word[0])
        word = tuple(letters)
        n_edges = len(word) - 1
        drift = math.fsum(
            abs(lam / n_edges - a) * c.n_edges
            for lam, a, c in zip(powers, alphas, cycles)
        )
        bound = (tau + 1) * n_cyc / n_edges + decomp.tv_residual + drift
        if bound <= 3.0 * target:
            actual = tv_distance(empirical(word), mu)
            if word_probability(chain, word, with_initial=True) <= 0.0:
                raise CycleError("assembled word has zero path probability")
            return ApproximatingWord(
                word=word,
                tv_distance=actual,
                certified_bound=bound,
                n_cycles=n_cyc,
                power_scale=scale,
            )
        if len(word) > APPROX_WORD_CAP:
            raise CycleError(
                f"approximating word exceeded {APPROX_WORD_CAP} letters "
                f"before certifying 3/m = {3.0 * target}"
            )
        scale *= 2


def _start_reaches(chain, x, y):
    """True iff y is reachable from x by a path of >= 1 edges."""
    seen = set()
    stack = [x]
    while stack:
        v = stack.pop()
        for s in chain.row(v)[0]:
            if s == y:
                return True
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return False
