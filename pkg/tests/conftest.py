"""Shared fixtures: bundled chains, random generators, brute-force oracles."""

import itertools
import math
import random
from pathlib import Path

import pytest

from ldp import (
    ChainSpec,
    SparseMeasure,
    decompose_classes,
    parse_chain,
    parse_measure,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load_chain(name):
    return parse_chain((FIXTURES / name).read_text())


def load_measure(name, chain):
    return parse_measure((FIXTURES / name).read_text(), chain)


@pytest.fixture(scope="session")
def e1_chain():
    return load_chain("e1.chain")


@pytest.fixture(scope="session")
def sym2_chain():
    return load_chain("sym2.chain")


@pytest.fixture(scope="session")
def ex27_chain():
    return load_chain("ex27.chain")


@pytest.fixture(scope="session")
def diamond_chain():
    return load_chain("diamond.chain")


# --- random instances -------------------------------------------------------


def random_chain(rng, n_max=5, self_loops=True):
    """Random chain with mixed reducible structure.

    Draws a random digraph, optionally planting a self-loop at every state
    so that every class contains a short cycle (needed by the measure
    generator below), and fills rows with random rational-ish weights.
    """
    n = rng.randint(2, n_max)
    labels = [f"s{i}" for i in range(n)]
    kernel = {}
    for x in range(n):
        succs = {y for y in range(n) if rng.random() < 0.45}
        if self_loops and rng.random() < 0.8:
            succs.add(x)
        if not succs:
            succs.add(rng.randrange(n))
        weights = [rng.randint(1, 8) for _ in succs]
        tot = sum(weights)
        for y, w in zip(sorted(succs), weights):
            kernel[(x, y)] = w / tot
    supp = sorted({rng.randrange(n) for _ in range(rng.randint(1, n))})
    beta = {x: 1.0 / len(supp) for x in supp}
    return ChainSpec(labels, kernel, beta)


def random_admissible_pair_measure(rng, chain, decomposition, grid=16):
    """Balanced admissible pair measure with masses on the 1/grid lattice.

    Accumulates transition counts of random positive minimal cycles drawn
    inside a beta-reachable, totally ordered set of classes until exactly
    `grid` edge counts are collected; division by `grid` gives exact lattice
    masses.  Returns None when the chain offers no suitable class chain.
    """
    from ldp.cycles import enumerate_minimal_cycles

    d = decomposition
    usable = [j for j in range(len(d.classes)) if j in d.beta_reaches]
    if not usable:
        return None
    rng.shuffle(usable)
    chain_of_classes = [usable[0]]
    for j in usable[1:]:
        if all(d.comparable(j, i) for i in chain_of_classes):
            chain_of_classes.append(j)
    states = sorted(x for j in chain_of_classes for x in d.classes[j])
    cycles, _ = enumerate_minimal_cycles(chain, states, cap=500)
    cycles = [c for c in cycles if c.n_edges <= grid]
    if not cycles:
        return None
    for _ in range(200):
        counts = {}
        left = grid
        ok = False
        for _ in range(64):
            fits = [c for c in cycles if c.n_edges <= left]
            if not fits:
                break
            c = rng.choice(fits)
            for e in c.edges():
                counts[e] = counts.get(e, 0) + 1
            left -= c.n_edges
            if left == 0:
                ok = True
                break
        if ok:
            return SparseMeasure(2, {e: c / grid for e, c in counts.items()})
    return None


def random_markov_measure(rng, chain, decomposition):
    """Stationary (pi, q) supported inside one reachable class, q << p."""
    import numpy as np

    candidates = [j for j in decomposition.beta_reaches if len(decomposition.classes[j]) >= 1]
    if not candidates:
        return None
    j = rng.choice(sorted(candidates))
    states = sorted(decomposition.classes[j])
    q = {}
    for x in states:
        succs = [y for y in chain.row(x)[0] if y in set(states)]
        weights = [rng.randint(1, 6) for _ in succs]
        tot = sum(weights)
        for y, w in zip(succs, weights):
            q[(x, y)] = w / tot
    idx = {x: i for i, x in enumerate(states)}
    mat = np.zeros((len(states), len(states)))
    for (x, y), p in q.items():
        mat[idx[x], idx[y]] = p
    vals, vecs = np.linalg.eig(mat.T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    pi_vec = np.abs(vecs[:, i].real)
    pi_vec /= pi_vec.sum()
    pi = {x: float(pi_vec[idx[x]]) for x in states if pi_vec[idx[x]] > 1e-12}
    from ldp.rates import MarkovMeasure

    try:
        return MarkovMeasure(pi=pi, q={e: p for e, p in q.items() if e[0] in pi})
    except Exception:
        return None


# --- brute-force oracles ------------------------------------------------------


def brute_force_classes(chain):
    """Class decomposition from the boolean transitive closure (>=1 step)."""
    n = chain.n_states
    reach = [[False] * n for _ in range(n)]
    for (x, y) in chain.kernel:
        reach[x][y] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    assigned = {}
    classes = []
    for x in range(n):
        if x in assigned:
            continue
        if not reach[x][x]:
            continue
        members = [y for y in range(n) if reach[x][y] and reach[y][x] and reach[y][y]]
        cls = frozenset(members)
        classes.append(cls)
        for y in members:
            assigned[y] = True
    classes.sort(key=min)
    transient = frozenset(x for x in range(n) if not reach[x][x])
    order = set()
    for a, ca in enumerate(classes):
        for b, cb in enumerate(classes):
            if a != b and any(reach[x][y] for x in ca for y in cb):
                order.add((a, b))
    beta_hit = set()
    for j, cls in enumerate(classes):
        for x in chain.beta:
            if x in cls or any(reach[x][y] for y in cls):
                beta_hit.add(j)
    return classes, transient, order, beta_hit


def positive_words(chain, length, with_initial=False):
    """All words of the given length with positive kernel (or path) weight."""
    out = []
    starts = sorted(chain.beta) if with_initial else range(chain.n_states)
    stack = [(x,) for x in starts]
    while stack:
        w = stack.pop()
        if len(w) == length:
            out.append(w)
            continue
        for y in chain.row(w[-1])[0]:
            stack.append(w + (y,))
    return sorted(out)


def all_words(n_states, length):
    return list(itertools.product(range(n_states), repeat=length))


def seeded(seed):
    return random.Random(seed)
