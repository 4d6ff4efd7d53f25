"""Empirical measures of words and the trajectory surgery maps.

A word is a tuple of state ids.  Slicing cuts a positive-probability word
into per-class pieces, stitching reassembles a class-ordered list of pieces
into one trajectory using short connecting words, and coupling/decoupling
compose the two.  The companion constants quantify how these maps distort
path probabilities; they are exported as pure functions so tests can verify
the inequalities exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .chain import word_probability
from .measures import SparseMeasure

Word = tuple


class WordOpError(ValueError):
    """Invalid input to a word operation."""


def count_measure(u):
    """Unnormalized transition counts of a word (arity-2 measure).

    The null measure for words of length <= 1; total mass |u|-1 otherwise.
    """
    out = {}
    for i in range(len(u) - 1):
        e = (u[i], u[i + 1])
        out[e] = out.get(e, 0.0) + 1.0
    return SparseMeasure(2, out, prune=False)


def empirical(u):
    """Normalized transition counts; the null measure for |u| <= 1."""
    m = count_measure(u)
    if len(u) <= 1:
        return m
    return m.scaled(1.0 / (len(u) - 1))


def empirical_k(w, k):
    """Sliding-window empirical measure on k-tuples, n = |w|-k+1 windows."""
    if k < 1:
        raise WordOpError(f"arity must be >= 1, got {k}")
    n = len(w) - k + 1
    if n < 1:
        raise WordOpError(f"word of length {len(w)} is shorter than arity {k}")
    out = {}
    for i in range(n):
        v = tuple(w[i : i + k])
        out[v] = out.get(v, 0.0) + 1.0
    return SparseMeasure(k, out).scaled(1.0 / n)


@dataclass(frozen=True)
class TransitionTable:
    """Connecting words between window sets of consecutive classes.

    xi[(x, y)] is the inner word of a shortest positive path x -> ... -> y;
    eta is the minimal path weight p(x xi y) over the table and tau the
    maximal |xi|+1.  z0 is the reference start letter in supp(beta).
    """

    z0: int
    xi: dict
    eta: float
    tau: int


@dataclass(frozen=True)
class SlicingConfig:
    """Window K, ordered class list J0, and the transition table built for them."""

    decomposition: object
    window: frozenset
    j0: tuple
    k_sets: tuple  # window intersected with each class of j0
    table: TransitionTable

    def k_set(self, pos):
        return self.k_sets[pos]

    @property
    def gamma_pairs(self):
        return frozenset((x, y) for ks in self.k_sets for x in ks for y in ks)


def _shortest_connector(chain, x, y):
    """Inner word of the shortest positive-probability path x -> y (>= 1 edge).

    Among shortest paths, the lexicographically smallest letter sequence is
    chosen.  Returns None when y is unreachable from x.
    """
    if chain.prob(x, y) > 0.0:
        return ()
    # backward distances to y
    preds = {}
    for (a, b) in chain.kernel:
        preds.setdefault(b, []).append(a)
    bdist = {y: 0}
    queue = deque([y])
    while queue:
        v = queue.popleft()
        for a in preds.get(v, ()):
            if a not in bdist:
                bdist[a] = bdist[v] + 1
                queue.append(a)
    succs, _ = chain.row(x)
    starts = [s for s in succs if s in bdist]
    if not starts:
        return None
    need = min(bdist[s] for s in starts)
    cur = min(s for s in starts if bdist[s] == need)
    path = [cur]
    while cur != y:
        succs, _ = chain.row(cur)
        nxt = [s for s in succs if bdist.get(s, -1) == bdist[cur] - 1]
        cur = min(nxt)
        path.append(cur)
    return tuple(path[:-1])


def build_transition_table(chain, decomposition, window, j0):
    """Build connecting words for every window pair along the ordered classes.

    Preconditions: the classes of j0 are totally ordered by reachability in
    the given sequence, every class meets the window, and the initial
    distribution reaches the first class.
    """
    j0 = tuple(j0)
    if not j0:
        raise WordOpError("empty class list")
    window = frozenset(window)
    k_sets = []
    for pos, j in enumerate(j0):
        ks = frozenset(decomposition.classes[j] & window)
        if not ks:
            raise WordOpError(f"window misses class {j} entirely")
        k_sets.append(ks)
        if pos + 1 < len(j0) and not decomposition.reaches(j, j0[pos + 1]):
            raise WordOpError(f"classes {j} and {j0[pos+1]} are not ordered as given")

    first_class = decomposition.classes[j0[0]]
    z0 = None
    for x in sorted(chain.beta):
        if _reaches_set(chain, x, first_class):
            z0 = x
            break
    if z0 is None:
        raise WordOpError("initial distribution does not reach the first class")

    xi = {}
    pairs = [(z0, y) for ks in k_sets for y in ks]
    for i, ks in enumerate(k_sets):
        for ks2 in k_sets[i:]:
            pairs.extend((x, y) for x in ks for y in ks2)
    eta = math.inf
    tau = 1
    for (x, y) in pairs:
        if (x, y) in xi:
            continue
        conn = _shortest_connector(chain, x, y)
        if conn is None:
            raise WordOpError(
                f"no positive path {chain.labels[x]!r} -> {chain.labels[y]!r}; "
                "class list violates the reachability precondition"
            )
        xi[(x, y)] = conn
        w = word_probability(chain, (x,) + conn + (y,))
        eta = min(eta, w)
        tau = max(tau, len(conn) + 1)
    table = TransitionTable(z0=z0, xi=xi, eta=eta, tau=tau)
    return SlicingConfig(
        decomposition=decomposition,
        window=window,
        j0=j0,
        k_sets=tuple(k_sets),
        table=table,
    )


def _reaches_set(chain, x, targets):
    """True iff some element of targets is reachable from x by >= 1 edges."""
    seen = set()
    stack = [x]
    while stack:
        v = stack.pop()
        for s in chain.row(v)[0]:
            if s in targets:
                return True
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return False


@dataclass(frozen=True)
class SlicedWord:
    """Per-class maximal subwords of a positive word, with their index spans."""

    pieces: tuple  # one word per class position in j0; () when absent
    spans: tuple  # (start, end) index pairs, None when absent
    source_len: int
    j0: tuple

    def piece(self, pos):
        return self.pieces[pos]


def slice_word(chain, config, u):
    """Cut a positive-probability word into its per-class window pieces.

    The piece for class position pos is the maximal subword whose first and
    last letters lie in the window part of that class; all its letters then
    automatically belong to the class itself.
    """
    u = tuple(u)
    if word_probability(chain, u) <= 0.0:
        raise WordOpError("slicing requires a positive-probability word")
    pieces = []
    spans = []
    for pos, j in enumerate(config.j0):
        ks = config.k_sets[pos]
        first = None
        last = None
        for i, x in enumerate(u):
            if x in ks:
                if first is None:
                    first = i
                last = i
        if first is None:
            pieces.append(())
            spans.append(None)
            continue
        piece = u[first : last + 1]
        cls = config.decomposition.classes[j]
        if any(x not in cls for x in piece):
            raise WordOpError("positive word has a piece escaping its class")
        pieces.append(piece)
        spans.append((first, last + 1))
    return SlicedWord(pieces=tuple(pieces), spans=tuple(spans), source_len=len(u), j0=config.j0)


def reorder(sliced_words):
    """Flatten sliced words column by column into one stitchable list.

    Entries are (class position, word) pairs with nonempty words only,
    grouped by class in list order within each class column.
    """
    if not sliced_words:
        return []
    j0 = sliced_words[0].j0
    if any(s.j0 != j0 for s in sliced_words):
        raise WordOpError("sliced words use different class lists")
    items = []
    for pos in range(len(j0)):
        for s in sliced_words:
            w = s.pieces[pos]
            if w:
                items.append((pos, w))
    return items


def is_stitchable(config, items):
    last_pos = 0
    for pos, w in items:
        if not w:
            return False
        ks = config.k_sets[pos]
        if w[0] not in ks or w[-1] not in ks:
            return False
        if pos < last_pos:
            return False
        last_pos = pos
    return True


def _assemble(chain, config, items):
    """Full stitched word z0 xi^1 v^1 ... xi^k v^k before prefix truncation."""
    table = config.table
    letters = [table.z0]
    prev = table.z0
    for pos, w in items:
        key = (prev, w[0])
        if key not in table.xi:
            raise WordOpError(f"transition table has no connector for pair {key}")
        letters.extend(table.xi[key])
        letters.extend(w)
        prev = w[-1]
    return tuple(letters)


def stitch(chain, config, items, t):
    """Stitch a class-ordered list of pieces and truncate to length t+1.

    The list must be stitchable and its total length at least t+1; the
    truncation cuts exactly at t+1 letters even inside a piece.
    """
    items = list(items)
    if not is_stitchable(config, items):
        raise WordOpError("list is not stitchable for this configuration")
    total = sum(len(w) for _, w in items)
    if total < t + 1:
        raise WordOpError(f"total piece length {total} is below t+1 = {t + 1}")
    full = _assemble(chain, config, items)
    return full[: t + 1]


def gamma_mass(config, u):
    """Number of transitions of u with both endpoints in one window class."""
    count = 0
    for i in range(len(u) - 1):
        for ks in config.k_sets:
            if u[i] in ks and u[i + 1] in ks:
                count += 1
                break
    return count


def couple(chain, config, words, t):
    """Slice N equal-length words, reorder the pieces, and stitch to length t+1."""
    words = [tuple(w) for w in words]
    if not words:
        raise WordOpError("no words to couple")
    n_plus_1 = len(words[0])
    if any(len(w) != n_plus_1 for w in words):
        raise WordOpError("coupled words must share one length")
    sliced = [slice_word(chain, config, w) for w in words]
    items = reorder(sliced)
    total = sum(len(w) for _, w in items)
    if total < t + 1:
        raise WordOpError(
            f"mass on the window pairs is too small: sliced length {total} < t+1 = {t + 1}"
        )
    full = _assemble(chain, config, items)
    return full[: t + 1]


def decouple(chain, config, u, j_one, j_two, t1, t2):
    """Split one word into two, supported on disjoint class groups.

    j_one and j_two are disjoint subsets of the configuration's class list;
    the word is sliced against each group separately and the two piece lists
    are stitched to lengths t1+1 and t2+1.
    """
    set1, set2 = set(j_one), set(j_two)
    if set1 & set2:
        raise WordOpError("class groups must be disjoint")
    all_j = set(config.j0)
    if not (set1 <= all_j and set2 <= all_j):
        raise WordOpError("class groups must come from the configuration")
    sliced = slice_word(chain, config, u)
    outs = []
    for group, t in ((set1, t1), (set2, t2)):
        items = [
            (pos, sliced.pieces[pos])
            for pos in range(len(config.j0))
            if config.j0[pos] in group and sliced.pieces[pos]
        ]
        total = sum(len(w) for _, w in items)
        if total < t + 1:
            raise WordOpError(
                f"mass on the group's window pairs is too small: {total} < t+1 = {t + 1}"
            )
        full = _assemble(chain, config, items)
        outs.append(full[: t + 1])
    return outs[0], outs[1]


def restrict_config(chain, config, j_subset):
    """Sub-configuration for a subset of the class list, sharing the master table."""
    keep = [pos for pos, j in enumerate(config.j0) if j in set(j_subset)]
    return SlicingConfig(
        decomposition=config.decomposition,
        window=config.window,
        j0=tuple(config.j0[pos] for pos in keep),
        k_sets=tuple(config.k_sets[pos] for pos in keep),
        table=config.table,
    )


def signed_gap_norm_of_words(word, parts):
    """Signed TV norm of the count gap between a word and a list of pieces.

    max(positive mass, negative mass) of count_measure(word) minus the sum
    of the pieces' count measures; the quantity the surgery bounds control.
    """
    diff = {}
    for i in range(len(word) - 1):
        e = (word[i], word[i + 1])
        diff[e] = diff.get(e, 0.0) + 1.0
    for part in parts:
        for i in range(len(part) - 1):
            e = (part[i], part[i + 1])
            diff[e] = diff.get(e, 0.0) - 1.0
    pos = sum(d for d in diff.values() if d > 0)
    neg = -sum(d for d in diff.values() if d < 0)
    return max(pos, neg)


def slicing_fiber_constant(n, r):
    """Multiplicity bound (n+1)^(r+1) for fibers of the slicing map on S^(n+1)."""
    return float(n + 1) ** (r + 1)


def stitching_constant(beta_z0, eta, tau, k_star, l_star):
    """Path-probability constant for stitching lists of <= k_star pieces, length <= l_star."""
    base = 2.0 * k_star / (math.e * (l_star + (tau + 2.0) * k_star))
    return beta_z0 * eta**k_star * (l_star + tau * k_star) ** -2.0 * base ** (2.0 * k_star)


def coupling_constant(beta_z0, eta, tau, n, n_words, r):
    """Constant relating P(coupled word) to the product of the N input path laws."""
    c_st = stitching_constant(beta_z0, eta, tau, n_words * r, n_words * (n + 1))
    return c_st / (2.0 ** (n_words * r) * slicing_fiber_constant(n, r) ** n_words)


def decoupling_constant(beta_z0, eta, tau, n, r):
    """Constant relating the product of the two split path laws to the input law."""
    c_st = stitching_constant(beta_z0, eta, tau, r, n + 1)
    return c_st * c_st / slicing_fiber_constant(n, r)
