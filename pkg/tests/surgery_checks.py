"""Exhaustive verification drivers for the trajectory-surgery inequalities.

Each checker enumerates its full domain (words, lists, or tuples of words at
micro scale), evaluates both sides of one inequality exactly, and returns the
worst margin (rhs - lhs, or the minimal ratio) so callers can assert there
are zero violations.  Enumeration is capped; a cap hit is reported rather
than silently ignored.
"""

import itertools
import math
from dataclasses import dataclass

from ldp import word_probability
from ldp.words import (
    WordOpError,
    count_measure,
    coupling_constant,
    couple,
    decouple,
    decoupling_constant,
    gamma_mass,
    reorder,
    signed_gap_norm_of_words,
    slice_word,
    slicing_fiber_constant,
    stitch,
    stitching_constant,
)

ENUMERATION_CAP = 1_000_000


@dataclass
class CheckOutcome:
    cases: int
    violations: int
    worst_margin: float
    capped: bool = False

    @property
    def ok(self):
        return self.violations == 0 and not self.capped


def positive_kernel_words(chain, length, within=None):
    states = range(chain.n_states) if within is None else sorted(within)
    allowed = set(states)
    out = []
    stack = [(x,) for x in states]
    while stack:
        w = stack.pop()
        if len(w) == length:
            out.append(w)
            continue
        for y in chain.row(w[-1])[0]:
            if y in allowed:
                stack.append(w + (y,))
    return sorted(out)


def check_slicing_geographic(chain, cfg, n):
    """Per-class and global count bounds for the slicing map on S^(n+1)."""
    d = cfg.decomposition
    cases = violations = 0
    worst = math.inf
    for u in positive_kernel_words(chain, n + 1):
        sliced = slice_word(chain, cfg, u)
        pairs = [(u[i], u[i + 1]) for i in range(n)]
        for pos, j in enumerate(cfg.j0):
            cls = d.classes[j]
            ks = cfg.k_sets[pos]
            in_class = sum(1 for e in pairs if e[0] in cls and e[1] in cls)
            in_window = sum(1 for e in pairs if e[0] in ks and e[1] in ks)
            piece_edges = max(len(sliced.pieces[pos]) - 1, 0)
            lhs = in_class - piece_edges
            rhs = in_class - in_window
            cases += 1
            worst = min(worst, rhs - lhs)
            if lhs > rhs:
                violations += 1
        total_piece = sum(max(len(w) - 1, 0) for w in sliced.pieces)
        lhs = n - total_piece
        rhs = n - gamma_mass(cfg, u)
        cases += 1
        worst = min(worst, rhs - lhs)
        if lhs > rhs:
            violations += 1
    return CheckOutcome(cases, violations, worst)


def check_sliced_pieces_disjoint(chain, cfg, n):
    """Nonempty pieces occupy pairwise disjoint index ranges of the source."""
    cases = violations = 0
    for u in positive_kernel_words(chain, n + 1):
        sliced = slice_word(chain, cfg, u)
        spans = [s for s in sliced.spans if s is not None]
        spans.sort()
        cases += 1
        if any(a[1] > b[0] for a, b in zip(spans, spans[1:])):
            violations += 1
    return CheckOutcome(cases, violations, 0.0)


def check_slicing_probability(chain, cfg, n):
    """Path mass of every slicing fiber against (n+1)^(r+1) prod p(piece)."""
    r = len(cfg.j0)
    c_sl = slicing_fiber_constant(n, r)
    fibers = {}
    for u in positive_kernel_words(chain, n + 1):
        key = slice_word(chain, cfg, u).pieces
        fibers.setdefault(key, 0.0)
        fibers[key] += word_probability(chain, u, with_initial=True)
    cases = violations = 0
    worst = math.inf
    for pieces, mass in fibers.items():
        bound = c_sl * math.prod(word_probability(chain, w) for w in pieces if w)
        cases += 1
        worst = min(worst, bound - mass)
        if mass > bound * (1 + 1e-12):
            violations += 1
    return CheckOutcome(cases, violations, worst)


def _class_pieces(chain, cfg, max_len):
    """Positive words of each length whose endpoints sit in one window class."""
    per_pos = []
    for pos, j in enumerate(cfg.j0):
        cls = cfg.decomposition.classes[j]
        ks = cfg.k_sets[pos]
        words = []
        for ln in range(1, max_len + 1):
            for w in positive_kernel_words(chain, ln, within=cls):
                if w[0] in ks and w[-1] in ks:
                    words.append(w)
        per_pos.append(words)
    return per_pos


def stitchable_lists(chain, cfg, k_star, l_star, t):
    """All stitchable lists with <= k_star entries, total length in [t+1, l_star]."""
    per_pos = _class_pieces(chain, cfg, l_star)
    lists = []

    def extend(items, total, min_pos):
        if items and total >= t + 1:
            lists.append(tuple(items))
        if len(items) == k_star:
            return
        for pos in range(min_pos, len(cfg.j0)):
            for w in per_pos[pos]:
                if total + len(w) <= l_star:
                    items.append((pos, w))
                    extend(items, total + len(w), pos)
                    items.pop()

    extend([], 0, 0)
    return lists


def check_stitching_geographic(chain, cfg, k_star, l_star, t):
    """Count-gap bound for the stitching map over all stitchable lists."""
    tau = cfg.table.tau
    cases = violations = 0
    worst = math.inf
    for items in stitchable_lists(chain, cfg, k_star, l_star, t):
        word = stitch(chain, cfg, items, t)
        lhs = signed_gap_norm_of_words(word, [w for _, w in items])
        total = sum(len(w) for _, w in items)
        rhs = total - (t + 1) + 2 * len(items) * tau
        cases += 1
        worst = min(worst, rhs - lhs)
        if lhs > rhs:
            violations += 1
    return CheckOutcome(cases, violations, worst)


def check_stitching_probability(chain, cfg, k_star, l_star, t):
    """Path law of each stitched word against the constant-weighted fiber sum."""
    table = cfg.table
    c_st = stitching_constant(chain.beta[table.z0], table.eta, table.tau, k_star, l_star)
    fibers = {}
    for items in stitchable_lists(chain, cfg, k_star, l_star, t):
        w = stitch(chain, cfg, items, t)
        fibers.setdefault(w, 0.0)
        fibers[w] += math.prod(word_probability(chain, piece) for _, piece in items)
    cases = violations = 0
    worst = math.inf
    for w, fiber_mass in fibers.items():
        lhs = c_st * fiber_mass
        rhs = word_probability(chain, w, with_initial=True)
        cases += 1
        worst = min(worst, rhs - lhs)
        if lhs > rhs * (1 + 1e-12):
            violations += 1
    return CheckOutcome(cases, violations, worst)


def check_coupling(chain, cfg, n, n_words, t, window=None):
    """Geographic and path-law bounds of the coupling map, fiber by fiber.

    Enumerates every tuple of path-positive words of length n+1 (within the
    window when given); the geographic bound is asserted on tuples meeting
    the window-mass hypothesis, the path-law bound on every fiber.
    """
    r = len(cfg.j0)
    tau = cfg.table.tau
    c_nt = coupling_constant(chain.beta[cfg.table.z0], cfg.table.eta, tau, n, n_words, r)
    words = [
        w
        for w in positive_kernel_words(chain, n + 1, within=window)
        if word_probability(chain, w, with_initial=True) > 0.0
    ]
    if len(words) ** n_words > ENUMERATION_CAP:
        return CheckOutcome(0, 0, math.inf, capped=True), CheckOutcome(0, 0, math.inf, capped=True)
    geo_cases = geo_viol = 0
    geo_worst = math.inf
    fibers = {}
    for tup in itertools.product(words, repeat=n_words):
        try:
            w = couple(chain, cfg, list(tup), t)
        except WordOpError:
            continue
        mass_ok = sum(gamma_mass(cfg, u) for u in tup) >= t + 1
        if mass_ok:
            lhs = signed_gap_norm_of_words(w, list(tup))
            rhs = 2 * (n_words * n - (t + 1)) + 2 * n_words * (r * tau + 1)
            geo_cases += 1
            geo_worst = min(geo_worst, rhs - lhs)
            if lhs > rhs:
                geo_viol += 1
        fibers.setdefault(w, 0.0)
        fibers[w] += math.prod(word_probability(chain, u, with_initial=True) for u in tup)
    prob_cases = prob_viol = 0
    prob_worst = math.inf
    for w, fiber_mass in fibers.items():
        lhs = c_nt * fiber_mass
        rhs = word_probability(chain, w, with_initial=True)
        prob_cases += 1
        prob_worst = min(prob_worst, rhs - lhs)
        if lhs > rhs * (1 + 1e-12):
            prob_viol += 1
    return (
        CheckOutcome(geo_cases, geo_viol, geo_worst),
        CheckOutcome(prob_cases, prob_viol, prob_worst),
    )


def check_decoupling(chain, cfg, j_one, j_two, n, t1, t2):
    """Geographic and path-law bounds of the decoupling map."""
    d = cfg.decomposition
    r = len(cfg.j0)
    tau = cfg.table.tau
    c_n = decoupling_constant(chain.beta[cfg.table.z0], cfg.table.eta, tau, n, r)
    group_states = {
        1: {x for j in j_one for x in d.classes[j]},
        2: {x for j in j_two for x in d.classes[j]},
    }
    geo_cases = geo_viol = 0
    geo_worst = math.inf
    fibers = {}
    for u in positive_kernel_words(chain, n + 1):
        if word_probability(chain, u, with_initial=True) == 0.0:
            continue
        try:
            w1, w2 = decouple(chain, cfg, u, j_one, j_two, t1, t2)
        except WordOpError:
            continue
        pairs = [(u[i], u[i + 1]) for i in range(n)]
        for idx, w in ((1, w1), (2, w2)):
            restricted = [e for e in pairs if e[0] in group_states[idx] and e[1] in group_states[idx]]
            # count-gap against the class-restricted counts of u
            diff = {}
            for i in range(len(w) - 1):
                e = (w[i], w[i + 1])
                diff[e] = diff.get(e, 0.0) + 1.0
            for e in restricted:
                diff[e] = diff.get(e, 0.0) - 1.0
            pos = sum(v for v in diff.values() if v > 0)
            neg = -sum(v for v in diff.values() if v < 0)
            lhs = max(pos, neg)
            rhs = 2 * (n - t1 - t2) + 2 * r * tau
            geo_cases += 1
            geo_worst = min(geo_worst, rhs - lhs)
            if lhs > rhs:
                geo_viol += 1
        fibers.setdefault((w1, w2), 0.0)
        fibers[(w1, w2)] += word_probability(chain, u, with_initial=True)
    prob_cases = prob_viol = 0
    prob_worst = math.inf
    for (w1, w2), fiber_mass in fibers.items():
        lhs = c_n * fiber_mass
        rhs = word_probability(chain, w1, with_initial=True) * word_probability(
            chain, w2, with_initial=True
        )
        prob_cases += 1
        prob_worst = min(prob_worst, rhs - lhs)
        if lhs > rhs * (1 + 1e-12):
            prob_viol += 1
    return (
        CheckOutcome(geo_cases, geo_viol, geo_worst),
        CheckOutcome(prob_cases, prob_viol, prob_worst),
    )
