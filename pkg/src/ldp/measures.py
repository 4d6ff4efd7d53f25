"""Sparse measures on k-tuples of states: TV metric, marginals, balance, admissibility."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .chain import word_probability

PRUNE_EPS = 1e-15
MEASURE_EQ_TOL = 1e-12
PROB_TOL = 1e-9


class MeasureError(ValueError):
    """Invalid measure or invalid measure operation."""


class SparseMeasure:
    """Nonnegative mass table on k-tuples of state ids.

    Entries below PRUNE_EPS are dropped at construction so that support is
    an exact notion (admissibility is support-driven).  Instances are
    immutable; combiners return new values.  Iteration order over entries is
    lexicographic via sorted_support() when determinism is needed.
    """

    __slots__ = ("k", "entries", "total")

    def __init__(self, k, entries, prune=True):
        if k < 1:
            raise MeasureError(f"arity must be >= 1, got {k}")
        table = {}
        for u, m in entries.items():
            if len(u) != k:
                raise MeasureError(f"tuple {u} does not match arity {k}")
            if m < 0:
                raise MeasureError(f"negative mass {m} at {u}")
            if prune and m < PRUNE_EPS:
                continue
            if m > 0.0:
                table[tuple(u)] = float(m)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "entries", table)
        object.__setattr__(self, "total", math.fsum(table.values()))

    def __setattr__(self, name, value):
        raise AttributeError("SparseMeasure is immutable")

    def mass(self, u):
        return self.entries.get(tuple(u), 0.0)

    def support(self):
        return self.entries.keys()

    def sorted_support(self):
        return sorted(self.entries)

    def is_probability(self, tol=PROB_TOL):
        return abs(self.total - 1.0) <= tol

    def require_probability(self):
        if not self.is_probability():
            raise MeasureError(f"not a probability measure: total = {self.total!r}")

    def scaled(self, c):
        if c < 0:
            raise MeasureError("scaling factor must be nonnegative")
        return SparseMeasure(self.k, {u: c * m for u, m in self.entries.items()})

    def plus(self, other):
        if other.k != self.k:
            raise MeasureError(f"arity mismatch: {self.k} vs {other.k}")
        out = dict(self.entries)
        for u, m in other.entries.items():
            out[u] = out.get(u, 0.0) + m
        return SparseMeasure(self.k, out)

    def restricted(self, tuples):
        keep = {u: m for u, m in self.entries.items() if u in tuples}
        return SparseMeasure(self.k, keep)

    def restricted_to_states(self, states):
        keep = {u: m for u, m in self.entries.items() if all(x in states for x in u)}
        return SparseMeasure(self.k, keep)

    def normalized(self):
        if self.total <= 0:
            raise MeasureError("cannot normalize the null measure")
        return self.scaled(1.0 / self.total)

    def class_mass(self, states):
        return math.fsum(m for u, m in self.entries.items() if all(x in states for x in u))

    def __repr__(self):
        return f"SparseMeasure(k={self.k}, n_entries={len(self.entries)}, total={self.total:.6g})"


def dirac(k, u):
    return SparseMeasure(k, {tuple(u): 1.0})


def mixture(pairs):
    """Convex/conic combination sum(c_i * mu_i) of same-arity measures."""
    pairs = list(pairs)
    if not pairs:
        raise MeasureError("empty mixture")
    k = pairs[0][1].k
    out = {}
    for c, mu in pairs:
        if mu.k != k:
            raise MeasureError("arity mismatch in mixture")
        for u, m in mu.entries.items():
            out[u] = out.get(u, 0.0) + c * m
    return SparseMeasure(k, out)


def tv_distance(mu, nu):
    """Half the l1 distance over the union of supports."""
    if mu.k != nu.k:
        raise MeasureError(f"arity mismatch: {mu.k} vs {nu.k}")
    keys = set(mu.entries) | set(nu.entries)
    return 0.5 * math.fsum(abs(mu.mass(u) - nu.mass(u)) for u in keys)


def signed_gap_norm(mu, nu):
    """max(positive part, negative part) of mu - nu.

    This is the total-variation norm sup_A |mu(A) - nu(A)| used by the
    trajectory-surgery inequalities; it equals tv_distance for differences
    of equal-mass measures and the plain total mass for nonnegative ones.
    """
    if mu.k != nu.k:
        raise MeasureError(f"arity mismatch: {mu.k} vs {nu.k}")
    pos = 0.0
    neg = 0.0
    for u in set(mu.entries) | set(nu.entries):
        d = mu.mass(u) - nu.mass(u)
        if d > 0:
            pos += d
        else:
            neg -= d
    return max(pos, neg)


def measures_equal(mu, nu, tol=MEASURE_EQ_TOL):
    return tv_distance(mu, nu) <= tol


def marginal(mu, k_prime):
    """Projection onto the first k' coordinates; preserves total mass."""
    if not (1 <= k_prime <= mu.k):
        raise MeasureError(f"invalid marginal arity {k_prime} for arity {mu.k}")
    if k_prime == mu.k:
        return mu
    out = {}
    for u, m in mu.entries.items():
        v = u[:k_prime]
        out[v] = out.get(v, 0.0) + m
    return SparseMeasure(k_prime, out, prune=False)


def last_marginal(mu, k_prime):
    """Projection onto the last k' coordinates."""
    if not (1 <= k_prime <= mu.k):
        raise MeasureError(f"invalid marginal arity {k_prime} for arity {mu.k}")
    if k_prime == mu.k:
        return mu
    out = {}
    for u, m in mu.entries.items():
        v = u[-k_prime:]
        out[v] = out.get(v, 0.0) + m
    return SparseMeasure(k_prime, out, prune=False)


def is_balanced(mu, tol=MEASURE_EQ_TOL):
    """Whether the first-(k-1) and last-(k-1) marginals agree entrywise."""
    if mu.k < 2:
        raise MeasureError("balance needs arity >= 2")
    first = marginal(mu, mu.k - 1)
    last = last_marginal(mu, mu.k - 1)
    for u in set(first.entries) | set(last.entries):
        if abs(first.mass(u) - last.mass(u)) > tol:
            return False
    return True


def in_allowed_support(chain, mu):
    """True iff every support tuple is a positive-kernel word."""
    if mu.k < 2:
        raise MeasureError("allowed-support check needs arity >= 2")
    return all(word_probability(chain, u) > 0.0 for u in mu.support())


class AdmissibilityStatus(enum.Enum):
    NOT_PRE_ADMISSIBLE = "NotPreAdmissible"
    PRE_ADMISSIBLE_ONLY = "PreAdmissibleOnly"
    ADMISSIBLE = "Admissible"


@dataclass(frozen=True)
class AdmissibilityVerdict:
    status: AdmissibilityStatus
    j_mu: tuple | None
    witness: tuple | None

    @property
    def admissible(self):
        return self.status is AdmissibilityStatus.ADMISSIBLE


def classify_admissible(decomposition, mu):
    """Classify a measure against the class structure.

    NotPreAdmissible when some support tuple fails to sit inside a single
    class power C_j^k (witness: that tuple).  Otherwise J_mu collects the
    classes carrying mass; the verdict is Admissible iff the class order is
    total on J_mu and every class in J_mu is reachable from the initial
    distribution (witness: the offending pair or class).
    """
    class_of = decomposition.class_of
    hit = set()
    for u in mu.sorted_support():
        j = class_of.get(u[0])
        if j is None or any(class_of.get(x) != j for x in u[1:]):
            return AdmissibilityVerdict(
                AdmissibilityStatus.NOT_PRE_ADMISSIBLE, None, ("tuple_outside_classes", u)
            )
        hit.add(j)
    j_mu = tuple(sorted(hit))
    for a in j_mu:
        for b in j_mu:
            if a < b and not decomposition.comparable(a, b):
                return AdmissibilityVerdict(
                    AdmissibilityStatus.PRE_ADMISSIBLE_ONLY, j_mu, ("incomparable_classes", a, b)
                )
    for j in j_mu:
        if j not in decomposition.beta_reaches:
            return AdmissibilityVerdict(
                AdmissibilityStatus.PRE_ADMISSIBLE_ONLY, j_mu, ("class_unreachable_from_init", j)
            )
    return AdmissibilityVerdict(AdmissibilityStatus.ADMISSIBLE, j_mu, None)


def parse_measure(text, chain):
    """Parse a measure document: lines `mass <label_1> ... <label_k> <value>`.

    One arity per file; '#' starts a comment.
    """
    entries = {}
    k = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "mass" or len(parts) < 3:
            raise MeasureError(f"line {lineno}: expected `mass <label...> <value>`")
        labels = parts[1:-1]
        if k is None:
            k = len(labels)
        elif len(labels) != k:
            raise MeasureError(f"line {lineno}: arity {len(labels)} differs from {k}")
        try:
            val = float(parts[-1])
        except ValueError:
            raise MeasureError(f"line {lineno}: bad mass literal {parts[-1]!r}") from None
        if val < 0:
            raise MeasureError(f"line {lineno}: negative mass")
        u = chain.ids_of(labels)
        if u in entries:
            raise MeasureError(f"line {lineno}: duplicate tuple {labels}")
        entries[u] = val
    if k is None:
        raise MeasureError("empty measure document")
    return SparseMeasure(k, entries)
