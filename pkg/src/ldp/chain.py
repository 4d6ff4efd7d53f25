"""Finite Markov chains: parsing, validation, class structure, word probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

STOCHASTIC_TOL = 1e-9

# words longer than this are multiplied in log space to dodge underflow
LOG_SPACE_WORD_LEN = 64


class ChainError(ValueError):
    """Malformed or inconsistent chain specification."""


@dataclass(frozen=True)
class StateId:
    id: int
    label: str


class ChainSpec:
    """Finite state set with a sparse stochastic kernel and an initial law.

    States are dense integer ids 0..n-1 with unique nonempty string labels.
    Zero entries are never stored: absence means probability zero.
    Immutable after construction; safe for concurrent reads.
    """

    __slots__ = ("labels", "kernel", "beta", "index", "_rows")

    def __init__(self, labels, kernel, beta, renormalize=False):
        labels = tuple(labels)
        if not labels:
            raise ChainError("chain has no states")
        index = {}
        for i, lab in enumerate(labels):
            if not isinstance(lab, str) or not lab:
                raise ChainError(f"state label {lab!r} is not a nonempty string")
            if lab in index:
                raise ChainError(f"duplicate state label {lab!r}")
            index[lab] = i
        n = len(labels)

        rows: dict[int, dict[int, float]] = {}
        for (x, y), p in kernel.items():
            if not (0 <= x < n and 0 <= y < n):
                raise ChainError(f"kernel entry ({x},{y}) out of range")
            if not (p > 0.0):
                raise ChainError(f"kernel entry ({labels[x]},{labels[y]}) = {p} is not positive")
            if p > 1.0 + STOCHASTIC_TOL:
                raise ChainError(f"kernel entry ({labels[x]},{labels[y]}) = {p} exceeds 1")
            rows.setdefault(x, {})[y] = float(p)

        clean_kernel = {}
        clean_rows = {}
        for x in range(n):
            row = rows.get(x)
            if not row:
                raise ChainError(f"row not stochastic: state {labels[x]!r} has no outgoing mass")
            s = math.fsum(row.values())
            if abs(s - 1.0) > STOCHASTIC_TOL:
                if renormalize:
                    row = {y: p / s for y, p in row.items()}
                else:
                    raise ChainError(
                        f"row not stochastic: state {labels[x]!r} sums to {s!r}"
                    )
            succs = tuple(sorted(row))
            clean_rows[x] = (succs, tuple(row[y] for y in succs))
            for y in succs:
                clean_kernel[(x, y)] = row[y]

        beta_clean = {}
        for x, p in beta.items():
            if not (0 <= x < n):
                raise ChainError(f"initial mass on unknown state id {x}")
            if not (p > 0.0):
                raise ChainError(f"initial mass on {labels[x]!r} is not positive")
            beta_clean[x] = float(p)
        s = math.fsum(beta_clean.values())
        if abs(s - 1.0) > STOCHASTIC_TOL:
            if renormalize:
                beta_clean = {x: p / s for x, p in beta_clean.items()}
            else:
                raise ChainError(f"initial distribution sums to {s!r}")

        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "kernel", clean_kernel)
        object.__setattr__(self, "beta", beta_clean)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "_rows", clean_rows)

    def __setattr__(self, name, value):
        raise AttributeError("ChainSpec is immutable")

    @property
    def n_states(self):
        return len(self.labels)

    def states(self):
        return [StateId(i, lab) for i, lab in enumerate(self.labels)]

    def prob(self, x, y):
        return self.kernel.get((x, y), 0.0)

    def row(self, x):
        """Successors of x as (ids tuple, probs tuple), ids ascending."""
        return self._rows[x]

    def id_of(self, label):
        try:
            return self.index[label]
        except KeyError:
            raise ChainError(f"unknown state label {label!r}") from None

    def ids_of(self, labels):
        return tuple(self.id_of(lab) for lab in labels)

    def labels_of(self, ids):
        return tuple(self.labels[i] for i in ids)


def parse_chain(text, renormalize=False):
    """Parse the line-oriented chain document into a validated ChainSpec.

    Grammar (one directive per line, '#' starts a comment):
        state <label>
        init <label> <prob>
        trans <from-label> <to-label> <prob>
    All `state` lines must precede uses of their labels; apart from that the
    line order is irrelevant.
    """
    labels = []
    seen = set()
    kernel = {}
    beta = {}
    index = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "state":
                if len(parts) != 2:
                    raise ChainError("expected: state <label>")
                lab = parts[1]
                if lab in seen:
                    raise ChainError(f"duplicate state label {lab!r}")
                seen.add(lab)
                index[lab] = len(labels)
                labels.append(lab)
            elif kind == "init":
                if len(parts) != 3:
                    raise ChainError("expected: init <label> <prob>")
                x = _lookup(index, parts[1])
                if x in beta:
                    raise ChainError(f"duplicate init entry for {parts[1]!r}")
                beta[x] = _parse_prob(parts[2])
            elif kind == "trans":
                if len(parts) != 4:
                    raise ChainError("expected: trans <from> <to> <prob>")
                x = _lookup(index, parts[1])
                y = _lookup(index, parts[2])
                if (x, y) in kernel:
                    raise ChainError(f"duplicate trans entry {parts[1]!r} -> {parts[2]!r}")
                kernel[(x, y)] = _parse_prob(parts[3])
            else:
                raise ChainError(f"unknown directive {kind!r}")
        except ChainError as exc:
            raise ChainError(f"line {lineno}: {exc}") from None
    try:
        return ChainSpec(labels, kernel, beta, renormalize=renormalize)
    except ChainError as exc:
        raise ChainError(str(exc)) from None


def _lookup(index, label):
    if label not in index:
        raise ChainError(f"unknown state label {label!r}")
    return index[label]


def _parse_prob(tok):
    try:
        p = float(tok)
    except ValueError:
        raise ChainError(f"bad probability literal {tok!r}") from None
    if not (0.0 < p <= 1.0 + STOCHASTIC_TOL):
        raise ChainError(f"probability {tok} outside (0,1]")
    return p


def word_probability(chain, u, with_initial=False):
    """Kernel weight p(u) of a word; 1 for words of length <= 1.

    With with_initial=True, returns the path law beta(u_1)p(u) instead.
    Absent kernel entries contribute a factor 0.  Words longer than
    LOG_SPACE_WORD_LEN letters are accumulated in log space.
    """
    m = len(u)
    head = 1.0
    if with_initial:
        if m == 0:
            return 1.0
        head = chain.beta.get(u[0], 0.0)
        if head == 0.0:
            return 0.0
    if m <= 1:
        return head
    if m <= LOG_SPACE_WORD_LEN:
        prod = head
        for i in range(m - 1):
            p = chain.kernel.get((u[i], u[i + 1]), 0.0)
            if p == 0.0:
                return 0.0
            prod *= p
        return prod
    acc = math.log(head) if head != 1.0 else 0.0
    for i in range(m - 1):
        p = chain.kernel.get((u[i], u[i + 1]), 0.0)
        if p == 0.0:
            return 0.0
        acc += math.log(p)
    return math.exp(acc)


def log_word_probability(chain, u, with_initial=False):
    """log of word_probability, -inf when the word has a forbidden step."""
    m = len(u)
    acc = 0.0
    if with_initial and m >= 1:
        head = chain.beta.get(u[0], 0.0)
        if head == 0.0:
            return -math.inf
        acc = math.log(head)
    for i in range(m - 1):
        p = chain.kernel.get((u[i], u[i + 1]), 0.0)
        if p == 0.0:
            return -math.inf
        acc += math.log(p)
    return acc


@dataclass(frozen=True)
class ClassDecomposition:
    """Irreducible classes, transient set, class order, and reachability from beta.

    Classes are indexed by ascending minimal state id.  `order` holds the
    strict pairs (j, j') with j != j' and C_j leading to C_{j'}; a class
    always reaches itself (it contains a cycle).
    """

    classes: tuple
    transient: frozenset
    order: frozenset
    beta_reaches: frozenset
    class_of: dict

    def reaches(self, j1, j2):
        if not (0 <= j1 < len(self.classes) and 0 <= j2 < len(self.classes)):
            raise ChainError(f"class index out of range: ({j1},{j2})")
        return j1 == j2 or (j1, j2) in self.order

    def comparable(self, j1, j2):
        return self.reaches(j1, j2) or self.reaches(j2, j1)


def reaches(decomposition, j1, j2):
    return decomposition.reaches(j1, j2)


def _scc(n, row_of):
    """Iterative Tarjan; returns list of components (each a list of states)."""
    indices = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack = []
    comps = []
    counter = 0
    for root in range(n):
        if indices[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                indices[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            succs = row_of(v)
            advanced = False
            while pi < len(succs):
                w = succs[pi]
                pi += 1
                if indices[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], indices[w])
            if advanced:
                continue
            work.pop()
            if low[v] == indices[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
            if work:
                u, _ = work[-1]
                low[u] = min(low[u], low[v])
    return comps


def decompose_classes(chain):
    """Split the state set into irreducible classes and the transient set.

    A strongly connected component is a class iff it carries a cycle: any
    component of size >= 2, or a singleton with a self-loop.  Singletons
    without a self-loop are transient (no positive path returns to them).
    """
    n = chain.n_states

    def row_of(x):
        return chain.row(x)[0]

    comps = _scc(n, row_of)
    classes = []
    transient = []
    for comp in comps:
        if len(comp) > 1 or chain.prob(comp[0], comp[0]) > 0.0:
            classes.append(frozenset(comp))
        else:
            transient.append(comp[0])
    classes.sort(key=min)
    class_of = {}
    for j, cls in enumerate(classes):
        for x in cls:
            class_of[x] = j

    # condensation reachability: one forward sweep per component
    comp_id = {}
    all_comps = [set(c) for c in classes] + [{t} for t in transient]
    for ci, comp in enumerate(all_comps):
        for x in comp:
            comp_id[x] = ci
    succ_comps = [set() for _ in all_comps]
    for (x, y) in chain.kernel:
        a, b = comp_id[x], comp_id[y]
        if a != b:
            succ_comps[a].add(b)
    reach = [None] * len(all_comps)

    def comp_reach(ci):
        if reach[ci] is not None:
            return reach[ci]
        seen = set()
        stack = [ci]
        while stack:
            c = stack.pop()
            for d in succ_comps[c]:
                if d not in seen:
                    seen.add(d)
                    if reach[d] is not None:
                        seen |= reach[d]
                    else:
                        stack.append(d)
        reach[ci] = seen
        return seen

    n_classes = len(classes)
    order = set()
    for j in range(n_classes):
        for ci in comp_reach(j):
            if ci < n_classes and ci != j:
                order.add((j, ci))

    beta_hit = set()
    for x in chain.beta:
        ci = comp_id[x]
        if ci < n_classes:
            beta_hit.add(ci)
        for d in comp_reach(ci):
            if d < n_classes:
                beta_hit.add(d)

    return ClassDecomposition(
        classes=tuple(classes),
        transient=frozenset(transient),
        order=frozenset(order),
        beta_reaches=frozenset(beta_hit),
        class_of=class_of,
    )
