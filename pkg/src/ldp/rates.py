"""Rate-function formulas and their numerical cross-checks.

Covers relative entropy, the kernel relative-entropy rate at every arity,
the scaled cumulant generating function (full and window-truncated) with its
numeric convex conjugate, the Donsker-Varadhan entropy as a certified lower
bound, the level-1 contraction solved as a convex transportation program,
the process-level marginal entropy sequence, and the overlapping-tuple lift
that reduces arity-k rates to pair rates of a lifted chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainError, ChainSpec, word_probability
from .measures import (
    AdmissibilityVerdict,
    MeasureError,
    SparseMeasure,
    classify_admissible,
    is_balanced,
    last_marginal,
    marginal,
)

INF = math.inf

PERRON_REL_TOL = 1e-12
PERRON_MAX_ITER = 100_000
ASCENT_IMPROVE_TOL = 1e-10
ASCENT_PATIENCE = 50
ASCENT_MAX_ITER = 20_000
ASCENT_DIVERGE_AT = 1e4
CONTRACTION_OBJ_TOL = 1e-8
CONTRACTION_MAX_ITER = 100_000
STATIONARITY_TOL = 1e-10


class RateError(ValueError):
    """Invalid input to a rate-function computation."""


def relative_entropy(mu, nu):
    """KL divergence sum mu log(mu/nu) with the 0 log 0 = 0 convention."""
    if mu.k != nu.k:
        raise MeasureError(f"arity mismatch: {mu.k} vs {nu.k}")
    mu.require_probability()
    nu.require_probability()
    acc = 0.0
    for u, m in mu.entries.items():
        d = nu.mass(u)
        if d == 0.0:
            return INF
        acc += m * math.log(m / d)
    return max(acc, 0.0)


def relative_entropy_rate(chain, mu):
    """Relative entropy of mu against (its own front marginal) x kernel.

    For arity k >= 2 this is sum_u mu^{(k-1)}(u) H(q(u,.)|p(u_last,.)) with
    q the conditional last-letter kernel of mu.  Infinite exactly when the
    support of mu steps outside the allowed transitions.  The measure must
    be balanced; unbalanced input is a caller bug, not an infinite value.
    """
    if mu.k < 2:
        raise RateError("the pair rate needs arity >= 2")
    mu.require_probability()
    if not is_balanced(mu):
        raise RateError("measure is not balanced; gate before calling")
    front = marginal(mu, mu.k - 1)
    acc = 0.0
    for u, m in mu.entries.items():
        p = chain.prob(u[-2], u[-1])
        if p == 0.0:
            return INF
        q = m / front.mass(u[:-1])
        acc += m * math.log(q / p)
    return max(acc, 0.0)


# ---------------------------------------------------------------------------
# Perron machinery


def _sub_classes(chain, states):
    """Irreducible classes of the kernel digraph induced on a state subset,
    plus the set of classes reachable there from the initial distribution."""
    states = set(states)
    order = sorted(states)
    pos = {x: i for i, x in enumerate(order)}

    def row_of_local(i):
        x = order[i]
        return tuple(pos[y] for y in chain.row(x)[0] if y in states)

    from .chain import _scc

    comps = _scc(len(order), row_of_local)
    classes = []
    for comp in comps:
        comp_states = [order[i] for i in comp]
        if len(comp) > 1 or chain.prob(comp_states[0], comp_states[0]) > 0.0:
            classes.append(frozenset(comp_states))
    classes.sort(key=min)

    start = [x for x in chain.beta if x in states]
    seen = set(start)
    stack = list(start)
    while stack:
        v = stack.pop()
        for s in chain.row(v)[0]:
            if s in states and s not in seen:
                seen.add(s)
                stack.append(s)
    reachable = frozenset(
        j for j, cls in enumerate(classes) if cls & seen
    )
    return classes, reachable


def _perron_matrix(mat, warm=None):
    """Perron root and positive right/left vectors of an irreducible matrix.

    Power iteration runs on I + A, which is primitive for irreducible A
    whatever its period, so the growth quotients converge; two consecutive
    quotients are averaged and the exact shift of 1 is subtracted at the
    end.  warm optionally supplies (right, left) starting vectors.
    """
    n = mat.shape[0]
    shifted = mat + np.eye(n)

    def iterate(m, start):
        v = np.full(n, 1.0 / n) if start is None else start
        prev_q = None
        q = 1.0
        for _ in range(PERRON_MAX_ITER):
            w = m @ v
            q = w.sum()
            if prev_q is not None:
                q = 0.5 * (q + prev_q)
            resid = np.abs(w - q * v).sum()
            v = w / w.sum()
            if resid <= PERRON_REL_TOL * q:
                break
            prev_q = w.sum()
        return q - 1.0, v

    w_right = w_left = None
    if warm is not None:
        w_right, w_left = warm
    root, right = iterate(shifted, w_right)
    _, left = iterate(shifted.T, w_left)
    return root, right, left


def _perron(block, states):
    """Dict-keyed wrapper of _perron_matrix for a class block."""
    order = sorted(states)
    n = len(order)
    pos = {x: i for i, x in enumerate(order)}
    mat = np.zeros((n, n))
    for (x, y), w in block.items():
        mat[pos[x], pos[y]] = w
    root, right, left = _perron_matrix(mat)
    return root, {x: right[pos[x]] for x in order}, {x: left[pos[x]] for x in order}


PERRON_DROP = 1e-16


def _dominant_subblock(mat, warm, key_prefix):
    """Root and Perron vectors of the dominating irreducible part of mat.

    Tilted matrices inside the conjugate ascent become numerically reducible
    (edges suppressed to e^-40 and below), which kills the spectral gap of a
    monolithic power iteration.  Entries below PERRON_DROP times the largest
    one perturb the root by far less than the iteration tolerance, so they
    are treated as structural zeros, the matrix is decomposed into effective
    irreducible sub-blocks, and each is power-iterated with warm-started
    vectors.  Returns (root, states, right, left), or None when even the
    full matrix carries no cycle.
    """
    from .chain import _scc

    n = mat.shape[0]
    top = mat.max()
    if top <= 0.0:
        return None
    adj = mat > top * PERRON_DROP

    def row_of(i):
        return np.flatnonzero(adj[i]).tolist()

    best = None
    for comp in _scc(n, row_of):
        comp = sorted(comp)
        if len(comp) == 1 and not adj[comp[0], comp[0]]:
            continue
        sub = mat[np.ix_(comp, comp)]
        key = (key_prefix, tuple(comp))
        root, right, left = _perron_matrix(sub, warm.get(key))
        warm[key] = (right, left)
        if best is None or root > best[0]:
            best = (root, comp, right, left)
    if best is None:
        # every cycle runs through suppressed entries; fall back to the
        # full matrix (slow but rare)
        root, right, left = _perron_matrix(mat)
        return root, list(range(n)), right, left
    return best


def _tilted_weight(chain, potential, x, y):
    p = chain.prob(x, y)
    if p == 0.0:
        return 0.0
    if potential.k == 1:
        return p * math.exp(potential.value((x,)))
    return p * math.exp(potential.value((x, y)))


@dataclass(frozen=True)
class TiltPotential:
    """Bounded tilt on states (arity 1) or transitions (arity 2+); 0 off-table."""

    k: int
    values: dict

    def __post_init__(self):
        for u, v in self.values.items():
            if len(u) != self.k:
                raise RateError(f"potential tuple {u} does not match arity {self.k}")
            if not math.isfinite(v):
                raise RateError(f"potential value at {u} is not finite")

    def value(self, u):
        return self.values.get(tuple(u), 0.0)

    @property
    def bound(self):
        return max((abs(v) for v in self.values.values()), default=0.0)


def parse_potential(text, chain):
    """Parse lines `v <label_1> ... <label_k> <value>` into a TiltPotential."""
    values = {}
    k = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "v" or len(parts) < 3:
            raise RateError(f"line {lineno}: expected `v <label...> <value>`")
        labels = parts[1:-1]
        if k is None:
            k = len(labels)
        elif len(labels) != k:
            raise RateError(f"line {lineno}: arity {len(labels)} differs from {k}")
        u = chain.ids_of(labels)
        if u in values:
            raise RateError(f"line {lineno}: duplicate tuple")
        values[u] = float(parts[-1])
    if k is None:
        raise RateError("empty potential document")
    return TiltPotential(k, values)


def scgf(chain, potential):
    """Exponential growth rate of the tilted evolution started from beta.

    Equals the maximum, over irreducible classes reachable from the support
    of the initial distribution, of the log Perron root of the tilted kernel
    restricted to the class; transient states contribute no exponential
    factor.  Level 1 tilts rows by exp(V(x)); level 2 tilts edges by
    exp(V(x,y)) through the pair-chain reduction.
    """
    if potential.k not in (1, 2):
        raise RateError("the generating function takes level-1 or level-2 tilts")
    value = scgf_truncated(chain, potential, range(chain.n_states))
    if value == -INF:
        raise RateError("no class is reachable from the initial distribution")
    return value


def scgf_truncated(chain, potential, window):
    """Growth rate with trajectories confined to a finite state window.

    -inf when the window contains no class reachable from beta within it.
    """
    states = set(window)
    classes, reachable = _sub_classes(chain, states)
    best = -INF
    for j in reachable:
        cls = classes[j]
        block = {
            (x, y): _tilted_weight(chain, potential, x, y)
            for x in cls
            for y in chain.row(x)[0]
            if y in cls
        }
        root, _, _ = _perron(block, cls)
        best = max(best, math.log(root))
    return best


@dataclass(frozen=True)
class AscentResult:
    """Certified lower bound of a concave supremum, with convergence data."""

    value: float
    residual: float
    converged: bool
    diverged: bool


def _concave_ascent(value_and_grad, x0):
    """Supergradient ascent with backtracking line search on an array of coords.

    Stops when 50 consecutive steps improve by less than 1e-10, the spec'd
    bracket rule; reports the last value (a valid lower bound, since every
    accepted step improves) and the sup-norm of the final supergradient.
    """
    x = np.asarray(x0, dtype=float)
    value, grad = value_and_grad(x)
    step = 1.0
    stall = 0
    diverged = False
    for _ in range(ASCENT_MAX_ITER):
        if value > ASCENT_DIVERGE_AT:
            diverged = True
            break
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            stall = ASCENT_PATIENCE
            break
        accepted = False
        trial = step
        while trial >= 1e-14:
            cand = x + trial * grad
            cand_value, cand_grad = value_and_grad(cand)
            if cand_value > value + 1e-4 * trial * gnorm2:
                improvement = cand_value - value
                x, value, grad = cand, cand_value, cand_grad
                step = min(trial * 2.0, 1e8)
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            stall = ASCENT_PATIENCE
            break
        stall = stall + 1 if improvement < ASCENT_IMPROVE_TOL else 0
        if stall >= ASCENT_PATIENCE:
            break
    residual = float(np.max(np.abs(grad))) if grad.size else 0.0
    if diverged:
        return AscentResult(value=INF, residual=residual, converged=False, diverged=True)
    return AscentResult(value=value, residual=residual, converged=stall >= ASCENT_PATIENCE, diverged=False)


def scgf_conjugate(chain, mu):
    """Convex conjugate sup_V (<mu,V> - Lambda(V)) by supergradient ascent.

    The supergradient at V is mu minus the Perron pair (or occupation)
    measure of the class dominating the tilted growth rate.  Coordinates are
    the allowed transitions plus the support of mu; the ascent is warm
    started at log(q/p) on the support when mu charges allowed transitions
    only.  Unbounded ascent is reported as +inf with the diverged flag.
    """
    k = mu.k
    if k not in (1, 2):
        raise RateError("conjugate is computed at level 1 or 2")
    mu.require_probability()
    classes, reachable = _sub_classes(chain, range(chain.n_states))

    # mass outside every reachable class block leaves the growth rate
    # untouched while <mu,V> grows without bound
    covered = set()
    for j in reachable:
        cls = classes[j]
        if k == 1:
            covered |= {(x,) for x in cls}
        else:
            covered |= {(x, y) for x in cls for y in chain.row(x)[0] if y in cls}
    if any(u not in covered for u in mu.support()):
        return AscentResult(value=INF, residual=INF, converged=False, diverged=True)

    if k == 1:
        coords = [(x,) for x in range(chain.n_states)]
    else:
        coords = sorted(set(chain.kernel) | set(mu.support()))
    cindex = {c: i for i, c in enumerate(coords)}
    mu_vec = np.array([mu.mass(c) for c in coords])

    blocks = []
    for j in sorted(reachable):
        states = sorted(classes[j])
        pos = {x: i for i, x in enumerate(states)}
        edges = [(x, y) for x in states for y in chain.row(x)[0] if y in pos]
        rows = np.array([pos[x] for x, _ in edges], dtype=np.int64)
        cols = np.array([pos[y] for _, y in edges], dtype=np.int64)
        base = np.array([chain.prob(x, y) for x, y in edges])
        if k == 1:
            vidx = np.array([cindex[(x,)] for x, _ in edges], dtype=np.int64)
        else:
            vidx = np.array([cindex[e] for e in edges], dtype=np.int64)
        blocks.append((j, len(states), rows, cols, base, vidx))
    warm = {}

    def value_and_grad(v):
        best = None
        for j, nb, rows, cols, base, vidx in blocks:
            mat = np.zeros((nb, nb))
            mat[rows, cols] = base * np.exp(np.minimum(v[vidx], 700.0))
            found = _dominant_subblock(mat, warm, j)
            if found is None:
                continue
            root, comp, right, left = found
            lam = math.log(root) if root > 0 else -INF
            if best is None or lam > best[0]:
                best = (lam, rows, cols, vidx, mat, comp, right, left)
        lam, rows, cols, vidx, mat, comp, right, left = best
        grad = mu_vec.copy()
        # embed the sub-block Perron vectors into the class coordinates
        r_full = np.zeros(mat.shape[0])
        l_full = np.zeros(mat.shape[0])
        r_full[comp] = right
        l_full[comp] = left
        norm = float(l_full @ r_full)
        if k == 1:
            occupation = l_full * r_full / norm
            np.subtract.at(grad, vidx, occupation[rows])
        else:
            weights = l_full[rows] * mat[rows, cols] * r_full[cols] / (math.exp(lam) * norm)
            np.subtract.at(grad, vidx, weights)
        value = float(mu_vec @ v) - lam
        return value, grad

    v0 = np.zeros(len(coords))
    if k == 2 and all(chain.prob(*u) > 0.0 for u in mu.support()):
        front = marginal(mu, 1)
        for u, m in mu.entries.items():
            v0[cindex[u]] = math.log(m / front.mass(u[:1])) - math.log(chain.prob(*u))
    return _concave_ascent(value_and_grad, v0)


def dv_entropy(chain, mu):
    """Donsker-Varadhan entropy as a certified lower bound.

    The supremum over positive test functions is parametrized as exp(g) and
    maximized by gradient ascent; every iterate yields a valid bracket, so
    the reported value is a true lower bound together with the gradient
    residual.
    """
    k = mu.k
    mu.require_probability()
    if k == 1:
        base = dict(mu.entries)
        tail = dict(base)
        coords = {(x,) for x in range(chain.n_states)}
    else:
        base = dict(mu.entries)
        tail = dict(last_marginal(mu, k - 1).entries)
        coords = set(mu.support())

    ext_lists = []
    for v, m in tail.items():
        exts = []
        x = v[-1]
        succs, probs = chain.row(x)
        for y, p in zip(succs, probs):
            target = (v + (y,))[-k:] if k >= 2 else (y,)
            exts.append((target, math.log(p)))
            coords.add(target)
        ext_lists.append((m, exts))

    coords = sorted(coords)
    cindex = {c: i for i, c in enumerate(coords)}
    base_vec = np.zeros(len(coords))
    for u, m in base.items():
        base_vec[cindex[u]] = m
    n_tail = len(ext_lists)
    width = max(len(exts) for _, exts in ext_lists)
    ext_idx = np.zeros((n_tail, width), dtype=np.int64)
    ext_logp = np.full((n_tail, width), -INF)
    tail_mass = np.zeros(n_tail)
    for i, (m, exts) in enumerate(ext_lists):
        tail_mass[i] = m
        for jj, (target, lp) in enumerate(exts):
            ext_idx[i, jj] = cindex[target]
            ext_logp[i, jj] = lp

    def value_and_grad(g):
        w = ext_logp + g[ext_idx]
        top = w.max(axis=1)
        z = np.exp(w - top[:, None]).sum(axis=1)
        value = float(base_vec @ g - tail_mass @ (top + np.log(z)))
        softmax = np.exp(w - top[:, None]) / z[:, None]
        grad = base_vec.copy()
        np.subtract.at(grad, ext_idx, tail_mass[:, None] * softmax)
        return value, grad

    g0 = np.zeros(len(coords))
    if k >= 2 and all(word_probability(chain, u) > 0.0 for u in mu.support()):
        front = marginal(mu, k - 1)
        for u, m in mu.entries.items():
            g0[cindex[u]] = math.log(m / front.mass(u[:-1])) - math.log(chain.prob(u[-2], u[-1]))
    return _concave_ascent(value_and_grad, g0)


# ---------------------------------------------------------------------------
# Level-1 contraction


def occupation_rate(chain, decomposition, mu):
    """Rate of an occupation measure: the contraction of the pair rate.

    Infinite off the admissible set; otherwise decomposed over the classes
    carrying mass and solved per class as min over kernels q << p keeping
    the class measure stationary of sum mu(x) H(q(x,.)|p(x,.)).
    """
    if mu.k != 1:
        raise RateError("occupation rate takes an arity-1 measure")
    return occupation_report(chain, decomposition, mu).value


@dataclass(frozen=True)
class OccupationReport:
    verdict: AdmissibilityVerdict
    value: float
    per_class: tuple


def occupation_report(chain, decomposition, mu):
    """Occupation rate together with its verdict and per-class breakdown."""
    if mu.k != 1:
        raise RateError("occupation reports take an arity-1 measure")
    mu.require_probability()
    verdict = classify_admissible(decomposition, mu)
    if not verdict.admissible:
        return OccupationReport(verdict=verdict, value=INF, per_class=())
    per_class = []
    total = 0.0
    for j in verdict.j_mu:
        cls = decomposition.classes[j]
        weight = mu.class_mass(cls)
        part = mu.restricted_to_states(cls).normalized()
        rate = _class_occupation_rate(chain, part)
        per_class.append(PerClassRate(j, weight, rate))
        total = total + weight * rate if rate != INF else INF
    return OccupationReport(verdict=verdict, value=total, per_class=tuple(per_class))


def _class_occupation_rate(chain, mu):
    """Transportation program: minimize H(nu | mu x p) with both marginals mu.

    Feasibility of the polytope {nu >= 0 on allowed edges, row sums = col
    sums = mu} is checked by linear programming; when feasible, iterative
    proportional fitting converges to the information projection and the
    objective at the fitted point is the class rate.
    """
    supp = sorted(u[0] for u in mu.entries)
    supp_set = set(supp)
    edges = [
        (x, y) for x in supp for y in chain.row(x)[0] if y in supp_set
    ]
    if not edges:
        return INF
    target = {x: mu.mass((x,)) for x in supp}
    if not _transport_feasible(supp, edges, target):
        return INF

    ref = {(x, y): target[x] * chain.prob(x, y) for (x, y) in edges}
    nu = dict(ref)
    prev_obj = None
    for _ in range(CONTRACTION_MAX_ITER):
        row = {x: 0.0 for x in supp}
        for (x, y), m in nu.items():
            row[x] += m
        for (x, y) in edges:
            if row[x] > 0:
                nu[(x, y)] *= target[x] / row[x]
        col = {y: 0.0 for y in supp}
        for (x, y), m in nu.items():
            col[y] += m
        for (x, y) in edges:
            if col[y] > 0:
                nu[(x, y)] *= target[y] / col[y]
        obj = math.fsum(
            m * math.log(m / ref[e]) for e, m in nu.items() if m > 0.0
        )
        if prev_obj is not None and abs(obj - prev_obj) < CONTRACTION_OBJ_TOL:
            break
        prev_obj = obj
    return max(obj, 0.0)


def _transport_feasible(supp, edges, target):
    from scipy.optimize import linprog

    n_e = len(edges)
    idx = {e: i for i, e in enumerate(edges)}
    rows = []
    rhs = []
    for x in supp:
        row = [0.0] * n_e
        for e in edges:
            if e[0] == x:
                row[idx[e]] = 1.0
        rows.append(row)
        rhs.append(target[x])
    for y in supp:
        row = [0.0] * n_e
        for e in edges:
            if e[1] == y:
                row[idx[e]] = 1.0
        rows.append(row)
        rhs.append(target[y])
    res = linprog(
        c=[0.0] * n_e, A_eq=rows, b_eq=rhs, bounds=[(0.0, None)] * n_e, method="highs"
    )
    return res.status == 0


# ---------------------------------------------------------------------------
# Gated rate report


@dataclass(frozen=True)
class PerClassRate:
    class_index: int
    weight: float
    rate: float


@dataclass(frozen=True)
class RateReport:
    verdict: AdmissibilityVerdict
    balanced: bool
    r_value: float
    per_class: tuple
    j_value: AscentResult | None = None
    lambda_star: AscentResult | None = None

    def recombined(self):
        return math.fsum(pc.weight * pc.rate for pc in self.per_class)


def rate_report(chain, decomposition, mu, cross_check=False):
    """Gated rate of a pair (or k-tuple) measure with per-class breakdown.

    Infinite unless the measure is balanced and admissible; when finite, the
    value decomposes as the mass-weighted sum of the per-class conditional
    rates.  cross_check additionally reports the numeric conjugate bound
    (arity 2) and the Donsker-Varadhan lower bound.
    """
    if mu.k < 2:
        raise RateError("rate reports take arity >= 2; use occupation_rate at level 1")
    mu.require_probability()
    balanced = is_balanced(mu)
    verdict = classify_admissible(decomposition, mu)
    if not (balanced and verdict.admissible):
        return RateReport(verdict=verdict, balanced=balanced, r_value=INF, per_class=())
    per_class = []
    for j in verdict.j_mu:
        cls = decomposition.classes[j]
        weight = mu.class_mass(cls)
        part = mu.restricted_to_states(cls).normalized()
        per_class.append(PerClassRate(j, weight, relative_entropy_rate(chain, part)))
    r_value = relative_entropy_rate(chain, mu)
    j_value = lambda_star = None
    if cross_check:
        j_value = dv_entropy(chain, mu)
        if mu.k == 2:
            lambda_star = scgf_conjugate(chain, mu)
    return RateReport(
        verdict=verdict,
        balanced=balanced,
        r_value=r_value,
        per_class=tuple(per_class),
        j_value=j_value,
        lambda_star=lambda_star,
    )


# ---------------------------------------------------------------------------
# Process-level marginal entropies


@dataclass(frozen=True)
class MarkovMeasure:
    """Shift-invariant Markov law: stationary weights pi and kernel q."""

    pi: dict
    q: dict

    def __post_init__(self):
        rows = {}
        for (x, y), p in self.q.items():
            if p < 0:
                raise RateError("kernel weights must be nonnegative")
            rows.setdefault(x, {})[y] = p
        flow = {}
        for x, m in self.pi.items():
            if m <= 0:
                raise RateError("stationary weights must be positive")
            row = rows.get(x)
            if row is None:
                raise RateError(f"no kernel row for charged state {x}")
            s = math.fsum(row.values())
            if abs(s - 1.0) > 1e-9:
                raise RateError(f"kernel row {x} sums to {s!r}")
            for y, p in row.items():
                flow[y] = flow.get(y, 0.0) + m * p
        for y in set(flow) | set(self.pi):
            if abs(flow.get(y, 0.0) - self.pi.get(y, 0.0)) > STATIONARITY_TOL:
                raise RateError("weights are not stationary for the kernel")

    def row(self, x):
        return {y: p for (a, y), p in self.q.items() if a == x and p > 0.0}


def pair_measure(m):
    """The stationary pair law pi(x)q(x,y) as a sparse arity-2 measure."""
    out = {}
    for x, w in m.pi.items():
        for y, p in m.row(x).items():
            out[(x, y)] = w * p
    return SparseMeasure(2, out)


def markov_marginal(m, k):
    """The k-letter marginal pi(u1) q(u1,u2) ... q(u_{k-1},u_k)."""
    if k < 1:
        raise RateError("marginal arity must be >= 1")
    entries = {(x,): w for x, w in m.pi.items()}
    for _ in range(k - 1):
        nxt = {}
        for u, w in entries.items():
            for y, p in m.row(u[-1]).items():
                nxt[u + (y,)] = w * p
        entries = nxt
    return SparseMeasure(k, entries)


def entropy_rate_limit(chain, m):
    """Per-step relative entropy sum_x pi(x) H(q(x,.)|p(x,.))."""
    acc = 0.0
    for x, w in m.pi.items():
        for y, p in m.row(x).items():
            base = chain.prob(x, y)
            if base == 0.0:
                return INF
            acc += w * p * math.log(p / base)
    return max(acc, 0.0)


def marginal_entropy_rate(chain, m, k):
    """(1/k) of the relative entropy of the k-marginal against the path law.

    Closed form (H(pi|beta) + (k-1) * per-step rate) / k; infinite for every
    k when the stationary weights are not dominated by beta.
    """
    if k < 1:
        raise RateError("marginal arity must be >= 1")
    head = 0.0
    for x, w in m.pi.items():
        b = chain.beta.get(x, 0.0)
        if b == 0.0:
            return INF
        head += w * math.log(w / b)
    step = entropy_rate_limit(chain, m)
    if step == INF:
        return INF
    return (head + (k - 1) * step) / k


# ---------------------------------------------------------------------------
# Overlapping-tuple lift


@dataclass(frozen=True)
class PairChainLift:
    """Chain on overlapping (k-1)-tuples plus the lifted pair measure."""

    chain: ChainSpec
    measure: SparseMeasure
    tuple_states: tuple
    index: dict


def pair_chain_lift(chain, mu):
    """Rewrite an arity-k measure as a pair measure of the tuple chain.

    States of the lifted chain are the positive-probability (k-1)-words; a
    transition appends one letter and drops the first, so lifted pairs are
    exactly overlapping tuple pairs.  The pair rate of the lifted measure
    equals the arity-k rate of mu.
    """
    k = mu.k
    if k < 3:
        raise RateError("the lift applies to arity >= 3")
    mu.require_probability()
    if not is_balanced(mu):
        raise RateError("the lift applies to balanced measures")

    words = [(x,) for x in range(chain.n_states)]
    for _ in range(k - 2):
        words = [u + (y,) for u in words for y in chain.row(u[-1])[0]]
    tuple_states = tuple(sorted(words))
    index = {u: i for i, u in enumerate(tuple_states)}

    labels = ["|".join(chain.labels[x] for x in u) for u in tuple_states]
    kernel = {}
    for u in tuple_states:
        for y, p in zip(*chain.row(u[-1])):
            v = u[1:] + (y,)
            kernel[(index[u], index[v])] = p
    beta = {}
    for u in tuple_states:
        w = word_probability(chain, u, with_initial=True)
        if w > 0.0:
            beta[index[u]] = w
    lifted_chain = ChainSpec(labels, kernel, beta, renormalize=True)

    entries = {}
    for w, m in mu.entries.items():
        u, v = w[:-1], w[1:]
        if u not in index or v not in index:
            raise RateError(f"support tuple {w} is not a positive path; cannot lift")
        entries[(index[u], index[v])] = m
    return PairChainLift(
        chain=lifted_chain,
        measure=SparseMeasure(2, entries),
        tuple_states=tuple_states,
        index=index,
    )
