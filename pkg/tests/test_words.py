import math

import pytest

from ldp import (
    ChainSpec,
    decompose_classes,
    empirical,
    empirical_k,
    count_measure,
    is_balanced,
    tv_distance,
    word_probability,
)
from ldp.words import (
    WordOpError,
    build_transition_table,
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

import surgery_checks as sc


# two classes {0} and {2,3} bridged by the transient state 1
BRIDGE = ChainSpec(
    ["a", "b", "c", "d"],
    {
        (0, 0): 0.5,
        (0, 1): 0.5,
        (1, 2): 1.0,
        (2, 2): 0.3,
        (2, 3): 0.7,
        (3, 2): 1.0,
    },
    {0: 1.0},
)


def bridge_config():
    d = decompose_classes(BRIDGE)
    return d, build_transition_table(BRIDGE, d, {0, 2, 3}, (0, 1))


def ex27_config(chain):
    d = decompose_classes(chain)
    window = frozenset(chain.ids_of(["1", "2", "5", "6"]))
    return d, build_transition_table(chain, d, window, (0, 1, 3))


def test_count_and_empirical_measures():
    m = count_measure((0, 1, 0))
    assert m.entries == {(0, 1): 1.0, (1, 0): 1.0}
    l = empirical((0, 1, 0))
    assert l.mass((0, 1)) == 0.5 and l.mass((1, 0)) == 0.5
    assert count_measure(()).total == 0.0
    assert empirical((4,)).total == 0.0
    assert count_measure((0, 0, 0, 0)).total == 3.0  # total mass is |u|-1


def test_empirical_k_windows():
    w = (0, 1, 0, 1)
    k3 = empirical_k(w, 3)
    assert k3.mass((0, 1, 0)) == 0.5 and k3.mass((1, 0, 1)) == 0.5
    assert tv_distance(empirical_k(w, 2), empirical(w)) == 0.0
    const = empirical_k((0, 0, 0, 0, 0), 4)
    assert const.entries == {(0, 0, 0, 0): 1.0}
    with pytest.raises(WordOpError):
        empirical_k((0, 1), 3)


def test_transition_table_examples(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    t = cfg.table
    ids = ex27_chain.ids_of
    # adjacent states connect with the empty word
    assert t.xi[tuple(ids(["1", "2"]))] == ()
    # 2 -> 5 needs the transient bridge letter 4
    assert t.xi[tuple(ids(["2", "5"]))] == tuple(ids(["4"]))
    # eta is the exhaustive minimum over the stored connections
    exhaustive = min(
        word_probability(ex27_chain, (x,) + xi + (y,)) for (x, y), xi in t.xi.items()
    )
    assert t.eta == exhaustive
    assert t.tau == max(len(xi) + 1 for xi in t.xi.values())
    assert ex27_chain.labels[t.z0] == "1"


def test_transition_table_precondition_errors(ex27_chain):
    d = decompose_classes(ex27_chain)
    with pytest.raises(WordOpError, match="ordered"):
        build_transition_table(ex27_chain, d, frozenset(ex27_chain.ids_of(["2", "3"])), (1, 2))
    with pytest.raises(WordOpError, match="window misses"):
        build_transition_table(ex27_chain, d, frozenset(ex27_chain.ids_of(["1"])), (0, 1))


def test_slice_seven_state_examples(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    u = ex27_chain.ids_of(tuple("1112224565665665"))
    v = ex27_chain.ids_of(tuple("1111334565656566"))
    su = slice_word(ex27_chain, cfg, u)
    sv = slice_word(ex27_chain, cfg, v)
    as_str = lambda w: "".join(ex27_chain.labels_of(w))  # noqa: E731
    assert [as_str(w) for w in su.pieces] == ["111", "222", "565665665"]
    assert [as_str(w) for w in sv.pieces] == ["1111", "", "565656566"]
    # all letters of a piece stay in its class, and spans never overlap
    spans = [s for s in su.spans if s]
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


def test_slice_word_without_window_letters():
    d, cfg = bridge_config()
    sliced = slice_word(BRIDGE, cfg, (1,))
    assert sliced.pieces == ((), ())


def test_slice_requires_positive_word(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    with pytest.raises(WordOpError, match="positive"):
        slice_word(ex27_chain, cfg, ex27_chain.ids_of(("2", "1")))


def test_reorder_column_major(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    u = ex27_chain.ids_of(tuple("1112224565665665"))
    v = ex27_chain.ids_of(tuple("1111334565656566"))
    items = reorder([slice_word(ex27_chain, cfg, u), slice_word(ex27_chain, cfg, v)])
    texts = ["".join(ex27_chain.labels_of(w)) for _, w in items]
    assert texts == ["111", "1111", "222", "565665665", "565656566"]
    single = reorder([slice_word(ex27_chain, cfg, u)])
    assert ["".join(ex27_chain.labels_of(w)) for _, w in single] == [
        "111",
        "222",
        "565665665",
    ]
    assert reorder([slice_word(BRIDGE, bridge_config()[1], (1,))]) == []


def test_stitch_structure_and_truncation(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    u = ex27_chain.ids_of(tuple("1112224565665665"))
    v = ex27_chain.ids_of(tuple("1111334565656566"))
    items = reorder([slice_word(ex27_chain, cfg, u), slice_word(ex27_chain, cfg, v)])
    total = sum(len(w) for _, w in items)
    word = stitch(ex27_chain, cfg, items, total - 1)  # largest valid target
    assert len(word) == total
    text = "".join(ex27_chain.labels_of(word))
    # contains each piece in order (the final truncation may trim the last
    # piece by exactly the connector overhead, here 3 letters)
    pos = 0
    for piece in ("111", "1111", "222", "565665665", "565656"):
        pos = text.find(piece, pos)
        assert pos >= 0, text
        pos += len(piece)
    assert word_probability(ex27_chain, word, with_initial=True) > 0.0
    # exact-length truncation cuts inside pieces when asked
    short = stitch(ex27_chain, cfg, items, 10)
    assert len(short) == 11 and tuple(short) == tuple(word[:11])


def test_stitch_single_piece(sym2_chain):
    d = decompose_classes(sym2_chain)
    cfg = build_transition_table(sym2_chain, d, {0, 1}, (0,))
    word = stitch(sym2_chain, cfg, [(0, (0, 0, 1))], 2)
    assert len(word) == 3
    assert word[0] == cfg.table.z0


def test_stitch_errors(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    with pytest.raises(WordOpError, match="below"):
        stitch(ex27_chain, cfg, [(0, (0, 0))], 10)
    four = ex27_chain.id_of("4")
    with pytest.raises(WordOpError, match="not stitchable"):
        stitch(ex27_chain, cfg, [(2, (four, four))], 1)


def test_stitch_geographic_bound_exhaustively():
    d, cfg = bridge_config()
    out = sc.check_stitching_geographic(BRIDGE, cfg, k_star=3, l_star=6, t=3)
    assert out.cases > 0 and out.violations == 0


def test_couple_degenerate_single_class(sym2_chain):
    d = decompose_classes(sym2_chain)
    cfg = build_transition_table(sym2_chain, d, {0, 1}, (0,))
    u = (0, 0, 1, 0, 0)
    n = len(u) - 1
    t = n  # single word, keep everything
    w = couple(sym2_chain, cfg, [u], t)
    assert len(w) == t + 1
    r_tau = len(cfg.j0) * cfg.table.tau
    assert tv_distance(empirical(w), empirical(u)) <= 2 * (r_tau + 1) * 2 / t


def test_couple_seven_state_structure(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    u = ex27_chain.ids_of(tuple("1112224565665665"))
    v = ex27_chain.ids_of(tuple("1111334565656566"))
    total = 28  # total sliced length of the two words
    w = couple(ex27_chain, cfg, [u, v], total - 1)
    text = "".join(ex27_chain.labels_of(w))
    pos = 0
    for piece in ("111", "1111", "222", "565665665", "565656"):
        pos = text.find(piece, pos)
        assert pos >= 0, text
        pos += len(piece)
    # all letters stay in the window plus the connector alphabet
    connector_letters = {x for xi in cfg.table.xi.values() for x in xi} | {cfg.table.z0}
    assert set(w) <= set().union(*cfg.k_sets) | connector_letters | set(u) | set(v)


def test_couple_mass_precondition(ex27_chain):
    d, cfg = ex27_config(ex27_chain)
    u = ex27_chain.ids_of(tuple("44"))  # no window letters at all
    with pytest.raises(WordOpError, match="mass"):
        couple(ex27_chain, cfg, [ex27_chain.ids_of(tuple("45"))], 3)
    del u


def test_decouple_micro_example():
    d, cfg = bridge_config()
    u = (0, 0, 1, 2, 2)
    w1, w2 = decouple(BRIDGE, cfg, u, [0], [1], t1=1, t2=1)
    assert len(w1) == 2 and len(w2) == 2
    assert set(w1) <= {0}
    # the second word is stitched from z0, so it may pass through the bridge
    assert w2[0] == cfg.table.z0
    with pytest.raises(WordOpError, match="mass"):
        decouple(BRIDGE, cfg, (0, 0, 0, 0), [0], [1], t1=1, t2=1)
    with pytest.raises(WordOpError, match="disjoint"):
        decouple(BRIDGE, cfg, u, [0], [0], 1, 1)


def test_constants_match_closed_forms():
    assert slicing_fiber_constant(5, 2) == 6.0 ** 3
    beta_z0, eta, tau, k_star, l_star = 0.5, 0.12, 3, 4, 12
    expect = (
        beta_z0
        * eta**k_star
        / (l_star + tau * k_star) ** 2
        * (2 * k_star / (math.e * (l_star + (tau + 2) * k_star))) ** (2 * k_star)
    )
    assert stitching_constant(beta_z0, eta, tau, k_star, l_star) == pytest.approx(expect, rel=1e-12)
    n, n_words, r = 4, 2, 2
    expect_c = stitching_constant(beta_z0, eta, tau, n_words * r, n_words * (n + 1)) / (
        2.0 ** (n_words * r) * slicing_fiber_constant(n, r) ** n_words
    )
    assert coupling_constant(beta_z0, eta, tau, n, n_words, r) == pytest.approx(expect_c, rel=1e-12)
    expect_d = stitching_constant(beta_z0, eta, tau, r, n + 1) ** 2 / slicing_fiber_constant(n, r)
    assert decoupling_constant(beta_z0, eta, tau, n, r) == pytest.approx(expect_d, rel=1e-12)


def test_micro_slicing_inequalities():
    d, cfg = bridge_config()
    for n in (2, 3, 4):
        geo = sc.check_slicing_geographic(BRIDGE, cfg, n)
        assert geo.ok, geo
        prob = sc.check_slicing_probability(BRIDGE, cfg, n)
        assert prob.ok, prob
        disjoint = sc.check_sliced_pieces_disjoint(BRIDGE, cfg, n)
        assert disjoint.ok


def test_micro_coupling_inequalities():
    d, cfg = bridge_config()
    geo, prob = sc.check_coupling(BRIDGE, cfg, n=3, n_words=2, t=4)
    assert geo.cases > 0 and geo.ok, geo
    assert prob.cases > 0 and prob.ok, prob


def test_micro_decoupling_inequalities():
    d, cfg = bridge_config()
    geo, prob = sc.check_decoupling(BRIDGE, cfg, [0], [1], n=5, t1=1, t2=1)
    assert geo.cases > 0 and geo.ok, geo
    assert prob.cases > 0 and prob.ok, prob
