from dataclasses import replace

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from mbdiag.diagram_gen import enumerate_heff, enumerate_oeff
from mbdiag.diagram_ir import Line, LineType, canonical_key, cut, cut_denominator, hole_count
from mbdiag.errors import MbdiagError, PartsNotDisconnected
from mbdiag.eval_engine import evaluate_diagram
from mbdiag.golden import fixture_diagram, skeleton_group_members
from mbdiag.model_core import Space, random_model
from mbdiag.transform import (
    NotationEntry,
    OrderingFamily,
    TypingClass,
    _shuffles,
    evaluate_group,
    evaluate_typing_class,
    factorize,
    family_of,
    format_entry,
    group_skeletons,
    line_walks,
    member_sum,
    parse_notation,
    reorder,
    same_skeleton,
    same_typing,
    single_factors,
    skeleton_key,
    verify_factorization,
    vertex_map,
)


@pytest.fixture(scope="module")
def family_base():
    return fixture_diagram("factorized_family")


@pytest.fixture(scope="module")
def skeleton_base():
    return fixture_diagram("skeleton_group")


def _factorized_family(d):
    return OrderingFamily.from_parts(d, [[1], [2]], [3], [[4, 6], [5]])


def _cuts_carry_internal_lines(fam):
    for d in fam.members:
        for i in range(1, d.n):
            if not any(d.line_type(l) in (LineType.HOLE, LineType.PARTICLE) for l in cut(d, i).crossing):
                return False
    return True


def test_shuffles():
    assert sorted(_shuffles([(1,), (2,)])) == [(1, 2), (2, 1)]
    assert len(_shuffles([(1, 2), (3,)])) == 3
    assert len(_shuffles([(1, 2), (3, 4)])) == 6
    assert _shuffles([]) == [()]


def test_reorder_moves_effective_vertex(skeleton_base):
    d = reorder(skeleton_base, (2, 3, 1))
    assert [v.name for v in d.vertices] == ["D", "V", "W"]
    assert d.effective_level == 1
    assert same_skeleton(d, skeleton_base)


def test_family_members_are_distinct(family_base):
    fam = _factorized_family(family_base)
    assert len(fam.members) == 6
    assert len({canonical_key(d) for d in fam.members}) == 6


def test_family_of_finds_the_articulation_vertex(family_base):
    fam = family_of(family_base)
    assert fam.bottom_parts == ((1,), (2,))
    assert fam.middle == (3,)
    assert fam.top_parts == ((4, 6), (5,))


def test_parts_must_be_disconnected(family_base):
    with pytest.raises(PartsNotDisconnected):
        OrderingFamily.from_parts(family_base, [[1], [2]], [3], [[4, 5], [6]])


@pytest.mark.parametrize(
    "bottoms, middle, tops",
    [
        ([[1], [2]], [3], [[4, 6]]),
        ([[1], [2]], [], [[3, 4, 5, 6]]),
        ([[2, 1]], [3], [[4, 6], [5]]),
        ([[1], [4]], [3], [[2, 6], [5]]),
    ],
)
def test_malformed_parts(family_base, bottoms, middle, tops):
    with pytest.raises(MbdiagError):
        OrderingFamily.from_parts(family_base, bottoms, middle, tops)


def test_factored_form(family_base):
    fd = factorize(_factorized_family(family_base))
    names = {v.index: v.name for v in family_base.vertices}
    assert fd.describe(names) == "-E(Vf) -E(Ve) E(VbVc) E(Vb) E(Va)"
    assert len(fd.factors) == family_base.n - 1


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_factorized_family_identity_holds_for_any_energies(seed):
    fam = _factorized_family(fixture_diagram("factorized_family"))
    report = verify_factorization(fam, trials=5, seed=seed)
    assert report["pass"], report


def test_single_factors_match_cut_product(family_base):
    product = sympy.Integer(1)
    for i in range(1, family_base.n):
        product *= cut_denominator(family_base, i)
    assert sympy.expand(single_factors(family_base).expr() - product) == 0


def test_unlabeled_family_rejected(family_base):
    bare = family_base.with_lines(Line(l.start, l.end, "") for l in family_base.lines)
    with pytest.raises(MbdiagError):
        verify_factorization(_factorized_family(bare))


def test_enumerated_families_factorize():
    m = random_model(0, 2, 2, 2, 1)
    families = []
    for d in enumerate_heff(3, m) + enumerate_oeff(2, m):
        fam = family_of(d)
        if len(fam.members) > 1 and _cuts_carry_internal_lines(fam):
            families.append(fam)
    assert len(families) >= 5
    for fam in families:
        report = verify_factorization(fam, trials=10)
        assert report["pass"], (fam.base, report)


def test_skeleton_keys_forget_timing(skeleton_base):
    members = skeleton_group_members(skeleton_base)
    assert len({skeleton_key(d) for d in members}) == 1
    assert len({canonical_key(d) for d in members}) == 6


def test_typing_distinguishes_members(skeleton_base):
    members = skeleton_group_members(skeleton_base)
    assert same_typing(members[0], members[0])
    assert not same_typing(members[0], members[-1])


def test_vertex_map_follows_names(skeleton_base):
    other = reorder(skeleton_base, (3, 1, 2))
    mapping = vertex_map(skeleton_base, other)
    for new, old in mapping.items():
        assert other.vertex(new).name == skeleton_base.vertex(old).name


def test_grouping_partitions_diagrams():
    m = random_model(1, 2, 2, 2, 1, v_ranks=(1,))
    diagrams = enumerate_oeff(2, m)
    groups = group_skeletons(diagrams, m)
    assert sum(len(g.members) for g in groups) == len(diagrams)
    for g in groups:
        assert all(same_skeleton(g.skeleton, d) for d in g.members)
        assert sum(len(t.members) for t in g.typings) == len(g.members)


def test_group_value_is_member_sum():
    m = random_model(2, 2, 2, 2, 1, v_ranks=(1,))
    for g in group_skeletons(enumerate_heff(3, m), m)[:5]:
        total = evaluate_group(g, m)
        assert total.ranks == member_sum(g, m, workers=1).ranks
        for rank in total.ranks:
            expected = np.zeros_like(total.part(rank).dense)
            for d in g.members:
                value = evaluate_diagram(d, m).tensor
                if value.rank == rank:
                    expected = expected + value.dense
            assert np.allclose(total.part(rank).dense, expected, atol=1e-12)


def _family_class(base):
    fam = _factorized_family(base)
    return TypingClass(fam.members, hole_count(base), fam)


def _members_total(t, m):
    total = evaluate_diagram(t.members[0], m).tensor
    for d in t.members[1:]:
        total = total + evaluate_diagram(d, m).tensor
    return total


def test_typing_class_uses_factored_denominator(family_base):
    m = random_model(3, 1, 2, 2, 1)
    t = _family_class(family_base)
    value = evaluate_typing_class(t, m)
    assert value.factored_terms > 0
    expected = _members_total(t, m)
    assert value.tensor.rank == expected.rank
    assert np.allclose(value.tensor.dense, expected.dense, atol=1e-12)


def test_typing_class_with_split_valence_level(family_base):
    m = random_model(3, 1, 2, 2, 1)
    shifted = iter([0.07, -0.05])
    orbitals = tuple(
        replace(o, energy=next(shifted)) if o.space == Space.VALENCE else o for o in m.orbitals
    )
    m = replace(m, orbitals=orbitals)
    t = _family_class(family_base)
    value = evaluate_typing_class(t, m)
    assert value.fallback_terms > 0
    expected = _members_total(t, m)
    assert np.allclose(value.tensor.dense, expected.dense, atol=1e-12)


def test_group_typings_are_evaluated_once():
    m = random_model(0, 2, 2, 2, 1)
    factored = 0
    for g in group_skeletons(enumerate_oeff(2, m), m):
        factored += sum(evaluate_typing_class(t, m).factored_terms for t in g.typings)
        grouped = evaluate_group(g, m)
        plain = member_sum(g, m, workers=1)
        for rank in plain.ranks:
            assert np.allclose(grouped.part(rank).dense, plain.part(rank).dense, atol=1e-12)
    assert factored > 0


def test_skeleton_walks(skeleton_base):
    names = {v.index: v.name for v in skeleton_base.vertices}
    assert line_walks(skeleton_base, names) == [("V", "D", "W")]


def test_notation_round_trip():
    entry = parse_notation("(VDW)[DVW+DWV]")
    assert entry == NotationEntry((("V", "D", "W"),), (("D", "V", "W"), ("D", "W", "V")))
    assert format_entry(entry) == "(VDW)[DVW+DWV]"


def test_notation_with_loop():
    entry = parse_notation("(VaVb)(VcVdVc)")
    assert entry.walks == (("Va", "Vb"), ("Vc", "Vd", "Vc"))
    assert entry.orderings == ()


@pytest.mark.parametrize("text", ["VDW", "(VDW)[", "(vdw)[DVW]", "(VDW)[DVW]]"])
def test_malformed_notation(text):
    with pytest.raises(MbdiagError):
        parse_notation(text)
