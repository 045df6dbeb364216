from dataclasses import fields
from fractions import Fraction

import numpy as np
import pytest
import sympy

from mbdiag.diagram_gen import enumerate_heff, enumerate_oeff
from mbdiag.diagram_ir import (
    HEFF,
    OEFF,
    Diagram,
    Line,
    Vertex,
    VertexKind,
    assign_labels,
    cut_denominator,
    e_noe,
    energy_symbol,
    prefix_nodes,
)
from mbdiag.errors import DegenerateDenominator, MbdiagError, UnassignedExternal
from mbdiag.eval_engine import (
    DiagramValue,
    denominator_product,
    evaluable,
    evaluate_diagram,
    evaluate_diagrams,
    evaluate_order_sum,
    line_energies,
    line_ranges,
    noe_array,
    tensors_by_rank,
)
from mbdiag.model_core import ModelInstance, OperatorTensor, Orbital, Space, random_model
from mbdiag.oracle import bloch_heff, compare_tensors


def _chain():
    vertices = tuple(Vertex(i, VertexKind.V, 1, Fraction(i)) for i in (1, 2))
    lines = (Line(None, (1, 0)), Line((1, 0), (2, 0)), Line((2, 0), None))
    return assign_labels(Diagram(HEFF, vertices, Fraction(3), lines))


def _flat_model(virtual_energy):
    orbitals = (
        Orbital(0, -1.0, Space.CORE),
        Orbital(1, 0.0, Space.VALENCE),
        Orbital(2, virtual_energy, Space.VIRTUAL),
    )
    entries = {((i,), (j,)): 0.3 for i in range(3) for j in range(3)}
    V = (OperatorTensor(1, 3, entries),)
    return ModelInstance(orbitals, 1, V, OperatorTensor(1, 3, entries))


def test_first_order_is_valence_block(one_electron_model):
    m = one_electron_model
    total = evaluate_order_sum(HEFF, 1, m, workers=1)
    one = tensors_by_rank(total)[1]
    v = m.v_part(1)
    for i in m.valence:
        for j in m.valence:
            assert one.coefficient((i,), (j,)) == pytest.approx(v.coefficient((i,), (j,)))
    assert compare_tensors(total, bloch_heff(1, m), m) < 1e-12


def test_second_order_matches_bloch(one_electron_model):
    m = one_electron_model
    total = evaluate_order_sum(HEFF, 2, m, workers=1)
    assert compare_tensors(total, bloch_heff(2, m), m) < 1e-10


def test_zeroth_order_operator_is_valence_block(one_electron_model):
    m = one_electron_model
    total = evaluate_order_sum(OEFF, 0, m, workers=1)
    o = total.part(1)
    for i in m.valence:
        for j in m.valence:
            assert o.coefficient((i,), (j,)) == pytest.approx(m.O.coefficient((i,), (j,)))


def test_chain_value_by_hand():
    m = _flat_model(2.0)
    value = evaluate_diagram(_chain(), m)
    # particle runs over valence (projected out) and the virtual at 2.0
    assert value.sign == 1
    assert value.weight == 1
    assert value.terms == 1
    assert value.tensor.coefficient((1,), (1,)) == pytest.approx(0.3 * 0.3 / (0.0 - 2.0))


def test_degenerate_denominator_raises():
    m = _flat_model(0.0)
    with pytest.raises(DegenerateDenominator) as info:
        evaluate_diagram(_chain(), m)
    assert info.value.cut == 1
    assert info.value.assignment["s"] == 2


def test_unassigned_external():
    orbitals = (Orbital(0, -1.0, Space.CORE), Orbital(1, 1.0, Space.VIRTUAL))
    t = OperatorTensor(1, 2, {((0,), (1,)): 1.0, ((1,), (0,)): 1.0})
    m = ModelInstance(orbitals, 0, (t,), t)
    with pytest.raises(UnassignedExternal):
        evaluate_diagram(_chain(), m)
    assert not evaluable(_chain(), m)


def test_invalid_diagram_rejected(one_electron_model):
    bad = _chain().with_lines([Line(None, (1, 0))])
    with pytest.raises(MbdiagError, match="invalid diagram"):
        evaluate_diagram(bad, one_electron_model)


def test_rank_beyond_valence_is_not_evaluable():
    m = random_model(0, 1, 1, 1, 1)
    two_body = [d for d in enumerate_heff(1, m) if d.effective_rank == 2]
    assert two_body and not evaluable(two_body[0], m)


def test_denominator_product_matches_cuts(two_electron_model):
    for d in enumerate_heff(2, two_electron_model):
        product = sympy.Integer(1)
        for i in range(1, d.n):
            product *= cut_denominator(d, i)
        assert sympy.expand(denominator_product(d) - product) == 0


def test_numeric_outflow_matches_symbolic(two_electron_model):
    m = two_electron_model
    for d in enumerate_heff(2, m) + enumerate_oeff(1, m):
        ranges = line_ranges(d, m)
        if any(r.size == 0 for r in ranges):
            continue
        energies = line_energies(m, ranges)
        shape = tuple(r.size for r in ranges)
        for i in range(1, d.n + 1):
            nodes = prefix_nodes(d, i)
            numeric = np.broadcast_to(noe_array(d, nodes, energies), shape)
            for where in (tuple(0 for _ in shape), tuple(s - 1 for s in shape)):
                subs = {energy_symbol(l.label): m.energies[ranges[k][where[k]]] for k, l in enumerate(d.lines)}
                assert float(e_noe(d, nodes).subs(subs)) == pytest.approx(numeric[where], abs=1e-12)


def test_diagram_value_fields():
    assert [f.name for f in fields(DiagramValue)] == ["tensor", "sign", "weight", "denominators", "terms"]


def test_concurrent_matches_sequential(two_electron_model):
    m = two_electron_model
    diagrams = enumerate_oeff(1, m)
    serial = evaluate_diagrams(diagrams, m, workers=1)
    threaded = evaluate_diagrams(diagrams, m, workers=4)
    for a, b in zip(serial, threaded):
        assert a.tensor.rank == b.tensor.rank
        assert a.tensor.entries == b.tensor.entries


def test_exclusion_violating_terms_cancel_at_second_order(two_electron_model):
    m = two_electron_model
    full = evaluate_order_sum(HEFF, 2, m, workers=1)
    trimmed = evaluate_order_sum(HEFF, 2, m, skip_exclusion_violating=True, workers=1)
    for rank in full.ranks:
        a, b = full.part(rank), trimmed.part(rank)
        assert np.allclose(a.dense, b.dense, atol=1e-12)


def test_unknown_target(one_electron_model):
    with pytest.raises(MbdiagError):
        evaluate_order_sum("bogus", 1, one_electron_model)
