"""
Golden Module

Reference diagrams with hand-transcribed topologies and the checks that pin
the engine to the printed expressions: signs, weights, denominator
factors, explicit nested-loop values, the factorization identity and the
skeleton-group sign tables.
"""

import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Mapping

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

try:
    from mbdiag.diagram_ir import (
        Diagram,
        closed_loops,
        canonical_key,
        cut_denominator,
        energy_symbol,
        format_energy_sum,
        hole_count,
        permute_ports,
        sign_factor,
        weight_factor,
    )
    from mbdiag.eval_engine import evaluate_diagram
    from mbdiag.model_core import ModelInstance, OperatorTensor, Space, random_model
    from mbdiag.transform import (
        OrderingFamily,
        evaluate_group,
        factorize,
        group_skeletons,
        member_sum,
        reorder,
        verify_factorization,
    )
except ImportError:
    from diagram_ir import (
        Diagram,
        closed_loops,
        canonical_key,
        cut_denominator,
        energy_symbol,
        format_energy_sum,
        hole_count,
        permute_ports,
        sign_factor,
        weight_factor,
    )
    from eval_engine import evaluate_diagram
    from model_core import ModelInstance, OperatorTensor, Space, random_model
    from transform import (
        OrderingFamily,
        evaluate_group,
        factorize,
        group_skeletons,
        member_sum,
        reorder,
        verify_factorization,
    )

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures" / "golden"
SCHEMA_VERSION = 1


def fixture_names() -> List[str]:
    return sorted(p.stem for p in FIXTURE_DIR.glob("*.json"))


def load_fixture(name: str) -> dict:
    with open(FIXTURE_DIR / f"{name}.json", encoding="utf-8") as fh:
        return json.load(fh)


def fixture_diagram(name: str) -> Diagram:
    return Diagram.from_dict(load_fixture(name)["diagram"])


def fixture_models(doc: Mapping) -> List[ModelInstance]:
    """Random models described by a fixture's model recipe."""
    recipe = dict(doc["model"])
    seeds = recipe.pop("seeds")
    zero_valence = recipe.pop("zero_valence_block", False)
    if "v_ranks" in recipe:
        recipe["v_ranks"] = tuple(recipe["v_ranks"])
    models = [random_model(seed, **recipe) for seed in seeds]
    if zero_valence:
        models = [_without_valence_block(m) for m in models]
    return models


def _without_valence_block(m: ModelInstance) -> ModelInstance:
    """Drop V couplings among valence orbitals only."""
    valence = set(m.valence)
    parts = []
    for t in m.V:
        entries = {
            (bra, ket): v
            for (bra, ket), v in t.entries.items()
            if not set(bra + ket) <= valence
        }
        parts.append(OperatorTensor(t.rank, t.n_orbitals, entries))
    return ModelInstance(m.orbitals, m.valence_electrons, tuple(parts), m.O, m.lam)


def _antisymmetrize4(x: np.ndarray) -> np.ndarray:
    return 0.25 * (x - x.transpose(1, 0, 2, 3) - x.transpose(0, 1, 3, 2) + x.transpose(1, 0, 3, 2))


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-6)
    return float(np.max(np.abs(a - b))) / scale


def two_body_third_order_nested(m: ModelInstance) -> np.ndarray:
    """
    The printed two-body third-order expression, term by term.

    Returns:
        X[m, n, p, q] over valence indices, before antisymmetrization.
    """
    V = m.v_part(2).dense
    eps = m.energies
    val, core, part = m.valence, m.core, m.particles
    nv = len(val)
    X = np.zeros((nv, nv, nv, nv))
    for im, mm in enumerate(val):
        for i_n, nn in enumerate(val):
            for ip, pp in enumerate(val):
                for iq, qq in enumerate(val):
                    total = 0.0
                    for a in core:
                        for b in core:
                            for t in part:
                                for s in part:
                                    d1 = eps[a] + eps[b] - eps[t] - eps[nn]
                                    d2 = eps[b] + eps[pp] + eps[qq] - eps[t] - eps[nn] - eps[s]
                                    total += V[t, nn, b, a] * V[s, a, pp, qq] * V[mm, b, s, t] / (d1 * d2)
                    X[im, i_n, ip, iq] = -2.0 * total
    return X


def transition_second_order_nested(m: ModelInstance) -> np.ndarray:
    """The printed second-order transition operator expression, term by term."""
    V = m.v_part(2).dense
    O = m.O.dense
    eps = m.energies
    val, core, part = m.valence, m.core, m.particles
    nv = len(val)
    X = np.zeros((nv, nv, nv, nv))
    for im, mm in enumerate(val):
        for i_n, nn in enumerate(val):
            for ip, pp in enumerate(val):
                for iq, qq in enumerate(val):
                    total = 0.0
                    for a in core:
                        for b in core:
                            for s in part:
                                for t in part:
                                    d1 = eps[a] + eps[b] - eps[t] - eps[nn]
                                    d2 = eps[b] + eps[mm] - eps[t] - eps[s]
                                    total += V[mm, b, s, t] * V[nn, t, a, b] * O[a, s, pp, qq] / (d1 * d2)
                    X[im, i_n, ip, iq] = -2.0 * total
    return X


def skeleton_group_closed_form(m: ModelInstance) -> np.ndarray:
    """Sum over i, j in core and virtual of V_mi D_ij V_jn / ((e_n - e_j)(e_m - e_i))."""
    V = m.v_part(1).dense
    D = m.O.dense
    eps = m.energies
    inner = [o.id for o in m.orbitals if o.space != Space.VALENCE]
    val = m.valence
    out = np.zeros((len(val), len(val)))
    for im, mm in enumerate(val):
        for i_n, nn in enumerate(val):
            total = 0.0
            for i in inner:
                for j in inner:
                    total += V[mm, i] * D[i, j] * V[j, nn] / ((eps[nn] - eps[j]) * (eps[mm] - eps[i]))
            out[im, i_n] = total
    return out


def _valence_block(t: OperatorTensor, m: ModelInstance) -> np.ndarray:
    idx = np.asarray(m.valence, dtype=int)
    return t.dense[np.ix_(*[idx] * (2 * t.rank))]


def _structure_report(d: Diagram, expect: Mapping) -> dict:
    dens = [format_energy_sum(cut_denominator(d, i)) for i in range(1, d.n)]
    report = {
        "sign": sign_factor(d),
        "weight": str(weight_factor(d)),
        "denominators": dens,
    }
    report["structure_pass"] = (
        report["sign"] == expect["sign"]
        and Fraction(report["weight"]) == Fraction(expect["weight"])
        and dens == expect["denominators"]
    )
    return report


def check_two_body_third_order() -> dict:
    doc = load_fixture("two_body_third_order")
    d = Diagram.from_dict(doc["diagram"])
    expect = doc["expect"]
    report = _structure_report(d, expect)
    worst = 0.0
    for m in fixture_models(doc):
        value = evaluate_diagram(d, m)
        worst = max(worst, _rel_error(_valence_block(value.tensor, m), _antisymmetrize4(two_body_third_order_nested(m))))
    report["max_rel_error"] = worst
    report["pass"] = report["structure_pass"] and worst <= expect["tolerance"]
    return report


def check_transition_second_order() -> dict:
    doc = load_fixture("transition_second_order")
    d = Diagram.from_dict(doc["diagram"])
    expect = doc["expect"]
    report = _structure_report(d, expect)
    free = sorted(l.label for l in d.lines if not d.in_energy(l))
    report["free_lines"] = free
    worst = 0.0
    for m in fixture_models(doc):
        value = evaluate_diagram(d, m)
        # the printed indices pair m with q and n with p along the open lines
        engine = _valence_block(value.tensor, m).transpose(0, 1, 3, 2)
        worst = max(worst, _rel_error(engine, _antisymmetrize4(transition_second_order_nested(m))))
    report["max_rel_error"] = worst
    report["pass"] = report["structure_pass"] and free == expect["free_lines"] and worst <= expect["tolerance"]
    return report


def check_factorized_family() -> dict:
    doc = load_fixture("factorized_family")
    d = Diagram.from_dict(doc["diagram"])
    expect = doc["expect"]
    parts = doc["family"]
    redrawn = d
    for index, bra_perm, ket_perm in expect["redraw"]["vertex_ports"]:
        redrawn = permute_ports(redrawn, index, bra_perm, ket_perm)
    fam = OrderingFamily.from_parts(d, parts["bottom_parts"], parts["middle"], parts["top_parts"])
    fd = factorize(fam)
    names = {v.index: v.name for v in d.vertices}
    labels = {f"ε_{l.label}": energy_symbol(l.label) for l in d.lines}
    printed = parse_expr(expect["printed_denominator"], local_dict=labels)
    degenerate = {energy_symbol("m"): energy_symbol("n")}
    check = verify_factorization(fam, trials=expect["trials"], tol=expect["tolerance"])
    report = {
        "sign": sign_factor(d),
        "holes": hole_count(d),
        "loops": len(closed_loops(d)),
        "redrawn_loops": len(closed_loops(redrawn)),
        "redrawn_sign": sign_factor(redrawn),
        "same_key": canonical_key(d) == canonical_key(redrawn),
        "members": len(fam.members),
        "factors": fd.describe(names),
        "printed_match": sympy.expand((fd.expr() - printed).subs(degenerate)) == 0,
        "max_rel_error": check["max_rel_error"],
    }
    report["pass"] = bool(
        report["sign"] == expect["sign"]
        and report["redrawn_sign"] == expect["sign"]
        and report["holes"] == expect["holes"]
        and report["loops"] == expect["loops"]
        and report["redrawn_loops"] == expect["redrawn_loops"]
        and report["same_key"]
        and report["members"] == expect["members"]
        and report["factors"] == expect["factors"]
        and report["printed_match"]
        and check["pass"]
    )
    return report


def skeleton_group_members(d: Diagram) -> List[Diagram]:
    """All six time orderings of the three vertices, the drawn one first."""
    orders = [(1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)]
    return [reorder(d, order) for order in orders]


def check_skeleton_group() -> dict:
    doc = load_fixture("skeleton_group")
    d = Diagram.from_dict(doc["diagram"])
    expect = doc["expect"]
    names = {v.index: v.name for v in d.vertices}
    groups = group_skeletons(skeleton_group_members(d), names=names)
    report = {"groups": len(groups)}
    if len(groups) != 1:
        report["pass"] = False
        return report
    g = groups[0]
    report.update(
        {
            "members": len(g.members),
            "eta1": list(g.eta1),
            "eta2": list(g.eta2),
            "notation": g.notation(),
        }
    )
    worst_sum = worst_closed = 0.0
    for m in fixture_models(doc):
        grouped = evaluate_group(g, m).part(1)
        members = member_sum(g, m, workers=1).part(1)
        block = _valence_block(grouped, m)
        worst_sum = max(worst_sum, _rel_error(block, _valence_block(members, m)))
        worst_closed = max(worst_closed, _rel_error(block, skeleton_group_closed_form(m)))
    report["max_rel_error_member_sum"] = worst_sum
    report["max_rel_error_closed_form"] = worst_closed
    report["pass"] = bool(
        report["members"] == expect["members"]
        and report["eta1"] == expect["eta1"]
        and report["eta2"] == expect["eta2"]
        and report["notation"] == expect["notation"]
        and worst_sum <= expect["tolerance"]
        and worst_closed <= expect["tolerance"]
    )
    return report


CHECKS: Dict[str, Callable[[], dict]] = {
    "two_body_third_order": check_two_body_third_order,
    "transition_second_order": check_transition_second_order,
    "factorized_family": check_factorized_family,
    "skeleton_group": check_skeleton_group,
}


def run_golden() -> dict:
    """Run every reference check; one entry per fixture."""
    results = {}
    for name in fixture_names():
        logger.info("[Checking %s ...]", name)
        results[name] = CHECKS[name]()
    return {
        "schema_version": SCHEMA_VERSION,
        "fixtures": results,
        "pass": all(r["pass"] for r in results.values()),
    }


if __name__ == "__main__":
    print(json.dumps(run_golden(), indent=2, ensure_ascii=False))
