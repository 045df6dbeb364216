"""
Transform Module

Merges diagrams that differ only in the relative time ordering of
disconnected parts (factorization), and groups diagrams sharing vertices,
connections and directions into one skeleton whose members differ only in
hole/particle typing of internal lines.
"""

import logging
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import comb
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import sympy
from networkx.algorithms import isomorphism as iso

try:
    from mbdiag.config import get_settings
    from mbdiag.diagram_ir import (
        HEFF,
        Diagram,
        Line,
        LineType,
        VertexKind,
        canonical_key,
        closed_loops,
        cut_denominator,
        e_noe,
        energy_symbol,
        hole_count,
        open_paths,
        weight_factor,
    )
    from mbdiag.errors import MbdiagError, PartsNotDisconnected, UnassignedExternal
    from mbdiag.eval_engine import (
        check_denominator,
        contract,
        cut_product,
        denominator_scale,
        evaluate_diagrams,
        line_energies,
        line_ranges,
        noe_array,
        project,
    )
    from mbdiag.model_core import ModelInstance, OperatorSum, OperatorTensor
except ImportError:
    from config import get_settings
    from diagram_ir import (
        HEFF,
        Diagram,
        Line,
        LineType,
        VertexKind,
        canonical_key,
        closed_loops,
        cut_denominator,
        e_noe,
        energy_symbol,
        hole_count,
        open_paths,
        weight_factor,
    )
    from errors import MbdiagError, PartsNotDisconnected, UnassignedExternal
    from eval_engine import (
        check_denominator,
        contract,
        cut_product,
        denominator_scale,
        evaluate_diagrams,
        line_energies,
        line_ranges,
        noe_array,
        project,
    )
    from model_core import ModelInstance, OperatorSum, OperatorTensor

logger = logging.getLogger(__name__)

Part = Tuple[int, ...]


# ---------------------------------------------------------------------------
# Ordering families and factorized denominators
# ---------------------------------------------------------------------------


def _shuffles(parts: Sequence[Part]) -> List[Part]:
    """Every interleaving of the parts that keeps each part's own order."""
    parts = [p for p in parts if p]
    if not parts:
        return [()]
    out = []
    for k, p in enumerate(parts):
        rest = list(parts)
        rest[k] = p[1:]
        for tail in _shuffles(rest):
            out.append((p[0],) + tail)
    return out


def reorder(base: Diagram, order: Sequence[int]) -> Diagram:
    """
    Redraw a diagram with its vertices in a new bottom-to-top order.

    Args:
        base: The diagram.
        order: Old vertex indices listed bottom to top.
    """
    new_index = {old: k for k, old in enumerate(order, 1)}
    vertices = tuple(
        replace(base.vertex(old), index=new_index[old], level=Fraction(new_index[old])) for old in order
    )
    o = [v for v in vertices if v.kind == VertexKind.O]
    eff_level = o[0].level if o else Fraction(len(order) + 1)

    def move(endpoint):
        return None if endpoint is None else (new_index[endpoint[0]], endpoint[1])

    lines = tuple(Line(move(l.start), move(l.end), l.label) for l in base.lines)
    return Diagram(base.target, vertices, eff_level, lines)


@dataclass(frozen=True, eq=False)
class Factor:
    """One factor sign * E_noe(vertices); None in vertices is the effective vertex."""

    sign: int
    vertices: FrozenSet[Optional[int]]

    def expr(self, d: Diagram) -> sympy.Expr:
        return self.sign * e_noe(d, self.vertices)


@dataclass(frozen=True, eq=False)
class FactoredDenominator:
    base: Diagram
    factors: Tuple[Factor, ...]

    @property
    def sign(self) -> int:
        out = 1
        for f in self.factors:
            out *= f.sign
        return out

    def expr(self) -> sympy.Expr:
        total = sympy.Integer(1)
        for f in self.factors:
            total *= f.expr(self.base)
        return total

    def value(self, energies: Mapping[str, float]) -> float:
        subs = {energy_symbol(k): v for k, v in energies.items()}
        return float(self.expr().subs(subs))

    def describe(self, names: Optional[Mapping[int, str]] = None) -> str:
        """Factor list such as -E(Ve) -E(Vf) E(Va) E(Vb) E(VbVc)."""
        names = names or {v.index: v.label for v in self.base.vertices}
        out = []
        for f in self.factors:
            inner = "".join(
                "eff" if x is None else names[x]
                for x in sorted(f.vertices, key=lambda x: (x is None, -(x or 0)))
            )
            out.append(f"{'-' if f.sign < 0 else ''}E({inner})")
        return " ".join(out)


@dataclass(frozen=True, eq=False)
class OrderingFamily:
    """
    Diagrams sharing vertices, line directions and types, differing only
    in how disconnected bottom parts (and top parts) interleave.
    """

    base: Diagram
    bottom_parts: Tuple[Part, ...]
    middle: Part
    top_parts: Tuple[Part, ...]
    members: Tuple[Diagram, ...] = field(default=())

    @classmethod
    def from_parts(
        cls,
        base: Diagram,
        bottom_parts: Sequence[Sequence[int]],
        middle: Sequence[int],
        top_parts: Sequence[Sequence[int]],
    ) -> "OrderingFamily":
        """
        Build every interleaving of the parts around a fixed middle block.

        Parts list vertex indices of `base` bottom to top; the middle block
        must be nonempty and hold the O vertex of an operator diagram.
        """
        bottoms = tuple(tuple(p) for p in bottom_parts if p)
        tops = tuple(tuple(p) for p in top_parts if p)
        middle = tuple(middle)
        _check_parts(base, bottoms, middle, tops)
        members = []
        for low in _shuffles(bottoms):
            for high in _shuffles(tops):
                members.append(reorder(base, low + middle + high))
        return cls(base, bottoms, middle, tops, tuple(members))

    @property
    def n(self) -> int:
        return self.base.n


def _check_parts(base: Diagram, bottoms, middle, tops) -> None:
    every = [i for p in bottoms for i in p] + list(middle) + [i for p in tops for i in p]
    if sorted(every) != list(range(1, base.n + 1)):
        raise MbdiagError("parts must cover every vertex exactly once")
    if not middle:
        raise MbdiagError("the middle block cannot be empty")
    for p in bottoms + tops + (middle,):
        if list(p) != sorted(p):
            raise MbdiagError(f"part {p} is not listed bottom to top")
    if bottoms and max(i for p in bottoms for i in p) > min(middle):
        raise MbdiagError("bottom parts must lie below the middle block")
    if tops and min(i for p in tops for i in p) < max(middle):
        raise MbdiagError("top parts must lie above the middle block")
    if list(middle) != list(range(min(middle), max(middle) + 1)):
        raise MbdiagError("the middle block must be contiguous")
    for v in base.vertices:
        if v.kind == VertexKind.O and v.index not in middle:
            raise MbdiagError("the O vertex must sit in the middle block")
    for group in (bottoms, tops):
        owner = {i: k for k, p in enumerate(group) for i in p}
        for l in base.internal_lines:
            a, b = owner.get(l.source), owner.get(l.target)
            if a is not None and b is not None and a != b:
                raise PartsNotDisconnected(
                    f"line {l.label or l} joins parts {group[a]} and {group[b]}"
                )


def _fewer_side(d: Diagram, prefix: Iterable[Optional[int]]) -> Factor:
    """The cut above a prefix, written on the side with fewer solid vertices."""
    prefix = frozenset(prefix)
    everything = frozenset([v.index for v in d.vertices] + [None])
    solid_below = sum(1 for x in prefix if x is not None)
    if solid_below <= d.n - solid_below:
        return Factor(-1, prefix)
    return Factor(1, everything - prefix)


def factorize(fam: OrderingFamily) -> FactoredDenominator:
    """
    Factored denominator of a whole ordering family.

    Bottom parts contribute -E_noe of their own growing prefixes, top parts
    +E_noe of their own growing suffixes, and cuts inside the middle block
    are shared by every member. The top-part factors take the effective
    vertex's own net outflow as zero, which holds for a degenerate model
    space.
    """
    base = fam.base
    factors: List[Factor] = []
    for part in fam.bottom_parts:
        for j in range(1, len(part) + 1):
            factors.append(Factor(-1, frozenset(part[:j])))
    below = [i for p in fam.bottom_parts for i in p]
    mid = list(fam.middle)
    for j in range(1, len(mid)):
        prefix = below + mid[:j]
        if base.effective_level <= base.vertex(mid[j - 1]).level:
            prefix = prefix + [None]
        factors.append(_fewer_side(base, prefix))
    for part in fam.top_parts:
        for j in range(len(part)):
            factors.append(Factor(1, frozenset(part[j:])))
    if len(factors) != max(base.n - 1, 0):
        raise MbdiagError(f"expected {base.n - 1} factors, built {len(factors)}")
    return FactoredDenominator(base, tuple(factors))


def single_factors(d: Diagram) -> FactoredDenominator:
    """Cut factors of one diagram, each written on its fewer-vertex side."""
    factors = []
    for i in range(1, d.n):
        prefix = [v.index for v in d.vertices if v.index <= i]
        if d.effective_level <= d.vertex(i).level:
            prefix.append(None)
        factors.append(_fewer_side(d, prefix))
    return FactoredDenominator(d, tuple(factors))


def _member_reciprocal(d: Diagram, energies: Mapping[str, float]) -> float:
    total = 1.0
    for i in range(1, d.n):
        expr = cut_denominator(d, i)
        total /= float(expr.subs({energy_symbol(k): v for k, v in energies.items()}))
    return total


def trial_energies(d: Diagram, rng: np.random.Generator) -> Dict[str, float]:
    """
    Random line energies: holes in [-3, -1], particles in [1, 3] and one
    shared valence energy for every external line.
    """
    valence = float(rng.uniform(-0.5, 0.5))
    out = {}
    for l in d.lines:
        kind = d.line_type(l)
        if kind == LineType.HOLE:
            out[l.label] = float(rng.uniform(-3.0, -1.0))
        elif kind == LineType.PARTICLE:
            out[l.label] = float(rng.uniform(1.0, 3.0))
        else:
            out[l.label] = valence
    return out


def verify_factorization(fam: OrderingFamily, trials: int = 100, seed: int = 0, tol: float = 1e-12) -> dict:
    """
    Check the factored denominator against the member sum numerically.

    Returns:
        Report with trial count, max relative error and pass flag.
    """
    labels = [l.label for l in fam.base.lines]
    if len(set(labels)) != len(labels) or "" in labels:
        raise MbdiagError("every line of the family needs a distinct label")
    fd = factorize(fam)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        energies = trial_energies(fam.base, rng)
        members = sum(_member_reciprocal(d, energies) for d in fam.members)
        factored = 1.0 / fd.value(energies)
        err = abs(members - factored) / max(abs(factored), 1e-300)
        worst = max(worst, err)
    report = {
        "members": len(fam.members),
        "trials": trials,
        "max_rel_error": worst,
        "pass": bool(worst <= tol),
    }
    logger.info("Factorization check: %s", report)
    return report


def _solid_components(d: Diagram, subset: Sequence[int]) -> List[Part]:
    g = nx.Graph()
    g.add_nodes_from(subset)
    inside = set(subset)
    for l in d.internal_lines:
        if l.source in inside and l.target in inside:
            g.add_edge(l.source, l.target)
    parts = [tuple(sorted(c)) for c in nx.connected_components(g)]
    return sorted(parts)


def _family_size(bottoms: Sequence[Part], tops: Sequence[Part]) -> int:
    def shuffles(parts):
        total = sum(len(p) for p in parts)
        count = 1
        for p in parts:
            count *= comb(total, len(p))
            total -= len(p)
        return count

    return shuffles(bottoms) * shuffles(tops)


def family_of(d: Diagram) -> OrderingFamily:
    """
    The largest ordering family a diagram belongs to.

    A single vertex is taken as the middle block; vertices below and above
    it split into connected parts. Operator diagrams always use the O
    vertex. With no splitting available the family is the diagram alone.
    """
    if d.target == HEFF:
        candidates = [v.index for v in d.vertices]
    else:
        candidates = [v.index for v in d.vertices if v.kind == VertexKind.O]
    best = None
    for c in candidates:
        bottoms = _solid_components(d, [i for i in range(1, c)])
        tops = _solid_components(d, [i for i in range(c + 1, d.n + 1)])
        size = _family_size(bottoms, tops)
        if best is None or size > best[0]:
            best = (size, bottoms, c, tops)
    if best is None or best[0] <= 1:
        return OrderingFamily.from_parts(d, (), tuple(range(1, d.n + 1)), ())
    _, bottoms, c, tops = best
    return OrderingFamily.from_parts(d, bottoms, (c,), tops)


# ---------------------------------------------------------------------------
# Skeleton grouping
# ---------------------------------------------------------------------------


def skeleton_graph(d: Diagram, typed: bool = False) -> nx.MultiDiGraph:
    """Vertices and directed lines with the time ordering forgotten."""
    g = nx.MultiDiGraph(target=d.target)
    for v in d.vertices:
        g.add_node(v.index, label=f"{v.kind.value}{v.rank}")
    g.add_node("eff", label="eff")
    for l in d.lines:
        src = "eff" if l.source is None else l.source
        dst = "eff" if l.target is None else l.target
        attrs = {"type": d.line_type(l).value} if typed else {}
        g.add_edge(src, dst, **attrs)
    return g


_node_match = iso.categorical_node_match("label", None)
_edge_match = iso.categorical_multiedge_match("type", None)


def _wl(g: nx.MultiDiGraph, typed: bool) -> str:
    simple = nx.DiGraph()
    for n, data in g.nodes(data=True):
        simple.add_node(n, label=data["label"])
    for u, v, data in g.edges(data=True):
        tag = data.get("type", "") if typed else ""
        if simple.has_edge(u, v):
            simple[u][v]["label"] = simple[u][v]["label"] + "," + tag
        else:
            simple.add_edge(u, v, label=tag or "-")
    return f"{g.graph['target']}:{nx.weisfeiler_lehman_graph_hash(simple, node_attr='label', edge_attr='label')}"


def skeleton_key(d: Diagram) -> str:
    """Hash of the untimed skeleton; equal skeletons give equal keys."""
    return _wl(skeleton_graph(d), typed=False)


def same_skeleton(a: Diagram, b: Diagram) -> bool:
    return a.target == b.target and nx.is_isomorphic(
        skeleton_graph(a), skeleton_graph(b), node_match=_node_match
    )


def same_typing(a: Diagram, b: Diagram) -> bool:
    return a.target == b.target and nx.is_isomorphic(
        skeleton_graph(a, typed=True),
        skeleton_graph(b, typed=True),
        node_match=_node_match,
        edge_match=_edge_match,
    )


def vertex_map(rep: Diagram, other: Diagram) -> Dict[int, int]:
    """An isomorphism from the skeleton of `other` onto that of `rep`."""
    gm = iso.MultiDiGraphMatcher(skeleton_graph(other), skeleton_graph(rep), node_match=_node_match)
    for mapping in gm.isomorphisms_iter():
        return {k: v for k, v in mapping.items() if k != "eff"}
    raise MbdiagError("diagrams do not share a skeleton")


@dataclass(frozen=True, eq=False)
class TypingClass:
    """Members of a skeleton group with identical hole/particle typing."""

    members: Tuple[Diagram, ...]
    holes: int
    family: Optional[OrderingFamily]

    @property
    def eta1(self) -> int:
        return -1 if self.holes % 2 else 1

    @property
    def eta2(self) -> Optional[int]:
        if self.family is None:
            return None
        return factorize(self.family).sign


@dataclass(frozen=True, eq=False)
class SkeletonGroup:
    """Diagrams sharing vertices, connections and directions."""

    key: str
    skeleton: Diagram
    members: Tuple[Diagram, ...]
    typings: Tuple[TypingClass, ...]
    names: Mapping[int, str]

    @property
    def eta1(self) -> Tuple[int, ...]:
        return tuple(t.eta1 for t in self.typings)

    @property
    def eta2(self) -> Tuple[Optional[int], ...]:
        return tuple(t.eta2 for t in self.typings)

    def notation(self) -> List[str]:
        return format_notation(self)


def _contributes(d: Diagram, m: ModelInstance) -> bool:
    if not m.core and any(d.line_type(l) == LineType.HOLE for l in d.lines):
        return False
    return not (not m.particles and any(d.line_type(l) == LineType.PARTICLE for l in d.lines))


def _typing_class(members: List[Diagram]) -> TypingClass:
    rep = members[0]
    fam = family_of(rep)
    keys = {canonical_key(d) for d in members}
    fam_keys = {canonical_key(d) for d in fam.members}
    if keys != fam_keys:
        logger.debug("Typing class of %d members is not one ordering family", len(members))
        fam = None
    return TypingClass(tuple(members), hole_count(rep), fam)


def group_skeletons(
    diagrams: Sequence[Diagram],
    model: Optional[ModelInstance] = None,
    names: Optional[Mapping[int, str]] = None,
) -> List[SkeletonGroup]:
    """
    Partition diagrams by untimed skeleton.

    Args:
        diagrams: Diagrams from one enumeration.
        model: When given, diagrams that vanish identically on it (hole
            lines without core orbitals, particle lines without particle
            orbitals) are left out.
        names: Optional vertex names for the first diagram of each group.

    Returns:
        Groups in first-appearance order.
    """
    if model is not None:
        diagrams = [d for d in diagrams if _contributes(d, model)]
    buckets: Dict[str, List[List[Diagram]]] = {}
    order: List[Tuple[str, int]] = []
    for d in diagrams:
        key = skeleton_key(d)
        groups = buckets.setdefault(key, [])
        for k, g in enumerate(groups):
            if same_skeleton(g[0], d):
                g.append(d)
                break
        else:
            groups.append([d])
            order.append((key, len(groups) - 1))
    out = []
    for key, k in order:
        members = buckets[key][k]
        rep = members[0]
        classes: List[List[Diagram]] = []
        for d in members:
            for c in classes:
                if same_typing(c[0], d):
                    c.append(d)
                    break
            else:
                classes.append([d])
        vertex_names = dict(names) if names else {v.index: v.name or v.label for v in rep.vertices}
        typings = [_typing_class(_relabel_like(rep, c, vertex_names)) for c in classes]
        typings.sort(key=lambda t: (t.holes, _ordering_text(t)))
        out.append(SkeletonGroup(f"{key}#{k}", rep, tuple(members), tuple(typings), vertex_names))
    return out


def _relabel_like(rep: Diagram, members: List[Diagram], names: Mapping[int, str]) -> List[Diagram]:
    """Carry the representative's vertex names onto each member."""
    out = []
    for d in members:
        mapping = vertex_map(rep, d)
        vertices = tuple(
            replace(v, name=names[mapping[v.index]]) for v in d.vertices
        )
        out.append(replace(d, vertices=vertices))
    return out


@dataclass(frozen=True, eq=False)
class ClassValue:
    """Value of one typing class and how its index assignments were summed."""

    tensor: OperatorTensor
    factored_terms: int
    fallback_terms: int


def evaluate_typing_class(t: TypingClass, m: ModelInstance, tol: Optional[float] = None) -> ClassValue:
    """
    Evaluate a typing class once, from its factored denominator.

    The shared numerator is contracted on the family base and summed over
    all index assignments with weight eta1 (-1)^loops and the reciprocal of
    eta2 times the product of factor outflows. Assignments where some
    ordering projects out an intermediate model-space state, or where the
    effective vertex has a net outflow, take the orderings' own cut
    products instead. A class that is not one ordering family is summed
    member by member.
    """
    if t.family is None:
        values = evaluate_diagrams(list(t.members), m, workers=1)
        return ClassValue(OperatorSum.of(v.tensor for v in values).parts[0], 0, sum(v.terms for v in values))
    fam = t.family
    base = fam.base
    if base.external_lines and not m.valence:
        raise UnassignedExternal("diagram has external lines but the model has no valence orbitals")
    tol = get_settings().denominator_tol if tol is None else tol
    ranges = line_ranges(base, m)
    product = contract(base, m, ranges)
    if product is None:
        return ClassValue(OperatorTensor.zero(len(open_paths(base)), m.n_orbitals), 0, 0)
    shape = product.shape
    limit = tol * denominator_scale(m)

    energies = line_energies(m, ranges)
    factored = np.full([1] * len(ranges), float(t.eta2))
    for f in factorize(fam).factors:
        factored = factored * noe_array(base, f.vertices, energies)
    factored = np.broadcast_to(factored, shape)

    every = np.abs(np.broadcast_to(noe_array(base, [None], energies), shape)) <= limit
    reciprocal = np.zeros(shape)
    for d in fam.members:
        keep, den_total = cut_product(d, m, line_ranges(d, m), shape, tol=tol)
        reciprocal = reciprocal + np.where(keep, 1.0 / den_total, 0.0)
        every = every & keep
    check_denominator(base, 0, factored, every, ranges, limit)

    fallback = ~every & (reciprocal != 0.0)
    value = np.where(every, product / np.where(every, factored, 1.0), product * np.where(every, 0.0, reciprocal))
    loops = -1 if len(closed_loops(base)) % 2 else 1
    value = value * (t.eta1 * loops * float(weight_factor(base)))
    logger.debug(
        "Typing class of %d: %d factored, %d fallback assignments",
        len(fam.members),
        int(np.count_nonzero(every)),
        int(np.count_nonzero(fallback)),
    )
    return ClassValue(project(base, m, value), int(np.count_nonzero(every)), int(np.count_nonzero(fallback)))


def evaluate_group(g: SkeletonGroup, m: ModelInstance) -> OperatorSum:
    """Group value summed over its typing classes, each evaluated once."""
    return OperatorSum.of(evaluate_typing_class(t, m).tensor for t in g.typings)


def member_sum(g: SkeletonGroup, m: ModelInstance, workers: Optional[int] = None) -> OperatorSum:
    """Group value as the plain sum of its member diagrams."""
    values = evaluate_diagrams(list(g.members), m, workers=workers)
    return OperatorSum.of(v.tensor for v in values)


# ---------------------------------------------------------------------------
# Ordering notation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NotationEntry:
    """Line walks and the vertex orderings (top to bottom) they come in."""

    walks: Tuple[Tuple[str, ...], ...]
    orderings: Tuple[Tuple[str, ...], ...]


def line_walks(d: Diagram, names: Mapping[int, str]) -> List[Tuple[str, ...]]:
    """
    Open paths written last vertex first, then loops written from their
    lowest-index vertex backwards and closing on it again.
    """
    walks = []
    for path in open_paths(d):
        visited = [l.target for l in path[:-1]]
        walks.append(tuple(names[v] for v in reversed(visited)))
    for loop in closed_loops(d):
        start = min(range(len(loop)), key=lambda k: loop[k].source)
        ordered = loop[start:] + loop[:start]
        visited = [l.source for l in ordered]
        walks.append((names[visited[0]],) + tuple(names[v] for v in reversed(visited[1:])) + (names[visited[0]],))
    return walks


def _ordering_of(d: Diagram) -> Tuple[str, ...]:
    return tuple(v.name or v.label for v in reversed(d.vertices))


def _ordering_text(t: TypingClass) -> str:
    return "+".join(sorted("".join(_ordering_of(d)) for d in t.members))


def format_entry(entry: NotationEntry) -> str:
    walks = "".join("(" + "".join(w) + ")" for w in entry.walks)
    orders = "+".join("".join(o) for o in entry.orderings)
    return f"{walks}[{orders}]" if entry.orderings else walks


def format_notation(g: SkeletonGroup) -> List[str]:
    """One "(walks)[ordering+ordering]" string per typing class."""
    walks = tuple(line_walks(g.skeleton, g.names))
    out = []
    for t in g.typings:
        orderings = tuple(sorted(_ordering_of(d) for d in t.members))
        out.append(format_entry(NotationEntry(walks, orderings)))
    return out


_NAME = re.compile(r"[A-Z][a-z0-9_']*")
_ENTRY = re.compile(r"^((?:\([^()\[\]]+\))+)(?:\[([^\[\]]+)\])?$")


def _names(text: str) -> Tuple[str, ...]:
    found = _NAME.findall(text)
    if "".join(found) != text:
        raise MbdiagError(f"cannot split {text!r} into vertex names")
    return tuple(found)


def parse_notation(text: str) -> NotationEntry:
    """Parse "(VDW)[DVW+DWV]" back into walks and orderings."""
    match = _ENTRY.match(text.strip())
    if not match:
        raise MbdiagError(f"malformed ordering notation {text!r}")
    walks = tuple(_names(w) for w in re.findall(r"\(([^()]+)\)", match.group(1)))
    orderings = ()
    if match.group(2):
        orderings = tuple(_names(o) for o in match.group(2).split("+"))
    return NotationEntry(walks, orderings)


if __name__ == "__main__":
    try:
        from mbdiag.diagram_gen import enumerate_oeff
        from mbdiag.model_core import random_model
    except ImportError:
        from diagram_gen import enumerate_oeff
        from model_core import random_model

    model = random_model(0, 2, 1, 2, 1, v_ranks=(1,))
    for group in group_skeletons(enumerate_oeff(2, model)):
        print(len(group.members), group.notation(), group.eta1, group.eta2)
