"""
Diagram IR Module

Time-ordered Goldstone diagrams with one effective (dashed) vertex, plus
every purely structural quantity the evaluation rules need: net outflow
energies, cut denominators, loops and hole lines, equivalent-line weights,
canonical keys, linkedness and rendering.

A line runs from the vertex where its orbital is created (a bra port) to
the vertex where it is annihilated (a ket port). The effective vertex is
written as None in line endpoints.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import sympy

try:
    from mbdiag.errors import DegenerateDenominator, MbdiagError
except ImportError:
    from errors import DegenerateDenominator, MbdiagError

logger = logging.getLogger(__name__)

Port = Tuple[int, int]

HEFF = "heff"
OEFF = "oeff"


class VertexKind(str, Enum):
    V = "V"
    O = "O"


class LineType(str, Enum):
    PARTICLE = "particle"
    HOLE = "hole"
    VALENCE = "valence-dashed"
    FREE = "free"


class Orientation(str, Enum):
    UP = "up"
    DOWN = "down"
    LEVEL = "level"


@dataclass(frozen=True)
class Vertex:
    index: int
    kind: VertexKind
    rank: int
    level: Fraction
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or f"{self.kind.value}{self.index}"


@dataclass(frozen=True)
class Line:
    start: Optional[Port]
    end: Optional[Port]
    label: str = ""

    @property
    def source(self) -> Optional[int]:
        return None if self.start is None else self.start[0]

    @property
    def target(self) -> Optional[int]:
        return None if self.end is None else self.end[0]

    @property
    def is_external(self) -> bool:
        return self.start is None or self.end is None


@dataclass(frozen=True)
class Cut:
    position: int
    crossing: Tuple[Line, ...]


@dataclass(frozen=True, eq=False)
class Diagram:
    """A time-ordered diagram; vertices are indexed 1..n bottom to top."""

    target: str
    vertices: Tuple[Vertex, ...]
    effective_level: Fraction
    lines: Tuple[Line, ...]

    @property
    def n(self) -> int:
        return len(self.vertices)

    def vertex(self, index: int) -> Vertex:
        return self.vertices[index - 1]

    def level(self, index: Optional[int]) -> Fraction:
        return self.effective_level if index is None else self.vertex(index).level

    def orientation(self, line: Line) -> Orientation:
        lo, hi = self.level(line.source), self.level(line.target)
        if lo < hi:
            return Orientation.UP
        if lo > hi:
            return Orientation.DOWN
        return Orientation.LEVEL

    def line_type(self, line: Line) -> LineType:
        if line.is_external:
            solid = line.source if line.source is not None else line.target
            if self.level(solid) == self.effective_level:
                return LineType.FREE
            return LineType.VALENCE
        return LineType.PARTICLE if self.orientation(line) == Orientation.UP else LineType.HOLE

    def in_energy(self, line: Line) -> bool:
        """Whether the line takes part in denominators."""
        return self.line_type(line) != LineType.FREE

    @property
    def internal_lines(self) -> List[Line]:
        return [l for l in self.lines if not l.is_external]

    @property
    def external_lines(self) -> List[Line]:
        return [l for l in self.lines if l.is_external]

    @property
    def effective_rank(self) -> int:
        return sum(1 for l in self.lines if l.end is None)

    def line_at_bra(self, index: int, port: int) -> Line:
        for l in self.lines:
            if l.start == (index, port):
                return l
        raise MbdiagError(f"no line leaves bra port {port} of vertex {index}")

    def line_at_ket(self, index: int, port: int) -> Line:
        for l in self.lines:
            if l.end == (index, port):
                return l
        raise MbdiagError(f"no line enters ket port {port} of vertex {index}")

    def with_lines(self, lines: Iterable[Line]) -> "Diagram":
        return replace(self, lines=tuple(lines))

    def __repr__(self) -> str:
        return f"Diagram({canonical_key(self)})"

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "vertices": [
                {"kind": v.kind.value, "rank": v.rank, "level": str(v.level), "name": v.name}
                for v in self.vertices
            ],
            "effective_level": str(self.effective_level),
            "lines": [
                {
                    "from": None if l.start is None else list(l.start),
                    "to": None if l.end is None else list(l.end),
                    "label": l.label,
                }
                for l in self.lines
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Diagram":
        """Parse a diagram document; malformed fields raise MbdiagError."""

        def endpoint(value) -> Optional[Port]:
            if value is None:
                return None
            if not isinstance(value, list) or len(value) != 2:
                raise ValueError(f"endpoint {value!r} is not [vertex, port]")
            return (int(value[0]), int(value[1]))

        try:
            vertices = tuple(
                Vertex(i + 1, VertexKind(v["kind"]), int(v["rank"]), Fraction(v["level"]), v.get("name", ""))
                for i, v in enumerate(doc["vertices"])
            )
            lines = tuple(
                Line(endpoint(l["from"]), endpoint(l["to"]), l.get("label", "")) for l in doc["lines"]
            )
            return cls(doc["target"], vertices, Fraction(doc["effective_level"]), lines)
        except KeyError as e:
            raise MbdiagError(f"diagram is missing field {e}")
        except (TypeError, ValueError, AttributeError, ZeroDivisionError) as e:
            raise MbdiagError(f"malformed diagram: {e}")

    @classmethod
    def from_json(cls, text: str) -> "Diagram":
        return cls.from_dict(json.loads(text))


def validate_diagram(d: Diagram) -> List[str]:
    """
    Structural checks for a diagram.

    Returns:
        Violations, empty for a valid diagram.
    """
    problems = []
    for pos, v in enumerate(d.vertices, 1):
        if v.index != pos:
            problems.append(f"vertex at position {pos} carries index {v.index}")
    levels = [v.level for v in d.vertices]
    if levels != sorted(levels) or len(set(levels)) != len(levels):
        problems.append("solid vertices must occupy strictly increasing levels")
    starts = Counter(l.start for l in d.lines if l.start is not None)
    ends = Counter(l.end for l in d.lines if l.end is not None)
    for v in d.vertices:
        for port in range(v.rank):
            if starts[(v.index, port)] != 1:
                problems.append(f"bra port {port} of {v.label} used {starts[(v.index, port)]} times")
            if ends[(v.index, port)] != 1:
                problems.append(f"ket port {port} of {v.label} used {ends[(v.index, port)]} times")
    for port, count in list(starts.items()) + list(ends.items()):
        if port[0] < 1 or port[0] > d.n or not 0 <= port[1] < d.vertex(port[0]).rank:
            problems.append(f"line endpoint {port} does not exist")
    for l in d.lines:
        if l.start is None and l.end is None:
            problems.append("a line cannot join the effective vertex to itself")
        elif not l.is_external and l.source == l.target:
            problems.append(f"line {l.label or l} starts and ends on vertex {l.source}")
    o_vertices = [v for v in d.vertices if v.kind == VertexKind.O]
    if d.target == HEFF:
        if o_vertices:
            problems.append("effective Hamiltonian diagrams cannot carry an O vertex")
        if d.vertices and d.effective_level <= max(levels):
            problems.append("effective vertex must lie above every V vertex")
    elif d.target == OEFF:
        if len(o_vertices) != 1:
            problems.append("effective operator diagrams need exactly one O vertex")
        elif d.effective_level != o_vertices[0].level:
            problems.append("effective vertex must share the level of the O vertex")
    else:
        problems.append(f"unknown target {d.target!r}")
    return problems


def energy_symbol(label: str) -> sympy.Symbol:
    return sympy.Symbol(f"ε_{label}")


def e_noe(d: Diagram, subset: Iterable[Optional[int]]) -> sympy.Expr:
    """
    Net outflow energy of a vertex subset.

    Args:
        d: The diagram.
        subset: Vertex indices; None stands for the effective vertex.

    Returns:
        Energies of lines created inside and leaving the subset minus
        energies of lines entering it and annihilated inside, free lines
        excluded.
    """
    inside = set(subset)
    total = sympy.Integer(0)
    for l in d.lines:
        if not d.in_energy(l):
            continue
        src_in = l.source in inside
        dst_in = l.target in inside
        if src_in and not dst_in:
            total += energy_symbol(l.label)
        elif dst_in and not src_in:
            total -= energy_symbol(l.label)
    return total


def prefix_nodes(d: Diagram, i: int) -> List[Optional[int]]:
    """Vertices at or below the level of solid vertex i."""
    level = d.vertex(i).level
    nodes = [v.index for v in d.vertices if v.level <= level]
    if d.effective_level <= level:
        nodes.append(None)
    return nodes


def cut(d: Diagram, i: int) -> Cut:
    """The horizontal cut just above solid vertex i."""
    if i < 1 or i >= d.n:
        raise MbdiagError(f"cut position {i} outside 1..{d.n - 1}")
    level = d.vertex(i).level
    crossing = tuple(
        l
        for l in d.lines
        if d.in_energy(l) and min(d.level(l.source), d.level(l.target)) <= level < max(d.level(l.source), d.level(l.target))
    )
    return Cut(i, crossing)


def cut_denominator(d: Diagram, i: int) -> sympy.Expr:
    """
    Energy denominator at the cut above solid vertex i.

    Returns:
        Sum of downgoing crossing energies minus sum of upgoing ones.
    """
    total = sympy.Integer(0)
    for l in cut(d, i).crossing:
        if d.orientation(l) == Orientation.DOWN:
            total += energy_symbol(l.label)
        else:
            total -= energy_symbol(l.label)
    return total


def cut_value(d: Diagram, i: int, energies: Mapping[str, float], tol: float = 1e-12) -> float:
    """Numeric cut denominator for one label-to-energy assignment."""
    expr = cut_denominator(d, i)
    value = float(expr.subs({energy_symbol(k): v for k, v in energies.items()}))
    scale = max((abs(v) for v in energies.values()), default=1.0) or 1.0
    if abs(value) < tol * scale:
        raise DegenerateDenominator(i, dict(energies), value)
    return value


def open_paths(d: Diagram) -> List[List[Line]]:
    """
    Open line walks, each from a ket external to a bra external.

    At every vertex the walk leaves through the bra port paired with the
    ket port it entered by.
    """
    paths = []
    for start in sorted(
        (l for l in d.lines if l.start is None), key=lambda l: (l.end[0], l.end[1])
    ):
        walk = [start]
        current = start
        while current.end is not None:
            current = d.line_at_bra(*current.end)
            walk.append(current)
        paths.append(walk)
    return paths


def closed_loops(d: Diagram) -> List[List[Line]]:
    on_paths = {id(l) for path in open_paths(d) for l in path}
    seen = set()
    loops = []
    for l in d.lines:
        if id(l) in on_paths or id(l) in seen:
            continue
        loop = []
        current = l
        while id(current) not in seen:
            seen.add(id(current))
            loop.append(current)
            current = d.line_at_bra(*current.end)
        loops.append(loop)
    return loops


def hole_count(d: Diagram) -> int:
    return sum(1 for l in d.lines if d.line_type(l) == LineType.HOLE)


def sign_factor(d: Diagram) -> int:
    """Over-all sign (-1)^(l+h): closed loops plus internal hole lines."""
    return -1 if (len(closed_loops(d)) + hole_count(d)) % 2 else 1


def equivalence_classes(d: Diagram) -> Counter:
    """Sizes of line sets sharing start and end vertex."""
    return Counter((l.source, l.target) for l in d.lines)


def weight_factor(d: Diagram) -> Fraction:
    """(m!)^2 / (i1! i2! ...) over all classes of equivalent lines."""
    m = d.effective_rank
    denom = 1
    for size in equivalence_classes(d).values():
        denom *= math.factorial(size)
    return Fraction(math.factorial(m) ** 2, denom)


def canonical_key(d: Diagram) -> str:
    """
    Key identifying a diagram up to orbital relabeling and port permutation.

    The time ordering fixes every vertex position, so the multiset of
    (start, end) vertex pairs together with vertex kinds and ranks is a
    complete invariant.
    """
    def node(x):
        return "E" if x is None else str(x)

    verts = ",".join(f"{v.kind.value}{v.rank}" for v in d.vertices)
    eff = "top" if d.target == HEFF else "co"
    edges = sorted(
        f"{node(src)}>{node(dst)}:{count}" for (src, dst), count in equivalence_classes(d).items()
    )
    return f"{d.target}|{verts}|{eff}|{' '.join(edges)}"


def line_graph(d: Diagram) -> nx.MultiGraph:
    g = nx.MultiGraph()
    g.add_nodes_from(v.index for v in d.vertices)
    if d.external_lines:
        g.add_node("eff")
    for l in d.lines:
        g.add_edge(
            "eff" if l.source is None else l.source,
            "eff" if l.target is None else l.target,
        )
    return g


def is_linked(d: Diagram) -> bool:
    """Connected over solid vertices, with the effective vertex as a node when it carries lines."""
    g = line_graph(d)
    return g.number_of_nodes() > 0 and nx.is_connected(g)


def permute_ports(d: Diagram, index: int, bra_perm: Sequence[int], ket_perm: Sequence[int]) -> Diagram:
    """Redraw vertex `index` with its bra and ket ports permuted."""
    def move(endpoint, perm):
        if endpoint is None or endpoint[0] != index:
            return endpoint
        return (index, perm[endpoint[1]])

    return d.with_lines(
        Line(move(l.start, bra_perm), move(l.end, ket_perm), l.label) for l in d.lines
    )


def relabel(d: Diagram, mapping: Mapping[str, str]) -> Diagram:
    return d.with_lines(Line(l.start, l.end, mapping.get(l.label, l.label)) for l in d.lines)


_HOLE_LABELS = "abcdefgh"
_PARTICLE_LABELS = "stuvwxyz"
_BRA_LABELS = ("m", "n", "o")
_KET_LABELS = ("p", "q", "r")


def _pool(base, k: int, stem: str) -> str:
    return base[k] if k < len(base) else f"{stem}{k + 1}"


def assign_labels(d: Diagram) -> Diagram:
    """
    Give every line a conventional orbital label.

    Open path k gets bra label m, n, o, ... and ket label p, q, r, ...;
    holes take a, b, c, ... and particles s, t, u, ... in line order.
    """
    labels: Dict[int, str] = {}
    for k, path in enumerate(open_paths(d)):
        labels[id(path[0])] = _pool(_KET_LABELS, k, "p")
        labels[id(path[-1])] = _pool(_BRA_LABELS, k, "m")
    holes = particles = 0
    for l in sorted(d.internal_lines, key=lambda l: (l.start, l.end)):
        if d.line_type(l) == LineType.HOLE:
            labels[id(l)] = _pool(_HOLE_LABELS, holes, "h")
            holes += 1
        else:
            labels[id(l)] = _pool(_PARTICLE_LABELS, particles, "x")
            particles += 1
    return d.with_lines(Line(l.start, l.end, labels[id(l)]) for l in d.lines)


def render_text(d: Diagram) -> str:
    """Plain description, vertices bottom to top, then lines."""
    out = [f"{d.target} diagram  key={canonical_key(d)}"]
    for v in d.vertices:
        co = " (effective vertex co-level)" if v.level == d.effective_level else ""
        out.append(f"  {v.index}: {v.label} rank={v.rank} level={v.level}{co}")
    if d.target == HEFF:
        out.append(f"  eff: V_eff level={d.effective_level}")
    for l in sorted(d.lines, key=lambda l: (str(l.start), str(l.end))):
        src = "eff" if l.start is None else f"{d.vertex(l.source).label}.{l.start[1]}"
        dst = "eff" if l.end is None else f"{d.vertex(l.target).label}.{l.end[1]}"
        out.append(f"  {l.label or '?'}: {src} -> {dst} [{d.line_type(l).value}]")
    out.append(f"  sign={sign_factor(d):+d} weight={weight_factor(d)} linked={is_linked(d)}")
    return "\n".join(out)


_DOT_STYLE = {
    LineType.PARTICLE: "solid",
    LineType.HOLE: "solid",
    LineType.VALENCE: "dashed",
    LineType.FREE: "dotted",
}


def render_dot(d: Diagram) -> str:
    """Graphviz digraph with one rank group per level."""
    out = ["digraph diagram {", "  rankdir=BT;"]
    by_level: Dict[Fraction, List[str]] = {}
    for v in d.vertices:
        by_level.setdefault(v.level, []).append(f"v{v.index}")
        out.append(f'  v{v.index} [label="{v.label}", shape=box];')
    out.append('  eff [label="eff", shape=box, style=dashed];')
    by_level.setdefault(d.effective_level, []).append("eff")
    for level in sorted(by_level):
        out.append("  { rank=same; " + "; ".join(by_level[level]) + "; }")
    for l in sorted(d.lines, key=lambda l: (str(l.start), str(l.end))):
        src = "eff" if l.source is None else f"v{l.source}"
        dst = "eff" if l.target is None else f"v{l.target}"
        style = _DOT_STYLE[d.line_type(l)]
        out.append(f'  {src} -> {dst} [label="{l.label}", style={style}];')
    out.append("}")
    return "\n".join(out)


def format_energy_sum(expr: sympy.Expr) -> str:
    """
    Print a signed sum of orbital energies as (ε_a+ε_b−ε_n−ε_t).

    Positive terms come first, then negative ones, each sorted by label.
    """
    expr = sympy.expand(expr)
    coeffs = expr.as_coefficients_dict()
    pos, neg = [], []
    for sym, c in coeffs.items():
        if c == 0:
            continue
        name = str(sym)
        mult = abs(int(c))
        (pos if c > 0 else neg).extend([name] * mult)
    body = "+".join(sorted(pos))
    if neg:
        body += "".join(f"−{name}" for name in sorted(neg))
    return f"({body or '0'})"


if __name__ == "__main__":
    # order-2 particle-particle ladder with two valence electrons in and out
    vertices = (Vertex(1, VertexKind.V, 2, Fraction(1)), Vertex(2, VertexKind.V, 2, Fraction(2)))
    lines = (
        Line(None, (1, 0)), Line(None, (1, 1)),
        Line((1, 0), (2, 0)), Line((1, 1), (2, 1)),
        Line((2, 0), None), Line((2, 1), None),
    )
    d = assign_labels(Diagram(HEFF, vertices, Fraction(3), lines))
    print(render_text(d))
    print(format_energy_sum(cut_denominator(d, 1)))
    print(render_dot(d))
