"""
Diagram Generation Module

Enumerates the inequivalent linked diagrams of the effective Hamiltonian
(orders 1-3 in V) and of the effective transition operator (orders 0-2 in
V) by exhaustive contraction of time-ordered vertex sequences.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

try:
    from mbdiag.diagram_ir import (
        HEFF,
        OEFF,
        Diagram,
        Line,
        Vertex,
        VertexKind,
        assign_labels,
        canonical_key,
        is_linked,
        validate_diagram,
    )
    from mbdiag.errors import MbdiagError, RankMismatch, UnsupportedOrder
    from mbdiag.model_core import ModelInstance, OperatorTensor
except ImportError:
    from diagram_ir import (
        HEFF,
        OEFF,
        Diagram,
        Line,
        Vertex,
        VertexKind,
        assign_labels,
        canonical_key,
        is_linked,
        validate_diagram,
    )
    from errors import MbdiagError, RankMismatch, UnsupportedOrder
    from model_core import ModelInstance, OperatorTensor

logger = logging.getLogger(__name__)

HEFF_ORDERS = (1, 2, 3)
OEFF_ORDERS = (0, 1, 2)


@dataclass(frozen=True)
class VertexSequence:
    """Vertex kinds and body ranks, bottom to top."""

    kinds: Tuple[VertexKind, ...]
    ranks: Tuple[int, ...]

    def __post_init__(self):
        if len(self.kinds) != len(self.ranks):
            raise MbdiagError("every vertex needs exactly one rank")
        if sum(1 for k in self.kinds if k == VertexKind.O) > 1:
            raise MbdiagError("a vertex sequence carries at most one O vertex")

    @property
    def target(self) -> str:
        return OEFF if VertexKind.O in self.kinds else HEFF

    @property
    def o_position(self) -> Optional[int]:
        for i, kind in enumerate(self.kinds, 1):
            if kind == VertexKind.O:
                return i
        return None

    def vertices(self) -> Tuple[Vertex, ...]:
        return tuple(
            Vertex(i, kind, rank, Fraction(i))
            for i, (kind, rank) in enumerate(zip(self.kinds, self.ranks), 1)
        )

    @property
    def effective_level(self) -> Fraction:
        pos = self.o_position
        return Fraction(pos) if pos is not None else Fraction(len(self.kinds) + 1)

    def diagram(self, lines: Iterable[Line]) -> Diagram:
        return Diagram(self.target, self.vertices(), self.effective_level, tuple(lines))

    def __str__(self) -> str:
        return "".join(f"{k.value}{r}" for k, r in zip(self.kinds, self.ranks))


def vertex_sequences(target: str, order: int, model: ModelInstance) -> List[VertexSequence]:
    """
    All vertex sequences of the given order in V.

    For the transition operator every placement of O among the V vertices
    is a separate sequence.
    """
    v_ranks = model.v_ranks
    out = []
    if target == HEFF:
        for ranks in itertools.product(v_ranks, repeat=order):
            out.append(VertexSequence((VertexKind.V,) * order, tuple(ranks)))
    elif target == OEFF:
        for below in range(order + 1):
            for ranks in itertools.product(v_ranks, repeat=order):
                kinds = (VertexKind.V,) * below + (VertexKind.O,) + (VertexKind.V,) * (order - below)
                full = tuple(ranks[:below]) + (model.O.rank,) + tuple(ranks[below:])
                out.append(VertexSequence(kinds, full))
    else:
        raise MbdiagError(f"unknown target {target!r}")
    return out


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _count_matrices(ranks: Sequence[int]) -> Iterator[Dict[Tuple[Optional[int], Optional[int]], int]]:
    """Line counts between vertex pairs that respect every port budget."""
    n = len(ranks)
    solid = list(range(1, n + 1))

    def targets(i):
        return [j for j in solid if j != i] + [None]

    def extend(i, counts, inbound):
        if i > n:
            full = dict(counts)
            for j in solid:
                missing = ranks[j - 1] - inbound[j]
                if missing:
                    full[(None, j)] = missing
            yield full
            return
        dests = targets(i)
        for split in _compositions(ranks[i - 1], len(dests)):
            new_in = dict(inbound)
            ok = True
            for j, c in zip(dests, split):
                if j is not None:
                    new_in[j] += c
                    if new_in[j] > ranks[j - 1]:
                        ok = False
                        break
            if not ok:
                continue
            new_counts = dict(counts)
            for j, c in zip(dests, split):
                if c:
                    new_counts[(i, j)] = c
            yield from extend(i + 1, new_counts, new_in)

    yield from extend(1, {}, {j: 0 for j in solid})


def _node_order(x: Optional[int]) -> int:
    return 0 if x is None else x


def _lines_from_counts(counts: Dict[Tuple[Optional[int], Optional[int]], int]) -> List[Line]:
    next_bra: Dict[int, int] = {}
    next_ket: Dict[int, int] = {}
    lines = []
    for (src, dst) in sorted(counts, key=lambda p: (_node_order(p[0]), _node_order(p[1]))):
        for _ in range(counts[(src, dst)]):
            start = end = None
            if src is not None:
                start = (src, next_bra.get(src, 0))
                next_bra[src] = start[1] + 1
            if dst is not None:
                end = (dst, next_ket.get(dst, 0))
                next_ket[dst] = end[1] + 1
            lines.append(Line(start, end))
    return lines


def wick_contractions(seq: VertexSequence, model: Optional[ModelInstance] = None) -> List[Diagram]:
    """
    All distinct contractions of a vertex sequence.

    Each port either joins a port of another vertex or becomes an external
    line to the effective vertex. Results are labeled and ordered by
    canonical key; linked and unlinked diagrams are both returned.

    Args:
        seq: Vertex sequence.
        model: When given, every V rank must be present in the model.

    Returns:
        Diagrams with distinct canonical keys.
    """
    if model is not None:
        present = set(model.v_ranks)
        for kind, rank in zip(seq.kinds, seq.ranks):
            if kind == VertexKind.V and rank not in present:
                raise RankMismatch(f"model has no {rank}-body perturbation part")
    found: Dict[str, Diagram] = {}
    for counts in _count_matrices(seq.ranks):
        d = seq.diagram(_lines_from_counts(counts))
        problems = validate_diagram(d)
        if problems:
            logger.debug("Dropping %s: %s", seq, problems)
            continue
        found.setdefault(canonical_key(d), d)
    return [assign_labels(found[k]) for k in sorted(found)]


def _linked_union(sequences: Iterable[VertexSequence], model: ModelInstance) -> List[Diagram]:
    merged: Dict[str, Diagram] = {}
    for seq in sequences:
        for d in wick_contractions(seq, model):
            if is_linked(d):
                merged.setdefault(canonical_key(d), d)
    return [merged[k] for k in sorted(merged)]


def enumerate_heff(order: int, model: ModelInstance) -> List[Diagram]:
    """Linked effective Hamiltonian diagrams of the given order in V."""
    if order not in HEFF_ORDERS:
        raise UnsupportedOrder(f"effective Hamiltonian order {order} outside {HEFF_ORDERS}")
    logger.info("[Enumerating effective Hamiltonian order %d ...]", order)
    diagrams = _linked_union(vertex_sequences(HEFF, order, model), model)
    logger.info("Found %d linked diagrams", len(diagrams))
    return diagrams


def enumerate_oeff(order: int, model: ModelInstance) -> List[Diagram]:
    """Linked effective transition operator diagrams, order counted in V."""
    if order not in OEFF_ORDERS:
        raise UnsupportedOrder(f"effective operator order {order} outside {OEFF_ORDERS}")
    logger.info("[Enumerating effective operator order %d ...]", order)
    diagrams = _linked_union(vertex_sequences(OEFF, order, model), model)
    logger.info("Found %d linked diagrams", len(diagrams))
    return diagrams


def pairing_keys(seq: VertexSequence, linked_only: bool = True) -> Set[str]:
    """
    Canonical keys found by pairing ports one at a time.

    Every bra port either goes to the effective vertex or to a free ket
    port on another vertex; unpaired ket ports are fed by the effective
    vertex. This walks every port-level assignment, so it is slow, and it
    shares nothing with the count-based generator above.
    """
    bras = [(i, p) for i, r in enumerate(seq.ranks, 1) for p in range(r)]
    kets = list(bras)
    keys: Set[str] = set()

    def extend(k, used, lines):
        if k == len(bras):
            full = lines + [Line(None, ket) for ket in kets if ket not in used]
            d = seq.diagram(full)
            if not linked_only or is_linked(d):
                keys.add(canonical_key(d))
            return
        bra = bras[k]
        extend(k + 1, used, lines + [Line(bra, None)])
        for ket in kets:
            if ket not in used and ket[0] != bra[0]:
                extend(k + 1, used | {ket}, lines + [Line(bra, ket)])

    extend(0, frozenset(), [])
    return keys


def folded_third_order(model: ModelInstance) -> OperatorTensor:
    """
    Renormalization term of the third-order effective Hamiltonian.

    Built on the model sector as -(P V R^2 V P - S2) (P V P), where S2 is
    the closed core expectation value of V R^2 V, and returned as a
    valence tensor whose rank is the valence electron count.
    """
    try:
        from mbdiag.oracle import folded_matrix, tensor_from_model_matrix
    except ImportError:
        from oracle import folded_matrix, tensor_from_model_matrix

    return tensor_from_model_matrix(folded_matrix(model), model)


if __name__ == "__main__":
    try:
        from mbdiag.model_core import random_model
    except ImportError:
        from model_core import random_model

    model = random_model(0, 2, 2, 2, 2)
    for k in HEFF_ORDERS:
        print(f"heff order {k}: {len(enumerate_heff(k, model))} diagrams")
    for k in OEFF_ORDERS:
        print(f"oeff order {k}: {len(enumerate_oeff(k, model))} diagrams")
