"""
Evaluation Engine Module

Turns a diagram and a model into the coefficient tensor of the operator
it contributes, and sums whole perturbation orders.

Each diagram is contracted in one einsum that keeps every line axis, so
denominators, projected-out intermediate states and exclusion-violating
coincidences can be applied as broadcast masks before the internal axes
are summed.
"""

import asyncio
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy

try:
    from mbdiag.config import get_settings
    from mbdiag.diagram_gen import enumerate_heff, enumerate_oeff, folded_third_order
    from mbdiag.diagram_ir import (
        HEFF,
        OEFF,
        Diagram,
        Line,
        LineType,
        Orientation,
        VertexKind,
        cut,
        cut_denominator,
        e_noe,
        open_paths,
        prefix_nodes,
        sign_factor,
        validate_diagram,
        weight_factor,
    )
    from mbdiag.errors import DegenerateDenominator, MbdiagError, UnassignedExternal
    from mbdiag.model_core import ModelInstance, OperatorSum, OperatorTensor, Space
except ImportError:
    from config import get_settings
    from diagram_gen import enumerate_heff, enumerate_oeff, folded_third_order
    from diagram_ir import (
        HEFF,
        OEFF,
        Diagram,
        Line,
        LineType,
        Orientation,
        VertexKind,
        cut,
        cut_denominator,
        e_noe,
        open_paths,
        prefix_nodes,
        sign_factor,
        validate_diagram,
        weight_factor,
    )
    from errors import DegenerateDenominator, MbdiagError, UnassignedExternal
    from model_core import ModelInstance, OperatorSum, OperatorTensor, Space

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiagramValue:
    """Value of one diagram plus the bookkeeping that produced it."""

    tensor: OperatorTensor
    sign: int
    weight: Fraction
    denominators: Tuple[sympy.Expr, ...]
    terms: int


def denominator_product(d: Diagram) -> sympy.Expr:
    """(-1)^(n-1) times the product of cumulative net outflow energies."""
    total = sympy.Integer(-1) ** (d.n - 1)
    for i in range(1, d.n):
        total *= e_noe(d, prefix_nodes(d, i))
    return total


def _line_range(d: Diagram, line: Line, m: ModelInstance) -> np.ndarray:
    kind = d.line_type(line)
    if kind == LineType.HOLE:
        ids = m.core
    elif kind == LineType.PARTICLE:
        ids = m.particles
    else:
        ids = m.valence
    return np.asarray(ids, dtype=int)


def line_ranges(d: Diagram, m: ModelInstance) -> List[np.ndarray]:
    """Orbitals each line runs over, in the order of d.lines."""
    return [_line_range(d, l, m) for l in d.lines]


def _along(values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = values.shape[0]
    return values.reshape(shape)


def _vertex_tensor(d: Diagram, index: int, m: ModelInstance) -> Optional[OperatorTensor]:
    v = d.vertex(index)
    if v.kind == VertexKind.O:
        return m.O if m.O.rank == v.rank else None
    return m.v_part(v.rank)


def contract(d: Diagram, m: ModelInstance, ranges: Sequence[np.ndarray]) -> Optional[np.ndarray]:
    """
    Product of the vertex coefficients with one axis per line.

    Returns:
        The numerator array, or None when the diagram vanishes on the model.
    """
    axis = {id(l): k for k, l in enumerate(d.lines)}
    operands = []
    for v in d.vertices:
        tensor = _vertex_tensor(d, v.index, m)
        if tensor is None or not tensor.entries:
            return None
        ports = [d.line_at_bra(v.index, k) for k in range(v.rank)]
        ports += [d.line_at_ket(v.index, k) for k in range(v.rank)]
        block = tensor.dense[np.ix_(*[ranges[axis[id(l)]] for l in ports])] if ports else tensor.dense
        operands.extend([block, [axis[id(l)] for l in ports]])
    if any(r.size == 0 for r in ranges):
        return None
    return np.einsum(*operands, list(range(len(ranges))))


def line_energies(m: ModelInstance, ranges: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Orbital energy of every line, broadcast along its own axis."""
    return [_along(m.energies[r], k, len(ranges)) for k, r in enumerate(ranges)]


def noe_array(d: Diagram, subset: Iterable[Optional[int]], energies: Sequence[np.ndarray]) -> np.ndarray:
    """Numeric e_noe of a vertex subset for every index assignment."""
    inside = set(subset)
    total = np.zeros([1] * len(energies))
    for k, l in enumerate(d.lines):
        if not d.in_energy(l):
            continue
        src_in = l.source in inside
        dst_in = l.target in inside
        if src_in and not dst_in:
            total = total + energies[k]
        elif dst_in and not src_in:
            total = total - energies[k]
    return total


def denominator_scale(m: ModelInstance) -> float:
    eps = m.energies
    return max(1.0, float(np.max(np.abs(eps)))) if eps.size else 1.0


def cut_masks(
    d: Diagram,
    m: ModelInstance,
    ranges: Sequence[np.ndarray],
    *,
    skip_exclusion_violating: bool = False,
) -> Tuple[np.ndarray, List[Tuple[int, np.ndarray]]]:
    """
    Kept index assignments and the energy denominator of every cut.

    An assignment is dropped when the intermediate state at some cut lies
    in the model space, or, with skip_exclusion_violating, when two lines
    crossing one cut in the same direction carry the same orbital.
    """
    L = len(ranges)
    axis = {id(l): k for k, l in enumerate(d.lines)}
    eps = m.energies
    is_valence = np.array([o.space == Space.VALENCE for o in sorted(m.orbitals, key=lambda o: o.id)])
    keep = np.ones([1] * L, dtype=bool)
    dens = []
    for i in range(1, d.n):
        crossing = cut(d, i).crossing
        den = np.zeros([1] * L)
        for l in crossing:
            k = axis[id(l)]
            e = _along(eps[ranges[k]], k, L)
            den = den + e if d.orientation(l) == Orientation.DOWN else den - e
        if not any(d.line_type(l) == LineType.HOLE for l in crossing):
            in_model = np.ones([1] * L, dtype=bool)
            for l in crossing:
                if d.line_type(l) == LineType.PARTICLE:
                    k = axis[id(l)]
                    in_model = in_model & _along(is_valence[ranges[k]], k, L)
            keep = keep & ~in_model
        if skip_exclusion_violating:
            for a_pos, a in enumerate(crossing):
                for b in crossing[a_pos + 1:]:
                    if d.orientation(a) != d.orientation(b):
                        continue
                    ka, kb = axis[id(a)], axis[id(b)]
                    same = _along(ranges[ka], ka, L) == _along(ranges[kb], kb, L)
                    keep = keep & ~same
        dens.append((i, den))
    return keep, dens


def check_denominator(
    d: Diagram,
    cut_index: int,
    den: np.ndarray,
    keep: np.ndarray,
    ranges: Sequence[np.ndarray],
    limit: float,
) -> None:
    """Raise DegenerateDenominator if a kept assignment has |den| < limit."""
    bad = keep & (np.abs(den) < limit)
    if bad.any():
        where = tuple(int(x) for x in np.argwhere(bad)[0])
        assignment = {
            (l.label or f"line{k}"): int(ranges[k][where[k]]) for k, l in enumerate(d.lines)
        }
        raise DegenerateDenominator(cut_index, assignment, float(den[where]))


def cut_product(
    d: Diagram,
    m: ModelInstance,
    ranges: Sequence[np.ndarray],
    shape: Tuple[int, ...],
    *,
    skip_exclusion_violating: bool = False,
    tol: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Kept assignments and the product of their cut denominators (1 elsewhere)."""
    keep, dens = cut_masks(d, m, ranges, skip_exclusion_violating=skip_exclusion_violating)
    keep = np.broadcast_to(keep, shape)
    limit = tol * denominator_scale(m)
    den_total = np.ones(shape)
    for i, den in dens:
        den = np.broadcast_to(den, shape)
        check_denominator(d, i, den, keep, ranges, limit)
        den_total = den_total * np.where(keep, den, 1.0)
    return keep, den_total


def project(d: Diagram, m: ModelInstance, value: np.ndarray) -> OperatorTensor:
    """Sum the internal axes and place the open paths on valence orbitals."""
    axis = {id(l): k for k, l in enumerate(d.lines)}
    paths = open_paths(d)
    rank = len(paths)
    out_axes = [axis[id(p[-1])] for p in paths] + [axis[id(p[0])] for p in paths]
    summed = np.einsum(value, list(range(len(d.lines))), out_axes)
    if rank == 0:
        return OperatorTensor.scalar(float(summed), m.n_orbitals)
    full = np.zeros((m.n_orbitals,) * (2 * rank))
    valence = np.asarray(m.valence, dtype=int)
    full[np.ix_(*[valence] * (2 * rank))] = summed
    return OperatorTensor.from_array(full, rank)


def evaluate_diagram(
    d: Diagram,
    m: ModelInstance,
    *,
    skip_exclusion_violating: bool = False,
    tol: Optional[float] = None,
) -> DiagramValue:
    """
    Evaluate one diagram on a model.

    Hole lines run over core orbitals, particle lines over valence and
    virtual orbitals, and external lines over valence orbitals. Index
    assignments whose intermediate state at some cut lies in the model
    space are skipped.

    Args:
        d: A validated diagram.
        m: The model.
        skip_exclusion_violating: Drop terms where two lines crossing the
            same cut in the same direction carry one orbital.
        tol: Relative zero tolerance for denominators.

    Returns:
        The DiagramValue; its tensor has rank equal to the number of bra
        external lines.
    """
    problems = validate_diagram(d)
    if problems:
        raise MbdiagError("invalid diagram: " + "; ".join(problems))
    if d.external_lines and not m.valence:
        raise UnassignedExternal("diagram has external lines but the model has no valence orbitals")
    tol = get_settings().denominator_tol if tol is None else tol

    rank = len(open_paths(d))
    sign = sign_factor(d)
    weight = weight_factor(d)
    denominators = tuple(cut_denominator(d, i) for i in range(1, d.n))

    ranges = line_ranges(d, m)
    product = contract(d, m, ranges)
    if product is None:
        return _zero_value(m, rank, sign, weight, denominators)
    keep, den_total = cut_product(
        d, m, ranges, product.shape, skip_exclusion_violating=skip_exclusion_violating, tol=tol
    )
    terms = int(np.count_nonzero(keep))
    value = np.where(keep, product / den_total, 0.0) * (sign * float(weight))
    tensor = project(d, m, value)
    logger.debug("Evaluated %s: %d terms", d, terms)
    return DiagramValue(tensor, sign, weight, denominators, terms)


def _zero_value(m, rank, sign, weight, denominators) -> DiagramValue:
    tensor = OperatorTensor.zero(rank, m.n_orbitals)
    return DiagramValue(tensor, sign, weight, denominators, 0)


def evaluable(d: Diagram, m: ModelInstance) -> bool:
    """Whether a diagram can contribute at all on this model."""
    if d.effective_rank > len(m.valence):
        return False
    return not (d.external_lines and not m.valence)


async def evaluate_diagrams_async(
    diagrams: Sequence[Diagram],
    m: ModelInstance,
    *,
    skip_exclusion_violating: bool = False,
    workers: Optional[int] = None,
) -> List[DiagramValue]:
    """
    Evaluate diagrams concurrently (asynchronous).

    At most `workers` evaluations run at once in the default thread pool.
    Results come back in input order.
    """
    semaphore = asyncio.Semaphore(workers or get_settings().workers)
    loop = asyncio.get_running_loop()

    async def one(d):
        async with semaphore:
            return await loop.run_in_executor(
                None, partial(evaluate_diagram, d, m, skip_exclusion_violating=skip_exclusion_violating)
            )

    return list(await asyncio.gather(*(one(d) for d in diagrams)))


def evaluate_diagrams(
    diagrams: Sequence[Diagram],
    m: ModelInstance,
    *,
    skip_exclusion_violating: bool = False,
    workers: Optional[int] = None,
) -> List[DiagramValue]:
    workers = workers or get_settings().workers
    if workers <= 1 or len(diagrams) <= 1:
        return [
            evaluate_diagram(d, m, skip_exclusion_violating=skip_exclusion_violating) for d in diagrams
        ]
    return asyncio.run(
        evaluate_diagrams_async(
            diagrams, m, skip_exclusion_violating=skip_exclusion_violating, workers=workers
        )
    )


def evaluate_order_sum(
    target: str,
    order: int,
    m: ModelInstance,
    *,
    include_folded: bool = True,
    skip_exclusion_violating: bool = False,
    workers: Optional[int] = None,
) -> OperatorSum:
    """
    Sum of every linked diagram of one order.

    For the third-order effective Hamiltonian the folded term is added
    unless include_folded is False.

    Args:
        target: "heff" or "oeff".
        order: Order in V.
        m: The model.
        include_folded: Add the third-order renormalization term.
        skip_exclusion_violating: Passed to evaluate_diagram.
        workers: Concurrent evaluations, defaulting to MBDIAG_THREADS.

    Returns:
        The order's operator, one tensor per rank.
    """
    if target == HEFF:
        diagrams = enumerate_heff(order, m)
    elif target == OEFF:
        diagrams = enumerate_oeff(order, m)
    else:
        raise MbdiagError(f"unknown target {target!r}")
    diagrams = [d for d in diagrams if evaluable(d, m)]
    logger.info("[Evaluating %d %s diagrams of order %d ...]", len(diagrams), target, order)
    values = evaluate_diagrams(
        diagrams, m, skip_exclusion_violating=skip_exclusion_violating, workers=workers
    )
    total = OperatorSum.of(v.tensor for v in values)
    if target == HEFF and order == 3 and include_folded:
        total = total + folded_third_order(m)
    return total


def tensors_by_rank(total: OperatorSum) -> Dict[int, OperatorTensor]:
    return {p.rank: p for p in total.parts}


if __name__ == "__main__":
    try:
        from mbdiag.model_core import random_model
    except ImportError:
        from model_core import random_model

    model = random_model(3, 2, 2, 2, 1)
    for k in (1, 2):
        total = evaluate_order_sum(HEFF, k, model, workers=1)
        print(f"order {k}:", [(p.rank, round(p.max_abs(), 6)) for p in total.parts])
