"""
Model Core Module

Orbital spaces, antisymmetrized n-body operator tensors, model files and
deterministic random models for property tests.

Tensors hold the coefficients t of

    T_n = 1/(n!)^2 sum t[a1..an, b1..bn] a+_a1 ... a+_an a_bn ... a_b1

for operators normal-ordered with respect to the closed-shell core.
Storage is sparse and keyed by the sorted bra and sorted ket tuples, so
antisymmetry holds by construction.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sympy.combinatorics import Permutation

try:
    from mbdiag.errors import ModelError, RankMismatch, UnknownOrbital
except ImportError:
    from errors import ModelError, RankMismatch, UnknownOrbital

logger = logging.getLogger(__name__)

Key = Tuple[Tuple[int, ...], Tuple[int, ...]]


class Space(str, Enum):
    CORE = "core"
    VALENCE = "valence"
    VIRTUAL = "virtual"


@dataclass(frozen=True)
class Orbital:
    id: int
    energy: float
    space: Space


def sort_with_sign(indices: Sequence[int]) -> Tuple[Optional[Tuple[int, ...]], int]:
    """
    Sort an index tuple and report the permutation parity.

    Args:
        indices: Orbital ids in any order.

    Returns:
        (sorted tuple, +1/-1), or (None, 0) when an index repeats.
    """
    items = list(indices)
    if len(set(items)) != len(items):
        return None, 0
    order = sorted(range(len(items)), key=items.__getitem__)
    return tuple(items[i] for i in order), permutation_sign(order)


def permutation_sign(perm: Sequence[int]) -> int:
    """Parity of a permutation of 0..n-1."""
    if len(perm) < 2:
        return 1
    return Permutation(list(perm)).signature()


@dataclass(frozen=True, eq=False)
class OperatorTensor:
    """Antisymmetric coefficient table of an n-body operator."""

    rank: int
    n_orbitals: int
    entries: Mapping[Key, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    @classmethod
    def zero(cls, rank: int, n_orbitals: int) -> "OperatorTensor":
        return cls(rank, n_orbitals, {})

    @classmethod
    def scalar(cls, value: float, n_orbitals: int) -> "OperatorTensor":
        """Rank-0 tensor holding a constant."""
        return cls(0, n_orbitals, {((), ()): float(value)} if value != 0.0 else {})

    @classmethod
    def from_array(cls, array: np.ndarray, rank: int, tol: float = 0.0) -> "OperatorTensor":
        """
        Build a tensor from a dense raw coefficient array.

        The array is projected onto its antisymmetric part by signed
        averaging over bra and ket permutations. The represented operator
        is unchanged by this projection.

        Args:
            array: Array of shape (N,) * 2n.
            rank: n.
            tol: Entries with magnitude <= tol are dropped.

        Returns:
            The antisymmetric tensor.
        """
        array = np.asarray(array, dtype=float)
        if array.ndim != 2 * rank:
            raise RankMismatch(f"array of ndim {array.ndim} cannot hold a rank-{rank} tensor")
        n_orbitals = array.shape[0] if rank else 0
        if rank == 0:
            return cls.scalar(float(array), n_orbitals)
        anti = _antisymmetrize_array(array, rank)
        entries = {}
        for bra in itertools.combinations(range(n_orbitals), rank):
            for ket in itertools.combinations(range(n_orbitals), rank):
                value = float(anti[bra + ket])
                if abs(value) > tol:
                    entries[(bra, ket)] = value
        return cls(rank, n_orbitals, entries)

    def coefficient(self, bra: Sequence[int], ket: Sequence[int]) -> float:
        return coefficient(self, bra, ket)

    def items(self) -> Iterable[Tuple[Key, float]]:
        return sorted(self.entries.items())

    def max_abs(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def max_index(self) -> int:
        """Largest orbital id referenced, -1 for an empty or scalar tensor."""
        best = -1
        for bra, ket in self.entries:
            for idx in bra + ket:
                best = max(best, idx)
        return best

    def scaled(self, factor: float) -> "OperatorTensor":
        return OperatorTensor(
            self.rank, self.n_orbitals, {k: factor * v for k, v in self.entries.items()}
        )

    def __add__(self, other: "OperatorTensor") -> "OperatorTensor":
        if self.rank != other.rank:
            raise RankMismatch(f"cannot add rank {self.rank} and rank {other.rank}")
        merged = dict(self.entries)
        for key, value in other.entries.items():
            merged[key] = merged.get(key, 0.0) + value
        return OperatorTensor(self.rank, max(self.n_orbitals, other.n_orbitals), merged)

    @cached_property
    def dense(self) -> np.ndarray:
        """Full antisymmetric array of shape (N,) * 2n, read-only."""
        n = self.n_orbitals
        out = np.zeros((n,) * (2 * self.rank))
        perms = [
            (p, permutation_sign(p)) for p in itertools.permutations(range(self.rank))
        ]
        for (bra, ket), value in self.entries.items():
            for pb, sb in perms:
                b = tuple(bra[i] for i in pb)
                for pk, sk in perms:
                    k = tuple(ket[i] for i in pk)
                    out[b + k] = sb * sk * value
        out.flags.writeable = False
        return out

    def __repr__(self) -> str:
        return f"OperatorTensor(rank={self.rank}, n_orbitals={self.n_orbitals}, nnz={len(self.entries)})"


def _antisymmetrize_array(array: np.ndarray, rank: int) -> np.ndarray:
    perms = list(itertools.permutations(range(rank)))
    out = np.zeros_like(array)
    for pb in perms:
        sb = permutation_sign(pb)
        for pk in perms:
            sk = permutation_sign(pk)
            axes = list(pb) + [rank + i for i in pk]
            out += sb * sk * np.transpose(array, axes)
    return out / (math.factorial(rank) ** 2)


def antisymmetrize(raw: Mapping[Key, float], rank: int, n_orbitals: Optional[int] = None) -> OperatorTensor:
    """
    Build an antisymmetrized tensor from a plain product-basis kernel.

    For sorted bra a and sorted ket b the stored value is
    sum over ket permutations tau of sgn(tau) * raw(a, tau b), the usual
    direct-minus-exchange form for two-body kernels. Other orderings follow by antisymmetry.

    Args:
        raw: Mapping from (bra tuple, ket tuple) to value.
        rank: Body count n.
        n_orbitals: Orbital count, inferred from the largest index if omitted.

    Returns:
        The antisymmetrized OperatorTensor.
    """
    for bra, ket in raw:
        if len(bra) != rank or len(ket) != rank:
            raise RankMismatch(f"entry {bra},{ket} does not have rank {rank}")
    if n_orbitals is None:
        n_orbitals = 1 + max((i for bra, ket in raw for i in bra + ket), default=-1)
    keys = set()
    for bra, ket in raw:
        sbra, _ = sort_with_sign(bra)
        sket, _ = sort_with_sign(ket)
        if sbra is not None and sket is not None:
            keys.add((sbra, sket))
    perms = [(p, permutation_sign(p)) for p in itertools.permutations(range(rank))]
    entries = {}
    for bra, ket in keys:
        value = 0.0
        for p, sign in perms:
            value += sign * raw.get((bra, tuple(ket[i] for i in p)), 0.0)
        if value != 0.0:
            entries[(bra, ket)] = value
    return OperatorTensor(rank, n_orbitals, entries)


def coefficient(t: OperatorTensor, bra: Sequence[int], ket: Sequence[int]) -> float:
    """
    Look up a coefficient with antisymmetry applied.

    Args:
        t: The tensor.
        bra: Bra index tuple of length rank.
        ket: Ket index tuple of length rank.

    Returns:
        The signed stored value, exactly 0 for a repeated index.
    """
    if len(bra) != t.rank or len(ket) != t.rank:
        raise RankMismatch(f"expected {t.rank} bra and ket indices, got {len(bra)} and {len(ket)}")
    for idx in tuple(bra) + tuple(ket):
        if idx < 0 or idx >= t.n_orbitals:
            raise UnknownOrbital(f"orbital {idx} outside 0..{t.n_orbitals - 1}")
    sbra, sign_b = sort_with_sign(bra)
    sket, sign_k = sort_with_sign(ket)
    if sbra is None or sket is None:
        return 0.0
    return sign_b * sign_k * t.entries.get((sbra, sket), 0.0)


@dataclass(frozen=True, eq=False)
class OperatorSum:
    """An operator made of tensors of distinct ranks."""

    parts: Tuple[OperatorTensor, ...] = ()

    @classmethod
    def of(cls, tensors: Iterable[OperatorTensor]) -> "OperatorSum":
        by_rank: Dict[int, OperatorTensor] = {}
        for t in tensors:
            by_rank[t.rank] = by_rank[t.rank] + t if t.rank in by_rank else t
        return cls(tuple(by_rank[r] for r in sorted(by_rank)))

    @property
    def ranks(self) -> List[int]:
        return [p.rank for p in self.parts]

    def part(self, rank: int) -> Optional[OperatorTensor]:
        for p in self.parts:
            if p.rank == rank:
                return p
        return None

    def __add__(self, other) -> "OperatorSum":
        extra = other.parts if isinstance(other, OperatorSum) else (other,)
        return OperatorSum.of(self.parts + tuple(extra))

    def scaled(self, factor: float) -> "OperatorSum":
        return OperatorSum(tuple(p.scaled(factor) for p in self.parts))


@dataclass(frozen=True, eq=False)
class ModelInstance:
    orbitals: Tuple[Orbital, ...]
    valence_electrons: int
    V: Tuple[OperatorTensor, ...]
    O: OperatorTensor
    lam: float = 1.0

    @property
    def n_orbitals(self) -> int:
        return len(self.orbitals)

    def ids(self, space: Space) -> List[int]:
        return [o.id for o in self.orbitals if o.space == space]

    @property
    def core(self) -> List[int]:
        return self.ids(Space.CORE)

    @property
    def valence(self) -> List[int]:
        return self.ids(Space.VALENCE)

    @property
    def virtual(self) -> List[int]:
        return self.ids(Space.VIRTUAL)

    @property
    def particles(self) -> List[int]:
        """Particle states of the core vacuum: valence and virtual."""
        return [o.id for o in self.orbitals if o.space != Space.CORE]

    @cached_property
    def energies(self) -> np.ndarray:
        eps = np.array([o.energy for o in sorted(self.orbitals, key=lambda o: o.id)], dtype=float)
        eps.flags.writeable = False
        return eps

    @property
    def n_electrons(self) -> int:
        return len(self.core) + self.valence_electrons

    def v_part(self, rank: int) -> Optional[OperatorTensor]:
        """Perturbation part of the given rank, with lambda applied."""
        parts = [t for t in self.V if t.rank == rank]
        if not parts:
            return None
        total = parts[0]
        for extra in parts[1:]:
            total = total + extra
        return total.scaled(self.lam)

    @property
    def v_ranks(self) -> List[int]:
        return sorted({t.rank for t in self.V if t.entries})

    def with_lambda(self, lam: float) -> "ModelInstance":
        return ModelInstance(self.orbitals, self.valence_electrons, self.V, self.O, lam)

    def with_operator(self, O: OperatorTensor) -> "ModelInstance":
        return ModelInstance(self.orbitals, self.valence_electrons, self.V, O, self.lam)


def validate_model(m: ModelInstance) -> List[str]:
    """
    Check every model invariant.

    Args:
        m: The model to check.

    Returns:
        Human-readable violations, empty when the model is well formed.
    """
    violations = []
    ids = [o.id for o in m.orbitals]
    if sorted(ids) != list(range(len(ids))):
        violations.append(f"orbital ids must be unique and contiguous from 0, got {sorted(ids)}")
    core = [o.energy for o in m.orbitals if o.space == Space.CORE]
    valence = [o.energy for o in m.orbitals if o.space == Space.VALENCE]
    virtual = [o.energy for o in m.orbitals if o.space == Space.VIRTUAL]
    if core and virtual and max(core) >= min(virtual):
        violations.append("core orbital energies must lie strictly below virtual orbital energies")
    if valence and max(valence) - min(valence) > 1e-12:
        violations.append("non-degenerate model space: valence orbital energies differ")
    if m.valence_electrons < 0:
        violations.append("valence_electron_count must be >= 0")
    if m.valence_electrons > len(valence):
        violations.append(
            f"valence_electron_count {m.valence_electrons} exceeds {len(valence)} valence orbitals"
        )
    n = len(m.orbitals)
    for k, t in enumerate(m.V):
        if t.rank < 1:
            violations.append(f"V[{k}] has rank {t.rank}; perturbation parts must be 1-body or more")
        if t.max_index() >= n:
            violations.append(f"V[{k}] references orbital {t.max_index()} in a {n}-orbital model")
    if m.O.rank < 1:
        violations.append(f"O has rank {m.O.rank}; transition operators must be 1-body or more")
    if m.O.max_index() >= n:
        violations.append(f"O references orbital {m.O.max_index()} in a {n}-orbital model")
    return violations


def _random_tensor(rng: np.random.Generator, rank: int, n: int, hermitian: bool) -> OperatorTensor:
    tuples = list(itertools.combinations(range(n), rank))
    entries = {}
    for i, bra in enumerate(tuples):
        for j, ket in enumerate(tuples):
            if hermitian and j < i:
                entries[(bra, ket)] = entries[(ket, bra)]
                continue
            entries[(bra, ket)] = float(rng.uniform(-1.0, 1.0))
    return OperatorTensor(rank, n, entries)


def random_model(
    seed: int,
    n_core: int,
    n_valence: int,
    n_virtual: int,
    valence_electrons: int,
    *,
    min_gap: float = 1.0,
    v_ranks: Sequence[int] = (1, 2),
    o_rank: int = 1,
    lam: float = 1.0,
) -> ModelInstance:
    """
    Generate a reproducible random model.

    Core energies lie below the degenerate valence level and virtual
    energies above it, each at least min_gap away. Every denominator that
    is not projected out then has magnitude >= min_gap. The contour oracle
    assumes gaps of order one; smaller gaps shrink its convergence radius.

    Args:
        seed: RNG seed.
        n_core: Number of core spin-orbitals.
        n_valence: Number of valence spin-orbitals.
        n_virtual: Number of virtual spin-orbitals.
        valence_electrons: Electrons in the valence shell.
        min_gap: Minimum separation between the three energy bands; must
            be positive.
        v_ranks: Body ranks present in V.
        o_rank: Body rank of O.
        lam: Coupling scale applied to V.

    Returns:
        A ModelInstance.
    """
    if not min_gap > 0.0:
        raise ModelError(f"min_gap must be positive, got {min_gap}")
    rng = np.random.default_rng(seed)
    orbitals = []
    core = sorted(-(min_gap + 2.0 * rng.random(n_core)))
    virtual = sorted(min_gap + 2.0 * rng.random(n_virtual))
    idx = 0
    for energy in core:
        orbitals.append(Orbital(idx, float(energy), Space.CORE))
        idx += 1
    for _ in range(n_valence):
        orbitals.append(Orbital(idx, 0.0, Space.VALENCE))
        idx += 1
    for energy in virtual:
        orbitals.append(Orbital(idx, float(energy), Space.VIRTUAL))
        idx += 1
    n = len(orbitals)
    V = tuple(_random_tensor(rng, r, n, hermitian=True) for r in v_ranks)
    O = _random_tensor(rng, o_rank, n, hermitian=False)
    return ModelInstance(tuple(orbitals), valence_electrons, V, O, lam)


_MODEL_FIELDS = {"orbitals", "valence_electrons", "V", "O", "lambda"}
_TENSOR_FIELDS = {"rank", "entries", "antisymmetrized"}
_ENTRY_FIELDS = {"bra", "ket", "value"}
_ORBITAL_FIELDS = {"id", "energy", "space"}


def _reject_unknown(doc: Mapping, allowed: set, where: str) -> None:
    if not isinstance(doc, Mapping):
        raise ModelError(f"{where} must be an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ModelError(f"unknown field(s) in {where}: {sorted(unknown)}")


def _field(doc: Mapping, name: str, convert, where: str):
    """Read one field, turning a missing key or a bad value into ModelError."""
    if name not in doc:
        raise ModelError(f"{where} is missing field '{name}'")
    try:
        return convert(doc[name])
    except (TypeError, ValueError) as e:
        raise ModelError(f"{where}: bad value for field '{name}': {e}")


def _list_field(doc: Mapping, name: str, where: str) -> list:
    value = _field(doc, name, lambda x: x, where)
    if not isinstance(value, list):
        raise ModelError(f"{where}: field '{name}' must be a list")
    return value


def _indices(value) -> Tuple[int, ...]:
    if not isinstance(value, list):
        raise TypeError(f"expected a list of orbital ids, got {value!r}")
    ids = tuple(int(i) for i in value)
    if any(i < 0 for i in ids):
        raise ValueError(f"negative orbital id in {value}")
    return ids


def tensor_from_dict(doc: Mapping, n_orbitals: int, where: str = "tensor") -> OperatorTensor:
    _reject_unknown(doc, _TENSOR_FIELDS, where)
    rank = _field(doc, "rank", int, where)
    if not 0 <= rank <= n_orbitals:
        raise ModelError(f"{where}: rank {rank} outside 0..{n_orbitals}")
    raw = {}
    for k, entry in enumerate(_list_field(doc, "entries", where)):
        at = f"{where} entry {k}"
        _reject_unknown(entry, _ENTRY_FIELDS, at)
        key = (_field(entry, "bra", _indices, at), _field(entry, "ket", _indices, at))
        if len(key[0]) != rank or len(key[1]) != rank:
            raise RankMismatch(f"{at} does not have rank {rank}")
        raw[key] = raw.get(key, 0.0) + _field(entry, "value", float, at)
    if not doc.get("antisymmetrized", False):
        return antisymmetrize(raw, rank, n_orbitals)
    entries: Dict[Key, float] = {}
    for (bra, ket), value in raw.items():
        sbra, sb = sort_with_sign(bra)
        sket, sk = sort_with_sign(ket)
        if sbra is None or sket is None:
            if value != 0.0:
                raise ModelError(f"{where}: nonzero coefficient with repeated index {bra},{ket}")
            continue
        signed = sb * sk * value
        previous = entries.get((sbra, sket))
        if previous is not None and abs(previous - signed) > 1e-12:
            raise ModelError(f"{where}: entries {bra},{ket} violate antisymmetry")
        entries[(sbra, sket)] = signed
    return OperatorTensor(rank, n_orbitals, entries)


def tensor_to_dict(t: OperatorTensor) -> dict:
    return {
        "rank": t.rank,
        "antisymmetrized": True,
        "entries": [
            {"bra": list(bra), "ket": list(ket), "value": float(f"{value:.15g}")}
            for (bra, ket), value in t.items()
        ],
    }


def model_from_dict(doc: Mapping) -> ModelInstance:
    """Parse a model document, rejecting unknown fields."""
    _reject_unknown(doc, _MODEL_FIELDS, "model")
    orbitals = []
    for k, o in enumerate(_list_field(doc, "orbitals", "model")):
        at = f"orbital {k}"
        _reject_unknown(o, _ORBITAL_FIELDS, at)
        orbitals.append(Orbital(_field(o, "id", int, at), _field(o, "energy", float, at), _field(o, "space", Space, at)))
    orbitals.sort(key=lambda o: o.id)
    n = len(orbitals)
    electrons = _field(doc, "valence_electrons", int, "model")
    V = tuple(tensor_from_dict(t, n, f"V[{k}]") for k, t in enumerate(_list_field(doc, "V", "model")))
    O = tensor_from_dict(_field(doc, "O", lambda x: x, "model"), n, "O")
    lam = _field(doc, "lambda", float, "model") if "lambda" in doc else 1.0
    return ModelInstance(tuple(orbitals), electrons, V, O, lam)


def model_to_dict(m: ModelInstance) -> dict:
    return {
        "orbitals": [{"id": o.id, "energy": o.energy, "space": o.space.value} for o in m.orbitals],
        "valence_electrons": m.valence_electrons,
        "V": [tensor_to_dict(t) for t in m.V],
        "O": tensor_to_dict(m.O),
        "lambda": m.lam,
    }


def load_model(path: str) -> ModelInstance:
    """
    Load and validate a model file.

    Args:
        path: Path of a JSON model document.

    Returns:
        The parsed ModelInstance.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}: invalid JSON: {e}")
    model = model_from_dict(doc)
    problems = validate_model(model)
    if problems:
        raise ModelError(f"{path}: " + "; ".join(problems))
    logger.info("Loaded model %s with %d orbitals", path, model.n_orbitals)
    return model


def save_model(m: ModelInstance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m), fh, indent=2)


if __name__ == "__main__":
    model = random_model(1, 2, 2, 3, 2)
    print("Orbitals:", [(o.id, round(o.energy, 3), o.space.value) for o in model.orbitals])
    print("Violations:", validate_model(model))
    print("V parts:", model.V)
