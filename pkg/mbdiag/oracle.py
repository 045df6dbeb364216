"""
Oracle Module

Exact dense Fock-space realization of a model. Builds determinant bases,
operator matrices and the Q-space resolvent, then computes effective
Hamiltonians by Bloch recursion and by extracting Taylor coefficients of
the exact H_eff(lambda). This is the independent truth the diagram engine
is checked against.
"""

import itertools
import logging
from math import comb
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

try:
    from mbdiag.config import get_settings
    from mbdiag.errors import (
        MbdiagError,
        OverlapAmbiguity,
        SectorTooLarge,
        SingularResolvent,
        UnknownOrbital,
        UnsupportedOrder,
    )
    from mbdiag.model_core import ModelInstance, OperatorSum, OperatorTensor
except ImportError:
    from config import get_settings
    from errors import (
        MbdiagError,
        OverlapAmbiguity,
        SectorTooLarge,
        SingularResolvent,
        UnknownOrbital,
        UnsupportedOrder,
    )
    from model_core import ModelInstance, OperatorSum, OperatorTensor

logger = logging.getLogger(__name__)


def annihilate(det: int, p: int) -> Tuple[int, int]:
    """Apply a_p to a bit-pattern determinant; returns (det, sign), sign 0 if it vanishes."""
    if not det >> p & 1:
        return 0, 0
    sign = -1 if bin(det & ((1 << p) - 1)).count("1") % 2 else 1
    return det & ~(1 << p), sign


def create(det: int, p: int) -> Tuple[int, int]:
    """Apply a+_p to a bit-pattern determinant."""
    if det >> p & 1:
        return 0, 0
    sign = -1 if bin(det & ((1 << p) - 1)).count("1") % 2 else 1
    return det | (1 << p), sign


def apply_string(det: int, bra: Sequence[int], ket: Sequence[int]) -> Tuple[int, int]:
    """Apply a+_{bra[0]}...a+_{bra[n-1]} a_{ket[n-1]}...a_{ket[0]}."""
    sign = 1
    for q in ket:
        det, s = annihilate(det, q)
        if not s:
            return 0, 0
        sign *= s
    for p in reversed(bra):
        det, s = create(det, p)
        if not s:
            return 0, 0
        sign *= s
    return det, sign


def occupied(det: int) -> List[int]:
    return [p for p in range(det.bit_length()) if det >> p & 1]


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Ordered determinants of one particle-number sector."""

    n_orbitals: int
    n_electrons: int
    determinants: Tuple[int, ...]

    @classmethod
    def sector(cls, n_orbitals: int, n_electrons: int, cap: Optional[int] = None) -> "FockBasis":
        cap = get_settings().sector_cap if cap is None else cap
        size = _binomial(n_orbitals, n_electrons)
        if size > cap:
            raise SectorTooLarge(f"sector of {size} determinants exceeds the cap of {cap}")
        dets = tuple(
            sum(1 << p for p in occ) for occ in itertools.combinations(range(n_orbitals), n_electrons)
        )
        return cls(n_orbitals, n_electrons, dets)

    @cached_property
    def index(self) -> Dict[int, int]:
        return {det: i for i, det in enumerate(self.determinants)}

    def __len__(self) -> int:
        return len(self.determinants)

    def subset(self, mask: np.ndarray) -> "FockBasis":
        return FockBasis(
            self.n_orbitals, self.n_electrons, tuple(d for d, keep in zip(self.determinants, mask) if keep)
        )


def _binomial(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return comb(n, k)


@dataclass(frozen=True, eq=False)
class DenseOperator:
    basis: FockBasis
    matrix: np.ndarray


def matrix_of(t: Union[OperatorTensor, OperatorSum], b: FockBasis) -> DenseOperator:
    """
    Matrix of a normalized second-quantized operator over a basis.

    Args:
        t: Tensor or sum of tensors, applied with fermionic signs.
        b: Determinant basis; rows and columns share it.

    Returns:
        The DenseOperator.
    """
    parts = t.parts if isinstance(t, OperatorSum) else (t,)
    mat = np.zeros((len(b), len(b)))
    for part in parts:
        if part.max_index() >= b.n_orbitals:
            raise UnknownOrbital(f"operator references orbital {part.max_index()} beyond the basis")
        if part.rank == 0:
            mat += part.entries.get(((), ()), 0.0) * np.eye(len(b))
            continue
        by_ket: Dict[Tuple[int, ...], List[Tuple[Tuple[int, ...], float]]] = {}
        for (bra, ket), value in part.entries.items():
            by_ket.setdefault(ket, []).append((bra, value))
        for col, det in enumerate(b.determinants):
            for ket in itertools.combinations(occupied(det), part.rank):
                targets = by_ket.get(ket)
                if not targets:
                    continue
                rest, sk = apply_string(det, (), ket)
                for bra, value in targets:
                    out, sb = apply_string(rest, bra, ())
                    if not sb:
                        continue
                    row = b.index.get(out)
                    if row is None:
                        continue
                    mat[row, col] += sk * sb * value
    return DenseOperator(b, mat)


def plain_operators(m: ModelInstance) -> Tuple[OperatorSum, float]:
    """
    Rewrite the core-normal-ordered perturbation in plain form.

    Returns:
        (operator, c0) with V = operator - c0 as Fock-space operators.
    """
    n = m.n_orbitals
    core = m.core
    t1 = m.v_part(1)
    t2 = m.v_part(2)
    for r in m.v_ranks:
        if r > 2:
            raise MbdiagError(f"{r}-body perturbations are not supported by the oracle")
    h = t1.dense.copy() if t1 is not None else np.zeros((n, n))
    v = t2.dense if t2 is not None else None
    c0 = 0.0
    if v is not None and core:
        h -= np.einsum("pcqc->pq", v[:, core][:, :, :, core])
        c0 += 0.5 * float(np.einsum("cdcd->", v[np.ix_(core, core, core, core)]))
    c0 += float(sum(h[c, c] for c in core))
    parts = [OperatorTensor.from_array(h, 1)]
    if v is not None:
        parts.append(t2)
    return OperatorSum.of(parts), c0


@dataclass(frozen=True, eq=False)
class Sector:
    """Everything the oracle needs for one particle-number sector."""

    model: ModelInstance
    basis: FockBasis
    h0: np.ndarray
    V: np.ndarray
    P: np.ndarray
    E0: float

    @property
    def p_index(self) -> np.ndarray:
        return np.flatnonzero(self.P)

    @cached_property
    def resolvent(self) -> np.ndarray:
        """Diagonal of Q (E0 - H0)^-1 Q; zero on P."""
        gap = self.E0 - self.h0
        q = ~self.P
        tol = get_settings().denominator_tol * max(1.0, float(np.max(np.abs(self.h0))))
        if np.any(np.abs(gap[q]) < tol):
            raise SingularResolvent("E0 - H0 vanishes on a Q-space determinant")
        r = np.zeros_like(self.h0)
        r[q] = 1.0 / gap[q]
        return r

    def hamiltonian(self, lam: complex = 1.0) -> np.ndarray:
        return np.diag(self.h0) + lam * self.V


def build_sector(m: ModelInstance, n_electrons: Optional[int] = None) -> Sector:
    """
    Dense H0, V and the model-space mask for one sector.

    The model space holds the determinants with a full core and no
    virtual occupation.
    """
    n_electrons = m.n_electrons if n_electrons is None else n_electrons
    basis = FockBasis.sector(m.n_orbitals, n_electrons)
    eps = m.energies
    h0 = np.array([sum(eps[p] for p in occupied(det)) for det in basis.determinants])
    core_mask = sum(1 << c for c in m.core)
    virtual_mask = sum(1 << a for a in m.virtual)
    P = np.array(
        [(det & core_mask) == core_mask and not det & virtual_mask for det in basis.determinants],
        dtype=bool,
    )
    operator, c0 = plain_operators(m)
    V = matrix_of(operator, basis).matrix - c0 * np.eye(len(basis))
    val_energy = eps[m.valence[0]] if m.valence else 0.0
    E0 = float(sum(eps[c] for c in m.core) + (n_electrons - len(m.core)) * val_energy)
    logger.debug("Sector with %d electrons: %d determinants, %d in P", n_electrons, len(basis), int(P.sum()))
    return Sector(m, basis, h0, V, P, E0)


def model_basis(m: ModelInstance) -> FockBasis:
    s = build_sector(m)
    return s.basis.subset(s.P)


def bloch_terms(s: Sector, max_order: int) -> List[np.ndarray]:
    """Bloch-recursion H_eff orders 1..max_order on the model space."""
    p = s.p_index
    r = s.resolvent
    V = s.V
    VP = V[:, p]
    PV = V[p, :]
    out = [V[np.ix_(p, p)]]
    if max_order >= 2:
        out.append((PV * r) @ VP)
    if max_order >= 3:
        out.append((PV * r) @ (V * r) @ VP - (PV * r * r) @ VP @ out[0])
    return out


def bloch_heff(order: int, m: ModelInstance) -> np.ndarray:
    """
    Bloch-recursion effective Hamiltonian of one order.

    Order 1 is P V P, order 2 P V R V P and order 3
    P V R V R V P - P V R^2 V P (P V P), with R = Q (E0 - H0)^-1 Q.
    """
    if order not in (1, 2, 3):
        raise UnsupportedOrder(f"Bloch order {order} outside 1..3")
    return bloch_terms(build_sector(m), order)[order - 1]


def folded_matrix(m: ModelInstance) -> np.ndarray:
    """-(P V R^2 V P - S2) (P V P) on the model space."""
    s = build_sector(m)
    p = s.p_index
    r = s.resolvent
    A = (s.V[p, :] * r * r) @ s.V[:, p]
    core = build_sector(m, len(m.core))
    cp = core.p_index
    S2 = float(((core.V[cp, :] * core.resolvent ** 2) @ core.V[:, cp])[0, 0])
    return -(A - S2 * np.eye(len(p))) @ s.V[np.ix_(p, p)]


def tensor_from_model_matrix(M: np.ndarray, m: ModelInstance) -> OperatorTensor:
    """
    Valence tensor reproducing a model-space matrix.

    The tensor rank equals the valence electron count, so every matrix
    element maps to exactly one coefficient.
    """
    k = m.valence_electrons
    basis = model_basis(m)
    if M.shape != (len(basis), len(basis)):
        raise MbdiagError(f"matrix shape {M.shape} does not match the {len(basis)}-state model space")
    if k == 0:
        return OperatorTensor.scalar(float(M[0, 0]), m.n_orbitals)
    val_mask = sum(1 << v for v in m.valence)
    entries = {}
    for col, det in enumerate(basis.determinants):
        ket = tuple(occupied(det & val_mask))
        for row, other in enumerate(basis.determinants):
            bra = tuple(occupied(other & val_mask))
            _, sign = apply_string(det, bra, ket)
            if M[row, col] != 0.0:
                entries[(bra, ket)] = sign * float(M[row, col])
    return OperatorTensor(k, m.n_orbitals, entries)


def _select_p_vectors(X: np.ndarray, p: np.ndarray) -> np.ndarray:
    weight = np.sum(np.abs(X[p, :]) ** 2, axis=0) / np.sum(np.abs(X) ** 2, axis=0)
    order = np.argsort(-weight)
    d = len(p)
    if len(order) > d and weight[order[d]] > 0.5 * weight[order[d - 1]]:
        raise OverlapAmbiguity(
            f"P-weights {weight[order[d - 1]]:.3f} and {weight[order[d]]:.3f} are too close to separate"
        )
    return order[:d]


def _heff_at(s: Sector, lam: complex, hermitian: bool) -> np.ndarray:
    H = s.hamiltonian(lam)
    if hermitian:
        E, X = linalg.eigh(H)
    else:
        E, X = linalg.eig(H)
    p = s.p_index
    pick = _select_p_vectors(X, p)
    XP = X[np.ix_(p, pick)]
    return XP @ np.diag(E[pick]) @ np.linalg.inv(XP)


def lambda_extract(
    m: ModelInstance,
    max_order: int = 3,
    method: str = "contour",
    radius: float = 0.05,
    points: int = 32,
    samples: Sequence[float] = (-0.08, -0.06, -0.04, -0.02, 0.02, 0.04, 0.06, 0.08),
) -> List[np.ndarray]:
    """
    Per-order H_eff from the exact spectrum of H0 + lambda V.

    Args:
        m: The model.
        max_order: Highest order returned.
        method: "contour" takes Taylor coefficients by a discrete Fourier
            transform on a complex circle; "polyfit" fits a polynomial to
            real samples and is only accurate to the truncation of the fit.
        radius: Circle radius for the contour method.
        points: Sample count on the circle.
        samples: Real lambda values for the polyfit method.

    Returns:
        Model-space matrices for orders 0..max_order.
    """
    s = build_sector(m)
    if method == "contour":
        mus = radius * np.exp(2j * np.pi * np.arange(points) / points)
        values = np.array([_heff_at(s, mu, hermitian=False) for mu in mus])
        coeffs = []
        for k in range(max_order + 1):
            phase = np.exp(-2j * np.pi * k * np.arange(points) / points)
            ck = np.tensordot(phase, values, axes=1) / (points * radius ** k)
            coeffs.append(ck.real)
        return coeffs
    if method == "polyfit":
        hermitian = np.allclose(s.V, s.V.T)
        values = np.array([_heff_at(s, mu, hermitian=hermitian).real for mu in samples])
        degree = len(samples) - 1
        flat = values.reshape(len(samples), -1)
        fit = np.polynomial.polynomial.polyfit(np.asarray(samples), flat, degree)
        dim = values.shape[1]
        return [fit[k].reshape(dim, dim) for k in range(max_order + 1)]
    raise MbdiagError(f"unknown extraction method {method!r}")


def model_matrix(t: Union[OperatorTensor, OperatorSum], m: ModelInstance) -> np.ndarray:
    return matrix_of(t, model_basis(m)).matrix


def compare_tensors(a: Union[OperatorTensor, OperatorSum], b: np.ndarray, m: ModelInstance) -> float:
    """
    Max relative error between an engine operator and a model-space matrix.

    The scale is max(|b|, 1e-6).
    """
    A = model_matrix(a, m)
    if A.shape != b.shape:
        raise MbdiagError(f"shape mismatch: {A.shape} vs {b.shape}")
    scale = max(float(np.max(np.abs(b))) if b.size else 0.0, 1e-6)
    return float(np.max(np.abs(A - b))) / scale if b.size else 0.0


if __name__ == "__main__":
    try:
        from mbdiag.model_core import random_model
    except ImportError:
        from model_core import random_model

    model = random_model(2, 2, 2, 2, 1)
    exact = lambda_extract(model, 3)
    for k in (1, 2, 3):
        print(f"order {k}: |bloch - exact| = {np.max(np.abs(bloch_heff(k, model) - exact[k])):.2e}")
