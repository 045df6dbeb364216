import itertools
import math

import numpy as np
import pytest

from mbdiag.errors import MbdiagError, OverlapAmbiguity, SectorTooLarge, SingularResolvent, UnsupportedOrder
from mbdiag.model_core import ModelInstance, OperatorTensor, Orbital, Space, random_model
from mbdiag.oracle import (
    FockBasis,
    _select_p_vectors,
    annihilate,
    apply_string,
    bloch_heff,
    build_sector,
    compare_tensors,
    create,
    lambda_extract,
    matrix_of,
    model_basis,
    model_matrix,
    occupied,
    plain_operators,
    tensor_from_model_matrix,
)


def literal_matrix(t: OperatorTensor, basis: FockBasis) -> np.ndarray:
    """(1/(n!)^2) sum over every ordered index string, one operator at a time."""
    n = t.rank
    dense = t.dense
    norm = 1.0 / math.factorial(n) ** 2
    mat = np.zeros((len(basis), len(basis)))
    strings = list(itertools.product(range(basis.n_orbitals), repeat=n))
    for col, det in enumerate(basis.determinants):
        for ket in strings:
            for bra in strings:
                value = dense[bra + ket]
                if value == 0.0:
                    continue
                out, sign = apply_string(det, bra, ket)
                if sign and out in basis.index:
                    mat[basis.index[out], col] += norm * sign * value
    return mat


def test_annihilate_and_create_signs():
    det = 0b101
    assert annihilate(det, 2) == (0b001, -1)
    assert annihilate(det, 0) == (0b100, 1)
    assert annihilate(det, 1) == (0, 0)
    assert create(0b001, 1) == (0b011, -1)
    assert create(0b001, 0) == (0, 0)


def test_apply_string():
    assert apply_string(0b1, (1,), (0,)) == (0b10, 1)
    assert apply_string(0b1, (1,), (1,)) == (0, 0)
    assert occupied(0b1011) == [0, 1, 3]


def test_sector_size_and_cap():
    assert len(FockBasis.sector(4, 2)) == 6
    with pytest.raises(SectorTooLarge):
        FockBasis.sector(10, 5, cap=100)


def test_sector_cap_from_environment(monkeypatch):
    from mbdiag.config import reset_settings

    monkeypatch.setenv("MBDIAG_SECTOR_CAP", "5")
    reset_settings()
    with pytest.raises(SectorTooLarge):
        FockBasis.sector(4, 2)


def test_one_body_matrix_in_single_particle_sector():
    m = random_model(3, 1, 2, 1, 1)
    t = m.v_part(1)
    basis = FockBasis.sector(m.n_orbitals, 1)
    assert np.allclose(matrix_of(t, basis).matrix, t.dense)


@pytest.mark.parametrize("rank, electrons", [(1, 2), (2, 2), (2, 3)])
def test_matrix_matches_literal_application(rank, electrons):
    rng = np.random.default_rng(rank + electrons)
    t = OperatorTensor.from_array(rng.normal(size=(5,) * (2 * rank)), rank)
    basis = FockBasis.sector(5, electrons)
    assert np.allclose(matrix_of(t, basis).matrix, literal_matrix(t, basis))


def test_normal_ordered_vacuum_expectation_vanishes():
    m = random_model(5, 2, 2, 2, 1)
    s = build_sector(m, len(m.core))
    p = s.p_index
    assert len(p) == 1
    assert abs(s.V[p[0], p[0]]) < 1e-12


def test_first_order_single_electron_is_one_body_block():
    m = random_model(6, 2, 2, 2, 1)
    v = m.v_part(1).dense
    val = m.valence
    assert np.allclose(bloch_heff(1, m), v[np.ix_(val, val)])


def test_plain_operators_reject_three_body():
    m = random_model(0, 1, 2, 1, 1, v_ranks=(3,))
    with pytest.raises(MbdiagError):
        plain_operators(m)


def test_resolvent_inverts_on_q_space():
    m = random_model(2, 2, 2, 2, 1)
    s = build_sector(m)
    r = s.resolvent
    q = ~s.P
    assert np.allclose(r[q] * (s.E0 - s.h0[q]), 1.0)
    assert np.all(r[s.P] == 0.0)
    assert np.allclose(np.diag(s.h0)[np.ix_(s.p_index, s.p_index)], s.E0 * np.eye(len(s.p_index)))


def test_singular_resolvent():
    orbitals = (
        Orbital(0, -1.0, Space.CORE),
        Orbital(1, 0.0, Space.VALENCE),
        Orbital(2, 0.0, Space.VIRTUAL),
    )
    t = OperatorTensor(1, 3, {((0,), (2,)): 0.1, ((2,), (0,)): 0.1})
    m = ModelInstance(orbitals, 1, (t,), t)
    with pytest.raises(SingularResolvent):
        bloch_heff(2, m)


def test_bloch_order_range():
    with pytest.raises(UnsupportedOrder):
        bloch_heff(4, random_model(0, 1, 1, 1, 1))


def test_model_space_basis():
    m = random_model(1, 2, 3, 1, 2)
    basis = model_basis(m)
    assert len(basis) == 3
    core = sum(1 << c for c in m.core)
    assert all(det & core == core for det in basis.determinants)


def test_model_matrix_round_trip():
    m = random_model(1, 2, 3, 1, 2)
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    t = tensor_from_model_matrix(M, m)
    assert t.rank == 2
    assert np.allclose(model_matrix(t, m), M)
    assert compare_tensors(t, M, m) < 1e-14


def test_model_matrix_shape_checked():
    m = random_model(1, 2, 3, 1, 2)
    with pytest.raises(MbdiagError):
        tensor_from_model_matrix(np.zeros((2, 2)), m)
    with pytest.raises(MbdiagError):
        compare_tensors(OperatorTensor.zero(2, m.n_orbitals), np.zeros((2, 2)), m)


def test_overlap_ambiguity():
    X = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    with pytest.raises(OverlapAmbiguity):
        _select_p_vectors(X, np.array([0]))


def test_contour_extraction_matches_bloch():
    m = random_model(7, 2, 2, 2, 1)
    exact = lambda_extract(m, 3)
    s = build_sector(m)
    assert np.allclose(exact[0], s.E0 * np.eye(len(s.p_index)), atol=1e-10)
    for k in (1, 2, 3):
        b = bloch_heff(k, m)
        assert np.max(np.abs(exact[k] - b)) <= 1e-9 * max(1.0, np.max(np.abs(b)))


def test_polyfit_extraction_is_close():
    m = random_model(7, 2, 2, 2, 1)
    fit = lambda_extract(m, 3, method="polyfit")
    for k in (1, 2, 3):
        b = bloch_heff(k, m)
        assert np.max(np.abs(fit[k] - b)) <= 1e-3 * max(1.0, np.max(np.abs(b)))


def test_unknown_extraction_method():
    with pytest.raises(MbdiagError):
        lambda_extract(random_model(0, 1, 1, 1, 1), 1, method="pade")
