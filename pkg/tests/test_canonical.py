from fractions import Fraction

import numpy as np
import pytest

from codeflow.canonical import (
    appendix_identities,
    canonical_five,
    claim_identities,
    cover_depth,
    degree_cover_check,
    degree_cover_report,
    sl_closure,
    sl_generation_depth,
    sl_generators,
    verify_appendix_identities,
    verify_sl_generation,
)
from codeflow.poly_vf import PolyVectorField, lie_bracket


def commutator_closure_dim(A, B):
    """Raw float oracle: span of iterated matrix commutators, by rank."""
    basis = [np.array(A, float), np.array(B, float)]
    frontier = list(basis)
    for _ in range(A.__len__() ** 2 + 1):
        nxt = []
        for X in frontier:
            for G in basis[:2]:
                C = G @ X - X @ G
                stacked = np.array([b.ravel() for b in basis + [C]])
                if np.linalg.matrix_rank(stacked, tol=1e-9) > len(basis):
                    basis.append(C)
                    nxt.append(C)
        frontier = nxt
    return len(basis)


def test_generators_m2_values():
    A, B = sl_generators(2)
    assert A == [[Fraction(-1, 2), 0], [0, Fraction(1, 2)]]
    assert B == [[0, 1], [1, 0]]


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_sl_generation_against_float_oracle(m):
    A, B = sl_generators(m)
    assert verify_sl_generation(A, B)
    assert len(sl_closure(A, B)) == m * m - 1
    assert commutator_closure_dim(A, B) == m * m - 1


def test_non_generating_pair_and_bad_input():
    assert not verify_sl_generation([[1, 0], [0, -1]], [[2, 0], [0, -2]])
    with pytest.raises(ValueError):
        verify_sl_generation([[1, 0], [0, 1]], [[0, 1], [1, 0]])  # traced
    with pytest.raises(ValueError):
        verify_sl_generation([[0, 1, 0], [0, 0, 0]], [[0, 1], [1, 0]])


def test_m1_rejected():
    with pytest.raises(ValueError):
        canonical_five(1)


def test_canonical_fields_m3():
    F = canonical_five(3).fields
    assert F[2] == PolyVectorField.constant([0, 0, 1])
    assert F[3] == PolyVectorField.monomial((0, 0, 2), 0)
    assert F[4].evaluate([1.0, 2.0, 3.0]).tolist() == [3.0, 6.0, 9.0]


def test_claim_identities_hold():
    for m in (2, 3, 4):
        assert all(i.equal for i in claim_identities(m))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_identities_pass_except_flagged_misprints(m):
    rep = verify_appendix_identities(m)
    assert rep["all_pass"]
    assert len(rep["errata"]) == 1 + (m - 1)
    for label in rep["errata"]:
        assert rep["identities"][label]["equal"] is False


def test_corrected_forms_present():
    labels = [i.label for i in appendix_identities(3) if i.note == "corrected"]
    assert len(labels) == 3


def test_bracket_of_constant_and_square():
    F = canonical_five(2).fields
    assert lie_bracket(F[2], F[3]) == PolyVectorField.monomial((0, 1), 0, 2)


def test_cover_depth_values():
    assert [sl_generation_depth(m) for m in (2, 3, 4)] == [2, 5, 7]
    assert cover_depth(2, 2) == 5


@pytest.mark.parametrize("m,k", [(2, 0), (2, 1), (2, 2), (3, 1)])
def test_degree_cover(m, k):
    assert degree_cover_check(m, k)


def test_shallow_depth_falls_short():
    rep = degree_cover_report(3, 2, depth_cap=3)
    assert rep.dimension < 30
