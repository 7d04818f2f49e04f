from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codeflow.poly_vf import (
    CompiledPolyFields,
    DimensionError,
    PolyVectorField,
    dump_fields,
    lie_bracket,
    linear_combination,
    load_fields,
)

X = lambda *a: tuple(a)  # noqa: E731


def field2(c1: dict, c2: dict) -> PolyVectorField:
    return PolyVectorField(2, [c1, c2])


# U = (x1 x2, x1^2), V = (x2^3 - x1, 2 x1 x2 + 1); bracket frozen from a sympy run
U = field2({X(1, 1): 1}, {X(2, 0): 1})
V = field2({X(0, 3): 1, X(1, 0): -1}, {X(1, 1): 2, X(0, 0): 1})
UV = field2(
    {X(2, 2): 3, X(2, 1): -2, X(1, 0): -1, X(0, 4): -1},
    {X(3, 0): 2, X(2, 0): 2, X(1, 3): -2, X(1, 2): 2},
)


def test_bracket_matches_frozen_symbolic_value():
    assert lie_bracket(U, V) == UV


def test_bracket_in_three_dimensions():
    half = Fraction(1, 2)
    U3 = PolyVectorField(3, [{X(1, 0, 1): 1}, {X(0, 2, 0): 1, X(0, 0, 1): -1}, {X(1, 0, 0): half}])
    V3 = PolyVectorField(3, [{X(0, 1, 0): 1}, {X(1, 1, 1): 1}, {X(0, 0, 2): 1, X(0, 0, 0): -1}])
    expect = PolyVectorField(3, [
        {X(1, 0, 2): -1, X(1, 0, 0): 1, X(0, 2, 0): 1, X(0, 1, 1): -1, X(0, 0, 1): -1},
        {X(2, 1, 0): half, X(1, 2, 1): -1, X(1, 1, 2): 1, X(1, 0, 2): -1, X(0, 0, 2): 1, X(0, 0, 0): -1},
        {X(1, 0, 1): 1, X(0, 1, 0): -half},
    ])
    assert lie_bracket(U3, V3) == expect


def test_bracket_of_linear_fields_is_reversed_commutator():
    A = [[1, 2], [0, -1]]
    B = [[0, 1], [3, 0]]
    a, b = np.array(A), np.array(B)
    br = lie_bracket(PolyVectorField.linear(A), PolyVectorField.linear(B))
    assert br == PolyVectorField.linear((b @ a - a @ b).tolist())


def test_constant_and_monomial_bracket():
    d2 = PolyVectorField.constant([0, 1])
    x2sq_d1 = PolyVectorField.monomial((0, 2), 0)
    assert lie_bracket(d2, x2sq_d1) == PolyVectorField.monomial((0, 1), 0, 2)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        lie_bracket(U, PolyVectorField.zero(3))
    with pytest.raises(DimensionError):
        U + PolyVectorField.zero(3)


def test_zero_coefficients_are_dropped_and_degree():
    W = U - U
    assert W.is_zero() and W.degree == -1
    assert W == PolyVectorField.zero(2)
    assert UV.degree == 4


def test_evaluate_by_brute_force_sum():
    rng = np.random.default_rng(0)
    for x in rng.uniform(-2, 2, (5, 2)):
        x1, x2 = x
        want = [3 * x1**2 * x2**2 - 2 * x1**2 * x2 - x1 - x2**4,
                2 * x1**3 + 2 * x1**2 - 2 * x1 * x2**3 + 2 * x1 * x2**2]
        np.testing.assert_allclose(UV.evaluate(x), want, rtol=1e-13)


def test_jacobian_matches_finite_differences():
    x = np.array([0.3, -0.7])
    J = UV.jacobian_at(x)
    h = 1e-6
    fd = np.column_stack([(UV.evaluate(x + h * e) - UV.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(J, fd, rtol=1e-7, atol=1e-8)


def test_compiled_fields_agree_with_direct_evaluation():
    comp = CompiledPolyFields([U, V, UV])
    pts = np.random.default_rng(1).uniform(-1, 1, (7, 2))
    vals, jacs = comp.values_and_jacobians(pts)
    for n, x in enumerate(pts):
        for k, W in enumerate((U, V, UV)):
            np.testing.assert_allclose(vals[n, k], W.evaluate(x), rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(jacs[n, k], W.jacobian_at(x), rtol=1e-12, atol=1e-14)


def test_json_round_trip_is_exact():
    W = Fraction(1, 3) * UV
    assert PolyVectorField.from_json(W.to_json()) == W
    assert load_fields(dump_fields([U, V, W])) == [U, V, W]


def test_pretty_print():
    assert field2({X(1, 1): 2}, {X(0, 2): -1}).pretty() == "2 x1 x2 d1 - x2^2 d2"


def test_linear_combination():
    assert linear_combination([2, -1], [U, U]) == U


# ---------------------------------------------------------------------------
# algebraic laws on random small fields

coeff = st.fractions(min_value=-3, max_value=3, max_denominator=4)
exponent = st.tuples(st.integers(0, 2), st.integers(0, 2))
component = st.dictionaries(exponent, coeff, max_size=3)
fields = st.builds(lambda a, b: PolyVectorField(2, [a, b]), component, component)


@settings(max_examples=40, deadline=None)
@given(fields, fields)
def test_anticommutativity(A, B):
    assert lie_bracket(A, B) == -lie_bracket(B, A)


@settings(max_examples=40, deadline=None)
@given(fields, fields, fields, coeff)
def test_bilinearity(A, B, C, c):
    assert lie_bracket(A + c * B, C) == lie_bracket(A, C) + c * lie_bracket(B, C)


@settings(max_examples=30, deadline=None)
@given(fields, fields, fields)
def test_jacobi_identity(A, B, C):
    total = lie_bracket(A, lie_bracket(B, C)) + lie_bracket(B, lie_bracket(C, A)) + lie_bracket(C, lie_bracket(A, B))
    assert total.is_zero()
