from fractions import Fraction

import numpy as np
import pytest

from codeflow.canonical import canonical_five
from codeflow.lie_engine import bracket_words, interpolates_at_tuple, lie_closure_bounded, poly_space_dimension
from codeflow.random_fields import (
    FieldSampleSpec,
    NeuralFieldSpec,
    coefficients_of,
    fields_from_coefficients,
    grid_sup_deviation,
    monomials_up_to,
    neural_fields,
    perturb_to_universal,
    reference_hat_fields,
    reference_neural_spec,
    sample_polynomial_fields,
    sup_bound,
)


def test_monomial_order():
    assert monomials_up_to(2, 2) == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    assert len(monomials_up_to(3, 3)) == 20


def test_parameter_count():
    spec = FieldSampleSpec(m=2, d=5, k=3, seed=0)
    assert spec.parameter_count == 5 * 2 * 10
    assert len(coefficients_of(sample_polynomial_fields(spec), 3)) == 100


def test_sampling_is_seeded():
    a = sample_polynomial_fields(FieldSampleSpec(2, 5, 2, seed=4))
    b = sample_polynomial_fields(FieldSampleSpec(2, 5, 2, seed=4))
    c = sample_polynomial_fields(FieldSampleSpec(2, 5, 2, seed=5))
    assert a == b and a != c


def test_coefficient_round_trip():
    z = [Fraction(i, 7) for i in range(60)]
    assert coefficients_of(fields_from_coefficients(2, 5, 2, z), 2) == z


def test_uniform_distribution_and_bounds():
    spec = FieldSampleSpec.from_dict({"m": 2, "d": 5, "k": 2, "seed": 1, "distribution": {"uniform": [-0.5, 0.5]}})
    z = coefficients_of(sample_polynomial_fields(spec), 2)
    assert all(-0.5 <= float(c) <= 0.5 for c in z)


@pytest.mark.parametrize("kw", [dict(m=1, d=5, k=2), dict(m=2, d=4, k=2), dict(m=2, d=5, k=1)])
def test_sampling_preconditions(kw):
    with pytest.raises(ValueError):
        sample_polynomial_fields(FieldSampleSpec(seed=0, **kw))


def test_sampled_fields_interpolate_generic_tuple():
    for seed in range(3):
        F = sample_polynomial_fields(FieldSampleSpec(2, 5, 2, seed))
        pts = np.random.default_rng(seed).uniform(-1, 1, (2, 2))
        assert interpolates_at_tuple(F, bracket_words(5, 3), pts)


def test_perturbation_is_certified_close():
    targets = list(canonical_five(2).fields)
    region = ([-1.0, -1.0], [1.0, 1.0])
    pert = perturb_to_universal(targets, 0.05, region, seed=2)
    for T, P in zip(targets, pert):
        assert sup_bound(P - T, region) < 0.025
        assert grid_sup_deviation(P, T, region) < 0.025
        assert P != T


def test_perturbation_preconditions():
    targets = list(canonical_five(2).fields)
    with pytest.raises(ValueError):
        perturb_to_universal(targets, 0.0, ([-1, -1], [1, 1]), 0)
    with pytest.raises(ValueError):
        perturb_to_universal(targets[:4], 0.1, ([-1, -1], [1, 1]), 0)


def test_sup_bound_dominates_grid():
    V = sample_polynomial_fields(FieldSampleSpec(2, 5, 3, 0))[0]
    region = ([-0.5, -1.0], [1.0, 0.5])
    from codeflow.poly_vf import PolyVectorField
    assert grid_sup_deviation(V, PolyVectorField.zero(2), region) <= sup_bound(V, region)


@pytest.mark.parametrize("m", [2, 3])
def test_hat_fields_polarization(m):
    hat = reference_hat_fields(m)
    V = canonical_five(m).fields
    assert hat[:4] == list(V[:4])
    assert Fraction(1, 2) * (hat[4] - hat[5] - hat[6]) == V[4]


def test_hat_closure_reaches_quadratics():
    rep = lie_closure_bounded(reference_hat_fields(2), 2)
    assert rep.dimension == poly_space_dimension(2, 2) == 12


@pytest.mark.parametrize("sigma", ["tanh", "atan"])
def test_reference_neural_fields_are_hat_polynomials(sigma):
    N = neural_fields(reference_neural_spec(2, sigma))
    hat = reference_hat_fields(2)
    pts = np.random.default_rng(0).uniform(-1, 1, (6, 2))
    for f, h in zip(N, hat):
        for x in pts:
            np.testing.assert_allclose(f.eval(x), h.evaluate(x), atol=1e-14)
            np.testing.assert_allclose(f.jac(x), h.jacobian_at(x), atol=1e-14)


def test_random_neural_jacobians():
    N = neural_fields(NeuralFieldSpec(m=2, seed=3, sigma="atan"))
    x = np.array([0.3, -0.1])
    h = 1e-6
    for f in N:
        fd = np.column_stack([(f.eval(x + h * e) - f.eval(x - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(f.jac(x), fd, rtol=1e-5, atol=1e-8)


def test_neural_spec_round_trip_and_errors():
    spec = NeuralFieldSpec(m=2, seed=8)
    again = NeuralFieldSpec.from_dict(spec.to_dict())
    assert np.array_equal(again.resolved()[1], spec.resolved()[1])
    with pytest.raises(ValueError):
        neural_fields(NeuralFieldSpec(m=2, sigma="relu"))
    with pytest.raises(ValueError):
        neural_fields(NeuralFieldSpec(m=2, C=np.zeros((6, 2, 2))))
