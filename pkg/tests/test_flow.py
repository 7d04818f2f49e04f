import numpy as np
import pytest
import scipy.linalg

from codeflow.canonical import canonical_five
from codeflow.flow import (
    BlowUpError,
    ControlPath,
    SmoothField,
    commutator_flow_residual,
    integrate,
    integrate_with_variation,
    jacobian_bound,
    jacobian_bound_profile,
    operator_norm,
    rk4_step_jacobian,
)
from codeflow.poly_vf import PolyVectorField

F2 = canonical_five(2).fields


def linear(A):
    return PolyVectorField.linear(np.asarray(A).tolist())


def random_controls(seed, M=32, d=5, scale=0.5):
    return ControlPath(scale * np.random.default_rng(seed).standard_normal((M, d)))


def test_zero_controls_freeze_state_and_jacobian():
    traj = integrate_with_variation(F2, ControlPath.zeros(8, 5), [0.3, -0.2])
    assert np.all(traj.states == [0.3, -0.2])
    assert np.all(traj.jacobians == np.eye(2))
    assert jacobian_bound(F2, ControlPath.zeros(8, 5), traj) == 1.0


def test_linear_flow_matches_expm():
    A = np.array([[0.3, -1.0], [0.7, -0.2]])
    traj = integrate_with_variation([linear(A)], ControlPath(np.ones((64, 1))), [1.0, 0.5])
    E = scipy.linalg.expm(A)
    np.testing.assert_allclose(traj.final, E @ [1.0, 0.5], rtol=1e-8)
    np.testing.assert_allclose(traj.jacobians[-1], E, rtol=1e-8)


def test_scalar_exponential():
    V = PolyVectorField.linear([[1]])
    X = integrate([V], ControlPath(np.full((64, 1), 0.7)), [2.0]).final
    assert abs(X[0] - 2.0 * np.exp(0.7)) < 1e-8


def test_smooth_field_jacobian_consistency():
    f = SmoothField(2, lambda x: np.tanh(x @ np.array([[1.0, 2.0], [0.5, -1.0]]).T),
                    lambda x: (1 - np.tanh(x @ np.array([[1.0, 2.0], [0.5, -1.0]]).T) ** 2)[..., :, None]
                    * np.array([[1.0, 2.0], [0.5, -1.0]]))
    x = np.array([0.2, -0.4])
    h = 1e-6
    fd = np.column_stack([(f.eval(x + h * e) - f.eval(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(f.jac(x), fd, rtol=1e-5)


def test_variation_matches_finite_differences():
    u = random_controls(4, M=128)
    x0 = np.array([0.2, -0.3])
    J = integrate_with_variation(F2, u, x0).jacobians[-1]
    h = 1e-5
    fd = np.column_stack([(integrate(F2, u, x0 + h * e).final - integrate(F2, u, x0 - h * e).final) / (2 * h)
                          for e in np.eye(2)])
    assert np.linalg.norm(J - fd) / np.linalg.norm(fd) < 1e-4


def test_variation_equals_product_of_step_jacobians():
    u = random_controls(5, M=16)
    traj = integrate_with_variation(F2, u, [0.1, 0.4])
    P = np.eye(2)
    for s in range(u.M):
        P = rk4_step_jacobian(F2, u.u[s], traj.states[s], 1.0 / u.M) @ P
    assert np.linalg.norm(P - traj.jacobians[-1]) / np.linalg.norm(P) < 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_jacobian_bound_holds(seed):
    u = random_controls(seed)
    traj = integrate_with_variation(F2, u, np.random.default_rng(seed).uniform(-1, 1, 2))
    bound = jacobian_bound_profile(F2, u, traj)
    norms = [operator_norm(J) for J in traj.jacobians]
    assert all(n <= b * (1 + 1e-6) for n, b in zip(norms, bound))


def test_linear_bound_is_exp_of_norm():
    A = np.array([[0.0, 2.0], [-0.5, 0.1]])
    u = ControlPath(np.ones((32, 1)))
    traj = integrate_with_variation([linear(A)], u, [1.0, 0.0])
    assert np.isclose(jacobian_bound([linear(A)], u, traj), np.exp(np.linalg.norm(A, 2)), rtol=1e-12)
    assert operator_norm(scipy.linalg.expm(A)) <= np.exp(np.linalg.norm(A, 2))


def test_rk4_order_and_semigroup():
    A = np.array([[0.0, 3.0], [-3.0, 0.5]])
    exact = scipy.linalg.expm(A) @ [1.0, 1.0]
    errs = [np.linalg.norm(integrate([linear(A)], ControlPath(np.ones((M, 1))), [1, 1]).final - exact)
            for M in (16, 32, 64)]
    for a, b in zip(errs, errs[1:]):
        assert 12 <= a / b <= 20
    u = random_controls(9, M=32)
    # each path spans unit time, so a half interval is the half path at half speed
    first, second = (ControlPath(p.u / 2) for p in u.split(16))
    mid = integrate(F2, first, [0.1, 0.2]).final
    np.testing.assert_allclose(integrate(F2, second, mid).final, integrate(F2, u, [0.1, 0.2]).final, rtol=1e-13)


def test_distinct_points_stay_apart():
    u = random_controls(2)
    a = integrate(F2, u, [0.1, 0.2]).final
    b = integrate(F2, u, [0.1, 0.2 + 1e-6]).final
    assert np.linalg.norm(a - b) > 1e-12


def test_blow_up_detected():
    V = PolyVectorField.monomial((2,), 0)  # dx/dt = x^2 explodes before t = 1 from x0 = 2
    with pytest.raises(BlowUpError) as err:
        integrate([V], ControlPath(np.full((64, 1), 1.0)), [2.0])
    assert 1 <= err.value.step <= 64


def test_shape_errors():
    with pytest.raises(ValueError):
        ControlPath(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        ControlPath([[np.nan]])
    with pytest.raises(ValueError):
        integrate(F2, ControlPath.zeros(4, 3), [0.0, 0.0])


def test_commutator_residual():
    A = [[0.0, 1.0], [0.0, 0.0]]
    B = [[0.0, 0.0], [1.0, 0.0]]
    # exp(tA) = I + tA for the nilpotent pair, so the oracle is a plain product
    t = 0.1
    a, b = np.array(A), np.array(B)
    I = np.eye(2)
    y = (I - t * a) @ (I - t * b) @ (I + t * a) @ (I + t * b) @ [1.0, 0.0]
    want = np.linalg.norm(y - [1.0, 0.0] - t * t * (a @ b - b @ a) @ [1.0, 0.0])
    assert np.isclose(commutator_flow_residual(A, B, t, [1.0, 0.0]), want, rtol=1e-12)
    rs = [commutator_flow_residual(A, B, t, [1.0, 0.0]) for t in (0.1, 0.05, 0.025)]
    assert all(6 <= r1 / r2 <= 10 for r1, r2 in zip(rs, rs[1:]))


def test_commuting_and_zero_pairs():
    D1, D2 = np.diag([1.0, -2.0]), np.diag([0.5, 3.0])
    assert commutator_flow_residual(D1, D2, 1.0, [1.0, 1.0]) <= 1e-12
    assert commutator_flow_residual(D1, np.zeros((2, 2)), 0.7, [0.3, 1.0]) <= 1e-12
    with pytest.raises(ValueError):
        commutator_flow_residual(D1, D2, 0.0, [1.0, 1.0])


def test_trajectory_csv():
    text = integrate_with_variation(F2, ControlPath.zeros(2, 5), [0.5, 0.25]).to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,x1,x2,j11,j12,j21,j22"
    assert lines[1] == "0,0.5,0.25,1,0,0,1"
    assert len(lines) == 4
