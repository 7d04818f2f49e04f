"""Integration of the control-linear ODE  dX/dt = sum_i u^i_t V_i(X_t)  on [0, 1].

Controls are piecewise constant on ``M`` equal steps and each step is one
classical RK4 step, so a control path with ``M`` rows is a depth-``M``
residual network.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .poly_vf import CompiledPolyFields, PolyVectorField

R_MAX = 1e6


class BlowUpError(RuntimeError):
    """A trajectory left the ball of radius ``r_max``."""

    def __init__(self, step: int, norm: float, r_max: float):
        super().__init__(f"state norm {norm:.3g} exceeds {r_max:.3g} at step {step}")
        self.step = step
        self.norm = norm
        self.r_max = r_max


@dataclass(frozen=True)
class SmoothField:
    """A vector field given by batched callables.

    ``eval`` maps ``(..., m)`` to ``(..., m)`` and ``jac`` maps ``(..., m)`` to
    ``(..., m, m)`` with entry ``(i, j) = dV^i/dx^j``.
    """

    m: int
    eval: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    poly: PolyVectorField | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_poly(cls, V: PolyVectorField, name: str = "") -> "SmoothField":
        comp = CompiledPolyFields([V])
        return cls(
            m=V.m,
            eval=lambda x: comp.values(x)[..., 0, :],
            jac=lambda x: comp.values_and_jacobians(x)[1][..., 0, :, :],
            name=name,
            poly=V,
        )


def as_smooth(fields: Sequence) -> list[SmoothField]:
    return [SmoothField.from_poly(V) if isinstance(V, PolyVectorField) else V for V in fields]


class FieldStack:
    """Joint evaluator for ``d`` fields; polynomial families share one monomial table."""

    def __init__(self, fields: Sequence):
        fields = as_smooth(fields)
        if not fields:
            raise ValueError("need at least one field")
        self.m = fields[0].m
        if any(f.m != self.m for f in fields):
            raise ValueError("fields live on different dimensions")
        self.fields = fields
        self.d = len(fields)
        if all(f.poly is not None for f in fields):
            self._compiled = CompiledPolyFields([f.poly for f in fields])
        else:
            self._compiled = None

    def values(self, X: np.ndarray) -> np.ndarray:
        if self._compiled is not None:
            return self._compiled.values(X)
        return np.stack([f.eval(X) for f in self.fields], axis=-2)

    def values_and_jacobians(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._compiled is not None:
            return self._compiled.values_and_jacobians(X)
        vals = np.stack([f.eval(X) for f in self.fields], axis=-2)
        jacs = np.stack([f.jac(X) for f in self.fields], axis=-3)
        return vals, jacs


def _stack(fields) -> FieldStack:
    return fields if isinstance(fields, FieldStack) else FieldStack(fields)


@dataclass
class ControlPath:
    """``u[s, i]`` is the value of control ``i`` on ``[s/M, (s+1)/M)``."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.array(self.u, dtype=float)
        if self.u.ndim != 2 or self.u.shape[0] < 1 or self.u.shape[1] < 1:
            raise ValueError("controls must be an (M, d) array with M, d >= 1")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("controls must be finite")

    @property
    def M(self) -> int:
        return self.u.shape[0]

    @property
    def d(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, M: int, d: int) -> "ControlPath":
        return cls(np.zeros((M, d)))

    def split(self, s: int) -> tuple["ControlPath", "ControlPath"]:
        return ControlPath(self.u[:s]), ControlPath(self.u[s:])

    def to_list(self) -> list[list[float]]:
        return self.u.tolist()


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    jacobians: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        m = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(m)]
        if self.jacobians is not None:
            header += [f"j{i + 1}{j + 1}" for i in range(m) for j in range(m)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for s, t in enumerate(self.times):
            row = [t, *self.states[s]]
            if self.jacobians is not None:
                row += list(self.jacobians[s].ravel())
            writer.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def _check_blowup(X: np.ndarray, step: int, r_max: float) -> None:
    norms = np.linalg.norm(X, axis=-1)
    worst = float(np.max(norms)) if norms.size else 0.0
    if not np.isfinite(worst) or worst > r_max:
        raise BlowUpError(step, worst, r_max)


def rk4_states(stack: FieldStack, u: np.ndarray, X0: np.ndarray, r_max: float = R_MAX) -> np.ndarray:
    """Grid states for a batch of initial conditions, shape ``(M+1, N, m)``."""
    M = u.shape[0]
    h = 1.0 / M
    out = np.empty((M + 1,) + X0.shape)
    X = out[0] = X0
    for s in range(M):
        us = u[s]
        if not us.any():
            out[s + 1] = X
            continue

        def F(Y):
            return np.einsum("d,ndm->nm", us, stack.values(Y))

        k1 = F(X)
        k2 = F(X + 0.5 * h * k1)
        k3 = F(X + 0.5 * h * k2)
        k4 = F(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_blowup(X, s + 1, r_max)
        out[s + 1] = X
    return out


def integrate(fields, controls: ControlPath, x0, r_max: float = R_MAX) -> Trajectory:
    stack = _stack(fields)
    if stack.d != controls.d:
        raise ValueError(f"{stack.d} fields but {controls.d} controls")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (stack.m,):
        raise ValueError(f"initial condition must have shape ({stack.m},)")
    states = rk4_states(stack, controls.u, x0[None, :], r_max)[:, 0, :]
    return Trajectory(np.arange(controls.M + 1) / controls.M, states)


def integrate_with_variation(fields, controls: ControlPath, x0, r_max: float = R_MAX) -> Trajectory:
    """RK4 on the state together with the first variation ``dJ/dt = DF(X) J``, ``J_0 = I``."""
    stack = _stack(fields)
    if stack.d != controls.d:
        raise ValueError(f"{stack.d} fields but {controls.d} controls")
    x = np.asarray(x0, dtype=float)
    m = stack.m
    M = controls.M
    h = 1.0 / M
    states = np.empty((M + 1, m))
    jacs = np.empty((M + 1, m, m))
    J = np.eye(m)
    states[0], jacs[0] = x, J
    for s in range(M):
        us = controls.u[s]

        def F(y, K):
            vals, dvs = stack.values_and_jacobians(y[None, :])
            return us @ vals[0], np.einsum("d,dij->ij", us, dvs[0]) @ K

        k1, l1 = F(x, J)
        k2, l2 = F(x + 0.5 * h * k1, J + 0.5 * h * l1)
        k3, l3 = F(x + 0.5 * h * k2, J + 0.5 * h * l2)
        k4, l4 = F(x + h * k3, J + h * l3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        J = J + (h / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4)
        _check_blowup(x[None, :], s + 1, r_max)
        states[s + 1], jacs[s + 1] = x, J
    return Trajectory(np.arange(M + 1) / M, states, jacs)


def rk4_step_jacobian(fields, u_step, x, h: float) -> np.ndarray:
    """Derivative of one RK4 step ``x -> x + h/6 (k1 + 2k2 + 2k3 + k4)`` by the chain rule."""
    stack = _stack(fields)
    u_step = np.asarray(u_step, dtype=float)
    x = np.asarray(x, dtype=float)

    def F(y):
        vals, dvs = stack.values_and_jacobians(y[None, :])
        return u_step @ vals[0], np.einsum("d,dij->ij", u_step, dvs[0])

    I = np.eye(len(x))
    k1, A1 = F(x)
    D1 = A1
    k2, A2 = F(x + 0.5 * h * k1)
    D2 = A2 @ (I + 0.5 * h * D1)
    k3, A3 = F(x + 0.5 * h * k2)
    D3 = A3 @ (I + 0.5 * h * D2)
    _, A4 = F(x + h * k3)
    D4 = A4 @ (I + h * D3)
    return I + (h / 6.0) * (D1 + 2 * D2 + 2 * D3 + D4)


def jacobian_bound_profile(fields, controls: ControlPath, trajectory: Trajectory) -> np.ndarray:
    """``exp(int_0^t ||sum_i u^i DV_i(X)||_op ds)`` at every grid time.

    The integral is a trapezoid rule on each control interval, with the
    interval's control value at both ends.
    """
    stack = _stack(fields)
    M = controls.M
    h = 1.0 / M
    _, dvs = stack.values_and_jacobians(trajectory.states)  # (M+1, d, m, m)
    integral = np.zeros(M + 1)
    for s in range(M):
        us = controls.u[s]
        a = np.linalg.norm(np.einsum("d,dij->ij", us, dvs[s]), 2)
        b = np.linalg.norm(np.einsum("d,dij->ij", us, dvs[s + 1]), 2)
        integral[s + 1] = integral[s] + 0.5 * h * (a + b)
    return np.exp(integral)


def jacobian_bound(fields, controls: ControlPath, trajectory: Trajectory) -> float:
    return float(jacobian_bound_profile(fields, controls, trajectory)[-1])


def operator_norm(J: np.ndarray) -> float:
    return float(np.linalg.norm(J, 2))


def commutator_flow_residual(A, B, t: float, x) -> float:
    """``|| e^{-At} e^{-Bt} e^{At} e^{Bt} x - x - t^2 (AB - BA) x ||``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    x = np.asarray(x, dtype=float)
    if t <= 0:
        raise ValueError("t must be positive")
    expm = scipy.linalg.expm
    y = expm(-A * t) @ (expm(-B * t) @ (expm(A * t) @ (expm(B * t) @ x)))
    return float(np.linalg.norm(y - x - t * t * (A @ B - B @ A) @ x))


def commutator_sweep(A, B, x, ts: Sequence[float]) -> list[dict]:
    rows = []
    for t in ts:
        r = commutator_flow_residual(A, B, t, x)
        rows.append({"t": t, "residual": r, "residual_over_t3": r / t**3})
    return rows
