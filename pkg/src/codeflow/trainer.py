"""Training controls so that the flow maps every input onto its target.

Gradients differentiate the discrete RK4 recursion exactly (reverse
accumulation through the stored stage Jacobians), so they agree with finite
differences of :func:`loss` up to rounding.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flow import R_MAX, BlowUpError, ControlPath, FieldStack, _check_blowup

log = logging.getLogger(__name__)


class TrainingSetError(ValueError):
    kind = "invalid"

    def __init__(self, message: str, indices: Sequence[int]):
        super().__init__(message)
        self.indices = list(indices)


class DuplicateInputError(TrainingSetError):
    kind = "duplicate_input"


class DuplicateTargetError(TrainingSetError):
    kind = "duplicate_target"


class OutOfRegionError(TrainingSetError):
    kind = "out_of_region"


@dataclass
class TrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        m = self.inputs.shape[1]
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (m,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (m,)).copy()
        if self.targets.shape != self.inputs.shape:
            raise ValueError("inputs and targets must have the same shape")

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def from_pairs(cls, pairs, lo=-1.0, hi=1.0) -> "TrainingSet":
        xs, ys = zip(*pairs)
        return cls(np.array(xs), np.array(ys), lo, hi)

    @classmethod
    def random(cls, N: int, m: int, seed: int, lo=-1.0, hi=1.0) -> "TrainingSet":
        rng = np.random.default_rng(seed)
        lo_, hi_ = np.broadcast_to(lo, (m,)), np.broadcast_to(hi, (m,))
        return cls(rng.uniform(lo_, hi_, (N, m)), rng.uniform(lo_, hi_, (N, m)), lo, hi)

    def permuted(self, order: Sequence[int]) -> "TrainingSet":
        order = list(order)
        return TrainingSet(self.inputs[order], self.targets[order], self.lo, self.hi)

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
            "omega": [self.lo.tolist(), self.hi.tolist()],
        }


def _first_duplicate(points: np.ndarray):
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            if np.array_equal(points[a], points[b]):
                return a, b
    return None


def validate_training_set(ts: TrainingSet) -> float:
    """Raise on duplicates or points outside the box; return the minimum pairwise input distance."""
    dup = _first_duplicate(ts.inputs)
    if dup:
        raise DuplicateInputError(f"inputs {dup[0]} and {dup[1]} coincide", dup)
    dup = _first_duplicate(ts.targets)
    if dup:
        raise DuplicateTargetError(f"targets {dup[0]} and {dup[1]} coincide", dup)
    for name, pts in (("input", ts.inputs), ("target", ts.targets)):
        bad = [i for i, p in enumerate(pts) if np.any(p < ts.lo) or np.any(p > ts.hi)]
        if bad:
            raise OutOfRegionError(f"{name}s {bad} lie outside the region", bad)
    if ts.N < 2:
        return float("inf")
    diff = ts.inputs[:, None, :] - ts.inputs[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    return float(dist[np.triu_indices(ts.N, 1)].min())


@dataclass
class ReadoutMode:
    """``identity`` reads ``X_1``; ``lambda_residual`` reads ``lambda (X_1 - x)``."""

    kind: str = "identity"
    log_lambda: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "lambda_residual"):
            raise ValueError(f"unknown readout {self.kind!r}")

    @property
    def lam(self) -> float:
        return float(np.exp(self.log_lambda))

    def apply(self, X: np.ndarray, x0: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return X
        return self.lam * (X - x0)


# ---------------------------------------------------------------------------
# forward / backward through RK4


@dataclass
class _Tape:
    states: np.ndarray  # (M+1, N, m)
    stage_vals: list  # per step: list of 4 arrays (N, d, m)
    stage_jacs: list  # per step: list of 4 arrays (N, d, m, m)


def _forward(stack: FieldStack, u: np.ndarray, X0: np.ndarray, r_max: float) -> _Tape:
    # overflow in a rejected trial step surfaces as BlowUpError below
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward_steps(stack, u, X0, r_max)


def _forward_steps(stack: FieldStack, u: np.ndarray, X0: np.ndarray, r_max: float) -> _Tape:
    M = u.shape[0]
    h = 1.0 / M
    states = np.empty((M + 1,) + X0.shape)
    states[0] = X = X0
    vals_tape, jacs_tape = [], []
    for s in range(M):
        us = u[s]
        vals, jacs, ks = [], [], []
        Y = X
        for c in (0.5, 0.5, 1.0, None):
            v, j = stack.values_and_jacobians(Y)
            k = np.einsum("d,ndm->nm", us, v)
            vals.append(v)
            jacs.append(j)
            ks.append(k)
            if c is not None:
                Y = X + c * h * k
        X = X + (h / 6.0) * (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3])
        _check_blowup(X, s + 1, r_max)
        states[s + 1] = X
        vals_tape.append(vals)
        jacs_tape.append(jacs)
    return _Tape(states, vals_tape, jacs_tape)


def _backward(tape: _Tape, u: np.ndarray, adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pull ``K`` adjoints ``adj`` of shape ``(K, N, m)`` at ``X_M`` back through the tape.

    Returns ``(du, dX0)`` of shapes ``(K, M, d)`` and ``(K, N, m)``.
    """
    M, d = u.shape
    h = 1.0 / M
    K = adj.shape[0]
    du = np.zeros((K, M, d))
    a = adj
    for s in range(M - 1, -1, -1):
        us = u[s]
        vals, jacs = tape.stage_vals[s], tape.stage_jacs[s]
        gk = [(h / 6.0) * a, (h / 3.0) * a, (h / 3.0) * a, (h / 6.0) * a]
        aX = a.copy()
        feed = (0.5 * h, 0.5 * h, h)  # stage i+1 input = X + feed[i] * k_i
        for i in (3, 2, 1, 0):
            g = gk[i]
            du[:, s, :] += np.einsum("ndm,knm->kd", vals[i], g)
            DF = np.einsum("d,ndij->nij", us, jacs[i])
            gY = np.einsum("nij,kni->knj", DF, g)
            aX += gY
            if i > 0:
                gk[i - 1] = gk[i - 1] + feed[i - 1] * gY
        a = aX
    return du, a


def _reg_term(u: np.ndarray, reg: float) -> float:
    return reg * float(np.sum(u * u)) / u.shape[0]


def _outputs(tape: _Tape, readout: ReadoutMode, ts: TrainingSet) -> np.ndarray:
    return readout.apply(tape.states[-1], ts.inputs)


def loss(fields, controls: ControlPath, readout: ReadoutMode, ts: TrainingSet, reg: float = 0.0,
         r_max: float = R_MAX) -> float:
    if reg < 0:
        raise ValueError("reg must be >= 0")
    stack = fields if isinstance(fields, FieldStack) else FieldStack(fields)
    tape = _forward(stack, controls.u, ts.inputs, r_max)
    out = _outputs(tape, readout, ts)
    return float(np.sum((out - ts.targets) ** 2)) + _reg_term(controls.u, reg)


def gradient(fields, controls: ControlPath, readout: ReadoutMode, ts: TrainingSet, reg: float = 0.0,
             r_max: float = R_MAX):
    """``(grad_u, grad_log_lambda)``; the second entry is ``None`` for the identity readout."""
    stack = fields if isinstance(fields, FieldStack) else FieldStack(fields)
    u = controls.u
    tape = _forward(stack, u, ts.inputs, r_max)
    out = _outputs(tape, readout, ts)
    res = out - ts.targets
    scale = 1.0 if readout.kind == "identity" else readout.lam
    du, _ = _backward(tape, u, (2.0 * scale * res)[None])
    grad_u = du[0] + 2.0 * reg * u / u.shape[0]
    grad_ll = None
    if readout.kind == "lambda_residual":
        grad_ll = float(np.sum(2.0 * res * out))
    return grad_u, grad_ll


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class TrainConfig:
    M: int = 64
    reg: float = 0.0
    tol: float = 1e-3
    max_iters: int | None = None
    seed: int = 0
    readout: str = "identity"
    optimizer: str = "lm"
    lr: float = 0.05
    init_scale: float = 0.1
    r_max: float = R_MAX
    max_retries: int = 30
    reject_factor: float = 2.0

    def __post_init__(self):
        if self.optimizer not in ("lm", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_iters is None:
            self.max_iters = 5000 if self.optimizer == "adam" else 500
        ReadoutMode(self.readout)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown trainer options {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainResult:
    controls: ControlPath
    readout: ReadoutMode
    residuals: np.ndarray
    history: list = field(default_factory=list)  # (iter, loss, max_residual)
    iterations: int = 0
    status: str = "max_iters"
    message: str = ""

    @property
    def parameter_count(self) -> int:
        return self.controls.M * self.controls.d + (self.readout.kind == "lambda_residual")

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "iterations": self.iterations,
            "readout": self.readout.kind,
            "lambda": self.readout.lam if self.readout.kind == "lambda_residual" else None,
            "max_residual": self.max_residual,
            "residuals": [float(r) for r in self.residuals],
            "final_loss": self.history[-1][1] if self.history else None,
            "parameter_count": self.parameter_count,
            "controls": self.controls.to_list(),
        }
        if self.message:
            out["message"] = self.message
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "loss", "max_residual"])
        for it, L, r in self.history:
            writer.writerow([it, f"{L:.17g}", f"{r:.17g}"])
        return buf.getvalue()


class _Problem:
    """Parameter vector ``theta = (u.ravel(), [log_lambda])`` and its residuals."""

    def __init__(self, stack: FieldStack, ts: TrainingSet, cfg: TrainConfig):
        self.stack, self.ts, self.cfg = stack, ts, cfg
        self.M, self.d = cfg.M, stack.d
        self.lam_mode = cfg.readout == "lambda_residual"

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, ReadoutMode]:
        n = self.M * self.d
        u = theta[:n].reshape(self.M, self.d)
        ll = float(theta[n]) if self.lam_mode else 0.0
        return u, ReadoutMode(self.cfg.readout, ll)

    def evaluate(self, theta: np.ndarray, need_jacobian: bool = False):
        u, readout = self.split(theta)
        tape = _forward(self.stack, u, self.ts.inputs, self.cfg.r_max)
        out = readout.apply(tape.states[-1], self.ts.inputs)
        res = out - self.ts.targets  # (N, m)
        L = float(np.sum(res**2)) + _reg_term(u, self.cfg.reg)
        per_sample = np.linalg.norm(res, axis=1)
        if not need_jacobian:
            return L, per_sample, res, None
        N, m = res.shape
        K = N * m
        seeds = np.zeros((K, N, m))
        seeds[np.arange(K), np.arange(K) // m, np.arange(K) % m] = 1.0
        scale = readout.lam if self.lam_mode else 1.0
        du, _ = _backward(tape, u, seeds)
        J = du.reshape(K, -1) * scale
        if self.lam_mode:
            J = np.hstack([J, out.reshape(K, 1)])
        return L, per_sample, res, J

    def grad(self, theta, res, J) -> np.ndarray:
        u, _ = self.split(theta)
        g = 2.0 * J.T @ res.ravel()
        g[: self.M * self.d] += 2.0 * self.cfg.reg * u.ravel() / self.M
        return g


def _initial_theta(cfg: TrainConfig, d: int) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    u0 = cfg.init_scale * rng.standard_normal((cfg.M, d)) if cfg.init_scale > 0 else np.zeros((cfg.M, d))
    theta = u0.ravel()
    if cfg.readout == "lambda_residual":
        theta = np.append(theta, 0.0)
    return theta


def train(fields, ts: TrainingSet, config: TrainConfig | None = None, **overrides) -> TrainResult:
    cfg = config or TrainConfig()
    if overrides:
        cfg = TrainConfig(**{**cfg.__dict__, **overrides})
    validate_training_set(ts)
    stack = fields if isinstance(fields, FieldStack) else FieldStack(fields)
    if stack.m != ts.m:
        raise ValueError("fields and training set disagree on the dimension")
    problem = _Problem(stack, ts, cfg)
    theta = _initial_theta(cfg, stack.d)
    try:
        state = problem.evaluate(theta, need_jacobian=True)
    except BlowUpError as exc:
        u, readout = problem.split(theta)
        return TrainResult(ControlPath(u), readout, np.full(ts.N, np.inf), [], 0, "blow_up", str(exc))
    run = _lm if cfg.optimizer == "lm" else _adam
    return run(problem, theta, state)


def _result(problem, theta, per_sample, history, it, status, message="") -> TrainResult:
    u, readout = problem.split(theta)
    return TrainResult(ControlPath(u.copy()), readout, per_sample, history, it, status, message)


def _lm(problem: _Problem, theta: np.ndarray, state) -> TrainResult:
    """Levenberg-Marquardt on the stacked residuals, damping adapted per step."""
    cfg = problem.cfg
    L, per_sample, res, J = state
    history = [(0, L, float(per_sample.max()))]
    mu = 1e-3
    P = theta.size
    reg_diag = np.zeros(P)
    reg_diag[: problem.M * problem.d] = cfg.reg / problem.M
    for it in range(1, cfg.max_iters + 1):
        if per_sample.max() <= cfg.tol:
            return _result(problem, theta, per_sample, history, it - 1, "converged")
        g = problem.grad(theta, res, J)
        H = J.T @ J
        accepted = False
        for _ in range(cfg.max_retries):
            A = 2.0 * (H + np.diag(reg_diag)) + mu * (np.diag(np.diag(H)) + np.eye(P))
            step = -np.linalg.solve(A, g)
            trial = theta + step
            try:
                new = problem.evaluate(trial, need_jacobian=True)
            except BlowUpError:
                mu *= 4.0
                continue
            if new[0] < L:
                theta, (L, per_sample, res, J) = trial, new
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 2.0
        history.append((it, L, float(per_sample.max())))
        if not accepted:
            status = "converged" if per_sample.max() <= cfg.tol else "max_iters"
            return _result(problem, theta, per_sample, history, it, status, "no further decrease")
    status = "converged" if per_sample.max() <= cfg.tol else "max_iters"
    return _result(problem, theta, per_sample, history, cfg.max_iters, status)


def _adam(problem: _Problem, theta: np.ndarray, state) -> TrainResult:
    """Adam with step halving on blow-up or on a loss jump beyond ``reject_factor``."""
    cfg = problem.cfg
    L, per_sample, res, J = state
    history = [(0, L, float(per_sample.max()))]
    lr = cfg.lr
    b1, b2, eps = 0.9, 0.999, 1e-8
    mom = np.zeros_like(theta)
    vel = np.zeros_like(theta)
    t = 0
    for it in range(1, cfg.max_iters + 1):
        if per_sample.max() <= cfg.tol:
            return _result(problem, theta, per_sample, history, it - 1, "converged")
        g = problem.grad(theta, res, J)
        t += 1
        mom = b1 * mom + (1 - b1) * g
        vel = b2 * vel + (1 - b2) * g * g
        direction = (mom / (1 - b1**t)) / (np.sqrt(vel / (1 - b2**t)) + eps)
        for _ in range(cfg.max_retries):
            trial = theta - lr * direction
            try:
                new = problem.evaluate(trial, need_jacobian=True)
            except BlowUpError:
                lr *= 0.5
                continue
            if new[0] > cfg.reject_factor * L:
                lr *= 0.5
                continue
            theta, (L, per_sample, res, J) = trial, new
            break
        else:
            return _result(problem, theta, per_sample, history, it, "blow_up", "step rejected too often")
        history.append((it, L, float(per_sample.max())))
    status = "converged" if per_sample.max() <= cfg.tol else "max_iters"
    return _result(problem, theta, per_sample, history, cfg.max_iters, status)
