"""Randomly drawn vector fields.

* :func:`sample_polynomial_fields` draws every coefficient of ``d`` fields of
  degree <= k from a density.
* :func:`perturb_to_universal` draws such fields inside a small sup-norm ball
  around given polynomial fields.
* :func:`neural_fields` builds the seven fields ``x -> sigma_i(C_i x + b_i)``
  whose nonlinearities blend the identity or the square with ``tanh``/``atan``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import comb, sqrt
from typing import Sequence

import numpy as np

from .canonical import sl_generators
from .flow import SmoothField
from .poly_vf import PolyVectorField, Q, poly_add, poly_mul


def monomials_up_to(m: int, k: int) -> list[tuple[int, ...]]:
    """All exponents of total degree <= k, graded then lexicographic."""
    out = []
    for total in range(k + 1):
        block = []
        for combo in itertools.combinations_with_replacement(range(m), total):
            alpha = [0] * m
            for i in combo:
                alpha[i] += 1
            block.append(tuple(alpha))
        out.extend(sorted(block))
    return out


@dataclass(frozen=True)
class FieldSampleSpec:
    m: int
    d: int
    k: int
    seed: int
    distribution: str = "standard_normal"
    lo: float = -1.0
    hi: float = 1.0

    @property
    def parameter_count(self) -> int:
        return self.d * self.m * comb(self.m + self.k, self.m)

    @classmethod
    def from_dict(cls, data: dict) -> "FieldSampleSpec":
        dist = data.get("distribution", "standard_normal")
        lo, hi = -1.0, 1.0
        if isinstance(dist, dict):  # {"uniform": [lo, hi]}
            (name, bounds), = dist.items()
            dist, (lo, hi) = name, bounds
        return cls(int(data["m"]), int(data["d"]), int(data["k"]), int(data["seed"]), dist,
                   float(data.get("lo", lo)), float(data.get("hi", hi)))


def _draw(rng: np.random.Generator, spec: FieldSampleSpec, n: int) -> np.ndarray:
    if spec.distribution in ("standard_normal", "normal"):
        return rng.standard_normal(n)
    if spec.distribution == "uniform":
        if not spec.hi > spec.lo:
            raise ValueError("uniform distribution needs lo < hi")
        return rng.uniform(spec.lo, spec.hi, n)
    raise ValueError(f"unknown distribution {spec.distribution!r}")


def fields_from_coefficients(m: int, d: int, k: int, z: Sequence[float]) -> list[PolyVectorField]:
    """Inverse of :func:`coefficients_of`: field-major, then component, then monomial."""
    monos = monomials_up_to(m, k)
    z = list(z)
    if len(z) != d * m * len(monos):
        raise ValueError("coefficient vector has the wrong length")
    it = iter(z)
    out = []
    for _ in range(d):
        comps = [{alpha: Fraction(next(it)) for alpha in monos} for _ in range(m)]
        out.append(PolyVectorField(m, comps))
    return out


def coefficients_of(fields: Sequence[PolyVectorField], k: int) -> list[Fraction]:
    m = fields[0].m
    monos = monomials_up_to(m, k)
    out = []
    for V in fields:
        if V.degree > k:
            raise ValueError(f"field of degree {V.degree} exceeds cap {k}")
        for poly in V.components:
            out.extend(poly.get(alpha, Fraction(0)) for alpha in monos)
    return out


def sample_polynomial_fields(spec: FieldSampleSpec) -> list[PolyVectorField]:
    if spec.m < 2:
        raise ValueError("need m >= 2")
    if spec.d < 5:
        raise ValueError("need at least five fields")
    if spec.k < 2:
        raise ValueError("need degree cap k >= 2")
    rng = np.random.default_rng(spec.seed)
    z = _draw(rng, spec, spec.parameter_count)
    return fields_from_coefficients(spec.m, spec.d, spec.k, z)


# ---------------------------------------------------------------------------
# perturbation


def _box(region) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = (np.asarray(b, dtype=float) for b in region)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("region must be a box (lo, hi) with lo < hi")
    return lo, hi


def sup_bound(V: PolyVectorField, region) -> float:
    """Upper bound for ``sup_{x in box} ||V(x)||`` from the coefficients."""
    lo, hi = _box(region)
    R = np.maximum(np.abs(lo), np.abs(hi))
    per_comp = [
        sum(abs(float(c)) * float(np.prod(R ** np.array(alpha))) for alpha, c in poly.items())
        for poly in V.components
    ]
    return float(np.linalg.norm(per_comp))


def grid_sup_deviation(U, V, region, n: int = 41) -> float:
    """Largest ``||U(x) - V(x)||`` over an ``n``-per-axis grid of the box."""
    lo, hi = _box(region)
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    U = U if isinstance(U, SmoothField) else SmoothField.from_poly(U)
    V = V if isinstance(V, SmoothField) else SmoothField.from_poly(V)
    return float(np.max(np.linalg.norm(U.eval(pts) - V.eval(pts), axis=-1)))


def perturb_to_universal(
    targets: Sequence[PolyVectorField], epsilon: float, region, seed: int, k: int | None = None
) -> list[PolyVectorField]:
    """Random polynomial fields within ``epsilon / 2`` of ``targets`` on the box.

    Every coefficient of degree <= k receives an independent uniform kick whose
    width is chosen so that the coefficient bound of the perturbation stays
    below ``epsilon / 2``; the draw therefore has a density on an open set of
    coefficient space and the closeness is certified, not estimated.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if len(targets) < 5:
        raise ValueError("need at least five target fields")
    lo, hi = _box(region)
    m = targets[0].m
    if len(lo) != m:
        raise ValueError("region dimension differs from the fields")
    if k is None:
        k = max(2, max(V.degree for V in targets))
    monos = monomials_up_to(m, k)
    R = np.maximum(np.abs(lo), np.abs(hi))
    weight = np.array([float(np.prod(R ** np.array(a))) for a in monos])
    # sum_alpha |delta_alpha| R^alpha < eps / (2 sqrt(m)) per component
    width = 0.99 * epsilon / (2.0 * sqrt(m) * len(monos) * weight)
    rng = np.random.default_rng(seed)
    out = []
    for V in targets:
        comps = []
        for poly in V.components:
            kick = rng.uniform(-1.0, 1.0, len(monos)) * width
            comps.append(poly_add(poly, {a: Q(float(c)) for a, c in zip(monos, kick)}))
        out.append(PolyVectorField(m, comps))
    return out


# ---------------------------------------------------------------------------
# neural-type fields

_SIGMA = {
    "tanh": (np.tanh, lambda r: 1.0 - np.tanh(r) ** 2),
    "atan": (np.arctan, lambda r: 1.0 / (1.0 + r * r)),
}


@dataclass
class NeuralFieldSpec:
    m: int
    seed: int = 0
    sigma: str = "tanh"
    z0: tuple[float, float] | None = None
    C: np.ndarray | None = field(default=None, repr=False)
    b: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "NeuralFieldSpec":
        kw = dict(m=int(data["m"]), seed=int(data.get("seed", 0)), sigma=data.get("sigma", "tanh"))
        if "z0" in data:
            kw["z0"] = tuple(data["z0"])
        if "C" in data:
            kw["C"] = np.asarray(data["C"], dtype=float)
        if "b" in data:
            kw["b"] = np.asarray(data["b"], dtype=float)
        return cls(**kw)

    def resolved(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(z0, C, b)`` with anything unspecified drawn standard normal under the seed."""
        rng = np.random.default_rng(self.seed)
        z0 = rng.standard_normal(2)
        C = rng.standard_normal((7, self.m, self.m))
        b = rng.standard_normal((7, self.m))
        if self.z0 is not None:
            z0 = np.asarray(self.z0, dtype=float)
        if self.C is not None:
            C = np.asarray(self.C, dtype=float)
        if self.b is not None:
            b = np.asarray(self.b, dtype=float)
        return z0, C, b

    def to_dict(self) -> dict:
        z0, C, b = self.resolved()
        return {"m": self.m, "seed": self.seed, "sigma": self.sigma,
                "z0": z0.tolist(), "C": C.tolist(), "b": b.tolist()}


def reference_parameters(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The parameter value at which the seven fields become polynomial generators."""
    A, B = sl_generators(m)
    C = np.zeros((7, m, m))
    b = np.zeros((7, m))
    C[0] = np.array(A, dtype=float)
    C[1] = np.array(B, dtype=float)
    b[2, m - 1] = 1.0
    C[3][0, m - 1] = 1.0
    C[6][:, m - 1] = 1.0
    C[5] = np.eye(m)
    C[4] = C[5] + C[6]
    return np.array([1.0, 1.0]), C, b


def reference_neural_spec(m: int, sigma: str = "tanh") -> NeuralFieldSpec:
    z0, C, b = reference_parameters(m)
    return NeuralFieldSpec(m=m, sigma=sigma, z0=tuple(z0), C=C, b=b)


def _neural_field(C_i, b_i, z, power, sigma, dsigma, name) -> SmoothField:
    m = C_i.shape[0]

    def ev(x):
        r = x @ C_i.T + b_i
        return z * r**power + (1.0 - z) * sigma(r)

    def jac(x):
        r = x @ C_i.T + b_i
        ds = z * power * r ** (power - 1) + (1.0 - z) * dsigma(r)
        return ds[..., :, None] * C_i

    return SmoothField(m=m, eval=ev, jac=jac, name=name)


def neural_fields(spec: NeuralFieldSpec) -> list[SmoothField]:
    if spec.m < 2:
        raise ValueError("need m >= 2")
    if spec.sigma not in _SIGMA:
        raise ValueError(f"sigma must be one of {sorted(_SIGMA)}")
    sigma, dsigma = _SIGMA[spec.sigma]
    z0, C, b = spec.resolved()
    if C.shape != (7, spec.m, spec.m) or b.shape != (7, spec.m):
        raise ValueError("C must be (7, m, m) and b must be (7, m)")
    out = []
    for i in range(7):
        z, power = (z0[0], 1) if i < 3 else (z0[1], 2)
        out.append(_neural_field(C[i], b[i], float(z), power, sigma, dsigma, f"N{i + 1}"))
    return out


def _affine_power(C_i, b_i, power: int) -> PolyVectorField:
    m = len(C_i)
    comps = []
    for j in range(m):
        lin = {tuple(int(k == l) for k in range(m)): Fraction(C_i[j][l]) for l in range(m)}
        lin[(0,) * m] = lin.get((0,) * m, 0) + Fraction(b_i[j])
        poly = lin
        for _ in range(power - 1):
            poly = poly_mul(poly, lin)
        comps.append(poly)
    return PolyVectorField(m, comps)


def reference_hat_fields(m: int) -> list[PolyVectorField]:
    """Exact polynomial form of the seven fields at the reference parameters."""
    if m < 2:
        raise ValueError("need m >= 2")
    A, B = sl_generators(m)
    zero = [[0] * m for _ in range(m)]
    I = [[int(i == j) for j in range(m)] for i in range(m)]
    C4 = [[int(i == 0 and j == m - 1) for j in range(m)] for i in range(m)]
    C7 = [[int(j == m - 1) for j in range(m)] for i in range(m)]
    C5 = [[I[i][j] + C7[i][j] for j in range(m)] for i in range(m)]
    b0 = [0] * m
    e_m = [0] * (m - 1) + [1]
    spec = [(A, b0, 1), (B, b0, 1), (zero, e_m, 1), (C4, b0, 2), (C5, b0, 2), (I, b0, 2), (C7, b0, 2)]
    return [_affine_power(C, b, p) for C, b, p in spec]


def dump_sample(fields: Sequence[PolyVectorField], spec: FieldSampleSpec | None = None) -> str:
    doc = {"fields": [V.to_dict() for V in fields]}
    if spec is not None:
        doc["spec"] = asdict(spec)
    return json.dumps(doc, indent=1)
