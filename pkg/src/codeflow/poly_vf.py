"""Exact polynomial vector fields on R^m.

A field is stored as one sparse polynomial per component.  Each polynomial
maps an exponent tuple ``alpha`` to an exact rational (``gmpy2.mpq`` when
available, :class:`fractions.Fraction` otherwise), so every
algebraic identity (brackets, sums, the generator identities) is checked by
structural equality.  Floating point only enters through :meth:`evaluate`,
:meth:`jacobian_at` and the compiled numeric evaluator used by the flow layer.

Example (m = 2)::

    >>> V = PolyVectorField.from_terms(2, [{(1, 1): 1}, {(0, 2): 1}])
    >>> V.evaluate([1.0, 2.0])
    array([2., 4.])
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

try:
    from gmpy2 import mpq as Q
except ImportError:  # pragma: no cover
    Q = Fraction

Exponent = tuple[int, ...]
Poly = dict[Exponent, Fraction]


class DimensionError(ValueError):
    """Operands live on different ambient spaces."""


def _coerce(c):
    if isinstance(c, Fraction):
        return Q(c.numerator, c.denominator)
    return Q(c)


def _degree_key(alpha: Exponent) -> tuple:
    return (sum(alpha), alpha)


def _canonical(poly: Mapping[Exponent, Fraction]) -> Poly:
    return {a: poly[a] for a in sorted(poly, key=_degree_key) if poly[a] != 0}


def poly_add(a: Mapping, b: Mapping, scale=Q(1)) -> Poly:
    out = dict(a)
    for alpha, c in b.items():
        out[alpha] = out.get(alpha, 0) + scale * c
    return out


def poly_mul(a: Mapping, b: Mapping) -> Poly:
    out: Poly = {}
    for alpha, ca in a.items():
        for beta, cb in b.items():
            key = tuple(x + y for x, y in zip(alpha, beta))
            out[key] = out.get(key, 0) + ca * cb
    return out


def poly_diff(a: Mapping, i: int) -> Poly:
    out: Poly = {}
    for alpha, c in a.items():
        if alpha[i]:
            key = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
            out[key] = c * alpha[i]
    return out


class PolyVectorField:
    """Immutable polynomial vector field with exact rational coefficients."""

    __slots__ = ("m", "_components", "_hash")

    def __init__(self, m: int, components: Sequence[Mapping[Exponent, object]]):
        if m < 1:
            raise ValueError("ambient dimension must be >= 1")
        if len(components) != m:
            raise DimensionError(f"expected {m} components, got {len(components)}")
        comps = []
        for poly in components:
            clean: Poly = {}
            for alpha, c in poly.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != m or any(a < 0 for a in alpha):
                    raise DimensionError(f"bad exponent {alpha} for m={m}")
                clean[alpha] = clean.get(alpha, 0) + _coerce(c)
            comps.append(_canonical(clean))
        self.m = m
        self._components = tuple(comps)
        self._hash = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_terms(cls, m: int, components: Sequence[Mapping]) -> "PolyVectorField":
        return cls(m, components)

    @classmethod
    def zero(cls, m: int) -> "PolyVectorField":
        return cls(m, [{} for _ in range(m)])

    @classmethod
    def monomial(cls, alpha: Sequence[int], i: int, coeff=1) -> "PolyVectorField":
        """The field ``coeff * x^alpha * e_i`` (``i`` is 0-based)."""
        m = len(alpha)
        comps: list[dict] = [{} for _ in range(m)]
        comps[i] = {tuple(alpha): coeff}
        return cls(m, comps)

    @classmethod
    def constant(cls, v: Sequence) -> "PolyVectorField":
        m = len(v)
        zero = (0,) * m
        return cls(m, [{zero: c} for c in v])

    @classmethod
    def linear(cls, A: Sequence[Sequence]) -> "PolyVectorField":
        """The field ``x -> A x`` for a square matrix with rational entries."""
        m = len(A)
        comps = []
        for row in A:
            if len(row) != m:
                raise DimensionError("linear field needs a square matrix")
            comps.append({tuple(int(k == j) for k in range(m)): c for j, c in enumerate(row)})
        return cls(m, comps)

    # -- structure --------------------------------------------------------

    @property
    def components(self) -> tuple[Poly, ...]:
        return tuple(dict(c) for c in self._components)

    def terms(self) -> Iterable[tuple[int, Exponent, Fraction]]:
        for j, poly in enumerate(self._components):
            for alpha, c in poly.items():
                yield j, alpha, c

    @property
    def degree(self) -> int:
        """Total degree; the zero field has degree -1."""
        return max((sum(a) for poly in self._components for a in poly), default=-1)

    def is_zero(self) -> bool:
        return not any(self._components)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.m == other.m and self._components == other._components

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.m, tuple(tuple(p.items()) for p in self._components)))
        return self._hash

    def __repr__(self) -> str:
        return f"PolyVectorField(m={self.m}, {self.pretty()})"

    def pretty(self) -> str:
        """Differential-operator notation, e.g. ``2 x1 x2 d1 - x2^2 d2``."""
        parts = []
        for j, alpha, c in self.terms():
            mono = " ".join(
                f"x{k + 1}" if a == 1 else f"x{k + 1}^{a}" for k, a in enumerate(alpha) if a
            )
            sign, mag = ("-", -c) if c < 0 else ("+", c)
            word = " ".join(p for p in (str(mag) if mag != 1 or not mono else "", mono, f"d{j + 1}") if p)
            parts.append((sign, word))
        if not parts:
            return "0"
        head = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        return " ".join([head] + [f"{sign} {word}" for sign, word in parts[1:]])

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "PolyVectorField") -> None:
        if self.m != other.m:
            raise DimensionError(f"dimension mismatch: {self.m} vs {other.m}")

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        return add(self, other)

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        self._check(other)
        return PolyVectorField(
            self.m, [poly_add(a, b, Q(-1)) for a, b in zip(self._components, other._components)]
        )

    def __neg__(self) -> "PolyVectorField":
        return scale(-1, self)

    def __mul__(self, c) -> "PolyVectorField":
        return scale(c, self)

    __rmul__ = __mul__

    # -- numerics ---------------------------------------------------------

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise DimensionError(f"point has shape {x.shape}, field lives on R^{self.m}")
        out = np.zeros(self.m)
        for j, poly in enumerate(self._components):
            for alpha, c in poly.items():
                out[j] += float(c) * np.prod(x ** np.array(alpha))
        return out

    def jacobian_at(self, x) -> np.ndarray:
        """Matrix with entry (i, j) equal to dV^i/dx^j at ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise DimensionError(f"point has shape {x.shape}, field lives on R^{self.m}")
        out = np.zeros((self.m, self.m))
        for i, poly in enumerate(self._components):
            for j in range(self.m):
                for alpha, c in poly_diff(poly, j).items():
                    out[i, j] += float(c) * np.prod(x ** np.array(alpha))
        return out

    def partial(self, j: int) -> "PolyVectorField":
        return PolyVectorField(self.m, [poly_diff(p, j) for p in self._components])

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "components": [
                [{"alpha": list(a), "num": str(c.numerator), "den": str(c.denominator)} for a, c in poly.items()]
                for poly in self._components
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PolyVectorField":
        m = int(data["m"])
        comps = [
            {tuple(t["alpha"]): Q(int(t["num"]), int(t["den"])) for t in poly}
            for poly in data["components"]
        ]
        return cls(m, comps)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PolyVectorField":
        return cls.from_dict(json.loads(text))


def add(U: PolyVectorField, V: PolyVectorField) -> PolyVectorField:
    U._check(V)
    return PolyVectorField(U.m, [poly_add(a, b) for a, b in zip(U._components, V._components)])


def scale(c, V: PolyVectorField) -> PolyVectorField:
    c = _coerce(c)
    if c == 0:
        return PolyVectorField.zero(V.m)
    return PolyVectorField(V.m, [{a: c * v for a, v in poly.items()} for poly in V._components])


def linear_combination(coeffs: Sequence, fields: Sequence[PolyVectorField]) -> PolyVectorField:
    if not fields:
        raise ValueError("empty linear combination")
    acc: list[dict] = [{} for _ in range(fields[0].m)]
    for c, V in zip(coeffs, fields):
        fields[0]._check(V)
        c = _coerce(c)
        for j, poly in enumerate(V._components):
            acc[j] = poly_add(acc[j], poly, c)
    return PolyVectorField(fields[0].m, acc)


def lie_bracket(U: PolyVectorField, V: PolyVectorField) -> PolyVectorField:
    """``[U, V] = DV U - DU V``, computed exactly."""
    U._check(V)
    m = U.m
    out: list[Poly] = [{} for _ in range(m)]
    for i in range(m):
        ui, vi = U._components[i], V._components[i]
        if not ui and not vi:
            continue
        for j in range(m):
            if ui:
                dv = poly_diff(V._components[j], i)
                if dv:
                    out[j] = poly_add(out[j], poly_mul(ui, dv))
            if vi:
                du = poly_diff(U._components[j], i)
                if du:
                    out[j] = poly_add(out[j], poly_mul(vi, du), Q(-1))
    return PolyVectorField(m, out)


def evaluate(V: PolyVectorField, x) -> np.ndarray:
    return V.evaluate(x)


def jacobian_at(V: PolyVectorField, x) -> np.ndarray:
    return V.jacobian_at(x)


def dump_fields(fields: Sequence[PolyVectorField]) -> str:
    return json.dumps([V.to_dict() for V in fields], indent=1)


def load_fields(text: str) -> list[PolyVectorField]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("fields", [data])
    return [PolyVectorField.from_dict(d) for d in data]


class CompiledPolyFields:
    """Vectorized float evaluator for a list of polynomial fields.

    All monomials of all fields (and their first partials) are collected into
    one exponent table, so a batch of points is evaluated with a single
    power/product pass followed by a matrix product.
    """

    def __init__(self, fields: Sequence[PolyVectorField]):
        if not fields:
            raise ValueError("need at least one field")
        m = fields[0].m
        for V in fields:
            fields[0]._check(V)
        self.m = m
        self.d = len(fields)
        monos: dict[Exponent, int] = {}

        def slot(alpha):
            if alpha not in monos:
                monos[alpha] = len(monos)
            return monos[alpha]

        val_entries = []  # (mono, field, comp, coeff)
        jac_entries = []  # (mono, field, comp, var, coeff)
        for f, V in enumerate(fields):
            for j, alpha, c in V.terms():
                val_entries.append((slot(alpha), f, j, float(c)))
                for k in range(m):
                    if alpha[k]:
                        beta = alpha[:k] + (alpha[k] - 1,) + alpha[k + 1:]
                        jac_entries.append((slot(beta), f, j, k, float(c) * alpha[k]))
        T = max(len(monos), 1)
        self.exponents = np.zeros((T, m), dtype=np.int64)
        for alpha, s in monos.items():
            self.exponents[s] = alpha
        self.max_power = int(self.exponents.max(initial=0))
        self.val_coef = np.zeros((T, self.d * m))
        for s, f, j, c in val_entries:
            self.val_coef[s, f * m + j] += c
        self.jac_coef = np.zeros((T, self.d * m * m))
        for s, f, j, k, c in jac_entries:
            self.jac_coef[s, (f * m + j) * m + k] += c

    def _monomials(self, x: np.ndarray) -> np.ndarray:
        # powers[p][..., k] = x_k ** p
        powers = [np.ones_like(x)]
        for _ in range(self.max_power):
            powers.append(powers[-1] * x)
        powers = np.stack(powers, axis=-2)  # (..., P+1, m)
        idx = np.broadcast_to(self.exponents, x.shape[:-1] + self.exponents.shape)
        picked = np.take_along_axis(powers, idx, axis=-2)  # (..., T, m)
        return np.prod(picked, axis=-1)

    def values(self, x) -> np.ndarray:
        """Field values, shape ``(..., d, m)``."""
        x = np.asarray(x, dtype=float)
        mono = self._monomials(x)
        return (mono @ self.val_coef).reshape(x.shape[:-1] + (self.d, self.m))

    def values_and_jacobians(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        mono = self._monomials(x)
        vals = (mono @ self.val_coef).reshape(x.shape[:-1] + (self.d, self.m))
        jacs = (mono @ self.jac_coef).reshape(x.shape[:-1] + (self.d, self.m, self.m))
        return vals, jacs
