"""The five canonical generator fields and their bracket identities.

``canonical_five(m)`` returns

    V1 = A x,  V2 = B x,  V3 = e_m,  V4 = (x_m)^2 e_1,  V5 = x_m * x

with traceless ``A``, ``B`` that generate sl_m under commutators.  The
identity suite in :func:`verify_appendix_identities` rebuilds, bracket by
bracket, the argument that their Lie algebra holds every polynomial field.
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .lie_engine import lie_closure_bounded, poly_space_dimension
from .poly_vf import PolyVectorField, lie_bracket, linear_combination

Matrix = list[list[Fraction]]


def _require_dim(m: int) -> None:
    if m < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {m}")


def sl_generators(m: int) -> tuple[Matrix, Matrix]:
    """``A = diag(i - (m+1)/2)`` and ``B`` = ones off the diagonal."""
    _require_dim(m)
    A = [[Fraction(2 * i - (m + 1), 2) if i == j else Fraction(0) for j in range(1, m + 1)] for i in range(1, m + 1)]
    B = [[Fraction(int(i != j)) for j in range(m)] for i in range(m)]
    return A, B


def _trace(M: Matrix) -> Fraction:
    return sum((M[i][i] for i in range(len(M))), Fraction(0))


def _field_matrix(V: PolyVectorField) -> Matrix:
    m = V.m
    M = [[Fraction(0)] * m for _ in range(m)]
    for i, alpha, c in V.terms():
        M[i][alpha.index(1)] = c
    return M


def sl_closure(A: Sequence[Sequence], B: Sequence[Sequence]) -> list[Matrix]:
    """Basis of the matrix Lie algebra generated by ``A`` and ``B``.

    Linear fields ``Ax`` bracket to ``(BA - AB)x``, so closing the linear
    fields closes the matrices up to sign.
    """
    m = len(A)
    if any(len(r) != m for r in A) or len(B) != m or any(len(r) != m for r in B):
        raise ValueError("A and B must be square matrices of equal size")
    gens = [PolyVectorField.linear(A), PolyVectorField.linear(B)]
    if all(G.is_zero() for G in gens):
        return []
    report = lie_closure_bounded([G for G in gens if not G.is_zero()], degree_cap=1, depth_cap=m * m + 1)
    return [_field_matrix(V) for V in report.basis]


def verify_sl_generation(A, B) -> bool:
    """True iff commutators of ``A``, ``B`` span all traceless m x m matrices."""
    A = [[Fraction(a) for a in row] for row in A]
    B = [[Fraction(b) for b in row] for row in B]
    m = len(A)
    if any(len(r) != m for r in A) or len(B) != m or any(len(r) != m for r in B):
        raise ValueError("A and B must be square matrices of equal size")
    if _trace(A) != 0 or _trace(B) != 0:
        raise ValueError("A and B must be traceless")
    return len(sl_closure(A, B)) == m * m - 1


@dataclass(frozen=True)
class CanonicalSystem:
    m: int
    A: Matrix
    B: Matrix
    fields: tuple[PolyVectorField, ...]


def canonical_five(m: int) -> CanonicalSystem:
    _require_dim(m)
    A, B = sl_generators(m)
    V3 = PolyVectorField.constant([0] * (m - 1) + [1])
    V4 = PolyVectorField.monomial(_e(m, m - 1, 2), 0)
    V5 = PolyVectorField(m, [{_add(_e(m, i), _e(m, m - 1)): 1} for i in range(m)])
    return CanonicalSystem(m, A, B, (PolyVectorField.linear(A), PolyVectorField.linear(B), V3, V4, V5))


@functools.lru_cache(maxsize=None)
def sl_generation_depth(m: int) -> int:
    """Smallest bracket length at which commutators of ``sl_generators(m)`` span sl_m."""
    A, B = sl_generators(m)
    gens = [PolyVectorField.linear(A), PolyVectorField.linear(B)]
    for depth in range(1, m * m + 1):
        if lie_closure_bounded(gens, 1, depth).dimension == m * m - 1:
            return depth
    raise RuntimeError(f"sl_generators({m}) do not generate sl_{m}")


def cover_depth(m: int, k: int) -> int:
    """Default bracket depth for reaching every field of degree <= k.

    Equals k + 3 on the plane; larger m pays for the slower sl_m generation.
    """
    return k + 1 + sl_generation_depth(m)


def degree_cover_report(m: int, k: int, depth_cap: int | None = None):
    _require_dim(m)
    if k < 0:
        raise ValueError("degree must be >= 0")
    return lie_closure_bounded(canonical_five(m).fields, k, depth_cap or cover_depth(m, k))


def degree_cover_check(m: int, k: int, depth_cap: int | None = None) -> bool:
    """True iff the bracket closure of the five fields holds every field of degree <= k."""
    return degree_cover_report(m, k, depth_cap).dimension == poly_space_dimension(m, k)


# ---------------------------------------------------------------------------
# generator identities, in differential-operator notation f(x) d_i


def _e(m: int, i: int, power: int = 1) -> tuple[int, ...]:
    return tuple(power if k == i else 0 for k in range(m))


def _add(*alphas) -> tuple[int, ...]:
    return tuple(map(sum, zip(*alphas)))


def _term(m: int, alpha, i: int, c=1) -> PolyVectorField:
    """``c x^alpha d_i`` with 0-based ``i``."""
    return PolyVectorField.monomial(tuple(alpha), i, c)


def _x(m: int, *idx) -> tuple[int, ...]:
    """Exponent of the monomial x_{idx[0]} x_{idx[1]} ... (0-based)."""
    return _add((0,) * m, *[_e(m, i) for i in idx]) if idx else (0,) * m


def _euler(m: int, factor) -> PolyVectorField:
    """``x^factor * sum_j x_j d_j``."""
    return PolyVectorField(m, [{_add(factor, _e(m, j)): 1} for j in range(m)])


@dataclass
class Identity:
    label: str
    lhs: PolyVectorField
    rhs: PolyVectorField
    erratum: bool = False
    note: str = ""

    @property
    def equal(self) -> bool:
        return self.lhs == self.rhs

    def to_dict(self) -> dict:
        out = {"lhs": self.lhs.pretty(), "rhs": self.rhs.pretty(), "equal": self.equal}
        if self.erratum:
            out["erratum"] = True
        if self.note:
            out["note"] = self.note
        return out


def _br(U, V):
    return lie_bracket(U, V)


def appendix_identities(m: int) -> list[Identity]:
    """Every bracket identity of the generator argument, instantiated on R^m.

    Two identities are false in their usual form; each is kept (flagged ``erratum``)
    next to the corrected statement that does hold.
    """
    _require_dim(m)
    T = lambda alpha, i, c=1: _term(m, alpha, i, c)  # noqa: E731
    x = lambda *idx: _x(m, *idx)  # noqa: E731
    n = m - 1  # 0-based index of the last coordinate
    out: list[Identity] = []

    def add(label, lhs, rhs, **kw):
        out.append(Identity(label, lhs, rhs, **kw))

    # constants
    for i in range(n):
        add(f"d{i+1} = [d{m}, x{m} d{i+1}]", T(x(), i), _br(T(x(), n), T(x(n), i)))

    # descending chain towards d_i, i < m-1
    for i in range(m - 2):
        add(f"2 x{m-1}x{m} d{i+1} = [x{m-1} d{m}, x{m}^2 d{i+1}]",
            T(x(n - 1, n), i, 2), _br(T(x(n - 1), n), T(x(n, n), i)))
        for j in range(n - 2, i, -1):
            add(f"x{j+1}x{m} d{i+1} = [x{j+1} d{j+2}, x{j+2}x{m} d{i+1}]",
                T(x(j, n), i), _br(T(x(j), j + 1), T(x(j + 1, n), i)))

    # ascending chain towards d_i, i >= 2
    for i in range(1, m):
        add(f"2 x1x{m} d{i+1} = [x1 d{m}, x{m}^2 d{i+1}]",
            T(x(0, n), i, 2), _br(T(x(0), n), T(x(n, n), i)))
        for j in range(1, i):
            add(f"x{j+1}x{m} d{i+1} = [x{j+1} d{j}, x{j}x{m} d{i+1}]",
                T(x(j, n), i), _br(T(x(j), j - 1), T(x(j - 1, n), i)))

    for i in range(n):
        add(f"x{m}^2 d{i+1} = [x{m}^2 d1, x1 d{i+1}]", T(x(n, n), i), _br(T(x(n, n), 0), T(x(0), i)))

    # -x_m^2 d_m
    first = _br(T(x(n, n), 0), T(x(0), n))
    telescoped = [_br(T(x(i), i + 1), T(x(i + 1, n), i)) for i in range(n)]
    rhs = linear_combination([1] + [2] * n, [first] + telescoped)
    label = f"-x{m}^2 d{m} = [x{m}^2 d1, x1 d{m}] + 2 sum_i [x_i d_(i+1), x_(i+1)x{m} d_i]"
    add(label, T(x(n, n), n, -1), rhs, erratum=True,
        note=f"false as stated; the right side equals 2 x{m-1}x{m} d{m-1} - x{m}^2 d{m}")
    add(label.replace(f"-x{m}^2 d{m} =", f"2 x{m-1}x{m} d{m-1} - x{m}^2 d{m} ="),
        T(x(n - 1, n), n - 1, 2) - T(x(n, n), n), rhs, note="corrected")

    # chain towards d_m
    add(f"2 x{m-1}x{m} d{m} = [x{m-1} d{m}, x{m}^2 d{m}]",
        T(x(n - 1, n), n, 2), _br(T(x(n - 1), n), T(x(n, n), n)))
    for j in range(n - 2, -1, -1):
        add(f"x{j+1}x{m} d{m} = [x{j+1} d{j+2}, x{j+2}x{m} d{m}]",
            T(x(j, n), n), _br(T(x(j), j + 1), T(x(j + 1, n), n)))
    for j in range(n):
        for k in range(n):
            add(f"x{j+1}x{k+1} d{m} = [x{j+1} d{m}, x{k+1}x{m} d{m}]",
                T(x(j, k), n), _br(T(x(j), n), T(x(k, n), n)))
    for j in range(n):
        add(f"2 x{j+1}x{m} d{m} = [x{j+1} d{m}, x{m}^2 d{m}]",
            T(x(j, n), n, 2), _br(T(x(j), n), T(x(n, n), n)))

    # the three-step derivation of x_i x_m d_i
    V5 = _euler(m, x(n))
    for i in range(n):
        E_i = _euler(m, x(i))
        bracket = _br(T(x(i), n), V5)
        label = f"x{i+1} E = [x{i+1} d{m}, x{m} E] + x{i+1}x{m} d{m}"
        add(label, E_i, bracket + T(x(i, n), n), erratum=True,
            note=f"false as stated; [x{i+1} d{m}, x{m} E] already equals x{i+1} E")
        add(f"x{i+1} E = [x{i+1} d{m}, x{m} E]", E_i, bracket, note="corrected")
        add(f"-x{i+1}x{m}^2 d{m} = [x{m}^2 d{m}, x{i+1} E]",
            T(x(i, n, n), n, -1), _br(T(x(n, n), n), E_i))
        inner = _br(T(x(), n), T(x(i, n, n), n))
        add(f"x{i+1}x{m} d{i+1} = x{m}^2 d{m} + 1/2 [[d{m}, x{i+1}x{m}^2 d{m}], x{m} d{i+1}]",
            T(x(i, n), i), T(x(n, n), n) + Fraction(1, 2) * _br(inner, T(x(n), i)))

    for i in range(n):
        add(f"x{i+1}^2 d{i+1} = [x{i+1} d{m}, x{i+1}x{m} d{i+1}] + x{i+1}x{m} d{m}",
            T(x(i, i), i), _br(T(x(i), n), T(x(i, n), i)) + T(x(i, n), n))
        for j in range(m):
            if j != i:
                add(f"2 x{i+1}x{j+1} d{i+1} = [x{j+1} d{i+1}, x{i+1}^2 d{i+1}]",
                    T(x(i, j), i, 2), _br(T(x(j), i), T(x(i, i), i)))

    # induction step, direction d_1, every multi-index of degree 3 and 4
    for total in (3, 4):
        for alpha in _multi_indices(m, total):
            out.append(_induction_identity(m, alpha))
    return out


def _multi_indices(m: int, total: int):
    for combo in itertools.combinations_with_replacement(range(m), total):
        yield _add((0,) * m, *[_e(m, i) for i in combo])


def _sub(alpha, i):
    return tuple(a - (k == i) for k, a in enumerate(alpha))


def _induction_identity(m: int, alpha: tuple[int, ...]) -> Identity:
    T = lambda a, i, c=1: _term(m, a, i, c)  # noqa: E731
    name = "x^" + "".join(map(str, alpha))
    a1 = alpha[0]
    if a1 == 0:
        i = next(k for k in range(1, m) if alpha[k])
        return Identity(
            f"2 {name} d1 = [x^(alpha-e{i+1}) d{i+1}, x{i+1}^2 d1]",
            T(alpha, 0, 2),
            _br(T(_sub(alpha, i), i), T(_e(m, i, 2), 0)),
        )
    if a1 != 3:
        return Identity(
            f"{3 - a1} {name} d1 = [x^(alpha-e1) d1, x1^2 d1]",
            T(alpha, 0, 3 - a1),
            _br(T(_sub(alpha, 0), 0), T(_e(m, 0, 2), 0)),
        )
    beta = (0,) + alpha[1:]
    inner = _br(T(_e(m, 0, 2), 1), T(_x(m, 0, 1), 0)) + 2 * _br(T(_e(m, 0, 2), 0), T(_x(m, 0, 1), 1))
    return Identity(
        f"2 {name} d1 = [x1 x^beta d1, [x1^2 d2, x1x2 d1] + 2[x1^2 d1, x1x2 d2]]",
        T(alpha, 0, 2),
        _br(T(_add(beta, _e(m, 0)), 0), inner),
    )


def verify_appendix_identities(m: int) -> dict:
    """Check every identity exactly.

    ``all_pass`` ignores the two identities flagged ``erratum``; their
    corrected forms are checked in their place.
    """
    ids = appendix_identities(m)
    identities = {}
    for ident in ids:
        label = ident.label
        while label in identities:
            label += "'"
        identities[label] = ident.to_dict()
    return {
        "m": m,
        "identities": identities,
        "all_pass": all(i.equal for i in ids if not i.erratum),
        "errata": [i.label for i in ids if i.erratum],
    }


def claim_identities(m: int) -> list[Identity]:
    """Identities used to pass from sl_m to all linear fields."""
    sys = canonical_five(m)
    V3, V4 = sys.fields[2], sys.fields[3]
    ident = PolyVectorField.linear([[int(i == j) for j in range(m)] for i in range(m)])
    e1em = [[int(i == 0 and j == m - 1) for j in range(m)] for i in range(m)]
    traceless = [[int(i == j) - m * e1em[i][j] for j in range(m)] for i in range(m)]
    return [
        Identity(f"[V3, V4] = 2 x{m} d1", _br(V3, V4), _term(m, _e(m, m - 1), 0, 2)),
        Identity(
            "x = (I - m e1 em^T) x + (m/2) [V3, V4]",
            ident,
            PolyVectorField.linear(traceless) + Fraction(m, 2) * _br(V3, V4),
        ),
    ]


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)
