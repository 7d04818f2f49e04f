"""Lie-algebra span computations for families of vector fields.

Lie words are nested tuples over 0-based generator indices: an ``int`` is a
generator, a pair ``(left, right)`` is the bracket ``[left, right]``.  They
are printed 1-based, e.g. ``[1,[1,2]]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Sequence, Union

import numpy as np

from .poly_vf import DimensionError, PolyVectorField, lie_bracket

LieWord = Union[int, tuple]


class DuplicatePointError(ValueError):
    """Two entries of a point tuple coincide."""


# ---------------------------------------------------------------------------
# words


def word_length(word: LieWord) -> int:
    if isinstance(word, int):
        return 1
    return word_length(word[0]) + word_length(word[1])


def word_str(word: LieWord) -> str:
    if isinstance(word, int):
        return str(word + 1)
    return f"[{word_str(word[0])},{word_str(word[1])}]"


def word_to_json(word: LieWord):
    if isinstance(word, int):
        return word + 1
    return [word_to_json(word[0]), word_to_json(word[1])]


def word_from_json(data) -> LieWord:
    if isinstance(data, int):
        return data - 1
    left, right = data
    return (word_from_json(left), word_from_json(right))


def lyndon_words(d: int, n: int) -> list[tuple[int, ...]]:
    """Lyndon words of length exactly ``n`` over ``{1..d}``, in lexicographic order.

    Duval's algorithm enumerates all Lyndon words of length <= n in order.
    """
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    out = []
    w = [0]
    while w:
        if len(w) == n:
            out.append(tuple(a + 1 for a in w))
        # extend periodically to length n, then increment
        k = len(w)
        while len(w) < n:
            w.append(w[len(w) - k])
        while w and w[-1] == d - 1:
            w.pop()
        if w:
            w[-1] += 1
    return out


def _mobius(n: int) -> int:
    result, p = 1, 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            result = -result
        p += 1
    if n > 1:
        result = -result
    return result


def witt_dimension(d: int, n: int) -> int:
    """Dimension of the degree-``n`` part of the free Lie algebra on ``d`` generators."""
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    total = sum(_mobius(k) * d ** (n // k) for k in range(1, n + 1) if n % k == 0)
    assert total % n == 0
    return total // n


def _is_lyndon(w: tuple) -> bool:
    return all(w < w[i:] + w[:i] for i in range(1, len(w)))


def standard_bracketing(w: Sequence[int]) -> LieWord:
    """Standard bracketing of a Lyndon word (1-based letters) as a LieWord.

    ``w = uv`` with ``v`` the longest proper Lyndon suffix maps to ``[b(u), b(v)]``.
    """
    w = tuple(w)
    if not w or not _is_lyndon(w):
        raise ValueError(f"{w} is not a Lyndon word")
    if len(w) == 1:
        return w[0] - 1
    for i in range(1, len(w)):
        if _is_lyndon(w[i:]):
            return (standard_bracketing(w[:i]), standard_bracketing(w[i:]))
    raise ValueError(f"{w} is not a Lyndon word")


def bracket_words(d: int, max_length: int) -> list[LieWord]:
    """Lyndon-basis brackets of every length ``1..max_length``."""
    return [standard_bracketing(w) for n in range(1, max_length + 1) for w in lyndon_words(d, n)]


# ---------------------------------------------------------------------------
# exact span bookkeeping


def _key_order(key: tuple) -> tuple:
    j, alpha = key
    return (sum(alpha), alpha, -j)


class ExactSpan:
    """Echelon basis of a space of polynomial fields over Q.

    Every row's pivot is its largest monomial in graded order, and pivots are
    distinct.  Rows whose pivot has degree <= k then span exactly the
    intersection of the space with the fields of degree <= k.
    """

    def __init__(self, m: int):
        self.m = m
        self.rows: dict[tuple, dict] = {}

    def __len__(self) -> int:
        return len(self.rows)

    @staticmethod
    def _vector(V: PolyVectorField) -> dict:
        return {(j, alpha): c for j, alpha, c in V.terms()}

    def reduce(self, V: PolyVectorField) -> dict:
        v = self._vector(V)
        while v:
            lead = max(v, key=_key_order)
            row = self.rows.get(lead)
            if row is None:
                break
            c = v[lead]
            for key, r in row.items():
                val = v.get(key, 0) - c * r
                if val:
                    v[key] = val
                else:
                    v.pop(key, None)
        return v

    def insert(self, V: PolyVectorField) -> bool:
        v = self.reduce(V)
        if not v:
            return False
        lead = max(v, key=_key_order)
        c = v[lead]
        self.rows[lead] = {key: val / c for key, val in v.items()}
        return True

    def contains(self, V: PolyVectorField) -> bool:
        return not self.reduce(V)

    def basis(self, max_degree: int | None = None) -> list[PolyVectorField]:
        out = []
        for lead in sorted(self.rows, key=_key_order):
            if max_degree is not None and sum(lead[1]) > max_degree:
                continue
            comps: list[dict] = [{} for _ in range(self.m)]
            for (j, alpha), c in self.rows[lead].items():
                comps[j][alpha] = c
            out.append(PolyVectorField(self.m, comps))
        return out

    def dimension(self, max_degree: int | None = None) -> int:
        if max_degree is None:
            return len(self.rows)
        return sum(1 for lead in self.rows if sum(lead[1]) <= max_degree)


def exact_rank(fields: Sequence[PolyVectorField]) -> int:
    if not fields:
        return 0
    span = ExactSpan(fields[0].m)
    for V in fields:
        span.insert(V)
    return len(span)


def poly_space_dimension(m: int, k: int) -> int:
    """Number of independent polynomial fields on R^m of degree <= k."""
    return m * comb(m + k, m) if k >= 0 else 0


@dataclass
class LieSpanReport:
    d: int
    m: int
    degree_cap: int
    depth_cap: int
    basis: list[PolyVectorField]
    dimension: int
    words_used: list[LieWord] = field(default_factory=list)
    total_dimension: int = 0

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "degree_cap": self.degree_cap,
            "depth_cap": self.depth_cap,
            "dimension": self.dimension,
            "target_dimension": poly_space_dimension(self.m, self.degree_cap),
            "total_dimension": self.total_dimension,
            "words": [word_to_json(w) for w in self.words_used],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def lie_closure_bounded(
    generators: Sequence[PolyVectorField], degree_cap: int, depth_cap: int | None = None
) -> LieSpanReport:
    """Span of all brackets of length <= ``depth_cap``, cut down to degree <= ``degree_cap``.

    Brackets of every degree are kept as bracketing material; the degree cut
    is applied to the final echelon basis only.  Level ``n`` only brackets the
    generators against elements that were new at level ``n - 1``, which is
    enough because ``[g, S_{n-1}]`` already lies in ``S_n``.
    """
    if not generators:
        raise ValueError("need at least one generator")
    m = generators[0].m
    for G in generators:
        if G.m != m:
            raise DimensionError("generators live on different dimensions")
    if degree_cap < 0:
        raise ValueError("degree cap must be >= 0")
    if depth_cap is None:
        depth_cap = degree_cap + 2
    if depth_cap < 1:
        raise ValueError("depth cap must be >= 1")

    span = ExactSpan(m)
    words: list[LieWord] = []
    frontier: list[tuple[LieWord, PolyVectorField]] = []
    for i, G in enumerate(generators):
        if span.insert(G):
            frontier.append((i, G))
            words.append(i)
    for _ in range(1, depth_cap):
        nxt = []
        for word, W in frontier:
            for i, G in enumerate(generators):
                if word == i:
                    continue  # [g, g] = 0
                B = lie_bracket(G, W)
                if not B.is_zero() and span.insert(B):
                    w = (i, word)
                    nxt.append((w, B))
                    words.append(w)
        frontier = nxt
        if not frontier:
            break
    return LieSpanReport(
        d=len(generators),
        m=m,
        degree_cap=degree_cap,
        depth_cap=depth_cap,
        basis=span.basis(degree_cap),
        dimension=span.dimension(degree_cap),
        words_used=words,
        total_dimension=len(span),
    )


# ---------------------------------------------------------------------------
# evaluation at point tuples


def word_field(word: LieWord, fields: Sequence[PolyVectorField], cache: dict | None = None) -> PolyVectorField:
    """Exact polynomial field of a Lie word."""
    if cache is None:
        cache = {}
    if word in cache:
        return cache[word]
    if isinstance(word, int):
        out = fields[word]
    else:
        out = lie_bracket(word_field(word[0], fields, cache), word_field(word[1], fields, cache))
    cache[word] = out
    return out


def _numeric_word(word: LieWord, fields, x: np.ndarray) -> np.ndarray:
    # smooth (non-polynomial) fields only support generators and first brackets
    if isinstance(word, int):
        return np.asarray(fields[word].eval(x), dtype=float)
    left, right = word
    if not (isinstance(left, int) and isinstance(right, int)):
        raise NotImplementedError("only first-level brackets are available for non-polynomial fields")
    U, V = fields[left], fields[right]
    return V.jac(x) @ U.eval(x) - U.jac(x) @ V.eval(x)


def check_distinct(points, atol: float = 0.0) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise DimensionError("tuple must be an (N, m) array")
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if np.max(np.abs(pts[a] - pts[b])) <= atol:
                raise DuplicatePointError(f"tuple entries {a} and {b} coincide")
    return pts


def interpolation_matrix(fields, words: Sequence[LieWord], points) -> np.ndarray:
    """Stacked evaluations: column w holds ``(L_w(x_1), ..., L_w(x_N))``."""
    pts = check_distinct(points)
    N, m = pts.shape
    out = np.zeros((m * N, len(words)))
    if not words:
        return out
    if all(isinstance(V, PolyVectorField) for V in fields):
        if any(V.m != m for V in fields):
            raise DimensionError("fields and points disagree on the dimension")
        cache: dict = {}
        for col, w in enumerate(words):
            W = word_field(w, fields, cache)
            for i, x in enumerate(pts):
                out[i * m:(i + 1) * m, col] = W.evaluate(x)
    else:
        for col, w in enumerate(words):
            for i, x in enumerate(pts):
                out[i * m:(i + 1) * m, col] = _numeric_word(w, fields, x)
    return out


def rank_summary(matrix: np.ndarray, tol: float = 1e-9) -> dict:
    rows = matrix.shape[0]
    if matrix.size == 0:
        return {"shape": list(matrix.shape), "rank": 0, "sigma_min": 0.0, "sigma_max": 0.0, "full_row_rank": rows == 0}
    # column scaling leaves the row rank unchanged and keeps tall brackets from
    # swamping the relative threshold
    norms = np.linalg.norm(matrix, axis=0)
    cols = matrix[:, norms > 0] / norms[norms > 0]
    if cols.shape[1] == 0:
        return {"shape": list(matrix.shape), "rank": 0, "sigma_min": 0.0, "sigma_max": 0.0, "full_row_rank": rows == 0}
    s = np.linalg.svd(cols, compute_uv=False)
    smax = float(s[0])
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    sigma_min = float(s[rows - 1]) if len(s) >= rows else 0.0
    return {
        "shape": list(matrix.shape),
        "rank": rank,
        "sigma_min": sigma_min,
        "sigma_max": smax,
        "full_row_rank": rank == rows,
    }


def interpolates_at_tuple(fields, words, points, tol: float = 1e-9) -> bool:
    """True iff the stacked bracket evaluations span all of (R^m)^N."""
    return rank_summary(interpolation_matrix(fields, words, points), tol)["full_row_rank"]
