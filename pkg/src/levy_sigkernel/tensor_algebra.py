"""Dense truncated tensor algebra over R^d.

Elements of the truncated algebra are stored level by level: level ``n``
holds the d^n coefficients of all words of length ``n``, flattened with the
base-d positional encoding (see :func:`word_index`).  All operations are
pure functions of immutable inputs and return fresh objects; values may be
shared freely between threads.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import DimMismatch, InvalidParameter, InvalidWord, ScalarPartError

__all__ = [
    "TruncatedTensor",
    "LevelNorms",
    "word_index",
    "word_from_index",
    "tensor_mul",
    "inner_product",
    "level_norms",
    "norm_p",
    "max_level_norm",
    "dilate",
    "exp_tensor",
    "log_tensor",
    "group_inverse",
    "adjoint_left",
    "adjoint_right",
    "adjoint_left_zero",
    "adjoint_right_zero",
    "project",
    "truncate",
    "level_sizes",
    "flat_size",
    "flatten",
    "unflatten",
]


def word_index(word: Sequence[int], dim: int) -> int:
    """Flat index of a word within its level array.

    The word ``i_1 .. i_n`` (letters in ``1..dim``) sits at
    ``sum_k (i_k - 1) * dim**(n - k)``, i.e. words of equal length are
    ordered lexicographically.
    """
    idx = 0
    for letter in word:
        if not 1 <= letter <= dim:
            raise InvalidWord(f"letter {letter} outside alphabet 1..{dim}")
        idx = idx * dim + (letter - 1)
    return idx


def word_from_index(index: int, length: int, dim: int) -> tuple[int, ...]:
    """Inverse of :func:`word_index` for words of the given length."""
    if not 0 <= index < dim**length:
        raise InvalidWord(f"index {index} outside 0..{dim ** length - 1}")
    letters = []
    for _ in range(length):
        letters.append(index % dim + 1)
        index //= dim
    return tuple(reversed(letters))


class TruncatedTensor:
    """Element of the level-``depth`` truncated tensor algebra over R^dim.

    ``levels[n]`` is a float64 array of length ``dim**n``.  Instances are
    treated as immutable; operations never mutate their arguments.
    """

    __slots__ = ("dim", "depth", "levels")

    def __init__(self, dim: int, levels: list[np.ndarray]):
        self.dim = dim
        self.depth = len(levels) - 1
        self.levels = levels

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, dim: int, depth: int) -> "TruncatedTensor":
        return cls(dim, [np.zeros(dim**n) for n in range(depth + 1)])

    @classmethod
    def unit(cls, dim: int, depth: int) -> "TruncatedTensor":
        x = cls.zero(dim, depth)
        x.levels[0][0] = 1.0
        return x

    @classmethod
    def from_word(cls, word: Sequence[int], dim: int, depth: int | None = None,
                  coeff: float = 1.0) -> "TruncatedTensor":
        """Basis element ``coeff * e_w``, optionally padded to ``depth``."""
        n = len(word)
        if depth is None:
            depth = n
        if depth < n:
            raise InvalidParameter("depth smaller than word length")
        x = cls.zero(dim, depth)
        x.levels[n][word_index(word, dim)] = coeff
        return x

    @classmethod
    def from_levels(cls, dim: int, levels: Iterable[np.ndarray | Sequence[float]]) -> "TruncatedTensor":
        """Build from per-level coefficient arrays, validating their sizes."""
        arrays = []
        for n, lev in enumerate(levels):
            arr = np.asarray(lev, dtype=float).ravel()
            if arr.size != dim**n:
                raise InvalidParameter(
                    f"level {n} has {arr.size} entries, expected {dim ** n}")
            if not np.all(np.isfinite(arr)):
                raise InvalidParameter(f"level {n} contains non-finite entries")
            arrays.append(arr.copy())
        return cls(dim, arrays)

    # -- basic accessors ----------------------------------------------

    def coeff(self, word: Sequence[int]) -> float:
        n = len(word)
        if n > self.depth:
            return 0.0
        return float(self.levels[n][word_index(word, self.dim)])

    def scalar(self) -> float:
        return float(self.levels[0][0])

    def copy(self) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, [lev.copy() for lev in self.levels])

    def with_depth(self, depth: int) -> "TruncatedTensor":
        """Same element, zero-padded or truncated to the requested depth."""
        levels = [self.levels[n].copy() if n <= self.depth else np.zeros(self.dim**n)
                  for n in range(depth + 1)]
        return TruncatedTensor(self.dim, levels)

    # -- arithmetic conveniences ----------------------------------------

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        _check_dims(self, other)
        depth = max(self.depth, other.depth)
        out = self.with_depth(depth)
        for n in range(other.depth + 1):
            out.levels[n] += other.levels[n]
        return out

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return self + (other * -1.0)

    def __mul__(self, scalar: float) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, [lev * scalar for lev in self.levels])

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"TruncatedTensor(dim={self.dim}, depth={self.depth})"


class LevelNorms:
    """Per-level Euclidean norms ``values[n] = |x^(n)|`` of a tensor."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=float)

    def __getitem__(self, n: int) -> float:
        return float(self.values[n])

    def __len__(self) -> int:
        return len(self.values)


def _check_dims(x: TruncatedTensor, y: TruncatedTensor) -> None:
    if x.dim != y.dim:
        raise DimMismatch(f"dim {x.dim} vs {y.dim}")


def tensor_mul(x: TruncatedTensor, y: TruncatedTensor,
               out_depth: int | None = None) -> TruncatedTensor:
    """Truncated tensor (concatenation) product of ``x`` and ``y``.

    Output level n sums ``x^(k) (x) y^(n-k)`` over all stored level pairs;
    levels above ``out_depth`` are dropped.
    """
    _check_dims(x, y)
    if out_depth is None:
        out_depth = max(x.depth, y.depth)
    d = x.dim
    out = TruncatedTensor.zero(d, out_depth)
    for n in range(out_depth + 1):
        acc = out.levels[n]
        for k in range(max(0, n - y.depth), min(n, x.depth) + 1):
            xk = x.levels[k]
            ym = y.levels[n - k]
            if k == 0:
                acc += xk[0] * ym
            elif k == n:
                acc += xk * ym[0]
            else:
                acc += np.multiply.outer(xk, ym).ravel()
    return out


def inner_product(x: TruncatedTensor, y: TruncatedTensor) -> float:
    """Dual pairing: sum of coefficient products over common words."""
    _check_dims(x, y)
    depth = min(x.depth, y.depth)
    return float(sum(np.dot(x.levels[n], y.levels[n]) for n in range(depth + 1)))


def level_norms(x: TruncatedTensor) -> LevelNorms:
    return LevelNorms(np.array([np.linalg.norm(lev) for lev in x.levels]))


def norm_p(x: TruncatedTensor, p: float | str = 1.0) -> float:
    """The p-summability norm ``(sum_n |x^(n)|^p)^(1/p)`` over stored levels.

    ``p="max"`` (or ``math.inf``) returns the maximum level norm instead.
    """
    norms = level_norms(x).values
    if isinstance(p, str):
        if p != "max":
            raise InvalidParameter(f"unknown norm mode {p!r}")
        return float(norms.max())
    if math.isinf(p):
        return float(norms.max())
    if p < 1:
        raise InvalidParameter("p must be >= 1")
    if p == 1:
        return float(norms.sum())
    return float((norms**p).sum() ** (1.0 / p))


def max_level_norm(x: TruncatedTensor) -> float:
    """Maximum level norm, the topology-defining norm on the truncated algebra."""
    return norm_p(x, "max")


def dilate(x: TruncatedTensor, lam: float) -> TruncatedTensor:
    """Grading automorphism: level n is scaled by ``lam**n``."""
    return TruncatedTensor(x.dim, [lev * lam**n for n, lev in enumerate(x.levels)])


def exp_tensor(x: TruncatedTensor) -> TruncatedTensor:
    """Tensor exponential of a zero-scalar element (finite sum at fixed depth)."""
    if x.scalar() != 0.0:
        raise ScalarPartError("exp_tensor requires a zero scalar part")
    depth = x.depth
    # Horner form: 1 + x(1 + x/2 (1 + x/3 (...))).
    acc = TruncatedTensor.unit(x.dim, depth)
    for k in range(depth, 0, -1):
        acc = tensor_mul(x * (1.0 / k), acc, depth)
        acc.levels[0][0] += 1.0
    return acc


def log_tensor(x: TruncatedTensor) -> TruncatedTensor:
    """Tensor logarithm of a unit-scalar element."""
    if x.scalar() != 1.0:
        raise ScalarPartError("log_tensor requires scalar part 1")
    depth = x.depth
    y = x.copy()
    y.levels[0][0] = 0.0
    term = y
    out = y.copy()
    for n in range(2, depth + 1):
        term = tensor_mul(term, y, depth)
        sign = 1.0 if n % 2 else -1.0
        for m in range(depth + 1):
            out.levels[m] += (sign / n) * term.levels[m]
    return out


def group_inverse(x: TruncatedTensor) -> TruncatedTensor:
    """Group inverse of a unit-scalar element: sum of powers of (1 - x)."""
    if x.scalar() != 1.0:
        raise ScalarPartError("group_inverse requires scalar part 1")
    depth = x.depth
    y = TruncatedTensor.unit(x.dim, depth) - x
    out = TruncatedTensor.unit(x.dim, depth)
    term = TruncatedTensor.unit(x.dim, depth)
    for _ in range(depth):
        term = tensor_mul(term, y, depth)
        out = out + term
    return out


def adjoint_left(x: TruncatedTensor, z: TruncatedTensor) -> TruncatedTensor:
    """Adjoint of left multiplication: coefficient at w is sum_v x^v z^{vw}.

    Only stored levels contribute; callers needing the exact duality
    ``<z, x (x) y> = <adjoint_left(x, z), y>`` must allocate
    ``z.depth >= x.depth + y.depth``.
    """
    _check_dims(x, z)
    d = x.dim
    out = TruncatedTensor.zero(d, z.depth)
    for k in range(min(x.depth, z.depth) + 1):
        xk = x.levels[k]
        if not xk.any():
            continue
        for n in range(k, z.depth + 1):
            m = n - k
            if k == 0:
                out.levels[m] += xk[0] * z.levels[n]
            else:
                out.levels[m] += xk @ z.levels[n].reshape(d**k, d**m)
    return out


def adjoint_right(y: TruncatedTensor, z: TruncatedTensor) -> TruncatedTensor:
    """Adjoint of right multiplication: coefficient at w is sum_v y^v z^{wv}."""
    _check_dims(y, z)
    d = y.dim
    out = TruncatedTensor.zero(d, z.depth)
    for k in range(min(y.depth, z.depth) + 1):
        yk = y.levels[k]
        if not yk.any():
            continue
        for n in range(k, z.depth + 1):
            m = n - k
            if k == 0:
                out.levels[m] += yk[0] * z.levels[n]
            else:
                out.levels[m] += z.levels[n].reshape(d**m, d**k) @ yk
    return out


def adjoint_left_zero(x: TruncatedTensor, z: TruncatedTensor) -> TruncatedTensor:
    """Adjoint left multiplication with the scalar component removed."""
    out = adjoint_left(x, z)
    out.levels[0][0] = 0.0
    return out


def adjoint_right_zero(y: TruncatedTensor, z: TruncatedTensor) -> TruncatedTensor:
    """Adjoint right multiplication with the scalar component removed."""
    out = adjoint_right(y, z)
    out.levels[0][0] = 0.0
    return out


def project(x: TruncatedTensor, n: int) -> TruncatedTensor:
    """Projection onto level n (all other levels zeroed)."""
    if n < 0:
        raise InvalidParameter("level must be >= 0")
    out = TruncatedTensor.zero(x.dim, x.depth)
    if n <= x.depth:
        out.levels[n] = x.levels[n].copy()
    return out


def truncate(x: TruncatedTensor, depth: int) -> TruncatedTensor:
    """Drop all levels above ``depth`` (no-op above the stored depth)."""
    if depth < 0:
        raise InvalidParameter("depth must be >= 0")
    return TruncatedTensor(x.dim, [x.levels[n].copy()
                                   for n in range(min(depth, x.depth) + 1)])


# -- flat coefficient layout (used by the PDE solver) ------------------


def level_sizes(dim: int, depth: int) -> list[int]:
    return [dim**n for n in range(depth + 1)]


def flat_size(dim: int, depth: int) -> int:
    if dim == 1:
        return depth + 1
    return (dim ** (depth + 1) - 1) // (dim - 1)


def flatten(x: TruncatedTensor, depth: int) -> np.ndarray:
    """Concatenate levels 0..depth into one vector (zero-padded)."""
    parts = [x.levels[n] if n <= x.depth else np.zeros(x.dim**n)
             for n in range(depth + 1)]
    return np.concatenate(parts)


def unflatten(vec: np.ndarray, dim: int, depth: int) -> TruncatedTensor:
    """Inverse of :func:`flatten`."""
    levels, pos = [], 0
    for n in range(depth + 1):
        size = dim**n
        levels.append(np.array(vec[pos:pos + size], dtype=float))
        pos += size
    if pos != len(vec):
        raise InvalidParameter("vector length does not match dim/depth")
    return TruncatedTensor(dim, levels)
