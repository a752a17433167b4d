"""Finite truncations of multi-mode Fock spaces.

A truncation shape selects a finite set of occupation multi-indices
(k_1, ..., k_m).  Two variants are supported: per-mode caps (``Rect``)
and a weighted bound on the total excitation number (``WeightedTotal``).
Basis enumeration is graded lexicographic and deterministic, so dense
indices are stable across runs.  All values here are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "Rect",
    "WeightedTotal",
    "TruncationShape",
    "BasisMap",
    "DenseOperator",
    "ShapeError",
    "dimension",
    "mode_count",
    "basis_map",
    "contains",
    "embed",
    "project",
    "discarded_tail_norm",
    "grow",
    "shrink",
]


class ShapeError(ValueError):
    """Invalid shape, or an operation on incompatible shapes."""


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        # exact binary value of the float; rational strings are preferred
        return Fraction(value).limit_denominator(10**12)
    return Fraction(value)


@dataclass(frozen=True)
class Rect:
    """All multi-indices k with k_j <= caps[j] for every mode j."""

    caps: tuple[int, ...]

    def __init__(self, caps: Sequence[int]):
        caps = tuple(int(c) for c in caps)
        if len(caps) == 0:
            raise ShapeError("Rect needs at least one mode")
        if any(c < 0 for c in caps):
            raise ShapeError(f"negative cap in {caps}")
        object.__setattr__(self, "caps", caps)

    @property
    def mode_count(self) -> int:
        return len(self.caps)

    def admits(self, state: tuple[int, ...]) -> bool:
        return all(0 <= k <= c for k, c in zip(state, self.caps))

    def grade(self, state: tuple[int, ...]):
        return sum(state)


@dataclass(frozen=True)
class WeightedTotal:
    """All multi-indices k with sum_j weights[j] * k_j <= cap.

    Weights and cap are exact rationals so membership has no rounding
    ambiguity.
    """

    weights: tuple[Fraction, ...]
    cap: Fraction

    def __init__(self, weights: Sequence, cap):
        weights = tuple(_as_fraction(w) for w in weights)
        cap = _as_fraction(cap)
        if len(weights) == 0:
            raise ShapeError("WeightedTotal needs at least one mode")
        if any(w <= 0 for w in weights):
            raise ShapeError(f"weights must be positive, got {weights}")
        if cap < 0:
            raise ShapeError(f"cap must be non-negative, got {cap}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cap", cap)

    @property
    def mode_count(self) -> int:
        return len(self.weights)

    def admits(self, state: tuple[int, ...]) -> bool:
        return sum(w * k for w, k in zip(self.weights, state)) <= self.cap

    def grade(self, state: tuple[int, ...]):
        return sum(w * k for w, k in zip(self.weights, state))


TruncationShape = Union[Rect, WeightedTotal]


def mode_count(shape: TruncationShape) -> int:
    return shape.mode_count


def _enumerate_states(shape: TruncationShape) -> list[tuple[int, ...]]:
    if isinstance(shape, Rect):
        states: list[tuple[int, ...]] = []

        def walk_rect(prefix: tuple[int, ...], j: int):
            if j == len(shape.caps):
                states.append(prefix)
                return
            for k in range(shape.caps[j] + 1):
                walk_rect(prefix + (k,), j + 1)

        walk_rect((), 0)
        return states

    states = []

    def walk(prefix: tuple[int, ...], j: int, budget: Fraction):
        if j == len(shape.weights):
            states.append(prefix)
            return
        w = shape.weights[j]
        kmax = int(budget / w)
        for k in range(kmax + 1):
            walk(prefix + (k,), j + 1, budget - w * k)

    walk((), 0, shape.cap)
    return states


@dataclass(frozen=True, eq=False)
class BasisMap:
    """Deterministic graded-lexicographic enumeration of a shape's basis."""

    shape: TruncationShape
    states: tuple[tuple[int, ...], ...]
    index: dict

    def multi_index_of(self, dense_index: int) -> tuple[int, ...]:
        return self.states[dense_index]

    def index_of(self, state: tuple[int, ...]) -> int:
        return self.index[tuple(state)]

    def occupations(self, mode: int) -> np.ndarray:
        arr = np.array([s[mode] for s in self.states], dtype=np.int64)
        arr.setflags(write=False)
        return arr


@lru_cache(maxsize=None)
def basis_map(shape: TruncationShape) -> BasisMap:
    states = sorted(_enumerate_states(shape), key=lambda s: (shape.grade(s), s))
    states = tuple(states)
    index = {s: i for i, s in enumerate(states)}
    return BasisMap(shape=shape, states=states, index=index)


def dimension(shape: TruncationShape) -> int:
    return len(basis_map(shape).states)


def contains(shape_small: TruncationShape, shape_big: TruncationShape) -> bool:
    """True iff every basis multi-index of shape_small lies in shape_big."""
    if shape_small.mode_count != shape_big.mode_count:
        raise ShapeError(
            f"mode-count mismatch: {shape_small.mode_count} vs {shape_big.mode_count}"
        )
    if isinstance(shape_small, Rect) and isinstance(shape_big, Rect):
        return all(a <= b for a, b in zip(shape_small.caps, shape_big.caps))
    if isinstance(shape_small, Rect) and isinstance(shape_big, WeightedTotal):
        # the max-grade corner decides
        return shape_big.admits(shape_small.caps)
    if isinstance(shape_small, WeightedTotal) and isinstance(shape_big, Rect):
        return all(
            int(shape_small.cap / w) <= c
            for w, c in zip(shape_small.weights, shape_big.caps)
        )
    return all(shape_big.admits(s) for s in basis_map(shape_small).states)


@lru_cache(maxsize=None)
def _embedding_indices(
    shape_small: TruncationShape, shape_big: TruncationShape
) -> np.ndarray:
    if not contains(shape_small, shape_big):
        raise ShapeError(f"{shape_small} is not contained in {shape_big}")
    big = basis_map(shape_big)
    idx = np.array(
        [big.index[s] for s in basis_map(shape_small).states], dtype=np.intp
    )
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=None)
def _complement_indices(
    shape_small: TruncationShape, shape_big: TruncationShape
) -> np.ndarray:
    inside = set(_embedding_indices(shape_small, shape_big).tolist())
    idx = np.array(
        [i for i in range(dimension(shape_big)) if i not in inside], dtype=np.intp
    )
    idx.setflags(write=False)
    return idx


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Complex matrix over the basis of an explicit truncation shape."""

    shape: TruncationShape
    matrix: np.ndarray

    def __init__(self, shape: TruncationShape, matrix):
        arr = np.array(matrix, dtype=np.complex128, order="C")
        d = dimension(shape)
        if arr.shape != (d, d):
            raise ShapeError(f"matrix shape {arr.shape} does not match dimension {d}")
        arr.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "matrix", arr)

    @classmethod
    def zeros(cls, shape: TruncationShape) -> "DenseOperator":
        d = dimension(shape)
        return cls(shape, np.zeros((d, d), dtype=np.complex128))

    @classmethod
    def identity(cls, shape: TruncationShape) -> "DenseOperator":
        return cls(shape, np.eye(dimension(shape), dtype=np.complex128))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "DenseOperator":
        return DenseOperator(self.shape, self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def _check_same(self, other: "DenseOperator"):
        if self.shape != other.shape:
            raise ShapeError("operators live on different shapes")

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        self._check_same(other)
        return DenseOperator(self.shape, self.matrix + other.matrix)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        self._check_same(other)
        return DenseOperator(self.shape, self.matrix - other.matrix)

    def __neg__(self) -> "DenseOperator":
        return DenseOperator(self.shape, -self.matrix)

    def __mul__(self, scalar) -> "DenseOperator":
        return DenseOperator(self.shape, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        self._check_same(other)
        return DenseOperator(self.shape, self.matrix @ other.matrix)


def embed(op: DenseOperator, shape_big: TruncationShape) -> DenseOperator:
    """Copy matrix elements to the matching multi-indices of a larger shape."""
    if op.shape == shape_big:
        return op
    idx = _embedding_indices(op.shape, shape_big)
    out = np.zeros((dimension(shape_big),) * 2, dtype=np.complex128)
    out[np.ix_(idx, idx)] = op.matrix
    return DenseOperator(shape_big, out)


def project(
    op: DenseOperator, shape_small: TruncationShape
) -> tuple[DenseOperator, float]:
    """Restrict to a contained shape; also return ||M - P M P||_1.

    The trace norm of the discarded part is the certified loss a
    projection adds to the error budget.
    """
    if op.shape == shape_small:
        return op, 0.0
    idx = _embedding_indices(shape_small, op.shape)
    sub = op.matrix[np.ix_(idx, idx)]
    kept = np.zeros_like(op.matrix)
    kept[np.ix_(idx, idx)] = sub
    discarded = op.matrix - kept
    nrm = float(np.linalg.svd(discarded, compute_uv=False).sum())
    return DenseOperator(shape_small, sub), nrm


def discarded_tail_norm(op: DenseOperator, shape_small: TruncationShape) -> float:
    """||M - P M P||_1 without building the restricted operator."""
    return project(op, shape_small)[1]


def _grow_caps(caps: tuple[int, ...], step) -> tuple[int, ...]:
    if isinstance(step, Iterable) and not isinstance(step, (str, bytes)):
        inc = tuple(int(s) for s in step)
        if len(inc) != len(caps):
            raise ShapeError("per-mode step length does not match mode count")
    else:
        inc = (int(step),) * len(caps)
    return tuple(c + s for c, s in zip(caps, inc))


def grow(shape: TruncationShape, step) -> TruncationShape:
    """Enlarge a shape: Rect adds a per-mode increment, WeightedTotal raises the cap."""
    if isinstance(shape, Rect):
        new_caps = _grow_caps(shape.caps, step)
        if any(n < o for n, o in zip(new_caps, shape.caps)):
            raise ShapeError("grow step must be non-negative")
        return Rect(new_caps)
    inc = _as_fraction(step)
    if inc < 0:
        raise ShapeError("grow step must be non-negative")
    return WeightedTotal(shape.weights, shape.cap + inc)


def shrink(shape: TruncationShape, step) -> TruncationShape:
    """Mirror of grow; errors if any cap would become negative."""
    if isinstance(shape, Rect):
        if isinstance(step, Iterable) and not isinstance(step, (str, bytes)):
            inc = tuple(int(s) for s in step)
            if len(inc) != len(shape.caps):
                raise ShapeError("per-mode step length does not match mode count")
        else:
            inc = (int(step),) * len(shape.caps)
        new_caps = tuple(c - s for c, s in zip(shape.caps, inc))
        if any(c < 0 for c in new_caps):
            raise ShapeError(f"shrink would drop a cap below zero: {new_caps}")
        return Rect(new_caps)
    dec = _as_fraction(step)
    new_cap = shape.cap - dec
    if new_cap < 0:
        raise ShapeError(f"shrink would drop the cap below zero: {new_cap}")
    return WeightedTotal(shape.weights, new_cap)
