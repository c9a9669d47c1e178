"""Finite stochastic maps: distributions, Markov kernels and joints on finite spaces.

Every object here is immutable. Probabilities are float64 and all
normalization checks use :data:`catlm.validation.PROB_TOL`.

Product spaces carry their factors; their elements are tuples of factor
labels in lexicographic (row-major) order, which matches ``numpy.kron``.
"""

from dataclasses import dataclass, field
from itertools import product as _cartesian

import numpy as np

from .exceptions import (
    MalformedProductSpace,
    NonStochastic,
    SpaceMismatch,
    UnknownElement,
    ValidationError,
)
from .validation import (
    PROB_TOL,
    check_matrix,
    TINY_WEIGHT,
    check_probability_vector,
    check_stochastic_matrix,
    normalize_weights,
)

__all__ = [
    "SpaceLabel",
    "FiniteDistribution",
    "FiniteKernel",
    "JointDistribution",
    "UNIT",
    "make_distribution",
    "point_mass",
    "uniform",
    "identity",
    "discard",
    "copy",
    "deterministic",
    "compose",
    "tensor",
    "push_forward",
    "diagonal_pair",
    "independent_pair",
    "product_joint",
    "marginalize",
]


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def _as_label(obj):
    # JSON turns tuple labels into lists
    if isinstance(obj, list):
        return tuple(_as_label(o) for o in obj)
    return obj


@dataclass(frozen=True, eq=False)
class SpaceLabel:
    """Ordered finite set of distinct hashable labels."""

    elements: tuple
    factors: tuple = ()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise ValidationError("a space needs at least one element")
        index = {}
        for i, e in enumerate(elements):
            if e in index:
                raise ValidationError(f"duplicate label {e!r}")
            index[e] = i
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "_index", index)

    @classmethod
    def of(cls, labels):
        """Space whose labels are ``str(label)`` for each input."""
        return cls(tuple(str(x) for x in labels))

    @classmethod
    def range(cls, n, prefix=""):
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    @classmethod
    def product(cls, *spaces):
        """Cartesian product; elements are tuples ``(x1, ..., xn)``."""
        if not spaces:
            return UNIT
        elements = tuple(_cartesian(*(s.elements for s in spaces)))
        return cls(elements, factors=tuple(spaces))

    @classmethod
    def power(cls, space, k):
        if k < 1:
            raise ValidationError("power needs k >= 1")
        return cls.product(*([space] * k))

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        if not isinstance(other, SpaceLabel):
            return NotImplemented
        return self.elements == other.elements

    def __hash__(self):
        return hash(self.elements)

    @property
    def size(self):
        return len(self.elements)

    @property
    def is_product(self):
        return bool(self.factors)

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise UnknownElement(f"{label!r} is not an element of this space") from None

    def to_json(self):
        return list(self.elements)

    @classmethod
    def from_json(cls, labels):
        """Rebuild a space; tuple labels forming a full grid regain their factors."""
        elements = tuple(_as_label(x) for x in labels)
        if elements and all(isinstance(e, tuple) for e in elements):
            arity = {len(e) for e in elements}
            if len(arity) == 1:
                (n,) = arity
                coords = [tuple(dict.fromkeys(e[i] for e in elements)) for i in range(n)]
                if tuple(_cartesian(*coords)) == elements:
                    return cls(elements, factors=tuple(cls(c) for c in coords))
        return cls(elements)


UNIT = SpaceLabel(("*",))


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability vector over a :class:`SpaceLabel`."""

    space: SpaceLabel
    weights: np.ndarray

    def __post_init__(self):
        w = check_probability_vector(self.weights, name="weights", size=len(self.space))
        object.__setattr__(self, "weights", _frozen(w))

    def __getitem__(self, label):
        return float(self.weights[self.space.index(label)])

    @property
    def support(self):
        return tuple(e for e, w in zip(self.space, self.weights) if w > 0)

    def is_point_mass(self, tol=PROB_TOL):
        return bool(np.max(self.weights) >= 1.0 - tol)

    def allclose(self, other, atol=PROB_TOL):
        return self.space == other.space and np.allclose(self.weights, other.weights, rtol=0, atol=atol)

    def to_json(self):
        return {"space": self.space.to_json(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, data):
        return cls(SpaceLabel.from_json(data["space"]), np.asarray(data["weights"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    """Row-stochastic matrix: one distribution over ``target`` per ``source`` element."""

    source: SpaceLabel
    target: SpaceLabel
    rows: np.ndarray

    def __post_init__(self):
        rows = check_stochastic_matrix(self.rows, shape=(len(self.source), len(self.target)))
        object.__setattr__(self, "rows", _frozen(rows))

    def row(self, label):
        return FiniteDistribution(self.target, self.rows[self.source.index(label)])

    def is_deterministic(self, tol=PROB_TOL):
        return bool(np.all(self.rows.max(axis=1) >= 1.0 - tol))

    def allclose(self, other, atol=PROB_TOL):
        return (
            self.source == other.source
            and self.target == other.target
            and np.allclose(self.rows, other.rows, rtol=0, atol=atol)
        )

    def to_json(self):
        return {
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "rows": self.rows.tolist(),
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            SpaceLabel.from_json(data["source"]),
            SpaceLabel.from_json(data["target"]),
            np.asarray(data["rows"], dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability matrix over ``left x right``."""

    left: SpaceLabel
    right: SpaceLabel
    weights: np.ndarray

    def __post_init__(self):
        w = check_matrix(self.weights, name="weights", shape=(len(self.left), len(self.right)))
        if np.any(w < 0):
            raise ValidationError("joint weights must be nonnegative")
        if abs(w.sum() - 1.0) > PROB_TOL:
            raise NonStochastic(f"joint sums to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", _frozen(np.where(w < TINY_WEIGHT, 0.0, w)))

    def flatten(self):
        """The same joint as a distribution on the product space."""
        return FiniteDistribution(SpaceLabel.product(self.left, self.right), self.weights.ravel())

    def to_json(self):
        return {
            "left": self.left.to_json(),
            "right": self.right.to_json(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            SpaceLabel.from_json(data["left"]),
            SpaceLabel.from_json(data["right"]),
            np.asarray(data["weights"], dtype=np.float64),
        )


def make_distribution(space, raw_weights):
    """Normalize nonnegative ``raw_weights`` into a distribution on ``space``."""
    return FiniteDistribution(space, normalize_weights(raw_weights, size=len(space)))


def point_mass(space, label):
    w = np.zeros(len(space))
    w[space.index(label)] = 1.0
    return FiniteDistribution(space, w)


def uniform(space):
    return FiniteDistribution(space, np.full(len(space), 1.0 / len(space)))


def identity(space):
    return FiniteKernel(space, space, np.eye(len(space)))


def discard(space):
    """The unique kernel ``space -> UNIT``."""
    return FiniteKernel(space, UNIT, np.ones((len(space), 1)))


def deterministic(source, target, fn):
    """Kernel whose row ``x`` is the point mass at ``fn(x)``."""
    rows = np.zeros((len(source), len(target)))
    for i, x in enumerate(source):
        rows[i, target.index(fn(x))] = 1.0
    return FiniteKernel(source, target, rows)


def copy(space):
    return deterministic(space, SpaceLabel.product(space, space), lambda x: (x, x))


def compose(k, h):
    """Sequential composite ``x -> k -> h``, i.e. the matrix product of rows."""
    if k.target != h.source:
        raise SpaceMismatch("compose: target of the first kernel differs from source of the second")
    return FiniteKernel(k.source, h.target, k.rows @ h.rows)


def tensor(k, h):
    """Parallel product kernel on ``(X x W) -> (Y x Z)``."""
    return FiniteKernel(
        SpaceLabel.product(k.source, h.source),
        SpaceLabel.product(k.target, h.target),
        np.kron(k.rows, h.rows),
    )


def push_forward(p, k):
    if p.space != k.source:
        raise SpaceMismatch("push_forward: distribution space differs from kernel source")
    out = p.weights @ k.rows
    return FiniteDistribution(k.target, out)


def diagonal_pair(p):
    """Sample once, then copy: mass ``p(y)`` on ``(y, y)``."""
    return JointDistribution(p.space, p.space, np.diag(p.weights))


def independent_pair(p):
    """Copy the input, then sample twice independently."""
    return JointDistribution(p.space, p.space, np.outer(p.weights, p.weights))


def product_joint(p, q):
    return JointDistribution(p.space, q.space, np.outer(p.weights, q.weights))


def marginalize(j, side):
    """Marginal of ``j`` on ``"left"`` or ``"right"``."""
    if side == "left":
        return FiniteDistribution(j.left, j.weights.sum(axis=1))
    if side == "right":
        return FiniteDistribution(j.right, j.weights.sum(axis=0))
    raise ValidationError(f"side must be 'left' or 'right', got {side!r}")


def split_product(space):
    """Return the factors of a product space or raise :class:`MalformedProductSpace`."""
    if not space.is_product:
        raise MalformedProductSpace("space is not a product space")
    expected = tuple(_cartesian(*(f.elements for f in space.factors)))
    if expected != space.elements:
        raise MalformedProductSpace("product space elements are not the lexicographic grid of its factors")
    return space.factors

