"""Categorical entropy, categorical mutual information, DPI audits and the
multi-token information surplus, all evaluated exactly on finite spaces.

For a kernel row ``p`` the categorical entropy compares "sample once then
copy" (:func:`~catlm.finstoch.diagonal_pair`) against "copy then sample twice"
(:func:`~catlm.finstoch.independent_pair`). With KL this is the Shannon
entropy of ``p``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .divergence import (
    KL,
    DivergenceKind,
    divergence,
    divergence_values,
    is_infinite,
)
from .exceptions import InfiniteDivergenceError, MalformedProductSpace, SpaceMismatch, ValidationError
from .finstoch import (
    FiniteDistribution,
    JointDistribution,
    push_forward,
    split_product,
)

__all__ = [
    "EntropyReport",
    "SurplusReport",
    "categorical_entropy_of",
    "categorical_entropy_point",
    "average_categorical_entropy",
    "categorical_mutual_information",
    "shannon_mutual_information",
    "dpi_audit",
    "information_surplus",
]


@dataclass(frozen=True)
class EntropyReport:
    per_point: dict
    average: float
    kind: DivergenceKind
    weighting: FiniteDistribution = field(repr=False)

    def to_json(self):
        return {
            "unit": "nats",
            "kind": self.kind.name,
            "average": self.average,
            "per_point": [[_jsonable(x), v] for x, v in self.per_point.items()],
            "weighting": self.weighting.to_json(),
        }


@dataclass(frozen=True)
class SurplusReport:
    mi_full: float
    mi_single: float
    surplus: float
    horizon: int
    kind: DivergenceKind = KL

    def to_json(self):
        return {
            "unit": "nats",
            "kind": self.kind.name,
            "horizon": self.horizon,
            "mi_full": self.mi_full,
            "mi_single": self.mi_single,
            "surplus": self.surplus,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def _jsonable(label):
    return list(label) if isinstance(label, tuple) else label


def _psi(weights, kind):
    # sample-then-copy vs copy-then-sample-twice, compared on Y x Y
    return divergence_values(kind, np.diag(weights), np.outer(weights, weights))


def categorical_entropy_of(p, kind=KL):
    """Categorical entropy of a single distribution (a kernel row)."""
    _reject_similarity(kind)
    return _psi(p.weights, kind)


def categorical_entropy_point(k, x, kind=KL):
    """Categorical entropy of kernel ``k`` at source element ``x``."""
    _reject_similarity(kind)
    return _psi(k.rows[k.source.index(x)], kind)


def average_categorical_entropy(k, weighting, kind=KL):
    """Weighted average of the pointwise categorical entropy over ``k.source``."""
    _reject_similarity(kind)
    if weighting.space != k.source:
        raise SpaceMismatch("weighting must live on the kernel source")
    per_point = {}
    total = 0.0
    for i, x in enumerate(k.source):
        if weighting.weights[i] <= 0:
            continue
        value = _psi(k.rows[i], kind)
        per_point[x] = value
        if is_infinite(value):
            raise InfiniteDivergenceError(f"categorical entropy is infinite at {x!r}")
        total += weighting.weights[i] * value
    return EntropyReport(per_point=per_point, average=float(total), kind=kind, weighting=weighting)


def _reject_similarity(kind):
    if kind.is_similarity:
        raise ValidationError(
            "the Bhattacharyya coefficient is a similarity; use HellingerSq (= 1 - BC) for entropies"
        )


def categorical_mutual_information(j, kind=KL):
    """Divergence between a joint and the product of its marginals."""
    _reject_similarity(kind)
    left = j.weights.sum(axis=1)
    right = j.weights.sum(axis=0)
    return divergence_values(kind, j.weights, np.outer(left, right))


def shannon_mutual_information(j):
    """``H(X) + H(Y) - H(X, Y)``, computed from entropies only."""
    def h(w):
        w = w[w > 0]
        return float(-np.sum(w * np.log(w)))

    return h(j.weights.sum(axis=1)) + h(j.weights.sum(axis=0)) - h(j.weights.ravel())


def dpi_audit(p, q, k, kind=KL):
    """Slack of the data-processing inequality through ``k``.

    For a divergence the slack is ``D(p, q) - D(pk, qk)``; for the
    Bhattacharyya coefficient it is ``BC(pk, qk) - BC(p, q)``. A sound kernel
    and divergence give slack >= 0. An infinite input divergence gives ``inf``.
    """
    if p.space != q.space:
        raise SpaceMismatch("dpi_audit: p and q live on different spaces")
    before = divergence(kind, p, q)
    after = divergence(kind, push_forward(p, k), push_forward(q, k))
    if kind.is_similarity:
        return float(after) - float(before)
    if is_infinite(before):
        return float("inf")
    if is_infinite(after):
        return float("-inf")
    return before - after


def _first_coordinate_joint(j, factors):
    """Marginalize a joint over ``H x V^K`` onto ``H x V`` (first future token)."""
    sizes = [len(f) for f in factors]
    w = j.weights.reshape(len(j.left), *sizes)
    w1 = w.sum(axis=tuple(range(2, w.ndim))) if w.ndim > 2 else w
    return JointDistribution(j.left, factors[0], w1)


def information_surplus(joint_full, kind=KL):
    """MI with the K-token future minus MI with the next token alone.

    ``joint_full.right`` must be the K-fold product of one vocabulary space
    (or the vocabulary itself, meaning K = 1).
    """
    right = joint_full.right
    if right.is_product:
        factors = split_product(right)
        vocab = factors[0]
        if any(f != vocab for f in factors):
            raise MalformedProductSpace("future space must be a power of a single vocabulary")
        horizon = len(factors)
    else:
        factors = (right,)
        horizon = 1
    mi_full = categorical_mutual_information(joint_full, kind)
    if horizon == 1:
        mi_single = mi_full
    else:
        mi_single = categorical_mutual_information(_first_coordinate_joint(joint_full, factors), kind)
    if is_infinite(mi_full) or is_infinite(mi_single):
        raise InfiniteDivergenceError("mutual information is infinite for this kind")
    return SurplusReport(mi_full=mi_full, mi_single=mi_single, surplus=mi_full - mi_single, horizon=horizon, kind=kind)

