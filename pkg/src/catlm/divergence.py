"""Divergences between finite distributions, in nats.

Kinds: KL, total variation, squared Hellinger (normalized, ``1 - BC``),
the Bhattacharyya coefficient, Jensen-Shannon and Renyi of order alpha.

The Bhattacharyya coefficient is a *similarity* (1 on identical inputs,
0 on disjoint supports). It is accepted wherever a kind is expected so that
it can be reported side by side with the others, but monotonicity under
kernels runs the other way for it: it can only grow. ``DivergenceKind.is_similarity``
flags that orientation.

An absolute-continuity failure yields :data:`INFINITE`, a float that compares
as ``+inf`` but raises :class:`InfiniteDivergenceError` on arithmetic, so it
cannot leak into an average unnoticed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InfiniteDivergenceError, SpaceMismatch, UnknownKind, ValidationError

__all__ = [
    "DivergenceKind",
    "KL",
    "TV",
    "HELLINGER_SQ",
    "BHATTACHARYYA",
    "JS",
    "renyi",
    "INFINITE",
    "is_infinite",
    "divergence",
    "joint_divergence",
    "divergence_values",
    "hellinger_sq_normalized",
    "hellinger_sq_unnormalized",
    "bhattacharyya_coefficient",
    "shannon_entropy",
]


class _InfiniteDivergence(float):
    def __new__(cls):
        return super().__new__(cls, math.inf)

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return (_InfiniteDivergence, ())

    def _poison(self, *_):
        raise InfiniteDivergenceError("arithmetic on an infinite divergence (absolute continuity fails)")

    __add__ = __radd__ = __sub__ = __rsub__ = _poison
    __mul__ = __rmul__ = __truediv__ = __rtruediv__ = _poison
    __neg__ = __pos__ = __abs__ = _poison


INFINITE = _InfiniteDivergence()


def is_infinite(value):
    return isinstance(value, float) and math.isinf(value)


_TAGS = ("KL", "TotalVariation", "HellingerSq", "Bhattacharyya", "JensenShannon", "Renyi")


@dataclass(frozen=True)
class DivergenceKind:
    tag: str
    alpha: float = None

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise UnknownKind(f"unknown divergence kind {self.tag!r}")
        if self.tag == "Renyi":
            if self.alpha is None or not (self.alpha > 0) or self.alpha == 1 or not math.isfinite(self.alpha):
                raise ValidationError(f"Renyi order must be positive and != 1, got {self.alpha!r}")
        elif self.alpha is not None:
            raise ValidationError(f"{self.tag} takes no order parameter")

    @property
    def is_similarity(self):
        return self.tag == "Bhattacharyya"

    @property
    def name(self):
        return f"Renyi({self.alpha:g})" if self.tag == "Renyi" else self.tag

    def __str__(self):
        return self.name

    def to_json(self):
        return {"tag": self.tag, "alpha": self.alpha}

    @classmethod
    def parse(cls, text):
        """Parse ``"KL"``, ``"TotalVariation"``, ``"Renyi(2)"`` and friends."""
        if isinstance(text, DivergenceKind):
            return text
        text = str(text).strip()
        if text.startswith("Renyi(") and text.endswith(")"):
            return renyi(float(text[6:-1]))
        aliases = {"TV": "TotalVariation", "JS": "JensenShannon", "BC": "Bhattacharyya", "Hellinger": "HellingerSq"}
        return cls(aliases.get(text, text))


KL = DivergenceKind("KL")
TV = DivergenceKind("TotalVariation")
HELLINGER_SQ = DivergenceKind("HellingerSq")
BHATTACHARYYA = DivergenceKind("Bhattacharyya")
JS = DivergenceKind("JensenShannon")


def renyi(alpha):
    return DivergenceKind("Renyi", float(alpha))


def _kl(p, q):
    mask = p > 0
    if np.any(q[mask] <= 0):
        return INFINITE
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def _renyi(p, q, alpha):
    mask = (p > 0) & (q > 0)
    if alpha > 1 and np.any((p > 0) & (q <= 0)):
        return INFINITE
    s = float(np.sum(np.exp(alpha * np.log(p[mask]) + (1.0 - alpha) * np.log(q[mask]))))
    if s <= 0.0:
        return INFINITE
    return math.log(s) / (alpha - 1.0)


def bhattacharyya_coefficient(p, q):
    p, q = _raw(p), _raw(q)
    return float(np.sum(np.sqrt(p * q)))


def hellinger_sq_normalized(p, q):
    """``1 - BC(p, q)``, computed as ``0.5 * sum (sqrt p - sqrt q)^2``; range [0, 1]."""
    p, q = _raw(p), _raw(q)
    return float(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))


def hellinger_sq_unnormalized(p, q):
    """``2 (1 - BC(p, q))``; range [0, 2]."""
    return 2.0 * hellinger_sq_normalized(p, q)


def shannon_entropy(p):
    p = _raw(p)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def _raw(p):
    return p.weights if hasattr(p, "weights") else np.asarray(p, dtype=np.float64)


def divergence_values(kind, p, q):
    """Divergence on raw probability arrays of equal shape (flattened)."""
    p = np.ravel(p)
    q = np.ravel(q)
    if p.shape != q.shape:
        raise SpaceMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    tag = kind.tag
    if tag == "KL":
        value = _kl(p, q)
    elif tag == "TotalVariation":
        value = float(0.5 * np.sum(np.abs(p - q)))
    elif tag == "HellingerSq":
        value = hellinger_sq_normalized(p, q)
    elif tag == "Bhattacharyya":
        return bhattacharyya_coefficient(p, q)
    elif tag == "JensenShannon":
        m = 0.5 * (p + q)
        value = 0.5 * _kl(p, m) + 0.5 * _kl(q, m)
    else:
        value = _renyi(p, q, kind.alpha)
    if value is INFINITE:
        return INFINITE
    # round-off can leave a -1e-17 on identical inputs
    return max(value, 0.0)


def divergence(kind, p, q):
    """``D(p || q)`` for two distributions on the same space."""
    if p.space != q.space:
        raise SpaceMismatch("divergence: distributions live on different spaces")
    return divergence_values(kind, p.weights, q.weights)


def joint_divergence(kind, j1, j2):
    """Divergence between two joints on the same product space."""
    if j1.left != j2.left or j1.right != j2.right:
        raise SpaceMismatch("joint_divergence: joints live on different spaces")
    return divergence_values(kind, j1.weights, j2.weights)
