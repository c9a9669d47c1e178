"""Fisher-Rao geometry of the simplex pulled back to hidden-state space.

For a softmax head ``p(h) = softmax(W h)`` the pulled-back metric is the
expected outer product of the score ``s_w = W_w - sum_w' p(w') W_w'``,
equivalently ``W^T (diag p - p p^T) W``. Its rank never exceeds
``min(d_model, |V| - 1)``.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .armodel.model import head_probabilities
from .exceptions import BoundarySimplex, NonFiniteInput, ValidationError
from .validation import check_vector

__all__ = [
    "PullbackMetric",
    "P_MIN",
    "RANK_TOL",
    "fisher_rao_matrix",
    "head_jacobian",
    "score_vectors",
    "pullback_metric",
    "pullback_matrix",
    "average_pullback",
    "LocalExpansionReport",
    "verify_local_expansion",
    "pullback_consistency",
]

P_MIN = 1e-12
RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PullbackMetric:
    at: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    numerical_rank: int

    def quadratic_form(self, v):
        v = np.asarray(v, dtype=np.float64)
        return float(v @ self.matrix @ v)

    def to_json(self):
        return {
            "h": self.at.tolist(),
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "rank": self.numerical_rank,
        }

    def dumps(self):
        return json.dumps(self.to_json())


def _probabilities(p):
    return p.weights if hasattr(p, "weights") else np.asarray(p, dtype=np.float64)


def fisher_rao_matrix(p):
    """Fisher-Rao metric in the chart of the first ``|V| - 1`` probabilities."""
    w = _probabilities(p)
    if np.min(w) < P_MIN:
        raise BoundarySimplex(f"probability {np.min(w):.3g} below {P_MIN:g}; the chart is singular there")
    head = w[:-1]
    return np.diag(1.0 / head) + 1.0 / w[-1]


def _check_h(model, h):
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise NonFiniteInput("hidden state contains NaN or Inf")
    return check_vector(h, name="h", size=model.d_model)


def head_jacobian(model, h):
    """``J[w, a] = dp(w)/dh_a``; each column sums to zero."""
    h = _check_h(model, h)
    p = head_probabilities(model, h)
    mean_proto = p @ model.head
    return p[:, None] * (model.head - mean_proto)


def score_vectors(model, h):
    """Row ``w`` is ``grad_h log p(w)``."""
    h = _check_h(model, h)
    p = head_probabilities(model, h)
    return model.head - p @ model.head


def pullback_matrix(model, h):
    """Expected score outer product at ``h``, symmetrized."""
    h = _check_h(model, h)
    p = head_probabilities(model, h)
    s = model.head - p @ model.head
    g = (s * p[:, None]).T @ s
    return 0.5 * (g + g.T)


def _eig(matrix, rank_tol=RANK_TOL):
    # eigh (LAPACK tridiagonal reduction) is deterministic for a given input
    vals, vecs = np.linalg.eigh(matrix)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    top = vals[0] if vals.size else 0.0
    rank = int(np.sum(vals > rank_tol * top)) if top > 0 else 0
    return vals, vecs, rank


def pullback_metric(model, h, rank_tol=RANK_TOL):
    h = _check_h(model, h)
    g = pullback_matrix(model, h)
    vals, vecs, rank = _eig(g, rank_tol)
    return PullbackMetric(at=h, matrix=g, eigenvalues=vals, eigenvectors=vecs, numerical_rank=rank)


def average_pullback(model, hidden, weights, rank_tol=RANK_TOL):
    """Weighted average of the pullback metric over a set of hidden states."""
    hidden = np.asarray(hidden, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    g = sum(w * pullback_matrix(model, h) for h, w in zip(hidden, weights))
    g = 0.5 * (g + g.T)
    vals, vecs, rank = _eig(g, rank_tol)
    return PullbackMetric(at=np.full(model.d_model, np.nan), matrix=g, eigenvalues=vals,
                          eigenvectors=vecs, numerical_rank=rank)


@dataclass(frozen=True)
class LocalExpansionReport:
    epsilons: tuple
    kl: tuple
    quadratic: tuple
    residuals: tuple
    scaled_residuals: tuple
    constant: float
    slope: float

    def to_json(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


def _perturbed_kl(model, p0, h, v, eps):
    # KL(p(h + eps v) || p(h)) from the logit shift; expm1/log1p keep it accurate as eps -> 0
    delta = eps * (model.head @ v)
    log_ratio = delta - math.log1p(float(p0 @ np.expm1(delta)))
    return float(np.sum(p0 * np.exp(log_ratio) * log_ratio))


def verify_local_expansion(model, h, direction, epsilons=(1e-2, 5e-3, 2.5e-3)):
    """Compare ``KL(p(h + eps v) || p(h))`` with ``eps^2 / 2 * v^T g v``.

    The report carries ``r(eps) / eps^3``, the largest such ratio (``constant``)
    and the least-squares slope of ``log |r|`` against ``log eps`` (NaN when
    every residual vanishes).
    """
    h = _check_h(model, h)
    v = check_vector(direction, name="direction", size=model.d_model)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValidationError("direction must have unit norm")
    eps = tuple(float(e) for e in epsilons)
    if any(not (0 < e <= 0.1) for e in eps):
        raise ValidationError("epsilons must lie in (0, 0.1]")
    p0 = head_probabilities(model, h)
    gvv = float(v @ pullback_matrix(model, h) @ v)
    kls, quads, res = [], [], []
    for e in eps:
        kl = _perturbed_kl(model, p0, h, v, e)
        quad = 0.5 * e * e * gvv
        kls.append(float(kl))
        quads.append(quad)
        res.append(float(kl) - quad)
    scaled = tuple(r / e ** 3 for r, e in zip(res, eps))
    nonzero = [(math.log(e), math.log(abs(r))) for e, r in zip(eps, res) if r != 0.0]
    if len(nonzero) >= 2:
        x, y = np.array(nonzero).T
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = float("nan")
    return LocalExpansionReport(
        epsilons=eps,
        kl=tuple(kls),
        quadratic=tuple(quads),
        residuals=tuple(res),
        scaled_residuals=scaled,
        constant=float(max(abs(s) for s in scaled)),
        slope=slope,
    )


def pullback_consistency(model, h):
    """Max elementwise gap between ``J^T g_FR J`` (chart route) and the score form."""
    h = _check_h(model, h)
    p = head_probabilities(model, h)
    jac = head_jacobian(model, h)[:-1]
    chart = jac.T @ fisher_rao_matrix(p) @ jac
    return float(np.max(np.abs(chart - pullback_matrix(model, h))))
