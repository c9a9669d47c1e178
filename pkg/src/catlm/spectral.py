"""Predictive-similarity kernels over contexts and the spectral diagnostics built on them.

Kernels compare the data's next-token laws of two contexts. On top of a
kernel this module computes Dirichlet energies of scalar functions, the
similarity operator's spectrum in ``L2(mu)``, a centered alignment between
representation Gram matrices and the kernel, and smoothness along the most
predictively sensitive directions of the averaged pullback metric.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .armodel.model import expected_prototypes, hidden_states
from .divergence import hellinger_sq_normalized, hellinger_sq_unnormalized
from .exceptions import SpaceMismatch, UnknownKind, ValidationError
from .finstoch import FiniteDistribution, SpaceLabel
from .infogeo import average_pullback
from .validation import check_random_state

__all__ = [
    "KERNEL_KINDS",
    "SimilarityMatrix",
    "SpectralReport",
    "DirectionEnergies",
    "similarity_matrix",
    "prototype_kernel",
    "dirichlet_energy",
    "laplacian_quadratic_form",
    "operator_matrix",
    "operator_spectrum",
    "gram_alignment",
    "AlignmentResult",
    "random_alignment_baseline",
    "normalized_energy",
    "sensitive_direction_energy",
    "random_direction_energies",
    "separation_correlation",
    "spectral_report",
]

KERNEL_KINDS = ("BC", "HellingerGauss", "Linear", "SymKL")
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    contexts: SpaceLabel
    kind: str
    entries: np.ndarray
    beta: float = None

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64)
        n = len(self.contexts)
        if e.shape != (n, n):
            raise SpaceMismatch(f"kernel has shape {e.shape}, expected {(n, n)}")
        if not np.allclose(e, e.T, rtol=0, atol=1e-12):
            raise ValidationError("similarity matrix must be symmetric")
        e = 0.5 * (e + e.T)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def to_json(self):
        return {
            "kind": self.kind,
            "beta": self.beta,
            "contexts": self.contexts.to_json(),
            "entries": self.entries.tolist(),
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        labels = ["".join(map(str, c)) if isinstance(c, tuple) else str(c) for c in self.contexts]
        writer.writerow(["context", *labels])
        for label, row in zip(labels, self.entries):
            writer.writerow([label, *(f"{x:.17g}" for x in row)])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class SpectralReport:
    operator_eigenvalues: np.ndarray
    leading_eigenvectors: np.ndarray
    dirichlet_energies: dict
    alignment_score: float
    flags: tuple = ()

    def to_json(self):
        return {
            "operator_eigenvalues": self.operator_eigenvalues.tolist(),
            "leading_eigenvectors": self.leading_eigenvectors.tolist(),
            "dirichlet_energies": {str(k): v for k, v in self.dirichlet_energies.items()},
            "alignment_score": self.alignment_score,
            "flags": list(self.flags),
        }

    def dumps(self):
        return json.dumps(self.to_json())


def _js(p, q):
    m = 0.5 * (p + q)

    def kl(a):
        mask = a > 0
        return float(np.sum(a[mask] * np.log(a[mask] / m[mask])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def similarity_matrix(proc, kind="BC", beta=1.0):
    """Kernel between the data's next-token laws of every pair of contexts."""
    if kind not in KERNEL_KINDS:
        raise UnknownKind(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")
    rows = proc.transition.rows
    n = rows.shape[0]
    if kind in ("HellingerGauss", "SymKL") and not (beta > 0):
        raise ValidationError("beta must be positive")
    if kind == "BC":
        roots = np.sqrt(rows)
        entries = roots @ roots.T
        np.fill_diagonal(entries, 1.0)
    elif kind == "Linear":
        entries = rows @ rows.T
    elif kind == "HellingerGauss":
        entries = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                entries[i, j] = math.exp(-beta * hellinger_sq_unnormalized(rows[i], rows[j]))
    else:
        entries = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                entries[i, j] = math.exp(-beta * _js(rows[i], rows[j]))
    return SimilarityMatrix(proc.contexts, kind, entries, beta if kind in ("HellingerGauss", "SymKL") else None)


def prototype_kernel(model, proc, one_hot=False):
    """``K(x, x') = <g_x, g_x'>`` with ``g_x`` the data-weighted mean token prototype.

    With ``one_hot`` the prototypes are the standard basis, which reduces the
    kernel to the ``Linear`` kind and detaches it from the model.
    """
    if one_hot:
        return similarity_matrix(proc, "Linear")
    g = expected_prototypes(model, proc)
    return SimilarityMatrix(proc.contexts, "Prototype", g @ g.T)


def _weights(mu, contexts):
    if isinstance(mu, FiniteDistribution):
        if mu.space != contexts:
            raise SpaceMismatch("mu must live on the kernel's contexts")
        return mu.weights
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (len(contexts),):
        raise SpaceMismatch("mu has the wrong length")
    return mu


def _function_values(phi, contexts):
    if callable(phi):
        return np.array([phi(x) for x in contexts], dtype=np.float64)
    if isinstance(phi, dict):
        return np.array([phi[x] for x in contexts], dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (len(contexts),):
        raise SpaceMismatch("phi has the wrong length")
    return phi


def dirichlet_energy(kernel, mu, phi):
    """``1/2 sum K(x,x') (phi(x) - phi(x'))^2 mu(x) mu(x')``."""
    w = _weights(mu, kernel.contexts)
    f = _function_values(phi, kernel.contexts)
    diff = f[:, None] - f[None, :]
    return float(0.5 * np.sum(kernel.entries * diff ** 2 * np.outer(w, w)))


def laplacian_quadratic_form(kernel, mu, phi):
    """``<phi, L phi>`` with ``L = D - A`` for the mu-weighted adjacency ``A = mu K mu``."""
    w = _weights(mu, kernel.contexts)
    f = _function_values(phi, kernel.contexts)
    adj = kernel.entries * np.outer(w, w)
    lap = np.diag(adj.sum(axis=1)) - adj
    return float(f @ lap @ f)


def operator_matrix(kernel, mu):
    """Matrix of the similarity operator: entry ``(x, x')`` is ``K(x, x') mu(x')``."""
    w = _weights(mu, kernel.contexts)
    return kernel.entries * w[None, :]


def operator_spectrum(kernel, mu):
    """Eigenpairs of the similarity operator, descending.

    Solved on the conjugate ``diag(sqrt mu) K diag(sqrt mu)``, which is
    symmetric; eigenvectors are mapped back to functions on contexts.
    """
    w = _weights(mu, kernel.contexts)
    r = np.sqrt(w)
    sym = r[:, None] * kernel.entries * r[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    with np.errstate(divide="ignore", invalid="ignore"):
        funcs = np.where(r[:, None] > 0, vecs / r[:, None], 0.0)
    return vals, funcs


def _center(matrix, w):
    # double centering in L2(mu): H^T M H with H = I - 1 w^T
    c = np.eye(len(w)) - np.outer(np.ones(len(w)), w)
    return c @ matrix @ c.T


@dataclass(frozen=True)
class AlignmentResult:
    score: float
    degenerate: bool

    def __float__(self):
        return self.score


def gram_alignment(hidden, kernel, mu):
    """Centered, normalized Frobenius alignment between ``<h_x, h_x'>`` and ``K``.

    Both matrices are double-centered under ``mu`` and weighted by
    ``sqrt(mu) sqrt(mu)^T`` before the cosine is taken. A collapsed
    representation (or kernel) returns a score of 0 flagged ``degenerate``.
    """
    w = _weights(mu, kernel.contexts)
    h = _hidden_matrix(hidden, kernel.contexts)
    r = np.sqrt(w)
    weight = np.outer(r, r)
    g = _center(h @ h.T, w) * weight
    k = _center(kernel.entries, w) * weight
    ng, nk = np.linalg.norm(g), np.linalg.norm(k)
    if ng < DEGENERATE_TOL or nk < DEGENERATE_TOL:
        return AlignmentResult(0.0, True)
    score = float(np.sum(g * k) / (ng * nk))
    return AlignmentResult(min(1.0, max(-1.0, score)), False)


def _hidden_matrix(hidden, contexts):
    if isinstance(hidden, dict):
        return np.array([hidden[x] for x in contexts], dtype=np.float64)
    h = np.asarray(hidden, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != len(contexts):
        raise SpaceMismatch("need one hidden vector per context")
    return h


def random_alignment_baseline(kernel, mu, dim, n_seeds=100, seed=0):
    """Alignment scores of i.i.d. Gaussian representations, one per seed."""
    root = np.random.SeedSequence(seed)
    scores = []
    for child in root.spawn(n_seeds):
        rng = np.random.default_rng(child)
        scores.append(gram_alignment(rng.standard_normal((len(kernel.contexts), dim)), kernel, mu).score)
    return np.array(scores)


def normalized_energy(kernel, w, phi):
    """Dirichlet energy divided by the mu-variance of ``phi``; NaN when the variance vanishes."""
    mean = float(w @ phi)
    var = float(w @ (phi - mean) ** 2)
    if var < DEGENERATE_TOL:
        return float("nan")
    return dirichlet_energy(kernel, w, phi) / var


@dataclass(frozen=True, eq=False)
class DirectionEnergies:
    energies: dict
    directions: np.ndarray
    metric_eigenvalues: np.ndarray
    flags: tuple = field(default=())

    @property
    def degenerate(self):
        return bool(self.flags)


def sensitive_direction_energy(model, proc, kernel, n_directions=3):
    """Variance-normalized Dirichlet energy of ``phi_v(x) = <h_x, v>`` for the top
    eigen-directions ``v`` of the mu-averaged pullback metric.

    Flags ``"DegenerateMetric"`` when the averaged metric vanishes and
    ``"DegenerateVariance"`` when a projection has (near) zero variance; the
    affected energies are NaN.
    """
    if kernel.contexts != proc.contexts:
        raise SpaceMismatch("kernel must be built on the source's contexts")
    w = proc.context_dist.weights
    h = hidden_states(model)
    metric = average_pullback(model, h, w)
    flags = []
    if metric.eigenvalues[0] <= DEGENERATE_TOL:
        flags.append("DegenerateMetric")
    m = min(n_directions, model.d_model)
    energies = {}
    for i in range(m):
        phi = h @ metric.eigenvectors[:, i]
        value = normalized_energy(kernel, w, phi)
        if math.isnan(value) and "DegenerateVariance" not in flags:
            flags.append("DegenerateVariance")
        energies[i] = value
    return DirectionEnergies(energies, metric.eigenvectors[:, :m], metric.eigenvalues, tuple(flags))


def random_direction_energies(model, proc, kernel, n_directions=100, seed=0):
    """Normalized energies along uniformly random unit directions."""
    rng = check_random_state(seed)
    w = proc.context_dist.weights
    h = hidden_states(model)
    out = []
    for _ in range(n_directions):
        v = rng.standard_normal(model.d_model)
        v /= np.linalg.norm(v)
        out.append(normalized_energy(kernel, w, h @ v))
    return np.array(out)


def separation_correlation(model, proc):
    """Spearman correlation, over context pairs, between the Hellinger distance
    of the data's next-token laws and ``sqrt(dh^T G dh)`` with ``G`` the
    mu-averaged pullback metric."""
    rows = proc.transition.rows
    h = hidden_states(model)
    g = average_pullback(model, h, proc.context_dist.weights).matrix
    n = rows.shape[0]
    d_out, d_rep = [], []
    for i in range(n):
        for j in range(i + 1, n):
            d_out.append(math.sqrt(hellinger_sq_normalized(rows[i], rows[j])))
            dh = h[i] - h[j]
            d_rep.append(math.sqrt(max(float(dh @ g @ dh), 0.0)))
    rho = spearmanr(d_out, d_rep).statistic
    return float(rho)


def spectral_report(model, proc, kind="BC", beta=1.0, n_directions=3, n_eigen=4):
    kernel = similarity_matrix(proc, kind, beta)
    mu = proc.context_dist.weights
    vals, funcs = operator_spectrum(kernel, mu)
    energies = sensitive_direction_energy(model, proc, kernel, n_directions)
    align = gram_alignment(hidden_states(model), prototype_kernel(model, proc), mu)
    flags = list(energies.flags)
    if align.degenerate:
        flags.append("DegenerateGram")
    return SpectralReport(
        operator_eigenvalues=vals,
        leading_eigenvectors=funcs[:, :n_eigen],
        dirichlet_energies=energies.energies,
        alignment_score=align.score,
        flags=tuple(flags),
    )
