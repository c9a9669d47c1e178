"""Exact synthetic sources: order-k Markov chains over a small vocabulary.

A :class:`DataProcess` carries the next-token kernel on contexts ``V^k``,
the stationary context law, and exact K-step conditionals, so every
expectation downstream is a finite sum.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .divergence import shannon_entropy
from .exceptions import (
    HorizonTooLarge,
    NonConvergentStationary,
    NonStochasticTable,
    ValidationError,
)
from .finstoch import FiniteDistribution, FiniteKernel, JointDistribution, SpaceLabel
from .validation import check_random_state, check_stochastic_matrix

__all__ = [
    "DataProcess",
    "build_markov_source",
    "stationary_distribution",
    "conditional_entropy_data",
    "joint_hidden_future",
    "surplus_process",
    "two_cluster_process",
    "de_bruijn_sequence",
]

MAX_HORIZON = 4
STATIONARY_TOL = 1e-13
MAX_ITERATIONS = 10**6


@dataclass(frozen=True, eq=False)
class DataProcess:
    vocab: SpaceLabel
    order: int
    transition: FiniteKernel
    context_dist: FiniteDistribution
    seed: int = None
    gamma: float = None
    name: str = "markov"
    max_horizon: int = MAX_HORIZON
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def contexts(self):
        return self.transition.source

    @property
    def n_contexts(self):
        return len(self.transition.source)

    def shift_index(self):
        """``idx[x, w]`` is the index of the context that follows ``x`` after emitting ``w``."""
        return _shift_index(self.n_contexts, len(self.vocab))

    def horizon_conditional(self, horizon):
        """Kernel ``V^k -> V^K`` giving the law of the next ``horizon`` tokens."""
        if horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if horizon > self.max_horizon:
            raise HorizonTooLarge(f"horizon {horizon} exceeds the configured maximum {self.max_horizon}")
        if horizon == 1:
            return self.transition
        if horizon not in self._cache:
            rows = self._block_rows(horizon)
            self._cache[horizon] = FiniteKernel(self.contexts, SpaceLabel.power(self.vocab, horizon), rows)
        return self._cache[horizon]

    def _block_rows(self, horizon):
        t = self.transition.rows
        if horizon == 1:
            return t
        tail = self._block_rows(horizon - 1)
        nxt = self.shift_index()
        v = len(self.vocab)
        width = tail.shape[1]
        out = np.empty((self.n_contexts, v * width))
        for w in range(v):
            out[:, w * width:(w + 1) * width] = t[:, w:w + 1] * tail[nxt[:, w]]
        return out

    def chain_matrix(self):
        """Transition matrix of the induced first-order chain on contexts."""
        return _context_chain(self.transition.rows)

    def stationarity_residual(self):
        pi = self.context_dist.weights
        return float(np.max(np.abs(pi @ self.chain_matrix() - pi)))

    def to_json(self):
        return {
            "name": self.name,
            "vocab": self.vocab.to_json(),
            "order": self.order,
            "transition": self.transition.rows.tolist(),
            "seed": self.seed,
            "gamma": self.gamma,
        }

    def dumps(self):
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data):
        vocab = SpaceLabel.from_json(data["vocab"])
        return build_markov_source(
            len(vocab),
            data["order"],
            table=np.asarray(data["transition"], dtype=np.float64),
            vocab=vocab,
            seed=data.get("seed"),
            gamma=data.get("gamma"),
            name=data.get("name", "markov"),
        )


def _shift_index(n_contexts, vocab_size):
    return (np.arange(n_contexts)[:, None] * vocab_size) % n_contexts + np.arange(vocab_size)[None, :]


def _context_chain(table):
    n, v = table.shape
    p = np.zeros((n, n))
    # successors of one context are distinct, so plain assignment suffices
    p[np.arange(n)[:, None], _shift_index(n, v)] = table
    return p


def stationary_distribution(chain, tol=STATIONARY_TOL, max_iter=MAX_ITERATIONS):
    """Stationary law of a row-stochastic ``chain`` by power iteration from uniform.

    The step operator is squared after every application, so ``j`` rounds
    cover ``2**j - 1`` chain steps. Slowly mixing chains still finish in a
    few dozen matrix products; periodic ones exhaust ``max_iter`` steps.
    """
    n = chain.shape[0]
    pi = np.full(n, 1.0 / n)
    step = np.array(chain, dtype=np.float64)
    block, done = 1, 0
    while done <= max_iter:
        residual = np.max(np.abs(pi @ chain - pi))
        if residual <= tol:
            return pi / pi.sum()
        pi = pi @ step
        pi /= pi.sum()
        done += block
        step = step @ step
        step /= step.sum(axis=1, keepdims=True)
        block *= 2
    raise NonConvergentStationary(
        f"power iteration did not reach residual {tol:g} after {max_iter} steps (reducible or periodic chain)"
    )


def build_markov_source(vocab_size, order, table=None, gamma=1.0, seed=None, *, vocab=None, name="markov",
                        max_horizon=MAX_HORIZON):
    """Order-``order`` Markov source over ``vocab_size`` tokens.

    With ``table`` given (shape ``(vocab_size**order, vocab_size)``, rows in
    lexicographic context order) it is used verbatim; otherwise each row is
    drawn from a symmetric Dirichlet with concentration ``gamma``.
    """
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2")
    if order < 1:
        raise ValidationError("order must be >= 1")
    vocab = vocab or SpaceLabel.range(vocab_size)
    if len(vocab) != vocab_size:
        raise ValidationError("vocab labels disagree with vocab_size")
    contexts = SpaceLabel.power(vocab, order)
    if table is None:
        if not gamma or gamma <= 0:
            raise ValidationError("gamma must be positive")
        rng = check_random_state(seed)
        table = rng.dirichlet(np.full(vocab_size, float(gamma)), size=len(contexts))
        table /= table.sum(axis=1, keepdims=True)
    else:
        table = check_stochastic_matrix(table, name="table", shape=(len(contexts), vocab_size),
                                        exc=NonStochasticTable)
    transition = FiniteKernel(contexts, vocab, table)
    pi = stationary_distribution(_context_chain(transition.rows))
    return DataProcess(vocab, order, transition, FiniteDistribution(contexts, pi),
                       seed=seed, gamma=gamma, name=name, max_horizon=max_horizon)


def conditional_entropy_data(proc):
    """Average Shannon entropy of the next token given the context, in nats."""
    pi = proc.context_dist.weights
    return float(sum(pi[i] * shannon_entropy(proc.transition.rows[i]) for i in range(proc.n_contexts)))


def joint_hidden_future(proc, encoder, horizon):
    """Exact joint law of (hidden label, next ``horizon`` tokens).

    ``encoder`` maps a context tuple to a hashable hidden label (a callable or
    a mapping). Contexts sharing a label are pooled.
    """
    kernel = proc.horizon_conditional(horizon)
    lookup = encoder if callable(encoder) else encoder.__getitem__
    labels = [lookup(x) for x in proc.contexts]
    hidden = SpaceLabel(tuple(dict.fromkeys(labels)))
    weights = np.zeros((len(hidden), len(kernel.target)))
    pi = proc.context_dist.weights
    for i, label in enumerate(labels):
        weights[hidden.index(label)] += pi[i] * kernel.rows[i]
    return JointDistribution(hidden, kernel.target, weights)


def de_bruijn_sequence(k, n):
    """Cyclic sequence over ``range(k)`` containing every length-``n`` word once."""
    a = [0] * (k * n)
    seq = []

    def db(t, p):
        if t > n:
            if n % p == 0:
                seq.extend(a[1:p + 1])
        else:
            a[t] = a[t - p]
            db(t + 1, p)
            for j in range(a[t - p] + 1, k):
                a[t] = j
                db(t + 1, t)

    db(1, 1)
    return seq


def surplus_process(vocab_size, seed=None):
    """Deterministic order-2 de Bruijn cycle with a seeded relabelling of tokens.

    Every context is visited equally often and each token is followed by
    every token exactly once, so under an injective encoder the two-token
    future carries ``log(vocab_size)`` nats more about the context than the
    next token alone.
    """
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2")
    rng = check_random_state(seed)
    perm = rng.permutation(vocab_size)
    seq = [int(perm[s]) for s in de_bruijn_sequence(vocab_size, 2)]
    n = len(seq)
    table = np.zeros((vocab_size ** 2, vocab_size))
    for i in range(n):
        a, b, c = seq[i], seq[(i + 1) % n], seq[(i + 2) % n]
        table[a * vocab_size + b, c] = 1.0
    return build_markov_source(vocab_size, 2, table=table, seed=seed, gamma=None, name="surplus")


def two_cluster_process(vocab_size=6, order=1, noise=0.05, seed=0, off_mass=0.05):
    """Source whose contexts split into two groups with near-identical next-token laws.

    Contexts whose last token lies in the first half of the vocabulary favour
    first-half tokens, the rest favour second-half tokens. Each row is mixed
    with ``noise`` of a Dirichlet(1) draw, so rows keep full support.
    """
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2")
    rng = check_random_state(seed)
    half = vocab_size // 2
    base_a = np.where(np.arange(vocab_size) < half, 1.0, off_mass)
    base_b = base_a[::-1].copy()
    base_a /= base_a.sum()
    base_b /= base_b.sum()
    n = vocab_size ** order
    last = np.arange(n) % vocab_size
    table = np.where((last < half)[:, None], base_a, base_b)
    table = (1 - noise) * table + noise * rng.dirichlet(np.ones(vocab_size), size=n)
    table /= table.sum(axis=1, keepdims=True)
    return build_markov_source(vocab_size, order, table=table, seed=seed, gamma=None, name="two_cluster")


def cluster_labels(proc):
    """Cluster id per context for :func:`two_cluster_process` sources."""
    half = len(proc.vocab) // 2
    return np.array([proc.vocab.index(x[-1]) >= half for x in proc.contexts], dtype=int)

