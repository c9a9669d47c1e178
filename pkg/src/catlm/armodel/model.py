"""Toy autoregressive generator: embedding -> tanh MLP -> linear softmax head.

The generator factors as head o backbone o embedding. Contexts are
order-``k`` token tuples; ``tabular`` models replace embedding and backbone
with one free hidden vector per context, which makes every next-token law
with full support reachable.

All losses are exact expectations over the finite context space of a
:class:`~catlm.datagen.DataProcess`, weighted by its stationary law.
"""

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from ..datagen import DataProcess, conditional_entropy_data
from ..exceptions import (
    LengthMismatch,
    NoDraftHead,
    NonFiniteGradient,
    NonFiniteInput,
    ValidationError,
    VocabMismatch,
)
from ..finstoch import FiniteDistribution, SpaceLabel
from ..validation import check_random_state, check_vector

__all__ = [
    "ArModel",
    "Losses",
    "init_model",
    "context_tokens",
    "encode",
    "hidden_states",
    "head_distribution",
    "head_probabilities",
    "exact_losses",
    "nll_gradients",
    "loss_align_unif",
    "draft_distribution",
    "draft_loss",
    "expected_prototypes",
    "PARAM_BLOCKS",
]

PARAM_BLOCKS = ("embed", "backbone_weight", "backbone_bias", "table", "head", "draft_head")
ACTIVATIONS = ("tanh", "identity")
MAX_DRAFT_HORIZON = 3
MAX_DRAFT_VOCAB = 8


@dataclass(frozen=True, eq=False)
class ArModel:
    """Parameters of the toy generator.

    ``head`` rows are the token prototypes; logits are ``head @ h``.
    Blocks not used by the chosen mode are ``None``.
    """

    vocab: SpaceLabel
    order: int
    d_emb: int
    d_model: int
    head: np.ndarray
    embed: np.ndarray = None
    backbone_weight: np.ndarray = None
    backbone_bias: np.ndarray = None
    table: np.ndarray = None
    draft_head: np.ndarray = None
    draft_horizon: int = None
    activation: str = "tanh"
    _contexts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}")
        v, n = len(self.vocab), len(self.vocab) ** self.order
        expected = {"head": (v, self.d_model)}
        if self.tabular:
            expected["table"] = (n, self.d_model)
        else:
            expected.update(
                embed=(v, self.d_emb),
                backbone_weight=(self.d_model, self.order * self.d_emb),
                backbone_bias=(self.d_model,),
            )
        if self.draft_head is not None:
            if not self.draft_horizon or self.draft_horizon > MAX_DRAFT_HORIZON or v > MAX_DRAFT_VOCAB:
                raise ValidationError(
                    f"draft head needs 1 <= K <= {MAX_DRAFT_HORIZON} and |V| <= {MAX_DRAFT_VOCAB}"
                )
            expected["draft_head"] = (v ** self.draft_horizon, self.d_model)
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None:
                raise ValidationError(f"parameter block {name!r} is required")
            arr = np.array(arr, dtype=np.float64)
            if arr.shape != shape:
                raise LengthMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInput(f"{name} contains NaN or Inf")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_contexts", context_tokens(v, self.order))

    @property
    def tabular(self):
        return self.table is not None

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def n_contexts(self):
        return self._contexts.shape[0]

    def param_blocks(self):
        """Names of the parameter blocks that are present."""
        return tuple(name for name in PARAM_BLOCKS if getattr(self, name) is not None)

    def params(self):
        return {name: getattr(self, name) for name in self.param_blocks()}

    def with_params(self, **blocks):
        return replace(self, **blocks)

    def n_params(self):
        return sum(getattr(self, name).size for name in self.param_blocks())

    def to_json(self):
        return {
            "vocab": self.vocab.to_json(),
            "order": self.order,
            "d_emb": self.d_emb,
            "d_model": self.d_model,
            "activation": self.activation,
            "draft_horizon": self.draft_horizon,
            "shapes": {name: list(getattr(self, name).shape) for name in self.param_blocks()},
            "weights": {name: getattr(self, name).ravel().tolist() for name in self.param_blocks()},
        }

    def dumps(self):
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data):
        blocks = {
            name: np.asarray(flat, dtype=np.float64).reshape(data["shapes"][name])
            for name, flat in data["weights"].items()
        }
        return cls(
            vocab=SpaceLabel.from_json(data["vocab"]),
            order=data["order"],
            d_emb=data["d_emb"],
            d_model=data["d_model"],
            activation=data.get("activation", "tanh"),
            draft_horizon=data.get("draft_horizon"),
            **blocks,
        )


class Losses(NamedTuple):
    ce: float
    kl: float
    h_data: float


def context_tokens(vocab_size, order):
    """Token indices of every context in lexicographic order, shape ``(V**k, k)``."""
    n = vocab_size ** order
    idx = np.arange(n)
    digits = [(idx // vocab_size ** (order - 1 - i)) % vocab_size for i in range(order)]
    return np.stack(digits, axis=1)


def init_model(vocab_size, order, d_emb=8, d_model=8, *, tabular=False, draft_horizon=None,
               weight_init_scale=0.1, seed=None, activation="tanh", vocab=None):
    """Model with entries drawn i.i.d. uniform in ``[-s, s]``."""
    rng = check_random_state(seed)
    s = float(weight_init_scale)
    if s <= 0:
        raise ValidationError("weight_init_scale must be positive")
    vocab = vocab or SpaceLabel.range(vocab_size)

    def draw(*shape):
        return rng.uniform(-s, s, size=shape)

    blocks = {}
    if tabular:
        blocks["table"] = draw(vocab_size ** order, d_model)
    else:
        blocks["embed"] = draw(vocab_size, d_emb)
        blocks["backbone_weight"] = draw(d_model, order * d_emb)
        blocks["backbone_bias"] = draw(d_model)
    blocks["head"] = draw(vocab_size, d_model)
    if draft_horizon:
        blocks["draft_head"] = draw(vocab_size ** draft_horizon, d_model)
    return ArModel(vocab=vocab, order=order, d_emb=d_emb, d_model=d_model, draft_horizon=draft_horizon,
                   activation=activation, **blocks)


def _activate(model, a):
    return np.tanh(a) if model.activation == "tanh" else a


def _backbone_inputs(model, tokens):
    return model.embed[tokens].reshape(tokens.shape[0], -1)


def hidden_states(model):
    """Hidden vectors for every context, shape ``(n_contexts, d_model)``."""
    if model.tabular:
        return np.array(model.table)
    u = _backbone_inputs(model, model._contexts)
    return _activate(model, u @ model.backbone_weight.T + model.backbone_bias)


def _context_index(model, context):
    context = tuple(context)
    if len(context) != model.order:
        raise LengthMismatch(f"context has length {len(context)}, model order is {model.order}")
    tokens = []
    for tok in context:
        if tok in model.vocab:
            tokens.append(model.vocab.index(tok))
        elif isinstance(tok, (int, np.integer)) and 0 <= tok < model.vocab_size:
            tokens.append(int(tok))
        else:
            raise ValidationError(f"unknown token {tok!r}")
    return np.array(tokens)


def encode(model, context):
    """Hidden vector for one context (a tuple of token labels or indices)."""
    tokens = _context_index(model, context)
    if model.tabular:
        flat = int(np.ravel_multi_index(tuple(tokens), (model.vocab_size,) * model.order))
        return np.array(model.table[flat])
    u = model.embed[tokens].ravel()
    return _activate(model, model.backbone_weight @ u + model.backbone_bias)


def head_probabilities(model, h):
    """Softmax of ``head @ h``; accepts one vector or a batch of rows."""
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise NonFiniteInput("hidden state contains NaN or Inf")
    # scipy's softmax subtracts the max logit
    return softmax(h @ model.head.T, axis=-1)


def head_distribution(model, h):
    h = check_vector(h, name="h", size=model.d_model)
    return FiniteDistribution(model.vocab, head_probabilities(model, h))


def _check_compatible(model, proc):
    if not isinstance(proc, DataProcess):
        raise ValidationError("expected a DataProcess")
    if model.order != proc.order:
        raise VocabMismatch(f"model order {model.order} != source order {proc.order}")
    if model.vocab != proc.vocab:
        raise VocabMismatch("model and source vocabularies differ")


def exact_losses(model, proc):
    """Exact cross-entropy, average KL to the data conditionals, and data entropy."""
    _check_compatible(model, proc)
    pi = proc.context_dist.weights
    p = proc.transition.rows
    logq = log_softmax(hidden_states(model) @ model.head.T, axis=1)
    ce = float(-np.sum(pi * np.sum(p * logq, axis=1)))
    mask = p > 0
    log_ratio = np.where(mask, np.log(np.where(mask, p, 1.0)) - logq, 0.0)
    kl = float(np.sum(pi * np.sum(p * log_ratio, axis=1)))
    return Losses(ce, kl, conditional_entropy_data(proc))


def _cross_entropy_and_grads(model, pi, p, with_grads=True):
    """Full-batch cross-entropy and its gradient by hand-written reverse mode."""
    tokens = model._contexts
    if model.tabular:
        h = model.table
    else:
        u = _backbone_inputs(model, tokens)
        pre = u @ model.backbone_weight.T + model.backbone_bias
        h = _activate(model, pre)
    logits = h @ model.head.T
    logq = log_softmax(logits, axis=1)
    ce = float(-np.sum(pi * np.sum(p * logq, axis=1)))
    if not with_grads:
        return ce, None
    # dL/dlogits for softmax cross-entropy, weighted by the context law
    dz = pi[:, None] * (np.exp(logq) - p)
    grads = {"head": dz.T @ h}
    dh = dz @ model.head
    if model.tabular:
        grads["table"] = dh
    else:
        da = dh * (1.0 - h ** 2) if model.activation == "tanh" else dh
        grads["backbone_weight"] = da.T @ u
        grads["backbone_bias"] = da.sum(axis=0)
        du = (da @ model.backbone_weight).reshape(tokens.shape[0], model.order, model.d_emb)
        g_embed = np.zeros_like(model.embed)
        for pos in range(model.order):
            np.add.at(g_embed, tokens[:, pos], du[:, pos])
        grads["embed"] = g_embed
    return ce, grads


def _draft_targets(model, proc):
    if model.draft_head is None:
        raise NoDraftHead("model has no draft head")
    return proc.horizon_conditional(model.draft_horizon).rows


def draft_loss(model, proc):
    """Cross-entropy of the draft head against the exact K-token conditionals."""
    _check_compatible(model, proc)
    targets = _draft_targets(model, proc)
    logq = log_softmax(hidden_states(model) @ model.draft_head.T, axis=1)
    return float(-np.sum(proc.context_dist.weights * np.sum(targets * logq, axis=1)))


def _draft_grad(model, proc, h):
    # hidden states are treated as fixed inputs: the draft head never moves the encoder
    targets = _draft_targets(model, proc)
    q = softmax(h @ model.draft_head.T, axis=1)
    dz = proc.context_dist.weights[:, None] * (q - targets)
    return dz.T @ h


def nll_gradients(model, proc):
    """Exact full-batch gradient of the cross-entropy for every parameter block.

    When a draft head is present its entry is the gradient of
    :func:`draft_loss` with the hidden states held fixed.
    """
    _check_compatible(model, proc)
    _, grads = _cross_entropy_and_grads(model, proc.context_dist.weights, proc.transition.rows)
    if model.draft_head is not None:
        grads["draft_head"] = _draft_grad(model, proc, hidden_states(model))
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient of {name} is not finite")
    return grads


def loss_align_unif(model, proc):
    """Split the cross-entropy into prototype alignment and log-partition terms."""
    _check_compatible(model, proc)
    pi = proc.context_dist.weights
    h = hidden_states(model)
    expected_proto = proc.transition.rows @ model.head
    align = float(-np.sum(pi * np.sum(expected_proto * h, axis=1)))
    unif = float(np.sum(pi * logsumexp(h @ model.head.T, axis=1)))
    return align, unif


def expected_prototypes(model, proc):
    """Row ``x`` is the data-weighted mean prototype ``sum_w p_x(w) g(w)``."""
    return proc.transition.rows @ model.head


def draft_distribution(model, h, horizon=None):
    """Joint softmax of the draft head over ``V^K``."""
    if model.draft_head is None:
        raise NoDraftHead("model has no draft head")
    if horizon is not None and horizon != model.draft_horizon:
        raise NoDraftHead(f"draft head predicts {model.draft_horizon} tokens, not {horizon}")
    h = check_vector(h, name="h", size=model.d_model)
    space = model.vocab if model.draft_horizon == 1 else SpaceLabel.power(model.vocab, model.draft_horizon)
    return FiniteDistribution(space, softmax(model.draft_head @ h))
