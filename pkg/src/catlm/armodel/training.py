"""Full-batch gradient training with a per-epoch diagnostic trace."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from ..catinfo import average_categorical_entropy
from ..datagen import conditional_entropy_data
from ..exceptions import DivergedLoss, NonFiniteGradient, ValidationError
from ..finstoch import FiniteKernel
from .model import (
    _check_compatible,
    _cross_entropy_and_grads,
    _draft_grad,
    exact_losses,
    head_probabilities,
    hidden_states,
    loss_align_unif,
)

__all__ = [
    "TrainConfig",
    "TraceRecord",
    "ExperimentTrace",
    "TRACE_COLUMNS",
    "train",
    "model_kernel",
    "trace_row",
]

TRACE_COLUMNS = (
    "epoch",
    "L_CE",
    "L_KL",
    "H_data",
    "avg_cat_entropy_model",
    "avg_cat_entropy_data",
    "dirichlet_energy",
    "alignment_score",
    "L_align",
    "L_unif",
)
OPTIMIZERS = ("plain", "momentum")
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class TrainConfig:
    """``kl_target`` stops training early once ``L_KL`` drops to it (``None`` never stops)."""

    learning_rate: float = 0.5
    epochs: int = 1000
    seed: int = 0
    optimizer: str = "plain"
    momentum: float = 0.9
    weight_init_scale: float = 0.1
    log_every: int = 100
    kl_target: float = None
    kernel: str = "BC"
    beta: float = 1.0

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValidationError("learning_rate must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ValidationError("epochs must be a non-negative integer")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must lie in [0, 1)")
        if not self.weight_init_scale > 0:
            raise ValidationError("weight_init_scale must be positive")
        if int(self.log_every) != self.log_every or self.log_every < 1:
            raise ValidationError("log_every must be a positive integer")
        if self.kl_target is not None and self.kl_target < 0:
            raise ValidationError("kl_target must be non-negative")

    def to_json(self):
        return asdict(self)


class TraceRecord(NamedTuple):
    epoch: int
    L_CE: float
    L_KL: float
    H_data: float
    avg_cat_entropy_model: float
    avg_cat_entropy_data: float
    dirichlet_energy: float
    alignment_score: float
    L_align: float
    L_unif: float


@dataclass(frozen=True, eq=False)
class ExperimentTrace:
    records: tuple
    final_model: object
    config: TrainConfig
    probes: tuple = field(default=())

    @property
    def initial(self):
        return self.records[0]

    @property
    def final(self):
        return self.records[-1]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow([r.epoch, *(format(v, ".17g") for v in r[1:])])
        return buf.getvalue()

    def to_json(self):
        return {
            "columns": list(TRACE_COLUMNS),
            "records": [list(r) for r in self.records],
            "config": self.config.to_json(),
            "probes": list(self.probes),
        }

    def dumps(self):
        return json.dumps(self.to_json())


def model_kernel(model, proc):
    """The model's next-token kernel on the source's contexts."""
    return FiniteKernel(proc.contexts, proc.vocab, head_probabilities(model, hidden_states(model)))


def trace_row(model, proc, epoch, kernel="BC", beta=1.0):
    """One trace record evaluated on the current parameters.

    Degenerate geometry (vanishing metric, collapsed projection or Gram
    matrix) is written as 0.0 so every entry stays finite.
    """
    # imported here: spectral depends on this package's model module
    from ..spectral import gram_alignment, prototype_kernel, sensitive_direction_energy, similarity_matrix

    ce, kl, h_data = exact_losses(model, proc)
    mu = proc.context_dist
    ent_model = average_categorical_entropy(model_kernel(model, proc), mu).average
    ent_data = average_categorical_entropy(proc.transition, mu).average
    energies = sensitive_direction_energy(model, proc, similarity_matrix(proc, kernel, beta), 1)
    energy = energies.energies.get(0, float("nan"))
    if energies.degenerate or not math.isfinite(energy):
        energy = 0.0
    align = gram_alignment(hidden_states(model), prototype_kernel(model, proc), mu.weights).score
    l_align, l_unif = loss_align_unif(model, proc)
    return TraceRecord(int(epoch), ce, kl, h_data, ent_model, ent_data, energy, align, l_align, l_unif)


def train(model, proc, config, diagnostics=()):
    """Full-batch gradient descent on the exact cross-entropy.

    A row is logged at epoch 0, every ``log_every`` epochs and at the last
    epoch. ``diagnostics`` are callables ``fn(model, proc) -> dict`` evaluated
    at each logged epoch; their results land in ``trace.probes``.
    """
    _check_compatible(model, proc)
    if not isinstance(config, TrainConfig):
        raise ValidationError("config must be a TrainConfig")
    pi = proc.context_dist.weights
    rows = proc.transition.rows
    h_data = conditional_entropy_data(proc)
    names = model.param_blocks()
    velocity = {n: np.zeros_like(getattr(model, n)) for n in names}
    records, probes = [], []

    def log(m, epoch):
        records.append(trace_row(m, proc, epoch, config.kernel, config.beta))
        if diagnostics:
            probes.append({"epoch": int(epoch), **{k: v for fn in diagnostics for k, v in fn(m, proc).items()}})

    log(model, 0)
    initial_ce = records[0].L_CE
    epoch = 0
    for epoch in range(1, config.epochs + 1):
        ce, grads = _cross_entropy_and_grads(model, pi, rows)
        if model.draft_head is not None:
            grads["draft_head"] = _draft_grad(model, proc, hidden_states(model))
        if config.kl_target is not None and ce - h_data <= config.kl_target:
            # the parameters entering this step already meet the target
            epoch -= 1
            break
        if not math.isfinite(ce) or ce > DIVERGENCE_FACTOR * initial_ce:
            raise DivergedLoss(f"L_CE = {ce:.6g} at epoch {epoch - 1}, initial {initial_ce:.6g}; lower the learning rate")
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"gradient of {name} is not finite at epoch {epoch - 1}")
        updates = {}
        for name in names:
            g = grads[name]
            if config.optimizer == "momentum":
                velocity[name] = config.momentum * velocity[name] + g
                g = velocity[name]
            updates[name] = getattr(model, name) - config.learning_rate * g
        model = model.with_params(**updates)
        if epoch % config.log_every == 0 or epoch == config.epochs:
            log(model, epoch)
    if records[-1].epoch != epoch:
        log(model, epoch)
    return ExperimentTrace(tuple(records), model, config, tuple(probes))
