"""scikit-learn style wrapper around the toy generator and its training loop."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .armodel import TrainConfig, encode, exact_losses, head_probabilities, init_model, train
from .datagen import DataProcess
from .exceptions import ValidationError

__all__ = ["ARModelEstimator"]


class ARModelEstimator(BaseEstimator):
    """Fit a generator to an exact source; rows of ``X`` are contexts.

    ``fit`` takes a :class:`~catlm.datagen.DataProcess` (there is no ``y``:
    the targets are the source's exact conditionals). ``transform`` returns
    hidden states and ``predict_proba`` next-token laws.
    """

    def __init__(self, d_emb=8, d_model=8, tabular=False, learning_rate=0.5, epochs=1000,
                 optimizer="plain", momentum=0.9, weight_init_scale=0.1, log_every=100,
                 kl_target=None, activation="tanh", random_state=0):
        self.d_emb = d_emb
        self.d_model = d_model
        self.tabular = tabular
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.optimizer = optimizer
        self.momentum = momentum
        self.weight_init_scale = weight_init_scale
        self.log_every = log_every
        self.kl_target = kl_target
        self.activation = activation
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.random_state,
            optimizer=self.optimizer,
            momentum=self.momentum,
            weight_init_scale=self.weight_init_scale,
            log_every=self.log_every,
            kl_target=self.kl_target,
        )

    def fit(self, X, y=None):
        if not isinstance(X, DataProcess):
            raise ValidationError("fit expects a DataProcess; targets come from its exact conditionals")
        config = self._config()
        model = init_model(
            len(X.vocab), X.order, self.d_emb, self.d_model,
            tabular=self.tabular, weight_init_scale=config.weight_init_scale,
            seed=config.seed, activation=self.activation, vocab=X.vocab,
        )
        self.trace_ = train(model, X, config)
        self.model_ = self.trace_.final_model
        self.n_features_in_ = X.order
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return np.array([encode(self.model_, x) for x in X])

    def predict_proba(self, X):
        return head_probabilities(self.model_, self.transform(X))

    def predict(self, X):
        """Most probable next token per context (as a vocabulary label)."""
        idx = np.argmax(self.predict_proba(X), axis=1)
        return [self.model_.vocab.elements[i] for i in idx]

    def score(self, X, y=None):
        """Negative exact cross-entropy on a source (higher is better)."""
        check_is_fitted(self, "model_")
        return -exact_losses(self.model_, X).ce
