import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from catlm import ARModelEstimator
from catlm.armodel import exact_losses
from catlm.datagen import build_markov_source, conditional_entropy_data
from catlm.exceptions import ValidationError
from catlm.finstoch import SpaceLabel


def test_params_round_trip_through_clone():
    est = ARModelEstimator(d_model=5, tabular=True, learning_rate=0.2, random_state=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin.set_params(epochs=7).epochs == 7


def test_fit_transform_predict():
    proc = build_markov_source(3, 2, gamma=1.0, seed=1)
    est = ARModelEstimator(d_emb=2, d_model=4, epochs=50, log_every=25, random_state=0).fit(proc)
    contexts = list(SpaceLabel.power(proc.vocab, 2))
    assert est.transform(contexts).shape == (9, 4)
    proba = est.predict_proba(contexts)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert est.predict(contexts) == [proc.vocab.elements[i] for i in proba.argmax(axis=1)]
    assert est.score(proc) == pytest.approx(-exact_losses(est.model_, proc).ce)
    assert est.n_features_in_ == 2 and est.trace_.final.epoch == 50


def test_tabular_fit_reaches_data_entropy():
    proc = build_markov_source(3, 1, gamma=1.0, seed=2)
    est = ARModelEstimator(d_model=3, tabular=True, optimizer="momentum", epochs=20000,
                           log_every=20000, kl_target=1e-8).fit(proc)
    assert -est.score(proc) == pytest.approx(conditional_entropy_data(proc), abs=1e-7)


def test_fit_is_deterministic():
    proc = build_markov_source(2, 2, gamma=1.0, seed=3)
    a = ARModelEstimator(d_emb=2, d_model=3, epochs=30, random_state=4).fit(proc)
    b = ARModelEstimator(d_emb=2, d_model=3, epochs=30, random_state=4).fit(proc)
    assert a.trace_.to_csv() == b.trace_.to_csv()


def test_errors():
    with pytest.raises(NotFittedError):
        ARModelEstimator().transform([("0",)])
    with pytest.raises(ValidationError):
        ARModelEstimator().fit(np.zeros((3, 2)))
    with pytest.raises(ValidationError):
        ARModelEstimator(learning_rate=-1.0).fit(build_markov_source(2, 1, seed=0))
    assert math.isfinite(ARModelEstimator(epochs=0).fit(build_markov_source(2, 1, seed=0)).score(build_markov_source(2, 1, seed=0)))
