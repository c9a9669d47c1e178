import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catlm.armodel import (
    TRACE_COLUMNS,
    ArModel,
    TrainConfig,
    draft_distribution,
    encode,
    exact_losses,
    head_distribution,
    head_probabilities,
    hidden_states,
    init_model,
    loss_align_unif,
    nll_gradients,
    train,
)
from catlm.datagen import build_markov_source, conditional_entropy_data
from catlm.exceptions import (
    DivergedLoss,
    LengthMismatch,
    NoDraftHead,
    NonFiniteInput,
    ValidationError,
    VocabMismatch,
)
from catlm.finstoch import SpaceLabel
from catlm.harness.suite import finite_difference_gradient, gradient_relative_error


def _zeroed(model, *names):
    return model.with_params(**{n: np.zeros_like(getattr(model, n)) for n in names})


def test_encode_examples():
    model = init_model(3, 2, 2, 4, seed=0)
    zero = _zeroed(model, "embed", "backbone_weight", "backbone_bias")
    assert np.array_equal(encode(zero, ("0", "1")), np.zeros(4))
    ident = init_model(3, 1, 3, 3, activation="identity", seed=1)
    ident = ident.with_params(backbone_weight=np.eye(3), backbone_bias=np.zeros(3))
    for tok in range(3):
        assert np.array_equal(encode(ident, (tok,)), ident.embed[tok])
    a = encode(init_model(3, 2, 2, 4, seed=5), ("2", "0"))
    b = encode(init_model(3, 2, 2, 4, seed=5), ("2", "0"))
    assert a.tobytes() == b.tobytes()
    with pytest.raises(LengthMismatch):
        encode(model, ("0",))


def test_encode_matches_hidden_states():
    for tabular in (False, True):
        model = init_model(3, 2, 2, 4, tabular=tabular, seed=2)
        contexts = SpaceLabel.power(model.vocab, 2)
        h = hidden_states(model)
        for i, x in enumerate(contexts):
            assert np.allclose(encode(model, x), h[i], atol=1e-15)


def test_head_distribution_examples():
    model = init_model(2, 1, d_model=1, tabular=True, seed=0)
    assert np.allclose(head_distribution(_zeroed(model, "head"), [3.0]).weights, 0.5)
    model = model.with_params(head=np.array([[1.0], [0.0]]))
    assert np.allclose(head_distribution(model, [0.0]).weights, [0.5, 0.5])
    sig = 1 / (1 + math.exp(-1))
    assert np.allclose(head_distribution(model, [1.0]).weights, [sig, 1 - sig], atol=1e-15)
    assert sig == pytest.approx(0.73106, abs=1e-5)


def test_model_rejects_bad_parameters():
    model = init_model(3, 1, 2, 2, seed=0)
    with pytest.raises(LengthMismatch):
        model.with_params(head=np.zeros((2, 2)))
    with pytest.raises(NonFiniteInput):
        model.with_params(head=np.full((3, 2), np.nan))
    with pytest.raises(ValidationError):
        init_model(3, 1, weight_init_scale=0.0)
    with pytest.raises(ValidationError):
        init_model(9, 1, draft_horizon=2)
    with pytest.raises(NoDraftHead):
        draft_distribution(model, np.zeros(2))


def test_json_round_trip():
    model = init_model(3, 2, 2, 4, draft_horizon=2, seed=3)
    back = ArModel.from_json(json.loads(model.dumps()))
    for name in model.param_blocks():
        assert np.array_equal(getattr(back, name), getattr(model, name))


def test_losses_examples():
    proc = build_markov_source(3, 1, gamma=1.0, seed=4)
    model = init_model(3, 1, d_model=3, tabular=True, seed=0)
    uniform_model = _zeroed(model, "head")
    ce, kl, h = exact_losses(uniform_model, proc)
    assert ce == pytest.approx(math.log(3), abs=1e-15)
    flat = build_markov_source(3, 1, table=np.full((3, 3), 1 / 3))
    assert exact_losses(uniform_model, flat).kl == pytest.approx(0.0, abs=1e-15)
    # a tabular model with log-probability rows reproduces the data exactly
    exact = model.with_params(table=np.log(proc.transition.rows), head=np.eye(3))
    ce, kl, h = exact_losses(exact, proc)
    assert kl == pytest.approx(0.0, abs=1e-14)
    assert ce == pytest.approx(conditional_entropy_data(proc), abs=1e-14)
    with pytest.raises(VocabMismatch):
        exact_losses(init_model(3, 2, seed=0), proc)


def test_gradient_vanishes_at_optimum():
    proc = build_markov_source(3, 1, gamma=1.0, seed=4)
    model = init_model(3, 1, d_model=3, tabular=True, seed=0)
    exact = model.with_params(table=np.log(proc.transition.rows), head=np.eye(3))
    grads = nll_gradients(exact, proc)
    assert math.sqrt(sum(np.sum(g ** 2) for g in grads.values())) <= 1e-8


def test_head_gradient_closed_form_at_zero_head():
    proc = build_markov_source(3, 2, gamma=1.0, seed=6)
    model = _zeroed(init_model(3, 2, 2, 4, weight_init_scale=0.7, seed=1), "head")
    h = hidden_states(model)
    pi, p = proc.context_dist.weights, proc.transition.rows
    expected = sum(pi[x] * np.outer(np.full(3, 1 / 3) - p[x], h[x]) for x in range(proc.n_contexts))
    assert np.allclose(nll_gradients(model, proc)["head"], expected, atol=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("tabular", [False, True])
def test_gradients_match_finite_differences(seed, tabular):
    proc = build_markov_source(3, 2, gamma=0.8, seed=100 + seed)
    model = init_model(3, 2, 3, 4, tabular=tabular, draft_horizon=2, weight_init_scale=0.5, seed=seed)
    for block, g in nll_gradients(model, proc).items():
        assert gradient_relative_error(g, finite_difference_gradient(model, proc, block)) <= 1e-5


def test_identity_activation_gradients():
    proc = build_markov_source(2, 2, gamma=1.0, seed=8)
    model = init_model(2, 2, 2, 3, activation="identity", weight_init_scale=0.5, seed=8)
    for block, g in nll_gradients(model, proc).items():
        assert gradient_relative_error(g, finite_difference_gradient(model, proc, block)) <= 1e-5


def test_align_unif_examples():
    proc = build_markov_source(4, 1, gamma=1.0, seed=9)
    model = init_model(4, 1, 2, 3, seed=2)
    la, lu = loss_align_unif(_zeroed(model, "head"), proc)
    assert la == 0.0 and lu == pytest.approx(math.log(4), abs=1e-15)
    tab = init_model(4, 1, d_model=3, tabular=True, seed=2)
    la, lu = loss_align_unif(_zeroed(tab, "table"), proc)
    assert la == 0.0 and lu == pytest.approx(math.log(4), abs=1e-15)
    la, lu = loss_align_unif(model, proc)
    assert la + lu == pytest.approx(exact_losses(model, proc).ce, abs=1e-12)


def test_draft_head_examples():
    model = init_model(2, 1, d_model=3, tabular=True, draft_horizon=2, seed=0)
    zero = _zeroed(model, "draft_head")
    assert np.allclose(draft_distribution(zero, np.ones(3)).weights, 0.25)
    one = init_model(3, 1, d_model=3, tabular=True, draft_horizon=1, seed=1)
    one = one.with_params(draft_head=one.head)
    h = np.array([0.3, -1.2, 0.5])
    assert np.allclose(draft_distribution(one, h).weights, head_distribution(one, h).weights, atol=1e-15)
    with pytest.raises(NoDraftHead):
        draft_distribution(model, np.ones(3), horizon=3)


def test_train_epochs_zero_has_initial_row_only():
    proc = build_markov_source(2, 1, gamma=1.0, seed=0)
    trace = train(init_model(2, 1, d_model=2, tabular=True, seed=0), proc, TrainConfig(epochs=0))
    assert len(trace.records) == 1 and trace.initial.epoch == 0


def test_train_config_validation():
    for bad in ({"learning_rate": 0.0}, {"epochs": -1}, {"optimizer": "adam"}, {"momentum": 1.0},
                {"log_every": 0}, {"kl_target": -1.0}):
        with pytest.raises(ValidationError):
            TrainConfig(**bad)


def test_train_converges_on_two_token_source():
    proc = build_markov_source(2, 1, table=[[0.8, 0.2], [0.3, 0.7]])
    model = init_model(2, 1, d_model=2, tabular=True, seed=0)
    trace = train(model, proc, TrainConfig(learning_rate=0.5, epochs=50000, log_every=1000, kl_target=1e-6))
    assert trace.final.L_KL <= 1e-6 and trace.final.epoch <= 50000
    kl = trace.column("L_KL")
    assert np.all(np.diff(kl) <= 1e-12)


def test_train_is_deterministic_and_identity_holds():
    proc = build_markov_source(3, 2, gamma=1.0, seed=2)
    config = TrainConfig(learning_rate=0.3, epochs=60, log_every=10, optimizer="momentum")
    a = train(init_model(3, 2, 2, 4, seed=1), proc, config)
    b = train(init_model(3, 2, 2, 4, seed=1), proc, config)
    assert a.to_csv() == b.to_csv()
    for r in a.records:
        assert abs(r.L_CE - r.L_KL - r.H_data) <= 1e-9
        assert all(math.isfinite(v) for v in r)


def test_trace_csv_columns():
    proc = build_markov_source(2, 1, gamma=1.0, seed=0)
    trace = train(init_model(2, 1, d_model=2, tabular=True, seed=0), proc, TrainConfig(epochs=5, log_every=2))
    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == [0, 2, 4, 5]
    assert json.loads(trace.dumps())["columns"] == list(TRACE_COLUMNS)


def test_train_small_lr_is_monotone():
    proc = build_markov_source(3, 1, gamma=1.0, seed=3)
    trace = train(init_model(3, 1, 2, 3, seed=4), proc, TrainConfig(learning_rate=0.05, epochs=40, log_every=1))
    assert np.all(np.diff(trace.column("L_CE")) <= 1e-12)


def test_train_diverges_loudly():
    proc = build_markov_source(3, 1, gamma=0.3, seed=3)
    model = init_model(3, 1, d_model=3, tabular=True, weight_init_scale=3.0, seed=0)
    with pytest.raises(DivergedLoss):
        train(model, proc, TrainConfig(learning_rate=1e4, epochs=50, log_every=50))


def test_train_diagnostics_are_recorded():
    proc = build_markov_source(2, 1, gamma=1.0, seed=0)
    model = init_model(2, 1, d_model=2, tabular=True, seed=0)
    trace = train(model, proc, TrainConfig(epochs=4, log_every=2), diagnostics=[lambda m, p: {"n": m.n_params()}])
    assert [p["epoch"] for p in trace.probes] == [0, 2, 4]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(1, 2), st.integers(1, 6), st.booleans(), st.floats(0.05, 3.0), st.integers(0, 2**31))
def test_nll_identity_and_decomposition(v, k, d, tabular, scale, seed):
    proc = build_markov_source(v, k, gamma=1.0, seed=seed)
    model = init_model(v, k, 2, d, tabular=tabular, weight_init_scale=scale, seed=seed + 1)
    ce, kl, h = exact_losses(model, proc)
    assert abs(ce - (kl + h)) <= 1e-10
    la, lu = loss_align_unif(model, proc)
    assert abs(la + lu - ce) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1e3))
def test_softmax_stable_for_bounded_h(seed, norm):
    rng = np.random.default_rng(seed)
    model = init_model(5, 1, d_model=4, tabular=True, weight_init_scale=1.0, seed=seed)
    h = rng.standard_normal(4)
    h *= norm / np.linalg.norm(h)
    p = head_probabilities(model, h)
    assert np.all(np.isfinite(p)) and abs(p.sum() - 1) <= 1e-12
