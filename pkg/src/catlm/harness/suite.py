"""The invariant suite behind ``catlm verify``.

Each check draws its own random instances from a named stream of the run
seed and returns a :class:`CheckResult` holding the worst observed value,
the tolerance and a pass flag.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..armodel import (
    TrainConfig,
    draft_loss,
    exact_losses,
    head_probabilities,
    hidden_states,
    init_model,
    loss_align_unif,
    nll_gradients,
    train,
)
from ..catinfo import categorical_entropy_of, dpi_audit, information_surplus
from ..datagen import (
    build_markov_source,
    joint_hidden_future,
    surplus_process,
    two_cluster_process,
)
from ..divergence import JS, HELLINGER_SQ, KL, TV, divergence, renyi, shannon_entropy
from ..finstoch import (
    FiniteDistribution,
    FiniteKernel,
    SpaceLabel,
    compose,
    copy,
    discard,
    identity,
    point_mass,
    push_forward,
    tensor,
)
from ..infogeo import head_jacobian, pullback_consistency, pullback_metric, verify_local_expansion
from ..spectral import (
    dirichlet_energy,
    gram_alignment,
    laplacian_quadratic_form,
    prototype_kernel,
    random_alignment_baseline,
    random_direction_energies,
    sensitive_direction_energy,
    separation_correlation,
    similarity_matrix,
)
from .config import stream_seed

__all__ = ["CheckResult", "run_suite", "CHECKS", "DIVERGENCE_KINDS", "finite_difference_gradient"]

DIVERGENCE_KINDS = (KL, TV, HELLINGER_SQ, JS, renyi(0.5), renyi(2.0))
# At eps ~ 1e-2 a direction whose cubic coefficient nearly cancels lets the
# quartic term bend the fitted slope (about 1 instance in 800); this grid
# stays in the cubic regime and is still far above roundoff.
EXPANSION_EPSILONS = (1e-4, 5e-5, 2.5e-5)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_json(self):
        return asdict(self)


def _result(name, value, tolerance, upper=True, detail=""):
    value = float(value)
    passed = value <= tolerance if upper else value >= tolerance
    return CheckResult(name, bool(passed and math.isfinite(value)), value, float(tolerance), detail)


def _dist(rng, n, alpha=1.0, space=None):
    return FiniteDistribution(space or SpaceLabel.range(n), rng.dirichlet(np.full(n, alpha)))


def _kernel(rng, src, tgt, alpha=1.0):
    return FiniteKernel(src, tgt, rng.dirichlet(np.full(len(tgt), alpha), size=len(src)))


def check_kernel_laws(spec, rng):
    worst = 0.0
    for _ in range(spec.kernel_instances):
        a, b, c, d = (SpaceLabel.range(int(n)) for n in rng.integers(2, 5, size=4))
        f, g, h = _kernel(rng, a, b), _kernel(rng, b, c), _kernel(rng, c, d)
        worst = max(
            worst,
            np.max(np.abs(compose(compose(f, g), h).rows - compose(f, compose(g, h)).rows)),
            np.max(np.abs(compose(identity(a), f).rows - f.rows)),
            np.max(np.abs(compose(copy(a), tensor(identity(a), discard(a))).rows - identity(a).rows)),
            np.max(np.abs(tensor(f, g).rows.sum(axis=1) - 1.0)),
        )
        p = _dist(rng, len(a), space=a)
        worst = max(worst, np.max(np.abs(push_forward(push_forward(p, f), g).weights - push_forward(p, compose(f, g)).weights)))
    return _result("kernel_laws", worst, 1e-12, detail="associativity, unit, copy/discard counit, tensor stochasticity")


def check_stationarity(spec, rng):
    worst = 0.0
    for _ in range(spec.kernel_instances):
        proc = build_markov_source(int(rng.integers(2, 5)), int(rng.integers(1, 3)), gamma=1.0, seed=int(rng.integers(2**31)))
        worst = max(worst, proc.stationarity_residual())
    return _result("stationary_residual", worst, 1e-12)


def check_nll_identity(spec, rng):
    worst = 0.0
    for _ in range(spec.nll_pairs):
        v, k = int(rng.integers(2, 6)), int(rng.integers(1, 3))
        proc = build_markov_source(v, k, gamma=float(rng.uniform(0.2, 2.0)), seed=int(rng.integers(2**31)))
        model = init_model(v, k, int(rng.integers(1, 6)), int(rng.integers(1, 9)), tabular=bool(rng.integers(2)),
                           weight_init_scale=float(rng.uniform(0.05, 2.0)), seed=int(rng.integers(2**31)))
        ce, kl, h = exact_losses(model, proc)
        worst = max(worst, abs(ce - (kl + h)))
    return _result("nll_kl_identity", worst, 1e-10)


def check_entropy_identity(spec, rng):
    worst = 0.0
    for _ in range(spec.entropy_dists):
        p = _dist(rng, int(rng.integers(2, 9)), float(rng.uniform(0.1, 3.0)))
        worst = max(worst, abs(categorical_entropy_of(p, KL) - shannon_entropy(p.weights)))
    space = SpaceLabel.range(5)
    for kind in DIVERGENCE_KINDS:
        for x in space:
            worst = max(worst, abs(categorical_entropy_of(point_mass(space, x), kind)))
    return _result("categorical_entropy_shannon", worst, 1e-12, detail="includes point masses for every kind")


def check_dpi(spec, rng):
    worst = math.inf
    for _ in range(spec.dpi_triples):
        n, m = (int(x) for x in rng.integers(2, 7, size=2))
        src, tgt = SpaceLabel.range(n), SpaceLabel.range(m)
        p, q = _dist(rng, n, space=src), _dist(rng, n, space=src)
        k = _kernel(rng, src, tgt, float(rng.uniform(0.2, 2.0)))
        for kind in DIVERGENCE_KINDS:
            worst = min(worst, dpi_audit(p, q, k, kind))
    return _result("dpi_slack", worst, -1e-12, upper=False)


def check_pinsker(spec, rng):
    worst = -math.inf
    for _ in range(spec.dpi_triples):
        n = int(rng.integers(2, 8))
        p, q = _dist(rng, n), _dist(rng, n)
        kl = divergence(KL, p, q)
        worst = max(worst, divergence(TV, p, q) ** 2 - 0.5 * kl, 2 * divergence(HELLINGER_SQ, p, q) - kl)
    return _result("pinsker_bounds", worst, 1e-12, detail="TV^2 <= KL/2 and 2 HellingerSq <= KL")


def _model_encoder(model):
    h = hidden_states(model)
    contexts = SpaceLabel.power(model.vocab, model.order)
    return {x: h[i].tobytes() for i, x in enumerate(contexts)}


def check_surplus(spec, rng):
    worst = math.inf
    for _ in range(spec.surplus_instances):
        v, k = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        proc = build_markov_source(v, k, gamma=float(rng.uniform(0.3, 2.0)), seed=int(rng.integers(2**31)))
        model = init_model(v, k, 2, 2, seed=int(rng.integers(2**31)))
        for encoder in (lambda x: x, lambda x: 0, _model_encoder(model)):
            for horizon in (2, 3):
                worst = min(worst, information_surplus(joint_hidden_future(proc, encoder, horizon)).surplus)
    nonneg = _result("surplus_nonnegative", worst, -1e-12, upper=False)
    exact = information_surplus(joint_hidden_future(surplus_process(2, seed=int(rng.integers(2**31))), lambda x: x, 2))
    ln2 = _result("surplus_ln2", abs(exact.surplus - math.log(2)), 1e-10, detail=f"surplus = {exact.surplus!r}")
    return [nonneg, ln2]


def _jacobian_fd(model, h, step=1e-6):
    cols = []
    for a in range(model.d_model):
        e = np.zeros(model.d_model)
        e[a] = step
        cols.append((head_probabilities(model, h + e) - head_probabilities(model, h - e)) / (2 * step))
    return np.stack(cols, axis=1)


def check_geometry(spec, rng):
    consist, slope, rank_excess, jac = 0.0, math.inf, -math.inf, 0.0
    configs = ((6, 3), (4, 8), (5, 4))
    for i in range(spec.geometry_points):
        v, d = configs[i % len(configs)]
        model = init_model(v, 1, d_model=d, tabular=True, weight_init_scale=1.0, seed=int(rng.integers(2**31)))
        h = rng.standard_normal(d)
        consist = max(consist, pullback_consistency(model, h))
        rank_excess = max(rank_excess, pullback_metric(model, h).numerical_rank - min(d, v - 1))
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        slope = min(slope, verify_local_expansion(model, h, direction, EXPANSION_EPSILONS).slope)
        analytic = head_jacobian(model, h)
        numeric = _jacobian_fd(model, h)
        jac = max(jac, np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(analytic)), 1e-12))
    return [
        _result("pullback_score_vs_chart", consist, 1e-9),
        _result("kl_expansion_slope", slope, 2.7, upper=False),
        _result("pullback_rank_bound", rank_excess, 0),
        _result("head_jacobian_fd", jac, 1e-6),
    ]


def finite_difference_gradient(model, proc, block, step=1e-5):
    """Central differences of the exact cross-entropy (or draft loss) for one block."""
    loss = draft_loss if block == "draft_head" else (lambda m, p: exact_losses(m, p).ce)
    base = np.array(getattr(model, block))
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus, minus = base.copy(), base.copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (loss(model.with_params(**{block: plus}), proc)
                     - loss(model.with_params(**{block: minus}), proc)) / (2 * step)
    return grad


def gradient_relative_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(spec, rng):
    worst = 0.0
    for _ in range(spec.gradient_seeds):
        proc = build_markov_source(3, 2, gamma=1.0, seed=int(rng.integers(2**31)))
        seed = int(rng.integers(2**31))
        for tabular in (False, True):
            model = init_model(3, 2, 3, 4, tabular=tabular, draft_horizon=2, weight_init_scale=0.5, seed=seed)
            grads = nll_gradients(model, proc)
            for block, g in grads.items():
                worst = max(worst, gradient_relative_error(g, finite_difference_gradient(model, proc, block)))
    return _result("gradient_fd", worst, 1e-5)


def check_align_unif(spec, rng):
    worst = 0.0
    for _ in range(spec.align_checks):
        v = int(rng.integers(2, 6))
        proc = build_markov_source(v, 1, gamma=1.0, seed=int(rng.integers(2**31)))
        model = init_model(v, 1, 3, int(rng.integers(1, 7)), weight_init_scale=float(rng.uniform(0.1, 3.0)),
                           seed=int(rng.integers(2**31)))
        la, lu = loss_align_unif(model, proc)
        worst = max(worst, abs(la + lu - exact_losses(model, proc).ce))
    return _result("align_unif_decomposition", worst, 1e-10)


def check_kernels(spec, rng):
    psd, lap = math.inf, 0.0
    for _ in range(spec.kernel_instances):
        proc = build_markov_source(int(rng.integers(2, 6)), 1, gamma=float(rng.uniform(0.3, 2.0)), seed=int(rng.integers(2**31)))
        for kind in ("BC", "HellingerGauss", "Linear"):
            psd = min(psd, np.linalg.eigvalsh(similarity_matrix(proc, kind, 1.0).entries).min())
        k = similarity_matrix(proc, "SymKL", 2.0)
        phi = rng.standard_normal(proc.n_contexts)
        lap = max(lap, abs(dirichlet_energy(k, proc.context_dist, phi) - laplacian_quadratic_form(k, proc.context_dist, phi)))
    return [_result("kernel_psd", psd, -1e-10, upper=False), _result("dirichlet_laplacian", lap, 1e-10)]


def check_training(spec, rng):
    out = []
    proc = build_markov_source(4, 1, gamma=1.0, seed=int(rng.integers(2**31)))
    model = init_model(4, 1, d_model=4, tabular=True, seed=int(rng.integers(2**31)))
    trace = train(model, proc, TrainConfig(learning_rate=0.5, epochs=20000, optimizer="momentum",
                                           log_every=20000, kl_target=1e-7))
    f = trace.final
    out.append(_result("train_reaches_kl_target", f.L_KL, 1e-6))
    out.append(_result("entropy_convergence", abs(f.avg_cat_entropy_model - f.avg_cat_entropy_data), 1e-3))
    out.append(_result("trace_identity", max(abs(r.L_CE - r.L_KL - r.H_data) for r in trace.records), 1e-9))

    cluster = two_cluster_process(seed=int(rng.integers(2**31)))
    model = init_model(6, 1, d_model=6, tabular=True, seed=int(rng.integers(2**31)))
    trace = train(model, cluster, TrainConfig(learning_rate=0.5, epochs=20000, optimizer="momentum",
                                              log_every=20000, kl_target=1e-7))
    fm = trace.final_model
    mu = cluster.context_dist.weights
    baseline = random_alignment_baseline(prototype_kernel(fm, cluster), mu, fm.d_model, 100, int(rng.integers(2**31)))
    final_align = gram_alignment(hidden_states(fm), prototype_kernel(fm, cluster), mu).score
    margin = min(final_align - trace.initial.alignment_score, final_align - float(np.percentile(baseline, 95)))
    out.append(_result("alignment_trend", margin, 0.0, upper=False, detail="final minus max(initial, baseline p95)"))
    kernel = similarity_matrix(cluster, "BC")
    energy = sensitive_direction_energy(fm, cluster, kernel).energies[0]
    median = float(np.median(random_direction_energies(fm, cluster, kernel, 100, int(rng.integers(2**31)))))
    out.append(_result("sensitive_energy_below_random", energy - median, 0.0, detail=f"energy {energy:.6g}, median {median:.6g}"))
    out.append(_result("separation_correlation", separation_correlation(fm, cluster), 0.5, upper=False))
    return out


CHECKS = {
    "kernel_laws": check_kernel_laws,
    "stationarity": check_stationarity,
    "nll_identity": check_nll_identity,
    "entropy_identity": check_entropy_identity,
    "dpi": check_dpi,
    "pinsker": check_pinsker,
    "surplus": check_surplus,
    "geometry": check_geometry,
    "gradients": check_gradients,
    "align_unif": check_align_unif,
    "kernels": check_kernels,
    "training": check_training,
}


def run_suite(spec, seed):
    """Run every check; each check owns an independent random stream."""
    results = []
    for name, check in CHECKS.items():
        if name == "training" and not spec.training_checks:
            continue
        rng = np.random.default_rng(stream_seed(seed, f"suite/{name}"))
        out = check(spec, rng)
        results.extend(out if isinstance(out, list) else [out])
    return results
