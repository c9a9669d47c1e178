"""Build a source and model from a :class:`RunConfig`, train, run probes, write reports."""

import hashlib
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import softmax

from .._version import __version__
from ..armodel import (
    draft_loss,
    exact_losses,
    hidden_states,
    init_model,
    loss_align_unif,
    model_kernel,
    train,
)
from ..catinfo import average_categorical_entropy, categorical_mutual_information, information_surplus
from ..datagen import build_markov_source, joint_hidden_future, surplus_process, two_cluster_process
from ..divergence import DivergenceKind
from ..exceptions import CatlmError, IoFailure, ProbeFailed
from ..finstoch import FiniteKernel
from ..infogeo import pullback_consistency, pullback_metric, verify_local_expansion
from ..spectral import similarity_matrix, spectral_report
from .config import stream_seed
from .suite import run_suite

__all__ = ["RunManifest", "RunResult", "run", "build_source", "build_model", "verify_manifest", "write_json"]

MANIFEST = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    version: str
    duration: float
    files: tuple

    def to_json(self):
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "duration_seconds": self.duration,
            "files": [{"path": p, "sha256": h} for p, h in self.files],
        }


@dataclass(frozen=True, eq=False)
class RunResult:
    manifest: RunManifest
    out: Path
    reports: dict
    passed: bool = True


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        # JSON has no infinities; spell them out rather than emit invalid tokens
        return value if math.isfinite(value) else repr(value)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_plain(obj), indent=2) + "\n"
    _write(path, text)


def _write(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def build_source(cfg):
    spec = cfg.source
    seed = spec.seed if spec.seed is not None else stream_seed(cfg.seed, "source") % 2**32
    if spec.kind == "surplus":
        return surplus_process(spec.vocab_size, seed=seed)
    if spec.kind == "two_cluster":
        return two_cluster_process(spec.vocab_size, spec.order, noise=spec.noise, seed=seed)
    table = None if spec.table is None else np.asarray(spec.table, dtype=np.float64)
    return build_markov_source(spec.vocab_size, spec.order, table=table, gamma=spec.gamma, seed=seed)


def build_model(cfg, proc):
    m = cfg.model
    return init_model(
        len(proc.vocab), proc.order, m.d_emb, m.d_model,
        tabular=m.tabular, draft_horizon=m.draft_horizon,
        weight_init_scale=cfg.training.weight_init_scale,
        seed=stream_seed(cfg.seed, "model") % 2**32, activation=m.activation, vocab=proc.vocab,
    )


def _losses_probe(cfg, model, proc):
    ce, kl, h = exact_losses(model, proc)
    la, lu = loss_align_unif(model, proc)
    out = {"unit": "nats", "L_CE": ce, "L_KL": kl, "H_data": h, "L_align": la, "L_unif": lu}
    if model.draft_head is not None:
        out["L_draft"] = draft_loss(model, proc)
    return out


def _entropy_probe(cfg, model, proc):
    mu = proc.context_dist
    out = {"unit": "nats", "kinds": {}}
    for tag in cfg.probe.kinds:
        kind = DivergenceKind.parse(tag)
        out["kinds"][kind.name] = {
            "model": average_categorical_entropy(model_kernel(model, proc), mu, kind).average,
            "data": average_categorical_entropy(proc.transition, mu, kind).average,
        }
    if model.draft_head is not None:
        # draft head and verify head side by side; no ordering is asserted
        draft_rows = softmax(hidden_states(model) @ model.draft_head.T, axis=1)
        draft = FiniteKernel(proc.contexts, proc.horizon_conditional(model.draft_horizon).target, draft_rows)
        out["draft_vs_verify"] = {
            "horizon": model.draft_horizon,
            "draft": average_categorical_entropy(draft, mu).average,
            "verify": average_categorical_entropy(model_kernel(model, proc), mu).average,
        }
    return out


def _encoder(cfg, model, proc):
    if cfg.probe.encoder == "constant":
        return lambda x: 0
    if cfg.probe.encoder == "context":
        return lambda x: x
    h = hidden_states(model)
    # hidden states are binned bitwise: equal vectors share a label
    return {x: h[i].tobytes() for i, x in enumerate(proc.contexts)}


def _surplus_probe(cfg, model, proc):
    enc = _encoder(cfg, model, proc)
    report = information_surplus(joint_hidden_future(proc, enc, cfg.probe.horizon)).to_json()
    report["encoder"] = cfg.probe.encoder
    report["mi_by_horizon"] = [
        categorical_mutual_information(joint_hidden_future(proc, enc, k)) for k in range(1, cfg.probe.horizon + 1)
    ]
    return report


def _geometry_probe(cfg, model, proc, stage):
    rng = np.random.default_rng(stream_seed(cfg.seed, f"geometry/{stage}"))
    h = hidden_states(model)
    idx = rng.choice(len(h), size=min(cfg.probe.n_points, len(h)), replace=False)
    idx.sort()
    points = []
    for i in idx:
        direction = rng.standard_normal(model.d_model)
        direction /= np.linalg.norm(direction)
        metric = pullback_metric(model, h[i])
        expansion = verify_local_expansion(model, h[i], direction)
        points.append({
            "context": list(proc.contexts.elements[i]),
            **metric.to_json(),
            "rank_bound": min(model.d_model, len(proc.vocab) - 1),
            "score_vs_chart": pullback_consistency(model, h[i]),
            "expansion": expansion.to_json(),
        })
    return {"points": points}


def _spectral_probe(cfg, model, proc):
    report = spectral_report(model, proc, cfg.probe.kernel, cfg.probe.beta, cfg.probe.n_directions)
    kernel = similarity_matrix(proc, cfg.probe.kernel, cfg.probe.beta)
    return {**report.to_json(), "kernel": kernel.to_json()}, kernel


def _run_probe(name, fn, *args):
    try:
        return fn(*args)
    except CatlmError as exc:
        raise ProbeFailed(name, exc) from exc


def run(config, suite=False):
    """Execute a configured run; returns the manifest, output directory and reports.

    With ``suite`` the invariant suite runs as well and ``passed`` reflects it.
    """
    start = time.perf_counter()
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    written = []

    def emit_json(name, obj):
        write_json(out / name, obj)
        written.append(name)

    def emit_text(name, text):
        _write(out / name, text)
        written.append(name)

    proc = build_source(config)
    model = build_model(config, proc)
    # the output path is left out so runs in different directories stay byte-identical
    emit_json("config.json", {k: v for k, v in config.to_json().items() if k != "out"})
    emit_json("source.json", proc.to_json())
    emit_json("model_initial.json", model.to_json())

    stages = [("initial", model)]
    trace = None
    if config.train:
        training = replace(config.training, seed=stream_seed(config.seed, "model") % 2**32)
        trace = train(model, proc, training)
        stages.append(("final", trace.final_model))
        emit_json("model_final.json", trace.final_model.to_json())
        if "csv" in config.formats:
            emit_text("trace.csv", trace.to_csv())
        if "json" in config.formats:
            emit_json("trace.json", trace.to_json())

    reports = {}
    for probe in config.probes:
        report = {}
        for stage, m in stages:
            if probe == "losses":
                report[stage] = _run_probe(probe, _losses_probe, config, m, proc)
            elif probe == "entropy":
                report[stage] = _run_probe(probe, _entropy_probe, config, m, proc)
            elif probe == "surplus":
                report[stage] = _run_probe(probe, _surplus_probe, config, m, proc)
            elif probe == "geometry":
                report[stage] = _run_probe(probe, _geometry_probe, config, m, proc, stage)
            elif probe == "spectral":
                report[stage], kernel = _run_probe(probe, _spectral_probe, config, m, proc)
        reports[probe] = report
        if "json" in config.formats:
            emit_json(f"probe_{probe}.json", report)
        if probe == "spectral" and "csv" in config.formats:
            emit_text(f"kernel_{config.probe.kernel}.csv", kernel.to_csv())

    passed = True
    if suite:
        results = run_suite(config.suite, config.seed)
        passed = all(r.passed for r in results)
        reports["verify"] = {"passed": passed, "results": [r.to_json() for r in results]}
        emit_json("verify.json", reports["verify"])

    files = tuple((name, _sha256(out / name)) for name in written)
    manifest = RunManifest(config.config_hash(), __version__, time.perf_counter() - start, files)
    write_json(out / MANIFEST, manifest.to_json())
    return RunResult(manifest, out, reports, passed)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def verify_manifest(directory):
    """Names of files whose checksum no longer matches the manifest (empty when intact)."""
    directory = Path(directory)
    data = json.loads((directory / MANIFEST).read_text())
    bad = []
    for entry in data["files"]:
        path = directory / entry["path"]
        if not path.exists() or _sha256(path) != entry["sha256"]:
            bad.append(entry["path"])
    return bad
