"""Run configuration: a TOML file with fixed tables; unknown keys are errors."""

import dataclasses
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from ..armodel import TrainConfig
from ..exceptions import ConfigInvalid, IoFailure, ValidationError

__all__ = [
    "SourceSpec",
    "ModelSpec",
    "ProbeSpec",
    "SuiteSpec",
    "RunConfig",
    "load_config",
    "parse_config",
    "stream_seed",
    "PROBES",
    "SOURCE_KINDS",
    "FORMATS",
]

PROBES = ("losses", "entropy", "surplus", "geometry", "spectral")
SOURCE_KINDS = ("markov", "surplus", "two_cluster")
FORMATS = ("csv", "json")
ENCODERS = ("context", "constant", "model")


@dataclass(frozen=True)
class SourceSpec:
    kind: str = "markov"
    vocab_size: int = 4
    order: int = 1
    gamma: float = 1.0
    table: list = None
    seed: int = None
    noise: float = 0.05

    def validate(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigInvalid(f"source.kind must be one of {SOURCE_KINDS}")
        if self.vocab_size < 2 or self.order < 1:
            raise ConfigInvalid("source needs vocab_size >= 2 and order >= 1")
        if self.kind == "surplus" and self.order != 2:
            raise ConfigInvalid("the surplus source has order 2")
        if self.vocab_size ** self.order > 4096:
            raise ConfigInvalid("context space too large for exact enumeration")
        if self.table is not None:
            shape = np.shape(self.table)
            if self.kind != "markov" or shape != (self.vocab_size ** self.order, self.vocab_size):
                raise ConfigInvalid(f"source.table must be a {self.vocab_size ** self.order}x{self.vocab_size} markov table")


@dataclass(frozen=True)
class ModelSpec:
    d_emb: int = 8
    d_model: int = 8
    tabular: bool = False
    draft_horizon: int = None
    activation: str = "tanh"

    def validate(self):
        if self.d_emb < 1 or self.d_model < 1:
            raise ConfigInvalid("model dimensions must be positive")
        if self.activation not in ("tanh", "identity"):
            raise ConfigInvalid("model.activation must be 'tanh' or 'identity'")


@dataclass(frozen=True)
class ProbeSpec:
    """Options shared by the probes; each probe reads the keys it needs."""

    kernel: str = "BC"
    beta: float = 1.0
    horizon: int = 2
    encoder: str = "context"
    n_points: int = 8
    n_directions: int = 3
    baseline_seeds: int = 100
    kinds: tuple = ("KL", "TotalVariation", "HellingerSq", "JensenShannon")

    def validate(self):
        if self.encoder not in ENCODERS:
            raise ConfigInvalid(f"probe.encoder must be one of {ENCODERS}")
        if self.horizon < 1 or self.n_points < 1 or self.n_directions < 1:
            raise ConfigInvalid("probe counts must be positive")
        if self.beta <= 0:
            raise ConfigInvalid("probe.beta must be positive")


@dataclass(frozen=True)
class SuiteSpec:
    """Sample counts for the invariant suite run by ``verify``."""

    nll_pairs: int = 20
    entropy_dists: int = 200
    dpi_triples: int = 300
    surplus_instances: int = 20
    geometry_points: int = 20
    gradient_seeds: int = 3
    align_checks: int = 20
    kernel_instances: int = 10
    training_checks: bool = True

    def validate(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.type is int and value < 1:
                raise ConfigInvalid(f"suite.{f.name} must be positive")


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    seed: int = 0
    out: str = "runs/run"
    formats: tuple = FORMATS
    probes: tuple = ()
    train: bool = True
    source: SourceSpec = field(default_factory=SourceSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    training: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    suite: SuiteSpec = field(default_factory=SuiteSpec)

    def validate(self):
        for p in self.probes:
            if p not in PROBES:
                raise ConfigInvalid(f"unknown probe {p!r}; expected any of {PROBES}")
        for f in self.formats:
            if f not in FORMATS:
                raise ConfigInvalid(f"unknown format {f!r}; expected any of {FORMATS}")
        self.source.validate()
        self.model.validate()
        self.probe.validate()
        self.suite.validate()
        if self.model.draft_horizon is not None and self.model.draft_horizon > self.probe.horizon and "surplus" in self.probes:
            raise ConfigInvalid("draft horizon exceeds the surplus horizon")
        return self

    def to_json(self):
        data = dataclasses.asdict(self)
        data["formats"] = list(self.formats)
        data["probes"] = list(self.probes)
        data["probe"]["kinds"] = list(self.probe.kinds)
        return data

    def config_hash(self):
        # the output location does not change what is computed
        data = self.to_json()
        data.pop("out")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    def override(self, seed=None, out=None, formats=None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if out is not None:
            changes["out"] = str(out)
        if formats is not None:
            changes["formats"] = tuple(formats)
        return dataclasses.replace(self, **changes).validate()


_SECTIONS = {"source": SourceSpec, "model": ModelSpec, "train": TrainConfig, "probe": ProbeSpec, "suite": SuiteSpec}
_TOP = {"name", "seed", "out", "formats", "probes", "train_model"}


def _build(cls, table, section):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) and k != "table" else v for k, v in table.items()}
    try:
        return cls(**values)
    except (TypeError, ValidationError) as exc:
        raise ConfigInvalid(f"[{section}]: {exc}") from exc


def parse_config(data):
    """Build a :class:`RunConfig` from a parsed TOML mapping."""
    data = dict(data)
    run = dict(data.pop("run", {}))
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigInvalid(f"unknown table(s): {', '.join(unknown)}")
    bad = sorted(set(run) - _TOP)
    if bad:
        raise ConfigInvalid(f"unknown key(s) in [run]: {', '.join(bad)}")
    sections = {key: _build(cls, data.get(key, {}), key) for key, cls in _SECTIONS.items()}
    out = run.get("out", f"runs/{run.get('name', 'run')}")
    cfg = RunConfig(
        name=run.get("name", "run"),
        seed=int(run.get("seed", 0)),
        out=out,
        formats=tuple(run.get("formats", FORMATS)),
        probes=tuple(run.get("probes", ())),
        train=bool(run.get("train_model", True)),
        source=sections["source"],
        model=sections["model"],
        training=sections["train"],
        probe=sections["probe"],
        suite=sections["suite"],
    )
    return cfg.validate()


def load_config(path):
    """Read a TOML run configuration; a relative ``out`` resolves against the cwd."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    return parse_config(data)


def stream_seed(seed, stream):
    """Integer seed for a named random stream.

    Each stream is a child of the run seed keyed by the CRC32 of its name,
    so adding a stream never shifts the draws of another.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(stream.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
