"""Run configuration: one TOML or JSON file, overridable from the
environment (prefix REWRITEQA_, double underscore for nesting), hashed for
provenance and echoed into every output directory."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import httpx

from .agnostic import CandidateGenConfig
from .aware import BackendSuite, ExplorationConfig, TrainingConfig
from .backends.reference import (
    HashEmbedder,
    LogLinearRewriter,
    LookupQA,
    NgramTableScorer,
)
from .backends.remote import (
    RemoteEmbedder,
    RemoteEndpoint,
    RemoteQA,
    RemoteScorer,
    RemoteTrainableRewriter,
)
from .data import FilterSpec
from .errors import ConfigError

ENV_PREFIX = "REWRITEQA_"
PORT_NAMES = ("scorer", "qa", "embedder", "rewriter")
BACKEND_KINDS = ("reference", "remote")


@dataclass(frozen=True)
class BackendChoice:
    """How one port is satisfied: the in-repo reference implementation or a
    remote adapter.  Reference-only knobs are ignored for remote backends."""

    kind: str = "reference"
    url: str | None = None
    timeout_ms: int = 10_000
    retries: int = 2
    table_path: str | None = None
    dim: int = 256
    max_len: int = 16
    init_scale: float = 0.01

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind == "remote":
            if not self.url:
                raise ConfigError("remote backend requires a url")
            if not self.url.startswith(("http://", "https://")):
                raise ConfigError(f"remote backend url must be http(s), got {self.url!r}")

    def endpoint(self) -> RemoteEndpoint:
        return RemoteEndpoint(url=self.url, timeout_ms=self.timeout_ms, retries=self.retries)


@dataclass(frozen=True)
class PipelineConfig:
    dataset_path: str = "data/annotated.jsonl"
    train_path: str = "data/train.jsonl"
    test_path: str = "data/test.jsonl"
    output_dir: str = "out"
    images_dir: str | None = None
    guidelines_path: str | None = None
    seed: int = 0
    filter: FilterSpec = field(default_factory=FilterSpec)
    candidates: CandidateGenConfig = field(default_factory=CandidateGenConfig)
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    backends: Mapping[str, BackendChoice] = field(
        default_factory=lambda: {name: BackendChoice() for name in PORT_NAMES}
    )

    # Output layout, all rooted at output_dir.
    def decisions_path(self, mode: str) -> Path:
        return Path(self.output_dir) / f"decisions-{mode}.jsonl"

    def predictions_dir(self) -> Path:
        return Path(self.output_dir) / "predictions"

    def predictions_path(self, system: str) -> Path:
        return self.predictions_dir() / f"{system}.jsonl"

    def grades_path(self) -> Path:
        return Path(self.output_dir) / "grades.jsonl"

    def train_dir(self) -> Path:
        return Path(self.output_dir) / "train"

    def report_path(self, suffix: str) -> Path:
        return Path(self.output_dir) / f"report.{suffix}"


def _build_dataclass(cls, payload: dict, context: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{context} must be a table/object, got {type(payload).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {context}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {context}: {exc}") from exc


def config_from_dict(payload: dict) -> PipelineConfig:
    payload = dict(payload)
    top_seed = payload.get("seed", 0)

    sections = {}
    for name, cls in (
        ("filter", FilterSpec),
        ("candidates", CandidateGenConfig),
        ("exploration", ExplorationConfig),
        ("training", TrainingConfig),
    ):
        section = dict(payload.pop(name, {}))
        # The run-level seed flows into the seeded sub-configs unless the
        # file pins them explicitly.
        if cls in (ExplorationConfig, TrainingConfig) and "seed" not in section:
            section["seed"] = top_seed
        sections[name] = _build_dataclass(cls, section, name)

    backend_payload = payload.pop("backends", {})
    if not isinstance(backend_payload, dict):
        raise ConfigError("backends must be a table of port name -> backend choice")
    unknown_ports = sorted(set(backend_payload) - set(PORT_NAMES))
    if unknown_ports:
        raise ConfigError(f"unknown backend port(s) {unknown_ports}; expected {PORT_NAMES}")
    backends = {
        name: _build_dataclass(BackendChoice, dict(backend_payload.get(name, {})), f"backends.{name}")
        for name in PORT_NAMES
    }

    scalar_keys = {
        f.name
        for f in dataclasses.fields(PipelineConfig)
        if f.name not in ("filter", "candidates", "exploration", "training", "backends")
    }
    unknown = sorted(set(payload) - scalar_keys)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    return PipelineConfig(backends=backends, **sections, **payload)


def config_to_dict(config: PipelineConfig) -> dict:
    payload = dataclasses.asdict(config)
    payload["filter"]["spatial_keywords"] = list(config.filter.spatial_keywords)
    payload["backends"] = {
        name: dataclasses.asdict(choice) for name, choice in sorted(config.backends.items())
    }
    return payload


def _deep_merge(base: dict, override: dict) -> dict:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base


def env_overrides(env: Mapping[str, str] | None = None, prefix: str = ENV_PREFIX) -> dict:
    """REWRITEQA_TRAINING__BATCH_SIZE=8 becomes {"training": {"batch_size": 8}}.
    Values parse as JSON when possible, else stay strings."""
    env = os.environ if env is None else env
    tree: dict = {}
    for key in sorted(env):
        if not key.startswith(prefix) or key == prefix:
            continue
        parts = key[len(prefix) :].lower().split("__")
        raw = env[key]
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = tree
        for part in parts[:-1]:
            existing = node.setdefault(part, {})
            if not isinstance(existing, dict):
                raise ConfigError(f"environment override {key} nests under a scalar")
            node = existing
        node[parts[-1]] = value
    return tree


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> PipelineConfig:
    payload: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        if path.suffix == ".toml":
            with path.open("rb") as handle:
                payload = tomllib.load(handle)
        elif path.suffix == ".json":
            payload = json.loads(path.read_text(encoding="utf-8"))
        else:
            raise ConfigError(f"config file must be .toml or .json, got {path.suffix!r}")
    _deep_merge(payload, env_overrides(env))
    return config_from_dict(payload)


def with_seed(config: PipelineConfig, seed: int) -> PipelineConfig:
    """Run-level seed override: retargets every seeded sub-config."""
    return dataclasses.replace(
        config,
        seed=seed,
        exploration=dataclasses.replace(config.exploration, seed=seed),
        training=dataclasses.replace(config.training, seed=seed),
    )


def config_hash(config: PipelineConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def echo_config(config: PipelineConfig, out_dir: str | Path) -> Path:
    """Drop the resolved config plus its hash next to the artifacts it
    produced."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "config.json"
    target.write_text(
        json.dumps({"hash": config_hash(config), "config": config_to_dict(config)}, indent=2, sort_keys=True),
        encoding="utf-8",
    )
    return target


# -- backend construction ------------------------------------------------------


def build_scorer(choice: BackendChoice, client: httpx.Client | None = None):
    if choice.kind == "remote":
        return RemoteScorer(choice.endpoint(), client)
    if choice.table_path:
        return NgramTableScorer.from_json(choice.table_path)
    return NgramTableScorer.uniform(-2.0)


def build_qa(choice: BackendChoice, client: httpx.Client | None = None):
    if choice.kind == "remote":
        return RemoteQA(choice.endpoint(), client)
    if choice.table_path:
        return LookupQA.from_json(choice.table_path)
    return LookupQA({})


def build_embedder(choice: BackendChoice, client: httpx.Client | None = None):
    if choice.kind == "remote":
        return RemoteEmbedder(choice.endpoint(), client)
    return HashEmbedder(dim=choice.dim)


def build_rewriter(
    config: PipelineConfig,
    vocab: tuple[str, ...] | None = None,
    client: httpx.Client | None = None,
):
    """For the reference rewriter a vocabulary is required (built from the
    training split or recovered from a checkpoint)."""
    choice = config.backends["rewriter"]
    if choice.kind == "remote":
        return RemoteTrainableRewriter(choice.endpoint(), client)
    if vocab is None:
        raise ConfigError("reference rewriter needs a vocabulary; prepare or load a checkpoint first")
    return LogLinearRewriter(
        vocab=vocab,
        max_len=choice.max_len,
        learning_rate=config.training.learning_rate,
        init_scale=choice.init_scale,
        seed=config.seed,
    )


def build_backends(
    config: PipelineConfig, clients: Mapping[str, httpx.Client] | None = None
) -> BackendSuite:
    clients = clients or {}
    return BackendSuite(
        scorer=build_scorer(config.backends["scorer"], clients.get("scorer")),
        qa=build_qa(config.backends["qa"], clients.get("qa")),
        embedder=build_embedder(config.backends["embedder"], clients.get("embedder")),
    )
