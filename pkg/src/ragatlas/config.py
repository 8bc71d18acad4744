"""Declarative run configuration for the command-line pipeline.

One YAML (or JSON) file drives every command; command-line flags override
individual fields. API keys never appear in the file, only the names of the
environment variables holding them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .critique import Criterion, FilterPolicy
from .gateway import GatewayConfig
from .records import LabelClass


class ConfigError(ValueError):
    """The config file is missing, malformed, or fails validation."""


@dataclass
class CorpusPaths:
    contexts: Path | None = None
    qas: Path | None = None
    annotations: Path | None = None
    dataset_name: str = "corpus"
    format: str = "jsonl"


@dataclass
class GenerateOptions:
    labels: list[LabelClass] = field(
        default_factory=lambda: [LabelClass.FACT_SINGLE, LabelClass.SUMMARY,
                                 LabelClass.REASONING]
    )
    method: str = "statement_extraction"
    seed: int = 0
    label_output: bool = True
    use_theme: bool = True


@dataclass
class BenchOptions:
    weights: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2, 0.5, 1.0])
    candidate_k: int = 50
    top_n: int = 5
    rerank: bool = False
    k1: float = 1.2
    b: float = 0.75


@dataclass
class ExportOptions:
    holdout: str = ""
    validation_fraction: float = 0.2
    seed: int = 0


@dataclass
class RunConfig:
    run_dir: Path = Path("runs/default")
    backend: str = "scripted"
    chat: GatewayConfig = field(default_factory=GatewayConfig)
    embed: GatewayConfig = field(default_factory=lambda: GatewayConfig(model_id="scripted-embed"))
    rerank: GatewayConfig = field(default_factory=lambda: GatewayConfig(model_id="scripted-rerank"))
    embed_dim: int = 32
    corpus: CorpusPaths = field(default_factory=CorpusPaths)
    generate: GenerateOptions = field(default_factory=GenerateOptions)
    criteria: list[Criterion] = field(
        default_factory=lambda: [Criterion.STAND_ALONE, Criterion.Q_FEASIBILITY,
                                 Criterion.Q_TO_C_GROUNDEDNESS,
                                 Criterion.A_TO_C_GROUNDEDNESS]
    )
    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    bench: BenchOptions = field(default_factory=BenchOptions)
    export: ExportOptions = field(default_factory=ExportOptions)

    def validate(self) -> "RunConfig":
        if self.backend not in ("scripted", "http"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "http" and not self.chat.base_url:
            raise ConfigError("http backend requires chat.base_url")
        for name, path in (("contexts", self.corpus.contexts),
                           ("qas", self.corpus.qas),
                           ("annotations", self.corpus.annotations)):
            if path is not None and not path.exists():
                raise ConfigError(f"corpus.{name} path does not exist: {path}")
        for w in self.bench.weights:
            if not 0.0 <= w <= 1.0:
                raise ConfigError(f"bench weight {w} outside [0, 1]")
        if not 0.0 <= self.export.validation_fraction < 1.0:
            raise ConfigError("export.validation_fraction must be in [0, 1)")
        if self.generate.method not in ("statement_extraction", "simple_prompt"):
            raise ConfigError(f"unknown generation method {self.generate.method!r}")
        try:
            self.filter_policy.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


def _gateway_from(raw: dict, base: GatewayConfig) -> GatewayConfig:
    fields = {
        "base_url": str, "model_id": str, "api_key_env": str,
        "temperature": float, "max_tokens": int, "timeout": float,
        "max_retries": int, "max_in_flight": int,
    }
    kwargs = {name: base.__dict__[name] for name in fields}
    for name, cast in fields.items():
        if name in raw:
            kwargs[name] = cast(raw[name])
    try:
        return GatewayConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    cfg = RunConfig()
    if "run_dir" in raw:
        cfg.run_dir = Path(raw["run_dir"])
    gateway = raw.get("gateway") or {}
    cfg.backend = str(gateway.get("backend", cfg.backend))
    cfg.embed_dim = int(gateway.get("embed_dim", cfg.embed_dim))
    cfg.chat = _gateway_from(gateway.get("chat") or {}, cfg.chat)
    cfg.embed = _gateway_from(gateway.get("embed") or {}, cfg.embed)
    cfg.rerank = _gateway_from(gateway.get("rerank") or {}, cfg.rerank)

    corpus = raw.get("corpus") or {}
    cfg.corpus = CorpusPaths(
        contexts=Path(corpus["contexts"]) if corpus.get("contexts") else None,
        qas=Path(corpus["qas"]) if corpus.get("qas") else None,
        annotations=Path(corpus["annotations"]) if corpus.get("annotations") else None,
        dataset_name=str(corpus.get("dataset_name", "corpus")),
        format=str(corpus.get("format", "jsonl")),
    )

    gen = raw.get("generate") or {}
    try:
        labels = [LabelClass(l) for l in gen.get("labels",
                  [l.value for l in GenerateOptions().labels])]
    except ValueError as exc:
        raise ConfigError(f"generate.labels: {exc}") from None
    cfg.generate = GenerateOptions(
        labels=labels,
        method=str(gen.get("method", "statement_extraction")),
        seed=int(gen.get("seed", 0)),
        label_output=bool(gen.get("label_output", True)),
        use_theme=bool(gen.get("use_theme", True)),
    )

    crit = raw.get("critique") or {}
    if "criteria" in crit:
        try:
            cfg.criteria = [Criterion(c) for c in crit["criteria"]]
        except ValueError as exc:
            raise ConfigError(f"critique.criteria: {exc}") from None

    filt = raw.get("filter") or {}
    try:
        min_scaled = {Criterion(k): float(v)
                      for k, v in (filt.get("min_scaled") or {}).items()}
    except ValueError as exc:
        raise ConfigError(f"filter.min_scaled: {exc}") from None
    cfg.filter_policy = FilterPolicy(
        min_scaled=min_scaled,
        drop_unanswerable=bool(filt.get("drop_unanswerable", True)),
    )

    bench = raw.get("bench") or {}
    cfg.bench = BenchOptions(
        weights=[float(w) for w in bench.get("weights", BenchOptions().weights)],
        candidate_k=int(bench.get("candidate_k", 50)),
        top_n=int(bench.get("top_n", 5)),
        rerank=bool(bench.get("rerank", False)),
        k1=float(bench.get("k1", 1.2)),
        b=float(bench.get("b", 0.75)),
    )

    exp = raw.get("export_finetune") or {}
    cfg.export = ExportOptions(
        holdout=str(exp.get("holdout", "")),
        validation_fraction=float(exp.get("validation_fraction", 0.2)),
        seed=int(exp.get("seed", 0)),
    )
    return cfg.validate()
