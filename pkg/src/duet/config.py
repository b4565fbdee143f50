"""Experiment configuration: one YAML file describing models, data and runs.

The schema (all paths relative to the config file's directory):

    seed: 0                      # RNG seed for subsampling
    workers: 1                   # decode concurrency (results stay ordered)
    out: runs/demo               # default output directory
    beam: {max_len: 32, beam_size: 5, alpha: 1.0}
    guidance:
      lambda_f: 0.1              # weight of f's pull on g's guided pass
      lambda_g: 3.0              # weight of g's pull on f's guided pass
      iterations: 1
      distance: hamming-min      # hamming-min | hamming-one-best | embedding-min
      selection: normalized      # normalized | raw-model
    lambda_grid: [0.1, 0.3, 1.0, 3.0]
    metric: bleu                 # dev metric: bleu | rouge-l
    bleu_smoothing: true
    tune_method: twist-fg
    methods: [isolation-f, isolation-g, rerank-fg, rerank-gf,
              twist-fg, twist-gf, fusion]
    models:
      f:
        kind: ngram              # ngram | table | remote
        corpus: data/train.f     # ngram: training corpus
        order: 3
        k_add: 0.2
        copy_bonus: 0.0
        model_path: models/f.ngram   # load when present, else train and save
        spec:
          order: left-to-right   # left-to-right | right-to-left
          scheme: {type: whitespace}
          #   {type: character}
          #   {type: bpe, merges: path, marker: "@@"}
          #   {type: bpe, learn: 200, marker: "@@"}    # learn from corpus
          vocab: from-corpus     # from-corpus | path
        view: [source]           # record fields this model conditions on
      g:
        kind: table
        path: models/g.table.json
        view: [source]
      # kind: remote -> address: "host:port" (or $DUET_BRIDGE_ADDR)
      #                 command: ["node", "bridge/dist/server.js", ...]
      #                 top_n: 64
    data:
      eval: {source: data/test.src, references: [data/test.ref]}
      dev:  {source: data/dev.src,  references: [data/dev.ref]}
      # or records mode:
      # eval: {records: data/test.jsonl, reference_field: target}
    subsample:
      model: f
      sizes: [100, 200, 400]

Every malformed or inconsistent value raises ConfigError, which the CLI maps
to exit code 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .beam import BeamConfig
from .errors import ConfigError, ValidationError
from .scoring import SourceView
from .twist import GuidanceConfig

METHODS = (
    "isolation-f",
    "isolation-g",
    "rerank-fg",
    "rerank-gf",
    "twist-fg",
    "twist-gf",
    "fusion",
)

DEFAULT_LAMBDA_GRID = (0.1, 0.3, 1.0, 3.0)


@dataclass(frozen=True)
class SpecConfig:
    """How to obtain a model's text interface (ngram models only)."""

    order: str = "left-to-right"
    scheme_type: str = "whitespace"
    merges_path: Optional[Path] = None
    learn_merges: Optional[int] = None
    marker: str = "@@"
    vocab: str = "from-corpus"  # or a path string


@dataclass(frozen=True)
class ModelConfig:
    name: str
    kind: str
    view: SourceView
    # ngram
    corpus: Optional[Path] = None
    order: int = 3
    k_add: float = 0.2
    copy_bonus: float = 0.0
    model_path: Optional[Path] = None
    spec: SpecConfig = field(default_factory=SpecConfig)
    # table
    path: Optional[Path] = None
    # remote
    address: Optional[str] = None
    command: Optional[tuple[str, ...]] = None
    top_n: Optional[int] = None


@dataclass(frozen=True)
class DataConfig:
    """Either line-aligned source/reference files or a JSONL record file."""

    source: Optional[Path] = None
    references: tuple[Path, ...] = ()
    records: Optional[Path] = None
    reference_field: str = "target"


@dataclass(frozen=True)
class SubsampleConfig:
    model: str
    sizes: tuple[int, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    models: dict[str, ModelConfig]
    eval_data: DataConfig
    dev_data: Optional[DataConfig] = None
    methods: tuple[str, ...] = METHODS
    beam: BeamConfig = field(default_factory=lambda: BeamConfig(max_len=32))
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    metric: str = "bleu"
    bleu_smoothing: bool = True
    tune_method: str = "twist-fg"
    seed: int = 0
    workers: int = 1
    out: Optional[Path] = None
    subsample: Optional[SubsampleConfig] = None

    def __post_init__(self):
        for name in ("f", "g"):
            if name not in self.models:
                raise ConfigError("models must declare %r" % name)
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(
                    "unknown method %r; choose from %s" % (method, ", ".join(METHODS))
                )
        if not self.methods:
            raise ConfigError("methods list is empty")
        if self.metric not in ("bleu", "rouge-l"):
            raise ConfigError("metric must be 'bleu' or 'rouge-l'")
        if self.tune_method not in ("twist-fg", "twist-gf"):
            raise ConfigError("tune_method must be a twist direction")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _as_path(base: Path, value) -> Path:
    path = Path(str(value))
    return path if path.is_absolute() else base / path


def _parse_view(name: str, raw) -> SourceView:
    if raw is None:
        fields = ("source",)
    elif isinstance(raw, (list, tuple)):
        fields = tuple(str(f) for f in raw)
    elif isinstance(raw, dict):
        fields = tuple(str(f) for f in raw.get("fields", ("source",)))
    else:
        raise ConfigError("model %r: view must be a field list" % name)
    try:
        return SourceView(name="%s-view" % name, fields=fields)
    except ValidationError as exc:
        raise ConfigError(str(exc))


def _parse_spec(name: str, raw, base: Path) -> SpecConfig:
    raw = raw or {}
    scheme = raw.get("scheme", {"type": "whitespace"})
    scheme_type = scheme.get("type", "whitespace")
    if scheme_type not in ("whitespace", "character", "bpe"):
        raise ConfigError("model %r: unknown scheme type %r" % (name, scheme_type))
    merges_path = None
    learn = None
    if scheme_type == "bpe":
        if "merges" in scheme:
            merges_path = _as_path(base, scheme["merges"])
        elif "learn" in scheme:
            learn = int(scheme["learn"])
        else:
            raise ConfigError(
                "model %r: bpe scheme needs 'merges: path' or 'learn: N'" % name
            )
    vocab = raw.get("vocab", "from-corpus")
    if vocab != "from-corpus":
        vocab = str(_as_path(base, vocab))
    return SpecConfig(
        order=raw.get("order", "left-to-right"),
        scheme_type=scheme_type,
        merges_path=merges_path,
        learn_merges=learn,
        marker=scheme.get("marker", "@@"),
        vocab=vocab,
    )


def _parse_model(name: str, raw, base: Path) -> ModelConfig:
    if not isinstance(raw, dict):
        raise ConfigError("model %r must be a mapping" % name)
    kind = raw.get("kind")
    if kind not in ("ngram", "table", "remote"):
        raise ConfigError(
            "model %r: kind must be ngram, table or remote, got %r" % (name, kind)
        )
    view = _parse_view(name, raw.get("view"))
    if kind == "ngram":
        corpus = raw.get("corpus")
        model_path = raw.get("model_path")
        if corpus is None and model_path is None:
            raise ConfigError(
                "ngram model %r needs a corpus or an existing model_path" % name
            )
        return ModelConfig(
            name=name,
            kind=kind,
            view=view,
            corpus=None if corpus is None else _as_path(base, corpus),
            order=int(raw.get("order", 3)),
            k_add=float(raw.get("k_add", 0.2)),
            copy_bonus=float(raw.get("copy_bonus", 0.0)),
            model_path=None if model_path is None else _as_path(base, model_path),
            spec=_parse_spec(name, raw.get("spec"), base),
        )
    if kind == "table":
        if "path" not in raw:
            raise ConfigError("table model %r needs a path" % name)
        return ModelConfig(
            name=name, kind=kind, view=view, path=_as_path(base, raw["path"])
        )
    command = raw.get("command")
    return ModelConfig(
        name=name,
        kind=kind,
        view=view,
        address=raw.get("address"),
        command=None if command is None else tuple(str(c) for c in command),
        top_n=None if raw.get("top_n") is None else int(raw["top_n"]),
    )


def _parse_data(label: str, raw, base: Path) -> DataConfig:
    if not isinstance(raw, dict):
        raise ConfigError("data.%s must be a mapping" % label)
    if "records" in raw:
        return DataConfig(
            records=_as_path(base, raw["records"]),
            reference_field=str(raw.get("reference_field", "target")),
        )
    if "source" not in raw or not raw.get("references"):
        raise ConfigError(
            "data.%s needs source+references files or a records file" % label
        )
    return DataConfig(
        source=_as_path(base, raw["source"]),
        references=tuple(_as_path(base, r) for r in raw["references"]),
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse and validate a YAML experiment config."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    except yaml.YAMLError as exc:
        raise ConfigError("config %s is not valid YAML: %s" % (path, exc))
    if not isinstance(raw, dict):
        raise ConfigError("config %s must be a mapping" % path)
    base = path.parent
    try:
        beam_raw = raw.get("beam", {})
        beam = BeamConfig(
            max_len=int(beam_raw.get("max_len", 32)),
            beam_size=int(beam_raw.get("beam_size", 5)),
            alpha=float(beam_raw.get("alpha", 1.0)),
        )
        guidance_raw = raw.get("guidance", {})
        guidance = GuidanceConfig(
            lambda_f=float(guidance_raw.get("lambda_f", 0.1)),
            lambda_g=float(guidance_raw.get("lambda_g", 3.0)),
            iterations=int(guidance_raw.get("iterations", 1)),
            distance=guidance_raw.get("distance", "hamming-min"),
            selection=guidance_raw.get("selection", "normalized"),
        )
    except (ValidationError, ValueError) as exc:
        raise ConfigError(str(exc))
    models_raw = raw.get("models")
    if not isinstance(models_raw, dict):
        raise ConfigError("config needs a models mapping with f and g")
    models = {
        name: _parse_model(name, m_raw, base) for name, m_raw in models_raw.items()
    }
    data_raw = raw.get("data")
    if not isinstance(data_raw, dict) or "eval" not in data_raw:
        raise ConfigError("config needs data.eval")
    subsample = None
    if "subsample" in raw and raw["subsample"] is not None:
        sub = raw["subsample"]
        if "model" not in sub or not sub.get("sizes"):
            raise ConfigError("subsample needs a model name and a sizes list")
        subsample = SubsampleConfig(
            model=str(sub["model"]), sizes=tuple(int(s) for s in sub["sizes"])
        )
    out = raw.get("out")
    return ExperimentConfig(
        models=models,
        eval_data=_parse_data("eval", data_raw["eval"], base),
        dev_data=None
        if "dev" not in data_raw
        else _parse_data("dev", data_raw["dev"], base),
        methods=tuple(raw.get("methods", METHODS)),
        beam=beam,
        guidance=guidance,
        lambda_grid=tuple(
            float(v) for v in raw.get("lambda_grid", DEFAULT_LAMBDA_GRID)
        ),
        metric=raw.get("metric", "bleu"),
        bleu_smoothing=bool(raw.get("bleu_smoothing", True)),
        tune_method=raw.get("tune_method", "twist-fg"),
        seed=int(raw.get("seed", 0)),
        workers=int(raw.get("workers", 1)),
        out=None if out is None else _as_path(base, out),
        subsample=subsample,
    )
