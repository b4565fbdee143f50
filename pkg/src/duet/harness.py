"""Run the model-pair methods over datasets and report their metrics.

The harness owns everything between a config file and a results table:
building or loading the two models, reading the evaluation data, decoding it
line by line under each configured method, scoring the hypotheses, and
writing the output tree:

    out/
      results.tsv            method x metric table (byte-stable)
      hyps/<method>.txt      one hypothesis per input line
      nbest/<method>/NNN.nbest          final candidate set per line
      nbest/<method>/NNN.PP-label.nbest per-pass sets (twist methods)
      traces/<method>.tsv    per-line pass costs (twist methods)
      iterations.tsv         metric after each exchange round (twist methods)

For the rerank methods the per-line n-best file holds the generator's
candidate set, i.e. the list that was rescored.  A line whose decode raises a
package error yields an empty hypothesis and is counted in the method's
decode_failures row; everything else proceeds.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .beam import BeamConfig, CandidateSet, beam_search, format_nbest
from .config import METHODS, DataConfig, ExperimentConfig, ModelConfig
from .errors import ConfigError, DuetError
from .metrics import EvalPair, RougeScore, corpus_bleu, rouge_l
from .scoring import (
    CountingScorer,
    NGramModel,
    Scorer,
    SourceView,
    TableScorer,
    train_ngram,
)
from .textspec import (
    CharacterScheme,
    GenerationOrder,
    ModelTextSpec,
    Vocabulary,
    WhitespaceScheme,
    learn_bpe,
    load_merges,
    sequence_to_text,
    vocabulary_from_corpus,
)
from .twist import (
    DecodeSession,
    DecodeTrace,
    FusedScorer,
    GuidanceConfig,
    PASS_G_GUIDED,
    rerank_decode,
    select_candidate,
    twist_decode,
)


@dataclass
class LoadedModel:
    """A ready scorer plus the view and config it was built from."""

    name: str
    scorer: Scorer
    view: SourceView
    config: ModelConfig


@dataclass(frozen=True)
class DataItem:
    record: Mapping[str, str]
    references: tuple[str, ...]


@dataclass
class LineResult:
    """One decoded line: hypothesis text, candidate set, optional trace."""

    hypothesis: str
    candidates: Optional[CandidateSet]
    trace: Optional[DecodeTrace]
    failed: bool = False


@dataclass
class MethodResult:
    method: str
    hypotheses: tuple[str, ...]
    bleu: float
    rouge: RougeScore
    decode_failures: int
    lines: tuple[LineResult, ...]


# --- model building ---------------------------------------------------------


def _read_lines(path: Path, what: str) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError("cannot read %s %s: %s" % (what, path, exc))


def _build_spec(cfg: ModelConfig, corpus_lines: Sequence[str]) -> ModelTextSpec:
    sc = cfg.spec
    if sc.scheme_type == "whitespace":
        scheme = WhitespaceScheme()
    elif sc.scheme_type == "character":
        scheme = CharacterScheme()
    elif sc.merges_path is not None:
        scheme = load_merges(sc.merges_path, marker=sc.marker)
    else:
        scheme = learn_bpe(corpus_lines, sc.learn_merges, marker=sc.marker)
    if sc.vocab == "from-corpus":
        vocab = vocabulary_from_corpus(corpus_lines, scheme)
    else:
        vocab = Vocabulary.load(sc.vocab)
    try:
        order = GenerationOrder(sc.order)
    except ValueError:
        raise ConfigError("model %r: unknown generation order %r" % (cfg.name, sc.order))
    return ModelTextSpec(vocab, scheme, order, name=cfg.name)


def _build_ngram(cfg: ModelConfig) -> NGramModel:
    if cfg.model_path is not None and cfg.model_path.exists():
        return NGramModel.load(cfg.model_path)
    if cfg.corpus is None:
        raise ConfigError(
            "ngram model %r: model file %s is missing and no corpus is given"
            % (cfg.name, cfg.model_path)
        )
    lines = _read_lines(cfg.corpus, "corpus for model %r" % cfg.name)
    spec = _build_spec(cfg, lines)
    model = train_ngram(lines, spec, cfg.order, cfg.k_add, copy_bonus=cfg.copy_bonus)
    if cfg.model_path is not None:
        cfg.model_path.parent.mkdir(parents=True, exist_ok=True)
        model.save(cfg.model_path)
    return model


def build_model(cfg: ModelConfig) -> LoadedModel:
    if cfg.kind == "ngram":
        scorer: Scorer = _build_ngram(cfg)
    elif cfg.kind == "table":
        scorer = TableScorer.load(cfg.path)
    else:
        from .remote import RemoteScorer

        if cfg.command is not None:
            scorer = RemoteScorer.from_process(cfg.command, top_n=cfg.top_n)
        else:
            scorer = RemoteScorer.connect(cfg.address, top_n=cfg.top_n)
    return LoadedModel(cfg.name, scorer, cfg.view, cfg)


def build_models(config: ExperimentConfig) -> dict[str, LoadedModel]:
    return {name: build_model(cfg) for name, cfg in config.models.items()}


def close_models(models: Mapping[str, LoadedModel]) -> None:
    for model in models.values():
        close = getattr(model.scorer, "close", None)
        if close is not None:
            close()


# --- data -------------------------------------------------------------------


def load_dataset(data: DataConfig) -> list[DataItem]:
    """Materialize a dataset as (record, references) items."""
    if data.records is not None:
        items = []
        for lineno, line in enumerate(_read_lines(data.records, "records"), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    "bad JSON on line %d of %s: %s" % (lineno, data.records, exc)
                )
            if not isinstance(obj, dict):
                raise ConfigError(
                    "line %d of %s is not an object" % (lineno, data.records)
                )
            raw_refs = obj.get(data.reference_field)
            if isinstance(raw_refs, str):
                refs: tuple[str, ...] = (raw_refs,)
            elif isinstance(raw_refs, list):
                refs = tuple(str(r) for r in raw_refs)
            else:
                refs = ()
            record = {
                k: str(v) for k, v in obj.items() if isinstance(v, (str, int, float))
            }
            items.append(DataItem(record=record, references=refs))
        return items
    sources = _read_lines(data.source, "source file")
    ref_columns = [_read_lines(p, "reference file") for p in data.references]
    for path, column in zip(data.references, ref_columns):
        if len(column) != len(sources):
            raise ConfigError(
                "%s has %d lines but %s has %d"
                % (data.source, len(sources), path, len(column))
            )
    return [
        DataItem(
            record={"source": src},
            references=tuple(column[i] for column in ref_columns),
        )
        for i, src in enumerate(sources)
    ]


def _require_references(items: Sequence[DataItem], label: str) -> None:
    for i, item in enumerate(items):
        if not item.references:
            raise ConfigError(
                "%s line %d has no reference; metrics need at least one" % (label, i)
            )


# --- decoding ---------------------------------------------------------------


def _decode_line(
    models: Mapping[str, LoadedModel],
    method: str,
    record: Mapping[str, str],
    beam: BeamConfig,
    guidance: GuidanceConfig,
) -> LineResult:
    f, g = models["f"], models["g"]
    if method == "isolation-f":
        candidates = beam_search(f.scorer, f.view.apply(record), beam)
        return LineResult(sequence_to_text(candidates.top().seq), candidates, None)
    if method == "isolation-g":
        candidates = beam_search(g.scorer, g.view.apply(record), beam)
        return LineResult(sequence_to_text(candidates.top().seq), candidates, None)
    if method == "fusion":
        fused = FusedScorer(f.scorer, g.scorer, source_second=g.view.apply(record))
        candidates = beam_search(fused, f.view.apply(record), beam)
        return LineResult(sequence_to_text(candidates.top().seq), candidates, None)
    session = DecodeSession(
        model_f=f.scorer,
        view_f=f.view,
        model_g=g.scorer,
        view_g=g.view,
        record=record,
        beam=beam,
        guidance=guidance,
    )
    if method.endswith("-gf"):
        session = session.swapped()
    if method.startswith("twist"):
        seq, trace = twist_decode(session)
        return LineResult(
            sequence_to_text(seq), trace.passes[-1].candidates, trace
        )
    if method.startswith("rerank"):
        candidates = beam_search(session.model_f, session.source_f, session.beam)
        seq = rerank_decode(session, candidates)
        return LineResult(sequence_to_text(seq), candidates, None)
    raise ConfigError("unknown method %r" % method)


def decode_corpus(
    models: Mapping[str, LoadedModel],
    method: str,
    records: Sequence[Mapping[str, str]],
    beam: BeamConfig,
    guidance: GuidanceConfig,
    workers: int = 1,
) -> list[LineResult]:
    """Decode every record under one method, fail-soft per line, in order."""
    if method not in METHODS:
        # raise here, before the per-line net silently eats it
        raise ConfigError("unknown method %r" % method)

    def one(record: Mapping[str, str]) -> LineResult:
        try:
            return _decode_line(models, method, record, beam, guidance)
        except DuetError:
            return LineResult("", None, None, failed=True)

    if workers <= 1:
        return [one(record) for record in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, records))


def decode_lines(
    config: ExperimentConfig, lines: Sequence[str], method: str
) -> list[str]:
    """Decode bare source lines (the CLI's stdin mode); empty line on failure."""
    models = build_models(config)
    try:
        results = decode_corpus(
            models,
            method,
            [{"source": line} for line in lines],
            config.beam,
            config.guidance,
            workers=config.workers,
        )
    finally:
        close_models(models)
    return [r.hypothesis for r in results]


# --- experiment -------------------------------------------------------------


def _metric_value(
    metric: str, pairs: Sequence[EvalPair], smoothing: bool
) -> float:
    if metric == "bleu":
        return corpus_bleu(pairs, smoothing=smoothing)
    return rouge_l(pairs).f1


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _score_method(
    method: str,
    results: Sequence[LineResult],
    items: Sequence[DataItem],
    smoothing: bool,
) -> MethodResult:
    pairs = [
        EvalPair(r.hypothesis, item.references) for r, item in zip(results, items)
    ]
    return MethodResult(
        method=method,
        hypotheses=tuple(r.hypothesis for r in results),
        bleu=corpus_bleu(pairs, smoothing=smoothing),
        rouge=rouge_l(pairs),
        decode_failures=sum(1 for r in results if r.failed),
        lines=tuple(results),
    )


def run_experiment(
    config: ExperimentConfig,
    out: Optional[Path] = None,
    dataset: str = "eval",
) -> dict[str, MethodResult]:
    """Decode the dataset under every configured method and score it."""
    data = config.eval_data if dataset == "eval" else config.dev_data
    if data is None:
        raise ConfigError("config has no data.%s section" % dataset)
    items = load_dataset(data)
    if not items:
        raise ConfigError("dataset %r is empty" % dataset)
    _require_references(items, dataset)
    out_dir = Path(out) if out is not None else config.out
    models = build_models(config)
    try:
        by_method: dict[str, MethodResult] = {}
        for method in config.methods:
            results = decode_corpus(
                models,
                method,
                [item.record for item in items],
                config.beam,
                config.guidance,
                workers=config.workers,
            )
            by_method[method] = _score_method(
                method, results, items, config.bleu_smoothing
            )
    finally:
        close_models(models)

    if out_dir is not None:
        _write_experiment_tree(config, out_dir, dataset, items, by_method)
    return by_method


def _write_experiment_tree(
    config: ExperimentConfig,
    out_dir: Path,
    dataset: str,
    items: Sequence[DataItem],
    by_method: Mapping[str, MethodResult],
) -> None:
    rows = ["method\tdataset\tmetric\tvalue"]
    for method in config.methods:
        res = by_method[method]
        rows.append("%s\t%s\tbleu\t%.4f" % (method, dataset, res.bleu))
        rows.append("%s\t%s\trouge-l\t%.4f" % (method, dataset, res.rouge.f1))
        rows.append(
            "%s\t%s\tdecode_failures\t%d" % (method, dataset, res.decode_failures)
        )
    _write(out_dir / "results.tsv", "\n".join(rows) + "\n")

    for method, res in by_method.items():
        _write(
            out_dir / "hyps" / ("%s.txt" % method),
            "\n".join(res.hypotheses) + "\n",
        )
        for i, line in enumerate(res.lines):
            if line.candidates is not None:
                _write(
                    out_dir / "nbest" / method / ("%03d.nbest" % i),
                    format_nbest(line.candidates),
                )
            if line.trace is not None:
                for p, rec in enumerate(line.trace.passes):
                    _write(
                        out_dir
                        / "nbest"
                        / method
                        / ("%03d.%02d-%s.nbest" % (i, p, rec.label)),
                        format_nbest(rec.candidates),
                    )

    trace_methods = [
        m for m in config.methods if any(r.trace for r in by_method[m].lines)
    ]
    for method in trace_methods:
        lines = ["line\tpass\tlabel\titeration\tstep_evals\twall_us"]
        for i, line in enumerate(by_method[method].lines):
            if line.trace is None:
                continue
            for p, rec in enumerate(line.trace.passes):
                lines.append(
                    "%d\t%d\t%s\t%d\t%d\t%d"
                    % (i, p, rec.label, rec.iteration, rec.step_evals, rec.wall_us)
                )
        _write(out_dir / "traces" / ("%s.tsv" % method), "\n".join(lines) + "\n")

    if trace_methods:
        lines = ["method\titeration\tmetric\tvalue"]
        for method in trace_methods:
            res = by_method[method]
            for t in range(config.guidance.iterations + 1):
                hyps = []
                for line in res.lines:
                    if line.trace is None:
                        hyps.append("")
                        continue
                    chosen = select_candidate(
                        line.trace.f_sets()[t], config.guidance.selection
                    )
                    hyps.append(sequence_to_text(chosen.seq))
                pairs = [
                    EvalPair(h, item.references) for h, item in zip(hyps, items)
                ]
                lines.append(
                    "%s\t%d\tbleu\t%.4f"
                    % (method, t, corpus_bleu(pairs, smoothing=config.bleu_smoothing))
                )
                lines.append(
                    "%s\t%d\trouge-l\t%.4f" % (method, t, rouge_l(pairs).f1)
                )
        _write(out_dir / "iterations.tsv", "\n".join(lines) + "\n")


# --- lambda tuning ----------------------------------------------------------


@dataclass(frozen=True)
class TuneResult:
    lambda_f: float
    lambda_g: float
    value: float
    rows: tuple[tuple[float, float, float], ...]


def tune_lambda(config: ExperimentConfig, out: Optional[Path] = None) -> TuneResult:
    """Grid-search both guidance weights on the dev set.

    Every (lambda_f, lambda_g) pair from lambda_grid x lambda_grid is scored
    with the configured tune method and dev metric.  The best cell wins; ties
    within 1e-9 go to the smallest (lambda_f, lambda_g) pair, so a flat grid
    degrades to the weakest guidance rather than an arbitrary cell.
    """
    if config.dev_data is None:
        raise ConfigError("lambda tuning needs a data.dev section")
    items = load_dataset(config.dev_data)
    if not items:
        raise ConfigError("dev dataset is empty")
    _require_references(items, "dev")
    records = [item.record for item in items]
    models = build_models(config)
    rows: list[tuple[float, float, float]] = []
    try:
        for lam_f in config.lambda_grid:
            for lam_g in config.lambda_grid:
                guidance = replace(
                    config.guidance, lambda_f=lam_f, lambda_g=lam_g
                )
                results = decode_corpus(
                    models,
                    config.tune_method,
                    records,
                    config.beam,
                    guidance,
                    workers=config.workers,
                )
                pairs = [
                    EvalPair(r.hypothesis, item.references)
                    for r, item in zip(results, items)
                ]
                rows.append(
                    (
                        lam_f,
                        lam_g,
                        _metric_value(config.metric, pairs, config.bleu_smoothing),
                    )
                )
    finally:
        close_models(models)
    best_value = max(value for _, _, value in rows)
    best_f, best_g = min(
        (lam_f, lam_g)
        for lam_f, lam_g, value in rows
        if value >= best_value - 1e-9
    )
    chosen = next(v for lf, lg, v in rows if (lf, lg) == (best_f, best_g))
    out_dir = Path(out) if out is not None else config.out
    if out_dir is not None:
        lines = ["lambda_f\tlambda_g\t%s" % config.metric]
        lines += [
            "%r\t%r\t%.4f" % (lam_f, lam_g, value) for lam_f, lam_g, value in rows
        ]
        _write(out_dir / "grid.tsv", "\n".join(lines) + "\n")
    return TuneResult(best_f, best_g, chosen, tuple(rows))


# --- cost benchmarking ------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    method: str
    f_step_evals: int
    g_step_evals: int
    wall_s: float
    relative: float


def bench(config: ExperimentConfig, out: Optional[Path] = None) -> tuple[BenchRow, ...]:
    """Measure step evaluations and wall time per method over the eval set.

    isolation-f always runs (it is the 1.0x baseline for the relative
    column).  Runs single-threaded so the counters and timings mean what
    they say.
    """
    items = load_dataset(config.eval_data)
    if not items:
        raise ConfigError("eval dataset is empty")
    records = [item.record for item in items]
    methods = tuple(config.methods)
    if "isolation-f" not in methods:
        methods = ("isolation-f",) + methods
    models = build_models(config)
    counted = {
        name: LoadedModel(m.name, CountingScorer(m.scorer), m.view, m.config)
        for name, m in models.items()
    }
    raw = []
    try:
        for method in methods:
            for model in counted.values():
                model.scorer.reset()
            start = time.perf_counter()
            decode_corpus(
                counted, method, records, config.beam, config.guidance, workers=1
            )
            wall = time.perf_counter() - start
            raw.append(
                (
                    method,
                    counted["f"].scorer.step_calls,
                    counted["g"].scorer.step_calls,
                    wall,
                )
            )
    finally:
        close_models(models)
    baseline = next(wall for method, _, _, wall in raw if method == "isolation-f")
    rows = tuple(
        BenchRow(
            method=method,
            f_step_evals=f_calls,
            g_step_evals=g_calls,
            wall_s=wall,
            relative=wall / baseline if baseline > 0 else 0.0,
        )
        for method, f_calls, g_calls, wall in raw
    )
    out_dir = Path(out) if out is not None else config.out
    if out_dir is not None:
        lines = ["method\tf_step_evals\tg_step_evals\twall_s\trelative"]
        lines += [
            "%s\t%d\t%d\t%.6f\t%.3f"
            % (r.method, r.f_step_evals, r.g_step_evals, r.wall_s, r.relative)
            for r in rows
        ]
        _write(out_dir / "bench.tsv", "\n".join(lines) + "\n")
    return rows


# --- training-size sweep ----------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    size: int
    method: str
    value: float


def subsample_sweep(
    config: ExperimentConfig, out: Optional[Path] = None
) -> tuple[SweepRow, ...]:
    """Retrain one n-gram model on random corpus subsets of growing size.

    The designated model is retrained per size (its vocabulary and any
    learned merges come from the subset, like a real smaller-data run) while
    the partner model stays fixed; every configured method is then scored on
    the eval set.  Subsets are seeded draws, so the sweep is reproducible.
    """
    if config.subsample is None:
        raise ConfigError("config has no subsample section")
    sub = config.subsample
    target = config.models.get(sub.model)
    if target is None:
        raise ConfigError("subsample.model %r is not a configured model" % sub.model)
    if target.kind != "ngram" or target.corpus is None:
        raise ConfigError(
            "subsample.model %r must be an ngram model with a corpus" % sub.model
        )
    corpus = _read_lines(target.corpus, "corpus for model %r" % sub.model)
    items = load_dataset(config.eval_data)
    if not items:
        raise ConfigError("eval dataset is empty")
    _require_references(items, "eval")
    records = [item.record for item in items]
    for size in sub.sizes:
        if not 0 < size <= len(corpus):
            raise ConfigError(
                "subsample size %d is outside the corpus (%d lines)"
                % (size, len(corpus))
            )
    fixed = {
        name: build_model(cfg)
        for name, cfg in config.models.items()
        if name != sub.model
    }
    rows: list[SweepRow] = []
    try:
        for size in sub.sizes:
            rng = random.Random(config.seed * 1_000_003 + size)
            picked = sorted(rng.sample(range(len(corpus)), size))
            subset = [corpus[i] for i in picked]
            spec = _build_spec(target, subset)
            model = train_ngram(
                subset, spec, target.order, target.k_add, copy_bonus=target.copy_bonus
            )
            models = dict(fixed)
            models[sub.model] = LoadedModel(target.name, model, target.view, target)
            for method in config.methods:
                results = decode_corpus(
                    models,
                    method,
                    records,
                    config.beam,
                    config.guidance,
                    workers=config.workers,
                )
                pairs = [
                    EvalPair(r.hypothesis, item.references)
                    for r, item in zip(results, items)
                ]
                rows.append(
                    SweepRow(
                        size=size,
                        method=method,
                        value=_metric_value(
                            config.metric, pairs, config.bleu_smoothing
                        ),
                    )
                )
    finally:
        close_models(fixed)
    out_dir = Path(out) if out is not None else config.out
    if out_dir is not None:
        lines = ["size\tmethod\t%s" % config.metric]
        lines += ["%d\t%s\t%.4f" % (r.size, r.method, r.value) for r in rows]
        _write(out_dir / "sweep.tsv", "\n".join(lines) + "\n")
    return tuple(rows)


# --- training entry ---------------------------------------------------------


def train_models(config: ExperimentConfig) -> dict[str, Path]:
    """(Re)train every ngram model that has both a corpus and a model_path."""
    written: dict[str, Path] = {}
    for name, cfg in config.models.items():
        if cfg.kind != "ngram" or cfg.model_path is None:
            continue
        if cfg.corpus is None:
            raise ConfigError("ngram model %r has a model_path but no corpus" % name)
        lines = _read_lines(cfg.corpus, "corpus for model %r" % name)
        spec = _build_spec(cfg, lines)
        model = train_ngram(
            lines, spec, cfg.order, cfg.k_add, copy_bonus=cfg.copy_bonus
        )
        cfg.model_path.parent.mkdir(parents=True, exist_ok=True)
        model.save(cfg.model_path)
        written[name] = cfg.model_path
    if not written:
        raise ConfigError(
            "nothing to train: no ngram model declares corpus and model_path"
        )
    return written
