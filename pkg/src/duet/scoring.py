"""Scorers: the next-token scoring interface and its in-process implementations.

A Scorer answers one question: given a conditioning source text and a partial
output prefix, what log-domain score does each vocabulary token get as the next
step?  Scores are additive over steps and need not be normalized
probabilities.  A step-score vector has one float64 entry per vocabulary id;
entries may be -inf ("this continuation is impossible"), and the BOS entry is
always -inf because BOS is never generated.

Two in-process scorers are provided: NGramModel (an add-k smoothed,
interpolated-backoff n-gram language model trained from a corpus) and
TableScorer (an explicit (source, prefix) -> scores table used for exact tests
and synthetic experiments).  A remote client implementing the same interface
lives in duet.remote.
"""

from __future__ import annotations

import abc
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    CapabilityError,
    ModelFileError,
    ValidationError,
)
from .textspec import (
    BOS_ID,
    EOS_ID,
    GenerationOrder,
    ModelTextSpec,
    TokenSequence,
    encode_tokens,
    require_binding,
    spec_from_dict,
    spec_to_dict,
    tokenize,
)

# A step-score vector is a plain float64 numpy array of length |vocabulary|.
StepScores = np.ndarray


class Scorer(abc.ABC):
    """Deterministic next-token scorer bound to one ModelTextSpec."""

    @property
    @abc.abstractmethod
    def spec(self) -> ModelTextSpec:
        """The text interface this scorer reads and writes."""

    @abc.abstractmethod
    def _step_scores(self, source: str, prefix: TokenSequence) -> StepScores:
        """Subclass hook: raw scores for every vocabulary id."""

    def score_step(self, source: str, prefix: TokenSequence) -> StepScores:
        """Score every possible next token after prefix.

        The prefix must be bound to this scorer's spec and must not contain
        EOS (a finished sequence has no next step).  The returned vector is a
        fresh array with the BOS entry forced to -inf.
        """
        require_binding(prefix, self.spec, "score_step prefix")
        if prefix.has_eos:
            raise ValidationError("cannot score a continuation of a finished sequence")
        scores = np.asarray(
            self._step_scores(source, prefix), dtype=np.float64
        ).copy()
        if scores.shape != (len(self.spec.vocabulary),):
            raise ValidationError(
                "step scores have shape %r, expected (%d,)"
                % (scores.shape, len(self.spec.vocabulary))
            )
        if np.isnan(scores).any() or np.isposinf(scores).any():
            raise ValidationError("step scores must be finite or -inf")
        scores[BOS_ID] = -np.inf
        return scores

    @property
    def embedding_dim(self) -> Optional[int]:
        """Dimension of token embeddings, or None when not provided."""
        return None

    def embedding(self, token_id: int) -> np.ndarray:
        """Token embedding vector; raises CapabilityError when unsupported."""
        raise CapabilityError(
            "%s does not provide token embeddings" % type(self).__name__
        )


def score_sequence(scorer: Scorer, source: str, seq: TokenSequence) -> float:
    """Total score of a finished sequence: sum of step scores, EOS included.

    Accumulates left-to-right in generation order so the arithmetic matches
    what an incremental search would compute.
    """
    require_binding(seq, scorer.spec, "score_sequence input")
    if not seq.has_eos:
        raise ValidationError("score_sequence expects a sequence ending in EOS")
    total = 0.0
    for pos in range(len(seq.ids)):
        prefix = TokenSequence(seq.ids[:pos], scorer.spec)
        total += float(scorer.score_step(source, prefix)[seq.ids[pos]])
    return total


@dataclass(frozen=True)
class SourceView:
    """A named projection from a structured source record to conditioning text.

    Different scorers may condition on different parts of the same record
    (e.g. one on the abstract, another on abstract plus first section); a view
    names the fields it reads and joins them with single spaces.
    """

    name: str
    fields: tuple[str, ...]
    joiner: str = " "

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise ValidationError("source view %r names no fields" % self.name)

    def apply(self, record: Mapping[str, str]) -> str:
        missing = [f for f in self.fields if f not in record]
        if missing:
            raise ValidationError(
                "record lacks fields %r required by view %r" % (missing, self.name)
            )
        return self.joiner.join(record[f] for f in self.fields)


class TableScorer(Scorer):
    """Scores looked up from an explicit (source, prefix) table.

    Unlisted (source, prefix) pairs fall back to a constant default vector.
    Deterministic by construction; the workhorse of exact oracle tests.
    Optionally carries a full embedding table (|V| x d) to support
    embedding-based guidance distances.
    """

    def __init__(
        self,
        spec: ModelTextSpec,
        entries: Mapping[tuple[str, tuple[int, ...]], Sequence[float]] | None = None,
        default: float = -1.0,
        embeddings: Optional[np.ndarray] = None,
    ):
        self._spec = spec
        size = len(spec.vocabulary)
        self._table: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}
        for (source, prefix), scores in (entries or {}).items():
            vec = np.asarray(scores, dtype=np.float64)
            if vec.shape != (size,):
                raise ValidationError(
                    "table entry for %r has %d scores, vocabulary has %d"
                    % ((source, prefix), vec.shape[0], size)
                )
            self._table[(source, tuple(int(i) for i in prefix))] = vec
        self._default = float(default)
        if embeddings is not None:
            embeddings = np.asarray(embeddings, dtype=np.float64)
            if embeddings.ndim != 2 or embeddings.shape[0] != size:
                raise ValidationError(
                    "embeddings must be a (|V|, d) matrix, got %r"
                    % (embeddings.shape,)
                )
        self._embeddings = embeddings

    @property
    def spec(self) -> ModelTextSpec:
        return self._spec

    @property
    def default(self) -> float:
        return self._default

    def entries(self) -> dict[tuple[str, tuple[int, ...]], np.ndarray]:
        """Copy of the underlying table (for persistence)."""
        return dict(self._table)

    def _step_scores(self, source: str, prefix: TokenSequence) -> StepScores:
        vec = self._table.get((source, prefix.ids))
        if vec is None:
            return np.full(len(self._spec.vocabulary), self._default)
        return vec

    @property
    def embedding_dim(self) -> Optional[int]:
        return None if self._embeddings is None else int(self._embeddings.shape[1])

    def embedding(self, token_id: int) -> np.ndarray:
        if self._embeddings is None:
            raise CapabilityError("this TableScorer carries no embeddings")
        return self._embeddings[int(token_id)]

    # --- persistence (JSON, shared with the remote bridge) ------------------

    FORMAT = "duet-table"
    VERSION = 1

    def save(self, path: Union[str, Path]) -> None:
        payload = {
            "format": self.FORMAT,
            "version": self.VERSION,
            "spec": spec_to_dict(self._spec),
            "default": self._default,
            "entries": [
                {
                    "source": source,
                    "prefix": list(prefix),
                    "scores": {str(i): float(v) for i, v in enumerate(vec)},
                }
                for (source, prefix), vec in sorted(self._table.items())
            ],
            "embeddings": None
            if self._embeddings is None
            else [[float(x) for x in row] for row in self._embeddings],
        }
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        payload["checksum"] = hashlib.sha256(body.encode("utf-8")).hexdigest()
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TableScorer":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelFileError("cannot read table file %s: %s" % (path, exc))
        if payload.get("format") != cls.FORMAT:
            raise ModelFileError("%s is not a %s file" % (path, cls.FORMAT))
        if payload.get("version") != cls.VERSION:
            raise ModelFileError(
                "table file version %r, expected %d"
                % (payload.get("version"), cls.VERSION)
            )
        checksum = payload.pop("checksum", None)
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        if checksum != hashlib.sha256(body.encode("utf-8")).hexdigest():
            raise ModelFileError("table file %s failed its checksum" % path)
        spec = spec_from_dict(payload["spec"])
        size = len(spec.vocabulary)
        entries = {}
        for entry in payload["entries"]:
            vec = np.full(size, float(payload["default"]))
            for tid, score in entry["scores"].items():
                vec[int(tid)] = float(score)
            entries[(entry["source"], tuple(entry["prefix"]))] = vec
        embeddings = payload.get("embeddings")
        return cls(
            spec,
            entries,
            default=float(payload["default"]),
            embeddings=None if embeddings is None else np.asarray(embeddings),
        )


class NGramModel(Scorer):
    """Add-k smoothed n-gram language model with interpolated backoff.

    Counts are kept for every order m <= order.  A step score is
    log sum_m w_m * p_m(token | last m-1 tokens), where p_m is the add-k
    estimate over the |V|-1 non-BOS tokens and the mixture weights w_m are
    proportional to how often each context was observed in training (an unseen
    longer context contributes nothing, which is the backoff).  Streams are
    BOS-padded on the left and EOS-terminated, so sentence position is part of
    the shorter contexts near the start.

    When copy_bonus is non-zero, tokens whose surface form appears among the
    source's whitespace-separated words receive the bonus additively; scores
    are then clamped to <= 0 so they stay non-positive like every built-in
    scorer.
    """

    def __init__(
        self,
        spec: ModelTextSpec,
        order: int,
        k_add: float,
        counts: Mapping[int, Mapping[tuple[int, ...], Mapping[int, int]]],
        copy_bonus: float = 0.0,
    ):
        if order < 1:
            raise ValidationError("order must be >= 1")
        if k_add <= 0:
            raise ValidationError("k_add must be > 0 (zero breaks smoothing)")
        self._spec = spec
        self._order = int(order)
        self._k = float(k_add)
        self._copy_bonus = float(copy_bonus)
        # counts[m][context][token] -> int, context length m-1
        self._counts: dict[int, dict[tuple[int, ...], dict[int, int]]] = {
            m: {tuple(ctx): dict(toks) for ctx, toks in by_ctx.items()}
            for m, by_ctx in counts.items()
        }
        for m in range(1, self._order + 1):
            self._counts.setdefault(m, {})
        self._totals: dict[int, dict[tuple[int, ...], int]] = {
            m: {ctx: sum(toks.values()) for ctx, toks in by_ctx.items()}
            for m, by_ctx in self._counts.items()
        }
        self._copy_cache: dict[str, np.ndarray] = {}

    @property
    def spec(self) -> ModelTextSpec:
        return self._spec

    @property
    def order(self) -> int:
        return self._order

    @property
    def k_add(self) -> float:
        return self._k

    @property
    def copy_bonus(self) -> float:
        return self._copy_bonus

    def count(self, m: int, context: Sequence[int], token: int) -> int:
        """Raw training count of token after context under order m."""
        return self._counts.get(m, {}).get(tuple(context), {}).get(int(token), 0)

    def context_total(self, m: int, context: Sequence[int]) -> int:
        return self._totals.get(m, {}).get(tuple(context), 0)

    def _copy_vector(self, source: str) -> np.ndarray:
        vec = self._copy_cache.get(source)
        if vec is None:
            words = set(source.split())
            vec = np.array(
                [
                    self._copy_bonus if tok in words else 0.0
                    for tok in self._spec.vocabulary.entries
                ]
            )
            self._copy_cache[source] = vec
        return vec

    def _step_scores(self, source: str, prefix: TokenSequence) -> StepScores:
        size = len(self._spec.vocabulary)
        padded = (BOS_ID,) * (self._order - 1) + prefix.ids
        smooth_slots = size - 1  # BOS is never a predicted outcome
        probs = np.zeros(size)
        weights = []
        contexts = []
        for m in range(1, self._order + 1):
            ctx = padded[len(padded) - (m - 1) :] if m > 1 else ()
            total = self._totals.get(m, {}).get(ctx, 0)
            weights.append(float(total))
            contexts.append((m, ctx, total))
        wsum = sum(weights)
        if wsum <= 0:
            raise ValidationError("n-gram model has no training counts")
        for (m, ctx, total), weight in zip(contexts, weights):
            if weight == 0.0:
                continue
            vec = np.full(size, self._k)
            for token, n in self._counts[m].get(ctx, {}).items():
                vec[token] += n
            vec /= total + self._k * smooth_slots
            probs += (weight / wsum) * vec
        scores = np.log(probs, out=np.full(size, -np.inf), where=probs > 0)
        if self._copy_bonus:
            scores = np.minimum(scores + self._copy_vector(source), 0.0)
        return scores

    # --- persistence --------------------------------------------------------

    MAGIC = "duet-ngram"
    VERSION = 1

    def save(self, path: Union[str, Path]) -> None:
        """Write the versioned, checksummed, byte-stable model file.

        Layout: a magic/version line, a JSON header (sorted keys), one line
        per raw count sorted by (order, context, token), and a final sha256
        line over everything before it.
        """
        header = {
            "copy_bonus": self._copy_bonus,
            "k_add": self._k,
            "order": self._order,
            "spec": spec_to_dict(self._spec),
        }
        lines = ["%s v%d" % (self.MAGIC, self.VERSION)]
        lines.append(json.dumps(header, sort_keys=True, separators=(",", ":")))
        for m in sorted(self._counts):
            for ctx in sorted(self._counts[m]):
                for token in sorted(self._counts[m][ctx]):
                    lines.append(
                        "count\t%d\t%s\t%d\t%d"
                        % (
                            m,
                            " ".join(str(i) for i in ctx),
                            token,
                            self._counts[m][ctx][token],
                        )
                    )
        body = "\n".join(lines) + "\n"
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        Path(path).write_text(body + "sha256\t%s\n" % digest, encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NGramModel":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ModelFileError("cannot read model file %s: %s" % (path, exc))
        lines = text.splitlines()
        if not lines or not lines[0].startswith(cls.MAGIC):
            raise ModelFileError("%s is not a %s file" % (path, cls.MAGIC))
        if lines[0] != "%s v%d" % (cls.MAGIC, cls.VERSION):
            raise ModelFileError(
                "model file version %r, expected v%d" % (lines[0], cls.VERSION)
            )
        if len(lines) < 3 or not lines[-1].startswith("sha256\t"):
            raise ModelFileError("model file %s is truncated" % path)
        body = "\n".join(lines[:-1]) + "\n"
        digest = lines[-1].split("\t", 1)[1]
        if hashlib.sha256(body.encode("utf-8")).hexdigest() != digest:
            raise ModelFileError("model file %s failed its checksum" % path)
        try:
            header = json.loads(lines[1])
        except json.JSONDecodeError as exc:
            raise ModelFileError("bad model header in %s: %s" % (path, exc))
        counts: dict[int, dict[tuple[int, ...], dict[int, int]]] = {}
        for line in lines[2:-1]:
            kind, m, ctx, token, n = line.split("\t")
            if kind != "count":
                raise ModelFileError("unexpected record %r in %s" % (kind, path))
            context = tuple(int(i) for i in ctx.split()) if ctx else ()
            counts.setdefault(int(m), {}).setdefault(context, {})[int(token)] = int(n)
        return cls(
            spec_from_dict(header["spec"]),
            order=header["order"],
            k_add=header["k_add"],
            counts=counts,
            copy_bonus=header.get("copy_bonus", 0.0),
        )


def train_ngram(
    corpus: Iterable[str],
    spec: ModelTextSpec,
    order: int,
    k_add: float,
    copy_bonus: float = 0.0,
) -> NGramModel:
    """Count n-grams of every order <= order over the tokenized corpus.

    Each line is tokenized under spec.scheme, id-encoded with UNK fallback,
    reversed when the spec generates right-to-left (the model sees streams in
    generation order), EOS-terminated, and BOS-padded on the left.
    """
    if order < 1:
        raise ValidationError("order must be >= 1")
    counts: dict[int, dict[tuple[int, ...], dict[int, int]]] = {
        m: {} for m in range(1, order + 1)
    }
    for line in corpus:
        tokens = tokenize(line, spec.scheme)
        ids = list(encode_tokens(tokens, spec))
        if spec.order is GenerationOrder.RIGHT_TO_LEFT:
            ids.reverse()
        stream = [BOS_ID] * (order - 1) + ids + [EOS_ID]
        start = order - 1
        for pos in range(start, len(stream)):
            token = stream[pos]
            for m in range(1, order + 1):
                ctx = tuple(stream[pos - (m - 1) : pos])
                by_ctx = counts[m].setdefault(ctx, {})
                by_ctx[token] = by_ctx.get(token, 0) + 1
    return NGramModel(spec, order, k_add, counts, copy_bonus=copy_bonus)


class CountingScorer(Scorer):
    """Transparent wrapper that counts score_step calls (for cost accounting)."""

    def __init__(self, inner: Scorer):
        self.inner = inner
        self.step_calls = 0

    @property
    def spec(self) -> ModelTextSpec:
        return self.inner.spec

    def _step_scores(self, source: str, prefix: TokenSequence) -> StepScores:
        self.step_calls += 1
        return self.inner._step_scores(source, prefix)

    def reset(self) -> None:
        self.step_calls = 0

    @property
    def embedding_dim(self) -> Optional[int]:
        return self.inner.embedding_dim

    def embedding(self, token_id: int) -> np.ndarray:
        return self.inner.embedding(token_id)
