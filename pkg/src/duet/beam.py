"""Beam search with optional distance guidance, and its enumeration oracle.

The search keeps k continuing hypotheses per step and a finished set.  At each
step every hypothesis is expanded by every vocabulary token; expansions are
visited in descending search score (ties broken by the lexicographically
smaller token-id sequence).  EOS-ended expansions join the finished set, the
rest refill the beam until it again holds k hypotheses — first come, first
served.  The search stops when the finished set reaches k or the step limit M
is hit, at which point surviving hypotheses are force-finished by appending
EOS (charging its step score and, under guidance, its distance increment).

Under guidance, a hypothesis's search score at step n is

    model_score(prefix) - lam * min_distance(prefix, candidates)

i.e. the penalty is the distance of the whole prefix, recomputed each step
(tracked incrementally per candidate, which is equivalent because positional
distances only ever grow).  Zero guidance weight reduces the arithmetic to the
unguided search bit for bit.

exact_topk enumerates every EOS-terminated sequence with at most M content
tokens and ranks them exactly; it exists to catch the beam being wrong, so it
shares no search machinery with it.  A guard refuses enumerations above a
configurable node budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .distance import DistanceKind, min_distance
from .errors import (
    CapabilityError,
    DecodeFailure,
    EnumerationLimitError,
    SpecMismatchError,
    ValidationError,
)
from .scoring import Scorer
from .textspec import BOS_ID, EOS_ID, ModelTextSpec, TokenSequence


@dataclass(frozen=True)
class BeamConfig:
    """Search-shape knobs: step limit M, beam width k, length exponent alpha."""

    max_len: int
    beam_size: int = 5
    alpha: float = 1.0

    def __post_init__(self):
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if self.beam_size < 1:
            raise ValidationError("beam_size must be >= 1")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")


@dataclass(frozen=True)
class Guidance:
    """A rank-ordered candidate list with a weight and a distance variant.

    candidates must be non-empty, share one spec, and are typically the
    mapped outputs of the other model; lam >= 0 scales the distance penalty.
    """

    candidates: tuple[TokenSequence, ...]
    lam: float
    kind: DistanceKind = DistanceKind.HAMMING_MIN

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "kind", DistanceKind(self.kind))
        if not self.candidates:
            raise ValidationError("guidance needs at least one candidate")
        if self.lam < 0:
            raise ValidationError("guidance weight must be >= 0")
        spec = self.candidates[0].spec
        for cand in self.candidates[1:]:
            if cand.spec != spec:
                raise SpecMismatchError("guidance candidates bound to mixed specs")


def normalized_score(
    model_score: float, penalty: float, length: int, alpha: float
) -> float:
    """Ranking score: penalty-inclusive total divided by length^alpha."""
    return (model_score - penalty) / float(length) ** alpha


@dataclass(frozen=True)
class ScoredSequence:
    """A finished sequence with its score decomposition."""

    seq: TokenSequence
    model_score: float
    penalty: float
    normalized: float

    def sort_key(self):
        return (-self.normalized, self.seq.ids)


class CandidateSet:
    """Up to k finished sequences, sorted by descending normalized score."""

    __slots__ = ("items",)

    def __init__(self, items: Sequence[ScoredSequence]):
        items = tuple(items)
        if not items:
            raise ValidationError("a candidate set cannot be empty")
        spec = items[0].seq.spec
        for it in items:
            if not it.seq.has_eos:
                raise ValidationError("candidate %r does not end with EOS" % (it,))
            if it.seq.spec != spec:
                raise SpecMismatchError("candidates bound to mixed specs")
        if list(items) != sorted(items, key=ScoredSequence.sort_key):
            raise ValidationError("candidate set is not sorted")
        self.items = items

    @classmethod
    def ranked(cls, items: Sequence[ScoredSequence], k: int) -> "CandidateSet":
        """Sort and truncate to the top k."""
        return cls(sorted(items, key=ScoredSequence.sort_key)[:k])

    @property
    def spec(self) -> ModelTextSpec:
        return self.items[0].seq.spec

    def top(self) -> ScoredSequence:
        return self.items[0]

    @property
    def sequences(self) -> tuple[TokenSequence, ...]:
        return tuple(it.seq for it in self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[ScoredSequence]:
        return iter(self.items)

    def __getitem__(self, i) -> ScoredSequence:
        return self.items[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, CandidateSet):
            return NotImplemented
        return [
            (it.seq.ids, it.model_score, it.penalty, it.normalized) for it in self
        ] == [
            (it.seq.ids, it.model_score, it.penalty, it.normalized) for it in other
        ]

    def __repr__(self) -> str:
        return "CandidateSet(%d candidates, top=%r)" % (
            len(self.items),
            self.items[0].seq.token_strings(),
        )


# --- n-best list format -----------------------------------------------------


def format_nbest(candidates: CandidateSet) -> str:
    """index<TAB>normalized<TAB>model<TAB>penalty<TAB>space-joined tokens."""
    lines = []
    for i, it in enumerate(candidates):
        lines.append(
            "%d\t%r\t%r\t%r\t%s"
            % (i, it.normalized, it.model_score, it.penalty,
               " ".join(it.seq.token_strings()))
        )
    return "\n".join(lines) + "\n"


def save_nbest(candidates: CandidateSet, path: Union[str, Path]) -> None:
    Path(path).write_text(format_nbest(candidates), encoding="utf-8")


def parse_nbest(text: str, spec: ModelTextSpec) -> CandidateSet:
    items = []
    for line in text.splitlines():
        if not line:
            continue
        _idx, norm, model, penalty, tokens = line.split("\t")
        ids = tuple(spec.vocabulary.id(tok) for tok in tokens.split(" "))
        items.append(
            ScoredSequence(
                TokenSequence(ids, spec),
                model_score=float(model),
                penalty=float(penalty),
                normalized=float(norm),
            )
        )
    return CandidateSet(items)


def load_nbest(path: Union[str, Path], spec: ModelTextSpec) -> CandidateSet:
    return parse_nbest(Path(path).read_text(encoding="utf-8"), spec)


# --- the search itself ------------------------------------------------------


@dataclass
class _Hyp:
    ids: tuple[int, ...]
    model: float
    # cumulative positional distance to each tracked guidance candidate
    dists: Optional[np.ndarray]

    @property
    def penalty_base(self) -> float:
        return float(self.dists.min()) if self.dists is not None else 0.0


class _GuidanceState:
    """Per-pass precomputation for incremental distance tracking."""

    def __init__(self, guidance: Guidance, scorer: Scorer):
        for cand in guidance.candidates:
            if cand.spec != scorer.spec:
                raise SpecMismatchError(
                    "guidance candidates are not bound to the searching spec"
                )
        if guidance.kind is DistanceKind.HAMMING_ONE_BEST:
            tracked = guidance.candidates[:1]
        else:
            tracked = guidance.candidates
        self.cand_ids = [c.ids for c in tracked]
        self.lam = float(guidance.lam)
        self.kind = guidance.kind
        self.pair_dist: Optional[np.ndarray] = None
        if guidance.kind is DistanceKind.EMBEDDING_MIN:
            if scorer.embedding_dim is None:
                raise CapabilityError(
                    "embedding-min guidance needs a scorer with embeddings"
                )
            size = len(scorer.spec.vocabulary)
            emb = np.stack([scorer.embedding(i) for i in range(size)])
            diff = emb[:, None, :] - emb[None, :, :]
            self.pair_dist = np.sqrt((diff * diff).sum(axis=-1))

    def next_symbols(self, position: int) -> np.ndarray:
        """Token id each tracked candidate expects at position (EOS-padded)."""
        return np.array(
            [ids[position] if position < len(ids) else EOS_ID for ids in self.cand_ids]
        )

    def increments(self, position: int, vocab_size: int) -> np.ndarray:
        """(num_candidates, |V|) distance increase for emitting each token."""
        syms = self.next_symbols(position)
        if self.pair_dist is not None:
            return self.pair_dist[syms, :]
        tokens = np.arange(vocab_size)
        return (tokens[None, :] != syms[:, None]).astype(np.float64)


def _beam_pass(
    scorer: Scorer,
    source: str,
    config: BeamConfig,
    guidance: Optional[Guidance] = None,
) -> tuple[CandidateSet, int]:
    """Run one search pass; returns (candidates, score_step call count)."""
    spec = scorer.spec
    size = len(spec.vocabulary)
    k = config.beam_size
    gstate = _GuidanceState(guidance, scorer) if guidance is not None else None
    lam = gstate.lam if gstate is not None else 0.0

    root_dists = (
        np.zeros(len(gstate.cand_ids)) if gstate is not None else None
    )
    beam: list[_Hyp] = [_Hyp(ids=(), model=0.0, dists=root_dists)]
    finished: list[ScoredSequence] = []
    step_evals = 0
    done = False

    def finish(ids: tuple[int, ...], model: float, dists: Optional[np.ndarray]):
        penalty = lam * float(dists.min()) if dists is not None else 0.0
        seq = TokenSequence(ids, spec)
        finished.append(
            ScoredSequence(
                seq,
                model_score=model,
                penalty=penalty,
                normalized=normalized_score(model, penalty, len(ids), config.alpha),
            )
        )

    for n in range(1, config.max_len + 1):
        # Score and expand every hypothesis by every token.
        position = n - 1
        incr = gstate.increments(position, size) if gstate is not None else None
        scores_list = []
        search_list = []
        dist_list = []
        for hyp in beam:
            step = scorer.score_step(source, TokenSequence(hyp.ids, spec))
            step_evals += 1
            model_new = hyp.model + step
            if incr is not None:
                dists_new = hyp.dists[:, None] + incr
                search = model_new - lam * dists_new.min(axis=0)
            else:
                dists_new = None
                search = model_new
            scores_list.append(model_new)
            search_list.append(search)
            dist_list.append(dists_new)

        all_search = np.concatenate(search_list)
        valid = np.isfinite(all_search)
        n_valid = int(valid.sum())
        if n_valid == 0:
            beam = []  # every continuation is impossible; the beam empties
            break
        # At most k continuing pops plus one EOS per hypothesis can matter,
        # so pre-filter to the top 2k by score, keeping all boundary ties so
        # the lexicographic tie-break stays exact.
        budget = min(2 * k, n_valid)
        flat = np.where(valid, all_search, -np.inf)
        threshold = np.partition(flat, flat.size - budget)[flat.size - budget]
        picked = np.nonzero(flat >= threshold)[0]

        survivors = []
        for flat_idx in picked:
            parent = int(flat_idx) // size
            token = int(flat_idx) % size
            prefix = beam[parent].ids + (token,)
            survivors.append((-float(flat[flat_idx]), prefix, parent, token))
        survivors.sort(key=lambda e: (e[0], e[1]))

        next_beam: list[_Hyp] = []
        for neg_s, prefix, parent, token in survivors:
            if len(next_beam) >= k:
                break
            model_new = float(scores_list[parent][token])
            dists_new = (
                dist_list[parent][:, token].copy()
                if dist_list[parent] is not None
                else None
            )
            if token == EOS_ID:
                finish(prefix, model_new, dists_new)
                if len(finished) >= k:
                    done = True
                    break
            else:
                next_beam.append(_Hyp(ids=prefix, model=model_new, dists=dists_new))
        beam = next_beam
        if done or not beam:
            break

    if not done and len(finished) < k and beam:
        # Step limit reached: force-finish survivors by appending EOS.
        position = len(beam[0].ids)
        incr = gstate.increments(position, size) if gstate is not None else None
        for hyp in beam:
            step = scorer.score_step(source, TokenSequence(hyp.ids, spec))
            step_evals += 1
            eos_score = float(step[EOS_ID])
            if not np.isfinite(eos_score):
                continue  # this hypothesis has no legal ending
            dists_new = (
                hyp.dists + incr[:, EOS_ID] if hyp.dists is not None else None
            )
            finish(hyp.ids + (EOS_ID,), hyp.model + eos_score, dists_new)

    if not finished:
        raise DecodeFailure("beam search produced no finished hypothesis")
    return CandidateSet.ranked(finished, k), step_evals


def beam_search(
    scorer: Scorer,
    source: str,
    config: BeamConfig,
    guidance: Optional[Guidance] = None,
) -> CandidateSet:
    """Guided or plain beam search; see the module docstring for the rules."""
    candidates, _ = _beam_pass(scorer, source, config, guidance)
    return candidates


def exact_topk(
    scorer: Scorer,
    source: str,
    k: int,
    max_len: int,
    guidance: Optional[Guidance] = None,
    alpha: float = 1.0,
    limit: int = 1_000_000,
) -> CandidateSet:
    """Exhaustively rank every sequence with <= max_len content tokens.

    The oracle twin of beam_search: it scores each EOS-terminated sequence
    from scratch (model score by prefix accumulation, penalty from the pure
    distance functions) and returns the exact top k.  Search spaces larger
    than `limit` enumeration nodes are refused.
    """
    if k < 1 or max_len < 1:
        raise ValidationError("k and max_len must be >= 1")
    spec = scorer.spec
    size = len(spec.vocabulary)
    emit = [t for t in range(size) if t not in (BOS_ID, EOS_ID)]
    nodes = sum(len(emit) ** c for c in range(max_len + 1))
    if nodes > limit:
        raise EnumerationLimitError(
            "exact enumeration needs %d nodes, limit is %d" % (nodes, limit)
        )
    lam = float(guidance.lam) if guidance is not None else 0.0
    if guidance is not None:
        for cand in guidance.candidates:
            if cand.spec != spec:
                raise SpecMismatchError(
                    "guidance candidates are not bound to the searching spec"
                )

    finished: list[ScoredSequence] = []

    def ingest(ids: tuple[int, ...], model: float):
        if not np.isfinite(model):
            return
        seq = TokenSequence(ids, spec)
        if guidance is not None:
            penalty = lam * min_distance(
                seq, guidance.candidates, guidance.kind, scorer
            )
        else:
            penalty = 0.0
        finished.append(
            ScoredSequence(
                seq,
                model_score=model,
                penalty=penalty,
                normalized=normalized_score(model, penalty, len(ids), alpha),
            )
        )

    def walk(prefix: tuple[int, ...], model: float):
        step = scorer.score_step(source, TokenSequence(prefix, spec))
        ingest(prefix + (EOS_ID,), model + float(step[EOS_ID]))
        if len(prefix) < max_len:
            for token in emit:
                token_score = float(step[token])
                if np.isfinite(token_score):
                    walk(prefix + (token,), model + token_score)

    walk((), 0.0)
    if not finished:
        raise DecodeFailure("no sequence has a finite score")
    return CandidateSet.ranked(finished, k)
