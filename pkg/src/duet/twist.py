"""Orchestration: two generators decode in alternation, guiding each other.

The central routine runs three (or more) beam passes over one source record:

  1. model f decodes on its own;
  2. model g decodes while penalized by its distance to f's candidates,
     re-expressed under g's text interface;
  3. f decodes again, penalized by its distance to g's candidates.

Each direction has its own guidance weight (lambda_f guides g with f's
output, lambda_g guides f with g's), the g-then-f exchange can repeat T
times, and the final output is the best candidate of the last f pass.  A
trace records every pass's candidate set, scorer-call count and wall time.

Three baselines frame it: isolation (one model, no guidance), reranking
(f's candidates rescored by g — the limit the guided pass approaches as its
weight grows), and shallow fusion (per-step score sums, which requires the
two models to share a text interface exactly; the mismatch error it raises
on heterogeneous pairs is precisely what guidance-by-distance avoids).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .beam import (
    BeamConfig,
    CandidateSet,
    Guidance,
    ScoredSequence,
    _beam_pass,
    beam_search,
)
from .distance import DistanceKind
from .errors import DecodeFailure, MappingError, SpecMismatchError, ValidationError
from .scoring import Scorer, SourceView, StepScores, score_sequence
from .textspec import ModelTextSpec, TokenSequence, map_output

PASS_F_INIT = "f-init"
PASS_G_GUIDED = "g-guided"
PASS_F_GUIDED = "f-guided"


@dataclass(frozen=True)
class GuidanceConfig:
    """Weights and shape of the mutual-guidance exchange.

    lambda_f weights f's influence on g's guided pass; lambda_g weights g's
    influence on f's.  Defaults come from the standard tuning grid, with the
    g-side weight larger (guiding the final pass harder tends to win).
    iterations is the number of g/f exchanges (T >= 1).  selection picks the
    final candidate: "normalized" uses the penalty-inclusive length-normalized
    score; "raw-model" ranks by the raw model score alone.
    """

    lambda_f: float = 0.1
    lambda_g: float = 3.0
    iterations: int = 1
    distance: DistanceKind = DistanceKind.HAMMING_MIN
    selection: str = "normalized"

    def __post_init__(self):
        object.__setattr__(self, "distance", DistanceKind(self.distance))
        if self.lambda_f < 0 or self.lambda_g < 0:
            raise ValidationError("guidance weights must be >= 0")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.selection not in ("normalized", "raw-model"):
            raise ValidationError(
                "selection must be 'normalized' or 'raw-model', got %r"
                % (self.selection,)
            )


@dataclass(frozen=True)
class DecodeSession:
    """Everything needed to decode one source record with a model pair."""

    model_f: Scorer
    view_f: SourceView
    model_g: Scorer
    view_g: SourceView
    record: Mapping[str, str]
    beam: BeamConfig
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)

    @property
    def source_f(self) -> str:
        return self.view_f.apply(self.record)

    @property
    def source_g(self) -> str:
        return self.view_g.apply(self.record)

    def swapped(self) -> "DecodeSession":
        """The same session with the f and g roles exchanged."""
        return replace(
            self,
            model_f=self.model_g,
            view_f=self.view_g,
            model_g=self.model_f,
            view_g=self.view_f,
        )


@dataclass(frozen=True)
class PassRecord:
    """One beam pass inside a decode: what it produced and what it cost."""

    label: str
    iteration: int
    candidates: CandidateSet
    step_evals: int
    wall_us: int


@dataclass(frozen=True)
class DecodeTrace:
    """The full pass history of one orchestrated decode."""

    method: str
    passes: tuple[PassRecord, ...]

    @property
    def candidate_sets(self) -> tuple[CandidateSet, ...]:
        return tuple(p.candidates for p in self.passes)

    @property
    def total_step_evals(self) -> int:
        return sum(p.step_evals for p in self.passes)

    def f_sets(self) -> tuple[CandidateSet, ...]:
        """f's candidate sets by iteration: index t holds the t-th exchange."""
        return tuple(
            p.candidates for p in self.passes if p.label != PASS_G_GUIDED
        )


def _timed_pass(scorer, source, config, guidance, label, iteration, trace_so_far):
    start = time.monotonic()
    try:
        candidates, evals = _beam_pass(scorer, source, config, guidance)
    except DecodeFailure as exc:
        exc.trace = DecodeTrace(method="twist", passes=tuple(trace_so_far))
        raise
    wall_us = int((time.monotonic() - start) * 1e6)
    return PassRecord(
        label=label,
        iteration=iteration,
        candidates=candidates,
        step_evals=evals,
        wall_us=wall_us,
    )


def _map_candidates(
    candidates: CandidateSet, from_spec: ModelTextSpec, to_spec: ModelTextSpec
) -> tuple[TokenSequence, ...]:
    """Map a candidate set across specs, preserving rank order."""
    return tuple(map_output(seq, from_spec, to_spec) for seq in candidates.sequences)


def select_candidate(candidates: CandidateSet, selection: str) -> ScoredSequence:
    """Pick a set's output: by normalized rank, or by raw model score alone."""
    if selection == "raw-model":
        return min(candidates, key=lambda it: (-it.model_score, it.seq.ids))
    return candidates.top()


def twist_decode(session: DecodeSession) -> tuple[TokenSequence, DecodeTrace]:
    """Alternating guided decode; returns the final output and its trace.

    Pass sequence: f unguided, then T rounds of (g guided by f's mapped
    candidates at lambda_f, f guided by g's mapped candidates at lambda_g).
    The returned sequence is the selected candidate of the last f pass; the
    trace holds 1 + 2T candidate sets in pass order.  Beam failures abort
    with the partial trace attached; mapping errors propagate.
    """
    cfg = session.guidance
    f, g = session.model_f, session.model_g
    src_f, src_g = session.source_f, session.source_g
    passes: list[PassRecord] = []

    passes.append(
        _timed_pass(f, src_f, session.beam, None, PASS_F_INIT, 0, passes)
    )
    y_set = passes[-1].candidates
    for t in range(1, cfg.iterations + 1):
        toward_g = Guidance(
            _map_candidates(y_set, f.spec, g.spec), cfg.lambda_f, cfg.distance
        )
        passes.append(
            _timed_pass(g, src_g, session.beam, toward_g, PASS_G_GUIDED, t, passes)
        )
        z_set = passes[-1].candidates
        toward_f = Guidance(
            _map_candidates(z_set, g.spec, f.spec), cfg.lambda_g, cfg.distance
        )
        passes.append(
            _timed_pass(f, src_f, session.beam, toward_f, PASS_F_GUIDED, t, passes)
        )
        y_set = passes[-1].candidates

    trace = DecodeTrace(method="twist", passes=tuple(passes))
    return select_candidate(y_set, cfg.selection).seq, trace


def isolation_decode(scorer: Scorer, source: str, config: BeamConfig) -> TokenSequence:
    """Single-model unguided decode: the best candidate of one beam pass."""
    return beam_search(scorer, source, config).top().seq


def rerank_decode(
    session: DecodeSession, candidates: Optional[CandidateSet] = None
) -> TokenSequence:
    """f generates, g chooses: rescore f's candidates with g alone.

    Each of f's candidates is mapped to g's interface and scored by g with
    length normalization (the same exponent the beam ranks with); the
    original (pre-mapping) candidate with the best g score wins.  Ties keep
    f's own ranking order, so a constant g leaves f's choice unchanged.
    Candidates whose mapping fails are skipped; if all fail, the decode
    fails.  Pass candidates to rescore an existing set (it must come from f
    under the session's beam config) instead of generating one here.
    """
    f, g = session.model_f, session.model_g
    if candidates is None:
        candidates = beam_search(f, session.source_f, session.beam)
    src_g = session.source_g
    alpha = session.beam.alpha
    best: Optional[TokenSequence] = None
    best_score = -np.inf
    for item in candidates:
        try:
            mapped = map_output(item.seq, f.spec, g.spec).with_eos()
        except MappingError:
            continue
        g_score = score_sequence(g, src_g, mapped) / float(len(mapped)) ** alpha
        if best is None or g_score > best_score:
            best, best_score = item.seq, g_score
    if best is None:
        raise DecodeFailure("no candidate of f survived mapping to g")
    return best


class FusedScorer(Scorer):
    """Elementwise sum of two scorers sharing one text interface."""

    def __init__(self, first: Scorer, second: Scorer, source_second: Optional[str] = None):
        if first.spec != second.spec:
            raise SpecMismatchError(
                "shallow fusion requires an identical shared text interface "
                "(same vocabulary, scheme and order); these models differ, "
                "which is exactly the situation guidance-by-distance handles"
            )
        self._first = first
        self._second = second
        self._source_second = source_second

    @property
    def spec(self) -> ModelTextSpec:
        return self._first.spec

    def _step_scores(self, source: str, prefix: TokenSequence) -> StepScores:
        source_second = (
            source if self._source_second is None else self._source_second
        )
        return self._first.score_step(source, prefix) + self._second.score_step(
            source_second, prefix
        )


def shallow_fusion_decode(
    f: Scorer,
    g: Scorer,
    source: str,
    config: BeamConfig,
    source_g: Optional[str] = None,
) -> TokenSequence:
    """Decode with per-step score sums f+g.  Demands identical specs.

    source conditions f; source_g (defaulting to source) conditions g, for
    session setups where the two models read different views of the record.
    """
    fused = FusedScorer(f, g, source_second=source_g)
    return beam_search(fused, source, config).top().seq
