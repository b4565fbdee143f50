"""Prefix distances between a search hypothesis and guidance candidates.

A guided search pass charges each partial hypothesis the distance between its
prefix and the closest candidate from the other model's output.  Distances are
positional and prefix-truncated: position i of the candidate is compared for
every i up to the prefix length, with EOS standing in for positions beyond the
candidate's end.  A candidate's own trailing EOS therefore behaves exactly
like the padding, and candidates longer than the search's maximum length are
truncated implicitly (positions past the prefix are never inspected).

Three variants: the plain Hamming count against the closest candidate
(hamming-min, the default), the same count against only the top-ranked
candidate (hamming-one-best), and the closest candidate under summed embedding
distances (embedding-min, which needs a scorer that serves embeddings).
"""

from __future__ import annotations

import enum
from typing import Optional, Sequence

import numpy as np

from .errors import CapabilityError, SpecMismatchError, ValidationError
from .scoring import Scorer
from .textspec import EOS_ID, TokenSequence


class DistanceKind(str, enum.Enum):
    HAMMING_MIN = "hamming-min"
    HAMMING_ONE_BEST = "hamming-one-best"
    EMBEDDING_MIN = "embedding-min"


def candidate_symbol(candidate: TokenSequence, position: int) -> int:
    """Token id of candidate at position (0-based), EOS beyond its length."""
    if position < len(candidate.ids):
        return candidate.ids[position]
    return EOS_ID


def hamming_prefix_distance(prefix: TokenSequence, candidate: TokenSequence) -> int:
    """Count of positions i < len(prefix) where prefix and candidate disagree."""
    if prefix.spec != candidate.spec:
        raise SpecMismatchError("distance operands bound to different specs")
    return sum(
        1
        for i, tid in enumerate(prefix.ids)
        if tid != candidate_symbol(candidate, i)
    )


def embedding_prefix_distance(
    prefix: TokenSequence, candidate: TokenSequence, scorer: Scorer
) -> float:
    """Sum over positions of the L2 distance between token embeddings."""
    if prefix.spec != candidate.spec:
        raise SpecMismatchError("distance operands bound to different specs")
    if scorer.embedding_dim is None:
        raise CapabilityError("embedding distance needs a scorer with embeddings")
    total = 0.0
    for i, tid in enumerate(prefix.ids):
        other = candidate_symbol(candidate, i)
        diff = scorer.embedding(tid) - scorer.embedding(other)
        total += float(np.linalg.norm(diff))
    return total


def min_distance(
    prefix: TokenSequence,
    candidates: Sequence[TokenSequence],
    kind: DistanceKind = DistanceKind.HAMMING_MIN,
    scorer: Optional[Scorer] = None,
) -> float:
    """Distance from prefix to a non-empty, rank-ordered candidate list.

    hamming-min and embedding-min take the minimum over all candidates;
    hamming-one-best looks only at candidates[0] (the top-ranked one).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValidationError("min_distance over an empty candidate list")
    kind = DistanceKind(kind)
    if kind is DistanceKind.HAMMING_MIN:
        return float(min(hamming_prefix_distance(prefix, c) for c in candidates))
    if kind is DistanceKind.HAMMING_ONE_BEST:
        return float(hamming_prefix_distance(prefix, candidates[0]))
    if kind is DistanceKind.EMBEDDING_MIN:
        if scorer is None:
            raise CapabilityError("embedding distance needs the scorer argument")
        return min(embedding_prefix_distance(prefix, c, scorer) for c in candidates)
    raise ValidationError("unknown distance kind %r" % (kind,))
