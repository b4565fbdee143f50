"""Shared builders: tiny specs and fully-populated random table scorers."""

from __future__ import annotations

from itertools import product

import numpy as np

from duet.scoring import TableScorer
from duet.textspec import (
    BOS_ID,
    EOS_ID,
    ModelTextSpec,
    TokenSequence,
    Vocabulary,
    WhitespaceScheme,
)


def make_spec(tokens=("a", "b", "c"), order="left-to-right", name=""):
    return ModelTextSpec(
        Vocabulary.from_tokens(tuple(tokens)), WhitespaceScheme(), order, name=name
    )


def seq(spec, *ids):
    return TokenSequence(tuple(ids), spec)


def random_table(spec, rng, depth, sources=("s",), low=-9.0, high=-0.01, embeddings=None):
    """A table with an independent random score vector for every prefix.

    Populates every emittable-token prefix up to `depth` content tokens, so a
    search never falls through to the constant default inside that horizon.
    """
    size = len(spec.vocabulary)
    emit = [t for t in range(size) if t not in (BOS_ID, EOS_ID)]
    entries = {}
    for source in sources:
        for length in range(depth + 1):
            for prefix in product(emit, repeat=length):
                entries[(source, prefix)] = rng.uniform(low, high, size=size)
    return TableScorer(spec, entries, default=-7.0, embeddings=embeddings)
