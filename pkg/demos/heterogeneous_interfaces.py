"""Pairing models that do not share a text interface.

Shallow fusion adds two models' step scores, which only type-checks when
both use the same vocabulary, tokenization and generation order.  Guidance
by distance never looks inside the partner's steps — candidates cross the
interface boundary as finished text and are re-tokenized on the other side
— so a whitespace left-to-right model can steer a character-level
right-to-left model and vice versa.

The two scorers here are hand-built prefix tables, each believing two
sentences: its own favourite, and a common ground truth it ranks second.
f reads words left to right, so its head is trustworthy and its tail is
sloppy; g reads characters right to left and is the mirror image.  Alone,
each outputs its favourite and is half wrong.  Guided, the shared sentence
is the only candidate close to both proposal sets, and both passes land
on it — without the models ever agreeing on what a token is.

Run:  python3 demos/heterogeneous_interfaces.py
"""

import numpy as np

from duet.beam import BeamConfig
from duet.errors import SpecMismatchError
from duet.scoring import SourceView, TableScorer
from duet.textspec import (
    EOS_ID,
    CharacterScheme,
    ModelTextSpec,
    WhitespaceScheme,
    sequence_to_text,
    text_to_sequence,
    vocabulary_from_corpus,
)
from duet.twist import (
    DecodeSession,
    GuidanceConfig,
    isolation_decode,
    shallow_fusion_decode,
    twist_decode,
)

TRUTH = "the cat sat on the mat"
F_FAVOURITE = "the cat sat on the rug"  # right head, wrong tail
G_FAVOURITE = "the dog sat on the mat"  # wrong head, right tail
SOURCE = "describe the scene"

VIEW = SourceView("plain", ("source",))


def belief_table(spec, source, beliefs, floor=-8.0):
    """A prefix-tree table: each believed sentence scores a flat per-step
    rate along its path, everything off the paths drops to the floor.
    Stopping early is kept strictly below the floor so that stray finishes
    never crowd out the believed paths before they reach their own EOS."""
    entries = {}
    size = len(spec.vocabulary)
    for text, per_step in beliefs.items():
        ids = text_to_sequence(text, spec).with_eos().ids
        for i, token in enumerate(ids):
            key = (source, ids[:i])
            vec = entries.get(key)
            if vec is None:
                vec = np.full(size, floor)
                vec[EOS_ID] = floor - 1.0
                entries[key] = vec
            vec[token] = max(vec[token], per_step)
    return TableScorer(spec, entries, default=floor)


def main():
    texts = [TRUTH, F_FAVOURITE, G_FAVOURITE]
    word_spec = ModelTextSpec(
        vocabulary_from_corpus(texts, WhitespaceScheme()),
        WhitespaceScheme(),
        "left-to-right",
        name="words",
    )
    char_spec = ModelTextSpec(
        vocabulary_from_corpus(texts, CharacterScheme()),
        CharacterScheme(),
        "right-to-left",
        name="chars",
    )
    f = belief_table(word_spec, SOURCE, {F_FAVOURITE: -0.15, TRUTH: -0.25})
    g = belief_table(char_spec, SOURCE, {G_FAVOURITE: -0.05, TRUTH: -0.10})
    print("f: %2d-token whitespace vocabulary, left-to-right" % len(word_spec.vocabulary))
    print("g: %2d-token character vocabulary,  right-to-left" % len(char_spec.vocabulary))
    print()

    beam = BeamConfig(max_len=30, beam_size=4)

    try:
        shallow_fusion_decode(f, g, SOURCE, beam)
    except SpecMismatchError as exc:
        print("fusion refuses the pair:\n  %s" % exc)
    print()

    session = DecodeSession(
        model_f=f,
        view_f=VIEW,
        model_g=g,
        view_g=VIEW,
        record={"source": SOURCE},
        beam=beam,
        guidance=GuidanceConfig(lambda_f=1.0, lambda_g=1.0),
    )
    out, trace = twist_decode(session)
    print("f alone:   %s   (trusts its head)" % sequence_to_text(isolation_decode(f, SOURCE, beam)))
    print("g alone:   %s   (trusts its tail)" % sequence_to_text(isolation_decode(g, SOURCE, beam)))
    print("together:  %s" % sequence_to_text(out))
    print()
    print("the exchange, with each pass top in its own model's tokens:")
    for record in trace.passes:
        top = record.candidates.top()
        print("  %-9s %-26r %s" % (
            record.label,
            sequence_to_text(top.seq),
            "|".join(top.seq.token_strings()),
        ))
    print()
    print("only text crossed the interface; neither side saw the other's ids.")


if __name__ == "__main__":
    main()
