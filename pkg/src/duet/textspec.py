"""Text interfaces: vocabularies, tokenization schemes, and cross-model mapping.

Every generator in this package declares how it reads and writes text through a
ModelTextSpec: a vocabulary with three reserved control symbols, a tokenization
scheme (whitespace, character, or learned subword merges), and a generation
order (left-to-right or right-to-left).  Token id sequences are only meaningful
relative to a spec, so TokenSequence carries its spec and every consumer checks
the binding instead of trusting raw integers.

map_output is the bridge between two specs: it lowers a sequence back to plain
text under the producing spec and re-reads it under the consuming one.  It is
deliberately lossy in exactly the documented ways (out-of-vocabulary tokens
become UNK, generation order is re-applied) and lossless otherwise; the
round-trip laws are enforced by the test suite.

Inputs are expected to be whitespace-normalized (single spaces, no leading or
trailing whitespace, one sentence per string).  normalize_text is provided for
callers with raw text; the operations here do not silently re-normalize.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .errors import MappingError, SpecMismatchError, ValidationError

# Reserved vocabulary slots.  BOS is never generated and never appears in a
# TokenSequence; EOS may only appear as the final id; UNK is an ordinary
# emittable token that absorbs out-of-vocabulary surface forms.
BOS_ID = 0
EOS_ID = 1
UNK_ID = 2

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
RESERVED_TOKENS = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

# Explicit space symbol used by the character scheme.  Multi-character on
# purpose: single characters tokenize to themselves, so no input character can
# collide with it.
SPACE_TOKEN = "<space>"


def normalize_text(text: str) -> str:
    """Collapse runs of whitespace to single spaces and strip the ends."""
    return " ".join(text.split())


class Vocabulary:
    """An ordered token inventory with fixed reserved slots 0..2.

    entries[0..2] are always BOS, EOS, UNK.  Regular tokens follow in a stable
    order; ids are positions.  Instances are immutable and hash/compare by
    their entry tuple.
    """

    __slots__ = ("entries", "_index")

    def __init__(self, entries: Sequence[str]):
        entries = tuple(entries)
        if len(entries) < 3 or entries[:3] != RESERVED_TOKENS:
            raise ValidationError(
                "vocabulary must start with the reserved tokens %r" % (RESERVED_TOKENS,)
            )
        index: dict[str, int] = {}
        for i, tok in enumerate(entries):
            if not tok:
                raise ValidationError("empty token string at id %d" % i)
            if "\n" in tok or "\r" in tok:
                raise ValidationError("token %r contains a line break" % tok)
            if tok in index:
                raise ValidationError("duplicate token %r" % tok)
            index[tok] = i
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary from regular tokens; reserved slots are prepended."""
        tokens = tuple(tokens)
        for tok in tokens:
            if tok in RESERVED_TOKENS:
                raise ValidationError(
                    "regular token %r collides with a reserved symbol" % tok
                )
        return cls(RESERVED_TOKENS + tokens)

    def __setattr__(self, name, value):
        raise AttributeError("Vocabulary is immutable")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        return "Vocabulary(%d tokens)" % len(self.entries)

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.entries):
            raise ValidationError("token id %d out of range" % token_id)
        return self.entries[token_id]

    def id(self, token: str) -> int:
        """Exact lookup; raises for unknown tokens."""
        try:
            return self._index[token]
        except KeyError:
            raise ValidationError("token %r not in vocabulary" % token) from None

    def id_or_unk(self, token: str) -> int:
        """Lookup with the OOV policy: unknown or reserved surface forms -> UNK.

        Reserved token *strings* arriving as surface text (e.g. a corpus line
        containing the literal "</s>") must not smuggle control ids into a
        sequence, so they map to UNK as well.
        """
        if token in RESERVED_TOKENS:
            return UNK_ID
        return self._index.get(token, UNK_ID)

    def save(self, path: Union[str, Path]) -> None:
        """Write one token per line, ids implied by line order."""
        Path(path).write_text("\n".join(self.entries) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


class GenerationOrder(str, enum.Enum):
    """Direction in which a model emits tokens."""

    LEFT_TO_RIGHT = "left-to-right"
    RIGHT_TO_LEFT = "right-to-left"


@dataclass(frozen=True)
class WhitespaceScheme:
    """Tokens are the space-separated fields of the text."""


@dataclass(frozen=True)
class CharacterScheme:
    """Tokens are single characters, with spaces rendered as SPACE_TOKEN."""


@dataclass(frozen=True)
class BpeScheme:
    """Learned subword merges applied greedily in list order.

    merges is an ordered sequence of (left, right) symbol pairs.  Non-final
    subwords of a word carry the continuation marker as a suffix, so the
    original characters are always recoverable by stripping markers and
    concatenating within words.
    """

    merges: tuple[tuple[str, str], ...]
    marker: str = "@@"

    def __post_init__(self):
        if not self.marker:
            raise ValidationError("continuation marker must be non-empty")
        object.__setattr__(
            self, "merges", tuple((str(l), str(r)) for l, r in self.merges)
        )


Scheme = Union[WhitespaceScheme, CharacterScheme, BpeScheme]


def learn_bpe(corpus: Iterable[str], num_merges: int, marker: str = "@@") -> BpeScheme:
    """Learn up to num_merges subword merges from a whitespace-split corpus.

    Each round merges the most frequent adjacent symbol pair across all word
    occurrences; ties go to the lexicographically smallest (left, right) pair.
    Stops early once no adjacent pair remains.  Rejects corpora that already
    contain the continuation marker, since the marker must stay unambiguous.
    """
    if num_merges < 0:
        raise ValidationError("num_merges must be >= 0")
    lines = list(corpus)
    for line in lines:
        if marker in line:
            raise ValidationError(
                "corpus contains the continuation marker %r; "
                "pick a different marker" % marker
            )
    # Word types with occurrence counts; merging operates on types, weighted
    # by frequency, which is equivalent to merging every occurrence.
    word_freq = Counter()
    for line in lines:
        word_freq.update(line.split())
    words: dict[tuple[str, ...], int] = {
        tuple(word): freq for word, freq in word_freq.items()
    }

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_freq: Counter = Counter()
        for symbols, freq in words.items():
            for left, right in zip(symbols, symbols[1:]):
                pair_freq[(left, right)] += freq
        if not pair_freq:
            break
        best_count = max(pair_freq.values())
        best = min(pair for pair, n in pair_freq.items() if n == best_count)
        merges.append(best)
        words = {
            _merge_adjacent(symbols, best): freq for symbols, freq in words.items()
        }
    return BpeScheme(tuple(merges), marker)


def _merge_adjacent(
    symbols: Sequence[str], pair: tuple[str, str]
) -> tuple[str, ...]:
    """Replace every non-overlapping adjacent occurrence of pair, left to right."""
    left, right = pair
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def tokenize(text: str, scheme: Scheme) -> list[str]:
    """Split normalized text into scheme tokens.  Empty text gives []."""
    if isinstance(scheme, WhitespaceScheme):
        return text.split()
    if isinstance(scheme, CharacterScheme):
        return [SPACE_TOKEN if ch == " " else ch for ch in text]
    if isinstance(scheme, BpeScheme):
        out: list[str] = []
        for word in text.split():
            pieces: Sequence[str] = tuple(word)
            for pair in scheme.merges:
                pieces = _merge_adjacent(pieces, pair)
            out.extend(p + scheme.marker for p in pieces[:-1])
            if pieces:
                out.append(pieces[-1])
        return out
    raise ValidationError("unknown tokenization scheme %r" % (scheme,))


def detokenize(tokens: Sequence[str], scheme: Scheme) -> str:
    """Invert tokenize.  The only detected error is a dangling continuation
    marker at the end of a BPE sequence, which raises MappingError."""
    if isinstance(scheme, WhitespaceScheme):
        return " ".join(tokens)
    if isinstance(scheme, CharacterScheme):
        return "".join(" " if tok == SPACE_TOKEN else tok for tok in tokens)
    if isinstance(scheme, BpeScheme):
        words: list[str] = []
        current: list[str] = []
        for tok in tokens:
            if tok.endswith(scheme.marker):
                current.append(tok[: -len(scheme.marker)])
            else:
                current.append(tok)
                words.append("".join(current))
                current = []
        if current:
            raise MappingError(
                "dangling continuation marker at sequence end: %r" % (tokens[-1],)
            )
        return " ".join(words)
    raise ValidationError("unknown tokenization scheme %r" % (scheme,))


@dataclass(frozen=True)
class ModelTextSpec:
    """The complete text interface of one model.

    name is a label for files and wire manifests; it does not participate in
    equality, so two structurally identical specs are interchangeable.
    """

    vocabulary: Vocabulary
    scheme: Scheme
    order: GenerationOrder = GenerationOrder.LEFT_TO_RIGHT
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not isinstance(self.vocabulary, Vocabulary):
            raise ValidationError("vocabulary must be a Vocabulary")
        if not isinstance(self.order, GenerationOrder):
            object.__setattr__(self, "order", GenerationOrder(self.order))


@dataclass(frozen=True)
class TokenSequence:
    """An id sequence bound to a spec.  Never contains BOS; EOS only final."""

    ids: tuple[int, ...]
    spec: ModelTextSpec

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        size = len(self.spec.vocabulary)
        for pos, tid in enumerate(ids):
            if not 0 <= tid < size:
                raise ValidationError("token id %d out of range at %d" % (tid, pos))
            if tid == BOS_ID:
                raise ValidationError("BOS may not appear in a token sequence")
            if tid == EOS_ID and pos != len(ids) - 1:
                raise ValidationError("EOS may only appear as the final token")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def has_eos(self) -> bool:
        return bool(self.ids) and self.ids[-1] == EOS_ID

    @property
    def content_ids(self) -> tuple[int, ...]:
        """ids with any trailing EOS removed."""
        return self.ids[:-1] if self.has_eos else self.ids

    def with_eos(self) -> "TokenSequence":
        if self.has_eos:
            return self
        return TokenSequence(self.ids + (EOS_ID,), self.spec)

    def token_strings(self) -> list[str]:
        vocab = self.spec.vocabulary
        return [vocab.token(i) for i in self.ids]


def require_binding(seq: TokenSequence, spec: ModelTextSpec, what: str = "sequence"):
    """Raise unless seq is bound to (a spec equal to) spec."""
    if seq.spec != spec:
        raise SpecMismatchError("%s is bound to a different text spec" % what)


def encode_tokens(tokens: Sequence[str], spec: ModelTextSpec) -> tuple[int, ...]:
    """Surface tokens -> ids under spec's vocabulary, OOV and reserved -> UNK."""
    vocab = spec.vocabulary
    return tuple(vocab.id_or_unk(tok) for tok in tokens)


def map_output(
    seq: TokenSequence, from_spec: ModelTextSpec, to_spec: ModelTextSpec
) -> TokenSequence:
    """Re-express a finished output of from_spec as input material for to_spec.

    Pipeline: strip trailing EOS, undo the producer's generation order, lower
    to text under the producer's scheme, re-tokenize under the consumer's
    scheme, apply the consumer's order, and id-encode with UNK fallback.  The
    result never contains BOS or EOS.  Identical specs short-circuit to the
    EOS-stripped identity.
    """
    require_binding(seq, from_spec, "map_output input")
    if from_spec == to_spec:
        return TokenSequence(seq.content_ids, to_spec)
    ids = list(seq.content_ids)
    if from_spec.order is GenerationOrder.RIGHT_TO_LEFT:
        ids.reverse()
    tokens = [from_spec.vocabulary.token(i) for i in ids]
    text = detokenize(tokens, from_spec.scheme)
    out_tokens = tokenize(text, to_spec.scheme)
    if to_spec.order is GenerationOrder.RIGHT_TO_LEFT:
        out_tokens.reverse()
    return TokenSequence(encode_tokens(out_tokens, to_spec), to_spec)


def sequence_to_text(seq: TokenSequence) -> str:
    """Finished sequence -> surface text (EOS stripped, order undone)."""
    ids = list(seq.content_ids)
    if seq.spec.order is GenerationOrder.RIGHT_TO_LEFT:
        ids.reverse()
    tokens = [seq.spec.vocabulary.token(i) for i in ids]
    return detokenize(tokens, seq.spec.scheme)


def text_to_sequence(text: str, spec: ModelTextSpec) -> TokenSequence:
    """Surface text -> content TokenSequence (no EOS) under spec."""
    tokens = tokenize(text, spec.scheme)
    if spec.order is GenerationOrder.RIGHT_TO_LEFT:
        tokens.reverse()
    return TokenSequence(encode_tokens(tokens, spec), spec)


def vocabulary_from_corpus(corpus: Iterable[str], scheme: Scheme) -> Vocabulary:
    """Collect the sorted set of scheme tokens occurring in a corpus."""
    seen: set[str] = set()
    for line in corpus:
        seen.update(tokenize(line, scheme))
    return Vocabulary.from_tokens(sorted(seen))


# --- file formats -----------------------------------------------------------


def save_merges(scheme: BpeScheme, path: Union[str, Path]) -> None:
    """One merge per line: left<TAB>right, in application order."""
    lines = ["%s\t%s" % pair for pair in scheme.merges]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_merges(path: Union[str, Path], marker: str = "@@") -> BpeScheme:
    merges = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValidationError("merges line %d is not left<TAB>right" % lineno)
        merges.append((parts[0], parts[1]))
    return BpeScheme(tuple(merges), marker)


def scheme_to_dict(scheme: Scheme) -> dict:
    if isinstance(scheme, WhitespaceScheme):
        return {"type": "whitespace"}
    if isinstance(scheme, CharacterScheme):
        return {"type": "character"}
    if isinstance(scheme, BpeScheme):
        return {
            "type": "bpe",
            "marker": scheme.marker,
            "merges": [list(pair) for pair in scheme.merges],
        }
    raise ValidationError("unknown tokenization scheme %r" % (scheme,))


def scheme_from_dict(data: Mapping) -> Scheme:
    kind = data.get("type")
    if kind == "whitespace":
        return WhitespaceScheme()
    if kind == "character":
        return CharacterScheme()
    if kind == "bpe":
        merges = tuple((l, r) for l, r in data.get("merges", []))
        return BpeScheme(merges, data.get("marker", "@@"))
    raise ValidationError("unknown scheme type %r" % (kind,))


def spec_to_dict(spec: ModelTextSpec) -> dict:
    return {
        "name": spec.name,
        "vocabulary": list(spec.vocabulary.entries),
        "scheme": scheme_to_dict(spec.scheme),
        "order": spec.order.value,
    }


def spec_from_dict(data: Mapping) -> ModelTextSpec:
    return ModelTextSpec(
        vocabulary=Vocabulary(data["vocabulary"]),
        scheme=scheme_from_dict(data["scheme"]),
        order=GenerationOrder(data.get("order", "left-to-right")),
        name=data.get("name", ""),
    )
