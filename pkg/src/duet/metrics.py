"""Corpus-level text quality metrics: BLEU and ROUGE-L.

Both metrics work on surface text and do their own internal tokenization, so
they are independent of any model's tokenization scheme.  BLEU uses a fixed
punctuation-splitting rule (every non-alphanumeric, non-space character
becomes its own token, case preserved); ROUGE-L splits on whitespace.

corpus_bleu is the usual geometric mean of modified n-gram precisions with a
brevity penalty, computed over the whole corpus.  Multi-reference pairs clip
each n-gram count against the maximum reference count and use the reference
length closest to the hypothesis length (ties to the shorter) for the brevity
penalty.  Orders with no hypothesis n-grams anywhere in the corpus (every
hypothesis shorter than n) are dropped from the mean rather than zeroing it.
With smoothing enabled, orders whose clipped match count is zero get an
add-one numerator and denominator.

rouge_l reports the corpus mean of per-pair LCS recall, precision and F1,
taking the best reference (by F1) for each pair.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import exp, log
from typing import Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class EvalPair:
    """One hypothesis with its reference(s)."""

    hypothesis: str
    references: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not self.references:
            raise ValidationError("an eval pair needs at least one reference")


def bleu_tokenize(text: str) -> list[str]:
    """Whitespace split after isolating punctuation as standalone tokens."""
    out = []
    for ch in text:
        if ch.isalnum() or ch == " ":
            out.append(ch)
        else:
            out.append(" %s " % ch)
    return "".join(out).split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    pairs: Sequence[EvalPair], max_n: int = 4, smoothing: bool = False
) -> float:
    """Corpus BLEU in [0, 100].  Empty-hypothesis corpora score 0."""
    if not pairs:
        raise ValidationError("corpus_bleu needs at least one pair")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for pair in pairs:
        hyp = bleu_tokenize(pair.hypothesis)
        refs = [bleu_tokenize(r) for r in pair.references]
        hyp_len += len(hyp)
        # closest reference length; ties prefer the shorter reference
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp, n)
            if not hyp_counts:
                continue
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(
                min(count, max_ref[gram]) for gram, count in hyp_counts.items()
            )
    if hyp_len == 0:
        return 0.0
    log_precisions = []
    for n in range(max_n):
        if totals[n] == 0:
            continue  # no hypothesis was long enough for this order
        m, t = matches[n], totals[n]
        if m == 0:
            if not smoothing:
                return 0.0
            m, t = m + 1, t + 1
        log_precisions.append(log(m / t))
    if not log_precisions:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * exp(sum(log_precisions) / len(log_precisions))


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # classic two-row dynamic program
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, 1):
            row.append(prev[j - 1] + 1 if x == y else max(prev[j], row[-1]))
        prev = row
    return prev[-1]


def rouge_l(pairs: Sequence[EvalPair]) -> RougeScore:
    """Mean LCS recall/precision/F1, best reference per pair by F1."""
    if not pairs:
        raise ValidationError("rouge_l needs at least one pair")
    rs, ps, fs = [], [], []
    for pair in pairs:
        hyp = pair.hypothesis.split()
        best = RougeScore(0.0, 0.0, 0.0)
        for ref_text in pair.references:
            ref = ref_text.split()
            lcs = _lcs_length(hyp, ref)
            r = lcs / len(ref) if ref else 0.0
            p = lcs / len(hyp) if hyp else 0.0
            f1 = 2 * r * p / (r + p) if r + p > 0 else 0.0
            if f1 > best.f1:
                best = RougeScore(r, p, f1)
        rs.append(best.recall)
        ps.append(best.precision)
        fs.append(best.f1)
    n = len(pairs)
    return RougeScore(sum(rs) / n, sum(ps) / n, sum(fs) / n)
