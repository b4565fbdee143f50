"""Scorers: the step-score contract, the n-gram model, and persistence.

The n-gram tests check against `oracle_prob`, a from-scratch reimplementation
of the smoothed interpolated estimate using plain dicts and floats, so a bug
in the vectorized model arithmetic cannot hide behind itself.
"""

from __future__ import annotations

import random

import numpy as np
import pytest

from conftest import make_spec, seq
from duet.errors import (
    CapabilityError,
    ModelFileError,
    SpecMismatchError,
    ValidationError,
)
from duet.scoring import (
    CountingScorer,
    NGramModel,
    Scorer,
    SourceView,
    TableScorer,
    score_sequence,
    train_ngram,
)
from duet.textspec import (
    BOS_ID,
    EOS_ID,
    UNK_ID,
    GenerationOrder,
    ModelTextSpec,
    TokenSequence,
    Vocabulary,
    WhitespaceScheme,
    encode_tokens,
    text_to_sequence,
    tokenize,
    vocabulary_from_corpus,
)

# --- independent oracle for the n-gram estimate -----------------------------


def oracle_streams(corpus, spec, order):
    streams = []
    for line in corpus:
        ids = list(encode_tokens(tokenize(line, spec.scheme), spec))
        if spec.order is GenerationOrder.RIGHT_TO_LEFT:
            ids.reverse()
        streams.append([BOS_ID] * (order - 1) + ids + [EOS_ID])
    return streams


def oracle_prob(corpus, spec, order, k, prefix_ids, token):
    """p(token | prefix) recounted from the corpus with plain dicts."""
    counts = {m: {} for m in range(1, order + 1)}
    for stream in oracle_streams(corpus, spec, order):
        for pos in range(order - 1, len(stream)):
            for m in range(1, order + 1):
                ctx = tuple(stream[pos - (m - 1) : pos])
                by_ctx = counts[m].setdefault(ctx, {})
                by_ctx[stream[pos]] = by_ctx.get(stream[pos], 0) + 1
    padded = (BOS_ID,) * (order - 1) + tuple(prefix_ids)
    slots = len(spec.vocabulary) - 1
    components = []
    for m in range(1, order + 1):
        ctx = padded[len(padded) - (m - 1) :] if m > 1 else ()
        by_ctx = counts[m].get(ctx, {})
        total = sum(by_ctx.values())
        components.append((by_ctx.get(token, 0), total))
    weight_sum = sum(total for _, total in components)
    prob = 0.0
    for count, total in components:
        if total == 0:
            continue
        prob += (total / weight_sum) * ((count + k) / (total + k * slots))
    return prob


# --- the scorer contract ----------------------------------------------------


class _ShapedScorer(Scorer):
    """Test double returning whatever vector it was handed."""

    def __init__(self, spec, vector):
        self._spec = spec
        self._vector = vector

    @property
    def spec(self):
        return self._spec

    def _step_scores(self, source, prefix):
        return self._vector


class TestScorerContract:
    def test_bos_entry_forced_to_minus_inf(self):
        spec = make_spec(("a", "b"))
        scorer = TableScorer(spec, {("s", ()): [0.0] * 5})
        vec = scorer.score_step("s", seq(spec))
        assert vec[BOS_ID] == -np.inf
        assert vec.dtype == np.float64

    def test_returns_a_fresh_array(self):
        spec = make_spec(("a", "b"))
        scorer = TableScorer(spec, {("s", ()): [-1.0] * 5})
        first = scorer.score_step("s", seq(spec))
        first[3] = 99.0
        assert scorer.score_step("s", seq(spec))[3] == -1.0

    def test_rejects_finished_prefix(self):
        spec = make_spec()
        scorer = TableScorer(spec)
        with pytest.raises(ValidationError):
            scorer.score_step("s", seq(spec, 3, EOS_ID))

    def test_rejects_foreign_prefix(self):
        scorer = TableScorer(make_spec(("a", "b", "c")))
        other = make_spec(("a", "b", "c", "d"))
        with pytest.raises(SpecMismatchError):
            scorer.score_step("s", seq(other, 3))

    def test_rejects_wrong_shape(self):
        spec = make_spec()
        scorer = _ShapedScorer(spec, np.zeros(4))
        with pytest.raises(ValidationError):
            scorer.score_step("s", seq(spec))

    def test_rejects_nan_and_plus_inf(self):
        spec = make_spec(("a", "b"))
        for bad in (np.nan, np.inf):
            vector = np.zeros(5)
            vector[3] = bad
            with pytest.raises(ValidationError):
                _ShapedScorer(spec, vector).score_step("s", seq(spec))

    def test_minus_inf_is_allowed(self):
        spec = make_spec(("a", "b"))
        vector = np.full(5, -np.inf)
        vec = _ShapedScorer(spec, vector).score_step("s", seq(spec))
        assert np.all(vec == -np.inf)

    def test_embeddings_unsupported_by_default(self):
        scorer = TableScorer(make_spec())
        assert scorer.embedding_dim is None
        with pytest.raises(CapabilityError):
            scorer.embedding(3)


class TestScoreSequence:
    def test_requires_trailing_eos(self):
        spec = make_spec()
        with pytest.raises(ValidationError):
            score_sequence(TableScorer(spec), "s", seq(spec, 3))

    def test_eos_only_sequence_is_one_step(self):
        spec = make_spec(("a", "b"))
        root = [-9.0] * 5
        root[EOS_ID] = -0.25
        scorer = TableScorer(spec, {("s", ()): root})
        assert score_sequence(scorer, "s", seq(spec, EOS_ID)) == -0.25

    def test_constant_table_three_steps(self):
        spec = make_spec()
        scorer = TableScorer(spec, default=-1.0)
        assert score_sequence(scorer, "s", seq(spec, 3, 4, EOS_ID)) == -3.0

    def test_matches_manual_accumulation(self):
        spec = make_spec(("a", "b"))
        rng = np.random.default_rng(3)
        scorer = TableScorer(
            spec,
            {
                ("s", ()): rng.uniform(-5, 0, 5),
                ("s", (3,)): rng.uniform(-5, 0, 5),
                ("s", (3, 4)): rng.uniform(-5, 0, 5),
            },
        )
        s = seq(spec, 3, 4, EOS_ID)
        total = 0.0
        for pos in range(3):
            prefix = TokenSequence(s.ids[:pos], spec)
            total += float(scorer.score_step("s", prefix)[s.ids[pos]])
        assert score_sequence(scorer, "s", s) == total


class TestSourceView:
    def test_joins_fields_in_order(self):
        view = SourceView("v", ("title", "body"))
        assert view.apply({"body": "b", "title": "t"}) == "t b"

    def test_missing_fields_are_named(self):
        view = SourceView("v", ("title", "body"))
        with pytest.raises(ValidationError, match="body"):
            view.apply({"title": "t"})

    def test_needs_at_least_one_field(self):
        with pytest.raises(ValidationError):
            SourceView("v", ())


class TestTableScorer:
    def test_lookup_and_default(self):
        spec = make_spec(("a", "b"))
        listed = [-0.5, -1.5, -2.5, -3.5, -4.5]
        scorer = TableScorer(spec, {("s", (3,)): listed}, default=-6.0)
        vec = scorer.score_step("s", seq(spec, 3))
        assert vec[3] == -3.5
        fallback = scorer.score_step("other", seq(spec, 3))
        assert np.all(fallback[1:] == -6.0)

    def test_rejects_wrong_length_entry(self):
        with pytest.raises(ValidationError):
            TableScorer(make_spec(), {("s", ()): [-1.0, -2.0]})

    def test_embeddings(self):
        spec = make_spec(("a", "b"))
        emb = np.arange(10.0).reshape(5, 2)
        scorer = TableScorer(spec, embeddings=emb)
        assert scorer.embedding_dim == 2
        assert np.array_equal(scorer.embedding(3), [6.0, 7.0])

    def test_embeddings_must_cover_vocabulary(self):
        with pytest.raises(ValidationError):
            TableScorer(make_spec(), embeddings=np.zeros((4, 2)))

    def test_save_load_round_trip(self, tmp_path):
        spec = make_spec(("a", "b", "c"), order="right-to-left", name="tbl")
        rng = np.random.default_rng(5)
        entries = {
            ("s", ()): rng.uniform(-9, 0, 6),
            ("s", (3, 4)): rng.uniform(-9, 0, 6),
            ("t", (5,)): rng.uniform(-9, 0, 6),
        }
        scorer = TableScorer(spec, entries, default=-2.5,
                             embeddings=rng.uniform(-1, 1, (6, 3)))
        path = tmp_path / "model.table.json"
        scorer.save(path)
        loaded = TableScorer.load(path)
        assert loaded.spec == spec
        assert loaded.default == -2.5
        assert loaded.embedding_dim == 3
        for source, prefix in list(entries) + [("s", (4,))]:
            a = scorer.score_step(source, TokenSequence(prefix, spec))
            b = loaded.score_step(source, TokenSequence(prefix, spec))
            assert np.array_equal(a, b)

    def test_checksum_detects_tampering(self, tmp_path):
        spec = make_spec(("a", "b"))
        scorer = TableScorer(spec, {("s", ()): [-1.0, -2.0, -3.0, -4.0, -5.0]})
        path = tmp_path / "model.table.json"
        scorer.save(path)
        text = path.read_text(encoding="utf-8")
        path.write_text(text.replace("-4.0", "-4.5"), encoding="utf-8")
        with pytest.raises(ModelFileError, match="checksum"):
            TableScorer.load(path)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "model.table.json"
        path.write_text('{"format": "something-else"}', encoding="utf-8")
        with pytest.raises(ModelFileError):
            TableScorer.load(path)
        with pytest.raises(ModelFileError):
            TableScorer.load(tmp_path / "missing.json")


class TestNGramTraining:
    def test_bigram_counts(self):
        corpus = ["a b", "a b"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        model = train_ngram(corpus, spec, order=2, k_add=0.2)
        a, b = spec.vocabulary.id("a"), spec.vocabulary.id("b")
        assert model.count(2, (a,), b) == 2
        assert model.count(2, (BOS_ID,), a) == 2
        assert model.count(2, (b,), EOS_ID) == 2
        assert model.count(2, (b,), a) == 0
        assert model.count(1, (), b) == 2

    def test_unigram_argmax_is_the_frequent_token(self):
        corpus = ["b b b a"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        model = train_ngram(corpus, spec, order=1, k_add=0.5)
        vec = model.score_step("", seq(spec))
        assert vec.argmax() == spec.vocabulary.id("b")

    def test_unknown_words_score_finite(self):
        corpus = ["a a"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        model = train_ngram(corpus, spec, order=2, k_add=0.2)
        s = text_to_sequence("zzz zzz", spec).with_eos()
        assert s.ids[0] == UNK_ID
        assert np.isfinite(score_sequence(model, "", s))

    def test_step_distribution_sums_to_one(self):
        corpus = ["a b c", "b a"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        model = train_ngram(corpus, spec, order=3, k_add=0.3)
        for prefix in (seq(spec), seq(spec, 3), seq(spec, 4, 5)):
            vec = model.score_step("", prefix)
            assert np.isclose(np.exp(vec).sum(), 1.0)

    def test_observed_bigram_beats_unobserved(self):
        corpus = ["a b"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        model = train_ngram(corpus, spec, order=2, k_add=0.2)
        a, b = spec.vocabulary.id("a"), spec.vocabulary.id("b")
        vec = model.score_step("", seq(spec, a))
        assert vec[b] > vec[a]
        # 3/4 * (1.2 / 3.8) + 1/4 * (1.2 / 1.8), worked out by hand
        assert np.isclose(np.exp(vec[b]), 0.40350877192982454)
        assert np.isclose(np.exp(vec[a]), 0.26461988304093564)

    def test_matches_oracle(self):
        rng = random.Random(17)
        words = ["a", "b", "c"]
        for _ in range(30):
            corpus = [
                " ".join(rng.choice(words) for _ in range(rng.randint(1, 5)))
                for _ in range(rng.randint(1, 4))
            ]
            spec = ModelTextSpec(
                vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
            )
            order = rng.randint(1, 3)
            k = rng.choice([0.1, 0.5, 1.0])
            model = train_ngram(corpus, spec, order=order, k_add=k)
            size = len(spec.vocabulary)
            prefix_ids = tuple(
                rng.randint(2, size - 1) for _ in range(rng.randint(0, 3))
            )
            vec = model.score_step("", TokenSequence(prefix_ids, spec))
            for token in range(1, size):
                expected = oracle_prob(corpus, spec, order, k, prefix_ids, token)
                assert np.isclose(np.exp(vec[token]), expected, rtol=1e-12)

    def test_right_to_left_training_reverses_streams(self):
        corpus = ["a b"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()),
            WhitespaceScheme(),
            GenerationOrder.RIGHT_TO_LEFT,
        )
        model = train_ngram(corpus, spec, order=2, k_add=0.2)
        a, b = spec.vocabulary.id("a"), spec.vocabulary.id("b")
        assert model.count(2, (BOS_ID,), b) == 1
        assert model.count(2, (b,), a) == 1
        assert model.count(2, (a,), EOS_ID) == 1

    def test_copy_bonus_rewards_source_words_only(self):
        corpus = ["a b", "b c"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        plain = train_ngram(corpus, spec, order=1, k_add=0.2)
        boosted = train_ngram(corpus, spec, order=1, k_add=0.2, copy_bonus=0.4)
        base = plain.score_step("ignored", seq(spec))
        vec = boosted.score_step("a", seq(spec))
        a, b = spec.vocabulary.id("a"), spec.vocabulary.id("b")
        assert vec[a] == min(base[a] + 0.4, 0.0)
        assert vec[b] == base[b]

    def test_copy_bonus_never_breaks_the_nonpositive_ceiling(self):
        corpus = ["a a a a a a a a"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()), WhitespaceScheme()
        )
        boosted = train_ngram(corpus, spec, order=1, k_add=0.01, copy_bonus=5.0)
        vec = boosted.score_step("a", seq(spec))
        assert np.all(vec <= 0.0)

    def test_parameter_validation(self):
        spec = make_spec()
        with pytest.raises(ValidationError):
            train_ngram(["a"], spec, order=0, k_add=0.2)
        with pytest.raises(ValidationError):
            NGramModel(spec, order=2, k_add=0.0, counts={})

    def test_scoring_without_any_counts_fails(self):
        spec = make_spec()
        model = NGramModel(spec, order=2, k_add=0.2, counts={})
        with pytest.raises(ValidationError):
            model.score_step("", seq(spec))


class TestNGramPersistence:
    def _model(self):
        corpus = ["a b c a", "c b a", "a a b"]
        spec = ModelTextSpec(
            vocabulary_from_corpus(corpus, WhitespaceScheme()),
            WhitespaceScheme(),
            GenerationOrder.RIGHT_TO_LEFT,
            name="lm",
        )
        return spec, train_ngram(corpus, spec, order=3, k_add=0.25, copy_bonus=0.1)

    def test_round_trip_is_bitwise(self, tmp_path):
        spec, model = self._model()
        path = tmp_path / "m.ngram"
        model.save(path)
        loaded = NGramModel.load(path)
        assert loaded.spec == spec
        assert (loaded.order, loaded.k_add, loaded.copy_bonus) == (3, 0.25, 0.1)
        rng = random.Random(23)
        size = len(spec.vocabulary)
        for _ in range(20):
            prefix = TokenSequence(
                tuple(rng.randint(2, size - 1) for _ in range(rng.randint(0, 4))),
                spec,
            )
            source = rng.choice(["", "a b", "zz"])
            assert np.array_equal(
                model.score_step(source, prefix), loaded.score_step(source, prefix)
            )

    def test_file_bytes_are_stable(self, tmp_path):
        _, model = self._model()
        first, second = tmp_path / "1.ngram", tmp_path / "2.ngram"
        model.save(first)
        model.save(second)
        assert first.read_bytes() == second.read_bytes()
        NGramModel.load(first).save(second)
        assert first.read_bytes() == second.read_bytes()

    def test_checksum_detects_edited_counts(self, tmp_path):
        _, model = self._model()
        path = tmp_path / "m.ngram"
        model.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        target = next(i for i, l in enumerate(lines) if l.startswith("count\t"))
        fields = lines[target].split("\t")
        fields[-1] = str(int(fields[-1]) + 1)
        lines[target] = "\t".join(fields)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ModelFileError, match="checksum"):
            NGramModel.load(path)

    def test_truncated_file(self, tmp_path):
        _, model = self._model()
        path = tmp_path / "m.ngram"
        model.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(ModelFileError, match="truncated"):
            NGramModel.load(path)

    def test_wrong_magic_and_version(self, tmp_path):
        path = tmp_path / "m.ngram"
        path.write_text("nonsense\n", encoding="utf-8")
        with pytest.raises(ModelFileError):
            NGramModel.load(path)
        _, model = self._model()
        model.save(path)
        text = path.read_text(encoding="utf-8").replace("v1", "v9", 1)
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ModelFileError, match="version"):
            NGramModel.load(path)


class TestCountingScorer:
    def test_counts_and_resets(self):
        spec = make_spec()
        counting = CountingScorer(TableScorer(spec))
        for _ in range(3):
            counting.score_step("s", seq(spec))
        assert counting.step_calls == 3
        counting.reset()
        assert counting.step_calls == 0

    def test_delegates_scores_and_embeddings(self):
        spec = make_spec(("a", "b"))
        inner = TableScorer(
            spec, {("s", ()): [-0.1, -0.2, -0.3, -0.4, -0.5]},
            embeddings=np.eye(5),
        )
        counting = CountingScorer(inner)
        assert np.array_equal(
            counting.score_step("s", seq(spec)), inner.score_step("s", seq(spec))
        )
        assert counting.embedding_dim == 5
        assert np.array_equal(counting.embedding(2), inner.embedding(2))
