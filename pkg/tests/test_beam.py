"""Beam search: FCFS semantics, guidance arithmetic, the oracle, and n-best IO."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import make_spec, random_table, seq
from duet.beam import (
    BeamConfig,
    CandidateSet,
    Guidance,
    ScoredSequence,
    beam_search,
    exact_topk,
    format_nbest,
    load_nbest,
    normalized_score,
    parse_nbest,
    save_nbest,
)
from duet.distance import DistanceKind, min_distance
from duet.errors import (
    CapabilityError,
    DecodeFailure,
    EnumerationLimitError,
    SpecMismatchError,
    ValidationError,
)
from duet.scoring import TableScorer
from duet.textspec import EOS_ID, UNK_ID, ModelTextSpec, TokenSequence, Vocabulary

AB = ("a", "b")  # two regular tokens -> 3 emittable symbols with UNK
SATURATE_2_2 = 13  # all sequences with <= 2 content tokens over 3 symbols


def random_candidates(spec, rng, count=3, max_len=3):
    return tuple(
        seq(spec, *[int(rng.integers(3, 5)) for _ in range(int(rng.integers(0, max_len + 1)))])
        for _ in range(count)
    )


class TestConfigValidation:
    def test_beam_config_bounds(self):
        with pytest.raises(ValidationError):
            BeamConfig(max_len=0)
        with pytest.raises(ValidationError):
            BeamConfig(max_len=1, beam_size=0)
        with pytest.raises(ValidationError):
            BeamConfig(max_len=1, alpha=-0.5)

    def test_guidance_needs_candidates(self):
        with pytest.raises(ValidationError):
            Guidance((), 1.0)

    def test_guidance_weight_non_negative(self):
        spec = make_spec()
        with pytest.raises(ValidationError):
            Guidance((seq(spec, 3),), -1.0)

    def test_guidance_rejects_mixed_specs(self):
        a, b = make_spec(("x",)), make_spec(("x", "y"))
        with pytest.raises(SpecMismatchError):
            Guidance((seq(a, 3), seq(b, 3)), 1.0)

    def test_guidance_must_match_searching_spec(self):
        spec = make_spec(AB)
        other = make_spec(("a", "b", "c"))
        scorer = TableScorer(spec)
        guidance = Guidance((seq(other, 3),), 1.0)
        with pytest.raises(SpecMismatchError):
            beam_search(scorer, "s", BeamConfig(max_len=2), guidance)


class TestUnguidedBeam:
    def test_saturating_beam_equals_exhaustive_enumeration(self):
        rng = np.random.default_rng(101)
        spec = make_spec(AB)
        config = BeamConfig(max_len=2, beam_size=SATURATE_2_2, alpha=1.0)
        for _ in range(50):
            scorer = random_table(spec, rng, depth=2)
            beam = beam_search(scorer, "s", config)
            exact = exact_topk(scorer, "s", k=SATURATE_2_2, max_len=2)
            assert beam == exact

    def test_single_step_is_argmax(self):
        spec = make_spec(AB)
        scorer = TableScorer(
            spec,
            {
                ("s", ()): [0.0, -6.0, -8.0, -1.0, -2.0],
                ("s", (UNK_ID,)): [0.0, -3.0, -9.0, -9.0, -9.0],
                ("s", (3,)): [0.0, -0.5, -9.0, -9.0, -9.0],
                ("s", (4,)): [0.0, -0.1, -9.0, -9.0, -9.0],
            },
        )
        top = beam_search(scorer, "s", BeamConfig(max_len=1, beam_size=4)).top()
        assert top.seq.ids == (3, EOS_ID)
        assert top.normalized == (-1.0 + -0.5) / 2

    def test_eos_can_finish_immediately(self):
        spec = make_spec(AB)
        scorer = TableScorer(spec, {("s", ()): [0.0, -0.1, -9.0, -1.0, -1.0]})
        candidates = beam_search(scorer, "s", BeamConfig(max_len=3, beam_size=1))
        assert len(candidates) == 1
        assert candidates.top().seq.ids == (EOS_ID,)

    def test_score_ties_prefer_smaller_token_ids(self):
        spec = make_spec(AB)
        after = [0.0, -1.0, -9.0, -9.0, -9.0]
        scorer = TableScorer(
            spec,
            {
                ("s", ()): [0.0, -9.0, -9.0, -1.0, -1.0],
                ("s", (3,)): after,
                ("s", (4,)): after,
            },
        )
        candidates = beam_search(scorer, "s", BeamConfig(max_len=1, beam_size=4))
        ids = [item.seq.ids for item in candidates]
        assert ids.index((3, EOS_ID)) < ids.index((4, EOS_ID))

    def test_force_finish_at_step_limit(self):
        spec = make_spec(AB)
        scorer = TableScorer(
            spec,
            {
                ("s", ()): [0.0, -30.0, -9.0, -1.0, -1.2],
                ("s", (3,)): [0.0, -30.0, -9.0, -1.0, -1.1],
                ("s", (4,)): [0.0, -30.0, -9.0, -1.0, -1.1],
                ("s", (UNK_ID,)): [0.0, -30.0, -9.0, -1.0, -1.1],
            },
            default=-0.5,
        )
        candidates = beam_search(scorer, "s", BeamConfig(max_len=2, beam_size=3))
        assert len(candidates) == 3
        assert all(len(item.seq.ids) == 3 for item in candidates)
        top = candidates.top()
        assert top.seq.ids == (3, 3, EOS_ID)
        assert top.normalized == (-1.0 + -1.0 + -0.5) / 3

    def test_all_paths_blocked_raises(self):
        spec = make_spec(AB)
        scorer = TableScorer(spec, {("s", ()): [-np.inf] * 5})
        with pytest.raises(DecodeFailure):
            beam_search(scorer, "s", BeamConfig(max_len=2))

    def test_unfinishable_survivors_raise(self):
        spec = make_spec(AB)
        scorer = TableScorer(
            spec,
            {
                ("s", ()): [0.0, -np.inf, -np.inf, -1.0, -np.inf],
                ("s", (3,)): [0.0, -np.inf, -9.0, -9.0, -9.0],
            },
        )
        with pytest.raises(DecodeFailure):
            beam_search(scorer, "s", BeamConfig(max_len=1, beam_size=1))

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(7)
        spec = make_spec(("a", "b", "c"))
        scorer = random_table(spec, rng, depth=2)
        config = BeamConfig(max_len=3, beam_size=4)
        assert beam_search(scorer, "s", config) == beam_search(scorer, "s", config)

    def test_alpha_zero_ranks_by_raw_total(self):
        rng = np.random.default_rng(13)
        spec = make_spec(AB)
        scorer = random_table(spec, rng, depth=2)
        candidates = beam_search(
            scorer, "s", BeamConfig(max_len=2, beam_size=6, alpha=0.0)
        )
        for item in candidates:
            assert item.normalized == item.model_score - item.penalty

    def test_candidate_set_shape_invariants(self):
        rng = np.random.default_rng(19)
        spec = make_spec(("a", "b", "c"))
        for _ in range(20):
            scorer = random_table(spec, rng, depth=2)
            k = int(rng.integers(1, 6))
            candidates = beam_search(scorer, "s", BeamConfig(max_len=3, beam_size=k))
            assert 1 <= len(candidates) <= k
            norms = [item.normalized for item in candidates]
            assert norms == sorted(norms, reverse=True)
            for item in candidates:
                assert item.seq.has_eos
                assert 0 not in item.seq.ids


class TestGuidedBeam:
    def test_zero_weight_reduces_to_unguided_bitwise(self):
        rng = np.random.default_rng(29)
        spec = make_spec(("a", "b", "c"))
        config = BeamConfig(max_len=3, beam_size=4)
        for _ in range(30):
            scorer = random_table(spec, rng, depth=2)
            guidance = Guidance(random_candidates(spec, rng), 0.0)
            assert beam_search(scorer, "s", config, guidance) == beam_search(
                scorer, "s", config
            )

    def test_huge_weight_pins_the_search_to_a_candidate(self):
        rng = np.random.default_rng(31)
        spec = make_spec(("a", "b", "c"))
        config = BeamConfig(max_len=3, beam_size=1)
        for _ in range(30):
            scorer = random_table(spec, rng, depth=3)
            target = seq(
                spec, *[int(rng.integers(3, 6)) for _ in range(int(rng.integers(0, 4)))]
            )
            guidance = Guidance((target,), 1e9)
            top = beam_search(scorer, "s", config, guidance).top()
            assert top.seq.ids == target.ids + (EOS_ID,)

    def test_guided_saturating_beam_equals_exhaustive(self):
        rng = np.random.default_rng(37)
        spec = make_spec(AB)
        config = BeamConfig(max_len=2, beam_size=SATURATE_2_2)
        for lam in (0.3, 3.0):
            for _ in range(25):
                scorer = random_table(spec, rng, depth=2)
                guidance = Guidance(random_candidates(spec, rng), lam)
                beam = beam_search(scorer, "s", config, guidance)
                exact = exact_topk(
                    scorer, "s", k=SATURATE_2_2, max_len=2, guidance=guidance
                )
                assert beam == exact

    def test_penalty_is_weight_times_full_sequence_distance(self):
        rng = np.random.default_rng(41)
        spec = make_spec(("a", "b", "c"))
        config = BeamConfig(max_len=3, beam_size=5)
        for _ in range(30):
            scorer = random_table(spec, rng, depth=2)
            candidates = random_candidates(spec, rng)
            guidance = Guidance(candidates, 0.7)
            for item in beam_search(scorer, "s", config, guidance):
                assert item.penalty == 0.7 * min_distance(item.seq, candidates)
                assert item.normalized == normalized_score(
                    item.model_score, item.penalty, len(item.seq.ids), config.alpha
                )

    def test_one_best_variant_measures_only_the_top_candidate(self):
        rng = np.random.default_rng(43)
        spec = make_spec(("a", "b", "c"))
        config = BeamConfig(max_len=3, beam_size=5)
        scorer = random_table(spec, rng, depth=2)
        candidates = (seq(spec, 3, 3, 3), seq(spec, 4, 5))
        guidance = Guidance(candidates, 0.9, DistanceKind.HAMMING_ONE_BEST)
        for item in beam_search(scorer, "s", config, guidance):
            assert item.penalty == 0.9 * min_distance(
                item.seq, candidates, DistanceKind.HAMMING_ONE_BEST
            )

    def test_embedding_guidance_equals_exhaustive(self):
        rng = np.random.default_rng(47)
        spec = make_spec(AB)
        config = BeamConfig(max_len=2, beam_size=SATURATE_2_2)
        embeddings = rng.uniform(-1, 1, size=(5, 2))
        scorer = random_table(spec, rng, depth=2, embeddings=embeddings)
        guidance = Guidance(
            random_candidates(spec, rng, count=2, max_len=2),
            0.8,
            DistanceKind.EMBEDDING_MIN,
        )
        beam = beam_search(scorer, "s", config, guidance)
        exact = exact_topk(scorer, "s", k=SATURATE_2_2, max_len=2, guidance=guidance)
        assert [b.seq.ids for b in beam] == [e.seq.ids for e in exact]
        for b, e in zip(beam, exact):
            assert np.isclose(b.penalty, e.penalty)
            assert np.isclose(b.normalized, e.normalized)

    def test_embedding_guidance_needs_embeddings(self):
        spec = make_spec(AB)
        scorer = TableScorer(spec)
        guidance = Guidance((seq(spec, 3),), 1.0, DistanceKind.EMBEDDING_MIN)
        with pytest.raises(CapabilityError):
            beam_search(scorer, "s", BeamConfig(max_len=2), guidance)


class TestExactTopk:
    def test_refuses_oversized_spaces(self):
        spec = make_spec(("a", "b", "c"))
        scorer = TableScorer(spec)
        with pytest.raises(EnumerationLimitError):
            exact_topk(scorer, "s", k=1, max_len=3, limit=10)

    def test_parameter_validation(self):
        scorer = TableScorer(make_spec(AB))
        with pytest.raises(ValidationError):
            exact_topk(scorer, "s", k=0, max_len=2)
        with pytest.raises(ValidationError):
            exact_topk(scorer, "s", k=1, max_len=0)

    def test_reserved_only_vocabulary(self):
        spec = ModelTextSpec(Vocabulary(("<s>", "</s>", "<unk>")), make_spec().scheme)
        scorer = TableScorer(spec, {("s", ()): [0.0, -0.5, -2.0]}, default=-1.0)
        exact = exact_topk(scorer, "s", k=10, max_len=3)
        assert exact.top().seq.ids == (EOS_ID,)
        assert exact.top().normalized == -0.5
        # every length 0..3 terminates once: 4 sequences total
        assert len(exact) == 4

    def test_huge_weight_singles_out_the_candidate(self):
        rng = np.random.default_rng(53)
        spec = make_spec(AB)
        scorer = random_table(spec, rng, depth=2)
        target = seq(spec, 4, 3)
        exact = exact_topk(
            scorer, "s", k=1, max_len=2, guidance=Guidance((target,), 1e9)
        )
        assert exact.top().seq.ids == (4, 3, EOS_ID)

    def test_skips_impossible_sequences(self):
        spec = make_spec(AB)
        root = [0.0, -np.inf, -9.0, -1.0, -1.0]
        scorer = TableScorer(spec, {("s", ()): root}, default=-1.0)
        exact = exact_topk(scorer, "s", k=99, max_len=1)
        assert (EOS_ID,) not in [item.seq.ids for item in exact]


class TestCandidateSet:
    def _items(self, spec):
        return [
            ScoredSequence(seq(spec, 3, EOS_ID), -1.0, 0.0, -0.5),
            ScoredSequence(seq(spec, 4, EOS_ID), -2.0, 0.0, -1.0),
        ]

    def test_requires_sorted_eos_terminated_nonempty(self):
        spec = make_spec(AB)
        items = self._items(spec)
        assert CandidateSet(items).top().seq.ids == (3, EOS_ID)
        with pytest.raises(ValidationError):
            CandidateSet(list(reversed(items)))
        with pytest.raises(ValidationError):
            CandidateSet([])
        with pytest.raises(ValidationError):
            CandidateSet([ScoredSequence(seq(spec, 3), -1.0, 0.0, -1.0)])

    def test_ranked_sorts_and_truncates(self):
        spec = make_spec(AB)
        items = list(reversed(self._items(spec)))
        ranked = CandidateSet.ranked(items, 1)
        assert len(ranked) == 1
        assert ranked.top().seq.ids == (3, EOS_ID)

    def test_rejects_mixed_specs(self):
        a, b = make_spec(AB), make_spec(("a", "b", "c"))
        items = [
            ScoredSequence(seq(a, 3, EOS_ID), -1.0, 0.0, -0.5),
            ScoredSequence(seq(b, 3, EOS_ID), -2.0, 0.0, -1.0),
        ]
        with pytest.raises(SpecMismatchError):
            CandidateSet(items)


class TestNBestFormat:
    def test_round_trip_is_bitwise(self):
        rng = np.random.default_rng(59)
        spec = make_spec(("a", "b", "c"))
        scorer = random_table(spec, rng, depth=2)
        guidance = Guidance(random_candidates(spec, rng), 0.4)
        candidates = beam_search(
            scorer, "s", BeamConfig(max_len=3, beam_size=5), guidance
        )
        parsed = parse_nbest(format_nbest(candidates), spec)
        assert parsed == candidates

    def test_file_round_trip(self, tmp_path):
        spec = make_spec(AB)
        scorer = TableScorer(spec, default=-1.25)
        candidates = beam_search(scorer, "s", BeamConfig(max_len=2, beam_size=3))
        path = tmp_path / "line.nbest"
        save_nbest(candidates, path)
        assert load_nbest(path, spec) == candidates

    def test_parse_skips_blank_lines(self):
        spec = make_spec(AB)
        scorer = TableScorer(spec, default=-1.0)
        candidates = beam_search(scorer, "s", BeamConfig(max_len=1, beam_size=2))
        text = format_nbest(candidates) + "\n\n"
        assert parse_nbest(text, spec) == candidates
