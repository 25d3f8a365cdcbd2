"""N-gram scoring, the feature registry, extraction and normalization."""

import dataclasses
import math

import numpy as np
import pytest

from goalsynth.exceptions import ValidationError
from goalsynth.features import (
    FeatureRegistry, Normalizer, extract_features, fit_normalizers, raw_features, read_features,
    write_features,
)
from goalsynth.ngram import END, START, ngram_score, pad, section_tokens, train_ngram
from goalsynth.parser import parse_game

UNUSED_PREFERENCE = """
(define (game half-used) (:domain many-objects-room-v1)
(:constraints (and
  (preference ballHeld
    (exists (?b - ball) (then (once (agent_holds ?b)) (once (not (agent_holds ?b))))))
  (preference drawerOpened
    (exists (?d - drawer) (then (once (not (open ?d))) (once (open ?d)))))))
(:scoring (count ballHeld)))
"""


class TestNGram:
    """Stupid backoff over padded token sequences."""

    @pytest.fixture
    def model(self):
        # padded: <s> a a </s>, so the unigram "a" has relative frequency 0.5
        return train_ngram([["a", "a"]], n=2, discount=0.4)

    def test_padding(self):
        assert pad(["x"], 3) == [START, START, "x", END]

    def test_seen_bigram_uses_relative_frequency(self, model):
        assert model.backoff(("a",), "a") == pytest.approx(0.5)

    def test_unseen_bigram_backs_off_with_discount(self, model):
        assert model.backoff((END,), "a") == pytest.approx(0.4 * 0.5)

    def test_unseen_token_gets_floor(self, model):
        assert model.backoff((), "zzz") == pytest.approx(1 / 8)

    def test_score_is_mean_log(self, model):
        expected = (math.log(1.0) + math.log(0.5) + math.log(0.5)) / 3
        assert model.score(["a", "a"]) == pytest.approx(expected)
        assert ngram_score(model, ["a", "a"]) == model.score(["a", "a"])

    def test_empty_input_is_rejected(self, model):
        with pytest.raises(ValidationError):
            train_ngram([[]], n=2)
        with pytest.raises(ValidationError):
            model.score([])

    def test_absent_sections_have_no_tokens(self, games_by_name):
        tokens = section_tokens(games_by_name["bed-throws"])
        assert tokens["setup"] == []
        assert tokens["terminal"] == []
        assert tokens["scoring"]
        assert tokens["full"]


TOY_SEQUENCES = [["a", "b", "c", "a"], ["b", "b", "a"], ["c", "a", "b", "d"]]


def _occurrences(gram, n):
    """Times `gram` occurs in the padded toy corpus, by direct scan."""
    found = 0
    for tokens in TOY_SEQUENCES:
        padded = [START] * (n - 1) + tokens + [END]
        found += sum(1 for i in range(len(padded) - len(gram) + 1)
                     if tuple(padded[i:i + len(gram)]) == gram)
    return found


def _backoff_by_hand(n, discount, tokens):
    size = sum(len(t) + n for t in TOY_SEQUENCES)

    def s(context, token):
        if not context:
            seen = _occurrences((token,), n)
            return seen / size if seen else 1 / (2 * size)
        seen = _occurrences(context + (token,), n)
        if seen:
            return seen / _occurrences(context, n)
        return discount * s(context[1:], token)

    padded = [START] * (n - 1) + list(tokens) + [END]
    logs = [math.log(s(tuple(padded[i - n + 1:i]), padded[i])) for i in range(n - 1, len(padded))]
    return sum(logs) / len(logs)


class TestBackoffAgainstCounts:
    """Model scores equal the recursive formula evaluated on raw corpus scans."""

    @pytest.fixture
    def queries(self):
        rng = np.random.default_rng(0)
        drawn = [[str(t) for t in rng.choice(list("abcde"), size=int(rng.integers(1, 6)))]
                 for _ in range(18)]
        # "d d" and "e" back off all the way to unigrams
        return drawn + [["d", "d"], ["e"]]

    @pytest.mark.parametrize("n", [2, 3])
    def test_twenty_queries(self, queries, n):
        model = train_ngram(TOY_SEQUENCES, n=n, discount=0.4)
        assert len(queries) == 20
        for tokens in queries:
            expected = _backoff_by_hand(n, 0.4, tokens)
            assert ngram_score(model, tokens) == pytest.approx(expected, rel=0, abs=1e-12)

    def test_full_backoff_applies_the_discount_per_level(self):
        model = train_ngram(TOY_SEQUENCES, n=3, discount=0.4)
        # no "a d" bigram and no "b a d" trigram: two discounted levels down to the unigram
        assert model.backoff(("b", "a"), "d") == pytest.approx(0.4 * 0.4 * 1 / 20)


class TestRegistry:

    def test_default_size(self):
        registry = FeatureRegistry.default()
        assert len(registry) == 88
        assert len(set(registry.names)) == 88

    def test_excluding_a_group_changes_the_version(self):
        full = FeatureRegistry.default()
        ablated = FeatureRegistry.default(exclude_groups=["play_trace_database"])
        assert len(ablated) == 86
        assert "play_trace_database" not in ablated.groups
        assert ablated.version != full.version
        assert FeatureRegistry.default().version == full.version


class TestExtraction:

    def test_every_registry_feature_is_computed(self, feature_ctx, corpus):
        raw = raw_features(corpus[0], feature_ctx)
        registry = feature_ctx.registry
        for f in registry.features:
            assert f.raw_name in raw

    def test_defined_and_used(self, feature_ctx, games_by_name):
        raw = raw_features(games_by_name["bin-throws"], feature_ctx)
        assert raw["variables_used_all"] == 1.0
        assert raw["preferences_used_all"] == 1.0
        assert raw["setup_quantified_objects_used"] == 1.0
        assert raw["section_doesnt_exist_setup"] == 0.0
        assert raw["section_doesnt_exist_terminal"] == 0.0

    def test_unreferenced_preference(self, feature_ctx):
        raw = raw_features(parse_game(UNUSED_PREFERENCE), feature_ctx)
        assert raw["preferences_used_all"] == 0.0
        assert raw["preferences_used_prop"] == pytest.approx(0.5)

    def test_absent_sections_are_nan(self, feature_ctx, games_by_name):
        raw = raw_features(games_by_name["bed-throws"], feature_ctx)
        assert math.isnan(raw["node_count_setup"])
        assert math.isnan(raw["ast_ngram_terminal_n_5_score"])
        assert raw["section_doesnt_exist_setup"] == 1.0

    def test_ngram_score_is_a_mean_log_probability(self, feature_ctx, games_by_name):
        raw = raw_features(games_by_name["throwAttempt"], feature_ctx)
        assert raw["ast_ngram_full_n_5_score"] <= 0
        assert raw["ast_ngram_full_n_5_score"] > math.log(1e-6)


class TestNormalizer:

    def test_float_scaling_clamps(self):
        normalizer = Normalizer(ranges={"x": (10.0, 20.0)})
        assert normalizer.scale("x", 15.0) == pytest.approx(0.5)
        assert normalizer.scale("x", 25.0) == 1.0
        assert normalizer.scale("x", 0.0) == 0.0

    def test_nan_maps_to_midpoint(self):
        normalizer = Normalizer(ranges={"x": (10.0, 20.0)})
        assert normalizer.scale("x", float("nan")) == 0.5

    def test_transformed_rows_lie_in_unit_interval(self, feature_ctx, corpus):
        rows = [raw_features(g, feature_ctx) for g in corpus]
        normalizer = fit_normalizers(rows, feature_ctx.registry)
        matrix = np.vstack([normalizer.transform(r, feature_ctx.registry) for r in rows])
        assert matrix.shape == (len(corpus), len(feature_ctx.registry))
        assert matrix.min() >= 0.0
        assert matrix.max() <= 1.0

    def test_one_bin_per_counting_feature(self, feature_ctx, corpus):
        rows = [raw_features(g, feature_ctx) for g in corpus]
        registry = feature_ctx.registry
        normalizer = fit_normalizers(rows, registry)
        vector = normalizer.transform(rows[0], registry)
        bins = [i for i, name in enumerate(registry.names)
                if name.startswith("node_count_scoring_")]
        assert vector[bins].sum() == 1.0

    def test_extraction_needs_a_fitted_normalizer(self, feature_ctx, corpus):
        with pytest.raises(ValidationError):
            extract_features(corpus[0], feature_ctx)
        rows = [raw_features(g, feature_ctx) for g in corpus]
        normalizer = fit_normalizers(rows, feature_ctx.registry)
        ctx = dataclasses.replace(feature_ctx, normalizer=normalizer)
        np.testing.assert_array_equal(extract_features(corpus[0], ctx),
                                      normalizer.transform(rows[0], ctx.registry))

    def test_needs_two_rows(self, feature_ctx, corpus):
        with pytest.raises(ValidationError):
            fit_normalizers([raw_features(corpus[0], feature_ctx)], feature_ctx.registry)

    def test_serialization(self):
        normalizer = Normalizer({"x": (1.0, 2.0)}, {"y": (0.5, 1.0, 2.0, 3.0)})
        assert Normalizer.from_dict(normalizer.to_dict()) == normalizer


class TestFeatureTable:

    def test_written_table_reads_back(self, tmp_path):
        path = tmp_path / "features.tsv"
        write_features(path, ["a", "b"], [[0.5, 1.0], [0.0, 0.25]], labels=["g1", "g2"])
        labels, names, matrix = read_features(path)
        assert labels == ["g1", "g2"]
        assert names == ["a", "b"]
        np.testing.assert_allclose(matrix, [[0.5, 1.0], [0.0, 0.25]])
