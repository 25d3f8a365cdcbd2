"""Contrastive loss, SGD training, cross-validation and the saved fitness model."""

import math

import numpy as np
import pytest

from goalsynth.exceptions import ConfigurationError, ValidationError, VersionMismatchError
from goalsynth.features import Normalizer
from goalsynth.fitness import (
    Dataset, FitnessModel, TrainConfig, auc, crossvalidate, gen_negatives, grid_configs, kfold,
    load_dataset, loss, loss_and_gradient, save_dataset, score, train,
)
from goalsynth.syntax import find_node

QUICK = TrainConfig(batch_size=2, k=4, m=8, learning_rate=0.1, weight_decay=0.0,
                    max_epochs=200, patience=50, validation_fraction=0.25, seed=3)


def separable_dataset(n_positives: int = 8, m: int = 8, seed: int = 0) -> Dataset:
    """Positives have feature 0 set; negatives never do; other features are noise."""
    rng = np.random.default_rng(seed)
    positives = rng.uniform(size=(n_positives, 3))
    positives[:, 0] = 1.0
    negatives = []
    for _ in range(n_positives):
        block = rng.uniform(size=(m, 3))
        block[:, 0] = 0.0
        negatives.append(block)
    return Dataset(["signal", "noise_a", "noise_b"], positives, negatives)


class TestLoss:

    def test_single_tied_negative(self):
        assert loss(0.0, [0.0]) == pytest.approx(math.log(2))

    def test_two_tied_negatives(self):
        assert loss(0.0, [0.0, 0.0]) == pytest.approx(math.log(3))

    def test_positive_ahead_of_two_negatives(self):
        assert loss(1.0, [0.0, 0.0]) == pytest.approx(0.551445, abs=1e-6)

    def test_zero_weights_give_log_one_plus_k(self):
        theta = np.zeros(3)
        value, _ = loss_and_gradient(theta, np.ones(3), np.ones((7, 3)))
        assert value == pytest.approx(math.log(8))

    def test_needs_a_negative(self):
        with pytest.raises(ValidationError):
            loss(0.0, [])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        theta = rng.normal(size=4)
        positive = rng.uniform(size=4)
        negatives = rng.uniform(size=(5, 4))
        _, grad = loss_and_gradient(theta, positive, negatives)
        eps = 1e-6
        numeric = np.zeros_like(theta)
        for i in range(theta.size):
            step = np.zeros_like(theta)
            step[i] = eps
            plus, _ = loss_and_gradient(theta + step, positive, negatives)
            minus, _ = loss_and_gradient(theta - step, positive, negatives)
            numeric[i] = (plus - minus) / (2 * eps)
        np.testing.assert_allclose(grad, numeric, atol=1e-6)


class TestTraining:

    def test_learns_the_separating_feature(self):
        dataset = separable_dataset()
        result = train(dataset, QUICK)
        assert result.theta[0] > 0
        assert result.theta[0] > abs(result.theta[1])
        assert result.best_validation_loss < math.log(1 + 8)
        assert result.epochs <= QUICK.max_epochs

    def test_training_is_deterministic(self):
        dataset = separable_dataset()
        np.testing.assert_array_equal(train(dataset, QUICK).theta, train(dataset, QUICK).theta)

    def test_invalid_configuration(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(k=10, m=5).validate()
        with pytest.raises(ConfigurationError):
            TrainConfig(learning_rate=0).validate()

    def test_dataset_shape_checks(self):
        with pytest.raises(ValidationError):
            Dataset(["a", "b"], np.ones((2, 2)), [np.ones((3, 2))])

    def test_auc(self):
        assert auc([3.0, 4.0], [1.0, 2.0]) == 1.0
        assert auc([1.0], [1.0]) == 0.5


class TestCrossValidation:

    def test_grid_is_a_cartesian_product(self):
        configs = grid_configs(QUICK, {"batch_size": [1, 2], "learning_rate": [0.1, 0.01]})
        assert len(configs) == 4
        assert {(c.batch_size, c.learning_rate) for c in configs} == {
            (1, 0.1), (1, 0.01), (2, 0.1), (2, 0.01)}

    def test_folds_partition_the_positives(self):
        folds = kfold(10, 3, np.random.default_rng(0))
        assert sorted(np.concatenate(folds).tolist()) == list(range(10))
        with pytest.raises(ValidationError):
            kfold(2, 3, np.random.default_rng(0))

    def test_picks_a_grid_configuration(self):
        dataset = separable_dataset(n_positives=6)
        base = TrainConfig(batch_size=1, k=4, m=8, learning_rate=0.1, weight_decay=0.0,
                           max_epochs=30, patience=10, validation_fraction=0.0, seed=1)
        best, results = crossvalidate(dataset, base, {"learning_rate": [0.1, 1e-4]}, folds=3)
        assert len(results) == 2
        assert best.learning_rate in (0.1, 1e-4)
        assert best == min(results, key=lambda r: r[1])[0]


class TestNegatives:

    def test_each_positive_gets_m_regrowths(self, example_games, pcfg):
        groups = gen_negatives(example_games, pcfg, 3, np.random.default_rng(5))
        assert len(groups) == len(example_games)
        for i, group in enumerate(groups):
            assert len(group) == 3
            for negative in group:
                assert negative.source == i
                assert negative.node_id != 0
                assert negative.height >= 0
                assert find_node(example_games[i], negative.node_id)

    def test_seeded_generation_is_reproducible(self, example_games, pcfg):
        a = gen_negatives(example_games[:1], pcfg, 2, np.random.default_rng(9))
        b = gen_negatives(example_games[:1], pcfg, 2, np.random.default_rng(9))
        assert [n.game for n in a[0]] == [n.game for n in b[0]]


class TestPersistence:

    @pytest.fixture
    def model(self):
        return FitnessModel(["signal", "noise"], np.array([2.0, -0.5]), "test-1",
                            Normalizer({"signal": (0.0, 1.0)}), metadata={"seed": 4})

    def test_model_round_trip(self, model, tmp_path):
        path = tmp_path / "model.yml"
        model.save(path, {"seed": 4})
        loaded = FitnessModel.load(path)
        assert loaded.names == model.names
        np.testing.assert_array_equal(loaded.theta, model.theta)
        assert loaded.registry_version == "test-1"
        assert loaded.metadata == {"seed": 4}

    def test_registry_mismatch_is_rejected(self, model, tmp_path):
        path = tmp_path / "model.yml"
        model.save(path)
        with pytest.raises(VersionMismatchError):
            FitnessModel.load(path, registry_version="other")

    def test_score_of_a_vector(self, model):
        assert score(model, np.array([1.0, 1.0])) == pytest.approx(1.5)
        with pytest.raises(VersionMismatchError):
            score(model, np.array([1.0, 1.0, 1.0]))

    def test_dataset_round_trip(self, tmp_path):
        dataset = separable_dataset(n_positives=3, m=2)
        path = tmp_path / "dataset.tsv"
        save_dataset(dataset, path, "test-1")
        loaded, header = load_dataset(path, "test-1")
        assert header["registry_version"] == "test-1"
        assert loaded.names == dataset.names
        np.testing.assert_allclose(loaded.positives, dataset.positives, rtol=1e-5)
        assert [b.shape for b in loaded.negatives] == [(2, 3)] * 3
