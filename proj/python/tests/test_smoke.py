import numpy as np
import pytest

import trlab


def test_auc_matches_pairwise_count():
    scores = [0.1, 0.4, 0.35, 0.8, 0.4]
    labels = [0, 0, 1, 1, 1]
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    assert trlab.auc_roc(scores, labels) == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-15)
    with pytest.raises(trlab.Error):
        trlab.auc_roc([0.1, 0.2], [1, 1])


def test_cca_self_and_affine():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((6, 2000))
    a = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    assert trlab.cca(x, x, epsilon=0.0)["similarity"] == pytest.approx(1.0, abs=1e-6)
    y = rng.standard_normal((4, 2000))
    y[0] += x[0]
    base = trlab.cca(x, y, epsilon=0.0)["similarity"]
    assert trlab.cca(a @ x + 2.0, y, epsilon=0.0)["similarity"] == pytest.approx(base, abs=1e-5)
    assert trlab.svcca(x, y, variance_threshold=1.0)["similarity"] == pytest.approx(
        trlab.cca(x, y)["similarity"], abs=1e-6
    )


def test_gabor_bank_and_param_count():
    bank = trlab.gabor_bank()
    assert bank.shape == (64, 7, 7)
    assert np.array_equal(bank, trlab.gabor_bank())
    assert abs(trlab.param_count("Small", 587) / 2108672 - 1) < 0.05


def test_synth_dataset_shapes():
    images, labels, groups = trlab.synth_dataset("local-dots", n=12, size=32, classes=3, seed=4)
    assert images.shape == (12, 32, 32, 3)
    assert labels.shape == (12, 3)
    assert len(groups) == 12
    assert images.min() >= 0.0 and images.max() <= 1.0
    # labels are cumulative: grade > c implies grade > c - 1
    assert np.all(labels[:, 1:] <= labels[:, :-1])


def test_run_experiment_and_checkpoint(tmp_path):
    config = "\n".join(
        [
            "seed = 3",
            f"out = {tmp_path}",
            "data.n = 120",
            "data.size = 32",
            "data.classes = 3",
            "train.steps = 10",
            "eval.every = 5",
        ]
    )
    first = trlab.run_experiment(config)
    assert first["steps_run"] == 10
    assert not first["cached"]
    again = trlab.run_experiment(config)
    assert again["cached"] and again["log_csv"] == first["log_csv"]
    tensors, meta = trlab.load_checkpoint(first["checkpoint"])
    assert tensors["conv1/kernel"].shape == (5, 5, 3, 16)
    assert "graph_fingerprint" in meta
    with pytest.raises(trlab.ConfigError):
        trlab.run_experiment("seed = 1\ngraph.variant = Huge")
