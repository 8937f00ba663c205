import numpy as np
import pytest

from pegshare.cnn import (Classifier, ClassifierArch, ConvSpec, TrainConfig,
                          finetune, forward, load_classifier, loss_and_grad,
                          predict_context, save_classifier, train)
from pegshare.errors import ConfigError, InsufficientDataError
from pegshare.images import Image, preprocess


class TestPreprocess:
    def test_constant(self):
        out = preprocess(np.full((37, 53), 0.5), 16)
        assert np.allclose(out.data, 0.5)
        assert out.width == out.height == 16

    def test_hand_area_average(self):
        raw = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = preprocess(raw, 1)
        assert out.data[0, 0] == pytest.approx(0.5)

    def test_pure_red(self):
        raw = np.zeros((8, 8, 3))
        raw[:, :, 0] = 1.0
        out = preprocess(raw, 4)
        assert np.allclose(out.data, 0.299)

    def test_fractional_downscale(self):
        # 3 -> 2: each output cell averages 1.5 input cells exactly
        raw = np.array([[0.0, 0.5, 1.0]] * 3)
        out = preprocess(raw, 2)
        assert out.data[0, 0] == pytest.approx((0.0 + 0.5 * 0.5) / 1.5)
        assert out.data[0, 1] == pytest.approx((0.5 * 0.5 + 1.0) / 1.5)

    def test_empty(self):
        with pytest.raises(ConfigError):
            preprocess(np.zeros((0, 4)), 4)


def tiny_arch():
    return ClassifierArch(input_size=16,
                          conv_layers=(ConvSpec(4, 2), ConvSpec(6, 2)),
                          fc_layers=(10, 3))


def toy_dataset(n_per_class=30, size=16, seed=0):
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label, level in enumerate((0.1, 0.5, 0.9)):
        for _ in range(n_per_class):
            img = np.clip(level + rng.normal(0, 0.02, (size, size)), 0, 1)
            images.append(img)
            labels.append(label)
    return np.array(images), np.array(labels)


class TestForward:
    def test_softmax_simplex(self):
        clf = Classifier(tiny_arch(), seed=1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            probs = forward(clf, rng.uniform(0, 1, (16, 16)))
            assert probs.p.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(probs.p >= 0)

    def test_zero_final_layer_uniform(self):
        clf = Classifier(tiny_arch(), seed=1)
        start, _, end = clf.offsets[-1]
        clf.params[start:end] = 0.0
        probs = forward(clf, np.random.default_rng(1).uniform(0, 1, (16, 16)))
        assert np.allclose(probs.p, 1.0 / 3.0, atol=1e-12)

    def test_size_mismatch(self):
        clf = Classifier(tiny_arch())
        with pytest.raises(ConfigError):
            forward(clf, np.zeros((8, 8)))

    def test_shift_invariance(self):
        clf = Classifier(tiny_arch(), seed=2)
        img = np.random.default_rng(2).uniform(0, 1, (16, 16))
        p1 = forward(clf, img).p
        # add a constant to all final-layer biases: logits shift uniformly
        _, wb, end = clf.offsets[-1]
        clf.params[wb:end] += 7.0
        p2 = forward(clf, img).p
        assert np.allclose(p1, p2, atol=1e-9)


class TestGradients:
    def test_matches_finite_differences(self):
        clf = Classifier(tiny_arch(), seed=3)
        rng = np.random.default_rng(3)
        clf.params = rng.normal(0, 0.3, clf.n_params)  # random params per spec
        x = rng.uniform(0, 1, (2, 16, 16))
        y = np.array([0, 2])
        loss, grad = loss_and_grad(clf, x, y)
        assert loss > 0
        eps = 1e-6
        # sample indices across every layer
        idx = []
        for (start, wb, end) in clf.offsets:
            idx.extend(rng.integers(start, wb, 6).tolist())
            idx.extend(rng.integers(wb, end, 2).tolist())
        for i in idx:
            orig = clf.params[i]
            clf.params[i] = orig + eps
            lp, _ = loss_and_grad(clf, x, y)
            clf.params[i] = orig - eps
            lm, _ = loss_and_grad(clf, x, y)
            clf.params[i] = orig
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(grad[i]), 1e-8)
            assert abs(fd - grad[i]) / denom < 1e-4, f"param {i}"


class TestTrain:
    def test_toy_training(self):
        images, labels = toy_dataset()
        clf = Classifier(tiny_arch(), seed=4)
        cfg = TrainConfig(lr=1e-3, batch=16, max_epochs=200, patience=200, seed=4)
        out = train(clf, images, labels, cfg)
        h = out["history"]
        assert h[0]["train_loss"] <= np.log(3) + 0.25
        # loss decreasing over the first epochs
        assert h[4]["train_loss"] < h[0]["train_loss"]
        best_acc = max(e["train_acc"] for e in h)
        assert best_acc == 1.0

    def test_init_loss_near_uniform(self):
        images, labels = toy_dataset()
        clf = Classifier(tiny_arch(), seed=5)
        from pegshare.cnn import evaluate
        loss, _ = evaluate(clf, images, labels)
        assert loss <= np.log(3) + 0.05

    def test_missing_class(self):
        images, labels = toy_dataset()
        keep = labels != 2
        clf = Classifier(tiny_arch(), seed=0)
        with pytest.raises(InsufficientDataError):
            train(clf, images[keep], labels[keep], TrainConfig())

    def test_empty_dataset(self):
        clf = Classifier(tiny_arch(), seed=0)
        with pytest.raises(InsufficientDataError):
            train(clf, np.zeros((0, 16, 16)), np.zeros(0, dtype=int), TrainConfig())

    def test_bit_reproducible(self):
        images, labels = toy_dataset()
        cfg = TrainConfig(lr=1e-3, batch=16, max_epochs=3, patience=5, seed=7)
        a = train(Classifier(tiny_arch(), seed=7), images, labels, cfg)
        b = train(Classifier(tiny_arch(), seed=7), images, labels, cfg)
        assert np.array_equal(a["clf"].params, b["clf"].params)

    def test_predict_toy_exemplar(self):
        images, labels = toy_dataset()
        clf = Classifier(tiny_arch(), seed=4)
        cfg = TrainConfig(lr=1e-3, batch=16, max_epochs=60, patience=60, seed=4)
        clf = train(clf, images, labels, cfg)["clf"]
        out = predict_context(clf, np.full((16, 16), 0.1))
        assert out["c"] == 0

    def test_tie_break_lowest_index(self):
        clf = Classifier(tiny_arch(), seed=1)
        start, _, end = clf.offsets[-1]
        clf.params[start:end] = 0.0
        out = predict_context(clf, np.full((16, 16), 0.3))
        assert out["c"] == 0


class TestFinetune:
    def test_full_freeze(self):
        images, labels = toy_dataset(n_per_class=5)
        clf = Classifier(tiny_arch(), seed=8)
        before = clf.params.copy()
        n_layers = len(clf.arch.conv_layers) + len(clf.arch.fc_layers)
        out = finetune(clf, images, labels, freeze=n_layers,
                       cfg=TrainConfig(max_epochs=2, patience=5, seed=8))
        assert np.array_equal(out["clf"].params, before)
        assert len(out["history"]) > 0

    def test_prefix_freeze_contract(self):
        images, labels = toy_dataset(n_per_class=10)
        clf = Classifier(tiny_arch(), seed=9)
        before = clf.params.copy()
        out = finetune(clf, images, labels, freeze=2,
                       cfg=TrainConfig(lr=1e-3, max_epochs=3, patience=5, seed=9))
        new = out["clf"]
        boundary = new.frozen_boundary
        assert boundary == clf.offsets[1][2]
        assert np.array_equal(new.params[:boundary], before[:boundary])
        assert not np.array_equal(new.params[boundary:], before[boundary:])


class TestPersistence:
    def test_round_trip(self, tmp_path):
        clf = Classifier(tiny_arch(), seed=10)
        path = tmp_path / "clf.bin"
        save_classifier(clf, path)
        loaded = load_classifier(path)
        assert loaded.arch == clf.arch
        assert np.allclose(loaded.params, clf.params, atol=1e-6)
        # writing the loaded model again is byte-identical
        path2 = tmp_path / "clf2.bin"
        save_classifier(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()
