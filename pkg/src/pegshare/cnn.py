"""Small convolutional context classifier, implemented directly on numpy.

Plain conv/ReLU/FC/softmax with analytic gradients, Adam, early stopping on
a held-out split, and transfer fine-tuning with a frozen prefix of conv
layers. Everything is float64 and single-threaded deterministic given the
seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, InsufficientDataError
from .images import Image

KERNEL = 3
PAD = 1
N_CLASSES = 3


@dataclass
class ConvSpec:
    filters: int
    stride: int = 2


@dataclass
class ClassifierArch:
    input_size: int = 64
    conv_layers: tuple = (ConvSpec(8), ConvSpec(16), ConvSpec(32))
    fc_layers: tuple = (64, N_CLASSES)

    def __post_init__(self):
        self.conv_layers = tuple(
            c if isinstance(c, ConvSpec) else ConvSpec(*c) for c in self.conv_layers)
        self.fc_layers = tuple(int(w) for w in self.fc_layers)
        if self.fc_layers[-1] != N_CLASSES:
            raise ConfigError("final layer width must be 3")
        if self.input_size <= 0:
            raise ConfigError("input size must be positive")

    def feature_shapes(self):
        """(channels, height) after each conv layer."""
        shapes = []
        c, h = 1, self.input_size
        for spec in self.conv_layers:
            h = (h + 2 * PAD - KERNEL) // spec.stride + 1
            c = spec.filters
            shapes.append((c, h))
        return shapes

    def layer_shapes(self):
        """Weight/bias shapes for every layer, conv first."""
        shapes = []
        c_in = 1
        for spec in self.conv_layers:
            shapes.append(((spec.filters, c_in, KERNEL, KERNEL), (spec.filters,)))
            c_in = spec.filters
        c, h = self.feature_shapes()[-1]
        width = c * h * h
        for w in self.fc_layers:
            shapes.append(((w, width), (w,)))
            width = w
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(w)) + int(np.prod(b)) for w, b in self.layer_shapes())

    def to_dict(self):
        return {
            "input_size": self.input_size,
            "conv_layers": [[c.filters, c.stride] for c in self.conv_layers],
            "fc_layers": list(self.fc_layers),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(input_size=d["input_size"],
                   conv_layers=tuple(tuple(c) for c in d["conv_layers"]),
                   fc_layers=tuple(d["fc_layers"]))


def full_scale_arch() -> ClassifierArch:
    """150x150 input, six conv layers, two fully connected layers."""
    return ClassifierArch(
        input_size=150,
        conv_layers=(ConvSpec(8, 2), ConvSpec(16, 1), ConvSpec(16, 2),
                     ConvSpec(32, 1), ConvSpec(32, 2), ConvSpec(64, 2)),
        fc_layers=(128, N_CLASSES))


@dataclass
class ContextProbs:
    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (N_CLASSES,) or abs(self.p.sum() - 1.0) > 1e-9 \
                or np.any(self.p < 0):
            raise ConfigError("probabilities must form a 3-simplex")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch: int = 32
    max_epochs: int = 100
    patience: int = 5
    split: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not (0.0 < self.split < 1.0):
            raise ConfigError("lr must be > 0 and split in (0, 1)")


class Classifier:
    """Flat-parameter network with per-layer offsets and a frozen prefix."""

    def __init__(self, arch: ClassifierArch, seed: int = 0, params=None,
                 frozen_prefix: int = 0):
        self.arch = arch
        self.seed = seed
        self.frozen_prefix = frozen_prefix
        n_layers = len(arch.conv_layers) + len(arch.fc_layers)
        if frozen_prefix > n_layers:
            raise ConfigError("frozen prefix exceeds layer count")
        self.offsets = []
        off = 0
        for w_shape, b_shape in arch.layer_shapes():
            nw, nb = int(np.prod(w_shape)), int(np.prod(b_shape))
            self.offsets.append((off, off + nw, off + nw + nb))
            off += nw + nb
        self.n_params = off
        if params is not None:
            params = np.asarray(params, dtype=float)
            if params.shape != (off,):
                raise ConfigError("parameter vector length mismatch")
            self.params = params.copy()
        else:
            self.params = self._init_params(seed)

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = np.zeros(self.n_params)
        for (start, wb, end), (w_shape, _) in zip(self.offsets,
                                                  self.arch.layer_shapes()):
            fan_in = int(np.prod(w_shape[1:]))
            limit = np.sqrt(6.0 / fan_in)
            params[start:wb] = rng.uniform(-limit, limit, wb - start)
        # zero final layer: uniform logits at initialization
        start, wb, _ = self.offsets[-1]
        params[start:wb] = 0.0
        return params

    def layer_params(self, idx):
        start, wb, end = self.offsets[idx]
        w_shape, b_shape = self.arch.layer_shapes()[idx]
        return (self.params[start:wb].reshape(w_shape),
                self.params[wb:end].reshape(b_shape))

    @property
    def frozen_boundary(self) -> int:
        """First parameter offset that is trainable."""
        if self.frozen_prefix == 0:
            return 0
        return self.offsets[self.frozen_prefix - 1][2]

    def copy(self) -> "Classifier":
        return Classifier(self.arch, seed=self.seed, params=self.params,
                          frozen_prefix=self.frozen_prefix)


def _conv_forward(x, W, b, stride):
    B, C, H, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, 3, 3)
    out = np.einsum("bchwij,fcij->bfhw", win, W, optimize=True) \
        + b[None, :, None, None]
    return out, (xp.shape, win, stride)


def _conv_backward(dout, x_shape, cache, W):
    xp_shape, win, stride = cache
    dW = np.einsum("bfhw,bchwij->fcij", dout, win, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    B, C, Hp, Wp = xp_shape
    dxp = np.zeros(xp_shape)
    Ho, Wo = dout.shape[2], dout.shape[3]
    contrib = np.einsum("bfhw,fcij->bchwij", dout, W, optimize=True)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            dxp[:, :, ki:ki + stride * Ho:stride,
                kj:kj + stride * Wo:stride] += contrib[:, :, :, :, ki, kj]
    dx = dxp[:, :, PAD:Hp - PAD, PAD:Wp - PAD]
    return dx, dW, db


def _forward_full(clf: Classifier, x):
    """x: (B, 1, H, W). Returns probabilities plus caches for backward."""
    caches = []
    a = x
    n_conv = len(clf.arch.conv_layers)
    for i, spec in enumerate(clf.arch.conv_layers):
        W, b = clf.layer_params(i)
        z, cache = _conv_forward(a, W, b, spec.stride)
        relu_mask = z > 0
        a_next = z * relu_mask
        caches.append(("conv", a.shape, cache, W, relu_mask))
        a = a_next
    B = a.shape[0]
    flat_shape = a.shape
    a = a.reshape(B, -1)
    n_fc = len(clf.arch.fc_layers)
    for j in range(n_fc):
        W, b = clf.layer_params(n_conv + j)
        z = a @ W.T + b
        if j < n_fc - 1:
            relu_mask = z > 0
            caches.append(("fc", a, W, relu_mask))
            a = z * relu_mask
        else:
            caches.append(("fc_final", a, W, None))
            a = z
    logits = a
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, (caches, flat_shape)


def _backward_full(clf: Classifier, probs, labels, state, x_shape):
    """Gradient of mean cross-entropy w.r.t. the flat parameter vector."""
    caches, flat_shape = state
    B = probs.shape[0]
    grad = np.zeros(clf.n_params)
    dz = probs.copy()
    dz[np.arange(B), labels] -= 1.0
    dz /= B

    n_conv = len(clf.arch.conv_layers)
    layer_idx = len(caches) - 1
    da = None
    for cache in reversed(caches):
        start, wb, end = clf.offsets[layer_idx]
        if cache[0] in ("fc", "fc_final"):
            _, a_in, W, relu_mask = cache
            if cache[0] == "fc":
                dz = da * relu_mask
            dW = dz.T @ a_in
            db = dz.sum(axis=0)
            da = dz @ W
            grad[start:wb] = dW.ravel()
            grad[wb:end] = db
        else:
            _, a_in_shape, conv_cache, W, relu_mask = cache
            if da.ndim == 2:
                da = da.reshape(flat_shape)
            dz = da * relu_mask
            dx, dW, db = _conv_backward(dz, a_in_shape, conv_cache, W)
            da = dx
            grad[start:wb] = dW.ravel()
            grad[wb:end] = db
        layer_idx -= 1
    return grad


def forward(clf: Classifier, img) -> ContextProbs:
    """Class probabilities for one image."""
    if isinstance(img, Image):
        data = img.data
    else:
        data = np.asarray(img, dtype=float)
    n = clf.arch.input_size
    if data.shape != (n, n):
        raise ConfigError("image size does not match the architecture")
    probs, _ = _forward_full(clf, data[None, None, :, :])
    return ContextProbs(probs[0])


def predict_context(clf: Classifier, img):
    probs = forward(clf, img)
    return {"c": int(np.argmax(probs.p)), "probs": probs}


def loss_and_grad(clf: Classifier, images, labels):
    """Mean cross-entropy and its flat-parameter gradient for a batch."""
    x = np.asarray(images, dtype=float)
    if x.ndim == 3:
        x = x[:, None, :, :]
    labels = np.asarray(labels, dtype=int)
    probs, state = _forward_full(clf, x)
    eps = 1e-300
    loss = float(-np.log(probs[np.arange(len(labels)), labels] + eps).mean())
    grad = _backward_full(clf, probs, labels, state, x.shape)
    return loss, grad


def evaluate(clf: Classifier, images, labels):
    x = np.asarray(images, dtype=float)[:, None, :, :]
    labels = np.asarray(labels, dtype=int)
    losses = []
    correct = 0
    for i in range(0, len(labels), 256):
        probs, _ = _forward_full(clf, x[i:i + 256])
        sel = probs[np.arange(len(probs)), labels[i:i + 256]]
        losses.append(-np.log(sel + 1e-300))
        correct += int((probs.argmax(axis=1) == labels[i:i + 256]).sum())
    return float(np.concatenate(losses).mean()), correct / len(labels)


def train(clf: Classifier, images, labels, cfg: TrainConfig):
    """Adam on mini-batches with a seeded 70/30 split and early stopping.

    Returns {"clf", "history"}; the classifier carries the parameters of the
    best-validation epoch, and any frozen-prefix parameters are bit-identical
    to their values before training.
    """
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(images) == 0:
        raise InsufficientDataError("empty dataset")
    if len(images) < 10:
        raise InsufficientDataError("need at least 10 samples")
    if set(np.unique(labels).tolist()) != {0, 1, 2}:
        raise InsufficientDataError("all 3 context labels must be present")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(images))
    n_train = int(round(cfg.split * len(images)))
    tr, va = order[:n_train], order[n_train:]
    if len(va) == 0:
        raise InsufficientDataError("validation split is empty")

    boundary = clf.frozen_boundary
    frozen_snapshot = clf.params[:boundary].copy()
    m = np.zeros(clf.n_params)
    v = np.zeros(clf.n_params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    history = []
    best = (np.inf, clf.params.copy(), -1)
    bad_epochs = 0
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(tr)
        for i in range(0, len(perm), cfg.batch):
            batch = perm[i:i + cfg.batch]
            _, grad = loss_and_grad(clf, images[batch], labels[batch])
            if boundary:
                grad[:boundary] = 0.0
            step += 1
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            mhat = m / (1 - beta1 ** step)
            vhat = v / (1 - beta2 ** step)
            update = cfg.lr * mhat / (np.sqrt(vhat) + eps)
            if boundary:
                update[:boundary] = 0.0
            clf.params -= update
        train_loss, train_acc = evaluate(clf, images[tr], labels[tr])
        val_loss, val_acc = evaluate(clf, images[va], labels[va])
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "train_acc": train_acc, "val_loss": val_loss,
                        "val_acc": val_acc})
        if val_loss < best[0]:
            best = (val_loss, clf.params.copy(), epoch)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
    clf.params = best[1]
    if boundary:
        clf.params[:boundary] = frozen_snapshot  # bit-identical guarantee
    return {"clf": clf, "history": history}


def finetune(clf: Classifier, images, labels, freeze: int = 2,
             cfg: TrainConfig | None = None):
    """Transfer fine-tuning with the first `freeze` layers fixed.

    Layers count conv-first, so freeze=2 fixes the first two conv layers;
    freezing every layer degenerates to producing history only.
    """
    cfg = cfg or TrainConfig()
    n_layers = len(clf.arch.conv_layers) + len(clf.arch.fc_layers)
    if freeze < 0 or freeze > n_layers:
        raise ConfigError("freeze count out of range")
    out = clf.copy()
    out.frozen_prefix = freeze
    return train(out, images, labels, cfg)


def save_classifier(clf: Classifier, path):
    """Binary format: one JSON header line, then the flat parameter vector
    as little-endian 32-bit floats."""
    import json

    header = {
        "format": "pegshare-classifier",
        "version": 1,
        "arch": clf.arch.to_dict(),
        "offsets": [list(o) for o in clf.offsets],
        "seed": clf.seed,
        "frozen_prefix": clf.frozen_prefix,
        "n_params": clf.n_params,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(clf.params.astype("<f4").tobytes())


def load_classifier(path) -> Classifier:
    import json

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    arch = ClassifierArch.from_dict(header["arch"])
    params = np.frombuffer(raw, dtype="<f4").astype(float)
    return Classifier(arch, seed=header["seed"], params=params,
                      frozen_prefix=header["frozen_prefix"])
