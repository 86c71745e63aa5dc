"""Synthetic grating dataset and a small differentiable classifier.

Classes are oriented sinusoidal gratings: class k has orientation
k*pi/K and its own spatial frequency, placed in the upper half of the
radial bands so that attack energy lands where the spectral pipeline
can see it. The grating amplitude is kept small so the class margins
sit inside the standard attack budgets.

The classifier is a two-layer tanh network trained with full-batch
gradient descent and manual backprop; training is single-threaded-
deterministic given the seed. Inputs are standardized internally
(centered at 0.5, scaled by 4) purely to condition the optimization;
gradients are reported with respect to the raw pixels.
"""
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import MissingPrerequisiteError, TrainingError, UnsupportedError
from .tensor_store import load_raw, save_raw

HIDDEN_UNITS = 64
TEXTURE_SIGMA = 0.05
# low-frequency-heavy texture, amplitude spectrum ~ (1+r)^-p like natural images
TEXTURE_EXPONENT = 1.2
GRATING_AMPLITUDE = 0.04
INPUT_OFFSET = 0.5
INPUT_SCALE = 4.0
# class spatial frequencies span these radii (cycles per image)
RADIUS_LOW = 12.0
RADIUS_HIGH = 15.0


@dataclass
class SyntheticDataset:
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    train_idx: np.ndarray
    test_idx: np.ndarray
    k: int


@dataclass
class ToyClassifier:
    w1: np.ndarray  # (D, HIDDEN)
    b1: np.ndarray  # (HIDDEN,)
    w2: np.ndarray  # (HIDDEN, K)
    b2: np.ndarray  # (K,)
    h: int
    w: int
    c: int
    activation: str = "tanh"  # "linear" exists for gradient probes


def class_frequency(k, n_classes):
    """Integer frequency vector (fu, fv) for class k."""
    theta = k * np.pi / n_classes
    if n_classes > 1:
        radius = RADIUS_LOW + (RADIUS_HIGH - RADIUS_LOW) * k / (n_classes - 1)
    else:
        radius = RADIUS_LOW
    return int(np.rint(radius * np.cos(theta))), int(np.rint(radius * np.sin(theta)))


def make_grating(k, n_classes, h, w, phase=0.0):
    """Noiseless class-k grating image, (H, W, 1), mid-gray carrier."""
    fu, fv = class_frequency(k, n_classes)
    hh, ww = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pattern = np.cos(2.0 * np.pi * (fu * hh / h + fv * ww / w) + phase)
    return (0.5 + GRATING_AMPLITUDE * pattern)[:, :, None]


def generate_dataset(seed, n_per_class, k, h=32, w=32, c=3):
    """Deterministic class-balanced dataset; 80/20 split by index rule
    (every fifth index is test)."""
    if k < 2:
        raise UnsupportedError("need at least 2 classes")
    if n_per_class < 1:
        raise UnsupportedError("need at least 1 image per class")
    rng = np.random.default_rng(seed)
    n = n_per_class * k
    images = np.empty((n, h, w, c), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        label = i % k
        base = make_grating(label, k, h, w)
        img = base + rng.normal(0.0, TEXTURE_SIGMA, size=(h, w, c))
        images[i] = np.clip(img, 0.0, 1.0).astype(np.float32)
        labels[i] = label
    idx = np.arange(n)
    test = idx % 5 == 4
    return SyntheticDataset(images=images, labels=labels,
                            train_idx=idx[~test], test_idx=idx[test], k=k)


def init_classifier(h, w, c, k, seed):
    """Seeded normal init, scale 0.01; zero biases."""
    rng = np.random.default_rng(seed)
    d = h * w * c
    return ToyClassifier(
        w1=rng.normal(0.0, 0.01, size=(d, HIDDEN_UNITS)),
        b1=np.zeros(HIDDEN_UNITS),
        w2=rng.normal(0.0, 0.01, size=(HIDDEN_UNITS, k)),
        b2=np.zeros(k),
        h=h, w=w, c=c)


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(clf, x_flat):
    z1 = x_flat @ clf.w1 + clf.b1
    a1 = np.tanh(z1) if clf.activation == "tanh" else z1
    logits = a1 @ clf.w2 + clf.b2
    return z1, a1, _softmax(logits)


def _flatten(clf, images):
    """Flatten and standardize: x -> (x - offset) * scale."""
    arr = np.asarray(images, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[1:] != (clf.h, clf.w, clf.c):
        raise UnsupportedError(
            f"image shape {arr.shape[1:]} != classifier input "
            f"({clf.h}, {clf.w}, {clf.c})")
    flat = (arr.reshape(arr.shape[0], -1) - INPUT_OFFSET) * INPUT_SCALE
    return flat, single


def train(clf, dataset, epochs, lr, seed=None):
    """Full-batch gradient descent; returns (classifier, final_loss).

    The classifier argument is treated as the initialization and is not
    mutated. ``seed`` re-initializes the parameters when given.
    """
    if dataset.train_idx.size == 0:
        raise UnsupportedError("dataset has no training samples")
    if seed is not None:
        clf = init_classifier(clf.h, clf.w, clf.c, clf.w2.shape[1], seed)
    else:
        clf = ToyClassifier(w1=clf.w1.copy(), b1=clf.b1.copy(),
                            w2=clf.w2.copy(), b2=clf.b2.copy(),
                            h=clf.h, w=clf.w, c=clf.c,
                            activation=clf.activation)
    x, _ = _flatten(clf, dataset.images[dataset.train_idx])
    y = dataset.labels[dataset.train_idx]
    n, k = x.shape[0], clf.w2.shape[1]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0

    loss = float("nan")
    for epoch in range(epochs):
        z1, a1, probs = _forward(clf, x)
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
        if not np.isfinite(loss):
            raise TrainingError(
                f"loss became non-finite at epoch {epoch}; lower lr (got {lr})")
        dlogits = (probs - onehot) / n
        dw2 = a1.T @ dlogits
        db2 = dlogits.sum(axis=0)
        da1 = dlogits @ clf.w2.T
        dz1 = da1 * (1.0 - a1 * a1) if clf.activation == "tanh" else da1
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        clf.w1 -= lr * dw1
        clf.b1 -= lr * db1
        clf.w2 -= lr * dw2
        clf.b2 -= lr * db2
    return clf, loss


def predict(clf, image):
    """Argmax label (ties -> lowest index) and the probability vector."""
    x_flat, single = _flatten(clf, image)
    _, _, probs = _forward(clf, x_flat)
    labels = np.argmax(probs, axis=-1)
    if single:
        return int(labels[0]), probs[0]
    return labels, probs


def cross_entropy(clf, image, label):
    """Scalar CE loss of one image at the given label."""
    x_flat, _ = _flatten(clf, image)
    _, _, probs = _forward(clf, x_flat)
    return float(-np.log(probs[0, label] + 1e-300))


def input_gradient(clf, image, label):
    """Gradient of the CE loss with respect to the raw input pixels."""
    x_flat, _ = _flatten(clf, image)
    _, a1, probs = _forward(clf, x_flat)
    dlogits = probs.copy()
    dlogits[0, label] -= 1.0
    da1 = dlogits @ clf.w2.T
    dz1 = da1 * (1.0 - a1 * a1) if clf.activation == "tanh" else da1
    dx = (dz1 @ clf.w1.T) * INPUT_SCALE
    return dx.reshape(clf.h, clf.w, clf.c)


def accuracy(clf, images, labels):
    preds, _ = predict(clf, images)
    return float(np.mean(preds == np.asarray(labels)))


_SIDECAR = "classifier.json"
_PARAMS = ("w1", "b1", "w2", "b2")


def save_classifier(directory, clf):
    """MPTF tensors plus a JSON sidecar (float32 quantization applies)."""
    os.makedirs(directory, exist_ok=True)
    for name in _PARAMS:
        save_raw(os.path.join(directory, f"{name}.mptf"),
                 getattr(clf, name).astype(np.float32))
    sidecar = {"h": clf.h, "w": clf.w, "c": clf.c,
               "k": int(clf.w2.shape[1]), "hidden": HIDDEN_UNITS,
               "activation": clf.activation,
               "params": [f"{n}.mptf" for n in _PARAMS]}
    with open(os.path.join(directory, _SIDECAR), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_classifier(directory):
    sidecar_path = os.path.join(directory, _SIDECAR)
    if not os.path.exists(sidecar_path):
        raise MissingPrerequisiteError(
            f"no classifier at {directory}; run the train-clf command first")
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    params = {name: load_raw(os.path.join(directory, f"{name}.mptf")).astype(np.float64)
              for name in _PARAMS}
    return ToyClassifier(h=meta["h"], w=meta["w"], c=meta["c"],
                         activation=meta.get("activation", "tanh"), **params)
