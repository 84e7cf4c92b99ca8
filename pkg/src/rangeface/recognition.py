"""Classifier training and rank-k recognition evaluation.

Two classifier families cover the recognition stage: a deterministic
nearest-neighbor model (one gallery vector or more per subject, score =
negative distance to the closest gallery sample of each label) and a
single-hidden-layer tanh network trained by full-batch gradient descent on
softmax cross-entropy.  Evaluation reports rank-k recognition rates with a
per-occlusion-kind breakdown and confusion counts.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DatasetError, EmptyInputError, ValidationError
from .core import _frozen

logger = logging.getLogger(__name__)

_MODEL_FORMAT_VERSION = 1


class OcclusionKind(str, enum.Enum):
    """Vocabulary of occlusion categories used to label scans."""

    NONE = "none"
    EYE = "eye"
    MOUTH = "mouth"
    GLASSES = "glasses"
    HAIR = "hair"


@dataclasses.dataclass(frozen=True)
class LabeledFeature:
    """One feature vector with its subject label and occlusion category."""

    subject_id: int
    occlusion_kind: OcclusionKind
    vector: np.ndarray

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=np.float64)
        if vector.ndim != 1 or vector.size == 0:
            raise ValidationError(
                f"feature vector must be a non-empty 1-D array, got shape {vector.shape}"
            )
        if not np.isfinite(vector).all():
            raise ValidationError("feature vector contains non-finite entries")
        object.__setattr__(self, "occlusion_kind", OcclusionKind(self.occlusion_kind))
        object.__setattr__(self, "subject_id", int(self.subject_id))
        object.__setattr__(self, "vector", _frozen(vector))


def _check_consistent(items):
    if not items:
        raise EmptyInputError("feature set is empty")
    length = items[0].vector.size
    for item in items:
        if item.vector.size != length:
            raise ValidationError(
                f"inconsistent feature lengths: {length} vs {item.vector.size}"
            )
    return length


def split_dataset(items, test_fraction, seed):
    """Split features into train and test sets, stratified per subject.

    For every subject, floor(n_subject * test_fraction) samples go to the
    test set, always leaving at least one sample in training so the gallery
    covers all subjects.  Subjects with a single sample cannot be split and
    are kept in training (with a warning).  Deterministic for a fixed seed.
    """
    if not 0 < test_fraction < 1:
        raise ValidationError(
            f"test_fraction must lie strictly between 0 and 1, got {test_fraction}"
        )
    _check_consistent(items)

    by_subject = {}
    for index, item in enumerate(items):
        by_subject.setdefault(item.subject_id, []).append(index)

    rng = np.random.default_rng(seed)
    test_indices = set()
    for subject in sorted(by_subject):
        indices = by_subject[subject]
        if len(indices) == 1:
            logger.warning(
                "subject %d has a single sample; keeping it in training", subject
            )
            continue
        n_test = min(int(len(indices) * test_fraction), len(indices) - 1)
        order = rng.permutation(len(indices))
        test_indices.update(indices[i] for i in order[:n_test])

    train = [item for i, item in enumerate(items) if i not in test_indices]
    test = [item for i, item in enumerate(items) if i in test_indices]
    return train, test


@dataclasses.dataclass
class MlpConfig:
    """Hyper-parameters for the hidden-layer network."""

    hidden_units: int = 24
    epochs: int = 500
    learning_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValidationError("hidden_units must be at least 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")


@dataclasses.dataclass
class ClassifierConfig:
    kind: str = "nearest_neighbor"
    mlp: MlpConfig = dataclasses.field(default_factory=MlpConfig)

    def __post_init__(self):
        if self.kind not in ("nearest_neighbor", "mlp"):
            raise ValidationError(f"unknown classifier kind: {self.kind!r}")


class NearestNeighborModel:
    """Gallery-based classifier scoring labels by negative nearest distance."""

    kind = "nearest_neighbor"

    def __init__(self, vectors, labels):
        vectors = np.asarray(vectors, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if vectors.ndim != 2 or len(vectors) == 0:
            raise ValidationError("gallery must be a non-empty 2-D array")
        if len(labels) != len(vectors):
            raise ValidationError("gallery labels must match gallery vectors")
        self.gallery_vectors = vectors
        self.gallery_labels = labels
        self.class_labels = np.unique(labels)
        self.vector_length = vectors.shape[1]

    def scores(self, vector):
        distances = cdist(vector[None, :], self.gallery_vectors)[0]
        best = np.full(len(self.class_labels), np.inf)
        for position, label in enumerate(self.class_labels):
            best[position] = distances[self.gallery_labels == label].min()
        return -best


class MlpModel:
    """Single-hidden-layer tanh network with softmax output."""

    kind = "mlp"

    def __init__(self, params, class_labels, vector_length, hidden_units, config,
                 loss_history):
        self.params = params
        self.class_labels = np.asarray(class_labels, dtype=np.int64)
        self.vector_length = vector_length
        self.hidden_units = hidden_units
        self.config = config
        self.loss_history = tuple(loss_history)
        self.epochs_trained = len(loss_history) - 1

    def scores(self, vector):
        probabilities = _mlp_forward(
            self.params, vector[None, :], len(self.class_labels), self.hidden_units
        )
        return probabilities[0]


def _unpack_params(params, n_inputs, n_hidden, n_classes):
    sizes = (n_inputs * n_hidden, n_hidden, n_hidden * n_classes, n_classes)
    if params.size != sum(sizes):
        raise ValidationError(
            f"parameter vector has length {params.size}, expected {sum(sizes)}"
        )
    w1_end = sizes[0]
    b1_end = w1_end + sizes[1]
    w2_end = b1_end + sizes[2]
    w1 = params[:w1_end].reshape(n_inputs, n_hidden)
    b1 = params[w1_end:b1_end]
    w2 = params[b1_end:w2_end].reshape(n_hidden, n_classes)
    b2 = params[w2_end:]
    return w1, b1, w2, b2


def _mlp_forward(params, features, n_classes, n_hidden):
    w1, b1, w2, b2 = _unpack_params(params, features.shape[1], n_hidden, n_classes)
    hidden = np.tanh(features @ w1 + b1)
    logits = hidden @ w2 + b2
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


def mlp_loss_and_grad(params, features, label_indices, n_classes, n_hidden):
    """Mean cross-entropy loss and its gradient for a flat parameter vector.

    Exposed separately so the analytic gradient can be checked against
    finite differences.
    """
    params = np.asarray(params, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    n = len(features)
    w1, b1, w2, b2 = _unpack_params(params, features.shape[1], n_hidden, n_classes)

    hidden = np.tanh(features @ w1 + b1)
    logits = hidden @ w2 + b2
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probabilities = exp / exp.sum(axis=1, keepdims=True)
    log_probs = logits - np.log(exp.sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), label_indices].mean()

    d_logits = probabilities.copy()
    d_logits[np.arange(n), label_indices] -= 1.0
    d_logits /= n
    d_w2 = hidden.T @ d_logits
    d_b2 = d_logits.sum(axis=0)
    d_hidden = d_logits @ w2.T
    d_pre = d_hidden * (1.0 - hidden**2)
    d_w1 = features.T @ d_pre
    d_b1 = d_pre.sum(axis=0)

    grad = np.concatenate(
        [d_w1.ravel(), d_b1.ravel(), d_w2.ravel(), d_b2.ravel()]
    )
    return loss, grad


def initial_mlp_params(n_inputs, n_hidden, n_classes, seed):
    rng = np.random.default_rng(seed)
    w1 = rng.normal(scale=1.0 / np.sqrt(n_inputs), size=(n_inputs, n_hidden))
    w2 = rng.normal(scale=1.0 / np.sqrt(n_hidden), size=(n_hidden, n_classes))
    return np.concatenate(
        [w1.ravel(), np.zeros(n_hidden), w2.ravel(), np.zeros(n_classes)]
    )


def train(train_set, config=None):
    """Fit a classifier on labeled feature vectors."""
    if config is None:
        config = ClassifierConfig()
    length = _check_consistent(train_set)
    labels = np.array([item.subject_id for item in train_set], dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ValidationError("training requires at least 2 distinct subjects")
    vectors = np.stack([item.vector for item in train_set])

    if config.kind == "nearest_neighbor":
        return NearestNeighborModel(vectors, labels)

    mlp = config.mlp
    class_labels = np.unique(labels)
    label_indices = np.searchsorted(class_labels, labels)
    params = initial_mlp_params(length, mlp.hidden_units, len(class_labels), mlp.seed)
    history = []
    for _ in range(mlp.epochs):
        loss, grad = mlp_loss_and_grad(
            params, vectors, label_indices, len(class_labels), mlp.hidden_units
        )
        history.append(loss)
        params = params - mlp.learning_rate * grad
    final_loss, _ = mlp_loss_and_grad(
        params, vectors, label_indices, len(class_labels), mlp.hidden_units
    )
    history.append(final_loss)
    return MlpModel(params, class_labels, length, mlp.hidden_units, mlp, history)


def save_model(path, model) -> None:
    """Serialize a trained classifier to a .npz file (atomic replace)."""
    payload = {
        "format_version": np.int64(_MODEL_FORMAT_VERSION),
        "kind": np.str_(model.kind),
    }
    if model.kind == "nearest_neighbor":
        payload["gallery_vectors"] = model.gallery_vectors
        payload["gallery_labels"] = model.gallery_labels
    else:
        payload.update(
            params=model.params,
            class_labels=model.class_labels,
            vector_length=np.int64(model.vector_length),
            hidden_units=np.int64(model.hidden_units),
            loss_history=np.asarray(model.loss_history),
            epochs=np.int64(model.config.epochs),
            learning_rate=np.float64(model.config.learning_rate),
            seed=np.int64(model.config.seed),
        )
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            np.savez(handle, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path):
    """Read back a classifier written by :func:`save_model`."""
    path = Path(path)
    try:
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != _MODEL_FORMAT_VERSION:
                raise DatasetError(
                    f"{path}: unsupported model format version {version}"
                )
            kind = str(data["kind"])
            if kind == "nearest_neighbor":
                return NearestNeighborModel(
                    data["gallery_vectors"], data["gallery_labels"]
                )
            if kind == "mlp":
                config = MlpConfig(
                    hidden_units=int(data["hidden_units"]),
                    epochs=int(data["epochs"]),
                    learning_rate=float(data["learning_rate"]),
                    seed=int(data["seed"]),
                )
                return MlpModel(
                    params=data["params"],
                    class_labels=data["class_labels"],
                    vector_length=int(data["vector_length"]),
                    hidden_units=int(data["hidden_units"]),
                    config=config,
                    loss_history=[float(v) for v in data["loss_history"]],
                )
            raise DatasetError(f"{path}: unknown model kind {kind!r}")
    except (OSError, KeyError, ValueError) as exc:
        raise DatasetError(f"cannot read model file {path}: {exc}") from exc


def classify(model, vector):
    """Rank all known labels for one query vector, best first.

    Returns (label, score) pairs with scores descending; ties are broken in
    favor of the lower subject id.
    """
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or vector.size != model.vector_length:
        raise ValidationError(
            f"query vector has shape {vector.shape}, expected ({model.vector_length},)"
        )
    scores = model.scores(vector)
    order = np.lexsort((model.class_labels, -scores))
    return [(int(model.class_labels[i]), float(scores[i])) for i in order]


@dataclasses.dataclass(frozen=True)
class EvaluationReport:
    """Rank-k recognition rates with per-occlusion and confusion detail."""

    rank_rates: dict
    per_occlusion: dict
    confusion: dict
    n_test: int
    split_description: str = ""

    def __post_init__(self):
        ks = sorted(self.rank_rates)
        rates = [self.rank_rates[k] for k in ks]
        if any(b < a - 1e-12 for a, b in zip(rates, rates[1:])):
            raise ValidationError("rank-k rates must be non-decreasing in k")

    @property
    def rank_1(self):
        return self.rank_rates.get(1)

    @property
    def rank_2(self):
        return self.rank_rates.get(2)

    def to_dict(self):
        return {
            "n_test": self.n_test,
            "split": self.split_description,
            "rank_rates": {str(k): v for k, v in sorted(self.rank_rates.items())},
            "per_occlusion": {
                kind: {
                    "count": entry["count"],
                    "rank_rates": {
                        str(k): v for k, v in sorted(entry["rank_rates"].items())
                    },
                }
                for kind, entry in sorted(self.per_occlusion.items())
            },
            "confusion": {
                str(true): {str(pred): count for pred, count in sorted(row.items())}
                for true, row in sorted(self.confusion.items())
            },
        }


def evaluate(model, test_set, ks=(1, 2), split_description=""):
    """Measure rank-k recognition rates of a trained model on a test set."""
    if not test_set:
        raise EmptyInputError("test set is empty")
    ks = sorted({int(k) for k in ks})
    if ks[0] < 1:
        raise ValidationError("ranks must be positive integers")

    hits = {k: 0 for k in ks}
    per_kind = {}
    confusion = {}
    for item in test_set:
        ranked = classify(model, item.vector)
        ranked_labels = [label for label, _ in ranked]
        try:
            position = ranked_labels.index(item.subject_id) + 1
        except ValueError:
            position = len(ranked_labels) + 1

        kind = item.occlusion_kind.value
        bucket = per_kind.setdefault(kind, {"count": 0, "hits": {k: 0 for k in ks}})
        bucket["count"] += 1
        for k in ks:
            if position <= k:
                hits[k] += 1
                bucket["hits"][k] += 1

        row = confusion.setdefault(item.subject_id, {})
        row[ranked_labels[0]] = row.get(ranked_labels[0], 0) + 1

    n = len(test_set)
    per_occlusion = {
        kind: {
            "count": bucket["count"],
            "rank_rates": {k: bucket["hits"][k] / bucket["count"] for k in ks},
        }
        for kind, bucket in per_kind.items()
    }
    return EvaluationReport(
        rank_rates={k: hits[k] / n for k in ks},
        per_occlusion=per_occlusion,
        confusion=confusion,
        n_test=n,
        split_description=split_description,
    )
