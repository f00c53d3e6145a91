"""The four thresholdable domain-classifier families.

All variants operate on frozen, unit-norm embedding vectors and expose
per-class scores that a downstream calibration step thresholds:

* ``LinearReadout``  - multinomial logistic readout trained by minibatch SGD
* ``CentroidModel``  - softmax over cosine similarities to class centroids
* ``DensityRatioModel`` - binary readout turned into a prior-corrected
  probability ratio, accepted when the ratio clears a threshold
* ``KnnStyleModel``  - accepts a sample when at least one of the k most
  cosine-similar database records carries the target style
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TrainingDiverged, UsageError
from .labels import DomainLabel

RATIO_THRESHOLD_DEFAULT = 0.2
INIT_SCALE = 0.01


@dataclass
class TrainConfig:
    """SGD hyperparameters; the learning rate is multiplied by
    ``lr_step_factor`` every ``lr_step_epochs`` epochs."""

    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 0.1
    weight_decay: float = 5e-4
    lr_step_epochs: int = 20
    lr_step_factor: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        for name in ("batch_size", "learning_rate", "lr_step_epochs", "lr_step_factor"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise UsageError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "lr_step_epochs": self.lr_step_epochs,
            "lr_step_factor": self.lr_step_factor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LinearReadout:
    """weights: (num_classes, dim); scores are softmax(W x + b)."""

    weights: np.ndarray
    bias: np.ndarray
    class_order: list[int]
    config: TrainConfig | None = None
    # full-dataset mean cross-entropy recorded at the end of each epoch
    epoch_losses: list[float] = field(default_factory=list, repr=False)

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dimension:
            raise UsageError(
                f"input dimension {x.shape[-1]} != model dimension {self.dimension}"
            )
        return x @ self.weights.T + self.bias

    def scores(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))


@dataclass
class CentroidModel:
    """One unit-norm centroid per class; scores are softmax of cosines."""

    centroids: np.ndarray
    class_order: list[int]

    @property
    def dimension(self) -> int:
        return self.centroids.shape[1]

    def scores(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dimension:
            raise UsageError(
                f"input dimension {x.shape[-1]} != model dimension {self.dimension}"
            )
        return softmax(x @ self.centroids.T)


@dataclass
class DensityRatioModel:
    """Binary readout over {reference, shifted}.

    ``ratio(x) = s/(1-s) * prior_correction`` with s the reference-class
    probability; a sample is accepted when the ratio reaches
    ``ratio_threshold``. ``prior_correction`` is n_shifted / n_reference.
    """

    readout: LinearReadout
    reference_class: DomainLabel
    prior_correction: float
    ratio_threshold: float = RATIO_THRESHOLD_DEFAULT

    def __post_init__(self):
        if self.prior_correction <= 0:
            raise UsageError("prior_correction must be positive")
        if self.ratio_threshold <= 0:
            raise UsageError("ratio_threshold must be positive")

    @property
    def dimension(self) -> int:
        return self.readout.dimension

    def ratios(self, x: np.ndarray) -> np.ndarray:
        s = self.readout.scores(x)[..., 0]
        with np.errstate(divide="ignore"):
            r = np.where(s >= 1.0, np.inf, s / (1.0 - s)) * self.prior_correction
        return r

    def accepts(self, x: np.ndarray) -> np.ndarray:
        return self.ratios(x) >= self.ratio_threshold


@dataclass
class KnnStyleModel:
    """Labeled database queried by cosine similarity; similarity ties are
    broken by ascending record id."""

    database_ids: np.ndarray
    database_vectors: np.ndarray
    database_labels: np.ndarray
    k: int
    target_style: DomainLabel

    def __post_init__(self):
        self.database_ids = np.asarray(self.database_ids, np.uint64)
        self.database_vectors = np.asarray(self.database_vectors, np.float32)
        self.database_labels = np.asarray(self.database_labels, np.int8)
        if len(self.database_ids) == 0:
            raise UsageError("knn database must be non-empty")
        if not (1 <= self.k <= len(self.database_ids)):
            raise UsageError(f"k={self.k} outside [1, {len(self.database_ids)}]")
        if np.any(self.database_labels == int(DomainLabel.UNKNOWN)):
            raise UsageError("knn database labels must be known")

    @property
    def dimension(self) -> int:
        return self.database_vectors.shape[1]

    def neighbor_order(self, x: np.ndarray) -> np.ndarray:
        """Database indices sorted by descending similarity, ids ascending
        on ties; x may be one vector or a batch."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dimension:
            raise UsageError(
                f"input dimension {x.shape[1]} != model dimension {self.dimension}"
            )
        sims = x @ self.database_vectors.astype(np.float64).T
        # lexsort: last key is primary
        return np.stack(
            [np.lexsort((self.database_ids, -sims[q])) for q in range(x.shape[0])]
        )

    def decide(self, x: np.ndarray, k: int | None = None) -> np.ndarray:
        """True where >=1 of the k nearest records has the target style."""
        k = self.k if k is None else k
        if not (1 <= k <= len(self.database_ids)):
            raise UsageError(f"k={k} outside [1, {len(self.database_ids)}]")
        order = self.neighbor_order(x)[:, :k]
        hits = self.database_labels[order] == int(self.target_style)
        return hits.any(axis=1)


def knn_style_decision(model: KnnStyleModel, x: np.ndarray) -> bool:
    return bool(model.decide(np.atleast_2d(x))[0])


def mean_cross_entropy(weights: np.ndarray, bias: np.ndarray,
                       x: np.ndarray, y: np.ndarray) -> float:
    p = softmax(x @ weights.T + bias)
    eps = np.finfo(np.float64).tiny
    return float(-np.mean(np.log(p[np.arange(len(y)), y] + eps)))


def fit_linear_readout(
    x: np.ndarray, y: np.ndarray, n_classes: int, cfg: TrainConfig
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Minibatch-SGD multinomial logistic regression over frozen embeddings.

    Minimizes cross-entropy with L2 weight decay on the weight matrix.
    Deterministic for a fixed seed: seeded Gaussian init (scale 0.01, zero
    bias) and a seeded per-epoch shuffle from the same generator, so
    training for fewer epochs reproduces a prefix of the same trajectory.
    """
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, dim = x.shape
    counts = np.bincount(y, minlength=n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise UsageError(f"class index {int(empty[0])} has no training samples")

    rng = np.random.default_rng(cfg.seed)
    weights = rng.normal(0.0, 1.0, size=(n_classes, dim)) * INIT_SCALE
    bias = np.zeros(n_classes)
    losses: list[float] = []

    # overflow on a diverging trajectory is reported via the epoch-end
    # finiteness check, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            lr = cfg.learning_rate * cfg.lr_step_factor ** (epoch // cfg.lr_step_epochs)
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                xb, yb = x[idx], y[idx]
                p = softmax(xb @ weights.T + bias)
                p[np.arange(len(idx)), yb] -= 1.0
                p /= len(idx)
                grad_w = p.T @ xb + cfg.weight_decay * weights
                grad_b = p.sum(axis=0)
                weights -= lr * grad_w
                bias -= lr * grad_b
            loss = mean_cross_entropy(weights, bias, x, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            losses.append(loss)
    return weights, bias, losses


def train_linear_readout(
    x: np.ndarray,
    domains: np.ndarray,
    classes: list[DomainLabel] | list[int],
    cfg: TrainConfig,
) -> LinearReadout:
    """Train a readout over the given label classes; every sample's label
    must appear in ``classes`` and every class must have support."""
    class_order = [int(c) for c in classes]
    index = {c: i for i, c in enumerate(class_order)}
    domains = np.asarray(domains)
    unknown = set(np.unique(domains).tolist()) - set(class_order)
    if unknown:
        raise UsageError(f"labels {sorted(unknown)} not in class list {class_order}")
    y = np.asarray([index[int(d)] for d in domains], dtype=np.int64)
    weights, bias, losses = fit_linear_readout(x, y, len(class_order), cfg)
    return LinearReadout(weights, bias, class_order, config=cfg, epoch_losses=losses)


def fit_centroid_model(
    x: np.ndarray, domains: np.ndarray, classes: list[DomainLabel] | list[int]
) -> CentroidModel:
    """Centroid = L2-normalized mean embedding of each class."""
    class_order = [int(c) for c in classes]
    domains = np.asarray(domains)
    centroids = []
    for c in class_order:
        members = np.asarray(x, dtype=np.float64)[domains == c]
        if len(members) == 0:
            raise UsageError(f"class {c} has no samples for centroid")
        mean = members.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0:
            raise UsageError(f"class {c} centroid is the zero vector")
        centroids.append(mean / norm)
    return CentroidModel(np.stack(centroids), class_order)


def fit_density_ratio(
    x: np.ndarray,
    domains: np.ndarray,
    reference_class: DomainLabel,
    cfg: TrainConfig,
    ratio_threshold: float = RATIO_THRESHOLD_DEFAULT,
) -> DensityRatioModel:
    """Binary readout separating the reference class from everything else,
    with prior correction n_shifted / n_reference."""
    domains = np.asarray(domains)
    is_ref = domains == int(reference_class)
    n_ref = int(is_ref.sum())
    n_shifted = int(len(domains) - n_ref)
    if n_ref == 0 or n_shifted == 0:
        raise UsageError("density ratio training needs both reference and shifted samples")
    y = np.where(is_ref, 0, 1).astype(np.int64)
    weights, bias, losses = fit_linear_readout(x, y, 2, cfg)
    readout = LinearReadout(weights, bias, [0, 1], config=cfg, epoch_losses=losses)
    return DensityRatioModel(
        readout=readout,
        reference_class=reference_class,
        prior_correction=n_shifted / n_ref,
        ratio_threshold=ratio_threshold,
    )


def predict_scores(model: LinearReadout | CentroidModel, x: np.ndarray) -> np.ndarray:
    """Per-class score vector(s); rows sum to 1."""
    return model.scores(x)


def density_ratio(model: DensityRatioModel, x: np.ndarray) -> float:
    r = model.ratios(np.atleast_2d(x))
    return float(r[0])


# ---------------------------------------------------------------------------
# JSON serialization: one schema per variant, floats as shortest round-trip
# decimals (json's default float formatting).

def model_to_dict(model) -> dict:
    if isinstance(model, LinearReadout):
        return {
            "variant": "linear_readout",
            "class_order": model.class_order,
            "dimension": model.dimension,
            "weights": [float(v) for v in model.weights.ravel()],
            "bias": [float(v) for v in model.bias],
            "hyperparameters": model.config.to_dict() if model.config else None,
            "seed": model.config.seed if model.config else None,
        }
    if isinstance(model, CentroidModel):
        return {
            "variant": "centroid",
            "class_order": model.class_order,
            "dimension": model.dimension,
            "centroids": [float(v) for v in model.centroids.ravel()],
            "hyperparameters": None,
            "seed": None,
        }
    if isinstance(model, DensityRatioModel):
        inner = model_to_dict(model.readout)
        return {
            "variant": "density_ratio",
            "class_order": model.readout.class_order,
            "dimension": model.dimension,
            "reference_class": int(model.reference_class),
            "prior_correction": model.prior_correction,
            "ratio_threshold": model.ratio_threshold,
            "readout": inner,
            "hyperparameters": inner["hyperparameters"],
            "seed": inner["seed"],
        }
    if isinstance(model, KnnStyleModel):
        return {
            "variant": "knn_style",
            "class_order": sorted({int(v) for v in model.database_labels}),
            "dimension": model.dimension,
            "k": model.k,
            "target_style": int(model.target_style),
            "database_ids": [int(i) for i in model.database_ids],
            "database_labels": [int(v) for v in model.database_labels],
            "database_vectors": [float(v) for v in model.database_vectors.ravel()],
            "hyperparameters": None,
            "seed": None,
        }
    raise UsageError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(d: dict):
    variant = d.get("variant")
    if variant == "linear_readout":
        dim = d["dimension"]
        class_order = [int(c) for c in d["class_order"]]
        weights = np.asarray(d["weights"], np.float64).reshape(len(class_order), dim)
        cfg = TrainConfig.from_dict(d["hyperparameters"]) if d.get("hyperparameters") else None
        return LinearReadout(weights, np.asarray(d["bias"], np.float64), class_order, cfg)
    if variant == "centroid":
        dim = d["dimension"]
        class_order = [int(c) for c in d["class_order"]]
        centroids = np.asarray(d["centroids"], np.float64).reshape(len(class_order), dim)
        return CentroidModel(centroids, class_order)
    if variant == "density_ratio":
        return DensityRatioModel(
            readout=model_from_dict(d["readout"]),
            reference_class=DomainLabel(d["reference_class"]),
            prior_correction=d["prior_correction"],
            ratio_threshold=d["ratio_threshold"],
        )
    if variant == "knn_style":
        dim = d["dimension"]
        return KnnStyleModel(
            database_ids=np.asarray(d["database_ids"], np.uint64),
            database_vectors=np.asarray(d["database_vectors"], np.float32).reshape(-1, dim),
            database_labels=np.asarray(d["database_labels"], np.int8),
            k=int(d["k"]),
            target_style=DomainLabel(d["target_style"]),
        )
    raise UsageError(f"unknown model variant {variant!r}")


def save_model(model, path: Path | str) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path: Path | str):
    return model_from_dict(json.loads(Path(path).read_text()))
