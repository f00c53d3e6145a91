"""Synthetic two-domain embedding corpora with ground truth, plus the
mixing and scaling experiments run on them with linear class probes.

Geometry: class means are random unit vectors with a minimum pairwise
separation. The rendition domain shifts every sample by a shared offset
orthogonal to all class means (making the domain linearly detectable) and
rotates each class mean partway toward a per-class orthogonal direction
(``style_distortion``), so a class probe trained on one domain transfers
to the other only partially. Ambiguous samples are normalized convex
combinations of a natural and a rendition draw.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifiers import TrainConfig, fit_linear_readout, softmax
from .curation import MixMode, MixSpec, build_mix, ratio_sweep, subsample_random
from .errors import InfeasibleSeparation, UsageError
from .labels import DomainLabel
from .metrics import relative_corrected_ood_accuracy
from .store import StoreManifest, load_store_arrays, write_store_arrays

_MEAN_ATTEMPTS = 10_000


@dataclass
class SynthConfig:
    dimension: int = 64
    num_classes: int = 6
    samples_per_cell: int = 300
    separation: float = 1.0
    offset_magnitude: float = 1.0
    style_distortion: float = 0.99
    natural_noise: float = 0.10
    rendition_noise: float = 0.10
    ambiguous_mix: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.dimension < 2 * self.num_classes + 1:
            raise InfeasibleSeparation(
                f"dimension {self.dimension} too small for {self.num_classes} classes "
                f"(needs >= {2 * self.num_classes + 1})"
            )
        if self.num_classes < 2 or self.samples_per_cell < 0:
            raise UsageError("need >= 2 classes and non-negative samples per cell")
        for name in ("separation", "offset_magnitude", "natural_noise", "rendition_noise"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be >= 0")
        if not 0.0 <= self.style_distortion <= 1.0:
            raise UsageError("style_distortion must be in [0, 1]")
        if not 0.0 <= self.ambiguous_mix <= 1.0:
            raise UsageError("ambiguous_mix must be in [0, 1]")

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


def derive_seed(base: int, *keys: int) -> int:
    """Stable sub-seed derivation for independent experiment arms."""
    return int(np.random.SeedSequence([int(base), *map(int, keys)]).generate_state(1)[0])


@dataclass
class SynthData:
    """Generated corpus held in memory, with ground-truth labels."""

    ids: np.ndarray
    domains: np.ndarray
    classes: np.ndarray
    vectors: np.ndarray
    config: SynthConfig

    def __post_init__(self):
        self._row_of = {int(i): row for row, i in enumerate(self.ids)}

    def rows(self, ids: np.ndarray) -> np.ndarray:
        return np.asarray([self._row_of[int(i)] for i in ids], dtype=np.int64)

    def gather(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = self.rows(ids)
        return self.vectors[rows], self.classes[rows]

    def ids_of(self, domain: DomainLabel) -> np.ndarray:
        return self.ids[self.domains == int(domain)]

    def write(self, path: Path | str) -> StoreManifest:
        note = "synthetic two-domain corpus " + json.dumps(self.config.to_dict())
        return write_store_arrays(
            path, self.ids, self.domains, self.classes, self.vectors, source_note=note
        )

    @classmethod
    def read(cls, path: Path | str, config: SynthConfig | None = None) -> "SynthData":
        ids, domains, classes, vectors = load_store_arrays(path)
        return cls(ids, domains, classes, vectors, config or SynthConfig())


def _sample_means(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    means = []
    attempts = 0
    while len(means) < cfg.num_classes:
        v = rng.normal(size=cfg.dimension)
        v /= np.linalg.norm(v)
        if all(np.linalg.norm(v - m) >= cfg.separation for m in means):
            means.append(v)
        attempts += 1
        if attempts > _MEAN_ATTEMPTS * cfg.num_classes:
            raise InfeasibleSeparation(
                f"cannot place {cfg.num_classes} unit means with pairwise "
                f"separation {cfg.separation} in dimension {cfg.dimension}"
            )
    return np.stack(means)


def _orthogonal_directions(
    rng: np.random.Generator, means: np.ndarray, n_extra: int
) -> np.ndarray:
    """n_extra orthonormal directions orthogonal to span(means)."""
    d = means.shape[1]
    basis, _ = np.linalg.qr(means.T)
    extra = rng.normal(size=(n_extra, d))
    extra = extra - (extra @ basis) @ basis.T
    q, _ = np.linalg.qr(extra.T)
    return q.T[:n_extra]


def gen_two_domain(cfg: SynthConfig) -> SynthData:
    """Deterministically generate the labeled three-domain corpus."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    means = _sample_means(rng, cfg)
    extra = _orthogonal_directions(rng, means, cfg.num_classes + 1)
    offset_dir = extra[0]
    style_dirs = extra[1:]
    keep = np.sqrt(1.0 - cfg.style_distortion**2)
    rend_means = keep * means + cfg.style_distortion * style_dirs

    def natural_draw(c: int, n: int) -> np.ndarray:
        return means[c] + cfg.natural_noise * rng.normal(size=(n, cfg.dimension))

    def rendition_draw(c: int, n: int) -> np.ndarray:
        base = rend_means[c] + cfg.offset_magnitude * offset_dir
        return base + cfg.rendition_noise * rng.normal(size=(n, cfg.dimension))

    blocks, domains, classes = [], [], []
    n = cfg.samples_per_cell
    for domain in (DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION):
        for c in range(cfg.num_classes):
            if domain == DomainLabel.NATURAL:
                raw = natural_draw(c, n)
            elif domain == DomainLabel.RENDITION:
                raw = rendition_draw(c, n)
            else:
                w = cfg.ambiguous_mix
                raw = (1.0 - w) * natural_draw(c, n) + w * rendition_draw(c, n)
            blocks.append(raw)
            domains.append(np.full(n, int(domain), np.int8))
            classes.append(np.full(n, c, np.int32))

    raw = np.vstack(blocks) if blocks else np.empty((0, cfg.dimension))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    vectors = (raw / norms).astype(np.float32)
    total = len(raw)
    return SynthData(
        ids=np.arange(total, dtype=np.uint64),
        domains=np.concatenate(domains) if domains else np.empty(0, np.int8),
        classes=np.concatenate(classes) if classes else np.empty(0, np.int32),
        vectors=vectors,
        config=cfg,
    )


def holdout_by_cell(
    data: SynthData, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Split ids into (train, eval) taking ``fraction`` per (domain, class)
    cell, before any pooling."""
    if not 0.0 < fraction < 1.0:
        raise UsageError("holdout fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_parts, eval_parts = [], []
    for domain in np.unique(data.domains):
        for cls in np.unique(data.classes):
            cell = data.ids[(data.domains == domain) & (data.classes == cls)]
            if len(cell) == 0:
                continue
            n_eval = int(round(len(cell) * fraction))
            picked = rng.choice(cell, size=n_eval, replace=False)
            eval_parts.append(picked)
            train_parts.append(np.setdiff1d(cell, picked))
    return (
        np.concatenate(train_parts) if train_parts else np.empty(0, np.uint64),
        np.concatenate(eval_parts) if eval_parts else np.empty(0, np.uint64),
    )


def _train_probe(data: SynthData, train_ids: np.ndarray, cfg: TrainConfig):
    x, y = data.gather(train_ids)
    present = np.unique(y)
    remap = {int(c): i for i, c in enumerate(present)}
    y_idx = np.asarray([remap[int(c)] for c in y], dtype=np.int64)
    weights, bias, _ = fit_linear_readout(x.astype(np.float64), y_idx, len(present), cfg)
    return weights, bias, present


def _probe_accuracy(weights, bias, present, data: SynthData, eval_ids: np.ndarray) -> float:
    x, y = data.gather(eval_ids)
    pred = present[np.argmax(softmax(x.astype(np.float64) @ weights.T + bias), axis=1)]
    return float(np.mean(pred == y))


@dataclass
class ExperimentResult:
    model_id: str
    n_natural: int
    n_rendition: int
    acc_natural: float
    acc_rendition: float
    seed: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def run_mix_experiment(
    data: SynthData,
    specs: list[MixSpec],
    probe_cfg: TrainConfig,
    eval_natural_ids: np.ndarray,
    eval_rendition_ids: np.ndarray,
) -> list[ExperimentResult]:
    """Per spec: build the mix, train a class probe on it, and score the
    probe on the held-out natural and rendition splits."""
    eval_all = set(int(i) for i in eval_natural_ids) | set(int(i) for i in eval_rendition_ids)
    results = []
    for spec in specs:
        pool_ids = set(int(i) for i in spec.natural_pool) | set(
            int(i) for i in spec.rendition_pool
        )
        if pool_ids & eval_all:
            raise UsageError("evaluation split overlaps a training pool")
        mix_ids = build_mix(spec)
        weights, bias, present = _train_probe(data, mix_ids, probe_cfg)
        results.append(
            ExperimentResult(
                model_id=f"mix-nat{spec.n_natural}-rend{spec.n_rendition}",
                n_natural=spec.n_natural,
                n_rendition=spec.n_rendition,
                acc_natural=_probe_accuracy(weights, bias, present, data, eval_natural_ids),
                acc_rendition=_probe_accuracy(weights, bias, present, data, eval_rendition_ids),
                seed=spec.seed,
            )
        )
    return results


@dataclass
class NaturalVsRandomResult:
    size: int
    acc_natural_trained: dict[str, float]
    acc_random_trained: dict[str, float]
    ratio_natural_eval: float
    ratio_rendition_eval: float
    seed: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def run_natural_vs_random(
    data: SynthData,
    sizes: list[int],
    probe_cfg: TrainConfig,
    natural_pool: np.ndarray,
    mixed_pool: np.ndarray,
    eval_natural_ids: np.ndarray,
    eval_rendition_ids: np.ndarray,
    seed: int,
) -> list[NaturalVsRandomResult]:
    """For each size, compare a probe trained on natural-only ids against a
    probe trained on an equally sized random mixed-domain subset, reporting
    accuracy ratios per evaluation domain."""
    results = []
    for i, size in enumerate(sizes):
        nat_seed = derive_seed(seed, i, 0)
        rand_seed = derive_seed(seed, i, 1)
        nat_ids = subsample_random(natural_pool, size, nat_seed)
        rand_ids = subsample_random(mixed_pool, size, rand_seed)
        w_n, b_n, p_n = _train_probe(data, nat_ids, probe_cfg)
        w_r, b_r, p_r = _train_probe(data, rand_ids, probe_cfg)
        acc_n = {
            "natural": _probe_accuracy(w_n, b_n, p_n, data, eval_natural_ids),
            "rendition": _probe_accuracy(w_n, b_n, p_n, data, eval_rendition_ids),
        }
        acc_r = {
            "natural": _probe_accuracy(w_r, b_r, p_r, data, eval_natural_ids),
            "rendition": _probe_accuracy(w_r, b_r, p_r, data, eval_rendition_ids),
        }
        results.append(
            NaturalVsRandomResult(
                size=size,
                acc_natural_trained=acc_n,
                acc_random_trained=acc_r,
                ratio_natural_eval=relative_corrected_ood_accuracy(
                    acc_n["natural"], acc_r["natural"]
                ),
                ratio_rendition_eval=relative_corrected_ood_accuracy(
                    acc_n["rendition"], acc_r["rendition"]
                ),
                seed=seed,
            )
        )
    return results


@dataclass
class ExperimentPools:
    """Per-domain training pools and the held-out evaluation splits."""

    train_natural: np.ndarray
    train_ambiguous: np.ndarray
    train_rendition: np.ndarray
    train_all: np.ndarray
    eval_natural: np.ndarray
    eval_rendition: np.ndarray


_HOLDOUT_KEY = 7001


def standard_pools(
    data: SynthData, holdout_fraction: float, seed: int
) -> ExperimentPools:
    """Hold out an evaluation fraction per (domain, class), then pool the
    remaining ids per domain."""
    train_ids, eval_ids = holdout_by_cell(
        data, holdout_fraction, derive_seed(seed, _HOLDOUT_KEY)
    )
    train_mask = np.isin(data.ids, train_ids)
    eval_mask = np.isin(data.ids, eval_ids)

    def of(domain: DomainLabel, mask) -> np.ndarray:
        return data.ids[mask & (data.domains == int(domain))]

    return ExperimentPools(
        train_natural=of(DomainLabel.NATURAL, train_mask),
        train_ambiguous=of(DomainLabel.AMBIGUOUS, train_mask),
        train_rendition=of(DomainLabel.RENDITION, train_mask),
        train_all=data.ids[train_mask],
        eval_natural=of(DomainLabel.NATURAL, eval_mask),
        eval_rendition=of(DomainLabel.RENDITION, eval_mask),
    )


def experiment_ratio_sweep(
    data: SynthData,
    n_total: int,
    ratios: list[tuple[float, float]],
    probe_cfg: TrainConfig,
    seed: int,
    holdout_fraction: float = 0.2,
) -> list[ExperimentResult]:
    """Replace-mode sweep at fixed total size over rendition:natural ratios."""
    pools = standard_pools(data, holdout_fraction, seed)
    specs = ratio_sweep(
        n_total, ratios, pools.train_natural, pools.train_rendition, seed
    )
    return run_mix_experiment(
        data, specs, probe_cfg, pools.eval_natural, pools.eval_rendition
    )


def experiment_additive(
    data: SynthData,
    natural_budgets: list[int],
    added_rendition: list[int],
    probe_cfg: TrainConfig,
    seed: int,
    holdout_fraction: float = 0.2,
) -> list[ExperimentResult]:
    """Add-mode sweep: fixed natural sets of several sizes, with increasing
    rendition counts stacked on top."""
    pools = standard_pools(data, holdout_fraction, seed)
    results = []
    for b, budget in enumerate(natural_budgets):
        fixed_natural = subsample_random(
            pools.train_natural, budget, derive_seed(seed, b)
        )
        specs = [
            MixSpec(
                natural_pool=fixed_natural,
                rendition_pool=pools.train_rendition,
                n_total=budget + added,
                n_rendition=added,
                mode=MixMode.ADD,
                seed=derive_seed(seed, b, added),
            )
            for added in added_rendition
        ]
        results.extend(
            run_mix_experiment(
                data, specs, probe_cfg, pools.eval_natural, pools.eval_rendition
            )
        )
    return results


def experiment_natural_vs_random(
    data: SynthData,
    sizes: list[int],
    probe_cfg: TrainConfig,
    seed: int,
    holdout_fraction: float = 0.2,
) -> list[NaturalVsRandomResult]:
    pools = standard_pools(data, holdout_fraction, seed)
    return run_natural_vs_random(
        data,
        sizes,
        probe_cfg,
        pools.train_natural,
        pools.train_all,
        pools.eval_natural,
        pools.eval_rendition,
        seed,
    )


def results_json(results: list) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2) + "\n"


def results_csv(results: list[ExperimentResult]) -> str:
    """Long-form plot CSV: one row per (sweep point, evaluation domain)."""
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf, fieldnames=["model", "n_natural", "n_rendition", "domain", "accuracy"]
    )
    writer.writeheader()
    for r in results:
        for domain, acc in (("natural", r.acc_natural), ("rendition", r.acc_rendition)):
            writer.writerow(
                {
                    "model": r.model_id,
                    "n_natural": r.n_natural,
                    "n_rendition": r.n_rendition,
                    "domain": domain,
                    "accuracy": acc,
                }
            )
    return buf.getvalue()


def results_accuracy_csv(results: list[ExperimentResult]) -> str:
    """Model x test-set matrix CSV ingestible by the accuracy-table reader."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["model", "natural", "rendition"])
    for r in results:
        writer.writerow([r.model_id, r.acc_natural, r.acc_rendition])
    return buf.getvalue()
