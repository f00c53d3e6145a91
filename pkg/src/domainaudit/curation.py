"""Dataset construction: random and class-balanced subsets, replacement and
additive mixtures, ratio sweeps, and cleaned test sets."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CalibratedClassifier
from .errors import PoolExhausted, UsageError
from .labels import DomainLabel, label_name
from .partition import partition_store
from .store import stream_chunks


class MixMode(str, enum.Enum):
    REPLACE = "replace"
    ADD = "add"


def subsample_random(pool: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Seeded uniform sample of n ids without replacement."""
    pool = np.asarray(pool, np.uint64)
    if n < 0:
        raise UsageError("sample size must be >= 0")
    if n > len(pool):
        raise PoolExhausted(f"requested {n} ids from a pool of {len(pool)}")
    rng = np.random.default_rng(seed)
    return rng.choice(pool, size=n, replace=False)


def subsample_balanced(
    ids: np.ndarray, labels: np.ndarray, per_class: int, seed: int
) -> np.ndarray:
    """Exactly ``per_class`` ids from every distinct label, seeded."""
    ids = np.asarray(ids, np.uint64)
    labels = np.asarray(labels)
    if per_class < 0:
        raise UsageError("per_class must be >= 0")
    rng = np.random.default_rng(seed)
    chosen = []
    for value in np.unique(labels):
        members = ids[labels == value]
        if len(members) < per_class:
            try:
                name = label_name(DomainLabel(int(value)))
            except ValueError:
                name = str(value)
            raise PoolExhausted(
                f"class {name} has {len(members)} members, need {per_class}"
            )
        chosen.append(rng.choice(members, size=per_class, replace=False))
    if not chosen:
        return np.empty(0, np.uint64)
    return np.concatenate(chosen)


@dataclass
class MixSpec:
    """Recipe for one mixed training set.

    Replace mode draws (n_total - n_rendition) natural ids plus n_rendition
    rendition ids; Add mode keeps the whole natural pool and adds
    n_rendition rendition ids on top.
    """

    natural_pool: np.ndarray
    rendition_pool: np.ndarray
    n_total: int
    n_rendition: int
    mode: MixMode
    seed: int

    def validate(self) -> None:
        nat = np.asarray(self.natural_pool, np.uint64)
        rend = np.asarray(self.rendition_pool, np.uint64)
        if len(np.intersect1d(nat, rend)):
            raise UsageError("natural and rendition pools overlap")
        if self.n_rendition < 0:
            raise UsageError("n_rendition must be >= 0")
        if self.mode == MixMode.REPLACE:
            if self.n_rendition > self.n_total:
                raise UsageError("n_rendition exceeds n_total in replace mode")
            if self.n_total - self.n_rendition > len(nat):
                raise PoolExhausted(
                    f"need {self.n_total - self.n_rendition} natural ids, "
                    f"pool has {len(nat)}"
                )
        if self.n_rendition > len(rend):
            raise PoolExhausted(
                f"need {self.n_rendition} rendition ids, pool has {len(rend)}"
            )

    @property
    def n_natural(self) -> int:
        if self.mode == MixMode.REPLACE:
            return self.n_total - self.n_rendition
        return len(self.natural_pool)

    def to_dict(self) -> dict:
        return {
            "natural_pool": [int(i) for i in self.natural_pool],
            "rendition_pool": [int(i) for i in self.rendition_pool],
            "n_total": self.n_total,
            "n_rendition": self.n_rendition,
            "mode": self.mode.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixSpec":
        return cls(
            natural_pool=np.asarray(d["natural_pool"], np.uint64),
            rendition_pool=np.asarray(d["rendition_pool"], np.uint64),
            n_total=int(d["n_total"]),
            n_rendition=int(d["n_rendition"]),
            mode=MixMode(d["mode"]),
            seed=int(d["seed"]),
        )


def build_mix(spec: MixSpec) -> np.ndarray:
    """Materialize a MixSpec into a shuffled id list (same seed drives the
    sampling and the final shuffle)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    nat = np.asarray(spec.natural_pool, np.uint64)
    rend = np.asarray(spec.rendition_pool, np.uint64)
    if spec.mode == MixMode.REPLACE:
        chosen_nat = rng.choice(nat, size=spec.n_total - spec.n_rendition, replace=False)
    else:
        chosen_nat = nat
    chosen_rend = rng.choice(rend, size=spec.n_rendition, replace=False)
    combined = np.concatenate([chosen_nat, chosen_rend])
    return combined[rng.permutation(len(combined))]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def ratio_sweep(
    n_total: int,
    ratios: list[tuple[float, float]],
    natural_pool: np.ndarray,
    rendition_pool: np.ndarray,
    seed: int,
) -> list[MixSpec]:
    """One replace-mode spec per (rendition, natural) ratio; for ratio r:1
    the rendition count is round(n_total * r / (1 + r))."""
    specs = []
    for rend_part, nat_part in ratios:
        if rend_part < 0 or nat_part < 0 or rend_part + nat_part == 0:
            raise UsageError(f"invalid ratio {rend_part}:{nat_part}")
        n_rendition = _round_half_up(n_total * rend_part / (rend_part + nat_part))
        spec = MixSpec(
            natural_pool=natural_pool,
            rendition_pool=rendition_pool,
            n_total=n_total,
            n_rendition=n_rendition,
            mode=MixMode.REPLACE,
            seed=seed,
        )
        spec.validate()  # infeasible ratios surface before any sampling
        specs.append(spec)
    return specs


@dataclass
class CleanTestSet:
    """Result of filtering a labeled test store down to one intended domain."""

    source: str
    intended: DomainLabel
    kept_ids: np.ndarray
    removed_as_ambiguous: int
    removed_as_opposite: int
    classes_remaining: int

    @property
    def kept_count(self) -> int:
        return len(self.kept_ids)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "intended": label_name(self.intended),
            "kept_ids": [int(i) for i in self.kept_ids],
            "kept_count": self.kept_count,
            "removed_as_ambiguous": self.removed_as_ambiguous,
            "removed_as_opposite": self.removed_as_opposite,
            "classes_remaining": self.classes_remaining,
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def clean_testset(
    store_path: Path | str,
    natural_clf: CalibratedClassifier,
    rendition_clf: CalibratedClassifier,
    intended: DomainLabel,
    workers: int = 1,
) -> CleanTestSet:
    """Keep exactly the records whose agreement-rule assignment equals the
    intended domain; ambiguous and opposite-domain removals are counted
    separately."""
    if intended not in (DomainLabel.NATURAL, DomainLabel.RENDITION):
        raise UsageError("intended domain must be natural or rendition")
    _, id_lists = partition_store(store_path, natural_clf, rendition_clf, workers=workers)
    kept = id_lists[intended]
    opposite = (
        DomainLabel.RENDITION if intended == DomainLabel.NATURAL else DomainLabel.NATURAL
    )
    classes: set[int] = set()
    for ids, _, cls, _ in stream_chunks(store_path):
        mask = np.isin(ids, kept) & (cls >= 0)
        classes.update(int(c) for c in np.unique(cls[mask]))
    return CleanTestSet(
        source=Path(store_path).name,
        intended=intended,
        kept_ids=kept,
        removed_as_ambiguous=len(id_lists[DomainLabel.AMBIGUOUS]),
        removed_as_opposite=len(id_lists[opposite]),
        classes_remaining=len(classes),
    )
