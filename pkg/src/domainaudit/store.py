"""Bit-exact binary embedding stores: write, stream, import, split.

File layout (little-endian throughout):

    magic   4 bytes  b"EMBS"
    version 1 byte   0x01
    dim     u32
    count   u64
    record  count times: u64 id, i8 domain label, i32 class label, dim * f32

Stores are immutable once written; readers stream with O(dim) memory per
record regardless of count. A JSON manifest sidecar
(``<store>.manifest.json``) records dimension, count, per-label counts and
a free-text source note.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import StoreFormatError, UsageError
from .labels import DomainLabel, EmbeddingRecord, label_name

MAGIC = b"EMBS"
VERSION = 1
_HEADER = struct.Struct("<4sBIQ")  # magic, version, dimension, count
DEFAULT_CHUNK_RECORDS = 65536


def _record_dtype(dimension: int) -> np.dtype:
    return np.dtype(
        [("id", "<u8"), ("domain", "<i1"), ("cls", "<i4"), ("vec", "<f4", (dimension,))]
    )


def manifest_path(store_path: Path | str) -> Path:
    p = Path(store_path)
    return p.with_name(p.name + ".manifest.json")


@dataclass
class StoreManifest:
    dimension: int
    count: int
    label_summary: dict[str, int]
    source_note: str = ""

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "count": self.count,
            "label_summary": self.label_summary,
            "source_note": self.source_note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StoreManifest":
        return cls(d["dimension"], d["count"], d["label_summary"], d.get("source_note", ""))


def _label_summary(domains: np.ndarray) -> dict[str, int]:
    return {
        label_name(lab): int(np.count_nonzero(domains == int(lab)))
        for lab in (DomainLabel.UNKNOWN, DomainLabel.NATURAL,
                    DomainLabel.AMBIGUOUS, DomainLabel.RENDITION)
    }


def write_store_arrays(
    path: Path | str,
    ids: np.ndarray,
    domains: np.ndarray,
    classes: np.ndarray,
    vectors: np.ndarray,
    source_note: str = "",
) -> StoreManifest:
    """Write a store from parallel arrays; vectors are stored bit-exactly.

    Rejects duplicate ids and zero vectors. Does not normalize: callers on
    ingest paths (``import_tsv``, generators) normalize before writing.
    """
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise UsageError("vectors must be a 2-D array")
    count, dimension = vectors.shape
    if dimension == 0:
        raise UsageError("dimension must be positive")
    ids = np.asarray(ids, dtype=np.uint64)
    domains = np.asarray(domains, dtype=np.int8)
    classes = np.asarray(classes, dtype=np.int32)
    if not (len(ids) == len(domains) == len(classes) == count):
        raise UsageError("ids, domains, classes and vectors must have equal length")
    if len(np.unique(ids)) != count:
        raise UsageError("duplicate ids in store input")
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise UsageError(f"zero vector for id {int(ids[zero[0]])}")

    dtype = _record_dtype(dimension)
    path = Path(path)
    # write to a fresh file and rename: a store is never mutated in place,
    # so concurrent readers of an existing file stay consistent
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, dimension, count))
            for start in range(0, count, DEFAULT_CHUNK_RECORDS):
                end = min(start + DEFAULT_CHUNK_RECORDS, count)
                block = np.empty(end - start, dtype=dtype)
                block["id"] = ids[start:end]
                block["domain"] = domains[start:end]
                block["cls"] = classes[start:end]
                block["vec"] = vectors[start:end]
                fh.write(block.tobytes())
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)

    manifest = StoreManifest(dimension, count, _label_summary(domains), source_note)
    mpath = manifest_path(path)
    mtmp = mpath.with_name(mpath.name + ".tmp")
    mtmp.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    os.replace(mtmp, mpath)
    return manifest


def write_store(
    path: Path | str,
    records: Sequence[EmbeddingRecord],
    dimension: int,
    source_note: str = "",
) -> StoreManifest:
    """Write ``records`` to a new store file with the declared dimension."""
    for rec in records:
        if rec.vector.shape != (dimension,):
            raise UsageError(
                f"record {rec.id}: vector length {rec.vector.shape[0]} != dimension {dimension}"
            )
    n = len(records)
    ids = np.fromiter((r.id for r in records), dtype=np.uint64, count=n)
    domains = np.fromiter((int(r.domain_label) for r in records), dtype=np.int8, count=n)
    classes = np.fromiter((r.class_label for r in records), dtype=np.int32, count=n)
    vectors = (
        np.stack([r.vector for r in records])
        if n
        else np.empty((0, dimension), dtype=np.float32)
    )
    return write_store_arrays(path, ids, domains, classes, vectors, source_note)


def read_manifest(store_path: Path | str) -> StoreManifest:
    return StoreManifest.from_dict(json.loads(manifest_path(store_path).read_text()))


def _read_header(fh) -> tuple[int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise StoreFormatError("file too short to hold a store header")
    magic, version, dimension, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise StoreFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise StoreFormatError(f"unsupported store version {version}")
    if dimension == 0:
        raise StoreFormatError("store declares dimension 0")
    return dimension, count


def store_header(path: Path | str) -> tuple[int, int]:
    """Return (dimension, count) from the file header."""
    with open(path, "rb") as fh:
        return _read_header(fh)


def stream_chunks(
    path: Path | str, chunk_records: int = DEFAULT_CHUNK_RECORDS
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (ids, domains, classes, vectors) array chunks in file order.

    Raises StoreFormatError naming the first incomplete record if the file
    ends before ``count`` records; no partial record is ever yielded.
    """
    with open(path, "rb") as fh:
        dimension, count = _read_header(fh)
        dtype = _record_dtype(dimension)
        done = 0
        while done < count:
            want = min(chunk_records, count - done)
            raw = fh.read(want * dtype.itemsize)
            got = len(raw) // dtype.itemsize
            if got < want and len(raw) != got * dtype.itemsize:
                # trailing partial record
                raise StoreFormatError(
                    f"store truncated mid-record at record {done + got} of {count}"
                )
            if got == 0:
                raise StoreFormatError(
                    f"store truncated: expected {count} records, data ends at record {done}"
                )
            block = np.frombuffer(raw[: got * dtype.itemsize], dtype=dtype)
            yield (
                block["id"].copy(),
                block["domain"].copy(),
                block["cls"].copy(),
                block["vec"].copy(),
            )
            done += got
            if got < want and done < count:
                raise StoreFormatError(
                    f"store truncated: expected {count} records, data ends at record {done}"
                )


def stream_store(path: Path | str) -> Iterator[EmbeddingRecord]:
    """Yield records in file order with O(dimension) memory per record."""
    for ids, domains, classes, vectors in stream_chunks(path):
        for i in range(len(ids)):
            yield EmbeddingRecord(
                id=int(ids[i]),
                vector=vectors[i],
                domain_label=DomainLabel(int(domains[i])),
                class_label=int(classes[i]),
            )


def load_store_arrays(
    path: Path | str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Load a whole store into (ids, domains, classes, vectors) arrays."""
    parts = list(stream_chunks(path))
    if not parts:
        dimension, _ = store_header(path)
        return (
            np.empty(0, np.uint64),
            np.empty(0, np.int8),
            np.empty(0, np.int32),
            np.empty((0, dimension), np.float32),
        )
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.vstack([p[3] for p in parts]),
    )


def normalize_rows(vectors: np.ndarray, context: str = "vector") -> np.ndarray:
    """L2-normalize rows; zero rows are rejected."""
    vectors = np.asarray(vectors, dtype=np.float32)
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise UsageError(f"zero {context} at row {int(zero[0])}")
    return (vectors / norms[:, None]).astype(np.float32)


def import_tsv(tsv_path: Path | str, dimension: int, out_path: Path | str,
               source_note: str = "") -> StoreManifest:
    """Import whitespace-separated lines: id, label token, class, then
    ``dimension`` comma-separated floats. Vectors are L2-normalized."""
    ids, domains, classes, rows = [], [], [], []
    with open(tsv_path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise UsageError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                rec_id = int(parts[0])
                label = DomainLabel.from_token(parts[1])
                cls = int(parts[2])
                floats = [float(tok) for tok in parts[3].split(",")]
            except (ValueError, UsageError) as exc:
                raise UsageError(f"line {lineno}: {exc}") from None
            if len(floats) != dimension:
                raise UsageError(
                    f"line {lineno}: expected {dimension} floats, got {len(floats)}"
                )
            vec = np.asarray(floats, dtype=np.float32)
            if float(np.linalg.norm(vec.astype(np.float64))) == 0.0:
                raise UsageError(f"line {lineno}: zero vector")
            ids.append(rec_id)
            domains.append(int(label))
            classes.append(cls)
            rows.append(vec)
    vectors = (
        normalize_rows(np.stack(rows))
        if rows
        else np.empty((0, dimension), np.float32)
    )
    note = source_note or f"imported from {Path(tsv_path).name}"
    return write_store_arrays(
        out_path,
        np.asarray(ids, np.uint64),
        np.asarray(domains, np.int8),
        np.asarray(classes, np.int32),
        vectors,
        source_note=note,
    )


@dataclass
class SplitAssignment:
    """Disjoint train/val/test id sets produced by a seeded shuffle."""

    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "train_ids": [int(i) for i in self.train_ids],
            "val_ids": [int(i) for i in self.val_ids],
            "test_ids": [int(i) for i in self.test_ids],
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitAssignment":
        return cls(
            np.asarray(d["train_ids"], np.uint64),
            np.asarray(d["val_ids"], np.uint64),
            np.asarray(d["test_ids"], np.uint64),
            int(d["seed"]),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "SplitAssignment":
        return cls.from_dict(json.loads(Path(path).read_text()))


def split_ids(
    ids: np.ndarray, n_train: int, n_val: int, n_test: int, seed: int
) -> SplitAssignment:
    """Seeded shuffle of ``ids`` followed by contiguous slices."""
    for name, n in (("n_train", n_train), ("n_val", n_val), ("n_test", n_test)):
        if n < 0:
            raise UsageError(f"{name} must be >= 0")
    total = n_train + n_val + n_test
    if total > len(ids):
        raise UsageError(
            f"requested split sizes sum to {total} but store has {len(ids)} records"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = np.asarray(ids, np.uint64)[order]
    return SplitAssignment(
        train_ids=shuffled[:n_train],
        val_ids=shuffled[n_train : n_train + n_val],
        test_ids=shuffled[n_train + n_val : total],
        seed=seed,
    )


def split_store(
    path: Path | str, n_train: int, n_val: int, n_test: int, seed: int
) -> SplitAssignment:
    ids = np.concatenate([c[0] for c in stream_chunks(path)] or [np.empty(0, np.uint64)])
    return split_ids(ids, n_train, n_val, n_test, seed)


def gather_by_ids(
    path: Path | str, ids: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(ids, domains, classes, vectors) for the requested ids, in request
    order. Unknown ids are an error."""
    all_ids, domains, classes, vectors = load_store_arrays(path)
    row_of = {int(v): i for i, v in enumerate(all_ids)}
    try:
        rows = np.asarray([row_of[int(i)] for i in ids], dtype=np.int64)
    except KeyError as exc:
        raise UsageError(f"id {exc.args[0]} not present in store") from None
    return all_ids[rows], domains[rows], classes[rows], vectors[rows]


def write_id_list(path: Path | str, ids: Iterable[int]) -> None:
    """Newline-delimited unsigned 64-bit id file."""
    with open(path, "w") as fh:
        for i in ids:
            fh.write(f"{int(i)}\n")


def read_id_list(path: Path | str) -> np.ndarray:
    text = Path(path).read_text()
    values = [int(tok) for tok in text.split()]
    return np.asarray(values, dtype=np.uint64)
