"""Synthetic corpus generation, the sample manifest, and per-signer partitioning."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .synth import SynthParams, make_signer, sample_forgery, sample_genuine
from .trajectory import bspline_resample

MANIFEST_HEADER = ("signer_id", "sample_id", "kind", "target_id", "path")
PARTITION_HEADER = ("signer_id", "sample_id", "kind", "split")
SPLIT_COUNTS = (16, 4, 5)


@dataclass(frozen=True)
class SampleRecord:
    signer_id: int
    sample_id: int
    kind: str  # "genuine" or "forgery"
    target_id: int
    path: str = ""

    @property
    def key(self) -> str:
        tag = "g" if self.kind == "genuine" else "f"
        return f"s{self.target_id:03d}_{tag}{self.sample_id:03d}"


def generate_corpus(n_signers: int, n_genuine: int = 25, n_forgeries: int = 12, seed: int = 0,
                    params: SynthParams = SynthParams()):
    """Yield (record, PenTrack) for every genuine sample and skilled forgery.

    Forgery records carry the forger in `signer_id` and the imitated signer in
    `target_id`.
    """
    if n_signers < 2 and n_forgeries:
        raise DomainError("forgeries need at least two signers")
    signers = [make_signer(i, seed, params) for i in range(n_signers)]
    rng = np.random.default_rng([seed, 0xF0])
    for s in signers:
        for k in range(n_genuine):
            yield SampleRecord(s.signer_id, k, "genuine", s.signer_id), sample_genuine(s, k, params)
        others = [o for o in range(n_signers) if o != s.signer_id]
        for k in range(n_forgeries):
            forger = signers[int(rng.choice(others))]
            rec = SampleRecord(forger.signer_id, k, "forgery", s.signer_id)
            yield rec, sample_forgery(s, forger, k, params)


def write_manifest(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in records:
            w.writerow([r.signer_id, r.sample_id, r.kind, r.target_id, r.path])


def read_manifest(path) -> list[SampleRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != MANIFEST_HEADER:
        raise ParseError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
    out = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 5 or row[2] not in ("genuine", "forgery"):
            raise ParseError("malformed manifest line", i)
        out.append(SampleRecord(int(row[0]), int(row[1]), row[2], int(row[3]), row[4]))
    return out


def split_counts(n: int) -> tuple[int, int, int]:
    """16/4/5 for 25 genuine samples, proportional otherwise."""
    if n == sum(SPLIT_COUNTS):
        return SPLIT_COUNTS
    n_val = max(1, round(n * SPLIT_COUNTS[1] / 25)) if n >= 3 else 0
    n_train = min(max(1, round(n * SPLIT_COUNTS[0] / 25)), n - n_val - 1)
    n_test = n - n_train - n_val
    if n_train < 1 or n_test < 1:
        raise DomainError(f"{n} genuine samples per signer are too few to partition")
    return n_train, n_val, n_test


def split_dataset(records, seed: int = 0) -> dict[str, str]:
    """Map each record key to train/val/test (genuine) or forgery."""
    by_signer: dict[int, list[SampleRecord]] = {}
    out = {}
    for r in records:
        if r.kind == "forgery":
            out[r.key] = "forgery"
        else:
            by_signer.setdefault(r.signer_id, []).append(r)
    for sid in sorted(by_signer):
        genuine = sorted(by_signer[sid], key=lambda r: r.sample_id)
        order = np.random.default_rng([seed, sid]).permutation(len(genuine))
        n_train, n_val, _ = split_counts(len(genuine))
        for rank, i in enumerate(order):
            split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            out[genuine[i].key] = split
    return out


def write_partition(path, records, splits) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARTITION_HEADER)
        for r in records:
            w.writerow([r.target_id, r.sample_id, r.kind, splits[r.key]])


def read_partition(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PARTITION_HEADER:
        raise ParseError(f"{path}: partition header must be {','.join(PARTITION_HEADER)}")
    out = {}
    for i, row in enumerate(rows[1:]):
        if len(row) != 4:
            raise ParseError("malformed partition line", i)
        rec = SampleRecord(int(row[0]), int(row[1]), row[2], int(row[0]))
        out[rec.key] = row[3]
    return out


@dataclass
class SplitArrays:
    """Fixed-length trajectories and labels grouped by split."""

    train: tuple
    val: tuple
    test: tuple
    forgery: tuple


def arrays_by_split(samples: dict, records, splits) -> SplitArrays:
    """`samples` maps record key -> (t, 6) array; labels are target signer ids."""
    groups = {"train": ([], []), "val": ([], []), "test": ([], []), "forgery": ([], [])}
    for r in records:
        X, y = groups[splits[r.key]]
        X.append(samples[r.key])
        y.append(r.target_id)
    packed = {k: (np.array(X, dtype=float).reshape(len(X), *(np.shape(X[0]) if X else (0, 6))),
                  np.array(y, dtype=int)) for k, (X, y) in groups.items()}
    return SplitArrays(**packed)


def synthetic_split(n_signers: int = 8, n_genuine: int = 25, n_forgeries: int = 12, seed: int = 0,
                    length: int = 512, params: SynthParams = SynthParams()) -> SplitArrays:
    """In-memory corpus on exact tip-tail ground truth, resampled and partitioned."""
    records, samples = [], {}
    for rec, track in generate_corpus(n_signers, n_genuine, n_forgeries, seed, params):
        records.append(rec)
        samples[rec.key] = bspline_resample(track.tip_tail(), length)
    return arrays_by_split(samples, records, split_dataset(records, seed))


def load_interpolated_dir(directory) -> dict[str, np.ndarray]:
    from .trajectory import decode_tiptail_csv
    return {p.stem: decode_tiptail_csv(p.read_text()) for p in sorted(Path(directory).glob("*.csv"))}
