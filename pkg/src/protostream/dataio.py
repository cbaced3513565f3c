"""Self-describing binary containers for generated datasets.

Layout (all little-endian): magic "SPRD", version u32, kind u8 (1 = seen
stage with training split, 2 = test-only domain), stage i32, domain i32,
channels u32, positions u32, then length-prefixed float64/int64 blocks in a
fixed order. A JSON manifest with per-stage statistics sits next to the
blobs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from protostream.datagen import EvalSplit, SemiDataset, TestDataset

MAGIC = b"SPRD"
VERSION = 1
_KIND_SEEN = 1
_KIND_UNSEEN = 2


class DatasetFormatError(ValueError):
    pass


def _write_f64(fh, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<Q", arr.size))
    fh.write(arr.tobytes())


def _write_i64(fh, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<i8")
    fh.write(struct.pack("<Q", arr.size))
    fh.write(arr.tobytes())


def _read_block(fh, dtype: str) -> np.ndarray:
    (count,) = struct.unpack("<Q", fh.read(8))
    raw = fh.read(count * 8)
    if len(raw) != count * 8:
        raise DatasetFormatError("truncated dataset file")
    return np.frombuffer(raw, dtype=dtype).copy()


def _write_split(fh, split: EvalSplit) -> None:
    _write_f64(fh, split.grids)
    _write_i64(fh, split.identities)
    _write_i64(fh, split.cameras)


def _read_split(fh, channels: int, positions: int) -> EvalSplit:
    grids = _read_block(fh, "<f8")
    ids = _read_block(fh, "<i8")
    cams = _read_block(fh, "<i8")
    n = len(ids)
    return EvalSplit(grids.reshape(n, channels, positions), ids, cams)


def save_dataset(path: str | Path, ds: SemiDataset | TestDataset) -> None:
    path = Path(path)
    seen = isinstance(ds, SemiDataset)
    if seen:
        channels, positions = ds.grids.shape[1], ds.grids.shape[2]
        stage = ds.stage
    else:
        channels, positions = ds.query.grids.shape[1], ds.query.grids.shape[2]
        stage = -1
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IBiiII", VERSION, _KIND_SEEN if seen else _KIND_UNSEEN,
                             stage, ds.domain_id, channels, positions))
        if seen:
            _write_f64(fh, ds.grids)
            _write_i64(fh, ds.identities)
            _write_i64(fh, ds.cameras)
            _write_i64(fh, ds.labeled_indices)
            _write_i64(fh, ds.unlabeled_indices)
        _write_split(fh, ds.query)
        _write_split(fh, ds.gallery)


def load_dataset(path: str | Path) -> SemiDataset | TestDataset:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise DatasetFormatError(f"{path}: not a dataset file (bad magic)")
        version, kind, stage, domain_id, channels, positions = struct.unpack("<IBiiII", fh.read(21))
        if version != VERSION:
            raise DatasetFormatError(f"{path}: unsupported version {version}")
        if kind == _KIND_SEEN:
            grids = _read_block(fh, "<f8")
            ids = _read_block(fh, "<i8")
            cams = _read_block(fh, "<i8")
            labeled = _read_block(fh, "<i8")
            unlabeled = _read_block(fh, "<i8")
            query = _read_split(fh, channels, positions)
            gallery = _read_split(fh, channels, positions)
            n = len(ids)
            return SemiDataset(
                stage=stage,
                domain_id=domain_id,
                grids=grids.reshape(n, channels, positions),
                identities=ids,
                cameras=cams,
                labeled_indices=labeled,
                unlabeled_indices=unlabeled,
                query=query,
                gallery=gallery,
            )
        if kind == _KIND_UNSEEN:
            query = _read_split(fh, channels, positions)
            gallery = _read_split(fh, channels, positions)
            return TestDataset(domain_id=domain_id, query=query, gallery=gallery)
        raise DatasetFormatError(f"{path}: unknown dataset kind {kind}")


def dataset_stats(ds: SemiDataset) -> dict:
    return {
        "stage": ds.stage,
        "domain": ds.domain_id,
        "n_train": int(ds.n),
        "n_labeled": int(len(ds.labeled_indices)),
        "n_unlabeled": int(len(ds.unlabeled_indices)),
        "labeled_fraction": round(len(ds.labeled_indices) / max(ds.n, 1), 6),
        "n_identities": int(len(np.unique(ds.identities))),
        "n_query": int(ds.query.n),
        "n_gallery": int(ds.gallery.n),
    }


def write_stream(out_dir: str | Path, seen: list[SemiDataset], unseen: list[TestDataset]) -> Path:
    """Write one blob per dataset plus the JSON manifest; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"version": VERSION, "seen": [], "unseen": []}
    for ds in seen:
        name = f"seen_stage{ds.stage:02d}.spd"
        save_dataset(out_dir / name, ds)
        manifest["seen"].append({"file": name, **dataset_stats(ds)})
    for ds in unseen:
        name = f"unseen_domain{ds.domain_id:02d}.spd"
        save_dataset(out_dir / name, ds)
        manifest["unseen"].append(
            {"file": name, "domain": ds.domain_id, "n_query": int(ds.query.n), "n_gallery": int(ds.gallery.n)}
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def read_stream(data_dir: str | Path) -> tuple[list[SemiDataset], list[TestDataset]]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise DatasetFormatError(f"{data_dir}: missing manifest.json")
    manifest = json.loads(manifest_path.read_text())
    seen = [load_dataset(data_dir / entry["file"]) for entry in manifest["seen"]]
    unseen = [load_dataset(data_dir / entry["file"]) for entry in manifest["unseen"]]
    return seen, unseen  # type: ignore[return-value]
