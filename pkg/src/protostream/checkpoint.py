"""Sectioned binary checkpoint: encoder weights, prototype bank, alignment
network, and a JSON metadata blob, each under a 4-byte section tag so
readers can skip sections they do not know."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from protostream.danet import DanetParams
from protostream.encoder import EncoderParams
from protostream.objectives import PrototypeBank

MAGIC = b"SPCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_arrays(arrays: list[np.ndarray]) -> bytes:
    chunks = [struct.pack("<I", len(arrays))]
    for arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def _unpack_arrays(payload: bytes) -> list[np.ndarray]:
    view = memoryview(payload)
    (count,) = struct.unpack_from("<I", view, 0)
    offset = 4
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", view, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", view, offset)
        offset += 8 * ndim
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(view, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
        offset += size * 8
        arrays.append(arr)
    return arrays


def save_checkpoint(
    path: str | Path,
    encoder_params: EncoderParams,
    bank: PrototypeBank | None = None,
    danet_params: DanetParams | None = None,
    meta: dict | None = None,
) -> None:
    sections: list[tuple[bytes, bytes]] = []
    enc_meta = struct.pack("<B", 1 if encoder_params.linear else 0)
    sections.append((b"ENCD", enc_meta + _pack_arrays(encoder_params.to_list())))
    if bank is not None:
        labels = np.ascontiguousarray(bank.labels, dtype="<i8")
        payload = struct.pack("<I", len(labels)) + labels.tobytes() + _pack_arrays([bank.prototypes])
        sections.append((b"PROT", payload))
    if danet_params is not None:
        sections.append((b"DANE", _pack_arrays(danet_params.to_list())))
    if meta is not None:
        sections.append((b"META", json.dumps(meta, sort_keys=True).encode()))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(sections)))
        for tag, payload in sections:
            fh.write(tag)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_checkpoint(path: str | Path) -> dict:
    """Returns {"encoder": EncoderParams, "bank": ..., "danet": ..., "meta": ...}
    with None for absent sections."""
    path = Path(path)
    out: dict = {"encoder": None, "bank": None, "danet": None, "meta": None}
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        version, n_sections = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(n_sections):
            tag = fh.read(4)
            (length,) = struct.unpack("<Q", fh.read(8))
            payload = fh.read(length)
            if len(payload) != length:
                raise CheckpointError(f"{path}: truncated section {tag!r}")
            if tag == b"ENCD":
                (linear,) = struct.unpack_from("<B", payload, 0)
                arrays = _unpack_arrays(payload[1:])
                out["encoder"] = EncoderParams(*arrays, linear=bool(linear))
            elif tag == b"PROT":
                (n,) = struct.unpack_from("<I", payload, 0)
                labels = np.frombuffer(payload, dtype="<i8", count=n, offset=4).copy()
                (matrix,) = _unpack_arrays(payload[4 + 8 * n :])
                out["bank"] = PrototypeBank(matrix, labels)
            elif tag == b"DANE":
                out["danet"] = DanetParams(*_unpack_arrays(payload))
            elif tag == b"META":
                out["meta"] = json.loads(payload.decode())
    if out["encoder"] is None:
        raise CheckpointError(f"{path}: checkpoint has no encoder section")
    return out
