"""Checkpoint files.

Layout: 8-byte magic ``MGANCKPT``, u16 format version, u64 header length,
UTF-8 JSON header, then raw little-endian float blobs in directory order.
All integers are little-endian.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data.io import write_atomic
from ..errors import CheckpointError
from ..layers import ModelSpec, Sequential, build_discriminator, build_generator
from ..tensor import default_dtype
from .optim import AdamState

MAGIC = b"MGANCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sHQ")
_BLOB_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    generator: Sequential
    discriminator: Sequential
    adam_g: AdamState
    adam_d: AdamState
    model_spec: ModelSpec
    config: dict = field(default_factory=dict)
    trainer: dict | None = None  # Trainer.state(), includes the RNG state


def _tensors(generator, discriminator, adam_g, adam_d) -> dict[str, np.ndarray]:
    out = {f"G.{k}": v.data for k, v in generator.state_dict().items()}
    out.update({f"D.{k}": v.data for k, v in discriminator.state_dict().items()})
    for tag, st in (("adam_g", adam_g), ("adam_d", adam_d)):
        for name in sorted(st.m):
            out[f"{tag}.m.{name}"] = st.m[name]
            out[f"{tag}.v.{name}"] = st.v[name]
    return out


def _adam_meta(st: AdamState) -> dict:
    return {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps, "t": st.t}


def save_checkpoint(path, generator, discriminator, adam_g: AdamState, adam_d: AdamState,
                    model_spec: ModelSpec, config: dict | None = None,
                    trainer: dict | None = None) -> None:
    tensors = _tensors(generator, discriminator, adam_g, adam_d)
    directory, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        dt = _BLOB_DTYPES.get(arr.dtype.name)
        if dt is None:
            raise CheckpointError(f"cannot store {name} with dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr, dtype=dt).tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.name,
                          "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "architecture": asdict(model_spec),
        "tensors": directory,
        "adam_g": _adam_meta(adam_g),
        "adam_d": _adam_meta(adam_d),
        "config": config or {},
        "trainer": trainer,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    write_atomic(path, _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(blobs))


def read_header(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    if len(raw) < start + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    return header, raw[start + hlen:]


def load_checkpoint(path, expect: ModelSpec | None = None) -> Checkpoint:
    """Fully validate and decode before building anything the caller sees."""
    header, body = read_header(path)
    try:
        spec = ModelSpec(**header["architecture"])
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad architecture record ({exc})") from exc
    if expect is not None and spec != expect:
        raise CheckpointError(f"{path}: architecture {spec} does not match expected {expect}")

    arrays = {}
    for entry in header["tensors"]:
        dt = _BLOB_DTYPES.get(entry["dtype"])
        end = entry["offset"] + entry["nbytes"]
        if dt is None or end > len(body):
            raise CheckpointError(f"{path}: truncated or corrupt tensor {entry['name']}")
        arr = np.frombuffer(body, dtype=dt, count=int(np.prod(entry["shape"], dtype=np.int64)),
                            offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])

    generator, discriminator = build_generator(spec), build_discriminator(spec)
    targets = {f"G.{k}": v for k, v in generator.state_dict().items()}
    targets.update({f"D.{k}": v for k, v in discriminator.state_dict().items()})
    for name, t in targets.items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing tensor {name}")
        if arrays[name].shape != t.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}: file {arrays[name].shape}, "
                                  f"model {t.shape}")
    for name, t in targets.items():
        t.data = arrays[name]

    adams = []
    for tag in ("adam_g", "adam_d"):
        st = AdamState(**header[tag])
        prefix_m, prefix_v = f"{tag}.m.", f"{tag}.v."
        st.m = {k[len(prefix_m):]: a for k, a in arrays.items() if k.startswith(prefix_m)}
        st.v = {k[len(prefix_v):]: a for k, a in arrays.items() if k.startswith(prefix_v)}
        adams.append(st)
    return Checkpoint(generator, discriminator, adams[0], adams[1], spec,
                      header.get("config") or {}, header.get("trainer"))


def checkpoint_dtype(ckpt: Checkpoint) -> np.dtype:
    params = ckpt.generator.named_parameters()
    return next(iter(params.values())).dtype if params else default_dtype()
