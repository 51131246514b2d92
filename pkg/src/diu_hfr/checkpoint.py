"""Checkpoint directories: ``meta.json`` + ``params.bin`` + ``manifest.json``.

``params.bin`` is the concatenation of every parameter as little-endian
float32, in block order. ``manifest.json`` lists ``{name, shape, offset}``
entries (byte offsets into ``params.bin``).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .backbone import EmbeddingNetwork, NetworkConfig, build_network
from .errors import CheckpointError

FORMAT_VERSION = 1


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_checkpoint(
    net: EmbeddingNetwork,
    directory,
    *,
    diu_cutoff: int | None = None,
    hyperparameters: dict | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    offset = 0
    chunks = []
    for name, p in net.named_parameters():
        data = p.detach().cpu().numpy().astype("<f4")
        manifest.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    (directory / "params.bin").write_bytes(b"".join(chunks))
    _dump_json(manifest, directory / "manifest.json")
    meta = {
        "format_version": FORMAT_VERSION,
        "network": net.config.to_dict(),
        "seed": net.config.seed,
        "diu_cutoff": diu_cutoff,
        "hyperparameters": hyperparameters or {},
    }
    _dump_json(meta, directory / "meta.json")
    return directory


def load_checkpoint(directory) -> tuple[EmbeddingNetwork, dict]:
    """Rebuild the network stored in ``directory``; returns ``(net, meta)``."""
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text())
        manifest = json.loads((directory / "manifest.json").read_text())
        blob = (directory / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"incomplete checkpoint at {directory}: {exc.filename} missing") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version!r} != supported {FORMAT_VERSION}")
    net = build_network(NetworkConfig.from_dict(meta["network"]))
    params = dict(net.named_parameters())
    if [entry["name"] for entry in manifest] != list(params):
        raise CheckpointError("manifest parameter names do not match the network layout")
    with torch.no_grad():
        for entry in manifest:
            p = params[entry["name"]]
            shape = tuple(entry["shape"])
            if shape != tuple(p.shape):
                raise CheckpointError(f"shape mismatch for {entry['name']}: stored {shape}, expected {tuple(p.shape)}")
            count = int(np.prod(shape))
            end = entry["offset"] + 4 * count
            if end > len(blob):
                raise CheckpointError(f"params.bin truncated at {entry['name']}")
            values = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"]).reshape(shape)
            p.copy_(torch.from_numpy(values.astype(np.float32)))
    return net, meta
