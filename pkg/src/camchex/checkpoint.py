"""Parameter checkpoints: named little-endian float arrays plus a JSON header.

A checkpoint stores every named parameter under ``live/<name>`` and,
optionally, the EMA shadow copy under ``ema/<name>``, alongside a JSON header
describing the architecture (resolution, channel widths, text dim, layer
counts, class count, vocabulary size, modality flags). Containers are
standard ``.npz`` archives, readable without this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

HEADER_KEY = "__header__"
FORMAT_VERSION = 1


def _to_little_endian(array: np.ndarray) -> np.ndarray:
    dtype = array.dtype.newbyteorder("<")
    return np.ascontiguousarray(array.astype(dtype, copy=False))


@dataclass
class Checkpoint:
    header: dict
    live: dict[str, np.ndarray]
    ema: dict[str, np.ndarray] | None

    def params(self, use_ema: bool) -> dict[str, np.ndarray]:
        if use_ema:
            if self.ema is None:
                raise ValueError("checkpoint carries no EMA shadow parameters")
            return self.ema
        return self.live


def save_checkpoint(
    path: str | Path,
    model: nn.Module,
    header: dict,
    ema_shadow: dict[str, torch.Tensor] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    arrays: dict[str, np.ndarray] = {
        HEADER_KEY: np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    }
    for name, param in model.named_parameters():
        arrays[f"live/{name}"] = _to_little_endian(param.detach().cpu().numpy())
    if ema_shadow is not None:
        for name, tensor in ema_shadow.items():
            arrays[f"ema/{name}"] = _to_little_endian(tensor.detach().cpu().numpy())
    np.savez(path, **arrays)
    # np.savez appends .npz when the name lacks it; normalize to the requested path.
    if path.suffix != ".npz":
        Path(str(path) + ".npz").rename(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path) as archive:
        header = json.loads(bytes(archive[HEADER_KEY]).decode("utf-8"))
        live: dict[str, np.ndarray] = {}
        ema: dict[str, np.ndarray] = {}
        for key in archive.files:
            if key == HEADER_KEY:
                continue
            kind, _, name = key.partition("/")
            if kind == "live":
                live[name] = archive[key]
            elif kind == "ema":
                ema[name] = archive[key]
            else:
                raise ValueError(f"unexpected checkpoint entry {key!r}")
    return Checkpoint(header=header, live=live, ema=ema or None)


def load_params_into(model: nn.Module, params: dict[str, np.ndarray]) -> None:
    """Copy named arrays into a model; shapes and names must match exactly."""
    model_params = dict(model.named_parameters())
    missing = sorted(set(model_params) - set(params))
    extra = sorted(set(params) - set(model_params))
    if missing or extra:
        raise ValueError(f"parameter name mismatch: missing {missing}, extra {extra}")
    with torch.no_grad():
        for name, param in model_params.items():
            array = params[name]
            if tuple(array.shape) != tuple(param.shape):
                raise ValueError(
                    f"{name}: checkpoint shape {array.shape} != model shape {tuple(param.shape)}"
                )
            param.copy_(torch.from_numpy(np.ascontiguousarray(array)).to(param.dtype))
