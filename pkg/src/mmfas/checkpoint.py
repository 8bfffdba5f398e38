"""Checkpoint archive: a zip of ``.npy`` entries keyed by stable parameter names.

Entries:

* ``format_version.npy`` - int32 scalar;
* ``config.json`` - the ModelConfig (plus optional metadata);
* ``param/<name>.npy`` - little-endian float32 tensors (parameters and
  batch-norm running statistics), ``int64`` for batch-norm step counters;
* ``state/<name>.npy`` - optional extra arrays (optimizer velocity etc.).

Zip member timestamps are pinned, so identical content produces identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np
import torch

from .afa_net import AfaNet, ModelConfig

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.require(array, requirements="C"), allow_pickle=False)
    return buf.getvalue()


def _to_le(t: torch.Tensor) -> np.ndarray:
    arr = t.detach().cpu().numpy()
    if np.issubdtype(arr.dtype, np.floating):
        return arr.astype("<f4")
    return arr.astype("<i8")


def _write(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_checkpoint(path, model: AfaNet, state: dict[str, torch.Tensor] | None = None,
                    meta: dict | None = None) -> None:
    header = {"model_config": model.config.to_dict(), "meta": meta or {}}
    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "format_version.npy", _npy_bytes(np.asarray(FORMAT_VERSION, dtype="<i4")))
        _write(zf, "config.json", json.dumps(header, sort_keys=True).encode())
        for name, tensor in model.state_dict().items():
            _write(zf, f"param/{name}.npy", _npy_bytes(_to_le(tensor)))
        for name, tensor in sorted((state or {}).items()):
            _write(zf, f"state/{name}.npy", _npy_bytes(_to_le(tensor)))


def load_checkpoint(path, dtype=torch.float32):
    """Return ``(model, state, meta)``; the model is in eval mode."""
    params, state = {}, {}
    with zipfile.ZipFile(path) as zf:
        version = int(np.load(io.BytesIO(zf.read("format_version.npy"))))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format version {version}")
        header = json.loads(zf.read("config.json"))
        for name in zf.namelist():
            if not name.endswith(".npy") or "/" not in name:
                continue
            kind, key = name.split("/", 1)
            arr = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
            (params if kind == "param" else state)[key[:-4]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("=")))
    model = AfaNet(ModelConfig.from_dict(header["model_config"]))
    missing = set(model.state_dict()) - set(params)
    if missing:
        raise ValueError(f"{path}: checkpoint lacks parameters {sorted(missing)[:5]}")
    model.load_state_dict(params, strict=True)
    model.to(dtype).eval()
    return model, state, header.get("meta", {})
