"""Self-describing binary container for model and ensemble files.

Layout: magic bytes, a little-endian uint32 header length, a UTF-8 JSON
header, then the payload as packed little-endian float64.  The header
carries the kind tag, parameter layout, network dims, and normalization
statistics, so a file can be loaded without any out-of-band knowledge.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import ParamVector
from .bayes import CooperativeModel, PosteriorEnsemble
from .datagen import Normalizer
from .networks import MeanNetwork, VarianceNetwork
from .training import MeanModel, VarianceModel

__all__ = [
    "load_model",
    "read_blob",
    "save_model",
    "write_blob",
]

_MAGIC = b"MFVEB\x01\n"


def write_blob(path, header: dict, payload: np.ndarray) -> None:
    payload = np.ascontiguousarray(payload, dtype="<f8")
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload.tobytes())


def read_blob(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path} is not a model file (bad magic)")
    offset = len(_MAGIC)
    (head_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    header = json.loads(raw[offset:offset + head_len].decode("utf-8"))
    offset += head_len
    payload = np.frombuffer(raw[offset:], dtype="<f8").astype(np.float64)
    return header, payload


def _layout_to_json(layout):
    return [[name, list(shape)] for name, shape in layout]


def _layout_from_json(data):
    return tuple((name, tuple(shape)) for name, shape in data)


def _net_dims(net) -> dict:
    return {"input_dim": net.input_dim, "output_dim": net.output_dim,
            "hidden_dim": net.hidden_dim, "n_layers": net.n_layers}


def save_model(model, path) -> None:
    """Serialize a mean, variance, or cooperative model bundle."""
    if isinstance(model, MeanModel):
        header = {
            "kind": "mean",
            "dims": _net_dims(model.net),
            "layout": _layout_to_json(model.params.layout),
            "normalization": model.normalizer.to_dict(),
        }
        write_blob(path, header, model.params.values)
    elif isinstance(model, VarianceModel):
        header = {
            "kind": "variance",
            "dims": {**_net_dims(model.net), "eps_pos": model.net.eps_pos},
            "layout": _layout_to_json(model.params.layout),
            "normalization": model.normalizer.to_dict(),
        }
        write_blob(path, header, model.params.values)
    elif isinstance(model, CooperativeModel):
        ens = model.ensemble
        header = {
            "kind": "cooperative",
            "dims": _net_dims(model.net),
            "variance_dims": {**_net_dims(model.variance.net),
                              "eps_pos": model.variance.net.eps_pos},
            "layout": _layout_to_json(ens.layout),
            "variance_layout": _layout_to_json(model.variance.params.layout),
            "n_samples": int(ens.n_samples),
            "burn_in": int(ens.burn_in),
            "stride": int(ens.stride),
            "sampler": ens.meta,
            "normalization": model.normalizer.to_dict(),
            "selection_log": model.selection_log,
        }
        payload = np.concatenate([ens.samples.ravel(),
                                  model.variance.params.values])
        write_blob(path, header, payload)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")


def load_model(path):
    header, payload = read_blob(path)
    kind = header["kind"]
    norm = Normalizer.from_dict(header["normalization"])
    if kind == "mean":
        net = MeanNetwork(**header["dims"])
        params = ParamVector(payload, _layout_from_json(header["layout"]))
        return MeanModel(net=net, params=params, normalizer=norm)
    if kind == "variance":
        net = VarianceNetwork(**header["dims"])
        params = ParamVector(payload, _layout_from_json(header["layout"]))
        return VarianceModel(net=net, params=params, normalizer=norm)
    if kind == "cooperative":
        net = MeanNetwork(**header["dims"])
        vnet = VarianceNetwork(**header["variance_dims"])
        layout = _layout_from_json(header["layout"])
        n_samples = header["n_samples"]
        n_params = sum(int(np.prod(s, dtype=np.int64)) if s else 1 for _, s in layout)
        samples = payload[:n_samples * n_params].reshape(n_samples, n_params)
        vparams = ParamVector(payload[n_samples * n_params:],
                              _layout_from_json(header["variance_layout"]))
        ensemble = PosteriorEnsemble(samples=samples, layout=layout,
                                     burn_in=header["burn_in"], stride=header["stride"],
                                     meta=header["sampler"])
        variance = VarianceModel(net=vnet, params=vparams, normalizer=norm)
        return CooperativeModel(net=net, ensemble=ensemble, variance=variance,
                                normalizer=norm,
                                selection_log=list(header["selection_log"]))
    raise ValueError(f"unknown model kind {kind!r}")
