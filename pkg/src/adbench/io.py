"""Versioned dumps of fitted models and measures.

A dump is a NumPy ``.npz`` archive. The entry ``__meta__`` holds a UTF-8
JSON header::

    {"format": "adbench", "format_version": 1, "object": {...}}

where ``object`` describes the dumped object (``type`` is ``regressor``,
``ensemble`` or ``measure``) together with its kind and constructor
arguments. Every other entry is one array of fitted state, keyed by a
slash-separated path (``member3/W0``, ``context/L``). Measures that wrap a
model store it under the ``context/`` prefix.
"""

from __future__ import annotations

import io as _io
import json

import numpy as np

from .errors import VersionMismatch
from .models import Ensemble, Regressor, make_model

FORMAT = "adbench"
FORMAT_VERSION = 1


def _jsonable(value):
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    return value


def _encode(obj, prefix=""):
    from .measures import AdMeasure

    arrays = {}
    if isinstance(obj, Ensemble):
        meta = {"type": "ensemble", "kind": obj.kind, "params": _jsonable(obj.params),
                "n_members": obj.n_members, "seed": obj.seed, "bootstrap": obj.bootstrap}
        for i, m in enumerate(obj.members):
            _, sub = _encode(m, f"{prefix}member{i}/")
            arrays.update(sub)
        return meta, arrays
    if isinstance(obj, Regressor):
        meta = {"type": "regressor", "kind": obj.kind,
                "hyperparameters": _jsonable(obj.hyperparameters),
                "loss_trace": [float(v) for v in obj.loss_trace]}
        for k, v in obj.get_state().items():
            arrays[prefix + k] = np.asarray(v)
        return meta, arrays
    if isinstance(obj, AdMeasure):
        meta = {"type": "measure", "kind": obj.kind, "options": _jsonable(obj.options),
                "n_features": obj.n_features_, "context": None}
        for k, v in obj.get_state().items():
            arrays[prefix + k] = np.asarray(v)
        if obj.context is not None:
            meta["context"], sub = _encode(obj.context, prefix + "context/")
            arrays.update(sub)
        return meta, arrays
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _sub(arrays, prefix):
    return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}


def _decode(meta, arrays):
    from .measures import make_measure

    kind = meta.get("type")
    if kind == "ensemble":
        ens = Ensemble(meta["kind"], meta["params"], meta["n_members"], meta["seed"], meta["bootstrap"])
        for i in range(ens.n_members):
            member = make_model(meta["kind"], **meta["params"])
            member.set_state(_sub(arrays, f"member{i}/"))
            ens.members.append(member)
        return ens
    if kind == "regressor":
        model = make_model(meta["kind"], **meta["hyperparameters"])
        model.set_state(arrays)
        model.loss_trace = list(meta.get("loss_trace", []))
        return model
    if kind == "measure":
        m = make_measure(meta["kind"], **meta["options"])
        if meta["context"] is not None:
            m.model_ = _decode(meta["context"], _sub(arrays, "context/"))
        own = {k: v for k, v in arrays.items() if not k.startswith("context/")}
        m.set_state(own)
        m.n_features_ = meta["n_features"]
        return m
    raise VersionMismatch(f"unknown object type {kind!r} in dump")


def dumps(obj) -> bytes:
    meta, arrays = _encode(obj)
    header = {"format": FORMAT, "format_version": FORMAT_VERSION, "object": meta}
    buf = _io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    return buf.getvalue()


def loads(data: bytes):
    try:
        archive = np.load(_io.BytesIO(data), allow_pickle=False)
        header = json.loads(archive["__meta__"].tobytes().decode())
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        raise VersionMismatch(f"not an adbench dump: {exc}") from exc
    if header.get("format") != FORMAT:
        raise VersionMismatch("not an adbench dump")
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"dump has format version {header.get('format_version')}, this build reads {FORMAT_VERSION}"
        )
    arrays = {k: archive[k] for k in archive.files if k != "__meta__"}
    return _decode(header["object"], arrays)


def save(obj, path) -> None:
    """Write a fitted regressor, ensemble or measure to ``path``."""
    with open(path, "wb") as fh:
        fh.write(dumps(obj))


def load(path):
    """Read an object written by :func:`save`."""
    with open(path, "rb") as fh:
        return loads(fh.read())
