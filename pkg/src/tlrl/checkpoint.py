"""Bit-exact checkpoints for policies and critics.

Layout: magic ``TLRP``, a little-endian u32 header length, a UTF-8 JSON
header, then for every model its factor matrices as consecutive ``TLRT``
blocks (each an ``N_d x K`` tensor). The header lists the models in order
with their family tag, shape, rank and temperature, plus free-form ``meta``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .critic import CriticModel
from .policies import GaussianPolicy, SoftmaxPolicy
from .tensor_core import DenseTensor, ParafacModel, dense_from_bytes, dense_to_bytes

MAGIC = b"TLRP"
VERSION = 1


def _describe(model):
    m = model.model
    doc = {"family": model.family, "D": m.ndim, "dims": list(m.shape), "K": m.rank}
    if isinstance(model, GaussianPolicy):
        doc.update(P=model.action_dim, sigma=model.sigma)
    elif isinstance(model, SoftmaxPolicy):
        doc.update(C=model.num_actions, P=model.action_dim, beta=model.beta)
    elif not isinstance(model, CriticModel):
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    return doc


def _rebuild(doc, factors):
    pm = ParafacModel(tuple(factors))
    if list(pm.shape) != list(doc["dims"]) or pm.rank != doc["K"]:
        raise ValueError("checkpoint header does not match the stored factors")
    family = doc["family"]
    if family == "gaussian":
        return GaussianPolicy(pm, float(doc["sigma"]), int(doc["P"]))
    if family == "softmax":
        return SoftmaxPolicy(pm, float(doc["beta"]), int(doc["P"]))
    if family == "critic":
        return CriticModel(pm)
    raise ValueError(f"unknown model family {family!r}")


def dumps(models, meta=None):
    """Serialize a list of models (``None`` entries are skipped) to bytes."""
    models = [m for m in models if m is not None]
    header = {"version": VERSION, "models": [_describe(m) for m in models], "meta": meta or {}}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<I", len(hb)), hb]
    for m in models:
        for f in m.model.factors:
            out.append(dense_to_bytes(DenseTensor(f.shape, f.reshape(-1))))
    return b"".join(out)


def loads(buf):
    """Inverse of :func:`dumps`; returns ``(models, meta)``."""
    if buf[:4] != MAGIC:
        raise ValueError("not a TLRP checkpoint")
    (n,) = struct.unpack_from("<I", buf, 4)
    header = json.loads(buf[8:8 + n].decode("utf-8"))
    if header.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    offset = 8 + n
    models = []
    for doc in header["models"]:
        factors = []
        for _ in range(doc["D"]):
            t, offset = dense_from_bytes(buf, offset)
            factors.append(t.data.reshape(t.dims))
        models.append(_rebuild(doc, factors))
    return models, header["meta"]


def save_checkpoint(path, policy, critic=None, meta=None):
    Path(path).write_bytes(dumps([policy, critic], meta))


def load_checkpoint(path):
    """Return ``(policy, critic_or_None, meta)``."""
    models, meta = loads(Path(path).read_bytes())
    policy = next((m for m in models if not isinstance(m, CriticModel)), None)
    critic = next((m for m in models if isinstance(m, CriticModel)), None)
    return policy, critic, meta
