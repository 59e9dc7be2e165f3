"""Binary checkpoint format.

Layout: magic b"DKPT", version u32 LE, then length-prefixed named
sections.  All floats stored little-endian at full width, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict

import numpy as np

from .doped import CsrMatrix, DopedWeight, HybridParts, KroneckerPair, LowRankPair
from .lm import LayerSpec, LmModel, LstmLayer, TrainConfig, Vocab

MAGIC = b"DKPT"
VERSION = 1

_VARIANTS = {"KroneckerPair": KroneckerPair, "LowRankPair": LowRankPair,
             "HybridParts": HybridParts}


class CheckpointError(ValueError):
    pass


def _write_bytes(f, payload: bytes):
    f.write(struct.pack("<Q", len(payload)))
    f.write(payload)


def _read_bytes(f) -> bytes:
    raw = f.read(8)
    if len(raw) != 8:
        raise CheckpointError("truncated checkpoint (missing length)")
    (n,) = struct.unpack("<Q", raw)
    payload = f.read(n)
    if len(payload) != n:
        raise CheckpointError("truncated checkpoint (missing payload)")
    return payload


def _pack_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      default=int).encode()


def _pack_arrays(arrays: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        db = arr.dtype.str.encode()  # includes byte order, e.g. '<f8'
        buf.write(struct.pack("<I", len(db)))
        buf.write(db)
        buf.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<Q", d))
        data = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        buf.write(struct.pack("<Q", len(data)))
        buf.write(data)
    return buf.getvalue()


def _unpack_arrays(payload: bytes) -> dict:
    f = io.BytesIO(payload)
    (count,) = struct.unpack("<I", f.read(4))
    out = {}
    for _ in range(count):
        (nl,) = struct.unpack("<I", f.read(4))
        name = f.read(nl).decode()
        (dl,) = struct.unpack("<I", f.read(4))
        dtype = np.dtype(f.read(dl).decode())
        (ndim,) = struct.unpack("<I", f.read(4))
        shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
        (nb,) = struct.unpack("<Q", f.read(8))
        out[name] = np.frombuffer(f.read(nb), dtype=dtype).reshape(shape).copy()
    return out


def _model_arrays(model: LmModel) -> tuple[dict, dict]:
    """Flatten model weights to arrays plus structural metadata."""
    arrays = {"emb": model.emb, "out_w": model.out_w, "out_b": model.out_b}
    meta = {"layers": []}
    for i, layer in enumerate(model.layers):
        arrays[f"layer{i}.bias"] = layer.bias
        lm = {"hidden": layer.hidden}
        if layer.doped:
            w = layer.weight
            lm.update({"kind": "doped", "variant": type(w.structured).__name__,
                       "alpha": w.alpha, "beta": w.beta,
                       "nnz_target": w.nnz_target,
                       "frozen": w.frozen is not None})
            for j, fac in enumerate(w.factors()):
                arrays[f"layer{i}.factor{j}"] = fac
            arrays[f"layer{i}.ws"] = w.ws
            arrays[f"layer{i}.mask"] = w.mask.astype(np.uint8)
            if w.frozen is not None:
                arrays[f"layer{i}.csr.row_ptr"] = w.frozen.row_ptr
                arrays[f"layer{i}.csr.col_idx"] = w.frozen.col_idx
                arrays[f"layer{i}.csr.values"] = w.frozen.values
        else:
            lm["kind"] = "dense"
            arrays[f"layer{i}.w"] = layer.weight
        meta["layers"].append(lm)
    return arrays, meta


def _rebuild_model(cfg: TrainConfig, vocab: Vocab, arrays: dict, meta: dict) -> LmModel:
    layers = []
    n_factors = {"KroneckerPair": 2, "LowRankPair": 2, "HybridParts": 3}
    for i, lm in enumerate(meta["layers"]):
        bias = arrays[f"layer{i}.bias"]
        if lm["kind"] == "dense":
            weight = arrays[f"layer{i}.w"]
        else:
            cls = _VARIANTS[lm["variant"]]
            facs = [arrays[f"layer{i}.factor{j}"]
                    for j in range(n_factors[lm["variant"]])]
            structured = cls(*facs)
            mask = arrays[f"layer{i}.mask"].astype(bool)
            frozen = None
            if lm["frozen"]:
                m, n = structured.shape
                frozen = CsrMatrix(m, n, arrays[f"layer{i}.csr.row_ptr"],
                                   arrays[f"layer{i}.csr.col_idx"],
                                   arrays[f"layer{i}.csr.values"])
            weight = DopedWeight(structured=structured, ws=arrays[f"layer{i}.ws"],
                                 mask=mask, alpha=lm["alpha"], beta=lm["beta"],
                                 nnz_target=lm["nnz_target"], frozen=frozen)
        layers.append(LstmLayer(weight=weight, bias=bias, hidden=lm["hidden"]))
    return LmModel(vocab=vocab, emb=arrays["emb"], layers=layers,
                   out_w=arrays["out_w"], out_b=arrays["out_b"])


def save_checkpoint(path, cfg: TrainConfig, model: LmModel, epoch: int,
                    rng: np.random.Generator, log: dict | None = None):
    arrays, meta = _model_arrays(model)
    cfg_dict = asdict(cfg)
    state = {"epoch": epoch, "rng_state": rng.bit_generator.state,
             "model_meta": meta}
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        _write_bytes(f, _pack_json(cfg_dict))
        _write_bytes(f, _pack_json(model.vocab.id_to_token))
        _write_bytes(f, _pack_json(state))
        _write_bytes(f, _pack_arrays(arrays))
        _write_bytes(f, _pack_json(log if log is not None else {}))


def load_checkpoint(path):
    """Returns dict with cfg, model, epoch, rng, log."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        raw = f.read(4)
        if len(raw) != 4:
            raise CheckpointError("truncated checkpoint header")
        (version,) = struct.unpack("<I", raw)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        cfg_dict = json.loads(_read_bytes(f))
        id_to_token = json.loads(_read_bytes(f))
        state = json.loads(_read_bytes(f))
        arrays = _unpack_arrays(_read_bytes(f))
        log = json.loads(_read_bytes(f))
    def _fix_shapes(s):
        return tuple(s) if isinstance(s, list) else s

    cfg_dict["layer_specs"] = [
        LayerSpec(**{**ls, "shapes": _fix_shapes(ls["shapes"])})
        for ls in cfg_dict["layer_specs"]]
    cfg = TrainConfig(**cfg_dict)
    vocab = Vocab({t: i for i, t in enumerate(id_to_token)}, id_to_token)
    model = _rebuild_model(cfg, vocab, arrays, state["model_meta"])
    rng = np.random.default_rng()
    rng.bit_generator.state = state["rng_state"]
    return {"cfg": cfg, "model": model, "epoch": state["epoch"], "rng": rng,
            "log": log or None}
