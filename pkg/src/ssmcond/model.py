"""The assembled conditioning network, its inference path and checkpoint I/O."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .alignpitch.pitch import PitchParams, init_pitch, pitch_fuse, predict_f0
from .config import ModelConfig
from .dynamics.conditioning import (
    ConditioningSequence,
    DecoderParams,
    DynamicsParams,
    assemble_conditioning,
    expand_uniform,
    init_decoder,
    init_dynamics,
    temporal_predict,
    toy_decode,
)
from .encoders import (
    ExpressiveEncoderParams,
    TemporalEncoderParams,
    TextEncoderParams,
    expressive_encode,
    init_expressive_encoder,
    init_temporal_encoder,
    init_text_encoder,
    temporal_encode,
    text_encode,
)
from .frontend import StyleParams, embed_tokens, init_style, style_embed
from .numerics.rng import Rng
from .numerics.tape import value_of
from .numerics.tensorio import read_tensor, write_tensor
from .numerics.tree import named_leaves, tree_map_named


@dataclass(frozen=True, eq=False)
class ConditioningParams:
    embedding: np.ndarray   # vocab x d
    style: StyleParams
    text: TextEncoderParams
    expressive: ExpressiveEncoderParams
    temporal: TemporalEncoderParams
    pitch: PitchParams
    dynamics: DynamicsParams
    decoder: DecoderParams


def init_conditioning(cfg: ModelConfig, seed: int | None = None) -> ConditioningParams:
    root = Rng(cfg.seed if seed is None else seed)
    # One child stream per component so adding a layer elsewhere leaves the rest unchanged.
    return ConditioningParams(
        embedding=root.child(0).normal((cfg.vocab, cfg.d)),
        style=init_style(root.child(1), cfg.n_mels, cfg.d_s, cfg.k),
        text=init_text_encoder(root.child(2), cfg),
        expressive=init_expressive_encoder(root.child(3), cfg),
        temporal=init_temporal_encoder(root.child(4), cfg),
        pitch=init_pitch(root.child(5), cfg.d_h, cfg.tau),
        dynamics=init_dynamics(root.child(6), cfg.d_h, cfg.d_ssm, cfg.k, cfg.tau, cfg.state_bound),
        decoder=init_decoder(root.child(7), cfg.d_h, cfg.n_mels),
    )


@dataclass(frozen=True, eq=False)
class Features:
    """Pre-alignment encodings of one utterance."""

    e: object        # d_s
    h_ts: object     # T_x x d_h
    gates: object    # T_x x 2d_h
    h_e: object      # T_m x d_h
    h_b: object      # T_m x d_h
    h_p: object      # T_m x d_h
    f0: object       # T_m x 1

    @property
    def num_frames(self) -> int:
        return value_of(self.h_e).shape[0]


def encode(p: ConditioningParams, ids, mel) -> Features:
    """Style, text, expressive, temporal and pitch stages; no alignment."""
    e = style_embed(mel, p.style)
    h_ts, gates = text_encode(embed_tokens(ids, p.embedding), e, p.text)
    h_e = expressive_encode(mel, e, p.expressive)
    h_b = temporal_encode(e, value_of(h_e).shape[0], p.temporal)
    h_p = pitch_fuse(h_e, h_b, p.pitch)
    return Features(e, h_ts, gates, h_e, h_b, h_p, predict_f0(h_p, p.pitch.w_f, p.pitch.b_f))


def dynamics_stage(h_a, feats: Features, p: ConditioningParams) -> ConditioningSequence:
    return assemble_conditioning(temporal_predict(h_a, p.dynamics), feats.h_p, p.dynamics)


def condition(p: ConditioningParams, ids, mel):
    """Inference: reference mel and tokens -> ``(h_D sequence, features)``.

    Tokens are spread uniformly over the reference length; the attention
    aligner only exists at training time.
    """
    feats = encode(p, ids, mel)
    h_a = expand_uniform(feats.h_ts, feats.num_frames)
    return dynamics_stage(h_a, feats, p), feats


def decode_preview(cond: ConditioningSequence, p: ConditioningParams):
    return toy_decode(cond, p.decoder)


# --- checkpoints ---------------------------------------------------------------------

MANIFEST = "manifest.json"


def _as_matrix(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        return arr
    return arr.reshape(1, -1)


def save_checkpoint(path: str | os.PathLike, trees: dict, cfg: ModelConfig, meta: dict | None = None) -> None:
    """Write each tree's leaves as MVCT files plus a JSON manifest.

    ``trees`` maps a prefix (e.g. ``"cond"``, ``"ema.cond"``) to a parameter tree.
    Vectors are stored as 1 x n matrices; the manifest keeps the true shape.
    """
    os.makedirs(path, exist_ok=True)
    entries = []
    for prefix, tree in trees.items():
        for name, leaf in named_leaves(tree, prefix):
            fname = name + ".mvct"
            write_tensor(_as_matrix(value_of(leaf)), os.path.join(path, fname))
            entries.append({"name": name, "file": fname, "shape": list(np.shape(value_of(leaf)))})
    manifest = {"format": 1, "config": cfg.to_dict(), "tensors": entries, "meta": meta or {}}
    with open(os.path.join(path, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def read_manifest(path: str | os.PathLike) -> dict:
    with open(os.path.join(path, MANIFEST)) as fh:
        return json.load(fh)


def load_tree(path: str | os.PathLike, prefix: str, template):
    manifest = read_manifest(path)
    table = {t["name"]: t for t in manifest["tensors"]}

    def fill(name, leaf):
        if name not in table:
            raise KeyError(f"checkpoint {path} has no tensor {name!r}")
        entry = table[name]
        if tuple(entry["shape"]) != np.shape(leaf):
            raise ValueError(f"{name}: checkpoint shape {entry['shape']} != expected {np.shape(leaf)}")
        arr = read_tensor(os.path.join(path, entry["file"])).astype(np.float64)
        return arr.reshape(entry["shape"])

    return tree_map_named(fill, template, prefix)


def load_conditioning(path: str | os.PathLike) -> tuple[ConditioningParams, ModelConfig]:
    """Load inference weights, preferring the EMA copy when present."""
    manifest = read_manifest(path)
    cfg = ModelConfig.from_dict(manifest["config"])
    names = {t["name"] for t in manifest["tensors"]}
    prefix = "ema.cond" if any(n.startswith("ema.cond.") for n in names) else "cond"
    return load_tree(path, prefix, init_conditioning(cfg)), cfg
