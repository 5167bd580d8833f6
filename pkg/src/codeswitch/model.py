"""Transformer encoder-decoder with tied embeddings and grouped parameters.

Parameters live in a flat name -> tensor dict rather than an nn.Module so
that checkpoints, gradient checks, and component-wise re-initialization can
address every tensor by name. The first dotted component of a name is its
group: embeddings, encoder, cross_attention, decoder, or output_bias. The
cross-attention sublayers are their own group (not part of `decoder`) so the
attention module between encoder and decoder can be ablated independently.

Layout choices: pre-norm residual blocks, learned positional embeddings, one
embedding matrix shared by the encoder input, decoder input, and (transposed)
output projection. float32 parameters; a float64 mode exists for gradient
checking only.
"""

from __future__ import annotations

import base64
import io
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import ValidationError
from .corrupt import TrainingExample

MAGIC = b"CSNMTCK1"
FORMAT_VERSION = 1
NEG_INF = -1e9

COMPONENTS = ("embeddings", "encoder", "cross_attention", "decoder", "output_bias")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    layers_enc: int = 2
    layers_dec: int = 2
    d_model: int = 64
    d_ffn: int = 256
    heads: int = 4
    dropout: float = 0.1
    max_positions: int = 256
    tie_embeddings: bool = True
    label_smoothing: float = 0.0

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValidationError(f"d_model {self.d_model} not divisible by {self.heads} heads")
        if not (0.0 <= self.dropout < 1.0):
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.vocab_size < 6:
            raise ValidationError("vocab_size must cover the specials")
        if not self.tie_embeddings:
            raise ValidationError("untied embeddings are not supported")
        if not (0.0 <= self.label_smoothing < 1.0):
            raise ValidationError("label_smoothing must be in [0, 1)")


@dataclass
class Checkpoint:
    """Named float32 tensors plus config, step counter, and RNG/optimizer state."""

    params: dict
    config: ModelConfig
    step: int = 0
    rng_state: dict | None = None
    opt_state: dict | None = None

    def clone(self) -> "Checkpoint":
        return Checkpoint(
            {k: v.clone() for k, v in self.params.items()},
            self.config,
            self.step,
            _clone_rng(self.rng_state),
            None
            if self.opt_state is None
            else {
                "t": self.opt_state["t"],
                "m": {k: v.clone() for k, v in self.opt_state["m"].items()},
                "v": {k: v.clone() for k, v in self.opt_state["v"].items()},
            },
        )


def _clone_rng(state):
    if state is None:
        return None
    return {"numpy": json.loads(json.dumps(state["numpy"])), "torch": state["torch"]}


def group_of(name: str) -> str:
    group = name.split(".", 1)[0]
    if group not in COMPONENTS:
        raise ValidationError(f"parameter {name!r} belongs to no known component")
    return group


def parameter_shapes(cfg: ModelConfig) -> dict:
    """Deterministic name -> shape map; grouping is exhaustive and disjoint."""
    d, ffn, v = cfg.d_model, cfg.d_ffn, cfg.vocab_size
    shapes: dict[str, tuple] = {
        "embeddings.token": (v, d),
        "embeddings.position": (cfg.max_positions, d),
    }

    def attn_block(prefix):
        for part in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{part}"] = (d, d)
        for part in ("bq", "bk", "bv", "bo"):
            shapes[f"{prefix}.{part}"] = (d,)

    def ffn_block(prefix):
        shapes[f"{prefix}.w1"] = (ffn, d)
        shapes[f"{prefix}.b1"] = (ffn,)
        shapes[f"{prefix}.w2"] = (d, ffn)
        shapes[f"{prefix}.b2"] = (d,)

    def ln_block(prefix):
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    for i in range(cfg.layers_enc):
        ln_block(f"encoder.{i}.ln_attn")
        attn_block(f"encoder.{i}.attn")
        ln_block(f"encoder.{i}.ln_ffn")
        ffn_block(f"encoder.{i}.ffn")
    ln_block("encoder.final_ln")
    for i in range(cfg.layers_dec):
        ln_block(f"decoder.{i}.ln_attn")
        attn_block(f"decoder.{i}.attn")
        ln_block(f"cross_attention.{i}.ln")
        attn_block(f"cross_attention.{i}.attn")
        ln_block(f"decoder.{i}.ln_ffn")
        ffn_block(f"decoder.{i}.ffn")
    ln_block("decoder.final_ln")
    shapes["output_bias.b"] = (v,)
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(cfg).values())


def init_model(cfg: ModelConfig, seed: int) -> Checkpoint:
    """Xavier-uniform weights, zero biases, unit layer-norm gains.

    The token embedding appears once and is shared by the encoder input, the
    decoder input, and the transposed output projection.
    """
    gen = torch.Generator().manual_seed(seed)
    params = {}
    for name, shape in parameter_shapes(cfg).items():
        t = torch.empty(shape, dtype=torch.float32)
        if len(shape) == 2:
            torch.nn.init.xavier_uniform_(t, generator=gen)
        elif name.endswith(".g"):
            torch.nn.init.ones_(t)
        else:
            torch.nn.init.zeros_(t)
        params[name] = t
    return Checkpoint(params, cfg, step=0)


def collate(batch: Sequence[TrainingExample], pad_id: int = 0) -> dict:
    """Pad a batch of examples into dense tensors plus a boolean loss mask."""
    if not batch:
        raise ValidationError("empty batch")
    s_max = max(len(ex.enc_ids) for ex in batch)
    t_max = max(len(ex.dec_in_ids) for ex in batch)
    B = len(batch)
    enc = torch.full((B, s_max), pad_id, dtype=torch.long)
    dec_in = torch.full((B, t_max), pad_id, dtype=torch.long)
    tgt = torch.full((B, t_max), pad_id, dtype=torch.long)
    mask = torch.zeros((B, t_max), dtype=torch.bool)
    for b, ex in enumerate(batch):
        enc[b, : len(ex.enc_ids)] = torch.tensor(ex.enc_ids, dtype=torch.long)
        dec_in[b, : len(ex.dec_in_ids)] = torch.tensor(ex.dec_in_ids, dtype=torch.long)
        tgt[b, : len(ex.tgt_ids)] = torch.tensor(ex.tgt_ids, dtype=torch.long)
        mask[b, : len(ex.loss_mask)] = torch.tensor(ex.loss_mask, dtype=torch.bool)
    return {"enc": enc, "dec_in": dec_in, "tgt": tgt, "mask": mask}


def _layer_norm(x, p, prefix, eps=1e-5):
    return F.layer_norm(x, x.shape[-1:], p[f"{prefix}.g"], p[f"{prefix}.b"], eps)


def _attention(p, prefix, q_in, kv_in, heads, key_valid, causal, dropout, training):
    B, tq, d = q_in.shape
    tk = kv_in.shape[1]
    dk = d // heads

    def proj(x, w, b):
        return F.linear(x, p[f"{prefix}.{w}"], p[f"{prefix}.{b}"])

    q = proj(q_in, "wq", "bq").view(B, tq, heads, dk).transpose(1, 2)
    k = proj(kv_in, "wk", "bk").view(B, tk, heads, dk).transpose(1, 2)
    v = proj(kv_in, "wv", "bv").view(B, tk, heads, dk).transpose(1, 2)
    scores = (q @ k.transpose(-2, -1)) / math.sqrt(dk)
    if causal:
        future = torch.triu(torch.ones(tq, tk, dtype=torch.bool, device=scores.device), 1)
        scores = scores.masked_fill(future, NEG_INF)
    if key_valid is not None:
        scores = scores.masked_fill(~key_valid[:, None, None, :], NEG_INF)
    attn = torch.softmax(scores, dim=-1)
    attn = F.dropout(attn, dropout, training)
    out = (attn @ v).transpose(1, 2).reshape(B, tq, d)
    return proj(out, "wo", "bo")


def _ffn(p, prefix, x, dropout, training):
    h = F.relu(F.linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
    h = F.dropout(h, dropout, training)
    return F.linear(h, p[f"{prefix}.w2"], p[f"{prefix}.b2"])


def _embed(p, ids, cfg):
    t = ids.shape[1]
    if t > cfg.max_positions:
        raise ValidationError(f"sequence length {t} exceeds max_positions {cfg.max_positions}")
    scale = math.sqrt(cfg.d_model)
    return F.embedding(ids, p["embeddings.token"]) * scale + p["embeddings.position"][:t]


def encode_states(p, cfg: ModelConfig, enc_ids, enc_valid, training=False):
    dp = cfg.dropout
    h = F.dropout(_embed(p, enc_ids, cfg), dp, training)
    for i in range(cfg.layers_enc):
        hn = _layer_norm(h, p, f"encoder.{i}.ln_attn")
        h = h + F.dropout(
            _attention(p, f"encoder.{i}.attn", hn, hn, cfg.heads, enc_valid, False, dp, training),
            dp,
            training,
        )
        hn = _layer_norm(h, p, f"encoder.{i}.ln_ffn")
        h = h + F.dropout(_ffn(p, f"encoder.{i}.ffn", hn, dp, training), dp, training)
    return _layer_norm(h, p, "encoder.final_ln")


def decode_states(p, cfg: ModelConfig, dec_in, dec_valid, memory, enc_valid, training=False):
    dp = cfg.dropout
    h = F.dropout(_embed(p, dec_in, cfg), dp, training)
    for i in range(cfg.layers_dec):
        hn = _layer_norm(h, p, f"decoder.{i}.ln_attn")
        h = h + F.dropout(
            _attention(p, f"decoder.{i}.attn", hn, hn, cfg.heads, dec_valid, True, dp, training),
            dp,
            training,
        )
        hn = _layer_norm(h, p, f"cross_attention.{i}.ln")
        h = h + F.dropout(
            _attention(
                p, f"cross_attention.{i}.attn", hn, memory, cfg.heads, enc_valid, False, dp, training
            ),
            dp,
            training,
        )
        hn = _layer_norm(h, p, f"decoder.{i}.ln_ffn")
        h = h + F.dropout(_ffn(p, f"decoder.{i}.ffn", hn, dp, training), dp, training)
    return _layer_norm(h, p, "decoder.final_ln")


def output_logits(p, states):
    return states @ p["embeddings.token"].t() + p["output_bias.b"]


def forward_params(p, cfg: ModelConfig, batch: dict, training: bool = False, pad_id: int = 0):
    """Loss (mean NLL over loss-masked positions) and logits for a collated batch."""
    enc, dec_in, tgt, mask = batch["enc"], batch["dec_in"], batch["tgt"], batch["mask"]
    if int(enc.max()) >= cfg.vocab_size or int(dec_in.max()) >= cfg.vocab_size:
        raise ValidationError("token id out of range for the model vocabulary")
    if int(mask.sum()) == 0:
        raise ValidationError("batch has an empty loss mask")
    enc_valid = enc != pad_id
    dec_valid = dec_in != pad_id
    memory = encode_states(p, cfg, enc, enc_valid, training)
    states = decode_states(p, cfg, dec_in, dec_valid, memory, enc_valid, training)
    logits = output_logits(p, states)
    log_probs = F.log_softmax(logits, dim=-1)
    nll = -log_probs.gather(-1, tgt.unsqueeze(-1)).squeeze(-1)
    if cfg.label_smoothing > 0.0:
        smooth = -log_probs.mean(dim=-1)
        nll = (1.0 - cfg.label_smoothing) * nll + cfg.label_smoothing * smooth
    fmask = mask.to(nll.dtype)
    loss = (nll * fmask).sum() / fmask.sum()
    return loss, logits


def _as_dtype(params: dict, dtype, requires_grad: bool) -> dict:
    out = {}
    for name, t in params.items():
        c = t.detach().to(dtype).clone()
        c.requires_grad_(requires_grad)
        out[name] = c
    return out


def forward(
    ckpt: Checkpoint,
    batch: Sequence[TrainingExample] | dict,
    training: bool = False,
    dtype: torch.dtype = torch.float32,
    pad_id: int = 0,
):
    """Pure forward pass from a checkpoint. Returns (loss, logits)."""
    if not isinstance(batch, dict):
        batch = collate(batch, pad_id)
    params = _as_dtype(ckpt.params, dtype, requires_grad=False)
    with torch.no_grad():
        loss, logits = forward_params(params, ckpt.config, batch, training, pad_id)
    return float(loss), logits


def backward(
    ckpt: Checkpoint,
    batch: Sequence[TrainingExample] | dict,
    training: bool = False,
    dtype: torch.dtype = torch.float32,
    pad_id: int = 0,
) -> dict:
    """Gradients of the loss for every trainable tensor, by name.

    The tied embedding accumulates the encoder-input, decoder-input, and
    output-projection contributions in one tensor. Parameters off every
    active path get zero gradients.
    """
    if not isinstance(batch, dict):
        batch = collate(batch, pad_id)
    params = _as_dtype(ckpt.params, dtype, requires_grad=True)
    loss, _ = forward_params(params, ckpt.config, batch, training, pad_id)
    loss.backward()
    return {
        name: (t.grad.clone() if t.grad is not None else torch.zeros_like(t))
        for name, t in params.items()
    }


def _length_penalty(n: int, alpha: float = 0.6) -> float:
    return ((5.0 + n) / 6.0) ** alpha


def decode(
    ckpt: Checkpoint,
    src_ids: Sequence[int],
    beam: int = 1,
    max_len: int = 64,
    bos_id: int = 2,
    eos_id: int = 3,
    pad_id: int = 0,
    alpha: float = 0.6,
) -> list[int]:
    """Beam search with GNMT length-normalized log-probability; beam=1 is greedy.

    Generation stops at EOS or after max_len tokens; the returned ids exclude
    BOS and EOS.
    """
    if beam < 1:
        raise ValidationError(f"beam must be >= 1, got {beam}")
    params = _as_dtype(ckpt.params, torch.float32, requires_grad=False)
    cfg = ckpt.config
    with torch.no_grad():
        enc = torch.tensor([list(src_ids)], dtype=torch.long)
        enc_valid = enc != pad_id
        memory = encode_states(params, cfg, enc, enc_valid, training=False)

        live = [((), 0.0)]
        finished: list[tuple[tuple, float]] = []
        for _ in range(max_len):
            if not live or len(finished) >= beam:
                break
            dec_in = torch.tensor(
                [[bos_id, *ids] for ids, _ in live], dtype=torch.long
            )
            mem = memory.expand(len(live), -1, -1)
            ev = enc_valid.expand(len(live), -1)
            states = decode_states(
                params, cfg, dec_in, dec_in != pad_id, mem, ev, training=False
            )
            log_probs = F.log_softmax(output_logits(params, states[:, -1]), dim=-1)
            top = torch.topk(log_probs, k=min(beam, cfg.vocab_size), dim=-1)
            candidates = []
            for h, (ids, score) in enumerate(live):
                for lp, tok in zip(top.values[h].tolist(), top.indices[h].tolist()):
                    candidates.append((ids + (tok,), score + lp))
            candidates.sort(key=lambda c: -c[1])
            live = []
            for ids, score in candidates[:beam]:
                if ids[-1] == eos_id:
                    finished.append((ids[:-1], score / _length_penalty(len(ids), alpha)))
                else:
                    live.append((ids, score))
        for ids, score in live:
            finished.append((ids, score / _length_penalty(len(ids) + 1, alpha)))
        best = max(finished, key=lambda c: c[1])
    return list(best[0])


def greedy_decode_batch(
    params: dict,
    cfg: ModelConfig,
    src_batch: Sequence[Sequence[int]],
    max_len: int = 64,
    bos_id: int = 2,
    eos_id: int = 3,
    pad_id: int = 0,
) -> list[list[int]]:
    """Batched greedy decoding used by back-translation and BLEU evaluation."""
    with torch.no_grad():
        B = len(src_batch)
        s_max = max(len(s) for s in src_batch)
        enc = torch.full((B, s_max), pad_id, dtype=torch.long)
        for b, s in enumerate(src_batch):
            enc[b, : len(s)] = torch.tensor(list(s), dtype=torch.long)
        enc_valid = enc != pad_id
        memory = encode_states(params, cfg, enc, enc_valid, training=False)

        out = torch.full((B, 1), bos_id, dtype=torch.long)
        done = torch.zeros(B, dtype=torch.bool)
        for _ in range(max_len):
            states = decode_states(
                params, cfg, out, out != pad_id, memory, enc_valid, training=False
            )
            next_tok = output_logits(params, states[:, -1]).argmax(dim=-1)
            next_tok = torch.where(done, torch.full_like(next_tok, pad_id), next_tok)
            done = done | (next_tok == eos_id)
            out = torch.cat([out, next_tok.unsqueeze(1)], dim=1)
            if bool(done.all()):
                break
    results = []
    for b in range(B):
        ids = []
        for tok in out[b, 1:].tolist():
            if tok in (eos_id, pad_id):
                break
            ids.append(tok)
        results.append(ids)
    return results


def _rng_state_to_json(state: dict | None):
    if state is None:
        return None
    return {
        "numpy": state["numpy"],
        "torch": base64.b64encode(state["torch"]).decode("ascii")
        if state.get("torch") is not None
        else None,
    }


def _rng_state_from_json(obj):
    if obj is None:
        return None
    return {
        "numpy": obj["numpy"],
        "torch": base64.b64decode(obj["torch"]) if obj.get("torch") is not None else None,
    }


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    """Self-describing container: magic, JSON header, little-endian float32 data."""
    names = sorted(ckpt.params)
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(ckpt.config),
        "step": ckpt.step,
        "rng_state": _rng_state_to_json(ckpt.rng_state),
        "tensors": [[n, group_of(n), list(ckpt.params[n].shape)] for n in names],
        "opt": None,
    }
    opt_names = []
    if ckpt.opt_state is not None:
        opt_names = sorted(ckpt.opt_state["m"])
        header["opt"] = {"t": ckpt.opt_state["t"], "tensors": opt_names}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(len(blob).to_bytes(8, "little"))
    buf.write(blob)
    for n in names:
        arr = ckpt.params[n].detach().to(torch.float32).numpy()
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    for part in ("m", "v"):
        for n in opt_names:
            arr = ckpt.opt_state[part][n].detach().to(torch.float32).numpy()
            buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file (bad magic)")
    off = len(MAGIC)
    header_len = int.from_bytes(data[off : off + 8], "little")
    off += 8
    header = json.loads(data[off : off + header_len].decode("utf-8"))
    off += header_len
    if header["format_version"] != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported format version {header['format_version']}")
    cfg = ModelConfig(**header["config"])
    params = {}
    for name, group, shape in header["tensors"]:
        if group_of(name) != group:
            raise ValidationError(f"{path}: tensor {name} mislabeled as {group}")
        n_bytes = int(np.prod(shape)) * 4
        arr = np.frombuffer(data[off : off + n_bytes], dtype="<f4").reshape(shape)
        params[name] = torch.from_numpy(arr.copy())
        off += n_bytes
    opt_state = None
    if header["opt"] is not None:
        opt_state = {"t": header["opt"]["t"], "m": {}, "v": {}}
        for part in ("m", "v"):
            for name in header["opt"]["tensors"]:
                shape = list(params[name].shape)
                n_bytes = int(np.prod(shape)) * 4
                arr = np.frombuffer(data[off : off + n_bytes], dtype="<f4").reshape(shape)
                opt_state[part][name] = torch.from_numpy(arr.copy())
                off += n_bytes
    if off != len(data):
        raise ValidationError(f"{path}: trailing bytes after tensor data")
    return Checkpoint(
        params, cfg, header["step"], _rng_state_from_json(header["rng_state"]), opt_state
    )
