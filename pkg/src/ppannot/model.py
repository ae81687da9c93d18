"""Encoder-decoder transformer annotator with hand-written backprop.

Pre-LayerNorm blocks, GELU feed-forward, fixed sinusoidal positions on both
sides. The encoder stacks ``frame_stack`` consecutive input frames into one
position before the input projection. Parameters live in a flat ordered dict
of numpy arrays so the optimizer, checksums and checkpoint code can treat
them uniformly.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import CheckpointFormatError, InvalidConfig, SequenceTooLong
from .labels import MoraInventory
from .vocab import Vocabulary, build_vocab

NEG_INF = -1e9


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ff_dim: int = 128
    max_src_len: int = 512
    max_tgt_len: int = 128
    freeze_encoder: bool = False
    d_in: int = 12
    frame_stack: int = 2
    ln_eps: float = 1e-5

    def validate(self) -> None:
        for name in ("d_model", "n_heads", "ff_dim", "max_src_len", "max_tgt_len", "d_in", "frame_stack"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.n_enc_layers < 0 or self.n_dec_layers < 0:
            raise InvalidConfig("layer counts must be non-negative")
        if self.d_model % self.n_heads:
            raise InvalidConfig(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def sinusoid_table(n_pos: int, d: int) -> np.ndarray:
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def param_shapes(cfg: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    d, f, V = cfg.d_model, cfg.ff_dim, vocab_size
    shapes: dict[str, tuple[int, ...]] = {}

    def ln(prefix):
        shapes[prefix + ".g"] = (d,)
        shapes[prefix + ".b"] = (d,)

    def attn(prefix):
        for w in ("q", "k", "v", "o"):
            shapes[f"{prefix}.W{w}"] = (d, d)
            shapes[f"{prefix}.b{w}"] = (d,)

    def ff(prefix):
        shapes[prefix + ".W1"] = (d, f)
        shapes[prefix + ".b1"] = (f,)
        shapes[prefix + ".W2"] = (f, d)
        shapes[prefix + ".b2"] = (d,)

    shapes["enc.in.W"] = (cfg.frame_stack * cfg.d_in, d)
    shapes["enc.in.b"] = (d,)
    for l in range(cfg.n_enc_layers):
        p = f"enc.{l}"
        ln(p + ".ln1")
        attn(p + ".attn")
        ln(p + ".ln2")
        ff(p + ".ff")
    ln("enc.lnf")
    shapes["dec.emb"] = (V, d)
    for l in range(cfg.n_dec_layers):
        p = f"dec.{l}"
        ln(p + ".ln1")
        attn(p + ".self")
        ln(p + ".ln2")
        attn(p + ".cross")
        ln(p + ".ln3")
        ff(p + ".ff")
    ln("dec.lnf")
    shapes["out.W"] = (d, V)
    shapes["out.b"] = (V,)
    return shapes


class AnnotatorModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.vocab = vocab
        self.params = params
        self.dtype = next(iter(params.values())).dtype
        n_src = -(-cfg.max_src_len // cfg.frame_stack)
        self._pe_src = sinusoid_table(n_src, cfg.d_model).astype(self.dtype)
        self._pe_tgt = sinusoid_table(cfg.max_tgt_len, cfg.d_model).astype(self.dtype)

    @property
    def n_params(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def is_encoder_param(self, name: str) -> bool:
        return name.startswith("enc.")

    def trainable_names(self) -> list[str]:
        return [n for n in self.params if not (self.cfg.freeze_encoder and self.is_encoder_param(n))]

    def checksum(self, prefix: str = "") -> str:
        h = hashlib.sha256()
        for name, arr in self.params.items():
            if name.startswith(prefix):
                h.update(name.encode())
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def astype(self, dtype) -> "AnnotatorModel":
        return AnnotatorModel(self.cfg, self.vocab, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "AnnotatorModel":
        return AnnotatorModel(self.cfg, self.vocab, {k: v.copy() for k, v in self.params.items()})


def init_model(cfg: ModelConfig, vocab: Vocabulary, seed: int, dtype=np.float32) -> AnnotatorModel:
    cfg.validate()
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg, len(vocab)).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "g":
            arr = np.ones(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        elif name == "dec.emb":
            arr = rng.normal(0.0, 1.0, size=shape)
        else:
            arr = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), size=shape)
        params[name] = arr.astype(dtype)
    return AnnotatorModel(cfg, vocab, params)


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    x: np.ndarray  # (B, N, D) zero padded
    x_len: np.ndarray  # (B,)
    y: np.ndarray  # (B, T) ids, PAD padded, each row BOS ... EOS

    @property
    def size(self) -> int:
        return self.x.shape[0]


def make_batch(xs: Sequence[np.ndarray], ys: Sequence[Sequence[int]], pad_id: int, dtype=np.float32) -> Batch:
    B = len(xs)
    n = max(x.shape[0] for x in xs)
    d = xs[0].shape[1]
    x = np.zeros((B, n, d), dtype=dtype)
    x_len = np.zeros(B, dtype=np.int64)
    for i, xi in enumerate(xs):
        x[i, : xi.shape[0]] = xi
        x_len[i] = xi.shape[0]
    t = max(len(y) for y in ys)
    y = np.full((B, t), pad_id, dtype=np.int64)
    for i, yi in enumerate(ys):
        y[i, : len(yi)] = yi
    return Batch(x, x_len, y)


def _check_lengths(model: AnnotatorModel, x_len: np.ndarray, y_len: int | None) -> None:
    cfg = model.cfg
    if int(x_len.max()) > cfg.max_src_len:
        raise SequenceTooLong(f"{int(x_len.max())} frames exceeds max_src_len={cfg.max_src_len}")
    if y_len is not None and y_len > cfg.max_tgt_len:
        raise SequenceTooLong(f"{y_len} target ids exceeds max_tgt_len={cfg.max_tgt_len}")


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------

def _ln_fwd(p, prefix, x, eps):
    y, xhat, rstd = kernels.layernorm(x, p[prefix + ".g"], p[prefix + ".b"], eps)
    return y, (xhat, rstd)


def _ln_bwd(p, prefix, dy, cache, g):
    xhat, rstd = cache
    dx, dg, db = kernels.layernorm_backward(dy, xhat, rstd, p[prefix + ".g"])
    if g is not None:
        g[prefix + ".g"] += dg
        g[prefix + ".b"] += db
    return dx


def _split_heads(x, H):
    B, T, d = x.shape
    return x.reshape(B, T, H, d // H).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)


def _mha_fwd(p, prefix, xq, xkv, bias, H):
    d = xq.shape[-1]
    scale = 1.0 / math.sqrt(d // H)
    q = _split_heads(xq @ p[prefix + ".Wq"] + p[prefix + ".bq"], H)
    k = _split_heads(xkv @ p[prefix + ".Wk"] + p[prefix + ".bk"], H)
    v = _split_heads(xkv @ p[prefix + ".Wv"] + p[prefix + ".bv"], H)
    s = (q @ k.transpose(0, 1, 3, 2)) * xq.dtype.type(scale) + bias
    a = kernels.softmax(s)
    ctx = _merge_heads(a @ v)
    out = ctx @ p[prefix + ".Wo"] + p[prefix + ".bo"]
    return out, (xq, xkv, q, k, v, a, ctx, scale)


def _acc_linear(g, prefix, w, x, dy):
    if g is None:
        return
    d_in, d_out = x.shape[-1], dy.shape[-1]
    g[f"{prefix}.W{w}"] += x.reshape(-1, d_in).T @ dy.reshape(-1, d_out)
    g[f"{prefix}.b{w}"] += dy.reshape(-1, d_out).sum(axis=0)


def _mha_bwd(p, prefix, dout, cache, H, g, need_dkv=True):
    xq, xkv, q, k, v, a, ctx, scale = cache
    _acc_linear(g, prefix, "o", ctx, dout)
    dctx = _split_heads(dout @ p[prefix + ".Wo"].T, H)
    da = dctx @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ dctx
    ds = kernels.softmax_backward(a, da) * xq.dtype.type(scale)
    dq = _merge_heads(ds @ k)
    _acc_linear(g, prefix, "q", xq, dq)
    dxq = dq @ p[prefix + ".Wq"].T
    if not need_dkv:
        return dxq, None
    dk = _merge_heads(ds.transpose(0, 1, 3, 2) @ q)
    dv = _merge_heads(dv)
    _acc_linear(g, prefix, "k", xkv, dk)
    _acc_linear(g, prefix, "v", xkv, dv)
    dxkv = dk @ p[prefix + ".Wk"].T + dv @ p[prefix + ".Wv"].T
    return dxq, dxkv


def _ff_fwd(p, prefix, x):
    pre = x @ p[prefix + ".W1"] + p[prefix + ".b1"]
    h = kernels.gelu(pre)
    return h @ p[prefix + ".W2"] + p[prefix + ".b2"], (x, pre, h)


def _ff_bwd(p, prefix, dy, cache, g):
    x, pre, h = cache
    _acc_linear(g, prefix, "2", h, dy)
    dh = kernels.gelu_backward(pre, dy @ p[prefix + ".W2"].T)
    _acc_linear(g, prefix, "1", x, dh)
    return dh @ p[prefix + ".W1"].T


# ---------------------------------------------------------------------------
# encoder / decoder
# ---------------------------------------------------------------------------

def stack_frames(x: np.ndarray, x_len: np.ndarray, s: int) -> tuple[np.ndarray, np.ndarray]:
    B, N, D = x.shape
    n_pos = -(-N // s)
    pad = n_pos * s - N
    if pad:
        x = np.concatenate([x, np.zeros((B, pad, D), dtype=x.dtype)], axis=1)
    return x.reshape(B, n_pos, s * D), -(-x_len // s)


def src_bias(pos_len: np.ndarray, n_pos: int, dtype) -> np.ndarray:
    valid = np.arange(n_pos)[None, :] < pos_len[:, None]
    return np.where(valid, 0.0, NEG_INF).astype(dtype)[:, None, None, :]


def encode_source(model: AnnotatorModel, x: np.ndarray, x_len: np.ndarray, keep_cache: bool = False):
    """Return (memory, key bias, cache)."""
    p, cfg = model.params, model.cfg
    H, eps = cfg.n_heads, cfg.ln_eps
    xs, pos_len = stack_frames(x.astype(model.dtype, copy=False), x_len, cfg.frame_stack)
    S = xs.shape[1]
    bias = src_bias(pos_len, S, model.dtype)
    h = xs @ p["enc.in.W"] + p["enc.in.b"] + model._pe_src[:S]
    caches = []
    for l in range(cfg.n_enc_layers):
        pre = f"enc.{l}"
        n1, c1 = _ln_fwd(p, pre + ".ln1", h, eps)
        a, ca = _mha_fwd(p, pre + ".attn", n1, n1, bias, H)
        h = h + a
        n2, c2 = _ln_fwd(p, pre + ".ln2", h, eps)
        f, cf = _ff_fwd(p, pre + ".ff", n2)
        h = h + f
        if keep_cache:
            caches.append((c1, ca, c2, cf))
    mem, cfin = _ln_fwd(p, "enc.lnf", h, eps)
    cache = (xs, caches, cfin) if keep_cache else None
    return mem, bias, cache


def _encoder_bwd(model, dmem, cache, g):
    p, cfg = model.params, model.cfg
    H = cfg.n_heads
    xs, caches, cfin = cache
    dh = _ln_bwd(p, "enc.lnf", dmem, cfin, g)
    for l in reversed(range(cfg.n_enc_layers)):
        pre = f"enc.{l}"
        c1, ca, c2, cf = caches[l]
        dn2 = _ff_bwd(p, pre + ".ff", dh, cf, g)
        dh = dh + _ln_bwd(p, pre + ".ln2", dn2, c2, g)
        dq, dkv = _mha_bwd(p, pre + ".attn", dh, ca, H, g)
        dh = dh + _ln_bwd(p, pre + ".ln1", dq + dkv, c1, g)
    _acc_linear(g, "enc.in", "", xs, dh)


def _tgt_bias(y_in: np.ndarray, pad_id: int, dtype) -> np.ndarray:
    T = y_in.shape[1]
    causal = np.triu(np.ones((T, T), dtype=bool), k=1)
    keypad = y_in == pad_id
    masked = causal[None, :, :] | keypad[:, None, :]
    return np.where(masked, NEG_INF, 0.0).astype(dtype)[:, None, :, :]


def decode_logits(model: AnnotatorModel, y_in: np.ndarray, mem: np.ndarray, sbias: np.ndarray, keep_cache: bool = False):
    p, cfg = model.params, model.cfg
    H, eps = cfg.n_heads, cfg.ln_eps
    T = y_in.shape[1]
    tbias = _tgt_bias(y_in, model.vocab.pad, model.dtype)
    t = p["dec.emb"][y_in] + model._pe_tgt[:T]
    caches = []
    for l in range(cfg.n_dec_layers):
        pre = f"dec.{l}"
        n1, c1 = _ln_fwd(p, pre + ".ln1", t, eps)
        a, cs = _mha_fwd(p, pre + ".self", n1, n1, tbias, H)
        t = t + a
        n2, c2 = _ln_fwd(p, pre + ".ln2", t, eps)
        a, cx = _mha_fwd(p, pre + ".cross", n2, mem, sbias, H)
        t = t + a
        n3, c3 = _ln_fwd(p, pre + ".ln3", t, eps)
        f, cf = _ff_fwd(p, pre + ".ff", n3)
        t = t + f
        if keep_cache:
            caches.append((c1, cs, c2, cx, c3, cf))
    z, cfin = _ln_fwd(p, "dec.lnf", t, eps)
    logits = z @ p["out.W"] + p["out.b"]
    return logits, ((y_in, caches, cfin, z) if keep_cache else None)


def _decoder_bwd(model, dlogits, cache, g, mem_shape):
    p, cfg = model.params, model.cfg
    H = cfg.n_heads
    y_in, caches, cfin, z = cache
    g["out.W"] += z.reshape(-1, z.shape[-1]).T @ dlogits.reshape(-1, dlogits.shape[-1])
    g["out.b"] += dlogits.reshape(-1, dlogits.shape[-1]).sum(axis=0)
    dt = _ln_bwd(p, "dec.lnf", dlogits @ p["out.W"].T, cfin, g)
    dmem = np.zeros(mem_shape, dtype=dt.dtype)
    for l in reversed(range(cfg.n_dec_layers)):
        pre = f"dec.{l}"
        c1, cs, c2, cx, c3, cf = caches[l]
        dt = dt + _ln_bwd(p, pre + ".ln3", _ff_bwd(p, pre + ".ff", dt, cf, g), c3, g)
        dq, dkv = _mha_bwd(p, pre + ".cross", dt, cx, H, g)
        dmem += dkv
        dt = dt + _ln_bwd(p, pre + ".ln2", dq, c2, g)
        dq, dkv = _mha_bwd(p, pre + ".self", dt, cs, H, g)
        dt = dt + _ln_bwd(p, pre + ".ln1", dq + dkv, c1, g)
    V = p["dec.emb"].shape[0]
    flat = y_in.reshape(-1)
    onehot = np.zeros((flat.size, V), dtype=dt.dtype)
    onehot[np.arange(flat.size), flat] = 1
    g["dec.emb"] += onehot.T @ dt.reshape(-1, dt.shape[-1])
    return dmem


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def batch_loss(model: AnnotatorModel, batch: Batch, with_grads: bool = True):
    """Token-mean teacher-forced cross-entropy.

    Returns (loss, grads, n_tokens); grads only covers trainable parameters
    and is None when ``with_grads`` is False.
    """
    pad = model.vocab.pad
    y_in = batch.y[:, :-1]
    y_out = batch.y[:, 1:]
    _check_lengths(model, batch.x_len, batch.y.shape[1])
    mask = (y_out != pad)
    n_tok = int(mask.sum())
    mem, sbias, ecache = encode_source(model, batch.x, batch.x_len, keep_cache=with_grads)
    logits, dcache = decode_logits(model, y_in, mem, sbias, keep_cache=with_grads)
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, y_out[..., None], axis=-1)[..., 0]
    loss = -float(np.sum(picked * mask, dtype=np.float64)) / n_tok
    if not with_grads:
        return loss, None, n_tok
    grads = {n: np.zeros_like(model.params[n]) for n in model.params}
    dlogits = np.exp(logp)
    B, T, V = dlogits.shape
    bi, ti = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    dlogits[bi, ti, y_out] -= 1.0
    dlogits *= (mask / n_tok).astype(dlogits.dtype)[..., None]
    dmem = _decoder_bwd(model, dlogits, dcache, grads, mem.shape)
    if model.cfg.freeze_encoder:
        return loss, {n: grads[n] for n in model.trainable_names()}, n_tok
    _encoder_bwd(model, dmem, ecache, grads)
    return loss, grads, n_tok


def teacher_forced_loss(model: AnnotatorModel, x: np.ndarray, y_ids: Sequence[int], with_grads: bool = True):
    """Mean over target positions of -log p(y_m | y_<m, X) for one utterance."""
    batch = make_batch([x], [list(y_ids)], model.vocab.pad, model.dtype)
    loss, grads, _ = batch_loss(model, batch, with_grads)
    return loss, grads


def token_log_probs(model: AnnotatorModel, x: np.ndarray, y_ids: Sequence[int]) -> np.ndarray:
    """log p(y_m | y_<m, X) for m = 1..len(y_ids)-1 via one teacher-forced pass."""
    batch = make_batch([x], [list(y_ids)], model.vocab.pad, model.dtype)
    mem, sbias, _ = encode_source(model, batch.x, batch.x_len)
    logits, _ = decode_logits(model, batch.y[:, :-1], mem, sbias)
    logp = log_softmax(logits)[0]
    return logp[np.arange(len(y_ids) - 1), batch.y[0, 1:]]


# ---------------------------------------------------------------------------
# incremental decoding with key/value caches
# ---------------------------------------------------------------------------

class DecoderState:
    """Per-hypothesis caches for step-wise decoding."""

    def __init__(self, model: AnnotatorModel, mem: np.ndarray, sbias: np.ndarray):
        p, cfg = model.params, model.cfg
        H = cfg.n_heads
        self.model = model
        self.sbias = sbias
        self.cross_k = []
        self.cross_v = []
        for l in range(cfg.n_dec_layers):
            pre = f"dec.{l}.cross"
            self.cross_k.append(_split_heads(mem @ p[pre + ".Wk"] + p[pre + ".bk"], H))
            self.cross_v.append(_split_heads(mem @ p[pre + ".Wv"] + p[pre + ".bv"], H))
        B = mem.shape[0]
        dh = cfg.d_model // H
        self.self_k = [np.zeros((B, H, 0, dh), dtype=model.dtype) for _ in range(cfg.n_dec_layers)]
        self.self_v = [np.zeros((B, H, 0, dh), dtype=model.dtype) for _ in range(cfg.n_dec_layers)]
        self.t = 0

    @property
    def size(self) -> int:
        return self.sbias.shape[0]

    def select(self, idx: np.ndarray) -> None:
        """Reorder/duplicate hypotheses (beam bookkeeping)."""
        self.sbias = self.sbias[idx]
        self.cross_k = [k[idx] for k in self.cross_k]
        self.cross_v = [v[idx] for v in self.cross_v]
        self.self_k = [k[idx] for k in self.self_k]
        self.self_v = [v[idx] for v in self.self_v]

    def step(self, tokens: np.ndarray) -> np.ndarray:
        """Feed one token per hypothesis; return next-token log-probs (B, V)."""
        model = self.model
        p, cfg = model.params, model.cfg
        H, eps = cfg.n_heads, cfg.ln_eps
        if self.t >= cfg.max_tgt_len:
            raise SequenceTooLong(f"decoder position {self.t} exceeds max_tgt_len={cfg.max_tgt_len}")
        d = cfg.d_model
        scale = model.dtype.type(1.0 / math.sqrt(d // H))
        x = p["dec.emb"][tokens][:, None, :] + model._pe_tgt[self.t]
        for l in range(cfg.n_dec_layers):
            pre = f"dec.{l}"
            n1, _ = _ln_fwd(p, pre + ".ln1", x, eps)
            q = _split_heads(n1 @ p[pre + ".self.Wq"] + p[pre + ".self.bq"], H)
            k = _split_heads(n1 @ p[pre + ".self.Wk"] + p[pre + ".self.bk"], H)
            v = _split_heads(n1 @ p[pre + ".self.Wv"] + p[pre + ".self.bv"], H)
            self.self_k[l] = np.concatenate([self.self_k[l], k], axis=2)
            self.self_v[l] = np.concatenate([self.self_v[l], v], axis=2)
            a = kernels.softmax((q @ self.self_k[l].transpose(0, 1, 3, 2)) * scale)
            x = x + _merge_heads(a @ self.self_v[l]) @ p[pre + ".self.Wo"] + p[pre + ".self.bo"]
            n2, _ = _ln_fwd(p, pre + ".ln2", x, eps)
            q = _split_heads(n2 @ p[pre + ".cross.Wq"] + p[pre + ".cross.bq"], H)
            a = kernels.softmax((q @ self.cross_k[l].transpose(0, 1, 3, 2)) * scale + self.sbias)
            x = x + _merge_heads(a @ self.cross_v[l]) @ p[pre + ".cross.Wo"] + p[pre + ".cross.bo"]
            n3, _ = _ln_fwd(p, pre + ".ln3", x, eps)
            f, _ = _ff_fwd(p, pre + ".ff", n3)
            x = x + f
        z, _ = _ln_fwd(p, "dec.lnf", x, eps)
        logits = z[:, 0, :] @ p["out.W"] + p["out.b"]
        self.t += 1
        return log_softmax(logits)


def start_decoding(model: AnnotatorModel, xs: Sequence[np.ndarray]) -> DecoderState:
    x_len = np.array([x.shape[0] for x in xs], dtype=np.int64)
    _check_lengths(model, x_len, None)
    n = int(x_len.max())
    x = np.zeros((len(xs), n, xs[0].shape[1]), dtype=model.dtype)
    for i, xi in enumerate(xs):
        x[i, : xi.shape[0]] = xi
    mem, sbias, _ = encode_source(model, x, x_len)
    return DecoderState(model, mem, sbias)


def incremental_log_probs(model: AnnotatorModel, x: np.ndarray, y_ids: Sequence[int]) -> np.ndarray:
    """Same quantity as :func:`token_log_probs`, computed one step at a time."""
    state = start_decoding(model, [x])
    out = []
    for m in range(1, len(y_ids)):
        logp = state.step(np.array([y_ids[m - 1]]))
        out.append(logp[0, y_ids[m]])
    return np.array(out)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"PPANCKPT"
_VERSION = 1


def save_checkpoint(model: AnnotatorModel, path: str | Path, meta: dict | None = None) -> None:
    """Write header JSON plus little-endian float32 parameter data."""
    header = {
        "config": asdict(model.cfg),
        "inventory": list(model.vocab.inventory.tokens),
        "vocab": list(model.vocab.tokens),
        "params": [[name, list(arr.shape)] for name, arr in model.params.items()],
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(hbytes)))
        fh.write(hbytes)
        for arr in model.params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path, dtype=np.float32) -> tuple[AnnotatorModel, dict]:
    blob = Path(path).read_bytes()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    off = len(_MAGIC)
    version, hlen = struct.unpack_from("<II", blob, off)
    if version != _VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    header = json.loads(blob[off: off + hlen].decode("utf-8"))
    off += hlen
    cfg = ModelConfig.from_dict(header["config"])
    vocab = build_vocab(MoraInventory(header["inventory"]))
    if list(vocab.tokens) != header["vocab"]:
        raise CheckpointFormatError(f"{path}: vocabulary does not match inventory")
    params = {}
    for name, shape in header["params"]:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape)
        params[name] = arr.astype(dtype)
        off += 4 * n
    if off != len(blob):
        raise CheckpointFormatError(f"{path}: trailing bytes in checkpoint")
    return AnnotatorModel(cfg, vocab, params), header.get("meta", {})
