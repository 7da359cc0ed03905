"""Small causal transformer with interchangeable heads.

The same backbone serves four roles: policy, maximum-likelihood baseline and
base model (logits head), and reward / value networks (per-position scalar
head). Sequences are laid out as [BOS] + input + output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS, EOS
from .exceptions import ConfigError, ContractError, LengthError


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 256
    max_seq: int = 256
    head: str = "logits"  # logits | scalar
    init_scale: float = 0.05
    attn_prior: str = "none"  # none | matching

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if self.init_scale <= 0:
            raise ConfigError("init_scale must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.head not in ("logits", "scalar"):
            raise ConfigError(f"unknown head kind {self.head!r}")
        if self.attn_prior not in ("none", "matching"):
            raise ConfigError(f"unknown attn_prior {self.attn_prior!r}")
        if self.attn_prior == "matching" and (self.n_heads != 2 or self.d_model % 4):
            raise ConfigError(
                "attn_prior='matching' needs exactly 2 heads and d_model divisible by 4"
            )

    def head_dim(self):
        return self.d_model // self.n_heads


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor]

    def named(self):
        return self.tensors

    def zero_grads(self):
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self, head=None, seed=None):
        """Deep copy; optionally swap the head kind (head weights re-initialized)."""
        cfg = self.config if head is None else replace(self.config, head=head)
        out = init_params(cfg, seed=0 if seed is None else seed)
        for name, t in self.tensors.items():
            if head is not None and name.startswith("head_"):
                continue
            out.tensors[name].data = t.data.copy()
        return out


def init_params(cfg, seed):
    """Deterministic initialization: scaled-normal weights, zero biases, unit gains."""
    rng = np.random.default_rng(seed)
    scale = cfg.init_scale

    def w(*shape):
        return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    d, ff = cfg.d_model, cfg.d_ff
    tensors = {
        "tok_emb": w(cfg.vocab_size, d),
        "pos_emb": w(cfg.max_seq, d),
    }
    for i in range(cfg.n_layers):
        p = f"layer{i}_"
        tensors[p + "ln1_g"] = ones(d)
        tensors[p + "ln1_b"] = zeros(d)
        tensors[p + "wq"] = w(d, d)
        tensors[p + "bq"] = zeros(d)
        tensors[p + "wk"] = w(d, d)
        tensors[p + "bk"] = zeros(d)
        tensors[p + "wv"] = w(d, d)
        tensors[p + "bv"] = zeros(d)
        tensors[p + "wo"] = w(d, d)
        tensors[p + "bo"] = zeros(d)
        tensors[p + "ln2_g"] = ones(d)
        tensors[p + "ln2_b"] = zeros(d)
        tensors[p + "w1"] = w(d, ff)
        tensors[p + "b1"] = zeros(ff)
        tensors[p + "w2"] = w(ff, d)
        tensors[p + "b2"] = zeros(d)
    tensors["ln_f_g"] = ones(d)
    tensors["ln_f_b"] = zeros(d)
    out_dim = cfg.vocab_size if cfg.head == "logits" else 1
    tensors["head_w"] = w(d, out_dim)
    tensors["head_b"] = zeros(out_dim)
    if cfg.attn_prior == "matching":
        _apply_matching_prior(cfg, tensors)
    return ModelParams(cfg, tensors)


def _sinusoid(n_pos, width):
    """Sinusoidal position table of the given width plus its per-pair frequencies."""
    pos = np.arange(n_pos)[:, None]
    k = np.arange(width // 2)[None, :]
    freq = 1.0 / (100.0 ** (2 * k / width))
    table = np.zeros((n_pos, width))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    return table, freq[0]


def _apply_matching_prior(cfg, tensors):
    """Warm-start attention with content-matching and previous-position heads.

    The embedding is split into a content block (first half of d_model, token
    embeddings) and a position block (second half, sinusoidal code). Head 0
    starts as a content-matching head (identity query/key on the content
    block); head 1 starts as a position-offset head (its query rotates the
    sinusoidal code by one step) whose value path copies the attended token's
    content into the position block, so deeper layers can key on content and
    local order jointly. All of it remains trainable.
    """
    d = cfg.d_model
    half = d // 2
    tensors["tok_emb"].data[:, half:] = 0.0
    table, freqs = _sinusoid(cfg.max_seq, half)
    tensors["pos_emb"].data[:, :half] = 0.0
    tensors["pos_emb"].data[:, half:] = table * cfg.init_scale
    eye = np.eye(half)
    shift = np.zeros((half, half))
    for k, w in enumerate(freqs):
        c, s = np.cos(w), np.sin(w)
        shift[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[c, s], [-s, c]]

    def blocks(top, bottom):
        m = np.zeros((d, d))
        m[:half, :half] = top
        m[half:, half:] = bottom
        return m

    tensors["layer0_wq"].data = blocks(eye, shift.T)
    tensors["layer0_wk"].data = blocks(eye, eye)
    wv = tensors["layer0_wv"].data
    wv[:, half:] = 0.0
    wv[:half, half:] = eye
    wo = tensors["layer0_wo"].data
    wo[half:, :] = 0.0
    wo[half:, half:] = eye * 0.5
    for i in range(1, cfg.n_layers):
        tensors[f"layer{i}_wq"].data = blocks(eye, np.zeros((half, half)))
        tensors[f"layer{i}_wk"].data = blocks(eye, eye)


def _backbone(params, ids):
    cfg = params.config
    t = params.tensors
    n = len(ids)
    if n > cfg.max_seq:
        raise LengthError(f"sequence length {n} exceeds max_seq {cfg.max_seq}")
    if n == 0:
        raise ContractError("empty token sequence")
    x = ad.add(ad.embedding(t["tok_emb"], ids), ad.slice_axis(t["pos_emb"], 0, 0, n))
    causal = np.triu(np.ones((n, n), dtype=bool), k=1)
    inv_sqrt = 1.0 / math.sqrt(cfg.head_dim())
    dh = cfg.head_dim()
    for i in range(cfg.n_layers):
        p = f"layer{i}_"
        h = ad.add(ad.mul(ad.layer_norm(x), t[p + "ln1_g"]), t[p + "ln1_b"])
        q = ad.add(ad.matmul(h, t[p + "wq"]), t[p + "bq"])
        k = ad.add(ad.matmul(h, t[p + "wk"]), t[p + "bk"])
        v = ad.add(ad.matmul(h, t[p + "wv"]), t[p + "bv"])
        head_outs = []
        for j in range(cfg.n_heads):
            lo, hi = j * dh, (j + 1) * dh
            qj = ad.slice_axis(q, 1, lo, hi)
            kj = ad.slice_axis(k, 1, lo, hi)
            vj = ad.slice_axis(v, 1, lo, hi)
            scores = ad.mul(ad.matmul(qj, ad.transpose(kj)), inv_sqrt)
            scores = ad.masked_fill(scores, causal, -1e9)
            head_outs.append(ad.matmul(ad.softmax(scores), vj))
        attn = ad.add(ad.matmul(ad.concat(head_outs, axis=1), t[p + "wo"]), t[p + "bo"])
        x = ad.add(x, attn)
        h2 = ad.add(ad.mul(ad.layer_norm(x), t[p + "ln2_g"]), t[p + "ln2_b"])
        ffn = ad.matmul(ad.tanh(ad.add(ad.matmul(h2, t[p + "w1"]), t[p + "b1"])),
                        t[p + "w2"])
        x = ad.add(x, ad.add(ffn, t[p + "b2"]))
    return ad.add(ad.mul(ad.layer_norm(x), t["ln_f_g"]), t["ln_f_b"])


def forward_logits(params, ids):
    """Per-position next-token logit rows; row t conditions on ids[0..t] only."""
    if params.config.head != "logits":
        raise ConfigError("forward_logits requires a logits head")
    h = _backbone(params, ids)
    return ad.add(ad.matmul(h, params.tensors["head_w"]), params.tensors["head_b"])


def forward_scalar(params, ids):
    """Per-position scalar; entry t conditions on ids[0..t] only."""
    if params.config.head != "scalar":
        raise ConfigError("forward_scalar requires a scalar head")
    h = _backbone(params, ids)
    out = ad.add(ad.matmul(h, params.tensors["head_w"]), params.tensors["head_b"])
    return ad.reshape(out, (len(ids),))


def log_prob(rows, actions):
    """Log-probabilities of actions; rows[i] is the row scoring actions[i]."""
    actions = np.asarray(actions, dtype=np.int64)
    if rows.shape[0] != actions.shape[0]:
        raise ContractError(
            f"{rows.shape[0]} logit rows cannot score {actions.shape[0]} actions"
        )
    return ad.gather_rows(ad.log_softmax(rows), actions)


def _decode(params, input_ids, max_len, select):
    ids = [BOS] + list(input_ids)
    out = []
    with ad.no_grad():
        for _ in range(max_len):
            rows = forward_logits(params, ids)
            nxt = select(rows.data[-1])
            out.append(nxt)
            ids.append(nxt)
            if nxt == EOS:
                break
    return out


def sample(params, input_ids, max_len, temperature=1.0, seed=0):
    """Ancestral sampling up to max_len tokens (stops at EOS); greedy at temperature 0."""
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    if temperature < 0:
        raise ConfigError("temperature must be >= 0")
    if temperature == 0.0:
        return greedy(params, input_ids, max_len)
    rng = np.random.default_rng(seed)

    def select(row):
        z = row / temperature
        z = z - z.max()
        p = np.exp(z)
        p /= p.sum()
        return int(rng.choice(len(p), p=p))

    return _decode(params, input_ids, max_len, select)


def greedy(params, input_ids, max_len):
    return _decode(params, input_ids, max_len, lambda row: int(np.argmax(row)))


# model persistence: checkpoint file plus a key-value config block

def save_model(params, path):
    ad.save_checkpoint(path, params.tensors)
    cfg = params.config
    with open(str(path) + ".cfg", "w", encoding="utf-8") as fh:
        for key in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff",
                    "max_seq", "head", "init_scale", "attn_prior"):
            fh.write(f"{key} = {getattr(cfg, key)}\n")


def load_model(path):
    arrays = ad.load_checkpoint(path)
    fields = {}
    with open(str(path) + ".cfg", encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    cfg = ModelConfig(
        vocab_size=int(fields["vocab_size"]),
        d_model=int(fields["d_model"]),
        n_layers=int(fields["n_layers"]),
        n_heads=int(fields["n_heads"]),
        d_ff=int(fields["d_ff"]),
        max_seq=int(fields["max_seq"]),
        head=fields["head"],
        init_scale=float(fields.get("init_scale", 0.05)),
        attn_prior=fields.get("attn_prior", "none"),
    )
    params = init_params(cfg, seed=0)
    for name, arr in arrays.items():
        params.tensors[name].data = arr.copy()
    return params
