"""
A small bidirectional transformer in numpy with a hand-written backward pass.

Pre-norm blocks (LayerNorm -> multi-head self-attention -> residual,
LayerNorm -> GELU MLP -> residual), learned absolute position embeddings,
a final LayerNorm and a linear output head. There is no causal mask:
every position attends to every non-padding position. All arithmetic is
float64.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import ShapeMismatch
from app.models.config import ModelConfig
from app.models.layout import MaskState

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]

LN_EPS = 1e-5
GELU_C = np.sqrt(2.0 / np.pi)
MASKED_SCORE = -1e30
INIT_STD = 0.02


@dataclass(frozen=True)
class AttentionTensor:
    """Row-stochastic attention weights of one head, query x key."""
    layer: int
    head: int
    weights: np.ndarray


def layer_names(layer: int) -> List[str]:
    prefix = f"layers.{layer}"
    return [f"{prefix}.{n}" for n in (
        "ln1.g", "ln1.b", "attn.wq", "attn.wk", "attn.wv", "attn.wo",
        "ln2.g", "ln2.b", "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2",
    )]


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    shapes = {"tok_emb": (v, d), "pos_emb": (config.max_len, d)}
    for layer in range(config.layers):
        names = layer_names(layer)
        for name, shape in zip(names, [
            (d,), (d,), (d, d), (d, d), (d, d), (d, d),
            (d,), (d,), (d, f), (f,), (f, d), (d,),
        ]):
            shapes[name] = shape
    shapes.update({"ln_f.g": (d,), "ln_f.b": (d,), "head.w": (d, v), "head.b": (v,)})
    return shapes


def init_params(config: ModelConfig, seed: int) -> Params:
    """Normal(0, 0.02) weights, unit LayerNorm gains, zero biases."""
    if config.vocab_size < 1:
        raise ShapeMismatch("vocab_size must be set before initialising parameters")
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".g"):
            params[name] = np.ones(shape, dtype=np.float64)
        elif name.endswith(".b") or name.endswith(".b1") or name.endswith(".b2"):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            params[name] = rng.normal(0.0, INIT_STD, size=shape).astype(np.float64)
    return params


def check_params(params: Params, config: ModelConfig) -> None:
    for name, shape in param_shapes(config).items():
        if name not in params:
            raise ShapeMismatch(f"Missing parameter {name}", name=name)
        if params[name].shape != shape:
            raise ShapeMismatch(f"Parameter {name} has shape {params[name].shape}, expected {shape}",
                                name=name)


# Building blocks

def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * rstd
    return xhat * g + b, (xhat, rstd, g)


def _layer_norm_backward(dy, cache):
    xhat, rstd, g = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(u):
    th = np.tanh(GELU_C * (u + 0.044715 * u ** 3))
    return 0.5 * u * (1.0 + th), th


def _gelu_grad(u, th):
    return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th ** 2) * GELU_C * (1.0 + 3 * 0.044715 * u ** 2)


def _softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, heads):
    b, n, d = x.shape
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def _weight_grad(inp, dout):
    return inp.reshape(-1, inp.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])


# Forward / backward over a padded batch

def forward_batch(params: Params, config: ModelConfig, ids: np.ndarray,
                  valid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, dict]:
    """Logits (B, N, V) for a padded batch, plus the cache for backward.

    `valid` marks real (non-padding) positions; padding keys receive zero
    attention.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeMismatch("ids must be a (batch, length) array", shape=list(ids.shape))
    bsz, n = ids.shape
    if n > config.max_len:
        raise ShapeMismatch(f"Sequence length {n} exceeds max_len {config.max_len}", length=n)
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ShapeMismatch("token id out of vocabulary range")
    if valid is None:
        valid = np.ones((bsz, n), dtype=bool)
    key_mask = valid[:, None, None, :]
    scale = 1.0 / np.sqrt(config.head_dim)

    x = params["tok_emb"][ids] + params["pos_emb"][:n][None, :, :]
    layers = []
    for layer in range(config.layers):
        p = f"layers.{layer}"
        h, ln1 = _layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        q = _split_heads(h @ params[f"{p}.attn.wq"], config.heads)
        k = _split_heads(h @ params[f"{p}.attn.wk"], config.heads)
        v = _split_heads(h @ params[f"{p}.attn.wv"], config.heads)
        scores = np.where(key_mask, (q @ k.transpose(0, 1, 3, 2)) * scale, MASKED_SCORE)
        attn = _softmax(scores)
        o = _merge_heads(attn @ v)
        x = x + o @ params[f"{p}.attn.wo"]
        h2, ln2 = _layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        u = h2 @ params[f"{p}.mlp.w1"] + params[f"{p}.mlp.b1"]
        z, th = _gelu(u)
        x = x + z @ params[f"{p}.mlp.w2"] + params[f"{p}.mlp.b2"]
        layers.append({"h": h, "ln1": ln1, "q": q, "k": k, "v": v, "attn": attn, "o": o,
                       "h2": h2, "ln2": ln2, "u": u, "th": th, "z": z})

    hf, lnf = _layer_norm(x, params["ln_f.g"], params["ln_f.b"])
    logits = hf @ params["head.w"] + params["head.b"]
    cache = {"ids": ids, "layers": layers, "hf": hf, "lnf": lnf, "scale": scale}
    return logits, cache


def backward_batch(params: Params, config: ModelConfig, cache: dict,
                   dlogits: np.ndarray) -> Params:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dlogits."""
    grads: Params = {name: np.zeros_like(value) for name, value in params.items()}
    ids = cache["ids"]
    n = ids.shape[1]

    grads["head.w"] = _weight_grad(cache["hf"], dlogits)
    grads["head.b"] = dlogits.sum(axis=(0, 1))
    dx, grads["ln_f.g"], grads["ln_f.b"] = _layer_norm_backward(
        dlogits @ params["head.w"].T, cache["lnf"])

    for layer in reversed(range(config.layers)):
        p = f"layers.{layer}"
        c = cache["layers"][layer]

        # MLP
        grads[f"{p}.mlp.w2"] = _weight_grad(c["z"], dx)
        grads[f"{p}.mlp.b2"] = dx.sum(axis=(0, 1))
        du = (dx @ params[f"{p}.mlp.w2"].T) * _gelu_grad(c["u"], c["th"])
        grads[f"{p}.mlp.w1"] = _weight_grad(c["h2"], du)
        grads[f"{p}.mlp.b1"] = du.sum(axis=(0, 1))
        dln2, grads[f"{p}.ln2.g"], grads[f"{p}.ln2.b"] = _layer_norm_backward(
            du @ params[f"{p}.mlp.w1"].T, c["ln2"])
        dx = dx + dln2

        # attention
        grads[f"{p}.attn.wo"] = _weight_grad(c["o"], dx)
        do = _split_heads(dx @ params[f"{p}.attn.wo"].T, config.heads)
        attn, q, k, v = c["attn"], c["q"], c["k"], c["v"]
        dattn = do @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ do
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * cache["scale"]
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        h = c["h"]
        grads[f"{p}.attn.wq"] = _weight_grad(h, dq)
        grads[f"{p}.attn.wk"] = _weight_grad(h, dk)
        grads[f"{p}.attn.wv"] = _weight_grad(h, dv)
        dh = (dq @ params[f"{p}.attn.wq"].T + dk @ params[f"{p}.attn.wk"].T
              + dv @ params[f"{p}.attn.wv"].T)
        dln1, grads[f"{p}.ln1.g"], grads[f"{p}.ln1.b"] = _layer_norm_backward(dh, c["ln1"])
        dx = dx + dln1

    np.add.at(grads["tok_emb"], ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads["pos_emb"][:n] = dx.sum(axis=0)
    return grads


def attention_maps(cache: dict, index: int = 0) -> np.ndarray:
    """Attention weights of one batch item as (layers, heads, query, key)."""
    if not cache["layers"]:
        return np.zeros((0, 0, 0, 0))
    return np.stack([c["attn"][index] for c in cache["layers"]])


def forward(params: Params, config: ModelConfig, ids: Sequence[int],
            mask_state: Optional[MaskState] = None, trace_attention: bool = False,
            mask_id: Optional[int] = None) -> Tuple[np.ndarray, List[AttentionTensor]]:
    """Logits for every position of one sequence and, if traced, attention per layer and head."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeMismatch("forward expects a single 1-D id sequence")
    if mask_state is not None:
        if len(mask_state.masked) != len(ids):
            raise ShapeMismatch("mask state length differs from ids",
                                ids=len(ids), mask=len(mask_state.masked))
        if mask_id is not None:
            masked = np.asarray(mask_state.masked, dtype=bool)
            if np.any(ids[masked] != mask_id):
                raise ShapeMismatch("masked positions must carry the MASK token")
    logits, cache = forward_batch(params, config, ids[None, :])
    attention: List[AttentionTensor] = []
    if trace_attention:
        for layer, c in enumerate(cache["layers"]):
            for head in range(config.heads):
                attention.append(AttentionTensor(layer=layer, head=head, weights=c["attn"][0, head]))
    return logits[0], attention
