"""Dense-layer primitives with explicit backward passes.

Everything operates on float64 numpy arrays. Forward functions optionally
return a cache consumed by the matching backward; parameter gradients are
accumulated into a flat name -> array dict so the whole model can be trained
with a single optimizer loop.
"""

from __future__ import annotations

import numpy as np

_LN_EPS = 1e-5
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    """Tanh-form GELU."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_A * x**3)
    th = np.tanh(inner)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Returns (dx, dw, db); leading axes of x are batch."""
    dx = dy @ w.T
    dw = x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    return dx, dw, db


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def layer_norm_backward(dy: np.ndarray, cache, g: np.ndarray):
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, s, d = x.shape
    return x.reshape(b, s, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def attention_unit(x: np.ndarray, params: dict, prefix: str, heads: int, want_cache: bool = False):
    """One pre-norm residual unit: self-attention then feed-forward.

    ``x`` is (B, S, d); attention runs along S. Returns the output, plus a
    cache when requested.
    """
    p = lambda name: params[f"{prefix}.{name}"]
    d = x.shape[-1]
    dh = d // heads

    xn, ln1_cache = layer_norm(x, p("ln1.g"), p("ln1.b"))
    q = _split_heads(linear(xn, p("attn.wq"), p("attn.bq")), heads)
    k = _split_heads(linear(xn, p("attn.wk"), p("attn.bk")), heads)
    v = _split_heads(linear(xn, p("attn.wv"), p("attn.bv")), heads)
    scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
    attn = softmax(scores)
    ctx = _merge_heads(attn @ v)
    y1 = x + linear(ctx, p("attn.wo"), p("attn.bo"))

    yn, ln2_cache = layer_norm(y1, p("ln2.g"), p("ln2.b"))
    z1 = linear(yn, p("ff.w1"), p("ff.b1"))
    h1 = gelu(z1)
    out = y1 + linear(h1, p("ff.w2"), p("ff.b2"))
    if not want_cache:
        return out, None
    cache = (x, xn, ln1_cache, q, k, v, attn, ctx, y1, yn, ln2_cache, z1, h1)
    return out, cache


def attention_unit_backward(dy: np.ndarray, cache, params: dict, prefix: str, heads: int, grads: dict):
    """Backward of :func:`attention_unit`; accumulates parameter gradients
    into ``grads`` and returns dx."""
    p = lambda name: params[f"{prefix}.{name}"]

    def acc(name, value):
        key = f"{prefix}.{name}"
        if key in grads:
            grads[key] += value
        else:
            grads[key] = value

    x, xn, ln1_cache, q, k, v, attn, ctx, y1, yn, ln2_cache, z1, h1 = cache
    dh = x.shape[-1] // heads

    # feed-forward branch
    dh1, dw2, db2 = linear_backward(dy, h1, p("ff.w2"))
    acc("ff.w2", dw2)
    acc("ff.b2", db2)
    dz1 = dh1 * gelu_grad(z1)
    dyn, dw1, db1 = linear_backward(dz1, yn, p("ff.w1"))
    acc("ff.w1", dw1)
    acc("ff.b1", db1)
    dy1, dg2, dbeta2 = layer_norm_backward(dyn, ln2_cache, p("ln2.g"))
    acc("ln2.g", dg2)
    acc("ln2.b", dbeta2)
    dy1 = dy1 + dy  # residual

    # attention branch
    dctx, dwo, dbo = linear_backward(dy1, ctx, p("attn.wo"))
    acc("attn.wo", dwo)
    acc("attn.bo", dbo)
    dctx = _split_heads(dctx, heads)
    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores = dscores / np.sqrt(dh)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    dxn = np.zeros_like(xn)
    for grad_heads, w_name, b_name in (
        (dq, "attn.wq", "attn.bq"),
        (dk, "attn.wk", "attn.bk"),
        (dv, "attn.wv", "attn.bv"),
    ):
        dflat = _merge_heads(grad_heads)
        dxi, dw, db = linear_backward(dflat, xn, p(w_name))
        acc(w_name, dw)
        acc(b_name, db)
        dxn = dxn + dxi

    dx, dg1, dbeta1 = layer_norm_backward(dxn, ln1_cache, p("ln1.g"))
    acc("ln1.g", dg1)
    acc("ln1.b", dbeta1)
    return dx + dy1  # residual around the attention branch
