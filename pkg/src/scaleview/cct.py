"""Cross-view and cross-modal attention between BEV and front-view features.

Feature maps are H x W x D arrays; spatial locations are flattened row-major,
so correlation matrices are (H*W) x (H*W) with BEV locations as queries and
front-view locations as keys and values. Attention is evaluated in blocks of
query rows so the full correlation matrix is never materialized by
:func:`cct_cv` / :func:`cct_cm`.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NonFiniteValue, ShapeMismatch

BLOCK_ROWS = 1024


@dataclass(frozen=True, eq=False)
class CctWeights:
    """1x1 convolution fusing ``[F'_f || F_f]`` (2D channels) into D channels."""

    fuse_kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.fuse_kernel, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if k.ndim != 2 or k.shape[0] != 2 * k.shape[1] or b.shape != (k.shape[1],):
            raise ShapeMismatch(f"fuse_kernel must be 2D x D with a D bias, got {k.shape}, {b.shape}")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(b))):
            raise NonFiniteValue("CCT weights must be finite")
        object.__setattr__(self, "fuse_kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def channels(self):
        return self.fuse_kernel.shape[1]

    @classmethod
    def random(cls, channels, seed=0, scale=None):
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(2 * channels) if scale is None else scale
        return cls(rng.normal(0, scale, (2 * channels, channels)), rng.normal(0, scale, channels))


def _check_features(*maps):
    arrs = [np.asarray(m, dtype=np.float64) for m in maps]
    for a in arrs:
        if a.ndim != 3:
            raise ShapeMismatch(f"feature maps must be H x W x D, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue("feature map contains non-finite values")
    if any(a.shape != arrs[0].shape for a in arrs[1:]):
        raise ShapeMismatch(f"feature maps must share a shape, got {[a.shape for a in arrs]}")
    return arrs


def _flat(f):
    return f.reshape(-1, f.shape[-1])


def correlation(query, key):
    """Scaled dot-product correlation ``Q K^T / sqrt(D)`` of shape HW x HW."""
    q, k = _check_features(query, key)
    return _flat(q) @ _flat(k).T / np.sqrt(q.shape[-1])


def softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention(corr, value):
    """Row-softmax of ``corr`` applied to the flattened ``value`` map."""
    (v,) = _check_features(value)
    corr = np.asarray(corr, dtype=np.float64)
    n = v.shape[0] * v.shape[1]
    if corr.shape != (n, n):
        raise ShapeMismatch(f"correlation must be {n} x {n}, got {corr.shape}")
    return (softmax_rows(corr) @ _flat(v)).reshape(v.shape)


def _streamed_attention(q, k, v, block=BLOCK_ROWS):
    """softmax(q k^T / sqrt(D)) v in blocks of query rows; all inputs flat."""
    scale = 1.0 / np.sqrt(q.shape[1])
    out = np.empty((q.shape[0], v.shape[1]))
    for start in range(0, q.shape[0], block):
        rows = slice(start, start + block)
        out[rows] = softmax_rows(q[rows] @ k.T * scale) @ v
    return out


def fuse_values(f_f_re, f_f, w):
    """1x1 convolution of the channel concatenation ``[f_f_re || f_f]``."""
    f_f_re, f_f = _check_features(f_f_re, f_f)
    if w.channels != f_f.shape[-1]:
        raise ShapeMismatch("weights do not match the feature depth")
    x = np.concatenate([f_f_re, f_f], axis=-1)
    return x @ w.fuse_kernel + w.bias


def cct_cv(f_f, f_b, f_f_re, w):
    """Cross-view branch: BEV queries attend over fused front-view values."""
    f_f, f_b, f_f_re = _check_features(f_f, f_b, f_f_re)
    v = fuse_values(f_f_re, f_f, w)
    out = _streamed_attention(_flat(f_b), _flat(f_f), _flat(v))
    return out.reshape(f_f.shape)


def cct_cm(f_b, f_f, f_d):
    """Cross-modal branch: BEV queries, front-view keys, depth-feature values."""
    f_b, f_f, f_d = _check_features(f_b, f_f, f_d)
    return _streamed_attention(_flat(f_b), _flat(f_f), _flat(f_d)).reshape(f_d.shape)


def cct_fuse(f_f, f_cv, f_cm):
    f_f, f_cv, f_cm = _check_features(f_f, f_cv, f_cm)
    return f_f + f_cv + f_cm


def cct_forward(f_f, f_b, f_f_re, f_d, w):
    """Refined layout feature ``F_f + F_cv + F_cm``."""
    return cct_fuse(f_f, cct_cv(f_f, f_b, f_f_re, w), cct_cm(f_b, f_f, f_d))


# -- backward passes -------------------------------------------------------

def _attention_vjp(q, k, v, g_out):
    """Gradients of ``sum(g_out * softmax(q k^T / sqrt(D)) v)`` w.r.t. q, k, v."""
    scale = 1.0 / np.sqrt(q.shape[1])
    M = softmax_rows(q @ k.T * scale)
    g_v = M.T @ g_out
    g_M = g_out @ v.T
    g_C = M * (g_M - (g_M * M).sum(axis=1, keepdims=True))
    g_q = g_C @ k * scale
    g_k = g_C.T @ q * scale
    return g_q, g_k, g_v


def cct_cv_vjp(f_f, f_b, f_f_re, w, g_out):
    """Gradients of ``sum(g_out * cct_cv(...))``.

    Returns a dict with keys ``f_f``, ``f_b``, ``f_f_re``, ``fuse_kernel``
    and ``bias``.
    """
    f_f, f_b, f_f_re, g_out = _check_features(f_f, f_b, f_f_re, g_out)
    shape = f_f.shape
    D = shape[-1]
    x = np.concatenate([_flat(f_f_re), _flat(f_f)], axis=1)
    v = x @ w.fuse_kernel + w.bias
    g_q, g_k, g_v = _attention_vjp(_flat(f_b), _flat(f_f), v, _flat(g_out))
    g_x = g_v @ w.fuse_kernel.T
    return {
        "f_f": (g_k + g_x[:, D:]).reshape(shape),
        "f_b": g_q.reshape(shape),
        "f_f_re": g_x[:, :D].reshape(shape),
        "fuse_kernel": x.T @ g_v,
        "bias": g_v.sum(axis=0),
    }


def cct_cm_vjp(f_b, f_f, f_d, g_out):
    """Gradients of ``sum(g_out * cct_cm(...))`` keyed by input name."""
    f_b, f_f, f_d, g_out = _check_features(f_b, f_f, f_d, g_out)
    shape = f_b.shape
    g_q, g_k, g_v = _attention_vjp(_flat(f_b), _flat(f_f), _flat(f_d), _flat(g_out))
    return {"f_b": g_q.reshape(shape), "f_f": g_k.reshape(shape), "f_d": g_v.reshape(shape)}


def cct_forward_vjp(f_f, f_b, f_f_re, f_d, w, g_out):
    """Gradients of ``sum(g_out * cct_forward(...))`` for every input."""
    cv = cct_cv_vjp(f_f, f_b, f_f_re, w, g_out)
    cm = cct_cm_vjp(f_b, f_f, f_d, g_out)
    return {
        "f_f": np.asarray(g_out, dtype=np.float64) + cv["f_f"] + cm["f_f"],
        "f_b": cv["f_b"] + cm["f_b"],
        "f_f_re": cv["f_f_re"],
        "f_d": cm["f_d"],
        "fuse_kernel": cv["fuse_kernel"],
        "bias": cv["bias"],
    }
