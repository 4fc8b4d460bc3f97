"""Layer primitives with hand-derived gradients.

Tensors are ``(batch, filters, height, width)`` where height is the EEG
channel axis and width is time. Every op works in the dtype it is given.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_CLAMP = 1e-12


def same_padding(k: int) -> tuple[int, int]:
    """Zero padding for 'same' output length; odd remainder goes on the right."""
    left = (k - 1) // 2
    return left, k - 1 - left


def _expect(x: np.ndarray, ndim: int, name: str):
    if x.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {x.shape}")


# ---------------------------------------------------------------- temporal conv

def conv2d_temporal_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``(n, 1, C, T)`` cross-correlated along time with ``(F, 1, 1, K)`` -> ``(n, F, C, T)``."""
    _expect(x, 4, "x")
    _expect(w, 4, "w")
    if x.shape[1] != 1 or w.shape[1:3] != (1, 1):
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}")
    K = w.shape[3]
    left, right = same_padding(K)
    xp = np.pad(x[:, 0], ((0, 0), (0, 0), (left, right)))
    win = sliding_window_view(xp, K, axis=-1)  # (n, C, T, K)
    return np.einsum("nctk,fk->nfct", win, w[:, 0, 0, :], optimize=True)


def conv2d_temporal_same_backward(x, w, dout):
    """Gradients ``(dx, dw)`` of :func:`conv2d_temporal_same`."""
    K = w.shape[3]
    left, right = same_padding(K)
    T = x.shape[3]
    xp = np.pad(x[:, 0], ((0, 0), (0, 0), (left, right)))
    win = sliding_window_view(xp, K, axis=-1)
    dw = np.einsum("nfct,nctk->fk", dout, win, optimize=True)[:, None, None, :]
    # full convolution of dout with each kernel, summed over filters
    dp = np.pad(dout, ((0, 0), (0, 0), (0, 0), (K - 1, K - 1)))
    dwin = sliding_window_view(dp, K, axis=-1)  # (n, F, C, T+K-1, K)
    dxp = np.einsum("nfcsk,fk->ncs", dwin, w[:, 0, 0, ::-1], optimize=True)
    return dxp[:, None, :, left:left + T], dw


# ---------------------------------------------------------------- depthwise spatial conv

def _filter_map(n_out: int, n_in: int) -> np.ndarray:
    # output d*F + f reads input filter f
    return np.arange(n_out) % n_in


def depthwise_conv_spatial(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``(n, F, C, T)`` with ``(D*F, 1, C, 1)`` -> ``(n, D*F, 1, T)`` (valid mode)."""
    _expect(x, 4, "x")
    _expect(w, 4, "w")
    n, F, C, T = x.shape
    if w.shape[1] != 1 or w.shape[2] != C or w.shape[3] != 1 or w.shape[0] % F:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}")
    fmap = _filter_map(w.shape[0], F)
    out = np.einsum("noct,oc->not", x[:, fmap], w[:, 0, :, 0], optimize=True)
    return out[:, :, None, :]


def depthwise_conv_spatial_backward(x, w, dout):
    n, F, C, T = x.shape
    fmap = _filter_map(w.shape[0], F)
    d = dout[:, :, 0, :]
    dw = np.einsum("not,noct->oc", d, x[:, fmap], optimize=True)[:, None, :, None]
    contrib = np.einsum("not,oc->noct", d, w[:, 0, :, 0], optimize=True)
    dx = contrib.reshape(n, w.shape[0] // F, F, C, T).sum(axis=1)
    return dx, dw


# ---------------------------------------------------------------- separable conv

def _toeplitz(wd, T):
    """Per-filter banded matrices ``(G, T+K-1, T)`` with ``M[g, t+k, t] = wd[g, k]``."""
    G, K = wd.shape
    rows = np.arange(T)[None, :] + np.arange(K)[:, None]
    M = np.zeros((G, T + K - 1, T), wd.dtype)
    M[:, rows, np.arange(T)[None, :]] = wd[:, :, None]
    return M, rows


def _padded_by_filter(x, K):
    # (n, G, 1, T) -> zero-padded (G, n, T+K-1) so each filter is one matmul
    n, G, _, T = x.shape
    left, _ = same_padding(K)
    xp = np.zeros((G, n, T + K - 1), x.dtype)
    xp[..., left:left + T] = x[:, :, 0].transpose(1, 0, 2)
    return xp


def separable_conv(x: np.ndarray, w_depth: np.ndarray, w_point: np.ndarray) -> np.ndarray:
    """Per-filter temporal 'same' conv, then 1x1 mixing across filters.

    ``(n, G, 1, T)``, ``(G, 1, 1, K)``, ``(F2, G, 1, 1)`` -> ``(n, F2, 1, T)``.
    """
    _expect(x, 4, "x")
    if x.shape[2] != 1 or w_depth.shape[0] != x.shape[1] or w_point.shape[1] != x.shape[1]:
        raise ValueError(f"shape mismatch: x {x.shape}, depth {w_depth.shape}, point {w_point.shape}")
    M, _ = _toeplitz(w_depth[:, 0, 0, :], x.shape[3])
    h = np.matmul(_padded_by_filter(x, w_depth.shape[3]), M)  # (G, n, T)
    return np.matmul(w_point[:, :, 0, 0], h.transpose(1, 0, 2))[:, :, None, :]


def separable_conv_backward(x, w_depth, w_point, dout):
    """Gradients ``(dx, dw_depth, dw_point)`` of :func:`separable_conv`."""
    K, T = w_depth.shape[3], x.shape[3]
    left, _ = same_padding(K)
    M, rows = _toeplitz(w_depth[:, 0, 0, :], T)
    xp = _padded_by_filter(x, K)
    h = np.matmul(xp, M).transpose(1, 0, 2)  # (n, G, T)
    d = dout[:, :, 0, :]
    wp = w_point[:, :, 0, 0]
    dwp = np.tensordot(d, h, axes=([0, 2], [0, 2]))[:, :, None, None]
    dh = np.matmul(wp.T, d).transpose(1, 0, 2)  # (G, n, T)
    dM = np.matmul(xp.transpose(0, 2, 1), dh)  # (G, T+K-1, T)
    dwd = dM[:, rows, np.arange(T)[None, :]].sum(axis=-1)
    dxp = np.matmul(dh, M.transpose(0, 2, 1))  # (G, n, T+K-1)
    dx = dxp[..., left:left + T].transpose(1, 0, 2)[:, :, None, :]
    return np.ascontiguousarray(dx), dwd[:, None, None, :], dwp


def separable_param_count(G: int, F2: int, K: int) -> int:
    return K * G + F2 * G


# ---------------------------------------------------------------- batch norm

BN_AXES = (0, 2, 3)


def _bshape(v):
    return v.reshape(1, -1, 1, 1)


def batchnorm_train(x, gamma, beta, eps):
    """Normalise with batch statistics over all axes but the filter axis.

    Returns ``(y, cache, batch_mean, batch_var)``; the variance is the biased
    (population) estimate used for normalisation.
    """
    mean = x.mean(axis=BN_AXES)
    var = x.var(axis=BN_AXES)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bshape(mean)) * _bshape(inv_std)
    y = _bshape(gamma) * xhat + _bshape(beta)
    return y, (xhat, inv_std, gamma), mean, var


def batchnorm_infer(x, gamma, beta, mean, var, eps):
    inv_std = 1.0 / np.sqrt(var + eps)
    return _bshape(gamma * inv_std) * (x - _bshape(mean)) + _bshape(beta)


def batchnorm_backward(dy, cache):
    """Train-mode gradients ``(dx, dgamma, dbeta)``."""
    xhat, inv_std, gamma = cache
    m = dy.size // dy.shape[1]
    dbeta = dy.sum(axis=BN_AXES)
    dgamma = (dy * xhat).sum(axis=BN_AXES)
    dx = _bshape(gamma * inv_std / m) * (m * dy - _bshape(dbeta) - xhat * _bshape(dgamma))
    return dx, dgamma, dbeta


def batchnorm_infer_backward(dy, gamma, var, eps):
    return dy * _bshape(gamma / np.sqrt(var + eps))


def update_running(running, batch, momentum):
    """Exponential moving average: ``momentum * running + (1 - momentum) * batch``."""
    return momentum * running + (1.0 - momentum) * batch


def batchnorm(x, gamma, beta, running_mean, running_var, mode, eps=1e-5, momentum=0.9):
    """Batch norm over the filter axis.

    Train mode normalises with batch statistics and returns updated running
    averages; infer mode uses the stored running averages (mean 0 / var 1
    before any training step).

    Returns:
        ``(y, running_mean, running_var)``
    """
    if mode == "train":
        y, _, m, v = batchnorm_train(x, gamma, beta, eps)
        return y, update_running(running_mean, m, momentum), update_running(running_var, v, momentum)
    if mode == "infer":
        return batchnorm_infer(x, gamma, beta, running_mean, running_var, eps), running_mean, running_var
    raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")


# ---------------------------------------------------------------- elementwise / pooling

def elu(x):
    return np.expm1(np.minimum(x, 0)) + np.maximum(x, 0)


def elu_backward(x, dout):
    # exp(min(x, 0)) is exactly 1 on the positive side
    return dout * np.exp(np.minimum(x, 0))


def avgpool_time(x, width: int):
    T = x.shape[-1]
    if T % width:
        raise ValueError(f"time length {T} not divisible by pool width {width}")
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    # strided adds are much faster than a mean over a short trailing axis
    out = x[..., 0::width].copy()
    for i in range(1, width):
        out += x[..., i::width]
    out *= x.dtype.type(1.0 / width)
    return out


def avgpool_time_backward(dout, width: int):
    return np.repeat(dout / width, width, axis=-1)


def dropout(x, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(y, scale_mask)``; ``scale_mask`` is ``None`` in infer mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# ---------------------------------------------------------------- classifier

def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def dense_softmax(x, w):
    """Bias-free dense layer ``(n, d) @ (N, d).T`` followed by a row softmax."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}")
    return softmax(x @ w.T)


def dense_backward(x, w, dlogits):
    return dlogits @ w, dlogits.T @ x


def cross_entropy(p, t):
    """Mean over the batch of ``-sum_j t_ij log p_ij`` (log clamped at 1e-12)."""
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: p {p.shape}, t {t.shape}")
    return float(-(t * np.log(np.maximum(p, LOG_CLAMP))).sum() / p.shape[0])


def cross_entropy_grad_logits(p, t):
    """Gradient of the mean cross-entropy of ``softmax(logits)`` w.r.t. the logits."""
    return (p - t) / p.shape[0]


def one_hot(labels, n_classes: int, dtype=np.float64):
    out = np.zeros((len(labels), n_classes), dtype)
    out[np.arange(len(labels)), labels] = 1
    return out
