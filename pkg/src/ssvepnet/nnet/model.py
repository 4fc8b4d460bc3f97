"""The compact CNN: temporal conv, depthwise spatial conv, separable conv,
dense softmax, with analytic backpropagation.

Block 1 (temporal conv -> batch norm -> depthwise spatial conv) is linear up
to the batch-norm statistics, so the default ``fused`` path mixes channels
first and runs a single FFT correlation per spatial filter. The batch-norm
mean and variance of the never-materialised ``(n, F1, C, T)`` conv output
come from the sliding-window Gram matrix of the input. ``fused=False`` runs
the layers one by one; both paths agree to rounding error.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.fft as sfft
from numpy.lib.stride_tricks import as_strided

from . import layers as L

PARAM_ORDER = (
    "conv1", "bn1_gamma", "bn1_beta",
    "depthwise", "bn2_gamma", "bn2_beta",
    "sep_depth", "sep_point", "bn3_gamma", "bn3_beta",
    "dense",
)
BUFFER_ORDER = ("bn1_mean", "bn1_var", "bn2_mean", "bn2_var", "bn3_mean", "bn3_var")
MAX_NORM = {"depthwise": 1.0}


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int = 8
    n_samples: int = 256
    n_classes: int = 12
    F1: int = 96
    F2: int = 96
    D: int = 1
    temporal_kernel_len: int = 256
    separable_kernel_len: int = 16
    pool1: int = 4
    pool2: int = 8
    dropout_rate: float = 0.5
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("n_channels", "n_samples", "n_classes", "F1", "F2", "D",
                     "temporal_kernel_len", "separable_kernel_len", "pool1", "pool2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.n_samples % (self.pool1 * self.pool2):
            raise ValueError(f"n_samples {self.n_samples} not divisible by "
                             f"{self.pool1 * self.pool2}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    @property
    def n_spatial(self) -> int:
        return self.D * self.F1

    @property
    def n_flat(self) -> int:
        return self.F2 * (self.n_samples // (self.pool1 * self.pool2))

    def to_json(self) -> dict:
        return asdict(self)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    G = cfg.n_spatial
    return {
        "conv1": (cfg.F1, 1, 1, cfg.temporal_kernel_len),
        "bn1_gamma": (cfg.F1,), "bn1_beta": (cfg.F1,),
        "depthwise": (G, 1, cfg.n_channels, 1),
        "bn2_gamma": (G,), "bn2_beta": (G,),
        "sep_depth": (G, 1, 1, cfg.separable_kernel_len),
        "sep_point": (cfg.F2, G, 1, 1),
        "bn3_gamma": (cfg.F2,), "bn3_beta": (cfg.F2,),
        "dense": (cfg.n_classes, cfg.n_flat),
    }


def buffer_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    G = cfg.n_spatial
    return {"bn1_mean": (cfg.F1,), "bn1_var": (cfg.F1,), "bn2_mean": (G,), "bn2_var": (G,),
            "bn3_mean": (cfg.F2,), "bn3_var": (cfg.F2,)}


def param_counts(cfg: ModelConfig) -> dict[str, int]:
    """Trainable parameters per layer, in network order."""
    sizes = {k: int(np.prod(s)) for k, s in param_shapes(cfg).items()}
    return {
        "conv": sizes["conv1"],
        "bn1": sizes["bn1_gamma"] + sizes["bn1_beta"],
        "depthwise": sizes["depthwise"],
        "bn2": sizes["bn2_gamma"] + sizes["bn2_beta"],
        "separable": sizes["sep_depth"] + sizes["sep_point"],
        "bn3": sizes["bn3_gamma"] + sizes["bn3_beta"],
        "dense": sizes["dense"],
    }


def shape_chain(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Per-sample output shape after every layer."""
    C, T, G, F1, F2 = cfg.n_channels, cfg.n_samples, cfg.n_spatial, cfg.F1, cfg.F2
    T4, T32 = T // cfg.pool1, T // (cfg.pool1 * cfg.pool2)
    return [
        ("input", (C, T)), ("reshape", (1, C, T)),
        ("conv2d", (F1, C, T)), ("batchnorm1", (F1, C, T)),
        ("depthwise", (G, 1, T)), ("batchnorm2", (G, 1, T)), ("elu1", (G, 1, T)),
        ("avgpool1", (G, 1, T4)), ("dropout1", (G, 1, T4)),
        ("separable", (F2, 1, T4)), ("batchnorm3", (F2, 1, T4)), ("elu2", (F2, 1, T4)),
        ("avgpool2", (F2, 1, T32)), ("dropout2", (F2, 1, T32)),
        ("flatten", (F2 * T32,)), ("dense", (cfg.n_classes,)),
    ]


def init_params(cfg: ModelConfig, rng: np.random.Generator):
    """Uniform(-1, 1) / sqrt(fan_in) weights; depthwise filters projected to norm <= 1."""
    dt = np.dtype(cfg.dtype)
    shapes = param_shapes(cfg)
    fan_in = {"conv1": cfg.temporal_kernel_len, "depthwise": cfg.n_channels,
              "sep_depth": cfg.separable_kernel_len, "sep_point": cfg.n_spatial,
              "dense": cfg.n_flat}
    params = {}
    for name in PARAM_ORDER:
        if name in fan_in:
            w = rng.uniform(-1.0, 1.0, shapes[name]) / np.sqrt(fan_in[name])
        elif name.endswith("gamma"):
            w = np.ones(shapes[name])
        else:
            w = np.zeros(shapes[name])
        params[name] = w.astype(dt)
    project_max_norm(params)
    buffers = {k: (np.zeros(s) if k.endswith("mean") else np.ones(s)).astype(dt)
               for k, s in buffer_shapes(cfg).items()}
    return params, buffers


def project_max_norm(params: dict) -> None:
    """Rescale, in place, every constrained filter whose L2 norm exceeds its limit."""
    for name, limit in MAX_NORM.items():
        w = params[name]
        norms = np.sqrt((w.astype(np.float64) ** 2).reshape(w.shape[0], -1).sum(axis=1))
        over = norms > limit
        if over.any():
            scale = np.where(over, limit / np.where(over, norms, 1.0), 1.0)
            w *= scale.reshape((-1,) + (1,) * (w.ndim - 1)).astype(w.dtype)


def _fft_len(n: int) -> int:
    return 1 << (n - 1).bit_length()


def window_gram(x: np.ndarray, K: int):
    """Sliding-window moments of the 'same'-padded input.

    For ``x (n, C, T)`` padded to ``xp`` returns ``m[j] = sum xp[., ., t+j]``
    and ``G[i, j] = sum xp[., ., t+i] * xp[., ., t+j]`` (sums over batch,
    channel and t < T), in float64.
    """
    n, C, T = x.shape
    left, right = L.same_padding(K)
    L0 = T + K - 1
    xp = np.zeros((n * C, L0))
    xp[:, left:left + T] = x.reshape(n * C, T)
    M = xp.T @ xp  # (L0, L0)
    # diagonal d of M as a row: diag[d, u] = M[u, u + d]
    Mp = np.zeros((L0, L0 + K))
    Mp[:, :L0] = M
    s0, s1 = Mp.strides
    diag = as_strided(Mp, shape=(K, L0), strides=(s1, s0 + s1))
    cs = np.zeros((K, L0 + 1))
    np.cumsum(diag, axis=1, out=cs[:, 1:])
    win = cs[:, T:T + K] - cs[:, :K]  # win[d, j] = sum_{t<T} M[t+j, t+j+d]
    G = np.zeros((K, K))
    j, d = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
    ok = j + d < K
    G[j[ok], (j + d)[ok]] = win[d[ok], j[ok]]
    G = np.triu(G) + np.triu(G, 1).T
    col = np.concatenate([[0.0], np.cumsum(xp.sum(axis=0))])
    m = col[T:T + K] - col[:K]
    return m, G


class CompactCNN:
    """Parameters, running statistics and the forward/backward passes."""

    def __init__(self, config: ModelConfig, params: dict | None = None,
                 buffers: dict | None = None, seed: int = 0):
        self.config = config
        if params is None or buffers is None:
            p, b = init_params(config, np.random.default_rng(seed))
            params = p if params is None else params
            buffers = b if buffers is None else buffers
        shapes = {**param_shapes(config), **buffer_shapes(config)}
        for name, arr in {**params, **buffers}.items():
            if tuple(arr.shape) != shapes[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
        self.params = {k: np.asarray(params[k], config.dtype) for k in PARAM_ORDER}
        self.buffers = {k: np.asarray(buffers[k], config.dtype) for k in BUFFER_ORDER}

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def n_params(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def copy(self) -> "CompactCNN":
        return CompactCNN(self.config, {k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.buffers.items()})

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x)
        cfg = self.config
        if x.ndim == 4 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim != 3 or x.shape[1:] != (cfg.n_channels, cfg.n_samples):
            raise ValueError(f"expected input (n, {cfg.n_channels}, {cfg.n_samples}), got {x.shape}")
        return x.astype(self.dtype, copy=False)

    # ------------------------------------------------------------ block 1

    def _block1_fused(self, x, mode):
        cfg, p, dt = self.config, self.params, self.dtype
        n, C, T = x.shape
        K = cfg.temporal_kernel_len
        left, _ = L.same_padding(K)
        G_ = cfg.n_spatial
        fmap = np.arange(G_) % cfg.F1
        wdw = p["depthwise"][:, 0, :, 0]
        k = p["conv1"][:, 0, 0, :]
        nfft = _fft_len(T + K - 1)

        # channel mixing commutes with the temporal conv, so mix in the frequency domain
        xpad = np.zeros((n, C, nfft), dt)
        xpad[..., left:left + T] = x
        Xf = sfft.rfft(xpad, axis=-1)
        S = np.matmul(wdw.astype(Xf.dtype), Xf)
        Kf = sfft.rfft(k, n=nfft, axis=-1)
        v = sfft.irfft(S * np.conj(Kf[fmap]), n=nfft, axis=-1)[..., :T].astype(dt, copy=False)

        if mode == "train":
            m, G = window_gram(x, K)
            N = n * C * T
            k64 = k.astype(np.float64)
            Gk = k64 @ G
            mu = k64 @ m / N
            var = np.maximum((k64 * Gk).sum(axis=1) / N - mu**2, 0.0)
        else:
            m = G = Gk = None
            N = n * C * T
            mu = self.buffers["bn1_mean"].astype(np.float64)
            var = self.buffers["bn1_var"].astype(np.float64)
        sigma = np.sqrt(var + cfg.bn_eps)
        gamma, beta = p["bn1_gamma"].astype(np.float64), p["bn1_beta"].astype(np.float64)
        a = (gamma / sigma)[fmap]
        W = wdw.sum(axis=1).astype(np.float64)
        shift = beta[fmap] * W - a * mu[fmap] * W
        u = v * a.astype(dt)[:, None] + shift.astype(dt)[:, None]
        cache = dict(x=x, Xf=Xf, S=S, Kf=Kf, v=v, m=m, Gk=Gk, N=N, mu=mu, var=var, sigma=sigma,
                     a=a, W=W, fmap=fmap, nfft=nfft, mode=mode)
        return u[:, :, None, :], cache, (mu, var)

    def _block1_fused_backward(self, du, c):
        cfg, p, dt = self.config, self.params, self.dtype
        du = du[:, :, 0, :]
        fmap, nfft = c["fmap"], c["nfft"]
        K = cfg.temporal_kernel_len
        F1, G_ = cfg.F1, cfg.n_spatial
        a, W, mu, sigma = c["a"], c["W"], c["mu"], c["sigma"]
        gamma, beta = p["bn1_gamma"].astype(np.float64), p["bn1_beta"].astype(np.float64)

        du_sum = du.sum(axis=(0, 2), dtype=np.float64)  # (G,)
        dv = du * a.astype(dt)[:, None]
        da = np.einsum("not,not->o", du, c["v"], dtype=np.float64) - mu[fmap] * W * du_sum
        dW = du_sum * (beta[fmap] - a * mu[fmap])

        def per_filter(vals):
            return vals.reshape(cfg.D, F1, *vals.shape[1:]).sum(axis=0)

        dbeta = per_filter(W * du_sum)
        dgamma = per_filter(da) / sigma
        dmu = per_filter(-a * W * du_sum)
        dsigma = -per_filter(da) * gamma / sigma**2

        DV = sfft.rfft(dv, n=nfft, axis=-1)
        cross = (np.conj(DV) * c["S"]).sum(axis=0)
        dk = per_filter(sfft.irfft(cross, n=nfft, axis=-1)[:, :K]).astype(np.float64)
        if c["mode"] == "train":
            dvar = dsigma / (2 * sigma)
            dmu = dmu - 2 * mu * dvar
            dk += (np.outer(dmu, c["m"]) + 2 * dvar[:, None] * c["Gk"]) / c["N"]

        # sum_t ds * x as a frequency-domain inner product (one-sided spectrum weights)
        wgt = np.full(nfft // 2 + 1, 2.0)
        wgt[0] = wgt[-1] = 1.0
        dS = DV * (c["Kf"][fmap] * (wgt / nfft).astype(dt))
        dwdw = np.tensordot(dS, np.conj(c["Xf"]), axes=([0, 2], [0, 2])).real
        dwdw = dwdw.astype(np.float64) + dW[:, None]
        return {
            "conv1": dk[:, None, None, :].astype(dt),
            "bn1_gamma": dgamma.astype(dt), "bn1_beta": dbeta.astype(dt),
            "depthwise": dwdw[:, None, :, None].astype(dt),
        }

    def _block1_layered(self, x, mode, shapes):
        cfg, p, b = self.config, self.params, self.buffers
        x4 = x[:, None]
        z = L.conv2d_temporal_same(x4, p["conv1"])
        shapes.append(("conv2d", z.shape[1:]))
        if mode == "train":
            y1, bn_cache, mu, var = L.batchnorm_train(z, p["bn1_gamma"], p["bn1_beta"], cfg.bn_eps)
        else:
            y1 = L.batchnorm_infer(z, p["bn1_gamma"], p["bn1_beta"], b["bn1_mean"], b["bn1_var"],
                                   cfg.bn_eps)
            bn_cache, mu, var = None, b["bn1_mean"], b["bn1_var"]
        shapes.append(("batchnorm1", y1.shape[1:]))
        u = L.depthwise_conv_spatial(y1, p["depthwise"])
        return u, dict(x4=x4, z=z, y1=y1, bn=bn_cache, mode=mode), (mu, var)

    def _block1_layered_backward(self, du, c):
        cfg, p, b = self.config, self.params, self.buffers
        dy1, ddw = L.depthwise_conv_spatial_backward(c["y1"], p["depthwise"], du)
        if c["mode"] == "train":
            dz, dg, db = L.batchnorm_backward(dy1, c["bn"])
        else:
            dz = L.batchnorm_infer_backward(dy1, p["bn1_gamma"], b["bn1_var"], cfg.bn_eps)
            xhat = (c["z"] - b["bn1_mean"].reshape(1, -1, 1, 1)) / np.sqrt(
                b["bn1_var"].reshape(1, -1, 1, 1) + cfg.bn_eps)
            dg, db = (dy1 * xhat).sum(axis=L.BN_AXES), dy1.sum(axis=L.BN_AXES)
        _, dk = L.conv2d_temporal_same_backward(c["x4"], p["conv1"], dz)
        return {"conv1": dk, "bn1_gamma": dg, "bn1_beta": db, "depthwise": ddw}

    # ------------------------------------------------------------ full network

    def _bn(self, h, idx, mode):
        cfg, p, b = self.config, self.params, self.buffers
        g, be = p[f"bn{idx}_gamma"], p[f"bn{idx}_beta"]
        if mode == "train":
            y, cache, mu, var = L.batchnorm_train(h, g, be, cfg.bn_eps)
            return y, cache, (mu, var)
        y = L.batchnorm_infer(h, g, be, b[f"bn{idx}_mean"], b[f"bn{idx}_var"], cfg.bn_eps)
        return y, h, (b[f"bn{idx}_mean"], b[f"bn{idx}_var"])

    def _bn_backward(self, dy, cache, idx, mode):
        cfg, p, b = self.config, self.params, self.buffers
        if mode == "train":
            return L.batchnorm_backward(dy, cache)
        h = cache
        var = b[f"bn{idx}_var"]
        xhat = (h - b[f"bn{idx}_mean"].reshape(1, -1, 1, 1)) / np.sqrt(var.reshape(1, -1, 1, 1) + cfg.bn_eps)
        return (L.batchnorm_infer_backward(dy, p[f"bn{idx}_gamma"], var, cfg.bn_eps),
                (dy * xhat).sum(axis=L.BN_AXES), dy.sum(axis=L.BN_AXES))

    def forward(self, x, mode: str = "infer", rng: np.random.Generator | None = None,
                fused: bool = True):
        """Class probabilities ``(n, N)`` and the cache needed by :meth:`backward`.

        ``mode='train'`` uses batch statistics and dropout (``rng`` required);
        ``mode='infer'`` uses running statistics and no dropout.
        """
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        if mode == "train" and self.config.dropout_rate > 0 and rng is None:
            raise ValueError("train mode needs an rng for dropout")
        cfg, p = self.config, self.params
        x = self._check_input(x)
        n = x.shape[0]
        shapes = [("input", x.shape[1:]), ("reshape", (1,) + x.shape[1:])]
        stats = {}
        if fused:
            u, c1, stats[1] = self._block1_fused(x, mode)
        else:
            u, c1, stats[1] = self._block1_layered(x, mode, shapes)
        shapes.append(("depthwise", u.shape[1:]))
        h2, bn2, stats[2] = self._bn(u, 2, mode)
        shapes.append(("batchnorm2", h2.shape[1:]))
        e1 = L.elu(h2)
        shapes.append(("elu1", e1.shape[1:]))
        p1 = L.avgpool_time(e1, cfg.pool1)
        shapes.append(("avgpool1", p1.shape[1:]))
        d1, m1 = L.dropout(p1, cfg.dropout_rate, mode, rng)
        shapes.append(("dropout1", d1.shape[1:]))
        sp = L.separable_conv(d1, p["sep_depth"], p["sep_point"])
        shapes.append(("separable", sp.shape[1:]))
        h3, bn3, stats[3] = self._bn(sp, 3, mode)
        shapes.append(("batchnorm3", h3.shape[1:]))
        e2 = L.elu(h3)
        shapes.append(("elu2", e2.shape[1:]))
        p2 = L.avgpool_time(e2, cfg.pool2)
        shapes.append(("avgpool2", p2.shape[1:]))
        d2, m2 = L.dropout(p2, cfg.dropout_rate, mode, rng)
        shapes.append(("dropout2", d2.shape[1:]))
        flat = d2.reshape(n, -1)
        shapes.append(("flatten", flat.shape[1:]))
        probs = L.dense_softmax(flat, p["dense"])
        shapes.append(("dense", probs.shape[1:]))
        cache = dict(mode=mode, fused=fused, c1=c1, u=u, bn2=bn2, h2=h2, m1=m1, d1=d1, sp=sp,
                     bn3=bn3, h3=h3, m2=m2, d2=d2, flat=flat, probs=probs, stats=stats,
                     shapes=[(k, tuple(s)) for k, s in shapes], layer_out={1: d1, 2: d2, 3: flat})
        return probs, cache

    def backward(self, cache, targets) -> dict[str, np.ndarray]:
        """Gradients of the mean cross-entropy w.r.t. every parameter."""
        cfg, p = self.config, self.params
        mode = cache["mode"]
        probs = cache["probs"]
        dlogits = L.cross_entropy_grad_logits(probs, targets.astype(probs.dtype, copy=False))
        dflat, ddense = L.dense_backward(cache["flat"], p["dense"], dlogits)
        dd2 = dflat.reshape(cache["d2"].shape)
        dp2 = L.dropout_backward(dd2, cache["m2"])
        de2 = L.avgpool_time_backward(dp2, cfg.pool2)
        dh3 = L.elu_backward(cache["h3"], de2)
        dsp, dg3, db3 = self._bn_backward(dh3, cache["bn3"], 3, mode)
        dd1, dsd, dspt = L.separable_conv_backward(cache["d1"], p["sep_depth"], p["sep_point"], dsp)
        dp1 = L.dropout_backward(dd1, cache["m1"])
        de1 = L.avgpool_time_backward(dp1, cfg.pool1)
        dh2 = L.elu_backward(cache["h2"], de1)
        du, dg2, db2 = self._bn_backward(dh2, cache["bn2"], 2, mode)
        if cache["fused"]:
            g1 = self._block1_fused_backward(du, cache["c1"])
        else:
            g1 = self._block1_layered_backward(du, cache["c1"])
        grads = {**g1, "bn2_gamma": dg2, "bn2_beta": db2, "sep_depth": dsd, "sep_point": dspt,
                 "bn3_gamma": dg3, "bn3_beta": db3, "dense": ddense}
        return {k: np.asarray(grads[k], self.dtype) for k in PARAM_ORDER}

    def loss_and_grads(self, x, labels, rng=None, fused: bool = True):
        probs, cache = self.forward(x, "train", rng, fused)
        t = L.one_hot(labels, self.config.n_classes, probs.dtype)
        return L.cross_entropy(probs, t), self.backward(cache, t), cache["stats"]

    def update_running_stats(self, stats) -> None:
        mom = self.config.bn_momentum
        for idx, (mu, var) in stats.items():
            for key, val in ((f"bn{idx}_mean", mu), (f"bn{idx}_var", var)):
                self.buffers[key] = L.update_running(
                    self.buffers[key], np.asarray(val, self.dtype), mom).astype(self.dtype)

    # ------------------------------------------------------------ inference

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        x = self._check_input(x)
        out = [self.forward(x[i:i + batch_size], "infer")[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.n_classes), self.dtype)

    def predict(self, x, batch_size: int = 256):
        """``(labels, probabilities)`` in inference mode."""
        proba = self.predict_proba(x, batch_size)
        return proba.argmax(axis=1), proba

    def activations(self, x, layer: int, batch_size: int = 256) -> np.ndarray:
        """Inference-mode output of block ``layer`` (1, 2, or 3 = flatten), one row per segment."""
        if layer not in (1, 2, 3):
            raise ValueError(f"layer must be 1, 2 or 3, got {layer!r}")
        x = self._check_input(x)
        rows = []
        for i in range(0, len(x), batch_size):
            _, cache = self.forward(x[i:i + batch_size], "infer")
            out = cache["layer_out"][layer]
            rows.append(out.reshape(out.shape[0], -1))
        return np.concatenate(rows)
