"""Layer descriptors and their forward/backward kernels.

Layers are immutable descriptors; parameters live in the owning model's
named parameter map. Every kernel takes and returns batched arrays with a
leading sample dimension and is a pure function of its inputs.
"""

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ShapeMismatchError


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class Rectifier:
    pass


@dataclass(frozen=True)
class Softplus:
    beta: float = 10.0


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class BatchNorm:
    channels: int
    eps: float = 1e-5
    momentum: float = 0.9


_LAYER_TYPES = {
    "dense": Dense,
    "conv2d": Conv2d,
    "rectifier": Rectifier,
    "softplus": Softplus,
    "flatten": Flatten,
    "batchnorm": BatchNorm,
}


def layer_to_dict(layer):
    name = next(k for k, v in _LAYER_TYPES.items() if isinstance(layer, v))
    d = {"type": name}
    for f in fields(layer):
        d[f.name] = getattr(layer, f.name)
    return d


def layer_from_dict(d):
    d = dict(d)
    cls = _LAYER_TYPES[d.pop("type")]
    return cls(**d)


def output_shape(layer, in_shape, index=None):
    """Shape (without batch dim) produced by `layer` on `in_shape` input."""
    where = f"layer {index} ({type(layer).__name__})"
    if isinstance(layer, Dense):
        if len(in_shape) != 1 or in_shape[0] != layer.in_features:
            raise ShapeMismatchError(
                f"{where}: expected input of shape ({layer.in_features},), got {in_shape}",
                layer=index,
            )
        return (layer.out_features,)
    if isinstance(layer, Conv2d):
        if len(in_shape) != 3 or in_shape[0] != layer.in_channels:
            raise ShapeMismatchError(
                f"{where}: expected (channels={layer.in_channels}, H, W), got {in_shape}",
                layer=index,
            )
        _, h, w = in_shape
        oh = (h + 2 * layer.pad - layer.kernel) // layer.stride + 1
        ow = (w + 2 * layer.pad - layer.kernel) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatchError(f"{where}: kernel does not fit input {in_shape}", layer=index)
        return (layer.out_channels, oh, ow)
    if isinstance(layer, Flatten):
        return (int(np.prod(in_shape)),)
    if isinstance(layer, BatchNorm):
        if in_shape[0] != layer.channels:
            raise ShapeMismatchError(
                f"{where}: expected leading dim {layer.channels}, got {in_shape}",
                layer=index,
            )
        return in_shape
    if isinstance(layer, (Rectifier, Softplus)):
        return in_shape
    raise TypeError(f"unknown layer {layer!r}")


def init_params(layer, rng):
    """Fan-in scaled uniform initialization; returns a name -> array map."""
    if isinstance(layer, Dense):
        bound = 1.0 / np.sqrt(layer.in_features)
        return {
            "w": rng.uniform(-bound, bound, size=(layer.in_features, layer.out_features)),
            "b": rng.uniform(-bound, bound, size=(layer.out_features,)),
        }
    if isinstance(layer, Conv2d):
        fan_in = layer.in_channels * layer.kernel * layer.kernel
        bound = 1.0 / np.sqrt(fan_in)
        shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        return {
            "w": rng.uniform(-bound, bound, size=shape),
            "b": rng.uniform(-bound, bound, size=(layer.out_channels,)),
        }
    if isinstance(layer, BatchNorm):
        return {
            "gamma": np.ones(layer.channels),
            "beta": np.zeros(layer.channels),
        }
    return {}


def init_state(layer):
    """Non-trained buffers (batchnorm running statistics)."""
    if isinstance(layer, BatchNorm):
        return {
            "running_mean": np.zeros(layer.channels),
            "running_var": np.ones(layer.channels),
        }
    return {}


def _im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    cols = np.empty((n, c, k, k, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * k * k, oh * ow), oh, ow


def _col2im(dcols, x_shape, k, stride, pad, oh, ow):
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    dcols = dcols.reshape(n, c, k, k, oh, ow)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, i, j]
    if pad:
        return dxp[:, :, pad : pad + h, pad : pad + w]
    return dxp


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(layer, params, state, x, train=False):
    """Run one layer. Returns (output, cache, new_state).

    `new_state` is None unless the layer updates buffers in training mode.
    """
    if isinstance(layer, Dense):
        y = x @ params["w"] + params["b"]
        return y, x, None
    if isinstance(layer, Conv2d):
        cols, oh, ow = _im2col(x, layer.kernel, layer.stride, layer.pad)
        w2 = params["w"].reshape(layer.out_channels, -1)
        y = np.matmul(w2, cols) + params["b"][:, None]
        y = y.reshape(x.shape[0], layer.out_channels, oh, ow)
        return y, (x.shape, cols, oh, ow), None
    if isinstance(layer, Rectifier):
        return np.maximum(x, 0.0), x, None
    if isinstance(layer, Softplus):
        bz = layer.beta * x
        y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(bz))) / layer.beta
        return y, x, None
    if isinstance(layer, Flatten):
        return x.reshape(x.shape[0], -1), x.shape, None
    if isinstance(layer, BatchNorm):
        axes = (0,) if x.ndim == 2 else (0, 2, 3)
        expand = (slice(None),) if x.ndim == 2 else (slice(None), None, None)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = layer.momentum
            new_state = {
                "running_mean": m * state["running_mean"] + (1 - m) * mean,
                "running_var": m * state["running_var"] + (1 - m) * var,
            }
        else:
            mean, var = state["running_mean"], state["running_var"]
            new_state = None
        inv_std = 1.0 / np.sqrt(var + layer.eps)
        xhat = (x - mean[expand]) * inv_std[expand]
        y = params["gamma"][expand] * xhat + params["beta"][expand]
        return y, (xhat, inv_std, train, axes, expand), new_state
    raise TypeError(f"unknown layer {layer!r}")


def backward(layer, params, cache, grad_out):
    """Backpropagate one layer. Returns (grad_in, param_grads)."""
    if isinstance(layer, Dense):
        x = cache
        return grad_out @ params["w"].T, {
            "w": x.T @ grad_out,
            "b": grad_out.sum(axis=0),
        }
    if isinstance(layer, Conv2d):
        x_shape, cols, oh, ow = cache
        n = grad_out.shape[0]
        g2 = grad_out.reshape(n, layer.out_channels, oh * ow)
        w2 = params["w"].reshape(layer.out_channels, -1)
        dw = np.einsum("nol,ncl->oc", g2, cols).reshape(params["w"].shape)
        db = g2.sum(axis=(0, 2))
        dcols = np.matmul(w2.T, g2)
        dx = _col2im(dcols, x_shape, layer.kernel, layer.stride, layer.pad, oh, ow)
        return dx, {"w": dw, "b": db}
    if isinstance(layer, Rectifier):
        return grad_out * (cache > 0), {}
    if isinstance(layer, Softplus):
        return grad_out * _sigmoid(layer.beta * cache), {}
    if isinstance(layer, Flatten):
        return grad_out.reshape(cache), {}
    if isinstance(layer, BatchNorm):
        xhat, inv_std, train, axes, expand = cache
        gamma = params["gamma"]
        dgamma = (grad_out * xhat).sum(axis=axes)
        dbeta = grad_out.sum(axis=axes)
        if not train:
            dx = grad_out * (gamma * inv_std)[expand]
            return dx, {"gamma": dgamma, "beta": dbeta}
        dxhat = grad_out * gamma[expand]
        dx = (
            dxhat
            - dxhat.mean(axis=axes)[expand]
            - xhat * (dxhat * xhat).mean(axis=axes)[expand]
        ) * inv_std[expand]
        return dx, {"gamma": dgamma, "beta": dbeta}
    raise TypeError(f"unknown layer {layer!r}")
