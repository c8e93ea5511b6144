"""Differentiable primitives.

Every op takes and returns :class:`Tensor` objects and registers a closure
that maps the output gradient to one gradient per input. Shapes must match
exactly except where an op says otherwise (bias add, per-channel affine,
row scaling).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import DTYPE, Tensor, make_node


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _norm_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"{op}: axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


# ---------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return make_node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    x, y = a.data, b.data
    return make_node(x * y, (a, b), lambda g: (g * y, g * x), "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = DTYPE(s)
    return make_node(a.data * s, (a,), lambda g: (g * s,), "scale")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_node(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def reciprocal(a: Tensor, eps: float = 0.0) -> Tensor:
    """``1 / (a + eps)``."""
    inv = 1.0 / (a.data + DTYPE(eps))
    return make_node(inv, (a,), lambda g: (-g * inv * inv,), "reciprocal")


def log(a: Tensor) -> Tensor:
    x = a.data
    return make_node(np.log(x), (a,), lambda g: (g / x,), "log")


# ---------------------------------------------------------------- reductions


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    out = np.asarray(a.data.sum(dtype=np.float64), dtype=DTYPE)
    return make_node(out, (a,), lambda g: (np.broadcast_to(g, shape).astype(DTYPE),), "sum")


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return scale(sum(a), 1.0 / n)


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim, "sum_axis")
    shape = a.shape

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(DTYPE),)

    return make_node(a.data.sum(axis=axis, keepdims=keepdims), (a,), _backward, "sum_axis")


# ---------------------------------------------------------------- broadcasting affine


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias ``b`` (shape ``(C,)``) along axis 1 of ``x``."""
    if b.ndim != 1 or x.ndim < 2 or x.shape[1] != b.shape[0]:
        raise ValueError(f"add_bias: bias {b.shape} does not match channels of {x.shape}")
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    red = (0,) + tuple(range(2, x.ndim))
    return make_node(
        x.data + b.data.reshape(bshape),
        (x, b),
        lambda g: (g, g.sum(axis=red)),
        "add_bias",
    )


def channel_affine(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """``gamma[c] * x[:, c] + beta[c]`` for NCHW input."""
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"channel_affine: expected ({c},) params, got {gamma.shape}, {beta.shape}")
    gm = gamma.data.reshape(1, c, 1, 1)
    xd = x.data

    def _backward(g):
        return g * gm, (g * xd).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_node(xd * gm + beta.data.reshape(1, c, 1, 1), (x, gamma, beta), _backward, "channel_affine")


def mul_rows(x: Tensor, s: Tensor) -> Tensor:
    """Scale each row of ``x`` (..., N, C) by ``s`` (..., N)."""
    if x.shape[:-1] != s.shape:
        raise ValueError(f"mul_rows: scale {s.shape} does not match rows of {x.shape}")
    xd, sd = x.data, s.data[..., None]
    return make_node(
        xd * sd,
        (x, s),
        lambda g: (g * sd, (g * xd).sum(axis=-1)),
        "mul_rows",
    )


# ---------------------------------------------------------------- shape ops


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    out = a.data.reshape(tuple(shape))
    return make_node(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None or len(axes) == 0:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(_norm_axis(ax, a.ndim, "transpose") for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ValueError(f"transpose: {axes} is not a permutation of {a.ndim} axes")
    inv = tuple(np.argsort(axes))
    return make_node(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (np.ascontiguousarray(g.transpose(inv)),),
        "transpose",
    )


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    axis = _norm_axis(axis, tensors[0].ndim, "concat")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            t.shape[d] != ref[d] for d in range(len(ref)) if d != axis
        ):
            raise ValueError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        return [np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis)]

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), _backward, "concat")


def expand_spatial(x: Tensor, height: int, width: int) -> Tensor:
    """Tile a ``B x C x 1 x 1`` tensor to ``B x C x height x width``."""
    if x.ndim != 4 or x.shape[2:] != (1, 1):
        raise ValueError(f"expand_spatial: expected B x C x 1 x 1, got {x.shape}")
    out = np.broadcast_to(x.data, x.shape[:2] + (height, width)).copy()
    return make_node(out, (x,), lambda g: (g.sum(axis=(2, 3), keepdims=True),), "expand_spatial")


def flip_width(x: Tensor) -> Tensor:
    return make_node(
        np.ascontiguousarray(x.data[..., ::-1]),
        (x,),
        lambda g: (np.ascontiguousarray(g[..., ::-1]),),
        "flip_width",
    )


def pick(x: Tensor, index: np.ndarray, axis: int = 1) -> Tensor:
    """Gather ``x`` along ``axis`` at integer ``index`` (which lacks that axis)."""
    axis = _norm_axis(axis, x.ndim, "pick")
    idx = np.expand_dims(np.asarray(index, dtype=np.intp), axis)
    if idx.shape[:axis] + idx.shape[axis + 1:] != x.shape[:axis] + x.shape[axis + 1:]:
        raise ValueError(f"pick: index {np.shape(index)} does not match {x.shape} without axis {axis}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise ValueError("pick: index out of range")
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)
    shape = x.shape

    def _backward(g):
        gx = np.zeros(shape, dtype=DTYPE)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return make_node(out, (x,), _backward, "pick")


# ---------------------------------------------------------------- softmax family


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _norm_axis(axis, x.ndim, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node(y, (x,), _backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _norm_axis(axis, x.ndim, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def _backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (x,), _backward, "log_softmax")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D ``M x K @ K x N`` or batched ``B x M x K @ B x K x N``."""
    if a.ndim not in (2, 3) or a.ndim != b.ndim:
        raise ValueError(f"matmul: need two 2-D or two 3-D tensors, got {a.shape} and {b.shape}")
    if a.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ValueError(f"matmul: batch mismatch {a.shape[0]} vs {b.shape[0]}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimension mismatch {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def _backward(g):
        return g @ np.swapaxes(y, -1, -2), np.swapaxes(x, -1, -2) @ g

    return make_node(x @ y, (a, b), _backward, "matmul")


# ---------------------------------------------------------------- convolution


def conv_output_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """Cross-correlation of NCHW ``x`` with ``Cout x Cin x k x k`` weights, zero padded."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d: expected 4-d input and weight, got {x.shape}, {weight.shape}")
    B, cin, H, W = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d: input has {cin} channels but weight expects {wcin}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv2d: stride and dilation must be >= 1, padding >= 0")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    ho = conv_output_size(H, kh, stride, padding, dilation)
    wo = conv_output_size(W, kw, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise ValueError(
            f"conv2d: input {H}x{W} too small for kernel {kh}x{kw} "
            f"with dilation {dilation} and padding {padding}"
        )

    if kh == 1 and kw == 1 and stride == 1 and padding == 0:
        cols = x.data.reshape(B, cin, H * W)
        xp_shape = None
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
        xp_shape = xp.shape
        cols = np.empty((B, cin, kh, kw, ho, wo), dtype=DTYPE)
        for i in range(kh):
            r0 = i * dilation
            for j in range(kw):
                c0 = j * dilation
                cols[:, :, i, j] = xp[:, :, r0:r0 + stride * (ho - 1) + 1:stride, c0:c0 + stride * (wo - 1) + 1:stride]
        cols = cols.reshape(B, cin * kh * kw, ho * wo)

    w2 = weight.data.reshape(cout, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(B, cout, ho, wo)

    def _backward(g):
        g2 = g.reshape(B, cout, ho * wo)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(weight.shape).astype(DTYPE, copy=False)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            if xp_shape is None:
                gx = gcols.reshape(x.shape)
            else:
                gcols = gcols.reshape(B, cin, kh, kw, ho, wo)
                gxp = np.zeros(xp_shape, dtype=DTYPE)
                for i in range(kh):
                    r0 = i * dilation
                    for j in range(kw):
                        c0 = j * dilation
                        gxp[:, :, r0:r0 + stride * (ho - 1) + 1:stride, c0:c0 + stride * (wo - 1) + 1:stride] += gcols[:, :, i, j]
                gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, _backward, "conv2d")


# ---------------------------------------------------------------- normalization


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of NCHW input.

    In training mode batch statistics are used and the running buffers are
    updated in place as ``running = momentum * running + (1 - momentum) * batch``.
    """
    if x.ndim != 4:
        raise ValueError(f"batch_norm2d: expected NCHW input, got {x.shape}")
    B, C, H, W = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batch_norm2d: params must have shape ({C},)")
    if not training:
        inv_std = (1.0 / np.sqrt(running_var.astype(np.float64) + eps)).astype(DTYPE)
        shift = running_mean.astype(DTYPE)
        xhat = (x.data - shift.reshape(1, C, 1, 1)) * inv_std.reshape(1, C, 1, 1)
        return channel_affine(make_node(xhat, (x,), lambda g: (g * inv_std.reshape(1, C, 1, 1),), "bn_eval"), gamma, beta)

    m = B * H * W
    if m < 2:
        raise ValueError("batch_norm2d: training mode needs at least 2 values per channel")
    mu = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
    centered = x.data - mu.astype(DTYPE).reshape(1, C, 1, 1)
    var = np.mean(np.square(centered, dtype=np.float64), axis=(0, 2, 3))
    inv_std = (1.0 / np.sqrt(var + eps)).astype(DTYPE)
    xhat = centered * inv_std.reshape(1, C, 1, 1)
    running_mean *= momentum
    running_mean += (1.0 - momentum) * mu
    running_var *= momentum
    running_var += (1.0 - momentum) * var * (m / (m - 1))

    gm = gamma.data.reshape(1, C, 1, 1)
    out = xhat * gm + beta.data.reshape(1, C, 1, 1)

    def _backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gm
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = (inv_std.reshape(1, C, 1, 1) / m) * (m * dxhat - s1 - xhat * s2)
        return dx.astype(DTYPE, copy=False), dgamma, dbeta

    return make_node(out, (x, gamma, beta), _backward, "batch_norm2d")


# ---------------------------------------------------------------- resampling


def interp_matrix(n_out: int, n_in: int, align_corners: bool = True) -> np.ndarray:
    """Linear interpolation weights mapping ``n_in`` samples to ``n_out``."""
    A = np.zeros((n_out, n_in), dtype=np.float64)
    if n_in == 1:
        A[:, 0] = 1.0
        return A.astype(DTYPE)
    if align_corners:
        src = np.arange(n_out) * ((n_in - 1) / (n_out - 1)) if n_out > 1 else np.zeros(1)
    else:
        src = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
    i0 = np.minimum(np.floor(src).astype(int), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = src - i0
    rows = np.arange(n_out)
    np.add.at(A, (rows, i0), 1.0 - w)
    np.add.at(A, (rows, i1), w)
    return A.astype(DTYPE)


def upsample_bilinear(x: Tensor, out_h: int, out_w: int, align_corners: bool = True) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"upsample_bilinear: expected NCHW input, got {x.shape}")
    H, W = x.shape[2:]
    if (H, W) == (out_h, out_w) and align_corners:
        return make_node(x.data.copy(), (x,), lambda g: (g,), "upsample_bilinear")
    ah = interp_matrix(out_h, H, align_corners)
    aw = interp_matrix(out_w, W, align_corners)
    out = np.matmul(np.matmul(ah, x.data), aw.T)
    return make_node(out, (x,), lambda g: (np.matmul(np.matmul(ah.T, g), aw),), "upsample_bilinear")


def avg_pool2d(x: Tensor, kernel: int, stride: Optional[int] = None) -> Tensor:
    stride = kernel if stride is None else stride
    B, C, H, W = x.shape
    ho = (H - kernel) // stride + 1
    wo = (W - kernel) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"avg_pool2d: input {H}x{W} smaller than kernel {kernel}")
    out = np.zeros((B, C, ho, wo), dtype=DTYPE)
    span_h, span_w = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kernel):
        for j in range(kernel):
            out += x.data[:, :, i:i + span_h:stride, j:j + span_w:stride]
    out /= kernel * kernel
    shape = x.shape

    def _backward(g):
        gx = np.zeros(shape, dtype=DTYPE)
        gs = g / (kernel * kernel)
        for i in range(kernel):
            for j in range(kernel):
                gx[:, :, i:i + span_h:stride, j:j + span_w:stride] += gs
        return (gx,)

    return make_node(out, (x,), _backward, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    n = H * W
    return make_node(
        x.data.mean(axis=(2, 3), keepdims=True),
        (x,),
        lambda g: (np.broadcast_to(g / n, (B, C, H, W)).astype(DTYPE),),
        "global_avg_pool",
    )
