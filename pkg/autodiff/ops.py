"""
微分可能な演算

DCSCN と残差分類器が必要とするすべての演算を提供する。
各演算は形状を検証し、順伝播結果と逆伝播関数を計算グラフに記録する。
"""
import logging
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tensor import Tensor, default_dtype, make_output
from exceptions import ShapeError
from image_resample import KernelParams, resample_array, resample_array_adjoint

logger = logging.getLogger(__name__)


def _require_ndim(tensor: Tensor, ndim: int, op: str, what: str) -> None:
    if tensor.data.ndim != ndim:
        raise ShapeError(
            f"{what} は {ndim} 次元である必要があります: shape={tensor.shape}",
            op=op,
            dimension=f"{what}.ndim"
        )


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"形状が一致しません: {a.shape} != {b.shape}", op=op, dimension="shape")


def _cast(array: np.ndarray, like: Tensor) -> np.ndarray:
    return array.astype(like.data.dtype, copy=False)


def add(a: Tensor, b: Tensor) -> Tensor:
    """要素ごとの和（同一形状）"""
    _same_shape(a, b, "add")

    def _backward(g: np.ndarray):
        return g, g

    return make_output("add", a.data + b.data, (a, b), _backward)


def sum_all(x: Tensor) -> Tensor:
    """全要素の和（スカラー）"""
    total = np.asarray(np.sum(x.data, dtype=np.float64))

    def _backward(g: np.ndarray):
        return (_cast(np.broadcast_to(g, x.shape).copy(), x),)

    return make_output("sum_all", total, (x,), _backward)


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0

    def _backward(g: np.ndarray):
        return (np.where(positive, g, 0).astype(g.dtype),)

    return make_output("relu", np.where(positive, x.data, 0).astype(x.data.dtype), (x,), _backward)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """
    チャンネルごとの傾きを持つ PReLU

    x が2次元以上なら軸1をチャンネルとみなす。1次元なら単一チャンネル。
    """
    channels = x.shape[1] if x.data.ndim >= 2 else 1
    if slope.data.ndim != 1 or slope.shape[0] != channels:
        raise ShapeError(
            f"slope の長さ {slope.shape} がチャンネル数 {channels} と一致しません",
            op="prelu",
            dimension="channels"
        )
    shape = [1] * max(x.data.ndim, 1)
    if x.data.ndim >= 2:
        shape[1] = channels
    s = slope.data.reshape(shape)
    positive = x.data > 0
    out = np.where(positive, x.data, s * x.data)
    reduce_axes = tuple(i for i in range(x.data.ndim) if not (x.data.ndim >= 2 and i == 1))

    def _backward(g: np.ndarray):
        gx = np.where(positive, g, s * g) if x.requires_grad else None
        gs = None
        if slope.requires_grad:
            contrib = np.where(positive, 0, x.data * g)
            gs = _cast(np.sum(contrib, axis=reduce_axes, dtype=np.float64).reshape(channels), slope)
        return gx, gs

    return make_output("prelu", out, (x, slope), _backward)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    zero_padding: int = 0
) -> Tensor:
    """
    2次元畳み込み（直接実装、ゼロパディング）

    Args:
        x: 入力 (b, ci, h, w)
        weight: 重み (co, ci, kh, kw)、kh/kw は奇数
        bias: バイアス (co,)
        stride: ストライド（1以上）
        zero_padding: 上下左右のゼロパディング幅

    Returns:
        Tensor: (b, co, h', w')、h' = (h + 2p - kh) // stride + 1

    Raises:
        ShapeError: 形状の不整合（問題の次元名を含む）
    """
    _require_ndim(x, 4, "conv2d", "input")
    _require_ndim(weight, 4, "conv2d", "weight")
    _require_ndim(bias, 1, "conv2d", "bias")
    batch, in_ch, height, width = x.shape
    out_ch, w_in_ch, kh, kw = weight.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"カーネルサイズは奇数である必要があります: {kh}x{kw}", op="conv2d", dimension="kernel")
    if stride < 1:
        raise ShapeError(f"stride は1以上: {stride}", op="conv2d", dimension="stride")
    if zero_padding < 0:
        raise ShapeError(f"padding は0以上: {zero_padding}", op="conv2d", dimension="padding")
    if w_in_ch != in_ch:
        raise ShapeError(
            f"入力チャンネル数 {in_ch} と重みのチャンネル数 {w_in_ch} が一致しません",
            op="conv2d",
            dimension="in_channels"
        )
    if bias.shape != (out_ch,):
        raise ShapeError(
            f"bias の形状 {bias.shape} が出力チャンネル数 {out_ch} と一致しません",
            op="conv2d",
            dimension="out_channels"
        )
    pad = zero_padding
    padded_h, padded_w = height + 2 * pad, width + 2 * pad
    if padded_h < kh:
        raise ShapeError(f"高さ {height} がカーネル {kh} より小さい", op="conv2d", dimension="height")
    if padded_w < kw:
        raise ShapeError(f"幅 {width} がカーネル {kw} より小さい", op="conv2d", dimension="width")
    out_h = (padded_h - kh) // stride + 1
    out_w = (padded_w - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    # (b, ci, out_h, out_w, kh, kw) のビュー
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.data[None, :, None, None]

    def _backward(g: np.ndarray):
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        if bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            dwin = np.tensordot(g, weight.data, axes=([1], [0]))  # (b, out_h, out_w, ci, kh, kw)
            gxp = np.zeros((batch, in_ch, padded_h, padded_w), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += (
                        dwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, pad:pad + height, pad:pad + width]
        return gx, gw, gb

    return make_output("conv2d", out, (x, weight, bias), _backward)


def depth_to_space(x: Tensor, r: int) -> Tensor:
    """
    ピクセルシャッフル: (b, c*r^2, h, w) -> (b, c, h*r, w*r)
    """
    _require_ndim(x, 4, "depth_to_space", "input")
    batch, channels, height, width = x.shape
    if r < 1 or channels % (r * r) != 0:
        raise ShapeError(
            f"チャンネル数 {channels} が r^2={r * r} で割り切れません",
            op="depth_to_space",
            dimension="channels"
        )
    out_ch = channels // (r * r)
    out = (
        x.data.reshape(batch, out_ch, r, r, height, width)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(batch, out_ch, height * r, width * r)
    )

    def _backward(g: np.ndarray):
        return (
            g.reshape(batch, out_ch, height, r, width, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(batch, channels, height, width),
        )

    return make_output("depth_to_space", out, (x,), _backward)


def space_to_depth(x: Tensor, r: int) -> Tensor:
    """depth_to_space の逆変換: (b, c, h*r, w*r) -> (b, c*r^2, h, w)"""
    _require_ndim(x, 4, "space_to_depth", "input")
    batch, channels, height, width = x.shape
    if r < 1 or height % r or width % r:
        raise ShapeError(f"空間サイズ {height}x{width} が r={r} で割り切れません", op="space_to_depth", dimension="height")
    h, w = height // r, width // r
    out = (
        x.data.reshape(batch, channels, h, r, w, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(batch, channels * r * r, h, w)
    )

    def _backward(g: np.ndarray):
        return (
            g.reshape(batch, channels, r, r, h, w)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(batch, channels, height, width),
        )

    return make_output("space_to_depth", out, (x,), _backward)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """チャンネル方向の連結（スキップ接続用）"""
    if not xs:
        raise ShapeError("入力が空です", op="concat_channels", dimension="inputs")
    for t in xs:
        _require_ndim(t, 4, "concat_channels", "input")
    ref = xs[0].shape
    for t in xs[1:]:
        for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
            if t.shape[axis] != ref[axis]:
                raise ShapeError(
                    f"{name} が一致しません: {t.shape} vs {ref}",
                    op="concat_channels",
                    dimension=name
                )
    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def _backward(g: np.ndarray):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return make_output("concat_channels", out, tuple(xs), _backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(b, c, h, w) -> (b, c)、64bitで集計"""
    _require_ndim(x, 4, "global_avg_pool", "input")
    _, _, height, width = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float64)

    def _backward(g: np.ndarray):
        grad = np.broadcast_to(g[:, :, None, None] / float(height * width), x.shape)
        return (_cast(grad.copy(), x),)

    return make_output("global_avg_pool", out, (x,), _backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """全結合: x (b, i) @ W (i, o) + b (o,)"""
    _require_ndim(x, 2, "dense", "input")
    _require_ndim(weight, 2, "dense", "weight")
    if weight.shape[0] != x.shape[1]:
        raise ShapeError(
            f"入力次元 {x.shape[1]} と重み {weight.shape} が一致しません",
            op="dense",
            dimension="in_features"
        )
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"bias の形状 {bias.shape} が不正です", op="dense", dimension="out_features")
    out = x.data @ weight.data + bias.data

    def _backward(g: np.ndarray):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return make_output("dense", out, (x, weight, bias), _backward)


def group_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    groups: int,
    eps: float = 1e-5
) -> Tensor:
    """
    グループ正規化（実行時統計を持たない）

    サンプルごと・グループごとに平均0分散1へ正規化し、チャンネルごとのアフィン変換を適用。
    バッチサイズに依存しないため評価が決定的になる。
    """
    _require_ndim(x, 4, "group_norm", "input")
    batch, channels, height, width = x.shape
    if groups < 1 or channels % groups:
        raise ShapeError(f"チャンネル数 {channels} が groups={groups} で割り切れません", op="group_norm", dimension="groups")
    for param, name in ((gamma, "gamma"), (beta, "beta")):
        if param.shape != (channels,):
            raise ShapeError(f"{name} の形状 {param.shape} が不正です", op="group_norm", dimension=name)

    xg = x.data.astype(np.float64).reshape(batch, groups, -1)
    mean = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mean) * inv_std).reshape(batch, channels, height, width)
    g_shape = (1, channels, 1, 1)
    out = xhat * gamma.data.reshape(g_shape) + beta.data.reshape(g_shape)

    def _backward(g: np.ndarray):
        g64 = g.astype(np.float64)
        ggamma = _cast((g64 * xhat).sum(axis=(0, 2, 3)), gamma) if gamma.requires_grad else None
        gbeta = _cast(g64.sum(axis=(0, 2, 3)), beta) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = (g64 * gamma.data.reshape(g_shape)).reshape(batch, groups, -1)
            xh = xhat.reshape(batch, groups, -1)
            dx = inv_std * (
                dxhat - dxhat.mean(axis=2, keepdims=True) - xh * (dxhat * xh).mean(axis=2, keepdims=True)
            )
            gx = _cast(dx.reshape(x.shape), x)
        return gx, ggamma, gbeta

    return make_output("group_norm", out, (x, gamma, beta), _backward)


def bicubic_upsample_const(
    x: Tensor,
    scale: int,
    params: Optional[KernelParams] = None
) -> Tensor:
    """
    学習しないバイキュービック拡大（残差経路）

    image_resample の平面リサンプラーと同じ計算を行うため、
    DepthFrame 側の resample_bicubic とクランプ前の値がビット単位で一致する。
    """
    _require_ndim(x, 4, "bicubic_upsample_const", "input")
    if scale < 1:
        raise ShapeError(f"scale は1以上: {scale}", op="bicubic_upsample_const", dimension="scale")
    params = params or KernelParams()
    _, _, height, width = x.shape
    out_h, out_w = height * scale, width * scale
    out = resample_array(x.data, out_h, out_w, params)

    def _backward(g: np.ndarray):
        return (_cast(resample_array_adjoint(g, height, width, params), x),)

    return make_output("bicubic_upsample_const", out, (x,), _backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """平均二乗誤差（64bitで集計）"""
    _same_shape(pred, target, "mse_loss")
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    count = diff.size
    loss = np.asarray(np.mean(diff * diff))

    def _backward(g: np.ndarray):
        grad = (2.0 / count) * diff * float(g)
        return _cast(grad, pred), _cast(-grad, target)

    return make_output("mse_loss", loss, (pred, target), _backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """最大値を引いて安定化した log-softmax（64bit）"""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """
    ソフトマックス交差エントロピー（バッチ平均）

    Args:
        logits: (b, k)
        labels: 長さ b の整数ラベル、範囲 [0, k)

    Raises:
        ShapeError: ラベル数の不一致、またはラベルが範囲外
    """
    _require_ndim(logits, 2, "softmax_cross_entropy", "logits")
    batch, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != batch:
        raise ShapeError(f"ラベル数 {labels.shape[0]} がバッチ {batch} と一致しません", op="softmax_cross_entropy", dimension="batch")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeError(
            f"ラベルが範囲 [0, {classes}) 外です: {labels.min()}..{labels.max()}",
            op="softmax_cross_entropy",
            dimension="labels"
        )
    logp = log_softmax(logits.data)
    rows = np.arange(batch)
    loss = np.asarray(-logp[rows, labels].mean())
    probs = np.exp(logp)

    def _backward(g: np.ndarray):
        grad = probs.copy()
        grad[rows, labels] -= 1.0
        grad *= float(g) / batch
        return (_cast(grad, logits),)

    return make_output("softmax_cross_entropy", loss, (logits,), _backward)


def constant(array: np.ndarray) -> Tensor:
    """勾配不要の定数テンソル"""
    return Tensor(array, requires_grad=False, dtype=default_dtype())
