"""
Adam オプティマイザ

パラメータはイミュータブルなテンソルなので、更新結果は新しいテンソルとして返す。
モーメントは64bitで保持する。
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Tuple

import numpy as np

from autodiff.tensor import Tensor
from exceptions import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    Adam の状態

    Attributes:
        lr: 学習率
        beta1: 1次モーメントの減衰率
        beta2: 2次モーメントの減衰率
        eps: 分母の安定化項
        t: 更新済みステップ数
        m: パラメータ名 -> 1次モーメント
        v: パラメータ名 -> 2次モーメント
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState
) -> Tuple[Dict[str, Tensor], AdamState]:
    """
    バイアス補正付き Adam 更新を1ステップ実行

    勾配がないパラメータはゼロ勾配として扱う。

    Args:
        params: パラメータ名 -> テンソル（名前順に処理）
        grads: パラメータ名 -> 勾配
        state: 現在の状態

    Returns:
        Tuple[Dict[str, Tensor], AdamState]: 更新後のパラメータと状態（t は1増える）

    Raises:
        ShapeError: 勾配またはモーメントの形状がパラメータと一致しない
    """
    t = state.t + 1
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    new_params: Dict[str, Tensor] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}

    for name in sorted(params):
        param = params[name]
        grad = grads.get(name)
        g = np.zeros(param.shape) if grad is None else np.asarray(grad, dtype=np.float64)
        if g.shape != param.shape:
            raise ShapeError(f"勾配の形状 {g.shape} がパラメータ {param.shape} と一致しません", op="adam_step", dimension=name)
        m = state.m.get(name, np.zeros(param.shape))
        v = state.v.get(name, np.zeros(param.shape))
        if m.shape != param.shape or v.shape != param.shape:
            raise ShapeError(f"モーメントの形状がパラメータ {param.shape} と一致しません", op="adam_step", dimension=name)

        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        data = (param.data.astype(np.float64) - update).astype(param.data.dtype)
        new_params[name] = Tensor(data, requires_grad=param.requires_grad, name=name, dtype=param.data.dtype)
        new_m[name] = m
        new_v[name] = v

    return new_params, replace(state, t=t, m=new_m, v=new_v)
