"""
有限差分による勾配チェック

解析的勾配を中心差分と比較する。64bitモード（float64_mode）では eps=1e-6、
32bitでは eps=1e-3 を既定値とする。
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from autodiff.tensor import Graph, Tensor, backward, default_dtype

logger = logging.getLogger(__name__)

EPS_64 = 1e-6
EPS_32 = 1e-3


@dataclass
class GradCheckResult:
    """勾配チェックの結果"""
    analytic: np.ndarray
    numeric: np.ndarray
    relative_error: float

    def passed(self, tolerance: float) -> bool:
        return self.relative_error < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / (||a|| + ||n||)、両方ゼロなら 0"""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: Optional[float] = None,
    sample: Optional[int] = None,
    rng: Optional[np.random.Generator] = None
) -> GradCheckResult:
    """
    fn(*tensors) のスカラー出力について解析的勾配と数値勾配を比較

    Args:
        fn: テンソルを受け取りスカラーテンソルを返す関数
        inputs: 入力配列（現在の精度モードでテンソル化される）
        eps: 中心差分の幅（省略時は精度モードに応じて決定）
        sample: 検査する座標数の上限（省略時は全座標）
        rng: sample 指定時の座標選択用

    Returns:
        GradCheckResult: 検査した座標の解析的勾配・数値勾配と相対誤差
    """
    dtype = default_dtype()
    if eps is None:
        eps = EPS_64 if dtype == np.float64 else EPS_32
    arrays = [np.array(a, dtype=dtype, copy=True) for a in inputs]

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Graph() as graph:
        root = fn(*tensors)
    backward(root, graph)

    coords: List[Tuple[int, int]] = [(k, i) for k, a in enumerate(arrays) for i in range(a.size)]
    if sample is not None and sample < len(coords):
        rng = rng or np.random.default_rng(0)
        chosen = np.sort(rng.choice(len(coords), size=sample, replace=False))
        coords = [coords[c] for c in chosen]

    analytic = np.empty(len(coords), dtype=np.float64)
    numeric = np.empty(len(coords), dtype=np.float64)
    for n, (k, i) in enumerate(coords):
        grad = tensors[k].grad
        analytic[n] = 0.0 if grad is None else float(grad.reshape(-1)[i])
        numeric[n] = _central_difference(fn, arrays, k, i, eps)

    error = relative_error(analytic, numeric)
    logger.debug(f"勾配チェック: 座標数={len(coords)}, 相対誤差={error:.3e}")
    return GradCheckResult(analytic=analytic, numeric=numeric, relative_error=error)


def _central_difference(
    fn: Callable[..., Tensor],
    arrays: List[np.ndarray],
    k: int,
    i: int,
    eps: float
) -> float:
    values = []
    for delta in (eps, -eps):
        perturbed = arrays[k].copy()
        perturbed.reshape(-1)[i] += delta
        args = [Tensor(perturbed if j == k else a) for j, a in enumerate(arrays)]
        values.append(float(np.asarray(fn(*args).data, dtype=np.float64).reshape(-1)[0]))
    return (values[0] - values[1]) / (2.0 * eps)
