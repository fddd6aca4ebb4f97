"""
自動微分パッケージ

テンソル、計算グラフ、微分可能な演算、Adam、勾配チェックを提供する。
"""
from autodiff.optim import AdamState, adam_step
from autodiff.tensor import Graph, Tensor, backward, default_dtype, float64_mode

__all__ = [
    'AdamState',
    'Graph',
    'Tensor',
    'adam_step',
    'backward',
    'default_dtype',
    'float64_mode',
]
