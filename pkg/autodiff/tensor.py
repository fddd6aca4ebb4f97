"""
テンソルと計算グラフ

逆伝播（リバースモード自動微分）のための最小限のテンソル実装。
データは既定で32bit浮動小数点、勾配チェック時のみ64bitモードで動作する。
"""
import contextlib
import contextvars
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import GraphError, NonFiniteError

logger = logging.getLogger(__name__)

# 演算ごとの入力勾配（入力が勾配不要なら None）
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_DTYPE: contextvars.ContextVar = contextvars.ContextVar("autodiff_dtype", default=np.float32)
_ACTIVE_GRAPH: contextvars.ContextVar = contextvars.ContextVar("autodiff_graph", default=None)


def default_dtype() -> np.dtype:
    """現在の演算精度を取得"""
    return np.dtype(_DTYPE.get())


@contextlib.contextmanager
def float64_mode() -> Iterator[None]:
    """
    64bitチェックモード

    有限差分による勾配チェックは32bitではノイズが大きいため、
    このコンテキスト内で生成されるテンソルは float64 になる。
    """
    token = _DTYPE.set(np.float64)
    try:
        yield
    finally:
        _DTYPE.reset(token)


def check_finite(array: np.ndarray, op: str) -> np.ndarray:
    """
    NaN/Inf を演算境界で検出する

    Raises:
        NonFiniteError: 非有限値が含まれる場合
    """
    if not np.isfinite(array).all():
        count = int(array.size - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(op, count=count)
    return array


class Tensor:
    """
    N次元浮動小数点配列

    画像は (batch, channels, height, width) の順。
    データは生成後に変更しない（勾配バッファのみ更新される）。
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None
    ) -> None:
        array = np.array(data, dtype=dtype or default_dtype(), copy=True)
        if array.ndim == 0:
            array = array.reshape(())
        check_finite(array, name or "Tensor")
        array.setflags(write=False)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool, op: str) -> "Tensor":
        """演算結果をコピーせずにラップする"""
        check_finite(array, op)
        tensor = cls.__new__(cls)
        array.setflags(write=False)
        tensor.data = array
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """データのコピーを返す"""
        return np.array(self.data, copy=True)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    """実行済み演算の記録"""
    index: int
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Graph:
    """
    実行順に記録された演算列

    `with Graph() as graph:` の内側で実行した演算のうち、
    勾配を必要とする入力を持つものだけが記録される。
    """
    nodes: List[Node] = field(default_factory=list)
    _token: Optional[contextvars.Token] = field(default=None, repr=False)

    def __enter__(self) -> "Graph":
        if self._token is not None:
            raise GraphError("同じグラフを入れ子で有効化することはできません")
        self._token = _ACTIVE_GRAPH.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._token is not None:
            _ACTIVE_GRAPH.reset(self._token)
            self._token = None

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        self.nodes.append(Node(len(self.nodes), op, tuple(inputs), output, backward))

    def __len__(self) -> int:
        return len(self.nodes)


def active_graph() -> Optional[Graph]:
    """現在有効なグラフ（なければ None）"""
    return _ACTIVE_GRAPH.get()


def make_output(op: str, array: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """
    演算結果のテンソルを作成し、必要なら有効なグラフに記録する

    Args:
        op: 演算名
        array: 出力データ
        inputs: 入力テンソル（backward の戻り値と同じ順序）
        backward: 出力勾配から入力勾配を計算する関数
    """
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(array.astype(default_dtype(), copy=False), requires_grad, op)
    graph = active_graph()
    if requires_grad and graph is not None:
        graph.record(op, inputs, out, backward)
    return out


def backward(root: Tensor, graph: Graph) -> Dict[int, np.ndarray]:
    """
    根（スカラー）から逆順に連鎖律を適用する

    各ノードはちょうど1回だけ訪問される。勾配の加算順はノードの記録順で固定。

    Args:
        root: スカラーの出力テンソル
        graph: root を生成した計算グラフ

    Returns:
        Dict[int, np.ndarray]: id(tensor) -> 勾配（葉テンソルの .grad にも加算される）

    Raises:
        GraphError: root がスカラーでない、またはグラフに含まれない場合
    """
    if root.size != 1:
        raise GraphError(f"backward の root はスカラーである必要があります: shape={root.shape}")

    produced = {id(node.output) for node in graph.nodes}
    if root.requires_grad and id(root) not in produced:
        # 葉テンソルそのものが root
        root.grad = np.ones_like(root.data) if root.grad is None else root.grad + 1.0
        return {id(root): np.ones_like(root.data)}
    if not root.requires_grad:
        raise GraphError("root が勾配を必要とする入力に依存していません")

    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    leaves: Dict[int, Tensor] = {}

    for node in reversed(graph.nodes):
        grad_out = grads.pop(id(node.output), None)
        if grad_out is None:
            continue
        input_grads = node.backward(grad_out)
        for tensor, grad_in in zip(node.inputs, input_grads):
            if grad_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad_in
            else:
                grads[key] = grad_in
            if key not in produced:
                leaves[key] = tensor

    results: Dict[int, np.ndarray] = {}
    for key, tensor in leaves.items():
        grad = check_finite(grads[key].astype(tensor.data.dtype, copy=False), f"backward:{tensor.name or 'leaf'}")
        tensor.grad = grad if tensor.grad is None else tensor.grad + grad
        results[key] = grad
    logger.debug(f"逆伝播完了: ノード数={len(graph.nodes)}, 葉テンソル数={len(leaves)}")
    return results
