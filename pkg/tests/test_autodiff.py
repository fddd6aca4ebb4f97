"""
テンソル・演算・自動微分のテスト
"""
import os
import sys

import numpy as np
import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from autodiff import ops
from autodiff.gradcheck import check_gradients, relative_error
from autodiff.optim import AdamState, adam_step
from autodiff.tensor import Graph, Tensor, backward, default_dtype, float64_mode
from exceptions import GraphError, NonFiniteError, ShapeError

TOLERANCE_64 = 1e-6


def _target_loss(op):
    """op の出力と固定ターゲットの MSE をスカラーにする"""
    cache = {}

    def fn(*tensors):
        out = op(*tensors)
        if "target" not in cache:
            cache["target"] = np.random.default_rng(99).normal(size=out.shape)
        return ops.mse_loss(out, ops.constant(cache["target"]))

    return fn


def _signed(rng: np.random.Generator, shape) -> np.ndarray:
    """0 から離れた値（ReLU / PReLU の折れ点を差分がまたがないように）"""
    return rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _case_add(rng):
    shape = tuple(int(n) for n in rng.integers(1, 4, size=2))
    return _target_loss(ops.add), [rng.normal(size=shape), rng.normal(size=shape)]


def _case_sum_all(rng):
    return ops.sum_all, [rng.normal(size=(2, int(rng.integers(1, 5))))]


def _case_relu(rng):
    return _target_loss(ops.relu), [_signed(rng, (2, int(rng.integers(1, 6))))]


def _case_prelu(rng):
    c = int(rng.integers(1, 4))
    return _target_loss(ops.prelu), [_signed(rng, (1, c, 2, 2)), rng.uniform(0.1, 0.5, size=c)]


def _case_conv2d(rng):
    ci, co = (int(n) for n in rng.integers(1, 3, size=2))
    k = int(rng.choice([1, 3]))
    side = int(rng.integers(k, k + 3))
    stride = int(rng.integers(1, 3))
    fn = _target_loss(lambda x, w, b: ops.conv2d(x, w, b, stride=stride, zero_padding=k // 2))
    return fn, [rng.normal(size=(1, ci, side, side)), rng.normal(size=(co, ci, k, k)), rng.normal(size=co)]


def _case_depth_to_space(rng):
    r = int(rng.integers(1, 3))
    return _target_loss(lambda t: ops.depth_to_space(t, r)), [rng.normal(size=(1, r * r * int(rng.integers(1, 3)), 2, 2))]


def _case_space_to_depth(rng):
    r = int(rng.integers(1, 3))
    return _target_loss(lambda t: ops.space_to_depth(t, r)), [rng.normal(size=(1, int(rng.integers(1, 3)), 2 * r, 2 * r))]


def _case_concat_channels(rng):
    a, b = (int(n) for n in rng.integers(1, 3, size=2))
    fn = _target_loss(lambda x, y: ops.concat_channels([x, y]))
    return fn, [rng.normal(size=(1, a, 2, 3)), rng.normal(size=(1, b, 2, 3))]


def _case_global_avg_pool(rng):
    return _target_loss(ops.global_avg_pool), [rng.normal(size=(2, int(rng.integers(1, 4)), 3, 2))]


def _case_dense(rng):
    i, o = (int(n) for n in rng.integers(1, 5, size=2))
    return _target_loss(ops.dense), [rng.normal(size=(2, i)), rng.normal(size=(i, o)), rng.normal(size=o)]


def _case_group_norm(rng):
    groups = int(rng.choice([1, 2, 4]))
    fn = _target_loss(lambda x, g, b: ops.group_norm(x, g, b, groups=groups))
    return fn, [rng.normal(size=(2, 4, 2, 2)), rng.normal(size=4), rng.normal(size=4)]


def _case_bicubic_upsample(rng):
    h, w = (int(n) for n in rng.integers(2, 4, size=2))
    return _target_loss(lambda t: ops.bicubic_upsample_const(t, 4)), [rng.normal(size=(1, 1, h, w))]


def _case_mse_loss(rng):
    shape = (2, int(rng.integers(1, 5)))
    return ops.mse_loss, [rng.normal(size=shape), rng.normal(size=shape)]


def _case_cross_entropy(rng):
    batch, k = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    labels = rng.integers(0, k, size=batch)
    return (lambda z: ops.softmax_cross_entropy(z, labels)), [rng.normal(size=(batch, k))]


GRADIENT_CASES = {
    "add": _case_add,
    "sum_all": _case_sum_all,
    "relu": _case_relu,
    "prelu": _case_prelu,
    "conv2d": _case_conv2d,
    "depth_to_space": _case_depth_to_space,
    "space_to_depth": _case_space_to_depth,
    "concat_channels": _case_concat_channels,
    "global_avg_pool": _case_global_avg_pool,
    "dense": _case_dense,
    "group_norm": _case_group_norm,
    "bicubic_upsample_const": _case_bicubic_upsample,
    "mse_loss": _case_mse_loss,
    "softmax_cross_entropy": _case_cross_entropy,
}


class TestTensor:
    """Tensor のテスト"""

    def test_default_dtype_is_float32(self):
        """既定は32bit"""
        assert Tensor([1.0, 2.0]).data.dtype == np.float32

    def test_float64_mode(self):
        """64bitモードの内側だけ float64"""
        with float64_mode():
            assert default_dtype() == np.float64
            assert Tensor([1.0]).data.dtype == np.float64
        assert default_dtype() == np.float32

    def test_data_is_read_only(self):
        """生成後のデータは変更不可"""
        t = Tensor(np.zeros(3))
        with pytest.raises(ValueError):
            t.data[0] = 1.0

    def test_numpy_returns_copy(self):
        """numpy() はコピー"""
        t = Tensor(np.ones(2))
        copy = t.numpy()
        copy[0] = 5.0
        assert t.data[0] == 1.0

    def test_non_finite_rejected(self):
        """NaN を含むテンソルは作れない"""
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan])


class TestBackward:
    """逆伝播のテスト"""

    def test_sum_gradient_is_ones(self):
        """sum_all の勾配は全要素1"""
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Graph() as graph:
            y = ops.sum_all(x)
        backward(y, graph)
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_shared_input_accumulates(self):
        """同じテンソルを2回使うと勾配が加算される"""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Graph() as graph:
            y = ops.sum_all(ops.add(x, x))
        backward(y, graph)
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_replayed_backward_is_bitwise_identical(self):
        """同じグラフを2回逆伝播しても勾配はビット単位で一致"""
        rng = np.random.default_rng(13)
        x = Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=4), requires_grad=True)
        target = ops.constant(rng.normal(size=(2, 4, 6, 6)))
        with Graph() as graph:
            loss = ops.mse_loss(ops.relu(ops.conv2d(x, w, b, zero_padding=1)), target)
        first = backward(loss, graph)
        second = backward(loss, graph)
        assert first.keys() == second.keys()
        for key in first:
            assert first[key].tobytes() == second[key].tobytes()

    def test_non_scalar_root(self):
        """スカラー以外の root はエラー"""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Graph() as graph:
            y = ops.add(x, x)
        with pytest.raises(GraphError):
            backward(y, graph)

    def test_root_without_grad(self):
        """勾配不要の root はエラー"""
        x = Tensor([1.0, 2.0])
        with Graph() as graph:
            y = ops.sum_all(x)
        with pytest.raises(GraphError):
            backward(y, graph)

    def test_no_graph_records_nothing(self):
        """グラフの外で実行した演算は記録されない"""
        graph = Graph()
        x = Tensor([1.0], requires_grad=True)
        ops.sum_all(x)
        assert len(graph) == 0

    def test_nested_activation_rejected(self):
        """同じグラフの入れ子有効化はエラー"""
        graph = Graph()
        with graph:
            with pytest.raises(GraphError):
                graph.__enter__()


class TestOps:
    """各演算の順伝播のテスト"""

    def test_relu(self):
        out = ops.relu(Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_prelu_per_channel(self):
        """チャンネルごとの傾き"""
        x = Tensor(np.array([[[[-2.0]], [[-2.0]]]]))
        out = ops.prelu(x, Tensor([0.5, 0.25]))
        np.testing.assert_allclose(out.data.reshape(-1), [-1.0, -0.5])

    def test_prelu_slope_length_mismatch(self):
        """傾きの長さがチャンネル数と異なるとエラー"""
        with pytest.raises(ShapeError):
            ops.prelu(Tensor(np.zeros((1, 3, 2, 2))), Tensor([0.1, 0.1]))

    def test_conv2d_identity_kernel(self):
        """中央だけ1の3x3カーネルはゼロパディング1で恒等写像"""
        x = np.random.default_rng(0).normal(size=(1, 1, 5, 5))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out = ops.conv2d(Tensor(x), Tensor(w), Tensor([0.0]), zero_padding=1)
        np.testing.assert_allclose(out.data, x.astype(np.float32))

    def test_conv2d_output_shape_with_stride(self):
        """stride 2 の出力サイズ"""
        out = ops.conv2d(Tensor(np.zeros((2, 3, 8, 8))), Tensor(np.zeros((4, 3, 3, 3))), Tensor(np.zeros(4)), stride=2, zero_padding=1)
        assert out.shape == (2, 4, 4, 4)

    @pytest.mark.parametrize("w_shape,b_shape,dimension", [
        ((1, 1, 2, 2), (1,), "kernel"),
        ((1, 2, 3, 3), (1,), "in_channels"),
        ((2, 1, 3, 3), (1,), "out_channels"),
    ])
    def test_conv2d_shape_errors(self, w_shape, b_shape, dimension):
        """形状エラーには問題の次元名が入る"""
        with pytest.raises(ShapeError) as exc_info:
            ops.conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros(w_shape)), Tensor(np.zeros(b_shape)))
        assert exc_info.value.dimension == dimension

    def test_conv2d_input_too_small(self):
        """パディングなしでカーネルより小さい入力"""
        with pytest.raises(ShapeError) as exc_info:
            ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))), Tensor([0.0]))
        assert exc_info.value.dimension == "height"

    def test_depth_to_space_inverse(self):
        """space_to_depth は depth_to_space の逆変換"""
        x = np.arange(2 * 8 * 3 * 3, dtype=np.float64).reshape(2, 8, 3, 3)
        shuffled = ops.depth_to_space(Tensor(x), 2)
        assert shuffled.shape == (2, 2, 6, 6)
        np.testing.assert_array_equal(ops.space_to_depth(shuffled, 2).data, x.astype(np.float32))

    def test_depth_to_space_layout(self):
        """出力 (y*r+i, x*r+j) はチャンネル i*r+j から来る"""
        x = np.arange(4, dtype=np.float64).reshape(1, 4, 1, 1)
        out = ops.depth_to_space(Tensor(x), 2).data[0, 0]
        np.testing.assert_array_equal(out, [[0.0, 1.0], [2.0, 3.0]])

    def test_concat_channels_mismatch(self):
        """空間サイズが異なる連結はエラー"""
        with pytest.raises(ShapeError):
            ops.concat_channels([Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3)))])

    def test_group_norm_statistics(self):
        """gamma=1, beta=0 ならグループごとに平均0・分散1"""
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(2, 4, 5, 5))
        with float64_mode():
            out = ops.group_norm(Tensor(x), Tensor(np.ones(4)), Tensor(np.zeros(4)), groups=2).data
        grouped = out.reshape(2, 2, -1)
        np.testing.assert_allclose(grouped.mean(axis=2), 0.0, atol=1e-10)
        np.testing.assert_allclose(grouped.var(axis=2), 1.0, atol=1e-3)

    def test_group_norm_bad_groups(self):
        with pytest.raises(ShapeError):
            ops.group_norm(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.ones(3)), Tensor(np.zeros(3)), groups=2)

    def test_cross_entropy_uniform_logits(self):
        """ロジットが全て等しいと損失は ln k"""
        loss = ops.softmax_cross_entropy(Tensor(np.zeros((3, 5))), [0, 1, 4])
        assert loss.item() == pytest.approx(np.log(5.0), rel=1e-6)

    def test_cross_entropy_label_out_of_range(self):
        with pytest.raises(ShapeError):
            ops.softmax_cross_entropy(Tensor(np.zeros((2, 2))), [0, 2])

    def test_mse_loss_value(self):
        loss = ops.mse_loss(Tensor([1.0, 3.0]), Tensor([0.0, 0.0]))
        assert loss.item() == pytest.approx(5.0)

    def test_conv2d_linear_in_input(self):
        """バイアス0なら conv(a*x + b*y) = a*conv(x) + b*conv(y)"""
        rng = np.random.default_rng(11)
        x, y = rng.normal(size=(2, 2, 3, 6, 6))
        with float64_mode():
            w = Tensor(rng.normal(size=(4, 3, 3, 3)))
            zero = Tensor(np.zeros(4))
            mixed = ops.conv2d(Tensor(2.5 * x - 0.75 * y), w, zero, zero_padding=1).data
            separate = 2.5 * ops.conv2d(Tensor(x), w, zero, zero_padding=1).data - 0.75 * ops.conv2d(Tensor(y), w, zero, zero_padding=1).data
        np.testing.assert_allclose(mixed, separate, rtol=1e-10, atol=1e-10)

    def test_cross_entropy_gradient_rows_sum_to_zero(self):
        """ロジットの勾配はサンプルごとに和が0"""
        with float64_mode():
            logits = Tensor(np.random.default_rng(12).normal(size=(6, 5)), requires_grad=True)
            with Graph() as graph:
                loss = ops.softmax_cross_entropy(logits, [0, 1, 2, 3, 4, 0])
            backward(loss, graph)
        np.testing.assert_allclose(logits.grad.sum(axis=1), 0.0, atol=1e-12)

    @pytest.mark.parametrize("r", [1, 2, 3])
    def test_pixel_shuffle_preserves_values(self, r):
        """depth_to_space / space_to_depth は値の多重集合を変えない"""
        x = np.random.default_rng(r).normal(size=(2, 2 * r * r, 3, 4))
        shuffled = ops.depth_to_space(Tensor(x), r).data
        np.testing.assert_array_equal(np.sort(shuffled.ravel()), np.sort(x.astype(np.float32).ravel()))
        unshuffled = ops.space_to_depth(Tensor(shuffled), r).data
        np.testing.assert_array_equal(np.sort(unshuffled.ravel()), np.sort(shuffled.ravel()))


class TestGradients:
    """有限差分による勾配チェック（64bit）"""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_conv2d(self, seed):
        rng = np.random.default_rng(seed)
        inputs = [rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)]
        with float64_mode():
            result = check_gradients(_target_loss(lambda x, w, b: ops.conv2d(x, w, b, stride=2, zero_padding=1)), inputs)
        assert result.passed(TOLERANCE_64)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_prelu(self, seed):
        rng = np.random.default_rng(seed)
        inputs = [rng.normal(size=(2, 3, 4, 4)), rng.uniform(0.1, 0.5, size=3)]
        with float64_mode():
            result = check_gradients(_target_loss(ops.prelu), inputs)
        assert result.passed(TOLERANCE_64)

    def test_relu(self):
        x = np.random.default_rng(3).normal(size=(2, 6))
        with float64_mode():
            result = check_gradients(_target_loss(ops.relu), [x])
        assert result.passed(TOLERANCE_64)

    def test_depth_to_space(self):
        x = np.random.default_rng(4).normal(size=(1, 8, 2, 3))
        with float64_mode():
            result = check_gradients(_target_loss(lambda t: ops.depth_to_space(t, 2)), [x])
        assert result.passed(TOLERANCE_64)

    def test_concat_channels(self):
        rng = np.random.default_rng(5)
        inputs = [rng.normal(size=(1, 2, 3, 3)), rng.normal(size=(1, 1, 3, 3))]
        with float64_mode():
            result = check_gradients(_target_loss(lambda a, b: ops.concat_channels([a, b])), inputs)
        assert result.passed(TOLERANCE_64)

    def test_group_norm(self):
        rng = np.random.default_rng(6)
        inputs = [rng.normal(size=(2, 4, 3, 3)), rng.normal(size=4), rng.normal(size=4)]
        with float64_mode():
            result = check_gradients(_target_loss(lambda x, g, b: ops.group_norm(x, g, b, groups=2)), inputs)
        assert result.passed(TOLERANCE_64)

    def test_dense_and_pool(self):
        rng = np.random.default_rng(7)
        inputs = [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(3, 5)), rng.normal(size=5)]
        with float64_mode():
            result = check_gradients(_target_loss(lambda x, w, b: ops.dense(ops.global_avg_pool(x), w, b)), inputs)
        assert result.passed(TOLERANCE_64)

    def test_bicubic_upsample(self):
        x = np.random.default_rng(8).normal(size=(1, 2, 3, 4))
        with float64_mode():
            result = check_gradients(_target_loss(lambda t: ops.bicubic_upsample_const(t, 4)), [x])
        assert result.passed(TOLERANCE_64)

    def test_cross_entropy(self):
        logits = np.random.default_rng(9).normal(size=(4, 5))
        labels = [0, 3, 4, 1]
        with float64_mode():
            result = check_gradients(lambda z: ops.softmax_cross_entropy(z, labels), [logits])
        assert result.passed(TOLERANCE_64)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(100))
    def test_conv2d_many_seeds(self, seed):
        """ランダムな形状で多数回チェック"""
        rng = np.random.default_rng(1000 + seed)
        ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3, 5]))
        side = int(rng.integers(k, k + 4))
        inputs = [rng.normal(size=(2, ci, side, side)), rng.normal(size=(co, ci, k, k)), rng.normal(size=co)]
        with float64_mode():
            result = check_gradients(_target_loss(lambda x, w, b: ops.conv2d(x, w, b, zero_padding=k // 2)), inputs)
        assert result.passed(TOLERANCE_64)

    @pytest.mark.parametrize("name", sorted(GRADIENT_CASES))
    def test_every_op_over_100_seeds(self, name):
        """各演算を 100 通りの乱数形状・値でチェック"""
        for seed in range(100):
            fn, inputs = GRADIENT_CASES[name](np.random.default_rng(seed))
            with float64_mode():
                result = check_gradients(fn, inputs)
            assert result.passed(TOLERANCE_64), f"{name} seed={seed}: 相対誤差 {result.relative_error:.3e}"

    def test_relative_error_zero_vectors(self):
        """両方ゼロなら相対誤差0"""
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


class TestAdam:
    """Adam のテスト"""

    def test_first_step_moves_by_lr(self):
        """バイアス補正により最初の更新幅はほぼ lr"""
        params = {"w": Tensor([1.0, -1.0], requires_grad=True, name="w")}
        new_params, state = adam_step(params, {"w": np.array([0.5, -2.0])}, AdamState(lr=0.1))
        np.testing.assert_allclose(new_params["w"].data, [0.9, -0.9], atol=1e-6)
        assert state.t == 1

    def test_missing_gradient_is_zero(self):
        """勾配がないパラメータは動かない"""
        params = {"w": Tensor([1.0], requires_grad=True)}
        new_params, _ = adam_step(params, {}, AdamState())
        np.testing.assert_array_equal(new_params["w"].data, [1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step({"w": Tensor([1.0, 2.0])}, {"w": np.zeros(3)}, AdamState())

    def test_minimizes_quadratic(self):
        """(w - 3)^2 を最小化"""
        params = {"w": Tensor([0.0], requires_grad=True)}
        state = AdamState(lr=0.1)
        target = ops.constant(np.array([3.0]))
        for _ in range(300):
            w = params["w"]
            with Graph() as graph:
                loss = ops.mse_loss(w, target)
            backward(loss, graph)
            params, state = adam_step(params, {"w": w.grad}, state)
        assert params["w"].item() == pytest.approx(3.0, abs=0.05)
