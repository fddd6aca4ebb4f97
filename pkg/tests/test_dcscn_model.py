"""
DCSCN 超解像モデルのテスト
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from autodiff import ops
from autodiff.gradcheck import check_gradients
from autodiff.tensor import Tensor, float64_mode
from checkpoint_io import save_checkpoint
from constants import PrivacyLevel
from dcscn_model import (
    SrConfig,
    bicubic_baseline,
    build_dcscn,
    dcscn_forward,
    load_sr_model,
    save_sr_model,
    sr_forward,
)
from exceptions import CheckpointError, ConfigurationError, FrameError
from image_resample import DepthFrame


def _tiny_config(scale: int = 4) -> SrConfig:
    return SrConfig(
        scale=scale,
        feature_layers=2,
        feature_filters=(4, 3),
        nin_a1_filters=3,
        nin_b1_filters=2,
        nin_b2_filters=2,
        patch_size=16 if scale == 4 else 64
    )


def _lr_frame(side: int, seed: int = 0) -> DepthFrame:
    return DepthFrame(np.random.default_rng(seed).uniform(0.1, 0.9, size=(side, side)).astype(np.float32))


class TestSrConfig:
    """構成の検証"""

    def test_invalid_scale(self):
        with pytest.raises(ConfigurationError) as exc_info:
            SrConfig(scale=8)
        assert exc_info.value.config_key == "sr.scale"

    def test_filters_must_not_increase(self):
        with pytest.raises(ConfigurationError) as exc_info:
            SrConfig(feature_layers=2, feature_filters=(4, 8))
        assert exc_info.value.config_key == "sr.feature_filters"

    def test_filters_length(self):
        with pytest.raises(ConfigurationError):
            SrConfig(feature_layers=3, feature_filters=(4, 3))

    def test_patch_size_divisible(self):
        with pytest.raises(ConfigurationError) as exc_info:
            SrConfig(scale=4, patch_size=30)
        assert exc_info.value.config_key == "sr.patch_size"

    def test_from_dict_unknown_key(self):
        with pytest.raises(ConfigurationError):
            SrConfig.from_dict({"scale": 4, "depth": 3})

    def test_stage_factors(self):
        assert _tiny_config(4).stage_factors == (4,)
        assert _tiny_config(16).stage_factors == (4, 4)


class TestForward:
    """順伝播のテスト"""

    @pytest.mark.parametrize("scale,side", [(4, 6), (16, 2)])
    def test_output_shape(self, scale, side):
        model = build_dcscn(_tiny_config(scale), seed=0)
        out = dcscn_forward(model, Tensor(np.zeros((2, 1, side, side))))
        assert out.shape == (2, 1, side * scale, side * scale)

    @pytest.mark.parametrize("scale,side", [(4, 14), (16, 3)])
    def test_untrained_matches_bicubic(self, scale, side):
        """再構成層がゼロ初期化なので未学習モデルはバイキュービックと完全一致"""
        model = build_dcscn(_tiny_config(scale), seed=1)
        frame = _lr_frame(side, seed=2)
        out = sr_forward(model, frame)
        baseline = bicubic_baseline(frame, scale)
        assert float(np.max(np.abs(out.data - baseline.data))) == 0.0

    def test_records_origin_level(self):
        """超解像後も元の低解像度のレベルを保持"""
        out = sr_forward(build_dcscn(_tiny_config(16)), _lr_frame(14))
        assert out.width == 224
        assert out.derived_from_privacy_level == PrivacyLevel.STRONG

    def test_requires_normalized(self):
        raw = DepthFrame(np.full((4, 4), 1000, dtype=np.uint16))
        with pytest.raises(FrameError):
            sr_forward(build_dcscn(_tiny_config()), raw)

    def test_output_side_limit(self):
        """出力が 224 を超える入力は拒否"""
        with pytest.raises(FrameError):
            sr_forward(build_dcscn(_tiny_config(4)), _lr_frame(57))

    def test_deterministic_init(self):
        a = build_dcscn(_tiny_config(), seed=5).arrays()
        b = build_dcscn(_tiny_config(), seed=5).arrays()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_recon_zero_initialized(self):
        model = build_dcscn(_tiny_config(16))
        assert not np.any(model.params["s0.recon.w"].data)
        assert not np.any(model.params["s1.recon.w"].data)


class TestGradient:
    """ネットワーク全体の勾配チェック（64bit、座標をサンプリング）"""

    def test_end_to_end(self):
        config = _tiny_config(4)
        model = build_dcscn(config, seed=3)
        rng = np.random.default_rng(4)
        params = dict(model.params)
        params["s0.recon.w"] = Tensor(rng.normal(scale=0.1, size=params["s0.recon.w"].shape), requires_grad=True)
        names = sorted(params)
        arrays = [params[n].numpy().astype(np.float64) for n in names]
        lr = rng.uniform(0.0, 1.0, size=(1, 1, 2, 2))
        target = ops.constant(rng.uniform(0.0, 1.0, size=(1, 1, 8, 8)))

        def loss(*tensors):
            candidate = model.with_params(dict(zip(names, tensors)))
            return ops.mse_loss(dcscn_forward(candidate, Tensor(lr)), target)

        with float64_mode():
            result = check_gradients(loss, arrays, sample=30, rng=np.random.default_rng(0))
        assert result.passed(1e-5)


class TestCheckpoint:
    """保存・読み込みのテスト"""

    def test_roundtrip(self, temp_dir):
        model = build_dcscn(_tiny_config(16), seed=7)
        path = save_sr_model(model, Path(temp_dir) / "sr.pvst", {"steps": 0})
        loaded = load_sr_model(path)
        assert loaded.config == model.config
        for name, array in model.arrays().items():
            np.testing.assert_array_equal(loaded.params[name].data, array)

    def test_loaded_model_same_output(self, temp_dir):
        """読み込んだモデルの出力は保存前と同じ"""
        model = build_dcscn(_tiny_config(4), seed=8)
        loaded = load_sr_model(save_sr_model(model, Path(temp_dir) / "sr.pvst"))
        frame = _lr_frame(6, seed=9)
        np.testing.assert_array_equal(sr_forward(model, frame).data, sr_forward(loaded, frame).data)

    def test_wrong_kind(self, temp_dir):
        path = save_checkpoint(Path(temp_dir) / "c.pvst", "classifier", {}, {})
        with pytest.raises(CheckpointError):
            load_sr_model(path)
