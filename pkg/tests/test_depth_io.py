"""
デプスフレーム入出力のテスト
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from constants import PrivacyLevel, Provenance
from depth_io import decode_pgm, encode_pgm, frame_size, read_frame, write_frame
from exceptions import FrameError, PathNotFoundError, PrivacyViolationError
from image_resample import DepthFrame, normalize_depth
from tests.conftest import make_raw_frame


class TestPgm:
    """PGM エンコーディングのテスト"""

    def test_header_format(self):
        """P5、幅 高さ、maxval 65535"""
        blob = encode_pgm(np.zeros((2, 3), dtype=np.uint16))
        assert blob.startswith(b"P5\n3 2\n65535\n")
        assert len(blob) == len(b"P5\n3 2\n65535\n") + 2 * 3 * 2

    def test_big_endian(self):
        """画素はビッグエンディアン"""
        blob = encode_pgm(np.array([[0x0102]], dtype=np.uint16))
        assert blob.endswith(b"\x01\x02")

    def test_decode_with_comment(self):
        """ヘッダー内のコメントは読み飛ばす"""
        blob = b"P5\n# depth\n1 1\n65535\n\x00\x10"
        assert decode_pgm(blob)[0, 0] == 16

    def test_decode_8bit_rejected(self):
        with pytest.raises(FrameError):
            decode_pgm(b"P5\n1 1\n255\n\x00")

    def test_decode_truncated(self):
        with pytest.raises(FrameError):
            decode_pgm(b"P5\n2 2\n65535\n\x00\x00")

    def test_decode_bad_magic(self):
        with pytest.raises(FrameError):
            decode_pgm(b"P2\n1 1\n65535\n0")


class TestReadWrite:
    """read_frame / write_frame のテスト"""

    @pytest.mark.parametrize("suffix", [".pgm", ".png"])
    def test_roundtrip(self, temp_dir, suffix):
        """生の uint16 はビット単位で保存される"""
        raw = make_raw_frame(20, seed=1)
        path = write_frame(Path(temp_dir) / f"f{suffix}", DepthFrame(raw), PrivacyLevel.NONE)
        np.testing.assert_array_equal(read_frame(path).data, raw)
        assert frame_size(path) == (20, 20)

    def test_normalized_frame_written_as_mm(self, temp_dir):
        """正規化済みフレームは mm に戻して保存"""
        raw = np.array([[800, 2400], [4000, 1600]], dtype=np.uint16)
        path = write_frame(Path(temp_dir) / "n.pgm", normalize_depth(DepthFrame(raw)), PrivacyLevel.NONE)
        np.testing.assert_array_equal(read_frame(path).data, raw)

    def test_gate_blocks_before_write(self, temp_dir):
        """ゲート違反時はファイルを作らない"""
        path = Path(temp_dir) / "sub" / "big.pgm"
        with pytest.raises(PrivacyViolationError):
            write_frame(path, DepthFrame(make_raw_frame(56)), PrivacyLevel.STRONG)
        assert not path.exists()
        assert not path.parent.exists()

    def test_pre_capture_exempt(self, temp_dir):
        """撮影前シミュレーションの合成原画像はゲート対象外"""
        path = write_frame(
            Path(temp_dir) / "orig.pgm",
            DepthFrame(make_raw_frame(224)),
            PrivacyLevel.STRONG,
            pre_capture_source=True
        )
        assert frame_size(path) == (224, 224)

    def test_pre_capture_requires_synthetic(self, temp_dir):
        """合成以外の来歴は免除できない"""
        frame = DepthFrame(make_raw_frame(224), provenance=Provenance.PRIVATE)
        with pytest.raises(FrameError):
            write_frame(Path(temp_dir) / "p.pgm", frame, PrivacyLevel.STRONG, pre_capture_source=True)

    def test_unsupported_suffix(self, temp_dir):
        with pytest.raises(FrameError):
            write_frame(Path(temp_dir) / "f.bmp", DepthFrame(make_raw_frame(4)), PrivacyLevel.NONE)

    def test_read_missing(self, temp_dir):
        with pytest.raises(PathNotFoundError):
            read_frame(Path(temp_dir) / "none.pgm")

    def test_read_provenance(self, temp_dir):
        """読み込み時に来歴を指定できる"""
        path = write_frame(Path(temp_dir) / "f.pgm", DepthFrame(make_raw_frame(4)), PrivacyLevel.NONE)
        assert read_frame(path, provenance=Provenance.PUBLIC).provenance == Provenance.PUBLIC
