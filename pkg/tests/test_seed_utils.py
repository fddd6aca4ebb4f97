"""
派生シードのテスト
"""
import hashlib
import os
import sys

import numpy as np

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from seed_utils import derive_seed, stage_rng


class TestDeriveSeed:
    def test_matches_sha256_prefix(self):
        """sha256 の先頭8バイトをリトルエンディアンで読む"""
        digest = hashlib.sha256(b"42/synth").digest()
        assert derive_seed(42, "synth") == int.from_bytes(digest[:8], "little")

    def test_deterministic_and_distinct(self):
        assert derive_seed(0, "train-sr/4") == derive_seed(0, "train-sr/4")
        assert derive_seed(0, "train-sr/4") != derive_seed(0, "train-sr/16")
        assert derive_seed(0, "synth") != derive_seed(1, "synth")

    def test_in_uint64_range(self):
        assert 0 <= derive_seed(123, "x") < 2 ** 64


class TestStageRng:
    def test_same_stage_same_stream(self):
        a = stage_rng(5, "augment").uniform(size=4)
        b = stage_rng(5, "augment").uniform(size=4)
        np.testing.assert_array_equal(a, b)
