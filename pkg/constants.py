"""
定数モジュール

アプリケーション全体で使用する定数を定義
"""
from enum import Enum, IntEnum


class PrivacyLevel(IntEnum):
    """解像度ベースのプライバシーレベル（値が大きいほど強い）"""
    NONE = 0
    WEAK = 1
    STRONG = 2

    @classmethod
    def parse(cls, name: str) -> "PrivacyLevel":
        """'none' / 'weak' / 'strong' を列挙値に変換"""
        try:
            return cls[name.strip().upper()]
        except KeyError as e:
            raise ValueError(f"不明なプライバシーレベル: {name}") from e


class Provenance(str, Enum):
    """データ来歴タグ"""
    PUBLIC = "public"
    PRIVATE = "private"
    SYNTHETIC = "synthetic"


class Task(str, Enum):
    """認識タスク"""
    HAND_HYGIENE = "hand_hygiene"
    ICU = "icu"
    SR_CORPUS = "sr_corpus"


class AppConstants:
    """アプリケーション定数"""

    VERSION = "1.0.0"
    APP_NAME = "privacy-depth-vision"
    LOG_DIR_NAME = "PrivacyDepthVision"


class DepthConstants:
    """デプスセンサーとエンコーディングの定数"""

    # センサーの動作範囲（メートル）
    MIN_DEPTH_M = 0.8
    MAX_DEPTH_M = 4.0

    # 16bit チャンネルはミリメートル単位、0 は無反射
    MM_PER_METER = 1000
    NO_RETURN = 0
    MAX_RAW = 65535

    # パイプラインの原画像サイズ
    ORIGINAL_SIDE = 224

    FRAME_EXTENSIONS = ('.pgm', '.png')


class PrivacyConstants:
    """プライバシー閾値"""

    STRONG_THRESHOLD = 15  # 顔特徴が判別不能になる目安
    WEAK_THRESHOLD = 56    # 顔領域が最大 56x56 に収まる


class ResampleConstants:
    """バイキュービック補間の定数"""

    KEYS_A = -0.5
    KERNEL_SUPPORT = 2.0


class CheckpointConstants:
    """チェックポイント形式"""

    MAGIC = b"PVST"
    VERSION = 1
    KIND_DCSCN = "dcscn"
    KIND_CLASSIFIER = "classifier"


class ManifestConstants:
    """マニフェスト形式"""

    FORMAT_VERSION = 1
    HEADER_KIND = "manifest"
    SPLIT_TRAIN = "train"
    SPLIT_TEST = "test"
    FILE_SUFFIX = ".jsonl"


class TaskClasses:
    """タスクごとのクラス名（インデックス順）"""

    HAND_HYGIENE = ("no_dispenser_use", "dispenser_use")
    ICU = ("background", "get_in_bed", "get_out_of_bed", "get_in_chair", "get_out_of_chair")

    # 手指衛生データセットの陽性率（11,994 / 113,379）
    OBSERVED_POSITIVE = 11994
    OBSERVED_TOTAL = 113379

    @classmethod
    def for_task(cls, task: str) -> tuple:
        if task == Task.HAND_HYGIENE.value:
            return cls.HAND_HYGIENE
        if task == Task.ICU.value:
            return cls.ICU
        return ()


class ReportConstants:
    """レポートの行順序と書式"""

    # (次元, DCSCN) の表示順
    ROW_ORDER = ((224, False), (56, False), (56, True), (14, False), (14, True))
    CSV_NAME = "report.csv"
    TEXT_NAME = "report.txt"
    PDF_NAME = "report.pdf"
    UNDEFINED = "NA"

    LOG_SEPARATOR_MAJOR = "=" * 60
    LOG_SEPARATOR_MINOR = "-" * 60
