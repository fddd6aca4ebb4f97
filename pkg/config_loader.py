"""
設定ファイル読み込みモジュール

このモジュールは、JSON形式の設定ファイルを読み込み、
パイプライン全体で使用する設定情報を提供します。
デフォルト設定（config.json）の上にユーザー設定をマージし、
最終的に不変の RunConfig に変換します。
"""
import copy
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple, TypeVar, Union

from classifier_model import ClsConfig
from constants import DepthConstants, PrivacyLevel, ReportConstants, Task, TaskClasses
from dcscn_model import SrConfig
from exceptions import ConfigurationError
from recognition import ClsHyper
from seed_utils import derive_seed
from sr_trainer import SrHyper
from synth.dataset_generator import GenSpec

# ロガーの設定
logger = logging.getLogger(__name__)

# 型変数定義
T = TypeVar('T')

# 任意のキーを許可するセクション（キーが次元やスケールの数値文字列）
_OPEN_SECTIONS = {("dcscn",), ("sr", "patch_sizes")}
_COMMENT_KEY = "_comment"


@dataclass(frozen=True)
class RunConfig:
    """
    パイプライン1回分の実行設定（不変）

    Attributes:
        task: 認識タスク（hand_hygiene / icu）
        seed: マスターシード
        dims: 評価する解像度
        dcscn_dims: 超解像ありのセルも評価する解像度
        policy: 永続化するフレームに要求するプライバシーレベル
        strong_threshold: Strong の辺の上限
        weak_threshold: Weak の辺の上限
        work_dir: 作業ディレクトリ（データ、チェックポイント、レポート）
        synth / sr / cls: 各ステージのハイパーパラメータ
    """
    task: str
    seed: int
    dims: Tuple[int, ...]
    dcscn_dims: FrozenSet[int]
    policy: PrivacyLevel
    strong_threshold: int
    weak_threshold: int
    work_dir: Path
    synth: Mapping[str, Any] = field(default_factory=dict)
    sr: Mapping[str, Any] = field(default_factory=dict)
    cls: Mapping[str, Any] = field(default_factory=dict)

    # ---- ディレクトリ構成 ----

    @property
    def data_dir(self) -> Path:
        return self.work_dir / "data" / self.task

    @property
    def sr_corpus_dir(self) -> Path:
        return self.work_dir / "data" / Task.SR_CORPUS.value

    def derived_dir(self, dim: int) -> Path:
        return self.work_dir / "data" / f"{self.task}_{dim}"

    @property
    def checkpoint_dir(self) -> Path:
        return self.work_dir / "checkpoints"

    @property
    def report_dir(self) -> Path:
        return self.work_dir / "reports"

    # ---- 実験セル ----

    def cells(self) -> List[Tuple[int, bool]]:
        """
        評価する (次元, 超解像) セルをレポートの行順で返す

        224 は超解像の対象外。
        """
        wanted = {(d, False) for d in self.dims}
        wanted |= {(d, True) for d in self.dims if d in self.dcscn_dims and d < DepthConstants.ORIGINAL_SIDE}
        ordered = [cell for cell in ReportConstants.ROW_ORDER if cell in wanted]
        extra = sorted(wanted - set(ordered), key=lambda c: (-c[0], c[1]))
        return ordered + extra

    @staticmethod
    def sr_scale(dim: int) -> int:
        return DepthConstants.ORIGINAL_SIDE // dim

    def sr_scales(self) -> List[int]:
        """学習が必要な超解像モデルの倍率（昇順）"""
        return sorted({self.sr_scale(d) for d, dcscn in self.cells() if dcscn})

    # ---- 各ステージの設定 ----

    def gen_spec(self, task: Optional[str] = None) -> GenSpec:
        """データ生成仕様（task=sr_corpus なら超解像コーパス）"""
        task = task or self.task
        if task == Task.SR_CORPUS.value:
            return GenSpec(
                task=task,
                output_dir=str(self.sr_corpus_dir),
                num_frames=int(self.sr["corpus_frames"]),
                split=float(self.sr["corpus_split"]),
                seed=derive_seed(self.seed, "synth/sr_corpus"),
                noise_sigma_m=float(self.synth["noise_sigma_m"]),
                dropout_rate=float(self.synth["dropout_rate"]),
                frame_format=str(self.synth["frame_format"])
            )
        return GenSpec.from_dict({**self.synth, "task": task, "output_dir": str(self.data_dir), "seed": derive_seed(self.seed, "synth")})

    def sr_config(self, scale: int) -> SrConfig:
        patch_sizes = self.sr["patch_sizes"]
        if str(scale) not in patch_sizes:
            raise ConfigurationError(f"倍率 {scale} のパッチサイズがありません", config_key=f"sr.patch_sizes.{scale}")
        return SrConfig.from_dict({**self.sr["model"], "scale": scale, "patch_size": int(patch_sizes[str(scale)])})

    def sr_hyper(self, scale: int) -> SrHyper:
        return SrHyper(
            lr=float(self.sr["lr"]),
            batch=int(self.sr["batch"]),
            steps=int(self.sr["steps"]),
            seed=derive_seed(self.seed, f"train-sr/{scale}"),
            log_every=int(self.sr["log_every"])
        )

    @staticmethod
    def cell_stage(dim: int, dcscn: bool) -> str:
        return f"train-cls/{dim}/{'dcscn' if dcscn else 'bicubic'}"

    def cls_config(self, dim: int, dcscn: bool) -> ClsConfig:
        return ClsConfig.from_dict({
            **self.cls["model"],
            "num_classes": len(TaskClasses.for_task(self.task)),
            "seed": derive_seed(self.seed, f"{self.cell_stage(dim, dcscn)}/init")
        })

    def cls_hyper(self, dim: int, dcscn: bool) -> ClsHyper:
        return ClsHyper(
            lr=float(self.cls["lr"]),
            batch=int(self.cls["batch"]),
            steps=int(self.cls["steps"]),
            seed=derive_seed(self.seed, self.cell_stage(dim, dcscn)),
            log_every=int(self.cls["log_every"]),
            augment=bool(self.cls["augment"])
        )


class ConfigLoader:
    """設定ファイルを読み込み、実行設定を構築するクラス"""

    # デフォルトの設定ファイル名
    DEFAULT_CONFIG_FILENAME = 'config.json'

    def __init__(
        self,
        config_path: Optional[str] = None,
        user_config_path: Optional[str] = None
    ) -> None:
        """
        設定ファイルを読み込む

        Args:
            config_path: デフォルト設定のパス（省略時はこのモジュールと同じディレクトリのconfig.json）
            user_config_path: 上書きするユーザー設定のパス（未知のキーはエラー）

        Raises:
            ConfigurationError: ファイルが見つからない、JSON形式が不正、または未知のキー
        """
        if config_path is None:
            if getattr(sys, 'frozen', False):
                module_dir = os.path.dirname(sys.executable)
            else:
                module_dir = os.path.dirname(os.path.abspath(__file__))
            config_path = os.path.join(module_dir, self.DEFAULT_CONFIG_FILENAME)

        self.config_path: str = config_path
        self.user_config_path: Optional[str] = user_config_path
        self.user_config: Dict[str, Any] = {}
        self.config: Dict[str, Any] = self._load_config()

    def _read_json(self, path: str, config_key: str) -> Dict[str, Any]:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError as e:
            logger.error(f"設定ファイルが見つかりません: {path}")
            raise ConfigurationError(
                f"設定ファイルが見つかりません: {path}",
                config_key=config_key,
                original_error=e
            ) from e
        except json.JSONDecodeError as e:
            logger.error(f"設定ファイルのJSON形式が不正です: {e}")
            raise ConfigurationError(
                f"設定ファイルのJSON形式が不正です: {path}",
                config_key="json_format",
                original_error=e
            ) from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"設定ファイルの最上位はオブジェクトである必要があります: {path}", config_key=config_key)
        return data

    def _load_config(self) -> Dict[str, Any]:
        """
        設定ファイルを読み込む（デフォルト設定 + ユーザー設定をマージ）

        Returns:
            Dict[str, Any]: 設定辞書
        """
        config = self._read_json(self.config_path, "config_path")

        if self.user_config_path:
            user_config = self._read_json(self.user_config_path, "user_config_path")
            self._check_known_keys(config, user_config, ())
            self.user_config = user_config
            self._deep_merge(config, user_config)
            logger.info(f"ユーザー設定を読み込みました: {self.user_config_path}")

        return config

    def _check_known_keys(self, base: Mapping[str, Any], override: Mapping[str, Any], prefix: Tuple[str, ...]) -> None:
        """
        ユーザー設定のキーがデフォルト設定に存在するか再帰的に検査

        Raises:
            ConfigurationError: 未知のキー（ドット区切りのキー名付き）
        """
        if prefix in _OPEN_SECTIONS:
            return
        for key, value in override.items():
            if key == _COMMENT_KEY:
                continue
            path = prefix + (key,)
            if key not in base:
                raise ConfigurationError("未知の設定キーです", config_key=".".join(path))
            if isinstance(base[key], dict):
                if not isinstance(value, dict):
                    raise ConfigurationError("オブジェクトが必要です", config_key=".".join(path))
                self._check_known_keys(base[key], value, path)

    def _deep_merge(self, base: dict, override: dict) -> None:
        """
        辞書を再帰的にマージ（overrideの値でbaseを上書き）

        Args:
            base: ベースとなる辞書（この辞書が更新される）
            override: 上書きする辞書
        """
        for key, value in override.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._deep_merge(base[key], value)
            else:
                base[key] = copy.deepcopy(value)

    def get(self, *keys: str, default: Optional[T] = None) -> Union[Any, T]:
        """
        ネストされた設定値を取得

        Args:
            *keys: 設定のキー（例: 'privacy', 'policy'）
            default: デフォルト値

        Returns:
            設定値（存在しない場合はdefault）

        Examples:
            >>> config.get('privacy', 'policy')
            'strong'
            >>> config.get('nonexistent', default='fallback')
            'fallback'
        """
        value: Any = self.config
        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, *keys: str, value: Any) -> None:
        """
        ネストされた設定値を上書き（CLI フラグ用、既存キーのみ）

        Raises:
            ConfigurationError: 未知のキー
        """
        if len(keys) == 0:
            return
        current = self.config
        for key in keys[:-1]:
            if not isinstance(current.get(key), dict):
                raise ConfigurationError("未知の設定キーです", config_key=".".join(keys))
            current = current[key]
        if keys[-1] not in current:
            raise ConfigurationError("未知の設定キーです", config_key=".".join(keys))
        current[keys[-1]] = value

    def build_path(self, value: str) -> Path:
        """
        プレースホルダー（{task}, {seed}）を置換してパスを構築

        相対パスは設定ファイルではなくカレントディレクトリ基準。
        """
        replaced = value.replace('{task}', str(self.get('task', default=''))).replace('{seed}', str(self.get('seed', default='')))
        return Path(os.path.expanduser(replaced))

    def to_run_config(self) -> RunConfig:
        """
        設定辞書を検証して RunConfig に変換

        Raises:
            ConfigurationError: 型・値が不正（キー名付き）
        """
        task = self.get('task')
        if task not in (Task.HAND_HYGIENE.value, Task.ICU.value):
            raise ConfigurationError(f"不明なタスク: {task}", config_key="task")

        seed = self.get('seed')
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigurationError(f"seed は0以上の整数: {seed!r}", config_key="seed")

        dims = self._int_list('dims')
        allowed = set(self._int_list('allowed_dims'))
        outside = [d for d in dims if d not in allowed]
        if outside:
            raise ConfigurationError(f"許可されていない次元: {outside}", config_key="dims")

        dcscn = self.get('dcscn', default={})
        try:
            dcscn_dims = frozenset(int(k) for k, on in dcscn.items() if on)
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigurationError("dcscn のキーは次元の数値", config_key="dcscn", original_error=e) from e

        try:
            policy = PrivacyLevel.parse(str(self.get('privacy', 'policy', default='')))
        except ValueError as e:
            raise ConfigurationError(str(e), config_key="privacy.policy", original_error=e) from e

        strong = self.get('privacy', 'strong_threshold')
        weak = self.get('privacy', 'weak_threshold')
        if not isinstance(strong, int) or not isinstance(weak, int) or not 0 < strong < weak:
            raise ConfigurationError(f"閾値は 0 < strong < weak: {strong}, {weak}", config_key="privacy.strong_threshold")

        work_dir = self.get('paths', 'work_dir')
        if not isinstance(work_dir, str) or not work_dir.strip():
            raise ConfigurationError("作業ディレクトリが設定されていません", config_key="paths.work_dir")

        return RunConfig(
            task=task,
            seed=seed,
            dims=tuple(dims),
            dcscn_dims=dcscn_dims,
            policy=policy,
            strong_threshold=strong,
            weak_threshold=weak,
            work_dir=self.build_path(work_dir),
            synth=copy.deepcopy(self.get('synth', default={})),
            sr=copy.deepcopy(self.get('sr', default={})),
            cls=copy.deepcopy(self.get('cls', default={}))
        )

    def _int_list(self, key: str) -> List[int]:
        value = self.get(key)
        if not isinstance(value, list) or not value or not all(isinstance(v, int) and v > 0 for v in value):
            raise ConfigurationError(f"正の整数のリストが必要です: {value!r}", config_key=key)
        return list(value)
