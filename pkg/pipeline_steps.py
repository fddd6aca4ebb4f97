"""
パイプラインの各ステップ

CLI のサブコマンドとオーケストレーターの両方から呼ばれる。
フレームを永続化するステップは、書き込みを始める前に全フレームの出力寸法で
プライバシーゲートを検査し、違反があれば何も書かずに中断する。
"""
import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from checkpoint_io import load_checkpoint, write_loss_curve
from classifier_model import build_classifier, load_classifier, save_classifier
from config_loader import RunConfig
from constants import CheckpointConstants, ManifestConstants, PrivacyConstants, PrivacyLevel
from dcscn_model import SrModel, build_dcscn, load_sr_model, save_sr_model, sr_forward
from depth_io import frame_size, read_frame, write_frame
from exceptions import ConfigurationError, FileOperationError, FrameError, PrivacyViolationError
from image_resample import downsample, downsample_cascade, normalize_depth, privacy_level
from recognition import EvalReport, Preproc, evaluate, train_cls
from report_builder import build_report
from seed_utils import derive_seed
from sr_trainer import PsnrComparison, check_manifest_provenance, compare_psnr, extract_patch_pairs, load_normalized, train_sr
from synth.dataset_generator import GenSpec, gen_dataset
from synth.manifest import DatasetManifest, ManifestEntry, file_hash, load_manifest, make_header, write_manifest

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MANIFEST_NAME = f"manifest{ManifestConstants.FILE_SUFFIX}"


@dataclass
class TrainResult:
    """学習ステップの出力"""
    checkpoint: Path
    loss_curve: Path
    losses: List[float]
    psnr: Optional[PsnrComparison] = None


def loss_curve_path(checkpoint: PathLike) -> Path:
    """チェックポイントに対応する損失曲線 CSV のパス"""
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(f"{checkpoint.stem}_loss.csv")


def eval_report_name(dim: int, dcscn: bool) -> str:
    return f"eval_{dim}_{'dcscn' if dcscn else 'bicubic'}.json"


# ---- synth ----

def load_gen_spec(path: PathLike, output_dir: Optional[PathLike] = None) -> GenSpec:
    """
    JSON の生成仕様を読み込む

    Raises:
        ConfigurationError: ファイルが読めない、または不正な値（フィールド名付き）
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"生成仕様が見つかりません: {path}", config_key="synth", original_error=e) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"生成仕様の JSON 形式が不正です: {path}", config_key="synth", original_error=e) from e
    if not isinstance(data, dict):
        raise ConfigurationError("生成仕様はオブジェクトである必要があります", config_key="synth")
    data.pop("_comment", None)
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    return GenSpec.from_dict(data)


def cmd_synth(spec: Union[GenSpec, PathLike], output_dir: Optional[PathLike] = None) -> DatasetManifest:
    """生成仕様からフレームとマニフェストを作成"""
    if not isinstance(spec, GenSpec):
        spec = load_gen_spec(spec, output_dir)
    manifest = gen_dataset(spec)
    logger.info(f"合成データ: {len(manifest.entries)}フレーム -> {manifest.source_path}")
    return manifest


# ---- downsample / enhance ----

def _check_output_dir(manifest: DatasetManifest, output_dir: Path) -> None:
    if output_dir.resolve() == manifest.root.resolve():
        raise FileOperationError(
            "出力先が元のマニフェストと同じディレクトリです",
            file_path=str(output_dir),
            operation="書き込み"
        )


def _gate_all(
    manifest: DatasetManifest,
    output_size: Any,
    policy: PrivacyLevel,
    strong_threshold: int,
    weak_threshold: int
) -> None:
    """
    全エントリの出力寸法をヘッダーだけ読んで検査（書き込み前）

    Raises:
        PrivacyViolationError: 1件でもポリシー未満
    """
    for entry in manifest.entries:
        width, height = output_size(*frame_size(manifest.resolve(entry)))
        level = privacy_level(width, height, strong_threshold, weak_threshold)
        if level < policy:
            logger.error(f"プライバシーゲート違反のため書き込みを中止します: {entry.path} -> {width}x{height}")
            raise PrivacyViolationError(
                width=width,
                height=height,
                required_level=policy.name,
                actual_level=level.name
            )


def _derived_manifest(
    parent: DatasetManifest,
    output_dir: Path,
    entries: Sequence[ManifestEntry],
    **fields: Any
) -> DatasetManifest:
    header = make_header(
        parent.task,
        parent.provenance,
        int(parent.header.get("seed", 0)),
        spec_hash=parent.header.get("spec_hash"),
        parent_hash=file_hash(parent.source_path) if parent.source_path else None,
        pre_capture_source=False,
        **fields
    )
    manifest = DatasetManifest(header=header, entries=list(entries), root=output_dir)
    manifest.source_path = write_manifest(manifest, output_dir / MANIFEST_NAME)
    return manifest


def cmd_downsample(
    manifest_path: PathLike,
    scale: int,
    policy: PrivacyLevel,
    output_dir: PathLike,
    *,
    cascade: bool = False,
    strong_threshold: int = PrivacyConstants.STRONG_THRESHOLD,
    weak_threshold: int = PrivacyConstants.WEAK_THRESHOLD
) -> DatasetManifest:
    """
    マニフェストの全フレームを縮小して派生マニフェストを作成

    scale=1 はバイト単位のコピー。派生マニフェストのヘッダーに scale と親マニフェストのハッシュを記録する。

    Args:
        manifest_path: 元のマニフェスト
        scale: 縮小率
        policy: 保存するフレームに要求するプライバシーレベル
        output_dir: 出力ディレクトリ
        cascade: 16倍を4倍の2段で行う

    Raises:
        PrivacyViolationError: 出力寸法がポリシー未満（何も書き込まない）
        FrameError: 縮小率で割り切れない
    """
    if scale < 1:
        raise ConfigurationError(f"縮小率は1以上: {scale}", config_key="scale")
    manifest = load_manifest(manifest_path)
    out_dir = Path(output_dir)
    _check_output_dir(manifest, out_dir)

    def output_size(width: int, height: int) -> Tuple[int, int]:
        if width % scale or height % scale:
            raise FrameError(f"縮小率 {scale} で割り切れません", width=width, height=height)
        return width // scale, height // scale

    _gate_all(manifest, output_size, policy, strong_threshold, weak_threshold)
    factors = [4, 4] if cascade and scale == 16 else [scale]
    logger.info(f"縮小: x{scale} ({'段階' if len(factors) > 1 else '直接'}), {len(manifest.entries)}フレーム -> {out_dir}")

    for entry in manifest.entries:
        source = manifest.resolve(entry)
        target = out_dir / entry.path
        if scale == 1:
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(source, target)
            except OSError as e:
                raise FileOperationError(str(e), file_path=str(target), operation="コピー", original_error=e) from e
            continue
        frame = normalize_depth(read_frame(source, provenance=manifest.provenance))
        small = downsample_cascade(frame, factors) if len(factors) > 1 else downsample(frame, scale)
        write_frame(target, small, policy, strong_threshold=strong_threshold, weak_threshold=weak_threshold)

    parent_scale = int(manifest.header.get("total_scale", manifest.header.get("scale", 1)) or 1)
    return _derived_manifest(
        manifest,
        out_dir,
        manifest.entries,
        scale=scale,
        total_scale=parent_scale * scale,
        cascade=len(factors) > 1
    )


def cmd_enhance(
    manifest_path: PathLike,
    checkpoint: PathLike,
    policy: PrivacyLevel,
    output_dir: PathLike,
    *,
    strong_threshold: int = PrivacyConstants.STRONG_THRESHOLD,
    weak_threshold: int = PrivacyConstants.WEAK_THRESHOLD
) -> DatasetManifest:
    """
    低解像度マニフェストの全フレームを超解像して保存

    超解像後は 224x224 になるため、Weak / Strong ポリシーでは書き込み前に拒否される。

    Raises:
        PrivacyViolationError: 出力寸法がポリシー未満（何も書き込まない）
    """
    manifest = load_manifest(manifest_path)
    out_dir = Path(output_dir)
    _check_output_dir(manifest, out_dir)
    model = load_sr_model(checkpoint)
    scale = model.config.scale

    def output_size(width: int, height: int) -> Tuple[int, int]:
        return width * scale, height * scale

    _gate_all(manifest, output_size, policy, strong_threshold, weak_threshold)
    logger.info(f"超解像: x{scale}, {len(manifest.entries)}フレーム -> {out_dir}")
    for entry in manifest.entries:
        frame = load_normalized(manifest, entry)
        write_frame(out_dir / entry.path, sr_forward(model, frame), policy, strong_threshold=strong_threshold, weak_threshold=weak_threshold)

    return _derived_manifest(
        manifest,
        out_dir,
        manifest.entries,
        scale=1,
        sr_scale=scale,
        enhanced_by=file_hash(checkpoint)
    )


# ---- train / eval ----

def cmd_train_sr(manifest_path: PathLike, run: RunConfig, scale: int, output: PathLike) -> TrainResult:
    """
    public / synthetic コーパスで DCSCN を学習

    テスト分割があれば、学習後にバイキュービックとの PSNR 比較を行う。

    Raises:
        ProvenanceError: private マニフェスト（フレームを読む前に拒否）
    """
    manifest = load_manifest(manifest_path)
    check_manifest_provenance(manifest)
    config = run.sr_config(scale)
    pairs = extract_patch_pairs(
        manifest,
        config,
        derive_seed(run.seed, f"train-sr/{scale}/patches"),
        patches_per_frame=int(run.sr["patches_per_frame"])
    )
    model = build_dcscn(config, seed=derive_seed(run.seed, f"train-sr/{scale}/init"))
    model, losses = train_sr(model, pairs, run.sr_hyper(scale))

    comparison = None
    held_out = manifest.split(ManifestConstants.SPLIT_TEST)
    if held_out:
        comparison = compare_psnr(model, [load_normalized(manifest, e) for e in held_out])

    extra: Dict[str, Any] = {"manifest_hash": file_hash(manifest.source_path), "steps": len(losses)}
    if comparison is not None:
        extra["psnr_gain_db"] = round(comparison.gain, 6)
    checkpoint = save_sr_model(model, output, extra=extra)
    curve = write_loss_curve(loss_curve_path(checkpoint), losses)
    return TrainResult(checkpoint, curve, losses, comparison)


def _load_cell_sr(dim: int, sr_checkpoint: Optional[PathLike], input_side: int) -> Optional[SrModel]:
    if sr_checkpoint is None:
        return None
    model = load_sr_model(sr_checkpoint)
    if dim * model.config.scale != input_side:
        raise ConfigurationError(
            f"次元 {dim} x 超解像倍率 {model.config.scale} が分類器の入力 {input_side} と一致しません",
            config_key="dcscn"
        )
    return model


def cmd_train_cls(
    manifest_path: PathLike,
    run: RunConfig,
    dim: int,
    output: PathLike,
    sr_checkpoint: Optional[PathLike] = None
) -> TrainResult:
    """1つの (次元 × 超解像) セルの分類器を学習"""
    manifest = load_manifest(manifest_path)
    dcscn = sr_checkpoint is not None
    config = run.cls_config(dim, dcscn)
    preproc = Preproc(dim, _load_cell_sr(dim, sr_checkpoint, config.input_side), input_side=config.input_side)
    model, losses = train_cls(build_classifier(config), manifest, preproc, run.cls_hyper(dim, dcscn))
    checkpoint = save_classifier(
        model,
        output,
        extra={"task": manifest.task, "dim": dim, "dcscn": dcscn, "manifest_hash": file_hash(manifest.source_path)}
    )
    curve = write_loss_curve(loss_curve_path(checkpoint), losses)
    return TrainResult(checkpoint, curve, losses)


def cmd_eval(
    manifest_path: PathLike,
    checkpoint: PathLike,
    dim: int,
    output: Optional[PathLike] = None,
    sr_checkpoint: Optional[PathLike] = None
) -> EvalReport:
    """
    テスト分割で評価し、EvalReport を JSON で保存

    Raises:
        PathNotFoundError: チェックポイントが存在しない
        ConfigurationError: チェックポイントの学習条件と次元・超解像が一致しない
    """
    manifest = load_manifest(manifest_path)
    model = load_classifier(checkpoint)
    dcscn = sr_checkpoint is not None
    trained = load_checkpoint(checkpoint, expected_kind=CheckpointConstants.KIND_CLASSIFIER).extra
    if "dim" in trained and (int(trained["dim"]) != dim or bool(trained.get("dcscn")) != dcscn):
        raise ConfigurationError(
            f"チェックポイントは dim={trained['dim']}, dcscn={trained.get('dcscn')} で学習されています",
            config_key="dim"
        )
    preproc = Preproc(dim, _load_cell_sr(dim, sr_checkpoint, model.config.input_side), input_side=model.config.input_side)
    report = evaluate(model, manifest, preproc)
    if output is not None:
        output = Path(output)
        try:
            output.parent.mkdir(parents=True, exist_ok=True)
            output.write_text(report.to_json() + "\n", encoding="utf-8")
        except OSError as e:
            raise FileOperationError(str(e), file_path=str(output), operation="書き込み", original_error=e) from e
        logger.info(f"評価レポートを保存しました: {output}")
    return report


# ---- report ----

def cmd_report(report_dir: PathLike, output_dir: Optional[PathLike] = None) -> Tuple[Path, Path, Path]:
    """eval_*.json を集めて結果グリッド（CSV / テキスト / PDF）を作成"""
    csv_path, text_path, pdf_path = build_report(report_dir, output_dir)
    logger.info(f"結果グリッド: {csv_path.parent}")
    return csv_path, text_path, pdf_path
