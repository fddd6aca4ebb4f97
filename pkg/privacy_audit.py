"""
プライバシー監査

ディレクトリ配下に保存されたすべてのデプスフレームの寸法を調べ、
ポリシーを満たさないものを報告する。撮影前シミュレーションの合成原画像は、
ヘッダーに pre_capture_source: true を持つ合成マニフェストに載っている場合に限り対象外。
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Set, Union

from constants import DepthConstants, ManifestConstants, PrivacyConstants, PrivacyLevel, Provenance
from depth_io import frame_size
from exceptions import FileOperationError, FrameError, ManifestError, PrivacyAuditError
from image_resample import privacy_level
from synth.manifest import load_manifest

logger = logging.getLogger(__name__)


@dataclass
class AuditFinding:
    """ポリシー違反（または読めない）フレーム"""
    path: Path
    width: Optional[int]
    height: Optional[int]
    level: Optional[str]
    reason: str


@dataclass
class AuditReport:
    """監査結果"""
    root: Path
    policy: PrivacyLevel
    scanned: int = 0
    exempt: int = 0
    violations: List[AuditFinding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        status = "OK" if self.passed else "NG"
        return (
            f"[{status}] 監査: {self.root} ポリシー={self.policy.name} "
            f"フレーム={self.scanned} 免除={self.exempt} 違反={len(self.violations)}"
        )


def exempt_frames(root: Path) -> Set[Path]:
    """
    pre_capture_source: true の合成マニフェストに載っているフレームの絶対パス

    読めないマニフェストは免除の根拠にしない。
    """
    exempt: Set[Path] = set()
    for manifest_path in sorted(root.rglob(f"*{ManifestConstants.FILE_SUFFIX}")):
        try:
            manifest = load_manifest(manifest_path, check_files=False)
        except (ManifestError, FileOperationError, OSError) as e:
            logger.warning(f"マニフェストを読めないため免除対象にしません: {manifest_path} ({e})")
            continue
        if manifest.header.get("pre_capture_source") is not True or manifest.provenance != Provenance.SYNTHETIC:
            continue
        exempt.update(manifest.resolve(entry).resolve() for entry in manifest.entries)
    return exempt


def audit_directory(
    root: Union[str, Path],
    policy: PrivacyLevel,
    strong_threshold: int = PrivacyConstants.STRONG_THRESHOLD,
    weak_threshold: int = PrivacyConstants.WEAK_THRESHOLD
) -> AuditReport:
    """
    root 配下のフレームファイル（.pgm / .png）を監査

    Args:
        root: 監査するディレクトリ
        policy: 要求プライバシーレベル

    Returns:
        AuditReport: 監査結果（例外は投げない、raise_for_violations を参照）
    """
    root = Path(root)
    report = AuditReport(root=root, policy=policy)
    if not root.is_dir():
        logger.warning(f"監査対象のディレクトリがありません: {root}")
        return report
    exempt = exempt_frames(root)

    frames = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in DepthConstants.FRAME_EXTENSIONS)
    for path in frames:
        report.scanned += 1
        if path.resolve() in exempt:
            report.exempt += 1
            continue
        try:
            width, height = frame_size(path)
        except (FrameError, OSError) as e:
            report.violations.append(AuditFinding(path, None, None, None, f"読み込み不可: {e}"))
            continue
        level = privacy_level(width, height, strong_threshold, weak_threshold)
        if level < policy:
            report.violations.append(AuditFinding(path, width, height, level.name, f"{level.name} < {policy.name}"))

    for finding in report.violations[:20]:
        logger.warning(f"監査違反: {finding.path} ({finding.width}x{finding.height}) {finding.reason}")
    logger.info(report.summary())
    return report


def raise_for_violations(report: AuditReport) -> None:
    """
    Raises:
        PrivacyAuditError: 違反が1件以上
    """
    if not report.passed:
        first = report.violations[0]
        raise PrivacyAuditError(f"ポリシー {report.policy.name} を満たさないフレームがあります: {first.path}", violations=len(report.violations))
