"""
データセットマニフェスト

JSON Lines 形式。1行目がヘッダー（kind="manifest"）、以降は1フレーム1行のエントリ。
エントリのパスはマニフェストのあるディレクトリからの相対パス。
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from constants import ManifestConstants, Provenance, Task, TaskClasses
from exceptions import FileOperationError, ManifestError, PathNotFoundError

logger = logging.getLogger(__name__)

_ENTRY_KEYS = ("path", "label", "split", "task", "provenance", "instance")
_SPLITS = (ManifestConstants.SPLIT_TRAIN, ManifestConstants.SPLIT_TEST)


@dataclass(frozen=True)
class ManifestEntry:
    """
    マニフェストの1エントリ

    Attributes:
        path: マニフェストからの相対パス（POSIX 区切り）
        label: クラスインデックス（SR コーパスでは None）
        split: "train" / "test"
        task: タスク名
        provenance: 来歴タグ
        instance: シーンインスタンス番号（分割単位）
    """
    path: str
    label: Optional[int]
    split: str
    task: str
    provenance: str
    instance: int


@dataclass
class DatasetManifest:
    """ラベル付きフレームの索引"""
    header: Dict[str, Any]
    entries: List[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)
    source_path: Optional[Path] = None

    @property
    def task(self) -> str:
        return str(self.header.get("task", ""))

    @property
    def provenance(self) -> Provenance:
        return Provenance(self.header.get("provenance", Provenance.SYNTHETIC.value))

    @property
    def class_names(self) -> tuple:
        return TaskClasses.for_task(self.task)

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def to_lines(self) -> List[str]:
        lines = [json.dumps(self.header, sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(asdict(e), sort_keys=True, separators=(",", ":")) for e in self.entries]
        return lines


def spec_hash(spec: Dict[str, Any]) -> str:
    """生成仕様の sha256（キー順序に依存しない）"""
    canonical = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_hash(path: Union[str, Path]) -> str:
    """ファイル内容の sha256"""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_header(
    task: str,
    provenance: Provenance,
    seed: int,
    **fields: Any
) -> Dict[str, Any]:
    header: Dict[str, Any] = {
        "kind": ManifestConstants.HEADER_KIND,
        "version": ManifestConstants.FORMAT_VERSION,
        "task": task,
        "provenance": provenance.value,
        "seed": int(seed),
    }
    header.update(fields)
    return header


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    """
    マニフェストを書き出す（単一ライター）

    Raises:
        FileOperationError: 書き込み失敗
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(manifest.to_lines()) + "\n", encoding="utf-8")
    except OSError as e:
        raise FileOperationError(str(e), file_path=str(path), operation="書き込み", original_error=e) from e
    logger.info(f"マニフェストを書き出しました: {path} ({len(manifest.entries)}件)")
    return path


def _parse_entry(raw: Dict[str, Any], source: str, line_number: int) -> ManifestEntry:
    missing = [k for k in _ENTRY_KEYS if k not in raw]
    if missing:
        raise ManifestError(f"必須キーがありません: {missing}", file_path=source, line_number=line_number)
    unknown = sorted(set(raw) - set(_ENTRY_KEYS))
    if unknown:
        raise ManifestError(f"不明なキー: {unknown}", file_path=source, line_number=line_number)
    if not isinstance(raw["path"], str) or not raw["path"]:
        raise ManifestError("path が不正です", file_path=source, line_number=line_number)
    if raw["split"] not in _SPLITS:
        raise ManifestError(f"split が不正です: {raw['split']}", file_path=source, line_number=line_number)
    label = raw["label"]
    if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
        raise ManifestError(f"label が整数ではありません: {label!r}", file_path=source, line_number=line_number)
    if not isinstance(raw["instance"], int):
        raise ManifestError("instance が整数ではありません", file_path=source, line_number=line_number)
    return ManifestEntry(
        path=raw["path"],
        label=label,
        split=raw["split"],
        task=str(raw["task"]),
        provenance=str(raw["provenance"]),
        instance=int(raw["instance"])
    )


def _validate(manifest: DatasetManifest, source: str, check_files: bool) -> None:
    header = manifest.header
    valid_provenances = {p.value for p in Provenance}
    if header.get("provenance") not in valid_provenances:
        raise ManifestError(f"ヘッダーの provenance が不正です: {header.get('provenance')}", file_path=source, line_number=1)
    if header.get("task") not in {t.value for t in Task}:
        raise ManifestError(f"ヘッダーの task が不正です: {header.get('task')}", file_path=source, line_number=1)

    classes = manifest.class_names
    seen: Dict[str, str] = {}
    for offset, entry in enumerate(manifest.entries):
        line_number = offset + 2
        if entry.provenance != header["provenance"]:
            raise ManifestError(
                f"来歴タグが混在しています: {entry.provenance} != {header['provenance']}",
                file_path=source,
                line_number=line_number
            )
        if entry.task != manifest.task:
            raise ManifestError(f"task がヘッダーと一致しません: {entry.task}", file_path=source, line_number=line_number)
        if classes and (entry.label is None or not 0 <= entry.label < len(classes)):
            raise ManifestError(f"label が範囲外です: {entry.label}", file_path=source, line_number=line_number)
        if entry.path in seen:
            if seen[entry.path] != entry.split:
                message = f"パスが train と test の両方に含まれています: {entry.path}"
            else:
                message = f"パスが重複しています: {entry.path}"
            raise ManifestError(message, file_path=source, line_number=line_number)
        seen[entry.path] = entry.split
        if check_files and not manifest.resolve(entry).is_file():
            raise ManifestError(f"フレームが存在しません: {entry.path}", file_path=source, line_number=line_number)


def parse_manifest(lines: Iterable[str], root: Path, source: str = "<memory>", check_files: bool = True) -> DatasetManifest:
    """
    JSON Lines を解析して検証する

    Raises:
        ManifestError: 不正な行（行番号付き）、分割の重複、来歴の混在、存在しないパス
    """
    header: Optional[Dict[str, Any]] = None
    entries: List[ManifestEntry] = []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError("JSON として解析できません", file_path=source, line_number=line_number, original_error=e) from e
        if not isinstance(raw, dict):
            raise ManifestError("行がオブジェクトではありません", file_path=source, line_number=line_number)
        if header is None:
            if raw.get("kind") != ManifestConstants.HEADER_KIND:
                raise ManifestError("1行目はヘッダーである必要があります", file_path=source, line_number=line_number)
            if raw.get("version") != ManifestConstants.FORMAT_VERSION:
                raise ManifestError(f"未対応のバージョンです: {raw.get('version')}", file_path=source, line_number=line_number)
            header = raw
            continue
        entries.append(_parse_entry(raw, source, line_number))
    if header is None:
        raise ManifestError("ヘッダーがありません", file_path=source)

    manifest = DatasetManifest(header=header, entries=entries, root=root)
    _validate(manifest, source, check_files)
    return manifest


def load_manifest(path: Union[str, Path], check_files: bool = True) -> DatasetManifest:
    """
    マニフェストを読み込んで検証する

    Args:
        path: マニフェストファイル
        check_files: 各フレームの存在を確認する

    Raises:
        PathNotFoundError: ファイルが存在しない
        ManifestError: 検証エラー
    """
    path = Path(path)
    if not path.is_file():
        raise PathNotFoundError(str(path), description="マニフェスト")
    text = path.read_text(encoding="utf-8")
    manifest = parse_manifest(text.splitlines(), path.parent, source=str(path), check_files=check_files)
    manifest.source_path = path
    logger.debug(f"マニフェストを読み込みました: {path} ({len(manifest.entries)}件)")
    return manifest
