"""
カスタム例外クラス

プライバシー保護型デプス映像パイプライン用のカスタム例外を定義
すべての例外クラスで統一されたインターフェースを提供
"""
from typing import Optional


class PrivacyPipelineError(Exception):
    """
    パイプラインエラーの基底クラス

    すべてのカスタム例外の共通インターフェースを定義
    """
    def __init__(
        self,
        message: str,
        *,
        original_error: Optional[Exception] = None,
        **kwargs
    ) -> None:
        """
        Args:
            message: エラーメッセージ
            original_error: 元の例外（チェーン用）
            **kwargs: サブクラス固有の属性
        """
        self.original_error = original_error

        # 元の例外がある場合、メッセージに追加
        if original_error:
            full_message = f"{message} (原因: {type(original_error).__name__}: {original_error})"
        else:
            full_message = message

        super().__init__(full_message)

        # サブクラス固有の属性を保存
        for key, value in kwargs.items():
            setattr(self, key, value)


class ConfigurationError(PrivacyPipelineError):
    """設定エラー"""
    def __init__(
        self,
        message: str,
        *,
        config_key: Optional[str] = None,
        original_error: Optional[Exception] = None
    ) -> None:
        """
        Args:
            message: エラーメッセージ
            config_key: 問題のある設定キー（ドット区切り）
            original_error: 元の例外
        """
        if config_key:
            message = f"設定エラー [{config_key}]: {message}"

        super().__init__(message, original_error=original_error, config_key=config_key)


class FileOperationError(PrivacyPipelineError):
    """ファイル操作エラー"""
    def __init__(
        self,
        message: str,
        *,
        file_path: str,
        operation: str,
        original_error: Optional[Exception] = None
    ) -> None:
        """
        Args:
            message: エラーメッセージ
            file_path: 操作対象のファイルパス
            operation: 実行していた操作（例: "読み込み", "書き込み"）
            original_error: 元の例外
        """
        full_message = f"ファイル{operation}エラー ({file_path}): {message}"
        super().__init__(
            full_message,
            original_error=original_error,
            file_path=file_path,
            operation=operation
        )


class PathNotFoundError(PrivacyPipelineError):
    """パスが見つからないエラー"""
    def __init__(
        self,
        path: str,
        *,
        description: Optional[str] = None,
        original_error: Optional[Exception] = None
    ) -> None:
        """
        Args:
            path: 見つからなかったパス
            description: パスの説明（例: "チェックポイント"）
            original_error: 元の例外
        """
        if description:
            message = f"{description}が見つかりません: {path}"
        else:
            message = f"パスが見つかりません: {path}"

        super().__init__(message, original_error=original_error, path=path, description=description)


class ShapeError(PrivacyPipelineError):
    """テンソル形状の不整合エラー"""
    def __init__(
        self,
        message: str,
        *,
        op: str,
        dimension: Optional[str] = None
    ) -> None:
        """
        Args:
            message: エラーメッセージ
            op: 演算名（例: "conv2d"）
            dimension: 不整合のある次元名（例: "in_channels"）
        """
        if dimension:
            full_message = f"{op}: 形状エラー [{dimension}]: {message}"
        else:
            full_message = f"{op}: 形状エラー: {message}"
        super().__init__(full_message, op=op, dimension=dimension)


class NonFiniteError(PrivacyPipelineError):
    """NaN/Infの検出エラー"""
    def __init__(self, op: str, *, count: int = 0) -> None:
        """
        Args:
            op: 非有限値を検出した演算名
            count: 非有限値の個数
        """
        super().__init__(f"{op}: 非有限値(NaN/Inf)を検出しました ({count}要素)", op=op, count=count)


class GraphError(PrivacyPipelineError):
    """計算グラフの不正な利用"""
    pass


class CheckpointError(PrivacyPipelineError):
    """チェックポイントの読み書きエラー"""
    def __init__(
        self,
        message: str,
        *,
        file_path: str,
        original_error: Optional[Exception] = None
    ) -> None:
        super().__init__(
            f"チェックポイントエラー ({file_path}): {message}",
            original_error=original_error,
            file_path=file_path
        )


class FrameError(PrivacyPipelineError):
    """デプスフレームの不正（寸法、エンコーディング、深度範囲）"""
    def __init__(
        self,
        message: str,
        *,
        width: Optional[int] = None,
        height: Optional[int] = None
    ) -> None:
        if width is not None and height is not None:
            message = f"{message} ({width}x{height})"
        super().__init__(message, width=width, height=height)


class PrivacyViolationError(PrivacyPipelineError):
    """プライバシーポリシー違反（書き込み拒否）"""
    def __init__(
        self,
        *,
        width: int,
        height: int,
        required_level: str,
        actual_level: str
    ) -> None:
        """
        Args:
            width: フレーム幅
            height: フレーム高さ
            required_level: 要求されるプライバシーレベル
            actual_level: フレームの実際のプライバシーレベル
        """
        message = (
            f"プライバシー違反: {width}x{height} フレームのレベル {actual_level} は "
            f"要求レベル {required_level} を満たしません（書き込みを拒否）"
        )
        super().__init__(
            message,
            width=width,
            height=height,
            required_level=required_level,
            actual_level=actual_level
        )


class ProvenanceError(PrivacyPipelineError):
    """データ来歴の分離ルール違反"""
    def __init__(self, message: str, *, provenance: str) -> None:
        """
        Args:
            message: エラーメッセージ
            provenance: 問題のある来歴タグ
        """
        full_message = (
            f"来歴エラー [{provenance}]: {message} "
            f"(超解像モデルは運用データと分離された public/synthetic データでのみ学習できます)"
        )
        super().__init__(full_message, provenance=provenance)


class ManifestError(PrivacyPipelineError):
    """データセットマニフェストの不正"""
    def __init__(
        self,
        message: str,
        *,
        file_path: Optional[str] = None,
        line_number: Optional[int] = None,
        original_error: Optional[Exception] = None
    ) -> None:
        """
        Args:
            message: エラーメッセージ
            file_path: マニフェストのパス
            line_number: 問題のある行番号（1始まり）
            original_error: 元の例外
        """
        location = ""
        if file_path:
            location = f" ({file_path}"
            location += f":{line_number})" if line_number is not None else ")"
        super().__init__(
            f"マニフェストエラー{location}: {message}",
            original_error=original_error,
            file_path=file_path,
            line_number=line_number
        )


class TrainingDivergedError(PrivacyPipelineError):
    """学習中の損失発散（NaN/Inf）"""
    def __init__(self, *, step: int, original_error: Optional[Exception] = None) -> None:
        super().__init__(
            f"学習がステップ {step} で発散しました（損失が非有限値）",
            original_error=original_error,
            step=step
        )


class UndefinedAUCError(PrivacyPipelineError):
    """AUCが定義できない（単一クラスのみ）"""
    pass


class ReportError(PrivacyPipelineError):
    """評価レポートの集計エラー"""
    pass


class PrivacyAuditError(PrivacyPipelineError):
    """保存済みフレームの監査で違反を検出"""
    def __init__(self, message: str, *, violations: int) -> None:
        super().__init__(f"{message} (違反 {violations}件)", violations=violations)
