"""
コマンドラインインターフェースのテスト
"""
import importlib.util
import json
import logging
import os
import sys
from pathlib import Path

import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import run_app
from cli.app import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_PIPELINE_ERROR, EXIT_UNEXPECTED, build_parser, error_line, main
from exceptions import ConfigurationError

requires_pytest_mock = pytest.mark.skipif(
    importlib.util.find_spec("pytest_mock") is None,
    reason="pytest-mock が必要です（requirements-dev.txt）"
)


def _main(temp_dir, *argv):
    return main(["--log-dir", str(Path(temp_dir) / "logs"), *argv])


def _stderr_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line]


@pytest.mark.usefixtures("restore_root_logger")
class TestExitCodes:
    """終了コードと標準エラー出力のテスト"""

    def test_validate_config_ok(self, temp_dir, user_config_file, capsys):
        assert _main(temp_dir, "--config", str(user_config_file), "validate-config") == EXIT_OK
        assert "[INFO]" in capsys.readouterr().out

    def test_validate_config_invalid(self, temp_dir, capsys):
        path = Path(temp_dir) / "bad.json"
        path.write_text(json.dumps({"dims": [224, 28]}), encoding="utf-8")
        assert _main(temp_dir, "--config", str(path), "validate-config") == EXIT_CONFIG_ERROR
        assert "[ERROR]" in capsys.readouterr().out

    def test_unknown_config_key(self, temp_dir, capsys):
        """未知のキーは終了コード2、標準エラーに1行"""
        path = Path(temp_dir) / "bad.json"
        path.write_text(json.dumps({"privacy": {"polcy": "weak"}}), encoding="utf-8")
        assert _main(temp_dir, "--config", str(path), "audit") == EXIT_CONFIG_ERROR
        lines = _stderr_lines(capsys)
        assert len(lines) == 1
        assert lines[0].startswith("error: ConfigurationError: ")
        assert "privacy.polcy" in lines[0]

    def test_privacy_violation(self, temp_dir, small_manifest, capsys):
        """32x32 を2倍縮小すると Strong を満たさない"""
        out_dir = Path(temp_dir) / "x2"
        code = _main(temp_dir, "downsample", "--manifest", str(small_manifest), "--scale", "2", "--output", str(out_dir))
        assert code == EXIT_PIPELINE_ERROR
        lines = _stderr_lines(capsys)
        assert len(lines) == 1
        assert lines[0].startswith("error: PrivacyViolationError: ")
        assert not out_dir.exists()

    def test_policy_flag_overrides(self, temp_dir, small_manifest, capsys):
        out_dir = Path(temp_dir) / "x2"
        code = _main(temp_dir, "--privacy-policy", "weak", "downsample",
                     "--manifest", str(small_manifest), "--scale", "2", "--output", str(out_dir))
        assert code == EXIT_OK
        assert str(out_dir / "manifest.jsonl") in capsys.readouterr().out

    def test_audit(self, temp_dir, small_manifest, capsys):
        root = str(small_manifest.parent)
        assert _main(temp_dir, "audit", "--root", root) == EXIT_PIPELINE_ERROR
        assert _stderr_lines(capsys)[0].startswith("error: PrivacyAuditError: ")
        assert _main(temp_dir, "--privacy-policy", "weak", "audit", "--root", root) == EXIT_OK

    def test_missing_checkpoint(self, temp_dir, small_manifest, capsys):
        code = _main(temp_dir, "eval", "--manifest", str(small_manifest),
                     "--checkpoint", str(Path(temp_dir) / "missing.pvst"), "--dim", "32")
        assert code == EXIT_PIPELINE_ERROR
        assert _stderr_lines(capsys)[0].startswith("error: PathNotFoundError: ")

    def test_synth_from_spec(self, temp_dir, capsys):
        spec = Path(temp_dir) / "spec.json"
        spec.write_text(json.dumps({"task": "hand_hygiene", "num_frames": 4, "split": 0.5, "size": 32}), encoding="utf-8")
        out_dir = Path(temp_dir) / "synth"
        assert _main(temp_dir, "synth", "--spec", str(spec), "--output", str(out_dir)) == EXIT_OK
        assert (out_dir / "manifest.jsonl").exists()

    def test_log_file_written(self, temp_dir, user_config_file):
        _main(temp_dir, "--config", str(user_config_file), "validate-config")
        assert list((Path(temp_dir) / "logs").glob("*.log"))


class TestParser:
    """引数解析のテスト"""

    def test_unknown_policy_rejected(self, capsys):
        """引数エラーは使い方の全文ではなく1行、終了コード2"""
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args(["--privacy-policy", "paranoid", "audit"])
        assert exc_info.value.code == EXIT_CONFIG_ERROR
        err = capsys.readouterr().err
        assert len(err.strip().splitlines()) == 1
        assert err.startswith("error: ArgumentError: ")
        assert "paranoid" in err

    @pytest.mark.parametrize("argv", [["no-such-command"], ["--seed", "seven", "audit"], ["run", "--bogus"]])
    def test_errors_are_single_line(self, argv, capsys):
        """サブコマンドの引数エラーも1行"""
        with pytest.raises(SystemExit) as exc_info:
            main(argv)
        assert exc_info.value.code == EXIT_CONFIG_ERROR
        assert len(capsys.readouterr().err.strip().splitlines()) == 1

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_global_flags(self):
        args = build_parser().parse_args(["--seed", "7", "--log-json", "run", "--work-dir", "w"])
        assert args.seed == 7
        assert args.log_json is True
        assert args.command.name == "run"
        assert args.work_dir == "w"


class TestErrorLine:
    def test_single_line(self):
        error = ConfigurationError("複数行の\nメッセージ", config_key="seed")
        assert error_line(error) == "error: ConfigurationError: 設定エラー [seed]: 複数行の メッセージ"


class TestRunApp:
    """エントリーポイントのテスト"""

    @pytest.fixture(autouse=True)
    def keep_excepthook(self, monkeypatch):
        monkeypatch.setattr(sys, "excepthook", sys.excepthook)

    def test_log_level_from_env(self, monkeypatch):
        monkeypatch.setenv("LOG_LEVEL", "debug")
        assert run_app.get_log_level() == logging.DEBUG
        monkeypatch.setenv("LOG_LEVEL", "verbose")
        assert run_app.get_log_level() == logging.INFO

    @requires_pytest_mock
    def test_exit_code_passed_through(self, mocker):
        mocker.patch.object(sys, "argv", ["run_app.py", "validate-config"])
        mocker.patch("cli.app.main", return_value=EXIT_CONFIG_ERROR)
        with pytest.raises(SystemExit) as exc_info:
            run_app.main()
        assert exc_info.value.code == EXIT_CONFIG_ERROR

    @requires_pytest_mock
    def test_unexpected_error_exit_code(self, mocker, capsys):
        """予期しない例外は終了コード3と1行のエラー"""
        mocker.patch.object(sys, "argv", ["run_app.py", "audit"])
        mocker.patch("cli.app.main", side_effect=RuntimeError("壊れました"))
        with pytest.raises(SystemExit) as exc_info:
            run_app.main()
        assert exc_info.value.code == EXIT_UNEXPECTED
        assert capsys.readouterr().err.strip() == "error: RuntimeError: 壊れました"
