"""
サブコマンドモジュール

各サブコマンドのコンポーネント
"""
from cli.commands.data_commands import DownsampleCommand, EnhanceCommand, SynthCommand
from cli.commands.eval_commands import AuditCommand, EvalCommand, ReportCommand
from cli.commands.run_command import RunCommand, ValidateConfigCommand
from cli.commands.train_commands import TrainClsCommand, TrainSrCommand

__all__ = [
    'AuditCommand',
    'DownsampleCommand',
    'EnhanceCommand',
    'EvalCommand',
    'ReportCommand',
    'RunCommand',
    'SynthCommand',
    'TrainClsCommand',
    'TrainSrCommand',
    'ValidateConfigCommand',
]
