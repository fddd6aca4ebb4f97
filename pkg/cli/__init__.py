"""
コマンドラインインターフェース

サブコマンド（synth, downsample, enhance, train-sr, train-cls, eval, report, audit, run）を提供
"""
