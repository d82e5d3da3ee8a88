"""Command-line surface: generate, train, eval, sweep and selfcheck."""

from cli.main import build_parser, main

__all__ = ["build_parser", "main"]
