"""Command-line interface and the Number-of-Tokens metric."""

from katena.toolkit.metrics import NotCount, count_file, count_tokens, tokenize

__all__ = ["NotCount", "count_file", "count_tokens", "tokenize"]
