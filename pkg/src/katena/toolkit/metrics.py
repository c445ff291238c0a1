"""Number-of-Tokens (NoT) counter for deployment scripts and models.

Frozen rules:

* yaml: lines whose first non-blank character is ``#`` are dropped.
* js: lines starting with ``//`` and lines starting with ``console.`` are
  dropped, and ``/* ... */`` spans are removed wherever they occur.
* What remains is split on whitespace, ``.`` and the structural
  punctuation ``( ) { } [ ] : , ; = " '``.  Empty fragments are discarded,
  so ``contract.deploy()`` is two tokens and a lone ``...`` is none.

Only whole comment lines are removed; a trailing ``# note`` or ``// note``
after code is counted, because telling it apart from string contents
(URLs, hex colours) needs a real lexer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

LANGUAGES = ("yaml", "js")
SEPARATORS = " \t\r\n\f\v.(){}[]:,;=\"'"
_SPLIT = re.compile("[" + re.escape(SEPARATORS) + "]+")
_BLOCK_COMMENT = re.compile(r"/\*.*?\*/", re.DOTALL)
_EXTENSIONS = {".yaml": "yaml", ".yml": "yaml", ".js": "js", ".ts": "js", ".mjs": "js", ".cjs": "js"}


@dataclass(frozen=True)
class NotCount:
    file: str | None
    tokens: int
    language: str

    def to_dict(self) -> dict:
        return {"file": self.file, "tokens": self.tokens, "language": self.language}


def _kept_lines(text: str, language: str) -> list[str]:
    if language == "js":
        # keep line structure so removal of a block never merges two lines
        text = _BLOCK_COMMENT.sub(lambda m: "\n" * m.group().count("\n"), text)
        drop = ("//", "console.")
    else:
        drop = ("#",)
    return [line for line in text.splitlines() if not line.lstrip().startswith(drop)]


def tokenize(text: str, language: str) -> list[str]:
    if language not in LANGUAGES:
        raise ValueError(f"unknown language mode {language!r}; expected one of {', '.join(LANGUAGES)}")
    return [tok for line in _kept_lines(text, language) for tok in _SPLIT.split(line) if tok]


def count_tokens(text: str, language: str, file: str | None = None) -> NotCount:
    return NotCount(file, len(tokenize(text, language)), language)


def language_for(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix not in _EXTENSIONS:
        raise ValueError(f"cannot infer language of {path}; pass --lang yaml|js")
    return _EXTENSIONS[suffix]


def count_file(path: str | Path, language: str | None = None) -> NotCount:
    language = language or language_for(path)
    text = Path(path).read_text(encoding="utf-8")
    return count_tokens(text, language, str(path))
