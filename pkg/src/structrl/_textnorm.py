"""Shared answer/text normalization used by metrics, copy detection, and density."""
from __future__ import annotations

import re
import string

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_text(s: str) -> str:
    """Lowercase, strip punctuation, drop standalone articles, squeeze whitespace."""
    s = s.lower()
    s = s.translate(_PUNCT_TABLE)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def norm_tokens(s: str) -> list[str]:
    """Whitespace tokens of the normalized string."""
    return normalize_text(s).split()
