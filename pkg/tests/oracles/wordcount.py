"""Sequential word counter: maximal runs of ASCII letters, lowercased."""

import re
from collections import Counter

_WORD = re.compile(r"[A-Za-z]+")


def count_words(text: str) -> dict:
    return dict(Counter(m.group(0).lower() for m in _WORD.finditer(text)))
