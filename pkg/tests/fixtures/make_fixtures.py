"""Regenerate the shipped fixtures: python3 tests/fixtures/make_fixtures.py"""

import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from oracles.wordcount import count_words  # noqa: E402
from sealmr.datagen import gen_corpus  # noqa: E402

CORPUS_SEED = 20161212
CORPUS_BYTES = 1_000_000


def main():
    text = gen_corpus(CORPUS_BYTES, seed=CORPUS_SEED)
    (HERE / "corpus.txt").write_text(text, encoding="utf-8")
    counts = count_words(text)
    (HERE / "corpus_counts.json").write_text(json.dumps(counts, sort_keys=True, indent=0) + "\n", encoding="utf-8")
    print(f"corpus: {len(text.encode())} bytes, {len(text.splitlines())} lines, {len(counts)} distinct words")


if __name__ == "__main__":
    main()
