"""Byte-pair subword tokenizer; each encoder pack carries its own.

Text is lowercased and split into alphanumeric runs and single punctuation
symbols; words are segmented by learned merges with an end-of-word marker.
Symbols unseen at training time map to the unknown token. Training and
encoding are fully deterministic (count ties break lexicographically).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ArtifactError, VersionError

TOKENIZER_FORMAT_VERSION = 1

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)
PAD_ID = 0
UNK_ID = 1
MASK_ID = 2

_WORD_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")
_END = "</w>"


def split_words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _word_symbols(word: str) -> tuple[str, ...]:
    chars = list(word)
    chars[-1] += _END
    return tuple(chars)


class BpeTokenizer:
    def __init__(self, vocab: Sequence[str], merges: Sequence[tuple[str, str]]):
        if tuple(vocab[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ArtifactError("tokenizer vocab must start with the special tokens")
        self.vocab = list(vocab)
        self.merges = [tuple(m) for m in merges]
        self._token_to_id = {token: i for i, token in enumerate(self.vocab)}
        if len(self._token_to_id) != len(self.vocab):
            raise ArtifactError("tokenizer vocab contains duplicates")
        self._ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self._word_cache: dict[str, list[int]] = {}

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    # ------------------------------------------------------------------
    # Training
    # ------------------------------------------------------------------

    @classmethod
    def train(cls, texts: Iterable[str], vocab_size: int) -> "BpeTokenizer":
        """Learn merges from `texts` until the vocabulary reaches `vocab_size`
        (or no pair occurs at least twice)."""
        word_freq: Counter[str] = Counter()
        for text in texts:
            word_freq.update(split_words(text))
        if not word_freq:
            raise ValueError("cannot train a tokenizer on empty text")

        sequences: dict[str, list[str]] = {
            word: list(_word_symbols(word)) for word in word_freq
        }
        base_symbols = sorted({s for seq in sequences.values() for s in seq})
        budget = vocab_size - len(SPECIAL_TOKENS) - len(base_symbols)
        merges: list[tuple[str, str]] = []

        for _ in range(max(0, budget)):
            pair_counts: Counter[tuple[str, str]] = Counter()
            for word, seq in sequences.items():
                freq = word_freq[word]
                for a, b in zip(seq, seq[1:]):
                    pair_counts[(a, b)] += freq
            best_pair = None
            best_count = 1  # require at least 2 occurrences
            for pair, count in pair_counts.items():
                if count > best_count or (count == best_count and best_pair is not None and pair < best_pair):
                    best_pair = pair
                    best_count = count
            if best_pair is None:
                break
            merges.append(best_pair)
            merged = best_pair[0] + best_pair[1]
            for word, seq in sequences.items():
                if len(seq) < 2:
                    continue
                sequences[word] = _merge_sequence(seq, best_pair, merged)

        vocab = list(SPECIAL_TOKENS) + base_symbols + [a + b for a, b in merges]
        return cls(vocab=vocab, merges=merges)

    # ------------------------------------------------------------------
    # Encoding
    # ------------------------------------------------------------------

    def _encode_word(self, word: str) -> list[int]:
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        seq = list(_word_symbols(word))
        while len(seq) >= 2:
            best_rank = None
            best_pair = None
            for pair in zip(seq, seq[1:]):
                rank = self._ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = pair
            if best_pair is None:
                break
            seq = _merge_sequence(seq, best_pair, best_pair[0] + best_pair[1])
        ids = [self._token_to_id.get(sym, UNK_ID) for sym in seq]
        self._word_cache[word] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in split_words(text):
            ids.extend(self._encode_word(word))
        return ids

    def tokens(self, text: str) -> list[str]:
        return [self.vocab[i] for i in self.encode(text)]

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": TOKENIZER_FORMAT_VERSION,
            "vocab": list(self.vocab),
            "merges": [list(m) for m in self.merges],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8"
        )

    @classmethod
    def from_dict(cls, data: dict) -> "BpeTokenizer":
        version = data.get("format_version", 0)
        if version > TOKENIZER_FORMAT_VERSION:
            raise VersionError(
                f"tokenizer format version {version} is newer than supported "
                f"version {TOKENIZER_FORMAT_VERSION}"
            )
        return cls(vocab=data["vocab"], merges=[tuple(m) for m in data["merges"]])

    @classmethod
    def load(cls, path: str | Path) -> "BpeTokenizer":
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"tokenizer file not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _merge_sequence(seq: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == pair[0] and seq[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out
