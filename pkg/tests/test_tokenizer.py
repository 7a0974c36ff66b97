"""BPE tokenizer: training determinism, encoding behaviour, persistence."""

import pytest

from issuetriage.errors import VersionError
from issuetriage.tokenizer import (
    BpeTokenizer,
    MASK_ID,
    PAD_ID,
    UNK_ID,
    SPECIAL_TOKENS,
    split_words,
)

CORPUS = [
    "the app crashes when i save the file",
    "the app crashes on startup",
    "please add an option to save the file",
    "how do i save the file",
    "saving the file fails with an error",
] * 3


def test_split_words_lowercases_and_separates_punctuation():
    assert split_words("Hello, World! v2.1") == ["hello", ",", "world", "!", "v2", ".", "1"]


def test_training_is_deterministic():
    a = BpeTokenizer.train(CORPUS, vocab_size=80)
    b = BpeTokenizer.train(CORPUS, vocab_size=80)
    assert a.vocab == b.vocab
    assert a.merges == b.merges


def test_special_tokens_first():
    tok = BpeTokenizer.train(CORPUS, vocab_size=80)
    assert tuple(tok.vocab[:3]) == SPECIAL_TOKENS
    assert (PAD_ID, UNK_ID, MASK_ID) == (0, 1, 2)


def test_encode_decodes_known_words_without_unk():
    tok = BpeTokenizer.train(CORPUS, vocab_size=120)
    ids = tok.encode("the app crashes")
    assert ids
    assert UNK_ID not in ids


def test_unknown_characters_map_to_unk():
    tok = BpeTokenizer.train(CORPUS, vocab_size=80)
    ids = tok.encode("日本語")
    assert ids
    assert set(ids) == {UNK_ID}


def test_merges_shrink_token_count():
    tok = BpeTokenizer.train(CORPUS, vocab_size=120)
    chars = sum(len(w) for w in split_words("the app crashes when i save"))
    assert len(tok.encode("the app crashes when i save")) < chars


def test_appending_text_never_changes_prefix_ids():
    tok = BpeTokenizer.train(CORPUS, vocab_size=120)
    base = "the app crashes when i save the file"
    ids = tok.encode(base)
    longer = tok.encode(base + " and then the error shows up again")
    assert longer[: len(ids)] == ids


def test_encoding_deterministic_across_instances():
    a = BpeTokenizer.train(CORPUS, vocab_size=100)
    b = BpeTokenizer.from_dict(a.to_dict())
    text = "saving fails with an error, how do i add the option"
    assert a.encode(text) == b.encode(text)


def test_save_load_roundtrip(tmp_path):
    tok = BpeTokenizer.train(CORPUS, vocab_size=90)
    tok.save(tmp_path / "tok.json")
    loaded = BpeTokenizer.load(tmp_path / "tok.json")
    assert loaded.vocab == tok.vocab
    assert loaded.merges == tok.merges
    assert loaded.encode("the app crashes") == tok.encode("the app crashes")


def test_newer_format_version_rejected():
    tok = BpeTokenizer.train(CORPUS, vocab_size=60)
    payload = tok.to_dict()
    payload["format_version"] = 999
    with pytest.raises(VersionError):
        BpeTokenizer.from_dict(payload)


def test_empty_text_encodes_to_nothing():
    tok = BpeTokenizer.train(CORPUS, vocab_size=60)
    assert tok.encode("") == []
    assert tok.encode("   ") == []


def test_train_on_empty_corpus_rejected():
    with pytest.raises(ValueError):
        BpeTokenizer.train([""], vocab_size=50)
