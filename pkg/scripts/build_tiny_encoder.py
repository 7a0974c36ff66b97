#!/usr/bin/env python3
"""Rebuild the bundled `tiny-english` encoder pack.

Trains the BPE tokenizer and masked-token-pretrains the tiny encoder on a
deterministic synthetic English corpus, then writes the pack into the package
data directory. Fully seeded: rerunning reproduces the committed pack
byte-for-byte on the same platform/backend.

Usage: python scripts/build_tiny_encoder.py [--out DIR]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT / "src"))

from issuetriage.classifier import EncoderPack, save_encoder_pack  # noqa: E402
from issuetriage.encoder import EncoderConfig, init_params  # noqa: E402
from issuetriage.synthetic import pretraining_texts  # noqa: E402
from issuetriage.tokenizer import BpeTokenizer  # noqa: E402
from issuetriage.training import pretrain_mlm  # noqa: E402

N_TEXTS = 4000
VOCAB_TARGET = 1024
EPOCHS = 6
BATCH_SIZE = 32
MAX_LEN = 32
LR = 2e-3
SEED = 20210301


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out",
        default=str(REPO_ROOT / "src" / "issuetriage" / "encoders" / "tiny-english"),
        help="pack output directory",
    )
    args = parser.parse_args()

    texts = pretraining_texts(N_TEXTS, seed=SEED)
    tokenizer = BpeTokenizer.train(texts, vocab_size=VOCAB_TARGET)
    print(f"tokenizer: {tokenizer.vocab_size} tokens, {len(tokenizer.merges)} merges")

    config = EncoderConfig(
        vocab_size=tokenizer.vocab_size,
        dim=64,
        n_layers=2,
        n_heads=2,
        ff_dim=128,
        max_positions=192,
    )
    params = init_params(config, seed=SEED)

    start = time.time()
    curve = pretrain_mlm(
        params,
        config,
        tokenizer,
        texts,
        epochs=EPOCHS,
        batch_size=BATCH_SIZE,
        max_len=MAX_LEN,
        lr=LR,
        seed=SEED,
        progress=lambda epoch, loss: print(f"epoch {epoch}: mlm loss {loss:.3f}"),
    )
    print(f"pretrained in {time.time() - start:.0f}s, final loss {curve[-1]:.3f}")

    save_encoder_pack(
        EncoderPack(config=config, params=params, tokenizer=tokenizer), args.out
    )
    print(f"wrote pack to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
