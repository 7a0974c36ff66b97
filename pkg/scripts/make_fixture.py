#!/usr/bin/env python3
"""Regenerate the bundled raw-issue fixture used by the end-to-end tests.

Deterministic; rerunning reproduces tests/fixtures/raw_issues.jsonl exactly.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT / "src"))

from issuetriage.ingestion import write_archive  # noqa: E402
from issuetriage.synthetic import planted_keyword_issues  # noqa: E402

OUT = REPO_ROOT / "tests" / "fixtures" / "raw_issues.jsonl"
N_ISSUES = 420
SEED = 20210301
NOISE_RATE = 0.15


def main() -> int:
    OUT.parent.mkdir(parents=True, exist_ok=True)
    if OUT.exists():
        OUT.unlink()
    issues = planted_keyword_issues(N_ISSUES, seed=SEED, noise_rate=NOISE_RATE)
    manifest = write_archive(issues, OUT)
    print(f"wrote {manifest.total_written} records to {OUT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
