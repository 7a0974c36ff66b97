"""Pluggable language detection used to keep only English issue text.

The bundled detector scores text against small function-word profiles for a
handful of Latin-script languages and returns the highest-scoring language.
It is intentionally tiny and fully deterministic; anything matching the
``LanguageDetector`` protocol can be swapped in.
"""

from __future__ import annotations

import re
from typing import Protocol

_WORD_RE = re.compile(r"[^\W\d_]+", re.UNICODE)

# High-frequency function words per language. Detection is a hit-rate contest,
# so the lists only need to separate languages, not cover them.
_PROFILES: dict[str, frozenset[str]] = {
    "en": frozenset(
        """the a an and or but of to in on at is are was were be been it this
        that with for from not no when what how why who which there here you
        we they he she can could should would will does did have has had
        please my your our its any some""".split()
    ),
    "fr": frozenset(
        """le la les un une des du de au aux et ou est sont pas ne pour dans
        sur avec que qui ce cette il elle nous vous je tu mais plus sans aussi
        comme l d c j n s y a""".split()
    ),
    "de": frozenset(
        """der die das ein eine und oder ist sind war nicht kein für mit von
        zu auf im in den dem des wenn wie warum wer wir ihr sie ich du es man
        auch nur noch aber beim einem einer""".split()
    ),
    "es": frozenset(
        """el la los las un una unos unas y o es son fue no para en con de del
        al que quien como cuando donde por se lo le mi tu su nosotros ellos
        pero más sin también muy está""".split()
    ),
    "pt": frozenset(
        """o a os as um uma uns umas e ou é são foi não para em com de do da
        dos das que quem como quando onde por se lhe meu seu nós eles mas sem
        também muito está ao há""".split()
    ),
    "it": frozenset(
        """il lo la i gli le un una e o è sono era non per in con di del della
        che chi come quando dove perché si mi ti suo noi loro ma più senza
        anche molto questo questa al dal""".split()
    ),
    "nl": frozenset(
        """de het een en of is zijn was niet geen voor met van naar op in als
        hoe waarom wie wij jullie zij ik jij je dit dat er hier ook maar nog
        wel bij aan te om""".split()
    ),
}

# A lone profile word is weak evidence on short text; require a little mass.
_MIN_HITS = 1
_MIN_RATIO = 0.08


class LanguageDetector(Protocol):
    def detect(self, text: str) -> str | None:
        """Return the top language hypothesis (ISO 639-1) or None if unknown."""
        ...


class FunctionWordDetector:
    """Scores each language by the fraction of tokens found in its profile."""

    def __init__(self, profiles: dict[str, frozenset[str]] | None = None):
        self._profiles = profiles if profiles is not None else _PROFILES

    def detect(self, text: str) -> str | None:
        tokens = [t.lower() for t in _WORD_RE.findall(text)]
        if not tokens:
            return None
        best_lang: str | None = None
        best_score = 0.0
        # Sorted iteration keeps ties deterministic.
        for lang in sorted(self._profiles):
            profile = self._profiles[lang]
            hits = sum(1 for t in tokens if t in profile)
            score = hits / len(tokens)
            if hits >= _MIN_HITS and score >= _MIN_RATIO and score > best_score:
                best_lang = lang
                best_score = score
        return best_lang


DEFAULT_DETECTOR: LanguageDetector = FunctionWordDetector()


def detect_english(text: str, detector: LanguageDetector | None = None) -> bool:
    """True iff the detector's top hypothesis for `text` is English.

    Empty or undetectable text is False (excluded), never an error.
    """
    active = detector if detector is not None else DEFAULT_DETECTOR
    return active.detect(text) == "en"
