"""The bundled function-word language detector."""

from issuetriage.language import FunctionWordDetector, detect_english


def test_english_sentence_detected():
    assert detect_english("the application crashes when saving files") is True


def test_french_sentence_rejected():
    assert detect_english("l'application plante au démarrage") is False


def test_empty_and_whitespace_rejected():
    assert detect_english("") is False
    assert detect_english("   \n\t ") is False


def test_numbers_and_symbols_undetectable():
    assert detect_english("12345 --- ### 678") is False


def test_more_languages():
    cases = {
        "der knopf funktioniert nicht wenn ich ihn drücke": False,
        "el botón no funciona cuando lo aprieto": False,
        "why does the button not work when i press it": True,
        "this is broken and i can not fix it": True,
    }
    for text, expected in cases.items():
        assert detect_english(text) is expected, text


def test_detector_is_deterministic():
    detector = FunctionWordDetector()
    text = "how do we reproduce the problem on a clean install"
    results = {detector.detect(text) for _ in range(20)}
    assert results == {"en"}


def test_pluggable_detector():
    class AlwaysGerman:
        def detect(self, text):
            return "de"

    assert detect_english("the app crashes", AlwaysGerman()) is False
