import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarclone import textnorm
from swarclone.errors import (
    DegenerateInputError,
    UnsupportedNumeralError,
    VocabularyError,
)

# golden rows from the bundled preprocessing-examples table
ROW_NUMERALS_RAW = "भर्खर ७ प्याग हुँदैछ, १५ प्याग खाएपछि मात्र मलाई थोरै थोरै लाग्छ ।"
ROW_NUMERALS_OUT = "भर्खर सात प्याग हुँदैछ, पन्ध्र प्याग खाएपछि मात्र मलाई थोरै थोरै लाग्छ ।"
ROW_SEGMENT_RAW = "बरु अब त अझ बढी लजालु भएकी थिएँ; साथीहरु पनि कम थिए ।"
ROW_SEGMENT_OUT = "बरु अब त अझ बढी लजालु भएकी थिएँ। साथीहरु पनि कम थिए ।"
ROW_STOP_RAW = "त्यो चिच्याहट सुनेर क्यालीगुला आनन्दित हुन्थ्यो"
ROW_STOP_OUT = "त्यो चिच्याहट सुनेर क्यालीगुला आनन्दित हुन्थ्यो ।"


def oracle_number_words(n: int) -> str:
    """Independent bottom-up composition over the shared 0-99 word list."""
    words = textnorm._WORDS_0_99
    if n < 100:
        return words[n]
    pieces = []
    remainder = n % 100
    if remainder:
        pieces.append(words[remainder])
    n //= 100
    for unit in ("सय", "हजार", "लाख", "करोड"):
        group = n % 100 if unit != "सय" else n % 10
        n = n // 100 if unit != "सय" else n // 10
        if group:
            pieces.append(unit)
            pieces.append(words[group])
    return " ".join(reversed(pieces))


class TestNumberToWords:
    def test_paper_examples(self):
        assert textnorm.number_to_words(7) == "सात"
        assert textnorm.number_to_words(15) == "पन्ध्र"

    def test_hundred(self):
        assert textnorm.number_to_words(100) == "एक सय"

    def test_exhaustive_oracle_0_to_10000(self):
        for n in range(10001):
            assert textnorm.number_to_words(n) == oracle_number_words(n), n

    def test_spot_large_values(self):
        assert textnorm.number_to_words(100000) == "एक लाख"
        assert textnorm.number_to_words(10000000) == "एक करोड"
        for n in (123456, 9999999, 123456789, 999999999):
            assert textnorm.number_to_words(n) == oracle_number_words(n)

    def test_out_of_range(self):
        with pytest.raises(UnsupportedNumeralError):
            textnorm.number_to_words(10 ** 9)


class TestExpandNumerals:
    def test_paper_row(self):
        assert textnorm.expand_numerals(ROW_NUMERALS_RAW) == ROW_NUMERALS_OUT

    def test_no_digits_identity(self):
        assert textnorm.expand_numerals(ROW_STOP_RAW) == ROW_STOP_RAW

    def test_ascii_digits(self):
        assert textnorm.expand_numerals("100 वटा") == "एक सय वटा"

    def test_date_run(self):
        assert textnorm.expand_numerals("२०/३/२०२३") == "बीस तीन दुई हजार तेइस"
        assert textnorm.expand_numerals("१५-८") == "पन्ध्र आठ"

    def test_year_like_run(self):
        assert textnorm.expand_numerals("सन् २०२३ मा") == "सन् दुई हजार तेइस मा"

    def test_unsupported_numeral_names_token(self):
        with pytest.raises(UnsupportedNumeralError) as info:
            textnorm.expand_numerals("१००००००००० रुपैयाँ")
        assert "१०००००००००" in str(info.value)

    @settings(max_examples=80, deadline=None)
    @given(st.text(alphabet="०१२३४५६७८९0123456789 कखग,।?!;/-", max_size=40))
    def test_no_digit_survives(self, text):
        try:
            expanded = textnorm.expand_numerals(text)
        except UnsupportedNumeralError:
            return
        assert not any(c in "०१२३४५६७८९0123456789" for c in expanded)


class TestSegmentSentences:
    def test_paper_row_semicolon(self):
        sentences = textnorm.segment_sentences(ROW_SEGMENT_RAW)
        assert len(sentences) == 2
        assert sentences[0].endswith("थिएँ।")
        assert " ".join(sentences) == ROW_SEGMENT_OUT

    def test_single_sentence_identity(self):
        assert textnorm.segment_sentences("क ख ग।") == ["क ख ग।"]

    def test_three_dandas(self):
        assert textnorm.segment_sentences("क। ख। ग।") == ["क।", "ख।", "ग।"]

    def test_question_and_exclamation_consumed(self):
        assert textnorm.segment_sentences("के छ? ठिक छ!") == ["के छ", "ठिक छ"]

    def test_empty_segments_dropped(self):
        assert textnorm.segment_sentences("क।। ;  । ख।") == ["क।", "ख।"]


class TestEnsureStopToken:
    def test_paper_row(self):
        assert textnorm.ensure_stop_token(ROW_STOP_RAW) == ROW_STOP_OUT

    def test_already_terminated_unchanged(self):
        assert textnorm.ensure_stop_token(ROW_STOP_OUT) == ROW_STOP_OUT

    def test_idempotent(self):
        once = textnorm.ensure_stop_token("क ख")
        assert textnorm.ensure_stop_token(once) == once

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            textnorm.ensure_stop_token("   ")


class TestNormalizePipeline:
    def test_all_golden_rows(self):
        assert " ".join(textnorm.normalize(ROW_NUMERALS_RAW)) == ROW_NUMERALS_OUT
        assert " ".join(textnorm.normalize(ROW_SEGMENT_RAW)) == ROW_SEGMENT_OUT
        assert " ".join(textnorm.normalize(ROW_STOP_RAW)) == ROW_STOP_OUT

    def test_idempotent_on_own_output(self):
        for raw in (ROW_NUMERALS_RAW, ROW_SEGMENT_RAW, ROW_STOP_RAW, "क? १५ ख; ग"):
            once = textnorm.normalize(raw)
            again = textnorm.normalize(" ".join(once))
            assert once == again

    @settings(max_examples=60, deadline=None)
    @given(st.text(alphabet="०१२३४५६७८९ कखगघङ,।?!;", max_size=60))
    def test_output_never_contains_digits(self, text):
        for sentence in textnorm.normalize(text):
            assert sentence.endswith(textnorm.DANDA)
            assert not any(c in "०१२३४५६७८९0123456789" for c in sentence)


class TestCharVocabulary:
    def test_danda_at_declared_index(self):
        vocab = textnorm.CharVocabulary(
            ("<pad>", "<eos>", "क", "ख", " ", "।", ",")
        )
        assert vocab.symbols.index("।") == 5
        assert vocab.encode("।") == [5, vocab.eos_id]

    def test_round_trip(self):
        sentences = textnorm.normalize(ROW_NUMERALS_RAW)
        vocab = textnorm.CharVocabulary.from_sentences(sentences)
        for sentence in sentences:
            assert vocab.decode(vocab.encode(sentence)) == sentence

    def test_oov_names_character_and_offset(self):
        vocab = textnorm.CharVocabulary.from_sentences(["कख।"])
        with pytest.raises(VocabularyError) as info:
            vocab.encode("क``ग")
        assert info.value.char == "`"
        assert info.value.offset == 1

    def test_corpus_sweep_encodes(self):
        sentences = []
        for raw in (ROW_NUMERALS_RAW, ROW_SEGMENT_RAW, ROW_STOP_RAW):
            sentences.extend(textnorm.normalize(raw))
        vocab = textnorm.CharVocabulary.from_sentences(sentences)
        for sentence in sentences:
            ids = vocab.encode(sentence)
            assert ids[-1] == vocab.eos_id

    def test_file_round_trip(self, tmp_path):
        vocab = textnorm.CharVocabulary.from_sentences(
            textnorm.normalize(ROW_SEGMENT_RAW)
        )
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = textnorm.CharVocabulary.load(path)
        assert loaded.symbols == vocab.symbols
        # line number = index
        lines = path.read_text(encoding="utf-8").split("\n")
        assert lines[0] == "<pad>"
        assert lines[vocab.symbols.index("।")] == "।"

    def test_index_zero_is_padding(self):
        vocab = textnorm.CharVocabulary.from_sentences(["क।"])
        assert vocab.pad_id == 0
        assert vocab.symbols[0] == "<pad>"
        with pytest.raises(ValueError):
            textnorm.CharVocabulary(("<eos>", "<pad>"))

    def test_duplicate_symbols_rejected(self):
        with pytest.raises(ValueError):
            textnorm.CharVocabulary(("<pad>", "<eos>", "क", "क"))
