import json

import pytest
from hypothesis import given, settings, strategies as st

from rehab_extract.errors import ConfigError
from rehab_extract.evaluator import ner_exact_prf
from rehab_extract.goldstore import corpus_to_records, positive_counts, validate_gold, write_gold
from rehab_extract.ingest import NoteFile, extract_therapy_section, segment_sequences
from rehab_extract.ruletagger import tag_sequences, tag_text
from rehab_extract.syngen import (GeneratorConfig, _apply_edits, generate_corpus, load_phrasebook,
                                  parse_entry, render_note, write_notes)


def _dump(synth):
    return json.dumps([corpus_to_records(synth.corpus), list(synth.trace)], sort_keys=True)


def test_deterministic(ontology):
    cfg = dict(seed=7, n_sections=40, typo_rate=0.05, placeholder_rate=0.1)
    assert _dump(generate_corpus(GeneratorConfig(**cfg), ontology)) == \
        _dump(generate_corpus(GeneratorConfig(**cfg), ontology))
    assert _dump(generate_corpus(GeneratorConfig(**dict(cfg, seed=8)), ontology)) != \
        _dump(generate_corpus(GeneratorConfig(**cfg), ontology))


def test_default_corpus_size(clean_synth):
    corpus = clean_synth.corpus
    assert len(corpus.sections) == 300
    assert sorted(set(corpus.origin.values())) == ["enriched", "random"]
    assert sum(v == "enriched" for v in corpus.origin.values()) == 150


@pytest.mark.parametrize("noise", [dict(), dict(typo_rate=0.1, placeholder_rate=0.2, heldout_rate=0.3)])
def test_output_passes_validation(tmp_path, ontology, noise):
    corpus = generate_corpus(GeneratorConfig(seed=5, n_sections=30, **noise), ontology).corpus
    write_gold(tmp_path / "g.jsonl", corpus)
    again = validate_gold(tmp_path / "g.jsonl", ontology)
    assert again.annotations == corpus.annotations
    for sec in corpus.sections:
        assert [s.text for s in segment_sequences(sec)] == [
            s.text for s in corpus.sequences if s.section_id == sec.doc_id]


@pytest.mark.parametrize("seed", [1, 2])
def test_noise_free_round_trip(ontology, tagger, seed):
    corpus = generate_corpus(GeneratorConfig(seed=seed, n_sections=60), ontology).corpus
    pred = tag_sequences(tagger, corpus.sequences)
    for cid in load_phrasebook()["concepts"]:
        prf = ner_exact_prf(pred, corpus.annotations, cid)
        assert prf.fp == 0 and prf.fn == 0, cid


def test_min_positives(ontology):
    cfg = GeneratorConfig(seed=3, n_sections=40, min_positives={"purpose_perception": 60, "loc_neck": 55})
    counts = positive_counts(generate_corpus(cfg, ontology).corpus, ontology, None)
    assert counts["purpose_perception"] >= 60 and counts["loc_neck"] >= 55


def test_name_placeholder_rate(ontology):
    synth = generate_corpus(GeneratorConfig(seed=3, n_sections=600, placeholder_rate=0.1), ontology)
    names = sum("name" in t["slots"] for t in synth.trace)
    hit = sum(e[3] == "name_placeholder" for t in synth.trace for e in t["edits"])
    assert names > 300
    assert hit / names == pytest.approx(0.1, abs=0.03)


def test_heldout_variants_escape_rules(tagger):
    for cid, entries in load_phrasebook()["heldout"].items():
        for entry in entries:
            phrase = parse_entry(cid, entry)
            got = {(a.concept_id, a.start, a.end) for a in tag_text(tagger, phrase.text)}
            assert not set(phrase.spans) & got, phrase.text


@pytest.mark.parametrize("bad", [
    dict(typo_rate=1.5), dict(placeholder_rate=-0.1), dict(items_per_section=(5, 2)), dict(n_sections=0),
    dict(min_positives={"loc_nowhere": 3}), dict(phrasebook={"concepts": {"xyz": ["a"]}}),
])
def test_config_errors(ontology, bad):
    with pytest.raises(ConfigError):
        generate_corpus(GeneratorConfig(**dict(dict(seed=1, n_sections=5), **bad)), ontology)


def test_parse_entry_forms():
    assert parse_entry("purpose_strength", "for <strength>").spans == (("purpose_strength", 4, 12),)
    assert parse_entry("loc_hip", "hip").spans == (("loc_hip", 0, 3),)
    obj = parse_entry("x", {"text": "LUE", "spans": [["side_left", 0, 1], ["loc_upper_extremity", 1, 3]]})
    assert obj.spans == (("side_left", 0, 1), ("loc_upper_extremity", 1, 3))
    with pytest.raises(ConfigError):
        parse_entry("x", {"text": "ab", "spans": [["x", 0, 9]]})


def test_notes_reextract(tmp_path, clean_synth):
    corpus = clean_synth.corpus
    paths = write_notes(corpus, tmp_path)
    assert len(paths) == len(corpus.sections)
    for sec, path in zip(corpus.sections[:25], paths):
        got = extract_therapy_section(NoteFile(path.name, path.read_text()))
        assert got.text == sec.text
        assert "[PERSONALNAME]" in render_note(sec)


@st.composite
def edited_text(draw):
    words = draw(st.lists(st.sampled_from(["squat", "left", "knee", "flexion", "x10", "hold"]),
                          min_size=1, max_size=8))
    text = " ".join(words)
    offsets, pos = [], 0
    for w in words:
        offsets.append((pos, pos + len(w)))
        pos += len(w) + 1
    span_ix = draw(st.sets(st.integers(0, len(words) - 1)))
    edit_ix = draw(st.sets(st.integers(0, len(words) - 1)))
    spans = [("c", *offsets[i], None) for i in sorted(span_ix)]
    edits = []
    for i in sorted(edit_ix):
        a, b = offsets[i]
        kind = draw(st.sampled_from(["drop_final", "placeholder"]))
        new = text[a:b - 1] if kind == "drop_final" else "[ADDRESS]"
        edits.append((a, b, new, kind))
    return text, spans, edits, edit_ix, span_ix, words


@settings(max_examples=150, deadline=None)
@given(edited_text())
def test_edits_preserve_untouched_spans(case):
    text, spans, edits, edit_ix, span_ix, words = case
    new_text, kept, dropped = _apply_edits(text, spans, edits)
    assert len(kept) + len(dropped) == len(spans)
    untouched = [words[i] for i in sorted(span_ix - edit_ix)]
    kept_text = [new_text[s:e] for _, s, e, _ in kept]
    for w in untouched:
        assert w in kept_text
    for _, s, e, _ in kept:
        assert 0 <= s < e <= len(new_text)
