import pytest
from hypothesis import given, settings, strategies as st

from rehab_extract.errors import ConfigError, InsufficientSections, ParseError
from rehab_extract.ingest import (NoteFile, Section, enrichment_score, extract_therapy_section,
                                  filter_note_files, read_jsonl, section_from_dict, section_to_dict,
                                  segment_sequences, select_candidate_sets, sequence_from_dict,
                                  sequence_to_dict, write_jsonl)
from rehab_extract.ontology import ontology_from_dict

NINE = "rom left ue flexion 5 min 2 sets strength balance standing"


def _names(files):
    return [f.filename for f in files]


def test_filter_examples():
    files = [NoteFile("PT_THERAPY_001.txt", ""), NoteFile("CARDIOLOGY_002.txt", "")]
    assert _names(filter_note_files(files)) == ["PT_THERAPY_001.txt"]
    assert filter_note_files([]) == []
    assert filter_note_files([NoteFile("therapy_003.txt", "")]) == []
    assert _names(filter_note_files([NoteFile("therapy_003.txt", "")], ignore_case=True)) == ["therapy_003.txt"]


def test_extract_section():
    note = NoteFile("PT_THERAPY_1.txt", "HISTORY: x\nTHERAPEUTIC PROCEDURES:\n1: squats 2x10\nASSESSMENT:\nok\n")
    sec = extract_therapy_section(note)
    assert sec.text == "1: squats 2x10"
    assert sec.doc_id == "PT_THERAPY_1"
    assert extract_therapy_section(NoteFile("a.txt", "SUBJECTIVE: fine\n")) is None


def test_extract_to_end_of_note_and_placeholders():
    note = NoteFile("n.txt", "THERAPEUTIC PROCEDURE - \n7: [PERSONALNAME] maze - AROM LUE - 3 rep\n")
    sec = extract_therapy_section(note)
    assert sec.text == "7: [PERSONALNAME] maze - AROM LUE - 3 rep"
    assert sec.placeholder_count == 1


def test_segment_examples():
    seqs = segment_sequences(Section("d", "1: squats 2x10\n2: SLR- 2x10 deferred to HEP"))
    assert [s.text for s in seqs] == ["squats 2x10", "SLR- 2x10 deferred to HEP"]
    assert seqs[1].label_number == "2" and seqs[1].enumerated_text == "2: SLR- 2x10 deferred to HEP"
    assert segment_sequences(Section("d", "free text with no numbering")) == []
    one = segment_sequences(Section("d", "1:\n2: heel raises x10"))
    assert [(s.index, s.label_number, s.text) for s in one] == [(0, "2", "heel raises x10")]


bodies = st.text(alphabet=st.sampled_from(list("abcdefg xyz-/,")), min_size=0, max_size=20)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([":", ".", ")"]), bodies), max_size=8))
def test_segmentation_fidelity_and_idempotence(items):
    text = "\n".join(f"{n}{sep} {body}" for n, (sep, body) in enumerate(items, 1))
    section = Section("d", text)
    seqs = segment_sequences(section)
    assert len(seqs) == sum(1 for _, b in items if b.strip())
    for s in seqs:
        assert text[s.start:s.end] == s.text
        # an item body holds no enumerator of its own
        assert segment_sequences(Section("d", s.text)) == []


def test_enrichment_examples(ontology):
    assert enrichment_score("AROM left shoulder flexion x10", ontology) == 5
    assert enrichment_score("", ontology) == 0
    assert enrichment_score(Section("d", NINE), ontology) == 9


def test_enrichment_needs_nine_groups():
    onto = ontology_from_dict({"categories": [{"name": "A", "kind": "Binary", "keywords": ["a"]}]})
    with pytest.raises(ConfigError):
        enrichment_score("a", onto)


words = st.sampled_from(["rom", "left", "knee", "flexion", "min", "x10", "sets", "gait", "supine",
                         "strength", "table", "foo", "bar"])


@settings(max_examples=60, deadline=None)
@given(a=st.lists(words, max_size=10), b=st.lists(words, max_size=10))
def test_enrichment_monotone(ontology, a, b):
    first = " ".join(a)
    both = first + " " + " ".join(b)
    s1, s2 = enrichment_score(first, ontology), enrichment_score(both, ontology)
    assert 0 <= s1 <= s2 <= 9


def _pool(n9, n8, n_other):
    eight = "rom left ue flexion 5 min 2 sets strength balance"
    secs = [Section(f"n{i:03d}", NINE) for i in range(n9)]
    secs += [Section(f"e{i:03d}", eight) for i in range(n8)]
    secs += [Section(f"o{i:03d}", "walked " * (i % 60)) for i in range(n_other)]
    return secs


def test_select_candidate_sets(ontology):
    pool = _pool(5, 20, 60)
    a = select_candidate_sets(pool, ontology, n_enriched=10, n_random=15, min_len=50, seed=3)
    b = select_candidate_sets(list(reversed(pool)), ontology, n_enriched=10, n_random=15, min_len=50, seed=3)
    assert a == b
    enriched, randoms = a
    ids = {s.doc_id for s in enriched}
    assert {f"n{i:03d}" for i in range(5)} <= ids and len(ids) == 10
    assert not ids & {s.doc_id for s in randoms}
    assert all(len(s.text) >= 50 for s in randoms) and len(randoms) == 15


def test_select_exhaustion(ontology):
    with pytest.raises(InsufficientSections):
        select_candidate_sets(_pool(10, 0, 0), ontology, n_enriched=300, n_random=0)
    with pytest.raises(InsufficientSections):
        select_candidate_sets(_pool(5, 5, 3), ontology, n_enriched=5, n_random=50, min_len=0)


def test_jsonl_round_trip(tmp_path):
    sec = Section("d", "1: squats 2x10", "PT_THERAPY_d.txt", 0)
    seq = segment_sequences(sec)[0]
    path = tmp_path / "x.jsonl"
    write_jsonl(path, [section_to_dict(sec), sequence_to_dict(seq)])
    a, b = read_jsonl(path)
    assert section_from_dict(a) == sec and sequence_from_dict(b) == seq
    path.write_text('{"ok": 1}\n{broken\n')
    with pytest.raises(ParseError):
        read_jsonl(path)
    with pytest.raises(ParseError):
        read_jsonl(tmp_path / "missing.jsonl")
