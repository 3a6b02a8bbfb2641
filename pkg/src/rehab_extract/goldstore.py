"""Gold-standard annotations: loading, validation, train/test split, sequence
targets and inter-annotator agreement.

``gold.jsonl`` holds one record per section::

    {"section": {"id": ..., "text": ..., "origin": "enriched" | "random"},
     "sequences": [{"index": 0, "label_number": "1", "start": 3, "end": 17}],
     "annotations": [{"seq_index": 0, "concept_id": "reps", "start": 7, "end": 11,
                      "numeric_value": 10}],
     "split": "train"}

Annotation offsets index into the sequence text; sequence offsets into the
section text.  ``numeric_value`` may be given as an integer (seconds for
duration) or as a unit-bearing string such as ``"2 min"``.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence as Seq

import numpy as np

from .errors import (DegenerateDistribution, InsufficientSections, NoNumber, NotFound, ParseError,
                     ShapeError, ValidationError)
from .ingest import Section, Sequence, read_jsonl
from .numeric import normalize_numeric
from .ontology import Ontology

TRAIN, TEST = "train", "test"
ENRICHED, RANDOM = "enriched", "random"
GOLD_SCHEMA = 1

SeqRef = tuple[str, int]


@dataclass(frozen=True, order=True)
class SpanAnnotation:
    section_id: str
    seq_index: int
    concept_id: str
    start: int
    end: int
    numeric_value: int | None = None

    @property
    def sequence_ref(self) -> SeqRef:
        return (self.section_id, self.seq_index)

    def to_dict(self) -> dict:
        d = {"section_id": self.section_id, "seq_index": self.seq_index,
             "concept_id": self.concept_id, "start": self.start, "end": self.end}
        if self.numeric_value is not None:
            d["numeric_value"] = self.numeric_value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpanAnnotation":
        nv = d.get("numeric_value")
        return cls(d["section_id"], int(d["seq_index"]), d["concept_id"], int(d["start"]),
                   int(d["end"]), None if nv is None else int(nv))


@dataclass(frozen=True)
class GoldCorpus:
    sections: tuple[Section, ...]
    sequences: tuple[Sequence, ...]
    annotations: tuple[SpanAnnotation, ...]
    split: dict[str, str] = field(default_factory=dict)
    origin: dict[str, str] = field(default_factory=dict)

    def sequence_map(self) -> dict[SeqRef, Sequence]:
        return {s.ref: s for s in self.sequences}

    def section_ids(self, part: str | None = None) -> list[str]:
        ids = [s.doc_id for s in self.sections]
        return ids if part is None else [i for i in ids if self.split.get(i) == part]

    def sequences_in(self, part: str | None) -> list[Sequence]:
        if part is None:
            return list(self.sequences)
        return [s for s in self.sequences if self.split.get(s.section_id) == part]

    def annotations_in(self, part: str | None) -> list[SpanAnnotation]:
        if part is None:
            return list(self.annotations)
        return [a for a in self.annotations if self.split.get(a.section_id) == part]


def _numeric_value(raw, category_id: str, where: str) -> int:
    if isinstance(raw, bool):
        raise ValidationError(f"{where}: numeric_value must be an integer or unit string")
    if isinstance(raw, int):
        if raw < 0:
            raise ValidationError(f"{where}: numeric_value must be >= 0")
        return raw
    if isinstance(raw, str):
        try:
            return normalize_numeric(raw, category_id)[0].value
        except (NoNumber, ValueError) as exc:
            raise ValidationError(f"{where}: {exc}") from None
    raise ValidationError(f"{where}: numeric_value must be an integer or unit string")


def corpus_from_records(records: Iterable[dict], ontology: Ontology) -> GoldCorpus:
    sections, sequences, annotations = [], [], []
    split, origin = {}, {}
    for n, rec in enumerate(records, 1):
        try:
            sec = rec["section"]
            sid, text = sec["id"], sec["text"]
        except (KeyError, TypeError):
            raise ParseError(f"record {n}: missing section id/text") from None
        if sid in origin:
            raise ValidationError(f"record {n}: duplicate section id {sid!r}")
        sections.append(Section(sid, text, sec.get("source_filename", ""),
                                int(sec.get("placeholder_count", 0))))
        origin[sid] = sec.get("origin", RANDOM)
        if rec.get("split") is not None:
            if rec["split"] not in (TRAIN, TEST):
                raise ValidationError(f"section {sid!r}: split must be train or test")
            split[sid] = rec["split"]
        seq_by_index = {}
        prev_end = -1
        for rs in sorted(rec.get("sequences", []), key=lambda r: r["start"]):
            start, end, idx = int(rs["start"]), int(rs["end"]), int(rs["index"])
            if not 0 <= start < end <= len(text):
                raise ValidationError(f"section {sid!r} sequence {idx}: offsets [{start},{end}) "
                                      f"outside section of length {len(text)}")
            if start < prev_end:
                raise ValidationError(f"section {sid!r} sequence {idx}: overlaps previous sequence")
            if idx in seq_by_index:
                raise ValidationError(f"section {sid!r}: duplicate sequence index {idx}")
            prev_end = end
            seq = Sequence(sid, idx, str(rs.get("label_number", idx + 1)), text[start:end], start, end)
            seq_by_index[idx] = seq
            sequences.append(seq)
        for ra in rec.get("annotations", []):
            where = f"section {sid!r} annotation {ra!r}"
            idx = int(ra["seq_index"])
            if idx not in seq_by_index:
                raise ValidationError(f"{where}: unknown sequence index {idx}")
            seq = seq_by_index[idx]
            cid = ra["concept_id"]
            try:
                category = ontology.category_of(cid)
            except NotFound:
                raise ValidationError(f"{where}: unknown concept {cid!r}") from None
            start, end = int(ra["start"]), int(ra["end"])
            if not 0 <= start < end <= len(seq.text):
                raise ValidationError(f"{where}: offsets outside sequence of length {len(seq.text)}")
            raw_value = ra.get("numeric_value")
            if category.is_numeric:
                if raw_value is None:
                    raise ValidationError(f"{where}: numeric concept requires numeric_value")
                value = _numeric_value(raw_value, cid, where)
            else:
                if raw_value is not None:
                    raise ValidationError(f"{where}: numeric_value on non-numeric concept {cid!r}")
                value = None
            annotations.append(SpanAnnotation(sid, idx, cid, start, end, value))
    return GoldCorpus(tuple(sections), tuple(sequences), tuple(annotations), split, origin)


def validate_gold(path: str | Path, ontology: Ontology) -> GoldCorpus:
    try:
        return corpus_from_records(read_jsonl(path), ontology)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ValidationError, ParseError)):
            raise
        raise ValidationError(f"{path}: malformed gold record ({type(exc).__name__}: {exc})") from exc


def corpus_to_records(corpus: GoldCorpus) -> list[dict]:
    seqs = defaultdict(list)
    for s in corpus.sequences:
        seqs[s.section_id].append(s)
    anns = defaultdict(list)
    for a in corpus.annotations:
        anns[a.section_id].append(a)
    records = []
    for sec in corpus.sections:
        rec = {
            "section": {"id": sec.doc_id, "text": sec.text, "origin": corpus.origin.get(sec.doc_id, RANDOM)},
            "sequences": [{"index": s.index, "label_number": s.label_number, "start": s.start, "end": s.end}
                          for s in sorted(seqs[sec.doc_id], key=lambda s: s.index)],
            "annotations": [],
        }
        for a in sorted(anns[sec.doc_id], key=lambda a: (a.seq_index, a.start, a.end, a.concept_id)):
            d = {"seq_index": a.seq_index, "concept_id": a.concept_id, "start": a.start, "end": a.end}
            if a.numeric_value is not None:
                d["numeric_value"] = a.numeric_value
            rec["annotations"].append(d)
        if sec.doc_id in corpus.split:
            rec["split"] = corpus.split[sec.doc_id]
        records.append(rec)
    return records


def write_gold(path: str | Path, corpus: GoldCorpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus_to_records(corpus):
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def split_train_test(corpus: GoldCorpus, per_origin_train: int = 125, seed: int = 0) -> GoldCorpus:
    rng = random.Random(seed)
    strata = defaultdict(list)
    for sec in sorted(corpus.sections, key=lambda s: s.doc_id):
        strata[corpus.origin.get(sec.doc_id, RANDOM)].append(sec.doc_id)
    split = {}
    for name in sorted(strata):
        ids = strata[name]
        if len(ids) < per_origin_train:
            raise InsufficientSections(f"origin {name!r} has {len(ids)} sections, "
                                       f"{per_origin_train} needed for training")
        chosen = set(rng.sample(ids, per_origin_train))
        for sid in ids:
            split[sid] = TRAIN if sid in chosen else TEST
    return replace(corpus, split=split)


def sequence_targets(corpus: GoldCorpus, ontology: Ontology,
                     part: str | None = None) -> dict[tuple[SeqRef, str], bool]:
    """Binary (sequence, concept) targets over every non-numeric concept."""
    concepts = ontology.binary_concept_ids()
    sequences = corpus.sequences_in(part)
    return project_spans(corpus.annotations, sequences, concepts)


def project_spans(spans, sequences, concepts) -> dict[tuple[SeqRef, str], bool]:
    targets = {(s.ref, c): False for s in sequences for c in concepts}
    for a in spans:
        key = (a.sequence_ref, a.concept_id)
        if key in targets:
            targets[key] = True
    return targets


def positive_counts(corpus: GoldCorpus, ontology: Ontology, part: str | None) -> dict[str, int]:
    counts = dict.fromkeys(ontology.binary_concept_ids(), 0)
    for (_, cid), value in sequence_targets(corpus, ontology, part).items():
        counts[cid] += value
    return counts


# -- inter-annotator agreement ------------------------------------------------


@dataclass(frozen=True)
class RatingTable:
    """``counts[i, k]`` = number of raters who put item i in category k."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] < 1 or counts.shape[1] < 1:
            raise ShapeError("rating table must be a non-empty N x K matrix")
        if (counts < 0).any():
            raise ShapeError("rating counts must be non-negative")
        sums = counts.sum(axis=1)
        if not (sums == sums[0]).all():
            raise ShapeError("every item must be rated by the same number of raters")
        if sums[0] < 2:
            raise ShapeError("at least two raters are required")
        object.__setattr__(self, "counts", counts)

    @property
    def items(self) -> int:
        return self.counts.shape[0]

    @property
    def categories(self) -> int:
        return self.counts.shape[1]

    @property
    def raters(self) -> int:
        return int(self.counts[0].sum())


def fleiss_kappa(table: RatingTable | np.ndarray) -> float:
    if not isinstance(table, RatingTable):
        table = RatingTable(np.asarray(table))
    n = table.counts.astype(np.float64)
    r = table.raters
    p_items = (np.square(n).sum(axis=1) - r) / (r * (r - 1))
    p_bar = float(p_items.mean())
    p_cat = n.sum(axis=0) / (table.items * r)
    p_e = float(np.square(p_cat).sum())
    if np.isclose(p_e, 1.0, rtol=0, atol=1e-15):
        if np.isclose(p_bar, 1.0, rtol=0, atol=1e-15):
            return 1.0
        raise DegenerateDistribution("all ratings fall in one category but agreement is imperfect")
    if p_bar == 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def agreement_table(corpora: Seq[GoldCorpus], ontology: Ontology, unit: str = "sequence") -> RatingTable:
    """Rating table with two categories (mentioned, not mentioned) per item.

    ``unit="sequence"`` makes one item per (sequence, concept); ``"section"``
    one per (section, concept).  All corpora must cover the same sequences.
    """
    if len(corpora) < 2:
        raise ShapeError("agreement needs at least two annotators")
    concepts = ontology.binary_concept_ids()
    reference = sorted(s.ref for s in corpora[0].sequences)
    for c in corpora[1:]:
        if sorted(s.ref for s in c.sequences) != reference:
            raise ShapeError("annotators did not rate the same sequences")
    if unit == "sequence":
        items = [(ref, cid) for ref in reference for cid in concepts]
        key = lambda a: (a.sequence_ref, a.concept_id)  # noqa: E731
    elif unit == "section":
        sections = sorted({ref[0] for ref in reference})
        items = [(sid, cid) for sid in sections for cid in concepts]
        key = lambda a: (a.section_id, a.concept_id)  # noqa: E731
    else:
        raise ValueError(f"unknown agreement unit {unit!r}")
    row = {item: i for i, item in enumerate(items)}
    counts = np.zeros((len(items), 2), dtype=np.int64)
    for corpus in corpora:
        hit = np.zeros(len(items), dtype=bool)
        for a in corpus.annotations:
            i = row.get(key(a))
            if i is not None:
                hit[i] = True
        counts[:, 0] += hit
        counts[:, 1] += ~hit
    return RatingTable(counts)
