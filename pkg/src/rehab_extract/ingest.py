"""Note filtering, therapy-section extraction, sequence segmentation and
candidate-set selection for annotation."""

from __future__ import annotations

import json
import random
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence as Seq

from .errors import ConfigError, InsufficientSections, ParseError
from .ontology import Ontology

THERAPY_MARKER = "THERAPY"

DEFAULT_HEADER_PATTERNS = (
    r"^[ \t]*THERAPEUTIC[ \t]+PROCEDURES?[ \t]*[:\-.]?[ \t]*$",
    r"^[ \t]*THERAPEUTIC[ \t]+PROCEDURES?[ \t]*[:\-.]",
)
# next section: an all-caps line that ends its label with a colon
NEXT_HEADER = re.compile(r"^[ \t]*[A-Z][A-Z /&()\-]{2,}:", re.M)
PLACEHOLDER = re.compile(r"\[[A-Z][A-Z0-9_ \-]*\]")
ENUMERATOR = re.compile(r"^[ \t]*(\d+)[:.)]", re.M)

N_SCORING_CATEGORIES = 9


@dataclass(frozen=True)
class NoteFile:
    filename: str
    text: str

    def __post_init__(self):
        if not self.filename:
            raise ValueError("NoteFile.filename must be non-empty")


@dataclass(frozen=True)
class Section:
    doc_id: str
    text: str
    source_filename: str = ""
    placeholder_count: int = 0


@dataclass(frozen=True)
class Sequence:
    section_id: str
    index: int
    label_number: str
    text: str
    start: int
    end: int

    @property
    def ref(self) -> tuple[str, int]:
        return (self.section_id, self.index)

    @property
    def enumerated_text(self) -> str:
        return f"{self.label_number}: {self.text}"


def filter_note_files(files: Iterable[NoteFile], ignore_case: bool = False) -> list[NoteFile]:
    if ignore_case:
        return [f for f in files if THERAPY_MARKER in f.filename.upper()]
    return [f for f in files if THERAPY_MARKER in f.filename]


def count_placeholders(text: str) -> int:
    return len(PLACEHOLDER.findall(text))


def extract_therapy_section(note: NoteFile, header_patterns: Seq[str] = DEFAULT_HEADER_PATTERNS,
                            doc_id: str | None = None) -> Section | None:
    """Carve out the therapeutic-procedures section, or None when no header matches.

    The body runs from the line after the header (or the rest of the header
    line) to the next all-caps ``LABEL:`` line or end of note, trimmed of
    surrounding whitespace.
    """
    text = note.text
    header = None
    for pattern in header_patterns:
        header = re.search(pattern, text, re.M)
        if header:
            break
    if header is None:
        return None
    body_start = header.end()
    nxt = NEXT_HEADER.search(text, body_start)
    body_end = nxt.start() if nxt else len(text)
    while body_start < body_end and text[body_start].isspace():
        body_start += 1
    while body_end > body_start and text[body_end - 1].isspace():
        body_end -= 1
    body = text[body_start:body_end]
    if doc_id is None:
        doc_id = Path(note.filename).stem
    return Section(doc_id, body, note.filename, count_placeholders(body))


def segment_sequences(section: Section) -> list[Sequence]:
    text = section.text
    marks = list(ENUMERATOR.finditer(text))
    out = []
    for k, m in enumerate(marks):
        start = m.end()
        end = marks[k + 1].start() if k + 1 < len(marks) else len(text)
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start == end:
            continue
        out.append(Sequence(section.doc_id, len(out), m.group(1), text[start:end], start, end))
    return out


def _keyword_regex(keyword: str) -> re.Pattern:
    # letters delimit words, so "x" still hits "x10" and "2x10"
    return re.compile(r"(?<![a-z])" + re.escape(keyword) + r"(?![a-z])")


def enrichment_score(section: Section | str, ontology: Ontology) -> int:
    groups = ontology.scoring_groups()
    if len(groups) != N_SCORING_CATEGORIES:
        raise ConfigError(f"enrichment needs {N_SCORING_CATEGORIES} scoring categories, "
                          f"ontology defines {len(groups)}")
    text = (section if isinstance(section, str) else section.text).lower()
    score = 0
    for cats in groups.values():
        keywords = [k for cat in cats for k in cat.keywords]
        if any(_keyword_regex(k).search(text) for k in keywords):
            score += 1
    return score


def select_candidate_sets(sections: Seq[Section], ontology: Ontology, n_enriched: int = 300,
                          n_random: int = 300, min_len: int = 200, seed: int = 0
                          ) -> tuple[list[Section], list[Section]]:
    """All score-9 sections topped up with a seeded draw of score-8 sections,
    plus a disjoint seeded draw of sections at least ``min_len`` long."""
    rng = random.Random(seed)
    ordered = sorted(sections, key=lambda s: s.doc_id)
    scores = {s.doc_id: enrichment_score(s, ontology) for s in ordered}
    nines = [s for s in ordered if scores[s.doc_id] == 9]
    eights = [s for s in ordered if scores[s.doc_id] == 8]
    if len(nines) >= n_enriched:
        enriched = sorted(rng.sample(nines, n_enriched), key=lambda s: s.doc_id)
    else:
        need = n_enriched - len(nines)
        if need > len(eights):
            raise InsufficientSections(
                f"enriched pool has {len(nines)} score-9 and {len(eights)} score-8 sections; "
                f"{n_enriched} requested")
        enriched = nines + sorted(rng.sample(eights, need), key=lambda s: s.doc_id)
    taken = {s.doc_id for s in enriched}
    pool = [s for s in ordered if s.doc_id not in taken and len(s.text) >= min_len]
    if n_random > len(pool):
        raise InsufficientSections(f"random pool has {len(pool)} sections of length >= {min_len}; "
                                   f"{n_random} requested")
    randoms = sorted(rng.sample(pool, n_random), key=lambda s: s.doc_id)
    return enriched, randoms


def read_note_dir(directory: str | Path) -> list[NoteFile]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError(f"not a directory: {directory}")
    return [NoteFile(p.name, p.read_text(encoding="utf-8", errors="replace"))
            for p in sorted(directory.iterdir()) if p.is_file()]


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        out.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise ParseError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return out


def section_to_dict(section: Section) -> dict:
    return asdict(section)


def section_from_dict(d: dict) -> Section:
    return Section(d["doc_id"], d["text"], d.get("source_filename", ""), int(d.get("placeholder_count", 0)))


def sequence_to_dict(seq: Sequence) -> dict:
    return asdict(seq)


def sequence_from_dict(d: dict) -> Sequence:
    return Sequence(d["section_id"], int(d["index"]), str(d["label_number"]), d["text"],
                    int(d["start"]), int(d["end"]))
