"""Seeded generator of therapeutic-procedure sections with aligned gold spans.

Items are assembled slot by slot (motion, side, location, plane, exercise,
purpose, position, dosage, description) from a phrasebook; every inserted
phrase records its gold span at insertion time.  Noise is applied afterwards
and span offsets are carried through the edits: typos shrink or shift spans,
placeholders that hit an annotated phrase drop it (and the drop is logged in
the trace).

Phrasebook entries are either plain strings (the whole string is the span),
strings with ``<...>`` marking the annotated part (``"for <strength>"``), or
objects ``{"text", "spans": [[concept_id, start, end], ...], "requires", "fills"}``.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .goldstore import ENRICHED, RANDOM, GoldCorpus, SpanAnnotation
from .ingest import Section, Sequence, count_placeholders
from .numeric import DURATION, REPS, SETS
from .ontology import Ontology

DEFAULT_PHRASEBOOK = "phrasebook.json"

SLOT_OF_CATEGORY = {
    "Type of Motion": "motion",
    "Side of Body": "side",
    "Location on Body": "location",
    "Plane of Motion": "plane",
    "Exercise Type": "exercise",
    "Exercise Purpose": "purpose",
    "Body Position": "position",
    "Description": "description",
}
HEAD_SLOTS = ("motion", "side", "location", "plane", "exercise", "purpose", "position")
SLOT_PROB = {"motion": 0.3, "side": 0.45, "location": 0.6, "plane": 0.4, "exercise": 0.55,
             "purpose": 0.12, "position": 0.3, "dosage": 0.7, "description": 0.92}
FILLER_PROB = 0.3
NAME_SLOT_PROB = 0.1
ABBREVIATIONS = {"left": "L", "right": "R", "bilateral": "B", "anterior": "A"}
PLACEHOLDERS = ("[PERSONALNAME]", "[ADDRESS]", "[DATE]")
# fraction of placeholder_rate applied to ordinary words (de-identification overreach)
STRAY_PLACEHOLDER_FACTOR = 0.1


@dataclass(frozen=True)
class Phrase:
    text: str
    spans: tuple[tuple[str, int, int], ...]
    requires: str | None = None
    fills: tuple[str, ...] = ()


@dataclass
class GeneratorConfig:
    seed: int = 42
    n_sections: int = 300
    items_per_section: tuple[int, int] = (8, 14)
    phrasebook: dict | None = None
    typo_rate: float = 0.0
    placeholder_rate: float = 0.0
    heldout_rate: float = 0.0
    empty_item_rate: float = 0.03
    min_positives: dict[str, int] = field(default_factory=dict)

    def validate(self, ontology: Ontology) -> None:
        for name in ("typo_rate", "placeholder_rate", "heldout_rate", "empty_item_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        lo, hi = self.items_per_section
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad items_per_section range {self.items_per_section}")
        if self.n_sections < 1:
            raise ConfigError("n_sections must be positive")
        book = self.phrasebook if self.phrasebook is not None else load_phrasebook()
        for key in ("concepts", "heldout"):
            for cid, entries in book.get(key, {}).items():
                if cid not in ontology:
                    raise ConfigError(f"phrasebook concept {cid!r} not in ontology")
                for entry in entries:
                    for span_cid, _, _ in parse_entry(cid, entry).spans:
                        if span_cid not in ontology:
                            raise ConfigError(f"phrasebook span concept {span_cid!r} not in ontology")
        for cid in self.min_positives:
            if cid not in book.get("concepts", {}):
                raise ConfigError(f"min_positives concept {cid!r} has no phrasebook entries")


@dataclass(frozen=True)
class SyntheticCorpus:
    corpus: GoldCorpus
    trace: tuple[dict, ...]


def load_phrasebook(path: str | Path | None = None) -> dict:
    if path is None:
        path = Path(str(resources.files("rehab_extract") / "data" / DEFAULT_PHRASEBOOK))
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load phrasebook {path}: {exc}") from exc


_MARK = re.compile(r"<([^<>]+)>")


def parse_entry(concept_id: str, entry) -> Phrase:
    if isinstance(entry, str):
        m = _MARK.search(entry)
        if m is None:
            return Phrase(entry, ((concept_id, 0, len(entry)),))
        text = entry[:m.start()] + m.group(1) + entry[m.end():]
        return Phrase(text, ((concept_id, m.start(), m.start() + len(m.group(1))),))
    if not isinstance(entry, dict) or "text" not in entry:
        raise ConfigError(f"bad phrasebook entry for {concept_id!r}: {entry!r}")
    text = entry["text"]
    spans = tuple((c, int(s), int(e)) for c, s, e in entry.get("spans", [[concept_id, 0, len(text)]]))
    for _, s, e in spans:
        if not 0 <= s < e <= len(text):
            raise ConfigError(f"phrasebook span [{s},{e}) outside {text!r}")
    return Phrase(text, spans, entry.get("requires"), tuple(entry.get("fills", ())))


class _ItemBuilder:
    """Accumulates text pieces and their spans for one exercise item."""

    def __init__(self):
        self.text = ""
        self.spans: list[tuple[str, int, int, int | None]] = []
        self.name_tokens: list[tuple[int, int]] = []
        self.pieces: list[str] = []

    def add(self, piece: str, spans=(), sep: str = " ", label: str = "") -> int:
        if self.text:
            self.text += sep
        offset = len(self.text)
        self.text += piece
        for cid, s, e, *value in spans:
            self.spans.append((cid, offset + s, offset + e, value[0] if value else None))
        self.pieces.append(label or piece)
        return offset


def _dosage(rng: random.Random) -> tuple[str, list]:
    s, r = rng.randint(1, 4), rng.randint(5, 30)
    sec, mins = rng.choice([5, 10, 15, 20, 30, 45, 60]), rng.randint(1, 15)
    kind = rng.choices(["nxm", "xr", "rx", "reps", "sets_reps", "sec", "min", "hold", "nxm_dur"],
                       weights=[5, 3, 1, 2, 1, 2, 2, 1, 1])[0]
    if kind in ("nxm", "nxm_dur"):
        text = f"{s}x{r}"
        spans = [(SETS, 0, len(text), s), (REPS, 0, len(text), r)]
        if kind == "nxm_dur":
            dur = f"{sec} sec"
            spans.append((DURATION, len(text) + 1, len(text) + 1 + len(dur), sec))
            text = f"{text} {dur}"
        return text, spans
    if kind == "xr":
        text = f"x{r}"
        return text, [(REPS, 0, len(text), r)]
    if kind == "rx":
        text = f"{r} x"
        return text, [(REPS, 0, len(text), r)]
    if kind == "reps":
        text = f"{r} reps"
        return text, [(REPS, 0, len(text), r)]
    if kind == "sets_reps":
        a, b = f"{s} sets", f"{r} reps"
        return f"{a} of {b}", [(SETS, 0, len(a), s), (REPS, len(a) + 4, len(a) + 4 + len(b), r)]
    if kind == "sec":
        text = rng.choice([f"{sec} sec", f"{sec} seconds", f'{sec}"'])
        return text, [(DURATION, 0, len(text), sec)]
    if kind == "min":
        text = rng.choice([f"{mins} min", f"{mins} minutes", f"{mins}'"])
        return text, [(DURATION, 0, len(text), mins * 60)]
    body = f"{sec} sec"
    return f"hold {body}", [(DURATION, 5, 5 + len(body), sec)]


class _Generator:
    def __init__(self, config: GeneratorConfig, ontology: Ontology):
        config.validate(ontology)
        self.config = config
        self.ontology = ontology
        self.rng = random.Random(config.seed)
        book = config.phrasebook if config.phrasebook is not None else load_phrasebook()
        self.book = book
        self.phrases: dict[str, list[Phrase]] = {}
        self.heldout: dict[str, list[Phrase]] = {}
        self.slot_concepts: dict[str, list[str]] = {}
        for cid, entries in book.get("concepts", {}).items():
            self.phrases[cid] = [parse_entry(cid, e) for e in entries]
            slot = SLOT_OF_CATEGORY.get(ontology.category_of(cid).name)
            if slot is None:
                raise ConfigError(f"concept {cid!r} belongs to no generator slot")
            self.slot_concepts.setdefault(slot, []).append(cid)
        for cid, entries in book.get("heldout", {}).items():
            self.heldout[cid] = [parse_entry(cid, e) for e in entries]
        self.slot_of = {cid: slot for slot, cids in self.slot_concepts.items() for cid in cids}

    # -- planning --------------------------------------------------------

    def _plan_quotas(self, n_items: int) -> list[dict[str, str]]:
        forced: list[dict[str, str]] = [{} for _ in range(n_items)]
        for cid in sorted(self.config.min_positives):
            quota = self.config.min_positives[cid]
            slot = self.slot_of[cid]
            free = [i for i in range(n_items) if slot not in forced[i]]
            if quota > len(free):
                raise ConfigError(f"cannot place {quota} positives for {cid!r} in {n_items} items")
            for i in self.rng.sample(free, quota):
                forced[i][slot] = cid
        return forced

    # -- item assembly ---------------------------------------------------

    def _pick_phrase(self, cid: str, avoid_fills: bool) -> Phrase:
        pool = self.phrases[cid]
        if self.config.heldout_rate and self.heldout.get(cid) and self.rng.random() < self.config.heldout_rate:
            pool = self.heldout[cid]
        if avoid_fills:
            pool = [p for p in pool if not p.fills] or pool
        return self.rng.choice(pool)

    def _item(self, forced: dict[str, str]) -> _ItemBuilder:
        rng = self.rng
        chosen = {slot for slot in SLOT_PROB if rng.random() < SLOT_PROB[slot]}
        chosen |= set(forced)
        if not chosen & set(HEAD_SLOTS):
            chosen.add("exercise")
        picks: dict[str, Phrase] = {}
        for slot in HEAD_SLOTS + ("description",):
            if slot not in chosen or slot in picks or not self.slot_concepts.get(slot):
                continue
            cid = forced.get(slot) or rng.choice(self.slot_concepts[slot])
            phrase = self._pick_phrase(cid, avoid_fills="location" in forced)
            picks[slot] = phrase
            for filled in phrase.fills:
                picks.setdefault(filled, None)
            if phrase.requires and phrase.requires not in picks:
                chosen.add(phrase.requires)
        item = _ItemBuilder()
        for slot in HEAD_SLOTS:
            phrase = picks.get(slot)
            if phrase is not None:
                item.add(phrase.text, phrase.spans, label=slot)
            if slot == "exercise":
                if rng.random() < NAME_SLOT_PROB:
                    template = rng.choice(self.book.get("name_slots", ["{name} maze"]))
                    name = rng.choice(self.book.get("names", ["Smith"]))
                    at = item.add(template.format(name=name), label="name")
                    k = template.index("{name}")
                    item.name_tokens.append((at + k, at + k + len(name)))
                if rng.random() < FILLER_PROB and self.book.get("fillers"):
                    item.add(rng.choice(self.book["fillers"]), label="filler")
        if "dosage" in chosen:
            text, spans = _dosage(rng)
            item.add(text, spans, sep=" - " if item.text else "", label="dosage")
        phrase = picks.get("description")
        if phrase is not None:
            item.add(phrase.text, phrase.spans, label="description")
        return item

    # -- noise -----------------------------------------------------------

    def _noise(self, item: _ItemBuilder):
        cfg, rng = self.config, self.rng
        edits = []
        if cfg.typo_rate == 0 and cfg.placeholder_rate == 0:
            return item.text, list(item.spans), edits, []
        names = set(item.name_tokens)
        for m in re.finditer(r"[A-Za-z]+", item.text):
            a, b = m.span()
            word = m.group()
            if (a, b) in names:
                if rng.random() < cfg.placeholder_rate:
                    edits.append((a, b, "[PERSONALNAME]", "name_placeholder"))
                continue
            if len(word) >= 3 and rng.random() < cfg.placeholder_rate * STRAY_PLACEHOLDER_FACTOR:
                edits.append((a, b, rng.choice(PLACEHOLDERS), "placeholder"))
                continue
            if rng.random() < cfg.typo_rate:
                if word.lower() in ABBREVIATIONS:
                    edits.append((a, b, ABBREVIATIONS[word.lower()], "abbreviation"))
                elif len(word) >= 4:
                    edits.append((a, b, word[:-1], "drop_final"))
        text, kept, dropped = _apply_edits(item.text, item.spans, edits)
        return text, kept, edits, dropped

    # -- corpus ----------------------------------------------------------

    def run(self) -> SyntheticCorpus:
        cfg, rng = self.config, self.rng
        lo, hi = cfg.items_per_section
        counts = [rng.randint(lo, hi) for _ in range(cfg.n_sections)]
        forced = self._plan_quotas(sum(counts))
        sections, sequences, annotations, trace = [], [], [], []
        origin = {}
        item_no = 0
        n_enriched = cfg.n_sections // 2
        for k, n_items in enumerate(counts):
            sid = f"synth-{cfg.seed}-{k:04d}"
            origin[sid] = ENRICHED if k < n_enriched else RANDOM
            sep = rng.choices([":", ".", ")"], weights=[8, 1, 1])[0]
            lines = []
            text_len = 0
            seq_index = 0
            for n in range(1, n_items + 1):
                item = self._item(forced[item_no])
                item_no += 1
                prefix = f"{n}{sep}"
                if rng.random() < cfg.empty_item_rate:
                    lines.append(prefix)
                    text_len += len(prefix) + 1
                    continue
                text, spans, edits, dropped = self._noise(item)
                start = text_len + len(prefix) + 1
                lines.append(f"{prefix} {text}")
                text_len += len(lines[-1]) + 1
                sequences.append(Sequence(sid, seq_index, str(n), text, start, start + len(text)))
                for cid, s, e, value in spans:
                    annotations.append(SpanAnnotation(sid, seq_index, cid, s, e, value))
                trace.append({"section_id": sid, "seq_index": seq_index, "slots": item.pieces,
                              "edits": [list(e) for e in edits],
                              "dropped": [list(d) for d in dropped]})
                seq_index += 1
            section_text = "\n".join(lines)
            sections.append(Section(sid, section_text, f"PT_THERAPY_{sid}.txt",
                                    count_placeholders(section_text)))
        annotations.sort(key=lambda a: (a.section_id, a.seq_index, a.start, a.end, a.concept_id))
        corpus = GoldCorpus(tuple(sections), tuple(sequences), tuple(annotations), {}, origin)
        return SyntheticCorpus(corpus, tuple(trace))


def _apply_edits(text: str, spans, edits):
    """Apply non-overlapping token edits left to right, remapping span offsets."""
    out, cursor, delta = [], 0, 0
    shifts = []  # (a, b, new_len_delta, kind, cumulative delta before edit)
    for a, b, new, kind in edits:
        out.append(text[cursor:a])
        out.append(new)
        cursor = b
        shifts.append((a, b, len(new) - (b - a), kind, delta))
        delta += len(new) - (b - a)
    out.append(text[cursor:])
    kept, dropped = [], []
    for cid, s, e, value in spans:
        new_s, new_e, lost = s, e, False
        for a, b, d, kind, _ in shifts:
            if b <= s:
                new_s += d
                new_e += d
            elif a >= e:
                continue
            elif s <= a and b <= e and not kind.endswith("placeholder"):
                new_e += d
            else:
                lost = True
                break
        if lost or new_e <= new_s:
            dropped.append((cid, s, e, value))
        else:
            kept.append((cid, new_s, new_e, value))
    return "".join(out), kept, dropped


def generate_corpus(config: GeneratorConfig, ontology: Ontology) -> SyntheticCorpus:
    return _Generator(config, ontology).run()


def render_note(section: Section) -> str:
    """Wrap a section in a minimal note so the ingest path can re-extract it."""
    return (f"PATIENT: [PERSONALNAME]\nHISTORY: synthetic visit\n"
            f"THERAPEUTIC PROCEDURES:\n{section.text}\n"
            f"ASSESSMENT:\nTolerated session.\n")


def write_notes(corpus: GoldCorpus, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for sec in corpus.sections:
        path = directory / (sec.source_filename or f"PT_THERAPY_{sec.doc_id}.txt")
        path.write_text(render_note(sec), encoding="utf-8")
        paths.append(path)
    return paths
