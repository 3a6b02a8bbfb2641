"""Declarative regular-expression span tagger.

``rules.jsonl`` holds one rule per line (blank lines and lines starting with
``#`` are ignored)::

    {"concept_id": "side_left", "pattern": "\\\\bL(?=UE\\\\b|LE\\\\b)", "priority": 10,
     "case_sensitive": true,
     "context": {"require_following": "^\\\\s*(?:shoulder|knee)", "window": 12}}

Patterns are case-insensitive unless ``case_sensitive`` is set.  A context
guard is searched in the ``window`` characters after (``require_following``)
or before (``require_preceding``) the match; anchor with ``^``/``$`` to demand
adjacency.  Rules for the integer categories normalize the matched text to an
integer; ``"numeric": "sets_reps"`` turns one ``NxM`` match into a sets span
and a reps span over the same characters.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import NoNumber, ParseError, PatternError, UnknownConcept
from .goldstore import SpanAnnotation, project_spans
from .ingest import Sequence
from .numeric import SETS_REPS, normalize_numeric
from .ontology import Ontology

DEFAULT_RULES = "rules.jsonl"
DEFAULT_WINDOW = 24
RULES_SCHEMA = 1


@dataclass(frozen=True)
class ContextGuard:
    require_following: re.Pattern | None = None
    require_preceding: re.Pattern | None = None
    window: int = DEFAULT_WINDOW

    def passes(self, text: str, start: int, end: int) -> bool:
        if self.require_following is not None:
            if not self.require_following.search(text[end:end + self.window]):
                return False
        if self.require_preceding is not None:
            if not self.require_preceding.search(text[max(0, start - self.window):start]):
                return False
        return True


@dataclass(frozen=True)
class Rule:
    concept_id: str
    pattern: re.Pattern
    priority: int = 0
    context: ContextGuard | None = None
    numeric: str | None = None
    line: int = 0


@dataclass(frozen=True)
class CompiledTagger:
    rules: tuple[Rule, ...]
    ontology: Ontology

    def concepts(self) -> set[str]:
        out = set()
        for r in self.rules:
            out.add(r.concept_id)
            if r.numeric == SETS_REPS:
                out.add("reps")
        return out


def default_rules_path() -> Path:
    return Path(str(resources.files("rehab_extract") / "data" / DEFAULT_RULES))


def _compile(pattern: str, flags: int, line: int, what: str) -> re.Pattern:
    if not isinstance(pattern, str) or not pattern:
        raise PatternError(f"{what} must be a non-empty string", line)
    try:
        return re.compile(pattern, flags)
    except re.error as exc:
        raise PatternError(f"{what} {pattern!r}: {exc}", line) from None


def compile_rule_records(lines: Iterable[tuple[int, dict]], ontology: Ontology) -> CompiledTagger:
    rules = []
    for line, rec in lines:
        if not isinstance(rec, dict) or "concept_id" not in rec or "pattern" not in rec:
            raise ParseError(f"line {line}: rule needs 'concept_id' and 'pattern'")
        cid = rec["concept_id"]
        if cid not in ontology:
            raise UnknownConcept(f"line {line}: unknown concept {cid!r}")
        flags = 0 if rec.get("case_sensitive") else re.IGNORECASE
        pattern = _compile(rec["pattern"], flags, line, "pattern")
        numeric = rec.get("numeric")
        is_numeric = ontology.is_numeric(cid)
        if numeric is not None and numeric != SETS_REPS:
            raise ParseError(f"line {line}: unknown numeric mode {numeric!r}")
        if numeric == SETS_REPS and (cid != "sets" or "reps" not in ontology):
            raise ParseError(f"line {line}: sets_reps rules must target 'sets' with 'reps' defined")
        if is_numeric and numeric is None:
            numeric = cid
        guard = None
        ctx = rec.get("context")
        if ctx:
            ctx_flags = 0 if ctx.get("case_sensitive") else re.IGNORECASE
            following = ctx.get("require_following")
            preceding = ctx.get("require_preceding")
            guard = ContextGuard(
                _compile(following, ctx_flags, line, "require_following") if following else None,
                _compile(preceding, ctx_flags, line, "require_preceding") if preceding else None,
                int(ctx.get("window", DEFAULT_WINDOW)),
            )
        rules.append(Rule(cid, pattern, int(rec.get("priority", 0)), guard, numeric, line))
    # stable: equal priorities keep file order
    rules.sort(key=lambda r: -r.priority)
    return CompiledTagger(tuple(rules), ontology)


def compile_rules(path: str | Path | None, ontology: Ontology) -> CompiledTagger:
    path = Path(path) if path is not None else default_rules_path()
    try:
        raw_lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read rules {path}: {exc}") from exc
    records = []
    for n, raw in enumerate(raw_lines, 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            records.append((n, json.loads(stripped)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from None
    return compile_rule_records(records, ontology)


def _candidates(tagger: CompiledTagger, text: str):
    for order, rule in enumerate(tagger.rules):
        for m in rule.pattern.finditer(text):
            start, end = m.span()
            if start == end:
                continue
            if rule.context is not None and not rule.context.passes(text, start, end):
                continue
            if rule.numeric is None:
                yield rule.concept_id, start, end, None, order
                continue
            try:
                values = normalize_numeric(m.group(), rule.numeric)
            except NoNumber:
                continue
            for v in values:
                yield v.category, start, end, v.value, order


def tag_text(tagger: CompiledTagger, text: str, section_id: str = "", seq_index: int = 0
             ) -> list[SpanAnnotation]:
    by_concept: dict[str, list] = {}
    for cand in _candidates(tagger, text):
        by_concept.setdefault(cand[0], []).append(cand)
    spans = []
    for cid, cands in by_concept.items():
        # widest match wins; ties go to the higher-priority (earlier) rule, then leftmost
        cands.sort(key=lambda c: (-(c[2] - c[1]), c[4], c[1]))
        kept: list[tuple[int, int, int | None]] = []
        for _, start, end, value, _ in cands:
            if any(start < k_end and k_start < end for k_start, k_end, _ in kept):
                continue
            kept.append((start, end, value))
        spans.extend(SpanAnnotation(section_id, seq_index, cid, s, e, v) for s, e, v in kept)
    spans.sort(key=lambda a: (a.start, a.end, a.concept_id))
    return spans


def tag_sequence(tagger: CompiledTagger, seq: Sequence) -> list[SpanAnnotation]:
    return tag_text(tagger, seq.text, seq.section_id, seq.index)


def tag_sequences(tagger: CompiledTagger, sequences: Iterable[Sequence]) -> list[SpanAnnotation]:
    out = []
    for seq in sequences:
        out.extend(tag_sequence(tagger, seq))
    return out


def project_to_sequences(spans: Iterable[SpanAnnotation], sequences: Iterable[Sequence],
                         ontology: Ontology) -> dict[tuple[tuple[str, int], str], bool]:
    """Sequence-level labels: true iff at least one span of the concept lies in the sequence."""
    return project_spans(spans, list(sequences), ontology.binary_concept_ids())

