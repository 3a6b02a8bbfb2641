"""Span-level and sequence-level scoring with numeric checks, plus the per-concept report."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence as Seq

from .errors import KeyMismatch
from .goldstore import TEST, TRAIN, GoldCorpus, SeqRef, SpanAnnotation, positive_counts, project_spans
from .numeric import DURATION, REPS, SETS, NumericValue
from .ontology import Ontology, lookup_concept

MIN_SUPPORT = 10
REPORT_SCHEMA = 1
NUMERIC_CATEGORIES = (DURATION, SETS, REPS)

# Figures published for the original (private) clinical corpus.  They are
# carried in reports for orientation only and are never asserted against.
REFERENCE_ROWS = (
    {"name": "average f1 over 40 reported concepts", "scores": {
        "rules NER": 0.878, "rules sequence": 0.891, "LogReg": 0.861, "SvmPoly2": 0.835,
        "AdaBoost": 0.875, "GradBoost": 0.883}},
    {"name": "numeric f1 (rules)", "scores": {DURATION: 0.65, SETS: 0.58, REPS: 0.88}},
    {"name": "prompt classification averages over 67 concepts",
     "scores": {"precision": 0.29, "recall": 0.84, "f1": 0.38}},
)


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


@dataclass(frozen=True)
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return _ratio(2 * p * r, p + r)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def _multiset_prf(pred: Iterable, gold: Iterable) -> PRF:
    # exact keys make greedy one-to-one matching optimal: tp = sum of min counts
    cp, cg = Counter(pred), Counter(gold)
    tp = sum(min(n, cg[k]) for k, n in cp.items())
    return PRF(tp, sum(cp.values()) - tp, sum(cg.values()) - tp)


def _span_key(a: SpanAnnotation):
    return a.section_id, a.seq_index, a.concept_id, a.start, a.end


def ner_exact_prf(pred: Iterable[SpanAnnotation], gold: Iterable[SpanAnnotation], concept_id: str) -> PRF:
    return _multiset_prf((_span_key(a) for a in pred if a.concept_id == concept_id),
                         (_span_key(a) for a in gold if a.concept_id == concept_id))


LabelMap = Mapping[tuple[SeqRef, str], bool]


def sequence_prf(pred: LabelMap, gold: LabelMap, concept_id: str) -> PRF:
    """Binary PRF over the sequences that ``gold`` labels for ``concept_id``."""
    p = {k[0]: bool(v) for k, v in pred.items() if k[1] == concept_id}
    g = {k[0]: bool(v) for k, v in gold.items() if k[1] == concept_id}
    if p.keys() != g.keys():
        raise KeyMismatch(f"{concept_id}: prediction covers {len(p)} sequences, gold {len(g)}"
                          f" ({len(p.keys() ^ g.keys())} differ)")
    tp = sum(1 for k, v in g.items() if v and p[k])
    fp = sum(1 for k, v in g.items() if not v and p[k])
    fn = sum(1 for k, v in g.items() if v and not p[k])
    return PRF(tp, fp, fn)


NumericItem = tuple[SeqRef, NumericValue]


def numeric_items(spans: Iterable[SpanAnnotation]) -> list[NumericItem]:
    return [(a.sequence_ref, NumericValue(a.concept_id, a.numeric_value)) for a in spans
            if a.concept_id in NUMERIC_CATEGORIES and a.numeric_value is not None]


def numeric_prf(pred: Iterable[NumericItem], gold: Iterable[NumericItem]) -> dict[str, PRF]:
    pred, gold = list(pred), list(gold)
    out = {}
    for cat in NUMERIC_CATEGORIES:
        out[cat] = _multiset_prf(((r, v.value) for r, v in pred if v.category == cat),
                                 ((r, v.value) for r, v in gold if v.category == cat))
    return out


def support_counts(gold: GoldCorpus, ontology: Ontology) -> dict[str, tuple[int, int]]:
    train = positive_counts(gold, ontology, TRAIN)
    test = positive_counts(gold, ontology, TEST)
    return {c: (train.get(c, 0), test.get(c, 0)) for c in ontology.binary_concept_ids()}


def reportable_concepts(gold: GoldCorpus, ontology: Ontology, min_support: int = MIN_SUPPORT) -> list[str]:
    """Concepts with at least ``min_support`` positive sequences in train and in test."""
    return [c for c, (tr, te) in support_counts(gold, ontology).items()
            if tr >= min_support and te >= min_support]


@dataclass
class ReportRow:
    concept_id: str
    display_name: str
    category: str
    scores: dict[str, PRF]
    train_support: int
    test_support: int
    best: list[str]


@dataclass
class MacroScore:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    methods: list[str]
    rows: list[ReportRow]
    macro_average: dict[str, MacroScore]
    omitted_concepts: list[dict]
    numeric: dict[str, dict[str, PRF]] = field(default_factory=dict)
    references: list[dict] = field(default_factory=lambda: [dict(r) for r in REFERENCE_ROWS])

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "methods": self.methods,
            "rows": [{"concept_id": r.concept_id, "display_name": r.display_name,
                      "category": r.category, "train_support": r.train_support,
                      "test_support": r.test_support, "best": r.best,
                      "scores": {m: s.to_dict() for m, s in r.scores.items()}} for r in self.rows],
            "macro_average": {m: vars(s) for m, s in self.macro_average.items()},
            "mean_support": {"train": _mean([r.train_support for r in self.rows]),
                             "test": _mean([r.test_support for r in self.rows])},
            "omitted_concepts": self.omitted_concepts,
            "numeric": {m: {c: p.to_dict() for c, p in d.items()} for m, d in self.numeric.items()},
            "references": self.references,
        }


def _mean(xs: Seq[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


def build_report(gold: GoldCorpus, ontology: Ontology,
                 sequence_preds: Mapping[str, LabelMap] | None = None,
                 span_preds: Mapping[str, Seq[SpanAnnotation]] | None = None,
                 min_support: int = MIN_SUPPORT) -> EvalReport:
    """Score every method on the test split of ``gold``.

    ``span_preds`` (e.g. rule-tagger output) contribute two columns each:
    exact-span NER and the projected sequence labels.  ``sequence_preds``
    contribute one column each.  Best-method flags consider sequence columns
    only; ties flag every tied method.
    """
    sequence_preds = dict(sequence_preds or {})
    span_preds = dict(span_preds or {})
    test_seqs = gold.sequences_in(TEST)
    test_refs = {s.ref for s in test_seqs}
    concepts = ontology.binary_concept_ids()
    gold_labels = project_spans(gold.annotations, test_seqs, concepts)
    gold_spans = [a for a in gold.annotations if a.sequence_ref in test_refs]

    ner_cols: dict[str, str] = {}
    seq_cols: dict[str, LabelMap] = {}
    numeric: dict[str, dict[str, PRF]] = {}
    for name, spans in span_preds.items():
        spans = [a for a in spans if a.sequence_ref in test_refs]
        ner_cols[f"{name} NER"] = name
        seq_cols[f"{name} sequence"] = project_spans(spans, test_seqs, concepts)
        span_preds[name] = spans
        numeric[name] = numeric_prf(numeric_items(spans), numeric_items(gold_spans))
    for name, labels in sequence_preds.items():
        seq_cols[name] = {k: v for k, v in labels.items() if k[0] in test_refs}
    methods = list(ner_cols) + list(seq_cols)

    support = support_counts(gold, ontology)
    rows, omitted = [], []
    for c in concepts:
        tr, te = support[c]
        if tr < min_support or te < min_support:
            omitted.append({"concept_id": c, "train_support": tr, "test_support": te,
                            "reason": f"fewer than {min_support} positive sequences in "
                                      + ("train and test" if tr < min_support and te < min_support
                                         else "train" if tr < min_support else "test")})
            continue
        scores = {col: ner_exact_prf(span_preds[src], gold_spans, c) for col, src in ner_cols.items()}
        scores.update({col: sequence_prf(labels, gold_labels, c) for col, labels in seq_cols.items()})
        top = max((scores[m].f1 for m in seq_cols), default=None)
        best = [m for m in seq_cols if scores[m].f1 == top] if top is not None else []
        concept = ontology.category_of(c)
        rows.append(ReportRow(c, lookup_concept(ontology, c).display_name, concept.name, scores, tr, te, best))
    macro = {m: MacroScore(_mean([r.scores[m].precision for r in rows]),
                           _mean([r.scores[m].recall for r in rows]),
                           _mean([r.scores[m].f1 for r in rows])) for m in methods}
    return EvalReport(methods, rows, macro, omitted, numeric)


def render_markdown(report: EvalReport) -> str:
    head = ["Category", "Concept", *report.methods, "Train positives", "Test positives"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    last_cat = None
    for r in report.rows:
        cells = []
        for m in report.methods:
            v = f"{r.scores[m].f1:.3f}"
            cells.append(f"**{v}**" if m in r.best else v)
        cat = r.category if r.category != last_cat else ""
        last_cat = r.category
        lines.append("| " + " | ".join([cat, r.display_name, *cells, str(r.train_support),
                                         str(r.test_support)]) + " |")
    avg = [f"{report.macro_average[m].f1:.3f}" for m in report.methods]
    tr = _mean([r.train_support for r in report.rows])
    te = _mean([r.test_support for r in report.rows])
    lines.append("| Average | | " + " | ".join(avg) + f" | {tr:.0f} | {te:.0f} |")
    out = ["# Per-concept F1 on the test split", "", *lines, ""]
    if report.numeric:
        out += ["## Numeric values", "", "| Method | Category | P | R | F1 |", "|---|---|---|---|---|"]
        for m, d in report.numeric.items():
            for c, p in d.items():
                out.append(f"| {m} | {c} | {p.precision:.3f} | {p.recall:.3f} | {p.f1:.3f} |")
        out.append("")
    if report.omitted_concepts:
        out += [f"## Omitted concepts ({len(report.omitted_concepts)})", ""]
        out += [f"- {o['concept_id']}: train {o['train_support']}, test {o['test_support']}"
                for o in report.omitted_concepts]
        out.append("")
    out += ["## Reference figures (original clinical corpus, not reproduced)", ""]
    for ref in report.references:
        vals = ", ".join(f"{k} {v}" for k, v in ref["scores"].items())
        out.append(f"- {ref['name']}: {vals}")
    return "\n".join(out) + "\n"


def write_report(report: EvalReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    (out_dir / "report.md").write_text(render_markdown(report), encoding="utf-8")
