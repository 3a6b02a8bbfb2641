"""``rehab-extract`` command line.

Global options (``--seed``, ``--config``, ``--ontology``, ``--log-level``) are
accepted before or after the subcommand.  ``--config`` names a JSON file::

    {"seed": 7, "ontology": "onto.json",
     "train": {"kind": "gb", "max_epochs": 2000},
     "synth": {"typo_rate": 0.02}}

Top-level keys set global options; a section named after a subcommand sets
that subcommand's defaults.  Explicit flags always win.

Exit codes: 0 success, 1 invalid input or failed run, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .classifiers import features, models
from .errors import ConfigError, RehabExtractError, ValidationError
from .evaluator import REPORT_SCHEMA, build_report, write_report
from .goldstore import (ENRICHED, GOLD_SCHEMA, RANDOM, TRAIN, GoldCorpus, SpanAnnotation,
                        agreement_table, corpus_from_records, fleiss_kappa, sequence_targets,
                        split_train_test, validate_gold, write_gold)
from .ingest import (Section, enrichment_score, extract_therapy_section, filter_note_files,
                     read_jsonl, read_note_dir, section_from_dict, section_to_dict,
                     segment_sequences, select_candidate_sets, sequence_from_dict, sequence_to_dict,
                     write_jsonl)
from .ontology import load_ontology
from .ruletagger import RULES_SCHEMA, compile_rules, tag_sequences

log = logging.getLogger("rehab_extract")

DEFAULT_SEED = 42
GLOBAL_DEFAULTS = {"seed": DEFAULT_SEED, "ontology": None, "log_level": "INFO"}


def _global_options() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subparser from overwriting a value given before the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 42)")
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    p.add_argument("--ontology", default=argparse.SUPPRESS, help="ontology JSON (default: bundled)")
    p.add_argument("--log-level", default=argparse.SUPPRESS,
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def _train_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training hyperparameters")
    for f in fields(models.TrainConfig):
        g.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=None,
                       dest=f.name, help=f"default {f.default}")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, list[argparse.ArgumentParser]]]:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="rehab-extract", parents=[common],
                                     description="Concept extraction from rehabilitation therapy notes.")
    parser.add_argument("--version", action="store_true", help="print version and format schemas")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    leaves: dict[str, list[argparse.ArgumentParser]] = {}

    def add(name, help, parent=sub, group=None):
        p = parent.add_parser(name, help=help, parents=[common])
        leaves.setdefault(group or name, []).append(p)
        return p

    p = add("sections", "carve therapy sections and sequences out of a note directory")
    p.add_argument("--notes", required=True, help="directory of note files")
    p.add_argument("--out", required=True, help="sections JSONL")
    p.add_argument("--sequences-out", help="sequences JSONL (default: sequences.jsonl beside --out)")
    p.add_argument("--ignore-case", action="store_true", help="case-insensitive filename filter")

    p = add("enrich", "score sections and draw the enriched and random candidate sets")
    p.add_argument("--sections", required=True, help="sections JSONL")
    p.add_argument("--out", required=True, help="gold skeleton JSONL (no annotations)")
    p.add_argument("--min-len", type=int, default=200)
    p.add_argument("--n-enriched", type=int, default=300)
    p.add_argument("--n-random", type=int, default=300)

    p = add("synth", "generate a synthetic annotated corpus")
    p.add_argument("--sections", type=int, default=300, dest="n_sections")
    p.add_argument("--out", required=True, help="gold JSONL")
    p.add_argument("--items-min", type=int, default=8)
    p.add_argument("--items-max", type=int, default=14)
    p.add_argument("--typo-rate", type=float, default=0.0)
    p.add_argument("--placeholder-rate", type=float, default=0.0)
    p.add_argument("--heldout-rate", type=float, default=0.0)
    p.add_argument("--min-positives", action="append", default=[], metavar="CONCEPT=N")
    p.add_argument("--phrasebook", help="phrasebook JSON (default: bundled)")
    p.add_argument("--train-per-origin", type=int, help="also assign a train/test split")
    p.add_argument("--notes-dir", help="also render each section as a note file here")
    p.add_argument("--trace", help="write the generation trace JSONL here")

    gold = sub.add_parser("gold", help="validate, split, or measure agreement on gold files")
    gsub = gold.add_subparsers(dest="action", metavar="ACTION", required=True)
    p = add("validate", "check a gold file and print a summary", gsub, "gold")
    p.add_argument("--gold", required=True)
    p = add("split", "assign the train/test split", gsub, "gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-per-origin", type=int, default=125)
    p = add("kappa", "Fleiss' kappa across annotators' gold files", gsub, "gold")
    p.add_argument("--gold", required=True, nargs="+", help="one gold file per annotator")
    p.add_argument("--unit", choices=["sequence", "section"], default="sequence")

    p = add("tag", "run the rule tagger over sequences")
    p.add_argument("--rules", help="rules JSONL (default: bundled)")
    p.add_argument("--sequences", required=True, help="sequences JSONL or gold JSONL")
    p.add_argument("--out", required=True, help="spans JSONL")

    p = add("train", "train one classifier per concept on the gold train split")
    p.add_argument("--kind", choices=sorted(models.KIND_ALIASES), default="logreg")
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True, help="model bundle directory")
    _train_options(p)

    p = add("predict", "label sequences with a trained model bundle")
    p.add_argument("--models", required=True)
    p.add_argument("--sequences", required=True, help="sequences JSONL or gold JSONL")
    p.add_argument("--out", required=True, help="labels JSONL")

    p = add("eval", "score predictions against gold and write report.json / report.md")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True, nargs="+", metavar="[NAME=]FILE",
                   help="spans JSONL from 'tag' or labels JSONL from 'predict'")
    p.add_argument("--out", required=True)
    p.add_argument("--min-support", type=int, default=10)

    prompts = sub.add_parser("prompts", help="few-shot prompt construction and scoring")
    psub = prompts.add_subparsers(dest="action", metavar="ACTION", required=True)
    for action, help in (("build", "write one prompt per (concept, test sequence)"),
                         ("run", "send prompts to a backend and score the answers")):
        p = add(action, help, psub, "prompts")
        p.add_argument("--gold", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--concepts", help="comma-separated concept ids (default: all eligible)")
        if action == "run":
            p.add_argument("--backend", choices=["mock", "replay", "live"], default="mock")
            p.add_argument("--rules", help="rules JSONL for the mock backend")
            p.add_argument("--replay", help="recorded responses JSONL")
            p.add_argument("--cache", help="response cache JSONL (enables resuming)")
            p.add_argument("--endpoint", help="chat-completions URL (live)")
            p.add_argument("--model", help="model name (live)")
            p.add_argument("--token-env", default="REHAB_EXTRACT_API_KEY")
            p.add_argument("--requests-per-second", type=float, default=1.0)
    return parser, leaves


# --------------------------------------------------------------------- config

def _load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: expected a JSON object")
    return cfg


def _apply_config(cfg: dict, leaves: dict[str, list[argparse.ArgumentParser]]) -> dict:
    """Install per-command defaults; return the global values."""
    glob = {}
    for key, value in cfg.items():
        if key in leaves:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            known = set()
            for p in leaves[key]:
                dests = {a.dest for a in p._actions}
                p.set_defaults(**{k: v for k, v in value.items() if k in dests})
                known |= dests
            unknown = set(value) - known
            if unknown:
                raise ConfigError(f"config section {key!r}: unknown option(s) {', '.join(sorted(unknown))}")
        elif key in GLOBAL_DEFAULTS:
            glob[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return glob


# ------------------------------------------------------------------- helpers

def _read_corpus(path, ontology) -> GoldCorpus:
    return validate_gold(path, ontology)


def _read_sequences(path, ontology):
    records = read_jsonl(path)
    if records and "section" in records[0]:
        return list(corpus_from_records(records, ontology).sequences)
    try:
        return [sequence_from_dict(r) for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed sequence record ({exc})") from None


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _train_config(args) -> models.TrainConfig:
    given = {f.name: getattr(args, f.name) for f in fields(models.TrainConfig)
             if getattr(args, f.name, None) is not None}
    return models.TrainConfig.from_dict(given)


# ------------------------------------------------------------------ commands

def cmd_sections(args, ontology):
    notes = filter_note_files(read_note_dir(args.notes), ignore_case=args.ignore_case)
    sections, sequences = [], []
    for note in notes:
        sec = extract_therapy_section(note)
        if sec is None:
            log.warning("%s: no therapy section header", note.filename)
            continue
        sections.append(sec)
        sequences.extend(segment_sequences(sec))
    out = Path(args.out)
    seq_out = Path(args.sequences_out) if args.sequences_out else out.with_name("sequences.jsonl")
    write_jsonl(out, (section_to_dict(s) for s in sections))
    write_jsonl(seq_out, (sequence_to_dict(s) for s in sequences))
    log.info("%d notes, %d sections, %d sequences", len(notes), len(sections), len(sequences))


def cmd_enrich(args, ontology):
    try:
        sections = [section_from_dict(r) for r in read_jsonl(args.sections)]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{args.sections}: malformed section record ({exc})") from None
    enriched, randoms = select_candidate_sets(sections, ontology, args.n_enriched, args.n_random,
                                              args.min_len, args.seed)
    chosen: list[Section] = enriched + randoms
    origin = {s.doc_id: ENRICHED for s in enriched}
    origin.update({s.doc_id: RANDOM for s in randoms})
    seqs = [q for s in chosen for q in segment_sequences(s)]
    write_gold(args.out, GoldCorpus(tuple(chosen), tuple(seqs), (), {}, origin))
    scores = [enrichment_score(s, ontology) for s in enriched]
    log.info("%d enriched (min score %s), %d random", len(enriched), min(scores, default="-"), len(randoms))


def cmd_synth(args, ontology):
    from .syngen import GeneratorConfig, generate_corpus, load_phrasebook, write_notes
    quotas = {}
    for item in args.min_positives:
        cid, sep, n = item.partition("=")
        if not sep or not n.isdigit():
            raise ConfigError(f"--min-positives expects CONCEPT=N, got {item!r}")
        quotas[cid] = int(n)
    config = GeneratorConfig(seed=args.seed, n_sections=args.n_sections,
                             items_per_section=(args.items_min, args.items_max),
                             phrasebook=load_phrasebook(args.phrasebook) if args.phrasebook else None,
                             typo_rate=args.typo_rate, placeholder_rate=args.placeholder_rate,
                             heldout_rate=args.heldout_rate, min_positives=quotas)
    synth = generate_corpus(config, ontology)
    corpus = synth.corpus
    if args.train_per_origin is not None:
        corpus = split_train_test(corpus, args.train_per_origin, args.seed)
    write_gold(args.out, corpus)
    if args.trace:
        write_jsonl(args.trace, synth.trace)
    if args.notes_dir:
        Path(args.notes_dir).mkdir(parents=True, exist_ok=True)
        write_notes(corpus, args.notes_dir)
    log.info("%d sections, %d sequences, %d annotations", len(corpus.sections),
             len(corpus.sequences), len(corpus.annotations))


def cmd_gold(args, ontology):
    if args.action == "validate":
        corpus = _read_corpus(args.gold, ontology)
        parts = {}
        for sid in corpus.section_ids():
            key = corpus.split.get(sid, "unassigned")
            parts[key] = parts.get(key, 0) + 1
        _print_json({"sections": len(corpus.sections), "sequences": len(corpus.sequences),
                     "annotations": len(corpus.annotations), "split": parts})
    elif args.action == "split":
        corpus = split_train_test(_read_corpus(args.gold, ontology), args.train_per_origin, args.seed)
        write_gold(args.out, corpus)
    else:
        corpora = [_read_corpus(p, ontology) for p in args.gold]
        table = agreement_table(corpora, ontology, args.unit)
        _print_json({"fleiss_kappa": fleiss_kappa(table), "items": table.items,
                     "raters": table.raters, "unit": args.unit})


def cmd_tag(args, ontology):
    tagger = compile_rules(args.rules, ontology)
    spans = tag_sequences(tagger, _read_sequences(args.sequences, ontology))
    write_jsonl(args.out, (a.to_dict() for a in spans))
    log.info("%d spans", len(spans))


def cmd_train(args, ontology):
    corpus = _read_corpus(args.gold, ontology)
    seqs = corpus.sequences_in(TRAIN)
    if not seqs:
        raise ValidationError(f"{args.gold}: no train split (run 'gold split' first)")
    targets = sequence_targets(corpus, ontology, TRAIN)
    labels = {c: [targets[(s.ref, c)] for s in seqs] for c in ontology.binary_concept_ids()}
    bundle = models.train_all(args.kind, [s.text for s in seqs], labels, _train_config(args))
    models.save_bundle(bundle, args.out)
    flagged = sorted(c for c, m in bundle.models.items() if not m.converged)
    if flagged:
        log.warning("%d model(s) flagged as not converged: %s", len(flagged), ", ".join(flagged))
    log.info("%s: %d models, %d skipped", bundle.kind, len(bundle.models), len(bundle.skipped))


def cmd_predict(args, ontology):
    bundle = models.load_bundle(args.models)
    seqs = _read_sequences(args.sequences, ontology)
    preds = models.predict_texts(bundle, [s.text for s in seqs])
    concepts = sorted(preds)
    records = []
    for i, s in enumerate(seqs):
        records.append({"section_id": s.section_id, "seq_index": s.index, "method": bundle.kind,
                        "concepts": concepts, "positive": [c for c in concepts if preds[c][i]]})
    write_jsonl(args.out, records)


def _read_predictions(spec: str):
    name, sep, path = spec.partition("=")
    if not sep:
        name, path = "", spec
    records = read_jsonl(path)
    try:
        if records and "start" in records[0]:
            return name or Path(path).stem, "spans", [SpanAnnotation.from_dict(r) for r in records]
        labels = {}
        method = ""
        for r in records:
            ref = (r["section_id"], int(r["seq_index"]))
            positive = set(r["positive"])
            for c in r["concepts"]:
                labels[(ref, c)] = c in positive
            method = method or r.get("method", "")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed prediction record ({exc})") from None
    return name or method or Path(path).stem, "labels", labels


def cmd_eval(args, ontology):
    gold = _read_corpus(args.gold, ontology)
    span_preds, seq_preds = {}, {}
    for spec in args.pred:
        name, kind, payload = _read_predictions(spec)
        target = span_preds if kind == "spans" else seq_preds
        if name in span_preds or name in seq_preds:
            raise ConfigError(f"duplicate prediction name {name!r}; use NAME=FILE")
        target[name] = payload
    report = build_report(gold, ontology, seq_preds, span_preds, args.min_support)
    write_report(report, args.out)
    log.info("%d reportable concepts, %d omitted", len(report.rows), len(report.omitted_concepts))


def cmd_prompts(args, ontology):
    from . import promptgen
    corpus = _read_corpus(args.gold, ontology)
    concepts = [c for c in args.concepts.split(",") if c] if args.concepts else None
    if args.action == "build":
        prompts = promptgen.build_prompts(corpus, ontology, concepts, args.seed)
        write_jsonl(args.out, (p.to_dict() for p in prompts))
        log.info("%d prompts", len(prompts))
        return
    if args.backend == "mock":
        backend = promptgen.MockBackend(compile_rules(args.rules, ontology), ontology)
    elif args.backend == "replay":
        if not args.replay:
            raise ConfigError("--backend replay needs --replay FILE")
        backend = promptgen.ReplayBackend(args.replay)
    else:
        if not args.endpoint or not args.model:
            raise ConfigError("--backend live needs --endpoint and --model")
        backend = promptgen.LiveBackend(args.endpoint, args.model, args.token_env, args.requests_per_second)
    cache = promptgen.ResponseCache(args.cache)
    result = promptgen.run_prompt_eval(backend, corpus, ontology, concepts, args.seed, cache)
    Path(args.out).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("sent %d, cached %d; mean f1 %.3f", result.sent, result.cached, result.averages["f1"])


def _version_text(ontology_version: str) -> str:
    return (f"rehab-extract {__version__}\n"
            f"formats: gold {GOLD_SCHEMA}, rules {RULES_SCHEMA}, vocab {features.VOCAB_SCHEMA}, "
            f"model {models.MODEL_SCHEMA}, report {REPORT_SCHEMA}, ontology {ontology_version}\n")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, leaves = build_parser()
    try:
        pre, _ = _global_options().parse_known_args(argv)
        cfg = _load_config(pre.config) if getattr(pre, "config", None) else {}
        glob = dict(GLOBAL_DEFAULTS, **_apply_config(cfg, leaves))
    except RehabExtractError as exc:
        logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
        log.error("%s", exc)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for key, value in glob.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(stream=sys.stderr, level=args.log_level,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        ontology = load_ontology(args.ontology)
        if args.version:
            sys.stdout.write(_version_text(ontology.version))
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        handler = {"sections": cmd_sections, "enrich": cmd_enrich, "synth": cmd_synth,
                   "gold": cmd_gold, "tag": cmd_tag, "train": cmd_train, "predict": cmd_predict,
                   "eval": cmd_eval, "prompts": cmd_prompts}[args.command]
        handler(args, ontology)
    except RehabExtractError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
