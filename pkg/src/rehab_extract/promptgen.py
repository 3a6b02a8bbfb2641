"""Few-shot yes/no prompts per concept, chat backends, and prompt-based scoring."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence as Seq

from .errors import BackendError, Ineligible, ParseError
from .evaluator import PRF, sequence_prf
from .goldstore import TEST, TRAIN, GoldCorpus, SeqRef, project_spans
from .ingest import Sequence
from .ontology import Concept, Ontology, lookup_concept
from .ruletagger import CompiledTagger

log = logging.getLogger(__name__)

SYSTEM_TEMPLATE = ("You are an assistant assigned to determine if a given text segment from a "
                   "medical record contains mentions of {name}. You must answer yes or no.")
SYSTEM, USER, MODEL = "System", "User", "Model"
YES, NO = "Yes.", "No."
POSITIVE, NEGATIVE, UNPARSEABLE = "positive", "negative", "unparseable"
N_EXAMPLES = 2
DEFAULT_TOKEN_ENV = "REHAB_EXTRACT_API_KEY"

Turn = tuple[str, str]


@dataclass(frozen=True)
class Prompt:
    concept_id: str
    turns: tuple[Turn, ...]
    target_ref: SeqRef | None = None

    def render(self) -> str:
        return render_turns(self.turns)

    @property
    def hash(self) -> str:
        return prompt_hash(self.turns)

    def to_dict(self) -> dict:
        ref = list(self.target_ref) if self.target_ref else None
        return {"concept_id": self.concept_id, "target_ref": ref, "prompt_hash": self.hash,
                "turns": [list(t) for t in self.turns]}


def render_turns(turns: Iterable[Turn]) -> str:
    return "\n\n".join(f"{role}: {content}" for role, content in turns)


def prompt_hash(turns: Iterable[Turn]) -> str:
    return hashlib.sha256(render_turns(turns).encode("utf-8")).hexdigest()


def assemble_prompt(display_name: str, positives: Seq[str], negatives: Seq[str], target: str,
                    concept_id: str = "", target_ref: SeqRef | None = None) -> Prompt:
    """Lay out the turns: system, then pos/neg/pos/neg examples, then the target.

    Example and target strings are used verbatim (enumerator included).
    """
    if len(positives) != N_EXAMPLES or len(negatives) != N_EXAMPLES:
        raise Ineligible(f"need {N_EXAMPLES} positive and {N_EXAMPLES} negative examples")
    turns: list[Turn] = [(SYSTEM, SYSTEM_TEMPLATE.format(name=display_name))]
    for pos, neg in zip(positives, negatives):
        turns += [(USER, pos), (MODEL, YES), (USER, neg), (MODEL, NO)]
    turns.append((USER, target))
    return Prompt(concept_id, tuple(turns), target_ref)


def _train_labels(gold: GoldCorpus, concept_id: str) -> tuple[list[Sequence], list[Sequence]]:
    seqs = gold.sequences_in(TRAIN)
    labels = project_spans(gold.annotations, seqs, [concept_id])
    pos = [s for s in seqs if labels[(s.ref, concept_id)]]
    neg = [s for s in seqs if not labels[(s.ref, concept_id)]]
    return pos, neg


def eligible_concepts(gold: GoldCorpus, ontology: Ontology) -> list[str]:
    """Concepts with enough positive and negative training sequences to fill the template."""
    seqs = gold.sequences_in(TRAIN)
    concepts = ontology.binary_concept_ids()
    labels = project_spans(gold.annotations, seqs, concepts)
    out = []
    for c in concepts:
        n_pos = sum(labels[(s.ref, c)] for s in seqs)
        if n_pos >= N_EXAMPLES and len(seqs) - n_pos >= N_EXAMPLES:
            out.append(c)
    return out


class _ExamplePicker:
    """Seeded few-shot selection, cached per concept."""

    def __init__(self, gold: GoldCorpus, seed: int):
        self.gold = gold
        self.seed = seed
        self._pools: dict[str, tuple[list[Sequence], list[Sequence]]] = {}

    def pick(self, concept_id: str, target: Sequence) -> tuple[list[Sequence], list[Sequence]]:
        if concept_id not in self._pools:
            self._pools[concept_id] = _train_labels(self.gold, concept_id)
        pos, neg = self._pools[concept_id]
        # never show the target itself as an example
        pos = [s for s in pos if s.text != target.text]
        neg = [s for s in neg if s.text != target.text]
        if len(pos) < N_EXAMPLES or len(neg) < N_EXAMPLES:
            raise Ineligible(f"{concept_id}: {len(pos)} positive / {len(neg)} negative training examples")
        rng = random.Random(f"{self.seed}:{concept_id}")
        # chosen examples keep their training-corpus order
        pick_pos = sorted(rng.sample(range(len(pos)), N_EXAMPLES))
        pick_neg = sorted(rng.sample(range(len(neg)), N_EXAMPLES))
        return [pos[i] for i in pick_pos], [neg[i] for i in pick_neg]


def build_prompt(concept: Concept, gold: GoldCorpus, target: Sequence, seed: int = 0) -> Prompt:
    return _build(concept, _ExamplePicker(gold, seed), target)


def _build(concept: Concept, picker: _ExamplePicker, target: Sequence) -> Prompt:
    pos, neg = picker.pick(concept.id, target)
    return assemble_prompt(concept.display_name, [s.enumerated_text for s in pos],
                           [s.enumerated_text for s in neg], target.enumerated_text,
                           concept.id, target.ref)


def build_prompts(gold: GoldCorpus, ontology: Ontology, concepts: Seq[str] | None = None,
                  seed: int = 0, part: str = TEST) -> list[Prompt]:
    picker = _ExamplePicker(gold, seed)
    concepts = eligible_concepts(gold, ontology) if concepts is None else list(concepts)
    return [_build(lookup_concept(ontology, c), picker, s) for c in concepts for s in gold.sequences_in(part)]


_ANSWER = re.compile(r"^[\W_]*(yes|no)\b", re.IGNORECASE)


def parse_response(text: str) -> str:
    m = _ANSWER.match(text.strip())
    if not m:
        return UNPARSEABLE
    return POSITIVE if m.group(1).lower() == "yes" else NEGATIVE


# ------------------------------------------------------------------ backends

class ChatBackend(Protocol):
    def send(self, turns: Seq[Turn]) -> str: ...


_SYSTEM_NAME = re.compile(r"contains mentions of (.+)\. You must answer yes or no\.$")
_ENUMERATOR = re.compile(r"^\s*\d+\s*[:.)]\s*")


def primary_patterns(tagger: CompiledTagger) -> dict[str, re.Pattern]:
    """Highest-priority rule pattern per concept (file order breaks ties)."""
    out: dict[str, re.Pattern] = {}
    for rule in tagger.rules:
        out.setdefault(rule.concept_id, rule.pattern)
    return out


class MockBackend:
    """Offline stand-in: "Yes." iff the concept's primary rule pattern occurs in the target.

    When several concepts share a display name, the one whose pattern best
    agrees with the labelled examples is used (ties go to ontology order).
    """

    def __init__(self, tagger: CompiledTagger, ontology: Ontology):
        patterns = primary_patterns(tagger)
        self._by_name: dict[str, list[re.Pattern]] = {}
        for c in ontology.concepts():
            if c.id in patterns:
                self._by_name.setdefault(c.display_name, []).append(patterns[c.id])
        self.calls = 0

    def send(self, turns: Seq[Turn]) -> str:
        self.calls += 1
        m = _SYSTEM_NAME.search(turns[0][1])
        if m is None or m.group(1) not in self._by_name:
            return NO
        pattern = max(self._by_name[m.group(1)], key=lambda p: _agreement(p, turns))
        target = _strip(turns[-1][1])
        return YES if pattern.search(target) else NO


def _strip(text: str) -> str:
    return _ENUMERATOR.sub("", text, count=1)


def _agreement(pattern: re.Pattern, turns: Seq[Turn]) -> int:
    examples = zip(turns[1:-1:2], turns[2:-1:2])
    return sum((pattern.search(_strip(q[1])) is not None) == (a[1] == YES) for q, a in examples)


class ReplayBackend:
    """Answers from a recorded JSONL of ``{"prompt_hash", "response"}``."""

    def __init__(self, path: str | Path):
        self.responses = _read_responses(Path(path))

    def send(self, turns: Seq[Turn]) -> str:
        h = prompt_hash(turns)
        try:
            return self.responses[h]
        except KeyError:
            raise BackendError(f"no recorded response for prompt {h[:12]}") from None


class TokenBucket:
    def __init__(self, rate: float, capacity: float = 1.0, clock=time.monotonic, sleep=time.sleep):
        self.rate, self.capacity = rate, capacity
        self.tokens = capacity
        self.clock, self.sleep = clock, sleep
        self.last = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        with self.lock:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
            self.last = now
            if self.tokens < 1.0:
                self.sleep((1.0 - self.tokens) / self.rate)
                self.tokens = 1.0
                self.last = self.clock()
            self.tokens -= 1.0


_ROLE_NAMES = {SYSTEM: "system", USER: "user", MODEL: "assistant"}


@dataclass
class LiveBackend:
    """OpenAI-style chat-completions client with pacing and bounded retry."""
    endpoint: str
    model: str
    token_env: str = DEFAULT_TOKEN_ENV
    requests_per_second: float = 1.0
    max_retries: int = 5
    backoff: float = 2.0
    timeout: float = 60.0
    bucket: TokenBucket | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.bucket is None:
            self.bucket = TokenBucket(self.requests_per_second)

    def send(self, turns: Seq[Turn]) -> str:
        token = os.environ.get(self.token_env)
        if not token:
            raise BackendError(f"environment variable {self.token_env} is not set")
        body = json.dumps({"model": self.model, "temperature": 0,
                           "messages": [{"role": _ROLE_NAMES[r], "content": c} for r, c in turns]})
        req = urllib.request.Request(self.endpoint, data=body.encode("utf-8"), method="POST",
                                     headers={"Content-Type": "application/json",
                                              "Authorization": f"Bearer {token}"})
        delay = 1.0
        for attempt in range(self.max_retries + 1):
            self.bucket.acquire()
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                return payload["choices"][0]["message"]["content"]
            except urllib.error.HTTPError as exc:
                retryable = exc.code == 429 or exc.code >= 500
                err = f"HTTP {exc.code}"
            except (urllib.error.URLError, TimeoutError) as exc:
                retryable, err = True, str(exc)
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed response: {exc}") from None
            if not retryable or attempt == self.max_retries:
                raise BackendError(f"request failed after {attempt + 1} attempt(s): {err}")
            log.warning("backend error (%s), retrying in %.1fs", err, delay)
            time.sleep(delay)
            delay *= self.backoff
        raise BackendError("unreachable")


def _read_responses(path: Path) -> dict[str, str]:
    out = {}
    if not path.exists():
        return out
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[rec["prompt_hash"]] = rec["response"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"{path}:{n}: {exc}") from None
    return out


class ResponseCache:
    """Append-only JSONL of responses keyed by prompt hash (same format as replay files)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.responses = _read_responses(self.path) if self.path else {}
        self._lock = threading.Lock()

    def get(self, h: str) -> str | None:
        return self.responses.get(h)

    def put(self, h: str, response: str) -> None:
        with self._lock:
            self.responses[h] = response
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps({"prompt_hash": h, "response": response}, sort_keys=True) + "\n")


# ---------------------------------------------------------------- evaluation

@dataclass
class PromptEvalResult:
    per_concept: dict[str, PRF]
    unparseable: dict[str, int]
    sent: int
    cached: int

    @property
    def averages(self) -> dict[str, float]:
        rows = list(self.per_concept.values())
        n = len(rows) or 1
        return {"precision": sum(r.precision for r in rows) / n,
                "recall": sum(r.recall for r in rows) / n,
                "f1": sum(r.f1 for r in rows) / n}

    def to_dict(self) -> dict:
        return {"concepts": {c: p.to_dict() for c, p in self.per_concept.items()},
                "unparseable": self.unparseable, "averages": self.averages,
                "prompts_sent": self.sent, "prompts_cached": self.cached}


def run_prompt_eval(backend: ChatBackend, gold: GoldCorpus, ontology: Ontology,
                    concepts: Seq[str] | None = None, seed: int = 0,
                    cache: ResponseCache | None = None) -> PromptEvalResult:
    """One prompt per (concept, test sequence); unparseable answers count as negative.

    Responses are cached as they arrive, so a run interrupted by
    BackendError resumes without re-sending finished prompts.
    """
    cache = cache if cache is not None else ResponseCache()
    concepts = eligible_concepts(gold, ontology) if concepts is None else list(concepts)
    test = gold.sequences_in(TEST)
    gold_labels = project_spans(gold.annotations, test, concepts)
    picker = _ExamplePicker(gold, seed)
    per_concept, unparseable = {}, {}
    sent = cached = 0
    for c in concepts:
        concept = lookup_concept(ontology, c)
        pred, bad = {}, 0
        for seq in test:
            prompt = _build(concept, picker, seq)
            h = prompt.hash
            response = cache.get(h)
            if response is None:
                response = backend.send(prompt.turns)
                cache.put(h, response)
                sent += 1
            else:
                cached += 1
            verdict = parse_response(response)
            bad += verdict == UNPARSEABLE
            pred[(seq.ref, c)] = verdict == POSITIVE
        per_concept[c] = sequence_prf(pred, gold_labels, c)
        unparseable[c] = bad
    return PromptEvalResult(per_concept, unparseable, sent, cached)
