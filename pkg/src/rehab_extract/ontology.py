"""Clinical exercise ontology: categories with their concepts and enrichment keywords.

The ontology is a single JSON document::

    {"version": "1.0",
     "categories": [{"name": "Plane of Motion", "kind": "Enumerated",
                     "keywords": ["flexion", ...],
                     "concepts": [{"id": "plane_flexion", "display_name": "Flexion"}]}]}

Integer-kind categories (Duration, Sets, Reps) list no concepts.  They carry an
``id`` instead, which is registered as an implicit value concept so numeric
span annotations can reference the category directly.

Two optional keys control enrichment scoring: ``scoring_group`` merges
categories into one scoring bucket (sets and reps count once), and
``"scoring": false`` leaves a category out of the score entirely.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import NotFound, ParseError, ValidationError

DEFAULT_ONTOLOGY = "ontology.json"

_SLUG = re.compile(r"^[a-z0-9]+(?:_[a-z0-9]+)*$")


class Kind(str, Enum):
    ENUMERATED = "Enumerated"
    INTEGER = "Integer"
    BINARY = "Binary"


@dataclass(frozen=True)
class Concept:
    id: str
    display_name: str
    category: str


@dataclass(frozen=True)
class Category:
    name: str
    kind: Kind
    concepts: tuple[Concept, ...]
    keywords: tuple[str, ...]
    id: str | None = None
    scoring_group: str | None = None
    scoring: bool = True

    @property
    def is_numeric(self) -> bool:
        return self.kind is Kind.INTEGER


@dataclass(frozen=True)
class Ontology:
    categories: tuple[Category, ...]
    version: str
    _by_id: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        index = {}
        for cat in self.categories:
            members = list(cat.concepts)
            if cat.is_numeric and cat.id:
                members.append(Concept(cat.id, cat.name, cat.name))
            for concept in members:
                if concept.id in index:
                    raise ValidationError(f"duplicate concept id {concept.id!r}")
                index[concept.id] = concept
        self._by_id.update(index)

    def category(self, name: str) -> Category:
        for cat in self.categories:
            if cat.name == name:
                return cat
        raise NotFound(f"unknown category {name!r}")

    def category_of(self, concept_id: str) -> Category:
        return self.category(lookup_concept(self, concept_id).category)

    def concepts(self) -> list[Concept]:
        """Every enumerated/binary concept, in file order (numeric categories excluded)."""
        return [c for cat in self.categories for c in cat.concepts]

    def binary_concept_ids(self) -> list[str]:
        return [c.id for c in self.concepts()]

    def numeric_concept_ids(self) -> list[str]:
        return [cat.id for cat in self.categories if cat.is_numeric and cat.id]

    def is_numeric(self, concept_id: str) -> bool:
        return self.category_of(concept_id).is_numeric

    def __contains__(self, concept_id: object) -> bool:
        return concept_id in self._by_id

    def scoring_groups(self) -> dict[str, list[Category]]:
        groups: dict[str, list[Category]] = {}
        for cat in self.categories:
            if cat.scoring:
                groups.setdefault(cat.scoring_group or cat.name, []).append(cat)
        return groups

    def to_dict(self) -> dict:
        cats = []
        for cat in self.categories:
            d = {"name": cat.name, "kind": cat.kind.value}
            if cat.id:
                d["id"] = cat.id
            if not cat.scoring:
                d["scoring"] = False
            elif cat.scoring_group:
                d["scoring_group"] = cat.scoring_group
            d["keywords"] = list(cat.keywords)
            d["concepts"] = [{"id": c.id, "display_name": c.display_name} for c in cat.concepts]
            cats.append(d)
        return {"version": self.version, "categories": cats}


def lookup_concept(ontology: Ontology, id: str) -> Concept:
    try:
        return ontology._by_id[id]
    except KeyError:
        raise NotFound(f"unknown concept id {id!r}") from None


def default_ontology_path() -> Path:
    return Path(str(resources.files("rehab_extract") / "data" / DEFAULT_ONTOLOGY))


def load_ontology(path: str | Path | None = None) -> Ontology:
    path = Path(path) if path is not None else default_ontology_path()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read ontology {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return ontology_from_dict(raw)


def ontology_from_dict(raw: dict) -> Ontology:
    if not isinstance(raw, dict) or not isinstance(raw.get("categories"), list):
        raise ParseError("ontology must be an object with a 'categories' list")
    seen_names = set()
    categories = []
    for i, rc in enumerate(raw["categories"]):
        if not isinstance(rc, dict) or "name" not in rc or "kind" not in rc:
            raise ParseError(f"category #{i} needs 'name' and 'kind'")
        name = rc["name"]
        if name in seen_names:
            raise ValidationError(f"duplicate category {name!r}")
        seen_names.add(name)
        try:
            kind = Kind(rc["kind"])
        except ValueError:
            raise ValidationError(f"category {name!r}: unknown kind {rc['kind']!r}") from None
        raw_concepts = rc.get("concepts", [])
        if kind is Kind.INTEGER and raw_concepts:
            raise ValidationError(f"Integer category {name!r} must not list concepts")
        concepts = []
        for rcon in raw_concepts:
            try:
                cid, display = rcon["id"], rcon["display_name"]
            except (KeyError, TypeError):
                raise ParseError(f"category {name!r}: concept needs 'id' and 'display_name'") from None
            if not _SLUG.match(cid):
                raise ValidationError(f"concept id {cid!r} is not a lowercase slug")
            concepts.append(Concept(cid, display, name))
        keywords = tuple(k.lower() for k in rc.get("keywords", []))
        scoring = bool(rc.get("scoring", True))
        if scoring and not keywords:
            raise ValidationError(f"category {name!r} has an empty keyword list")
        cat_id = rc.get("id")
        if cat_id is not None and not _SLUG.match(cat_id):
            raise ValidationError(f"category id {cat_id!r} is not a lowercase slug")
        categories.append(Category(name, kind, tuple(concepts), keywords, cat_id,
                                   rc.get("scoring_group"), scoring))
    return Ontology(tuple(categories), str(raw.get("version", "")))
