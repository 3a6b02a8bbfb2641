import json

import pytest

from rehab_extract.errors import NotFound, ParseError, ValidationError
from rehab_extract.ontology import Kind, load_ontology, lookup_concept, ontology_from_dict

# concept column of the results table, as ids in the shipped ontology
RESULTS_TABLE_CONCEPTS = [
    "rom_general", "rom_active", "rom_passive", "side_right", "side_left", "side_bilateral",
    "loc_upper_extremity", "loc_lower_extremity", "loc_hip", "loc_knee", "loc_ankle", "loc_shoulder",
    "loc_scapula", "loc_hand", "plane_flexion", "plane_extension", "plane_abduction",
    "plane_adduction", "type_ue_strength", "type_le_strength", "type_balance_vestibular",
    "type_gait_training", "pos_standing", "pos_seated", "pos_supine", "desc_home_exercise_program",
]


def _minimal(**overrides):
    raw = {"version": "t", "categories": [
        {"name": "Side of Body", "kind": "Enumerated", "keywords": ["left"],
         "concepts": [{"id": "side_left", "display_name": "Left"}]},
        {"name": "Duration", "kind": "Integer", "id": "duration", "keywords": ["min"]},
    ]}
    raw.update(overrides)
    return raw


def test_default_ontology_shape(ontology):
    assert len(ontology.scoring_groups()) == 9
    plane = ontology.category("Plane of Motion")
    assert "Flexion" in [c.display_name for c in plane.concepts]
    assert ontology.numeric_concept_ids() == ["duration", "sets", "reps"]
    assert not set(ontology.numeric_concept_ids()) & set(ontology.binary_concept_ids())
    assert ontology.category("Description").scoring is False


def test_lookup_examples(ontology):
    c = lookup_concept(ontology, "side_left")
    assert (c.display_name, c.category) == ("Left", "Side of Body")
    with pytest.raises(NotFound):
        lookup_concept(ontology, "")
    for concept in ontology.concepts():
        assert lookup_concept(ontology, concept.id) is concept


def test_numeric_ids_resolve(ontology):
    for cid in ("duration", "sets", "reps"):
        assert ontology.is_numeric(cid)
        assert ontology.category_of(cid).kind is Kind.INTEGER
    assert not ontology.is_numeric("plane_flexion")


@pytest.mark.parametrize("cid", RESULTS_TABLE_CONCEPTS)
def test_results_table_concepts_present(ontology, cid):
    assert cid in ontology


def test_ids_unique_and_slugged(ontology):
    ids = ontology.binary_concept_ids() + ontology.numeric_concept_ids()
    assert len(ids) == len(set(ids))
    assert all(i == i.lower() and " " not in i for i in ids)


def test_dict_round_trip(ontology):
    assert ontology_from_dict(ontology.to_dict()) == ontology
    assert ontology_from_dict(json.loads(json.dumps(ontology.to_dict()))) == ontology


def test_load_deterministic(ontology):
    assert load_ontology() == ontology


def test_duplicate_id_rejected():
    raw = _minimal()
    raw["categories"][0]["concepts"].append({"id": "side_left", "display_name": "Again"})
    with pytest.raises(ValidationError):
        ontology_from_dict(raw)


def test_integer_with_concepts_rejected():
    raw = _minimal()
    raw["categories"][1]["concepts"] = [{"id": "two_min", "display_name": "Two"}]
    with pytest.raises(ValidationError):
        ontology_from_dict(raw)


@pytest.mark.parametrize("mutate", [
    lambda r: r["categories"][0].update(kind="Fuzzy"),
    lambda r: r["categories"][0].update(keywords=[]),
    lambda r: r["categories"][0]["concepts"][0].update(id="Side Left"),
    lambda r: r["categories"].append(dict(r["categories"][0])),
])
def test_invalid_definitions(mutate):
    raw = _minimal()
    mutate(raw)
    with pytest.raises(ValidationError):
        ontology_from_dict(raw)


def test_malformed_file(tmp_path):
    path = tmp_path / "onto.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_ontology(path)
    with pytest.raises(ParseError):
        load_ontology(tmp_path / "missing.json")
    with pytest.raises(ParseError):
        ontology_from_dict({"categories": "nope"})
