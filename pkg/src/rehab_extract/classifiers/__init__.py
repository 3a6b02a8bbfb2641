"""Bag-of-words features and per-concept binary classifiers."""

from .features import FeatureVector, Vocabulary, build_vocabulary, tokenize, vectorize
from .models import (
    ADABOOST, GRADBOOST, KINDS, LOGREG, SVM, ConceptModel, ModelBundle, TrainConfig,
    balanced_class_weights, decision_function, load_bundle, predict_label, predict_labels,
    predict_texts, resolve_kind, save_bundle, train_all, train_classifier, train_many,
)

__all__ = [
    "ADABOOST", "GRADBOOST", "KINDS", "LOGREG", "SVM", "ConceptModel", "FeatureVector",
    "ModelBundle", "TrainConfig", "Vocabulary", "balanced_class_weights", "build_vocabulary",
    "decision_function", "load_bundle", "predict_label", "predict_labels", "predict_texts",
    "resolve_kind", "save_bundle", "tokenize", "train_all", "train_classifier", "train_many",
    "vectorize",
]
