"""Per-concept binary models, batch training over a gold corpus, bundle I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence as Seq

import numpy as np
from scipy import sparse

from ..errors import ConfigError, NotFound, ParseError, SingleClass
from . import boosting, logreg, svm
from .features import FeatureVector, Vocabulary, as_matrix, build_vocabulary, vectorize

log = logging.getLogger(__name__)

MODEL_SCHEMA = 1
LOGREG, SVM, ADABOOST, GRADBOOST = "LogReg", "SvmPoly2", "AdaBoost", "GradBoost"
KINDS = (LOGREG, SVM, ADABOOST, GRADBOOST)
# CLI spellings
KIND_ALIASES = {"logreg": LOGREG, "svm": SVM, "ada": ADABOOST, "gb": GRADBOOST}
SVM_DEGREE, SVM_GAMMA, SVM_COEF0 = 2, 1.0, 1.0


@dataclass(frozen=True)
class TrainConfig:
    lr: float = logreg.LEARNING_RATE
    max_epochs: int = logreg.MAX_EPOCHS
    tol: float = logreg.TOL
    l2: float = logreg.L2
    svm_c: float = 1.0
    svm_eps: float = svm.DEFAULT_EPS
    svm_max_iter: int = svm.DEFAULT_MAX_ITER
    kkt_tol: float = 1e-3
    ada_estimators: int = boosting.ADA_ESTIMATORS
    gb_estimators: int = boosting.GB_ESTIMATORS
    gb_depth: int = boosting.GB_DEPTH
    gb_shrinkage: float = boosting.GB_SHRINKAGE

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "TrainConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class ConceptModel:
    concept_id: str
    kind: str
    params: dict
    train_config: dict
    converged: bool = True

    def to_dict(self) -> dict:
        return {"schema": MODEL_SCHEMA, "concept_id": self.concept_id, "kind": self.kind,
                "params": self.params, "train_config": self.train_config,
                "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> "ConceptModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ParseError(f"unsupported model schema {d.get('schema')!r}")
        if d.get("kind") not in KINDS:
            raise ParseError(f"unknown model kind {d.get('kind')!r}")
        return cls(d["concept_id"], d["kind"], d["params"], d["train_config"], bool(d.get("converged", True)))


def resolve_kind(kind: str) -> str:
    if kind in KINDS:
        return kind
    try:
        return KIND_ALIASES[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}") from None


def balanced_class_weights(y: Iterable[bool]) -> tuple[float, float]:
    """``(w_pos, w_neg)`` with ``w_c = N / (2 N_c)``."""
    y = np.asarray(list(y), dtype=bool)
    n, n_pos = len(y), int(y.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("labels contain a single class")
    return n / (2 * n_pos), n / (2 * n_neg)


def _sample_weights(y: np.ndarray) -> np.ndarray:
    w_pos, w_neg = balanced_class_weights(y)
    return np.where(y, w_pos, w_neg)


def _sparse_rows(X: sparse.csr_matrix, rows) -> list[list[list[float]]]:
    out = []
    for i in rows:
        lo, hi = X.indptr[i], X.indptr[i + 1]
        out.append([[int(j), float(v)] for j, v in zip(X.indices[lo:hi], X.data[lo:hi])])
    return out


def _from_sparse_rows(rows, n_features: int) -> sparse.csr_matrix:
    return as_matrix([tuple((int(j), v) for j, v in r) for r in rows], n_features)


# ----------------------------------------------------------- parameter packs

def _logreg_params(w: np.ndarray, b: float, epochs: int) -> dict:
    nz = np.flatnonzero(w)
    return {"n_features": len(w), "weights": [[int(j), float(w[j])] for j in nz],
            "bias": float(b), "epochs": int(epochs)}


def _svm_params(X, y, sol: svm.DualSolution, n_features: int) -> dict:
    sv = np.flatnonzero(sol.alpha > 0)
    ypm = np.where(y, 1.0, -1.0)
    return {"n_features": n_features, "support_vectors": _sparse_rows(X, sv),
            "dual_coef": [float(sol.alpha[i] * ypm[i]) for i in sv], "rho": sol.rho,
            "kernel": {"name": "poly", "degree": SVM_DEGREE, "gamma": SVM_GAMMA, "coef0": SVM_COEF0},
            "iterations": sol.iterations}


def _ada_params(stumps, n_features: int) -> dict:
    return {"n_features": n_features,
            "stumps": [[s.feature, s.threshold, s.polarity, s.alpha] for s in stumps]}


def _gb_params(init, trees, shrinkage, n_features: int) -> dict:
    return {"n_features": n_features, "init": init, "learning_rate": shrinkage,
            "trees": [t.to_dict() for t in trees]}


# ------------------------------------------------------------------ training

def train_classifier(kind: str, X, y: Seq[bool], config: TrainConfig | None = None,
                     concept_id: str = "") -> ConceptModel:
    """Train one binary model; ``X`` may be FeatureVectors, dense or sparse."""
    models = train_many(kind, X, {concept_id: y}, config)
    return models[concept_id]


def train_many(kind: str, X, labels: dict[str, Seq[bool]], config: TrainConfig | None = None,
               n_features: int | None = None) -> dict[str, ConceptModel]:
    """Train one model per concept on a shared design matrix.

    Raises SingleClass if any label vector lacks a class; use :func:`train_all`
    to skip such concepts instead.
    """
    kind = resolve_kind(kind)
    config = config or TrainConfig()
    X = as_matrix(X, n_features)
    n, d = X.shape
    if n == 0:
        raise SingleClass("no training examples")
    ids = list(labels)
    Y = np.column_stack([np.asarray(labels[c], dtype=bool) for c in ids]) if ids else np.zeros((n, 0), bool)
    if Y.shape[0] != n:
        raise ConfigError(f"{Y.shape[0]} labels for {n} examples")
    S = np.column_stack([_sample_weights(Y[:, k]) for k in range(len(ids))]) if ids else Y.astype(float)
    snap = config.to_dict()
    out: dict[str, ConceptModel] = {}
    if kind == LOGREG:
        W, b, _, epochs = logreg.fit(X, Y.astype(np.float64), S, config.lr, config.max_epochs,
                                     config.tol, config.l2)
        for k, c in enumerate(ids):
            out[c] = ConceptModel(c, kind, _logreg_params(W[:, k], b[k], epochs[k]), snap)
    elif kind == SVM:
        K = svm.poly_kernel(X, X, SVM_DEGREE, SVM_GAMMA, SVM_COEF0)
        for k, c in enumerate(ids):
            ypm = np.where(Y[:, k], 1.0, -1.0)
            sol = svm.solve_dual(K, ypm, config.svm_c * S[:, k], config.svm_eps, config.svm_max_iter)
            worst = float(svm.kkt_residuals(K, ypm, config.svm_c * S[:, k], sol.alpha, sol.rho).max())
            ok = sol.converged and worst <= config.kkt_tol
            if not ok:
                log.warning("SVM for %s did not converge (iterations=%d, max KKT residual %.2e)",
                            c or "<concept>", sol.iterations, worst)
            out[c] = ConceptModel(c, kind, _svm_params(X, Y[:, k], sol, d), snap, ok)
    else:
        cands = boosting.split_candidates(X)
        for k, c in enumerate(ids):
            if kind == ADABOOST:
                stumps, _ = boosting.fit_adaboost(cands, Y[:, k], S[:, k], config.ada_estimators)
                out[c] = ConceptModel(c, kind, _ada_params(stumps, d), snap)
            else:
                init, trees, _ = boosting.fit_gradboost(cands, Y[:, k], S[:, k], config.gb_estimators,
                                                        config.gb_depth, config.gb_shrinkage)
                out[c] = ConceptModel(c, kind, _gb_params(init, trees, config.gb_shrinkage, d), snap)
    return out


# ---------------------------------------------------------------- prediction

def decision_function(model: ConceptModel, X) -> np.ndarray:
    p = model.params
    X = as_matrix(X, p["n_features"])
    if X.shape[1] != p["n_features"]:
        raise ConfigError(f"expected {p['n_features']} features, got {X.shape[1]}")
    if model.kind == LOGREG:
        w = np.zeros(p["n_features"])
        for j, v in p["weights"]:
            w[j] = v
        # log-odds; positive iff probability > 0.5
        return X @ w + p["bias"]
    if model.kind == SVM:
        kern = p["kernel"]
        if not p["support_vectors"]:
            return np.full(X.shape[0], -p["rho"])
        SV = _from_sparse_rows(p["support_vectors"], p["n_features"])
        K = svm.poly_kernel(X, SV, kern["degree"], kern["gamma"], kern["coef0"])
        return K @ np.asarray(p["dual_coef"]) - p["rho"]
    if model.kind == ADABOOST:
        stumps = [boosting.Stump(int(f), float(t), int(s), float(a)) for f, t, s, a in p["stumps"]]
        return boosting.adaboost_score(stumps, X)
    trees = [boosting.Tree.from_dict(t) for t in p["trees"]]
    return boosting.gradboost_score(p["init"], trees, X)


def predict_proba(model: ConceptModel, X) -> np.ndarray:
    if model.kind != LOGREG:
        raise ConfigError(f"{model.kind} models do not produce probabilities")
    return 1.0 / (1.0 + np.exp(-decision_function(model, X)))


def predict_labels(model: ConceptModel, X) -> np.ndarray:
    """Strict sign rule: a score of exactly 0 (probability 0.5, tied vote) is negative."""
    if model.kind == LOGREG:
        return predict_proba(model, X) > 0.5
    return decision_function(model, X) > 0


def predict_label(model: ConceptModel, x: FeatureVector) -> bool:
    return bool(predict_labels(model, [tuple(x)])[0])


# ------------------------------------------------------------ corpus level

@dataclass
class ModelBundle:
    vocab: Vocabulary
    models: dict[str, ConceptModel]
    kind: str
    # untrainable concepts and the single label seen in training
    skipped: dict[str, bool] = field(default_factory=dict)


def train_all(kind: str, train_texts: Seq[str], labels: dict[str, Seq[bool]],
              config: TrainConfig | None = None) -> ModelBundle:
    """Fit the vocabulary on ``train_texts`` and one model per trainable concept.

    Concepts whose labels hold a single class go to ``skipped`` and are
    predicted as that class.
    """
    kind = resolve_kind(kind)
    vocab = build_vocabulary(train_texts)
    X = as_matrix([vectorize(vocab, t) for t in train_texts], vocab.size)
    trainable, skipped = {}, {}
    for c, y in labels.items():
        y = np.asarray(y, dtype=bool)
        if len(y) and (y.all() or not y.any()):
            skipped[c] = bool(y[0])
        else:
            trainable[c] = y
    if skipped:
        log.info("skipping %d single-class concept(s): %s", len(skipped), ", ".join(skipped))
    models = train_many(kind, X, trainable, config, vocab.size) if trainable else {}
    return ModelBundle(vocab, models, kind, skipped)


def predict_texts(bundle: ModelBundle, texts: Seq[str]) -> dict[str, np.ndarray]:
    X = as_matrix([vectorize(bundle.vocab, t) for t in texts], bundle.vocab.size)
    out = {c: predict_labels(m, X) for c, m in bundle.models.items()}
    for c, label in bundle.skipped.items():
        out[c] = np.full(len(texts), label)
    return out


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def save_bundle(bundle: ModelBundle, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _dump(directory / "vocab.json", bundle.vocab.to_dict())
    for c, m in sorted(bundle.models.items()):
        _dump(directory / f"model-{c}-{bundle.kind}.json", m.to_dict())
    _dump(directory / "manifest.json",
          {"schema": MODEL_SCHEMA, "kind": bundle.kind, "concepts": sorted(bundle.models),
           "skipped": dict(sorted(bundle.skipped.items()))})


def load_bundle(directory: str | Path) -> ModelBundle:
    directory = Path(directory)
    try:
        vocab = Vocabulary.from_dict(json.loads((directory / "vocab.json").read_text(encoding="utf-8")))
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise NotFound(f"model bundle incomplete: {exc.filename}") from None
    except (json.JSONDecodeError, KeyError) as exc:
        raise ParseError(f"bad model bundle in {directory}: {exc}") from None
    kind = manifest["kind"]
    models = {}
    for c in manifest["concepts"]:
        path = directory / f"model-{c}-{kind}.json"
        try:
            models[c] = ConceptModel.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise NotFound(f"missing model file {path.name}") from None
        except (json.JSONDecodeError, KeyError) as exc:
            raise ParseError(f"{path.name}: {exc}") from None
    skipped = {c: bool(v) for c, v in manifest.get("skipped", {}).items()}
    return ModelBundle(vocab, models, kind, skipped)
