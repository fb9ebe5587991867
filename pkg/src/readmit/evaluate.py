"""Evaluation protocol: metrics, repeated splits, ablations, and RFE.

Every run, fold and repeat draws its seed from the master seed via
``derive_seed``, so reports are pure functions of (data, master seed,
config) and identical whether work runs sequentially or in parallel.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import classifiers
from .classifiers import ModelSpec
from .errors import ConfigError, DataError, MetricUndefinedError
from .features import FeatureMatrix, Imputer
from .seeding import derive_seed

ABLATION_CONFIGS = ("baseline", "baseline_domain_sentences", "baseline_clinical_sentiment")
ABLATION_TITLES = {
    "baseline": "Baseline",
    "baseline_domain_sentences": "Baseline+Domain Sentences",
    "baseline_clinical_sentiment": "Baseline+Clinical Sentiment",
}
_SENTENCE_PREFIX = "sentence_fraction_"
_SENTIMENT_PREFIX = "clinical_sentiment_"


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    stratified: bool = True
    grouping: str = "admission_level"  # or "patient_grouped"
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.grouping not in ("admission_level", "patient_grouped"):
            raise ConfigError(f"unknown grouping {self.grouping!r}")


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    auc: float
    f1: float
    threshold: float = 0.5


def _confusion(y_true: np.ndarray, y_pred: np.ndarray):
    tp = float(np.sum((y_pred == 1) & (y_true == 1)))
    fp = float(np.sum((y_pred == 1) & (y_true == 0)))
    fn = float(np.sum((y_pred == 0) & (y_true == 1)))
    tn = float(np.sum((y_pred == 0) & (y_true == 0)))
    return tp, fp, fn, tn


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # average of ranks i+1 .. j
        i = j
    return ranks


def auc_score(y_true: np.ndarray, y_score: np.ndarray) -> float:
    """Rank-statistic AUC; tied pairs count one half."""
    y_true = np.asarray(y_true, dtype=float)
    y_score = np.asarray(y_score, dtype=float)
    n_pos = int(y_true.sum())
    n_neg = len(y_true) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC undefined: y_true contains a single class")
    ranks = _average_ranks(y_score)
    rank_sum = float(ranks[y_true == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def metrics(y_true, y_score, threshold: float = 0.5) -> MetricSet:
    """Accuracy and F1 at the threshold plus rank-statistic AUC.

    Positive class is the readmitted one; F1 is 0 when precision+recall
    is 0. Predictions are positive when score >= threshold.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_score = np.asarray(y_score, dtype=float)
    if y_true.shape != y_score.shape:
        raise DataError("y_true and y_score lengths differ")
    if np.any((y_score < 0) | (y_score > 1)):
        raise DataError("y_score entries must lie in [0, 1]")
    y_pred = (y_score >= threshold).astype(float)
    tp, fp, fn, tn = _confusion(y_true, y_pred)
    accuracy = (tp + tn) / len(y_true)
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom > 0 else 0.0
    return MetricSet(accuracy=accuracy, auc=auc_score(y_true, y_score),
                     f1=f1, threshold=threshold)


def split(matrix_or_y, config: SplitConfig, patient_ids: Optional[Sequence[str]] = None):
    """(train_idx, test_idx); stratified within class, deterministic per seed.

    patient_grouped mode keeps all of a patient's rows on one side; it
    needs patient ids (taken from the matrix when given one).
    """
    config.validate()
    if isinstance(matrix_or_y, FeatureMatrix):
        y = matrix_or_y.y
        if patient_ids is None and matrix_or_y.patient_ids:
            patient_ids = matrix_or_y.patient_ids
    else:
        y = np.asarray(matrix_or_y, dtype=float)
    rng = np.random.default_rng(config.seed)

    if config.grouping == "patient_grouped":
        if not patient_ids:
            raise ConfigError("patient_grouped split requires patient ids")
        return _grouped_split(y, np.asarray(patient_ids), config, rng)

    test_parts = []
    if config.stratified:
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            if len(idx) < 2:
                raise DataError(f"class {int(cls)} has fewer than 2 rows; cannot stratify")
            n_test = int(np.clip(round(config.test_fraction * len(idx)), 1, len(idx) - 1))
            idx = idx[rng.permutation(len(idx))]
            test_parts.append(idx[:n_test])
    else:
        idx = rng.permutation(len(y))
        n_test = int(np.clip(round(config.test_fraction * len(y)), 1, len(y) - 1))
        test_parts.append(idx[:n_test])
    test = np.sort(np.concatenate(test_parts))
    train = np.setdiff1d(np.arange(len(y)), test)
    return train, test


def _grouped_split(y, patient_ids, config: SplitConfig, rng):
    unique = []
    seen = set()
    for pid in patient_ids:
        if pid not in seen:
            seen.add(pid)
            unique.append(pid)
    order = rng.permutation(len(unique))
    target = round(config.test_fraction * len(y))
    test_rows: list[int] = []
    for k in order:
        pid = unique[k]
        rows = np.flatnonzero(patient_ids == pid)
        if len(test_rows) >= target:
            break
        test_rows.extend(rows.tolist())
    test = np.sort(np.array(test_rows, dtype=int))
    train = np.setdiff1d(np.arange(len(y)), test)
    for side, name in ((train, "train"), (test, "test")):
        if len(side) == 0 or y[side].min() == y[side].max():
            raise DataError(f"grouped split left the {name} side with a single class")
    return train, test


@dataclass
class RunRecord:
    seed: int
    metrics: MetricSet
    top_features: list[str]


@dataclass
class RunsReport:
    model_kind: str
    n_runs: int
    master_seed: int
    runs: list[RunRecord]
    mean: dict[str, float]
    std: dict[str, float]
    mean_importance: dict[str, float]


def _one_run(matrix: FeatureMatrix, spec: ModelSpec, split_config: SplitConfig,
             master_seed: int, r: int, top_k: int):
    run_seed = derive_seed(master_seed, "run", r)
    cfg = replace(split_config, seed=derive_seed(run_seed, "split"))
    train_idx, test_idx = split(matrix, cfg)
    imputer = Imputer.fit(matrix.X[train_idx])
    X_train = imputer.transform(matrix.X[train_idx])
    X_test = imputer.transform(matrix.X[test_idx])
    run_spec = replace(spec, seed=derive_seed(run_seed, "fit"))
    clf = classifiers.train(run_spec, X_train, matrix.y[train_idx])
    scores = clf.predict_proba(X_test)
    mset = metrics(matrix.y[test_idx], scores)
    imp = classifiers.importances(clf, X_train, matrix.y[train_idx],
                                  seed=derive_seed(run_seed, "importance"))
    top = [matrix.names[j] for j in np.argsort(-imp, kind="stable")[:top_k]]
    return RunRecord(seed=run_seed, metrics=mset, top_features=top), imp


def repeated_eval(matrix: FeatureMatrix, spec: ModelSpec,
                  split_config: Optional[SplitConfig] = None,
                  n_runs: int = 100, master_seed: int = 0,
                  top_k: int = 10, workers: int = 1) -> RunsReport:
    """Split/fit/score ``n_runs`` times; aggregate means, stds, importances."""
    split_config = split_config or SplitConfig()
    if n_runs < 1:
        raise ConfigError(f"n_runs must be positive, got {n_runs}")

    def job(r: int):
        return _one_run(matrix, spec, split_config, master_seed, r, top_k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_runs)))
    else:
        results = [job(r) for r in range(n_runs)]

    runs = [r for r, _ in results]
    imp_sum = np.sum([imp for _, imp in results], axis=0)
    imp_mean = imp_sum / n_runs
    per_metric = {
        name: np.array([getattr(r.metrics, name) for r in runs])
        for name in ("accuracy", "auc", "f1")
    }
    return RunsReport(
        model_kind=spec.kind, n_runs=n_runs, master_seed=master_seed, runs=runs,
        mean={k: float(v.mean()) for k, v in per_metric.items()},
        std={k: float(v.std()) for k, v in per_metric.items()},
        mean_importance={matrix.names[j]: float(imp_mean[j]) for j in range(len(imp_mean))},
    )


def ablation_column_sets(names: Sequence[str]) -> dict[str, list[int]]:
    """Column indices for the three feature-set configurations."""
    baseline = [j for j, n in enumerate(names)
                if not n.startswith(_SENTENCE_PREFIX) and not n.startswith(_SENTIMENT_PREFIX)]
    sentences = [j for j, n in enumerate(names) if n.startswith(_SENTENCE_PREFIX)]
    sentiments = [j for j, n in enumerate(names) if n.startswith(_SENTIMENT_PREFIX)]
    return {
        "baseline": baseline,
        "baseline_domain_sentences": baseline + sentences,
        "baseline_clinical_sentiment": baseline + sentiments,
    }


def _subset_matrix(matrix: FeatureMatrix, cols: Sequence[int]) -> FeatureMatrix:
    from .features import FeatureSchema
    schema = FeatureSchema([matrix.schema.columns[j] for j in cols])
    return FeatureMatrix(schema=schema, X=matrix.X[:, cols], y=matrix.y,
                         admission_ids=matrix.admission_ids, patient_ids=matrix.patient_ids)


@dataclass
class AblationReport:
    model_kind: str
    n_runs: int
    master_seed: int
    table: dict[str, dict[str, float]]  # config -> metric means/stds
    relative_f1_improvement: float
    reports: dict[str, RunsReport]


def ablation(matrix: FeatureMatrix, spec: ModelSpec,
             split_config: Optional[SplitConfig] = None,
             n_runs: int = 100, master_seed: int = 0, workers: int = 1) -> AblationReport:
    """repeated_eval for each feature-set configuration over identical seeds."""
    sets = ablation_column_sets(matrix.names)
    reports: dict[str, RunsReport] = {}
    for name in ABLATION_CONFIGS:
        sub = _subset_matrix(matrix, sets[name])
        reports[name] = repeated_eval(sub, spec, split_config, n_runs=n_runs,
                                      master_seed=master_seed, workers=workers)
    table = {
        name: {
            "accuracy": reports[name].mean["accuracy"],
            "auc": reports[name].mean["auc"],
            "f1": reports[name].mean["f1"],
            "accuracy_std": reports[name].std["accuracy"],
            "auc_std": reports[name].std["auc"],
            "f1_std": reports[name].std["f1"],
        }
        for name in ABLATION_CONFIGS
    }
    base_f1 = table["baseline"]["f1"]
    best_f1 = max(t["f1"] for t in table.values())
    improvement = (best_f1 - base_f1) / base_f1 if base_f1 > 0 else 0.0
    return AblationReport(model_kind=spec.kind, n_runs=n_runs, master_seed=master_seed,
                          table=table, relative_f1_improvement=improvement, reports=reports)


def _stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    assignment = np.empty(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        for k, row in enumerate(idx):
            assignment[row] = k % folds
    return assignment


@dataclass
class RfeRepeat:
    elimination_order: list[str]  # dropped first -> last
    cv_scores: list[float]        # mean CV F1 at each width, widest first
    widths: list[int]
    best_width: int
    best_set: list[str]
    best_score: float


@dataclass
class RfeOutcome:
    model_kind: str
    folds: int
    repeats: int
    master_seed: int
    schema_names: list[str]
    repeats_detail: list[RfeRepeat]
    best_repeat: int
    best_set: list[str]
    best_score: float


def rfe(matrix: FeatureMatrix, spec: ModelSpec, folds: int = 3, repeats: int = 30,
        master_seed: int = 0, workers: int = 1) -> RfeOutcome:
    """Cross-validated recursive feature elimination, one column per step.

    Per repeat: stratified k-fold CV; at each width the mean CV F1 is
    recorded and the column with the lowest fold-averaged importance is
    dropped. The best set per repeat is the width maximizing mean CV F1
    (ties favor the smaller set); the overall best is the repeat with the
    highest best score.
    """
    if matrix.X.shape[1] < 2:
        raise DataError("RFE needs a matrix with at least 2 columns")
    names = list(matrix.names)

    def one_repeat(rep: int) -> RfeRepeat:
        rep_seed = derive_seed(master_seed, "rfe", rep)
        rng = np.random.default_rng(rep_seed)
        fold_of = _stratified_folds(matrix.y, folds, rng)
        active = list(range(len(names)))
        order: list[str] = []
        widths: list[int] = []
        scores: list[float] = []
        sets: list[list[int]] = []
        while active:
            f1s = []
            imp_sum = np.zeros(len(active))
            for k in range(folds):
                tr = np.flatnonzero(fold_of != k)
                te = np.flatnonzero(fold_of == k)
                imputer = Imputer.fit(matrix.X[np.ix_(tr, active)])
                X_tr = imputer.transform(matrix.X[np.ix_(tr, active)])
                X_te = imputer.transform(matrix.X[np.ix_(te, active)])
                fold_spec = replace(spec, seed=derive_seed(rep_seed, "fold", k, len(active)))
                clf = classifiers.train(fold_spec, X_tr, matrix.y[tr])
                scores_te = clf.predict_proba(X_te)
                f1s.append(metrics(matrix.y[te], scores_te).f1)
                imp_sum += classifiers.importances(
                    clf, X_tr, matrix.y[tr], seed=derive_seed(rep_seed, "imp", k, len(active)))
            widths.append(len(active))
            scores.append(float(np.mean(f1s)))
            sets.append(list(active))
            if len(active) == 1:
                break
            drop_pos = int(np.argmin(imp_sum / folds))
            order.append(names[active[drop_pos]])
            active.pop(drop_pos)
        # ties favor the smaller set, i.e. the latest width achieving the max
        best_pos = len(scores) - 1 - int(np.argmax(scores[::-1]))
        return RfeRepeat(
            elimination_order=order, cv_scores=scores, widths=widths,
            best_width=widths[best_pos],
            best_set=[names[j] for j in sets[best_pos]],
            best_score=scores[best_pos],
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            details = list(pool.map(one_repeat, range(repeats)))
    else:
        details = [one_repeat(rep) for rep in range(repeats)]
    best_repeat = int(np.argmax([d.best_score for d in details]))
    return RfeOutcome(
        model_kind=spec.kind, folds=folds, repeats=repeats, master_seed=master_seed,
        schema_names=names, repeats_detail=details, best_repeat=best_repeat,
        best_set=details[best_repeat].best_set,
        best_score=details[best_repeat].best_score,
    )


def consensus_elimination(outcomes: Sequence[RfeOutcome]) -> list[str]:
    """Feature values safely eliminated in at least two of three outcomes.

    A column counts as safely eliminated in an outcome when it was part of
    that outcome's schema but absent from its best set: the best CV score
    was achieved without it, so its removal never reduced the best score.
    """
    if len(outcomes) != 3:
        raise ConfigError(f"consensus requires exactly 3 outcomes, got {len(outcomes)}")
    counts: dict[str, int] = {}
    for o in outcomes:
        schema = set(o.schema_names)
        best = set(o.best_set)
        if not best <= schema:
            raise DataError("RFE outcome best set contains columns missing from its schema")
        for name in schema - best:
            counts[name] = counts.get(name, 0) + 1
    return sorted(name for name, c in counts.items() if c >= 2)


# ------------------------------------------------------------- rendering

def _metricset_obj(m: MetricSet) -> dict:
    return {"accuracy": m.accuracy, "auc": m.auc, "f1": m.f1, "threshold": m.threshold}


def runs_report_obj(report: RunsReport) -> dict:
    return {
        "model_kind": report.model_kind,
        "n_runs": report.n_runs,
        "master_seed": report.master_seed,
        "mean": report.mean,
        "std": report.std,
        "per_run": [
            {"seed": r.seed, **_metricset_obj(r.metrics), "top_features": r.top_features}
            for r in report.runs
        ],
        "mean_importance": report.mean_importance,
    }


def ablation_report_obj(report: AblationReport) -> dict:
    return {
        "model_kind": report.model_kind,
        "n_runs": report.n_runs,
        "master_seed": report.master_seed,
        "table": report.table,
        "relative_f1_improvement": report.relative_f1_improvement,
        "configurations": {k: runs_report_obj(v) for k, v in report.reports.items()},
    }


def rfe_outcome_obj(outcome: RfeOutcome) -> dict:
    return {
        "model_kind": outcome.model_kind,
        "folds": outcome.folds,
        "repeats": outcome.repeats,
        "master_seed": outcome.master_seed,
        "schema_names": outcome.schema_names,
        "best_repeat": outcome.best_repeat,
        "best_set": outcome.best_set,
        "best_score": outcome.best_score,
        "repeats_detail": [
            {
                "elimination_order": d.elimination_order,
                "widths": d.widths,
                "cv_scores": d.cv_scores,
                "best_width": d.best_width,
                "best_set": d.best_set,
                "best_score": d.best_score,
            }
            for d in outcome.repeats_detail
        ],
    }


def rfe_outcome_from_obj(obj: dict) -> RfeOutcome:
    details = [
        RfeRepeat(
            elimination_order=list(d["elimination_order"]), cv_scores=list(d["cv_scores"]),
            widths=list(d["widths"]), best_width=d["best_width"],
            best_set=list(d["best_set"]), best_score=d["best_score"],
        )
        for d in obj["repeats_detail"]
    ]
    return RfeOutcome(
        model_kind=obj["model_kind"], folds=obj["folds"], repeats=obj["repeats"],
        master_seed=obj["master_seed"], schema_names=list(obj["schema_names"]),
        repeats_detail=details, best_repeat=obj["best_repeat"],
        best_set=list(obj["best_set"]), best_score=obj["best_score"],
    )


def render_ablation_text(report: AblationReport) -> str:
    """Plain-text results table, rows in ascending F1 order."""
    rows = sorted(ABLATION_CONFIGS, key=lambda name: report.table[name]["f1"])
    lines = [
        f"Model: {report.model_kind} ({report.n_runs} runs per configuration, "
        f"seed {report.master_seed})",
        f"{'Configuration':<30}{'Acc':>8}{'AUC':>8}{'F1':>8}",
    ]
    for name in rows:
        t = report.table[name]
        lines.append(f"{ABLATION_TITLES[name]:<30}{t['accuracy']:>8.2f}{t['auc']:>8.2f}{t['f1']:>8.2f}")
    lines.append(f"Best-vs-baseline F1 improvement: {100 * report.relative_f1_improvement:.1f}%")
    return "\n".join(lines) + "\n"


def render_runs_text(report: RunsReport) -> str:
    m, s = report.mean, report.std
    lines = [
        f"Model: {report.model_kind} ({report.n_runs} runs, seed {report.master_seed})",
        f"{'Metric':<10}{'Mean':>8}{'Std':>8}",
        f"{'Acc':<10}{m['accuracy']:>8.3f}{s['accuracy']:>8.3f}",
        f"{'AUC':<10}{m['auc']:>8.3f}{s['auc']:>8.3f}",
        f"{'F1':<10}{m['f1']:>8.3f}{s['f1']:>8.3f}",
    ]
    top = sorted(report.mean_importance.items(), key=lambda kv: -kv[1])[:10]
    lines.append("Top features by mean importance:")
    for name, value in top:
        lines.append(f"  {name:<40}{value:.4f}")
    return "\n".join(lines) + "\n"
