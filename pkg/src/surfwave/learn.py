"""Evaluation harnesses for surface descriptors.

Binary classification uses a linear soft-margin SVM under seeded
stratified cross-validation with per-fold standardization (training
statistics only -- no test leakage). Age regression uses partial least
squares fitted by NIPALS deflation and scored with leave-one-out
cross-validation. Accuracy comparisons between two descriptors use a
two-sided paired t-test over common folds; whether significance in this
setting should pair folds, subjects, or repetitions is a modelling
choice, so every emitted comparison carries a ``pairing`` note.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.model_selection import StratifiedKFold
from sklearn.svm import SVC

from .errors import DimensionError, DomainError, RankError

SVM_TOL = 1e-6
PAIRING_NOTE = "paired two-sided t-test over common CV folds"


@dataclass
class LabeledDataset:
    """Feature rows with class or real-valued labels."""

    features: np.ndarray
    labels: np.ndarray
    subject_ids: list
    group_ids: list | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise DimensionError("features must be a 2-D matrix")
        n = self.features.shape[0]
        if self.labels.shape[0] != n or len(self.subject_ids) != n:
            raise DimensionError("features, labels and subject_ids disagree on n")
        if n < 2:
            raise DomainError("need at least 2 samples")
        if not np.all(np.isfinite(self.features)):
            raise DomainError("features contain non-finite values")

    @property
    def n(self):
        return self.features.shape[0]

    def subset(self, idx):
        return LabeledDataset(
            self.features[idx],
            self.labels[idx],
            [self.subject_ids[i] for i in idx],
            None if self.group_ids is None else [self.group_ids[i] for i in idx],
        )


@dataclass
class ClassificationReport:
    fold_accuracies: np.ndarray  # fractions, one per fold
    mean_accuracy: float  # percent
    std_accuracy: float  # percent, ddof=1 over folds
    confusion: np.ndarray  # 2x2, rows true / cols predicted, summed over folds
    classes: tuple
    predictions: list  # per-sample predicted labels, dataset order
    config_echo: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "confusion": [[int(c) for c in row] for row in self.confusion],
            "classes": list(self.classes),
            "config_echo": dict(self.config_echo),
            "pairing_note": PAIRING_NOTE,
        }


@dataclass
class RegressionReport:
    predictions: np.ndarray
    pearson_r: float
    mae: float
    scatter_rows: list  # (true, predicted) pairs
    subject_ids: list
    config_echo: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "pearson_r": self.pearson_r,
            "mae": self.mae,
            "n": int(len(self.predictions)),
            "config_echo": dict(self.config_echo),
        }


@dataclass
class ComparisonResult:
    p_value: float
    t_statistic: float
    mean_difference: float
    degenerate: bool
    n_folds: int

    def to_dict(self):
        return {
            "p_value": self.p_value,
            "t_statistic": self.t_statistic,
            "mean_difference": self.mean_difference,
            "degenerate": self.degenerate,
            "n_folds": self.n_folds,
            "pairing_note": PAIRING_NOTE,
        }


def balance_classes(dataset, seed):
    """Subsample the larger of two classes down to the smaller one.

    Selection is uniform at random (seeded); surviving rows keep their
    original order, and an already balanced dataset passes through
    unchanged.
    """
    classes, counts = np.unique(dataset.labels, return_counts=True)
    if classes.shape[0] != 2:
        raise DomainError(f"need exactly 2 classes, got {classes.shape[0]}")
    if counts[0] == counts[1]:
        return dataset
    rng = np.random.default_rng(seed)
    small = classes[counts.argmin()]
    large = classes[counts.argmax()]
    keep = np.nonzero(dataset.labels == small)[0]
    pool = np.nonzero(dataset.labels == large)[0]
    chosen = rng.choice(pool, size=counts.min(), replace=False)
    idx = np.sort(np.concatenate([keep, chosen]))
    return dataset.subset(idx)


def _standardize(train, test):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    return (train - mean) / std, (test - mean) / std


def cross_validate_svm(dataset, folds=10, C=1.0, seed=0):
    """Seeded stratified k-fold evaluation of a linear soft-margin SVM.

    Each fold standardizes features with training statistics only, fits
    ``SVC(kernel="linear")`` at the given penalty to tolerance 1e-6, and
    scores the held-out fold.
    """
    classes = tuple(sorted(np.unique(dataset.labels).tolist()))
    if len(classes) != 2:
        raise DomainError(f"need exactly 2 classes, got {len(classes)}")
    if folds < 2:
        raise DomainError(f"folds must be >= 2, got {folds}")
    min_class = min(int((dataset.labels == c).sum()) for c in classes)
    if folds > min_class:
        raise DomainError(
            f"{folds} folds but smallest class has only {min_class} members"
        )

    class_index = {c: i for i, c in enumerate(classes)}
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    fold_accuracies = np.empty(folds)
    confusion = np.zeros((2, 2), dtype=np.int64)
    predictions = [None] * dataset.n

    y = dataset.labels
    for f, (train_idx, test_idx) in enumerate(splitter.split(dataset.features, y)):
        x_train, x_test = _standardize(
            dataset.features[train_idx], dataset.features[test_idx]
        )
        model = SVC(kernel="linear", C=C, tol=SVM_TOL)
        model.fit(x_train, y[train_idx])
        predicted = model.predict(x_test)
        fold_accuracies[f] = float(np.mean(predicted == y[test_idx]))
        for true, pred in zip(y[test_idx], predicted):
            confusion[class_index[true], class_index[pred]] += 1
        for i, pred in zip(test_idx, predicted):
            predictions[i] = pred

    return ClassificationReport(
        fold_accuracies=fold_accuracies,
        mean_accuracy=float(fold_accuracies.mean() * 100.0),
        std_accuracy=float(fold_accuracies.std(ddof=1) * 100.0),
        confusion=confusion,
        classes=classes,
        predictions=predictions,
        config_echo={
            "classifier": "linear-svm",
            "C": float(C),
            "folds": int(folds),
            "seed": int(seed),
            "n": int(dataset.n),
        },
    )


@dataclass
class PlsModel:
    """Linear predictor assembled from NIPALS latent components."""

    x_mean: np.ndarray
    y_mean: float
    x_weights: np.ndarray  # (d, ncomp)
    x_loadings: np.ndarray  # (d, ncomp)
    y_loadings: np.ndarray  # (ncomp,)
    coef: np.ndarray  # (d,)
    n_components: int

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x - self.x_mean) @ self.coef + self.y_mean


def pls_fit(x, y, ncomp):
    """Fit partial least squares by NIPALS deflation (single response).

    Components maximize covariance between projected features and the
    response; the final regression vector collapses them into one linear
    predictor. Extraction stops early if the residuals vanish, so the
    effective number of components can be below ``ncomp``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = x.shape
    if y.shape[0] != n:
        raise DimensionError(f"y length {y.shape[0]} != n rows {n}")
    if not 1 <= ncomp <= min(n - 1, d):
        raise DomainError(
            f"ncomp must be in [1, {min(n - 1, d)}], got {ncomp}"
        )
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    if not np.any(np.abs(xc) > 0):
        raise RankError("all feature columns have zero variance")
    yc = y - y_mean

    tiny = np.finfo(float).eps * max(n, d)
    x_scale = max(np.linalg.norm(xc), 1.0)
    weights, loadings, y_loads = [], [], []
    for _ in range(ncomp):
        w = xc.T @ yc
        w_norm = np.linalg.norm(w)
        if w_norm <= tiny * x_scale * max(np.linalg.norm(yc), 1.0):
            break
        w /= w_norm
        t = xc @ w
        tt = float(t @ t)
        if tt <= tiny * x_scale**2:
            break
        p = xc.T @ t / tt
        c = float(yc @ t) / tt
        xc = xc - np.outer(t, p)
        yc = yc - c * t
        weights.append(w)
        loadings.append(p)
        y_loads.append(c)

    if not weights:
        raise RankError("no usable latent component (response orthogonal to X)")

    w_mat = np.column_stack(weights)
    p_mat = np.column_stack(loadings)
    c_vec = np.asarray(y_loads)
    # rotate weights into the original (undeflated) feature space
    coef = w_mat @ np.linalg.solve(p_mat.T @ w_mat, c_vec)
    return PlsModel(
        x_mean=x_mean,
        y_mean=y_mean,
        x_weights=w_mat,
        x_loadings=p_mat,
        y_loadings=c_vec,
        coef=coef,
        n_components=len(y_loads),
    )


def pls_loocv(dataset, ncomp=10):
    """Leave-one-out PLS evaluation of real-valued labels.

    ``ncomp`` is capped at what each training split supports. Reports
    Pearson's r, mean absolute error, and the (true, predicted) scatter.
    """
    x = dataset.features
    y = dataset.labels.astype(np.float64)
    n, d = x.shape
    predictions = np.empty(n)
    for i in range(n):
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        capped = min(ncomp, n - 2, d)
        model = pls_fit(x[mask], y[mask], capped)
        predictions[i] = model.predict(x[i : i + 1])[0]

    pearson_r = float(np.corrcoef(y, predictions)[0, 1])
    mae = float(np.mean(np.abs(y - predictions)))
    return RegressionReport(
        predictions=predictions,
        pearson_r=pearson_r,
        mae=mae,
        scatter_rows=list(zip(y.tolist(), predictions.tolist())),
        subject_ids=list(dataset.subject_ids),
        config_echo={"method": "pls-loocv", "ncomp": int(ncomp), "n": int(n)},
    )


def paired_comparison(acc_a, acc_b):
    """Two-sided paired t-test on per-fold accuracy differences.

    Zero variance of the differences (e.g. identical fold accuracies)
    cannot support a t-statistic; such comparisons report p = 1 with the
    ``degenerate`` flag set.
    """
    a = np.asarray(acc_a, dtype=np.float64)
    b = np.asarray(acc_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError("fold accuracy arrays must be 1-D and equal length")
    if a.shape[0] < 2:
        raise DimensionError("need at least 2 paired folds")
    diff = a - b
    if np.all(diff == diff[0]):  # zero variance of differences
        return ComparisonResult(
            p_value=1.0,
            t_statistic=0.0,
            mean_difference=float(diff.mean()),
            degenerate=True,
            n_folds=a.shape[0],
        )
    t_stat, p_value = stats.ttest_rel(a, b)
    return ComparisonResult(
        p_value=float(p_value),
        t_statistic=float(t_stat),
        mean_difference=float(diff.mean()),
        degenerate=False,
        n_folds=a.shape[0],
    )
