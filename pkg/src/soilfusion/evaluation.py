"""Splitting, regression metrics, correlation analysis and experiment drivers."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .data_model import MEASURED, SIMULATED_TDR, Dataset
from .errors import DimensionError, InsufficientDataError, SchemaError, UndefinedMetricError
from .regression import ForestParams, feature_importance, fit_extra_trees, predict_forest


class Experiment(str, enum.Enum):
    BASELINE = "baseline"
    APPROACH1 = "approach1"
    APPROACH2 = "approach2"


# --------------------------------------------------------------------------- metrics


def _pair(y_true, y_pred):
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InsufficientDataError("metrics need at least one value")
    return a, b


def r2(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise UndefinedMetricError("undefined R² (zero variance)")
    return float(1.0 - np.sum((y - p) ** 2) / ss_tot)


def rmse(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((y - p) ** 2)))


def pearson(a, b) -> float:
    a, b = _pair(a, b)
    if a.size < 2:
        raise InsufficientDataError("pearson needs at least two values")
    ac = a - a.mean()
    bc = b - b.mean()
    saa = np.sum(ac * ac)
    sbb = np.sum(bc * bc)
    if saa == 0 or sbb == 0:
        raise UndefinedMetricError("undefined correlation (constant input)")
    r = np.sum(ac * bc) / math.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, r)))


# --------------------------------------------------------------------------- splitting


def train_test_split(ds: Dataset, seed: int, ratio: float = 0.5, stratify: bool = False):
    """Seeded shuffle; the first ceil(ratio * n) rows train, the rest test.

    With ``stratify`` rows are shuffled within each plot, grouped by plot and
    assigned by a running quota, so every plot is split near ``ratio`` while
    the overall train size stays ceil(ratio * n).
    """
    n = len(ds)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 rows to split, got {n}")
    if not 0 < ratio < 1:
        raise SchemaError(f"split ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    if not stratify:
        order = rng.permutation(n)
        n_train = math.ceil(ratio * n)
        train_idx, test_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    else:
        order = np.concatenate([rng.permutation(np.flatnonzero(ds.plot_id == p)) for p in np.unique(ds.plot_id)])
        i = np.arange(n)
        is_train = np.ceil((i + 1) * ratio) > np.ceil(i * ratio)
        train_idx, test_idx = np.sort(order[is_train]), np.sort(order[~is_train])
    if test_idx.size == 0:
        raise InsufficientDataError("split left the test subset empty")
    return ds.take(train_idx), ds.take(test_idx)


# --------------------------------------------------------------------------- correlation


@dataclass
class CorrelationReport:
    per_plot: dict[int, float]
    overall: float | None
    notes: dict[str, str] = field(default_factory=dict)
    points: list[tuple[int, float, float]] = field(default_factory=list)


def correlate_plots(ds: Dataset, measured_only: bool = True) -> CorrelationReport:
    """Pearson r between GPR delta-theta and theta, per plot and pooled.

    Plots where r is undefined are left out of ``per_plot`` and noted.
    """
    dth = ds.dtheta_values()
    if dth is None:
        raise SchemaError("correlation needs GPR delta-theta values")
    keep = ds.provenance == MEASURED if measured_only else np.ones(len(ds), dtype=bool)
    plots, dth, theta = ds.plot_id[keep], dth[keep], ds.target[keep]
    report = CorrelationReport(per_plot={}, overall=None,
                               points=[(int(p), float(a), float(b)) for p, a, b in zip(plots, dth, theta)])
    for plot in np.unique(plots):
        m = plots == plot
        try:
            report.per_plot[int(plot)] = pearson(dth[m], theta[m])
        except (UndefinedMetricError, InsufficientDataError) as e:
            report.notes[str(int(plot))] = f"undefined: {e}"
    try:
        report.overall = pearson(dth, theta)
    except (UndefinedMetricError, InsufficientDataError) as e:
        report.notes["all"] = f"undefined: {e}"
    return report


# --------------------------------------------------------------------------- experiments


@dataclass
class EvalReport:
    experiment: str
    method: str | None
    r2: float
    rmse: float
    fi_gpr: float | None
    pearson_per_plot: dict[int, float]
    pearson_all: float | None
    n_train: int
    n_test: int
    seed: int
    version: str = __version__

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pearson_per_plot"] = {str(k): v for k, v in self.pearson_per_plot.items()}
        if self.fi_gpr is None:
            del d["fi_gpr"]
        return d


def experiment_dataset(ds: Dataset, experiment: Experiment | str) -> Dataset:
    """Check ``ds`` against the experiment's schema and return the matrix to learn from."""
    experiment = Experiment(experiment)
    if experiment is Experiment.BASELINE:
        if SIMULATED_TDR in set(ds.provenance):
            raise SchemaError("baseline expects measured theta targets, got simulated TDR rows")
        return ds.drop_dtheta()
    if experiment is Experiment.APPROACH1:
        if not ds.has_dtheta_feature:
            raise SchemaError("approach1 needs the gpr_dtheta feature")
        if SIMULATED_TDR in set(ds.provenance):
            raise SchemaError("approach1 expects measured theta targets, got simulated TDR rows")
        return ds
    if ds.has_dtheta_feature:
        raise SchemaError("approach2 expects spectrum-only features")
    return ds


def run_experiment(
    ds: Dataset,
    experiment: Experiment | str,
    seed: int,
    forest: ForestParams | None = None,
    method: str | None = None,
    ratio: float = 0.5,
    stratify: bool = False,
    n_jobs: int = 1,
) -> EvalReport:
    """Split, fit extra-trees on the train half, score the test half."""
    experiment = Experiment(experiment)
    data = experiment_dataset(ds, experiment)
    train, test = train_test_split(data, seed, ratio=ratio, stratify=stratify)
    params = forest or ForestParams(seed=seed)
    model = fit_extra_trees(train.features, train.target, params, n_jobs=n_jobs)
    pred = predict_forest(model, test.features)

    corr = correlate_plots(ds, measured_only=False) if ds.dtheta_values() is not None else None
    return EvalReport(
        experiment=experiment.value,
        method=method,
        r2=r2(test.target, pred),
        rmse=rmse(test.target, pred),
        fi_gpr=float(feature_importance(model)[-1]) if data.has_dtheta_feature else None,
        pearson_per_plot={} if corr is None else corr.per_plot,
        pearson_all=None if corr is None else corr.overall,
        n_train=len(train),
        n_test=len(test),
        seed=seed,
    )

