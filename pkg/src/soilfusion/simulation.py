"""Extension of the sparse measured dataset.

Approach 1 (:func:`simulate_gpr`) fills in GPR delta-theta at every TDR
sample time, either by interpolating the measured GPR series over time (plus
Gaussian noise) or by a regressor linking TDR theta to GPR delta-theta.

Approach 2 (:func:`simulate_tdr`) learns a map delta-theta -> theta at the
probe cells and applies it to every other 10 cm cell of every GPR profile,
yielding spectrum-only rows with a simulated theta target.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data_model import (
    DEFAULT_TIME_TOLERANCE_S,
    MEASURED,
    N_CELLS,
    SIMULATED_GPR,
    SIMULATED_TDR,
    BAND_COLUMNS,
    Dataset,
    GprProfile,
    HyperspectralFrame,
    SkipReport,
    TdrSample,
    concat_datasets,
    index_frames,
    index_tdr,
    pixel_spectrum,
    resample_profile,
)
from .errors import InsufficientDataError, SchemaError, SoilFusionError
from .regression import (
    ForestParams,
    fit_extra_trees,
    fit_linear,
    predict_forest,
    predict_linear,
)

NOISE_FRACTION = 0.1  # default noise sigma as a fraction of the plot's measured delta-theta std
GAP_FACTOR = 3.0  # knot spacing above this multiple of the median spacing counts as a gap


class Method(str, enum.Enum):
    INTERPOLATION = "interpolation"
    LINEAR_REGRESSION = "linear_regression"
    ET_REGRESSION = "et_regression"

    @classmethod
    def parse(cls, name: str) -> "Method":
        aliases = {"linreg": cls.LINEAR_REGRESSION, "et": cls.ET_REGRESSION, "interp": cls.INTERPOLATION}
        if name in aliases:
            return aliases[name]
        return cls(name)

    @property
    def short(self) -> str:
        return {"interpolation": "interpolation", "linear_regression": "linreg", "et_regression": "et"}[self.value]


@dataclass(frozen=True)
class SimConfig:
    method: Method = Method.INTERPOLATION
    noise_sigma: float | None = None  # None -> NOISE_FRACTION * std of the plot's measured delta-theta
    seed: int = 0
    use_spectrum_features: bool = False
    bridge_gaps: bool = True
    forest: ForestParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method) if isinstance(self.method, str) else self.method)
        if self.noise_sigma is not None and not self.noise_sigma >= 0:
            raise SoilFusionError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise SoilFusionError(f"seed must be unsigned, got {self.seed}")

    def forest_params(self) -> ForestParams:
        return self.forest or ForestParams(seed=self.seed)


# --------------------------------------------------------------------------- primitives


def interp1(xs, ys, xq) -> np.ndarray:
    """Piecewise-linear interpolation, clamped to the end values outside the knots."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.size == 0:
        raise InsufficientDataError("interp1 needs at least one knot")
    if ys.shape != xs.shape:
        raise SchemaError(f"{xs.size} knot positions but {ys.size} knot values")
    if np.any(np.diff(xs) <= 0):
        raise SchemaError("interp1 knot positions must be strictly increasing")
    return np.interp(np.asarray(xq, dtype=np.float64), xs, ys)


def add_gaussian_noise(values, sigma: float, seed) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise drawn from ``default_rng(seed)``."""
    if not sigma >= 0:
        raise SoilFusionError(f"noise sigma must be >= 0, got {sigma}")
    values = np.asarray(values, dtype=np.float64)
    if sigma == 0:
        return values.copy()
    return values + np.random.default_rng(seed).normal(0.0, sigma, size=values.shape)


def noise_seed(seed: int, plot_id: int, position: int) -> np.random.SeedSequence:
    """Noise stream of one (plot, position) series."""
    return np.random.SeedSequence([seed, plot_id, position])


def split_segments(times: np.ndarray, gap_factor: float = GAP_FACTOR) -> list[slice]:
    """Split sorted knot times where spacing exceeds ``gap_factor`` x the median spacing."""
    if times.size < 3:
        return [slice(0, times.size)]
    steps = np.diff(times)
    cuts = np.flatnonzero(steps > gap_factor * np.median(steps)) + 1
    bounds = [0, *cuts.tolist(), times.size]
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def interpolate_series(knot_t, knot_v, query_t, bridge_gaps: bool = True) -> np.ndarray:
    """Interpolate a GPR time series at ``query_t``.

    With ``bridge_gaps=False`` each query uses only the segment of knots it
    falls in (see :func:`split_segments`); queries inside a gap take the end
    value of the nearer segment.
    """
    knot_t = np.asarray(knot_t, dtype=np.float64)
    query_t = np.asarray(query_t, dtype=np.float64)
    if bridge_gaps:
        return interp1(knot_t, knot_v, query_t)
    knot_v = np.asarray(knot_v, dtype=np.float64)
    segs = split_segments(knot_t)
    starts = np.array([knot_t[s][0] for s in segs])
    ends = np.array([knot_t[s][-1] for s in segs])
    out = np.empty_like(query_t)
    for i, t in enumerate(query_t):
        inside = np.flatnonzero((starts <= t) & (t <= ends))
        if inside.size:
            k = int(inside[0])
        else:
            dist = np.minimum(np.abs(starts - t), np.abs(ends - t))
            k = int(np.argmin(dist))
        s = segs[k]
        out[i] = interp1(knot_t[s], knot_v[s], t)
    return out


def _knots(times: np.ndarray, values: np.ndarray):
    """Sorted unique knot positions; duplicated positions take the mean value."""
    xs, inverse = np.unique(times, return_inverse=True)
    sums = np.bincount(inverse, weights=values)
    counts = np.bincount(inverse)
    return xs, sums / counts


# --------------------------------------------------------------------------- approach 1


def _require_dtheta(measured: Dataset) -> None:
    if not measured.has_dtheta_feature:
        raise SchemaError("measured dataset must carry the gpr_dtheta feature")
    if len(measured) == 0:
        raise InsufficientDataError("measured dataset is empty")


def plot_noise_sigmas(measured: Dataset, cfg: SimConfig) -> dict[int, float]:
    dth = measured.features[:, -1]
    out = {}
    for plot in np.unique(measured.plot_id):
        if cfg.noise_sigma is not None:
            out[int(plot)] = float(cfg.noise_sigma)
        else:
            out[int(plot)] = NOISE_FRACTION * float(np.std(dth[measured.plot_id == plot]))
    return out


def simulate_gpr(
    measured: Dataset,
    tdr_samples: Iterable[TdrSample],
    frames: Iterable[HyperspectralFrame],
    cfg: SimConfig,
    time_tolerance_s: float = DEFAULT_TIME_TOLERANCE_S,
) -> tuple[Dataset, SkipReport]:
    """Approach 1: simulated GPR delta-theta at every uncovered TDR sample.

    A TDR sample is covered when it is the sample a measured row was built
    from (nearest in time, same plot and probe cell). Measured rows are passed
    through unchanged.
    """
    _require_dtheta(measured)
    tdr_samples = list(tdr_samples)
    frame_index = index_frames(frames)
    tdr_index = index_tdr(tdr_samples)
    skips = SkipReport()

    covered = set()
    for plot, t, pos in zip(measured.plot_id, measured.timestamp, measured.position_index):
        idx = tdr_index.get((int(plot), int(pos)))
        s = None if idx is None else idx.item(int(t), time_tolerance_s)
        if s is not None:
            covered.add((s.plot_id, s.position_index, s.timestamp))

    todo: list[tuple[TdrSample, np.ndarray]] = []
    for s in sorted(tdr_samples, key=lambda s: (s.plot_id, s.position_index, s.timestamp)):
        if (s.plot_id, s.position_index, s.timestamp) in covered:
            continue
        spectrum = pixel_spectrum(frame_index, s.plot_id, s.timestamp, s.position_index, time_tolerance_s)
        if spectrum is None:
            skips.add(f"TDR plot={s.plot_id} t={s.timestamp} pos={s.position_index}: no hyperspectral pixel within {time_tolerance_s:g} s")
            continue
        todo.append((s, spectrum.bands))

    if not todo:
        return measured.sorted(), skips

    theta = np.array([s.theta for s, _ in todo])
    spectra = np.vstack([b for _, b in todo])
    if cfg.method is Method.INTERPOLATION:
        dtheta = interpolate_gpr(measured, [s for s, _ in todo], cfg)
    else:
        dtheta = _regress_gpr(measured, theta, spectra, cfg)

    simulated = Dataset(
        plot_id=[s.plot_id for s, _ in todo],
        timestamp=[s.timestamp for s, _ in todo],
        position_index=[s.position_index for s, _ in todo],
        provenance=np.array([SIMULATED_GPR] * len(todo), dtype=object),
        features=np.column_stack([spectra, dtheta]),
        target=theta,
        schema=measured.schema,
    )
    return concat_datasets([measured, simulated]).sorted(), skips


def interpolate_gpr(measured: Dataset, samples: list[TdrSample], cfg: SimConfig) -> np.ndarray:
    sigmas = plot_noise_sigmas(measured, cfg)
    dth = measured.features[:, -1]
    out = np.empty(len(samples))
    keys = np.array([(s.plot_id, s.position_index) for s in samples])
    times = np.array([s.timestamp for s in samples], dtype=np.float64)
    for plot, pos in sorted({(int(a), int(b)) for a, b in keys}):
        rows = np.flatnonzero((keys[:, 0] == plot) & (keys[:, 1] == pos))
        mask = (measured.plot_id == plot) & (measured.position_index == pos)
        kt, kv = _knots(measured.timestamp[mask].astype(np.float64), dth[mask])
        if kt.size < 2:
            raise InsufficientDataError(
                f"plot={plot} pos={pos}: interpolation needs >= 2 GPR timestamps, found {kt.size}"
            )
        # rows are in time order, so the noise stream is consumed chronologically
        values = interpolate_series(kt, kv, times[rows], bridge_gaps=cfg.bridge_gaps)
        out[rows] = add_gaussian_noise(values, sigmas[plot], noise_seed(cfg.seed, plot, pos))
    return out


def _regress_gpr(measured: Dataset, theta, spectra, cfg: SimConfig) -> np.ndarray:
    X_train = measured.target[:, None]
    X_query = np.asarray(theta)[:, None]
    if cfg.use_spectrum_features:
        X_train = np.column_stack([X_train, measured.spectra])
        X_query = np.column_stack([X_query, spectra])
    y_train = measured.features[:, -1]
    if cfg.method is Method.LINEAR_REGRESSION:
        return predict_linear(fit_linear(X_train, y_train), X_query)
    return predict_forest(fit_extra_trees(X_train, y_train, cfg.forest_params()), X_query)


# --------------------------------------------------------------------------- approach 2


@dataclass(frozen=True)
class ThetaMap:
    """Fitted 1-input map delta-theta -> theta."""

    method: Method
    model: object

    def __call__(self, dtheta) -> np.ndarray:
        x = np.asarray(dtheta, dtype=np.float64)
        if self.method is Method.INTERPOLATION:
            xs, ys = self.model
            return interp1(xs, ys, x)
        if self.method is Method.LINEAR_REGRESSION:
            return predict_linear(self.model, x[:, None])
        return predict_forest(self.model, x[:, None])


def fit_theta_map(dtheta, theta, cfg: SimConfig) -> ThetaMap:
    dtheta = np.asarray(dtheta, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if dtheta.size == 0:
        raise InsufficientDataError("no training pairs for the delta-theta -> theta map")
    if cfg.method is Method.INTERPOLATION:
        xs, ys = _knots(dtheta, theta)
        if xs.size < 2:
            raise InsufficientDataError(
                f"interpolation needs >= 2 distinct delta-theta values, found {xs.size}"
            )
        return ThetaMap(cfg.method, (xs, ys))
    if cfg.method is Method.LINEAR_REGRESSION:
        return ThetaMap(cfg.method, fit_linear(dtheta[:, None], theta))
    return ThetaMap(cfg.method, fit_extra_trees(dtheta[:, None], theta, cfg.forest_params()))


def simulate_tdr(
    measured: Dataset,
    profiles: Iterable[GprProfile],
    frames: Iterable[HyperspectralFrame],
    cfg: SimConfig,
    time_tolerance_s: float = DEFAULT_TIME_TOLERANCE_S,
) -> tuple[Dataset, SkipReport]:
    """Approach 2: simulated theta at every non-probe cell of every GPR profile.

    The returned rows are spectrum-only; the cell's delta-theta is kept in
    ``Dataset.dtheta``.
    """
    _require_dtheta(measured)
    theta_map = fit_theta_map(measured.features[:, -1], measured.target, cfg)
    frame_index = index_frames(frames)
    probes: dict[int, set[int]] = {}
    for plot, pos in zip(measured.plot_id, measured.position_index):
        probes.setdefault(int(plot), set()).add(int(pos))
    skips = SkipReport()

    cols = {"plot_id": [], "timestamp": [], "position_index": [], "spectra": [], "dtheta": []}
    for profile in sorted(profiles, key=lambda p: (p.plot_id, p.timestamp)):
        if profile.plot_id not in probes:
            skips.add(f"GPR plot={profile.plot_id} t={profile.timestamp}: plot has no measured probe rows")
            continue
        cells = resample_profile(profile)
        for c in range(N_CELLS):
            if c in probes[profile.plot_id]:
                continue
            spectrum = pixel_spectrum(frame_index, profile.plot_id, profile.timestamp, c, time_tolerance_s)
            if spectrum is None:
                skips.add(f"GPR plot={profile.plot_id} t={profile.timestamp} cell={c}: no hyperspectral pixel within {time_tolerance_s:g} s")
                continue
            cols["plot_id"].append(profile.plot_id)
            cols["timestamp"].append(profile.timestamp)
            cols["position_index"].append(c)
            cols["spectra"].append(spectrum.bands)
            cols["dtheta"].append(cells[c])

    n = len(cols["dtheta"])
    dtheta = np.asarray(cols["dtheta"], dtype=np.float64)
    ds = Dataset(
        plot_id=cols["plot_id"],
        timestamp=cols["timestamp"],
        position_index=cols["position_index"],
        provenance=np.array([SIMULATED_TDR] * n, dtype=object),
        features=np.vstack(cols["spectra"]) if n else np.empty((0, len(BAND_COLUMNS))),
        target=theta_map(dtheta) if n else np.empty(0),
        schema=BAND_COLUMNS,
        dtheta=dtheta,
    )
    return ds.sorted(), skips


# --------------------------------------------------------------------------- plot-ready tables


def gpr_timeseries(ds: Dataset) -> dict[tuple[int, int], list[tuple[int, float | None, float | None]]]:
    """Per (plot, position): rows of (time, measured delta-theta, simulated delta-theta)."""
    if not ds.has_dtheta_feature:
        raise SchemaError("time series need the gpr_dtheta feature")
    out: dict[tuple[int, int], list] = {}
    dth = ds.features[:, -1]
    for i in np.lexsort((ds.timestamp, ds.position_index, ds.plot_id)):
        key = (int(ds.plot_id[i]), int(ds.position_index[i]))
        v = float(dth[i])
        meas = ds.provenance[i] == MEASURED
        out.setdefault(key, []).append((int(ds.timestamp[i]), v if meas else None, None if meas else v))
    return out


def tdr_distribution(measured: Dataset, simulated: Dataset, plot_id: int):
    """Rows of (time, position, delta-theta, theta, provenance) for one plot, measured and simulated."""
    rows = []
    for ds in (measured, simulated):
        dth = ds.dtheta_values()
        for i in np.flatnonzero(ds.plot_id == plot_id):
            rows.append((int(ds.timestamp[i]), int(ds.position_index[i]),
                         None if dth is None else float(dth[i]), float(ds.target[i]), str(ds.provenance[i])))
    return sorted(rows, key=lambda r: (r[0], r[1]))
