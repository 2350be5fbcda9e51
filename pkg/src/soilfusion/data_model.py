"""Measurement types and assembly of the measured (non-simulated) dataset."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ResamplingError, SchemaError

N_RAW_BANDS = 125
N_TRIMMED = 5  # bands dropped at each end of the raw spectrum
N_BANDS = N_RAW_BANDS - 2 * N_TRIMMED
N_CELLS = 10  # 10 cm cells along the 1 m profile line
CELL_CM = 10
TDR_DEPTH_CM = 5
DEFAULT_TIME_TOLERANCE_S = 600.0

MEASURED = "measured"
SIMULATED_GPR = "simulated_gpr"
SIMULATED_TDR = "simulated_tdr"
PROVENANCES = (MEASURED, SIMULATED_GPR, SIMULATED_TDR)

BAND_COLUMNS = tuple(f"b{i:03d}" for i in range(N_TRIMMED, N_RAW_BANDS - N_TRIMMED))
DTHETA_COLUMN = "gpr_dtheta"
TARGET_NAME = "theta"


def _frozen(values, dtype=np.float64) -> np.ndarray:
    a = np.array(values, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawSpectrum:
    bands: np.ndarray

    def __post_init__(self):
        bands = _frozen(self.bands)
        if bands.shape != (N_RAW_BANDS,):
            raise SchemaError(f"raw spectrum needs {N_RAW_BANDS} bands, got {bands.size}")
        if not np.isfinite(bands).all():
            raise SchemaError("raw spectrum contains non-finite values")
        object.__setattr__(self, "bands", bands)


@dataclass(frozen=True)
class Spectrum:
    bands: np.ndarray

    def __post_init__(self):
        bands = _frozen(self.bands)
        if bands.shape != (N_BANDS,):
            raise SchemaError(f"spectrum needs {N_BANDS} bands, got {bands.size}")
        if not np.isfinite(bands).all():
            raise SchemaError("spectrum contains non-finite values")
        object.__setattr__(self, "bands", bands)


@dataclass(frozen=True)
class HyperspectralFrame:
    plot_id: int
    timestamp: int
    pixels: Mapping[int, RawSpectrum]

    def __post_init__(self):
        if self.timestamp < 0:
            raise SchemaError(f"negative timestamp {self.timestamp} in frame of plot {self.plot_id}")
        bad = [p for p in self.pixels if not 0 <= p < N_CELLS]
        if bad:
            raise SchemaError(f"frame plot={self.plot_id} t={self.timestamp}: position index {bad[0]} outside 0..9")
        object.__setattr__(self, "pixels", dict(sorted(self.pixels.items())))


@dataclass(frozen=True)
class GprProfile:
    plot_id: int
    timestamp: int
    positions_cm: np.ndarray
    delta_theta: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions_cm, dtype=np.int64)
        dth = _frozen(self.delta_theta)
        where = f"GPR profile plot={self.plot_id} t={self.timestamp}"
        if pos.ndim != 1 or pos.shape != dth.shape:
            raise SchemaError(f"{where}: {pos.size} positions vs {dth.size} values")
        if pos.size and (np.any(np.diff(pos) <= 0) or pos[0] < 0 or pos[-1] >= N_CELLS * CELL_CM):
            raise SchemaError(f"{where}: positions must be strictly increasing within 0..99 cm")
        if not np.isfinite(dth).all():
            raise SchemaError(f"{where}: non-finite delta_theta")
        object.__setattr__(self, "positions_cm", pos)
        object.__setattr__(self, "delta_theta", dth)


@dataclass(frozen=True)
class TdrSample:
    plot_id: int
    timestamp: int
    position_index: int
    theta: float
    depth_cm: int = TDR_DEPTH_CM

    def __post_init__(self):
        where = f"TDR sample plot={self.plot_id} t={self.timestamp}"
        if self.depth_cm != TDR_DEPTH_CM:
            raise SchemaError(f"{where}: depth {self.depth_cm} cm, expected {TDR_DEPTH_CM}")
        if not 0 <= self.position_index < N_CELLS:
            raise SchemaError(f"{where}: position index {self.position_index} outside 0..9")
        if not (np.isfinite(self.theta) and self.theta >= 0):
            raise SchemaError(f"{where}: theta must be finite and >= 0, got {self.theta}")


@dataclass(frozen=True)
class Datapoint:
    plot_id: int
    timestamp: int
    position_index: int
    features: np.ndarray
    target: float
    provenance: str


@dataclass(frozen=True)
class Dataset:
    """Column-oriented table of fused datapoints.

    ``dtheta`` optionally carries the GPR value of each row when it is not a
    feature (simulated TDR rows keep it as metadata).
    """

    plot_id: np.ndarray
    timestamp: np.ndarray
    position_index: np.ndarray
    provenance: np.ndarray
    features: np.ndarray
    target: np.ndarray
    schema: tuple[str, ...]
    target_name: str = TARGET_NAME
    dtheta: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.target)
        feats = _frozen(self.features)
        if feats.shape != (n, len(self.schema)):
            raise SchemaError(f"feature matrix {feats.shape} does not match {n} rows x {len(self.schema)} columns")
        if tuple(self.schema[:N_BANDS]) != BAND_COLUMNS or len(self.schema) not in (N_BANDS, N_BANDS + 1):
            raise SchemaError("feature schema must be b005..b119 optionally followed by gpr_dtheta")
        if len(self.schema) == N_BANDS + 1 and self.schema[-1] != DTHETA_COLUMN:
            raise SchemaError(f"extra feature column must be {DTHETA_COLUMN!r}")
        target = _frozen(self.target)
        if not np.isfinite(target).all():
            raise SchemaError("dataset target contains non-finite values")
        prov = _frozen(self.provenance, dtype=object)
        unknown = set(prov) - set(PROVENANCES)
        if unknown:
            raise SchemaError(f"unknown provenance {sorted(unknown)}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "provenance", prov)
        object.__setattr__(self, "schema", tuple(self.schema))
        for name in ("plot_id", "timestamp", "position_index"):
            col = _frozen(getattr(self, name), dtype=np.int64)
            if col.shape != (n,):
                raise SchemaError(f"column {name} has {col.size} rows, expected {n}")
            object.__setattr__(self, name, col)
        if self.dtheta is not None:
            object.__setattr__(self, "dtheta", _frozen(self.dtheta))

    def __len__(self) -> int:
        return int(self.target.shape[0])

    @property
    def has_dtheta_feature(self) -> bool:
        return self.schema[-1] == DTHETA_COLUMN

    @property
    def spectra(self) -> np.ndarray:
        return self.features[:, :N_BANDS]

    def dtheta_values(self) -> np.ndarray | None:
        """GPR value per row, from the feature column or the metadata column."""
        if self.has_dtheta_feature:
            return self.features[:, -1]
        return self.dtheta

    @property
    def rows(self) -> list[Datapoint]:
        return [
            Datapoint(
                plot_id=int(self.plot_id[i]),
                timestamp=int(self.timestamp[i]),
                position_index=int(self.position_index[i]),
                features=self.features[i],
                target=float(self.target[i]),
                provenance=str(self.provenance[i]),
            )
            for i in range(len(self))
        ]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            plot_id=self.plot_id[idx],
            timestamp=self.timestamp[idx],
            position_index=self.position_index[idx],
            provenance=self.provenance[idx],
            features=self.features[idx],
            target=self.target[idx],
            schema=self.schema,
            target_name=self.target_name,
            dtheta=None if self.dtheta is None else self.dtheta[idx],
        )

    def sorted(self) -> "Dataset":
        order = np.lexsort((self.position_index, self.timestamp, self.plot_id))
        return self.take(order)

    def drop_dtheta(self) -> "Dataset":
        """Spectrum-only copy; the dropped GPR column is kept as metadata."""
        if not self.has_dtheta_feature:
            return self
        return Dataset(
            plot_id=self.plot_id,
            timestamp=self.timestamp,
            position_index=self.position_index,
            provenance=self.provenance,
            features=self.features[:, :N_BANDS],
            target=self.target,
            schema=BAND_COLUMNS,
            target_name=self.target_name,
            dtheta=self.features[:, -1],
        )


def empty_dataset(with_dtheta: bool) -> Dataset:
    schema = BAND_COLUMNS + ((DTHETA_COLUMN,) if with_dtheta else ())
    return Dataset(
        plot_id=[], timestamp=[], position_index=[], provenance=np.array([], dtype=object),
        features=np.empty((0, len(schema))), target=[], schema=schema,
    )


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    schema = parts[0].schema
    if any(p.schema != schema for p in parts):
        raise SchemaError("cannot concatenate datasets with different schemas")
    meta = [p.dtheta for p in parts]
    return Dataset(
        plot_id=np.concatenate([p.plot_id for p in parts]),
        timestamp=np.concatenate([p.timestamp for p in parts]),
        position_index=np.concatenate([p.position_index for p in parts]),
        provenance=np.concatenate([p.provenance for p in parts]),
        features=np.vstack([p.features for p in parts]),
        target=np.concatenate([p.target for p in parts]),
        schema=schema,
        target_name=parts[0].target_name,
        dtheta=None if any(m is None for m in meta) else np.concatenate(meta),
    )


@dataclass
class SkipReport:
    """Records inputs that were dropped instead of failing the run."""

    reasons: list[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.reasons)

    def add(self, reason: str) -> None:
        self.reasons.append(reason)

    def extend(self, other: "SkipReport") -> None:
        self.reasons.extend(other.reasons)


# --------------------------------------------------------------------------- operations


def trim_spectrum(raw: RawSpectrum | Sequence[float], record: str = "spectrum") -> Spectrum:
    """Drop the first and last five bands of a 125-band spectrum."""
    bands = raw.bands if isinstance(raw, RawSpectrum) else np.asarray(raw, dtype=np.float64)
    if bands.shape != (N_RAW_BANDS,):
        raise SchemaError(f"{record}: expected {N_RAW_BANDS} bands, got {bands.size}")
    return Spectrum(bands[N_TRIMMED:N_RAW_BANDS - N_TRIMMED])


def resample_profile(profile: GprProfile) -> np.ndarray:
    """Mean delta-theta per 10 cm cell; every cell must hold at least one sample."""
    cells = profile.positions_cm // CELL_CM
    counts = np.bincount(cells, minlength=N_CELLS)[:N_CELLS]
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ResamplingError(
            f"GPR profile plot={profile.plot_id} t={profile.timestamp}: no samples in cell {int(empty[0])}"
        )
    sums = np.bincount(cells, weights=profile.delta_theta, minlength=N_CELLS)[:N_CELLS]
    return sums / counts


class TimeIndex:
    """Nearest-in-time lookup over a sorted list of timestamps (ties go to the earlier one)."""

    def __init__(self, times: Iterable[int], items: Sequence | None = None):
        times = np.asarray(list(times), dtype=np.int64)
        order = np.argsort(times, kind="stable")
        self.times = times[order]
        self.items = None if items is None else [items[i] for i in order]

    def nearest(self, t: float, tolerance: float):
        """Index into the sorted order of the closest time within ``tolerance``, else None."""
        n = self.times.shape[0]
        if n == 0:
            return None
        k = int(np.searchsorted(self.times, t))
        best = None
        for j in (k - 1, k):
            if 0 <= j < n:
                dist = abs(float(self.times[j]) - t)
                if dist <= tolerance and (best is None or dist < best[1]):
                    best = (j, dist)
        return None if best is None else best[0]

    def item(self, t: float, tolerance: float):
        j = self.nearest(t, tolerance)
        return None if j is None else self.items[j]


def index_frames(frames: Iterable[HyperspectralFrame]) -> dict[int, TimeIndex]:
    by_plot: dict[int, list[HyperspectralFrame]] = {}
    for f in frames:
        by_plot.setdefault(f.plot_id, []).append(f)
    return {p: TimeIndex([f.timestamp for f in fs], fs) for p, fs in by_plot.items()}


def index_tdr(samples: Iterable[TdrSample]) -> dict[tuple[int, int], TimeIndex]:
    by_key: dict[tuple[int, int], list[TdrSample]] = {}
    for s in samples:
        by_key.setdefault((s.plot_id, s.position_index), []).append(s)
    return {k: TimeIndex([s.timestamp for s in ss], ss) for k, ss in by_key.items()}


def probe_positions(samples: Iterable[TdrSample]) -> dict[int, list[int]]:
    out: dict[int, set[int]] = {}
    for s in samples:
        out.setdefault(s.plot_id, set()).add(s.position_index)
    return {p: sorted(v) for p, v in sorted(out.items())}


def pixel_spectrum(frame_index: Mapping[int, TimeIndex], plot_id: int, t: float,
                   position: int, tolerance: float) -> Spectrum | None:
    """Trimmed spectrum of the pixel at ``position`` in the frame nearest to ``t``."""
    idx = frame_index.get(plot_id)
    frame = None if idx is None else idx.item(t, tolerance)
    if frame is None or position not in frame.pixels:
        return None
    return trim_spectrum(frame.pixels[position], record=f"hsi plot={plot_id} t={frame.timestamp} pos={position}")


def assemble_measured_dataset(
    frames: Iterable[HyperspectralFrame],
    profiles: Iterable[GprProfile],
    tdr_samples: Iterable[TdrSample],
    time_tolerance_s: float = DEFAULT_TIME_TOLERANCE_S,
) -> tuple[Dataset, SkipReport]:
    """One row per (GPR profile, TDR probe position) with a TDR sample and a frame nearby in time."""
    if not time_tolerance_s > 0:
        raise SchemaError(f"time tolerance must be positive, got {time_tolerance_s}")
    tdr_samples = list(tdr_samples)
    frame_index = index_frames(frames)
    tdr_index = index_tdr(tdr_samples)
    probes = probe_positions(tdr_samples)
    skips = SkipReport()

    cols = {"plot_id": [], "timestamp": [], "position_index": [], "features": [], "target": []}
    for profile in profiles:
        cells = None
        for pos in probes.get(profile.plot_id, []):
            where = f"plot={profile.plot_id} t={profile.timestamp} pos={pos}"
            tdr = tdr_index[(profile.plot_id, pos)].item(profile.timestamp, time_tolerance_s)
            if tdr is None:
                skips.add(f"{where}: no TDR sample within {time_tolerance_s:g} s")
                continue
            spectrum = pixel_spectrum(frame_index, profile.plot_id, profile.timestamp, pos, time_tolerance_s)
            if spectrum is None:
                skips.add(f"{where}: no hyperspectral pixel within {time_tolerance_s:g} s")
                continue
            if cells is None:
                cells = resample_profile(profile)
            cols["plot_id"].append(profile.plot_id)
            cols["timestamp"].append(profile.timestamp)
            cols["position_index"].append(pos)
            cols["features"].append(np.append(spectrum.bands, cells[pos]))
            cols["target"].append(tdr.theta)

    if not cols["target"]:
        return empty_dataset(with_dtheta=True), skips
    ds = Dataset(
        plot_id=cols["plot_id"],
        timestamp=cols["timestamp"],
        position_index=cols["position_index"],
        provenance=np.array([MEASURED] * len(cols["target"]), dtype=object),
        features=np.vstack(cols["features"]),
        target=cols["target"],
        schema=BAND_COLUMNS + (DTHETA_COLUMN,),
    )
    return ds.sorted(), skips
