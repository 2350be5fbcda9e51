"""Deterministic synthetic field campaigns.

A campaign has ``n_plots`` plots of ten 10 cm cells. Soil moisture follows an
irrigation-and-drydown curve per plot plus a fixed spatial field per cell.
GPR delta-theta at each cell is a standardized mixture

    dtheta = s * (c * z(theta) + sqrt(1 - c**2) * e)

where ``z`` standardizes the cell's theta series over the GPR times, ``e`` is
noise orthogonalized against ``z`` and standardized over the same times, and
``s`` is the cell's theta standard deviation. The sample correlation between
dtheta and theta at the GPR times therefore equals the coupling ``c``.
Spectra darken linearly with theta, most strongly in an absorption dip.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .csvio import atomic_write_json, write_gpr, write_hsi, write_tdr
from .data_model import (
    CELL_CM,
    DEFAULT_TIME_TOLERANCE_S,
    N_CELLS,
    N_RAW_BANDS,
    N_TRIMMED,
    GprProfile,
    HyperspectralFrame,
    RawSpectrum,
    TdrSample,
)
from .errors import SoilFusionError

DAY_S = 86_400
CAMPAIGN_START = 1_503_273_600  # 2017-08-21T00:00:00Z


# predefined irrigation per plot: (hours after CAMPAIGN_START, mm)
DEFAULT_IRRIGATION = (
    ((8.5, 6.0), (11.5, 6.0), (32.5, 6.0), (35.5, 6.0)),
    ((9.0, 7.0), (12.0, 5.0), (33.0, 7.0), (36.0, 5.0)),
    ((9.5, 5.0), (12.5, 7.0), (33.5, 5.0), (36.5, 7.0)),
    ((10.0, 6.0), (13.0, 6.0), (34.0, 6.0), (37.0, 6.0)),
)


def default_gpr_times(n_days: int = 2, per_day: int = 7, first_hour: int = 8, period_s: int = 3600) -> tuple[int, ...]:
    return tuple(
        CAMPAIGN_START + d * DAY_S + first_hour * 3600 + k * period_s
        for d in range(n_days)
        for k in range(per_day)
    )


@dataclass(frozen=True)
class SpectrumModel:
    """Synthetic pixel reflectance.

    soil = base(band) * (1 - darkening * w) * (1 - dip_per_mm * w * dip(band))
    reflectance = brightness * ((1 - v) * soil + v * vegetation(band)) + band noise

    ``w`` is the surface moisture of the pixel: level and spatial offset of the
    cell plus ``surface_response`` times its irrigation response, plus pixel
    noise of ``surface_noise_sigma``. ``v`` is the plot's vegetation fraction
    with pixel jitter ``vegetation_sigma``.
    """

    base_offset: float = 0.12
    base_slope: float = 0.30  # reflectance gain across the 450-950 nm range
    darkening_per_mm: float = 0.004
    dip_per_mm: float = 0.012
    dip_center_band: int = 75  # index after trimming
    dip_width_bands: float = 10.0
    band_noise_sigma: float = 0.004
    brightness_sigma: float = 0.06
    # the camera sees the surface: it follows only part of the 5 cm irrigation response
    surface_response: float = 0.3
    surface_noise_sigma: float = 1.0
    # grass cover per plot mixes a red-edge vegetation spectrum into the soil spectrum
    vegetation_fraction: tuple[float, ...] = (0.15, 0.30, 0.20, 0.35)
    vegetation_sigma: float = 0.02
    red_edge_band: int = 65  # raw index, ~710 nm

    def vegetation(self) -> np.ndarray:
        i = np.arange(N_RAW_BANDS)
        return 0.05 + 0.45 / (1 + np.exp(-(i - self.red_edge_band) / 3.0))

    def reflectance(self, w: float, veg: float, brightness: float = 1.0) -> np.ndarray:
        soil = self.base() * (1 - self.darkening_per_mm * w) * (1 - self.dip_per_mm * w * self.dip())
        return brightness * ((1 - veg) * soil + veg * self.vegetation())

    def dip(self) -> np.ndarray:
        i = np.arange(N_RAW_BANDS)
        return np.exp(-0.5 * ((i - (self.dip_center_band + N_TRIMMED)) / self.dip_width_bands) ** 2)

    def base(self) -> np.ndarray:
        return self.base_offset + self.base_slope * np.arange(N_RAW_BANDS) / (N_RAW_BANDS - 1)

    def absorption_bands(self) -> np.ndarray:
        """Raw band indices where the dip is at least half deep."""
        return np.flatnonzero(self.dip() >= 0.5)



@dataclass(frozen=True)
class CampaignConfig:
    n_plots: int = 4
    probe_position_index: tuple[int, ...] = (3, 5, 4, 6)
    gpr_times: tuple[tuple[int, ...], ...] | None = None  # None -> default_gpr_times() for every plot
    tdr_period_s: int | None = None  # None -> GPR period / 10
    coupling: tuple[float, ...] = (0.95, 0.93, 0.65, 0.0)
    spectrum_model: SpectrumModel = field(default_factory=SpectrumModel)
    base_theta: tuple[float, ...] = (19.0, 21.0, 18.0, 22.0)
    spatial_sigma: float = 1.2
    # None -> irrigations_per_day random events per day with amounts drawn from irrigation_mm
    irrigation_events: tuple[tuple[tuple[float, float], ...], ...] | None = DEFAULT_IRRIGATION
    irrigation_mm: tuple[float, float] = (4.0, 9.0)
    irrigations_per_day: int = 2
    wetting_tau_s: float = 2700.0
    drying_tau_s: float = 5 * 3600.0
    response_heterogeneity: float = 0.3
    tdr_noise_sigma: float = 0.05
    gpr_texture_sigma: float = 0.02
    gpr_time_offset_s: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_plots < 1:
            raise SoilFusionError(f"n_plots must be positive, got {self.n_plots}")
        for name in ("probe_position_index", "coupling", "base_theta"):
            if len(getattr(self, name)) != self.n_plots:
                raise SoilFusionError(f"{name} needs one entry per plot ({self.n_plots})")
        if any(not -1.0 <= c <= 1.0 for c in self.coupling):
            raise SoilFusionError(f"couplings must lie in [-1, 1], got {self.coupling}")
        if any(not 0 <= p < N_CELLS for p in self.probe_position_index):
            raise SoilFusionError("probe positions must lie in 0..9")
        if self.irrigation_events is not None and len(self.irrigation_events) != self.n_plots:
            raise SoilFusionError("irrigation_events needs one schedule per plot")
        if self.gpr_times is not None and len(self.gpr_times) != self.n_plots:
            raise SoilFusionError("gpr_times needs one schedule per plot")
        for times in self.plot_gpr_times():
            if len(times) < 3 or np.any(np.diff(times) <= 0):
                raise SoilFusionError("each plot needs >= 3 strictly increasing GPR times")
        if self.resolved_tdr_period() <= 0:
            raise SoilFusionError("TDR period must be positive")
        if len(self.spectrum_model.vegetation_fraction) != self.n_plots:
            raise SoilFusionError("spectrum_model.vegetation_fraction needs one entry per plot")
        if self.seed < 0:
            raise SoilFusionError("seed must be unsigned")

    def plot_gpr_times(self) -> list[np.ndarray]:
        if self.gpr_times is None:
            return [np.array(default_gpr_times(), dtype=np.int64)] * self.n_plots
        return [np.asarray(t, dtype=np.int64) for t in self.gpr_times]

    def resolved_tdr_period(self) -> int:
        if self.tdr_period_s is not None:
            return int(self.tdr_period_s)
        steps = np.concatenate([np.diff(t) for t in self.plot_gpr_times()])
        return max(1, int(np.min(steps)) // 10)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gpr_times"] = None if self.gpr_times is None else [list(t) for t in self.gpr_times]
        return _jsonable(d)

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        d = dict(d)
        sm = {k: _tuples(v) for k, v in d.get("spectrum_model", {}).items()}
        d["spectrum_model"] = SpectrumModel(**sm)
        for f in fields(cls):
            v = d.get(f.name)
            if isinstance(v, list):
                d[f.name] = _tuples(v)
        return cls(**d)


def _tuples(v):
    return tuple(_tuples(x) for x in v) if isinstance(v, list) else v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class Campaign:
    frames: list[HyperspectralFrame]
    profiles: list[GprProfile]
    tdr: list[TdrSample]
    manifest: dict

    def write(self, directory) -> list[Path]:
        d = Path(directory)
        if not d.is_dir():
            raise SoilFusionError(f"{d}: output directory does not exist")
        paths = [d / "hsi.csv", d / "gpr.csv", d / "tdr.csv", d / "manifest.json"]
        write_hsi(paths[0], self.frames)
        write_gpr(paths[1], self.profiles)
        write_tdr(paths[2], self.tdr)
        atomic_write_json(paths[3], self.manifest)
        return paths


# --------------------------------------------------------------------------- ground truth


@dataclass(frozen=True)
class PlotTruth:
    base: float
    spatial: np.ndarray  # (N_CELLS,) offset per cell
    response: np.ndarray  # (N_CELLS,) irrigation response factor per cell
    events: tuple[tuple[int, float], ...]  # (time, amount mm)

    def wetting(self, t, cfg: CampaignConfig) -> np.ndarray:
        """Irrigation response at times ``t`` for every cell -> (T, N_CELLS)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        wet = np.zeros_like(t)
        for te, amount in self.events:
            tau = t - te
            on = tau > 0
            wet[on] += amount * (1 - np.exp(-tau[on] / cfg.wetting_tau_s)) * np.exp(-tau[on] / cfg.drying_tau_s)
        return wet[:, None] * self.response[None, :]

    def theta(self, t, cfg: CampaignConfig) -> np.ndarray:
        """Theta at 5 cm depth at times ``t`` for every cell -> (T, N_CELLS)."""
        return self.base + self.spatial[None, :] + self.wetting(t, cfg)

    def surface(self, t, cfg: CampaignConfig) -> np.ndarray:
        """Noise-free surface moisture seen by the camera -> (T, N_CELLS)."""
        return self.base + self.spatial[None, :] + cfg.spectrum_model.surface_response * self.wetting(t, cfg)


def _plot_truth(cfg: CampaignConfig, plot: int, gpr_times: np.ndarray, rng: np.random.Generator) -> PlotTruth:
    spatial = rng.normal(0.0, cfg.spatial_sigma, N_CELLS)
    response = np.clip(1 + rng.normal(0.0, cfg.response_heterogeneity, N_CELLS), 0.2, None)
    if cfg.irrigation_events is not None:
        events = [(CAMPAIGN_START + int(round(h * 3600)), float(mm)) for h, mm in cfg.irrigation_events[plot]]
        return PlotTruth(cfg.base_theta[plot], spatial, response, tuple(sorted(events)))
    days = sorted({int(t) // DAY_S for t in gpr_times})
    events = []
    for day in days:
        in_day = gpr_times[(gpr_times // DAY_S) == day]
        lo, hi = int(in_day.min()), int(in_day.max())
        for _ in range(cfg.irrigations_per_day):
            te = int(rng.integers(lo - 1800, hi))
            events.append((te, float(rng.uniform(*cfg.irrigation_mm))))
    return PlotTruth(cfg.base_theta[plot], spatial, response, tuple(sorted(events)))


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    if sd == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def coupled_series(theta: np.ndarray, coupling: float, rng: np.random.Generator) -> np.ndarray:
    """Series whose sample Pearson correlation with ``theta`` equals ``coupling``."""
    z = _standardize(theta)
    e = rng.normal(size=theta.shape)
    basis = np.column_stack([np.ones_like(z), z])
    coef, *_ = np.linalg.lstsq(basis, e, rcond=None)
    e = _standardize(e - basis @ coef)
    return theta.std() * (coupling * z + np.sqrt(max(0.0, 1 - coupling ** 2)) * e)


def _jitter(rng: np.random.Generator, sigma: float) -> float:
    return float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0


def _tdr_times(gpr_times: np.ndarray, period: int) -> np.ndarray:
    """TDR schedule covering each measurement day from its first to its last GPR time."""
    out = []
    for day in sorted({int(t) // DAY_S for t in gpr_times}):
        in_day = gpr_times[(gpr_times // DAY_S) == day]
        out.append(np.arange(int(in_day.min()), int(in_day.max()) + 1, period))
    return np.concatenate(out).astype(np.int64)


def generate_campaign(cfg: CampaignConfig | None = None) -> Campaign:
    cfg = cfg or CampaignConfig()
    root = np.random.SeedSequence(cfg.seed)
    plot_seeds = root.spawn(cfg.n_plots)
    sm = cfg.spectrum_model
    period = cfg.resolved_tdr_period()
    frames, profiles, tdr = [], [], []
    truths = {}

    for p in range(cfg.n_plots):
        plot_id = p + 1
        rng_truth, rng_gpr, rng_tdr, rng_hsi = (np.random.default_rng(s) for s in plot_seeds[p].spawn(4))
        gpr_t = cfg.plot_gpr_times()[p]
        truth = _plot_truth(cfg, p, gpr_t, rng_truth)
        truths[plot_id] = truth

        # GPR: correlated with theta at the nominal time, acquired offset seconds later
        theta_gpr = truth.theta(gpr_t, cfg)
        cell_dtheta = np.column_stack([coupled_series(theta_gpr[:, c], cfg.coupling[p], rng_gpr) for c in range(N_CELLS)])
        for k, t in enumerate(gpr_t):
            texture = rng_gpr.normal(0.0, cfg.gpr_texture_sigma, (N_CELLS, CELL_CM))
            texture -= texture.mean(axis=1, keepdims=True)
            values = (cell_dtheta[k][:, None] + texture).ravel()
            profiles.append(GprProfile(plot_id, int(t) + cfg.gpr_time_offset_s, np.arange(N_CELLS * CELL_CM), values))

        # TDR at the probe cell and hyperspectral frames share one schedule
        times = _tdr_times(gpr_t, period)
        theta_all = truth.theta(times, cfg)
        probe = cfg.probe_position_index[p]
        noise = rng_tdr.normal(0.0, cfg.tdr_noise_sigma, times.size) if cfg.tdr_noise_sigma > 0 else np.zeros(times.size)
        for t, th, n in zip(times, theta_all[:, probe], noise):
            tdr.append(TdrSample(plot_id, int(t), probe, float(max(0.0, th + n))))
        for t, row in zip(times, truth.surface(times, cfg)):
            pixels = {}
            for c in range(N_CELLS):
                w = row[c] + _jitter(rng_hsi, sm.surface_noise_sigma)
                veg = float(np.clip(sm.vegetation_fraction[p] + _jitter(rng_hsi, sm.vegetation_sigma), 0.0, 1.0))
                spec = sm.reflectance(w, veg, 1 + _jitter(rng_hsi, sm.brightness_sigma))
                if sm.band_noise_sigma > 0:
                    spec = spec + rng_hsi.normal(0.0, sm.band_noise_sigma, N_RAW_BANDS)
                pixels[c] = RawSpectrum(spec)
            frames.append(HyperspectralFrame(plot_id, int(t), pixels))

    manifest = {
        "generator": "soilfusion.synthgen",
        "version": __version__,
        "config": cfg.to_dict(),
        "tdr_period_s": period,
        "coupling": {str(i + 1): c for i, c in enumerate(cfg.coupling)},
        "ground_truth": {
            str(pid): {
                "base": t.base,
                "spatial": t.spatial.tolist(),
                "response": t.response.tolist(),
                "irrigation_events": [list(e) for e in t.events],
            }
            for pid, t in truths.items()
        },
        "absorption_bands_raw": sm.absorption_bands().tolist(),
        "expected": expected_counts(frames, profiles, tdr, DEFAULT_TIME_TOLERANCE_S),
    }
    return Campaign(frames, profiles, tdr, _jsonable(manifest))


def expected_counts(frames, profiles, tdr, tolerance: float) -> dict:
    """Row counts by exhaustive pairwise enumeration of the schedules."""
    frame_times: dict[int, list[tuple[int, set]]] = {}
    for f in frames:
        frame_times.setdefault(f.plot_id, []).append((f.timestamp, set(f.pixels)))
    tdr_by_key: dict[tuple[int, int], list[int]] = {}
    for s in tdr:
        tdr_by_key.setdefault((s.plot_id, s.position_index), []).append(s.timestamp)

    def nearest(times, t):
        best = None
        for x in sorted(times):
            d = abs(x - t)
            if d <= tolerance and (best is None or d < abs(best - t)):
                best = x
        return best

    def frame_has(plot, t, pos):
        cands = [(abs(ft - t), ft, px) for ft, px in frame_times.get(plot, []) if abs(ft - t) <= tolerance]
        if not cands:
            return False
        return pos in min(cands)[2]

    measured = 0
    covered = set()
    probes: dict[int, set[int]] = {}
    for plot, pos in tdr_by_key:
        probes.setdefault(plot, set()).add(pos)
    measured_plots = set()
    for prof in profiles:
        for pos in sorted(probes.get(prof.plot_id, ())):
            hit = nearest(tdr_by_key[(prof.plot_id, pos)], prof.timestamp)
            if hit is None or not frame_has(prof.plot_id, prof.timestamp, pos):
                continue
            measured += 1
            measured_plots.add(prof.plot_id)
            covered.add((prof.plot_id, pos, hit))

    simulated_gpr = sum(
        1
        for s in tdr
        if (s.plot_id, s.position_index, s.timestamp) not in covered
        and frame_has(s.plot_id, s.timestamp, s.position_index)
    )
    simulated_tdr = sum(
        1
        for prof in profiles
        if prof.plot_id in measured_plots
        for c in range(N_CELLS)
        if c not in probes[prof.plot_id] and frame_has(prof.plot_id, prof.timestamp, c)
    )
    return {
        "time_tolerance_s": tolerance,
        "measured_rows": measured,
        "approach1_rows": measured + simulated_gpr,
        "approach2_rows": simulated_tdr,
        "n_profiles": len(profiles),
        "n_tdr_samples": len(tdr),
        "n_frames": len(frames),
    }


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
