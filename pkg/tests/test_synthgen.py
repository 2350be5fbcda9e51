import numpy as np
import pytest

from soilfusion.data_model import assemble_measured_dataset
from soilfusion.errors import SoilFusionError
from soilfusion.evaluation import pearson
from soilfusion.synthgen import (
    CAMPAIGN_START,
    CampaignConfig,
    SpectrumModel,
    coupled_series,
    generate_campaign,
)


def _probe_pairs(cfg):
    c = generate_campaign(cfg)
    ds, _ = assemble_measured_dataset(c.frames, c.profiles, c.tdr)
    return c, ds


def _long_times(n, n_plots):
    times = tuple(CAMPAIGN_START + 8 * 3600 + 600 * k for k in range(n))
    return (times,) * n_plots


@pytest.mark.parametrize("coupling", [1.0, -1.0, 0.5, 0.0])
def test_coupled_series_exact_sample_correlation(rng, coupling):
    theta = rng.normal(20, 2, size=50)
    assert pearson(coupled_series(theta, coupling, rng), theta) == pytest.approx(coupling, abs=1e-9)


def test_full_coupling_without_noise_is_exact():
    cfg = CampaignConfig(coupling=(1.0,) * 4, gpr_texture_sigma=0.0, tdr_noise_sigma=0.0, gpr_time_offset_s=0)
    _, ds = _probe_pairs(cfg)
    for plot in range(1, 5):
        m = ds.plot_id == plot
        assert abs(pearson(ds.features[m, -1], ds.target[m]) - 1) <= 1e-9


def test_null_coupling_at_n200():
    veg = SpectrumModel(vegetation_fraction=(0.2,))
    cfg = CampaignConfig(n_plots=1, probe_position_index=(4,), coupling=(0.0,), base_theta=(20.0,),
                         spectrum_model=veg, irrigation_events=None, gpr_times=_long_times(200, 1),
                         tdr_period_s=600)
    _, ds = _probe_pairs(cfg)
    assert len(ds) == 200
    assert abs(pearson(ds.features[:, -1], ds.target)) < 0.15


def test_couplings_recovered_with_many_samples():
    cfg = CampaignConfig(gpr_times=_long_times(120, 4), tdr_period_s=600, irrigation_events=None, seed=5)
    _, ds = _probe_pairs(cfg)
    for plot, target in enumerate(cfg.coupling, start=1):
        m = ds.plot_id == plot
        assert m.sum() >= 100
        assert abs(pearson(ds.features[m, -1], ds.target[m]) - target) <= 0.1


def test_manifest_counts_match_assembly(campaign, measured):
    exp = campaign.manifest["expected"]
    assert len(measured) == exp["measured_rows"]
    assert exp["n_profiles"] == len(campaign.profiles)
    assert exp["n_tdr_samples"] == len(campaign.tdr)
    # TDR is sampled ten times as often as GPR
    assert exp["approach1_rows"] >= 8 * exp["measured_rows"]


def test_same_seed_same_bytes(tmp_path):
    a = generate_campaign(CampaignConfig(seed=3))
    b = generate_campaign(CampaignConfig(seed=3))
    for name in "abc":
        (tmp_path / name).mkdir()
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["gpr.csv", "hsi.csv", "manifest.json", "tdr.csv"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    generate_campaign(CampaignConfig(seed=4)).write(tmp_path / "c")
    assert (tmp_path / "a" / "gpr.csv").read_bytes() != (tmp_path / "c" / "gpr.csv").read_bytes()


@pytest.mark.parametrize("veg", [0.0, 0.2, 0.35, 0.9])
def test_spectra_monotone_in_moisture_at_absorption_bands(veg):
    sm = SpectrumModel()
    bands = sm.absorption_bands()
    assert bands.size > 0
    w = np.linspace(0.0, 45.0, 91)
    spectra = np.array([sm.reflectance(x, veg) for x in w])[:, bands]
    assert np.all(np.diff(spectra, axis=0) < 0)


def test_config_round_trip_and_validation():
    cfg = CampaignConfig(seed=9, coupling=(0.1, 0.2, 0.3, 0.4))
    assert CampaignConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(SoilFusionError):
        CampaignConfig(coupling=(0.5, 0.5))
