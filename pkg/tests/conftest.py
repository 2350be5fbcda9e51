import numpy as np
import pytest

from soilfusion.data_model import assemble_measured_dataset
from soilfusion.synthgen import CampaignConfig, generate_campaign

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def campaign():
    return generate_campaign(CampaignConfig())


@pytest.fixture(scope="session")
def measured(campaign):
    ds, skips = assemble_measured_dataset(campaign.frames, campaign.profiles, campaign.tdr)
    assert skips.count == 0
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
