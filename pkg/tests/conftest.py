"""Shared fixtures: small synthetic datasets at a few noise levels."""
import pytest

from ssvepnet.pipeline import synthesize_preprocessed
from ssvepnet.stimulus import StimulusTable
from ssvepnet.synthgen import SynthConfig


@pytest.fixture(scope="session")
def stimulus():
    return StimulusTable.standard()


@pytest.fixture(scope="session")
def clean_segments():
    """Noise-free preprocessed segments, 2 subjects x 1 block x 12 classes x 4 segments."""
    return synthesize_preprocessed(SynthConfig(subjects=2, trials_per_class=1, snr_db=200.0))


@pytest.fixture(scope="session")
def high_snr_segments():
    """+20 dB preprocessed segments, 3 subjects x 2 blocks."""
    return synthesize_preprocessed(SynthConfig(subjects=3, trials_per_class=2, snr_db=20.0))


def pytest_terminal_summary(terminalreporter):
    from acceptance_registry import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        title, outcome = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {outcome:<4} {title}")
