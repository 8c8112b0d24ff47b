import pytest

from cosal_extractor.extract import extract_group
from cosal_extractor.samples import sample_dir


@pytest.fixture(scope="session")
def samples_path():
    path = sample_dir()
    assert (path / "sample_a.png").exists(), "bundled samples missing"
    return path


@pytest.fixture(scope="session")
def extracted(samples_path, tmp_path_factory):
    """One extraction of the bundled samples, shared across tests."""
    out = tmp_path_factory.mktemp("groups") / "g0"
    report = extract_group(samples_path, out)
    assert report.ok
    return out
