import sys
import numpy as np
import pytest

from ndebm.datamodel import BiomarkerDataset, SubjectLabel
from ndebm.simbiote import SimulationConfig, TrajectoryConfig, desk_config, simulate_dataset


@pytest.fixture
def tiny_dataset():
    """3 subjects, 2 biomarkers, hand-written values."""
    return BiomarkerDataset(
        subject_ids=["a", "b", "c"],
        labels=[SubjectLabel.CN, SubjectLabel.PRODROMAL, SubjectLabel.DE],
        scalars=[[1.0, 2.5], [0.1, 1e-17], [3.25, 1.0 / 3.0]],
        regions=[np.array([[0.0], [1.5], [2.0]]), np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])],
        biomarker_names=["hippocampus", "cortex"],
    )


@pytest.fixture(scope="session")
def small_sim():
    cfg = SimulationConfig(trajectory=TrajectoryConfig(n_events=5, n_subjects=160), latent_dim=6, n_voxels=24)
    return simulate_dataset(cfg, seed=11)


@pytest.fixture(scope="session")
def desk_sim():
    return simulate_dataset(desk_config(), seed=0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
