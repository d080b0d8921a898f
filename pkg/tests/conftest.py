import pytest

from vispose.pipeline import SimulateConfig, simulate_dataset

# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def occluded_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("occluded")
    simulate_dataset(root, SimulateConfig(n_scenes=4, seed=3))
    return root


@pytest.fixture(scope="session")
def clean_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("clean")
    simulate_dataset(root, SimulateConfig(n_scenes=3, occluders=(), coverage_range=None, seed=5))
    return root


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
