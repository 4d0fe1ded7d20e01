import numpy as np
import pytest

from cutshape.driver import generate_synthetic_data, make_config

ACCEPTANCE_RESULTS = {}


def record_criterion(number, label, passed, detail):
    ACCEPTANCE_RESULTS[number] = (label, passed, detail)
    status = "PASS" if passed else "FAIL"
    line = f"[criterion {number:>2}] {status}  {label}: {detail}"
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        label, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(
            f"[criterion {number:>2}] {status}  {label}: {detail}")


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    """Session cache of synthetic boundary-trace tables."""
    return tmp_path_factory.mktemp("gd_tables")


@pytest.fixture(scope="session")
def gd_table_path(data_dir):
    """Generate (once) the fine-mesh g_D table for a given experiment."""
    def get(preset: str, n_fine: int = 500):
        path = data_dir / f"{preset}_{n_fine}.txt"
        if not path.exists():
            cfg = make_config(preset, n_fine=n_fine)
            generate_synthetic_data(cfg, out_file=path)
        return path
    return get
