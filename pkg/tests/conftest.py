import sys

import pytest

from multilog.generator import GeneratorConfig, simulate


@pytest.fixture(scope="session")
def small_cluster():
    """Six nodes, ten minutes, every anomaly type."""
    return simulate(GeneratorConfig(seed=5, duration_s=600, inject_len_s=20, rest_len_s=25))


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines gathered by test_acceptance, if it ran."""
    mod = next((m for name, m in list(sys.modules.items()) if name.rsplit(".", 1)[-1] == "test_acceptance"), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
