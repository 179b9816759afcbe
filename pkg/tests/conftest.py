import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cliqueanneal.cliques import enumerate_maximal_cliques
from cliqueanneal.pipeline import RunConfig, make_synthetic
from cliqueanneal.proposer import train_nucleus_proposer

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def synth100():
    """Default synth-100 dataset with its full clique index."""
    ds = make_synthetic(RunConfig(workers=1))
    return ds, enumerate_maximal_cliques(ds.graph)


@pytest.fixture(scope="session")
def trained100(synth100):
    """Default-config training run on synth-100."""
    ds, cliques = synth100
    return train_nucleus_proposer(ds.graph, cliques, ds.part("train"), RunConfig(workers=1).train_config())


@pytest.fixture(scope="session")
def small_synth():
    """30-community dataset: 3 training communities, cheap to sample from."""
    ds = make_synthetic(RunConfig(workers=1, n_comm=30, seed=3))
    return ds, enumerate_maximal_cliques(ds.graph)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request, capsys):
    """``verdict(n, ok, detail)`` records one acceptance line, then asserts ``ok``."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        request.config.stash[VERDICTS].append((n, line))
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config.stash.get(VERDICTS, []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
