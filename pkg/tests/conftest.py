import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ihgcl.datasets import planted_hetero_graph
from ihgcl.graphdata import select_model_subgraphs, split_interactions
from ihgcl.trainer import TrainConfig, build_model_data, stream

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Numerical gradient of scalar ``f`` at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b))))


@pytest.fixture(scope="session")
def small_graph():
    return planted_hetero_graph(n_users=24, n_items=30, n_tags=6, n_clusters=3, seed=5)


@pytest.fixture(scope="session")
def small_subgraphs(small_graph):
    return select_model_subgraphs(small_graph, ["UU", "UATAU"], ["AA", "ATA"])


@pytest.fixture(scope="session")
def small_split(small_graph):
    return split_interactions(small_graph.interactions(), 0.2, stream(0, "split"))


@pytest.fixture
def tiny_cfg():
    return TrainConfig(d=8, batch_size=32, epochs=3, lr=0.01, early_stop_patience=0, seed=7)


@pytest.fixture
def small_data(small_split, small_subgraphs, tiny_cfg):
    return build_model_data(small_split[0], small_subgraphs, tiny_cfg)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
