import numpy as np
import pytest

from esacl.nn import Batch, NetworkSpec, init_params


def random_net(seed, n=6, dims=None, activation="relu", heads=1):
    """Seeded network, parameters and batch for property tests."""
    rng = np.random.default_rng(seed)
    if dims is None:
        depth = int(rng.integers(2, 5))
        dims = tuple(int(x) for x in rng.integers(2, 9, size=depth))
    spec = NetworkSpec(dims, activation, heads)
    params = init_params(spec, rng)
    x = rng.standard_normal((n, dims[0]))
    y = rng.integers(0, dims[-1], size=n)
    task = int(rng.integers(0, heads))
    return spec, params, Batch(x, y, task), rng


@pytest.fixture
def small_net():
    return random_net(0)


def pytest_terminal_summary(terminalreporter):
    # one PASS/FAIL line per acceptance criterion that ran
    import sys
    results = {}
    for mod in list(sys.modules.values()):
        if getattr(mod, "__name__", "").endswith("test_acceptance"):
            results.update(getattr(mod, "RESULTS", {}))
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
