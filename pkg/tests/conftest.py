import shutil
import sys
import textwrap

import pytest

from cmahpo.engine import RunConfig, run_optimization
from cmahpo.benchmarks import Benchmark, BenchmarkSpec
from cmahpo.space import builtin_space

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict as a PASS/FAIL line, then assert it."""
    def verdict(name: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append(line)
        assert passed, line
    return verdict


@pytest.fixture
def make_script(tmp_path):
    """Write a small python evaluator script and return its argv."""
    def make(body: str, name: str = "stub.py") -> list[str]:
        path = tmp_path / name
        path.write_text("import sys, json\n" + textwrap.dedent(body))
        return [sys.executable, str(path)]
    return make


@pytest.fixture(scope="session")
def echo_argv():
    exe = shutil.which("cmahpo-echo")
    return [exe] if exe else [sys.executable, "-m", "cmahpo.echo_evaluator"]


@pytest.fixture(scope="session")
def surrogate_log(tmp_path_factory):
    """A 300-evaluation CMA-ES log on the surrogate benchmark, on disk."""
    path = tmp_path_factory.mktemp("logs") / "run.jsonl"
    cfg = RunConfig(lam=30, parallel=1, max_evaluations=300, seed=7)
    with open(path, "w") as fh:
        run_optimization(cfg, builtin_space("mnist_adam"),
                         Benchmark(BenchmarkSpec("surrogate_dnn", 19), 7), fh)
    return path
