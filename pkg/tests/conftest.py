import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kumanet.training import DataPaths  # noqa: E402

REPO = Path(__file__).resolve().parents[1]
MNIST_STEMS = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def find_mnist():
    data_dir = Path(os.environ.get("MNIST_DIR", REPO / "data" / "mnist"))
    files = []
    for stem in MNIST_STEMS:
        for name in (stem + ".gz", stem):
            if (data_dir / name).is_file():
                files.append(str(data_dir / name))
                break
        else:
            return None
    return DataPaths(*files)


@pytest.fixture(scope="session")
def mnist_paths():
    paths = find_mnist()
    if paths is None:
        pytest.skip("MNIST files not found; set MNIST_DIR or run scripts/fetch_mnist.sh")
    return paths


@pytest.fixture(scope="session")
def mnist(mnist_paths):
    return mnist_paths.load()


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {number}: {status}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
