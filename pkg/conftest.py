import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from compactification import AtomRegistry, sphere_spec  # noqa: E402

# component checker, run as a script
collect_ignore = ["test_lab.py"]


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def sphere1():
    return sphere_spec(1)


@pytest.fixture
def registry1(sphere1):
    return AtomRegistry(sphere1)
