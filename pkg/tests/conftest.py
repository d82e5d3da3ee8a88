import logging
import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from shared.config import reload_settings  # noqa: E402
from shared.encoding import reset_registry  # noqa: E402
from solver.spectral import Grid1D  # noqa: E402


@pytest.fixture(autouse=True)
def isolated_settings():
    """Each test starts from default settings and the built-in ranges."""
    saved = dict(os.environ)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    reload_settings()
    reset_registry()
    yield
    os.environ.clear()
    os.environ.update(saved)
    reload_settings()
    reset_registry()
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def grid32() -> Grid1D:
    return Grid1D(n=32, length=1.0)


@pytest.fixture
def smooth_u(grid32: Grid1D) -> np.ndarray:
    x = grid32.x
    return 0.5 + np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * x)
