import copy
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hcwalk.corrector import solve_correctors  # noqa: E402
from hcwalk.samples import BUILTIN, builtin, builtin_document  # noqa: E402

_CACHE = {}


def solved(name):
    """(env, correctors, model) for a bundled environment, cached per session."""
    if name not in _CACHE:
        env = builtin(name)
        cs, model = solve_correctors(env)
        _CACHE[name] = (env, cs, model)
    return _CACHE[name]


@pytest.fixture(params=BUILTIN)
def builtin_name(request):
    return request.param


@pytest.fixture
def one_d():
    return solved("one_d")


@pytest.fixture
def one_d_doc():
    return copy.deepcopy(builtin_document("one_d"))
