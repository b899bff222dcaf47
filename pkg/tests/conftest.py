import asyncio
import os
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"


def run(coro, timeout=None):
    if timeout is not None:
        coro = asyncio.wait_for(coro, timeout)
    return asyncio.run(coro)


@pytest.fixture
def keys():
    return os.urandom(16), os.urandom(16)
