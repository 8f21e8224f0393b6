import os
from pathlib import Path

import numpy as np
import pytest

from proxies import natural_images

CIFAR_ENV = "COCONET_CIFAR10"
SET5_ENV = "COCONET_SET5"


def dataset_path(env: str) -> Path | None:
    value = os.environ.get(env)
    return Path(value) if value else None


@pytest.fixture(scope="session")
def natural32():
    return natural_images(32)[0]


@pytest.fixture(scope="session")
def naturals32():
    return natural_images(32)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(RESULTS, key=lambda c: int(c[1:])):
        status, detail = RESULTS[cid]
        terminalreporter.write_line(f"{cid} {status} {detail}".rstrip())
