import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from osodd.core import BoundingBox, ClassTag, ObjectRecord  # noqa: E402


def obj(oid, box=(0, 0, 10, 10), tag=None, score=1.0, image="img", gt_class=None):
    return ObjectRecord(image, oid, BoundingBox(*box), tag or ClassTag.unknown(), score, gt_class=gt_class)


@pytest.fixture
def make_obj():
    return obj


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
