import json

import numpy as np
import pytest

from meetingeff.corpus import dump_dataset
from meetingeff.synthetic import make_dataset

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; printed live and in the summary."""
    log = request.config.stash[ACCEPTANCE_KEY]

    def record(criterion, ok, detail=""):
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        line = f"criterion {criterion}: {status}" + (f"  {detail}" if detail else "")
        print(line)
        log.append(line)
        return ok
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def dataset():
    return make_dataset(5, seed=0)


@pytest.fixture
def dataset_file(tmp_path, dataset):
    path = tmp_path / "d.json"
    dump_dataset(dataset, path)
    return path


def minimal_meeting(mid="m1", ratings=((2, 4, 5), (3, 3, 3))):
    """Four utterances, two GT segments, three raters."""
    return {
        "meeting_id": mid,
        "utterances": [
            {"id": 0, "speaker": "A", "start": 0.0, "end": 4.0, "text": "hello"},
            {"id": 1, "speaker": "B", "start": 5.0, "end": 9.0, "text": "agenda"},
            {"id": 2, "speaker": "A", "start": 10.0, "end": 14.0, "text": "budget"},
            {"id": 3, "speaker": "C", "start": 15.0, "end": 20.0, "text": "wrap up"},
        ],
        "segments": [{"start_id": 0, "end_id": 1, "topic": "opening"},
                     {"start_id": 2, "end_id": 3, "topic": "budget"}],
        "annotations": {"raters": ["r1", "r2", "r3"], "scores": [list(r) for r in ratings]},
        "objective_gt": [{"name": "decide budget", "allowed_labels": [4, 8]}],
    }


@pytest.fixture
def write_json(tmp_path):
    def write(obj, name="f.json"):
        path = tmp_path / name
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path
    return write
