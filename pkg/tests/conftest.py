import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def shapes_dir(tmp_path_factory):
    """64-image synthetic shapes set with mock pseudo-labels in labels/."""
    from sodistill.core import read_manifest
    from sodistill.labelgen import MockGrounder, MockSegmenter, run_pipeline
    from sodistill.phrasekit import MockCaptioner
    from sodistill.synthetic import generate_shapes_dataset

    d = tmp_path_factory.mktemp("shapes")
    generate_shapes_dataset(d, n=64, size=64, seed=0)
    recs = read_manifest(d / "manifest.jsonl")
    report = run_pipeline(recs, MockCaptioner.from_file(d / "captions.json"), MockGrounder(), MockSegmenter(),
                          d / "labels", tau=0.0, base=d)
    assert report.n_failed == 0
    return d


@pytest.fixture(scope="session")
def shapes_records(shapes_dir):
    from sodistill.core import read_manifest

    return read_manifest(shapes_dir / "manifest.jsonl")


# --- acceptance summary: one line per criterion ------------------------------

_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, [title, True, False])
    if rep.failed:
        entry[1] = False
    if rep.when == "call":
        entry[2] = True


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, ran = _CRITERIA[n]
        status = "FAIL" if not ok else "PASS" if ran else "NOT RUN"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
