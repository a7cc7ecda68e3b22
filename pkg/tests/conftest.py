import numpy as np
import pytest

from accent_asr import manifest, synth

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion of the build")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = dict(report.user_properties).get("acceptance")
    if label:
        _ACCEPTANCE.append((label, report.outcome, report.duration))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("acceptance")
    if marker:
        item.user_properties.append(("acceptance", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, duration in sorted(_ACCEPTANCE, key=lambda x: int(x[0].split()[0])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}  ({duration:.1f}s)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mini_manifest(tmp_path_factory):
    """The five-utterance tone corpus, converted, as a single training manifest."""
    root = tmp_path_factory.mktemp("mini")
    index = synth.write_corpus(root / "src", synth.MINI_TRANSCRIPTS)
    rows = manifest.scan_corpus(root / "src", index, root)
    path = root / "train.csv"
    manifest.write_manifest(rows, path)
    return path


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """The twenty-utterance 48 kHz corpus with raw, unnormalized transcripts."""
    root = tmp_path_factory.mktemp("fixture")
    index = synth.write_corpus(root / "corpus", synth.FIXTURE_TRANSCRIPTS, 48000, stereo_every=4)
    return root / "corpus", index
