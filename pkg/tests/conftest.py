import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from affectcues.synth import SynthSpec, generate_synthetic  # noqa: E402

SMALL_SPEC = dict(n_train=2, n_validation=2, n_test=1, n_frames=400, lag=0.4, seed=5, n_continuous=4, n_binary=1)

SMALL_OVERRIDES = """
[sweep]
window_seconds = [4]
delays = [0.0, 0.2]
mi_thresholds = [0.05]
dimensions = ["arousal", "valence"]

[selection]
stride = 1

[model]
hidden_sizes = [6, 4]
learning_rate = 0.001
max_epochs = 3
patience = 1
"""


def small_config_text(corpus: Path, overrides: str = SMALL_OVERRIDES) -> str:
    """The generated config with its [sweep] and [model] tables replaced."""
    text = (corpus / "experiment.toml").read_text()
    head = text.split("[sweep]")[0]
    return head + overrides + '\n[output]\ndir = "results"\n'


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = SynthSpec(**SMALL_SPEC, drivers={"arousal": ["ch00", "ch01"], "valence": ["ch02", "ch03"]})
    generate_synthetic(spec, root)
    return root


@pytest.fixture
def small_config(small_corpus, tmp_path):
    """Path to a fast experiment config reading the shared small corpus."""
    text = small_config_text(small_corpus).replace('recordings = "recordings"', f'recordings = "{small_corpus / "recordings"}"')
    text = text.replace('annotations = "annotations"', f'annotations = "{small_corpus / "annotations"}"')
    path = tmp_path / "experiment.toml"
    path.write_text(text)
    return path


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance suite's one-line verdicts after the run."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
