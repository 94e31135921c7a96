import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from autosign.model import ModelConfig  # noqa: E402
from autosign.synth import SplitPlan, SynthConfig, synth_dataset  # noqa: E402

TINY_SYNTH = SynthConfig(vocab_size=5, sentence_len_range=(2, 3), frames_per_gloss_range=(4, 6))
TINY_PLAN = SplitPlan(n_train=8, n_dev=4, n_test=4, train_signers=2, dev_signers=1, test_signers=1)


def tiny_model_cfg(kind="autoregressive", **kw):
    base = dict(vocab_size=1, kind=kind, channels=16, d_model=16, n_layers=1, n_heads=2, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_data")
    synth_dataset(TINY_SYNTH, TINY_PLAN, 0, root)
    return root


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
