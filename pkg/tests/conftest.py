import json

import pytest

TINY_CONFIG = {
    "stft": {"window_len": 256, "hop": 64},
    "train": {"epochs": 2, "hidden_units": [16, 16], "latent_dim": 2, "minibatch_frames": 64},
    "prior": {"n_bases": 2},
    "mcmc": {"burn_in": 3, "samples": 3},
    "synth": {"n_utterances": 2, "duration": 0.5, "corpus_minutes": 0.05},
}


@pytest.fixture
def tiny_config(tmp_path):
    """Path to a JSON config small enough to run every subcommand in seconds."""
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE = {}
CRITERIA = [f"A{i}" for i in range(1, 9)]


@pytest.fixture
def acceptance():
    def record(name, passed, detail):
        ACCEPTANCE[name] = (bool(passed), detail)
        print(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
        return bool(passed)

    return record


def pytest_collection_modifyitems(config, items):
    config._acceptance_collected = any(item.path.name == "test_acceptance.py" for item in items)


def pytest_terminal_summary(terminalreporter, config):
    if not getattr(config, "_acceptance_collected", False):
        return
    terminalreporter.section("acceptance criteria")
    for name in CRITERIA:
        passed, detail = ACCEPTANCE.get(name, (False, "not run or errored before a result"))
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
