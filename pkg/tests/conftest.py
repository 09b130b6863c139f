import os
import sys

import numpy as np
import pytest

from chansel.synthgen import CorpusSpec, gen_corpus, make_lexicon


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """48-word desk-style corpus shared by the integration tests."""
    out = tmp_path_factory.mktemp("corpus")
    spec = CorpusSpec(seed=5, lexicon=tuple(make_lexicon("ABCDEFGHIJ", 20, 5)), count=48, mixed_fraction=0.25)
    gen_corpus(spec, out)
    return os.fspath(out)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
