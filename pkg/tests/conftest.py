import json
import sys
from pathlib import Path

import pytest

from kgsampling.groups import PartitionPolicy, build_group_index
from kgsampling.lexicon import default_lexicon
from kgsampling.synth import SynthConfig, generate_corpus

DATA = Path(__file__).parent / "data"

# n=2000, 50 groups, Zipf 1.2, signal 0.8, noise 0.3
REFERENCE_SYNTH = SynthConfig(
    n_instances=2000, n_groups=50, zipf_exponent=1.2, signal=0.8, noise=0.3, seed=0
)

WORKED_EXAMPLE = (
    "the breasts are heterogeneously dense, which may obscure small masses.   "
    "left mass: there is a mass seen in the left breast at 3 o'clock. "
    "associated features include architectural distortion.   "
    "right there are no significant masses, calcifications, or other findings"
)


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()


@pytest.fixture(scope="session")
def labeled_reports():
    return json.loads((DATA / "labeled_reports.json").read_text())


@pytest.fixture(scope="session")
def reference_corpus(lexicon):
    return generate_corpus(REFERENCE_SYNTH, lexicon)


@pytest.fixture(scope="session")
def reference_train(reference_corpus):
    return [inst for inst in reference_corpus if inst.split == "train"]


@pytest.fixture(scope="session")
def reference_index(reference_train, lexicon):
    return build_group_index(reference_train, lexicon, PartitionPolicy.top_n(20))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
