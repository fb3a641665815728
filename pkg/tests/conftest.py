import time
from dataclasses import dataclass

import pytest

from kinesynth import cgan
from kinesynth.data import Dataset
from kinesynth.toy import TOY_GAN_OVERRIDES, make_toy_classes


@dataclass
class TrainedToyGan:
    data: Dataset
    model: cgan.GanModel
    log: cgan.TrainLog
    seconds: float

    @property
    def classes(self):
        return sorted(set(self.data.condition_labels().tolist()))


@pytest.fixture(scope="session")
def toy_gan():
    data = make_toy_classes(per_class=20, seed=0)
    start = time.perf_counter()
    model, log = cgan.train(data, cgan.GanConfig(seed=0, **TOY_GAN_OVERRIDES))
    return TrainedToyGan(data, model, log, time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
