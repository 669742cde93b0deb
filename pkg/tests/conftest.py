import numpy as np
import pytest

from vcfp.synthgen import GenConfig, generate_dataset
from vcfp.traces import Trace, dataset_stats, packet


@pytest.fixture(scope="session")
def worked_trace() -> Trace:
    """The four-packet exchange used as the running example."""
    return Trace(
        [
            packet(+1, 20, 0.5),
            packet(+1, 50, 2.1),
            packet(-1, 250, 5.3),
            packet(+1, 100, 6.7),
        ]
    )


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(GenConfig(num_classes=6, traces_per_class=10, seed=21))


@pytest.fixture(scope="session")
def small_stats(small_dataset):
    return dataset_stats(small_dataset)
