import json
from importlib import resources

import numpy as np
import pytest

from cleval.data import LabeledDataset, synth_gaussians


def desk_config_payload() -> dict:
    text = (resources.files("cleval") / "configs/desk_experiment.json").read_text()
    return json.loads(text)


@pytest.fixture(scope="session")
def blob_dataset() -> LabeledDataset:
    """Well-separated 10-class blobs; near-perfectly learnable."""
    return synth_gaussians(num_classes=10, dim=16, per_class=100, separation=4.0, seed=1)


@pytest.fixture(scope="session")
def small_dataset() -> LabeledDataset:
    return synth_gaussians(num_classes=4, dim=8, per_class=30, separation=4.0, seed=5)


def tiny_dataset(num_classes: int, per_class: int = 4, dim: int = 2) -> LabeledDataset:
    """Cheap handmade dataset for structure-only tests (no learning)."""
    n = num_classes * per_class
    features = np.arange(n * dim, dtype=np.float64).reshape(n, dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    return LabeledDataset(features=features, labels=labels, name=f"tiny{num_classes}")
