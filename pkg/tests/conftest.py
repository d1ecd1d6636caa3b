import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from pershar.datasets import LabeledWindow, SubjectMeta, make_bundle  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def toy_bundle(n_subjects=3, per_class=(5, 5), length=6, seed=0, name="toy"):
    """Random-valued bundle with ``per_class[k]`` windows of class ``c{k}`` per subject."""
    rng = np.random.default_rng(seed)
    subjects, windows = [], []
    for i in range(n_subjects):
        sid = f"u{i:02d}"
        subjects.append(SubjectMeta(sid, int(rng.integers(0, 2)), int(rng.integers(18, 70)),
                                    float(rng.uniform(45, 100)), float(rng.uniform(150, 195))))
        wid = 0
        for k, count in enumerate(per_class):
            for _ in range(count):
                windows.append(LabeledWindow(sid, f"c{k}", wid, rng.normal(size=(length, 3)), 50.0))
                wid += 1
    return make_bundle(name, subjects, windows)


@pytest.fixture
def small_bundle():
    return toy_bundle()
