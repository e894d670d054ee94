"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tomoscreen.boxes import ScoredBox
from tomoscreen.imaging import ImageGrid, Volume

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def make_volume(arrays) -> Volume:
    """Volume from a list of 2D float arrays."""
    return Volume(tuple(ImageGrid(np.asarray(a, dtype=np.float64)) for a in arrays))


def constant_slice_volume(n_slices: int, height: int = 40, width: int = 40) -> Volume:
    """Volume whose slice i is constant i everywhere; provenance assertions
    reduce to reading pixel values."""
    return make_volume([np.full((height, width), float(i)) for i in range(n_slices)])


class LookupScorer:
    """detect() keyed by the slice's constant value.

    Built for constant_slice_volume after volume-level normalization: slice
    i maps to a distinct constant, inverted back to i here. Boxes listed
    for slice i come back verbatim.
    """

    def __init__(self, n_slices: int, boxes_by_slice: dict[int, list[ScoredBox]]):
        self.n_slices = n_slices
        self.boxes_by_slice = boxes_by_slice

    def detect(self, img: ImageGrid) -> list[ScoredBox]:
        v = float(img.data[0, 0])
        if self.n_slices == 1:
            i = 0
        else:
            i = int(round((v + 127.5) / 255.0 * (self.n_slices - 1)))
        return list(self.boxes_by_slice.get(i, []))


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
