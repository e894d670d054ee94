"""Blob scoring and the aggregation rules from boxes up to studies.

The reference scorer is deliberately classical: a difference of two
Gaussian smoothings as the blob response, local maxima above a floor,
one fixed box size per scorer. Image-level suspicion is the maximum box
score; an ensemble averages several scorers over both horizontal
orientations; breast scores average views and a study takes the worse
(higher) breast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter

from .boxes import ScoredBox
from .imaging import ImageGrid, hflip

BOX_SIZE_FACTOR = 2.5  # box side = factor * radius prior, single scale


@runtime_checkable
class ScorerHandle(Protocol):
    """Anything that maps an image to scored candidate boxes."""

    def detect(self, img: ImageGrid) -> list[ScoredBox]: ...


def _sigmoid(z: np.ndarray | float):
    # exp(-logaddexp(0, -z)) never overflows and round-trips hflip exactly
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass(frozen=True)
class BlobScorer:
    """Difference-of-smoothings blob detector with logistic scoring.

    radius_prior: expected blob radius in pixels; sets both the smoothing
        scales and the (fixed) output box size.
    response_floor: strictly-below responses produce no box.
    response_scale: logistic temperature mapping response to (0, 1);
        keep it large enough that scores stay off exact 1.0, otherwise
        ranking across slices degenerates into ties.
    """

    radius_prior: float
    response_floor: float
    response_scale: float

    def __post_init__(self):
        if not self.radius_prior > 0:
            raise ValueError("radius_prior must be positive")
        if not self.response_scale > 0:
            raise ValueError("response_scale must be positive")

    def response(self, img: ImageGrid) -> np.ndarray:
        """Bright-blob response map (difference of smoothings)."""
        inner = self.radius_prior / math.sqrt(2.0)
        fine = gaussian_filter(img.data, sigma=inner, mode="nearest")
        coarse = gaussian_filter(img.data, sigma=1.6 * inner, mode="nearest")
        return fine - coarse

    @property
    def border_margin(self) -> int:
        """Maxima closer than this to an image edge are ignored; smoothing
        with replicated borders manufactures spurious peaks there."""
        return max(2, int(round(0.75 * self.radius_prior)))

    def detect(self, img: ImageGrid) -> list[ScoredBox]:
        resp = self.response(img)
        win = max(3, 2 * int(round(self.radius_prior / 2.0)) + 1)
        local_max = maximum_filter(resp, size=win, mode="constant", cval=-np.inf)
        keep = (resp == local_max) & (resp > self.response_floor)
        m = self.border_margin
        if 2 * m < min(keep.shape):
            apron = np.zeros_like(keep)
            apron[m:-m, m:-m] = True
            keep &= apron
        rows, cols = np.nonzero(keep)
        half = 0.5 * BOX_SIZE_FACTOR * self.radius_prior
        h, w = img.data.shape
        out = []
        for r, c in zip(rows.tolist(), cols.tolist()):
            cx, cy = c + 0.5, r + 0.5
            x0, x1 = max(0.0, cx - half), min(float(w), cx + half)
            y0, y1 = max(0.0, cy - half), min(float(h), cy + half)
            if x0 >= x1 or y0 >= y1:
                continue
            score = float(_sigmoid(resp[r, c] / self.response_scale))
            out.append(ScoredBox(x0, y0, x1, y1, score))
        return out


# Radius priors bracketing the lesion sizes the phantoms plant; shared
# floor and temperature so scores from the three scorers are comparable.
DEFAULT_RADIUS_PRIORS = (6.0, 8.0, 10.5)
DEFAULT_RESPONSE_FLOOR = 1.0
DEFAULT_RESPONSE_SCALE = 6.0


def default_ensemble(
    radius_priors: tuple[float, ...] = DEFAULT_RADIUS_PRIORS,
    response_floor: float = DEFAULT_RESPONSE_FLOOR,
    response_scale: float = DEFAULT_RESPONSE_SCALE,
) -> list[BlobScorer]:
    return [
        BlobScorer(radius_prior=r, response_floor=response_floor, response_scale=response_scale)
        for r in radius_priors
    ]


def default_condense_scorer(
    response_floor: float = DEFAULT_RESPONSE_FLOOR,
    response_scale: float = DEFAULT_RESPONSE_SCALE,
) -> BlobScorer:
    """Detector used for condensation: the largest ensemble prior.

    Its boxes (2.5x the prior) are the patches that get painted, so the
    prior must be generous enough that a whole lesion fits inside one
    box; cropping a lesion at a patch boundary costs response when the
    composite is re-scored.
    """
    return BlobScorer(
        radius_prior=DEFAULT_RADIUS_PRIORS[-1],
        response_floor=response_floor,
        response_scale=response_scale,
    )


def mil_image_score(boxes: list[ScoredBox]) -> float:
    """Image suspicion = max box score; no boxes means 0.0 by convention."""
    if not boxes:
        return 0.0
    return max(b.score for b in boxes)


def ensemble_image_score(scorers: list[ScorerHandle], img: ImageGrid) -> float:
    """Mean of max-box scores over every scorer and both horizontal flips."""
    if not scorers:
        raise ValueError("ensemble needs at least one scorer")
    mirrored = hflip(img)
    scores = []
    for s in scorers:
        scores.append(mil_image_score(s.detect(img)))
        scores.append(mil_image_score(s.detect(mirrored)))
    return math.fsum(scores) / len(scores)


@dataclass(frozen=True)
class ViewScore:
    case_id: str
    breast: str  # "left" or "right"
    view_label: str  # e.g. "cc" or "mlo"
    score: float

    def __post_init__(self):
        if self.breast not in ("left", "right"):
            raise ValueError(f"breast must be 'left' or 'right', got {self.breast!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"view score {self.score} outside [0, 1]")


def breast_score(views: list[ViewScore]) -> float:
    """Average the view scores of one breast."""
    if not views:
        raise ValueError("breast_score needs at least one view")
    sides = {v.breast for v in views}
    if len(sides) != 1:
        raise ValueError(f"views span multiple breasts: {sorted(sides)}")
    return math.fsum(v.score for v in views) / len(views)


def study_score(breasts: list[float]) -> float:
    """Study suspicion is the more suspicious breast."""
    if not 1 <= len(breasts) <= 2:
        raise ValueError(f"expected 1 or 2 breast scores, got {len(breasts)}")
    for s in breasts:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"breast score {s} outside [0, 1]")
    return max(breasts)
