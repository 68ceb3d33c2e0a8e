"""Randomized smoothing: Gaussian sampling, prediction, certification.

The certified-radius formulas come in two forms: the symmetric
two-sided rule sigma/2 * (quantile(pA) - quantile(pB)), exposed as a
pure function for analysis, and the one-sided rule sigma * quantile(pA)
actually used by certification (equivalent to the two-sided rule with
pB = 1 - pA). Certification draws a selection phase of n0 samples to
guess the top class, then a disjoint estimation phase of n samples to
lower-bound its probability with an exact Clopper-Pearson bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .classifiers import ClassifierHandle
from .errors import ArgumentError, DomainError
from .numerics import clopper_pearson_lower, binomial_two_sided_pvalue, std_normal_quantile


@dataclass(frozen=True)
class SmoothingParams:
    sigma: float
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    batch: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ArgumentError(f"sigma must be positive, got {self.sigma}")
        if self.n0 < 1 or self.n < 1:
            raise ArgumentError("n0 and n must be >= 1")
        if not (0 < self.alpha < 1):
            raise ArgumentError(f"alpha must lie in (0,1), got {self.alpha}")
        if not 1 <= self.batch <= self.n:
            raise ArgumentError(f"batch must lie in [1, n], got {self.batch}")

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "n0": self.n0,
            "n": self.n,
            "alpha": self.alpha,
            "batch": self.batch,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Certificate:
    """Outcome of certifying one input: a predicted class with a certified
    L2 radius and the probability lower bound behind it, or an abstention.
    Tallies of both sampling phases are always recorded."""

    prediction: Optional[int]  # None = abstain
    radius: float
    p_lower: Optional[float]
    counts_selection: np.ndarray = field(repr=False)
    counts_estimation: np.ndarray = field(repr=False)
    params: SmoothingParams

    @property
    def abstained(self) -> bool:
        return self.prediction is None


def certified_radius_two_sided(p_a: float, p_b: float, sigma: float) -> float:
    """Symmetric radius rule from the top and runner-up class probabilities."""
    if sigma <= 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    if not (0.0 < p_a < 1.0) or not (0.0 < p_b < 1.0):
        raise DomainError("probabilities must lie strictly inside (0,1)")
    if p_a < p_b:
        raise DomainError(f"top-class probability {p_a} below runner-up {p_b}")
    return 0.5 * sigma * (std_normal_quantile(p_a) - std_normal_quantile(p_b))


def certified_radius_one_sided(p_a_lower: float, sigma: float) -> float:
    """Radius from a lower bound on the top-class probability alone
    (runner-up bounded by 1 - p_a_lower)."""
    if sigma <= 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    if not (0.5 < p_a_lower < 1.0):
        raise DomainError(f"one-sided radius requires 1/2 < p < 1, got {p_a_lower}")
    return sigma * std_normal_quantile(p_a_lower)


def sample_under_noise(
    handle: ClassifierHandle,
    x: np.ndarray,
    sigma: float,
    count: int,
    stream: rng.NoiseStream,
    start: int = 0,
    batch: int = 256,
) -> np.ndarray:
    """Tally the handle's classes over `count` Gaussian perturbations of x.

    Samples start .. start+count-1 of the stream are used, so disjoint
    phases simply continue the same stream, and the tallies do not
    depend on the batch size.
    """
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    x = np.asarray(x, dtype=np.float64)
    counts = np.zeros(handle.num_classes, dtype=np.int64)
    done = 0
    while done < count:
        size = min(batch, count - done)
        noise = stream.normal(start + done, size, x.shape)
        labels = handle.classify(x[None, ...] + sigma * noise)
        counts += np.bincount(np.asarray(labels), minlength=handle.num_classes)
        done += size
    return counts


def certify(
    handle: ClassifierHandle,
    x: np.ndarray,
    params: SmoothingParams,
    index: int = 0,
) -> Certificate:
    """Two-phase Monte Carlo certification of one input.

    Phase 1 (n0 samples) selects the candidate class, ties toward the
    lowest index; phase 2 (n fresh samples) lower-bounds its probability.
    Predicts only when the bound exceeds 1/2 strictly.
    """
    stream = rng.noise_stream(params.seed, rng.DOMAIN_CERTIFY, index)
    counts_selection = sample_under_noise(
        handle, x, params.sigma, params.n0, stream, start=0, batch=params.batch
    )
    c_hat = int(np.argmax(counts_selection))
    counts_estimation = sample_under_noise(
        handle, x, params.sigma, params.n, stream, start=params.n0, batch=params.batch
    )
    k = int(counts_estimation[c_hat])
    p_lower = clopper_pearson_lower(k, params.n, params.alpha)
    if p_lower > 0.5:
        radius = certified_radius_one_sided(p_lower, params.sigma)
        return Certificate(c_hat, radius, p_lower, counts_selection, counts_estimation, params)
    return Certificate(None, 0.0, None, counts_selection, counts_estimation, params)


def predict(
    handle: ClassifierHandle,
    x: np.ndarray,
    params: SmoothingParams,
    index: int = 0,
) -> Optional[int]:
    """Monte Carlo prediction: the top class if it beats the runner-up in a
    two-sided exact binomial test at level alpha, else None (abstain)."""
    stream = rng.noise_stream(params.seed, rng.DOMAIN_CERTIFY, index)
    counts = sample_under_noise(
        handle, x, params.sigma, params.n, stream, start=0, batch=params.batch
    )
    order = np.argsort(-counts, kind="stable")
    c1, c2 = int(order[0]), int(order[1])
    k1, k2 = int(counts[c1]), int(counts[c2])
    if binomial_two_sided_pvalue(k1, k1 + k2, 0.5) <= params.alpha:
        return c1
    return None
