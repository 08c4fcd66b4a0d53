"""Histogram codec for subtree values: scalars <-> categorical distributions.

Value magnitudes span several orders of magnitude (subtree node counts), so
the histogram lives in log space: a value z <= 0 maps to u = log2(-z), a
Gaussian of width sigma is centered at u, and its mass is integrated over
equal-width bins partitioning [psi_min, psi_max]. Tail mass beyond the
support folds into the boundary bins, which keeps the encoding a proper
probability vector and keeps decoding monotone near the edges. Decoding
takes the expectation of -2^center over the bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT2 = math.sqrt(2.0)


def _phi(x: float) -> float:
    """Standard normal CDF."""
    return 0.5 * (1.0 + math.erf(x / SQRT2))


@dataclass(frozen=True)
class HistogramCodec:
    m_bins: int = 18
    psi_min: float = -1.0
    psi_max: float = 16.0
    sigma: float = 0.75

    @property
    def bin_width(self) -> float:
        return (self.psi_max - self.psi_min) / self.m_bins

    @property
    def bin_centers(self) -> np.ndarray:
        eta = self.bin_width
        return self.psi_min + (np.arange(self.m_bins) + 0.5) * eta

    @property
    def bin_edges(self) -> np.ndarray:
        return self.psi_min + np.arange(self.m_bins + 1) * self.bin_width

    @property
    def center_values(self) -> np.ndarray:
        """Scalar value represented by each bin center: -2^center (computed
        with pow so one-hot decoding reproduces -(2.0**center) bit-exactly)."""
        return np.array([-(2.0 ** z) for z in self.bin_centers])

    def to_json_dict(self) -> dict:
        return {
            "m_bins": self.m_bins,
            "psi_min": self.psi_min,
            "psi_max": self.psi_max,
            "sigma": self.sigma,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "HistogramCodec":
        return cls(
            m_bins=int(doc["m_bins"]),
            psi_min=float(doc["psi_min"]),
            psi_max=float(doc["psi_max"]),
            sigma=float(doc["sigma"]),
        )


def raw_bin_masses(codec: HistogramCodec, value: float) -> np.ndarray:
    """Gaussian mass on each bin without tail folding (sums to < 1 when the
    center sits near the support boundary); `encode` adds the folded tails."""
    if value > 0:
        raise ValueError(f"codec encodes nonpositive values only, got {value}")
    mag = max(-value, 2.0 ** codec.psi_min)
    u = min(max(math.log2(mag), codec.psi_min), codec.psi_max)
    edges = codec.bin_edges
    cdf = np.empty(codec.m_bins + 1)
    for i in range(codec.m_bins + 1):
        cdf[i] = _phi((edges[i] - u) / codec.sigma)
    return np.diff(cdf)


def encode(codec: HistogramCodec, value: float) -> np.ndarray:
    """Spread a nonpositive scalar's Gaussian mass over the histogram bins.

    Values whose log2 magnitude falls outside the support clamp to it, and
    Gaussian tails beyond the support are folded into the first/last bin,
    so the output always sums to one.
    """
    if value > 0:
        raise ValueError(f"codec encodes nonpositive values only, got {value}")
    mag = max(-value, 2.0 ** codec.psi_min)
    u = min(max(math.log2(mag), codec.psi_min), codec.psi_max)
    edges = codec.bin_edges
    cdf = np.empty(codec.m_bins + 1)
    for i in range(codec.m_bins + 1):
        cdf[i] = _phi((edges[i] - u) / codec.sigma)
    probs = np.diff(cdf)
    probs[0] += cdf[0]          # lower tail folds into the first bin
    probs[-1] += 1.0 - cdf[-1]  # upper tail folds into the last bin
    return probs


def decode(codec: HistogramCodec, probs: np.ndarray) -> float:
    """Expected value of -2^center under the distribution."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (codec.m_bins,):
        raise ValueError(f"expected {codec.m_bins} probabilities, got shape {probs.shape}")
    if not np.isfinite(probs).all():
        raise ValueError("distribution contains non-finite entries")
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"distribution sums to {total}, not 1")
    return float(np.dot(probs, codec.center_values))


def decode_matrix(codec: HistogramCodec, probs: np.ndarray) -> np.ndarray:
    """Row-wise decode for a (rows, m_bins) matrix of distributions."""
    return probs @ codec.center_values
