"""Contact probability and transmission propensity.

Contact model (min/max/alpha): for a location with peak occupancy N >= 2,

    c = min(1, (A + (B - A) * (1 - exp(-N / alpha))) / (N - 1))

so that a visitor at peak occupancy expects between A and B contacts. With
``numerator="product"`` the numerator is A * (B - A) * (1 - exp(-N / alpha))
instead (kept for compatibility with that reading of the formula). Locations
with N < 2 have no pairs and get c = 1.

Transmission: a contact of T seconds between susceptible i and infectious j
has propensity T * tau * beta_s(i) * sigma(x_i) * beta_i(j) * iota(x_j); a
person's propensities for the day are summed (in a fixed order) into A and
the person is infected with probability 1 - exp(-A).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba as nb
import numpy as np

DEFAULT_MIN_CONTACTS = 5.0
DEFAULT_MAX_CONTACTS = 40.0
DEFAULT_ALPHA = 1000.0


class ModelParamError(ValueError):
    pass


@dataclass(frozen=True)
class ContactModelParams:
    mode: str = "minmax_alpha"
    min_contacts: float = DEFAULT_MIN_CONTACTS
    max_contacts: float = DEFAULT_MAX_CONTACTS
    alpha: float = DEFAULT_ALPHA
    probability: float = 1.0
    numerator: str = "sum"

    def __post_init__(self):
        if self.mode not in ("minmax_alpha", "global"):
            raise ModelParamError(f"unknown contact model {self.mode!r}")
        if self.mode == "global":
            if not 0.0 <= self.probability <= 1.0:
                raise ModelParamError("global contact probability must lie in [0, 1]")
        else:
            if not 0 < self.min_contacts <= self.max_contacts:
                raise ModelParamError("need 0 < min_contacts <= max_contacts")
            if not self.alpha > 0:
                raise ModelParamError("alpha must be positive")
            if self.numerator not in ("sum", "product"):
                raise ModelParamError("numerator must be 'sum' or 'product'")

    @classmethod
    def parse(cls, text: str) -> "ContactModelParams":
        """``minmax:A,B,alpha`` (optionally ``,product``) or ``global:p``."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "global":
                return cls(mode="global", probability=float(rest))
            if kind in ("minmax", "minmax_alpha"):
                parts = [p.strip() for p in rest.split(",")] if rest else []
                numerator = "sum"
                if parts and parts[-1] in ("sum", "product"):
                    numerator = parts.pop()
                a, b, alpha = (float(p) for p in parts) if parts else (
                    DEFAULT_MIN_CONTACTS, DEFAULT_MAX_CONTACTS, DEFAULT_ALPHA)
                return cls(min_contacts=a, max_contacts=b, alpha=alpha, numerator=numerator)
        except ValueError as exc:
            raise ModelParamError(f"bad contact model {text!r}: {exc}") from None
        raise ModelParamError(f"bad contact model {text!r}; use minmax:A,B,alpha or global:p")


@dataclass(frozen=True)
class TransmissionParams:
    tau: float = 0.05

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ModelParamError("tau must be finite and >= 0")


def contact_probability(n: float, params: ContactModelParams) -> float:
    if params.mode == "global":
        return params.probability
    if n < 2:
        return 1.0
    a, b = params.min_contacts, params.max_contacts
    saturation = 1.0 - math.exp(-n / params.alpha)
    if params.numerator == "sum":
        expected = a + (b - a) * saturation
    else:
        expected = a * (b - a) * saturation
    return min(1.0, expected / (n - 1))


def contact_probabilities(n: np.ndarray, params: ContactModelParams) -> np.ndarray:
    """Vectorised :func:`contact_probability` (same arithmetic, element-wise)."""
    return np.array([contact_probability(float(x), params) for x in np.asarray(n)], dtype=np.float64)


def propensity(duration: float, tau: float, beta_s: float, sigma: float,
               beta_i: float, iota: float) -> float:
    # grouping matches the exposure kernel: (T * tau) * (beta_s * sigma) * (beta_i * iota)
    return duration * tau * (beta_s * sigma) * (beta_i * iota)


@dataclass(frozen=True, order=True)
class ExposureRecord:
    """One susceptible-infectious contact. Ordering follows ``order_key``."""

    order_key: tuple = field(init=False, repr=False)
    target: int
    source: int
    duration: float
    propensity: float
    location: int
    source_arrival: int = 0
    source_visit: int = -1
    target_visit: int = -1

    def __post_init__(self):
        object.__setattr__(self, "order_key", (self.source, self.source_arrival, self.location,
                                               self.source_visit, self.target_visit))


@nb.njit(cache=True, nogil=True)
def sequential_sum(values):
    total = 0.0
    for v in values:
        total += v
    return total


@nb.njit(cache=True, nogil=True)
def segment_sums(values, starts):
    """Left-to-right sum of each segment ``values[starts[k]:starts[k+1]]``."""
    out = np.zeros(len(starts) - 1)
    for k in range(len(starts) - 1):
        total = 0.0
        for i in range(starts[k], starts[k + 1]):
            total += values[i]
        out[k] = total
    return out


def total_propensity(exposures: Sequence[ExposureRecord] | Iterable[ExposureRecord]) -> float:
    """Sum of propensities for one target, in ``order_key`` order."""
    records = sorted(exposures, key=lambda r: r.order_key)
    if not records:
        return 0.0
    if any(r.target != records[0].target for r in records):
        raise ValueError("total_propensity needs records for a single target")
    return float(sequential_sum(np.array([r.propensity for r in records], dtype=np.float64)))


def infection_probability(total: float) -> float:
    if total < 0:
        raise ValueError("total propensity must be >= 0")
    return -math.expm1(-total)
