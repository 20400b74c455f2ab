"""Reference distributions and seeded random variate generation.

All densities here are symmetric about zero (exponential excepted) with a
scale parameter sigma.  The non-standardized Student-t density

    S(z) = Gamma((nu+1)/2) / Gamma(nu/2) / (sqrt(nu*pi)*sigma)
           * (1 + (z/sigma)^2/nu)^(-(nu+1)/2)

is Cauchy at nu=1 and tends to a Normal of standard deviation sigma as
nu -> infinity.  Its tails fall off as (z/sigma)^-(nu+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "DistSpec",
    "Sampler",
    "chi2_cdf",
    "inverse_survival",
    "student_t_pdf",
    "survival",
]

_KINDS = ("normal", "cauchy", "student_t", "exponential")


@dataclass(frozen=True)
class DistSpec:
    """A reference distribution: kind, scale, and (for student_t) tail index nu."""

    kind: str
    sigma: float = 1.0
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and positive, got {self.sigma}")
        if self.kind == "student_t":
            if self.nu is None or not (np.isfinite(self.nu) and self.nu > 0):
                raise ValueError("student_t requires finite nu > 0")
        elif self.nu is not None:
            raise ValueError(f"nu is only meaningful for student_t, not {self.kind}")


def student_t_pdf(z, nu: float, sigma: float):
    """Non-standardized Student-t density at z (scalar or array)."""
    if not (np.isfinite(nu) and nu > 0 and np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"nu and sigma must be finite and positive, got nu={nu}, sigma={sigma}")
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    log_norm = (
        special.gammaln((nu + 1.0) / 2.0)
        - special.gammaln(nu / 2.0)
        - 0.5 * math.log(nu * math.pi)
        - math.log(sigma)
    )
    log_pdf = log_norm - 0.5 * (nu + 1.0) * np.log1p((z / sigma) ** 2 / nu)
    out = np.exp(log_pdf)
    return float(out) if out.ndim == 0 else out


def survival(dist: DistSpec, z) -> float:
    """Two-sided tail probability P(|X| > z); one-sided exp(-z/sigma) for exponential."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be >= 0")
    s = z / dist.sigma
    if dist.kind == "normal":
        out = special.erfc(s / math.sqrt(2.0))
    elif dist.kind == "cauchy":
        out = 1.0 - (2.0 / math.pi) * np.arctan(s)
    elif dist.kind == "student_t":
        out = 2.0 * special.stdtr(dist.nu, -s)
    else:  # exponential
        out = np.exp(-s)
    return float(out) if out.ndim == 0 else out


def inverse_survival(dist: DistSpec, p: float) -> float:
    """The z >= 0 at which survival(dist, z) == p, for p in (0, 1)."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if dist.kind == "normal":
        z = -special.ndtri(p / 2.0) * dist.sigma
    elif dist.kind == "cauchy":
        z = math.tan(math.pi / 2.0 * (1.0 - p)) * dist.sigma
    elif dist.kind == "student_t":
        z = float(special.stdtrit(dist.nu, 1.0 - p / 2.0)) * dist.sigma
    else:  # exponential
        z = -math.log(p) * dist.sigma
    return max(z, 0.0)


def chi2_cdf(x, nu: float):
    """Cumulative chi-squared distribution with nu degrees of freedom."""
    if not (np.isfinite(nu) and nu > 0):
        raise ValueError(f"nu must be finite and positive, got {nu}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    out = special.gammainc(nu / 2.0, x / 2.0)
    return float(out) if out.ndim == 0 else out


class Sampler:
    """Seeded variate generator.  Same seed and call sequence -> same stream.

    Student-t variates use the exact ratio construction
    normal / sqrt(chisq(nu)/nu); scaled inverse chi-squared variates are
    reciprocals of gamma variates.  Independent Sampler instances may run
    concurrently; a single instance is not thread-safe.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, index: int) -> "Sampler":
        """Derive an independent child stream, e.g. one per bootstrap replica."""
        child = Sampler.__new__(Sampler)
        child.seed = self.seed
        child._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed, index))))
        return child

    @property
    def generator(self) -> np.random.Generator:
        return self._rng

    def sample(self, dist: DistSpec, n: int) -> np.ndarray:
        """n i.i.d. variates from dist."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        rng = self._rng
        if dist.kind == "normal":
            return rng.standard_normal(n) * dist.sigma
        if dist.kind == "cauchy":
            return rng.standard_cauchy(n) * dist.sigma
        if dist.kind == "student_t":
            g = rng.standard_normal(n)
            c = rng.chisquare(dist.nu, n)
            return g / np.sqrt(c / dist.nu) * dist.sigma
        # exponential
        return rng.exponential(dist.sigma, n)

    def sample_scaled_inv_chi2(self, nu: float, tau: float, n: int) -> np.ndarray:
        """n variates of the scaled inverse chi-squared law Scale-inv-chi2(nu, tau^2)."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if nu <= 0 or tau <= 0:
            raise ValueError(f"nu and tau must be positive, got nu={nu}, tau={tau}")
        g = self._rng.gamma(nu / 2.0, 2.0 / (nu * tau * tau), n)
        return 1.0 / g
