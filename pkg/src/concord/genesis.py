"""Synthetic datasets, deconvolution, and the unfound-systematic-error model.

Two generative views are implemented: a forward simulator that produces
Dataset objects from a chosen individual-measurement error law, and the
mixture model in which a normally distributed error of unknown scale t,
with t following the distribution of systematic effects that survive a
finite number of consistency checks, produces heavy Student-t-like tails.
"""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from concord.comparison import default_bin_edges, ZHistogram
from concord.dataset import Dataset, Measurement, Quantity
from concord.statfun import DistSpec, Sampler, chi2_cdf, student_t_pdf

__all__ = [
    "CallablePrior",
    "DeconvolutionResult",
    "GenesisSpec",
    "NormalPrior",
    "PointMassPrior",
    "ScaledInvChi2Prior",
    "SimSpec",
    "UnfoundErrorPrior",
    "bounds_effect",
    "deconvolve",
    "genesis_tail_exponent",
    "mixture_density",
    "simulate_dataset",
    "unfound_error_density",
]


# ---------------------------------------------------------------------------
# forward simulation

@dataclass
class SimSpec:
    """Recipe for a synthetic dataset.

    Each quantity gets a true value, per-measurement reported
    uncertainties u_i, and values x_i = true + u_i * e_i with e_i drawn
    from error_law.  Bounds, when present, are enforced by rejection.
    """

    n_quantities: int
    measurements_per_quantity: int | list[int]
    error_law: DistSpec
    reported_u: float = 1.0
    u_relative: bool = False  # interpret reported_u as a fraction of |true value|
    true_value: float | tuple[float, float] = 0.0  # constant, or uniform range
    bounds: tuple[float, float] | None = None
    date_range: tuple[int, int] | None = None  # inclusive year range
    seed: int = 42

    def __post_init__(self):
        if self.n_quantities < 1:
            raise ValueError("n_quantities must be >= 1")
        counts = (
            [self.measurements_per_quantity] * self.n_quantities
            if isinstance(self.measurements_per_quantity, int)
            else list(self.measurements_per_quantity)
        )
        if len(counts) != self.n_quantities:
            counts = list(np.resize(counts, self.n_quantities))
        if any(c < 2 for c in counts):
            raise ValueError("every quantity needs at least 2 measurements")
        self._counts = counts
        if self.bounds is not None and self.bounds[1] < self.bounds[0]:
            raise ValueError(f"impossible bounds {self.bounds}")


def _draw_true(spec: SimSpec, rng: np.random.Generator) -> float:
    if isinstance(spec.true_value, tuple):
        return float(rng.uniform(*spec.true_value))
    return float(spec.true_value)


def simulate_dataset(spec: SimSpec, name: str = "simulated") -> Dataset:
    """Generate a Dataset from a SimSpec; deterministic given the seed."""
    sampler = Sampler(spec.seed)
    rng = sampler.generator
    lo, hi = spec.bounds if spec.bounds is not None else (None, None)
    quantities = []
    for qi, n in enumerate(spec._counts):
        true = _draw_true(spec, rng)
        u = spec.reported_u * (abs(true) if spec.u_relative else 1.0)
        if u <= 0:
            raise ValueError("reported uncertainty must be positive (zero true value with u_relative?)")
        x = true + u * sampler.sample(spec.error_law, n)
        if spec.bounds is not None:
            # rejection: redraw until every value lands inside the bounds
            for _ in range(10000):
                out = (x < lo) | (x > hi)
                if not np.any(out):
                    break
                x[out] = true + u * sampler.sample(spec.error_law, int(np.count_nonzero(out)))
            else:
                raise ValueError(f"bounds {spec.bounds} reject essentially all draws for true={true}")
        dates = None
        if spec.date_range is not None:
            y0, y1 = spec.date_range
            start = datetime.date(y0, 1, 1).toordinal()
            end = datetime.date(y1, 12, 31).toordinal()
            dates = [datetime.date.fromordinal(int(o)) for o in rng.integers(start, end + 1, n)]
        ms = tuple(
            Measurement(float(x[k]), u, u, dates[k] if dates else None, None) for k in range(n)
        )
        quantities.append(Quantity(f"q{qi:05d}", ms, lo, hi))
    return Dataset(name, tuple(quantities))


# ---------------------------------------------------------------------------
# Monte Carlo deconvolution of the individual-measurement error law

@dataclass
class DeconvolutionResult:
    nu_x: float
    sigma_x: float
    objective: float
    on_boundary: bool


def _pair_index_cache(ms: np.ndarray) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    return {int(m): np.triu_indices(int(m), k=1) for m in np.unique(ms)}


def _simulated_density(
    abs_diffs: np.ndarray, weights: np.ndarray, sigma_x: float, edges: np.ndarray
) -> np.ndarray:
    # x = u * sigma_x * e with u = 1, so z = sigma_x * |e_i - e_j| / sqrt(2)
    z = sigma_x * abs_diffs
    hist, _ = np.histogram(z, bins=edges, weights=weights)
    return hist / weights.sum() / np.diff(edges)


def _pair_diffs_for_nu(
    nu_x: float, multiplicities: np.ndarray, sampler: Sampler, n_pairs: int
) -> tuple[np.ndarray, np.ndarray]:
    """|e_i - e_j|/sqrt(2) for simulated quantities, with M-scheme weights."""
    ms = np.resize(np.asarray(multiplicities, int), max(len(multiplicities), 1))
    # cycle the observed multiplicity list until enough pairs accumulate
    reps = 1
    pairs_per_cycle = int(np.sum(ms * (ms - 1) // 2))
    reps = max(1, math.ceil(n_pairs / pairs_per_cycle))
    ms = np.tile(ms, reps)
    law = DistSpec("student_t", sigma=1.0, nu=nu_x)
    cache = _pair_index_cache(ms)
    diffs, weights = [], []
    for m in sorted(cache):
        k = int(np.count_nonzero(ms == m))
        e = sampler.sample(law, k * m).reshape(k, m)
        ii, jj = cache[m]
        d = np.abs(e[:, ii] - e[:, jj]).ravel() / math.sqrt(2.0)
        diffs.append(d)
        weights.append(np.full(d.size, 2.0 / (m - 1)))
    return np.concatenate(diffs), np.concatenate(weights)


def deconvolve(
    observed: ZHistogram,
    multiplicities,
    seed: int = 42,
    n_pairs: int = 200_000,
    nu_grid: np.ndarray | None = None,
    sigma_grid: np.ndarray | None = None,
) -> DeconvolutionResult:
    """Find the individual-error Student-t (nu_x, sigma_x) whose pairs match.

    Grid search with common random numbers along the sigma axis (scaling
    the same simulated differences), then one local refinement pass
    around the coarse minimum.  Requires bootstrap uncertainties on the
    observed histogram.
    """
    u = observed.bin_uncertainty
    usable = u > 0
    if np.count_nonzero(usable) < 3:
        raise ValueError("observed histogram needs bootstrap uncertainties")
    edges = observed.bin_edges
    obs = observed.contents

    if nu_grid is None:
        nu_grid = np.geomspace(0.5, 20.0, 13)
    if sigma_grid is None:
        sigma_grid = np.linspace(0.3, 3.0, 12)

    def score(density: np.ndarray) -> float:
        r = (obs[usable] - density[usable]) / u[usable]
        return float(np.dot(r, r))

    base = Sampler(seed)
    evals: list[tuple[float, float, float]] = []  # (objective, nu, sigma)

    def sweep(nus, sigmas, level: int) -> None:
        for i, nu in enumerate(nus):
            diffs, w = _pair_diffs_for_nu(nu, multiplicities, base.spawn(1000 * level + i), n_pairs)
            for sig in sigmas:
                evals.append((score(_simulated_density(diffs, w, sig, edges)), nu, sig))

    sweep(nu_grid, sigma_grid, 0)
    best = min(evals)
    on_boundary = best[1] in (nu_grid[0], nu_grid[-1]) or best[2] in (sigma_grid[0], sigma_grid[-1])

    # local refinement between the neighbouring coarse grid lines
    ni = int(np.argmin(np.abs(nu_grid - best[1])))
    si = int(np.argmin(np.abs(sigma_grid - best[2])))
    nu_lo = nu_grid[max(ni - 1, 0)]
    nu_hi = nu_grid[min(ni + 1, nu_grid.size - 1)]
    sig_lo = sigma_grid[max(si - 1, 0)]
    sig_hi = sigma_grid[min(si + 1, sigma_grid.size - 1)]
    sweep(np.geomspace(nu_lo, nu_hi, 7), np.linspace(sig_lo, sig_hi, 9), 1)
    best = min(evals)
    return DeconvolutionResult(best[1], best[2], best[0], on_boundary)


# ---------------------------------------------------------------------------
# bounds effect on fitted parameters

def bounds_effect(
    d: Dataset,
    error_law: DistSpec | None = None,
    seed: int = 42,
    replicas: int = 200,
) -> tuple[float, float]:
    """Fitted-parameter shifts (bounded - unbounded) from simulated data.

    Simulates measurements around each quantity's weighted mean using the
    reported uncertainties, once freely and once constrained to the
    quantity's bounds by rejection; both simulated datasets then run
    through the standard histogram fit.  Common error draws are reused so
    the shift isolates the clipping effect.
    """
    from concord.comparison import _mean_and_sides
    from concord.tfit import FitConfig, fit_report

    law = error_law or DistSpec("student_t", sigma=1.0, nu=3.0)
    sampler = Sampler(seed)
    free_q, clip_q = [], []
    for q in d.quantities:
        if len(q) < 2:
            continue
        _, _, xbar, _ = _mean_and_sides(q)
        u = np.array([m.u_mean for m in q.measurements])
        e = sampler.sample(law, len(q))
        x_free = xbar + u * e
        x_clip = x_free.copy()
        if q.lower_bound is not None or q.upper_bound is not None:
            lo = -np.inf if q.lower_bound is None else q.lower_bound
            hi = np.inf if q.upper_bound is None else q.upper_bound
            for _ in range(10000):
                out = (x_clip < lo) | (x_clip > hi)
                if not np.any(out):
                    break
                n_out = int(np.count_nonzero(out))
                x_clip[out] = xbar + u[out] * sampler.sample(law, n_out)
            else:
                raise ValueError(f"quantity {q.id}: bounds reject essentially all draws")
        free_q.append(Quantity(q.id, tuple(Measurement(float(v), float(uu), float(uu)) for v, uu in zip(x_free, u))))
        clip_q.append(Quantity(q.id, tuple(Measurement(float(v), float(uu), float(uu)) for v, uu in zip(x_clip, u))))
    if not free_q:
        raise ValueError("dataset has no usable quantities")
    cfg = FitConfig(replicas=replicas, seed=seed)
    fit_free = fit_report(Dataset("unbounded", tuple(free_q)), cfg).fit
    fit_clip = fit_report(Dataset("bounded", tuple(clip_q)), cfg).fit
    return fit_clip.nu - fit_free.nu, fit_clip.sigma - fit_free.sigma


# ---------------------------------------------------------------------------
# scale-mixture model of measurement error

class PointMassPrior:
    """All the probability at a single scale t0: the mixture is Normal(0, t0)."""

    def __init__(self, t0: float):
        if t0 <= 0:
            raise ValueError("t0 must be positive")
        self.t0 = t0


class ScaledInvChi2Prior:
    """t such that t^2 follows Scale-inv-chi2(nu, tau^2); mixture is Student-t(nu, tau)."""

    def __init__(self, nu: float, tau: float):
        if nu <= 0 or tau <= 0:
            raise ValueError("nu and tau must be positive")
        self.nu = nu
        self.tau = tau
        self.lower = 0.0
        half = nu / 2.0
        self._log_norm = half * math.log(nu * tau * tau / 2.0) - math.lgamma(half)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        v = t * t
        log_f = self._log_norm - (self.nu / 2.0 + 1.0) * np.log(v) - self.nu * self.tau**2 / (2.0 * v)
        out = 2.0 * t * np.exp(log_f)
        return float(out) if out.ndim == 0 else out


class NormalPrior:
    """Normal(mu, s) in t, truncated to t > 0 and renormalized."""

    def __init__(self, mu: float, s: float):
        if s <= 0:
            raise ValueError("s must be positive")
        self.mu = mu
        self.s = s
        self.lower = 0.0
        from scipy.special import erfc

        self._norm = 0.5 * erfc(-mu / (s * math.sqrt(2.0)))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = (
            np.exp(-0.5 * ((t - self.mu) / self.s) ** 2)
            / (self.s * math.sqrt(2.0 * math.pi))
            / self._norm
        )
        return float(out) if out.ndim == 0 else out


class CallablePrior:
    """Arbitrary density on (lower, infinity); must be integrable there."""

    def __init__(self, fn, lower: float = 0.0):
        self.fn = fn
        self.lower = lower

    def __call__(self, t):
        return self.fn(t)


@dataclass(frozen=True)
class GenesisSpec:
    """Parameters of the unfound-systematic-error scale distribution.

    A systematic of scale t survives n_m consistency measurements when
    their scaled chi-squared stays below chi2_max; the prior over all
    possible systematic scales is the scale-invariant power law
    1/t^alpha.  sigma_floor is the reported uncertainty, the smallest
    scale the model integrates over.
    """

    n_m: int
    alpha: float
    chi2_max: float | None = None  # defaults to n_m - 1
    sigma_floor: float = 1.0

    def __post_init__(self):
        if self.n_m < 2:
            raise ValueError("n_m must be >= 2")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.chi2_max is None:
            object.__setattr__(self, "chi2_max", float(self.n_m - 1))
        if self.chi2_max <= 0 or self.sigma_floor <= 0:
            raise ValueError("chi2_max and sigma_floor must be positive")
        # integrability: tail falls as t^-(n_m - 1 + alpha)
        if self.n_m - 1 + self.alpha <= 1:
            raise ValueError("n_m - 1 + alpha must exceed 1 for a normalizable scale law")


def unfound_error_density(t, g: GenesisSpec):
    """Unnormalized density of surviving systematic scales, t >= sigma_floor.

    t^(-alpha) * F(chi2_max / t^2; n_m - 1) with F the chi-squared CDF;
    zero below sigma_floor.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    dof = g.n_m - 1
    out = np.where(
        t >= g.sigma_floor,
        t ** (-g.alpha) * chi2_cdf(np.maximum(g.chi2_max / t**2, 0.0), dof),
        0.0,
    )
    return float(out) if out.ndim == 0 else out


class UnfoundErrorPrior:
    """unfound_error_density normalized over [sigma_floor, infinity)."""

    def __init__(self, g: GenesisSpec):
        self.spec = g
        self.lower = g.sigma_floor
        self._norm = _integrate_tail(lambda t: unfound_error_density(t, g), g.sigma_floor)

    def __call__(self, t):
        return unfound_error_density(t, self.spec) / self._norm


def _integrate_tail(fn, lower: float, weight=None, points=None) -> float:
    """Integral of fn over (lower, infinity) via t = lower/(1-s), s in (0,1)."""
    if lower <= 0:
        def g(s):
            t = s / (1.0 - s)
            return fn(t) / (1.0 - s) ** 2
    else:
        def g(s):
            t = lower / (1.0 - s)
            return fn(t) * lower / (1.0 - s) ** 2
    kwargs = {"epsabs": 1e-14, "epsrel": 1e-11, "limit": 200}
    if points:
        kwargs["points"] = points
    val, _ = integrate.quad(g, 0.0, 1.0, **kwargs)
    return val


def mixture_density(f, x: float) -> float:
    """Density of x = Normal(0, t) with scale t distributed as the prior f.

    f is one of the prior classes above.  Evaluated by adaptive
    quadrature on the compactified scale axis; relative accuracy about
    1e-8 for smooth priors.
    """
    x = float(x)
    if isinstance(f, PointMassPrior):
        t = f.t0
        return math.exp(-0.5 * (x / t) ** 2) / (t * math.sqrt(2.0 * math.pi))

    lower = getattr(f, "lower", 0.0)

    def integrand(t):
        t = np.asarray(t, dtype=float)
        return f(t) * np.exp(-0.5 * (x / t) ** 2) / (t * math.sqrt(2.0 * math.pi))

    # the integrand peaks near t ~ |x|; give the subdivision a hint there
    points = None
    ax = abs(x)
    if ax > max(lower, 1e-12):
        s_star = 1.0 - max(lower, 1e-12) / ax if lower > 0 else ax / (1.0 + ax)
        if 0.0 < s_star < 1.0:
            points = [s_star]
    return _integrate_tail(integrand, lower, points=points)


def genesis_tail_exponent(
    g: GenesisSpec,
    z_max: float = 12.0,
    n_grid: int = 100,
) -> float:
    """Effective Student-t nu of the unfound-error mixture distribution.

    Tabulates the mixture density on a z grid spanning the core and the
    observable tail (z up to z_max reported-uncertainty units), then fits
    the Student-t density with Poisson-style weighting (residuals scaled
    by sqrt of the density), mimicking how a histogram fit would weight
    the curve.
    """
    prior = UnfoundErrorPrior(g)
    floor = g.sigma_floor
    grid = np.unique(
        np.concatenate(
            [
                np.linspace(0.0, 3.0 * floor, n_grid // 2),
                np.geomspace(3.0 * floor, z_max * floor, n_grid - n_grid // 2),
            ]
        )
    )
    dens = np.array([mixture_density(prior, z) for z in grid])
    root = np.sqrt(dens)

    from scipy.optimize import least_squares

    def resid(p):
        return (student_t_pdf(grid, math.exp(p[0]), math.exp(p[1])) - dens) / root

    best = None
    for nu0 in (1.0, 3.0, 10.0):
        res = least_squares(resid, x0=np.log([nu0, floor]), method="lm")
        if best is None or res.cost < best.cost:
            best = res
    return math.exp(best.x[0])
