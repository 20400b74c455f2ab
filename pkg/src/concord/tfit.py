"""Student-t fits to z histograms and quantity-level bootstrap.

The fit minimizes the nominal chi-squared between observed bin densities
and the folded model 2*S(z) over bins with nonzero uncertainty; bin
uncertainties come from a bootstrap that resamples whole quantities with
replacement (resampling individual measurements biases the bin
fluctuations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from concord.comparison import (
    ZHistogram,
    _bin_weights,
    _pair_weight,
    default_bin_edges,
    empirical_survival,
    h_scores,
    quantity_pair_z,
)
from concord.dataset import Dataset
from concord.statfun import Sampler, student_t_pdf, survival, DistSpec

__all__ = [
    "BootstrapResult",
    "FitConfig",
    "FitReport",
    "TFitResult",
    "bootstrap",
    "fit_report",
    "fit_student_t",
]

NU_MIN = 0.3
NU_MAX = 1000.0
_SIGMA_MIN = 1e-6
_SIGMA_MAX = 1e6
MAX_ITERATIONS = 500


@dataclass
class TFitResult:
    nu: float
    sigma: float
    u_nu: float
    u_sigma: float
    chi2_per_dof: float
    n_bins_used: int
    converged: bool

    @property
    def gaussian_compatible(self) -> bool:
        """nu pinned at the search ceiling: indistinguishable from Normal."""
        return self.nu >= 0.999 * NU_MAX


def _model_density(nu: float, sigma: float, edges: np.ndarray, bin_integrated: bool) -> np.ndarray:
    if bin_integrated:
        dist = DistSpec("student_t", sigma=sigma, nu=nu)
        cdf = 1.0 - survival(dist, edges)
        return np.diff(cdf) / np.diff(edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return 2.0 * student_t_pdf(centers, nu, sigma)


def fit_student_t(
    h: ZHistogram,
    bin_uncertainty: np.ndarray | None = None,
    bin_integrated: bool = False,
) -> TFitResult:
    """Least-squares fit of the folded Student-t density to a z histogram.

    Bins with zero uncertainty are excluded (the objective divides by the
    bin uncertainty squared).  Optimized in (log nu, log sigma) to keep
    both parameters positive; nu is searched in [0.3, 1000].
    """
    u = np.asarray(bin_uncertainty if bin_uncertainty is not None else h.bin_uncertainty, dtype=float)
    if u.shape != h.contents.shape:
        raise ValueError("bin uncertainty length does not match histogram")
    usable = u > 0
    n_used = int(np.count_nonzero(usable))
    if n_used < 3:
        raise ValueError(f"need at least 3 bins with nonzero uncertainty, got {n_used}")

    edges = h.bin_edges
    contents = h.contents

    def residuals(p: np.ndarray) -> np.ndarray:
        model = _model_density(math.exp(p[0]), math.exp(p[1]), edges, bin_integrated)
        return (contents[usable] - model[usable]) / u[usable]

    lo = np.array([math.log(NU_MIN), math.log(_SIGMA_MIN)])
    hi = np.array([math.log(NU_MAX), math.log(_SIGMA_MAX)])
    starts = [(2.0, 1.0), (1.0, 1.0), (5.0, 1.0), (100.0, 1.0), (2.0, 0.3), (2.0, 3.0)]
    best = None
    for nu0, sigma0 in starts:
        try:
            res = optimize.least_squares(
                residuals,
                x0=np.log([nu0, sigma0]),
                bounds=(lo, hi),
                method="trf",
                xtol=1e-12,
                ftol=1e-12,
                gtol=1e-10,
                max_nfev=MAX_ITERATIONS * 4,
            )
        except Exception:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        # derivative-free fallback
        def chi2_of(p):
            r = residuals(np.clip(p, lo, hi))
            return float(np.dot(r, r))

        nm = optimize.minimize(chi2_of, np.log([2.0, 1.0]), method="Nelder-Mead")
        p = np.clip(nm.x, lo, hi)
        nu, sigma = math.exp(p[0]), math.exp(p[1])
        chi2 = chi2_of(p)
        return TFitResult(nu, sigma, 0.0, 0.0, chi2 / max(n_used - 2, 1), n_used, bool(nm.success))

    p = best.x
    nu, sigma = math.exp(p[0]), math.exp(p[1])
    chi2 = 2.0 * best.cost
    # curvature-based parameter uncertainties in log space
    jtj = best.jac.T @ best.jac
    try:
        cov = np.linalg.inv(jtj)
        u_nu = nu * math.sqrt(max(cov[0, 0], 0.0))
        u_sigma = sigma * math.sqrt(max(cov[1, 1], 0.0))
    except np.linalg.LinAlgError:
        u_nu = u_sigma = 0.0
    grad = best.jac.T @ best.fun
    converged = bool(best.success) and (
        float(np.linalg.norm(grad)) < 1e-4 * max(1.0, chi2) or nu >= 0.999 * NU_MAX
    )
    return TFitResult(nu, sigma, u_nu, u_sigma, chi2 / (n_used - 2), n_used, converged)


# ---------------------------------------------------------------------------
# bootstrap

@dataclass
class BootstrapResult:
    n_replicas: int
    per_bin_sigma: np.ndarray
    param_spread: tuple[float, float] | None = None  # (std of nu, std of sigma)


def _quantity_rows(
    d: Dataset,
    edges: np.ndarray,
    weighting: str,
    mode: str,
    cov: float,
    exclude_shared_source: bool,
    statistic: str,
) -> tuple[np.ndarray, int]:
    """Per-quantity histogram weight rows [bins..., overflow]; and pair count."""
    rows = []
    n_entries = 0
    for q in d.quantities:
        if len(q) < 2:
            continue
        if statistic == "z":
            z, ii, _ = quantity_pair_z(q, mode, cov, exclude_shared_source)
            w = np.full(z.size, _pair_weight(len(q), ii.size, weighting))
        elif statistic == "h":
            z = np.array([h for _, h in h_scores(q)])
            w = np.ones(z.size)
        else:
            raise ValueError(f"unknown statistic {statistic!r}")
        hist, overflow = _bin_weights(z, w, edges)
        rows.append(np.append(hist, overflow))
        n_entries += z.size
    if not rows:
        raise ValueError("dataset has no quantity with at least 2 measurements")
    return np.vstack(rows), n_entries


def bootstrap(
    d: Dataset,
    edges=None,
    weighting: str = "M",
    mode: str = "quadrature",
    n_replicas: int = 1000,
    seed: int = 42,
    cov: float = 0.0,
    exclude_shared_source: bool = False,
    statistic: str = "z",
    refit: bool = False,
) -> BootstrapResult:
    """Per-bin density standard deviations from quantity resampling.

    Each replica draws quantities with replacement up to the original
    quantity count and re-histograms; per-bin standard deviations across
    replicas estimate the bin uncertainties.
    """
    if n_replicas < 2:
        raise ValueError(f"n_replicas must be >= 2, got {n_replicas}")
    if edges is None:
        edges = default_bin_edges()
    edges = np.asarray(edges, dtype=float)
    rows, _ = _quantity_rows(d, edges, weighting, mode, cov, exclude_shared_source, statistic)
    nq = rows.shape[0]
    widths = np.diff(edges)
    rng = Sampler(seed).generator
    densities = np.empty((n_replicas, widths.size))
    for r in range(n_replicas):
        idx = rng.integers(0, nq, nq)
        repl = rows[idx].sum(axis=0)
        densities[r] = repl[:-1] / repl.sum() / widths
    per_bin_sigma = densities.std(axis=0, ddof=1)
    # bins whose replica values never vary are exactly zero, not rounding noise
    per_bin_sigma[np.ptp(densities, axis=0) == 0.0] = 0.0

    param_spread = None
    if refit:
        nus, sigmas = [], []
        base = ZHistogram(edges, np.zeros(widths.size), per_bin_sigma, 0, 0.0, 1.0)
        for r in range(n_replicas):
            base.contents = densities[r]
            try:
                fit = fit_student_t(base, bin_uncertainty=per_bin_sigma)
            except ValueError:
                continue
            if fit.converged:
                nus.append(fit.nu)
                sigmas.append(fit.sigma)
        if len(nus) >= 2:
            param_spread = (float(np.std(nus, ddof=1)), float(np.std(sigmas, ddof=1)))
    return BootstrapResult(n_replicas, per_bin_sigma, param_spread)


# ---------------------------------------------------------------------------
# composed pipeline

SURVIVAL_THRESHOLDS = (1.0, 2.0, 3.0, 5.0, 10.0)


@dataclass
class FitConfig:
    bins: np.ndarray | None = None
    weighting: str = "M"
    mode: str = "quadrature"
    cov: float = 0.0
    replicas: int = 1000
    seed: int = 42
    exclude_shared_source: bool = False
    bin_integrated: bool = False
    statistic: str = "z"


@dataclass
class FitReport:
    histogram: ZHistogram
    fit: TFitResult
    bootstrap: BootstrapResult
    survival_probs: list[float]
    z95: float
    thresholds: tuple[float, ...] = SURVIVAL_THRESHOLDS


def fit_report(d: Dataset, config: FitConfig | None = None) -> FitReport:
    """Full pipeline: enumerate -> bootstrap -> histogram -> fit -> survival."""
    cfg = config or FitConfig()
    edges = np.asarray(cfg.bins, dtype=float) if cfg.bins is not None else default_bin_edges()
    rows, n_entries = _quantity_rows(
        d, edges, cfg.weighting, cfg.mode, cfg.cov, cfg.exclude_shared_source, cfg.statistic
    )
    totals = rows.sum(axis=0)
    total_weight = float(totals.sum())
    widths = np.diff(edges)
    hist = ZHistogram(
        bin_edges=edges,
        contents=totals[:-1] / total_weight / widths,
        bin_uncertainty=np.zeros(widths.size),
        total_pairs=n_entries,
        overflow_weight=float(totals[-1]),
        total_weight=total_weight,
    )
    boot = bootstrap(
        d,
        edges=edges,
        weighting=cfg.weighting,
        mode=cfg.mode,
        n_replicas=cfg.replicas,
        seed=cfg.seed,
        cov=cfg.cov,
        exclude_shared_source=cfg.exclude_shared_source,
        statistic=cfg.statistic,
    )
    hist.bin_uncertainty = boot.per_bin_sigma
    fit = fit_student_t(hist, bin_integrated=cfg.bin_integrated)

    # weighted empirical survival over all entries
    zs, ws = [], []
    for q in d.quantities:
        if len(q) < 2:
            continue
        if cfg.statistic == "z":
            z, ii, _ = quantity_pair_z(q, cfg.mode, cfg.cov, cfg.exclude_shared_source)
            w = np.full(z.size, _pair_weight(len(q), ii.size, cfg.weighting))
        else:
            z = np.array([h for _, h in h_scores(q)])
            w = np.ones(z.size)
        zs.append(z)
        ws.append(w)
    probs, z95 = empirical_survival((np.concatenate(zs), np.concatenate(ws)), SURVIVAL_THRESHOLDS)
    return FitReport(hist, fit, boot, probs, z95)
