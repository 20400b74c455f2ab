"""Weighted z/h comparison sets, histograms, and trend analyses.

The central statistic is the uncertainty-normalized difference of a
measurement pair, z = |x_i - x_j| / u_ij, with the combined uncertainty
u_ij formed in quadrature (default), linearly (Cauchy rule), or with an
explicit covariance term.  For asymmetric uncertainties each measurement
contributes the uncertainty of the side facing the other member of the
pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from concord.dataset import Dataset, Measurement, Quantity

__all__ = [
    "ComparisonPair",
    "GapMedians",
    "RelativeUncertaintyResult",
    "UncertaintyImprovement",
    "ZHistogram",
    "build_histogram",
    "consistency_chi2",
    "dataset_pairs",
    "default_bin_edges",
    "empirical_survival",
    "enumerate_pairs",
    "h_scores",
    "median_z_vs_gap",
    "pair_z",
    "relative_uncertainty_distribution",
    "uncertainty_improvement",
    "weighted_median",
]

_DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class ComparisonPair:
    z: float
    weight: float
    quantity_id: str
    year_gap: float | None = None
    newer_older_u_ratio: float | None = None


def _side_uncertainties(a: Measurement, b: Measurement) -> tuple[float, float]:
    # each member contributes the side towards the other member
    if a.value < b.value:
        return a.u_plus, b.u_minus
    return a.u_minus, b.u_plus


def _combine(ua: float, ub: float, mode: str, cov: float) -> float:
    if mode == "quadrature":
        return math.hypot(ua, ub)
    if mode == "linear":
        return ua + ub
    if mode == "covariance":
        arg = ua * ua - 2.0 * cov + ub * ub
        if arg <= 0:
            raise ValueError(f"non-positive combined variance {arg} for covariance {cov}")
        return math.sqrt(arg)
    raise ValueError(f"unknown mode {mode!r}")


def pair_z(a: Measurement, b: Measurement, mode: str = "quadrature", cov: float = 0.0) -> float:
    """Uncertainty-normalized difference of one measurement pair."""
    if a.value == b.value:
        return 0.0
    ua, ub = _side_uncertainties(a, b)
    denom = _combine(ua, ub, mode, cov)
    if denom <= 0:
        raise ValueError(
            f"non-positive combined uncertainty for pair ({a.value}, {b.value}): "
            f"sides {ua}, {ub}"
        )
    return abs(a.value - b.value) / denom


def _pair_weight(n_meas: int, n_pairs: int, weighting: str) -> float:
    # total weight per quantity: N for M, 1 for Q, n_pairs for P
    if weighting == "M":
        return n_meas / n_pairs
    if weighting == "Q":
        return 1.0 / n_pairs
    if weighting == "P":
        return 1.0
    raise ValueError(f"unknown weighting {weighting!r}")


def _years(m: Measurement) -> float | None:
    return None if m.date is None else m.date.toordinal() / _DAYS_PER_YEAR


def quantity_pair_z(
    q: Quantity,
    mode: str = "quadrature",
    cov: float = 0.0,
    exclude_shared_source: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized z for all unordered pairs of a quantity.

    Returns (z, i, j) index triples; i, j index q.measurements.
    """
    n = len(q)
    if n < 2:
        raise ValueError(f"quantity {q.id} has fewer than 2 measurements")
    v = np.array([m.value for m in q.measurements])
    up = np.array([m.u_plus for m in q.measurements])
    um = np.array([m.u_minus for m in q.measurements])
    ii, jj = np.triu_indices(n, k=1)
    if exclude_shared_source:
        src = [m.source_id for m in q.measurements]
        keep = np.array(
            [src[a] is None or src[b] is None or src[a] != src[b] for a, b in zip(ii, jj)]
        )
        ii, jj = ii[keep], jj[keep]
        if ii.size == 0:
            raise ValueError(f"quantity {q.id} has no usable pairs after source exclusion")
    d = v[jj] - v[ii]
    ua = np.where(d > 0, up[ii], um[ii])
    ub = np.where(d > 0, um[jj], up[jj])
    if mode == "quadrature":
        denom = np.hypot(ua, ub)
    elif mode == "linear":
        denom = ua + ub
    elif mode == "covariance":
        arg = ua * ua - 2.0 * cov + ub * ub
        if np.any((arg <= 0) & (d != 0)):
            raise ValueError(f"quantity {q.id}: non-positive combined variance in covariance mode")
        denom = np.sqrt(np.maximum(arg, 0.0))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    z = np.zeros(ii.size)
    nz = d != 0
    bad = nz & (denom <= 0)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValueError(
            f"quantity {q.id}: pair ({ii[k]}, {jj[k]}) has zero uncertainty on the facing sides"
        )
    z[nz] = np.abs(d[nz]) / denom[nz]
    return z, ii, jj


def enumerate_pairs(
    q: Quantity,
    mode: str = "quadrature",
    weighting: str = "M",
    cov: float = 0.0,
    exclude_shared_source: bool = False,
) -> list[ComparisonPair]:
    """All unordered measurement pairs of a quantity with scheme weights."""
    z, ii, jj = quantity_pair_z(q, mode, cov, exclude_shared_source)
    w = _pair_weight(len(q), ii.size, weighting)
    years = [_years(m) for m in q.measurements]
    rel = [m.relative_uncertainty for m in q.measurements]
    pairs = []
    for zk, a, b in zip(z, ii, jj):
        gap = ratio = None
        ya, yb = years[a], years[b]
        if ya is not None and yb is not None:
            gap = abs(yb - ya)
            newer, older = (b, a) if yb >= ya else (a, b)
            if rel[newer] is not None and rel[older] is not None and rel[older] > 0:
                ratio = rel[newer] / rel[older]
        pairs.append(ComparisonPair(float(zk), w, q.id, gap, ratio))
    return pairs


def dataset_pairs(d: Dataset, **kwargs) -> list[ComparisonPair]:
    """enumerate_pairs over every quantity with >= 2 measurements."""
    pairs: list[ComparisonPair] = []
    for q in d.quantities:
        if len(q) >= 2:
            pairs.extend(enumerate_pairs(q, **kwargs))
    return pairs


# ---------------------------------------------------------------------------
# weighted mean, h scores, consistency

def _mean_and_sides(q: Quantity) -> tuple[np.ndarray, np.ndarray, float, float]:
    u_mean = np.array([m.u_mean for m in q.measurements])
    if np.any(u_mean <= 0):
        raise ValueError(f"quantity {q.id} has a zero-uncertainty measurement")
    v = np.array([m.value for m in q.measurements])
    w = 1.0 / u_mean**2
    xbar = float(np.sum(w * v) / np.sum(w))
    u_xbar = float(1.0 / math.sqrt(np.sum(w)))
    # side towards the weighted mean, mirroring the pairwise side rule
    u_side = np.array([m.u_toward(xbar) for m in q.measurements])
    if np.any((u_side <= 0) & (v != xbar)):
        raise ValueError(f"quantity {q.id}: zero uncertainty on the side facing the mean")
    return v, u_side, xbar, u_xbar


def h_scores(q: Quantity) -> list[tuple[int, float]]:
    """Normalized difference of each measurement from the weighted mean."""
    if len(q) < 2:
        raise ValueError(f"quantity {q.id} has fewer than 2 measurements")
    v, u_side, xbar, u_xbar = _mean_and_sides(q)
    out = []
    for i, (x, u) in enumerate(zip(v, u_side)):
        h = 0.0 if x == xbar else abs(x - xbar) / math.hypot(u, u_xbar)
        out.append((i, h))
    return out


def consistency_chi2(q: Quantity) -> tuple[float, int, float]:
    """Agreement chi-squared about the weighted mean, dof, and I^2 index."""
    if len(q) < 2:
        raise ValueError(f"quantity {q.id} has fewer than 2 measurements")
    v, u_side, xbar, _ = _mean_and_sides(q)
    resid = v - xbar
    chi2 = float(np.sum(np.where(resid == 0, 0.0, resid**2 / u_side**2)))
    dof = len(q) - 1
    i2 = max(0.0, 1.0 - dof / chi2) if chi2 > 0 else 0.0
    return chi2, dof, i2


# ---------------------------------------------------------------------------
# histograms and survival

def default_bin_edges() -> np.ndarray:
    """Variable-width z bins: fine core, coarse mid, log-spaced tail to 100."""
    edges = np.concatenate(
        [
            np.arange(0.0, 3.0, 0.2),
            np.arange(3.0, 6.0, 0.5),
            np.arange(6.0, 10.0, 1.0),
            np.geomspace(10.0, 100.0, 9),
        ]
    )
    return edges


@dataclass
class ZHistogram:
    """Weighted, probability-normalized distribution of z."""

    bin_edges: np.ndarray
    contents: np.ndarray  # probability density per bin
    bin_uncertainty: np.ndarray  # density standard uncertainty (bootstrap)
    total_pairs: int
    overflow_weight: float
    total_weight: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def overflow_probability(self) -> float:
        return self.overflow_weight / self.total_weight if self.total_weight > 0 else 0.0


def _bin_weights(z: np.ndarray, w: np.ndarray, edges: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-bin weight plus overflow weight beyond the last edge."""
    hist, _ = np.histogram(z, bins=edges, weights=w)
    overflow = float(np.sum(w[z >= edges[-1]]))
    return hist, overflow


def build_histogram(pairs, edges=None) -> ZHistogram:
    """Weighted density histogram of pair z values.

    `pairs` is a sequence of ComparisonPair or a (z, weight) array pair.
    """
    if edges is None:
        edges = default_bin_edges()
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be an ascending list of at least two values")
    if isinstance(pairs, tuple):
        z, w = (np.asarray(a, dtype=float) for a in pairs)
    else:
        z = np.array([p.z for p in pairs])
        w = np.array([p.weight for p in pairs])
    if z.size == 0:
        raise ValueError("no pairs to histogram")
    hist, overflow = _bin_weights(z, w, edges)
    total = float(np.sum(w))
    density = hist / total / np.diff(edges)
    return ZHistogram(
        bin_edges=edges,
        contents=density,
        bin_uncertainty=np.zeros_like(density),
        total_pairs=int(z.size),
        overflow_weight=overflow,
        total_weight=total,
    )


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    """Smallest value whose cumulative weight reaches half the total."""
    order = np.argsort(values)
    v, w = np.asarray(values)[order], np.asarray(weights)[order]
    cum = np.cumsum(w)
    return float(v[np.searchsorted(cum, 0.5 * cum[-1])])


def _weighted_quantile(values: np.ndarray, weights: np.ndarray, frac: float) -> float:
    order = np.argsort(values)
    v, w = np.asarray(values)[order], np.asarray(weights)[order]
    cum = np.cumsum(w)
    return float(v[min(np.searchsorted(cum, frac * cum[-1]), v.size - 1)])


def empirical_survival(pairs, thresholds) -> tuple[list[float], float]:
    """Weighted fraction of pairs beyond each threshold, plus the 95% z bound."""
    if isinstance(pairs, tuple):
        z, w = (np.asarray(a, dtype=float) for a in pairs)
    else:
        z = np.array([p.z for p in pairs])
        w = np.array([p.weight for p in pairs])
    if z.size == 0:
        raise ValueError("no pairs")
    total = float(np.sum(w))
    probs = [float(np.sum(w[z > t]) / total) for t in thresholds]
    z95 = _weighted_quantile(z, w, 0.95)
    return probs, z95


# ---------------------------------------------------------------------------
# trend analyses

@dataclass
class RelativeUncertaintyResult:
    bin_edges: np.ndarray  # in log10(u / |value|)
    counts: np.ndarray
    excluded_zero_value: int


def relative_uncertainty_distribution(d: Dataset, edges=None) -> RelativeUncertaintyResult:
    """Per-measurement relative uncertainty histogram over log10(u/|x|)."""
    rels = []
    excluded = 0
    for q in d.quantities:
        for m in q.measurements:
            r = m.relative_uncertainty
            if r is None:
                excluded += 1
            else:
                rels.append(math.log10(r))
    if edges is None:
        if rels:
            lo = math.floor(min(rels) * 4) / 4
            hi = math.ceil(max(rels) * 4) / 4
            edges = np.arange(lo, hi + 0.25, 0.25) if hi > lo else np.array([lo, lo + 0.25])
        else:
            edges = np.array([-1.0, 0.0])
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(rels, bins=edges)
    return RelativeUncertaintyResult(edges, counts, excluded)


@dataclass
class GapMedians:
    gap_edges: np.ndarray
    medians: list[float | None]  # None where the bucket is empty
    skipped_pairs: int
    counts: list[int] = field(default_factory=list)


def _bucket_pairs(pairs: list[ComparisonPair], gap_edges) -> tuple[list[list[ComparisonPair]], int]:
    gap_edges = np.asarray(gap_edges, dtype=float)
    buckets: list[list[ComparisonPair]] = [[] for _ in range(gap_edges.size - 1)]
    skipped = 0
    for p in pairs:
        if p.year_gap is None:
            skipped += 1
            continue
        k = int(np.searchsorted(gap_edges, p.year_gap, side="right")) - 1
        if 0 <= k < len(buckets):
            buckets[k].append(p)
        else:
            skipped += 1
    return buckets, skipped


def median_z_vs_gap(d: Dataset, gap_edges, **pair_kwargs) -> GapMedians:
    """Weighted median z per publication-time-gap bucket."""
    pairs = dataset_pairs(d, **pair_kwargs)
    buckets, skipped = _bucket_pairs(pairs, gap_edges)
    medians: list[float | None] = []
    counts = []
    for bucket in buckets:
        counts.append(len(bucket))
        if bucket:
            z = np.array([p.z for p in bucket])
            w = np.array([p.weight for p in bucket])
            medians.append(weighted_median(z, w))
        else:
            medians.append(None)
    return GapMedians(np.asarray(gap_edges, dtype=float), medians, skipped, counts)


@dataclass
class UncertaintyImprovement:
    gap_edges: np.ndarray
    median_newer_older_ratio: list[float | None]
    best_over_new_median: float | None  # median u_best/u_new across dated measurements
    skipped_pairs: int


def uncertainty_improvement(d: Dataset, gap_edges, **pair_kwargs) -> UncertaintyImprovement:
    """Relative-uncertainty improvement trends with publication date."""
    pairs = [p for p in dataset_pairs(d, **pair_kwargs) if p.newer_older_u_ratio is not None]
    buckets, skipped = _bucket_pairs(pairs, gap_edges)
    medians: list[float | None] = []
    for bucket in buckets:
        if bucket:
            r = np.array([p.newer_older_u_ratio for p in bucket])
            w = np.array([p.weight for p in bucket])
            medians.append(weighted_median(r, w))
        else:
            medians.append(None)

    # each measurement vs the smallest uncertainty published before it
    ratios = []
    for q in d.quantities:
        dated = sorted((m for m in q.measurements if m.date is not None), key=lambda m: m.date)
        best = None
        for m in dated:
            if best is not None and m.u_mean > 0:
                ratios.append(best / m.u_mean)
            best = m.u_mean if best is None else min(best, m.u_mean)
    best_over_new = float(np.median(ratios)) if ratios else None
    return UncertaintyImprovement(np.asarray(gap_edges, dtype=float), medians, best_over_new, skipped)
