"""Report assembly and JSON serialization for the command-line surface."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

import concord
from concord.comparison import (
    GapMedians,
    RelativeUncertaintyResult,
    UncertaintyImprovement,
    ZHistogram,
    median_z_vs_gap,
    relative_uncertainty_distribution,
    uncertainty_improvement,
)
from concord.dataset import Dataset, validate
from concord.statfun import DistSpec, inverse_survival, survival
from concord.tfit import SURVIVAL_THRESHOLDS, FitConfig, FitReport, fit_report

__all__ = ["analyze", "histogram_dict", "fit_dict", "theoretical_survival_rows"]

DEFAULT_GAP_EDGES = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 60.0)

TABLE_DISTRIBUTIONS: tuple[tuple[str, DistSpec], ...] = (
    ("Normal (Gaussian)", DistSpec("normal")),
    ("Student-t (nu=10)", DistSpec("student_t", nu=10.0)),
    ("Exponential", DistSpec("exponential")),
    ("Student-t (nu=2)", DistSpec("student_t", nu=2.0)),
    ("Cauchy", DistSpec("cauchy")),
)

_NORMAL = DistSpec("normal")


def _jsonable(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return [float(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def histogram_dict(h: ZHistogram) -> dict:
    return {
        "bin_edges": _jsonable(h.bin_edges),
        "density": _jsonable(h.contents),
        "density_uncertainty": _jsonable(h.bin_uncertainty),
        "total_pairs": h.total_pairs,
        "overflow_probability": h.overflow_probability,
    }


def fit_dict(fit) -> dict:
    return {
        "nu": float(fit.nu),
        "sigma": float(fit.sigma),
        "u_nu": float(fit.u_nu),
        "u_sigma": float(fit.u_sigma),
        "chi2_per_dof": float(fit.chi2_per_dof),
        "n_bins_used": int(fit.n_bins_used),
        "converged": bool(fit.converged),
        "gaussian_compatible": bool(fit.gaussian_compatible),
    }


def survival_row(probs, z95: float) -> dict:
    return {
        "thresholds": list(SURVIVAL_THRESHOLDS),
        "survival": _jsonable(list(probs)),
        "z_0.95": z95,
        "p_normal_z_0.95": survival(_NORMAL, z95),
    }


def theoretical_survival_rows() -> list[dict]:
    """Reference survival rows for the standard comparison distributions."""
    rows = []
    for label, dist in TABLE_DISTRIBUTIONS:
        z95 = inverse_survival(dist, 0.05)
        rows.append(
            {
                "distribution": label,
                "thresholds": list(SURVIVAL_THRESHOLDS),
                "survival": [survival(dist, z) for z in SURVIVAL_THRESHOLDS],
                "z_0.95": z95,
                "p_normal_z_0.95": survival(_NORMAL, z95),
            }
        )
    return rows


def _fit_section(rep: FitReport) -> dict:
    out = {
        "histogram": histogram_dict(rep.histogram),
        "fit": fit_dict(rep.fit),
        "survival": survival_row(rep.survival_probs, rep.z95),
        "bootstrap_replicas": rep.bootstrap.n_replicas,
    }
    return out


def _gap_dict(g: GapMedians) -> dict:
    return {
        "gap_edges_years": _jsonable(g.gap_edges),
        "medians": [None if m is None else float(m) for m in g.medians],
        "pair_counts": g.counts,
        "skipped_pairs": g.skipped_pairs,
    }


def analyze(d: Dataset, cfg: FitConfig, with_h: bool = False, gap_edges=DEFAULT_GAP_EDGES) -> dict:
    """Full analysis report: validation, z (and optionally h) fits, trends."""
    report = validate(d)
    rep = fit_report(d, cfg)
    pair_kwargs = dict(
        mode=cfg.mode, weighting=cfg.weighting, cov=cfg.cov, exclude_shared_source=cfg.exclude_shared_source
    )
    rel = relative_uncertainty_distribution(d)
    gaps = median_z_vs_gap(d, gap_edges, **pair_kwargs)
    improve = uncertainty_improvement(d, gap_edges, **pair_kwargs)
    doc = {
        "tool": {"name": "concord", "version": concord.__version__},
        "config": {
            "weighting": cfg.weighting,
            "mode": cfg.mode,
            "cov": cfg.cov,
            "replicas": cfg.replicas,
            "seed": cfg.seed,
            "exclude_shared_source": cfg.exclude_shared_source,
            "bin_edges": _jsonable(rep.histogram.bin_edges),
            "weighting_note": "pair weights sum to the measurement count per quantity (M), "
            "to 1 (Q), or count each pair once (P); z in combined standard uncertainty units",
        },
        "dataset": {
            "name": d.name,
            "n_quantities": len(d),
            "n_measurements": d.n_measurements,
            "n_pairs": rep.histogram.total_pairs,
        },
        "validation": {
            "measurement_counts": report.measurement_counts,
            "issues": report.issues,
        },
        "z": _fit_section(rep),
        "trends": {
            "relative_uncertainty": {
                "log10_bin_edges": _jsonable(rel.bin_edges),
                "counts": _jsonable(rel.counts),
                "excluded_zero_value": rel.excluded_zero_value,
            },
            "median_z_vs_gap": _gap_dict(gaps),
            "uncertainty_improvement": {
                "gap_edges_years": _jsonable(improve.gap_edges),
                "median_newer_older_ratio": [
                    None if m is None else float(m) for m in improve.median_newer_older_ratio
                ],
                "median_best_over_new": improve.best_over_new_median,
                "skipped_pairs": improve.skipped_pairs,
            },
        },
    }
    if with_h:
        h_cfg = FitConfig(
            bins=cfg.bins,
            weighting=cfg.weighting,
            mode=cfg.mode,
            cov=cfg.cov,
            replicas=cfg.replicas,
            seed=cfg.seed,
            exclude_shared_source=cfg.exclude_shared_source,
            bin_integrated=cfg.bin_integrated,
            statistic="h",
        )
        doc["h"] = _fit_section(fit_report(d, h_cfg))
    return doc
