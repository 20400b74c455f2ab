"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line (run with -s to see them even on
success); the assertions enforce the stated tolerances.  The fixtures are
synthetic and seeded, so every run exercises identical data.
"""

import math
import time

import numpy as np
import pytest

from concord.comparison import (
    build_histogram,
    consistency_chi2,
    dataset_pairs,
    enumerate_pairs,
    h_scores,
    pair_z,
)
from concord.dataset import Dataset, Measurement, Quantity
from concord.genesis import (
    GenesisSpec,
    PointMassPrior,
    ScaledInvChi2Prior,
    SimSpec,
    bounds_effect,
    deconvolve,
    genesis_tail_exponent,
    mixture_density,
    simulate_dataset,
)
from concord.report import theoretical_survival_rows
from concord.statfun import DistSpec, Sampler, student_t_pdf
from concord.tfit import FitConfig, bootstrap, fit_report, fit_student_t


def report(number, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number:>2} {name}: {status}  {detail}".rstrip())
    assert ok, f"acceptance criterion {number} ({name}): {detail}"


def pairwise_t_dataset(nu, sigma, n_q, seed):
    """Two-measurement quantities whose pair z follows a folded t(nu, sigma)."""
    s = Sampler(seed)
    t = s.sample(DistSpec("student_t", nu=nu, sigma=sigma), n_q)
    qs = [
        Quantity(f"q{i}", (Measurement(0.0, 1, 1), Measurement(float(math.sqrt(2.0) * d), 1, 1)))
        for i, d in enumerate(t)
    ]
    return Dataset("synthetic", tuple(qs))


# --- 1: theoretical survival table ----------------------------------------

# survival at z in {1, 2, 3, 5, 10} and the two-sided 95% bound, with
# tolerances of one unit in the last quoted digit
TABLE_EXPECTED = {
    "Normal (Gaussian)": (
        [(0.32, 0.01), (0.046, 0.001), (0.0027, 0.0001), (5.7e-7, 0.1e-7), (1.5e-23, 0.1e-23)],
        (1.96, 0.01),
    ),
    "Student-t (nu=10)": (
        [(0.34, 0.01), (0.073, 0.001), (0.013, 0.001), (5.4e-4, 0.1e-4), (1.6e-6, 0.1e-6)],
        (2.23, 0.01),
    ),
    "Exponential": (
        [(0.37, 0.01), (0.14, 0.01), (0.050, 0.001), (0.007, 0.001), (4.5e-5, 0.1e-5)],
        (3.0, 0.1),
    ),
    "Student-t (nu=2)": (
        [(0.42, 0.01), (0.18, 0.01), (0.095, 0.001), (0.038, 0.001), (0.010, 0.001)],
        (4.3, 0.1),
    ),
    "Cauchy": (
        [(0.50, 0.01), (0.30, 0.01), (0.20, 0.01), (0.13, 0.01), (0.063, 0.001)],
        (12.8, 0.1),
    ),
}


def test_criterion_01_theoretical_survival_table():
    t0 = time.perf_counter()
    rows = {r["distribution"]: r for r in theoretical_survival_rows()}
    elapsed = time.perf_counter() - t0
    bad = []
    for label, (expected, (z95, z95_tol)) in TABLE_EXPECTED.items():
        row = rows[label]
        for (value, tol), got in zip(expected, row["survival"]):
            if abs(got - value) > tol:
                bad.append(f"{label}: {got:.4g} vs {value:.4g}")
        if abs(row["z_0.95"] - z95) > z95_tol:
            bad.append(f"{label} z95: {row['z_0.95']:.4g} vs {z95}")
    ok = not bad and elapsed < 1.0
    report(1, "theoretical survival table", ok, "; ".join(bad) or f"{elapsed * 1e3:.0f} ms")


# --- 2: worked z example --------------------------------------------------

def test_criterion_02_worked_z_example():
    a = Measurement(80.0, 3.0, 2.0)
    b = Measurement(100.0, 5.0, 4.0)
    c = Measurement(126.0, 15.0, 12.0)
    z12, z23 = pair_z(a, b), pair_z(b, c)
    ok = z12 == 4.0 and z23 == 2.0
    report(2, "worked z example", ok, f"z12={z12}, z23={z23}")


# --- 3: linear vs quadrature ----------------------------------------------

def test_criterion_03_linear_vs_quadrature():
    d = pairwise_t_dataset(2.75, 1.05, 8000, seed=101)
    zq = np.array([p.z for p in dataset_pairs(d, mode="quadrature")])
    zl = np.array([p.z for p in dataset_pairs(d, mode="linear")])
    elementwise = np.max(np.abs(zl - zq / math.sqrt(2.0)))
    fq = fit_report(d, FitConfig(replicas=200, seed=101, mode="quadrature")).fit
    fl = fit_report(d, FitConfig(replicas=200, seed=101, mode="linear")).fit
    combined = math.hypot(fq.u_nu, fl.u_nu)
    ok = elementwise < 1e-12 and abs(fq.nu - fl.nu) <= combined
    report(
        3,
        "linear vs quadrature",
        ok,
        f"max |z_l - z_q/sqrt2| = {elementwise:.1e}, "
        f"nu {fq.nu:.3f} vs {fl.nu:.3f} (combined u {combined:.3f})",
    )


# --- 4: Cauchy pair law ---------------------------------------------------

def test_criterion_04_cauchy_pair_law():
    t0 = time.perf_counter()
    n_pairs = 1_000_000
    e = Sampler(7).sample(DistSpec("cauchy"), 2 * n_pairs).reshape(n_pairs, 2)
    z = np.abs(e[:, 0] - e[:, 1]) / math.sqrt(2.0)
    h = build_histogram((z, np.ones(n_pairs)))
    p = h.contents * h.widths
    h.bin_uncertainty = np.sqrt(np.maximum(p * (1 - p), 0.0) / n_pairs) / h.widths
    fit = fit_student_t(h)
    elapsed = time.perf_counter() - t0
    ok = abs(fit.nu - 1.0) <= 0.1 and abs(fit.sigma - math.sqrt(2.0)) <= 0.05 and elapsed < 120
    report(
        4,
        "Cauchy pair law",
        ok,
        f"nu={fit.nu:.3f} (target 1+-0.1), sigma={fit.sigma:.4f} "
        f"(target {math.sqrt(2.0):.4f}+-0.05), {elapsed:.1f} s",
    )


# --- 5: parameter recovery ------------------------------------------------

RECOVERY_TARGETS = [(1.64, 1.62), (2.75, 1.05), (3.30, 1.18)]


def test_criterion_05_parameter_recovery():
    t0 = time.perf_counter()
    details = []
    worst = 0.0
    for nu, sigma in RECOVERY_TARGETS:
        pulls = []
        for k in range(20):
            seed = 1000 + k
            d = pairwise_t_dataset(nu, sigma, 10_000, seed)
            fit = fit_report(d, FitConfig(replicas=300, seed=seed)).fit
            pulls.append(((fit.nu - nu) / fit.u_nu, (fit.sigma - sigma) / fit.u_sigma))
        arr = np.abs(np.array(pulls))
        worst = max(worst, float(arr.max()))
        details.append(f"({nu},{sigma}): max pull {arr.max():.2f}")
    elapsed = time.perf_counter() - t0
    ok = worst <= 3.0 and elapsed < 600
    report(5, "parameter recovery", ok, "; ".join(details) + f"; {elapsed:.0f} s")


# --- 6: bootstrap sanity --------------------------------------------------

def test_criterion_06_bootstrap_sanity():
    t0 = time.perf_counter()
    single = simulate_dataset(SimSpec(1, 5, DistSpec("normal"), seed=8))
    res1 = bootstrap(single, n_replicas=100, seed=1)
    all_zero = bool(np.all(res1.per_bin_sigma == 0.0))

    small = bootstrap(simulate_dataset(SimSpec(250, 4, DistSpec("normal"), seed=11)), n_replicas=400, seed=3)
    large = bootstrap(simulate_dataset(SimSpec(1000, 4, DistSpec("normal"), seed=11)), n_replicas=400, seed=3)
    mask = (small.per_bin_sigma > 0) & (large.per_bin_sigma > 0)
    ratio = float(np.mean(large.per_bin_sigma[mask] / small.per_bin_sigma[mask]))
    elapsed = time.perf_counter() - t0
    ok = all_zero and abs(ratio - 0.5) <= 0.125 and elapsed < 120
    report(
        6,
        "bootstrap sanity",
        ok,
        f"single-quantity zeros: {all_zero}; 4x-quantity sigma ratio {ratio:.3f} "
        f"(target 0.5+-25%); {elapsed:.0f} s",
    )


# --- 7: deconvolution round trip ------------------------------------------

def test_criterion_07_deconvolution_round_trip():
    t0 = time.perf_counter()
    d = simulate_dataset(SimSpec(8000, 5, DistSpec("student_t", nu=2.4, sigma=0.9), seed=21))
    rep = fit_report(d, FitConfig(replicas=200, seed=5))
    res = deconvolve(rep.histogram, [len(q) for q in d.quantities], seed=9)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(res.nu_x - 2.4) <= 0.3
        and abs(res.sigma_x - 0.9) <= 0.1
        and res.nu_x < rep.fit.nu
        and elapsed < 600
    )
    report(
        7,
        "deconvolution round trip",
        ok,
        f"nu_x={res.nu_x:.3f} (target 2.4+-0.3), sigma_x={res.sigma_x:.3f} "
        f"(target 0.9+-0.1), pair nu={rep.fit.nu:.3f}; {elapsed:.0f} s",
    )


# --- 8: genesis model -----------------------------------------------------

@pytest.mark.parametrize(
    "n_m,alpha,chi2_max",
    [(2, 1.0, None), (3, 1.0, 2.0), (4, 0.5, None)],
    ids=["nm2_a1", "nm3_a1", "nm4_a05"],
)
def test_criterion_08_genesis_effective_nu(n_m, alpha, chi2_max):
    target = n_m - 1 + alpha
    nu = genesis_tail_exponent(GenesisSpec(n_m, alpha, chi2_max=chi2_max))
    ok = abs(nu - target) <= 0.15 * target
    report(
        8,
        f"genesis effective nu (N_m={n_m}, alpha={alpha})",
        ok,
        f"fitted nu={nu:.3f}, target {target}+-15%",
    )


def test_criterion_08_genesis_prior_limits():
    grid = np.linspace(0.0, 20.0, 41)
    delta_err = max(
        abs(mixture_density(PointMassPrior(1.0), x) - math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi))
        for x in grid
    )
    prior = ScaledInvChi2Prior(3.0, 1.2)
    invchi2_err = max(abs(mixture_density(prior, x) - student_t_pdf(x, 3.0, 1.2)) for x in grid)
    ok = delta_err <= 1e-8 and invchi2_err <= 1e-6
    report(
        8,
        "genesis prior limits",
        ok,
        f"delta-prior max err {delta_err:.1e} (<=1e-8), "
        f"scaled-inv-chi2 max err {invchi2_err:.1e} (<=1e-6)",
    )


# --- 9: bounds effect -----------------------------------------------------

def fraction_fixture(rel_lo, rel_hi, n_q=4000, seed=1):
    """Fraction-valued quantities on [0, 1] with log-uniform relative uncertainties."""
    s = Sampler(seed)
    rng = s.generator
    law = DistSpec("student_t", nu=2.8, sigma=1.0)
    qs = []
    for i in range(n_q):
        true = rng.uniform(0.1, 0.9)
        rel = math.exp(rng.uniform(math.log(rel_lo), math.log(rel_hi)))
        u = rel * true
        x = np.clip(true + u * s.sample(law, 5), 1e-9, 1 - 1e-9)
        qs.append(
            Quantity(f"q{i}", tuple(Measurement(float(v), u, u) for v in x), 0.0, 1.0)
        )
    return Dataset("fractions", tuple(qs))


def test_criterion_09_bounds_effect():
    t0 = time.perf_counter()
    d = fraction_fixture(0.01, 0.1)
    dn, ds = bounds_effect(d, error_law=DistSpec("student_t", nu=2.8, sigma=1.0), seed=3, replicas=150)
    elapsed = time.perf_counter() - t0
    magnitude_ok = 0.05 <= abs(dn) <= 0.2
    sign_ok = dn < 0
    ok = magnitude_ok and sign_ok and elapsed < 300
    report(
        9,
        "bounds effect",
        ok,
        f"delta_nu={dn:+.3f} (expected negative, |delta| in [0.05, 0.2]), "
        f"delta_sigma={ds:+.3f}; {elapsed:.0f} s",
    )


# --- 10: invariant suite --------------------------------------------------

def test_criterion_10_invariants():
    t0 = time.perf_counter()
    failures = []

    # scale and translation invariance of z, h, chi2, I2
    def make(scale=1.0, shift=0.0):
        vals, us = [3.1, 4.0, 4.4, 5.2, 2.8], [0.4, 0.7, 0.3, 1.1, 0.5]
        return Quantity(
            "q",
            tuple(Measurement(v * scale + shift, u * scale, u * scale) for v, u in zip(vals, us)),
        )

    base = make()
    for label, other in (("scaling", make(scale=7.3)), ("translation", make(shift=55.0))):
        zb = np.array([p.z for p in enumerate_pairs(base)])
        zo = np.array([p.z for p in enumerate_pairs(other)])
        hb = np.array([h for _, h in h_scores(base)])
        ho = np.array([h for _, h in h_scores(other)])
        cb, co = consistency_chi2(base), consistency_chi2(other)
        if not (
            np.allclose(zb, zo, rtol=1e-9)
            and np.allclose(hb, ho, rtol=1e-9)
            and math.isclose(cb[0], co[0], rel_tol=1e-9)
            and math.isclose(cb[2], co[2], rel_tol=1e-9, abs_tol=1e-12)
        ):
            failures.append(f"{label} changes z/h/chi2")

    # histogram probability conservation
    z = np.abs(Sampler(12).sample(DistSpec("cauchy"), 50_000))
    h = build_histogram((z, np.ones_like(z)))
    total = float(np.sum(h.contents * h.widths)) + h.overflow_probability
    if abs(total - 1.0) > 1e-9:
        failures.append(f"histogram probability {total}")

    # pdf normalization and log-log tail slope
    from scipy import integrate

    for nu in (1.0, 2.0, 3.5):
        val, _ = integrate.quad(lambda x: student_t_pdf(x, nu, 1.0), -np.inf, np.inf, limit=400)
        if abs(val - 1.0) > 1e-6:
            failures.append(f"pdf normalization nu={nu}: {val}")
        slope = math.log(student_t_pdf(1e5, nu, 1.0) / student_t_pdf(1e3, nu, 1.0)) / math.log(1e2)
        if abs(slope + (nu + 1.0)) > 0.01 * (nu + 1.0):
            failures.append(f"tail slope nu={nu}: {slope}")

    # determinism under fixed seeds
    d = simulate_dataset(SimSpec(200, 4, DistSpec("student_t", nu=2.0), seed=3))
    ra = fit_report(d, FitConfig(replicas=100, seed=4))
    rb = fit_report(d, FitConfig(replicas=100, seed=4))
    if not (
        ra.fit.nu == rb.fit.nu
        and ra.fit.sigma == rb.fit.sigma
        and np.array_equal(ra.histogram.bin_uncertainty, rb.histogram.bin_uncertainty)
    ):
        failures.append("seeded pipeline not deterministic")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120
    report(10, "invariant suite", ok, "; ".join(failures) or f"{elapsed:.0f} s")
