"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts the same condition.
"""
import json
import math
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import OPERATING_CONFIG, OPERATING_DETECTOR
from mdiqrng.cli import main
from mdiqrng.decoy import (
    DARK_COEFF_HALF,
    ExperimentConfig,
    click_probability_bounds,
    expectation_bounds,
    single_photon_bounds_decoy,
    single_photon_bounds_nondecoy,
)
from mdiqrng.entropy import certify, nynz_sq_lower
from mdiqrng.extract import ExtractorConfig, output_length, pack_bits, toeplitz_extract
from mdiqrng.qmath import PROBES, PovmParams, ProbeId, bloch_vector, params_fidelity, params_to_povm, povm_fidelity
from mdiqrng.sim import DetectorModel, expected_counts
from mdiqrng.sweeps import SweepOptions, stability, sweep_loss, sweep_mu
from mdiqrng.tomo import ParamBounds, SimModel, fidelity_search, min_fidelity, region_is_empty, simulated_povm

pytestmark = pytest.mark.slow

HEADLINE_H = 7.37e-2
CLOCK_HZ = 312.5e6
SHARE = {ProbeId.Z0: 0.0, ProbeId.Z1: 1.0, ProbeId.Xplus: 0.5, ProbeId.Yplus: 0.5}


def test_criterion_01_headline(acceptance_line):
    t0 = time.perf_counter()
    report = certify(expected_counts(OPERATING_CONFIG, OPERATING_DETECTOR), OPERATING_CONFIG, OPERATING_DETECTOR.p_d)
    elapsed = time.perf_counter() - t0
    rate_at_headline = HEADLINE_H * OPERATING_CONFIG.clock_hz
    ok = (
        0.049 <= report.h_min <= 0.111
        and report.bit_rate == report.h_min * CLOCK_HZ
        and abs(rate_at_headline - 23.0e6) <= 0.1e6
        and elapsed < 5.0
    )
    acceptance_line(
        1, ok,
        f"h_min={report.h_min:.5f} in [0.049, 0.111], rate={report.bit_rate / 1e6:.2f} Mbps, "
        f"rate at 7.37e-2 = {rate_at_headline / 1e6:.3f} Mbps, {elapsed:.2f} s",
    )
    assert ok


def test_criterion_02_loss_ordering(acceptance_line):
    t0 = time.perf_counter()
    rows = sweep_loss(range(16), OPERATING_DETECTOR, OPERATING_CONFIG, SweepOptions(), eta0=OPERATING_DETECTOR.eta)
    elapsed = time.perf_counter() - t0
    bad = [r["loss_db"] for r in rows if r["h_min_decoy"] < r["h_min_nondecoy"]]
    last_decoy = max((r["loss_db"] for r in rows if r["h_min_decoy"] > 0), default=-1)
    last_nondecoy = max((r["loss_db"] for r in rows if r["h_min_nondecoy"] > 0), default=-1)
    ok = not bad and last_nondecoy < last_decoy and elapsed < 300
    acceptance_line(
        2, ok,
        f"decoy<non-decoy at {bad or 'no'} losses; last nonzero loss decoy={last_decoy} dB, "
        f"non-decoy={last_nondecoy} dB; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_03_fidelity_ordering(acceptance_line):
    t0 = time.perf_counter()
    opts = SweepOptions(mode="fidelity")
    loss_rows = sweep_loss(range(11), replace(OPERATING_DETECTOR, eps_afterpulse=0.01), OPERATING_CONFIG, opts,
                           eta0=OPERATING_DETECTOR.eta)
    mus = [round(0.05 * k, 2) for k in range(1, 21)]
    mu_rows = sweep_mu(mus, replace(OPERATING_DETECTOR, eps_afterpulse=0.03), OPERATING_CONFIG, 2.6, opts,
                       eta0=OPERATING_DETECTOR.eta)
    elapsed = time.perf_counter() - t0
    bad_loss = [r["loss_db"] for r in loss_rows if r["fidelity_decoy"] < r["fidelity_nondecoy"]]
    bad_mu = [
        f"mu={r['mu']} ({r['fidelity_decoy']:.5f} < {r['fidelity_nondecoy']:.5f})"
        for r in mu_rows if r["fidelity_decoy"] < r["fidelity_nondecoy"]
    ]
    ok = not bad_loss and not bad_mu and elapsed < 600
    acceptance_line(
        3, ok,
        f"loss sweep violations: {bad_loss or 'none'}; mu sweep violations: {bad_mu or 'none'}; {elapsed:.1f} s",
    )
    assert ok


def _sandwich_violations(rng, n_configs, dark_coefficient):
    violations = 0
    for _ in range(n_configs):
        mu = rng.uniform(0.05, 1.0)
        nu = rng.uniform(0.02, 0.95) * mu
        eta = rng.uniform(0.02, 1.0)
        p_d = 10 ** rng.uniform(-7, -3)
        cfg = replace(ExperimentConfig(), mu=mu, nu=nu)
        d = DetectorModel(eta=eta, p_d=p_d)
        pb = click_probability_bounds(expected_counts(cfg, d), cfg)
        dec = single_photon_bounds_decoy(pb, cfg, p_d, dark_coefficient)
        nd = single_photon_bounds_nondecoy(pb, mu, p_d)
        for j in PROBES:
            truth = 1.0 - (1.0 - p_d) * (1.0 - eta * SHARE[j])
            for iv in (dec[j], nd[j]):
                if not iv.lower <= truth <= iv.upper:
                    violations += 1
    return violations


def test_criterion_04_sandwich(acceptance_line):
    violations = _sandwich_violations(np.random.default_rng(4), 50, 1.0)
    half = _sandwich_violations(np.random.default_rng(4), 50, DARK_COEFF_HALF)
    ok = violations == 0
    acceptance_line(
        4, ok,
        f"{violations} violations over 50 configs x 4 probes x 2 estimators "
        f"(for reference, a 1/2 dark-count coefficient gives {half})",
    )
    assert ok


def test_criterion_05_chernoff_coverage(acceptance_line):
    t0 = time.perf_counter()
    trials, p, eps = 10**5, 0.01, 0.05
    draws = np.random.default_rng(5).binomial(trials, p, size=10**4)
    mean = trials * p
    misses = 0
    for m in draws:
        e = expectation_bounds(float(m), eps, trials)
        misses += not e.lower <= mean <= e.upper
    rate = misses / draws.size
    elapsed = time.perf_counter() - t0
    ok = rate <= 0.06 and elapsed < 30
    acceptance_line(5, ok, f"miss rate {rate:.4f} <= 0.06 at eps=0.05 over 1e4 draws; {elapsed:.1f} s")
    assert ok


REFERENCE = simulated_povm(SimModel(0.45, 0.55))


def _random_box(rng):
    while True:
        lo = np.concatenate([[rng.uniform(0.05, 0.5)], rng.uniform(-1.0, 0.6, 3)])
        width = np.concatenate([[rng.uniform(0.0, 0.2)], rng.uniform(0.0, 0.8, 3)])
        hi = np.minimum(lo + width, [0.95, 1.0, 1.0, 1.0])
        b = ParamBounds.from_arrays(lo, hi)
        if not region_is_empty(b):
            return b


def _feasible_samples(b, rng, k):
    out = []
    while sum(len(o) for o in out) < k:
        pts = b.lower + (b.upper - b.lower) * rng.random((4 * k, 4))
        radius = np.minimum(1.0, (1.0 - pts[:, 0]) / pts[:, 0])
        out.append(pts[np.linalg.norm(pts[:, 1:], axis=1) <= radius])
    return np.concatenate(out)[:k]


def _grid_minimum(b, points=101):
    s0, s1 = bloch_vector(REFERENCE.lambda0), bloch_vector(REFERENCE.lambda1)
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(b.lower, b.upper)]
    nx, ny, nz = np.meshgrid(*axes[1:], indexing="ij")
    n = np.stack([nx.ravel(), ny.ravel(), nz.ravel()], axis=-1)
    norms = np.linalg.norm(n, axis=1)
    best = math.inf
    for a1 in axes[0]:
        ok = norms <= min(1.0, (1.0 - a1) / a1)
        if ok.any():
            best = min(best, float(params_fidelity(np.full(ok.sum(), a1), n[ok], s0, s1).min()))
    return best


FIXED_BOXES = [
    ParamBounds(0.256, 0.351, -0.29, 0.434, -0.29, 0.434, -0.959, -0.917),
    ParamBounds(0.238, 0.383, -0.63, 0.706, -0.63, 0.706, -1.0, -0.906),
    ParamBounds(0.10, 0.30, -0.5, 0.5, 0.0, 0.6, -0.9, -0.3),
]


def test_criterion_06_fidelity_certificate(acceptance_line):
    rng = np.random.default_rng(6)
    below = 0
    checked = 0
    for _ in range(10):
        b = _random_box(rng)
        value = min_fidelity(b, REFERENCE)
        for x in _feasible_samples(b, rng, 10**4):
            f = povm_fidelity(params_to_povm(PovmParams(x[0], tuple(x[1:]))), REFERENCE)
            checked += 1
            below += value > f
    gaps = []
    for b in FIXED_BOXES:
        gaps.append(abs(fidelity_search(b, REFERENCE).value - _grid_minimum(b)))
    ok = below == 0 and checked == 10**5 and max(gaps) <= 1e-3
    acceptance_line(
        6, ok,
        f"{below} of {checked} sampled fidelities below the certificate; "
        f"max gap to 101^4 grid = {max(gaps):.2e} (<= 1e-3)",
    )
    assert ok


def test_criterion_07_nynz_closed_form(acceptance_line):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        ny = np.sort(rng.uniform(-1, 1, 2))
        nz = np.sort(rng.uniform(-1, 1, 2))
        b = ParamBounds(0.2, 0.3, -0.1, 0.1, ny[0], ny[1], nz[0], nz[1])
        gy, gz = np.meshgrid(np.linspace(*ny, 1000), np.linspace(*nz, 1000), indexing="ij")
        grid = min(1.0, float((gy * gy + gz * gz).min()))
        worst = max(worst, abs(nynz_sq_lower(b) - grid))
    ok = worst <= 1e-6
    acceptance_line(7, ok, f"max |closed form - 1e6-point grid| = {worst:.2e} over 100 boxes (<= 1e-6)")
    assert ok


def test_criterion_08_extractor(acceptance_line):
    rng = np.random.default_rng(8)
    mismatches = 0
    cases = 0
    while cases < 1000:
        n = int(rng.integers(68, 4097))
        h = float(rng.uniform(67.5 / n, 1.0))
        if output_length(n, h) < 1:
            continue
        seed = rng.integers(0, 2, ExtractorConfig.seed_length(n, h), dtype=np.uint8)
        raw = rng.integers(0, 2, n, dtype=np.uint8)
        cfg = ExtractorConfig(n, h, seed)
        m = cfg.m
        idx = np.arange(n)[None, :] - np.arange(m)[:, None] + m - 1
        dense = (seed[idx].astype(np.float32) @ raw.astype(np.float32)).astype(np.int64) % 2
        mismatches += not np.array_equal(toeplitz_extract(raw, cfg), dense)
        cases += 1
    scale = output_length(int(5.625e10), HEADLINE_H)
    ok = mismatches == 0 and 5.625e10 * HEADLINE_H > 4e9 and scale > 4 * 10**9
    acceptance_line(
        8, ok,
        f"{mismatches} mismatches against the dense GF(2) product over {cases} cases; "
        f"5.625e10 raw bits at 7.37e-2 -> {scale / 1e9:.3f} Gbit (> 4)",
    )
    assert ok


def test_criterion_09_stability(acceptance_line):
    t0 = time.perf_counter()
    rows = stability(180, 2026, OPERATING_DETECTOR, OPERATING_CONFIG)
    elapsed = time.perf_counter() - t0
    h = np.array([r["h_min"] for r in rows])
    med = statistics.median(h)
    spread = float(np.max(np.abs(h - med) / med)) if med > 0 else math.inf
    ok = len(h) == 180 and bool(np.all(h > 0)) and spread <= 0.25 and elapsed < 600
    acceptance_line(
        9, ok,
        f"{int((h > 0).sum())}/180 positive, median {med:.5f}, max deviation {100 * spread:.1f}% (<= 25%); "
        f"{elapsed:.1f} s",
    )
    assert ok


COARSE = {
    "search": {"mu_step": 0.25, "nu_step": 0.25, "fidelity_step": 0.25, "search_grid_points": 3},
    "optimizer": {"grid_points": 5, "refine_starts": 1},
    "sweep": {"loss_start": 0, "loss_stop": 2, "loss_step": 1, "mu_start": 0.25, "mu_stop": 0.5, "mu_step": 0.25},
    "stability": {"seconds": 3, "rounds_per_second": 1e8},
    "seed": 11,
}


def test_criterion_10_cli_determinism(acceptance_line, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(COARSE))
    counts = tmp_path / "counts.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(counts)]) == 0
    raw = tmp_path / "raw.bin"
    raw.write_bytes(pack_bits((np.random.default_rng(10).random(3 * 8192) < 0.53).astype(np.uint8)))

    def commands(out):
        return {
            "simulate": ["simulate", "--out", f"{out}/sim.csv"],
            "simulate-sampled": ["simulate", "--sampled", "--out", f"{out}/sampled.csv"],
            "certify": ["certify", str(counts), "--out", f"{out}/cert.json"],
            "optimize": ["optimize", "--out", f"{out}/opt.json", "--trace", f"{out}/trace.csv"],
            "sweep-loss": ["sweep-loss", "--out", f"{out}/loss.csv"],
            "sweep-mu": ["sweep-mu", "--out", f"{out}/mu.csv"],
            "stability": ["stability", "--out", f"{out}/stab.csv"],
            "extract": ["extract", "--raw", str(raw), "--h-min", "0.9", "--seed", "3", "--block-bits", "8192",
                        "--out", f"{out}/bits.bin", "--report", f"{out}/extract.json"],
        }

    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        out.mkdir()
        codes = {name: main(args + ["--config", str(cfg)]) for name, args in commands(out).items()}
        runs.append((codes, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
    (codes_a, files_a), (codes_b, files_b) = runs
    differing = sorted(name for name in files_a if files_a[name] != files_b.get(name))
    ok = codes_a == codes_b and all(c == 0 for c in codes_a.values()) and not differing and len(files_a) == 10
    acceptance_line(
        10, ok,
        f"{len(codes_a)} commands run twice, {len(files_a)} output files, "
        f"differing: {differing or 'none'}, exit codes {sorted(set(codes_a.values()))}",
    )
    assert ok
