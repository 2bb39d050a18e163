"""End-to-end checks of the package's headline behaviors.

Each test prints one scoreboard line, ``ACCEPTANCE <k> <name>: PASS|FAIL``,
before asserting, so running this file with ``pytest -s`` shows the verdict
for every numbered check even when later ones fail. The heavy shared
computation (ten simulation seeds scored with all four embedding methods)
runs once in a module fixture.
"""

import importlib.util
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dynembed.cluster import assign, fit_gmm_bic, pool_spherical
from dynembed.embedders import (
    independent_ase,
    omnibus_embed,
    select_dimension,
    separate_embed,
    uase,
)
from dynembed.linalg import procrustes, truncated_svd
from dynembed.models import DsbmSpec, bundled_config_path, load_dsbm_config, sample_dsbm
from dynembed.mrdpg import latent_structure, model_from_dsbm, noise_free_embedding
from dynembed.netseries import ingest_edge_list
from dynembed.stability import (
    DEFAULT_GAP_THRESHOLD,
    clt_check,
    consistency_curve,
    eigenvalue_cov_gap,
    stability_report,
)

FOURBLOCK = load_dsbm_config(bundled_config_path("fourblock"))
LONGITUDINAL = ((3, 0), (3, 1))   # community 4 at both snapshots
CROSS = ((0, 1), (1, 1))          # the merged pair at the second snapshot
TWOBLOCK = [np.array([[0.35, 0.05], [0.05, 0.35]])] * 2


def verdict(num, name, ok):
    print(f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"acceptance check {num} ({name}) failed"


@pytest.fixture(scope="module")
def contrast():
    """Ten-seed stability scorecard for all four embedding methods."""
    counts = {"uase": 0, "omnibus": 0, "independent": 0, "separate": 0}
    uase_seconds = []
    merge_ratios = []
    thr = DEFAULT_GAP_THRESHOLD
    for seed in range(10):
        series = sample_dsbm(FOURBLOCK, seed=seed)
        mem = FOURBLOCK.memberships

        t0 = time.perf_counter()
        rep = stability_report(uase(series, 4, seed=seed), mem,
                               [LONGITUDINAL, CROSS], threshold=thr)
        uase_seconds.append(time.perf_counter() - t0)
        if rep.pairs[0].passed and rep.pairs[1].passed:
            counts["uase"] += 1

        rep = stability_report(omnibus_embed(series, 7, seed=seed), mem,
                               [LONGITUDINAL, CROSS], threshold=thr)
        merge_ratios.append(rep.pairs[1].gap_ratio)
        if (rep.pairs[0].passed and not rep.pairs[1].passed
                and rep.pairs[1].gap_ratio > 0.5):
            counts["omnibus"] += 1

        rep = stability_report(independent_ase(series, [4, 3], seed=seed), mem,
                               [LONGITUDINAL, CROSS], threshold=thr)
        if not rep.pairs[0].passed and rep.pairs[1].passed:
            counts["independent"] += 1

        rep = stability_report(
            separate_embed(series, 4, seed=seed, scheme="exponential",
                           forgetting=0.5),
            mem, [LONGITUDINAL, CROSS], threshold=thr)
        if not rep.pairs[0].passed and not rep.pairs[1].passed:
            counts["separate"] += 1
    return counts, uase_seconds, merge_ratios


def test_1_benchmark_stability(contrast):
    counts, uase_seconds, _ = contrast
    ok = counts["uase"] >= 9 and max(uase_seconds) < 10.0
    verdict(1, "benchmark stability (uase, both pairs)", ok)


def test_2_method_contrast(contrast):
    counts, _, merge_ratios = contrast
    ok = (counts["omnibus"] >= 9 and counts["independent"] >= 9
          and counts["separate"] >= 9 and min(merge_ratios) > 0.5)
    verdict(2, "method contrast (omnibus/independent/separate)", ok)


def test_3_exact_construction():
    model, _ = model_from_dsbm(FOURBLOCK)
    structure = latent_structure(model)
    ok = (structure.d == 4 and structure.dims == [4, 3]
          and structure.reconstruction_error() < 1e-9)
    verdict(3, "finite-model factorization ranks and reconstruction", ok)


def test_4_error_rate_decay():
    def make_two(n):
        return DsbmSpec(block_matrices=TWOBLOCK, n_nodes=n)

    curve = consistency_curve(make_two, [250, 500, 1000, 2000], 2,
                              reps=10, seed=0)
    ok = (curve.is_decreasing()
          and curve.medians[3] < 0.55 * curve.medians[1])
    verdict(4, "max-row error decays at the parametric rate", ok)


def test_5_residual_covariances():
    t0 = time.perf_counter()
    big = DsbmSpec(block_matrices=FOURBLOCK.block_matrices, n_nodes=2000)
    merged_a = clt_check(big, 4, 1, 0, reps=10, seed=0)
    merged_b = clt_check(big, 4, 1, 1, reps=10, seed=100)
    gap = eigenvalue_cov_gap(merged_a.cov_empirical, merged_b.cov_empirical)

    const = DsbmSpec(block_matrices=[np.array([[0.3]])] * 2, n_nodes=2000)
    report = clt_check(const, 1, 1, 0, reps=10, seed=0)
    # one-state closed form: (1 - p) / sqrt(T)
    closed_form = np.array([[0.7 / np.sqrt(2.0)]])
    elapsed = time.perf_counter() - t0

    ok = (gap < 0.15
          and report.cov_gap < 0.10
          and np.allclose(report.cov_theory, closed_form, rtol=1e-9)
          and elapsed < 120.0)
    verdict(5, "residual covariances (exchangeable pair and closed form)", ok)


def test_6_noise_free_exactness():
    small = DsbmSpec(block_matrices=FOURBLOCK.block_matrices, n_nodes=12)
    grams = [b[np.ix_(z, z)]
             for b, z in zip(small.block_matrices, small.memberships)]
    emb = uase(grams, 4)
    left, rights = noise_free_embedding(grams, 4)
    emp = np.vstack([emb.left] + emb.points)
    ref = np.vstack([left] + rights)
    fit = procrustes(emp, ref)
    residual = float(np.max(np.abs(emp @ fit.q - ref)))

    z2 = small.memberships[1]
    second = emb.points[1]
    merged_exact = np.array_equal(second[z2 == 0], second[z2 == 1])

    w = np.ones(12)
    w[1] = 2.0
    weighted = [np.outer(w, w) * g for g in grams]
    embw = uase(weighted, 4)
    alpha_ok = all(
        np.allclose(embw.points[t][1], 2.0 * embw.points[t][0], atol=1e-12)
        for t in range(2)
    )
    ok = residual < 1e-8 and merged_exact and alpha_ok
    verdict(6, "noise-free embedding exactness", ok)


def _load_test_module(stem):
    path = Path(__file__).parent / f"{stem}.py"
    spec = importlib.util.spec_from_file_location(f"acccheck_{stem}", path)
    mod = importlib.util.module_from_spec(spec)
    sys.modules[f"acccheck_{stem}"] = mod
    spec.loader.exec_module(mod)
    return mod


def test_7_property_suites():
    suites = [
        ("test_embedders", "test_property_isolated_node_maps_to_origin"),
        ("test_embedders", "test_property_permutation_equivariance"),
        ("test_cluster", "test_property_em_loglik_monotone"),
        ("test_linalg", "test_property_spherical_scale_invariance"),
        ("test_netseries", "test_property_ingest_order_independent"),
    ]
    ok = True
    for stem, name in suites:
        fn = getattr(_load_test_module(stem), name, None)
        if fn is None:
            ok = False
            continue
        settings = getattr(fn, "_hypothesis_internal_use_settings", None)
        ok = ok and settings is not None and settings.max_examples >= 100
    verdict(7, "five invariant suites at 100+ instances", ok)


def _contact_pipeline(path, seed=0):
    series = ingest_edge_list(
        path, window_seconds=3600.0,
        daily_start=8 * 3600.0, daily_end=18 * 3600.0,
    )
    scree = truncated_svd(series.unfold(),
                          min(50, series.n_nodes), seed=seed).s
    d, _ = select_dimension(scree)
    emb = uase(series, d, seed=seed)
    theta, _ = pool_spherical(emb)
    grid = list(range(20, 51, 5))
    best, _ = fit_gmm_bic(theta, grid, restarts=5, seed=seed)
    labels, _ = assign(best, theta)
    return {
        "T": series.n_snapshots,
        "n": series.n_nodes,
        "d": d,
        "g": best.n_components,
        "grid": grid,
        "labels": labels,
    }


@pytest.mark.skipif(
    "DYNEMBED_LYON_PATH" not in os.environ,
    reason="contact data must be fetched by the user; "
    "set DYNEMBED_LYON_PATH to the edge list file",
)
def test_8_contact_network_pipeline():
    path = os.environ["DYNEMBED_LYON_PATH"]
    t0 = time.perf_counter()
    first = _contact_pipeline(path, seed=0)
    again = _contact_pipeline(path, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (first["T"] == 20 and first["n"] == 242 and first["d"] == 10
          and first["g"] in first["grid"]
          and np.array_equal(first["labels"], again["labels"])
          and elapsed < 2 * 600.0)
    verdict(8, "school contact pipeline", ok)


def test_9_runtime_scaling_in_snapshots():
    def median_seconds(method, t_count):
        spec = DsbmSpec(block_matrices=[TWOBLOCK[0]] * t_count, n_nodes=400)
        runs = []
        for r in range(5):
            series = sample_dsbm(spec, seed=r)
            t0 = time.perf_counter()
            if method == "uase":
                uase(series, 4, seed=r)
            else:
                omnibus_embed(series, 4, seed=r)
            runs.append(time.perf_counter() - t0)
        return float(np.median(runs))

    uase_ratio = median_seconds("uase", 10) / median_seconds("uase", 5)
    omni_ratio = median_seconds("omnibus", 10) / median_seconds("omnibus", 5)
    ok = uase_ratio < 3.0 and omni_ratio > 3.0
    verdict(9, "snapshot-count scaling (unfolded linear, omnibus quadratic)", ok)
