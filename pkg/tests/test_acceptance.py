"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in a section
at the end of the pytest run.
"""

import math
import time
from dataclasses import dataclass, replace

import numpy as np
import pytest

from cognos import backbone as bb
from cognos import diagnostics, gwnr, kalman, metrics, pipeline
from cognos.gwnr import GwnrConfig, GwnrLearnables

from helpers import (
    DATA,
    brute_point_adjust,
    brute_prf,
    central_diff,
    fixture_config,
    fixture_data,
    load_json,
    map_random_walk,
    rel_err,
)

pytestmark = pytest.mark.acceptance

SEEDS = range(10)
LAMBDAS = (0.1, 0.3, 0.5, 0.7, 1.0, 3.0, 5.0, 10.0)


# --- criterion 1 --------------------------------------------------------------


def test_smoother_matches_map_oracle(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        T = int(rng.integers(2, 501))
        lam = (0.1, 1.0, 10.0)[i % 3]
        r_m = float(np.exp(rng.uniform(-3, 3)))
        obs = rng.normal(0, math.sqrt(r_m), T) + np.cumsum(rng.normal(0, math.sqrt(lam * r_m), T))
        got = kalman.smooth_channel(obs, lam * r_m, r_m)
        worst = max(worst, rel_err(got, map_random_walk(obs, lam * r_m, r_m)))
    elapsed = time.perf_counter() - t0
    ok = verdict(1, "smoother = MAP oracle", worst < 1e-8 and elapsed < 5.0, f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert ok


# --- criterion 2 --------------------------------------------------------------


def _random_params(rng, kind, L, D, H):
    n = L * D
    return bb.BackboneParams(kind, rng.normal(0, 0.5, (n, H)), rng.normal(0, 0.3, H), rng.normal(0, 0.5, (H, n)), rng.normal(0, 0.3, n))


def _gradient_instance(rng):
    """Worst relative error over every analytic gradient on one random small instance."""
    B, L, D, H = (int(rng.integers(1, 5)), int(rng.integers(3, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 6)))
    kind = ("linear", "mlp")[int(rng.integers(2))]
    lags = tuple(sorted(rng.choice(np.arange(1, L), size=min(3, L - 1), replace=False).tolist()))
    errs = {}

    r = rng.normal(size=(B, L, D))
    errs["mse"] = rel_err(gwnr.mse_loss(r)[1], central_diff(lambda v: gwnr.mse_loss(v)[0], r))

    n, m = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    R, eps, w = rng.normal(size=n), rng.normal(size=m), float(rng.uniform(-0.5, 0.5))
    _, g_R, g_w = gwnr.mmd_loss(R, math.exp(w) * eps, math.exp(w))
    errs["mmd_R"] = rel_err(g_R, central_diff(lambda v: gwnr.mmd_loss(v, math.exp(w) * eps, math.exp(w))[0], R))
    errs["mmd_omega"] = rel_err([g_w], central_diff(lambda v: gwnr.mmd_loss(R, math.exp(v[0]) * eps, math.exp(v[0]))[0], [w]))

    errs["acf"] = rel_err(gwnr.acf_loss(r, lags)[1], central_diff(lambda v: gwnr.acf_loss(v, lags)[0], r))

    losses, v = rng.uniform(0.1, 3.0, 3), rng.normal(0, 0.5, 3)
    _, g_l, g_v = gwnr.awl_combine(losses, v)
    errs["awl_losses"] = rel_err(g_l, central_diff(lambda x: gwnr.awl_combine(x, v)[0], losses))
    errs["awl_logvars"] = rel_err(g_v, central_diff(lambda x: gwnr.awl_combine(losses, x)[0], v))

    params = _random_params(rng, kind, L, D, H)
    x = rng.normal(size=(B, L, D))
    learn = GwnrLearnables(float(rng.uniform(-0.3, 0.3)), rng.normal(0, 0.3, 3))
    cfg = GwnrConfig(lags=lags)
    seed = int(rng.integers(1 << 30))

    def total(p, omega=learn.omega, logvars=learn.awl_logvars):
        return gwnr.total_loss(bb.forward(p, x)[1], GwnrLearnables(omega, logvars), cfg, np.random.default_rng(seed))

    lb = total(params)
    grads = bb.backward(params, x, lb.grad_r)
    for name in bb.PARAM_NAMES:

        def f(val, name=name):
            q = params.copy()
            setattr(q, name, val)
            return total(q).total

        errs[f"total_{name}"] = rel_err(grads[name], central_diff(f, getattr(params, name)))
    errs["total_omega"] = rel_err([lb.grad_omega], central_diff(lambda o: total(params, o[0]).total, [learn.omega]))
    errs["total_logvars"] = rel_err(lb.grad_logvars, central_diff(lambda lv: total(params, learn.omega, lv).total, learn.awl_logvars))
    return errs


def test_gradient_suite(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = {}
    for _ in range(50):
        for k, e in _gradient_instance(rng).items():
            worst[k] = max(worst.get(k, 0.0), e)
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = verdict(2, "gradient suite", max(worst.values()) < 1e-4 and elapsed < 30.0, f"max rel err {worst[top]:.2e} ({top}), {elapsed:.1f}s")
    assert ok, worst


# --- criterion 3 --------------------------------------------------------------


def test_mmd_acf_identities(verdict):
    R = np.random.default_rng(3).normal(size=64)
    m = abs(gwnr.mmd_loss(R, R.copy(), 0.9)[0])
    a = abs(gwnr.acf_coeff([1, -1, 1, -1], 1)[0] + 0.75)
    b = abs(gwnr.acf_coeff([1, 2, 3, 4], 1)[0] - 0.25)
    rho, g = gwnr.acf_coeff(np.full(10, 4.2), 3)
    ok = verdict(3, "MMD/ACF identities", m < 1e-12 and a < 1e-12 and b < 1e-12 and rho == 0.0 and not g.any(), f"|mmd(R,R)|={m:.1e}, acf errs {a:.1e}/{b:.1e}")
    assert ok


# --- criteria 4, 5, 6, 9: the synthetic fixture --------------------------------


@dataclass
class SeedRun:
    energy_gwnr: float
    energy_mse: float
    var_gwnr: float
    var_mse: float
    af: dict
    normal_var_smoothed: float
    normal_var_raw_vanilla: float
    normal_var_raw_same: float
    sweep: list


@pytest.fixture(scope="module")
def fixture_runs():
    runs = []
    train_seconds = 0.0
    for seed in SEEDS:
        t0 = time.perf_counter()
        train, test = fixture_data(seed)
        cfg = fixture_config(seed)
        g = pipeline.fit_stage(replace(cfg, mode="gwnr"), train)
        v = pipeline.fit_stage(replace(cfg, mode="vanilla_mse"), train)
        train_seconds += time.perf_counter() - t0

        res_g = pipeline.residuals_for(g.model, test)
        res_v = pipeline.residuals_for(v.model, test)
        out = {}
        for mode, stage, res in (("gwnr", g, res_g), ("gwnr_no_smooth", g, res_g), ("vanilla_mse", v, res_v), ("mse_plus_smooth", v, res_v)):
            out[mode] = pipeline.score_stage(stage, test, mode, cfg.lam, cfg.ratio, residuals=res)
        normal = test.labels == 0
        sweep = [pipeline.score_stage(g, test, "gwnr", lam, cfg.ratio, residuals=res_g).report.average.f for lam in LAMBDAS]
        runs.append(
            SeedRun(
                energy_gwnr=diagnostics.mean_acf_energy(g.holdout_after),
                energy_mse=diagnostics.mean_acf_energy(v.holdout_after),
                var_gwnr=float(g.holdout_after.var()),
                var_mse=float(v.holdout_after.var()),
                af={m: r.report.average.f for m, r in out.items()},
                normal_var_smoothed=float(out["gwnr"].scores.aggregated[normal].var()),
                normal_var_raw_vanilla=float(out["vanilla_mse"].scores.aggregated[normal].var()),
                normal_var_raw_same=float(out["gwnr_no_smooth"].scores.aggregated[normal].var()),
                sweep=sweep,
            )
        )
    return runs, train_seconds


def test_whiteness_improvement(fixture_runs, verdict):
    runs, seconds = fixture_runs
    whiter = sum(r.energy_gwnr < r.energy_mse for r in runs)
    ratios = [r.var_gwnr / r.var_mse for r in runs]
    finite = all(math.isfinite(r.var_gwnr) for r in runs)
    detail = f"whiter in {whiter}/10 seeds, max variance ratio {max(ratios):.2f}, data+training {seconds:.0f}s"
    ok = verdict(4, "whiteness improvement", whiter >= 8 and finite and max(ratios) <= 2.0 and seconds < 120.0, detail)
    assert ok


def test_end_to_end_uplift(fixture_runs, verdict):
    runs, _ = fixture_runs
    uplift = sum(r.af["gwnr"] >= r.af["vanilla_mse"] for r in runs)
    calmer = sum(r.normal_var_smoothed < r.normal_var_raw_vanilla for r in runs)
    calmer_same = sum(r.normal_var_smoothed < r.normal_var_raw_same for r in runs)
    detail = f"AF uplift {uplift}/10, smoothed variance below raw {calmer}/10 (vs own raw {calmer_same}/10)"
    ok = verdict(5, "end-to-end uplift", uplift >= 8 and calmer == 10 and calmer_same == 10, detail)
    assert ok


def test_ablation_ordering(fixture_runs, verdict):
    runs, _ = fixture_runs
    mean = {m: float(np.mean([r.af[m] for r in runs])) for m in pipeline.MODES}
    others = [mean[m] for m in pipeline.MODES if m != "gwnr"]
    top = mean["gwnr"] > max(others)
    full = min(mean["gwnr_no_smooth"], mean["mse_plus_smooth"]) >= mean["vanilla_mse"]
    detail = ", ".join(f"{m} {v:.3f}" for m, v in mean.items()) + f"; middle >= vanilla: {full}"
    ok = verdict(6, "ablation ordering", top, detail)
    assert ok


def test_lambda_sweep(fixture_runs, verdict):
    runs, _ = fixture_runs
    sweep = np.array([r.sweep for r in runs])
    spread = float(np.ptp(sweep.mean(axis=0)))
    per_seed = float(np.ptp(sweep, axis=1).max())
    detail = f"seed-mean AF range {spread:.3f} over lambda {LAMBDAS[0]}..{LAMBDAS[-1]}, widest single seed {per_seed:.3f}"
    ok = verdict(9, "lambda sweep stability", spread < 0.15, detail)
    assert ok


# --- criterion 7 --------------------------------------------------------------


def test_metrics_oracles(verdict):
    rng = np.random.default_rng(7)
    exact = True
    for _ in range(1000):
        T = int(rng.integers(1, 100))
        gt = (rng.random(T) < rng.uniform(0, 0.4)).astype(int)
        pred = (rng.random(T) < rng.uniform(0, 0.4)).astype(int)
        adj = metrics.point_adjust(pred, metrics.labels_to_segments(gt))
        exact &= adj.tolist() == brute_point_adjust(pred.tolist(), gt.tolist())
        got = metrics.prf(adj, gt)
        exact &= (got.precision, got.recall, got.f) == brute_prf(adj.tolist(), gt.tolist())

    aff_err = 0.0
    for case in load_json(DATA / "affiliation_reference.json"):
        got = metrics.affiliation_prf([tuple(s) for s in case["pred"]], [tuple(s) for s in case["gt"]], case["T"])
        p_ref = 0.0 if case["precision"] is None else case["precision"]
        aff_err = max(aff_err, abs(got.precision - p_ref), abs(got.recall - case["recall"]))

    avg_err = 0.0
    for row in load_json(DATA / "full_results_tables.json"):
        avg = metrics.average_metrics(metrics.PRF(*row["adjusted"]), metrics.PRF(*row["affiliation"]))
        avg_err = max(avg_err, float(np.max(np.abs(np.array([avg.precision, avg.recall, avg.f]) - row["avg"]))))

    detail = f"brute force exact: {exact}, affiliation max err {aff_err:.1e} on 25 cases, AVG rows max err {avg_err:.4f} on 96 groups"
    ok = verdict(7, "metrics oracles", exact and aff_err < 1e-9 and avg_err <= 1e-3 + 1e-12, detail)
    assert ok


# --- criterion 8 --------------------------------------------------------------


def test_white_noise_band_at_100(verdict):
    prof = diagnostics.acf_profile(np.random.default_rng(8).normal(size=100))
    ok = verdict(8, "ACF band at N=100", round(prof.confidence_bound, 3) == 0.196, f"bound {prof.confidence_bound:.6f}")
    assert ok
