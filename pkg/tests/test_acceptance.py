"""Acceptance criteria C1..C12; each test prints one PASS/FAIL line.

The preset sweeps are run once per session and shared between criteria.
"""
import time

import numpy as np
import pytest

from conftest import record_criterion
from oracles import vertex_enumeration
from wpmec import ipm
from wpmec.config import InstanceConfig, make_instance
from wpmec.dnn import TrainParams, dl_solve, generate_dataset, gradient_check, train
from wpmec.experiments import VIOLATION_TOL, check_rows, preset, run, timing_suite
from wpmec.ipm import solve
from wpmec.lp import build, to_slack_form
from wpmec.model import ChannelRealization, CollaborationStrategy, NetworkInstance
from wpmec.strategy import count_strategies, priority_iterative, priority_strategy

_RUNS = {}


def sweep(name):
    """Run a preset once and keep (table, seconds)."""
    if name not in _RUNS:
        t0 = time.perf_counter()
        table = run(preset(name))
        _RUNS[name] = (table, time.perf_counter() - t0)
    return _RUNS[name]


def means(table, method, x, **fixed):
    return table.series(method, x, **fixed)[1]


def test_c1_ipm_matches_vertex_enumeration():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    n, seed, worst, agree, feasible = 0, 1000, 0.0, 0, 0
    while n < 100:
        N, m = int(rng.integers(2, 4)), int(rng.integers(0, 2))
        inst = make_instance(InstanceConfig(n_devices=N), seed)
        seed += 1
        if inst.assumption_violations:
            continue
        n += 1
        lp = build(inst, priority_strategy(inst, m))
        best, _ = vertex_enumeration(lp.c, lp.A, lp.b)
        res = solve(lp)
        if best is None:
            agree += res.status == "infeasible"
            continue
        feasible += 1
        ref = -best * lp.layout.bit_scale
        err = abs(res.objective - ref) / abs(ref) if res.converged else np.inf
        worst = max(worst, err)
        agree += err <= 1e-6
    secs = time.perf_counter() - t0
    ok = agree == 100 and worst <= 1e-6 and secs <= 60
    record_criterion("C1", ok, f"{agree}/100 agree ({feasible} feasible), worst rel err {worst:.2e}, "
                               f"{secs:.1f} s")
    assert ok


def test_c2_every_allocation_validates():
    names = ["fig6_wscr_vs_distance", "fig7_wscr_vs_iteration", "fig8_runtime_vs_N", "fig9_wscr_vs_N",
             "fig10_wscr_vs_fhap", "fig11_wscr_vs_de", "fig12_mstar_vs_params"]
    checked, worst, bad = 0, 0.0, []
    for name in names:
        table, _ = sweep(name)
        for r in table.rows:
            if r["feasible"]:
                checked += 1
                worst = max(worst, r["worst_violation"])
                if r["worst_violation"] > VIOLATION_TOL:
                    bad.append((name, r["method"], r["seed"], r["worst_violation"]))
    ok = not bad and checked > 0
    record_criterion("C2", ok, f"{checked} feasible allocations over {len(names)} sweeps, "
                               f"worst scaled violation {worst:.2e}, {len(bad)} above 1e-8")
    assert ok, bad[:5]


def test_c3_harvest_rows_tight_at_nc_optimum():
    n, seed, worst = 0, 0, 0.0
    while n < 100:
        inst = make_instance(InstanceConfig(n_devices=int(2 + seed % 7)), 5000 + seed)
        seed += 1
        if inst.assumption_violations:
            continue
        s = CollaborationStrategy.non_collaborative(inst.N)
        lp = build(inst, s)
        res = solve(lp)
        if not res.converged:
            continue
        x = res.x1_lp
        Ax = lp.A @ x
        scale = np.abs(lp.A) @ np.abs(x)
        tags = list(lp.row_tags)
        for dev in range(inst.N):
            cap = tags.index(f"8idmax[{dev}]")
            # E_max must not bind for the property to apply
            assert (lp.b[cap] - Ax[cap]) > 1e-3 * max(abs(lp.b[cap]), scale[cap])
            i = tags.index(f"8idh[{dev}]")
            worst = max(worst, (lp.b[i] - Ax[i]) / scale[i])
        n += 1
    ok = worst <= 1e-6
    record_criterion("C3", ok, f"100 NC optima, worst relative slack of the harvest row {worst:.2e}")
    assert ok


def test_c4_lp_dimensions():
    rng = np.random.default_rng(7)
    fails = []
    for k in range(50):
        N = int(rng.integers(1, 31))
        m = int(rng.integers(0, N // 2 + 1))
        inst = make_instance(InstanceConfig(n_devices=N), k)
        lp = build(inst, priority_strategy(inst, m))
        nslack = to_slack_form(lp).A2.shape[1]
        if lp.A.shape != (4 * N + m + 1, 2 * N + 2) or nslack != 6 * N + m + 3:
            fails.append((N, m, lp.A.shape, nslack))
    ok = not fails
    record_criterion("C4", ok, f"50 random (N, m): {len(fails)} shape mismatches")
    assert ok, fails


def test_c5_strategy_counts():
    got = [count_strategies(N) for N in (2, 4, 6, 8)]
    ok = got == [2, 10, 76, 764]
    record_criterion("C5", ok, f"unoriented counts {got}")
    assert ok


def test_c6_priority_close_to_exhaustive():
    table, secs = sweep("fig9_wscr_vs_N")
    n_inst = len({(r["point"], r["seed"]) for r in table.rows})
    ex, pi = means(table, "EX", "N"), means(table, "PI", "N")
    ratios = [p / e for p, e in zip(pi, ex)]
    order = [f for f in check_rows(table.rows, ["N"]) if "violation" not in f]
    ok = n_inst >= 200 and min(ratios) >= 0.95 and not order and secs <= 600
    record_criterion("C6", ok, f"{n_inst} instances, PI/EX per N {[round(r, 5) for r in ratios]}, "
                               f"{len(order)} order breaks, {secs:.0f} s")
    assert ok, order[:5]


def test_c7_distance_and_threshold_trends():
    table, _ = sweep("fig6_wscr_vs_distance")
    lo = means(table, "PI", "d_mean", l_th=4000.0)
    hi = means(table, "PI", "d_mean", l_th=8000.0)
    dec = all(b < a for a, b in zip(lo, lo[1:]))
    below = all(h < l for h, l in zip(hi, lo))
    ok = dec and below and len(lo) == 6
    record_criterion("C7", ok, f"PI(l_th=4000) {[f'{v:.3g}' for v in lo]}; "
                               f"8000 curve below: {below}")
    assert ok


def test_c8_baseline_ordering():
    table, _ = sweep("fig9_wscr_vs_N")
    sc, nc, pi = (means(table, m, "N") for m in ("SC", "NC", "PI"))
    ok = all(a <= b <= c for a, b, c in zip(sc, nc, pi))
    record_criterion("C8", ok, "mean SC/NC/PI per N=4,6,8: "
                     + "; ".join(f"{a:.4g}/{b:.4g}/{c:.4g}" for a, b, c in zip(sc, nc, pi)))
    assert ok


def test_c9_hap_speed_and_path_loss_trends():
    t10, _ = sweep("fig10_wscr_vs_fhap")
    t11, _ = sweep("fig11_wscr_vs_de")
    pi_f = means(t10, "PI", "f_ap")
    lc_f = means(t10, "LC", "f_ap")
    pi_d = means(t11, "PI", "d_e")
    inc = all(b >= a for a, b in zip(pi_f, pi_f[1:]))
    flat = max(lc_f) - min(lc_f) <= 1e-12 * max(lc_f)
    dec = all(b < a for a, b in zip(pi_d, pi_d[1:]))
    ok = inc and flat and dec
    record_criterion("C9", ok, f"PI vs f_hap {[f'{v:.4g}' for v in pi_f]}, LC flat {flat}, "
                               f"PI vs d_e {[f'{v:.4g}' for v in pi_d]}")
    assert ok


def test_c10_optimal_cluster_count_trends():
    table, _ = sweep("fig12_mstar_vs_params")
    etas = (0.3, 0.51, 0.7)
    M = np.array([table.series("PI", "f_ap", "mean_m", eta=e)[1] for e in etas])
    # M[i, j] = mean m at eta_i, f_j (mean over feasible frames)
    up_eta = bool(np.all(np.diff(M, axis=0) >= 0))
    down_f = bool(np.all(np.diff(M, axis=1) <= 0))
    ok = up_eta and down_f
    record_criterion("C10", ok, f"mean m over (eta rows, f_hap cols) {M.round(3).tolist()}")
    assert ok


@pytest.fixture(scope="module")
def dl_setup():
    cfg = InstanceConfig(n_devices=10)
    template = make_instance(cfg, 0)
    train_set = generate_dataset(template, 2000, seed=1, redraw_weights=True)
    test_set = generate_dataset(template, 300, seed=2, redraw_weights=True)
    pred = train(train_set, TrainParams(), seed=0)
    return template, train_set, test_set, pred


def test_c11_learned_cluster_count(dl_setup):
    template, train_set, test_set, pred = dl_setup
    X = pred.standardizer.apply(train_set.features[:8])
    grad_err = max(gradient_check(pred.model, X, train_set.m_star[:8]))
    m_hat = np.array([pred.predict(w, h) for w, h in zip(test_set.w, test_set.h)])
    within = float(np.mean(np.abs(m_hat - test_set.m_star) <= 1))
    dl_sum = pi_sum = 0.0
    dl_solves = pi_solves = 0
    for w, h in zip(test_set.w[:100], test_set.h[:100]):
        inst = NetworkInstance(template.devices, template.hap, ChannelRealization(h), template.l_th).with_weights(w)
        c0 = ipm.solve_count()
        d = dl_solve(inst, pred)
        c1 = ipm.solve_count()
        p = priority_iterative(inst)
        c2 = ipm.solve_count()
        assert c1 - c0 == d.n_solves == 1
        assert c2 - c1 == p.n_solves == 10 // 2 + 1
        dl_solves += c1 - c0
        pi_solves += c2 - c1
        dl_sum += d.effective_wscr
        pi_sum += p.effective_wscr
    ratio = dl_sum / pi_sum
    ok = grad_err <= 1e-4 and within >= 0.8 and ratio >= 0.9
    record_criterion("C11", ok, f"grad err {grad_err:.1e}, |m_hat - m*| <= 1 on {within:.1%} of "
                                f"{len(test_set)} held-out, DL/PI {ratio:.4f}, LP solves {dl_solves} vs "
                                f"{pi_solves}, train labels {train_set.label_counts().tolist()}")
    assert ok


def test_c12_decision_time(dl_setup):
    _, _, _, pred = dl_setup
    res = timing_suite([5, 10, 20, 30], ("PI", "DL"), n_seeds=10, predictors={10: pred}, repeats=3)
    S = res["summary"]
    pi = [S[(N, "PI")] for N in (5, 10, 20, 30)]
    faster = all(S[(N, "DL")] < S[(N, "PI")] for N in (20, 30))
    mono = all(b >= a for a, b in zip(pi, pi[1:]))
    ok = faster and mono
    record_criterion("C12", ok, "ms PI " + ", ".join(f"{v:.2f}" for v in pi) + "; DL "
                     + ", ".join(f"{S[(N, 'DL')]:.2f}" for N in (5, 10, 20, 30)))
    assert ok
