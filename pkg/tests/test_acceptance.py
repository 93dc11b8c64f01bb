"""Exit criteria.  Each test prints one PASS/FAIL line with its measured numbers.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import json
import time

import numpy as np
import pytest

from conftest import double_integrator, identity_costs, scalar_instance, small_instance
from oracles import kkt_oracle, pg_oracle
from ltv_pc.analysis import (
    competitive_report,
    random_block_tridiagonal,
    random_quadratic_soco,
    regret_sweep,
    replan_report,
    theory_constants,
    verify_banded_decay,
    verify_cost_smoothness,
    verify_iss,
    verify_ltv_sensitivity,
    verify_opt_stability,
    verify_soco_reduction,
    verify_soco_sensitivity,
    verify_switching_smoothness,
    window_thresholds,
)
from ltv_pc.cli import main as cli_main
from ltv_pc.controllers import run_opt, run_pc_k, run_pc_kh
from ltv_pc.costs import ZERO, pseudo_huber_family, quadratic_family, random_quadratic_family
from ltv_pc.solver import solve_terminal_constraint, solve_terminal_cost
from ltv_pc.system import InstanceSpec, analyze_controllability, generate_instance

pytestmark = pytest.mark.acceptance


def verdict(capsys, num, ok, elapsed, limit, detail):
    ok = bool(ok) and (limit is None or elapsed < limit)
    budget = f" (limit {limit:g}s)" if limit is not None else ""
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {num:2d}: {detail}; {elapsed:.2f}s{budget}")
    assert ok, detail


def scalar_model(T):
    return quadratic_family(np.eye(1), np.eye(1), T=T)


def scalar_at_threshold(seed, which, margin):
    """Scalar instance whose horizon exceeds its own window threshold by ``margin``.

    The constants depend on the drawn ``A_t, B_t``, so the horizon is grown
    until the threshold computed on the final instance fits.
    """
    T = 40
    while True:
        s = scalar_instance(seed, T)
        model = scalar_model(T)
        tc = theory_constants(analyze_controllability(s), model)
        k = getattr(window_thresholds(tc, 0.5, 0.5), which)
        if k + margin <= T:
            return s, model, tc, k
        T = k + margin


# 1 ----------------------------------------------------------------------


def test_c01_quadratic_solver_matches_kkt(capsys):
    t0 = time.perf_counter()
    worst_val, worst_traj = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        s = small_instance(seed, n=n, m=m, T=10, family="random_general")
        d = analyze_controllability(s).d
        p = int(rng.integers(d, 9))
        t = int(rng.integers(0, 10 - p + 1))
        model = random_quadratic_family(rng, n, m, 10)
        Q = [model.f[t + h].Q for h in range(p)]
        R = [model.c[t + h].Q for h in range(p)]
        x, zeta, z = rng.standard_normal(n), rng.standard_normal((p, n)), rng.standard_normal(n)
        ref_free = kkt_oracle(s.A[t:t + p], s.B[t:t + p], zeta, x, Q, R)
        ref_pin = kkt_oracle(s.A[t:t + p], s.B[t:t + p], zeta, x, Q, R, None, z)
        for method in ("dense", "sparse"):
            a = solve_terminal_cost(s, model, ZERO, t, p, x, zeta, method=method)
            b = solve_terminal_constraint(s, model, t, p, x, zeta, z, method=method)
            for sol, (val, states, _) in ((a, ref_free), (b, ref_pin)):
                worst_val = max(worst_val, abs(sol.value - val) / max(abs(val), 1e-300))
                worst_traj = max(worst_traj, float(np.max(np.abs(sol.states - states))))
    el = time.perf_counter() - t0
    verdict(capsys, 1, worst_val <= 1e-8 and worst_traj <= 1e-7, el, 5,
            f"quadratic vs KKT, max rel value err {worst_val:.2e}, max traj err {worst_traj:.2e}")


# 2 ----------------------------------------------------------------------


def test_c02_pseudo_huber_solver_matches_projected_gradient(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(2000 + seed)
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        T = 10
        s = small_instance(seed, n=n, m=m, T=T)
        d = analyze_controllability(s).d
        p = int(rng.integers(max(d, 2), 9))
        mu_f, al_f, mu_c, al_c = rng.uniform(0.5, 2.0), rng.uniform(0, 3), rng.uniform(0.5, 2.0), rng.uniform(0, 3)
        model = pseudo_huber_family(mu_f, al_f, (n, m), T, m_c=mu_c, alpha_c=al_c)
        x, zeta, z = rng.standard_normal(n) * 2, rng.standard_normal((p, n)), rng.standard_normal(n)
        a = solve_terminal_cost(s, model, ZERO, 0, p, x, zeta)
        b = solve_terminal_constraint(s, model, 0, p, x, zeta, z)
        ref_a = pg_oracle(s.A[:p], s.B[:p], zeta, x, (mu_f, al_f), (mu_c, al_c))[0]
        ref_b = pg_oracle(s.A[:p], s.B[:p], zeta, x, (mu_f, al_f), (mu_c, al_c), z=z)[0]
        worst = max(worst, abs(a.value - ref_a), abs(b.value - ref_b))
    el = time.perf_counter() - t0
    verdict(capsys, 2, worst <= 1e-5, el, 30, f"pseudo-Huber vs projected gradient, max value gap {worst:.2e}")


# 3 ----------------------------------------------------------------------


def test_c03_full_window_is_optimal(capsys):
    t0 = time.perf_counter()
    worst = -np.inf
    fams = [("random_stable", 2, 2), ("random_general", 3, 1), ("gridfreq_toy", 4, 2), ("tracking", 2, 1),
            ("random_stable", 3, 2)]
    for seed in range(10):
        fam, n, m = fams[seed % len(fams)]
        T = 20
        s = generate_instance(InstanceSpec(fam, n, m, T), seed)
        model = identity_costs(s) if seed % 2 == 0 else pseudo_huber_family(1.0, 1.0, (n, m), T)
        opt = run_opt(s, model).total_cost
        pc = run_pc_k(s, model, T).total_cost
        worst = max(worst, (pc - opt) / opt)
    el = time.perf_counter() - t0
    verdict(capsys, 3, worst <= 1e-8, el, 10, f"max regret(PC_T)/cost(OPT) {worst:.2e}")


# 4 ----------------------------------------------------------------------


def test_c04_regret_decays_exponentially(capsys):
    t0 = time.perf_counter()
    s = generate_instance(InstanceSpec("random_stable", 2, 2, 60, D=1.0), 0)
    assert np.max(np.linalg.norm(s.w, axis=1)) <= 1.0
    tab = regret_sweep(s, identity_costs(s), range(2, 13))
    el = time.perf_counter() - t0
    ratio = tab.regret(12) / tab.regret(2)
    ok = not tab.failures and tab.slope < 0 and tab.r2 >= 0.9 and ratio <= 0.01
    verdict(capsys, 4, ok, el, 60,
            f"slope {tab.slope:.3f}, R^2 {tab.r2:.4f}, regret(12)/regret(2) {ratio:.2e}")


# 5 ----------------------------------------------------------------------


def test_c05_ltv_perturbation_envelope(capsys):
    t0 = time.perf_counter()
    s = generate_instance(InstanceSpec("random_stable", 2, 2, 20), 5)
    di = double_integrator(20, w=np.random.default_rng(0).standard_normal((20, 2)) * 0.3)
    parts = []
    for label, model_of in (("quadratic", identity_costs), ("pseudo-Huber",
                            lambda x: pseudo_huber_family(1.0, 1.5, (x.n, x.m), x.T))):
        checks = viol = 0
        worst = 0.0
        # 25 trials on each of two systems: 50 per family
        for sysm, t, p in ((s, 2, 8), (di, 3, 8)):
            rep = verify_ltv_sensitivity(sysm, model_of(sysm), t, p, trials=25, seed=7)
            checks += len(rep.deviations)
            viol += rep.violations
            worst = max(worst, rep.max_violation_ratio)
        parts.append((label, checks, viol, worst))
    el = time.perf_counter() - t0
    ok = all(v == 0 for _, _, v, _ in parts)
    detail = ", ".join(f"{lb}: {v}/{c} violations, max ratio {w:.2e}" for lb, c, v, w in parts)
    verdict(capsys, 5, ok, el, 60, detail)


# 6 ----------------------------------------------------------------------


def test_c06_soco_envelope_and_reduction(capsys):
    t0 = time.perf_counter()
    inst = random_quadratic_soco(np.random.default_rng(6), 2, 8)
    sens = verify_soco_sensitivity(inst, trials=50, seed=6)
    mismatch = 0.0
    rng = np.random.default_rng(60)
    systems = [generate_instance(InstanceSpec("random_stable", 2, 2, 16), 1),
               double_integrator(16, w=rng.standard_normal((16, 2)) * 0.2),
               generate_instance(InstanceSpec("random_general", 3, 1, 16), 2)]
    for sysm in systems:
        d = analyze_controllability(sysm).d
        for segments in (2, 3):
            red = verify_soco_reduction(sysm, identity_costs(sysm), 1, segments, rng.standard_normal(sysm.n),
                                        rng.standard_normal((segments * d, sysm.n)), rng.standard_normal(sysm.n))
            mismatch = max(mismatch, red.max_mismatch)
    el = time.perf_counter() - t0
    verdict(capsys, 6, sens.violations == 0 and mismatch <= 1e-6, el, 60,
            f"SOCO {sens.violations}/{len(sens.deviations)} violations (max ratio {sens.max_violation_ratio:.2e}), "
            f"reduction mismatch {mismatch:.2e}")


# 7 ----------------------------------------------------------------------


def test_c07_banded_inverse_decay(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    checks = viol = 0
    slack = np.inf
    for i in range(100):
        bs = int(rng.integers(1, 4))
        A, D = random_block_tridiagonal(rng, int(rng.integers(2, 13)), bs)
        rep = verify_banded_decay(A, D, 20, i, block_size=bs)
        checks += len(rep.checks)
        viol += rep.violations
        slack = min(slack, rep.to_dict()["min_slack"])
    el = time.perf_counter() - t0
    verdict(capsys, 7, viol == 0, el, 10, f"{viol}/{checks} violations over 100 matrices, min slack {slack:.3e}")


# 8 ----------------------------------------------------------------------


def test_c08_switching_cost_smoothness(capsys):
    t0 = time.perf_counter()
    pairs = []
    cands = [("random_stable", 2, 2), ("random_general", 3, 1), ("random_general", 2, 1), ("gridfreq_toy", 4, 2)]
    seed = 0
    while len(pairs) < 20:
        fam, n, m = cands[seed % len(cands)]
        s = generate_instance(InstanceSpec(fam, n, m, 12), seed)
        d = analyze_controllability(s).d
        for p in range(d, 2 * d):
            if len(pairs) < 20:
                pairs.append((s, p, seed))
        seed += 1
    lo, hi_gap, fd = np.inf, np.inf, 0.0
    ok = True
    for s, p, sd in pairs:
        model = identity_costs(s) if sd % 2 else pseudo_huber_family(1.0, 1.0, (s.n, s.m), s.T)
        rep = verify_switching_smoothness(s, model, 1, p, 2, sd)
        ok = ok and rep.ok
        lo = min(lo, min(rep.eig_min))
        hi_gap = min(hi_gap, rep.L2 - max(rep.eig_max))
        fd = max(fd, max(rep.fd_vs_analytic))
    el = time.perf_counter() - t0
    verdict(capsys, 8, ok, el, 30,
            f"20 pairs, min eigenvalue {lo:.2e}, min gap to L2(p) {hi_gap:.3e}, fd vs exact {fd:.1e}")


# 9 ----------------------------------------------------------------------


def test_c09_trajectory_stability_and_cost_smoothness(capsys):
    t0 = time.perf_counter()
    s = generate_instance(InstanceSpec("random_stable", 2, 2, 20), 9)
    model = pseudo_huber_family(1.0, 1.0, (2, 2), 20)
    tc = theory_constants(analyze_controllability(s), model)
    k = 6
    reps = [
        verify_opt_stability(s, model, ZERO, 2, 8, 50, 90, tc=tc),
        verify_cost_smoothness(s, model, 2, 8, 1.0, 50, 91, tc=tc),
        verify_cost_smoothness(s, model, 2, 8, tc.lam**k, 50, 92, tc=tc),
    ]
    el = time.perf_counter() - t0
    detail = ", ".join(f"{r.label}: {r.violations}/{len(r.lhs)}" for r in reps)
    verdict(capsys, 9, all(r.ok for r in reps), el, 60, "violations " + detail)


# 10 ---------------------------------------------------------------------


def test_c10_state_bound(capsys):
    t0 = time.perf_counter()
    checks = viol = 0
    branches = set()
    worst = 0.0
    for seed in range(3):
        s, model, tc, k = scalar_at_threshold(seed, "k_regret", 25)
        rep = verify_iss(run_pc_k(s, model, k), tc, 0.5, float(np.max(np.abs(s.w))))
        checks += len(rep.lhs)
        viol += rep.violations
        branches |= {tag[1] for tag in rep.tags}
        worst = max(worst, rep.max_ratio)
    el = time.perf_counter() - t0
    verdict(capsys, 10, viol == 0 and branches == {1, 2}, el, 30,
            f"{viol}/{checks} violations, branches {sorted(branches)}, max ratio {worst:.2e}")


# 11 ---------------------------------------------------------------------


def test_c11_competitive_ratio(capsys):
    t0 = time.perf_counter()
    ratios, bad = [], []
    for seed in range(20):
        s, model, tc, k = scalar_at_threshold(seed, "k_cr", 15)
        rep = competitive_report(s, model, k, 0.5, tc=tc)
        ratios.append(rep.ratio)
        if not rep.ok:
            bad.append((seed, {k: v for k, v in rep.checks.items() if not v}))
    el = time.perf_counter() - t0
    verdict(capsys, 11, not bad, el, 120,
            f"20 instances, ratio in [{min(ratios):.12f}, {max(ratios):.12f}], failures {bad}")


# 12 ---------------------------------------------------------------------


def test_c12_replanning_controller(capsys):
    t0 = time.perf_counter()
    h1 = 0.0
    for seed in range(4):
        s = small_instance(seed, T=25)
        model = identity_costs(s) if seed % 2 else pseudo_huber_family(1.0, 1.0, (2, 2), 25)
        for k in (1, 4, 9):
            h1 = max(h1, abs(run_pc_k(s, model, k).total_cost - run_pc_kh(s, model, k, 1).total_cost))
    full = 0.0
    for seed in range(4):
        s = small_instance(seed, T=25)
        model = identity_costs(s)
        opt = run_opt(s, model).total_cost
        full = max(full, abs(run_pc_kh(s, model, 25, 25).total_cost - opt) / opt)
    diffs = []
    T = 1000
    for seed in range(10):
        s = scalar_instance(seed, T)
        model = scalar_model(T)
        tc = theory_constants(analyze_controllability(s), model)
        h = window_thresholds(tc, 0.5, 0.5).h_replan
        opt = run_opt(s, model)
        k = h + tc.d
        a = replan_report(s, model, k, h, 0.5, tc=tc, opt=opt)
        b = replan_report(s, model, k + 2, h, 0.5, tc=tc, opt=opt)
        diffs.append(b.ratio - a.ratio)
    med = float(np.median(diffs))
    el = time.perf_counter() - t0
    ok = h1 <= 1e-10 and full <= 1e-8 and med <= 1e-9
    verdict(capsys, 12, ok, el, 60,
            f"h=1 gap {h1:.1e}, h=k=T rel gap {full:.1e}, median ratio(k+2)-ratio(k) {med:.2e}")


# 13 ---------------------------------------------------------------------

CLI_CONFIG = {
    "seed": 13,
    "instance": {"family": "random_stable", "n": 2, "m": 2, "T": 30, "D": 1.0},
    "costs": {"family": "pseudo_huber", "m": 1.0, "alpha": 1.0},
    "controllers": [{"type": "PCk", "k": 4}, {"type": "PCkh", "k": 6, "h": 2}, {"type": "OPT"}],
    "verification": {"trials": 5, "matrices": 10},
    "output": {"dir": "out"},
}


def test_c13_cli_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CLI_CONFIG))
    commands = [
        ["simulate"],
        ["regret-sweep", "--k-min", "2", "--k-max", "10"],
        ["constants"],
        ["verify", "--suite", "sensitivity-ltv"],
        ["verify", "--suite", "sensitivity-soco"],
        ["verify", "--suite", "banded"],
        ["verify", "--suite", "stability"],
        ["verify", "--suite", "smoothness"],
    ]
    codes, differing, files = [], [], 0
    for i, cmd in enumerate(commands):
        dirs = [tmp_path / f"run{i}_{r}" for r in (0, 1)]
        for d in dirs:
            codes.append(cli_main([cmd[0], str(cfg), *cmd[1:], "--out", str(d)]))
        names = sorted(p.name for p in dirs[0].iterdir())
        if names != sorted(p.name for p in dirs[1].iterdir()):
            differing.append(cmd[0])
        for name in names:
            files += 1
            if (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
                differing.append(f"{' '.join(cmd)}:{name}")
    el = time.perf_counter() - t0
    verdict(capsys, 13, not differing and all(c == 0 for c in codes) and files > 0, el, None,
            f"{len(commands)} commands, {files} artifacts compared, differing {differing}, exit codes {set(codes)}")
