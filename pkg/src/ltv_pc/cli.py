"""Command-line front-end: configs in, CSV/JSON artifacts out.

Exit status is 0 on success, 1 on a runtime or solver failure (or a
verification suite with violations) and 2 when the config or a precondition
is rejected.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .costs import (
    TerminalCost,
    pseudo_huber_family,
    quadratic_family,
    random_quadratic_family,
)
from .errors import (
    ConfigurationError,
    ControllerError,
    DegenerateInstanceError,
    LtvPcError,
    PreconditionError,
    RankError,
    TimeRangeError,
    UncontrollableError,
    ValidationError,
)
from .system import InstanceSpec, LtvSystem, analyze_controllability, generate_instance

EXIT_OK, EXIT_RUNTIME, EXIT_REJECTED = 0, 1, 2
SUITES = (
    "sensitivity-ltv",
    "sensitivity-soco",
    "banded",
    "stability",
    "smoothness",
    "iss",
    "competitive",
    "potential",
    "constants",
)
_SECTIONS = {"seed", "instance", "costs", "controllers", "verification", "output"}
_REJECTED = (
    ConfigurationError,
    ValidationError,
    PreconditionError,
    DegenerateInstanceError,
    TimeRangeError,
    RankError,
    UncontrollableError,
)


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    seed: int
    instance: dict
    costs: dict
    controllers: list
    verification: dict
    output: dict
    digest: str
    base_dir: Path = field(default=Path("."))
    T: int = 0

    def out_dir(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        d = Path(self.output.get("dir", "ltv_pc_out"))
        return d if d.is_absolute() else self.base_dir / d


def config_digest(doc) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _need_int(value, where, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{where}: expected an integer, got {value!r}")
    if lo is not None and value < lo or hi is not None and value > hi:
        raise ConfigurationError(f"{where}: {value} outside [{lo}, {hi}]")
    return value


def _need_num(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigurationError(f"{where}: expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigurationError(f"{where}: must be positive, got {value}")
    return float(value)


def _terminal(name, where):
    try:
        return TerminalCost.from_name(name)
    except (ValidationError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Parse and check a JSON experiment config.

    Parse errors report line and column; field errors report a dotted path.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ConfigurationError(f"unknown top-level fields {sorted(unknown)}")
    inst = doc.get("instance")
    if not isinstance(inst, dict):
        raise ConfigurationError("instance: missing or not an object")
    seed = doc.get("seed", inst.get("seed"))
    if seed is None:
        raise ConfigurationError("seed: required (no implicit entropy)")
    _need_int(seed, "seed", lo=0)
    cfg = ExperimentConfig(
        seed=seed,
        instance=inst,
        costs=doc.get("costs", {"family": "quadratic"}),
        controllers=doc.get("controllers", []),
        verification=doc.get("verification", {}),
        output=doc.get("output", {}),
        digest=config_digest(doc),
        base_dir=path.resolve().parent,
    )
    for name in ("costs", "verification", "output"):
        if not isinstance(getattr(cfg, name), dict):
            raise ConfigurationError(f"{name}: expected an object")
    if not isinstance(cfg.controllers, list):
        raise ConfigurationError("controllers: expected a list")
    cfg.T = _instance_T(cfg)
    _check_controllers(cfg.controllers, cfg.T)
    return cfg


def _instance_T(cfg) -> int:
    inst = cfg.instance
    if inst.get("family") == "explicit":
        sysd = inst.get("system")
        if not isinstance(sysd, dict) or "A" not in sysd:
            raise ConfigurationError("instance.system: explicit instances need A, B, w, x0")
        return len(sysd["A"])
    return _need_int(inst.get("T"), "instance.T", lo=1)


def _check_controllers(ctrls, T):
    for i, c in enumerate(ctrls):
        where = f"controllers[{i}]"
        if not isinstance(c, dict):
            raise ConfigurationError(f"{where}: expected an object")
        kind = c.get("type")
        if kind == "OPT":
            continue
        if kind not in ("PCk", "PCkh"):
            raise ConfigurationError(f"{where}.type: expected PCk, PCkh or OPT, got {kind!r}")
        k = _need_int(c.get("k"), f"{where}.k", 1, T)
        if kind == "PCkh":
            _need_int(c.get("h"), f"{where}.h", 1, k)
        _terminal(c.get("F", "Zero"), f"{where}.F")


def build_problem(cfg: ExperimentConfig, rng):
    """Instance and cost model; every random draw comes from ``rng``."""
    inst = dict(cfg.instance)
    inst.pop("seed", None)
    try:
        if inst.get("family") == "explicit":
            sysm = LtvSystem.from_dict(inst["system"])
            analyze_controllability(sysm)
        else:
            sysm = generate_instance(InstanceSpec.from_dict(inst), rng)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"instance: {exc}") from None
    return sysm, build_costs(cfg.costs, sysm, rng)


def _weight(spec, dim, where):
    if spec is None:
        return np.eye(dim)
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return _need_num(spec, where, positive=True) * np.eye(dim)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 1 and arr.size == dim:
        return np.diag(arr)
    if arr.shape == (dim, dim):
        return arr
    raise ConfigurationError(f"{where}: expected a scalar, {dim} diagonal entries or a {dim}x{dim} matrix")


def build_costs(spec: dict, sysm: LtvSystem, rng):
    fam = spec.get("family", "quadratic")
    T, n, m = sysm.T, sysm.n, sysm.m
    try:
        if fam == "quadratic":
            return quadratic_family(_weight(spec.get("Q"), n, "costs.Q"), _weight(spec.get("R"), m, "costs.R"), T=T)
        if fam == "pseudo_huber":
            return pseudo_huber_family(
                _need_num(spec.get("m", 1.0), "costs.m", positive=True),
                _need_num(spec.get("alpha", 1.0), "costs.alpha"),
                (n, m),
                T,
                m_c=spec.get("m_c"),
                alpha_c=spec.get("alpha_c"),
            )
        if fam == "random_quadratic":
            return random_quadratic_family(
                rng, n, m, T, tuple(spec.get("q_range", (0.5, 2.0))), tuple(spec.get("r_range", (0.5, 2.0)))
            )
    except (TypeError, ValidationError) as exc:
        raise ConfigurationError(f"costs: {exc}") from None
    raise ConfigurationError(f"costs.family: unknown family {fam!r}")


# ---------------------------------------------------------------- artifacts


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, NaN to null, infinities as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path: Path, payload: dict, cfg: ExperimentConfig):
    doc = {"config_digest": cfg.digest, "version": __version__}
    doc.update(_clean(payload))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------- commands


def _seed_from(rng) -> int:
    return int(rng.integers(0, 2**63 - 1))


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    from .controllers import run_opt, run_pc_k, run_pc_kh

    rng = np.random.default_rng(cfg.seed)
    sysm, model = build_problem(cfg, rng)
    if not cfg.controllers:
        raise ConfigurationError("controllers: at least one controller is required")
    runs, opt_cost = [], None
    for i, c in enumerate(cfg.controllers):
        F = _terminal(c.get("F", "Zero"), f"controllers[{i}].F")
        try:
            if c["type"] == "OPT":
                rec = run_opt(sysm, model)
            elif c["type"] == "PCk":
                rec = run_pc_k(sysm, model, c["k"], F)
            else:
                rec = run_pc_kh(sysm, model, c["k"], c["h"], F)
        except ControllerError as exc:
            raise ControllerError(f"controllers[{i}] ({c['type']}): {exc}", exc.t, exc.cause) from exc
        name = f"run_{i:02d}_{c['type']}.csv"
        write_text(out / name, rec.to_csv())
        runs.append({"controller": str(rec.controller_tag), "file": name, "total_cost": rec.total_cost,
                     "solves": len(rec.solver_stats), "newton_iterations": int(sum(rec.solver_stats))})
        if c["type"] == "OPT":
            opt_cost = rec.total_cost
    if opt_cost is not None:
        for r in runs:
            r["regret"] = r["total_cost"] - opt_cost
    write_json(out / "summary.json", {"command": "simulate", "T": sysm.T, "runs": runs}, cfg)
    return EXIT_OK


def cmd_regret_sweep(cfg: ExperimentConfig, out: Path, k_min: int, k_max: int, k_step: int = 1) -> int:
    from .analysis import regret_sweep

    if k_step < 1:
        raise ConfigurationError("--k-step must be positive")
    if not 1 <= k_min <= k_max <= cfg.T:
        raise ConfigurationError(f"need 1 <= k-min <= k-max <= T={cfg.T}, got {k_min}, {k_max}")
    grid = cfg.verification.get("k_grid")
    ks = list(range(k_min, k_max + 1, k_step)) if grid is None else grid
    rng = np.random.default_rng(cfg.seed)
    sysm, model = build_problem(cfg, rng)
    F = _terminal(cfg.verification.get("F", "Zero"), "verification.F")
    table = regret_sweep(sysm, model, ks, F, delta=float(cfg.verification.get("delta", 0.5)))
    write_text(out / "regret_sweep.csv", table.to_csv())
    write_json(out / "regret_fit.json", {"command": "regret-sweep", "k_grid": ks, **table.to_dict()}, cfg)
    return EXIT_OK if not table.failures else EXIT_RUNTIME


def cmd_constants(cfg: ExperimentConfig, out: Path, stream=None) -> int:
    from .analysis import theory_constants, window_thresholds

    rng = np.random.default_rng(cfg.seed)
    sysm, model = build_problem(cfg, rng)
    rep = analyze_controllability(sysm)
    tc = theory_constants(rep, model)
    v = cfg.verification
    payload = {"command": "constants", "controllability": rep.to_dict(), "constants": tc.to_dict()}
    try:
        payload["thresholds"] = window_thresholds(tc, float(v.get("delta", 0.5)), float(v.get("eps", 0.5))).to_dict()
    except ValidationError as exc:
        raise ConfigurationError(f"verification: {exc}") from None
    write_json(out / "constants.json", payload, cfg)
    stream = sys.stdout if stream is None else stream
    for key, val in tc.to_dict().items():
        print(f"{key} = {val}", file=stream)
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, suite: str) -> int:
    if suite == "constants":
        return cmd_constants(cfg, out)
    rng = np.random.default_rng(cfg.seed)
    if suite == "banded":
        # matrices only; no LTV instance needed
        report, ok = _suite_banded(cfg.verification, rng)
    elif suite == "sensitivity-soco":
        sysm, model = build_problem(cfg, rng)
        report, ok = _suite_soco(cfg.verification, sysm, model, rng)
    else:
        sysm, model = build_problem(cfg, rng)
        runner = {
            "sensitivity-ltv": _suite_sensitivity,
            "stability": _suite_stability,
            "smoothness": _suite_smoothness,
            "iss": _suite_iss,
            "competitive": _suite_competitive,
            "potential": _suite_potential,
        }[suite]
        report, ok = runner(cfg.verification, sysm, model, rng)
    write_json(out / f"verify_{suite}.json", {"command": "verify", "suite": suite, "ok": ok, "report": report}, cfg)
    return EXIT_OK if ok else EXIT_RUNTIME


def _window(v, sysm, d):
    t = int(v.get("t", 0))
    p = v.get("p")
    p = min(2 * d, sysm.T - t) if p is None else int(p)
    if not (0 <= t and 1 <= p and t + p <= sysm.T):
        raise ConfigurationError(f"verification: window t={t}, p={p} does not fit T={sysm.T}")
    return t, p


def _suite_sensitivity(v, sysm, model, rng):
    from .analysis import theory_constants, verify_ltv_sensitivity

    tc = theory_constants(analyze_controllability(sysm), model)
    t, p = _window(v, sysm, tc.d)
    F = _terminal(v.get("F", "Zero"), "verification.F")
    rep = verify_ltv_sensitivity(sysm, model, t, p, v.get("h"), int(v.get("trials", 50)), _seed_from(rng), F=F, tc=tc)
    return rep.to_dict(), rep.ok


def _suite_soco(v, sysm, model, rng):
    from .analysis import random_quadratic_soco, verify_soco_reduction, verify_soco_sensitivity

    p = int(v.get("soco_p", 8))
    inst = random_quadratic_soco(rng, sysm.n, p)
    sens = verify_soco_sensitivity(inst, None, int(v.get("trials", 50)), _seed_from(rng))
    d = analyze_controllability(sysm).d
    segments = int(v.get("segments", 3))
    t = int(v.get("t", 0))
    if t + segments * d > sysm.T:
        raise ConfigurationError(f"verification.segments: {segments} segments of length {d} overrun T={sysm.T}")
    x = rng.standard_normal(sysm.n)
    zeta = rng.standard_normal((segments * d, sysm.n))
    z = rng.standard_normal(sysm.n)
    red = verify_soco_reduction(sysm, model, t, segments, x, zeta, z)
    return {"sensitivity": sens.to_dict(), "reduction": red.to_dict()}, sens.ok and red.ok


def _suite_banded(v, rng):
    from .analysis import random_block_tridiagonal, verify_banded_decay

    count = int(v.get("matrices", 100))
    total, bad, slack = 0, 0, math.inf
    for _ in range(count):
        bs = int(rng.integers(1, 4))
        A, D = random_block_tridiagonal(rng, int(rng.integers(3, 12)), bs)
        rep = verify_banded_decay(A, D, int(v.get("samples", 20)), _seed_from(rng), block_size=bs)
        total += len(rep.checks)
        bad += rep.violations
        slack = min(slack, rep.to_dict()["min_slack"])
    return {"matrices": count, "checks": total, "violations": bad, "min_slack": slack}, bad == 0


def _suite_stability(v, sysm, model, rng):
    from .analysis import theory_constants, verify_cost_smoothness, verify_one_step_diff, verify_opt_stability

    tc = theory_constants(analyze_controllability(sysm), model)
    t, p = _window(v, sysm, tc.d)
    trials = int(v.get("trials", 50))
    reps = [
        verify_opt_stability(sysm, model, TerminalCost.from_name(v.get("F", "Zero")), t, p, trials, _seed_from(rng), tc=tc),
        verify_cost_smoothness(sysm, model, t, p, float(v.get("eta", 0.5)), trials, _seed_from(rng), tc=tc),
        verify_one_step_diff(sysm, model, trials, _seed_from(rng), tc=tc),
    ]
    return {r.label: r.to_dict() for r in reps}, all(r.ok for r in reps)


def _suite_smoothness(v, sysm, model, rng):
    from .analysis import theory_constants, verify_switching_smoothness

    tc = theory_constants(analyze_controllability(sysm), model)
    t = int(v.get("t", 0))
    out, ok = {}, True
    for p in range(tc.d, 2 * tc.d):
        if t + p > sysm.T:
            break
        rep = verify_switching_smoothness(sysm, model, t, p, int(v.get("points", 3)), _seed_from(rng), tc=tc)
        out[str(p)] = rep.to_dict()
        ok = ok and rep.ok
    if not out:
        raise ConfigurationError("verification.t: no window with d <= p <= 2d-1 fits the horizon")
    return out, ok


def _thresholds(v, sysm, model):
    from .analysis import theory_constants, window_thresholds

    tc = theory_constants(analyze_controllability(sysm), model)
    delta, eps = float(v.get("delta", 0.5)), float(v.get("eps", 0.5))
    return tc, window_thresholds(tc, delta, eps), delta, eps


def _window_k(v, threshold, T, what):
    k = int(v.get("k", threshold))
    if threshold > T:
        raise PreconditionError(f"{what} threshold k >= {threshold} cannot be met with horizon T={T}")
    return k


def _suite_iss(v, sysm, model, rng):
    from .analysis import verify_iss
    from .controllers import run_pc_k

    tc, thr, delta, _ = _thresholds(v, sysm, model)
    k = _window_k(v, thr.k_regret, sysm.T, "stability")
    if k < thr.k_regret:
        raise PreconditionError(f"k={k} is below the stability threshold {thr.k_regret} for delta={delta}")
    D = float(v.get("D", np.max(np.linalg.norm(sysm.w, axis=1))))
    rep = verify_iss(run_pc_k(sysm, model, k), tc, delta, D)
    return rep.to_dict(), rep.ok


def _suite_competitive(v, sysm, model, rng):
    from .analysis import competitive_report

    tc, thr, _, eps = _thresholds(v, sysm, model)
    rep = competitive_report(sysm, model, _window_k(v, thr.k_cr, sysm.T, "competitive-ratio"), eps, tc=tc)
    return rep.to_dict(), rep.ok


def _suite_potential(v, sysm, model, rng):
    from .analysis import competitive_report

    tc, thr, _, eps = _thresholds(v, sysm, model)
    rep = competitive_report(sysm, model, _window_k(v, thr.k_cr, sysm.T, "competitive-ratio"), eps, tc=tc)
    keys = ("k", "eps", "potential_sum", "potential_bound", "k_threshold")
    return {k: getattr(rep, k) for k in keys}, rep.checks["potential"]


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltv-pc", description="Predictive control experiments on LTV systems.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: output.dir of the config)")

    common(sub.add_parser("simulate", help="run the declared controllers"))
    sw = sub.add_parser("regret-sweep", help="regret of PC_k over a range of k")
    common(sw)
    sw.add_argument("--k-min", type=int, required=True)
    sw.add_argument("--k-max", type=int, required=True)
    sw.add_argument("--k-step", type=int, default=1)
    vf = sub.add_parser("verify", help="run one verification suite")
    common(vf)
    vf.add_argument("--suite", required=True, choices=SUITES)
    common(sub.add_parser("constants", help="print the closed-form constants"))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2 already
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        out = cfg.out_dir(args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "regret-sweep":
            return cmd_regret_sweep(cfg, out, args.k_min, args.k_max, args.k_step)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.suite)
        return cmd_constants(cfg, out)
    except _REJECTED as exc:
        print(f"ltv-pc: rejected: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except LtvPcError as exc:
        where = f" at t={exc.t}" if getattr(exc, "t", None) is not None else ""
        print(f"ltv-pc: failed{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"ltv-pc: I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
