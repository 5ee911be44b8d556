"""Command-line interface.

Exit codes: 0 success, 2 infeasible balance problem, 1 usage or input error.
Settings come from built-in defaults, then an optional JSON ``--config`` file,
then explicit flags (highest precedence). The resolved settings are echoed
into every JSON report.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisSpec, check_regularity, expand
from .data import DataError, Dataset, load_dataset
from .estimator import estimate_ate, estimate_att
from .feasibility import feasibility_report, overlap_report, rho_from_sample
from .oracle import oracle_max_m
from .simlab import DeltaPolicy, ExperimentSpec, run_monte_carlo
from .solver import (BalanceSpec, Direction, MatchSolution, MPolicy, SearchLog,
                     solve_balance_match, worst_violation)
from .weights import check_balance, implied_weights

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("balmatch")


class UsageError(Exception):
    """Bad or missing settings; reported with usage text and exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


MATCH_DEFAULTS = {
    "input": None,
    "basis": "raw",
    "delta": None,
    "delta_schedule": None,
    "replacement": "with",
    "m_policy": "maximize",
    "seed": 0,
    "out": "balmatch-out",
    "threads": 1,
    "exact_limit": 12,
}

DEFAULTS = {
    "match": dict(MATCH_DEFAULTS, direction="both"),
    "estimate": dict(MATCH_DEFAULTS, estimand="ate", level=0.95, matches=None),
    "simulate": {
        "dgp": "A", "estimators": "balance_match", "n_grid": "200,400,800", "reps": 100,
        "seed": 0, "delta": None, "delta_schedule": None, "basis": None, "sigma": 1.0,
        "replacement": "with", "out": "balmatch-out", "threads": 1,
        "nn_metric": "euclidean", "nn_matches": 1,
    },
    "diagnose": {
        "input": None, "basis": "raw", "delta": None, "delta_schedule": None,
        "rho": None, "delta0": None, "K": None, "box_side": None, "pi_file": None,
        "c_const": 1.0, "r_pi": 2.0, "seed": 0, "out": "balmatch-out", "threads": 1,
    },
    "oracle": {
        "input": None, "basis": "raw", "delta": None, "delta_schedule": None,
        "direction": "treated_to_control", "replacement": "with", "seed": 0,
        "out": "balmatch-out", "threads": 1,
    },
}


# ---------------------------------------------------------------- argument parsing


def _add(p, *flags, **kw):
    p.add_argument(*flags, default=argparse.SUPPRESS, **kw)


def _common(p):
    _add(p, "--config", help="JSON file of settings; flags override it")
    _add(p, "--seed", type=int, help="random seed (default 0)")
    _add(p, "--out", help="output directory (default balmatch-out)")
    _add(p, "--threads", type=int, help="worker cap (default 1)")


def _balance_flags(p, basis_default="raw"):
    _add(p, "--basis", help=f"basis spec, e.g. raw, poly:2, spline:0.5 (default {basis_default})")
    _add(p, "--delta", help="tolerance: one value, comma list of length K, or inf")
    _add(p, "--delta-schedule", type=float, metavar="C",
         help="delta_k = C * sd(B_k) / sqrt(n) (default when --delta is absent, C=0.5)")


def _solver_flags(p):
    _add(p, "--input", help="dataset CSV with header id,z,y,x1,...")
    _balance_flags(p)
    _add(p, "--replacement", choices=("with", "without"))
    _add(p, "--m-policy", help="maximize (default), fixed:M or below:M")
    _add(p, "--exact-limit", type=int, help="largest target arm solved exactly (default 12)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="balmatch", description="Matching for covariate balance.")
    parser.add_argument("--version", action="version", version=f"balmatch {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("match", help="solve the balance problem and write matches and weights")
    _solver_flags(p)
    _add(p, "--direction", choices=("both", "treated_to_control", "control_to_treated", "t2c", "c2t"))
    _common(p)

    p = sub.add_parser("estimate", help="match, then estimate the ATE or ATT")
    _solver_flags(p)
    _add(p, "--estimand", choices=("ate", "att"))
    _add(p, "--level", type=float, help="confidence level (default 0.95)")
    _add(p, "--matches", help="reuse a matches CSV instead of solving")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo experiment on a built-in DGP")
    _add(p, "--dgp", help="A, B, C or D (default A)")
    _add(p, "--estimators", help="comma list from balance_match,nn_match (may be empty)")
    _add(p, "--n-grid", help="comma list of sample sizes")
    _add(p, "--reps", type=int, help="replications per sample size")
    _add(p, "--sigma", type=float, help="outcome noise scale")
    _add(p, "--nn-metric", choices=("euclidean", "mahalanobis"))
    _add(p, "--nn-matches", type=int)
    _add(p, "--replacement", choices=("with", "without"))
    _balance_flags(p, basis_default="the DGP's own")
    _common(p)

    p = sub.add_parser("diagnose", help="feasibility diagnostics (rho, sample-size bound, overlap)")
    _add(p, "--input", help="dataset CSV; rho is then estimated from it")
    _balance_flags(p)
    _add(p, "--rho", type=float, help="use this rho instead of estimating it")
    _add(p, "--delta0", type=float, help="allowed failure probability in (0, 1)")
    _add(p, "--K", type=int, help="number of basis functions (taken from the data if omitted)")
    _add(p, "--box-side", help="box side per basis column (default: delta)")
    _add(p, "--pi-file", help="CSV with a 'pi' column of propensity values for the overlap check")
    _add(p, "--c-const", type=float, help="constant of the overlap threshold (default 1)")
    _add(p, "--r-pi", type=float, help="rate exponent of the overlap threshold (default 2)")
    _common(p)

    p = sub.add_parser("oracle", help="exhaustive maximum M for tiny instances")
    _add(p, "--input", help="dataset CSV (at most 8 units per arm)")
    _balance_flags(p)
    _add(p, "--direction", choices=("treated_to_control", "control_to_treated", "t2c", "c2t"))
    _add(p, "--replacement", choices=("with", "without"))
    _common(p)
    return parser


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose")}
    path = flags.pop("config", None)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown setting {key!r} in config file")
            cfg[key] = value
    cfg.update(flags)
    return cfg


# ---------------------------------------------------------------- helpers


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required setting(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))


def _delta_spec(cfg: dict, bm) -> BalanceSpec:
    if cfg.get("delta") is not None and cfg.get("delta_schedule") is not None:
        raise UsageError("give either --delta or --delta-schedule, not both")
    if cfg.get("delta") is None:
        c = cfg.get("delta_schedule")
        return BalanceSpec.schedule(bm, 0.5 if c is None else float(c))
    vals = _floats(cfg["delta"], "delta")
    if len(vals) == 1:
        vals = vals * bm.K
    if len(vals) != bm.K:
        raise UsageError(f"--delta has {len(vals)} values but the basis has K={bm.K}")
    return BalanceSpec(np.array(vals))


def _floats(value, name: str) -> list:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",")]
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')} must be numbers separated by commas") from None


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _write_json(path: Path, command: str, cfg: dict, body: dict) -> None:
    doc = {"version": __version__, "command": command, "config": cfg,
           "seeds": {"seed": cfg.get("seed")}, **body}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _directions(choice: str) -> list:
    if choice == "both":
        return list(Direction)
    return [Direction.parse(choice)]


def _solve(ds: Dataset, bm, spec: BalanceSpec, directions, cfg: dict):
    with_rep = cfg["replacement"] == "with"
    policy = MPolicy.parse(cfg["m_policy"])
    logs = {d: SearchLog() for d in directions}

    def one(d):
        return solve_balance_match(bm, ds.z, spec, d, with_rep, policy, int(cfg["exact_limit"]),
                                   int(cfg["seed"]), logs[d])

    threads = max(1, int(cfg["threads"]))
    if threads > 1 and len(directions) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(directions))) as pool:
            sols = list(pool.map(one, directions))
    else:
        sols = [one(d) for d in directions]
    return dict(zip(directions, sols)), logs


def _log_dict(lg: SearchLog) -> dict:
    return {"mode": lg.mode, "lp_bound": lg.lp_bound,
            "probes": [{"m": p.m_value, "status": p.status, "worst_ratio": p.worst_ratio}
                       for p in lg.probes]}


def _write_matches(path: Path, ds: Dataset, sols: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["direction", "source_id", "target_id"])
        for d, sol in sols.items():
            for s, t in zip(sol.sources.tolist(), sol.targets.tolist()):
                w.writerow([d.value, ds.ids[s], ds.ids[t]])


def _write_weights(path: Path, ds: Dataset, weights) -> None:
    est = weights.estimator_form
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "z", "weight_raw", "weight_estimator_form"])
        for i in range(ds.n):
            w.writerow([ds.ids[i], int(ds.z[i]), repr(float(weights.raw[i])), repr(float(est[i]))])


def read_matches(path, ds: Dataset) -> dict:
    """Load a matches CSV back into per-direction solutions."""
    index = {uid: i for i, uid in enumerate(ds.ids)}
    pairs: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["direction", "source_id", "target_id"]:
            raise DataError(f"{path}: header must be direction,source_id,target_id")
        for lineno, row in enumerate(reader, start=1):
            try:
                d = Direction.parse(row["direction"])
                pairs.setdefault(d, []).append((index[row["source_id"]], index[row["target_id"]]))
            except (KeyError, ValueError):
                raise DataError(f"{path}: row {lineno}: unknown direction or unit id") from None
    sols = {}
    for d, pr in pairs.items():
        src, tgt = (np.array(a, dtype=np.int64) for a in zip(*pr))
        per = np.bincount(src, minlength=ds.n)[ds.z == d.source_arm]
        if per.min() != per.max() or per.min() == 0:
            raise DataError(f"{path}: sources in {d.value} are not all matched equally often")
        sols[d] = MatchSolution(int(per[0]), src, tgt, d)
    return sols


def _prepare(cfg: dict):
    _require(cfg, "input")
    ds = load_dataset(cfg["input"])
    ds.require_both_arms()
    bm = expand(ds, BasisSpec.parse(cfg["basis"]))
    return ds, bm, _delta_spec(cfg, bm)


def _infeasible_report(bm, ds, spec, failed) -> dict:
    return {d.value: worst_violation(bm, ds.z, spec, d) for d in failed}


# ---------------------------------------------------------------- commands


def cmd_match(cfg: dict) -> int:
    ds, bm, spec = _prepare(cfg)
    directions = _directions(cfg["direction"])
    sols, logs = _solve(ds, bm, spec, directions, cfg)
    out = _out_dir(cfg)
    body = {"basis_columns": bm.column_names, "delta": spec.delta.tolist(),
            "search": {d.value: _log_dict(lg) for d, lg in logs.items()},
            "basis_notes": list(bm.warnings)}
    failed = [d for d, s in sols.items() if s is None]
    if failed:
        body["status"] = "infeasible"
        body["infeasible_directions"] = [d.value for d in failed]
        body["worst_violations"] = _infeasible_report(bm, ds, spec, failed)
        _write_json(out / "balance.json", "match", cfg, body)
        print(f"infeasible: {', '.join(d.value for d in failed)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    w = implied_weights(tuple(sols.values()), ds)
    report = check_balance(w, bm, spec)
    body.update(status="feasible",
                m_values={d.value: s.m_value for d, s in sols.items()},
                notes={d.value: list(s.notes) for d, s in sols.items()},
                balance=report.to_dict(bm.column_names))
    _write_matches(out / "matches.csv", ds, sols)
    _write_weights(out / "weights.csv", ds, w)
    _write_json(out / "balance.json", "match", cfg, body)
    print(json.dumps({d.value: s.m_value for d, s in sols.items()}, sort_keys=True))
    return EXIT_OK


def cmd_estimate(cfg: dict) -> int:
    ds, bm, spec = _prepare(cfg)
    att = cfg["estimand"] == "att"
    directions = [Direction.TREATED_TO_CONTROL] if att else list(Direction)
    out = _out_dir(cfg)
    if cfg.get("matches"):
        sols = read_matches(cfg["matches"], ds)
        missing = [d for d in directions if d not in sols]
        if missing:
            raise DataError("matches file lacks direction(s) "
                            + ", ".join(d.value for d in missing))
        sols = {d: sols[d] for d in directions}
    else:
        sols, _ = _solve(ds, bm, spec, directions, cfg)
        failed = [d for d, s in sols.items() if s is None]
        if failed:
            _write_json(out / "estimate.json", "estimate", cfg, {
                "status": "infeasible",
                "infeasible_directions": [d.value for d in failed],
                "worst_violations": _infeasible_report(bm, ds, spec, failed)})
            print(f"infeasible: {', '.join(d.value for d in failed)}", file=sys.stderr)
            return EXIT_INFEASIBLE
    if att:
        result = estimate_att(ds, sols[Direction.TREATED_TO_CONTROL])
    else:
        result = estimate_ate(ds, tuple(sols[d] for d in Direction), bm, float(cfg["level"]))
    body = {"status": "ok", "estimate": result.to_dict(),
            "regularity": check_regularity(bm).to_dict()}
    _write_json(out / "estimate.json", "estimate", cfg, body)
    print(json.dumps(_jsonable(result.to_dict()), sort_keys=True))
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    from .baseline import NNSpec

    estimators = tuple(e.strip() for e in str(cfg["estimators"] or "").split(",") if e.strip())
    n_grid = tuple(int(v) for v in _floats(cfg["n_grid"], "n_grid")) if estimators else ()
    if cfg.get("delta") is not None and cfg.get("delta_schedule") is not None:
        raise UsageError("give either --delta or --delta-schedule, not both")
    if cfg.get("delta") is not None:
        delta = DeltaPolicy("fixed", values=tuple(_floats(cfg["delta"], "delta")))
    else:
        c = cfg.get("delta_schedule")
        delta = DeltaPolicy("schedule", 0.5 if c is None else float(c))
    exp = ExperimentSpec(
        dgp=str(cfg["dgp"]), estimators=estimators, n_grid=n_grid, reps=int(cfg["reps"]),
        base_seed=int(cfg["seed"]), delta=delta,
        basis=None if cfg.get("basis") is None else BasisSpec.parse(cfg["basis"]),
        nn=NNSpec(cfg["nn_metric"], int(cfg["nn_matches"])),
        with_replacement=cfg["replacement"] == "with", sigma=float(cfg["sigma"]))
    report = run_monte_carlo(exp, threads=max(1, int(cfg["threads"])))
    out = _out_dir(cfg)
    (out / "mc.csv").write_text(report.to_csv())
    body = report.to_json_dict()
    body.pop("version")
    body["seeds"] = dict(body["seeds"], seed=cfg["seed"])
    doc = {"version": __version__, "command": "simulate", "config": cfg, **body}
    (out / "mc.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def _read_pi(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "pi" not in reader.fieldnames:
            raise DataError(f"{path}: needs a 'pi' column")
        try:
            return np.array([float(r["pi"]) for r in reader])
        except ValueError:
            raise DataError(f"{path}: non-numeric pi value") from None


def cmd_diagnose(cfg: dict) -> int:
    _require(cfg, "delta0")
    if cfg.get("rho") is None and cfg.get("input") is None:
        raise UsageError("give --rho or --input")
    est, K, n_actual = None, cfg.get("K"), None
    if cfg.get("input") is not None:
        ds, bm, spec = _prepare(cfg)
        side = None if cfg.get("box_side") is None else np.array(_floats(cfg["box_side"], "box_side"))
        if side is not None and len(side) not in (1, bm.K):
            raise UsageError(f"--box-side needs 1 or K={bm.K} values")
        if cfg.get("rho") is None:
            est = rho_from_sample(bm, ds.z, spec, side, seed=int(cfg["seed"]))
        K = bm.K if K is None else K
        n_actual = ds.n
    if K is None:
        raise UsageError("missing required setting(s): --K")
    overlap = None
    if cfg.get("pi_file") is not None:
        pi = _read_pi(cfg["pi_file"])
        overlap = overlap_report(pi, int(K), n_actual or len(pi), float(cfg["r_pi"]),
                                 float(cfg["c_const"]))
    rep = feasibility_report(est if est is not None else float(cfg["rho"]), float(cfg["delta0"]),
                             int(K), n_actual, overlap)
    out = _out_dir(cfg)
    _write_json(out / "feasibility.json", "diagnose", cfg, {"feasibility": rep.to_dict()})
    print(json.dumps(_jsonable({"n_min": rep.n_min, **rep.verdicts}), sort_keys=True))
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    ds, bm, spec = _prepare(cfg)
    d = Direction.parse(cfg["direction"])
    m = oracle_max_m(bm, ds.z, spec, d, cfg["replacement"] == "with")
    out = _out_dir(cfg)
    _write_json(out / "oracle.json", "oracle", cfg,
                {"direction": d.value, "max_m": m, "delta": spec.delta.tolist()})
    print(json.dumps({"max_m": m}))
    return EXIT_OK if m is not None else EXIT_INFEASIBLE


COMMANDS = {"match": cmd_match, "estimate": cmd_estimate, "simulate": cmd_simulate,
            "diagnose": cmd_diagnose, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = parser._subparsers._group_actions[0].choices[ns.command]
    try:
        cfg = resolve_config(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"balmatch {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"balmatch {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
