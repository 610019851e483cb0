"""``fragscope`` command line: reproducible experiments with JSON and CSV output.

Every run writes ``manifest.json`` before computing, then ``summary.json``
and one or more CSV files.  Exit codes: 0 success, 1 precondition or
configuration error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, engine, fluctuation, tagged
from . import config as cfgmod
from .errors import ConfigError, InvariantViolation, PreconditionError
from .exponent import phi, phi_derivatives, psi_and_alignment, solve_pbar, spectrum
from .model import make_policy, model_from_spec
from .parallel import chunks, fan_out, resolve_workers
from .seeding import MASK64, derive_seed, stream

log = logging.getLogger("fragscope")

COMMANDS = ("exponent", "simulate", "tagged", "pair", "mt1", "theorem", "growth", "corr", "fluct", "sum")
DETERMINISTIC = ("exponent", "sum")

# stream families for the commands that are not analysis experiments
S_SIMULATE = 11
S_TAGGED = 12
S_PAIR = 13
S_FLUCT = 14
S_WINDOW = 15

FLUCT_DEFAULTS = {
    "smallball": dict(grid=[4, 16, 64, 256], n=1_000_000, params=dict(r=0.0, h=1.0)),
    "mintail": dict(grid=[4, 8, 16, 32, 64, 128, 256], n=1_000_000, params=dict(u=1.0)),
    "corridor": dict(grid=[16, 32, 64, 128, 256], n=10_000_000, params=dict(f=1.0, g=1.0)),
    "liminf": dict(grid=[16, 32, 64, 128], n=10_000_000, params=dict(alpha=1.0, l=0.62, C=4.0)),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text):
    text = text.strip()
    if text.startswith("["):
        return [float(v) for v in json.loads(text)]
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in _floats(text)]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fragscope", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fragscope {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="flat key = value config file")
    g.add_argument("--model", dest="model.kind", help="model spec, e.g. binary-uniform or binary-powerlaw:1.5")
    g.add_argument("--a", dest="model.a", type=float)
    g.add_argument("--epsilon", dest="truncation.epsilon", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--output-dir", dest="output_dir")
    g.add_argument("--workers", type=int)
    g.add_argument("-v", "--verbose", action="store_true")
    e = common.add_argument_group("experiment")
    e.add_argument("--t", type=float)
    e.add_argument("--horizon", type=float)
    e.add_argument("--grid", type=_floats, help="comma list or JSON list of times")
    e.add_argument("--replicas", type=int)
    e.add_argument("--n", type=int)
    e.add_argument("--n-lhs", dest="n_lhs", type=int)
    e.add_argument("--n-rhs", dest="n_rhs", type=int)
    e.add_argument("--prune-margin", dest="prune_margin", type=float)
    e.add_argument("--ceiling", type=int)
    e.add_argument("--delta", type=float)
    e.add_argument("--F", dest="F", choices=analysis.FUNCTIONALS)
    e.add_argument("--level", type=float)
    e.add_argument("--rhs-method", dest="rhs_method", choices=analysis.RHS_METHODS)
    e.add_argument("--beta", type=_floats)
    e.add_argument("--measure", choices=(tagged.P, tagged.Q))
    e.add_argument("--cov-time", dest="cov_time", type=float)
    e.add_argument("--n-cov", dest="n_cov", type=int)
    f = common.add_argument_group("fluctuation")
    f.add_argument("--check", choices=fluctuation.CHECKS + ("sum",))
    f.add_argument("--levy")
    for name in ("r", "h", "u", "f", "g", "alpha", "l", "C"):
        f.add_argument(f"--{name}", type=float)
    f.add_argument("--k", type=int)
    f.add_argument("--N", type=int)
    f.add_argument("--calibration", type=_ints)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} command")
    return p


# -- config resolution -------------------------------------------------------------

def resolve_config(args) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose")}
    base = cfgmod.load(args.config) if args.config else {}
    cfg = cfgmod.merge(base, flags)
    cfg["command"] = args.command
    if cfg["command"] not in DETERMINISTIC and cfg.get("seed") is None:
        raise ConfigError(f"'{args.command}' needs an explicit --seed (or seed = ... in the config)")
    if cfg.get("seed") is not None and not 0 <= int(cfg["seed"]) <= MASK64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg["output_dir"] = str(Path(cfg.get("output_dir") or Path("out") / args.command).resolve())
    return cfg


def build_model(cfg):
    kind = cfg.get("model.kind", "binary-uniform")
    if cfg.get("model.a") is None and cfg.get("model.atoms") is None:
        return model_from_spec(kind)
    return model_from_spec({"kind": kind, "a": cfg.get("model.a"), "atoms": cfg.get("model.atoms")})


def _get(cfg, key, default):
    v = cfg.get(key)
    return default if v is None else v


# -- output ------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class Output:
    def __init__(self, cfg):
        self.dir = Path(cfg["output_dir"])
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            probe = self.dir / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {self.dir} is not writable: {exc}") from exc
        self.cfg = cfg
        self.t0 = time.perf_counter()
        self.manifest = {"command": cfg["command"], "config": cfg, "version": __version__,
                         "started_at": datetime.now(timezone.utc).isoformat(), "status": "running",
                         "files": []}
        self._manifest()

    def _manifest(self):
        write_json(self.dir / "manifest.json", self.manifest)

    def csv(self, name, header, rows):
        write_csv(self.dir / name, header, rows)
        self.manifest["files"].append(name)

    def summary(self, obj):
        write_json(self.dir / "summary.json", obj)
        self.manifest["files"].append("summary.json")

    def finish(self, status, error=None):
        self.manifest["status"] = status
        self.manifest["wall_time_s"] = time.perf_counter() - self.t0
        if error is not None:
            self.manifest["error"] = error
        self._manifest()


# -- commands ----------------------------------------------------------------------

def cmd_exponent(cfg, out, workers):
    model = build_model(cfg)
    eps = float(_get(cfg, "truncation.epsilon", 0.0))
    profile = solve_pbar(model, eps)
    summary = {"model": model.describe(), **profile.as_dict()}
    if model.is_finite:
        qbar, residual = psi_and_alignment(model, profile)
        summary.update(qbar=qbar, qbar_residual=residual)
    betas = cfg.get("beta") or []
    summary["spectrum"] = [spectrum(model, float(b), profile, eps).as_dict() for b in betas]
    ps = np.round(np.linspace(-0.9, 4.0, 50), 10)
    rows = []
    for p in ps:
        d1, d2 = phi_derivatives(model, float(p), eps)
        rows.append((float(p), phi(model, float(p), eps), d1, d2))
    out.csv("phi.csv", ("p", "phi", "phi_prime", "phi_second"), rows)
    return summary


def _policy(cfg, model):
    return make_policy(model, float(_get(cfg, "truncation.epsilon", 0.0)))


def _sim_chunk(model, policy, profile, grid, margin, c_prime, ceiling, seed, start, count):
    series = []
    for r in range(start, start + count):
        series.append(engine.run(model, policy, float(grid[-1]), grid, profile, margin, stream(seed, r),
                                 c_prime=c_prime, ceiling=ceiling))
    return series


def cmd_simulate(cfg, out, workers):
    model = build_model(cfg)
    policy = _policy(cfg, model)
    profile = solve_pbar(model, policy.epsilon)
    grid = np.asarray(sorted(_get(cfg, "grid", [1, 2, 3, 4, 5])), dtype=float)
    replicas = int(_get(cfg, "replicas", 10))
    margin = float(_get(cfg, "prune_margin", engine.default_margin(grid[-1])))
    ceiling = int(_get(cfg, "ceiling", engine.DEFAULT_CEILING))
    delta = cfg.get("delta")
    c_prime = profile.c + float(delta) if delta is not None else None
    seed = derive_seed(int(cfg["seed"]), S_SIMULATE)
    tasks = [(model, policy, profile, grid, margin, c_prime, ceiling, seed, s, n) for _, s, n in chunks(replicas, 5)]
    runs = [ts for part in fan_out(_sim_chunk, tasks, workers) for ts in part]
    out.csv("trackers.csv", ("replica_id",) + engine.TrackerSeries.COLUMNS,
            ((i,) + row for i, ts in enumerate(runs) for row in ts.rows()))
    mart = np.array([ts.martingale for ts in runs])
    maxs = np.array([ts.max_size for ts in runs])
    se = mart.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(grid.size)
    return {"model": model.describe(), "epsilon": policy.epsilon, "profile": profile.as_dict(), "grid": grid,
            "replicas": replicas, "martingale_mean": mart.mean(axis=0), "martingale_stderr": se,
            "max_size_mean": maxs.mean(axis=0), "events_total": sum(ts.events for ts in runs),
            "peak_active": max(ts.peak_active for ts in runs), "prune_cutoff": runs[0].prune_cutoff}


def cmd_tagged(cfg, out, workers):
    model = build_model(cfg)
    policy = _policy(cfg, model)
    profile = solve_pbar(model, policy.epsilon)
    horizon = float(_get(cfg, "horizon", 10.0))
    n = int(_get(cfg, "n", 10))
    measure = _get(cfg, "measure", tagged.P)
    rng = stream(derive_seed(int(cfg["seed"]), S_TAGGED), 0)
    paths = [tagged.simulate_tagged(model, policy, horizon, measure, profile, rng) for _ in range(n)]
    out.csv("jumps.csv", ("path_id", "time", "jump"),
            ((i, t, j) for i, p in enumerate(paths) for t, j in p.rows()))
    ends = np.array([p.xi(horizon) for p in paths])
    return {"model": model.describe(), "measure": measure, "horizon": horizon, "n": n,
            "xi_end_mean": float(ends.mean()), "jumps_total": int(sum(p.jump_times.size for p in paths)),
            "zeta_end": [tagged.zeta(p, horizon, profile) for p in paths],
            "running_min": [tagged.running_min(p, horizon, profile) for p in paths]}


def cmd_pair(cfg, out, workers):
    model = build_model(cfg)
    policy = _policy(cfg, model)
    horizon = float(_get(cfg, "horizon", 50.0))
    n = int(_get(cfg, "n", 1000))
    rng = stream(derive_seed(int(cfg["seed"]), S_PAIR), 0)
    t, lg, cz = tagged.simulate_pairs(model, policy, horizon, n, rng)
    out.csv("pairs.csv", ("pair_id", "split_time", "common_neglog", "censored"),
            ((i, float(t[i]), float(lg[i]), int(cz[i])) for i in range(n)))
    est = analysis.MCEstimate.from_samples(t)
    return {"model": model.describe(), "horizon": horizon, "n": n, "ET": est.as_dict(),
            "censored_fraction": float(cz.mean())}


def cmd_mt1(cfg, out, workers):
    model = build_model(cfg)
    kind = _get(cfg, "F", "const")
    F = analysis.FSpec(kind, float(_get(cfg, "level", analysis.DEFAULT_LEVELS[kind])))
    n = int(_get(cfg, "n", 100_000))
    res = analysis.mt1_check(model, F, float(_get(cfg, "t", 1.0)), int(_get(cfg, "n_lhs", n)),
                             int(_get(cfg, "n_rhs", n)), int(cfg["seed"]), workers,
                             rhs_method=_get(cfg, "rhs_method", "auto"))
    out.csv("chunks.csv", ("side", "chunk", "n", "sum", "sum_sq"), res.chunks)
    return {"model": model.describe(), **res.summary()}


def cmd_theorem(cfg, out, workers):
    model = build_model(cfg)
    policy = _policy(cfg, model)
    profile = solve_pbar(model, policy.epsilon)
    grid = _get(cfg, "grid", list(range(10, 65, 5)))
    res = analysis.theorem_experiment(model, policy, profile, grid, int(_get(cfg, "replicas", 500)),
                                      cfg.get("prune_margin"), int(cfg["seed"]), workers)
    out.csv("neglog_max.csv", ("replica_id", "t", "neglog_max"),
            ((i, float(t), float(res.neglog_max[i, j])) for i in range(res.neglog_max.shape[0])
             for j, t in enumerate(res.grid)))
    return {"model": model.describe(), "profile": profile.as_dict(), **res.summary()}


def cmd_growth(cfg, out, workers):
    model = build_model(cfg)
    policy = _policy(cfg, model)
    profile = solve_pbar(model, policy.epsilon)
    grid = _get(cfg, "grid", list(range(10, 32, 3)))
    res = analysis.growth_rate(model, policy, profile, float(_get(cfg, "delta", 0.1)), grid,
                               int(_get(cfg, "replicas", 100)), int(cfg["seed"]), workers,
                               prune_margin=cfg.get("prune_margin"))
    out.csv("counts.csv", ("replica_id", "t", "near_max_count"),
            ((i, float(t), int(res.counts[i, j])) for i in range(res.counts.shape[0])
             for j, t in enumerate(res.grid)))
    return {"model": model.describe(), "profile": profile.as_dict(), **res.summary()}


def cmd_corr(cfg, out, workers):
    model = build_model(cfg)
    profile = solve_pbar(model)
    n = int(_get(cfg, "n", 100_000))
    res = analysis.correlation_experiment(model, profile, float(_get(cfg, "t", 50.0)), n, int(cfg["seed"]),
                                          workers, cov_time=float(_get(cfg, "cov_time", 10.0)),
                                          n_cov=cfg.get("n_cov"))
    out.csv("split_times.csv", ("pair_id", "split_time"), enumerate(res.split_times.tolist()))
    return {"model": model.describe(), **res.summary()}


def _sum(cfg, out):
    res = fluctuation.summability_check(float(_get(cfg, "alpha", 1.0)), int(_get(cfg, "k", 3)),
                                        int(_get(cfg, "N", 1_000_000)))
    return {"check": "sum", **res.as_dict()}


def cmd_fluct(cfg, out, workers):
    check = cfg.get("check")
    if check is None:
        raise ConfigError("fluct needs --check")
    if check == "sum":
        return _sum(cfg, out)
    d = FLUCT_DEFAULTS[check]
    params = {k: float(_get(cfg, k, v)) for k, v in d["params"].items()}
    levy = fluctuation.levy_from_spec(_get(cfg, "levy", "poisson"))
    grid = _get(cfg, "grid", d["grid"])
    s = fluctuation.series(check, levy, grid, params, int(_get(cfg, "n", d["n"])),
                           derive_seed(int(cfg["seed"]), S_FLUCT), workers)
    out.csv("points.csv", ("t", "scaled", "scaled_stderr", "prob", "prob_stderr", "n"), s.rows())
    summary = {"levy": levy.describe(), **s.summary()}
    if check == "corridor":
        cal = _get(cfg, "calibration", list(range(0, len(grid), 2)))
        calib = fluctuation.calibrate_corridor(s.grid, s.scaled, params["f"], params["g"], cal)
        summary["calibration"] = calib.as_dict()
        summary["bound_scaled"] = [calib.c_prime * fluctuation.corridor_bound(t, params["f"], params["g"]) * t ** 1.5
                                   for t in s.grid]
        # the end-window display of the same corollary, with its own constant
        w = fluctuation.series("window", levy, grid, params, int(_get(cfg, "n", d["n"])),
                               derive_seed(int(cfg["seed"]), S_WINDOW), workers)
        out.csv("window_points.csv", ("t", "scaled", "scaled_stderr", "prob", "prob_stderr", "n"), w.rows())
        wcal = fluctuation.calibrate_corridor(w.grid, w.scaled, params["f"], params["g"], cal, bound="window")
        summary["window"] = {**w.summary(), "calibration": wcal.as_dict(),
                             "bound_scaled": [wcal.c_prime * fluctuation.window_bound(t, params["f"], params["g"])
                                              * t ** 1.5 for t in w.grid]}
    return summary


def cmd_sum(cfg, out, workers):
    return _sum(cfg, out)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def run_cli(argv=None) -> int:
    parser = build_parser()
    out = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        workers = resolve_workers(cfg.get("workers"))
        out = Output(cfg)
        summary = HANDLERS[cfg["command"]](cfg, out, workers)
        out.summary(summary)
        out.finish("ok")
        log.info("wrote %s", out.dir)
        return 0
    except PreconditionError as exc:
        print(f"fragscope: error: {exc}", file=sys.stderr)
        if out is not None:
            out.finish("precondition-error", str(exc))
        return 1
    except InvariantViolation as exc:
        print(f"fragscope: invariant violated: {exc}", file=sys.stderr)
        if out is not None:
            out.finish("invariant-violation", str(exc))
        return 2


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
