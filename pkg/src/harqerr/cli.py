"""Command-line experiment runner.

Each subcommand reads an optional JSON config (``--config``), applies flag
overrides, validates the result, runs the experiment and writes a CSV table
plus a JSON report next to it. SNR inputs are given in dB and converted to
linear scale here, once; everything below this module works in linear units.

Exit codes: 0 success, 2 invalid configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, fading, kernels
from ._mc import DEFAULT_SEED
from .error_models import ModelKind, SnrSchedule, failure_prob, sample_error_sequences
from .pep import PepProblem, pep_joint_mc, sweep_ratio
from .per_models import PerModel, db_to_linear, eval_per, fit_exponential, linear_to_db, load_table_csv
from .phy_sim import CodeSpec, estimate_joint_errors, measure_per

log = logging.getLogger("harqerr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
OUTPUT_DIR_ENV = "HARQERR_OUTPUT_DIR"


class ConfigError(Exception):
    def __init__(self, key, msg):
        super().__init__(f"config key '{key}': {msg}")
        self.key = key


# --- validation ------------------------------------------------------------

_REQUIRED = object()


def _int(lo=None):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(key, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(key, f"must be >= {lo}, got {v}")
        return v

    return check


def _num(positive=False):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(key, f"expected a finite number, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(key, f"must be > 0, got {v}")
        return float(v)

    return check


def _num_list(positive=False, nonempty=True):
    item = _num(positive)

    def check(key, v):
        if not isinstance(v, list) or (nonempty and not v):
            raise ConfigError(key, f"expected a non-empty list of numbers, got {v!r}")
        return [item(key, x) for x in v]

    return check


def _int_list(lo=None):
    item = _int(lo)

    def check(key, v):
        if not isinstance(v, list) or not v:
            raise ConfigError(key, f"expected a non-empty list of integers, got {v!r}")
        return [item(key, x) for x in v]

    return check


def _opt_int(lo=None):
    inner = _int(lo)
    return lambda key, v: None if v is None else inner(key, v)


def _str(choices=None):
    def check(key, v):
        if not isinstance(v, str):
            raise ConfigError(key, f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(key, f"must be one of {sorted(choices)}, got {v!r}")
        return v

    return check


def _opt_str(key, v):
    return None if v is None else _str()(key, v)


def _bool(key, v):
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true or false, got {v!r}")
    return v


def _per_model_cfg(key, v):
    if not isinstance(v, dict):
        raise ConfigError(key, f"expected an object, got {v!r}")
    variant = v.get("variant")
    allowed = {
        "ideal": {"variant", "snr_threshold_db", "snr_threshold"},
        "exponential": {"variant", "snr_threshold_db", "snr_threshold", "slope_g"},
        "table": {"variant", "csv"},
        "measured": {"variant", "snr_db", "trials"},
    }
    if variant not in allowed:
        raise ConfigError(f"{key}.variant", f"must be one of {sorted(allowed)}, got {variant!r}")
    for k in v:
        if k not in allowed[variant]:
            raise ConfigError(f"{key}.{k}", f"unknown key for variant '{variant}'")
    out = {"variant": variant}
    if variant in ("ideal", "exponential"):
        has_db, has_lin = "snr_threshold_db" in v, "snr_threshold" in v
        if has_db == has_lin:
            raise ConfigError(f"{key}.snr_threshold_db", "give exactly one of snr_threshold_db or snr_threshold")
        if has_db:
            out["snr_threshold_db"] = _num()(f"{key}.snr_threshold_db", v["snr_threshold_db"])
        else:
            th = _num()(f"{key}.snr_threshold", v["snr_threshold"])
            if th < 0:
                raise ConfigError(f"{key}.snr_threshold", "must be >= 0")
            out["snr_threshold"] = th
    if variant == "exponential":
        if "slope_g" not in v:
            raise ConfigError(f"{key}.slope_g", "required")
        out["slope_g"] = _num(positive=True)(f"{key}.slope_g", v["slope_g"])
    if variant == "table":
        if "csv" not in v:
            raise ConfigError(f"{key}.csv", "required")
        out["csv"] = _str()(f"{key}.csv", v["csv"])
    if variant == "measured":
        out["snr_db"] = _num_list()(f"{key}.snr_db", v.get("snr_db", _DEFAULT_PER_GRID))
        out["trials"] = _int(1)(f"{key}.trials", v.get("trials", 20000))
    return out


_DEFAULT_PER_GRID = [round(-4.0 + 0.5 * i, 1) for i in range(23)]

_COMMON = {
    "seed": (_opt_int(0), None),
    "workers": (_int(1), 1),
    "out": (_opt_str, None),
}

SCHEMAS = {
    "pep-sweep": {
        "k": (_int(2), 2),
        "d": (_num(positive=True), 1.0),
        "snr1_db": (_num(), -3.0),
        "t_values": (_num_list(positive=True), [round(10 ** (-1 + 0.1 * i), 12) for i in range(31)]),
        "grid_points": (_int(16), 2048),
        "trials": (_int(0), 0),
    },
    "link-sim": {
        "n_bits": (_int(1), 128),
        "prefix_db": (_num_list(nonempty=False), [-1.0]),
        "snr_db": (_num_list(), [1.0, 2.0, 3.0, 4.0, 5.0]),
        "trials": (_int(1), 100000),
        "per_trials": (_opt_int(1), None),
    },
    "fading-avg": {
        "n_bits": (_int(1), 128),
        "k_values": (_int_list(1), [2, 3]),
        "avg_snr_db": (_num_list(), [0.0, 2.5, 5.0, 7.5, 10.0]),
        "trials": (_int(2), 10000),
        "link_trials": (_int(1), 10),
        "ie_trials": (_int(1), 200000),
        "exact": (_bool, True),
        "per_model": (_per_model_cfg, {"variant": "measured"}),
    },
    "avg-rounds": {
        "snr_threshold_db": (_num(), 3.0),
        "slope_g": (_num(positive=True), 0.5),
        "avg_snr_db": (_num_list(), [0.0, 5.0, 10.0, 15.0, 20.0]),
        "trials": (_int(0), 0),
    },
    "fit-per": {
        "n_bits": (_int(1), 128),
        "snr_db": (_num_list(), [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
        "trials": (_int(1), 20000),
        "table_csv": (_opt_str, None),
        "per_min": (_num(), 0.0),
    },
    "sysgen": {
        "model": (_str({"ie", "de"}), "de"),
        "per_model": (_per_model_cfg, _REQUIRED),
        "rounds_db": (_num_list(), _REQUIRED),
        "k_max": (_opt_int(1), None),
        "trials": (_int(1), 1000),
    },
}


def validate(experiment: str, raw: dict) -> dict:
    """Check keys and types; fill defaults. Raises ConfigError naming the key."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    schema = {**_COMMON, **SCHEMAS[experiment]}
    if "experiment" in raw and raw["experiment"] != experiment:
        raise ConfigError("experiment", f"config is for '{raw['experiment']}', not '{experiment}'")
    out = {}
    for key in raw:
        if key != "experiment" and key not in schema:
            raise ConfigError(key, "unknown key")
    for key, (check, default) in schema.items():
        if key in raw:
            out[key] = check(key, raw[key])
        elif default is _REQUIRED:
            raise ConfigError(key, "required")
        else:
            out[key] = check(key, default) if default is not None else None
    return out


# --- helpers -----------------------------------------------------------------


def _seed_for(seed: int, *tag: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=tag)
    return int(ss.generate_state(1, np.uint64)[0])


def _build_per(cfg: dict, seed: int, workers: int, n_bits: int = 128):
    """Return (PerModel, description dict) for a validated per_model block."""
    v = cfg["variant"]
    if v in ("ideal", "exponential"):
        th = cfg["snr_threshold"] if "snr_threshold" in cfg else db_to_linear(cfg["snr_threshold_db"])
        if v == "ideal":
            return PerModel.ideal(th), {"variant": v, "snr_threshold": th}
        return PerModel.exponential(th, cfg["slope_g"]), {"variant": v, "snr_threshold": th, "slope_g": cfg["slope_g"]}
    if v == "table":
        return load_table_csv(cfg["csv"]), {"variant": v, "csv": cfg["csv"]}
    snrs = db_to_linear(np.asarray(cfg["snr_db"]))
    log.info("measuring single-round PER at %d SNRs (linear %s)", len(snrs), np.round(snrs, 4).tolist())
    per, _ = measure_per(CodeSpec(n_bits=n_bits), snrs, cfg["trials"], _seed_for(seed, 7), workers=workers)
    keep = per > 0
    if keep.sum() < 2:
        raise ConfigError("per_model.snr_db", "fewer than two SNR points with nonzero measured PER")
    mono = np.minimum.accumulate(per[keep])
    points = list(zip(snrs[keep].tolist(), mono.tolist()))
    return PerModel.from_table(points), {"variant": "measured", "points": points}


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


# --- experiments ---------------------------------------------------------------


def run_pep_sweep(cfg, seed):
    snr1 = db_to_linear(cfg["snr1_db"])
    log.info("pep-sweep: k=%d d=%g snr1=%.6g (linear)", cfg["k"], cfg["d"], snr1)
    rows = sweep_ratio(cfg["k"], cfg["d"], snr1, cfg["t_values"], n=cfg["grid_points"])
    header = ["t", "p_joint", "p_single", "lower_bound", "ratio", "tol"]
    if cfg["trials"] > 0:
        header += ["p_joint_mc", "stderr_mc"]
    table = []
    for i, r in enumerate(rows):
        row = [r["t"], r["p_joint"], r["p_single"], r["lower"], r["ratio"], r["tol"]]
        if cfg["trials"] > 0:
            sched = SnrSchedule([snr1 * r["t"] ** l for l in range(cfg["k"])])
            p, se = pep_joint_mc(PepProblem(cfg["d"], sched), cfg["trials"], _seed_for(seed, 1, i), cfg["workers"])
            row += [p, se]
        table.append(row)
    ratios = [r["ratio"] for r in rows]
    summary = {"min_ratio": min(ratios), "max_ratio": max(ratios),
               "bounds_hold": all(r["lower"] - r["tol"] <= r["p_joint"] <= r["p_single"] + r["tol"] for r in rows)}
    return header, table, summary


def run_link_sim(cfg, seed):
    code = CodeSpec(n_bits=cfg["n_bits"])
    prefix = [db_to_linear(x) for x in cfg["prefix_db"]]
    pre_acc = float(np.sum(prefix))
    per_trials = cfg["per_trials"] or cfg["trials"]
    targets = [db_to_linear(x) for x in cfg["snr_db"]]
    for key_i, tgt in enumerate(targets):
        if tgt < pre_acc:
            raise ConfigError("snr_db", f"entry {cfg['snr_db'][key_i]} dB is below the accumulated prefix SNR "
                                        f"{linear_to_db(pre_acc):.3f} dB")
    # PER at every accumulated prefix level, then at each target
    levels = list(np.cumsum(prefix)) + targets
    log.info("link-sim: prefix (linear) %s, accumulated targets %s", prefix, targets)
    per, per_se = measure_per(code, levels, per_trials, _seed_for(seed, 2), workers=cfg["workers"])
    n_pre = len(prefix)
    header = ["snr_db", "last_round_db", "f_exact", "stderr_exact", "marginal", "stderr_marginal",
              "f_de", "stderr_de", "f_ie", "stderr_ie"]
    table = []
    for i, tgt in enumerate(targets):
        last = tgt - pre_acc
        sched = SnrSchedule(prefix + [last])
        est = estimate_joint_errors(code, sched, cfg["trials"], _seed_for(seed, 3, i), workers=cfg["workers"])
        p_all = np.concatenate([per[:n_pre], [per[n_pre + i]]])
        se_all = np.concatenate([per_se[:n_pre], [per_se[n_pre + i]]])
        f_ie = float(np.prod(p_all))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(p_all > 0, se_all / p_all, 0.0)
        se_ie = f_ie * float(np.sqrt(np.sum(rel**2)))
        table.append([cfg["snr_db"][i], linear_to_db(last) if last > 0 else float("-inf"),
                      est.f_hat[-1], est.stderr[-1], est.marginal[-1], est.stderr_marginal[-1],
                      p_all[-1], se_all[-1], f_ie, se_ie])
    summary = {
        "rounds": n_pre + 1,
        "prefix_per": per[:n_pre].tolist(),
        "exact_above_de_3sigma": int(sum(r[2] > r[6] + 3 * math.hypot(r[3], r[7]) for r in table)),
    }
    return header, table, summary


def run_fading_avg(cfg, seed):
    per, per_desc = _build_per(cfg["per_model"], seed, cfg["workers"], cfg["n_bits"])
    code = CodeSpec(n_bits=cfg["n_bits"])
    k_top = max(cfg["k_values"])
    header = ["snr_db", "k", "f_exact", "stderr_exact", "f_de", "f_ie", "stderr_ie"]
    table = []
    for i, gdb in enumerate(cfg["avg_snr_db"]):
        avg = db_to_linear(gdb)
        log.info("fading-avg: avg_snr=%.6g (linear)", avg)
        if cfg["exact"]:
            ex, ex_se = fading.avg_failure_exact_mc(code, k_top, avg, cfg["trials"], cfg["link_trials"],
                                                    _seed_for(seed, 4, i), workers=cfg["workers"], all_rounds=True)
        for k in cfg["k_values"]:
            de = fading.avg_failure_de_numeric(per, k, avg)
            ie, ie_se = fading.avg_failure_ie_mc(per, k, avg, cfg["ie_trials"], _seed_for(seed, 5, i, k),
                                                 workers=cfg["workers"])
            f_ex, se_ex = (ex[k - 1], ex_se[k - 1]) if cfg["exact"] else (float("nan"), float("nan"))
            table.append([gdb, k, f_ex, se_ex, de, ie, ie_se])
    return header, table, {"per_model": per_desc}


def run_avg_rounds(cfg, seed):
    th = db_to_linear(cfg["snr_threshold_db"])
    g = cfg["slope_g"]
    per = PerModel.exponential(th, g)
    header = ["snr_db", "k_bar", "k_bar_series"]
    if cfg["trials"] > 0:
        header += ["k_bar_mc", "stderr_mc"]
    table = []
    for i, gdb in enumerate(cfg["avg_snr_db"]):
        avg = db_to_linear(gdb)
        row = [gdb, fading.avg_rounds(th, g, avg), fading.avg_rounds_series(th, g, avg)]
        if cfg["trials"] > 0:
            row += list(fading.avg_rounds_mc(per, avg, cfg["trials"], _seed_for(seed, 6, i), workers=cfg["workers"]))
        table.append(row)
    summary = {"snr_threshold": th, "slope_g": g,
               "max_series_gap": max(abs(r[1] - r[2]) for r in table)}
    return header, table, summary


def run_fit_per(cfg, seed):
    if cfg["table_csv"]:
        with open(cfg["table_csv"], newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            snr_db = np.array([float(r["snr_db"]) for r in rows])
            per = np.array([float(r["per"]) for r in rows])
        except (KeyError, ValueError) as exc:
            raise ConfigError("table_csv", f"expected numeric columns snr_db,per ({exc})") from exc
        se = np.full_like(per, float("nan"))
    else:
        snr_db = np.asarray(cfg["snr_db"])
        per, se = measure_per(CodeSpec(n_bits=cfg["n_bits"]), db_to_linear(snr_db), cfg["trials"],
                              _seed_for(seed, 8), workers=cfg["workers"])
    snr = db_to_linear(snr_db)
    use = (per > cfg["per_min"]) & (per > 0)
    try:
        model = fit_exponential(list(zip(snr[use].tolist(), per[use].tolist())))
    except ValueError as exc:
        raise ConfigError("snr_db" if not cfg["table_csv"] else "table_csv", str(exc)) from exc
    fit = eval_per(model, snr)
    decaying = use & (per < 1.0 - 1e-12)
    with np.errstate(divide="ignore"):
        gap = np.abs(np.log(fit[decaying]) - np.log(per[decaying]))
    header = ["snr_db", "per", "stderr_per", "per_fit"]
    table = [[a, b, c, d] for a, b, c, d in zip(snr_db.tolist(), per.tolist(), se.tolist(), fit.tolist())]
    summary = {
        "snr_threshold": model.snr_threshold,
        "snr_threshold_db": linear_to_db(model.snr_threshold) if model.snr_threshold > 0 else None,
        "slope_g": model.slope_g,
        "max_abs_log_error": float(gap.max()) if gap.size else None,
    }
    return header, table, summary


def run_sysgen(cfg, seed):
    per, per_desc = _build_per(cfg["per_model"], seed, 1)
    sched = SnrSchedule.from_db(cfg["rounds_db"])
    k_max = cfg["k_max"] or len(sched)
    if k_max > len(sched):
        raise ConfigError("k_max", f"{k_max} exceeds the {len(sched)} scheduled rounds")
    kind = ModelKind(cfg["model"].upper())
    used = sample_error_sequences(kind, per, sched, k_max, cfg["trials"], seed)
    header = ["packet", "rounds_used", "delivered", "error_flags"]
    table = []
    for i, r in enumerate(used.tolist()):
        n = abs(r)
        flags = "1" * (n - 1) + ("0" if r > 0 else "1")
        table.append([i, n, r > 0, flags])
    nack = [float(np.mean((np.abs(used) > k) | (used == -k))) for k in range(1, k_max + 1)]
    summary = {
        "per_model": per_desc,
        "delivery_ratio": float(np.mean(used > 0)),
        "mean_rounds": float(np.mean(np.abs(used))),
        "nack_rate": nack,
        "model_failure_prob": [failure_prob(kind, per, sched.prefix(k)) for k in range(1, k_max + 1)],
    }
    return header, table, summary


RUNNERS = {
    "pep-sweep": run_pep_sweep,
    "link-sim": run_link_sim,
    "fading-avg": run_fading_avg,
    "avg-rounds": run_avg_rounds,
    "fit-per": run_fit_per,
    "sysgen": run_sysgen,
}


# --- entry point -----------------------------------------------------------------


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "expected KEY=VALUE")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harqerr", description="HARQ decoding-error model experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--trials", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out", help="CSV output path (report goes alongside, .json)")
        s.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key; VALUE is parsed as JSON when possible")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _output_path(cfg, experiment) -> Path:
    if cfg["out"]:
        return Path(cfg["out"])
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{experiment}.csv"


def write_outputs(path: Path, header, table, report) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([_fmt(x) for x in row])
    report_path = path.with_suffix(".json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return report_path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    exp = args.experiment
    try:
        raw = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"not valid JSON ({exc})") from exc
        raw = dict(raw) if isinstance(raw, dict) else raw
        if isinstance(raw, dict):
            raw.update(_parse_set(args.set))
            for key in ("seed", "trials", "workers", "out"):
                val = getattr(args, key)
                if val is not None:
                    raw[key] = val
        cfg = validate(exp, raw)
        seed_source = "config" if cfg["seed"] is not None else "default"
        seed = cfg["seed"] if cfg["seed"] is not None else DEFAULT_SEED
        header, table, summary = RUNNERS[exp](cfg, seed)
        path = _output_path(cfg, exp)
        report = {
            "experiment": exp,
            "config": cfg,
            "seed": seed,
            "seed_source": seed_source,
            "version": __version__,
            "backend": kernels.BACKEND,
            "rows": len(table),
            "csv": str(path),
            "summary": summary,
        }
        report_path = write_outputs(path, header, table, report)
    except ConfigError as exc:
        print(f"harqerr {exp}: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"harqerr {exp}: invalid value: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"harqerr {exp}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {path} and {report_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
