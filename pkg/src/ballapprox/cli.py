"""Command line harness: ``ballapprox {verify,train,fourier,report}``.

Every run resolves a JSON config (defaults, then ``--config``, then flags),
echoes it to ``<out>/<command>_config.json`` and writes
``<out>/<command>_summary.json`` with one entry per check.  The exit status
is 0 only if every enabled check passed.
"""

import argparse
import copy
import glob
import json
import math
import os
import sys
import time

import numpy as np

from . import fourier, geometry, relu_net, suites, training

DEFAULTS = {
    "verify": {
        "dims": [1, 2, 3, 5],
        "depths": [1, 2, 3, 4],
        "points": 10_000,
        "draws": 10,
        "tol": 1e-9,
        "bias_rule": "tied",
        "gradient_points": 1000,
        "gradient_depths": [1, 2, 3],
        "gradient_rtol": 1e-4,
        "region_d": 2,
        "region_n": 3,
    },
    "train": {
        "d": 2,
        "N": 8,
        "scheme": "equal-angle",
        "family_seed": 0,
        "M0": 25.0,
        "mode": "radial",
        "c": 1000.0,
        "eta": None,
        "T": 1_000_000,
        "schedule": "log:5",
        "energy_samples": 0,
        "error_samples": 100_000,
        "grad_samples": 20_000,
        "sampler": "sobol",
        "estimator": "mc",
        "magnitude_window": [1e4, 1e6],
        "magnitude_slope": [1 / 3, 0.01],
        "error_window": [1e2, 1e6],
        "error_slope": [-1 / 3, 0.05],
    },
    "fourier": {
        "presets": ["gibbs", "pinsky", "third", "exploratory"],
        "gibbs_N": [64, 128, 256],
        "gibbs_band": [0.084, 0.094],
        "pinsky_N": 1024,
        "third_N": 8192,
        "exploratory_x": "1/3,1/4,0,0,1/5",
        "exploratory_N": 24,
        "cache_dir": None,
        "scans": [],
    },
    "report": {"inputs": None, "plots": True},
}


class ConfigError(ValueError):
    pass


def resolve_config(command, path=None, seed=None, threads=None, out=None):
    cfg = copy.deepcopy(DEFAULTS[command])
    cfg.update({"seed": 0, "threads": 1, "out": "runs"})
    if path:
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("command", command) != command:
            raise ConfigError(f"config is for {doc['command']!r}, not {command!r}")
        unknown = set(doc) - set(cfg) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in doc.items() if k != "command"})
    for key, val in (("seed", seed), ("threads", threads), ("out", out)):
        if val is not None:
            cfg[key] = val
    if not 0 <= int(cfg["seed"]) < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    cfg["command"] = command
    return cfg


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _check(name, passed, value=None, detail=""):
    return {"name": name, "passed": bool(passed), "value": value, "detail": detail}


def _finish(cfg, checks, extra=None):
    out = cfg["out"]
    cmd = cfg["command"]
    doc = {"command": cmd, "checks": checks, "passed": all(c["passed"] for c in checks)}
    doc.update(extra or {})
    _write(os.path.join(out, f"{cmd}_summary.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for c in checks:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"[{mark}] {cmd}: {c['name']} {c['value'] if c['value'] is not None else ''} {c['detail']}".rstrip())
    return 0 if doc["passed"] else 1


def cmd_verify(cfg):
    results = [
        suites.equivalence_suite(cfg["dims"], cfg["depths"], cfg["points"], cfg["draws"], cfg["seed"],
                                 cfg["tol"], cfg["bias_rule"]),
        suites.gradient_suite(cfg["dims"], cfg["gradient_depths"], cfg["gradient_points"], cfg["seed"],
                              rtol=cfg["gradient_rtol"]),
        suites.region_suite(cfg["region_d"], cfg["region_n"], seed=cfg["seed"]),
    ]
    lines = ["suite,passed,max_deviation,tolerance,cases"]
    lines += [f"{r.name},{r.passed},{r.max_deviation!r},{r.tolerance!r},{r.cases}" for r in results]
    _write(os.path.join(cfg["out"], "verify_report.csv"), "\n".join(lines) + "\n")
    checks = [_check(r.name, r.passed, r.max_deviation, r.detail) for r in results]
    return _finish(cfg, checks)


def _slope_check(trace, field, window, target, name):
    lo, hi = window
    try:
        fit = training.fit_power_law(trace, field, (lo, hi))
    except ValueError as exc:
        return _check(name, True, None, f"skipped: {exc}"), None
    ok = abs(fit.slope - target[0]) <= target[1]
    return _check(name, ok, fit.slope, f"target {target[0]:.4f} +- {target[1]} on t in [{lo:g}, {hi:g}]"), fit


def cmd_train(cfg):
    fam = geometry.make_directions(cfg["d"], cfg["N"], cfg["scheme"], cfg["family_seed"])
    w0 = relu_net.NetworkWeights.from_family(fam, cfg["M0"])
    tc = training.TrainConfig(
        mode=cfg["mode"], eta=cfg["eta"], c=cfg["c"], T=int(cfg["T"]), energy_samples=cfg["energy_samples"],
        error_samples=cfg["error_samples"], grad_samples=cfg["grad_samples"], seed=cfg["seed"],
        schedule=cfg["schedule"], sampler=cfg["sampler"], estimator=cfg["estimator"], threads=cfg["threads"],
    )
    trace = training.train(tc, w0, fam)
    _write(os.path.join(cfg["out"], "trace.csv"), trace.to_csv())
    checks = []
    fits = {}
    if cfg["mode"] in ("radial", "radial-exact"):
        mags = np.array(trace.mags)
        checks.append(_check("magnitudes increasing", bool(np.all(np.diff(mags, axis=0) > 0)) if len(trace) > 1 else True))
        c, fit = _slope_check(trace, "mag_1", cfg["magnitude_window"], cfg["magnitude_slope"], "magnitude slope")
        checks.append(c)
        if fit:
            fits["magnitude"] = fit.__dict__
        if cfg["error_samples"]:
            c, fit = _slope_check(trace, "l1", cfg["error_window"], cfg["error_slope"], "L1 error slope")
            checks.append(c)
            if fit:
                fits["l1"] = fit.__dict__
    elif cfg["energy_samples"]:
        e = np.array(trace.energy)
        se = np.array(trace.energy_se)
        rise = np.diff(e) - 3 * np.hypot(se[1:], se[:-1])
        checks.append(_check("energy non-increasing", bool(np.all(rise <= 0)) if e.size > 1 else True,
                             float(rise.max()) if e.size > 1 else None))
        checks.append(_check("direction drift", bool(trace.diagnostics.get("drift_ok", True)),
                             trace.diagnostics.get("max_direction_drift")))
    return _finish(cfg, checks, {"fits": fits})


def _scan_out(cfg, name, scan):
    _write(os.path.join(cfg["out"], f"scan_{name}.csv"), scan.to_csv())


def cmd_fourier(cfg):
    checks = []
    presets = cfg["presets"]
    unknown = set(presets) - {"gibbs", "pinsky", "third", "exploratory"}
    if unknown:
        raise ConfigError(f"unknown presets {sorted(unknown)}")
    if "gibbs" in presets:
        rows = ["N,overshoot"]
        lo, hi = cfg["gibbs_band"]
        vals = []
        for N in cfg["gibbs_N"]:
            g = fourier.gibbs_overshoot(N)
            vals.append(g)
            rows.append(f"{N},{g!r}")
        _write(os.path.join(cfg["out"], "gibbs.csv"), "\n".join(rows) + "\n")
        checks.append(_check("gibbs overshoot in band", all(lo <= v <= hi for v in vals), max(vals),
                             f"band [{lo}, {hi}], N={cfg['gibbs_N']}"))
        _scan_out(cfg, "d1_quarter", fourier.divergence_scan(1, "1/4", np.arange(1, 257)))
    if "pinsky" in presets:
        Nmax = int(cfg["pinsky_N"])
        table = fourier.shell_counts(3, Nmax * Nmax - 1, cache_dir=cfg["cache_dir"])
        scan = fourier.divergence_scan(3, "0", np.arange(1, Nmax + 1), table)
        _scan_out(cfg, "d3_center", scan)
        a_lo = scan.window_amplitude(Nmax // 8, Nmax // 4)
        a_hi = scan.window_amplitude(Nmax // 2, Nmax)
        checks.append(_check("pinsky persistent oscillation", a_hi >= 0.5 * a_lo, a_hi / a_lo,
                             f"amplitude ratio, windows [{Nmax // 2},{Nmax}] / [{Nmax // 8},{Nmax // 4}]"))
    if "third" in presets:
        Nmax = int(cfg["third_N"])
        table = fourier.shell_counts(5, Nmax * Nmax - 1, cache_dir=cfg["cache_dir"])
        scan = fourier.divergence_scan(5, "0", np.arange(1, Nmax + 1), table)
        _scan_out(cfg, "d5_center", scan)
        top = int(math.log2(Nmax)) - 1
        ends = [float(scan.running_max[scan.N <= 2 ** (i + 1)][-1]) for i in range(5, top + 1)]
        ok = len(ends) >= 2 and all(b > a for a, b in zip(ends, ends[1:]))
        checks.append(_check("third phenomenon running max increasing", ok, ends[-1] if ends else None,
                             f"dyadic windows i=5..{top}"))
    if "exploratory" in presets:
        scan = fourier.divergence_scan(5, cfg["exploratory_x"], np.arange(1, int(cfg["exploratory_N"]) + 1))
        _scan_out(cfg, "d5_offcenter", scan)
    for spec in cfg["scans"]:
        N = np.arange(spec.get("start", 1), spec["stop"] + 1)
        _scan_out(cfg, spec["name"], fourier.divergence_scan(spec["d"], spec.get("x", "0"), N))
    return _finish(cfg, checks)


SIDES = {
    "fourier": "Fourier partial sums (negative side: no pointwise convergence from any start)",
    "train": "ReLU network (positive side: pointwise convergence with power-law rates)",
    "verify": "Network construction checks",
}


def _plots(cfg, base):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    made = []
    for path in sorted(glob.glob(os.path.join(base, "**", "trace.csv"), recursive=True)):
        with open(path) as fh:
            tr = training.TrainTrace.from_csv(fh.read())
        t = tr.column("t")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name in ("mag_1", "l1"):
            y = tr.column(name)
            sel = (t > 0) & np.isfinite(y) & (y > 0)
            if sel.any():
                ax.loglog(t[sel], y[sel], ".-", label=name)
        ax.set_xlabel("t")
        ax.legend()
        out = os.path.join(cfg["out"], "trace.svg")
        fig.savefig(out, format="svg")
        plt.close(fig)
        made.append(out)
        break
    for path in sorted(glob.glob(os.path.join(base, "**", "scan_*.csv"), recursive=True)):
        with open(path) as fh:
            rows = [r.split(",") for r in fh.read().splitlines()[1:]]
        N = np.array([int(r[0]) for r in rows])
        dev = np.array([float(r[2]) for r in rows])
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(N, dev, lw=0.6)
        ax.set_xscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("|S_N(x) - f(x)|")
        name = os.path.splitext(os.path.basename(path))[0]
        out = os.path.join(cfg["out"], f"{name}.svg")
        fig.savefig(out, format="svg")
        plt.close(fig)
        made.append(out)
    return made


def cmd_report(cfg):
    base = cfg["inputs"] or cfg["out"]
    if not os.path.isdir(base):
        raise ConfigError(f"input directory {base!r} does not exist")
    found = {}
    for path in sorted(glob.glob(os.path.join(base, "**", "*_summary.json"), recursive=True)):
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("command") in SIDES:
            found.setdefault(doc["command"], doc)
    if not found:
        raise ConfigError(f"no run summaries found under {base!r}")
    lines = ["# Ball indicator approximation: run summary", ""]
    checks = []
    for cmd in ("fourier", "train", "verify"):
        lines += [f"## {SIDES[cmd]}", ""]
        doc = found.get(cmd)
        if doc is None:
            lines += [f"GAP: no `{cmd}` run found, so these checks are missing.", ""]
            continue
        lines += ["| check | result | value | detail |", "|---|---|---|---|"]
        for c in doc["checks"]:
            checks.append(c)
            val = "" if c["value"] is None else f"{c['value']:.6g}"
            lines.append(f"| {c['name']} | {'pass' if c['passed'] else 'FAIL'} | {val} | {c['detail']} |")
        lines.append("")
    if cfg["plots"]:
        made = _plots(cfg, base)
        if made:
            lines += ["## Plots", ""] + [f"![{os.path.basename(p)}]({os.path.basename(p)})" for p in made] + [""]
    gaps = [c for c in SIDES if c not in found]
    lines.append(f"{sum(c['passed'] for c in checks)}/{len(checks)} checks passed"
                 + (f"; gaps: {', '.join(gaps)}" if gaps else "") + ".")
    _write(os.path.join(cfg["out"], "summary.md"), "\n".join(lines) + "\n")
    ok = all(c["passed"] for c in checks)
    print(f"summary written to {os.path.join(cfg['out'], 'summary.md')} ({'all checks pass' if ok else 'failures present'})")
    return 0 if ok else 1


COMMANDS = {"verify": cmd_verify, "train": cmd_train, "fourier": cmd_fourier, "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(prog="ballapprox", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker threads for Monte Carlo")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args.config, args.seed, args.threads, args.out)
        if args.command != "report":
            os.makedirs(cfg["out"], exist_ok=True)
            echo = {k: v for k, v in cfg.items() if k != "out"}
            _write(os.path.join(cfg["out"], f"{args.command}_config.json"),
                   json.dumps(echo, indent=2, sort_keys=True) + "\n")
        start = time.perf_counter()
        code = COMMANDS[args.command](cfg)
        print(f"{args.command} finished in {time.perf_counter() - start:.1f}s, exit {code}", file=sys.stderr)
        return code
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
