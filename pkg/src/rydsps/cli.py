"""Command-line entry point.

Subcommands: theory, simulate, analyze, fit, metrics, reproduce, rerun.
Every run writes ``manifest.json`` into its output directory.
Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analysis, contaminant, dynamics, metrics, retrieval, streamgen
from .core.config import Config, dump_config, load_config
from .core.tags import TagFormatError, read_tags, write_tags

CONFIG_ENV = "RYDSPS_CONFIG_DIR"
FIGURES = ("fig2", "fig3", "fig4", "fig5")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
NUMERICAL_ERRORS = (dynamics.IntegrationError, retrieval.QuadratureError, retrieval.SeriesError,
                    contaminant.FitError, FloatingPointError, ArithmeticError)


class ReproducibilityError(RuntimeError):
    pass


def resolve_config(name: str) -> Path:
    """A path as given, else a file in $RYDSPS_CONFIG_DIR, else a bundled config."""
    p = Path(name)
    if p.is_file():
        return p.resolve()
    candidates = [name] if name.endswith(".ini") else [name, name + ".ini"]
    dirs = []
    if os.environ.get(CONFIG_ENV):
        dirs.append(Path(os.environ[CONFIG_ENV]))
    dirs.append(Path(str(resources.files("rydsps").joinpath("data"))))
    for d in dirs:
        for c in candidates:
            if (d / c).is_file():
                return (d / c).resolve()
    raise FileNotFoundError(f"config {name!r} not found")


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command: str, argv, out: Path):
        self.command = command
        self.argv = list(argv)
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []
        self.seeds: list[int] = []
        self.config_path: str | None = None
        self.config_sha256: str | None = None
        self.summary: dict = {}
        self.t0 = time.perf_counter()

    def use_config(self, path: Path) -> Config:
        cfg = load_config(path)
        self.config_path = str(path)
        self.config_sha256 = hashlib.sha256(dump_config(cfg).encode()).hexdigest()
        return cfg

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def write_rows(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        return p

    def write_summary(self, name: str = "summary.csv") -> Path:
        return self.write_rows(name, ["quantity", "value"], [(k, _fmt(v)) for k, v in self.summary.items()])

    def finish(self) -> dict:
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config_path,
            "config_sha256": self.config_sha256,
            "seeds": self.seeds,
            "version": __version__,
            "outputs": [{"path": p.name, "sha256": _sha256(p)} for p in self.outputs],
            "wall_time_s": time.perf_counter() - self.t0,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return manifest


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# -- theory -----------------------------------------------------------------

def theory_report(cfg: Config, time_domain: bool = True) -> dict:
    ph, sched = cfg.physics, cfg.schedule
    traj = dynamics.evolve(dynamics.ground_state(), ph, sched)
    eta_w = dynamics.write_efficiency(traj, sched.t_w)
    try:
        eta_s = dynamics.storage_efficiency(traj, sched.t_w, sched.t_s)
    except ValueError:
        eta_s = 0.0  # nothing written, nothing to store
    if ph.omega_c_ret > 0 and ph.od > 0:
        rp = retrieval.dimensionless_params(ph)
        S = retrieval.SpinWaveProfile.uniform()
        eta_r = retrieval.retrieval_efficiency(S, rp)
        eta_r_time = retrieval.emitted_efficiency(S, rp) if time_domain else float("nan")
    else:
        eta_r = eta_r_time = 0.0
    return {
        "eta_w": eta_w,
        "eta_s": eta_s,
        "eta_r": eta_r,
        "p_th": retrieval.generation_probability(eta_w, eta_s, eta_r),
        "eta_r_time_domain": eta_r_time,
        "raman_detuning_2pi_MHz": dynamics.raman_detuning(ph) / (2 * math.pi * 1e6),
    }


def cmd_theory(args, run: Run):
    cfg = run.use_config(resolve_config(args.config or "baseline.ini"))
    report = theory_report(cfg)
    run.summary.update(report)
    run.write_rows("theory.csv", list(report), [[repr(float(v)) for v in report.values()]])
    if args.envelope:
        ph = cfg.physics
        if ph.omega_c_ret <= 0 or ph.od <= 0:
            raise ValueError("no retrieval drive: envelope undefined")
        rp = retrieval.dimensionless_params(ph)
        t_max = 20.0 / rp.omega_tilde**2
        table = retrieval.envelope_table(retrieval.SpinWaveProfile.uniform(), rp, t_max, args.envelope)
        run.write_rows("envelope.csv", ["t_tilde", "re_E", "im_E", "abs2_E"],
                       [[repr(float(x)) for x in row] for row in table])


# -- simulate / analyze -------------------------------------------------------

def _simulate_streams(cfg: Config, seed, topology, pulses):
    sim = streamgen.sim_config_from_config(cfg, seed, topology, pulses)
    src = streamgen.source_from_config(cfg)
    if sim.topology == "HBT":
        return sim, {"tags": streamgen.simulate(src, sim)}
    return sim, {
        "tags_par": streamgen.simulate(src, replace(sim, hom_parallel=True)),
        "tags_perp": streamgen.simulate(src, replace(sim, hom_parallel=False)),
    }


def cmd_simulate(args, run: Run):
    cfg = run.use_config(resolve_config(args.config or "desk_hbt.ini"))
    sim, streams = _simulate_streams(cfg, args.seed, args.topology, args.pulses)
    run.seeds.append(sim.seed)
    ext = "csv" if args.format == "csv" else "ttag"
    for name, stream in streams.items():
        write_tags(stream, run.path(f"{name}.{ext}"), args.format)
        run.summary[f"{name}_events"] = len(stream)
    run.summary.update(topology=sim.topology, seed=sim.seed, pulses=sim.total_pulses)
    run.write_summary()


def hbt_summary(a: analysis.HBTAnalysis) -> dict:
    g = a.g2
    return {
        "B1_per_s": a.profiles.background[1],
        "B2_per_s": a.profiles.background[2],
        "photons_per_pulse_ch1": a.profiles.expected_photons(1),
        "photons_per_pulse_ch2": a.profiles.expected_photons(2),
        "g2_raw": g.g2_raw, "g2_raw_err": g.g2_raw_err,
        "g2_back": g.g2_back, "g2_back_err": g.g2_back_err,
        "g2_sub": g.g2_sub, "g2_sub_err": g.g2_sub_err,
        "central_counts": g.central_counts, "side_peak_mean": g.side_mean,
    }


def hom_summary(h: analysis.HOMAnalysis) -> dict:
    return {
        "V_raw": h.visibility_raw, "V_raw_err": h.visibility_raw_err,
        "V_sub": h.visibility, "V_sub_err": h.visibility_err,
        "c": float("nan") if h.overlap is None else h.overlap,
    }


def _histogram_rows(a: analysis.HBTAnalysis):
    return [(f"{t:g}", int(c), f"{b:.9g}", f"{c - b:.9g}")
            for t, c, b in zip(a.data.centers, a.data.counts, a.background.counts)]


def run_analysis(run: Run, cfg: Config, streams: dict, pulses: int, prefix: str = ""):
    sched = cfg.schedule
    if "tags" in streams:
        a = analysis.analyze_hbt(streams["tags"], sched, pulses)
        run.write_rows(f"{prefix}histogram.csv", ["tau_ns", "counts", "background", "subtracted"],
                       _histogram_rows(a))
        run.summary.update(hbt_summary(a))
        return a
    h = analysis.analyze_hom(streams["tags_par"], streams["tags_perp"], sched, cfg.beamsplitter, pulses)
    rows = [(f"{t:g}", int(cp), int(cq), f"{bp:.9g}", f"{bq:.9g}")
            for t, cp, cq, bp, bq in zip(h.parallel.data.centers, h.parallel.data.counts,
                                         h.perpendicular.data.counts, h.parallel.background.counts,
                                         h.perpendicular.background.counts)]
    run.write_rows(f"{prefix}histogram.csv",
                   ["tau_ns", "counts_par", "counts_perp", "background_par", "background_perp"], rows)
    run.summary.update(hom_summary(h))
    return h


def cmd_analyze(args, run: Run):
    cfg = run.use_config(resolve_config(args.config or "desk_hbt.ini"))
    streams = {"tags": read_tags(args.tags[0])} if len(args.tags) == 1 else \
        {"tags_par": read_tags(args.tags[0]), "tags_perp": read_tags(args.tags[1])}
    n_pulses = args.pulses or cfg.schedule.n_pulses * cfg.simulation.n_trains
    run.summary["pulses"] = n_pulses
    run_analysis(run, cfg, streams, n_pulses)
    run.write_summary()


# -- fit ----------------------------------------------------------------------

TRAIN_COLUMNS = {"pulse_index": "n", "success_rate": "rate", "n": "n", "rate": "rate",
                 "stderr": "stderr", "n_trials": "n_trials"}


def read_train_csv(path):
    """Per-pulse yields: ``pulse_index,success_rate[,stderr]`` (``n,rate`` accepted too)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    if not rows:
        raise ValueError("fit input is empty")
    cols = {TRAIN_COLUMNS[k]: k for k in rows[0] if k in TRAIN_COLUMNS}
    if not {"n", "rate"} <= set(cols):
        raise ValueError("fit input needs columns pulse_index, success_rate (optional stderr)")

    def col(key):
        if key not in cols:
            return None
        return np.array([float(r[cols[key]]) for r in rows])

    return col("n"), col("rate"), col("stderr"), col("n_trials")


def fit_rows(fit: contaminant.FitResult):
    p, e = fit.params, fit.stderr
    return [("p_c", repr(p.p_c), repr(float(e[0]))), ("tau_c", repr(p.tau_c), repr(float(e[1]))),
            ("p_max", repr(p.p_max), repr(float(e[2]))), ("chi2", repr(fit.chi2), ""), ("dof", fit.dof, "")]


def cmd_fit(args, run: Run):
    n, rate, stderr, trials = read_train_csv(args.csv)
    fit = contaminant.fit_pulse_train(n, rate, stderr=stderr, t_p=args.t_p, n_trials=trials)
    run.write_rows("fit.csv", ["parameter", "value", "stderr"], fit_rows(fit))
    model = contaminant.photon_prob(n, fit.params)
    run.write_rows("fit_residuals.csv", ["pulse_index", "success_rate", "model", "residual"],
                   [(int(k), repr(float(y)), repr(float(m)), repr(float(y - m))) for k, y, m in zip(n, rate, model)])
    run.summary.update(p_c=fit.params.p_c, tau_c=fit.params.tau_c, p_max=fit.params.p_max, chi2=fit.chi2)


# -- metrics ------------------------------------------------------------------

def cmd_metrics(args, run: Run):
    if args.csv in (None, "bundled"):
        rows = metrics.reference_measurements()
        errors = []
    else:
        rows, errors = metrics.load_measurements(args.csv)
    table = metrics.benchmark_table(rows)
    with open(run.path("metrics.csv"), "w", newline="") as fh:
        table.to_csv(fh)
    for label, msg in errors + table.errors:
        print(f"row {label!r} skipped: {msg}", file=sys.stderr)
    run.summary.update(rows=len(table.rows), rejected=len(errors) + len(table.errors))


# -- reproduce ----------------------------------------------------------------

def _fig2(run: Run, args):
    cfg = run.use_config(resolve_config(args.config or "desk_hbt.ini"))
    sim, streams = _simulate_streams(cfg, args.seed, "HBT", args.pulses)
    run.seeds.append(sim.seed)
    run.summary.update(pulses=sim.total_pulses)
    run_analysis(run, cfg, streams, sim.total_pulses, "fig2_")
    run.write_summary("fig2_summary.csv")


def _fig3(run: Run, args):
    cfg = run.use_config(resolve_config(args.config or "desk_hom.ini"))
    sim, streams = _simulate_streams(cfg, args.seed, "HOM", args.pulses)
    run.seeds.append(sim.seed)
    run.summary.update(pulses=sim.total_pulses,
                       V_model=analysis.visibility_forward(cfg.source.mode_overlap, 0.0, cfg.beamsplitter))
    run_analysis(run, cfg, streams, sim.total_pulses, "fig3_")
    run.write_summary("fig3_summary.csv")


def pulse_train_yields(cp: contaminant.ContaminantParams, train_len: int, n_trains: int, seed: int):
    """Per-index success rate over Monte Carlo trains (no losses)."""
    src = streamgen.SourceModel(cp)
    sched = _train_schedule(cp.t_p, train_len)
    em = streamgen.simulate_emissions(src, sched, seed, n_trains)
    return em.success(train_len).mean(axis=0)


def _train_schedule(t_p, n_pulses):
    from .core.params import PulseSchedule

    # timing inside the period is irrelevant for the chain; keep it valid
    return PulseSchedule(t_w=0.1 * t_p, t_s=0.1 * t_p, t_r=0.5 * t_p, t_p=t_p, n_pulses=n_pulses,
                         gate_window=0.4 * t_p)


def _fig4(run: Run, args):
    seed = 4 if args.seed is None else args.seed
    run.seeds.append(seed)
    truth = contaminant.ContaminantParams(0.019, 65e-6, 0.35, 2.5e-6)
    train_len, n_trains = 100, (args.pulses or 1_000_000) // 100
    y = pulse_train_yields(truth, train_len, n_trains, seed)
    n = np.arange(1, train_len + 1)
    fit = contaminant.fit_pulse_train(n, y, t_p=truth.t_p, n_trials=np.full(train_len, n_trains))
    model = contaminant.photon_prob(n, fit.params)
    err = np.sqrt(np.clip(y * (1 - y), 1e-12, None) / n_trains)
    run.write_rows("fig4b_train.csv", ["pulse_index", "success_rate", "stderr", "fit"],
                   [(int(k), repr(float(a)), repr(float(b)), repr(float(c))) for k, a, b, c in zip(n, y, err, model)])
    run.write_rows("fig4_fit.csv", ["parameter", "value", "stderr"], fit_rows(fit))

    grid = np.geomspace(1e-6, 1e-3, 200)
    curve = contaminant.steady_state_curve(grid, fit.params.p_c, fit.params.tau_c, fit.params.p_max)
    run.write_rows("fig4a_curve.csv", ["t_p_s", "P_s"], [(repr(float(t)), repr(float(p))) for t, p in zip(grid, curve)])
    mc_rows = []
    for k, t_p in enumerate((2.5e-6, 5e-6, 10e-6, 20e-6, 50e-6)):
        cp = truth.with_period(t_p)
        src = streamgen.SourceModel(cp)
        em = streamgen.simulate_emissions(src, _train_schedule(t_p, 200_000), seed + 1 + k)
        tail = (em.counts[2000:] > 0)
        p = tail.mean()
        mc_rows.append((repr(t_p), repr(float(p)), repr(float(math.sqrt(p * (1 - p) / tail.size))),
                        repr(contaminant.steady_state(cp))))
    run.write_rows("fig4a_mc.csv", ["t_p_s", "P_s_mc", "stderr_iid", "P_s_theory"], mc_rows)
    run.summary.update(p_c=fit.params.p_c, tau_c=fit.params.tau_c, p_max=fit.params.p_max)
    run.write_summary("fig4_summary.csv")


def _fig5(run: Run, args):
    ref = metrics.reference_sources()
    rows = []
    for r in ref:
        m = metrics.SourceMeasurement(r["P"], r["V"], r["g2"], r["R_Hz"], r["duty"], r["label"])
        s = metrics.source_metrics(m)
        rows.append((r["label"], r["type"], repr(s.eta), repr(s.fidelity), repr(s.brightness), repr(s.eta_exact)))
    run.write_rows("fig5_scatter.csv", ["label", "type", "eta", "F", "brightness", "eta_exact"], rows)
    run.summary.update(sources=len(rows))


def cmd_reproduce(args, run: Run):
    {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5}[args.figure](run, args)


# -- rerun --------------------------------------------------------------------

def cmd_rerun(args, run: Run | None = None):
    manifest_path = Path(args.manifest)
    old = json.loads(manifest_path.read_text())
    argv = list(old["argv"])
    out = Path(args.out) if args.out else manifest_path.parent
    if "--out" in argv:
        argv[argv.index("--out") + 1] = str(out)
    else:
        argv += ["--out", str(out)]
    code = main(argv)
    if code:
        return code
    new = json.loads((out / "manifest.json").read_text())
    if old.get("config_sha256") != new.get("config_sha256"):
        raise ReproducibilityError("config changed since the original run")
    before = {o["path"]: o["sha256"] for o in old["outputs"]}
    after = {o["path"]: o["sha256"] for o in new["outputs"]}
    bad = sorted(k for k in before if before[k] != after.get(k))
    if bad:
        raise ReproducibilityError(f"outputs differ from the manifest: {', '.join(bad)}")
    print(f"reproduced {len(before)} output(s)")
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rydsps", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--config", help=f"config path or name (searched in ${CONFIG_ENV}, then bundled)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--json-summary", action="store_true", help="print a JSON summary to stdout")
        if seed:
            sp.add_argument("--seed", type=int, help="override the config seed")
            sp.add_argument("--pulses", type=int, help="override the pulse count")

    th = sub.add_parser("theory", help="write/store/retrieve efficiencies")
    common(th)
    th.add_argument("--envelope", type=int, metavar="N", help="also write the emitted-field envelope on N points")
    s = sub.add_parser("simulate", help="Monte Carlo time tags")
    common(s, seed=True)
    s.add_argument("--format", choices=("csv", "binary"), default="csv")
    s.add_argument("--topology", choices=("HBT", "HOM"), type=str.upper)
    a = sub.add_parser("analyze", help="g2 or HOM visibility from tag files")
    common(a)
    a.add_argument("tags", nargs="+", help="HBT tag file, or parallel and perpendicular HOM files")
    a.add_argument("--pulses", type=int, help="pulses in the run (default: from config)")
    f = sub.add_parser("fit", help="contaminant fit to per-pulse yields")
    common(f)
    f.add_argument("csv", help="CSV with pulse_index, success_rate and optional stderr")
    f.add_argument("--t-p", type=float, default=2.5e-6, help="pulse period (s)")
    m = sub.add_parser("metrics", help="source figures of merit")
    common(m)
    m.add_argument("csv", nargs="?", help="CSV label,R_Hz,duty,P,V,g2 (default: bundled table)")
    r = sub.add_parser("reproduce", help="plot-data CSVs for one figure")
    common(r, seed=True)
    r.add_argument("figure", choices=FIGURES)
    rr = sub.add_parser("rerun", help="re-execute a run from its manifest and compare outputs")
    rr.add_argument("manifest")
    rr.add_argument("--out", help="output directory (default: the manifest's)")
    return p


COMMANDS = {"theory": cmd_theory, "simulate": cmd_simulate, "analyze": cmd_analyze, "fit": cmd_fit,
            "metrics": cmd_metrics, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        if args.command == "rerun":
            return cmd_rerun(args)
        run = Run(args.command, argv, Path(args.out))
        COMMANDS[args.command](args, run)
        if args.command != "theory" and run.summary and not any(p.name.endswith("summary.csv") for p in run.outputs):
            run.write_summary()
        manifest = run.finish()
        if args.json_summary:
            print(json.dumps({"command": args.command, "summary": run.summary,
                              "outputs": [o["path"] for o in manifest["outputs"]]}, default=float))
        return EXIT_OK
    except (TagFormatError, OSError) as exc:
        print(f"rydsps: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ReproducibilityError, *NUMERICAL_ERRORS) as exc:
        print(f"rydsps: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError) as exc:
        print(f"rydsps: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
