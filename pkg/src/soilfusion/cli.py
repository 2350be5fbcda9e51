"""``soilfusion`` command line.

Subcommands: generate, correlate, simulate, eval, pipeline. Every run writes
``run_config.json`` with all resolved parameters (except ``--out``); passing it
back with ``--config`` reproduces the outputs byte for byte.

All randomness derives from ``--seed`` (fallback: ``$SOILFUSION_SEED``, then
0): the campaign generator, the noise streams, the split and the forests all
use that one value.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .csvio import (
    atomic_write_json,
    atomic_write_text,
    csv_text,
    dataset_csv,
    fmt,
    parse_dataset,
    read_campaign,
    read_dataset,
)
from .data_model import DEFAULT_TIME_TOLERANCE_S, PROVENANCES, assemble_measured_dataset
from .errors import SoilFusionError
from .evaluation import EvalReport, correlate_plots, run_experiment
from .regression import ForestParams, fit_extra_trees
from .regression.serialize import dumps
from .simulation import Method, SimConfig, gpr_timeseries, plot_noise_sigmas, simulate_gpr, simulate_tdr, tdr_distribution
from .synthgen import CampaignConfig, generate_campaign

ECHO_NAME = "run_config.json"
REPORT_FIELDS = ("experiment", "method", "seed", "r2", "rmse", "fi_gpr", "pearson_all", "n_train", "n_test")
SIM_METHODS = ("interpolation", "linreg", "et")


class CliError(SoilFusionError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _env_seed() -> int:
    raw = os.environ.get("SOILFUSION_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"SOILFUSION_SEED must be an integer, got {raw!r}") from None


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _add_common(p, needs_in=True):
    if needs_in:
        p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", dest="out_dir", required=True, metavar="DIR")
    p.add_argument("--seed", type=_nonneg_int, default=None)
    p.add_argument("--config", metavar="ECHO", help="load parameters from a run_config.json")


def _add_forest(p):
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--kfeat", type=int, default=None)
    p.add_argument("--min-split", type=int, default=5)


def _add_sim(p):
    p.add_argument("--sim-method", choices=SIM_METHODS, default="interpolation")
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--use-spectrum-features", action="store_true")
    p.add_argument("--no-bridge-gaps", action="store_true")
    p.add_argument("--time-tolerance", type=float, default=DEFAULT_TIME_TOLERANCE_S)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soilfusion", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic campaign (hsi/gpr/tdr csv + manifest)")
    _add_common(p, needs_in=False)
    p.add_argument("--coupling", default=None, help="comma-separated per-plot couplings")

    p = sub.add_parser("correlate", help="per-plot Pearson r between GPR delta-theta and TDR theta")
    _add_common(p)
    p.add_argument("--time-tolerance", type=float, default=DEFAULT_TIME_TOLERANCE_S)

    p = sub.add_parser("simulate", help="extend the measured dataset (approach1: GPR, approach2: TDR)")
    _add_common(p)
    p.add_argument("--experiment", choices=("approach1", "approach2"), required=True)
    _add_sim(p)
    _add_forest(p)

    p = sub.add_parser("eval", help="train/test extra-trees on a dataset.csv and write report.json")
    _add_common(p)
    p.add_argument("--experiment", choices=("baseline", "approach1", "approach2"), required=True)
    p.add_argument("--sim-method", choices=SIM_METHODS, default=None)
    _add_forest(p)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--stratify", action="store_true")
    p.add_argument("--sweep", type=int, default=1, help="number of consecutive seeds to run")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--save-model", action="store_true")

    p = sub.add_parser("pipeline", help="generate, simulate and evaluate the full experiment grid")
    _add_common(p, needs_in=False)
    _add_forest(p)
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--time-tolerance", type=float, default=DEFAULT_TIME_TOLERANCE_S)
    p.add_argument("--ratio", type=float, default=0.5)
    return parser


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        with open(known.config, encoding="utf-8") as fh:
            echo = json.load(fh)
        command = next((a for a in argv if a in COMMANDS), None)
        if echo.get("command") != command:
            raise CliError(f"{known.config} echoes '{echo.get('command')}', not '{command}'")
        # echo values become defaults; flags given explicitly still win
        sub = parser._subparsers._group_actions[0].choices[command]
        sub.set_defaults(**echo["args"])
        for action in sub._actions:
            if action.dest in echo["args"]:
                action.required = False
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = _env_seed()
    return args


def _echo(args) -> dict:
    skip = {"out_dir", "config", "command"}
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if resolved.get("in_dir") is not None:
        resolved["in_dir"] = str(Path(resolved["in_dir"]).resolve())
    return {"command": args.command, "version": __version__, "args": resolved}


def _prepare_out(path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise CliError(f"{out}: exists and is not a directory")
    if not out.parent.is_dir():
        raise CliError(f"{out.parent}: parent directory does not exist")
    return out


def _require_dir(path) -> Path:
    d = Path(path)
    if not d.is_dir():
        raise CliError(f"{d}: input directory not found")
    return d


def _forest(args, seed) -> ForestParams:
    return ForestParams(n_trees=args.trees, k_features=args.kfeat, min_samples_split=args.min_split, seed=seed)


def _commit(out: Path, files: dict[str, str], echo: dict) -> None:
    """Write every output only after all of them were computed."""
    out.mkdir(exist_ok=True)
    for name, text in files.items():
        atomic_write_text(out / name, text)
    atomic_write_json(out / ECHO_NAME, echo)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _opt(x) -> str:
    return "" if x is None else fmt(x)


# --------------------------------------------------------------------------- commands


def _campaign_config(args) -> CampaignConfig:
    if not args.coupling:
        return CampaignConfig(seed=args.seed)
    try:
        coupling = tuple(float(c) for c in args.coupling.split(","))
    except ValueError:
        raise CliError(f"--coupling expects comma-separated numbers, got {args.coupling!r}") from None
    return CampaignConfig(seed=args.seed, coupling=coupling)


def cmd_generate(args) -> None:
    out = _prepare_out(args.out_dir)
    campaign = generate_campaign(_campaign_config(args))
    out.mkdir(exist_ok=True)
    campaign.write(out)
    atomic_write_json(out / ECHO_NAME, _echo(args))


def _measured(in_dir: Path, tolerance: float):
    frames, profiles, tdr = read_campaign(in_dir)
    measured, skips = assemble_measured_dataset(frames, profiles, tdr, tolerance)
    return frames, profiles, tdr, measured, skips


def correlation_tables(measured) -> tuple[str, str]:
    rep = correlate_plots(measured)
    counts = {int(p): int((measured.plot_id == p).sum()) for p in set(measured.plot_id.tolist())}
    rows = []
    for plot in sorted(counts):
        r = rep.per_plot.get(plot)
        rows.append((plot, _opt(r), counts[plot], rep.notes.get(str(plot), "")))
    rows.append(("all", _opt(rep.overall), len(measured), rep.notes.get("all", "")))
    table = csv_text(("plot", "r", "n", "note"), rows)
    points = csv_text(("plot_id", "gpr_dtheta", "theta"), ((p, fmt(a), fmt(b)) for p, a, b in rep.points))
    return table, points


def cmd_correlate(args) -> None:
    in_dir = _require_dir(args.in_dir)
    out = _prepare_out(args.out_dir)
    if (in_dir / "tdr.csv").is_file():
        measured = _measured(in_dir, args.time_tolerance)[3]
    else:
        measured = read_dataset(in_dir / "dataset.csv")
    table, points = correlation_tables(measured)
    _commit(out, {"correlation.csv": table, "correlation_points.csv": points}, _echo(args))


def _sim_config(args) -> SimConfig:
    return SimConfig(
        method=Method.parse(args.sim_method),
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        use_spectrum_features=args.use_spectrum_features,
        bridge_gaps=not args.no_bridge_gaps,
        forest=_forest(args, args.seed),
    )


def simulate_outputs(experiment, measured, frames, profiles, tdr, cfg: SimConfig, tolerance) -> dict[str, str]:
    if experiment == "approach1":
        ds, skips = simulate_gpr(measured, tdr, frames, cfg, tolerance)
    else:
        ds, skips = simulate_tdr(measured, profiles, frames, cfg, tolerance)
    files = {"dataset.csv": dataset_csv(ds)}
    manifest = {
        "experiment": experiment,
        "method": cfg.method.value,
        "seed": cfg.seed,
        "use_spectrum_features": cfg.use_spectrum_features,
        "bridge_gaps": cfg.bridge_gaps,
        "time_tolerance_s": tolerance,
        "rows": {p: int((ds.provenance == p).sum()) for p in PROVENANCES},
        "measured_rows_in": len(measured),
        "skips": {"count": skips.count, "reasons": skips.reasons},
        "version": __version__,
    }
    if experiment == "approach1":
        if cfg.method is Method.INTERPOLATION:
            manifest["noise_sigma"] = {str(k): v for k, v in plot_noise_sigmas(measured, cfg).items()}
        for (plot, pos), rows in gpr_timeseries(ds).items():
            files[f"timeseries_{plot}_{pos}.csv"] = csv_text(
                ("time", "measured_dtheta", "simulated_dtheta"),
                ((t, _opt(m), _opt(s)) for t, m, s in rows),
            )
    else:
        for plot in sorted(set(ds.plot_id.tolist()) | set(measured.plot_id.tolist())):
            files[f"distribution_{plot}.csv"] = csv_text(
                ("timestamp", "position_index", "gpr_dtheta", "theta", "provenance"),
                ((t, c, _opt(d), fmt(th), pv) for t, c, d, th, pv in tdr_distribution(measured, ds, plot)),
            )
    files["simulation_manifest.json"] = _json(manifest)
    return files


def cmd_simulate(args) -> None:
    in_dir = _require_dir(args.in_dir)
    out = _prepare_out(args.out_dir)
    frames, profiles, tdr, measured, _ = _measured(in_dir, args.time_tolerance)
    files = simulate_outputs(args.experiment, measured, frames, profiles, tdr, _sim_config(args), args.time_tolerance)
    _commit(out, files, _echo(args))


def _method_label(name):
    return None if name is None else Method.parse(name).value


def report_row(rep: EvalReport) -> list[str]:
    d = rep.to_dict()
    row = []
    for k in REPORT_FIELDS:
        v = d.get(k)
        row.append("" if v is None else fmt(v) if isinstance(v, float) else str(v))
    return row


def _append_csv(path: Path, rows: list[list[str]]) -> str:
    """Existing report.csv content with ``rows`` appended."""
    old = path.read_text(encoding="utf-8") if path.is_file() else ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not old:
        w.writerow(REPORT_FIELDS)
    w.writerows(rows)
    return old + buf.getvalue()


def cmd_eval(args) -> None:
    in_dir = _require_dir(args.in_dir)
    out = _prepare_out(args.out_dir)
    if args.sweep < 1:
        raise CliError("--sweep must be >= 1")
    ds = read_dataset(in_dir / "dataset.csv")
    seeds = [args.seed + k for k in range(args.sweep)]

    def one(seed):
        return run_experiment(ds, args.experiment, seed, forest=_forest(args, seed),
                              method=_method_label(args.sim_method), ratio=args.ratio, stratify=args.stratify)

    if args.jobs > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(one, seeds))
    else:
        reports = [one(s) for s in seeds]

    files = {}
    for rep in reports:
        doc = {**rep.to_dict(), "config": _echo(args)["args"]}
        name = "report.json" if len(reports) == 1 else f"report_seed{rep.seed}.json"
        files[name] = _json(doc)
    files["report.csv"] = _append_csv(out / "report.csv", [report_row(r) for r in reports])
    if args.save_model:
        data = ds if args.experiment != "baseline" else ds.drop_dtheta()
        model = fit_extra_trees(data.features, data.target, _forest(args, args.seed))
        files["model.json"] = dumps(model) + "\n"
    _commit(out, files, _echo(args))


def run_pipeline(out: Path, seed: int, args) -> list[EvalReport]:
    """Generate one campaign, then run baseline and every approach x method cell."""
    campaign = generate_campaign(CampaignConfig(seed=seed))
    camp_dir = out / "campaign"
    camp_dir.mkdir(parents=True, exist_ok=True)
    campaign.write(camp_dir)
    frames, profiles, tdr, measured, _ = _measured(camp_dir, args.time_tolerance)
    forest = _forest(args, seed)
    reports = []

    table, points = correlation_tables(measured)
    _write_files(out / "correlation", {"correlation.csv": table, "correlation_points.csv": points})

    for experiment in ("approach1", "approach2"):
        for name in SIM_METHODS:
            cfg = SimConfig(method=Method.parse(name), noise_sigma=args.noise_sigma, seed=seed, forest=forest)
            files = simulate_outputs(experiment, measured, frames, profiles, tdr, cfg, args.time_tolerance)
            cell = out / f"{experiment}_{name}"
            ds = parse_dataset(files["dataset.csv"])
            rep = run_experiment(ds, experiment, seed, forest=forest, method=cfg.method.value, ratio=args.ratio)
            files["report.json"] = _json(rep.to_dict())
            _write_files(cell, files)
            reports.append(rep)
            if experiment == "approach1" and name == "interpolation":
                base = run_experiment(ds, "baseline", seed, forest=forest, ratio=args.ratio)
                _write_files(out / "baseline", {"report.json": _json(base.to_dict())})
                reports.insert(0, base)
    return reports


def _write_files(directory: Path, files: dict[str, str]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        atomic_write_text(directory / name, text)


def cmd_pipeline(args) -> None:
    out = _prepare_out(args.out_dir)
    out.mkdir(exist_ok=True)
    reports = run_pipeline(out, args.seed, args)
    summary = csv_text(REPORT_FIELDS, (report_row(r) for r in reports))
    _commit(out, {"summary.csv": summary}, _echo(args))


COMMANDS = {
    "generate": cmd_generate,
    "correlate": cmd_correlate,
    "simulate": cmd_simulate,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except (SoilFusionError, OSError, json.JSONDecodeError) as e:
        print(f"soilfusion: error: {e}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
