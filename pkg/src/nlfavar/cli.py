"""Command-line entry point: ``nlfavar <subcommand> [--config FILE] [options]``."""
import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import MODELS, SCHEMES, load_config
from .errors import FavarError
from .panel import load_csv, write_csv
from .simgen import DgpSample, classify_variables, period_labels
from .structural import uncertainty_index

logger = logging.getLogger("nlfavar")


def _outdir(cfg, sub):
    path = Path(cfg.out) / sub
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_effective(cfg, path):
    cfg.save(Path(path) / "effective-config.yaml")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _g(x):
    return f"{x:.12g}"


def cmd_simulate(cfg):
    out = _outdir(cfg, "simulate")
    samples = pipeline.simulate(cfg)
    for s in samples:
        stem = out / f"rep_{s.replication:02d}"
        panel = s.to_panel()
        write_csv(panel, f"{stem}_panel.csv")
        write_csv(s.factor_panel(), f"{stem}_factors.csv")
        labels = period_labels(s.factors)
        _write_rows(f"{stem}_labels.csv", ["date", "label"],
                    [[d.strftime("%Y-%m-%d"), l] for d, l in zip(panel.dates, labels)])
        _write_rows(f"{stem}_classes.csv", ["variable", "class"],
                    list(zip(panel.mnemonics, classify_variables(s.panel))))
    _write_effective(cfg, out)
    return [str(out / f"rep_{s.replication:02d}_panel.csv") for s in samples]


def _read_samples(cfg):
    sim_dir = Path(cfg.evaluation.sim_dir or Path(cfg.out) / "simulate")
    files = sorted(sim_dir.glob("rep_*_panel.csv"))
    if not files:
        raise FavarError(f"no simulated panels found in {sim_dir}; run 'simulate' first")
    spec = pipeline.dgp_spec(cfg)
    samples = []
    for f in files:
        rep = int(f.name.split("_")[1])
        panel = load_csv(f)
        factors = load_csv(str(f).replace("_panel.csv", "_factors.csv"))
        samples.append(DgpSample(panel.values, factors.values, spec, None, None, None, None, rep))
    return samples


def cmd_forecast_eval(cfg):
    out = _outdir(cfg, "forecast-eval")
    samples = _read_samples(cfg)

    def progress(i, rep):
        rep.to_csv(out / f"report_rep_{samples[i].replication:02d}.csv")
        logger.info("replication %d done", samples[i].replication)

    _, combined = pipeline.simulation_study(cfg, samples, progress)
    combined.to_csv(out / "report.csv")
    combined.to_json(out / "report.json")
    _write_effective(cfg, out)
    return combined


def cmd_reduce(cfg):
    out = _outdir(cfg, "reduce")
    prepared = pipeline.load_prepared(cfg)
    X, _ = pipeline.factor_input(prepared, cfg, cfg.scheme)
    fs = pipeline.reduce(X, pipeline.reducer_spec(cfg.model, cfg.reducer, cfg.seed))
    dates = prepared.informational.dates
    _write_rows(out / f"factors_{cfg.model}.csv", ["date"] + [f"F{i + 1}" for i in range(fs.Q)],
                [[d.strftime("%Y-%m-%d")] + [_g(v) for v in row] for d, row in zip(dates, fs.factors)])
    prov = fs.provenance()
    with open(out / f"factors_{cfg.model}.json", "w", encoding="utf-8") as fh:
        json.dump(prov, fh, indent=2, sort_keys=True, default=str)
    _write_effective(cfg, out)
    return fs


def cmd_estimate(cfg):
    out = _outdir(cfg, "estimate")
    fit = pipeline.fit_favar(pipeline.load_prepared(cfg), cfg)
    fit.posterior.save(str(out / f"posterior_{cfg.model}_{cfg.scheme}"))
    _write_effective(cfg, out)
    return fit


def cmd_irf(cfg):
    out = _outdir(cfg, "irf")
    fit = pipeline.fit_favar(pipeline.load_prepared(cfg), cfg)
    res = pipeline.impulse_responses(fit, cfg)
    res.to_csv(out / f"irf_{cfg.model}_{cfg.scheme}.csv")
    logger.info("excluded %d explosive draws", res.n_excluded)
    _write_effective(cfg, out)
    return res


def cmd_importance(cfg):
    out = _outdir(cfg, "importance")
    prepared = pipeline.load_prepared(cfg)
    reference = pipeline.fit_favar(prepared, cfg, "linear")
    fit = reference if cfg.model == "linear" else pipeline.fit_favar(prepared, cfg, cfg.model)
    table, alignment, groups = pipeline.importance_report(fit, cfg, reference)
    table.to_csv(out / f"importance_{cfg.model}.csv")
    groups.to_csv(out / f"groups_{cfg.model}.csv")
    groups.top_to_csv(out / f"top_{cfg.model}.csv")
    _write_rows(out / f"alignment_{cfg.model}.csv", ["reference_factor", "matched_factor", "sign", "correlation"],
                [[i + 1, j + 1, int(s), _g(alignment.correlation[i, j])]
                 for i, (j, s) in enumerate(zip(alignment.permutation, alignment.signs))])
    _write_effective(cfg, out)
    return table


def cmd_uncertainty_index(cfg):
    out = _outdir(cfg, "uncertainty-index")
    prepared = pipeline.load_prepared(cfg)
    idx = uncertainty_index(prepared.informational.values)
    _write_rows(out / "uncertainty_index.csv", ["date", "uncertainty"],
                [[d.strftime("%Y-%m-%d"), _g(v)] for d, v in zip(prepared.informational.dates, idx)])
    _write_effective(cfg, out)
    return idx


COMMANDS = {
    "simulate": cmd_simulate,
    "reduce": cmd_reduce,
    "estimate": cmd_estimate,
    "irf": cmd_irf,
    "forecast-eval": cmd_forecast_eval,
    "importance": cmd_importance,
    "uncertainty-index": cmd_uncertainty_index,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="nlfavar", description="Linear and non-linear FAVAR pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="base seed for every random substream")
        p.add_argument("--out", help="output directory")
        p.add_argument("--model", choices=MODELS)
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--end-date", help="last quarter of the estimation sample (YYYY-MM-DD)")
        p.add_argument("--data", help="FRED-QD style CSV (overrides data.path)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args):
    cfg = load_config(args.config)
    for key in ("seed", "out", "model", "scheme"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.end_date:
        cfg.data = replace(cfg.data, end_date=args.end_date)
    if args.data:
        cfg.data = replace(cfg.data, path=args.data)
    return cfg.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except (FavarError, OSError) as exc:
        print(f"nlfavar {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
