"""Command-line entry point: ``fosmpc <command> [options]``.

Exit codes: 0 success, 2 config error, 3 data error, 4 QP solver
non-convergence in any run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import experiments as ex
from .io import ConfigError, DataError, ensure_dir, ingest_eeg_csv, load_config
from .sysid import DegenerateDataError, identify, normalize

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4


def _base_config(args, preset: dict) -> ex.ExperimentConfig:
    values = dict(preset)
    if args.config:
        values.update(load_config(args.config))
        values.update(preset)
    cfg = ex.config_from_dict(values)
    if args.seed is not None:
        cfg = replace(cfg, seeds=ex.parse_seeds(args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _emit_metrics(metrics, summary, fmt: str, label: str = "") -> None:
    if fmt == "json":
        print(json.dumps({"strategy": label, "summary": summary,
                          "runs": [asdict(m) for m in metrics]}, indent=2))
        return
    names = list(asdict(metrics[0]).keys())
    print(",".join(names))
    for m in metrics:
        print(",".join(f"{v:.12g}" if isinstance(v, float) else str(v) for v in asdict(m).values()))
    print(f"# {label} median_energy_ratio={summary['median_energy_ratio']:.6g} "
          f"max_abs_input={summary['max_abs_input']:.6g}", file=sys.stderr)


def cmd_experiment(args, preset) -> int:
    cfg = _base_config(args, preset)
    res = ex.run_experiment(cfg, jobs=args.jobs)
    _emit_metrics(res.metrics, res.summary, args.format, cfg.strategy)
    return EXIT_SOLVER if res.summary["solver_warnings"] else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _base_config(args, {"strategy": "mpc"})
    p_values = [int(v) for v in args.p.split(",") if v.strip()]
    rows = ex.sweep_memory(cfg, p_values, jobs=args.jobs)
    if args.format == "json":
        print(json.dumps(rows, indent=2))
    else:
        print("p,median_energy_ratio,mean_energy_ratio,wall_time")
        for r in rows:
            print(f"{r['p']},{r['median_energy_ratio']:.12g},{r['mean_energy_ratio']:.12g},"
                  f"{r['wall_time']:.3f}")
    return EXIT_SOLVER if any(r["solver_warnings"] for r in rows) else EXIT_OK


def cmd_compare(args) -> int:
    cfg = _base_config(args, {})
    results = ex.compare(cfg, jobs=args.jobs)
    table = {s: r.summary for s, r in results.items()}
    if args.format == "json":
        print(json.dumps(table, indent=2))
    else:
        print("strategy,median_energy_ratio,mean_energy_ratio,max_abs_input,total_triggers")
        for s, sm in table.items():
            print(f"{s},{sm['median_energy_ratio']:.12g},{sm['mean_energy_ratio']:.12g},"
                  f"{sm['max_abs_input']:.12g},{sm['total_triggers']}")
    return EXIT_SOLVER if any(sm["solver_warnings"] for sm in table.values()) else EXIT_OK


def cmd_identify(args) -> int:
    path = args.data
    if path is None and args.config:
        path = load_config(args.config).get("model.file")
    if path is None:
        raise ConfigError("identify needs --data or model.file in the config")
    data = ingest_eeg_csv(path, args.channels)
    scale = np.ones(data.shape[1])
    if not args.no_normalize:
        data, scale = normalize(data)
    lo, hi, step = (float(v) for v in args.alpha_grid.split(","))
    try:
        res = identify(data, alpha_grid=(lo, hi, step), passes=args.passes)
    except DegenerateDataError as e:
        raise DataError(f"{path}: {e}") from None
    out = {"A": res.model.A.tolist(), "alpha": res.model.alpha.tolist(),
           "sigma_w2": res.model.sigma_w2, "offset": res.offset.tolist(),
           "residual_rss": res.residual_rss, "scale": scale.tolist()}
    if args.out:
        ensure_dir(args.out)
        with open(os.path.join(args.out, "model.json"), "w") as f:
            json.dump(out, f, indent=2)
            f.write("\n")
    if args.format == "json":
        print(json.dumps(out, indent=2))
    else:
        print("row," + ",".join(f"A{j + 1}" for j in range(len(out["alpha"]))) + ",alpha")
        for i, row in enumerate(out["A"]):
            print(f"{i + 1}," + ",".join(f"{v:.12g}" for v in row) + f",{out['alpha'][i]:.12g}")
        print(f"# sigma_w2={out['sigma_w2']:.6g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fosmpc",
        description="Fractional-order EEG models under open-loop, event-triggered and MPC stimulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", help="seed list, e.g. 0,1,5-9")
        p.add_argument("--out", help="output directory for traces, metrics and plots")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        return p

    for name, help_text in (
        ("simulate", "uncontrolled simulation"),
        ("experiment1", "open-loop stimulation"),
        ("experiment2", "line-length triggered open-loop stimulation"),
        ("experiment3", "closed-loop MPC stimulation"),
    ):
        common(sub.add_parser(name, help=help_text)).set_defaults(
            func=lambda a, _n=name: cmd_experiment(a, ex.PRESETS[_n]))

    sw = common(sub.add_parser("sweep", help="closed-loop memory-length sweep"))
    sw.add_argument("--p", default="1,4,8,16", help="comma-separated memory lengths")
    sw.set_defaults(func=cmd_sweep)

    common(sub.add_parser("compare", help="all strategies on paired seeds")).set_defaults(
        func=cmd_compare)

    idp = common(sub.add_parser("identify", help="identify (A, alpha, sigma_w2) from a CSV"))
    idp.add_argument("--data", help="samples x channels CSV")
    idp.add_argument("--channels", type=int, default=None, help="expected channel count")
    idp.add_argument("--alpha-grid", default="0.1,1.5,0.01", help="lo,hi,step")
    idp.add_argument("--passes", type=int, default=3)
    idp.add_argument("--no-normalize", action="store_true")
    idp.set_defaults(func=cmd_identify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
