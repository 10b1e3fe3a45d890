"""
Command line front end.

    kitenav run --config scenario.json --out results/
    kitenav check --csv results/run.csv --metric eq9
    kitenav scenario init --output scenario.json

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    ConfigInvalid,
    SingularityAbort,
    TooFewSamples,
    check_eq9_consistency,
    check_fig7_consistency,
    default_config_json,
    load_config,
    read_csv,
    run_scenario,
    write_outputs,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_scenario(cfg)
    csv_path, report_path = write_outputs(result, args.out)
    r = result.report
    print(f"wrote {csv_path} ({r.rows} rows) and {report_path}")
    print(
        f"rms deg: phi_g {r.rms_phi_g_deg:.3f}  theta_g {r.rms_theta_g_deg:.3f}  "
        f"psi_g {r.rms_psi_g_deg:.3f}  phi_gr {r.rms_phi_gr_deg:.3f}  psi_m {r.rms_psi_m_deg:.3f}"
    )
    return EXIT_OK


def _cmd_check(args) -> int:
    path = Path(args.csv)
    if not path.is_file():
        raise ConfigInvalid(f"no such file: {path}")
    try:
        rows = read_csv(path)
    except (ValueError, StopIteration) as exc:
        raise ConfigInvalid(f"{path}: unreadable CSV ({exc})") from exc
    if args.metric == "eq9":
        out = {"eq9_correlation": check_eq9_consistency(rows, source=args.source)}
    else:
        rms_phi, rms_theta = check_fig7_consistency(rows, args.transient)
        out = {"fig7_rms_phi_deg": rms_phi, "fig7_rms_theta_deg": rms_theta}
    print(json.dumps(out))
    return EXIT_OK


def _cmd_scenario_init(args) -> int:
    text = default_config_json()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kitenav", description="Tethered kite navigation scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write run.csv and report.json")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=_cmd_run)

    check = sub.add_parser("check", help="consistency metric on a run CSV")
    check.add_argument("--csv", required=True, help="run CSV written by 'run'")
    check.add_argument("--metric", required=True, choices=("eq9", "fig7"))
    check.add_argument("--transient", type=float, default=60.0, help="seconds skipped by fig7 (default 60)")
    check.add_argument(
        "--source", choices=("measured", "truth"), default="measured", help="angle columns used by eq9"
    )
    check.set_defaults(func=_cmd_check)

    scen = sub.add_parser("scenario", help="scenario file helpers")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True)
    init = scen_sub.add_parser("init", help="emit the default scenario")
    init.add_argument("--output", "-o", default=None, help="file to write (default stdout)")
    init.set_defaults(func=_cmd_scenario_init)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, TooFewSamples, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularityAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
