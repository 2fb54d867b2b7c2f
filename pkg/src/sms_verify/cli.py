# src/sms_verify/cli.py
"""
Command line entry point.

Exit codes: 0 ok, 2 config error, 3 stage or other failure, 4 integrity error.
"""
import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, IntegrityError, SmsError
from .events import ZmqEventSubOptions, get_event_subscriber
from .report import cmd_report, cmd_trace_plot
from .runner import cmd_run, cmd_sweep
from .selftest import run_selftest

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE, EXIT_INTEGRITY = 0, 2, 3, 4


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sms-verify", description="Seed-based machine unlearning verification")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="seed, train, verify, unlearn, verify again")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    run.add_argument("--resume", action="store_true", help="continue a partial run in --out")

    sweep = sub.add_parser("sweep", help="one run per value of ssr or ser")
    sweep.add_argument("--config", type=Path, required=True)
    sweep.add_argument("--axis", choices=["ssr", "ser"], required=True)
    sweep.add_argument("--values", type=_float_list, required=True, help="e.g. 0.2,0.4,0.6")
    sweep.add_argument("--out", type=Path)
    sweep.add_argument("--jobs", type=int, default=1, help="sweep points run in parallel processes")
    sweep.add_argument("--resume", action="store_true")

    trace = sub.add_parser("trace-plot", help="render an unlearning trace CSV as SVG")
    trace.add_argument("trace", type=Path)
    trace.add_argument("--out", type=Path)

    report = sub.add_parser("report", help="comparison table over run manifests")
    report.add_argument("manifests", type=Path, nargs="+", help="manifest.json files or run directories")
    report.add_argument("--out", type=Path, default=Path("report.csv"))

    sub.add_parser("selftest", help="gradient checks and metric identities")

    watch = sub.add_parser("watch", help="print run events published on an endpoint")
    watch.add_argument("--endpoint", default="tcp://*:5556")
    watch.add_argument("--timeout", type=float, help="stop after this many seconds without events")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "run":
        manifest = cmd_run(load_config(args.config), args.out, resume=args.resume)
        for row in manifest.metrics:
            print(row.model_dump_json())
    elif args.command == "sweep":
        print(cmd_sweep(load_config(args.config), args.axis, args.values, args.out, jobs=args.jobs, resume=args.resume))
    elif args.command == "trace-plot":
        print(cmd_trace_plot(args.trace, args.out))
    elif args.command == "report":
        print(cmd_report(args.manifests, args.out))
    elif args.command == "selftest":
        results = run_selftest()
        for r in results:
            print(f"{'ok  ' if r.passed else 'FAIL'} {r.name} {r.detail}".rstrip())
        if not all(r.passed for r in results):
            return EXIT_FAILURE
    elif args.command == "watch":
        timeout_ms = int(args.timeout * 1000) if args.timeout else None
        options = ZmqEventSubOptions(endpoint=args.endpoint, is_bind=True, timeout_ms=timeout_ms)
        with get_event_subscriber(options) as subscriber:
            for event in subscriber:
                print(event.model_dump_json())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except IntegrityError as e:
        logger.error(str(e))
        return EXIT_INTEGRITY
    except SmsError as e:
        logger.error(str(e))
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.warning("interrupted")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
