"""Command-line entry point: ``gridflow [options] <config file>``."""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import jobdb
from .config import parse_config
from .engine import Engine, format_report
from .errors import ConfigError, GridflowError, LockHeld, SelectorSyntaxError

log = logging.getLogger("gridflow")

EXIT_OK, EXIT_CONFIG, EXIT_LOCKED, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class CliInvocation:
    config_path: Path
    continuous: bool = False
    cancel_selector: str | None = None
    report_only: bool = False
    config_dump: bool = False
    overrides: list = field(default_factory=list)
    interval_seconds: float | None = None  # None: take [global] interval

    def __post_init__(self):
        if self.continuous and self.cancel_selector is not None:
            raise ValueError("--continuous and --delete are mutually exclusive")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridflow",
        description=(
            "Run one check/retrieve/submit cycle for the workflow described by CONFIG "
            "and print a status report."
        ),
    )
    parser.add_argument("config", type=Path, help="workflow config file")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("-c", "--continuous", action="store_true",
                      help="repeat the cycle every [global] interval seconds until all jobs finished")
    mode.add_argument("-d", "--delete", metavar="SELECTOR",
                      help="cancel jobs: ALL, ids and ranges like 1-2,5, or state:<STATE>")
    mode.add_argument("--report", action="store_true", help="print the stored job report and exit")
    mode.add_argument("--config-dump", action="store_true",
                      help="print the merged config as sorted section.key = value lines")
    parser.add_argument("-o", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config option (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    return parser


def run_once(engine: Engine, out=None) -> int:
    out = out or sys.stdout
    engine.cycle()
    print(engine.report(), file=out)
    return EXIT_OK


def run_continuous(engine: Engine, interval: float, out=None, max_cycles: int | None = None) -> int:
    """Cycle until every job is finished, or until SIGINT/SIGTERM arrives.

    Signals only set a flag, so an interrupt always lands between two
    committed cycles.
    """
    out = out or sys.stdout
    stop = []
    handler = lambda signum, frame: stop.append(signum)  # noqa: E731
    old = {sig: signal.signal(sig, handler) for sig in (signal.SIGINT, signal.SIGTERM)}
    cycles = 0
    try:
        while True:
            engine.cycle()
            cycles += 1
            if engine.finished() or stop or (max_cycles is not None and cycles >= max_cycles):
                break
            deadline = time.monotonic() + interval
            while not stop and time.monotonic() < deadline:
                time.sleep(min(0.2, max(0.0, deadline - time.monotonic())))
            if stop:
                break
    finally:
        for sig, prev in old.items():
            signal.signal(sig, prev)
    if stop:
        log.info("interrupted after %d cycles", cycles)
    print(engine.report(), file=out)
    return EXIT_OK


def execute(inv: CliInvocation, out=None) -> int:
    out = out or sys.stdout
    if inv.config_dump:
        print(parse_config([inv.config_path], inv.overrides).dump(), file=out, end="")
        return EXIT_OK
    if inv.report_only:
        engine = Engine(inv.config_path, tuple(inv.overrides))
        print(format_report(jobdb.load(engine.workdir, repair=False)), file=out)
        return EXIT_OK
    engine = Engine(inv.config_path, tuple(inv.overrides))
    with engine:
        if inv.cancel_selector is not None:
            count = engine.cancel(inv.cancel_selector)
            log.info("cancelled %d jobs", count)
            print(engine.report(), file=out)
            return EXIT_OK
        if inv.continuous:
            interval = engine.interval if inv.interval_seconds is None else inv.interval_seconds
            return run_continuous(engine, interval, out)
        return run_once(engine, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    inv = CliInvocation(
        config_path=args.config,
        continuous=args.continuous,
        cancel_selector=args.delete,
        report_only=args.report,
        config_dump=args.config_dump,
        overrides=list(args.overrides),
    )
    try:
        return execute(inv)
    except LockHeld as exc:
        log.error("%s", exc)
        return EXIT_LOCKED
    except (ConfigError, SelectorSyntaxError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except GridflowError as exc:
        log.error("%s", exc)
        return EXIT_INTERNAL
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
