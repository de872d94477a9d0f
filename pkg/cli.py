# cli.py
import argparse
import logging
import sys
from typing import List, Optional

from config import configure_logging, get_default_seed, get_output_dir, get_workers
from exceptions import SamatError
from models.scenario import Scenario, Sweep
from services.experiment_service import converge_traces, run_scenario, validate_suite
from utils.config_extraction import load_scenario_file
from utils.export_utils import FORMATS, emit

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser, default_format: str) -> None:
    parser.add_argument("--config", type=str, default=None, help="Flat key = value scenario file")
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides the file)")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--trials", type=int, default=None, help="Monte Carlo trials (overrides the file)")
    parser.add_argument("--format", type=str, default=default_format, choices=FORMATS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="samat", description="MISO broadcast rate experiments")
    ap.add_argument("--log-level", type=str, default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("validate", help="Moment oracles and closed-form property checks"), "csv")
    _add_common(sub.add_parser("sweep-t", help="Rate vs |t| at each SNR of the grid"), "plot-script")
    _add_common(sub.add_parser("sweep-snr", help="Rate vs SNR at fixed |t|"), "plot-script")

    converge = sub.add_parser("converge", help="Theta traces of the alternating precoder optimizer")
    _add_common(converge, "csv")
    converge.add_argument("--dims", type=int, nargs="+", default=[4, 8])
    converge.add_argument("--instances", type=int, default=20)

    serve = sub.add_parser("serve", help="Run the HTTP API")
    serve.add_argument("--host", type=str, default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return ap


def _scenario(args, sweep: Sweep) -> Scenario:
    if args.config:
        scenario = load_scenario_file(args.config, args.seed, args.trials)
    else:
        overrides = {k: v for k, v in (("master_seed", args.seed), ("trials", args.trials)) if v is not None}
        scenario = Scenario(**overrides)
    return scenario.model_copy(update={"sweep": sweep})


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if args.command == "serve":
        import uvicorn

        uvicorn.run("main:app", host=args.host, port=args.port)
        return 0

    out_dir = args.out or get_output_dir()
    seed = args.seed if args.seed is not None else get_default_seed()
    try:
        if args.command == "validate":
            table = validate_suite(args.trials, seed)
            emit(table, args.format, out_dir, "validate")
            failed = table.loc[~table["passed"], "check"].tolist()
            if failed:
                logger.error("failed checks: %s", ", ".join(failed))
                return 1
        elif args.command == "converge":
            table = converge_traces(args.dims, args.instances, seed=seed)
            emit(table, args.format, out_dir, "converge")
        else:
            sweep = Sweep.T if args.command == "sweep-t" else Sweep.SNR
            scenario = _scenario(args, sweep)
            table = run_scenario(scenario, get_workers())
            emit(table, args.format, out_dir, args.command.replace("-", "_"))
            failed = int((table["status"] != "ok").sum()) if len(table) else 0
            if failed:
                logger.warning("%d cells failed", failed)
    except SamatError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
