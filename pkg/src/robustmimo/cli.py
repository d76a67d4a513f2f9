"""Command-line experiment runner.

    robustmimo design            [--config PATH] [--seed U64] [--out DIR] [--scale desk|paper]
    robustmimo beampattern       ...   (reads DIR/design.npz)
    robustmimo sweep-uncertainty ...
    robustmimo multistart        ...
    robustmimo synthesize        ...   (reads DIR/design.npz unless run.synthesis.pair is mix)

Exit status is 0 on success.  On failure a single JSON error record is written to
stderr and the exit status is 2 (configuration), 3 (solver), 4 (missing input)
or 1 (anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from robustmimo import experiments as ex
from robustmimo.config import ConfigError, ExperimentConfig, dump_config, load_config
from robustmimo.numerics import ContractError
from robustmimo.optimizer import SolverFailure

log = logging.getLogger("robustmimo")

COMMANDS = ("design", "beampattern", "sweep-uncertainty", "multistart", "synthesize")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustmimo", description="Angle-robust MIMO radar design experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=_u64, help="override run.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    common.add_argument("--scale", choices=("desk", "paper"), default="desk", help="preset the config overlays")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.scale)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(str(args.out))
    return cfg


def _write_json(path: Path, record: dict) -> None:
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _emit(cfg: ExperimentConfig, out: Path, name: str, table, summary: dict | None, command: str) -> None:
    with_json = "json" in cfg.output.formats
    table.write(out / name, with_meta=with_json)
    if with_json and summary is not None:
        record = dict(ex.metadata(cfg, command), **summary)
        _write_json(out / "summary.json" if command == "design" else out / f"{Path(name).stem}_summary.json", record)


def run(args) -> Path:
    cfg = _resolve(args)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.yaml").write_text(dump_config(cfg))
    cmd = args.command
    if cmd == "design":
        table, summary, design = ex.cmd_design(cfg)
        ex.save_design(design, out / ex.DESIGN_FILE, cfg)
        _emit(cfg, out, "sinr_vs_angle.csv", table, summary, cmd)
        if not design.has_robust:
            log.warning(summary["note"])
    elif cmd == "beampattern":
        design = ex.load_design(out / ex.DESIGN_FILE, cfg)
        _emit(cfg, out, "beampattern.csv", ex.cmd_beampattern(cfg, design), None, cmd)
    elif cmd == "sweep-uncertainty":
        table, summary = ex.cmd_sweep_uncertainty(cfg)
        _emit(cfg, out, "worst_case_vs_delta.csv", table, summary, cmd)
    elif cmd == "multistart":
        table, summary = ex.cmd_multistart(cfg)
        _emit(cfg, out, "multistart.csv", table, summary, cmd)
    elif cmd == "synthesize":
        design = None
        if cfg.run.synthesis.pair == "design":
            design = ex.load_design(out / ex.DESIGN_FILE, cfg)
        table, summary = ex.cmd_synthesize(cfg, design)
        _emit(cfg, out, "synthesis.csv", table, summary, cmd)
    return out


def _error_record(exc: BaseException) -> tuple[int, dict]:
    record = {"status": "error", "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        record["field"] = exc.path
        return 2, record
    if isinstance(exc, SolverFailure):
        record["stage"] = exc.stage
        return 3, record
    if isinstance(exc, ex.MissingInputError):
        return 4, record
    if isinstance(exc, ContractError):
        return 2, record
    return 1, record


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        out = run(args)
    except Exception as exc:  # reported as a machine-readable record
        code, record = _error_record(exc)
        record["command"] = args.command
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return code
    log.info("wrote results to %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
