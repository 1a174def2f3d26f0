"""
Command-line entry point: forward, synthesize, invert, verify, check-conditions, ml-eval
"""
import argparse
import dataclasses
import json
import logging
import sys
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import mpmath
import numpy as np
import pydantic
import scipy
from pydantic import ValidationError
from pythonjsonlogger import jsonlogger
from sqlalchemy.exc import SQLAlchemyError

from src import __version__
from src.artifacts import (
    file_record,
    read_psi_csv,
    write_csv,
    write_grid_field,
    write_json,
    write_volume_field,
)
from src.database import ledger_url, log_iterations, record_run_finish, record_run_start
from src.errors import ConfigError, FracSourceError
from src.estimates import compute_constants, verify_bounds
from src.forward import ProblemSpec, solve_forward, synthesize_data
from src.schemas import (
    MLParams,
    RunConfig,
    RunManifest,
    RunStatusEnum,
    SubcommandEnum,
)
from src.specfun import mittag_leffler
from src.spectral import SpectralState, spectral_tail, weighted_norm_series
from src.verify import convergence_study, format_study_table, manufactured_case, residual
from src.workflow import run_inversion

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_LADDER_NT = [33, 65, 129, 257]

# Keys of RunConfig that a manufactured case accepts as overrides
_CASE_KEYS = ("alpha", "T", "l0", "K", "epsilon", "nt", "nx", "ny")


def setup_logging(level: str = "INFO", json_logs: bool = False) -> None:
    """Root logger on stderr; stdout stays reserved for results"""
    handler = logging.StreamHandler(sys.stderr)
    if json_logs:
        handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


# ============================================================================
# Configuration
# ============================================================================
def _describe(error: Dict[str, Any]) -> str:
    key = ".".join(str(part) for part in error["loc"]) or "config"
    if error["type"] == "extra_forbidden":
        return f"unknown key '{key}'"
    message = error["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return f"{key}: {message}"


def parse_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """JSON config file (optional) with flag overrides applied key by key"""
    raw: Dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError("; ".join(_describe(err) for err in e.errors())) from e


def _case_for(config: RunConfig):
    if config.case is None:
        raise ConfigError(f"'{config.subcommand.value}' needs a manufactured case (--case)")
    overrides = {key: getattr(config, key) for key in _CASE_KEYS if getattr(config, key) is not None}
    return manufactured_case(config.case, **overrides)


def _versions() -> Dict[str, str]:
    return {
        "fracsource": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
        "pydantic": pydantic.VERSION,
    }


# ============================================================================
# Run context and shared dumps
# ============================================================================
@dataclasses.dataclass
class RunContext:
    config: RunConfig
    output_dir: Path
    files: List[Path] = dataclasses.field(default_factory=list)
    timings: Dict[str, float] = dataclasses.field(default_factory=dict)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def keep(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def timed(self, label: str, fn: Callable, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - start


def _dump_state(ctx: RunContext, spec: ProblemSpec, state: SpectralState) -> None:
    """Optional dumps shared by forward and invert"""
    config = ctx.config
    if config.dump_series:
        ctx.keep(write_csv(ctx.path("series.csv"), ["t", "value"], [spec.t, weighted_norm_series(state)]))
    if config.dump_mode is not None:
        field = state.mode(config.dump_mode)
        ctx.keep(write_grid_field(
            ctx.path(f"mode_{config.dump_mode}.csv"), field.time_grid, field.space_grid, field.values
        ))
    if config.dump_coefficients:
        k = np.arange(1, state.K + 1, dtype=float)
        mid = int(np.argmin(np.abs(spec.x - 0.5)))
        ctx.keep(write_csv(ctx.path("coefficients.csv"), ["k", "lambda_k", "coef"], [k, k ** 2, state.values[:, -1, mid]]))


# ============================================================================
# Subcommands
# ============================================================================
def _run_forward(ctx: RunContext) -> Tuple[RunStatusEnum, Optional[str]]:
    spec = _case_for(ctx.config).spec
    state, full = ctx.timed("forward", solve_forward, spec)
    ctx.keep(write_grid_field(ctx.path("trace.csv"), spec.time_grid, spec.space_grid, full.trace(spec.l0), name="u"))
    if ctx.config.dump_full:
        ctx.keep(write_volume_field(ctx.path("full.csv"), spec.time_grid, spec.space_grid, full.y, full.values))
    _dump_state(ctx, spec, state)
    logger.info(f"[RUN] spectral tail share {spectral_tail(state):.3e}")
    return RunStatusEnum.SUCCEEDED, None


def _run_synthesize(ctx: RunContext) -> Tuple[RunStatusEnum, Optional[str]]:
    config = ctx.config
    spec = _case_for(config).spec
    psi = ctx.timed(
        "synthesize", synthesize_data, spec,
        noise_level=config.noise_level, seed=config.seed, fine_factor=config.fine_factor,
    )
    ctx.keep(write_grid_field(ctx.path("psi.csv"), spec.time_grid, spec.space_grid, psi, name="psi"))
    return RunStatusEnum.SUCCEEDED, None


def _run_invert(ctx: RunContext, run_id: str, url: Optional[str]) -> Tuple[RunStatusEnum, Optional[str]]:
    config = ctx.config
    spec = dataclasses.replace(_case_for(config).spec, prefer_analytic=False)
    if config.psi_file is not None:
        spec = spec.with_psi(read_psi_csv(config.psi_file, spec.time_grid, spec.space_grid))

    outcome = ctx.timed("invert", run_inversion, spec, config.tol, config.max_iter)
    report = outcome.report
    ctx.keep(write_grid_field(ctx.path("h.csv"), spec.time_grid, spec.space_grid, outcome.recovered.h, name="h"))
    convergence = report.model_dump(mode="json")
    convergence["method_selections"] = outcome.method_selections
    convergence["trace_residual"] = outcome.recovered.trace_residual
    convergence["weak_residual"] = outcome.recovered.weak_residual
    ctx.keep(write_json(ctx.path("convergence.json"), convergence))

    checks = ctx.timed("estimates", verify_bounds, spec, outcome.state, outcome.recovered, outcome.constants)
    estimates = outcome.constants.model_copy(update={"bound_checks": checks})
    ctx.keep(write_json(ctx.path("estimates.json"), estimates.model_dump(mode="json")))

    if config.dump_states:
        for k in range(1, outcome.state.K + 1):
            ctx.keep(write_grid_field(
                ctx.path(f"state_k{k}.csv"), spec.time_grid, spec.space_grid, outcome.state.values[k - 1]
            ))
    _dump_state(ctx, spec, outcome.state)

    if url is not None:
        try:
            log_iterations(url, run_id, report.increments, report.ratios, report.state_norms)
        except SQLAlchemyError as e:
            logger.warning(f"[RUN] ledger unavailable, iteration log skipped: {e}")

    if not report.converged:
        return RunStatusEnum.NOT_CONVERGED, (
            f"no convergence after {report.iterations} iterations "
            f"(weighted increment {report.terminal_increment:.3e} > tol^2)"
        )
    return RunStatusEnum.SUCCEEDED, None


def _study_ladder(config: RunConfig) -> List[Tuple[int, int]]:
    ladder_nt, ladder_nx = config.ladder_nt, config.ladder_nx
    if ladder_nt is None and ladder_nx is None:
        ladder_nt = DEFAULT_LADDER_NT
    if ladder_nt is not None and ladder_nx is not None:
        if len(ladder_nt) != len(ladder_nx):
            raise ConfigError("ladder_nt and ladder_nx must have the same length")
        return list(zip(ladder_nt, ladder_nx))
    if ladder_nt is not None:
        return [(nt, config.nx) for nt in ladder_nt]
    return [(config.nt, nx) for nx in ladder_nx]


def _run_verify(ctx: RunContext) -> Tuple[RunStatusEnum, Optional[str]]:
    config = ctx.config
    case = _case_for(config)
    kwargs = {"tol": config.tol, "max_iter": config.max_iter}
    study = ctx.timed(
        "verify", convergence_study, case, _study_ladder(config), config.target, config.reference, **kwargs
    )
    payload = study.model_dump(mode="json")
    payload["residual"] = residual(case, seed=config.seed)
    ctx.keep(write_json(ctx.path("study.json"), payload))
    print(format_study_table(study))
    if not study.complete:
        return RunStatusEnum.NOT_CONVERGED, study.aborted_reason
    return RunStatusEnum.SUCCEEDED, None


def _run_check_conditions(ctx: RunContext) -> Tuple[RunStatusEnum, Optional[str]]:
    spec = _case_for(ctx.config).spec
    report = ctx.timed("estimates", compute_constants, spec)
    ctx.keep(write_json(ctx.path("estimates.json"), report.model_dump(mode="json")))
    print(f"condition value: {report.condition4_value:.12g}")
    print(f"contraction value: {report.fk_value:.12g}")
    return RunStatusEnum.SUCCEEDED, None


def _run_ml_eval(ctx: RunContext) -> Tuple[RunStatusEnum, Optional[str]]:
    config = ctx.config
    if config.alpha is None or config.z is None:
        raise ConfigError("ml-eval needs --alpha and --z")
    value = ctx.timed("ml-eval", mittag_leffler, MLParams(alpha=config.alpha, mu=config.mu), config.z)
    print(f"{value:.12g}")
    return RunStatusEnum.SUCCEEDED, None


_EXIT_CODES = {
    RunStatusEnum.SUCCEEDED: 0,
    RunStatusEnum.FAILED: 1,
    RunStatusEnum.NOT_CONVERGED: 2,
}


def _write_manifest(ctx: RunContext, manifest: RunManifest) -> None:
    manifest.files = [file_record(path, ctx.output_dir) for path in ctx.files]
    write_json(ctx.path("manifest.json"), manifest.model_dump(mode="json"))


def run(config: RunConfig) -> Tuple[int, RunManifest]:
    """Execute one subcommand; manifest.json is written before and after the data files"""
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config=config, output_dir=output_dir)
    run_id = uuid.uuid4().hex
    config_echo = config.model_dump(mode="json")

    manifest = RunManifest(
        run_id=run_id,
        subcommand=config.subcommand,
        status=RunStatusEnum.RUNNING,
        config=config_echo,
        versions=_versions(),
        started_at=datetime.now(timezone.utc).isoformat(),
    )
    _write_manifest(ctx, manifest)

    url: Optional[str] = ledger_url(config.output_dir, config.ledger_url)
    try:
        record_run_start(url, run_id, config.subcommand.value, config_echo)
    except SQLAlchemyError as e:
        logger.warning(f"[RUN] ledger unavailable at {url}: {e}")
        url = None

    logger.info(f"[RUN] {config.subcommand.value} run {run_id} -> {output_dir}")
    start = time.perf_counter()
    try:
        if config.subcommand == SubcommandEnum.FORWARD:
            status, message = _run_forward(ctx)
        elif config.subcommand == SubcommandEnum.SYNTHESIZE:
            status, message = _run_synthesize(ctx)
        elif config.subcommand == SubcommandEnum.INVERT:
            status, message = _run_invert(ctx, run_id, url)
        elif config.subcommand == SubcommandEnum.VERIFY:
            status, message = _run_verify(ctx)
        elif config.subcommand == SubcommandEnum.CHECK_CONDITIONS:
            status, message = _run_check_conditions(ctx)
        else:
            status, message = _run_ml_eval(ctx)
    except FracSourceError as e:
        logger.error(f"[RUN] {type(e).__name__}: {e}")
        status, message = RunStatusEnum.FAILED, f"{type(e).__name__}: {e}"
    except Exception as e:
        logger.exception(f"[RUN] unexpected failure: {type(e).__name__}: {e}")
        status, message = RunStatusEnum.FAILED, f"{type(e).__name__}: {e}"
    ctx.timings["total"] = time.perf_counter() - start

    exit_code = _EXIT_CODES[status]
    manifest.status = status
    manifest.exit_code = exit_code
    manifest.message = message
    manifest.timings = ctx.timings
    manifest.finished_at = datetime.now(timezone.utc).isoformat()
    _write_manifest(ctx, manifest)

    if url is not None:
        try:
            record_run_finish(url, run_id, status.value, exit_code, ctx.timings, message)
        except SQLAlchemyError as e:
            logger.warning(f"[RUN] ledger unavailable at {url}: {e}")

    level = logging.INFO if exit_code == 0 else logging.WARNING
    logger.log(level, f"[RUN] {config.subcommand.value} finished: {status.value} (exit {exit_code})")
    return exit_code, manifest


# ============================================================================
# Argument parsing
# ============================================================================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracsource",
        description="Source identification for a time-fractional subdiffusion equation",
    )
    parser.add_argument("subcommand", choices=[s.value for s in SubcommandEnum])
    parser.add_argument("--config", help="JSON run configuration; flags override its keys")

    problem = parser.add_argument_group("problem")
    problem.add_argument("--case", help="manufactured case id (MMS-0, MMS-1, MMS-2)")
    problem.add_argument("--alpha", type=float)
    problem.add_argument("--T", type=float)
    problem.add_argument("--l0", type=float)
    problem.add_argument("--epsilon", type=float)
    problem.add_argument("--K", type=int)
    problem.add_argument("--nt", type=int)
    problem.add_argument("--nx", type=int)
    problem.add_argument("--ny", type=int)

    solver = parser.add_argument_group("solver")
    solver.add_argument("--tol", type=float)
    solver.add_argument("--max-iter", type=int)
    solver.add_argument("--noise-level", type=float)
    solver.add_argument("--seed", type=int)
    solver.add_argument("--fine-factor", type=int)
    solver.add_argument("--psi-file")

    study = parser.add_argument_group("verify")
    study.add_argument("--target", choices=["forward", "inverse"])
    study.add_argument("--reference", choices=["exact", "successive"])
    study.add_argument("--ladder-nt", type=int, nargs="+")
    study.add_argument("--ladder-nx", type=int, nargs="+")

    ml = parser.add_argument_group("ml-eval")
    ml.add_argument("--mu", type=float)
    ml.add_argument("--z", type=float)

    output = parser.add_argument_group("output")
    output.add_argument("--output-dir")
    output.add_argument("--ledger-url")
    output.add_argument("--dump-series", action="store_true", default=None)
    output.add_argument("--dump-mode", type=int, metavar="K")
    output.add_argument("--dump-full", action="store_true", default=None)
    output.add_argument("--dump-states", action="store_true", default=None)
    output.add_argument("--dump-coefficients", action="store_true", default=None)
    output.add_argument("--log-level", default="INFO")
    output.add_argument("--log-json", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_json)
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "log_level", "log_json")}
    try:
        config = parse_config(args.config, overrides)
    except ConfigError as e:
        logger.error(f"[RUN] invalid configuration: {e}")
        return _EXIT_CODES[RunStatusEnum.FAILED]
    exit_code, _ = run(config)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
