import argparse
import json
import logging
import logging.config
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from entryexit import (
    DEFAULT_CHI,
    DEFAULT_GATE_WIDTH,
    DEFAULT_LOGGING,
    MIN_GRID_POINTS,
    NAME as MAIN_NAME,
    VERSION as MAIN_VERSION,
)
from entryexit.config import EntryExitConfig
from entryexit.core.flows import FLOW_MODELS, get_flow_model, list_flows
from entryexit.core.ingest import (
    IngestConfig,
    ingest_balance,
    load_samples,
    make_fixture,
    predict_next_zero,
    report,
    write_fixture,
)
from entryexit.core.models import BalanceKind
from entryexit.core.sweep import sweep
from entryexit.exceptions import ConfigException, EntryExitException, InvalidInputException
from entryexit.io import write_config, write_sweep
from entryexit.runner import BalanceRunner
from entryexit.utils.constant import (
    BalanceMethod,
    ExitCode,
    Extrapolation,
    FtleMode,
    Linearization,
    NileForm,
)
from entryexit.utils.helpers import linspace_values

logger = logging.getLogger(__name__)

PARAM_FLAGS = ["alpha", "beta", "b", "eta", "z2"]
METHODS = [
    BalanceMethod.EIG,
    BalanceMethod.FASTSLOW,
    BalanceMethod.FTLE,
    BalanceMethod.NILE,
    BalanceMethod.VELOCITY,
]
RUN_FLAGS = [
    "method",
    "index",
    "mode",
    "nile_form",
    "linearization",
    "t0",
    "z0",
    "span",
    "grid_points",
    "chi",
    "gate_width",
]

# scalar RunConfig fields settable from a config file or flags
FIELD_TYPES = {
    "method": str,
    "index": int,
    "mode": str,
    "nile_form": str,
    "linearization": str,
    "t0": float,
    "span": float,
    "grid_points": int,
    "chi": float,
    "gate_width": float,
    "output_dir": str,
    "seed": int,
}


def _coerce(key: str, value: Any, cast: type) -> Any:
    if cast is str:
        if not isinstance(value, str):
            raise ConfigException(f"{key} must be a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigException(f"{key} must be a number, got {value!r}")
    try:
        number = float(value)
    except ValueError as e:
        raise ConfigException(f"{key}: cannot parse {value!r} as {cast.__name__}") from e
    if cast is int:
        if not number.is_integer():
            raise ConfigException(f"{key} must be an integer, got {value!r}")
        return int(number)
    return number


def _float_mapping(key: str, value: Any) -> Dict[str, float]:
    if not isinstance(value, dict):
        raise ConfigException(f"{key} must be an object, got {value!r}")
    return {name: _coerce(f"{key}.{name}", v, float) for name, v in value.items()}


class RunConfig:
    """
    Fully resolved configuration of a command: built-in defaults, then the --config file, then flags
    """

    def __init__(self, **overrides: Any):
        self.flow_id: str = "solid-body"
        self.params: Dict[str, float] = {}
        self.method: str = BalanceMethod.NILE
        self.index: int = 0
        self.mode: str = FtleMode.EXACT
        self.nile_form: str = NileForm.GEOMETRIC
        self.linearization: str = Linearization.SIMPLIFIED
        self.t0: float = 0.0
        self.z0: Optional[List[float]] = None
        self.span: Optional[float] = None
        self.grid_points: int = EntryExitConfig.GRID_POINTS
        self.tolerances: Dict[str, float] = {
            "ode_tol": EntryExitConfig.ODE_TOL,
            "zero_tol": EntryExitConfig.ZERO_TOL,
            "deriv_tol": EntryExitConfig.DERIV_TOL,
        }
        self.chi: float = DEFAULT_CHI
        self.gate_width: float = DEFAULT_GATE_WIDTH
        self.output_dir: str = "entryexit-out"
        self.seed: Optional[int] = None
        self.update(overrides)

    def __repr__(self):
        return f"RunConfig: {self.to_dict()}"

    def update(self, overrides: Dict[str, Any]) -> "RunConfig":
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "params":
                self.params = {**self.params, **_float_mapping(key, value)}
            elif key == "tolerances":
                tolerances = _float_mapping(key, value)
                unknown = set(tolerances) - set(self.tolerances)
                if unknown:
                    raise ConfigException(f"Unknown tolerance(s) {sorted(unknown)}")
                self.tolerances = {**self.tolerances, **tolerances}
            elif key in ("flow", "flow_id"):
                self.flow_id = _coerce("flow", value, str)
            elif key == "z0":
                if not isinstance(value, (list, tuple)):
                    raise ConfigException(f"z0 must be a list of numbers, got {value!r}")
                self.z0 = [_coerce(key, v, float) for v in value]
            elif key in FIELD_TYPES:
                setattr(self, key, _coerce(key, value, FIELD_TYPES[key]))
            else:
                raise ConfigException(f"Unknown config key {key!r}")
        return self

    def validate(self) -> "RunConfig":
        if self.flow_id not in FLOW_MODELS:
            raise ConfigException(f"Unknown flow {self.flow_id!r}, expect one of {list(FLOW_MODELS)}")
        if self.method not in METHODS:
            raise ConfigException(f"Unknown method {self.method!r}, expect one of {METHODS}")
        try:
            self.kind
        except EntryExitException as e:
            raise ConfigException(str(e)) from e
        if int(self.grid_points) < MIN_GRID_POINTS:
            raise ConfigException(f"grid_points must be at least {MIN_GRID_POINTS}, got {self.grid_points}")
        if self.span is not None and not self.span > 0:
            raise ConfigException(f"span must be positive, got {self.span}")
        for name, value in self.tolerances.items():
            if not value > 0:
                raise ConfigException(f"{name} must be positive, got {value}")
        if not self.chi > 0:
            raise ConfigException(f"chi must be positive, got {self.chi}")
        if not self.gate_width > 0:
            raise ConfigException(f"gate_width must be positive, got {self.gate_width}")
        return self

    @property
    def kind(self) -> BalanceKind:
        return BalanceKind(
            self.method,
            index=self.index,
            mode=self.mode if self.method == BalanceMethod.FTLE else None,
            form=self.nile_form,
        )

    def settings(self) -> Dict[str, Any]:
        """
        EntryExitConfig overrides for the run
        """
        return {
            "ODE_TOL": self.tolerances["ode_tol"],
            "ZERO_TOL": self.tolerances["zero_tol"],
            "DERIV_TOL": self.tolerances["deriv_tol"],
            "GRID_POINTS": int(self.grid_points),
        }

    def model_params(self) -> Dict[str, float]:
        """
        the params the selected flow knows, others are an error
        """
        known = FLOW_MODELS[self.flow_id].DEFAULTS
        unknown = set(self.params) - set(known)
        if unknown:
            raise ConfigException(
                f"Flow {self.flow_id} has no parameter(s) {sorted(unknown)}, expect {sorted(known)}"
            )
        return dict(self.params)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "flow": self.flow_id,
            "params": {**FLOW_MODELS[self.flow_id].DEFAULTS, **self.params}
            if self.flow_id in FLOW_MODELS
            else self.params,
            "method": self.method,
            "index": self.index,
            "mode": self.mode,
            "nile_form": self.nile_form,
            "linearization": self.linearization,
            "t0": self.t0,
            "z0": self.z0,
            "span": self.span,
            "grid_points": self.grid_points,
            "tolerances": self.tolerances,
            "chi": self.chi,
            "gate_width": self.gate_width,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")


def _add_flow_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--flow",
        help="registered flow id, use the flows subcommand to list them",
        type=str,
        metavar="<flow-id>",
    )
    for name in PARAM_FLAGS:
        parser.add_argument(f"--{name}", type=float, metavar="<float>", help=f"flow parameter {name}")
    parser.add_argument(
        "--linearization",
        choices=[Linearization.SIMPLIFIED, Linearization.EXACT],
        help="Jacobian attached to the solid-body flow",
    )


def _add_balance_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", type=str, metavar="<method>", help=f"one of {', '.join(METHODS)}")
    parser.add_argument("--index", type=int, metavar="<j>", help="eigenvalue or singular value index")
    parser.add_argument("--mode", choices=[FtleMode.EXACT, FtleMode.COMMUTING], help="FTLE mode")
    parser.add_argument("--nile-form", choices=[NileForm.GEOMETRIC, NileForm.LITERAL], dest="nile_form")
    parser.add_argument("--t0", type=float, metavar="<float>")
    parser.add_argument("--z0", type=float, nargs="+", metavar="<float>", help="reference initial state")
    parser.add_argument("--span", type=float, metavar="<float>", help="search span, estimated when absent")
    parser.add_argument("--grid-points", type=int, dest="grid_points", metavar="<int>")
    parser.add_argument("--ode-tol", type=float, dest="ode_tol", metavar="<float>")
    parser.add_argument("--zero-tol", type=float, dest="zero_tol", metavar="<float>")
    parser.add_argument("--deriv-tol", type=float, dest="deriv_tol", metavar="<float>")
    parser.add_argument("--chi", type=float, metavar="<float>", help="particle offset off the manifold")
    parser.add_argument("--gate-width", type=float, dest="gate_width", metavar="<float>")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog=MAIN_NAME, description="Entry-exit balance functions for invariant manifolds.")
    parser.add_argument("--version", action="version", version="%s %s" % (MAIN_NAME, MAIN_VERSION))
    parser.add_argument("--config", metavar="<json>", help="run configuration file, flags take precedence")
    parser.add_argument("--out", metavar="<dir>", help="output directory")
    parser.add_argument("--seed", type=int, metavar="<int>", help="seed recorded for randomized runs")
    parser.add_argument("-v", "--verbose", help="log progress at info level", action="store_true")
    subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)

    balance = subparsers.add_parser("balance", help="balance function and exit prediction for one entry point")
    _add_flow_arguments(balance)
    _add_balance_arguments(balance)

    sweep_parser = subparsers.add_parser("sweep", help="exit predictions over a parameter range")
    _add_flow_arguments(sweep_parser)
    _add_balance_arguments(sweep_parser)
    sweep_parser.add_argument("--param", required=True, metavar="<name>", help="parameter to vary")
    sweep_parser.add_argument("--from", type=float, required=True, dest="start", metavar="<float>")
    sweep_parser.add_argument("--to", type=float, required=True, dest="stop", metavar="<float>")
    sweep_parser.add_argument("--steps", type=int, required=True, metavar="<int>")
    sweep_parser.add_argument("--workers", type=int, metavar="<int>", help="worker threads")

    ingest = subparsers.add_parser("ingest", help="balance functions from particle sample files")
    ingest.add_argument("paths", nargs="+", metavar="<csv>")
    _add_flow_arguments(ingest)
    ingest.add_argument("--gate-width", type=float, dest="gate_width", metavar="<float>")
    ingest.add_argument("--t0", type=float, metavar="<float>")
    ingest.add_argument("--until", type=float, metavar="<float>", help="drop samples after this time")
    ingest.add_argument(
        "--extrapolate",
        choices=[Extrapolation.NONE, Extrapolation.LINEAR, Extrapolation.QUADRATIC],
        help="extrapolation of F_sigma to its next zero",
    )
    ingest.add_argument("--window", type=int, metavar="<int>", help="extrapolation window in samples")

    fixture = subparsers.add_parser("make-fixture", help="synthetic particle samples in the ingest format")
    _add_flow_arguments(fixture)
    fixture.add_argument("--chi", type=float, metavar="<float>", help="particle offset off the manifold")
    fixture.add_argument("--samples", type=int, default=5000, metavar="<int>")
    fixture.add_argument("--span", type=float, metavar="<float>")
    fixture.add_argument("--name", default="fixture.csv", metavar="<file>")

    subparsers.add_parser("flows", help="list the registered flows")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        path = Path(args.config)
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigException(f"Malformed config file {path}: {e}") from e
        if not isinstance(payload, dict):
            raise ConfigException(f"Config file {path} must hold a JSON object")
        config.update(payload)
    flags: Dict[str, Any] = {
        "flow": getattr(args, "flow", None),
        "params": {name: getattr(args, name) for name in PARAM_FLAGS if getattr(args, name, None) is not None},
        "tolerances": {
            name: getattr(args, name)
            for name in ("ode_tol", "zero_tol", "deriv_tol")
            if getattr(args, name, None) is not None
        },
        "output_dir": args.out,
        "seed": args.seed,
    }
    for key in RUN_FLAGS:
        flags[key] = getattr(args, key, None)
    return config.update(flags).validate()


def cmd_balance(config: RunConfig) -> int:
    model = get_flow_model(config.flow_id, config.linearization, **config.model_params())
    runner = BalanceRunner(
        model,
        config.kind,
        z0=config.z0,
        t0=config.t0,
        span=config.span,
        grid_points=int(config.grid_points),
        chi=config.chi,
        gate_width=config.gate_width,
    )
    runner.write(config.output_dir)
    print(str(runner))
    return ExitCode.OK if runner.prediction.found else ExitCode.NOT_FOUND


def cmd_sweep(config: RunConfig, param: str, start: float, stop: float, steps: int, workers: Optional[int]) -> int:
    if steps < 1:
        raise ConfigException(f"steps must be at least 1, got {steps}")
    if param not in FLOW_MODELS[config.flow_id].DEFAULTS:
        raise ConfigException(f"Flow {config.flow_id} has no parameter {param!r}")
    fixed = {
        "params": config.model_params(),
        "kind": config.kind,
        "linearization": config.linearization,
        "z0": config.z0,
        "t0": config.t0,
        "span": config.span,
        "grid_points": int(config.grid_points),
    }
    result = sweep(config.flow_id, param, linspace_values(start, stop, steps), fixed, workers)
    sweep_config = {**config.to_dict(), "sweep": {"param": param, "from": start, "to": stop, "steps": steps}}
    write_sweep(result, config.output_dir, sweep_config)
    for row in result.rows:
        print(f"{param}={row.param}: T={row.T}" + (f" ({row.error})" if row.error else ""))
    if result.fit is not None:
        print(f"fit: slope={result.fit.slope} intercept={result.fit.intercept} r2={result.fit.r2}")
    return ExitCode.OK


def cmd_ingest(
    config: RunConfig,
    paths: List[str],
    extrapolation: Optional[str],
    window: Optional[int],
    until: Optional[float],
    t0: Optional[float],
) -> int:
    model = get_flow_model(config.flow_id, config.linearization, **config.model_params())
    ingest_config = IngestConfig(
        model.manifold,
        model.gate(config.gate_width),
        t0=t0,
        extrapolation=extrapolation,
        extrapolation_window=window,
    )
    code = ExitCode.OK
    for path in paths:
        if not Path(path).is_file():
            logger.error("No such file: %s", path)
            code = ExitCode.NO_INPUT
            continue
        try:
            samples = load_samples(path)
            if until is not None:
                samples = [s for s in samples if s.t <= until]
            sigma, velocity = ingest_balance(samples, ingest_config, model.flow)
            predicted = None
            if ingest_config.extrapolation != Extrapolation.NONE:
                if len(sigma) >= ingest_config.extrapolation_window:
                    predicted = predict_next_zero(
                        sigma, ingest_config.extrapolation, ingest_config.extrapolation_window
                    )
                else:
                    logger.warning("%s has fewer samples than the extrapolation window", path)
            files = report(sigma, velocity, predicted, config.output_dir, ingest_config, stem=Path(path).stem)
            print(f"{path}: report in {files['json']}")
        except EntryExitException as e:
            logger.error("%s: %s", path, e)
            if code == ExitCode.OK:
                code = ExitCode.ERROR
    return code


def cmd_make_fixture(config: RunConfig, samples: int, span: Optional[float], name: str) -> int:
    model = get_flow_model(config.flow_id, config.linearization, **config.model_params())
    frame = make_fixture(model, chi=config.chi, samples=samples, span=span)
    comment = f"{model.NAME} {model.params} chi={config.chi}"
    path = write_fixture(frame, Path(config.output_dir) / name, comment)
    print(f"fixture written to {path}")
    return ExitCode.OK


def cmd_flows() -> int:
    for name, defaults in list_flows().items():
        print(f"{name}: " + ", ".join(f"{key}={value}" for key, value in defaults.items()))
    return ExitCode.OK


def main(args=None) -> None:
    """
    The command line interface entry point.

    :param args: the command line arguments for entryexit command
    """
    logging.config.dictConfig(DEFAULT_LOGGING)
    parser = build_parser()
    args = parser.parse_args(args)
    if args.verbose:
        logging.getLogger().setLevel(logging.INFO)
        for handler in logging.getLogger().handlers:
            handler.setLevel(logging.INFO)
    if args.command is None:
        parser.print_help()
        sys.exit(ExitCode.USAGE)
    if args.command == "flows":
        sys.exit(cmd_flows())

    if args.config and not Path(args.config).is_file():
        logger.error("No such file: %s", args.config)
        sys.exit(ExitCode.NO_INPUT)
    try:
        config = resolve_config(args)
        if args.command == "make-fixture" and args.samples < 3:
            raise ConfigException(f"samples must be at least 3, got {args.samples}")
        # unknown or out-of-range parameters are a usage error, caught before any computation
        get_flow_model(config.flow_id, config.linearization, **config.model_params())
    except (ConfigException, InvalidInputException) as e:
        logger.error("%s", e)
        sys.exit(ExitCode.USAGE)

    write_config(config.to_dict(), config.output_dir)
    try:
        with EntryExitConfig(**config.settings()):
            if args.command == "balance":
                code = cmd_balance(config)
            elif args.command == "sweep":
                code = cmd_sweep(config, args.param, args.start, args.stop, args.steps, args.workers)
            elif args.command == "ingest":
                code = cmd_ingest(config, args.paths, args.extrapolate, args.window, args.until, args.t0)
            else:
                code = cmd_make_fixture(config, args.samples, args.span, args.name)
    except ConfigException as e:
        logger.error("%s", e)
        code = ExitCode.USAGE
    except EntryExitException as e:
        logger.error("%s", e)
        code = ExitCode.ERROR
    sys.exit(code)


if __name__ == "__main__":
    main()
