"""``bscs`` command-line front end.

Every subcommand writes a CSV table (one header row, 17 significant digits by
default) preceded by a ``# generated ...`` comment line unless
``--no-header-timestamp`` is given.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 partial sweep
failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import enum
import io
import math
import sys
import warnings
from dataclasses import dataclass

from . import bounds, ctmc, qbd
from .config import ValidatedConfig, config_from_mapping, load_json, load_station_config, reference_config
from .errors import BscsError, ConfigError, DomainError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4

METRIC_COLUMNS = ("blocking", "p_enough", "p_busy", "mean_fb", "mean_db")
BOUND_COLUMNS = ("p_nslb", "p_clb", "mode")
SWEEP_OUTPUTS = METRIC_COLUMNS + BOUND_COLUMNS
AXES = {
    "B": "batteries_b", "C": "chargers_c",
    "Lambda": "arrival_rate", "Nu": "swap_rate", "Mu": "charge_rate",
}
TABLE1_B = (10, 30, 50, 70, 90, 110, 130)
TABLE1_SCENARIOS = {
    "SR-I": ("SD-I", "CD-I"),
    "SR-II": ("SD-I", "CD-II"),
    "SR-III": ("SD-II", "CD-I"),
    "SR-IV": ("SD-II", "CD-II"),
}


# ---------------------------------------------------------------- output

def format_cell(value, digits: int) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, f".{digits}g")
    return str(value)


def render_table(header, rows, digits: int = 17, timestamp: bool = True) -> str:
    buf = io.StringIO()
    if timestamp:
        now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# generated {now}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(v, digits) for v in row])
    return buf.getvalue()


def _emit(args, header, rows) -> None:
    text = render_table(header, rows, args.digits, not args.no_header_timestamp)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def _station(args) -> ValidatedConfig:
    path = args.path or args.config
    if not path:
        raise ConfigError("no configuration file given (positional path or --config)")
    return load_station_config(path)


def solve_record(cfg: ValidatedConfig) -> dict:
    metrics = ctmc.occupancy_metrics(ctmc.solve(cfg)).as_dict()
    metrics.update(bounds.classify_mode(cfg).as_dict())
    return metrics


def cmd_solve(args) -> int:
    rec = solve_record(_station(args))
    _emit(args, list(rec), [list(rec.values())])
    return EXIT_OK


def bounds_record(cfg: ValidatedConfig) -> dict:
    rec = bounds.classify_mode(cfg).as_dict()
    rec.update(phi=None, psi=None, asymptotic_blocking=None, qbd_status="unavailable")
    if rec["mode"] == str(bounds.Mode.BOUNDARY):
        return rec
    orientation = (qbd.Orientation.EV_FB if rec["mode"] == str(bounds.Mode.CHARGING_LIMITING)
                   else qbd.Orientation.EV_DB)
    try:
        sol = qbd.solve_subnetwork(cfg, orientation)
    except BscsError as exc:
        warnings.warn(f"QBD solve failed: {exc}")
        return rec
    key = "phi" if orientation is qbd.Orientation.EV_FB else "psi"
    rec[key] = sol.phi_or_psi
    rec["asymptotic_blocking"] = sol.asymptotic_blocking
    rec["qbd_status"] = "ok"
    return rec


def cmd_bounds(args) -> int:
    rec = bounds_record(_station(args))
    _emit(args, list(rec), [list(rec.values())])
    return EXIT_OK


@dataclass(frozen=True)
class SweepSpec:
    base: ValidatedConfig
    axis: str
    values: tuple
    outputs: tuple

    def point(self, value) -> ValidatedConfig:
        return self.base.replace(**{AXES[self.axis]: value})

    @property
    def columns(self) -> tuple:
        extra = tuple(c for c in BOUND_COLUMNS if c not in self.outputs)
        return (self.axis,) + self.outputs + extra


def _expand_values(raw):
    if isinstance(raw, dict):
        keys = {"start", "stop", "step"}
        if set(raw) != keys:
            raise ConfigError(f"range values need exactly {sorted(keys)}")
        start, stop, step = raw["start"], raw["stop"], raw["step"]
        if not step or step <= 0:
            raise ConfigError("range step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(max(count, 0))]
    if not isinstance(raw, list):
        raise ConfigError("values must be a list or a {start, stop, step} object")
    return raw


def sweep_spec_from_mapping(data) -> SweepSpec:
    if not isinstance(data, dict):
        raise ConfigError("sweep spec must be a JSON object")
    allowed = {"base", "axis", "values", "outputs"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown sweep keys: {sorted(extra)}")
    for key in ("base", "axis", "values"):
        if key not in data:
            raise ConfigError(f"sweep spec is missing '{key}'")
    base = config_from_mapping(data["base"])
    axis = data["axis"]
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {sorted(AXES)}, got {axis!r}")
    values = _expand_values(data["values"])
    if not values:
        raise ConfigError("values must be nonempty")
    integer_axis = axis in ("B", "C")
    clean = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"values: {v!r} is not a finite number")
        if integer_axis:
            if float(v) != int(v):
                raise ConfigError(f"values: axis {axis} needs integers, got {v!r}")
            v = int(v)
        else:
            v = float(v)
        clean.append(v)
    if any(b <= a for a, b in zip(clean, clean[1:])):
        raise ConfigError("values must be strictly increasing")
    outputs = data.get("outputs", list(METRIC_COLUMNS[:1]))
    if not isinstance(outputs, list) or not outputs:
        raise ConfigError("outputs must be a nonempty list")
    bad = [o for o in outputs if o not in SWEEP_OUTPUTS]
    if bad:
        raise ConfigError(f"unknown outputs {bad}; choose from {list(SWEEP_OUTPUTS)}")
    ordered = tuple(o for o in SWEEP_OUTPUTS if o in outputs)
    spec = SweepSpec(base, axis, tuple(clean), ordered)
    for v in clean:
        try:
            spec.point(v)
        except DomainError as exc:
            raise ConfigError(f"values: {v!r} outside the domain of axis {axis} ({exc})") from None
    return spec


def sweep_rows(spec: SweepSpec):
    """Yield ``(row, error)`` per axis value; failed metric cells are ``None``."""
    need_ctmc = any(c in METRIC_COLUMNS for c in spec.outputs)
    for v in spec.values:
        cfg = spec.point(v)
        rec = bounds.classify_mode(cfg).as_dict()
        err = None
        if need_ctmc:
            try:
                rec.update(ctmc.occupancy_metrics(ctmc.solve(cfg)).as_dict())
            except (BscsError, ArithmeticError, ValueError) as exc:
                err = f"{spec.axis}={v}: {exc}"
        row = [v] + [rec.get(c) for c in spec.columns[1:]]
        yield row, err


def cmd_sweep(args) -> int:
    spec = sweep_spec_from_mapping(load_json(args.path or args.config or _missing("sweep spec")))
    rows, errors = [], []
    for row, err in sweep_rows(spec):
        rows.append(row)
        if err:
            errors.append(err)
    _emit(args, list(spec.columns), rows)
    if errors:
        print(f"warning: {len(errors)} of {len(rows)} sweep points failed", file=sys.stderr)
        for e in errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_SOLVER if len(errors) == len(rows) else EXIT_PARTIAL
    return EXIT_OK


def _missing(what):
    raise ConfigError(f"no {what} file given (positional path or --config)")


def cmd_simulate(args) -> int:
    from .simulator import load_sim_config, simulate
    from dataclasses import replace
    cfg = load_sim_config(args.path or args.config or _missing("simulation config"))
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    analytic = None
    if args.analytic:
        analytic = ctmc.occupancy_metrics(ctmc.solve(cfg.station)).as_dict()
    est = simulate(cfg, workers=args.workers,
                   analytic=analytic["blocking"] if analytic else None)
    rec = est.as_record()
    rec.pop("analytic_gap")
    if analytic:
        for m in METRIC_COLUMNS:
            rec[f"analytic_{m}"] = analytic[m]
        for m in METRIC_COLUMNS:
            a = analytic[m]
            rec[f"gap_{m}"] = abs(rec[m] - a) / abs(a) if a else abs(rec[m])
    _emit(args, list(rec), [list(rec.values())])
    if args.replications_out:
        with open(args.replications_out, "w", newline="") as fh:
            fh.write(est.replication_csv(args.digits))
    return EXIT_OK


def table1_rows(station=None, replications=100, horizon_seconds=30 * 86400.0, base_seed=0,
                workers=1, exponential=False, b_values=TABLE1_B):
    """Rows of ``B, AR, <scenario>, <scenario>_gap...`` mirroring the comparison table."""
    from .distributions import PRESETS
    from .simulator import SimConfig, simulate
    base = station if station is not None else reference_config()
    names = list(TABLE1_SCENARIOS) + (["EXP"] if exponential else [])
    header = ["B", "AR"] + [x for n in names for x in (n, f"{n}_gap")]
    rows = []
    for b in b_values:
        st = base.replace(batteries_b=b)
        ar = ctmc.blocking_probability(ctmc.solve(st))
        row = [b, ar]
        for name in names:
            kw = dict(horizon_seconds=horizon_seconds, replications=replications, base_seed=base_seed)
            if name == "EXP":
                sc = SimConfig.exponential(st, **kw)
            else:
                swap, charge = TABLE1_SCENARIOS[name]
                sc = SimConfig(st, PRESETS[swap], PRESETS[charge], **kw)
            est = simulate(sc, workers=workers, analytic=ar)
            row += [est.blocking.mean, est.analytic_gap]
        rows.append(row)
    return header, rows


def cmd_compare_table1(args) -> int:
    station = load_station_config(args.config) if args.config else None
    header, rows = table1_rows(
        station=station,
        replications=args.replications,
        horizon_seconds=args.horizon_days * 86400.0,
        base_seed=args.seed if args.seed is not None else 0,
        workers=args.workers,
        exponential=args.exponential,
    )
    _emit(args, header, rows)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="configuration file (JSON)")
    common.add_argument("--output", "-o", default=argparse.SUPPRESS, help="write the table here instead of stdout")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the base seed")
    common.add_argument("--digits", type=int, default=argparse.SUPPRESS, help="significant digits (default 17)")
    common.add_argument("--no-header-timestamp", action="store_true", default=argparse.SUPPRESS,
                        help="omit the '# generated' comment line")

    p = argparse.ArgumentParser(prog="bscs", parents=[common],
                                description="Battery swapping and charging station workbench.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="exact CTMC metrics and mode report")
    s.add_argument("path", nargs="?")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("bounds", parents=[common], help="closed-form bounds and QBD asymptotics")
    s.add_argument("path", nargs="?")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sweep", parents=[common], help="one-axis parameter sweep")
    s.add_argument("path", nargs="?")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate")
    s.add_argument("path", nargs="?")
    s.add_argument("--analytic", action="store_true", help="also solve the CTMC and report relative gaps")
    s.add_argument("--replications-out", help="write per-replication rows to this file")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare-table1", parents=[common],
                       help="analytic vs simulated blocking over the reference battery ladder")
    s.add_argument("--replications", type=int, default=100)
    s.add_argument("--horizon-days", type=float, default=30.0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--exponential", action="store_true", help="add an exponential-service column")
    s.set_defaults(func=cmd_compare_table1, path=None)
    return p


_GLOBAL_DEFAULTS = dict(config=None, output=None, seed=None, digits=17, no_header_timestamp=False)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for k, v in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    if not 1 <= args.digits <= 17:
        print("error: --digits must lie in 1..17", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BscsError, ArithmeticError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
