"""Command-line entry point: ``dcwitness {predict,bounds,optimize,simulate,sweep}``.

A run reads one flat YAML/JSON config file, applies command-line overrides
(flag > file > default), writes CSV/JSON artifacts into ``--out`` and prints
a single JSON summary line. Failures print a JSON error record and exit
nonzero.
"""

from __future__ import annotations

import argparse
import ast
import dataclasses
import json
import math
import operator
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from . import classical_model, expsim, quantum_model, witness
from .pam_core import PamError, PhaseConfig

COMMANDS = ("predict", "bounds", "optimize", "simulate", "sweep")
RANDOMIZED = {"optimize", "simulate", "sweep", "bounds"}


class ConfigError(Exception):
    """Base for configuration problems."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field} {reason}")
        self.field = field
        self.reason = reason


class UnknownKey(ConfigError):
    pass


# -- phase expressions -------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_phase(node):
    if isinstance(node, ast.Expression):
        return _eval_phase(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_phase(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_phase(node.left), _eval_phase(node.right))
    raise ValueError("unsupported phase expression")


def parse_phase(value) -> float:
    """A phase in radians: a number or an arithmetic expression in ``pi`` like ``"7*pi/4"``."""
    if isinstance(value, bool):
        raise ValueError("phase cannot be a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return _eval_phase(ast.parse(str(value).strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse phase {value!r}") from None


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    phi: Optional[tuple[float, ...]] = None
    sigma: tuple[float, ...] = expsim.SWEEP_SIGMA
    eta: float = 1.0
    t_a: float = 1.0
    t_b: float = 1.0
    visibility: float = 1.0
    policy: str = "post_selected"
    trials: int = 100_000
    seed: int = 0
    x_mode: str = "round_robin"
    accounting: str = "per_trigger"
    witness: Optional[str] = None
    fix_sigma: Optional[tuple[float, float]] = None
    grid_n: int = 8
    n_starts: int = 20
    sweep_n: int = 70
    grid: Optional[tuple[float, ...]] = None
    source: str = "analytic"
    trials_per_setting: int = 10_000
    bins: int = expsim.DEFAULT_BINS
    n_components: int = classical_model.DEFAULT_COMPONENTS
    restarts: int = 50

    def device(self) -> quantum_model.DeviceModel:
        return quantum_model.DeviceModel(self.eta, self.t_a, self.t_b, self.visibility, self.policy)

    def phases(self) -> PhaseConfig:
        if self.phi is None:
            raise ValidationError("phi", "is required for this command")
        return PhaseConfig(self.phi, self.sigma)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}


FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _phase_list(name, value, length=None):
    if not isinstance(value, (list, tuple)):
        value = str(value).split(",")
    try:
        out = tuple(parse_phase(v) for v in value)
    except ValueError as e:
        raise ValidationError(name, str(e)) from None
    if not out:
        raise ValidationError(name, "must be nonempty")
    if any(not math.isfinite(v) for v in out):
        raise ValidationError(name, "must contain finite phases")
    if length is not None and len(out) != length:
        raise ValidationError(name, f"must have exactly {length} entries")
    return out


def _int_field(name, value, minimum):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ValidationError(name, "must be an integer")
    try:
        v = int(value)
    except ValueError:
        raise ValidationError(name, "must be an integer") from None
    if v < minimum:
        raise ValidationError(name, f"must be at least {minimum}")
    return v


def validate_mapping(raw: dict) -> RunConfig:
    """Validate a flat key/value mapping and fill in defaults."""
    unknown = sorted(set(raw) - FIELDS)
    if unknown:
        raise UnknownKey(f"unknown config key(s): {', '.join(unknown)}")
    vals: dict[str, Any] = {}
    for key, value in raw.items():
        if value is None:
            continue
        if isinstance(value, dict):
            raise ValidationError(key, "must be a scalar or a list (config is flat)")
        if key in ("phi", "sigma", "grid"):
            vals[key] = _phase_list(key, value)
        elif key == "fix_sigma":
            vals[key] = _phase_list(key, value, 2)
        elif key in ("eta", "t_a", "t_b", "visibility"):
            try:
                v = float(value)
            except (TypeError, ValueError):
                raise ValidationError(key, "must be a number") from None
            if not 0.0 <= v <= 1.0:
                raise ValidationError(key, "out of [0,1]")
            vals[key] = v
        elif key == "policy":
            try:
                vals[key] = quantum_model.Policy.parse(value).value
            except ValueError as e:
                raise ValidationError(key, str(e)) from None
        elif key == "witness":
            try:
                vals[key] = witness.parse_witness(value)
            except ValueError as e:
                raise ValidationError(key, str(e)) from None
        elif key == "x_mode":
            if value not in {m.value for m in expsim.XMode}:
                raise ValidationError(key, "must be 'round_robin' or 'uniform'")
            vals[key] = value
        elif key == "accounting":
            if value not in {m.value for m in expsim.Accounting}:
                raise ValidationError(key, "must be 'per_trigger' or 'per_pair'")
            vals[key] = value
        elif key == "source":
            if value not in ("analytic", "simulated"):
                raise ValidationError(key, "must be 'analytic' or 'simulated'")
            vals[key] = value
        elif key == "seed":
            vals[key] = _int_field(key, value, 0)
        elif key == "grid_n":
            vals[key] = _int_field(key, value, 8)
        elif key in ("trials", "n_starts", "sweep_n", "trials_per_setting", "bins", "n_components", "restarts"):
            vals[key] = _int_field(key, value, 1)
    cfg = RunConfig(**vals)
    if cfg.phi is not None:
        PhaseConfig(cfg.phi, cfg.sigma)
    return cfg


def _read_raw(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config_text(text)


def load_config(path) -> RunConfig:
    return validate_mapping(_read_raw(path))


def parse_config_text(text: str) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"config is not valid YAML/JSON: {e}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ParseError("config must be a key/value mapping")
    return raw


# -- commands ----------------------------------------------------------------

def _write(out: Path, name: str, text: str, written: list) -> None:
    path = out / name
    path.write_text(text)
    written.append(str(path))


def _write_json(out: Path, name: str, obj, written: list) -> None:
    _write(out, name, json.dumps(obj, indent=2, sort_keys=True) + "\n", written)


def _witness_for(n_x: int, n_y: int) -> Optional[str]:
    for name, scen in witness.SCENARIOS.items():
        if (scen.n_x, scen.n_y) == (n_x, n_y):
            return name
    return None


def cmd_predict(cfg: RunConfig, out: Path, written: list) -> dict:
    phases = cfg.phases()
    device = cfg.device()
    table = quantum_model.lossy_table(phases, device)
    _write(out, "table.csv", table.to_csv(), written)
    _write(out, "table.json", table.to_json(), written)
    summary = {"expectations": table.expectations().tolist()}
    name = _witness_for(table.n_x, table.n_y)
    if name:
        summary["witness"] = name
        summary["value"] = witness.WITNESSES[name](table)
    return summary


def cmd_bounds(cfg: RunConfig, out: Path, written: list) -> dict:
    name = cfg.witness or "idw"
    fn = witness.WITNESSES[name]
    classical, strat = classical_model.classical_max(fn, witness.SCENARIOS[name])
    quantum = witness.maximize_quantum(name, grid_n=cfg.grid_n, seed=cfg.seed, n_starts=cfg.n_starts)
    summary = {
        "witness": name,
        "classical": classical,
        "classical_maximizer": strat.to_dict(),
        "quantum": quantum.value,
        "quantum_config": quantum.to_dict(),
    }
    if name == "w2":
        corr, corr_strat = classical_model.correlated_det_search(cfg.n_components, cfg.restarts, cfg.seed)
        summary["classical_correlated"] = corr
        summary["correlated_strategy"] = corr_strat.to_dict()
    _write_json(out, "bounds.json", summary, written)
    return {k: summary[k] for k in ("witness", "classical", "quantum") + (("classical_correlated",) if name == "w2" else ())}


def cmd_optimize(cfg: RunConfig, out: Path, written: list) -> dict:
    name = cfg.witness or "idw"
    res = witness.maximize_quantum(name, fixed_sigma=cfg.fix_sigma, grid_n=cfg.grid_n,
                                   seed=cfg.seed, n_starts=cfg.n_starts)
    _write(out, "optimum.json", res.to_json() + "\n", written)
    return res.to_dict()


def cmd_simulate(cfg: RunConfig, out: Path, written: list) -> dict:
    phases = cfg.phases()
    device = cfg.device()
    ledger = expsim.run_experiment(phases, device, cfg.trials, cfg.seed, cfg.x_mode, cfg.accounting)
    _write(out, "ledger.csv", ledger.to_csv(), written)
    summary: dict = {"policy": device.policy.value, "triggers": int(ledger.trigger.sum())}
    name = _witness_for(len(phases.phi), len(phases.sigma))
    try:
        table = expsim.estimate_table(ledger, device.policy)
    except witness.EmptySetting:
        table = None
    if table is not None:
        _write(out, "table.csv", table.to_csv(), written)
    if name:
        res = witness.witness_stderr(ledger, name, device.policy)
        _write(out, "witness.json", res.to_json() + "\n", written)
        summary.update(witness=name, value=res.value, stderr=res.stderr)
        if name == "idw":
            summary["min_retrocausality"] = classical_model.min_retrocausality(res.value)
    return summary


def cmd_sweep(cfg: RunConfig, out: Path, written: list) -> dict:
    device = cfg.device()
    common = dict(sigma=cfg.sigma, source=cfg.source, device=device,
                  trials_per_setting=cfg.trials_per_setting, seed=cfg.seed, bins=cfg.bins,
                  accounting=cfg.accounting)
    if cfg.grid is not None:
        spec = expsim.SweepSpec(grid=cfg.grid, **common)
    else:
        spec = expsim.SweepSpec.uniform(cfg.sweep_n, **common)
    res = expsim.sweep_idw(spec)
    _write(out, "histogram.csv", res.histogram_csv(), written)
    summary = res.summary()
    _write_json(out, "sweep_summary.json", summary, written)
    return summary


HANDLERS = {
    "predict": cmd_predict,
    "bounds": cmd_bounds,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def dispatch(cfg: RunConfig, command: str, out) -> dict:
    """Run one command, write its artifacts and return the summary record."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    _write_json(out, "effective_config.json", {"command": command, "config": cfg.to_dict()}, written)
    result = HANDLERS[command](cfg, out, written)
    return {"command": command, "status": "ok", **result, "outputs": written, "config": cfg.to_dict()}


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcwitness", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat YAML or JSON config file")
        p.add_argument("--out", default="out", help="artifact directory (default: ./out)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1,
                       help="accepted for interface stability; computation is single-threaded")
        p.add_argument("--strict-repro", action="store_true",
                       help="refuse to run randomized commands without an explicit seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key")
        if name in ("bounds", "optimize"):
            p.add_argument("--witness", choices=["w2", "idw"])
        if name == "optimize":
            p.add_argument("--fix-sigma", metavar="A,B")
        if name in ("predict", "simulate"):
            p.add_argument("--eta", type=float)
            p.add_argument("--policy")
        if name == "simulate":
            p.add_argument("--trials", type=int)
    return parser


def _overrides(args) -> dict:
    over: dict[str, Any] = {}
    for item in args.set:
        if "=" not in item:
            raise ParseError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        over[key.strip()] = yaml.safe_load(value)
    for key in ("seed", "witness", "eta", "policy", "trials"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "fix_sigma", None):
        over["fix_sigma"] = args.fix_sigma.split(",")
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = "load_config"
    try:
        raw = _read_raw(args.config) if args.config else {}
        over = _overrides(args)
        if args.strict_repro and args.command in RANDOMIZED and {**raw, **over}.get("seed") is None:
            raise ValidationError("seed", "must be given explicitly under --strict-repro")
        raw.update(over)
        cfg = validate_mapping(raw)
        stage = args.command
        record = dispatch(cfg, args.command, args.out)
    except (ConfigError, PamError, ValueError, OSError) as e:
        err = {
            "status": "error",
            "command": args.command,
            "module": type(e).__module__,
            "operation": stage,
            "error": type(e).__name__,
            "cause": str(e),
        }
        if isinstance(e, ValidationError):
            err["field"] = e.field
        print(json.dumps(err))
        return 2 if stage == "load_config" else 1
    print(json.dumps(record))
    return 0


if __name__ == "__main__":
    sys.exit(main())
