"""Command-line entry point.

Every subcommand reads an optional JSON config, takes all randomness from
``--seed`` and writes its outputs into ``--out``.  Exit status is 0 on
success, 1 on a usage error and 2 when the computation itself fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib.resources import files
from pathlib import Path

import numpy as np

from .agent import AgentConfig, CueModel, Trajectory, run_learning
from .environment import Intervention, Mdp
from .inference import FitSearch, ModelSpec, fit_mle, identifiability_gap, simulate_data
from .neural import ConditioningProtocol, simulate_conditioning
from .report import AuditConfig, render_report, resolve_scenario, run_audit
from .scenarios import (CONDITIONING_CONFIG, PlatformOptimizer, bandit_mdp, build_addiction,
                        build_behavioral_twin, build_platform, build_scale_pair, default_scale_mdp,
                        run_platform_loop)
from .welfare import compare_interventions

COMMANDS = ("simulate", "condition", "fit", "identify", "welfare", "platform", "audit")
SHIPPED_AUDIT = "addiction_audit.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _seed(text: str) -> int:
    if not text.isdigit():
        raise argparse.ArgumentTypeError(f"seed must be a decimal unsigned 64-bit integer, got {text!r}")
    val = int(text)
    if val >= 2**64:
        raise argparse.ArgumentTypeError("seed must be below 2**64")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neurowelfare", description="Value-learning simulation, inference and welfare audits.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    helps = {
        "simulate": "run the actor-critic learner and write the trajectory CSV",
        "condition": "simulate Pavlovian conditioning and write peri-event TD errors",
        "fit": "maximum-likelihood fit of a model spec",
        "identify": "exact identifiability analysis of a model pair",
        "welfare": "compare interventions under declared welfare criteria",
        "platform": "run the platform reward-shaping loop",
        "audit": "run the six-step checklist audit",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=_seed, default=0, help="decimal unsigned 64-bit seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--format", choices=("json", "csv", "markdown"), default=None)
    return parser


def _load_config(path: Path | None) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    return json.loads(path.read_text()), path.parent


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _check_format(fmt, allowed, default):
    fmt = fmt or default
    if fmt not in allowed:
        raise UsageError(f"format {fmt!r} not supported here; choose from {', '.join(allowed)}")
    return fmt


def cmd_simulate(args, cfg, base):
    _check_format(args.format, ("csv",), "csv")
    if "scenario" in cfg:
        b = resolve_scenario(cfg["scenario"], base)
        mdp, config, cue = b.mdp, b.agent_config, b.cue_model
    elif "mdp" in cfg:
        mdp = Mdp.from_dict(cfg["mdp"])
        config = AgentConfig.from_dict(cfg.get("agent_config", {}))
        cue = CueModel.from_dict(cfg["cue_model"]) if cfg.get("cue_model") else None
    else:
        b = build_addiction()
        mdp, config, cue = b.mdp, b.agent_config, b.cue_model
    traj, _ = run_learning(mdp, config, cue, cfg.get("trials", 1), cfg.get("horizon", 200),
                           np.random.default_rng(args.seed))
    return [_write(args.out, "trajectory.csv", traj.to_csv())]


def cmd_condition(args, cfg, base):
    _check_format(args.format, ("csv",), "csv")
    protocol = ConditioningProtocol(**cfg.get("protocol", {}))
    config = CONDITIONING_CONFIG.with_(**cfg.get("agent_config", {}))
    traj, summary = simulate_conditioning(protocol, config, np.random.default_rng(args.seed))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("phase", "event", "mean_delta"))
    for key in sorted(summary.values):
        phase, event = key.split(".")
        w.writerow((phase, event, repr(summary.values[key])))
    return [_write(args.out, "conditioning.csv", buf.getvalue()),
            _write(args.out, "conditioning_summary.txt", summary.to_text()),
            _write(args.out, "trajectory.csv", traj.to_csv())]


def cmd_fit(args, cfg, base):
    _check_format(args.format, ("json",), "json")
    rng = np.random.default_rng(args.seed)
    if "mdp" in cfg:
        mdp = Mdp.from_dict(cfg["mdp"])
    elif "scenario" in cfg:
        mdp = resolve_scenario(cfg["scenario"], base).mdp
    else:
        mdp = bandit_mdp()
    spec = ModelSpec.from_dict(cfg["model"]) if "model" in cfg else ModelSpec(
        "plain-rl", {"alpha": (0.01, 0.5), "beta": (0.1, 10.0)}, {"gamma": 0.9})
    search = FitSearch(**cfg.get("search", {}))
    if "data" in cfg:
        path = Path(cfg["data"])
        data = Trajectory.from_csv((base / path) if base and not path.is_absolute() else path)
    else:
        sim = cfg.get("simulate", {})
        truth = sim.get("true_params", {"alpha": 0.1, "beta": 2.0})
        data = simulate_data(mdp, spec, truth, sim.get("episodes", 200), sim.get("horizon", 50), rng)
    fit = fit_mle(data, mdp, spec, search, rng)
    return [_write(args.out, "fit.json", fit.to_json() + "\n")]


def cmd_identify(args, cfg, base):
    _check_format(args.format, ("json",), "json")
    rng = np.random.default_rng(args.seed)
    pair_kind = cfg.get("pair", "twin")
    iv = dual = lam = None
    if pair_kind == "twin":
        b = resolve_scenario(cfg["scenario"], base) if "scenario" in cfg else build_addiction()
        pair, mdp = build_behavioral_twin(b, cfg.get("delta_sigma", 0.1)), b.mdp
        label = cfg.get("intervention", "cue-removal")
        iv = next((x for x in b.interventions if x.label == label), None)
        dual, lam = b.dual_self, b.lambda_of_state
    elif pair_kind == "scale":
        pair = build_scale_pair(cfg.get("c", 2.0), cfg.get("base_beta", 2.0),
                                value_sigma=cfg.get("value_sigma", 0.1))
        mdp = default_scale_mdp()
    else:
        raise UsageError(f"unknown pair kind {pair_kind!r}")
    rep = identifiability_gap(mdp, pair, cfg.get("horizon", 3), cfg.get("neural_bins", 3),
                              intervention=iv, rng=rng, dual_self=dual, lambda_of_state=lam)
    return [_write(args.out, "identify.json", rep.to_json() + "\n")]


def cmd_welfare(args, cfg, base):
    fmt = _check_format(args.format, ("csv", "json"), "csv")
    b = resolve_scenario(cfg["scenario"], base) if "scenario" in cfg else build_addiction()
    ivs = [Intervention.from_dict(d) for d in cfg["interventions"]] if "interventions" in cfg else b.interventions
    cmp = compare_interventions(b.mdp, b.agent_config, b.cue_model, ivs, b.criteria,
                                cfg.get("trials", 1), cfg.get("horizon", 200),
                                np.random.default_rng(args.seed), b.dual_self, b.lambda_of_state)
    if fmt == "json":
        return [_write(args.out, "welfare.json", json.dumps(cmp.to_dict(), sort_keys=True, indent=2) + "\n")]
    return [_write(args.out, "welfare.csv", cmp.to_csv())]


def cmd_platform(args, cfg, base):
    _check_format(args.format, ("csv",), "csv")
    b = resolve_scenario(cfg["scenario"], base) if "scenario" in cfg else build_platform()
    opt = PlatformOptimizer(**cfg.get("optimizer", {}))
    series = run_platform_loop(b, opt, np.random.default_rng(args.seed))
    return [_write(args.out, "platform.csv", series.to_csv())]


def cmd_audit(args, cfg, base):
    fmt = _check_format(args.format, ("json", "markdown"), "json")
    if args.config is None:
        shipped = files("neurowelfare") / "data" / SHIPPED_AUDIT
        config = AuditConfig.from_dict(json.loads(shipped.read_text()))
    else:
        config = AuditConfig.from_dict(cfg, base)
    report = run_audit(config, np.random.default_rng(args.seed))
    name = "report.json" if fmt == "json" else "report.md"
    return [_write(args.out, name, render_report(report, fmt))]


HANDLERS = {
    "simulate": cmd_simulate, "condition": cmd_condition, "fit": cmd_fit, "identify": cmd_identify,
    "welfare": cmd_welfare, "platform": cmd_platform, "audit": cmd_audit,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        cfg, base = _load_config(args.config)
        paths = HANDLERS[args.command](args, cfg, base)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
