"""Six-step welfare-inference audits and their rendering.

Steps 1 and 6 only check that the required declarations are present and
surface them; they are never auto-judged.  Steps 2 to 5 run the
corresponding computations on the configured scenario.  A step is
``pass``, ``fail`` or ``manual-review``; the audit passes when no step
fails.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import final_choice_values, learner_from_config, simulate_learner
from .inference import ChannelSpec, identifiability_gap, simulate_data
from .neural import validate_encoding
from .scenarios import ScenarioBundle, build_addiction, build_conditioning, build_platform
from .welfare import WelfareCriterion, classify_mistake_states

STEP_TITLES = (
    "Define the welfare criterion U",
    "Specify the computational model",
    "Validate neural encodings",
    "Assess model identifiability",
    "Locate welfare-relevant divergences",
    "Analyse policy implementation",
)
STATUSES = ("pass", "fail", "manual-review")
MISSING = "missing input"

BUILDERS = {
    "addiction": build_addiction,
    "conditioning": build_conditioning,
    "platform": build_platform,
}


def resolve_scenario(ref, base_dir: Path | None = None) -> ScenarioBundle:
    """Scenario from a bundle, a ``{"builder": name, "params": {...}}``
    reference, an inline ``{"scenario": ...}`` envelope or a path to one."""
    if isinstance(ref, ScenarioBundle):
        return ref
    if isinstance(ref, str):
        path = Path(ref)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return ScenarioBundle.from_json(path.read_text())
    if isinstance(ref, dict) and "builder" in ref:
        name = ref["builder"]
        if name not in BUILDERS:
            raise ValueError(f"unknown scenario builder {name!r}")
        return BUILDERS[name](**ref.get("params", {}))
    if isinstance(ref, dict) and "scenario" in ref:
        return ScenarioBundle.from_dict(ref)
    raise ValueError("cannot resolve scenario reference")


@dataclass
class AuditConfig:
    scenario: ScenarioBundle
    declared_criterion: dict
    model_declaration: str = ""
    encoding_thresholds: dict = field(default_factory=lambda: {"min_pearson_r": 0.5, "min_spearman_rho": 0.5})
    identifiability_thresholds: dict = field(default_factory=lambda: {"max_tv_for_twin_flag": 1e-6,
                                                                       "min_delta_ll": 3.0})
    implementation_notes: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def __post_init__(self):
        enc, ident = self.encoding_thresholds, self.identifiability_thresholds
        for key in ("min_pearson_r", "min_spearman_rho"):
            if not -1.0 <= enc.get(key, 0.5) <= 1.0:
                raise ValueError(f"{key} must lie in [-1, 1]")
        if not 0.0 <= ident.get("max_tv_for_twin_flag", 1e-6) <= 1.0:
            raise ValueError("max_tv_for_twin_flag must lie in [0, 1]")
        if not ident.get("min_delta_ll", 3.0) >= 0:
            raise ValueError("min_delta_ll must be >= 0")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "AuditConfig":
        return cls(
            resolve_scenario(d["scenario"], base_dir),
            dict(d.get("declared_criterion", {})),
            d.get("model_declaration", ""),
            {"min_pearson_r": 0.5, "min_spearman_rho": 0.5, **d.get("encoding_thresholds", {})},
            {"max_tv_for_twin_flag": 1e-6, "min_delta_ll": 3.0, **d.get("identifiability_thresholds", {})},
            dict(d.get("implementation_notes", {})),
            dict(d.get("run", {})),
        )

    @classmethod
    def load(cls, path) -> "AuditConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)


@dataclass
class ChecklistReport:
    steps: list[dict]
    overall: str

    def __post_init__(self):
        if [s["step"] for s in self.steps] != [1, 2, 3, 4, 5, 6]:
            raise ValueError("a report has exactly six steps numbered 1 to 6")
        for s in self.steps:
            if s["status"] not in STATUSES:
                raise ValueError(f"bad status {s['status']!r}")
            if not s["evidence"]:
                raise ValueError(f"step {s['step']} has no evidence")

    def status(self, step: int) -> str:
        return self.steps[step - 1]["status"]

    def to_dict(self) -> dict:
        return {"steps": self.steps, "overall": self.overall}

    @classmethod
    def from_dict(cls, d: dict) -> "ChecklistReport":
        return cls(d["steps"], d["overall"])


def _text(x) -> str:
    return x.strip() if isinstance(x, str) else ""


def _step1(cfg: AuditConfig, ctx: dict):
    crit = _text(cfg.declared_criterion.get("criterion_text"))
    just = _text(cfg.declared_criterion.get("justification_text"))
    ev = {"kind": cfg.declared_criterion.get("kind", MISSING),
          "criterion_text": crit or MISSING, "justification_text": just or MISSING}
    return ("pass" if crit and just else "fail"), ev


def _step2(cfg: AuditConfig, ctx: dict):
    decl = _text(cfg.model_declaration)
    specs = cfg.scenario.model_specs
    problems = {m.label: m.problems(cfg.scenario.mdp) for m in specs}
    ev = {"model_declaration": decl or MISSING,
          "models": [m.label for m in specs] or MISSING,
          "problems": {k: v for k, v in problems.items() if v}}
    ok = bool(decl) and bool(specs) and not any(problems.values())
    return ("pass" if ok else "fail"), ev


def _step3(cfg: AuditConfig, ctx: dict):
    specs = [m for m in cfg.scenario.model_specs if m.neural_channels]
    if not specs:
        return "fail", {"channels": MISSING}
    spec = specs[0]
    sigma = cfg.run.get("channel_sigma")
    if sigma is not None:
        spec = spec.with_(neural_channels=tuple(ChannelSpec(c.latent, c.link, sigma, c.name)
                                                for c in spec.neural_channels))
    traj, traces = simulate_data(cfg.scenario.mdp, spec, None, cfg.run.get("trials", 1),
                                 cfg.run.get("horizon", 500), ctx["rngs"][0])
    min_r = cfg.encoding_thresholds["min_pearson_r"]
    min_rho = cfg.encoding_thresholds["min_spearman_rho"]
    ok, ev = True, {"model": spec.label}
    for tr, ch in zip(traces, spec.neural_channels):
        latent = traj.delta_experienced if ch.latent == "delta" else traj.v_state
        st = validate_encoding(tr, latent)
        passed = st.defined and st.pearson_r >= min_r and st.spearman_rho >= min_rho
        ok &= passed
        ev[ch.name] = {"latent": ch.latent, "sigma": ch.sigma,
                       "pearson_r": None if np.isnan(st.pearson_r) else st.pearson_r,
                       "spearman_rho": None if np.isnan(st.spearman_rho) else st.spearman_rho,
                       "n_samples": st.n_samples, "undefined_reason": st.undefined_reason,
                       "min_pearson_r": min_r, "min_spearman_rho": min_rho}
    return ("pass" if ok else "fail"), ev


def _step4(cfg: AuditConfig, ctx: dict):
    b = cfg.scenario
    if len(b.model_specs) < 2:
        return "fail", {"alternative_models": MISSING}
    iv = None
    label = cfg.run.get("identify_intervention")
    for cand in b.interventions:
        if label is None or cand.label == label:
            iv = cand
            break
    rep = identifiability_gap(
        b.mdp, (b.model_specs[0], b.model_specs[1]), cfg.run.get("enumeration_horizon", 3),
        cfg.run.get("neural_bins", 3), intervention=iv, rng=ctx["rngs"][1],
        relearn=(1, cfg.run.get("horizon", 500)), dual_self=b.dual_self,
        lambda_of_state=b.lambda_of_state,
    )
    th = cfg.identifiability_thresholds
    twin = rep.tv_choice <= th["max_tv_for_twin_flag"]
    ev = {"models": [b.model_specs[0].label, b.model_specs[1].label],
          "intervention": None if iv is None else iv.label, **rep.to_dict(),
          "twin_flag": twin}
    if rep.tv_joint is not None:
        ev["neural_data_discriminate"] = rep.tv_joint > th["max_tv_for_twin_flag"]
    if twin:
        return ("manual-review" if rep.verdicts_diverge else "pass"), ev
    return ("pass" if abs(rep.delta_ll) >= th["min_delta_ll"] else "fail"), ev


def _step5(cfg: AuditConfig, ctx: dict):
    b = cfg.scenario
    kind = cfg.declared_criterion.get("kind", "long-run")
    try:
        crit = b.criterion(kind)
    except KeyError:
        crit = WelfareCriterion(kind, cfg.declared_criterion.get("criterion_text", ""),
                                cfg.declared_criterion.get("justification_text", ""),
                                cfg.declared_criterion.get("gamma_w", b.agent_config.gamma))
    learner = learner_from_config(b.mdp, b.agent_config, b.cue_model)
    _, state = simulate_learner(learner, b.mdp, cfg.run.get("trials", 1), cfg.run.get("horizon", 500),
                                ctx["rngs"][2])
    mc = classify_mistake_states(b.mdp, final_choice_values(learner, state), crit, b.dual_self,
                                 b.lambda_of_state)
    return "pass", {"criterion": crit.label, **mc.to_dict()}


def _step6(cfg: AuditConfig, ctx: dict):
    op = _text(cfg.implementation_notes.get("operationalisation_text"))
    fp = _text(cfg.implementation_notes.get("fairness_privacy_text"))
    ev = {"operationalisation_text": op or MISSING, "fairness_privacy_text": fp or MISSING}
    return ("manual-review" if op and fp else "fail"), ev


def run_audit(config: AuditConfig, rng: np.random.Generator) -> ChecklistReport:
    """Run the six checklist steps in order; step errors become failures."""
    ctx = {"rngs": [np.random.default_rng(int(s)) for s in rng.integers(2**63, size=3)]}
    steps = []
    for i, (fn, title) in enumerate(zip((_step1, _step2, _step3, _step4, _step5, _step6), STEP_TITLES), 1):
        try:
            status, ev = fn(config, ctx)
        except Exception as exc:  # recorded, not raised
            status, ev = "fail", {"error": f"{type(exc).__name__}: {exc}"}
        steps.append({"step": i, "title": title, "status": status, "evidence": ev})
    overall = "fail" if any(s["status"] == "fail" for s in steps) else "pass"
    return ChecklistReport(steps, overall)


def _fmt(v) -> str:
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def render_report(report: ChecklistReport, format: str = "json") -> str:
    if format == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")
    lines = ["# Welfare inference checklist", "", f"Overall: **{report.overall}**", "",
             "| Step | Title | Status |", "|---|---|---|"]
    lines += [f"| {s['step']} | {s['title']} | {s['status']} |" for s in report.steps]
    for s in report.steps:
        lines += ["", f"## Step {s['step']}: {s['title']}", ""]
        lines += [f"- {k}: {_fmt(v)}" for k, v in sorted(s["evidence"].items())]
    return "\n".join(lines) + "\n"
