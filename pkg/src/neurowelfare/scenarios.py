"""Canonical scenario builders.

Each builder returns a :class:`ScenarioBundle` (environment, learner
settings, cue model, dual-self utilities, declared criteria, candidate
interventions and competing model specs) or a pair of bound models.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentConfig, CueModel, DualSelfUtility, implemented_policy_table, learner_from_config, simulate_learner
from .environment import Intervention, Mdp, StochasticPolicy, validate_mdp
from .inference import BoundModel, ChannelSpec, ModelSpec
from .neural import LinkFunction, conditioning_chain
from .welfare import WelfareCriterion, criterion_utility, evaluate_welfare

ABSTAIN, CONSUME = 0, 1
BASELINE, CUE = 0, 1

CONDITIONING_CONFIG = AgentConfig(alpha_critic=0.015, alpha_actor=0.015, beta=0.0, gamma=0.95,
                                  lr_schedule="decay", lr_tau=1000.0)


@dataclass(eq=False)
class ScenarioBundle:
    mdp: Mdp
    agent_config: AgentConfig
    cue_model: CueModel | None = None
    dual_self: DualSelfUtility | None = None
    criteria: list[WelfareCriterion] = field(default_factory=list)
    interventions: list[Intervention] = field(default_factory=list)
    model_specs: list[ModelSpec] = field(default_factory=list)
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def lambda_of_state(self) -> np.ndarray | None:
        return None if self.cue_model is None else self.cue_model.lambda_of_state

    def problems(self) -> list[str]:
        msgs = list(validate_mdp(self.mdp).violations)
        S, A = self.mdp.n_states, self.mdp.n_actions
        if self.cue_model is not None:
            msgs += self.cue_model.problems(self.mdp)
        if self.dual_self is not None and self.dual_self.u_long.shape != (A,):
            msgs.append("dual-self utilities need one entry per action")
        for c in self.criteria:
            if c.table is not None and c.table.shape != (S, A):
                msgs.append(f"criterion {c.label!r} table does not match the environment")
        for iv in self.interventions:
            msgs += iv.problems(self.mdp)
        for m in self.model_specs:
            msgs += [f"{m.label}: {p}" for p in m.problems(self.mdp)]
        return msgs

    def criterion(self, label_or_kind: str) -> WelfareCriterion:
        for c in self.criteria:
            if label_or_kind in (c.label, c.kind):
                return c
        raise KeyError(label_or_kind)

    def to_dict(self) -> dict:
        return {"scenario": {
            "label": self.label,
            "mdp": self.mdp.to_dict(),
            "agent_config": self.agent_config.to_dict(),
            "cue_model": None if self.cue_model is None else self.cue_model.to_dict(),
            "dual_self": None if self.dual_self is None else self.dual_self.to_dict(),
            "criteria": [c.to_dict() for c in self.criteria],
            "interventions": [iv.to_dict() for iv in self.interventions],
            "model_specs": [m.to_dict() for m in self.model_specs],
            "extra": self.extra,
        }}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioBundle":
        if "scenario" not in d:
            raise ValueError("missing 'scenario' envelope")
        s = d["scenario"]
        return cls(
            Mdp.from_dict(s["mdp"]),
            AgentConfig.from_dict(s["agent_config"]),
            None if s.get("cue_model") is None else CueModel.from_dict(s["cue_model"]),
            None if s.get("dual_self") is None else DualSelfUtility.from_dict(s["dual_self"]),
            [WelfareCriterion.from_dict(c) for c in s.get("criteria", [])],
            [Intervention.from_dict(iv) for iv in s.get("interventions", [])],
            [ModelSpec.from_dict(m) for m in s.get("model_specs", [])],
            s.get("label", ""),
            s.get("extra", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioBundle":
        return cls.from_dict(json.loads(text))


# -- conditioning -------------------------------------------------------------

def build_conditioning(cue_to_reward_delay: int = 2, magnitude: float = 1.0,
                       omission_prob: float = 0.0) -> ScenarioBundle:
    mdp = conditioning_chain(cue_to_reward_delay, magnitude, omission_prob)
    return ScenarioBundle(mdp, CONDITIONING_CONFIG, label="conditioning",
                          extra={"delay": cue_to_reward_delay, "magnitude": magnitude,
                                 "omission_prob": omission_prob})


# -- addiction ------------------------------------------------------------------

def addiction_rewards(lambda_base, lambda_cue, short, cost) -> tuple[DualSelfUtility, np.ndarray, np.ndarray]:
    u = DualSelfUtility([0.0, short - cost], [0.0, short])
    lam = np.array([lambda_base, lambda_cue])
    R = lam[:, None] * u.u_long[None, :] + (1 - lam[:, None]) * u.u_short[None, :]
    return u, lam, R


def kappa_threshold(lambda_cue: float = 0.5, consumption_reward_short: float = 1.0,
                    long_run_cost: float = 3.0) -> float:
    """Smallest cue strength at which consuming beats abstaining in the cue state.

    Both actions lead to the same next context, so the comparison reduces to
    the one-step reward gap divided by the cue reactivity of consuming (1).
    """
    r_consume = consumption_reward_short - lambda_cue * long_run_cost
    return max(0.0, -r_consume)


def build_addiction(
    kappa: float | None = None,
    lambda_cue: float = 0.5,
    lambda_base: float = 0.8,
    consumption_reward_short: float = 1.0,
    long_run_cost: float = 3.0,
    beta: float = 3.0,
    alpha: float = 0.1,
    gamma: float = 0.9,
    gamma_w: float = 0.9,
    tax: float = 0.5,
) -> ScenarioBundle:
    """Two alternating contexts (baseline, cue) with actions abstain / consume.

    The environment reward is the lambda-weighted dual-self utility.  The
    cue reactivity of consuming in the cue context is 1, so ``kappa`` is in
    reward units; ``None`` picks twice the flipping threshold.
    """
    if not (0.0 <= lambda_cue <= lambda_base <= 1.0):
        raise ValueError("need 0 <= lambda_cue <= lambda_base <= 1")
    if long_run_cost < 0:
        raise ValueError("long_run_cost must be >= 0")
    k_star = kappa_threshold(lambda_cue, consumption_reward_short, long_run_cost)
    if kappa is None:
        kappa = 2.0 * k_star
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    u, lam, R = addiction_rewards(lambda_base, lambda_cue, consumption_reward_short, long_run_cost)
    P = np.zeros((2, 2, 2))
    P[BASELINE, :, CUE] = 1.0
    P[CUE, :, BASELINE] = 1.0
    mdp = Mdp(P, R, [False, True], [False, False], initial_state=BASELINE)
    C = np.zeros((2, 2))
    C[CUE, CONSUME] = 1.0
    cue = CueModel(C, [0.0, kappa], lam, acts_on="value")
    config = AgentConfig(alpha_critic=alpha, alpha_actor=alpha, beta=beta, gamma=gamma,
                         policy_mode="q-from-v")
    criteria = [
        WelfareCriterion("long-run", "Welfare is the long-run self's utility u^L of each choice.",
                         "Consumption harms are delayed and discounted in the moment; the "
                         "long-run self is the standard the person endorses on reflection.",
                         gamma_w),
        WelfareCriterion("implemented", "Welfare is the lambda-weighted blend of long-run and "
                         "short-run utility actually acted on in each context.",
                         "Sensitivity case: treats context-driven weighting as part of the "
                         "person's preferences rather than as a mistake.", gamma_w),
        WelfareCriterion("experienced", "Welfare is the reward the environment delivers.",
                         "Sensitivity case: equates welfare with hedonic experience.", gamma_w),
    ]
    interventions = [
        Intervention("reward-shift", [BASELINE, CUE], [CONSUME], -tax, "tax"),
        Intervention("cue-removal", [CUE], [], 0.0, "cue-removal"),
        Intervention("action-restriction", [CUE], [CONSUME], 0.0, "commitment"),
    ]
    bundle = ScenarioBundle(mdp, config, cue, u, criteria, interventions, [], "addiction",
                            {"kappa": kappa, "kappa_star": k_star, "cue_states": [CUE]})
    bundle.model_specs = [m.spec for m in build_behavioral_twin(bundle)]
    return bundle


# -- model pairs ----------------------------------------------------------------

def build_behavioral_twin(base: ScenarioBundle, delta_sigma: float | None = 0.1) -> tuple[BoundModel, BoundModel]:
    """Cue-distortion model and a taste-shift model with identical choices.

    M1 keeps the environment reward, adds ``kappa * C`` to choice values and
    lets the distortion drive learning; it is judged by the long-run
    criterion.  M2 treats the same bonus as real reward; it is judged by
    the reward it experiences.  Both learn the same value tables from the
    same initial values and learning rates, so every choice probability
    matches.  Their prediction errors differ by the bonus, which a
    delta-encoding channel (``delta_sigma``; ``None`` for none) can see.
    """
    cue, cfg, mdp = base.cue_model, base.agent_config, base.mdp
    if cue is None or cue.acts_on != "value":
        raise ValueError("twin construction needs a value-acting cue model")
    if cfg.cue_delta != "distorted" or cfg.lr_schedule != "constant":
        raise ValueError("twin construction needs distorted learning errors and constant rates")
    kappa = cue.kappa[mdp.cue_flags]
    if len(kappa) and np.ptp(kappa) > 0:
        raise ValueError("twin construction needs one cue strength across cue states")
    k = float(kappa[0]) if len(kappa) else 0.0
    fixed = {"alpha": cfg.alpha_critic, "alpha_actor": cfg.alpha_actor, "beta": cfg.beta,
             "gamma": cfg.gamma, "kappa": k, "initial_value": cfg.initial_value}
    channels = () if delta_sigma is None else (ChannelSpec("delta", LinkFunction(), delta_sigma, "dopamine"),)
    gamma_w = base.criteria[0].gamma_w if base.criteria else cfg.gamma
    long_run = base.criterion("long-run") if base.criteria else WelfareCriterion(
        "long-run", "Welfare is the long-run self's utility.", "Default for the distortion model.", gamma_w)
    taste = WelfareCriterion(
        "custom", "Welfare is the reward experienced, including the cue-enhanced enjoyment.",
        "Under the taste-shift reading the cue genuinely makes consumption more rewarding.",
        gamma_w, mdp.reward + (k * mdp.cue_flags)[:, None] * cue.c, "taste-experienced")
    m1 = ModelSpec("cue-distortion", {}, fixed, channels, cfg.policy_mode, cue.c, long_run,
                   cfg.reset_each_trial, "M1 cue-distortion")
    m2 = ModelSpec("taste-shift", {}, fixed, channels, cfg.policy_mode, cue.c, taste,
                   cfg.reset_each_trial, "M2 taste-shift")
    return BoundModel(m1, {}), BoundModel(m2, {})


def default_scale_mdp() -> Mdp:
    """Single context, two options paying 1 and 0.5."""
    P = np.ones((1, 2, 1))
    return Mdp(P, [[1.0, 0.5]], [False], [False], 0)


def build_scale_pair(c: float, base_beta: float = 2.0, mdp: Mdp | None = None,
                     value_sigma: float | None = 0.1, alpha: float = 0.1, gamma: float = 0.9,
                     initial_value: float = 1.0) -> tuple[BoundModel, BoundModel]:
    """(values, beta) against (c * values, beta / c); identical choices."""
    if not (np.isfinite(c) and c > 0) or c == 1:
        raise ValueError("scale c must be positive and different from 1")
    mdp = default_scale_mdp() if mdp is None else mdp
    channels = () if value_sigma is None else (ChannelSpec("value", LinkFunction(), value_sigma, "value"),)
    common = {"alpha": alpha, "gamma": gamma, "initial_value": initial_value}
    m1 = ModelSpec("scaled-reward", {}, {**common, "scale": 1.0, "beta": base_beta}, channels,
                   label="values x1")
    m2 = ModelSpec("scaled-reward", {}, {**common, "scale": c, "beta": base_beta / c}, channels,
                   label=f"values x{c:g}")
    return BoundModel(m1, {}), BoundModel(m2, {})


# -- platform loop ------------------------------------------------------------------

TARGET = 0


def build_platform(short_target: float = 2.0, long_target: float = -1.0,
                   short_other: float = 0.5, long_other: float = 1.0, lam: float = 0.5,
                   beta: float = 2.0, gamma_w: float = 0.9) -> ScenarioBundle:
    """One context; action 0 is the platform's target, action 1 the alternative."""
    u = DualSelfUtility([long_target, long_other], [short_target, short_other])
    R = lam * u.u_long + (1 - lam) * u.u_short
    mdp = Mdp(np.ones((1, 2, 1)), R[None, :], [False], [False], 0)
    config = AgentConfig(alpha_critic=0.1, alpha_actor=0.1, beta=beta, gamma=0.9, policy_mode="q-from-v")
    cue = CueModel(np.zeros((1, 2)), [0.0], [lam])
    criteria = [
        WelfareCriterion("long-run", "Welfare is the user's long-run utility of each activity.",
                         "Engagement gains the user would not endorse on reflection do not count.",
                         gamma_w),
        WelfareCriterion("experienced", "Welfare is the baseline reward the activity delivers.",
                         "Sensitivity case: counts momentary enjoyment, not platform-added reward.",
                         gamma_w, label="experienced"),
    ]
    return ScenarioBundle(mdp, config, cue, u, criteria, [], [], "platform", {"target_action": TARGET})


@dataclass(frozen=True)
class PlatformOptimizer:
    target_action: int = TARGET
    step_size: float = 0.25
    epochs: int = 8
    budget: float = 2.0
    trials: int = 1
    horizon: int = 200

    def __post_init__(self):
        if self.step_size < 0 or self.epochs < 0 or self.budget < 0:
            raise ValueError("step_size, epochs and budget must be >= 0")
        if self.trials < 1 or self.horizon < 1:
            raise ValueError("trials and horizon must be >= 1")


PLATFORM_HEADER = ("epoch", "engagement", "criterion", "welfare")


@dataclass
class PlatformSeries:
    epochs: list[int]
    engagement: list[float]
    welfare: dict[str, list[float]]
    added: list[float]  # reward added in each epoch (0 for the baseline)
    spent: float
    budget: float
    budget_exhausted: bool
    final_reward: np.ndarray

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PLATFORM_HEADER)
        for i, e in enumerate(self.epochs):
            for name in sorted(self.welfare):
                w.writerow((e, repr(self.engagement[i]), name, repr(self.welfare[name][i])))
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()


def run_platform_loop(bundle: ScenarioBundle, optimizer: PlatformOptimizer,
                      rng: np.random.Generator) -> PlatformSeries:
    """Naive hill climbing on engagement by reward shaping.

    Each epoch proposes adding ``step_size`` to the target action's reward
    in every context where it is available, pays for it out of the budget,
    lets the agent relearn, and keeps the change if measured engagement did
    not drop.  All learning runs share one seed (common random numbers).
    Welfare is judged with the criterion utilities of the unshaped
    environment.
    """
    mdp0 = bundle.mdp
    a = optimizer.target_action
    if not 0 <= a < mdp0.n_actions:
        raise ValueError(f"target action {a} out of range")
    seed = int(rng.integers(2**63))
    tables = {c.label: criterion_utility(c, bundle.dual_self, bundle.lambda_of_state, mdp0)
              for c in bundle.criteria}
    crit = {c.label: c for c in bundle.criteria}
    cells = mdp0.available[:, a] & ~mdp0.terminal_flags
    cost = optimizer.step_size * int(cells.sum())

    def measure(mdp):
        learner = learner_from_config(mdp, bundle.agent_config, bundle.cue_model)
        traj, state = simulate_learner(learner, mdp, optimizer.trials, optimizer.horizon,
                                       np.random.default_rng(seed))
        pi = StochasticPolicy(implemented_policy_table(learner, state))
        eng = float(np.mean(traj.action == a))
        return eng, {k: evaluate_welfare(mdp, pi, crit[k], utility=U) for k, U in tables.items()}

    eng, wel = measure(mdp0)
    series = PlatformSeries([0], [eng], {k: [v] for k, v in wel.items()}, [0.0], 0.0,
                            optimizer.budget, False, np.array(mdp0.reward))
    mdp, spent = mdp0, 0.0
    for epoch in range(1, optimizer.epochs + 1):
        if spent + cost > optimizer.budget:
            series.budget_exhausted = True
            break
        R = np.array(mdp.reward)
        R[cells, a] += optimizer.step_size
        candidate = mdp.with_(reward=R)
        eng_c, wel_c = measure(candidate)
        if eng_c >= eng:
            mdp, eng, wel = candidate, eng_c, wel_c
            spent += cost
            series.added.append(cost)
        else:
            series.added.append(0.0)
        series.epochs.append(epoch)
        series.engagement.append(eng)
        for k in wel:
            series.welfare[k].append(wel[k])
    series.spent = spent
    series.final_reward = np.array(mdp.reward)
    return series


# -- bandit used for parameter recovery -----------------------------------------

def bandit_mdp(p_win=(0.8, 0.2), reward: float = 1.0) -> Mdp:
    """Two-armed bandit: choice -> arm state -> win/lose -> choice.

    State 0 offers both arms; arm ``a`` moves to state ``1 + a``, which
    resolves to the win state 3 with probability ``p_win[a]`` and otherwise
    to the lose state 4.  Leaving the win state pays ``reward``.  Only
    action 0 exists outside the choice state.
    """
    P = np.zeros((5, 2, 5))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    for a in (0, 1):
        P[1 + a, :, 3] = p_win[a]
        P[1 + a, :, 4] = 1.0 - p_win[a]
    P[3, :, 0] = P[4, :, 0] = 1.0
    R = np.zeros((5, 2))
    R[3, :] = reward
    avail = np.ones((5, 2), bool)
    avail[1:, 1] = False
    return Mdp(P, R, [False] * 5, [False] * 5, 0, available=avail)
