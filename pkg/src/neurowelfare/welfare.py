"""Declared welfare criteria and exact welfare evaluation.

A :class:`WelfareCriterion` fixes the utility standard policies are judged
by.  It must carry a statement of the criterion and a justification; a
criterion without them cannot be constructed.  Welfare of a policy is the
expected discounted criterion utility from the initial state, computed by
an exact linear solve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from .agent import (AgentConfig, CueModel, DualSelfUtility, Learner, implemented_policy_table,
                    learner_from_config, simulate_learner)
from .environment import (Intervention, Mdp, StochasticPolicy, apply_intervention, greedy_policy,
                          solve_policy_values, value_iteration)

CriterionKind = Literal["long-run", "implemented", "experienced", "custom"]
KINDS = ("long-run", "implemented", "experienced", "custom")


@dataclass(frozen=True, eq=False)
class WelfareCriterion:
    """Declared welfare standard.

    ``long-run`` uses u^L, ``implemented`` the lambda-weighted blend of u^L
    and u^S, ``experienced`` the environment reward and ``custom`` an
    explicit (state, action) table.
    """

    kind: CriterionKind
    criterion_text: str
    justification_text: str
    gamma_w: float = 0.9
    table: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if not (isinstance(self.criterion_text, str) and self.criterion_text.strip()):
            raise ValueError("criterion_text must be a nonempty declaration")
        if not (isinstance(self.justification_text, str) and self.justification_text.strip()):
            raise ValueError("justification_text must be a nonempty declaration")
        if not 0.0 <= self.gamma_w < 1.0:
            raise ValueError(f"gamma_w must lie in [0, 1), got {self.gamma_w}")
        if self.kind == "custom":
            if self.table is None:
                raise ValueError("custom criterion needs a utility table")
            tab = np.array(self.table, float)
            if tab.ndim != 2 or not np.isfinite(tab).all():
                raise ValueError("custom utility table must be a finite 2-D array")
            tab.flags.writeable = False
            object.__setattr__(self, "table", tab)
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "criterion_text": self.criterion_text,
             "justification_text": self.justification_text, "gamma_w": self.gamma_w,
             "label": self.label}
        if self.table is not None:
            d["table"] = self.table.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WelfareCriterion":
        return cls(d["kind"], d.get("criterion_text", ""), d.get("justification_text", ""),
                   d.get("gamma_w", 0.9), d.get("table"), d.get("label", ""))


def criterion_utility(
    criterion: WelfareCriterion,
    u: DualSelfUtility | None,
    lambda_of_state,
    mdp: Mdp,
) -> np.ndarray:
    """(state, action) utility table of a criterion."""
    S, A = mdp.n_states, mdp.n_actions
    if criterion.kind == "experienced":
        return np.array(mdp.reward, float)
    if criterion.kind == "custom":
        if criterion.table.shape != (S, A):
            raise ValueError(f"custom table must have shape {(S, A)}")
        return np.array(criterion.table)
    if u is None:
        raise ValueError(f"{criterion.kind} criterion needs dual-self utilities")
    if u.u_long.shape != (A,):
        raise ValueError("dual-self utilities need one entry per action")
    if criterion.kind == "long-run":
        return np.broadcast_to(u.u_long, (S, A)).copy()
    if lambda_of_state is None:
        raise ValueError("implemented criterion needs lambda_of_state")
    lam = np.asarray(lambda_of_state, float)
    if lam.shape != (S,):
        raise ValueError("lambda_of_state needs one entry per state")
    lam = lam[:, None]
    return lam * u.u_long[None, :] + (1.0 - lam) * u.u_short[None, :]


def evaluate_welfare(
    mdp: Mdp,
    policy: StochasticPolicy,
    criterion: WelfareCriterion,
    u: DualSelfUtility | None = None,
    lambda_of_state=None,
    utility: np.ndarray | None = None,
) -> float:
    """Expected discounted criterion utility from the initial state.

    ``utility`` overrides the table built from the criterion, e.g. to judge
    a modified environment by the utilities of the original one.
    """
    msgs = policy.problems(mdp)
    if msgs:
        raise ValueError("policy does not fit environment: " + "; ".join(msgs))
    if utility is None:
        utility = criterion_utility(criterion, u, lambda_of_state, mdp)
    V = solve_policy_values(mdp, policy, criterion.gamma_w, utility)
    return float(V[mdp.initial_state])


@dataclass
class MistakeClassification:
    mistake_states: list[int]
    detail: dict[int, tuple[int, int]]  # state -> (implemented best, criterion best)

    def to_dict(self) -> dict:
        return {"mistake_states": list(self.mistake_states),
                "detail": {str(s): list(v) for s, v in sorted(self.detail.items())}}


def _masked_argmax(row, avail_row) -> int:
    row = np.where(avail_row, row, -np.inf)
    return int(np.argmax(row))


def criterion_action_values(
    mdp: Mdp,
    criterion: WelfareCriterion,
    policy: StochasticPolicy | None = None,
    u: DualSelfUtility | None = None,
    lambda_of_state=None,
    continuation: Literal["implemented", "optimal"] = "implemented",
) -> np.ndarray:
    """One-step criterion utility plus discounted criterion continuation."""
    U = criterion_utility(criterion, u, lambda_of_state, mdp)
    U = np.where(mdp.terminal_flags[:, None], 0.0, U)
    if continuation == "implemented":
        if policy is None:
            raise ValueError("implemented continuation needs the implemented policy")
        W = solve_policy_values(mdp, policy, criterion.gamma_w, U)
    elif continuation == "optimal":
        W = value_iteration(mdp, criterion.gamma_w, U)
    else:
        raise ValueError(f"unknown continuation {continuation!r}")
    return U + criterion.gamma_w * mdp.transition @ W


def classify_mistake_states(
    mdp: Mdp,
    implemented_action_values,
    criterion: WelfareCriterion,
    u: DualSelfUtility | None = None,
    lambda_of_state=None,
    policy: StochasticPolicy | None = None,
    continuation: Literal["implemented", "optimal"] = "implemented",
) -> MistakeClassification:
    """States whose implemented best action is not the criterion's best action.

    The criterion continuation follows ``policy``; by default that is the
    greedy policy on the implemented values.  Ties go to the lowest action
    index on both sides.
    """
    Qi = np.asarray(implemented_action_values, float)
    if Qi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"implemented values must have shape {(mdp.n_states, mdp.n_actions)}")
    if policy is None:
        policy = greedy_policy(Qi, mdp)
    Qc = criterion_action_values(mdp, criterion, policy, u, lambda_of_state, continuation)
    mistakes, detail = [], {}
    for s in range(mdp.n_states):
        if mdp.terminal_flags[s]:
            continue
        ai = _masked_argmax(Qi[s], mdp.available[s])
        ac = _masked_argmax(Qc[s], mdp.available[s])
        if ai != ac:
            mistakes.append(s)
            detail[s] = (ai, ac)
    return MistakeClassification(mistakes, detail)


# -- interventions ------------------------------------------------------------

COMPARISON_HEADER = ("intervention", "criterion", "before", "after", "delta")


@dataclass
class InterventionComparison:
    rows: list[tuple[str, str, float, float, float]] = field(default_factory=list)

    def delta(self, intervention: str, criterion: str) -> float:
        for iv, cr, _, _, d in self.rows:
            if iv == intervention and cr == criterion:
                return d
        raise KeyError((intervention, criterion))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARISON_HEADER)
        for iv, cr, b, a, d in self.rows:
            w.writerow((iv, cr, repr(b), repr(a), repr(d)))
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": [dict(zip(COMPARISON_HEADER, r)) for r in self.rows]}


def learned_policy(learner: Learner, mdp: Mdp, trials: int, horizon: int, seed: int) -> StochasticPolicy:
    """Implemented softmax policy after a learning run seeded with ``seed``."""
    _, state = simulate_learner(learner, mdp, trials, horizon, np.random.default_rng(seed))
    return StochasticPolicy(implemented_policy_table(learner, state))


def intervention_rows(
    build: Callable[[Mdp], Learner],
    mdp: Mdp,
    interventions: Sequence[Intervention],
    criteria: Sequence[WelfareCriterion],
    trials: int,
    horizon: int,
    seed: int,
    u: DualSelfUtility | None = None,
    lambda_of_state=None,
) -> InterventionComparison:
    """Welfare before and after each intervention under each criterion.

    Learning runs before and after reuse one seed.  Criterion utilities are
    those of the original environment, so a reward shift moves welfare only
    through the behaviour it induces.
    """
    if not interventions or not criteria:
        raise ValueError("need at least one intervention and one criterion")
    pi0 = learned_policy(build(mdp), mdp, trials, horizon, seed)
    tables = [criterion_utility(c, u, lambda_of_state, mdp) for c in criteria]
    before = [evaluate_welfare(mdp, pi0, c, utility=U) for c, U in zip(criteria, tables)]
    out = InterventionComparison()
    for iv in interventions:
        mdp1 = apply_intervention(mdp, iv)
        pi1 = learned_policy(build(mdp1), mdp1, trials, horizon, seed)
        for c, U, w0 in zip(criteria, tables, before):
            w1 = evaluate_welfare(mdp1, pi1, c, utility=U)
            out.rows.append((iv.label, c.label, w0, w1, w1 - w0))
    return out


def compare_interventions(
    mdp: Mdp,
    config: AgentConfig,
    cue: CueModel | None,
    interventions: Sequence[Intervention],
    criteria: Sequence[WelfareCriterion],
    trials: int,
    horizon: int,
    rng: np.random.Generator,
    u: DualSelfUtility | None = None,
    lambda_of_state=None,
) -> InterventionComparison:
    seed = int(rng.integers(2**63))

    def build(m: Mdp) -> Learner:
        return learner_from_config(m, config, None if cue is None else cue.restricted_to(m))

    return intervention_rows(build, mdp, interventions, criteria, trials, horizon, seed, u,
                             lambda_of_state)
