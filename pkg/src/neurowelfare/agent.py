"""Tabular actor-critic learner with softmax choice.

The critic keeps a state-value table ``v`` updated by the TD error; the
actor keeps per-(state, action) preferences ``prefs`` nudged by the same
error.  Choices are softmax draws over either the preferences
(``"actor-preferences"``) or one-step lookahead values derived from ``v``
and the known dynamics (``"q-from-v"``).  An optional :class:`CueModel`
adds ``kappa[s] * c[s, a]`` to the choice values in cue-flagged states.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np

from . import _core
from .environment import Mdp

PolicyMode = Literal["actor-preferences", "q-from-v"]

CSV_HEADER = ("trial", "t", "state", "action", "reward", "delta", "v_state", "chosen_prob")


@dataclass(frozen=True)
class AgentConfig:
    """Learning and choice parameters.

    ``lr_schedule="decay"`` scales both learning rates by
    ``1 / (1 + visits[s] / lr_tau)``; the default ``lr_tau=1`` is the
    sample-average schedule ``1 / (1 + visits[s])``.  ``cue_delta`` decides whether the cue bonus
    of the chosen action enters the learning TD error (``"distorted"``) or
    not (``"baseline"``).  With ``reset_each_trial`` every trial starts
    from fresh tables, as in independent sessions.
    """

    alpha_critic: float = 0.1
    alpha_actor: float = 0.1
    beta: float = 1.0
    gamma: float = 0.9
    policy_mode: PolicyMode = "actor-preferences"
    initial_value: float = 0.0
    lr_schedule: Literal["constant", "decay"] = "constant"
    lr_tau: float = 1.0
    cue_delta: Literal["distorted", "baseline"] = "distorted"
    reset_each_trial: bool = False

    def __post_init__(self):
        for name in ("alpha_critic", "alpha_actor"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {val}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.policy_mode not in ("actor-preferences", "q-from-v"):
            raise ValueError(f"unknown policy_mode {self.policy_mode!r}")
        if self.lr_schedule not in ("constant", "decay"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not self.lr_tau > 0:
            raise ValueError("lr_tau must be positive")
        if self.cue_delta not in ("distorted", "baseline"):
            raise ValueError(f"unknown cue_delta {self.cue_delta!r}")
        if not np.isfinite(self.initial_value):
            raise ValueError("initial_value must be finite")

    def with_(self, **changes) -> "AgentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class AgentState:
    v: np.ndarray
    prefs: np.ndarray
    visit_counts: np.ndarray

    @classmethod
    def initial(cls, mdp: Mdp, initial_value: float = 0.0) -> "AgentState":
        v = np.where(mdp.terminal_flags, 0.0, initial_value)
        prefs = np.full((mdp.n_states, mdp.n_actions), float(initial_value))
        return cls(v, prefs, np.zeros(mdp.n_states, np.int64))

    def copy(self) -> "AgentState":
        return AgentState(self.v.copy(), self.prefs.copy(), self.visit_counts.copy())


@dataclass(frozen=True, eq=False)
class CueModel:
    """Cue reactivity ``c[s, a] >= 0`` scaled by per-state strength ``kappa``.

    ``acts_on="value"`` distorts choice values (the bonus is not part of the
    experienced reward); ``acts_on="reward"`` treats the bonus as a genuine
    change in how rewarding the action is.  Either way the bonus is only
    active in states whose cue flag is set in the environment being run.
    """

    c: np.ndarray
    kappa: np.ndarray
    lambda_of_state: np.ndarray | None = None
    acts_on: Literal["value", "reward"] = "value"

    def __post_init__(self):
        c = np.asarray(self.c, float)
        kappa = np.asarray(self.kappa, float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "kappa", kappa)
        if self.lambda_of_state is None:
            object.__setattr__(self, "lambda_of_state", np.ones(len(kappa)))
        else:
            object.__setattr__(self, "lambda_of_state", np.asarray(self.lambda_of_state, float))
        if (c < 0).any() or (kappa < 0).any():
            raise ValueError("cue reactivity and kappa must be nonnegative")
        lam = self.lambda_of_state
        if ((lam < 0) | (lam > 1)).any():
            raise ValueError("lambda_of_state must lie in [0, 1]")
        if self.acts_on not in ("value", "reward"):
            raise ValueError(f"unknown acts_on {self.acts_on!r}")

    def problems(self, mdp: Mdp) -> list[str]:
        msgs = []
        if self.c.shape != (mdp.n_states, mdp.n_actions):
            msgs.append(f"c must have shape {(mdp.n_states, mdp.n_actions)}")
        if self.kappa.shape != (mdp.n_states,) or self.lambda_of_state.shape != (mdp.n_states,):
            msgs.append("kappa and lambda_of_state need one entry per state")
        elif (self.kappa[~mdp.cue_flags] != 0).any():
            msgs.append("kappa must be zero on non-cue states")
        return msgs

    def restricted_to(self, mdp: Mdp) -> "CueModel":
        """Copy with kappa zeroed wherever ``mdp`` has no cue (e.g. after cue removal)."""
        return replace(self, kappa=np.where(mdp.cue_flags, self.kappa, 0.0))

    def bonus(self, mdp: Mdp) -> np.ndarray:
        """Active bonus table ``kappa[s] * c[s, a]`` gated by ``mdp.cue_flags``."""
        return (self.kappa * mdp.cue_flags)[:, None] * self.c

    def to_dict(self) -> dict:
        return {
            "c": self.c.tolist(),
            "kappa": self.kappa.tolist(),
            "lambda_of_state": self.lambda_of_state.tolist(),
            "acts_on": self.acts_on,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CueModel":
        return cls(d["c"], d["kappa"], d.get("lambda_of_state"), d.get("acts_on", "value"))


@dataclass(frozen=True, eq=False)
class DualSelfUtility:
    u_long: np.ndarray
    u_short: np.ndarray

    def __post_init__(self):
        u_l = np.asarray(self.u_long, float)
        u_s = np.asarray(self.u_short, float)
        if u_l.shape != u_s.shape or u_l.ndim != 1:
            raise ValueError("u_long and u_short must be 1-D tables of equal length")
        if not (np.isfinite(u_l).all() and np.isfinite(u_s).all()):
            raise ValueError("dual-self utilities must be finite")
        object.__setattr__(self, "u_long", u_l)
        object.__setattr__(self, "u_short", u_s)

    def to_dict(self) -> dict:
        return {"u_long": self.u_long.tolist(), "u_short": self.u_short.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DualSelfUtility":
        return cls(d["u_long"], d["u_short"])


@dataclass(eq=False)
class Trajectory:
    """Column-oriented log of a learning run.

    ``delta`` is the TD error that drove learning; ``delta_experienced`` is
    the error computed from the experienced reward alone (they differ only
    when a value-acting cue bonus feeds into learning).  ``next_state`` is
    ``-1`` where the successor is unknown.
    """

    trial: np.ndarray
    t: np.ndarray
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    delta: np.ndarray
    v_state: np.ndarray
    chosen_prob: np.ndarray
    next_state: np.ndarray
    delta_experienced: np.ndarray | None = None

    def __post_init__(self):
        if self.delta_experienced is None:
            self.delta_experienced = np.asarray(self.delta, float).copy()

    def __len__(self) -> int:
        return len(self.state)

    @property
    def records(self) -> list[tuple]:
        return list(zip(self.trial.tolist(), self.t.tolist(), self.state.tolist(),
                        self.action.tolist(), self.reward.tolist(), self.delta.tolist(),
                        self.v_state.tolist(), self.chosen_prob.tolist()))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in self.records:
            w.writerow([rec[0], rec[1], rec[2], rec[3], *(repr(float(x)) for x in rec[4:])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Trajectory":
        """Parse the CSV export; successors are inferred from the next row of the same trial."""
        text = source if "\n" in str(source) else Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"unexpected header {rows[0]}")
        body = rows[1:]
        cols = list(zip(*body)) if body else [()] * len(CSV_HEADER)
        trial = np.array(cols[0], np.int64)
        state = np.array(cols[2], np.int64)
        nxt = np.full(len(state), -1, np.int64)
        same = trial[1:] == trial[:-1]
        nxt[:-1][same] = state[1:][same]
        return cls(trial, np.array(cols[1], np.int64), state, np.array(cols[3], np.int64),
                   *(np.array(c, float) for c in cols[4:]), next_state=nxt)


# -- pure operations ----------------------------------------------------

def td_error(r: float, gamma: float, v_next: float, v_cur: float) -> float:
    return r + gamma * v_next - v_cur


def critic_update(state: AgentState, s: int, delta: float, alpha: float) -> AgentState:
    out = state.copy()
    out.v[s] += alpha * delta
    out.visit_counts[s] += 1
    return out


def actor_update(state: AgentState, s: int, a: int, delta: float, alpha_actor: float) -> AgentState:
    out = state.copy()
    out.prefs[s, a] += alpha_actor * delta
    return out


def q_from_v(mdp: Mdp, v: np.ndarray, gamma: float) -> np.ndarray:
    """One-step lookahead ``Q(s, a) = r(s, a) + gamma * sum_s' P(s'|s, a) v[s']``."""
    v = np.asarray(v, float)
    if v.shape != (mdp.n_states,):
        raise ValueError(f"value table must have shape ({mdp.n_states},)")
    return mdp.reward + gamma * mdp.transition @ v


def policy_probs(values, beta: float, available=None) -> np.ndarray:
    """Softmax over the available actions, with max-subtraction for overflow safety."""
    values = np.asarray(values, float)
    avail = np.ones(values.shape, bool) if available is None else np.asarray(available, bool)
    if not avail.any():
        raise ValueError("no available action")
    z = np.where(avail, beta * values, -np.inf)
    z = z - z.max()
    e = np.where(avail, np.exp(z), 0.0)
    return e / e.sum()


def effective_values(base: np.ndarray, cue: CueModel, s: int) -> np.ndarray:
    base = np.asarray(base, float)
    return base[s] + cue.kappa[s] * cue.c[s]


def implemented_utility(a: int, lambda_s: float, u: DualSelfUtility) -> float:
    if not 0.0 <= lambda_s <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lambda_s}")
    return lambda_s * u.u_long[a] + (1.0 - lambda_s) * u.u_short[a]


# -- compiled learner plumbing -----------------------------------------

class Learner(NamedTuple):
    """Tables and parameters fed to the compiled loops."""

    P: np.ndarray
    R: np.ndarray
    avail: np.ndarray
    term: np.ndarray
    rshift: np.ndarray
    vshift: np.ndarray
    dshift: np.ndarray
    par: np.ndarray

    def fresh_state(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        S, A = self.R.shape
        V, prefs, visits = np.empty(S), np.empty((S, A)), np.empty(S, np.int64)
        _core.reset_state(self.term, self.par, V, prefs, visits)
        return V, prefs, visits


def make_learner(
    mdp: Mdp,
    *,
    alpha_critic: float,
    alpha_actor: float,
    beta: float,
    gamma: float,
    policy_mode: str,
    initial_value: float = 0.0,
    decay: bool = False,
    lr_tau: float = 1.0,
    reset: bool = False,
    value_bonus: np.ndarray | None = None,
    reward_bonus: np.ndarray | None = None,
    bonus_in_delta: bool = True,
    reward_scale: float = 1.0,
) -> Learner:
    zeros = np.zeros((mdp.n_states, mdp.n_actions))
    vshift = zeros if value_bonus is None else np.asarray(value_bonus, float)
    rshift = zeros if reward_bonus is None else np.asarray(reward_bonus, float)
    dshift = vshift if bonus_in_delta else zeros
    par = np.zeros(_core.N_PAR)
    par[_core.I_SCALE] = reward_scale
    par[_core.I_ALPHA_C] = alpha_critic
    par[_core.I_ALPHA_A] = alpha_actor
    par[_core.I_BETA] = beta
    par[_core.I_GAMMA] = gamma
    par[_core.I_V0] = initial_value
    par[_core.I_MODE] = _core.ACTOR if policy_mode == "actor-preferences" else _core.Q_FROM_V
    par[_core.I_DECAY] = float(decay)
    par[_core.I_RESET] = float(reset)
    par[_core.I_TAU] = lr_tau
    return Learner(
        np.ascontiguousarray(mdp.transition), np.ascontiguousarray(mdp.reward),
        np.ascontiguousarray(mdp.available), np.ascontiguousarray(mdp.terminal_flags),
        np.ascontiguousarray(rshift), np.ascontiguousarray(vshift),
        np.ascontiguousarray(dshift), par,
    )


def learner_from_config(mdp: Mdp, config: AgentConfig, cue: CueModel | None = None) -> Learner:
    value_bonus = reward_bonus = None
    if cue is not None:
        msgs = cue.problems(mdp)
        if msgs:
            raise ValueError("cue model does not fit environment: " + "; ".join(msgs))
        if cue.acts_on == "value":
            value_bonus = cue.bonus(mdp)
        else:
            reward_bonus = cue.bonus(mdp)
    return make_learner(
        mdp,
        alpha_critic=config.alpha_critic,
        alpha_actor=config.alpha_actor,
        beta=config.beta,
        gamma=config.gamma,
        policy_mode=config.policy_mode,
        initial_value=config.initial_value,
        decay=config.lr_schedule == "decay",
        lr_tau=config.lr_tau,
        reset=config.reset_each_trial,
        value_bonus=value_bonus,
        reward_bonus=reward_bonus,
        bonus_in_delta=config.cue_delta == "distorted",
    )


def simulate_learner(
    learner: Learner, mdp: Mdp, trials: int, horizon: int, rng: np.random.Generator,
) -> tuple[Trajectory, AgentState]:
    if trials < 1 or horizon < 1:
        raise ValueError("trials and horizon must both be >= 1")
    n = trials * horizon
    u_act = rng.random(n)
    u_next = rng.random(n)
    V, prefs, visits = learner.fresh_state()
    ints, flts = _core.simulate(*learner, mdp.initial_state, trials, horizon,
                                u_act, u_next, V, prefs, visits)
    traj = Trajectory(
        trial=ints[:, 0].copy(), t=ints[:, 1].copy(), state=ints[:, 2].copy(),
        action=ints[:, 3].copy(), reward=flts[:, 0].copy(), delta=flts[:, 1].copy(),
        v_state=flts[:, 3].copy(), chosen_prob=flts[:, 4].copy(),
        next_state=ints[:, 4].copy(), delta_experienced=flts[:, 2].copy(),
    )
    return traj, AgentState(V, prefs, visits)


def final_choice_values(learner: Learner, state: AgentState) -> np.ndarray:
    """Choice values in every state for a learned agent (cue bonus included)."""
    S, A = learner.R.shape
    out = np.empty((S, A))
    row = np.empty(A)
    for s in range(S):
        _core.choice_values(learner.P, learner.R, learner.rshift, learner.vshift,
                            learner.par, state.v, state.prefs, s, row)
        out[s] = row
    return out


def implemented_policy_table(learner: Learner, state: AgentState) -> np.ndarray:
    vals = final_choice_values(learner, state)
    beta = learner.par[_core.I_BETA]
    return np.vstack([policy_probs(vals[s], beta, learner.avail[s]) for s in range(len(vals))])


def run_learning(
    mdp: Mdp,
    config: AgentConfig,
    cue: CueModel | None = None,
    trials: int = 1,
    horizon: int = 1,
    rng: np.random.Generator | None = None,
) -> tuple[Trajectory, AgentState]:
    """Run the actor-critic loop for ``trials`` episodes of up to ``horizon`` steps.

    Each step: compute choice values (preferences, or one-step lookahead in
    ``q-from-v`` mode) plus any active cue bonus, draw an action from the
    softmax, step the environment, form the TD error, update the critic
    and, in ``actor-preferences`` mode, the actor.  Episodes end early on
    reaching a terminal state.  Identical seeds give identical logs.
    """
    if rng is None:
        raise ValueError("run_learning needs an explicit random generator")
    learner = learner_from_config(mdp, config, cue)
    return simulate_learner(learner, mdp, trials, horizon, rng)
