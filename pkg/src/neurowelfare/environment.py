"""Finite Markov decision processes, exact policy evaluation and interventions.

An :class:`Mdp` is a tabular environment with a transition kernel
``transition[s, a, s']``, a deterministic reward table ``reward[s, a]``,
per-state cue and terminal flags, and a per-(state, action) availability
mask.  Action restrictions edit the mask instead of deleting columns so
that indices stay stable across interventions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import _core

PROB_TOL = 1e-9
RESIDUAL_TOL = 1e-10


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mdp:
    """Tabular environment.

    Construction only coerces shapes; use :func:`validate_mdp` (or
    :meth:`from_dict`, which validates) to check the probabilistic
    invariants.
    """

    transition: np.ndarray
    reward: np.ndarray
    cue_flags: np.ndarray
    terminal_flags: np.ndarray
    initial_state: int = 0
    available: np.ndarray | None = None

    def __post_init__(self):
        P = _frozen(self.transition, float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        R = _frozen(self.reward, float)
        if R.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {R.shape}")
        cue = _frozen(self.cue_flags, bool)
        term = _frozen(self.terminal_flags, bool)
        if cue.shape != (S,) or term.shape != (S,):
            raise ValueError("cue_flags and terminal_flags must have one entry per state")
        avail = np.ones((S, A), bool) if self.available is None else self.available
        avail = _frozen(avail, bool)
        if avail.shape != (S, A):
            raise ValueError(f"available must have shape {(S, A)}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "cue_flags", cue)
        object.__setattr__(self, "terminal_flags", term)
        object.__setattr__(self, "available", avail)
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.initial_state == other.initial_state
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward, other.reward)
            and np.array_equal(self.cue_flags, other.cue_flags)
            and np.array_equal(self.terminal_flags, other.terminal_flags)
            and np.array_equal(self.available, other.available)
        )

    __hash__ = None

    def with_(self, **changes) -> "Mdp":
        return replace(self, **changes)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "cue_flags": self.cue_flags.tolist(),
            "initial_state": self.initial_state,
            "terminal_flags": self.terminal_flags.tolist(),
        }
        if not self.available.all():
            d["available"] = self.available.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Mdp":
        mdp = cls(
            transition=d["transition"],
            reward=d["reward"],
            cue_flags=d["cue_flags"],
            terminal_flags=d["terminal_flags"],
            initial_state=d["initial_state"],
            available=d.get("available"),
        )
        if (mdp.n_states, mdp.n_actions) != (d["n_states"], d["n_actions"]):
            raise ValueError("n_states/n_actions disagree with table shapes")
        result = validate_mdp(mdp)
        if not result.ok:
            raise ValueError("invalid Mdp: " + "; ".join(result.violations))
        return mdp

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Mdp":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Mdp":
        return cls.from_json(Path(path).read_text())


@dataclass
class ValidationResult:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_mdp(mdp: Mdp) -> ValidationResult:
    """Check the kernel, terminal and index invariants of ``mdp``.

    Diagnostics are returned as data; nothing is raised.
    """
    out = ValidationResult()
    P, R = mdp.transition, mdp.reward
    S, A = mdp.n_states, mdp.n_actions
    for s in range(S):
        for a in range(A):
            row = P[s, a]
            neg = np.flatnonzero(row < 0)
            for sp in neg:
                out.violations.append(
                    f"negative probability {row[sp]:g} at (s={s},a={a},s'={sp})"
                )
            total = row.sum()
            if not np.isfinite(total) or abs(total - 1.0) > PROB_TOL:
                out.violations.append(f"row sum {total:g} at (s={s},a={a})")
    if not np.all(np.isfinite(R)):
        bad = np.argwhere(~np.isfinite(R))
        for s, a in bad:
            out.violations.append(f"non-finite reward at (s={s},a={a})")
    for s in np.flatnonzero(mdp.terminal_flags):
        for a in range(A):
            if P[s, a, s] != 1.0:
                out.violations.append(f"terminal state {s} does not self-loop under a={a}")
            if R[s, a] != 0.0:
                out.violations.append(f"terminal state {s} has nonzero reward under a={a}")
    if not 0 <= mdp.initial_state < S:
        out.violations.append(f"initial_state {mdp.initial_state} out of range [0, {S})")
    for s in np.flatnonzero(~mdp.available.any(axis=1)):
        out.violations.append(f"no available action in state {s}")
    return out


def step(mdp: Mdp, s: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
    """Sample a successor of ``(s, a)`` and return it with ``r(s, a)``.

    Sampling is by inverse CDF on a single uniform draw, which is the same
    scheme the compiled learner uses.
    """
    if not 0 <= s < mdp.n_states or not 0 <= a < mdp.n_actions:
        raise IndexError(f"invalid state/action ({s}, {a})")
    if mdp.terminal_flags[s]:
        raise ValueError(f"cannot step from terminal state {s}")
    if not mdp.available[s, a]:
        raise ValueError(f"action {a} is unavailable in state {s}")
    nxt = int(_core.sample_index(np.ascontiguousarray(mdp.transition[s, a]), rng.random()))
    return nxt, float(mdp.reward[s, a])


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs, float))

    def problems(self, mdp: Mdp | None = None) -> list[str]:
        msgs = []
        p = self.probs
        if p.ndim != 2:
            return [f"policy table must be 2-D, got shape {p.shape}"]
        if (p < 0).any():
            msgs.append("negative policy probability")
        sums = p.sum(axis=1)
        for s in np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL):
            msgs.append(f"policy row {s} sums to {sums[s]:g}")
        if mdp is not None:
            if p.shape != (mdp.n_states, mdp.n_actions):
                msgs.append("policy shape does not match mdp")
            elif (p[~mdp.available] > 0).any():
                msgs.append("policy puts mass on unavailable actions")
        return msgs


def uniform_policy(mdp: Mdp) -> StochasticPolicy:
    avail = mdp.available.astype(float)
    return StochasticPolicy(avail / avail.sum(axis=1, keepdims=True))


def greedy_policy(values: np.ndarray, mdp: Mdp) -> StochasticPolicy:
    """Deterministic argmax over available actions; ties go to the lowest index."""
    q = np.where(mdp.available, values, -np.inf)
    probs = np.zeros_like(q, dtype=float)
    probs[np.arange(len(q)), np.argmax(q, axis=1)] = 1.0
    return StochasticPolicy(probs)


def solve_policy_values(
    mdp: Mdp,
    policy: StochasticPolicy,
    gamma: float,
    utility: np.ndarray | None = None,
) -> np.ndarray:
    """Exact discounted value of ``policy`` under a (state, action) utility.

    Solves ``(I - gamma P_pi) V = u_pi`` with a dense direct solve.  Utility
    defaults to the environment reward; terminal states are absorbing and
    contribute nothing, whatever the utility table says there.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    u = mdp.reward if utility is None else np.asarray(utility, float)
    if u.shape != mdp.reward.shape:
        raise ValueError(f"utility must have shape {mdp.reward.shape}")
    pi = np.asarray(policy.probs)
    live = ~mdp.terminal_flags
    u_pi = np.where(live, np.einsum("sa,sa->s", pi, u), 0.0)
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    A = np.eye(mdp.n_states) - gamma * P_pi
    try:
        V = np.linalg.solve(A, u_pi)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"policy evaluation system is singular: {exc}") from exc
    resid = np.max(np.abs(V - (u_pi + gamma * P_pi @ V))) if len(V) else 0.0
    if not resid < RESIDUAL_TOL * max(1.0, np.max(np.abs(V))):
        raise np.linalg.LinAlgError(f"policy evaluation residual {resid:g} too large")
    return V


def bellman_residual(mdp, policy, gamma, V, utility=None) -> float:
    u = mdp.reward if utility is None else np.asarray(utility, float)
    pi = np.asarray(policy.probs)
    u_pi = np.where(~mdp.terminal_flags, np.einsum("sa,sa->s", pi, u), 0.0)
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    return float(np.max(np.abs(V - (u_pi + gamma * P_pi @ V))))


def value_iteration(mdp: Mdp, gamma: float, utility=None, tol=1e-13, max_iters=100_000):
    """Optimal state values by value iteration; used as an independent oracle."""
    u = mdp.reward if utility is None else np.asarray(utility, float)
    u = np.where(mdp.terminal_flags[:, None], 0.0, u)
    V = np.zeros(mdp.n_states)
    for _ in range(max_iters):
        Q = u + gamma * mdp.transition @ V
        Q = np.where(mdp.available, Q, -np.inf)
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            return V_new
        V = V_new
    return V


# -- interventions ------------------------------------------------------

InterventionKind = Literal["reward-shift", "action-restriction", "cue-removal"]


@dataclass(frozen=True)
class Intervention:
    """A policy lever applied to the environment.

    ``reward-shift`` adds ``amount`` to every (state, action) cell in
    ``states`` x ``actions``; ``action-restriction`` makes ``actions``
    unavailable in ``states``; ``cue-removal`` clears the cue flag on
    ``states``.
    """

    kind: InterventionKind
    states: tuple[int, ...]
    actions: tuple[int, ...] = ()
    amount: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("reward-shift", "action-restriction", "cue-removal"):
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        object.__setattr__(self, "amount", float(self.amount))
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    def problems(self, mdp: Mdp) -> list[str]:
        msgs = []
        for s in self.states:
            if not 0 <= s < mdp.n_states:
                msgs.append(f"state {s} out of range")
        for a in self.actions:
            if not 0 <= a < mdp.n_actions:
                msgs.append(f"action {a} out of range")
        if self.kind == "reward-shift" and not np.isfinite(self.amount):
            msgs.append("reward shift must be finite")
        if self.kind == "action-restriction" and not msgs:
            avail = mdp.available.copy()
            avail[np.ix_(self.states, self.actions)] = False
            for s in self.states:
                if not avail[s].any():
                    msgs.append(f"restriction removes every action in state {s}")
        return msgs

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "states": list(self.states),
            "actions": list(self.actions),
            "amount": self.amount,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intervention":
        return cls(
            kind=d["kind"],
            states=tuple(d.get("states", ())),
            actions=tuple(d.get("actions", ())),
            amount=d.get("amount", 0.0),
            label=d.get("label", ""),
        )


def apply_intervention(mdp: Mdp, iv: Intervention) -> Mdp:
    msgs = iv.problems(mdp)
    if msgs:
        raise ValueError(f"intervention {iv.label!r} invalid: " + "; ".join(msgs))
    cells = np.ix_(iv.states, iv.actions)
    if iv.kind == "reward-shift":
        R = mdp.reward.copy()
        R[cells] += iv.amount
        return mdp.with_(reward=R)
    if iv.kind == "action-restriction":
        avail = mdp.available.copy()
        avail[cells] = False
        return mdp.with_(available=avail)
    cue = mdp.cue_flags.copy()
    cue[list(iv.states)] = False
    return mdp.with_(cue_flags=cue)


def permute_states(mdp: Mdp, perm: Sequence[int]) -> Mdp:
    """Relabel states so that old state ``s`` becomes ``perm[s]``."""
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    P = mdp.transition[inv][:, :, inv]
    return Mdp(
        transition=P,
        reward=mdp.reward[inv],
        cue_flags=mdp.cue_flags[inv],
        terminal_flags=mdp.terminal_flags[inv],
        initial_state=int(perm[mdp.initial_state]),
        available=mdp.available[inv],
    )


def chain_mdp(n_states: int = 5, terminal_ends: bool = False) -> Mdp:
    """Random-walk chain with actions 0 = left and 1 = right.

    Every action taken in the last interior state pays 1.  With
    ``terminal_ends`` the walk is bracketed by two absorbing states;
    otherwise the ends reflect and the task is continuing.  Starts in the
    middle.
    """
    if terminal_ends:
        S = n_states + 2
        lo, hi = 1, S - 2
    else:
        S = n_states
        lo, hi = 0, S - 1
    P = np.zeros((S, 2, S))
    R = np.zeros((S, 2))
    term = np.zeros(S, bool)
    for s in range(S):
        if terminal_ends and s in (0, S - 1):
            term[s] = True
            P[s, :, s] = 1.0
            continue
        P[s, 0, s - 1 if (terminal_ends or s > lo) else s] = 1.0
        P[s, 1, s + 1 if (terminal_ends or s < hi) else s] = 1.0
    R[hi, :] = 1.0
    return Mdp(P, R, np.zeros(S, bool), term, initial_state=(lo + hi) // 2)
