"""Synthetic neural channels and Pavlovian conditioning.

A channel is a monotone link of a latent learning variable plus additive
Gaussian noise.  :func:`validate_encoding` summarises how well a channel
tracks its latent.  :func:`simulate_conditioning` runs TD learning on a
cue -> delay -> reward chain and summarises the prediction error at the
cue, at delivered rewards and at omitted rewards, early and late in
training.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import stats

from .agent import AgentConfig, Trajectory, td_error
from .environment import Mdp, step


@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing map from a latent variable to a channel mean.

    ``identity``: x.  ``affine``: baseline + slope * x.  ``logistic``:
    baseline + amplitude / (1 + exp(-(x - midpoint) / scale)).
    """

    kind: Literal["identity", "affine", "logistic"] = "identity"
    slope: float = 1.0
    baseline: float = 0.0
    scale: float = 1.0
    midpoint: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "affine", "logistic"):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == "affine" and not self.slope > 0:
            raise ValueError("affine link needs slope > 0")
        if self.kind == "logistic" and not (self.scale > 0 and self.amplitude > 0):
            raise ValueError("logistic link needs scale > 0 and amplitude > 0")

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "affine":
            return self.baseline + self.slope * x
        return self.baseline + self.amplitude * (0.5 + 0.5 * np.tanh(0.5 * (x - self.midpoint) / self.scale))

    def with_gain(self, gain: float) -> "LinkFunction":
        """Same link with its multiplicative gain set to ``gain``."""
        if self.kind == "logistic":
            return replace(self, amplitude=gain)
        return LinkFunction("affine", slope=gain, baseline=self.baseline)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "LinkFunction":
        return cls(**d)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")


@dataclass(eq=False)
class NeuralTrace:
    channel_id: str
    trial: np.ndarray
    t: np.ndarray
    value: np.ndarray

    def __len__(self) -> int:
        return len(self.value)

    @property
    def samples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.trial.tolist(), self.t.tolist(), self.value.tolist()))

    def aligned_to(self, traj: Trajectory) -> bool:
        return (len(self) == len(traj) and np.array_equal(self.trial, traj.trial)
                and np.array_equal(self.t, traj.t))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("channel", "trial", "t", "value"))
        for k, t, v in self.samples:
            w.writerow((self.channel_id, k, t, repr(float(v))))
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()


def encode(
    latent,
    link: LinkFunction,
    noise: NoiseModel,
    rng: np.random.Generator,
    channel_id: str = "n",
    align: Trajectory | None = None,
) -> NeuralTrace:
    """Noisy channel ``link(latent) + N(0, sigma^2)``, sample by sample.

    With ``align`` the samples carry the trajectory's (trial, t) indices;
    otherwise they are indexed as a single trial.
    """
    latent = np.asarray(latent, float)
    if not np.isfinite(latent).all():
        raise ValueError("latent sequence must be finite")
    mean = link(latent)
    value = mean + noise.sigma * rng.standard_normal(len(latent)) if noise.sigma > 0 else mean
    if align is not None:
        if len(align) != len(latent):
            raise ValueError("alignment trajectory length differs from latent length")
        trial, t = align.trial.copy(), align.t.copy()
    else:
        trial, t = np.zeros(len(latent), np.int64), np.arange(len(latent))
    return NeuralTrace(channel_id, trial, t, np.asarray(value, float))


@dataclass(frozen=True)
class EncodingValidationStats:
    pearson_r: float
    spearman_rho: float
    regression_slope: float
    regression_intercept: float
    n_samples: int
    undefined_reason: str = ""

    @property
    def defined(self) -> bool:
        return not self.undefined_reason

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def validate_encoding(trace: NeuralTrace, latent) -> EncodingValidationStats:
    """Correlation and least-squares fit of a channel against its latent.

    A constant latent or channel leaves the statistics undefined; they come
    back as NaN with the reason attached rather than as made-up numbers.
    """
    x = np.asarray(latent, float)
    y = np.asarray(trace.value, float)
    if len(x) != len(y):
        raise ValueError("trace and latent lengths differ")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    nan = float("nan")
    if np.ptp(x) == 0:
        return EncodingValidationStats(nan, nan, nan, nan, n, "latent has zero variance")
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    if np.ptp(y) == 0:
        return EncodingValidationStats(nan, nan, slope, intercept, n, "trace has zero variance")
    r = float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))
    rho = float(stats.spearmanr(x, y).statistic)
    return EncodingValidationStats(r, rho, slope, intercept, n)


# -- conditioning -------------------------------------------------------

ITI, CUE = 0, 1


def conditioning_chain(delay: int, magnitude: float = 1.0, omission_prob: float = 0.0) -> Mdp:
    """Chain ITI -> cue -> delay states -> reward | omission -> ITI.

    One dummy action.  The reward state pays ``magnitude``; the last
    pre-outcome state moves to the omission state with ``omission_prob``.
    States: 0 ITI, 1 cue, 2..delay the delay states, then reward, then
    omission.
    """
    if delay < 1:
        raise ValueError("cue-to-reward delay must be >= 1")
    if not 0.0 <= omission_prob <= 1.0:
        raise ValueError("omission_prob must lie in [0, 1]")
    S = delay + 3
    rew, omit = delay + 1, delay + 2
    P = np.zeros((S, 1, S))
    P[ITI, 0, CUE] = 1.0
    for s in range(CUE, delay):
        P[s, 0, s + 1] = 1.0
    P[delay, 0, rew] = 1.0 - omission_prob
    P[delay, 0, omit] = omission_prob
    P[rew, 0, ITI] = P[omit, 0, ITI] = 1.0
    R = np.zeros((S, 1))
    R[rew, 0] = magnitude
    cue = np.zeros(S, bool)
    cue[CUE] = True
    return Mdp(P, R, cue, np.zeros(S, bool), initial_state=ITI)


@dataclass(frozen=True)
class ConditioningProtocol:
    cue_time: int = 1
    reward_time: int = 3
    magnitude: float = 1.0
    omission_prob: float = 0.0
    trials: int = 500
    horizon: int | None = None

    def __post_init__(self):
        horizon = self.reward_time + 1 if self.horizon is None else self.horizon
        if not 1 <= self.cue_time < self.reward_time < horizon:
            raise ValueError("need 1 <= cue_time < reward_time < horizon")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0.0 <= self.omission_prob <= 1.0:
            raise ValueError("omission_prob must lie in [0, 1]")

    @property
    def delay(self) -> int:
        return self.reward_time - self.cue_time


@dataclass
class ConditioningSummary:
    """Peri-event TD errors averaged over the first and last 10% of trials.

    ``cue`` is the error on entering the cue.  ``reward`` is the error over
    the outcome epoch of rewarded trials (entering the reward state plus
    consuming it).  ``omission`` is the same epoch computed as if the
    reward were omitted, from the values held on that trial; on trials
    where the reward really was omitted it is the realised error.
    """

    values: dict[str, float]
    counts: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def to_text(self) -> str:
        lines = [f"{k}={self.values[k]!r}" for k in sorted(self.values)]
        lines += [f"n.{k}={self.counts[k]}" for k in sorted(self.counts)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ConditioningSummary":
        values, counts = {}, {}
        for line in text.strip().splitlines():
            key, val = line.split("=", 1)
            if key.startswith("n."):
                counts[key[2:]] = int(val)
            else:
                values[key] = float(val)
        return cls(values, counts)


def simulate_conditioning(
    protocol: ConditioningProtocol, config: AgentConfig, rng: np.random.Generator,
) -> tuple[Trajectory, ConditioningSummary]:
    """Tabular TD(0) on the conditioning chain.

    Each trial starts in the ITI one step before cue onset and ends on
    returning to the ITI.  The ITI value stays at zero: onset times are
    unpredictable, so the ITI carries no prediction.  Learning rates follow
    ``config.lr_schedule``.
    """
    mdp = conditioning_chain(protocol.delay, protocol.magnitude, protocol.omission_prob)
    gamma = config.gamma
    decay = config.lr_schedule == "decay"
    rew, omit = protocol.delay + 1, protocol.delay + 2
    pre = protocol.delay  # last state before the outcome
    V = np.zeros(mdp.n_states)
    visits = np.zeros(mdp.n_states, np.int64)
    cols = {k: [] for k in ("trial", "t", "state", "reward", "delta", "v_state", "next_state")}
    ev_cue, ev_rew, ev_omit, omitted = [], [], [], []

    for k in range(protocol.trials):
        s, t = ITI, protocol.cue_time - 1
        trial_deltas = {}
        omit_probe = None
        while True:
            s2, r = step(mdp, s, 0, rng)
            if s == pre:
                omit_probe = (td_error(0.0, gamma, V[omit], V[s]) + td_error(0.0, gamma, 0.0, V[omit]))
            delta = td_error(r, gamma, V[s2], V[s])
            for key, val in (("trial", k), ("t", t), ("state", s), ("reward", r), ("delta", delta),
                             ("v_state", V[s]), ("next_state", s2)):
                cols[key].append(val)
            trial_deltas[s] = delta
            if s != ITI:
                alpha = config.alpha_critic
                if decay:
                    alpha /= 1 + visits[s] / config.lr_tau
                V[s] += alpha * delta
                visits[s] += 1
            if s2 == ITI:
                break
            s, t = s2, t + 1
        ev_cue.append(trial_deltas[ITI])
        ev_omit.append(omit_probe)
        if rew in trial_deltas:
            ev_rew.append(trial_deltas[pre] + trial_deltas[rew])
            omitted.append(False)
        else:
            ev_rew.append(np.nan)
            omitted.append(True)

    n = protocol.trials
    w = max(1, int(round(0.1 * n)))
    ev_cue, ev_rew, ev_omit = map(np.asarray, (ev_cue, ev_rew, ev_omit))
    omitted = np.asarray(omitted)
    values, counts = {}, {}
    for phase, sl in (("early", slice(0, w)), ("late", slice(n - w, n))):
        rewarded = ~omitted[sl]
        values[f"{phase}.cue"] = float(ev_cue[sl].mean())
        values[f"{phase}.reward"] = float(ev_rew[sl][rewarded].mean()) if rewarded.any() else float("nan")
        values[f"{phase}.omission"] = float(ev_omit[sl].mean())
        counts[f"{phase}.rewarded"] = int(rewarded.sum())
        counts[f"{phase}.omitted"] = int((~rewarded).sum())

    m = len(cols["state"])
    traj = Trajectory(
        trial=np.asarray(cols["trial"], np.int64), t=np.asarray(cols["t"], np.int64),
        state=np.asarray(cols["state"], np.int64), action=np.zeros(m, np.int64),
        reward=np.asarray(cols["reward"], float), delta=np.asarray(cols["delta"], float),
        v_state=np.asarray(cols["v_state"], float), chosen_prob=np.ones(m),
        next_state=np.asarray(cols["next_state"], np.int64),
    )
    return traj, ConditioningSummary(values, counts)
