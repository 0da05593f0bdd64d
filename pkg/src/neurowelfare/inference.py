"""Likelihoods, maximum-likelihood fitting and exact identifiability checks.

A :class:`ModelSpec` names a model family, which of its parameters are
free (with box bounds) or fixed, and which latent variables are observed
through noisy neural channels.  Likelihoods replay the learner
deterministically along recorded data.  :func:`enumerate_joint` computes
the exact distribution of short action / neural-bin sequences by brute
force, which is what :func:`identifiability_gap` compares.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

from . import _core
from .agent import Learner, Trajectory, make_learner, simulate_learner
from .environment import Intervention, Mdp
from .neural import LinkFunction, NeuralTrace, NoiseModel, encode
from .welfare import WelfareCriterion, intervention_rows

MODEL_IDS = ("plain-rl", "cue-distortion", "taste-shift", "scaled-reward")

# canonical order; also the lexicographic order used to break likelihood ties
PARAM_NAMES = ("alpha", "alpha_actor", "beta", "gamma", "kappa", "lambda", "scale",
               "initial_value", "link_slope", "sigma")
DEFAULTS = {"alpha": 0.1, "beta": 1.0, "gamma": 0.9, "kappa": 0.0, "lambda": 1.0,
            "scale": 1.0, "initial_value": 0.0}

ENUMERATION_BUDGET = 10**7
MAX_HORIZON = 8
MAX_BINS = 5


@dataclass(frozen=True)
class ChannelSpec:
    """An observed latent (``delta`` or ``value``) seen through a link plus noise."""

    latent: Literal["delta", "value"]
    link: LinkFunction = field(default_factory=LinkFunction)
    sigma: float = 0.1
    name: str = ""

    def __post_init__(self):
        if self.latent not in ("delta", "value"):
            raise ValueError(f"unknown latent {self.latent!r}")
        NoiseModel(self.sigma)
        if not self.name:
            object.__setattr__(self, "name", self.latent)

    def to_dict(self) -> dict:
        return {"latent": self.latent, "link": self.link.to_dict(), "sigma": self.sigma,
                "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        return cls(d["latent"], LinkFunction.from_dict(d.get("link", {})), d.get("sigma", 0.1),
                   d.get("name", ""))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Model family plus free/fixed parameters and observed neural channels.

    ``cue-distortion`` adds ``kappa * C`` to choice values in cue states and
    lets it feed the learning error (the observed prediction error stays the
    one computed from the environment reward).  ``taste-shift`` adds the
    same bonus to the experienced reward.  ``scaled-reward`` multiplies
    rewards and initial values by ``scale``.
    """

    model_id: str
    free_parameters: dict = field(default_factory=dict)
    fixed_parameters: dict = field(default_factory=dict)
    neural_channels: tuple = ()
    policy_mode: str = "q-from-v"
    cue_reactivity: np.ndarray | None = None
    criterion: WelfareCriterion | None = None
    reset_each_trial: bool = False
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "free_parameters",
                           {k: (float(lo), float(hi)) for k, (lo, hi) in self.free_parameters.items()})
        object.__setattr__(self, "fixed_parameters",
                           {k: float(v) for k, v in self.fixed_parameters.items()})
        object.__setattr__(self, "neural_channels", tuple(self.neural_channels))
        if self.cue_reactivity is not None:
            object.__setattr__(self, "cue_reactivity", np.array(self.cue_reactivity, float))
        if not self.label:
            object.__setattr__(self, "label", self.model_id)

    def problems(self, mdp: Mdp | None = None) -> list[str]:
        msgs = []
        if self.model_id not in MODEL_IDS:
            msgs.append(f"unknown model_id {self.model_id!r}")
        if self.policy_mode not in ("actor-preferences", "q-from-v"):
            msgs.append(f"unknown policy_mode {self.policy_mode!r}")
        for name in (*self.free_parameters, *self.fixed_parameters):
            if name not in PARAM_NAMES:
                msgs.append(f"unknown parameter {name!r}")
        both = set(self.free_parameters) & set(self.fixed_parameters)
        if both:
            msgs.append(f"parameters both free and fixed: {sorted(both)}")
        for name, (lo, hi) in self.free_parameters.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                msgs.append(f"bad bounds for {name}: ({lo}, {hi})")
        if self.model_id in ("cue-distortion", "taste-shift") and self.cue_reactivity is None:
            msgs.append(f"{self.model_id} needs a cue reactivity table")
        if self.cue_reactivity is not None and (self.cue_reactivity < 0).any():
            msgs.append("cue reactivity must be nonnegative")
        if mdp is not None and self.cue_reactivity is not None:
            if self.cue_reactivity.shape != (mdp.n_states, mdp.n_actions):
                msgs.append("cue reactivity table does not match the environment")
        for ch in self.neural_channels:
            if not isinstance(ch, ChannelSpec):
                msgs.append("neural channels must be ChannelSpec instances")
        return msgs

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(n for n in PARAM_NAMES if n in self.free_parameters)

    def resolve(self, params: dict | None = None) -> dict:
        """Full parameter set: defaults, then fixed values, then ``params``."""
        params = dict(params or {})
        msgs = self.problems()
        if msgs:
            raise ValueError("invalid model spec: " + "; ".join(msgs))
        for name in params:
            if name not in self.free_parameters:
                raise ValueError(f"{name!r} is not a free parameter of {self.label}")
        for name, (lo, hi) in self.free_parameters.items():
            if name not in params:
                raise ValueError(f"missing value for free parameter {name!r}")
            if not lo <= params[name] <= hi:
                raise ValueError(f"{name}={params[name]} outside bounds ({lo}, {hi})")
        out = dict(DEFAULTS)
        out.update(self.fixed_parameters)
        out.update({k: float(v) for k, v in params.items()})
        out.setdefault("alpha_actor", out["alpha"])
        return out

    def learner(self, mdp: Mdp, params: dict | None = None) -> Learner:
        p = self.resolve(params)
        bonus = None
        if self.model_id in ("cue-distortion", "taste-shift"):
            if self.cue_reactivity.shape != (mdp.n_states, mdp.n_actions):
                raise ValueError("cue reactivity table does not match the environment")
            bonus = (p["kappa"] * mdp.cue_flags)[:, None] * self.cue_reactivity
        scale = p["scale"] if self.model_id == "scaled-reward" else 1.0
        return make_learner(
            mdp,
            alpha_critic=p["alpha"], alpha_actor=p["alpha_actor"], beta=p["beta"],
            gamma=p["gamma"], policy_mode=self.policy_mode,
            initial_value=p["initial_value"] * scale, reset=self.reset_each_trial,
            value_bonus=bonus if self.model_id == "cue-distortion" else None,
            reward_bonus=bonus if self.model_id == "taste-shift" else None,
            reward_scale=scale,
        )

    def channels(self, params: dict | None = None) -> list[tuple[ChannelSpec, LinkFunction, float]]:
        """Channels with the link gain and noise level implied by ``params``."""
        p = self.resolve(params)
        out = []
        for ch in self.neural_channels:
            link = ch.link.with_gain(p["link_slope"]) if "link_slope" in p else ch.link
            out.append((ch, link, p.get("sigma", ch.sigma)))
        return out

    def with_(self, **changes) -> "ModelSpec":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return ModelSpec(**d)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "free_parameters": {k: list(v) for k, v in self.free_parameters.items()},
            "fixed_parameters": dict(self.fixed_parameters),
            "neural_channels": [ch.to_dict() for ch in self.neural_channels],
            "policy_mode": self.policy_mode,
            "cue_reactivity": None if self.cue_reactivity is None else self.cue_reactivity.tolist(),
            "criterion": None if self.criterion is None else self.criterion.to_dict(),
            "reset_each_trial": self.reset_each_trial,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        crit = d.get("criterion")
        return cls(
            d["model_id"],
            {k: tuple(v) for k, v in d.get("free_parameters", {}).items()},
            d.get("fixed_parameters", {}),
            tuple(ChannelSpec.from_dict(c) for c in d.get("neural_channels", [])),
            d.get("policy_mode", "q-from-v"),
            d.get("cue_reactivity"),
            None if crit is None else WelfareCriterion.from_dict(crit),
            d.get("reset_each_trial", False),
            d.get("label", ""),
        )


class BoundModel(NamedTuple):
    """A model spec together with values for its free parameters."""

    spec: ModelSpec
    params: dict | None = None


# -- likelihoods ----------------------------------------------------------

def _replay(traj: Trajectory, mdp: Mdp, spec: ModelSpec, params) -> np.ndarray:
    learner = spec.learner(mdp, params)
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if traj.state.max() >= mdp.n_states or traj.action.max() >= mdp.n_actions:
        raise ValueError("trajectory indices do not fit the environment")
    V, prefs, visits = learner.fresh_state()
    return _core.replay(*learner, np.ascontiguousarray(traj.trial, np.int64),
                        np.ascontiguousarray(traj.state, np.int64),
                        np.ascontiguousarray(traj.action, np.int64),
                        np.ascontiguousarray(traj.next_state, np.int64),
                        np.ascontiguousarray(traj.reward, float), V, prefs, visits)


def choice_log_likelihood(traj: Trajectory, mdp: Mdp, spec: ModelSpec, params=None) -> float:
    """Sum of log choice probabilities under sequentially replayed learning.

    A recorded action the model deems impossible gives ``-inf``.
    """
    return float(_replay(traj, mdp, spec, params)[:, 0].sum())


def _gauss_logpdf(x, mean, sigma) -> float:
    x, mean = np.asarray(x, float), np.asarray(mean, float)
    if sigma == 0:
        return 0.0 if np.array_equal(x, mean) else -np.inf
    z = (x - mean) / sigma
    return float(np.sum(-0.5 * z * z) - len(z) * (np.log(sigma) + 0.5 * np.log(2 * np.pi)))


def latent_series(out: np.ndarray, latent: str) -> np.ndarray:
    return out[:, 2] if latent == "delta" else out[:, 3]


def joint_log_likelihood(
    traj: Trajectory, traces: Sequence[NeuralTrace], mdp: Mdp, spec: ModelSpec, params=None,
) -> float:
    """Choice log-likelihood plus Gaussian log-densities of the neural samples.

    ``traces`` are matched to the model's channels in order.
    """
    out = _replay(traj, mdp, spec, params)
    ll = float(out[:, 0].sum())
    chans = spec.channels(params)
    if len(traces) != len(chans):
        raise ValueError(f"expected {len(chans)} neural traces, got {len(traces)}")
    for tr, (ch, link, sigma) in zip(traces, chans):
        if not tr.aligned_to(traj):
            raise ValueError(f"trace {tr.channel_id!r} is not aligned to the trajectory")
        ll += _gauss_logpdf(tr.value, link(latent_series(out, ch.latent)), sigma)
    return ll


def simulate_data(
    mdp: Mdp, spec: ModelSpec, params, episodes: int, horizon: int, rng: np.random.Generator,
) -> tuple[Trajectory, list[NeuralTrace]]:
    """Behaviour and neural traces generated by a model."""
    learner = spec.learner(mdp, params)
    traj, _ = simulate_learner(learner, mdp, episodes, horizon, rng)
    traces = []
    for ch, link, sigma in spec.channels(params):
        latent = traj.delta_experienced if ch.latent == "delta" else traj.v_state
        traces.append(encode(latent, link, NoiseModel(sigma), rng, ch.name, align=traj))
    return traj, traces


# -- fitting --------------------------------------------------------------

@dataclass(frozen=True)
class FitSearch:
    grid_points_per_dim: int = 5
    n_restarts: int = 2
    tolerance: float = 1e-4
    max_iters: int = 400

    def __post_init__(self):
        if self.grid_points_per_dim < 1 or self.n_restarts < 0 or self.max_iters < 1:
            raise ValueError("invalid search settings")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class FitResult:
    best_params: dict
    log_likelihood: float
    n_restarts: int
    converged: bool
    grid_stage_best: dict
    n_evaluations: int = 0

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "log_likelihood": self.log_likelihood,
                "n_restarts": self.n_restarts, "converged": self.converged,
                "grid_stage_best": self.grid_stage_best, "n_evaluations": self.n_evaluations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _split_data(data):
    if isinstance(data, Trajectory):
        return data, []
    traj, traces = data
    return traj, list(traces or [])


def fit_mle(
    data, mdp: Mdp, spec: ModelSpec, search: FitSearch | None = None,
    rng: np.random.Generator | None = None,
) -> FitResult:
    """Grid scan over the box, then bounded Nelder-Mead from the best grid
    point and from ``n_restarts`` uniformly drawn points."""
    search = search or FitSearch()
    if rng is None:
        raise ValueError("fit_mle needs an explicit random generator")
    names = spec.free_names
    if not names:
        raise ValueError("fit_mle needs at least one free parameter")
    traj, traces = _split_data(data)
    if len(traj) == 0:
        raise ValueError("no data to fit")
    lo = np.array([spec.free_parameters[n][0] for n in names])
    hi = np.array([spec.free_parameters[n][1] for n in names])
    use_joint = bool(spec.neural_channels) and bool(traces)
    n_eval = 0

    def loglik(x) -> float:
        nonlocal n_eval
        n_eval += 1
        p = dict(zip(names, np.clip(x, lo, hi).tolist()))
        if use_joint:
            return joint_log_likelihood(traj, traces, mdp, spec, p)
        return choice_log_likelihood(traj, mdp, spec, p)

    def objective(x) -> float:
        ll = loglik(x)
        return -ll if np.isfinite(ll) else 1e300

    g = search.grid_points_per_dim
    axes = [lo[i] + (np.arange(g) + 0.5) / g * (hi[i] - lo[i]) for i in range(len(names))]
    grid = [(loglik(np.array(x)), tuple(x)) for x in itertools.product(*axes)]
    grid_ll, grid_x = max(grid, key=lambda r: (r[0], tuple(-v for v in r[1])))

    starts = [np.array(grid_x)] + [lo + rng.random(len(names)) * (hi - lo)
                                   for _ in range(search.n_restarts)]
    width = hi - lo
    candidates = [(grid_ll, grid_x, False)]
    for x0 in starts:
        simplex = [x0]
        for i in range(len(names)):
            v = x0.copy()
            v[i] += 0.1 * width[i] if x0[i] + 0.1 * width[i] <= hi[i] else -0.1 * width[i]
            simplex.append(v)
        res = optimize.minimize(
            objective, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
            options={"initial_simplex": np.array(simplex), "xatol": search.tolerance * 0.5,
                     "fatol": 1e-10, "maxiter": search.max_iters, "maxfev": 4 * search.max_iters},
        )
        fs = np.clip(res.final_simplex[0], lo, hi)
        diameter = float(np.max(np.linalg.norm(fs - fs[0], axis=1)))
        x = np.clip(res.x, lo, hi)
        candidates.append((loglik(x), tuple(x.tolist()), diameter < search.tolerance))

    ll, x, conv = max(candidates, key=lambda r: (r[0], tuple(-v for v in r[1])))
    if not np.isfinite(ll):
        raise ValueError("every likelihood evaluation was -inf; data are degenerate for this model")
    return FitResult(dict(zip(names, map(float, x))), float(ll), search.n_restarts, bool(conv),
                     dict(zip(names, map(float, grid_x))), n_eval)


@dataclass
class RecoveryStats:
    truth: float
    estimates: list[float]

    @property
    def median_abs_error(self) -> float:
        return float(np.median(np.abs(np.asarray(self.estimates) - self.truth)))

    @property
    def coverage_20(self) -> float:
        """Fraction of estimates within 20% of the truth."""
        est = np.asarray(self.estimates)
        return float(np.mean(np.abs(est - self.truth) <= 0.2 * abs(self.truth)))

    def to_dict(self) -> dict:
        return {"truth": self.truth, "estimates": self.estimates,
                "median_abs_error": self.median_abs_error, "coverage_20": self.coverage_20}


def parameter_recovery(
    spec: ModelSpec,
    true_params: dict,
    mdp: Mdp,
    n_replications: int,
    episodes: int,
    horizon: int,
    search: FitSearch | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, RecoveryStats]:
    """Simulate at ``true_params`` and refit, ``n_replications`` times."""
    if n_replications < 1:
        raise ValueError("need at least one replication")
    if rng is None:
        raise ValueError("parameter_recovery needs an explicit random generator")
    seeds = rng.integers(2**63, size=n_replications)
    stats = {n: RecoveryStats(float(true_params[n]), []) for n in spec.free_names}
    for seed in seeds:
        r = np.random.default_rng(int(seed))
        data = simulate_data(mdp, spec, true_params, episodes, horizon, r)
        fit = fit_mle(data, mdp, spec, search, r)
        for n in stats:
            stats[n].estimates.append(fit.best_params[n])
    return stats


# -- exact enumeration ----------------------------------------------------

@dataclass
class JointDistributionTable:
    """Exact distribution over (action sequence, neural-bin sequence).

    Each bin sequence holds one tuple of channel bins per step.
    """

    probs: dict
    horizon: int
    n_neural_bins: int

    @property
    def outcomes(self) -> list[tuple[tuple, tuple, float]]:
        return [(a, b, p) for (a, b), p in sorted(self.probs.items())]

    def total(self) -> float:
        return float(sum(self.probs.values()))

    def choice_marginal(self) -> dict:
        out: dict = {}
        for (a, _), p in self.probs.items():
            out[a] = out.get(a, 0.0) + p
        return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def _bin_edges(center: float, scale: float, k: int) -> np.ndarray:
    inner = center + scale * special.ndtri(np.arange(1, k) / k)
    return np.concatenate(([-np.inf], inner, [np.inf]))


def _bin_probs(mean: float, sigma: float, edges: np.ndarray) -> np.ndarray:
    if sigma == 0:
        out = np.zeros(len(edges) - 1)
        out[np.searchsorted(edges, mean, side="right") - 1] = 1.0
        return out
    return np.diff(special.ndtr((edges - mean) / sigma))


def _walk(mdp: Mdp, learner: Learner, horizon: int, visit) -> None:
    """Depth-first walk over every (action, successor) branch of one episode.

    ``visit(path_prob, actions, latents)`` sees each leaf, where ``latents``
    holds the (experienced delta, pre-update value) of each step.
    """
    P, R, avail, term, rshift, vshift, dshift, par = learner
    A = mdp.n_actions
    vals, probs = np.empty(A), np.empty(A)

    def rec(s, depth, V, prefs, visits, prob, acts, lats):
        if depth == horizon or term[s]:
            visit(prob, acts, lats)
            return
        _core.choice_values(P, R, rshift, vshift, par, V, prefs, s, vals)
        _core.softmax_masked(vals, par[_core.I_BETA], avail[s], probs)
        pa = probs.copy()
        for a in range(A):
            if pa[a] <= 0.0:
                continue
            for s2 in np.flatnonzero(P[s, a] > 0.0):
                V2, prefs2, visits2 = V.copy(), prefs.copy(), visits.copy()
                v_s = V[s]
                _, d_exp = _core.td_update(R, rshift, dshift, par, V2, prefs2, visits2,
                                           s, a, int(s2), R[s, a])
                rec(int(s2), depth + 1, V2, prefs2, visits2, prob * pa[a] * P[s, a, s2],
                    acts + (a,), lats + ((d_exp, v_s),))

    V, prefs, visits = learner.fresh_state()
    rec(mdp.initial_state, 0, V, prefs, visits, 1.0, (), ())


def _branching(mdp: Mdp) -> int:
    return int((mdp.transition > 0).sum(axis=2).max())


def latent_means(mdp: Mdp, spec: ModelSpec, params=None, horizon: int = 1) -> list[np.ndarray]:
    """Channel means ``link(latent)`` over every reachable step, per channel."""
    chans = spec.channels(params)
    found = [[] for _ in chans]

    def visit(prob, acts, lats):
        for i, (ch, link, _) in enumerate(chans):
            j = 0 if ch.latent == "delta" else 1
            found[i].extend(float(link(l[j])) for l in lats)

    _check_budget(mdp, horizon, 1, 0)
    _walk(mdp, spec.learner(mdp, params), horizon, visit)
    return [np.asarray(f) for f in found]


def _check_budget(mdp: Mdp, horizon: int, bins: int, n_channels: int) -> None:
    if not 1 <= horizon <= MAX_HORIZON:
        raise ValueError(f"horizon must lie in [1, {MAX_HORIZON}]")
    if not 1 <= bins <= MAX_BINS:
        raise ValueError(f"neural_bins must lie in [1, {MAX_BINS}]")
    width = mdp.n_actions * _branching(mdp) * bins ** n_channels
    if width ** horizon > ENUMERATION_BUDGET:
        raise ValueError(f"enumeration budget exceeded: {width}^{horizon} > {ENUMERATION_BUDGET}")


def default_reference(means: Sequence[np.ndarray], sigmas: Sequence[float]) -> list[tuple[float, float]]:
    """Per-channel (center, scale) of the Gaussian whose quantile cells are the bins."""
    out = []
    for m, sig in zip(means, sigmas):
        if len(m) == 0:
            out.append((0.0, max(sig, 1.0)))
            continue
        lo, hi = float(np.min(m)), float(np.max(m))
        scale = max(0.5 * (hi - lo), sig)
        out.append((0.5 * (lo + hi), scale if scale > 0 else 1.0))
    return out


def enumerate_joint(
    mdp: Mdp,
    spec: ModelSpec,
    params=None,
    horizon: int = 1,
    neural_bins: int = 3,
    reference: Sequence[tuple[float, float]] | None = None,
) -> JointDistributionTable:
    """Exact joint distribution of actions and binned neural samples.

    Every action / successor branch is followed with the model's
    deterministic learning updates.  Each channel's samples are binned into
    ``neural_bins`` equal-probability quantile cells of a reference Gaussian
    ``reference[i] = (center, scale)``; bin probabilities are exact normal
    CDF differences.  By default the reference is centred on the range of
    the channel means the model can produce.
    """
    chans = spec.channels(params)
    _check_budget(mdp, horizon, neural_bins, len(chans))
    if reference is None:
        reference = default_reference(latent_means(mdp, spec, params, horizon),
                                      [s for _, _, s in chans])
    if len(reference) != len(chans):
        raise ValueError("need one reference per neural channel")
    edges = [_bin_edges(c, sc, neural_bins) for c, sc in reference]
    table: dict = {}

    def visit(prob, acts, lats):
        # expand each step's channel bins
        step_dists = []
        for lat in lats:
            per_chan = []
            for (ch, link, sigma), e in zip(chans, edges):
                mean = float(link(lat[0] if ch.latent == "delta" else lat[1]))
                per_chan.append(_bin_probs(mean, sigma, e))
            step_dists.append(per_chan)
        steps = []
        for per_chan in step_dists:
            cells = [((), 1.0)]
            for bp in per_chan:
                cells = [(c + (k,), p * bp[k]) for c, p in cells for k in range(len(bp)) if bp[k] > 0]
            steps.append(cells)
        for choice in itertools.product(*steps):
            p = prob
            for _, q in choice:
                p *= q
            key = (acts, tuple(c for c, _ in choice))
            table[key] = table.get(key, 0.0) + p

    _walk(mdp, spec.learner(mdp, params), horizon, visit)
    return JointDistributionTable(table, horizon, neural_bins)


# -- identifiability ------------------------------------------------------

@dataclass
class IdentifiabilityReport:
    tv_choice: float
    tv_joint: float | None
    delta_ll: float
    verdicts_diverge: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tv_choice": self.tv_choice, "tv_joint": self.tv_joint,
                "delta_ll": self.delta_ll, "verdicts_diverge": self.verdicts_diverge,
                "detail": self.detail}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _as_bound(m) -> BoundModel:
    if isinstance(m, ModelSpec):
        return BoundModel(m, {})
    spec, params = m
    return BoundModel(spec, dict(params or {}))


def identifiability_gap(
    mdp: Mdp,
    pair,
    horizon: int = 3,
    neural_bins: int = 3,
    criteria: Sequence[WelfareCriterion] | None = None,
    intervention: Intervention | None = None,
    data=None,
    rng: np.random.Generator | None = None,
    relearn: tuple[int, int] = (1, 200),
    dual_self=None,
    lambda_of_state=None,
    data_size: tuple[int, int] = (20, 50),
) -> IdentifiabilityReport:
    """Exact distances between two models plus their welfare verdicts.

    ``tv_choice`` compares action-sequence distributions and ``tv_joint``
    the joint action / neural-bin distributions on shared bins (``None``
    when the models observe different channel sets).  ``delta_ll`` is the
    log-likelihood of the first model minus the second on ``data``, which
    is simulated from the first model when not supplied.  Verdicts diverge
    when the intervention's welfare delta has a different sign under each
    model's own criterion (``criteria`` overrides the models' own).
    """
    m1, m2 = _as_bound(pair[0]), _as_bound(pair[1])
    rng = np.random.default_rng(0) if rng is None else rng
    c1, c2 = m1.spec.channels(m1.params), m2.spec.channels(m2.params)
    same_channels = [ch.latent for ch, _, _ in c1] == [ch.latent for ch, _, _ in c2]

    reference = None
    if same_channels and c1:
        pooled = [np.concatenate(z) for z in zip(latent_means(mdp, m1.spec, m1.params, horizon),
                                                 latent_means(mdp, m2.spec, m2.params, horizon))]
        reference = default_reference(pooled, [max(a[2], b[2]) for a, b in zip(c1, c2)])
    t1 = enumerate_joint(mdp, m1.spec, m1.params, horizon, neural_bins, reference if same_channels else None)
    t2 = enumerate_joint(mdp, m2.spec, m2.params, horizon, neural_bins, reference if same_channels else None)
    tv_choice = min(1.0, total_variation(t1.choice_marginal(), t2.choice_marginal()))
    tv_joint = min(1.0, total_variation(t1.probs, t2.probs)) if same_channels else None

    if data is None:
        data = simulate_data(mdp, m1.spec, m1.params, *data_size, rng)
    traj, traces = _split_data(data)
    if same_channels and traces:
        delta_ll = (joint_log_likelihood(traj, traces, mdp, m1.spec, m1.params)
                    - joint_log_likelihood(traj, traces, mdp, m2.spec, m2.params))
    else:
        delta_ll = (choice_log_likelihood(traj, mdp, m1.spec, m1.params)
                    - choice_log_likelihood(traj, mdp, m2.spec, m2.params))

    detail: dict = {}
    diverge = False
    if intervention is not None:
        crits = list(criteria) if criteria is not None else [m1.spec.criterion, m2.spec.criterion]
        if any(c is None for c in crits):
            raise ValueError("both models need a declared welfare criterion")
        seed = int(rng.integers(2**63))
        signs = []
        for m, crit in zip((m1, m2), crits):
            rows = intervention_rows(lambda e, m=m: m.spec.learner(e, m.params), mdp, [intervention],
                                     [crit], relearn[0], relearn[1], seed, dual_self, lambda_of_state)
            d = rows.rows[0][4]
            signs.append(0 if abs(d) <= 1e-12 else int(np.sign(d)))
            detail[m.spec.label] = {"criterion": crit.label, "delta": d}
        diverge = signs[0] != signs[1]
    return IdentifiabilityReport(float(tv_choice), None if tv_joint is None else float(tv_joint),
                                 float(delta_ll), bool(diverge), detail)
