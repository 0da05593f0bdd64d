# Compiled inner loops shared by simulation, likelihood replay and enumeration.
#
# One learner is described by a tuple of tables
#   P[s,a,s'], R[s,a], avail[s,a], term[s]
#   rshift[s,a]  added to the experienced reward (taste shift)
#   vshift[s,a]  added to choice values only (cue distortion)
#   dshift[s,a]  added to the learning TD error only (distortion fed back into learning)
# and a parameter vector PAR (see the index constants below).

import numpy as np
from numba import njit

ACTOR = 0
Q_FROM_V = 1

I_SCALE, I_ALPHA_C, I_ALPHA_A, I_BETA, I_GAMMA, I_V0, I_MODE, I_DECAY, I_RESET, I_TAU = range(10)
N_PAR = 10


@njit(cache=True)
def choice_values(P, R, rshift, vshift, par, V, prefs, s, out):
    A = R.shape[1]
    S = P.shape[2]
    mode = int(par[I_MODE])
    for a in range(A):
        if mode == ACTOR:
            x = prefs[s, a]
        else:
            acc = 0.0
            for sp in range(S):
                acc += P[s, a, sp] * V[sp]
            x = par[I_SCALE] * R[s, a] + rshift[s, a] + par[I_GAMMA] * acc
        out[a] = x + vshift[s, a]


@njit(cache=True)
def softmax_masked(vals, beta, avail_row, out):
    m = -np.inf
    for a in range(vals.shape[0]):
        if avail_row[a]:
            z = beta * vals[a]
            if z > m:
                m = z
    tot = 0.0
    for a in range(vals.shape[0]):
        if avail_row[a]:
            out[a] = np.exp(beta * vals[a] - m)
            tot += out[a]
        else:
            out[a] = 0.0
    for a in range(vals.shape[0]):
        out[a] /= tot


@njit(cache=True)
def sample_index(probs, u):
    acc = 0.0
    last = 0
    for i in range(probs.shape[0]):
        if probs[i] > 0.0:
            acc += probs[i]
            last = i
            if u < acc:
                return i
    return last


@njit(cache=True)
def td_update(R, rshift, dshift, par, V, prefs, visits, s, a, s2, r_env):
    """Apply one critic/actor update; returns (learning delta, experienced delta)."""
    r_exp = par[I_SCALE] * r_env + rshift[s, a]
    v_next = V[s2] if s2 >= 0 else 0.0
    d_exp = r_exp + par[I_GAMMA] * v_next - V[s]
    d = d_exp + dshift[s, a]
    if s2 < 0:
        return d, d_exp
    if par[I_DECAY] > 0.0:
        step = 1.0 / (1.0 + visits[s] / par[I_TAU])
    else:
        step = 1.0
    V[s] += par[I_ALPHA_C] * step * d
    if int(par[I_MODE]) == ACTOR:
        prefs[s, a] += par[I_ALPHA_A] * step * d
    visits[s] += 1
    return d, d_exp


@njit(cache=True)
def reset_state(term, par, V, prefs, visits):
    for s in range(V.shape[0]):
        V[s] = 0.0 if term[s] else par[I_V0]
        visits[s] = 0
        for a in range(prefs.shape[1]):
            prefs[s, a] = par[I_V0]


@njit(cache=True)
def simulate(P, R, avail, term, rshift, vshift, dshift, par, init_state,
             n_trials, horizon, u_act, u_next, V, prefs, visits):
    n_max = n_trials * horizon
    A = R.shape[1]
    ints = np.empty((n_max, 5), np.int64)  # trial, t, s, a, s2
    flts = np.empty((n_max, 5))  # r, delta, delta_exp, v_s, p_chosen
    vals = np.empty(A)
    probs = np.empty(A)
    n = 0
    for k in range(n_trials):
        if par[I_RESET] > 0.0 and k > 0:
            reset_state(term, par, V, prefs, visits)
        s = init_state
        for t in range(horizon):
            if term[s]:
                break
            choice_values(P, R, rshift, vshift, par, V, prefs, s, vals)
            softmax_masked(vals, par[I_BETA], avail[s], probs)
            a = sample_index(probs, u_act[n])
            s2 = sample_index(P[s, a], u_next[n])
            r = R[s, a]
            v_s = V[s]
            d, d_exp = td_update(R, rshift, dshift, par, V, prefs, visits, s, a, s2, r)
            ints[n, 0] = k
            ints[n, 1] = t
            ints[n, 2] = s
            ints[n, 3] = a
            ints[n, 4] = s2
            flts[n, 0] = r
            flts[n, 1] = d
            flts[n, 2] = d_exp
            flts[n, 3] = v_s
            flts[n, 4] = probs[a]
            n += 1
            s = s2
    return ints[:n], flts[:n]


@njit(cache=True)
def replay(P, R, avail, term, rshift, vshift, dshift, par,
           trial, states, actions, next_states, rewards, V, prefs, visits):
    """Re-run learning along recorded data.

    Returns per-record log choice probability, learning delta, experienced
    delta and pre-update state value.
    """
    n = states.shape[0]
    A = R.shape[1]
    out = np.empty((n, 4))
    vals = np.empty(A)
    probs = np.empty(A)
    for i in range(n):
        if par[I_RESET] > 0.0 and i > 0 and trial[i] != trial[i - 1]:
            reset_state(term, par, V, prefs, visits)
        s = states[i]
        a = actions[i]
        choice_values(P, R, rshift, vshift, par, V, prefs, s, vals)
        softmax_masked(vals, par[I_BETA], avail[s], probs)
        p = probs[a]
        out[i, 0] = np.log(p) if p > 0.0 else -np.inf
        out[i, 3] = V[s]
        d, d_exp = td_update(R, rshift, dshift, par, V, prefs, visits, s, a,
                             next_states[i], rewards[i])
        out[i, 1] = d
        out[i, 2] = d_exp
    return out
