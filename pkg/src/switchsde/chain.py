"""Exact simulation of the switching chain and its couplings.

Paths are piecewise constant and stored as jump times plus post-jump
states, so time integrals along a path are finite sums with no
quadrature error.  Discrete-time observation (the grid-frozen chain)
samples the exact continuous-time path at grid times; the chain itself
is never approximated.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import AbsorbingState, OutOfHorizon
from .parallel import BLOCK_PATHS, map_blocks
from .streams import chain_stream

_GRID_FUZZ = 1e-9


@dataclass(frozen=True)
class RegimePath:
    """One chain trajectory: initial state, jump times, post-jump states."""

    initial_state: int
    jump_times: np.ndarray
    post_jump_states: np.ndarray
    horizon: float
    n_states: int

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.post_jump_states, dtype=np.int64)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "post_jump_states", st)
        if jt.shape != st.shape:
            raise ValueError("jump_times and post_jump_states must align")
        if jt.size:
            if np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] > self.horizon:
                raise ValueError("jump times must be strictly increasing in (0, horizon]")
            seq = np.concatenate(([self.initial_state], st))
            if np.any(seq[1:] == seq[:-1]):
                raise ValueError("self-jumps must not be recorded")
            if np.any(st < 0) or np.any(st >= self.n_states):
                raise ValueError("post-jump states out of range")

    def states_with_initial(self):
        return np.concatenate(([self.initial_state], self.post_jump_states))

    def n_jumps(self):
        return int(self.jump_times.size)


def _transition_tables(q):
    """Per-state jump targets and cumulative probabilities (self excluded).

    Cached on the matrix instance; generators are immutable once built.
    """
    cached = getattr(q, "_tables", None)
    if cached is not None:
        return cached
    rates = q.rates
    exit_rates = q.exit_rates()
    targets, cumprobs = [], []
    for s in range(q.n_states):
        row = rates[s].copy()
        row[s] = 0.0
        idx = np.nonzero(row > 0)[0]
        w = row[idx] / exit_rates[s]
        targets.append(idx)
        cumprobs.append(np.cumsum(w))
    tables = (exit_rates, targets, cumprobs)
    object.__setattr__(q, "_tables", tables)
    return tables


def _trusted_path(i0, jump_times, states, horizon, n_states):
    """Build a RegimePath without re-validating simulator-made invariants."""
    path = RegimePath.__new__(RegimePath)
    object.__setattr__(path, "initial_state", int(i0))
    object.__setattr__(path, "jump_times", jump_times)
    object.__setattr__(path, "post_jump_states", states)
    object.__setattr__(path, "horizon", float(horizon))
    object.__setattr__(path, "n_states", int(n_states))
    return path


def simulate_ctmc(q, i0, horizon, rng):
    """Exact chain path on [0, horizon] from state ``i0``.

    Holding times are exponential with the state's exit rate; the next
    state is drawn from the off-diagonal rates.  Draws come in fixed-size
    chunks from ``rng`` so the consumption pattern is reproducible.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    exit_rates, targets, cumprobs = _transition_tables(q)
    if np.any(exit_rates <= 0):
        raise AbsorbingState("a state has zero exit rate")
    chunk = max(16, int(horizon * float(np.max(exit_rates)) * 1.5) + 4)
    exps = rng.standard_exponential(chunk)
    unis = rng.random(chunk)
    ptr = 0
    t = 0.0
    s = int(i0)
    jump_times, states = [], []
    while True:
        if ptr == chunk:
            exps = rng.standard_exponential(chunk)
            unis = rng.random(chunk)
            ptr = 0
        t += exps[ptr] / exit_rates[s]
        if t > horizon:
            break
        cp = cumprobs[s]
        j = int(targets[s][min(np.searchsorted(cp, unis[ptr], side="right"), cp.size - 1)])
        ptr += 1
        jump_times.append(t)
        states.append(j)
        s = j
    return _trusted_path(
        i0,
        np.asarray(jump_times, dtype=float),
        np.asarray(states, dtype=np.int64),
        horizon,
        q.n_states,
    )


def state_at(path, t):
    """Right-continuous state at time ``t`` (post-jump value at jump times)."""
    if t < 0 or t > path.horizon:
        raise OutOfHorizon(f"t={t} outside [0, {path.horizon}]")
    idx = int(np.searchsorted(path.jump_times, t, side="right"))
    if idx == 0:
        return path.initial_state
    return int(path.post_jump_states[idx - 1])


def floor_to_grid(t, delta):
    """Largest grid multiple of ``delta`` not exceeding ``t`` (fuzz 1e-9)."""
    return math.floor(t / delta + _GRID_FUZZ) * delta


def discretized_state(path, t, delta):
    """State of the grid-frozen observation: the exact state at floor(t/delta)*delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return state_at(path, floor_to_grid(t, delta))


def states_on_grid(path, n_steps, delta):
    """Vector of states at times k*delta, k = 0..n_steps."""
    times = np.arange(n_steps + 1) * delta
    if times[-1] > path.horizon + _GRID_FUZZ:
        raise OutOfHorizon("grid extends past the path horizon")
    idx = np.searchsorted(path.jump_times, times, side="right")
    return path.states_with_initial()[idx]


def integrate_along(path, diagonal, t, delta=None):
    """Exact value of the time integral of K along the path up to ``t``.

    With ``delta`` given, integrates K at the grid-frozen state instead.
    Both versions are finite sums over constancy intervals.
    """
    if t < 0 or t > path.horizon + _GRID_FUZZ:
        raise OutOfHorizon(f"t={t} outside [0, {path.horizon}]")
    k = np.asarray(diagonal, dtype=float)
    if delta is None:
        m = int(np.searchsorted(path.jump_times, t, side="right"))
        breaks = np.concatenate(([0.0], path.jump_times[:m], [t]))
        states = path.states_with_initial()[: m + 1]
        lengths = np.diff(breaks)
        return float(np.sum(lengths * k[states]))
    n_cells = int(math.floor(t / delta + _GRID_FUZZ))
    cell_starts = np.arange(n_cells + 1) * delta
    idx = np.searchsorted(path.jump_times, cell_starts, side="right")
    states = path.states_with_initial()[idx]
    lengths = np.full(n_cells + 1, delta)
    lengths[-1] = max(t - cell_starts[-1], 0.0)
    return float(np.sum(lengths * k[states]))


def occupation_fractions(path):
    """Fraction of [0, horizon] spent in each state."""
    breaks = np.concatenate(([0.0], path.jump_times, [path.horizon]))
    lengths = np.diff(breaks)
    states = path.states_with_initial()
    out = np.zeros(path.n_states)
    np.add.at(out, states, lengths)
    return out / path.horizon


# ----------------------------------------------------------------------
# Monte Carlo exponential functionals
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_paths: int


def _integral_profile(path, k, t_grid, delta):
    """Integral of K along one path at every time in ``t_grid``, one pass.

    Equivalent to calling :func:`integrate_along` per grid time; the
    cumulative sums over constancy intervals are shared instead.
    """
    if delta is None:
        breaks = np.concatenate(([0.0], path.jump_times))
        states = path.states_with_initial()
    else:
        n_cells = int(math.floor(t_grid[-1] / delta + _GRID_FUZZ))
        breaks = np.arange(n_cells + 1) * delta
        states = path.states_with_initial()[
            np.searchsorted(path.jump_times, breaks, side="right")
        ]
    values = k[states]
    cum = np.concatenate(([0.0], np.cumsum(np.diff(breaks) * values[:-1])))
    idx = np.searchsorted(breaks, t_grid, side="right") - 1
    return cum[idx] + (t_grid - breaks[idx]) * values[idx]


def _expfun_block(payload):
    (q, k, i0, t_grid, delta, seed, start, stop) = payload
    horizon = float(t_grid[-1])
    sums = np.zeros(len(t_grid))
    sumsq = np.zeros(len(t_grid))
    for idx in range(start, stop):
        path = simulate_ctmc(q, i0, horizon, chain_stream(seed, idx))
        x = np.exp(_integral_profile(path, k, t_grid, delta))
        sums += x
        sumsq += x * x
    return sums, sumsq


def exp_functional_profile(q, diagonal, i0, t_grid, n_paths, seed, delta=None, workers=1):
    """Monte Carlo means of exp(integral of K) at each time on a grid.

    One ensemble of exact paths is reused for every grid time.  Returns
    ``(means, std_errors)`` arrays aligned with ``t_grid``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    k = np.asarray(diagonal, dtype=float)
    payloads = [
        (q, k, i0, t_grid, delta, seed, start, min(start + BLOCK_PATHS, n_paths))
        for start in range(0, n_paths, BLOCK_PATHS)
    ]
    sums = np.zeros(len(t_grid))
    sumsq = np.zeros(len(t_grid))
    for bsums, bsumsq in map_blocks(_expfun_block, payloads, workers):
        sums += bsums
        sumsq += bsumsq
    means = sums / n_paths
    var = np.maximum(sumsq - n_paths * means * means, 0.0) / (n_paths - 1)
    return means, np.sqrt(var / n_paths)


def exp_functional_mc(q, diagonal, i0, t, n_paths, seed, delta=None, workers=1):
    """Monte Carlo estimate of the exponential functional at one time."""
    means, ses = exp_functional_profile(
        q, diagonal, i0, [float(t)], n_paths, seed, delta=delta, workers=workers
    )
    return MCEstimate(mean=float(means[0]), std_error=float(ses[0]), n_paths=n_paths)


# ----------------------------------------------------------------------
# Couplings
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledPath:
    """Two chain paths evolved independently until they meet, shared after."""

    path_a: RegimePath
    path_b: RegimePath
    meeting_time: object  # float or None


def _independent_until_meet(q, i, j, rng, horizon):
    """Run the independent coupling until the states coincide.

    Returns (meeting_time_or_None, jumps_a, states_a, jumps_b, states_b)
    with all events strictly before or at the meeting time (and within
    ``horizon`` when one is given).  States are constant between jumps,
    so equality can only begin at a jump epoch of one of the chains.
    """
    exit_rates, targets, cumprobs = _transition_tables(q)
    if np.any(exit_rates <= 0):
        raise AbsorbingState("a state has zero exit rate")

    def hold(state):
        return rng.standard_exponential() / exit_rates[state]

    def next_state(state):
        cp = cumprobs[state]
        u = rng.random()
        return int(targets[state][min(np.searchsorted(cp, u, side="right"), cp.size - 1)])

    sa, sb = int(i), int(j)
    jumps_a, states_a, jumps_b, states_b = [], [], [], []
    if sa == sb:
        return 0.0, jumps_a, states_a, jumps_b, states_b
    ta_next = hold(sa)
    tb_next = hold(sb)
    while True:
        t_event = min(ta_next, tb_next)
        if horizon is not None and t_event > horizon:
            return None, jumps_a, states_a, jumps_b, states_b
        if ta_next <= tb_next:
            sa = next_state(sa)
            jumps_a.append(ta_next)
            states_a.append(sa)
            if sa == sb:
                return t_event, jumps_a, states_a, jumps_b, states_b
            ta_next += hold(sa)
        else:
            sb = next_state(sb)
            jumps_b.append(tb_next)
            states_b.append(sb)
            if sa == sb:
                return t_event, jumps_a, states_a, jumps_b, states_b
            tb_next += hold(sb)


def merged_coupling(q, i, j, horizon, rng):
    """Independent coupling merged at the meeting time.

    Both coordinates evolve independently until the first time their
    states coincide; from then on they share every jump.  Each coordinate
    remains distributed as a plain chain path.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    meet, jumps_a, states_a, jumps_b, states_b = _independent_until_meet(q, i, j, rng, horizon)
    if meet is not None:
        start_state = states_a[-1] if jumps_a and jumps_a[-1] == meet else (
            states_b[-1] if jumps_b and jumps_b[-1] == meet else int(i)
        )
        tail = simulate_ctmc(q, start_state, max(horizon - meet, _GRID_FUZZ), rng)
        tail_times = [meet + t for t in tail.jump_times if meet + t <= horizon]
        tail_states = [int(s) for s in tail.post_jump_states[: len(tail_times)]]
        jumps_a = jumps_a + tail_times
        states_a = states_a + tail_states
        jumps_b = jumps_b + tail_times
        states_b = states_b + tail_states
    path_a = RegimePath(int(i), np.asarray(jumps_a), np.asarray(states_a, dtype=np.int64),
                        float(horizon), q.n_states)
    path_b = RegimePath(int(j), np.asarray(jumps_b), np.asarray(states_b, dtype=np.int64),
                        float(horizon), q.n_states)
    return CoupledPath(path_a=path_a, path_b=path_b, meeting_time=meet)


@dataclass(frozen=True)
class CouplingTimes:
    """Sampled coupling times with the fitted exponential tail rate.

    ``theta_fit`` is a least-squares fit of the log empirical survival
    over the upper half of the sample range; ``theta_mle`` is the plain
    exponential maximum-likelihood rate (1/mean).  Both are reported
    because the theoretical tail constant is never available in closed
    form.
    """

    samples: np.ndarray
    theta_fit: float
    theta_mle: float


def _survival_fit(samples):
    """Regress log empirical survival on t over [median, 99th percentile]."""
    n = samples.size
    order = np.sort(samples)
    survival = 1.0 - (np.arange(1, n + 1) / n)
    lo, hi = np.quantile(order, [0.5, 0.99])
    mask = (order >= lo) & (order <= hi) & (survival > 0)
    if mask.sum() < 2:
        return math.inf
    x = order[mask]
    y = np.log(survival[mask])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def coupling_time_mc(q, i, j, n_paths, seed):
    """Sample coupling times of the independent coupling from (i, j)."""
    samples = np.empty(n_paths)
    if int(i) == int(j):
        samples.fill(0.0)
        return CouplingTimes(samples=samples, theta_fit=math.inf, theta_mle=math.inf)
    for idx in range(n_paths):
        rng = chain_stream(seed, idx)
        meet, *_ = _independent_until_meet(q, i, j, rng, None)
        samples[idx] = meet
    theta_mle = float(1.0 / samples.mean())
    return CouplingTimes(samples=samples, theta_fit=_survival_fit(samples), theta_mle=theta_mle)


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------


def path_to_json(path):
    return json.dumps(
        {
            "initial_state": path.initial_state,
            "jump_times": path.jump_times.tolist(),
            "states": path.post_jump_states.tolist(),
            "horizon": path.horizon,
            "n_states": path.n_states,
        },
        sort_keys=True,
    )


def path_from_json(text):
    data = json.loads(text)
    return RegimePath(
        initial_state=int(data["initial_state"]),
        jump_times=np.asarray(data["jump_times"], dtype=float),
        post_jump_states=np.asarray(data["states"], dtype=np.int64),
        horizon=float(data["horizon"]),
        n_states=int(data["n_states"]),
    )


def path_to_csv(path):
    """CSV rows (time, state) starting with the initial state at time 0."""
    lines = ["time,state"]
    lines.append(f"{0.0!r},{path.initial_state}")
    for t, s in zip(path.jump_times, path.post_jump_states):
        lines.append(f"{float(t)!r},{int(s)}")
    return "\n".join(lines) + "\n"


def path_from_csv(text, horizon, n_states):
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    times = np.asarray([float(r[0]) for r in rows])
    states = np.asarray([int(r[1]) for r in rows], dtype=np.int64)
    return RegimePath(
        initial_state=int(states[0]),
        jump_times=times[1:],
        post_jump_states=states[1:],
        horizon=float(horizon),
        n_states=int(n_states),
    )
