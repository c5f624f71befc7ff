"""Euler-Maruyama integration of path-dependent SDEs in a switching regime.

The scheme freezes drift, diffusion and the observed regime at grid
times: with step ``delta = tau/M``,

    Y((k+1)d) = Y(kd) + b(Y_kd, L(kd)) d + sigma(Y_kd, L(kd)) dW_k,

where ``Y_kd`` is the linear-interpolation window of the last M+1 grid
values and ``L`` is the exact switching chain sampled at grid times (the
chain itself is never discretized).  Trajectory times are always
``k * delta`` computed from integers, so grids never drift.

Monte Carlo drivers are trajectory-parallel: trajectory ``k`` owns chain
stream ``(CHAIN, k)`` and noise stream ``(NOISE, k)`` derived from the
master seed, and block reductions run in fixed order, so results do not
depend on the worker count.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .chain import simulate_ctmc, states_on_grid
from .ergodics import SeriesEnsemble
from .errors import NonFiniteValue
from .generator import RegimeCoefficients, Variant
from .parallel import BLOCK_PATHS, map_blocks
from .segment import DelayMeasure, Segment
from .streams import PROBE, chain_stream, noise_stream, substream


class NoiseKind(str, Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


@dataclass
class ModelSpec:
    """Drift and diffusion of a path-dependent switching diffusion.

    ``drift(segment, regime)`` returns an n-vector and
    ``diffusion(segment, regime)`` an (n, m) matrix; with additive noise
    the diffusion must ignore the segment.  ``drift_batch`` /
    ``diffusion_batch`` are optional vectorized kernels over knot windows
    of shape (paths, M+1) used by the scalar fast path.
    """

    dim: int
    brownian_dim: int
    noise_kind: NoiseKind
    drift: Callable
    diffusion: Callable
    delay_measure: DelayMeasure
    declared_coefficients: Optional[RegimeCoefficients] = None
    lipschitz: Optional[dict] = None
    drift_batch: Optional[Callable] = None
    diffusion_batch: Optional[Callable] = None
    #: drift is linear homogeneous in the window, so a difference of two
    #: solutions follows the same drift recursion applied to the gap
    linear_drift: bool = False

    def supports_batch(self):
        return (
            self.dim == 1
            and self.brownian_dim == 1
            and self.drift_batch is not None
            and self.diffusion_batch is not None
        )

    def validate(self, n_states, probe_seed=0):
        """Probe the model on random segment pairs.

        Checks finite outputs and, for additive noise, that the diffusion
        is independent of the segment argument.
        """
        rng = substream(probe_seed, PROBE, 0)
        tau = self.delay_measure.tau
        for regime in range(n_states):
            for _ in range(3):
                s1 = Segment(rng.normal(size=(5, self.dim)), tau)
                s2 = Segment(rng.normal(size=(5, self.dim)), tau)
                d1 = np.asarray(self.drift(s1, regime), dtype=float)
                g1 = np.asarray(self.diffusion(s1, regime), dtype=float)
                if not (np.all(np.isfinite(d1)) and np.all(np.isfinite(g1))):
                    raise NonFiniteValue(f"model returned non-finite output in regime {regime}")
                if self.noise_kind is NoiseKind.ADDITIVE:
                    g2 = np.asarray(self.diffusion(s2, regime), dtype=float)
                    if not np.array_equal(g1, g2):
                        raise ValueError(
                            "additive noise declared but diffusion depends on the segment"
                        )


@dataclass(frozen=True)
class SwitchingDelayOU:
    """Scalar delay-OU model: drift a_i*x(0) + b_i*x(-lag), constant sigma_i."""

    a: np.ndarray
    b_delay: np.ndarray
    sigma: np.ndarray
    lag: float

    def __post_init__(self):
        for name in ("a", "b_delay", "sigma"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.a.shape == self.b_delay.shape == self.sigma.shape):
            raise ValueError("a, b_delay, sigma must have one entry per regime")
        if self.lag <= 0:
            raise ValueError("lag must be positive")

    @property
    def n_regimes(self):
        return self.a.shape[0]

    # segment-based coefficients -------------------------------------
    def drift(self, seg, regime):
        return self.a[regime] * seg.head() + self.b_delay[regime] * seg.tail()

    def diffusion(self, seg, regime):
        return np.array([[self.sigma[regime]]])

    # vectorized kernels over knot windows ----------------------------
    def drift_batch(self, win, regimes):
        return self.a[regimes] * win[:, -1] + self.b_delay[regimes] * win[:, 0]

    def diffusion_batch(self, win, regimes):
        return self.sigma[regimes]

    def model(self, delay_measure=None):
        if delay_measure is None:
            delay_measure = DelayMeasure.point_mass(self.lag)
        return ModelSpec(
            dim=1,
            brownian_dim=1,
            noise_kind=NoiseKind.ADDITIVE,
            drift=self.drift,
            diffusion=self.diffusion,
            delay_measure=delay_measure,
            declared_coefficients=self.dissipativity_coefficients(),
            lipschitz={"L0": float(np.max(np.abs(self.a) + np.abs(self.b_delay)))},
            drift_batch=self.drift_batch,
            diffusion_batch=self.diffusion_batch,
            linear_drift=True,
        )

    def dissipativity_coefficients(self, variant=Variant.ADDITIVE_SUP):
        """One-sided coefficients for this drift.

        2*d*(a_i*d + b_i*d_tau) <= (2 a_i + |b_i|) d^2 + |b_i| d_tau^2 by
        Young's inequality, so alpha_i = 2 a_i + |b_i| and beta_i = |b_i|.
        """
        return RegimeCoefficients(
            alpha=2.0 * self.a + np.abs(self.b_delay),
            beta=np.abs(self.b_delay),
            tau=self.lag,
            delay_measure=DelayMeasure.point_mass(self.lag),
            variant=variant,
        )


@dataclass(frozen=True)
class Trajectory:
    """One EM path on the grid: values Y(k*delta) and observed regimes."""

    delta: float
    times: np.ndarray
    values: np.ndarray  # (n_steps+1, dim)
    regimes: np.ndarray  # (n_steps+1,)


def em_step(seg, regime, dw, delta, model):
    """One explicit step from the window ``seg`` in the given regime."""
    drift = np.asarray(model.drift(seg, regime), dtype=float).reshape(model.dim)
    diff = np.asarray(model.diffusion(seg, regime), dtype=float).reshape(
        model.dim, model.brownian_dim
    )
    dw = np.asarray(dw, dtype=float).reshape(model.brownian_dim)
    y = seg.head() + drift * delta + diff @ dw
    if not np.all(np.isfinite(y)):
        raise NonFiniteValue("drift/diffusion produced a non-finite state")
    return y


def _n_steps(horizon, delta):
    return max(1, math.ceil(horizon / delta - 1e-9))


def _chain_horizon(n_steps, delta):
    # one spare cell so grid queries at n_steps*delta stay inside the path
    return (n_steps + 1) * delta


def _as_streams(rng):
    if isinstance(rng, tuple):
        return rng
    return rng, rng


def simulate(model, q, xi, i0, horizon, delta, rng):
    """Integrate one trajectory; returns values and regimes on the grid.

    ``rng`` is either a single Generator or a ``(chain_rng, noise_rng)``
    pair.  The chain is simulated exactly once and observed at grid
    times; Brownian increments are N(0, delta I) drawn upfront from the
    noise stream.
    """
    chain_rng, noise_rng = _as_streams(rng)
    n_steps = _n_steps(horizon, delta)
    path = simulate_ctmc(q, i0, _chain_horizon(n_steps, delta), chain_rng)
    regimes = states_on_grid(path, n_steps, delta)
    dw = noise_rng.standard_normal((n_steps, model.brownian_dim)) * math.sqrt(delta)
    values = np.empty((n_steps + 1, model.dim))
    values[0] = xi.head()
    seg = xi
    for k in range(n_steps):
        try:
            y = em_step(seg, int(regimes[k]), dw[k], delta, model)
        except NonFiniteValue as exc:
            raise NonFiniteValue(f"{exc} (step {k}, t={k * delta})") from exc
        seg = seg.push(y)
        values[k + 1] = y
    return Trajectory(
        delta=delta,
        times=np.arange(n_steps + 1) * delta,
        values=values,
        regimes=regimes,
    )


# ----------------------------------------------------------------------
# Vectorized scalar engine (one block of trajectories at a time)
# ----------------------------------------------------------------------


def _regime_grid_block(q, i0, n_steps, delta, seed, start, stop):
    regs = np.empty((stop - start, n_steps + 1), dtype=np.int16)
    for b, idx in enumerate(range(start, stop)):
        path = simulate_ctmc(q, i0, _chain_horizon(n_steps, delta), chain_stream(seed, idx))
        regs[b] = states_on_grid(path, n_steps, delta)
    return regs


def _noise_block(n_steps, delta, seed, start, stop):
    dw = np.empty((stop - start, n_steps))
    for b, idx in enumerate(range(start, stop)):
        dw[b] = noise_stream(seed, idx).standard_normal(n_steps)
    dw *= math.sqrt(delta)
    return dw


def _check_finite(win, step):
    if not np.all(np.isfinite(win)):
        raise NonFiniteValue(f"non-finite state detected at sample step {step}")


def _init_window(knots, count):
    return np.tile(np.asarray(knots, dtype=float).ravel(), (count, 1))


def _advance(model, win, regimes_k, dw_k, delta):
    y = win[:, -1] + model.drift_batch(win, regimes_k) * delta + model.diffusion_batch(
        win, regimes_k
    ) * dw_k
    win[:, :-1] = win[:, 1:]
    win[:, -1] = y


def _sup_abs(win):
    return np.max(np.abs(win), axis=1)


def _second_moment_block(payload):
    model, q, xi_knots, i0, n_steps, delta, every, seed, start, stop = payload
    regs = _regime_grid_block(q, i0, n_steps, delta, seed, start, stop)
    dw = _noise_block(n_steps, delta, seed, start, stop)
    win = _init_window(xi_knots, stop - start)
    ks = range(0, n_steps + 1, every)
    out = np.empty((stop - start, len(ks)))
    out[:, 0] = _sup_abs(win) ** 2
    j = 0
    for k in range(1, n_steps + 1):
        _advance(model, win, regs[:, k - 1], dw[:, k - 1], delta)
        if k % every == 0:
            j += 1
            _check_finite(win, k)
            out[:, j] = _sup_abs(win) ** 2
    return out


def _head_series_block(payload):
    model, q, xi_knots, i0, n_steps, delta, every, seed, start, stop = payload
    regs = _regime_grid_block(q, i0, n_steps, delta, seed, start, stop)
    dw = _noise_block(n_steps, delta, seed, start, stop)
    win = _init_window(xi_knots, stop - start)
    ks = range(0, n_steps + 1, every)
    out = np.empty((stop - start, len(ks)))
    out[:, 0] = win[:, -1]
    j = 0
    for k in range(1, n_steps + 1):
        _advance(model, win, regs[:, k - 1], dw[:, k - 1], delta)
        if k % every == 0:
            j += 1
            _check_finite(win, k)
            out[:, j] = win[:, -1]
    return out


def _reduce_sums(block):
    return block.sum(axis=0), (block * block).sum(axis=0)


def _coupled_diff_block(payload):
    model, q, xi_knots, eta_knots, i0, n_steps, delta, every, seed, start, stop, reduce = payload
    regs = _regime_grid_block(q, i0, n_steps, delta, seed, start, stop)
    ks = range(0, n_steps + 1, every)
    out = np.empty((stop - start, len(ks)))
    if model.noise_kind is NoiseKind.ADDITIVE and model.linear_drift:
        # the noise term is common to both copies and the drift is linear,
        # so the gap window follows the drift recursion on its own: the
        # Brownian stream is never consumed and the series is a bitwise
        # function of the chain path alone
        gap = _init_window(np.asarray(xi_knots) - np.asarray(eta_knots), stop - start)
        out[:, 0] = _sup_abs(gap) ** 2
        j = 0
        for k in range(1, n_steps + 1):
            y = gap[:, -1] + model.drift_batch(gap, regs[:, k - 1]) * delta
            gap[:, :-1] = gap[:, 1:]
            gap[:, -1] = y
            if k % every == 0:
                j += 1
                _check_finite(gap, k)
                out[:, j] = _sup_abs(gap) ** 2
        return _reduce_sums(out) if reduce else out
    dw = _noise_block(n_steps, delta, seed, start, stop)
    win_a = _init_window(xi_knots, stop - start)
    win_b = _init_window(eta_knots, stop - start)
    out[:, 0] = _sup_abs(win_a - win_b) ** 2
    j = 0
    for k in range(1, n_steps + 1):
        _advance(model, win_a, regs[:, k - 1], dw[:, k - 1], delta)
        _advance(model, win_b, regs[:, k - 1], dw[:, k - 1], delta)
        if k % every == 0:
            j += 1
            _check_finite(win_a, k)
            _check_finite(win_b, k)
            out[:, j] = _sup_abs(win_a - win_b) ** 2
    return _reduce_sums(out) if reduce else out


def _wasserstein_block(payload):
    from .chain import merged_coupling  # local to keep the payload import-light

    (model, q, xi_knots, i, eta_knots, j_state, n_steps, delta, every, seed,
     start, stop) = payload
    count = stop - start
    regs_a = np.empty((count, n_steps + 1), dtype=np.int16)
    regs_b = np.empty((count, n_steps + 1), dtype=np.int16)
    for b, idx in enumerate(range(start, stop)):
        coupled = merged_coupling(q, i, j_state, _chain_horizon(n_steps, delta),
                                  chain_stream(seed, idx))
        regs_a[b] = states_on_grid(coupled.path_a, n_steps, delta)
        regs_b[b] = states_on_grid(coupled.path_b, n_steps, delta)
    dw = _noise_block(n_steps, delta, seed, start, stop)
    win_a = _init_window(xi_knots, count)
    win_b = _init_window(eta_knots, count)
    ks = list(range(0, n_steps + 1, every))
    rho = np.empty((count, len(ks)))
    head_a = np.empty((count, len(ks)))
    head_b = np.empty((count, len(ks)))
    rho[:, 0] = _sup_abs(win_a - win_b) + (regs_a[:, 0] != regs_b[:, 0])
    head_a[:, 0] = win_a[:, -1]
    head_b[:, 0] = win_b[:, -1]
    j = 0
    for k in range(1, n_steps + 1):
        _advance(model, win_a, regs_a[:, k - 1], dw[:, k - 1], delta)
        _advance(model, win_b, regs_b[:, k - 1], dw[:, k - 1], delta)
        if k % every == 0:
            j += 1
            _check_finite(win_a, k)
            _check_finite(win_b, k)
            rho[:, j] = _sup_abs(win_a - win_b) + (regs_a[:, k] != regs_b[:, k])
            head_a[:, j] = win_a[:, -1]
            head_b[:, j] = win_b[:, -1]
    return rho, head_a, head_b


def _invariant_block(payload):
    (model, q, xi_knots, i0, n_steps, delta, burn_steps, stride_steps, n_samples, seed,
     path_index) = payload
    regs = _regime_grid_block(q, i0, n_steps, delta, seed, path_index, path_index + 1)[0]
    dw = _noise_block(n_steps, delta, seed, path_index, path_index + 1)[0]
    win = _init_window(xi_knots, 1)
    heads = np.empty(n_samples)
    regimes = np.empty(n_samples, dtype=np.int64)
    j = 0
    for k in range(1, n_steps + 1):
        _advance(model, win, regs[k - 1 : k], dw[k - 1 : k], delta)
        if k > burn_steps and (k - burn_steps) % stride_steps == 0 and j < n_samples:
            heads[j] = win[0, -1]
            regimes[j] = regs[k]
            j += 1
            if j % 64 == 0:
                _check_finite(win, k)
    _check_finite(win, n_steps)
    return heads, regimes


# ----------------------------------------------------------------------
# Per-path fallback for models without batch kernels
# ----------------------------------------------------------------------


def _fallback_series(model, q, xi, eta, i0, n_steps, delta, every, seed, start, stop, squared):
    """Sup-norm (difference) series via the segment API, one path at a time."""
    ks = list(range(0, n_steps + 1, every))
    out = np.empty((stop - start, len(ks)))
    for b, idx in enumerate(range(start, stop)):
        path = simulate_ctmc(q, i0, _chain_horizon(n_steps, delta), chain_stream(seed, idx))
        regimes = states_on_grid(path, n_steps, delta)
        dw = noise_stream(seed, idx).standard_normal((n_steps, model.brownian_dim)) * math.sqrt(delta)
        seg_a, seg_b = xi, eta
        j = 0
        gap = (seg_a.values - seg_b.values) if eta is not None else seg_a.values
        out[b, 0] = float(np.max(np.linalg.norm(np.atleast_2d(gap), axis=1))) ** (2 if squared else 1)
        for k in range(n_steps):
            seg_a = seg_a.push(em_step(seg_a, int(regimes[k]), dw[k], delta, model))
            if eta is not None:
                seg_b = seg_b.push(em_step(seg_b, int(regimes[k]), dw[k], delta, model))
            if (k + 1) % every == 0:
                j += 1
                gap = (seg_a.values - seg_b.values) if eta is not None else seg_a.values
                sup = float(np.max(np.linalg.norm(np.atleast_2d(gap), axis=1)))
                out[b, j] = sup ** 2 if squared else sup
    return out


# ----------------------------------------------------------------------
# Drivers
# ----------------------------------------------------------------------


def _sample_times(n_steps, delta, every):
    return np.arange(0, n_steps + 1, every) * delta


def _resolve_every(model, delta):
    # decay series are sampled at multiples of the delay length
    return max(1, round(model.delay_measure.tau / delta))


def second_moment_series(model, q, xi, i0, horizon, delta, n_paths, seed, workers=1):
    """Monte Carlo means of the squared window sup-norm on a tau-spaced grid."""
    n_steps = _n_steps(horizon, delta)
    every = _resolve_every(model, delta)
    if model.supports_batch():
        payloads = [
            (model, q, xi.values, i0, n_steps, delta, every, seed, s, min(s + BLOCK_PATHS, n_paths))
            for s in range(0, n_paths, BLOCK_PATHS)
        ]
        blocks = map_blocks(_second_moment_block, payloads, workers)
        values = np.concatenate(blocks, axis=0)
    else:
        values = _fallback_series(model, q, xi, None, i0, n_steps, delta, every, seed, 0, n_paths, True)
    ensemble = SeriesEnsemble(times=_sample_times(n_steps, delta, every), values=values)
    return ensemble.to_decay_series()


def head_series(model, q, xi, i0, horizon, delta, n_paths, seed, every=1, workers=1):
    """Per-path head values Y(k*delta) sampled every ``every`` steps.

    The raw material for moment checks on the scheme itself (means,
    variances, increment correlations).
    """
    if not model.supports_batch():
        raise NotImplementedError("head series requires scalar batch kernels")
    n_steps = _n_steps(horizon, delta)
    payloads = [
        (model, q, xi.values, i0, n_steps, delta, every, seed, s, min(s + BLOCK_PATHS, n_paths))
        for s in range(0, n_paths, BLOCK_PATHS)
    ]
    blocks = map_blocks(_head_series_block, payloads, workers)
    return SeriesEnsemble(
        times=_sample_times(n_steps, delta, every), values=np.concatenate(blocks, axis=0)
    )


def simulate_coupled_synchronous(model, q, xi, eta, i0, horizon, delta, n_paths, seed,
                                 workers=1, reduce=False):
    """Synchronously coupled pair: same chain, same increments, different data.

    Returns the per-path series of squared sup-norm gaps sampled at
    multiples of the delay length; aggregate via
    :meth:`SeriesEnsemble.to_decay_series`.  With ``reduce=True`` only the
    running (sum, sum of squares) leave each block, and the aggregated
    :class:`DecaySeries` is returned directly; use this when
    paths x sample-times would not fit in memory.
    """
    from .ergodics import DecaySeries

    n_steps = _n_steps(horizon, delta)
    every = _resolve_every(model, delta)
    times = _sample_times(n_steps, delta, every)
    if model.supports_batch():
        payloads = [
            (model, q, xi.values, eta.values, i0, n_steps, delta, every, seed,
             s, min(s + BLOCK_PATHS, n_paths), reduce)
            for s in range(0, n_paths, BLOCK_PATHS)
        ]
        blocks = map_blocks(_coupled_diff_block, payloads, workers)
        if reduce:
            sums = np.zeros(times.size)
            sumsq = np.zeros(times.size)
            for bsums, bsumsq in blocks:
                sums += bsums
                sumsq += bsumsq
            means = sums / n_paths
            var = np.maximum(sumsq - n_paths * means * means, 0.0) / max(n_paths - 1, 1)
            return DecaySeries(times=times, means=means,
                               std_errors=np.sqrt(var / n_paths), n_paths=n_paths)
        values = np.concatenate(blocks, axis=0)
    else:
        values = _fallback_series(model, q, xi, eta, i0, n_steps, delta, every, seed, 0, n_paths, True)
        if reduce:
            return SeriesEnsemble(times=times, values=values).to_decay_series()
    return SeriesEnsemble(times=times, values=values)


@dataclass(frozen=True)
class WassersteinEnsemble:
    """Coupled-distance series plus the scalar marginals of both copies."""

    series: SeriesEnsemble
    head_a: np.ndarray
    head_b: np.ndarray


def simulate_coupled_wasserstein(model, q, start_a, start_b, horizon, delta, n_paths, seed,
                                 workers=1):
    """Merged chain coupling with shared noise between two initial points.

    ``start_a`` and ``start_b`` are ``(segment, regime)`` pairs.  The
    per-path series is the window sup-norm gap plus the indicator that
    the two grid-frozen regimes differ; its mean bounds the Wasserstein
    distance between the two time-t laws from above.
    """
    xi, i = start_a
    eta, j_state = start_b
    if not model.supports_batch():
        raise NotImplementedError("wasserstein driver requires scalar batch kernels")
    n_steps = _n_steps(horizon, delta)
    every = _resolve_every(model, delta)
    payloads = [
        (model, q, xi.values, int(i), eta.values, int(j_state), n_steps, delta, every, seed,
         s, min(s + BLOCK_PATHS, n_paths))
        for s in range(0, n_paths, BLOCK_PATHS)
    ]
    blocks = map_blocks(_wasserstein_block, payloads, workers)
    rho = np.concatenate([b[0] for b in blocks], axis=0)
    head_a = np.concatenate([b[1] for b in blocks], axis=0)
    head_b = np.concatenate([b[2] for b in blocks], axis=0)
    times = _sample_times(n_steps, delta, every)
    return WassersteinEnsemble(
        series=SeriesEnsemble(times=times, values=rho),
        head_a=head_a,
        head_b=head_b,
    )


def sample_invariant(model, q, xi, i0, delta, burn_steps, n_samples, stride_steps, seed,
                     path_index=0):
    """Heads and regimes sampled along one long trajectory (scalar models)."""
    if not model.supports_batch():
        raise NotImplementedError("invariant sampling requires scalar batch kernels")
    n_steps = burn_steps + n_samples * stride_steps
    payload = (model, q, xi.values, i0, n_steps, delta, burn_steps, stride_steps, n_samples,
               seed, path_index)
    return _invariant_block(payload)


def one_step_head_samples(model, xi, regime, delta, n, seed, increment_index=0):
    """Sample the head value after a single EM step from (xi, regime).

    Uses Brownian increment number ``increment_index`` of each
    trajectory's noise stream, which is how a step taken after ``k``
    earlier steps consumes its randomness; the law must not depend on it.
    """
    out = np.empty(n)
    for idx in range(n):
        draws = noise_stream(seed, idx).standard_normal(
            (increment_index + 1, model.brownian_dim)
        ) * math.sqrt(delta)
        out[idx] = em_step(xi, regime, draws[-1], delta, model)[0]
    return out
