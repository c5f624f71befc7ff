"""Statistical post-processing for decay series and invariant sampling.

Fits exponential rates to Monte Carlo mean series, evaluates the
theoretical coupling rate, computes exact 1-d empirical Wasserstein
distances, and drives long-run invariant-measure sampling with
stationarity diagnostics.  Confidence level is 95% throughout.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    DomainViolation,
    InsufficientData,
    NonPositiveMeans,
    SizeMismatch,
)
from .streams import bootstrap_stream

#: fit window ends at the last point whose mean exceeds this multiple of its SE
NOISE_FLOOR_SE = 10.0


@dataclass(frozen=True)
class DecaySeries:
    """Time-indexed Monte Carlo means with standard errors."""

    times: np.ndarray
    means: np.ndarray
    std_errors: np.ndarray
    n_paths: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.means, dtype=float)
        se = np.asarray(self.std_errors, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "std_errors", se)
        if not (t.shape == m.shape == se.shape):
            raise ValueError("times, means, std_errors must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(se < 0):
            raise ValueError("std_errors must be nonnegative")


@dataclass(frozen=True)
class SeriesEnsemble:
    """Per-path time series; aggregate with :meth:`to_decay_series`."""

    times: np.ndarray
    values: np.ndarray  # (n_paths, n_times)

    def to_decay_series(self):
        n = self.values.shape[0]
        means = self.values.mean(axis=0)
        if n > 1:
            se = self.values.std(axis=0, ddof=1) / math.sqrt(n)
        else:
            se = np.zeros_like(means)
        return DecaySeries(times=self.times, means=means, std_errors=se, n_paths=n)


@dataclass(frozen=True)
class RateFit:
    """Least-squares exponential rate: means ~ exp(intercept - rate * t)."""

    rate: float
    intercept: float
    ci_halfwidth: float
    window: tuple
    n_points: int

    def to_dict(self):
        return {
            "rate": self.rate,
            "intercept": self.intercept,
            "ci_halfwidth": self.ci_halfwidth,
            "window": [self.window[0], self.window[1]],
            "n_points": self.n_points,
        }


def fit_exponential_rate(series, burn_in, confidence=0.95):
    """Fit ``log(mean)`` against ``t`` after a burn-in period.

    The window runs from ``burn_in`` to the last point whose mean exceeds
    ``10 * SE`` (log-means below the Monte Carlo noise floor carry no
    information).  The returned rate is the negated slope; the CI
    half-width comes from the regression standard error at the requested
    confidence.

    Raises
    ------
    NonPositiveMeans
        If a mean inside the window is not positive.
    InsufficientData
        If fewer than 5 usable points remain.
    """
    mask = series.times >= burn_in - 1e-12
    t = series.times[mask]
    m = series.means[mask]
    se = series.std_errors[mask]
    above = m > NOISE_FLOOR_SE * se
    if np.any(above):
        last = int(np.nonzero(above)[0][-1])
        t, m, se = t[: last + 1], m[: last + 1], se[: last + 1]
    if t.size and np.any(m <= 0):
        raise NonPositiveMeans("nonpositive mean inside the fit window")
    if t.size < 5:
        raise InsufficientData(f"only {t.size} usable points after burn-in")
    y = np.log(m)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    dof = t.size - 2
    s2 = float(resid @ resid) / dof
    slope_se = math.sqrt(s2 / float(np.sum((t - t.mean()) ** 2)))
    quant = stats.t.ppf(0.5 + confidence / 2.0, dof)
    return RateFit(
        rate=float(-slope),
        intercept=float(intercept),
        ci_halfwidth=float(quant * slope_se),
        window=(float(t[0]), float(t[-1])),
        n_points=int(t.size),
    )


def theoretical_rate(theta, eta):
    """Contraction rate theta*eta / (2*(theta+eta)) from the coupling bound."""
    if theta <= 0 or eta <= 0:
        raise DomainViolation("theta and eta must be positive")
    return theta * eta / (2.0 * (theta + eta))


# ----------------------------------------------------------------------
# Empirical Wasserstein distance on the line
# ----------------------------------------------------------------------


class EmpiricalMeasure1D:
    """Empirical measure of scalar samples, stored sorted ascending."""

    __slots__ = ("samples",)

    def __init__(self, samples):
        self.samples = np.sort(np.asarray(samples, dtype=float))

    def __len__(self):
        return self.samples.size

    def iqr(self):
        lo, hi = np.quantile(self.samples, [0.25, 0.75])
        return float(hi - lo)


def wasserstein1_sorted(a, b):
    """Exact 1-Wasserstein distance between two equal-size empirical measures.

    For equal sample counts this is the mean absolute difference of the
    sorted samples.
    """
    xa = a.samples if isinstance(a, EmpiricalMeasure1D) else np.sort(np.asarray(a, float))
    xb = b.samples if isinstance(b, EmpiricalMeasure1D) else np.sort(np.asarray(b, float))
    if xa.size != xb.size:
        raise SizeMismatch(f"sample counts differ: {xa.size} vs {xb.size}")
    return float(np.mean(np.abs(xa - xb)))


def rho_series(ensemble):
    """Aggregate coupled-run distances into a decay series.

    The mean at each time is a coupling upper bound for the Wasserstein
    distance between the two time-t laws.
    """
    series = ensemble.series if hasattr(ensemble, "series") else ensemble
    return series.to_decay_series()


# ----------------------------------------------------------------------
# Invariant-measure sampling
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantSample:
    """Marginal samples from one long trajectory, split by regime."""

    per_regime: list
    frequencies: np.ndarray
    pooled: EmpiricalMeasure1D
    ordered: np.ndarray  # heads in sampling (time) order, for block diagnostics
    stride: float
    n_samples: int


def invariant_sampler(model, q, xi, i0, delta, t_burn, n_samples, stride, seed,
                      certified_eta=None, path_index=0, workers=1):
    """Sample the long-run law of (X(t), regime) along one trajectory.

    Records the scalar state and the grid-frozen regime every ``stride``
    time units after ``t_burn``.  ``stride`` must be at least the model
    delay length so consecutive samples decorrelate.  ``path_index``
    selects the trajectory's random streams, so two samplers with the
    same master seed but different indices are independent.
    """
    from . import sde  # runtime import; sde depends on this module's types

    if stride < model.delay_measure.tau - 1e-12:
        raise ValueError("stride must be at least the delay length tau")
    if certified_eta is None or certified_eta <= 0:
        warnings.warn(
            "no positive ergodicity certificate supplied; "
            "the sampled law may not be unique or reachable",
            stacklevel=2,
        )
    stride_steps = max(1, round(stride / delta))
    burn_steps = math.ceil(t_burn / delta - 1e-9)
    heads, regimes = sde.sample_invariant(
        model, q, xi, i0, delta, burn_steps, n_samples, stride_steps, seed,
        path_index=path_index,
    )
    per_regime = [EmpiricalMeasure1D(heads[regimes == s]) for s in range(q.n_states)]
    counts = np.bincount(regimes, minlength=q.n_states)
    return InvariantSample(
        per_regime=per_regime,
        frequencies=counts / counts.sum(),
        pooled=EmpiricalMeasure1D(heads),
        ordered=heads,
        stride=stride_steps * delta,
        n_samples=int(n_samples),
    )


def stationarity_diagnostic(blocks):
    """Pairwise W1 matrix between equal-size sample blocks.

    A drifting sampler shows up as a row of elevated entries for the
    drifted block; compare against :func:`bootstrap_threshold`.
    """
    if len(blocks) < 2:
        raise SizeMismatch("need at least two blocks")
    measures = [b if isinstance(b, EmpiricalMeasure1D) else EmpiricalMeasure1D(b) for b in blocks]
    sizes = {len(m) for m in measures}
    if len(sizes) != 1:
        raise SizeMismatch("blocks must have equal size")
    k = len(measures)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d = wasserstein1_sorted(measures[i], measures[j])
            out[i, j] = out[j, i] = d
    return out


def bootstrap_threshold(samples, block_size, seed, n_boot=200, quantile=0.99):
    """Same-distribution W1 threshold by bootstrap.

    Resamples pairs of blocks of ``block_size`` from the pooled samples
    and returns the requested quantile of their W1 distances; block
    distances above this are evidence of drift.
    """
    pool = np.asarray(samples, dtype=float).ravel()
    rng = bootstrap_stream(seed)
    dists = np.empty(n_boot)
    for b in range(n_boot):
        x = rng.choice(pool, size=block_size, replace=True)
        y = rng.choice(pool, size=block_size, replace=True)
        dists[b] = np.mean(np.abs(np.sort(x) - np.sort(y)))
    return float(np.quantile(dists, quantile))
