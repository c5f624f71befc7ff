"""Delay-window state: grid segments on [-tau, 0] and delay measures.

A segment stores M+1 equally spaced samples of the recent past on
``[-tau, 0]`` (grid spacing ``delta = tau/M``) together with a constant
pre-history value used for queries up to one unit of time before the
window.  Evaluation between knots is linear interpolation; the window
slides one slot per ``push``.
"""

import json

import numpy as np

from .errors import DomainViolation, NonFiniteValue, OutOfDomain, ShapeMismatch


class DelayMeasure:
    """Discrete probability measure on [-tau, 0].

    Parameters
    ----------
    atoms : sequence of (location, weight)
        Locations must lie in ``[-tau, 0]``; weights must be positive.
        Weights are renormalized to total mass 1 on construction.
    tau : float
        Length of the delay interval.
    """

    def __init__(self, atoms, tau):
        if tau <= 0:
            raise DomainViolation("tau must be positive")
        locations = np.asarray([a[0] for a in atoms], dtype=float)
        weights = np.asarray([a[1] for a in atoms], dtype=float)
        if locations.size == 0:
            raise ValueError("delay measure needs at least one atom")
        if np.any(weights <= 0):
            raise ValueError("atom weights must be positive")
        if np.any(locations < -tau - 1e-12) or np.any(locations > 1e-12):
            raise ValueError("atom locations must lie in [-tau, 0]")
        total = weights.sum()
        if abs(total - 1.0) > 1e-12:
            weights = weights / total
        self.locations = np.clip(locations, -tau, 0.0)
        self.weights = weights
        self.tau = float(tau)

    @classmethod
    def point_mass(cls, tau, at=None):
        """Unit mass at ``at`` (defaults to -tau)."""
        loc = -tau if at is None else at
        return cls([(loc, 1.0)], tau)

    def exp_integral(self, rate):
        """Exact value of the finite sum for the integral of e^{rate*theta}."""
        return float(np.sum(self.weights * np.exp(rate * self.locations)))

    def __repr__(self):
        pairs = list(zip(self.locations.tolist(), self.weights.tolist()))
        return f"DelayMeasure(atoms={pairs!r}, tau={self.tau!r})"


class Segment:
    """Sliding delay window with linear interpolation.

    Parameters
    ----------
    values : (M+1, dim) array
        Samples at the grid points ``-M*delta, ..., -delta, 0``.
    tau : float
        Window length; ``delta`` is always constructed as ``tau/M``.
    pre_history : (dim,) array, optional
        Constant value returned for queries in ``[-tau-1, -tau)``.
        Defaults to the oldest knot.
    pushes : int
        Number of pushes applied since the initial window was laid down.

    Segments are immutable: ``push`` returns a new instance.
    """

    __slots__ = ("values", "tau", "delta", "pre_history", "pushes")

    def __init__(self, values, tau, pre_history=None, pushes=0):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] < 2:
            raise ValueError("segment needs M >= 1, i.e. at least two knots")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue("segment values must be finite")
        if tau <= 0:
            raise ValueError("tau must be positive")
        m = values.shape[0] - 1
        self.values = values
        self.tau = float(tau)
        self.delta = float(tau) / m  # delta is defined from integers, never the reverse
        if pre_history is None:
            pre_history = values[0]
        pre_history = np.asarray(pre_history, dtype=float).reshape(values.shape[1])
        if not np.all(np.isfinite(pre_history)):
            raise NonFiniteValue("pre-history must be finite")
        self.pre_history = pre_history
        self.pushes = int(pushes)

    # ------------------------------------------------------------------
    @classmethod
    def from_initial(cls, xi, tau, m_steps, dim=1):
        """Build the initial window from a function or a knot array.

        A callable ``xi`` is sampled at the M+1 grid points; an array is
        taken as the knot values directly.  The pre-history is the value
        at ``-tau``.
        """
        if m_steps < 1:
            raise ValueError("m_steps must be a positive integer")
        delta = float(tau) / int(m_steps)
        if callable(xi):
            thetas = [(-int(m_steps) + i) * delta for i in range(int(m_steps) + 1)]
            rows = [np.asarray(xi(th), dtype=float).reshape(dim) for th in thetas]
            values = np.stack(rows)
        else:
            values = np.atleast_2d(np.asarray(xi, dtype=float))
            if values.shape == (1, int(m_steps) + 1) and dim == 1:
                values = values.T
            if values.shape != (int(m_steps) + 1, dim):
                raise ValueError(
                    f"expected {int(m_steps) + 1} knots of dimension {dim}, "
                    f"got shape {values.shape}"
                )
        return cls(values, tau, pre_history=values[0], pushes=0)

    @classmethod
    def constant(cls, value, tau, m_steps, dim=1):
        """Constant window equal to ``value`` everywhere."""
        value = np.asarray(value, dtype=float).reshape(dim)
        values = np.tile(value, (int(m_steps) + 1, 1))
        return cls(values, tau, pre_history=value, pushes=0)

    # ------------------------------------------------------------------
    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def m_steps(self):
        return self.values.shape[0] - 1

    def head(self):
        """Value at theta = 0 (the current state)."""
        return self.values[-1]

    def tail(self):
        """Value at theta = -tau (the oldest knot)."""
        return self.values[0]

    # ------------------------------------------------------------------
    def value_at(self, theta):
        """Evaluate the window at ``theta`` in ``[-tau-1, 0]``.

        Linear interpolation between knots on ``[-tau, 0]``; the constant
        pre-history for ``theta`` in ``[-tau-1, -tau)``.  Queries within a
        relative 1e-9 of a knot snap to the stored value, so grid-aligned
        evaluations are exact.
        """
        if theta > 1e-12 or theta < -self.tau - 1.0 - 1e-12:
            raise OutOfDomain(f"theta={theta} outside [-tau-1, 0]")
        if theta < -self.tau:
            return self.pre_history.copy()
        u = (theta + self.tau) / self.delta
        nearest = round(u)
        if abs(u - nearest) < 1e-9 and 0 <= nearest <= self.m_steps:
            return self.values[int(nearest)].copy()
        i = min(int(np.floor(u)), self.m_steps - 1)
        i = max(i, 0)
        frac = u - i
        return self.values[i] + frac * (self.values[i + 1] - self.values[i])

    def sup_norm(self):
        """Supremum over [-tau, 0] of the Euclidean norm.

        Along each interval the interpolant is a chord, so |.|^2 is a
        quadratic in the interpolation parameter with nonnegative leading
        coefficient |b-a|^2: its interior critical point is a minimum and
        the per-interval maximum sits at a knot.  The knot maximum is
        therefore the exact supremum for every dimension.
        """
        if self.dim == 1:
            return float(np.max(np.abs(self.values)))
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def push(self, new_value):
        """Slide the window by one slot, appending ``new_value`` at theta=0.

        The original pre-history is kept while any initial-window knot
        remains in the window (the first M pushes); afterwards the evicted
        knot becomes the new pre-history.
        """
        new_value = np.asarray(new_value, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(new_value)):
            raise NonFiniteValue("pushed value must be finite")
        values = np.empty_like(self.values)
        values[:-1] = self.values[1:]
        values[-1] = new_value
        pushes = self.pushes + 1
        if pushes > self.m_steps:
            pre = self.values[0]
        else:
            pre = self.pre_history
        return Segment(values, self.tau, pre_history=pre, pushes=pushes)

    # ------------------------------------------------------------------
    def to_json(self):
        """Serialize to JSON; round-trips finite doubles exactly."""
        return json.dumps(
            {
                "tau": self.tau,
                "delta": self.delta,
                "values": self.values.tolist(),
                "pre_history": self.pre_history.tolist(),
                "pushes": self.pushes,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(
            np.asarray(data["values"], dtype=float),
            data["tau"],
            pre_history=np.asarray(data["pre_history"], dtype=float),
            pushes=data.get("pushes", 0),
        )

    def __repr__(self):
        return (
            f"Segment(dim={self.dim}, tau={self.tau}, delta={self.delta}, "
            f"m_steps={self.m_steps}, pushes={self.pushes})"
        )


def integrate_squared_diff(a, b, measure):
    """Integral of |a(theta)-b(theta)|^2 against a delay measure.

    Exact finite sum over the measure's atoms; atoms need not sit on the
    grid because the interpolant defines off-grid values.
    """
    if a.dim != b.dim or a.tau != b.tau or a.delta != b.delta:
        raise ShapeMismatch("segments must share (dim, tau, delta)")
    total = 0.0
    for loc, w in zip(measure.locations, measure.weights):
        gap = a.value_at(loc) - b.value_at(loc)
        total += w * float(gap @ gap)
    return total


def difference(a, b):
    """Knot-wise difference segment a - b (same window geometry)."""
    if a.dim != b.dim or a.tau != b.tau or a.delta != b.delta:
        raise ShapeMismatch("segments must share (dim, tau, delta)")
    return Segment(
        a.values - b.values,
        a.tau,
        pre_history=a.pre_history - b.pre_history,
        pushes=min(a.pushes, b.pushes),
    )
