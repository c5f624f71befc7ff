"""Exact computations on the switching chain's transition-rate matrix.

Validation and stationarity of the rate matrix, spectral ergodicity
certificates (the rates eta_1, eta_2, eta_3 for the three model
variants), the matrix-exponential oracle for exponential functionals of
the chain, and the closed-form checks for the two-regime delay-OU
example.  Everything here is deterministic linear algebra on small dense
matrices (N <= 64 by configuration cap), so robustness is preferred over
speed throughout.
"""

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DomainViolation,
    NegativeOffDiagonal,
    NotIrreducible,
    RowSumNonzero,
    SingularSystem,
)
from .segment import DelayMeasure

#: eta values below this are within eigenvalue-solver noise and certify nothing.
ETA_TOLERANCE = 1e-8

_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated N x N transition-rate matrix (zero row sums, irreducible)."""

    rates: np.ndarray

    @property
    def n_states(self):
        return self.rates.shape[0]

    def exit_rates(self):
        """Per-state exit rates -q_ii."""
        return -np.diag(self.rates)


def validate_generator(raw):
    """Validate a raw rate matrix and return a :class:`GeneratorMatrix`.

    Off-diagonal entries must be nonnegative, each row must sum to zero
    within 1e-9 (the diagonal is then renormalized to make row sums exact),
    and the digraph of positive off-diagonal rates must be strongly
    connected.

    Raises
    ------
    NegativeOffDiagonal, RowSumNonzero, NotIrreducible
    """
    rates = np.array(raw, dtype=float)
    if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
        raise ValueError("rate matrix must be square")
    n = rates.shape[0]
    if n < 2:
        raise ValueError("rate matrix needs at least two states")
    off = rates.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise NegativeOffDiagonal(f"rate q[{i},{j}] = {rates[i, j]} is negative")
    row_sums = rates.sum(axis=1)
    bad = np.abs(row_sums) > _ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(np.abs(row_sums)))
        raise RowSumNonzero(f"row {i} sums to {row_sums[i]:.3e} (tolerance {_ROW_SUM_TOL})")
    np.fill_diagonal(off, -off.sum(axis=1))
    adjacency = (off > 0) & ~np.eye(n, dtype=bool)
    n_comp, _ = connected_components(adjacency.astype(np.int8), directed=True, connection="strong")
    if n_comp != 1:
        raise NotIrreducible("positive-rate digraph is not strongly connected")
    return GeneratorMatrix(rates=off)


def stationary_distribution(q, return_cond=False):
    """Stationary distribution pi of the chain, solving pi Q = 0, sum pi = 1.

    One row of Q^T is replaced by the all-ones normalization equation and
    the system is LU-solved; the residual ``max |pi Q|`` must come out
    below 1e-12 (one step of iterative refinement is applied if the first
    solve misses it).

    Parameters
    ----------
    q : GeneratorMatrix
    return_cond : bool
        Also return the condition number of the solved system.

    Raises
    ------
    SingularSystem
        If the solve fails or the residual cannot be pushed below 1e-12.
    """
    n = q.n_states
    a = q.rates.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
        # one refinement step; for well-conditioned small systems this is a no-op
        r = b - a @ pi
        pi = pi + np.linalg.solve(a, r)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    pi = np.maximum(pi, 0.0)
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(pi @ q.rates)))
    if residual > 1e-12:
        raise SingularSystem(f"stationary residual {residual:.3e} exceeds 1e-12")
    if return_cond:
        return pi, float(np.linalg.cond(a))
    return pi


def spectral_abscissa_rate(q, diagonal):
    """The rate eta = -max Re(spectrum of Q + diag(K)).

    Positive eta certifies exponential decay of the exponential functional
    of K along the chain.
    """
    k = np.asarray(diagonal, dtype=float)
    if k.shape != (q.n_states,):
        raise ValueError(f"diagonal must have length {q.n_states}")
    eig = np.linalg.eigvals(q.rates + np.diag(k))
    return float(-np.max(eig.real))


class Variant(str, Enum):
    """Which dissipativity bound generated the regime coefficients."""

    ADDITIVE_SUP = "additive_sup"
    MULTIPLICATIVE_INTEGRAL = "multiplicative_integral"
    DISCRETIZED_MULTIPLICATIVE = "discretized_multiplicative"


@dataclass(frozen=True)
class RegimeCoefficients:
    """Per-regime dissipativity coefficients (alpha_i, beta_i) with delay data.

    ``alpha`` may have either sign; ``beta`` must be nonnegative.  The
    delay measure weights how past values enter the one-sided condition.
    """

    alpha: np.ndarray
    beta: np.ndarray
    tau: float
    delay_measure: DelayMeasure
    variant: Variant

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-d and of equal length")
        if np.any(beta < 0):
            raise ValueError("beta entries must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def n_states(self):
        return self.alpha.shape[0]

    @property
    def alpha_min(self):
        return float(np.min(self.alpha))


def lyapunov_diagonal(coeffs):
    """Diagonal perturbation K of the rate matrix for the given variant.

    With ``ahat = min_i alpha_i``:

    * additive_sup:              K_i = alpha_i + exp(-ahat*tau) * beta_i
    * multiplicative_integral:   K_i = alpha_i + beta_i * sum_k w_k exp(ahat*theta_k)
    * discretized_multiplicative:K_i = alpha_i + 4 exp(-ahat*tau) * beta_i

    The integral over the delay measure is the exact finite sum over its
    atoms.
    """
    ahat = coeffs.alpha_min
    if coeffs.variant is Variant.ADDITIVE_SUP:
        factor = math.exp(-ahat * coeffs.tau)
    elif coeffs.variant is Variant.MULTIPLICATIVE_INTEGRAL:
        factor = coeffs.delay_measure.exp_integral(ahat)
    elif coeffs.variant is Variant.DISCRETIZED_MULTIPLICATIVE:
        factor = 4.0 * math.exp(-ahat * coeffs.tau)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown variant {coeffs.variant}")
    return coeffs.alpha + factor * coeffs.beta


def check_remark_conditions(coeffs, q):
    """Alternative certificate flags when the spectral rate is not positive.

    Uses the additive-sup diagonal K_i = alpha_i + exp(-ahat*tau)*beta_i.
    First flag: the pi-weighted mean of K is negative.  Second flag: the
    minimum of -q_ii / K_i over states with K_i > 0 exceeds 1 (vacuously
    true when no K_i is positive).
    """
    k = coeffs.alpha + math.exp(-coeffs.alpha_min * coeffs.tau) * coeffs.beta
    pi = stationary_distribution(q)
    mean_negative = bool(float(k @ pi) < 0.0)
    positive = k > 0
    if not np.any(positive):
        min_ratio = True
    else:
        ratios = q.exit_rates()[positive] / k[positive]
        min_ratio = bool(float(np.min(ratios)) > 1.0)
    return mean_negative, min_ratio


@dataclass(frozen=True)
class ErgodicityReport:
    """Spectral certificate for one coefficient variant."""

    eta: float
    diagonal: np.ndarray
    stationary: np.ndarray
    remark_conditions: tuple
    verdict: bool
    variant: Variant

    def to_dict(self):
        return {
            "eta": self.eta,
            "diagonal": [float(x) for x in self.diagonal],
            "stationary": [float(x) for x in self.stationary],
            "remark_mean_negative": self.remark_conditions[0],
            "remark_min_ratio": self.remark_conditions[1],
            "verdict": self.verdict,
        }


def certify(coeffs, q):
    """Assemble the full :class:`ErgodicityReport` for one variant."""
    diag = lyapunov_diagonal(coeffs)
    eta = spectral_abscissa_rate(q, diag)
    pi = stationary_distribution(q)
    remark = check_remark_conditions(coeffs, q)
    return ErgodicityReport(
        eta=eta,
        diagonal=diag,
        stationary=pi,
        remark_conditions=remark,
        verdict=bool(eta > ETA_TOLERANCE),
        variant=coeffs.variant,
    )


# ----------------------------------------------------------------------
# Matrix exponential: scaling-and-squaring with the degree-13 Pade
# approximant.  The algorithm is fixed (no adaptive degree selection) so
# that oracle values reproduce across implementations to ~1e-12.
# ----------------------------------------------------------------------

_PADE13_THETA = 5.371920351148152
_PADE13_B = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def matrix_exponential(a):
    """exp(A) by scaling-and-squaring with the degree-13 Pade approximant."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    norm = float(np.max(np.sum(np.abs(a), axis=0)))  # induced 1-norm
    if norm == 0.0:
        return np.eye(n)
    s = 0
    if norm > _PADE13_THETA:
        s = int(math.ceil(math.log2(norm / _PADE13_THETA)))
        a = a / (2.0**s)
    b = _PADE13_B
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def feynman_kac_expectation(q, diagonal, t, i):
    """Expected exponential functional of the chain, by matrix exponential.

    Returns entry ``i`` of ``exp(t (Q + diag K)) @ 1``, which equals the
    expectation of ``exp(integral_0^t K_{state(s)} ds)`` for the chain
    started in state ``i``.
    """
    if t < 0:
        raise DomainViolation("t must be nonnegative")
    k = np.asarray(diagonal, dtype=float)
    mat = matrix_exponential(t * (q.rates + np.diag(k)))
    return float(mat[i] @ np.ones(q.n_states))


# ----------------------------------------------------------------------
# Two-regime delay-OU example: closed-form certificate
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Example1Report:
    """Closed-form stability check for the two-regime scalar delay-OU model."""

    alpha: float
    beta: float
    roots: tuple
    satisfied: bool

    @property
    def eta(self):
        """Spectral rate implied by the quadratic roots."""
        return -max(r.real for r in self.roots)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "roots": [[r.real, r.imag] for r in self.roots],
            "satisfied": self.satisfied,
            "eta": self.eta,
        }


def check_example1(a1, b1, a2, b2, gamma):
    """Evaluate the two-regime delay-OU certificate in closed form.

    Computes ``alpha = 2*a1 + (1+exp(-a2))*b1`` and
    ``beta = 2*a2 + (1+exp(-a2))*b2``, the roots of

        z^2 - (alpha+beta-1-gamma) z + alpha*beta - (alpha*gamma + beta),

    and the flag ``satisfied = (alpha+beta < 1+gamma) and
    (beta - beta/alpha > gamma)``.  The flag holds exactly when both
    roots have negative real part (sum/product sign conditions), which is
    asserted away from the boundary.

    Raises
    ------
    DomainViolation
        Unless a1, b1, b2 > 0 and a2 < 0 and gamma > 0.
    """
    if not (a1 > 0 and b1 > 0 and b2 > 0):
        raise DomainViolation("a1, b1, b2 must be positive")
    if not a2 < 0:
        raise DomainViolation("a2 must be negative")
    if not gamma > 0:
        raise DomainViolation("gamma must be positive")
    w = 1.0 + math.exp(-a2)
    alpha = 2.0 * a1 + w * b1
    beta = 2.0 * a2 + w * b2
    trace = alpha + beta - 1.0 - gamma
    det = alpha * beta - (alpha * gamma + beta)
    disc = cmath.sqrt(trace * trace - 4.0 * det)
    roots = ((trace + disc) / 2.0, (trace - disc) / 2.0)
    satisfied = (alpha + beta < 1.0 + gamma) and (beta - beta / alpha > gamma)
    max_re = max(r.real for r in roots)
    # equivalence of the inequality pair with root negativity is exact in
    # exact arithmetic; only guard away from the numerical boundary
    if abs(max_re) > 1e-9:
        assert satisfied == (max_re < 0.0), "certificate/root-sign mismatch"
    return Example1Report(alpha=alpha, beta=beta, roots=roots, satisfied=satisfied)


def characteristic_root(a, b, tol=1e-10):
    """Unique positive root of z = a + b*exp(-z), located by bisection.

    Requires a > 0 and b > 0, where the root exists and is unique: the
    defining function is strictly increasing, negative at 0 and positive
    at a+b.
    """
    if not (a > 0 and b > 0):
        raise DomainViolation("a and b must be positive")
    lo, hi = 0.0, a + b
    f_lo = lo - a - b * math.exp(-lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = mid - a - b * math.exp(-mid)
        if (f_lo <= 0) == (f_mid <= 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
