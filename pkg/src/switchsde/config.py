"""Run configuration: a TOML (or JSON) manifest of one experiment.

The manifest is the reproducibility unit: model coefficients, rate
matrix, scheme resolution, analysis windows, master seed and output
directory.  Exactly one of ``scheme.m_steps`` / ``scheme.delta`` may be
given; the step is always recomputed as ``tau / M`` from integers.
"""

import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .generator import GeneratorMatrix, RegimeCoefficients, Variant, validate_generator
from .segment import DelayMeasure, Segment
from .sde import SwitchingDelayOU

MAX_STATES = 64


@dataclass
class RunConfig:
    model_kind: str
    a: np.ndarray
    b_delay: np.ndarray
    sigma: np.ndarray
    tau: float
    delay_atoms: Optional[list]
    q_raw: list
    i0: int
    m_steps: int
    delta: float
    horizon: float
    n_paths: int
    burn_in: float
    stride: float
    confidence: float
    seed: int
    output: str
    xi: object
    xi_b: object
    i0_b: Optional[int]
    coefficients: Optional[dict]
    example1: Optional[dict]
    expfun: Optional[dict]
    invariant: Optional[dict]
    workers: int = 1

    # ------------------------------------------------------------------
    def generator(self) -> GeneratorMatrix:
        try:
            q = validate_generator(self.q_raw)
        except Exception as exc:
            raise ConfigError("chain.q", str(exc)) from exc
        if q.n_states > MAX_STATES:
            raise ConfigError("chain.q", f"more than {MAX_STATES} states unsupported")
        if len(self.a) != q.n_states:
            raise ConfigError("model.a", f"needs {q.n_states} entries to match chain.q")
        if not 0 <= self.i0 < q.n_states:
            raise ConfigError("chain.i0", "initial regime out of range")
        return q

    def delay_measure(self) -> DelayMeasure:
        if self.delay_atoms is None:
            return DelayMeasure.point_mass(self.tau)
        try:
            return DelayMeasure(self.delay_atoms, self.tau)
        except Exception as exc:
            raise ConfigError("model.delay_measure", str(exc)) from exc

    def ou(self) -> SwitchingDelayOU:
        return SwitchingDelayOU(a=self.a, b_delay=self.b_delay, sigma=self.sigma, lag=self.tau)

    def model(self):
        return self.ou().model(delay_measure=self.delay_measure())

    def regime_coefficients(self, variant: Variant) -> RegimeCoefficients:
        if self.coefficients is not None:
            return RegimeCoefficients(
                alpha=np.asarray(self.coefficients["alpha"], dtype=float),
                beta=np.asarray(self.coefficients["beta"], dtype=float),
                tau=self.tau,
                delay_measure=self.delay_measure(),
                variant=variant,
            )
        base = self.ou().dissipativity_coefficients()
        return RegimeCoefficients(
            alpha=base.alpha,
            beta=base.beta,
            tau=self.tau,
            delay_measure=self.delay_measure(),
            variant=variant,
        )

    def segment(self, which="xi") -> Segment:
        raw = self.xi if which == "xi" else self.xi_b
        if isinstance(raw, (int, float)):
            return Segment.constant(float(raw), self.tau, self.m_steps)
        values = np.asarray(raw, dtype=float)
        if values.shape != (self.m_steps + 1,):
            raise ConfigError(
                f"initial.{which}", f"knot list must have m_steps+1 = {self.m_steps + 1} entries"
            )
        return Segment.from_initial(values.reshape(-1, 1), self.tau, self.m_steps)


def _get(table, section, key, default=None, required=False, kind=None):
    sec = table.get(section, {})
    if key not in sec:
        if required:
            raise ConfigError(f"{section}.{key}", "missing required field")
        return default
    value = sec[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{section}.{key}", f"expected {kind}, got {type(value).__name__}")
    return value


def _positive(name, value):
    if not (isinstance(value, (int, float)) and value > 0):
        raise ConfigError(name, "must be a positive number")
    return float(value)


def parse_config(table):
    """Validate a raw mapping and return a :class:`RunConfig`."""
    kind = _get(table, "model", "kind", default="switching_delay_ou")
    if kind != "switching_delay_ou":
        raise ConfigError("model.kind", f"unknown model kind {kind!r}")
    a = _get(table, "model", "a", required=True, kind=list)
    b_delay = _get(table, "model", "b_delay", required=True, kind=list)
    sigma = _get(table, "model", "sigma", required=True, kind=list)
    if not (len(a) == len(b_delay) == len(sigma)):
        raise ConfigError("model.a", "a, b_delay, sigma must have equal length")
    tau = _positive("model.tau", _get(table, "model", "tau", required=True))
    delay_atoms = _get(table, "model", "delay_measure", default=None)

    q_raw = _get(table, "chain", "q", required=True, kind=list)
    i0 = int(_get(table, "chain", "i0", default=0))

    m_steps = _get(table, "scheme", "m_steps", default=None)
    delta_in = _get(table, "scheme", "delta", default=None)
    if (m_steps is None) == (delta_in is None):
        raise ConfigError("scheme.m_steps", "give exactly one of scheme.m_steps / scheme.delta")
    if m_steps is None:
        delta_in = _positive("scheme.delta", delta_in)
        m_steps = max(1, round(tau / delta_in))
    if m_steps != int(m_steps):
        raise ConfigError("scheme.m_steps", "must be a positive integer")
    m_steps = int(m_steps)
    if m_steps < 1:
        raise ConfigError("scheme.m_steps", "must be a positive integer")
    delta = tau / m_steps
    if delta >= 1.0:
        raise ConfigError("scheme.m_steps", f"step tau/M = {delta} must be below 1")
    horizon = _positive("scheme.horizon", _get(table, "scheme", "horizon", required=True))
    n_paths = int(_get(table, "scheme", "n_paths", default=1000))
    if n_paths < 1:
        raise ConfigError("scheme.n_paths", "must be at least 1")

    burn_in = float(_get(table, "analysis", "burn_in", default=tau + 1.0))
    stride = float(_get(table, "analysis", "stride", default=5.0 * tau))
    confidence = float(_get(table, "analysis", "confidence", default=0.95))
    if not 0.5 < confidence < 1.0:
        raise ConfigError("analysis.confidence", "must lie in (0.5, 1)")
    if horizon < tau + burn_in:
        raise ConfigError("scheme.horizon", "must be at least tau + analysis.burn_in")

    seed = int(table.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must fit in 64 bits")
    output = str(table.get("output", "out"))

    xi = _get(table, "initial", "xi", default=1.0)
    xi_b = _get(table, "initial", "xi_b", default=0.0)
    i0_b = _get(table, "initial", "i0_b", default=None)

    coefficients = table.get("coefficients")
    if coefficients is not None:
        for key in ("alpha", "beta"):
            if key not in coefficients or len(coefficients[key]) != len(a):
                raise ConfigError(f"coefficients.{key}", f"needs {len(a)} entries")
    example1 = table.get("example1")
    if example1 is not None:
        for key in ("a1", "b1", "a2", "b2", "gamma"):
            if key not in example1:
                raise ConfigError(f"example1.{key}", "missing required field")
    expfun = table.get("expfun")
    invariant = table.get("invariant")

    return RunConfig(
        model_kind=kind,
        a=np.asarray(a, dtype=float),
        b_delay=np.asarray(b_delay, dtype=float),
        sigma=np.asarray(sigma, dtype=float),
        tau=tau,
        delay_atoms=delay_atoms,
        q_raw=q_raw,
        i0=i0,
        m_steps=m_steps,
        delta=delta,
        horizon=horizon,
        n_paths=n_paths,
        burn_in=burn_in,
        stride=stride,
        confidence=confidence,
        seed=seed,
        output=output,
        xi=xi,
        xi_b=xi_b,
        i0_b=None if i0_b is None else int(i0_b),
        coefficients=coefficients,
        example1=example1,
        expfun=expfun,
        invariant=invariant,
    )


def load_config(path):
    """Read a TOML or JSON manifest from disk."""
    try:
        with open(path, "rb") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    if str(path).endswith(".json"):
        try:
            table = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    else:
        try:
            table = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<file>", f"invalid TOML: {exc}") from exc
    return parse_config(table)
