"""Command dispatch for reproducible experiment runs.

Every command reads one manifest, derives all randomness from the master
seed, writes schema-validated JSON plus CSV artifacts into the output
directory, and exits with: 0 all verdicts pass, 2 configuration error,
3 numerical abort (non-finite state), 4 verdict failure.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .chain import coupling_time_mc, exp_functional_profile
from .config import load_config
from .ergodics import (
    DecaySeries,
    bootstrap_threshold,
    fit_exponential_rate,
    invariant_sampler,
    rho_series,
    stationarity_diagnostic,
    theoretical_rate,
    wasserstein1_sorted,
)
from .errors import ConfigError, NonFiniteValue, SwitchSdeError, ZeroSeparation
from .generator import (
    ETA_TOLERANCE,
    Variant,
    certify,
    check_example1,
    feynman_kac_expectation,
    spectral_abscissa_rate,
    stationary_distribution,
)
from .reporting import (
    decay_csv,
    expfun_csv,
    render_json,
    samples_csv,
    series_payload,
    trajectory_csv,
    write_text,
)
from .sde import simulate, simulate_coupled_synchronous, simulate_coupled_wasserstein
from .streams import chain_stream, noise_stream

ENV_WORKERS = "SWITCHSDE_WORKERS"

_VARIANTS = (
    ("eta1", Variant.ADDITIVE_SUP),
    ("eta2", Variant.MULTIPLICATIVE_INTEGRAL),
    ("eta3", Variant.DISCRETIZED_MULTIPLICATIVE),
)


def _certificates(cfg, q):
    return {key: certify(cfg.regime_coefficients(variant), q) for key, variant in _VARIANTS}


def _example1_report(cfg):
    if cfg.example1 is None:
        return None
    e = cfg.example1
    return check_example1(e["a1"], e["b1"], e["a2"], e["b2"], e["gamma"])


def _relevant_eta(cfg, q):
    """Certificate rate used in verdicts.

    The closed-form two-regime certificate takes precedence when its
    parameters are configured; otherwise the additive-sup spectral rate
    of the declared coefficients is used.
    """
    example = _example1_report(cfg)
    if example is not None:
        return example.eta
    return certify(cfg.regime_coefficients(Variant.ADDITIVE_SUP), q).eta


# ----------------------------------------------------------------------
# Commands: each returns (exit_code, json_text, csv_text_or_None)
# ----------------------------------------------------------------------


def cmd_analyze(cfg, out_dir):
    q = cfg.generator()
    pi, cond = stationary_distribution(q, return_cond=True)
    certs = _certificates(cfg, q)
    example = _example1_report(cfg)
    verdicts = []
    passed = False
    for key, _ in _VARIANTS:
        rep = certs[key]
        if rep.verdict:
            verdicts.append(f"ergodic: certified ({key}>0, {key}={rep.eta:.6g})")
            passed = True
        else:
            verdicts.append(f"not certified by {key} ({key}={rep.eta:.6g})")
    if certs["eta1"].remark_conditions == (True, True):
        verdicts.append("ergodic: certified (stationary-mean conditions)")
        passed = True
    if example is not None:
        if example.satisfied:
            verdicts.append(f"ergodic: certified (two-regime closed form, eta={example.eta:.6g})")
            passed = True
        else:
            verdicts.append("two-regime closed form not satisfied")
    payload = {
        "stationary": [float(x) for x in pi],
        "condition_number": float(cond),
        "certificates": {key: certs[key].to_dict() for key, _ in _VARIANTS},
        "example1": None if example is None else example.to_dict(),
        "verdicts": verdicts,
        "passed": passed,
    }
    text = render_json("analyze", payload)
    write_text(os.path.join(out_dir, "analyze.json"), text)
    return (0 if passed else 4), text, None


def cmd_simulate(cfg, out_dir):
    q = cfg.generator()
    model = cfg.model()
    model.validate(q.n_states)
    xi = cfg.segment("xi")
    traj = simulate(
        model, q, xi, cfg.i0, cfg.horizon, cfg.delta,
        (chain_stream(cfg.seed, 0), noise_stream(cfg.seed, 0)),
    )
    csv_text = trajectory_csv(traj)
    write_text(os.path.join(out_dir, "trajectory.csv"), csv_text)
    payload = {
        "n_steps": int(traj.times.size - 1),
        "delta": cfg.delta,
        "final": [float(x) for x in traj.values[-1]],
        "final_regime": int(traj.regimes[-1]),
    }
    text = render_json("simulate", payload)
    write_text(os.path.join(out_dir, "simulate.json"), text)
    return 0, text, csv_text


def cmd_contract(cfg, out_dir):
    q = cfg.generator()
    model = cfg.model()
    model.validate(q.n_states)
    xi = cfg.segment("xi")
    eta_seg = cfg.segment("xi_b")
    if np.array_equal(xi.values, eta_seg.values):
        raise ZeroSeparation("initial.xi and initial.xi_b coincide")
    series = simulate_coupled_synchronous(
        model, q, xi, eta_seg, cfg.i0, cfg.horizon, cfg.delta, cfg.n_paths, cfg.seed,
        workers=cfg.workers, reduce=True,
    )
    fit = fit_exponential_rate(series, cfg.burn_in, cfg.confidence)
    eta = _relevant_eta(cfg, q)
    informational = eta <= ETA_TOLERANCE
    if informational:
        passed = True
        verdict = f"not certified (eta={eta:.6g}) -- informational"
    else:
        passed = fit.rate >= 0.8 * eta and fit.rate - fit.ci_halfwidth > 0
        verdict = (
            f"fitted rate {fit.rate:.6g} vs threshold {0.8 * eta:.6g} "
            f"({'pass' if passed else 'fail'})"
        )
    csv_text = decay_csv(series)
    write_text(os.path.join(out_dir, "contract.csv"), csv_text)
    payload = {
        "series": series_payload(series),
        "rate_fit": fit.to_dict(),
        "eta": float(eta),
        "threshold": float(0.8 * eta),
        "passed": bool(passed),
        "informational": bool(informational),
        "verdict": verdict,
    }
    text = render_json("contract", payload)
    write_text(os.path.join(out_dir, "contract.json"), text)
    return (0 if passed else 4), text, csv_text


def cmd_wasserstein(cfg, out_dir):
    q = cfg.generator()
    model = cfg.model()
    model.validate(q.n_states)
    xi = cfg.segment("xi")
    eta_seg = cfg.segment("xi_b")
    i = cfg.i0
    j = cfg.i0_b if cfg.i0_b is not None else (cfg.i0 + 1) % q.n_states
    if np.array_equal(xi.values, eta_seg.values) and i == j:
        raise ZeroSeparation("the two initial points coincide")
    ensemble = simulate_coupled_wasserstein(
        model, q, (xi, i), (eta_seg, j), cfg.horizon, cfg.delta, cfg.n_paths, cfg.seed,
        workers=cfg.workers,
    )
    series = rho_series(ensemble)
    fit = fit_exponential_rate(series, cfg.burn_in, cfg.confidence)
    eta = _relevant_eta(cfg, q)
    times = coupling_time_mc(q, i, j, cfg.n_paths, cfg.seed)
    theta = times.theta_fit
    informational = eta <= ETA_TOLERANCE
    if math.isfinite(theta):
        theo = theoretical_rate(theta, eta) if eta > 0 else 0.0
    else:
        theo = eta / 2.0 if eta > 0 else 0.0  # limit of the bound as theta grows
    if informational:
        passed = True
        verdict = f"not certified (eta={eta:.6g}) -- informational"
    else:
        passed = fit.rate >= 0.5 * theo and fit.rate - fit.ci_halfwidth > 0
        verdict = (
            f"fitted rate {fit.rate:.6g} vs threshold {0.5 * theo:.6g} "
            f"({'pass' if passed else 'fail'})"
        )
    csv_text = decay_csv(series)
    write_text(os.path.join(out_dir, "wasserstein.csv"), csv_text)
    payload = {
        "series": series_payload(series),
        "rate_fit": fit.to_dict(),
        "eta": float(eta),
        "theta_fit": float(theta) if math.isfinite(theta) else None,
        "theta_mle": float(times.theta_mle) if math.isfinite(times.theta_mle) else None,
        "theoretical_rate": float(theo),
        "threshold": float(0.5 * theo),
        "passed": bool(passed),
        "informational": bool(informational),
        "verdict": verdict,
    }
    text = render_json("wasserstein", payload)
    write_text(os.path.join(out_dir, "wasserstein.json"), text)
    return (0 if passed else 4), text, csv_text


def cmd_expfun(cfg, out_dir):
    q = cfg.generator()
    if cfg.expfun is None:
        raise ConfigError("expfun", "missing [expfun] section")
    k = np.asarray(cfg.expfun.get("k", []), dtype=float)
    if k.shape != (q.n_states,):
        raise ConfigError("expfun.k", f"needs {q.n_states} entries")
    t_max = float(cfg.expfun.get("t_max", 10.0))
    n_t = int(cfg.expfun.get("n_t", 11))
    deltas = [float(d) for d in cfg.expfun.get("deltas", [0.2, 0.1, 0.05])]
    n_mc = int(cfg.expfun.get("n_paths", cfg.n_paths))
    eta_k = spectral_abscissa_rate(q, k)
    t_grid = np.linspace(0.0, t_max, n_t)
    rows = []
    oracle = [feynman_kac_expectation(q, k, t, cfg.i0) for t in t_grid]
    means, ses = exp_functional_profile(
        q, k, cfg.i0, t_grid, n_mc, cfg.seed, delta=None, workers=cfg.workers
    )
    for t, m, se, o in zip(t_grid, means, ses, oracle):
        rows.append((None, t, m, se, o))
    rates = []
    all_pass = True
    for d in sorted(deltas, reverse=True):
        dm, dse = exp_functional_profile(
            q, k, cfg.i0, t_grid, n_mc, cfg.seed, delta=d, workers=cfg.workers
        )
        for t, m, se, o in zip(t_grid, dm, dse, oracle):
            rows.append((d, t, m, se, o))
        fit = fit_exponential_rate(
            DecaySeries(times=t_grid, means=dm, std_errors=dse, n_paths=n_mc),
            burn_in=0.0,
            confidence=cfg.confidence,
        )
        ok = fit.rate >= eta_k / 2.0 - fit.ci_halfwidth
        all_pass = all_pass and ok
        rates.append(
            {"delta": d, "rate": fit.rate, "ci_halfwidth": fit.ci_halfwidth, "passed": bool(ok)}
        )
    informational = eta_k <= ETA_TOLERANCE
    delta0 = None
    for idx in range(len(rates)):
        if all(r["passed"] for r in rates[idx:]):
            delta0 = rates[idx]["delta"]
            break
    passed = informational or all_pass
    csv_text = expfun_csv(rows)
    write_text(os.path.join(out_dir, "expfun.csv"), csv_text)
    payload = {
        "eta_k": float(eta_k),
        "rates": rates,
        "delta0": delta0,
        "passed": bool(passed),
        "informational": bool(informational),
    }
    text = render_json("expfun", payload)
    write_text(os.path.join(out_dir, "expfun.json"), text)
    return (0 if passed else 4), text, csv_text


def cmd_invariant(cfg, out_dir):
    q = cfg.generator()
    model = cfg.model()
    model.validate(q.n_states)
    inv = cfg.invariant or {}
    t_burn = float(inv.get("t_burn", 20.0 * cfg.tau))
    n_samples = int(inv.get("n_samples", 10000))
    if n_samples < 8:
        raise ConfigError("invariant.n_samples", "need at least 8 samples for block diagnostics")
    stride = float(inv.get("stride", cfg.stride))
    eta = _relevant_eta(cfg, q)
    samp_a = invariant_sampler(
        model, q, cfg.segment("xi"), cfg.i0, cfg.delta, t_burn, n_samples, stride,
        cfg.seed, certified_eta=eta, path_index=0,
    )
    samp_b = invariant_sampler(
        model, q, cfg.segment("xi_b"), cfg.i0, cfg.delta, t_burn, n_samples, stride,
        cfg.seed, certified_eta=eta, path_index=1,
    )
    pi = stationary_distribution(q)
    w1 = wasserstein1_sorted(samp_a.pooled, samp_b.pooled)
    iqr = min(samp_a.pooled.iqr(), samp_b.pooled.iqr())
    w1_threshold = 0.05 * iqr
    z_max = 0.0
    for samp in (samp_a, samp_b):
        se = np.sqrt(pi * (1 - pi) / n_samples)
        z_max = max(z_max, float(np.max(np.abs(samp.frequencies - pi) / se)))
    n_blocks = 4
    block_size = n_samples // n_blocks
    blocks = [samp_a.ordered[b * block_size : (b + 1) * block_size] for b in range(n_blocks)]
    matrix = stationarity_diagnostic(blocks)
    threshold = bootstrap_threshold(samp_a.ordered, block_size, cfg.seed)
    passed = w1 <= w1_threshold and z_max <= 3.0 and float(matrix.max()) <= threshold
    csv_text = samples_csv({"a": samp_a.ordered, "b": samp_b.ordered})
    write_text(os.path.join(out_dir, "invariant_samples.csv"), csv_text)
    payload = {
        "w1_between": float(w1),
        "iqr": float(iqr),
        "w1_threshold": float(w1_threshold),
        "frequencies_a": [float(x) for x in samp_a.frequencies],
        "frequencies_b": [float(x) for x in samp_b.frequencies],
        "stationary": [float(x) for x in pi],
        "max_freq_z": float(z_max),
        "block_matrix_max": float(matrix.max()),
        "block_threshold": float(threshold),
        "passed": bool(passed),
    }
    text = render_json("invariant", payload)
    write_text(os.path.join(out_dir, "invariant.json"), text)
    return (0 if passed else 4), text, csv_text


def cmd_check_example1(cfg, out_dir):
    if cfg.example1 is None:
        raise ConfigError("example1", "missing [example1] section")
    report = _example1_report(cfg)
    payload = {"report": report.to_dict(), "passed": bool(report.satisfied)}
    text = render_json("check_example1", payload)
    write_text(os.path.join(out_dir, "check_example1.json"), text)
    return (0 if report.satisfied else 4), text, None


_COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "contract": cmd_contract,
    "wasserstein": cmd_wasserstein,
    "expfun": cmd_expfun,
    "invariant": cmd_invariant,
    "check-example1": cmd_check_example1,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML or JSON manifest")
    common.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${ENV_WORKERS} or machine parallelism)")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="what to echo on stdout")
    parser = argparse.ArgumentParser(prog="switchsde", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed", "must fit in 64 bits")
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = max(1, args.workers)
        else:
            env = os.environ.get(ENV_WORKERS, "")
            cfg.workers = max(1, int(env)) if env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
        out_dir = args.out or cfg.output
        os.makedirs(out_dir, exist_ok=True)
        code, json_text, csv_text = _COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ZeroSeparation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteValue as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except SwitchSdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(csv_text if args.format == "csv" and csv_text else json_text)
    return code


if __name__ == "__main__":
    sys.exit(main())
