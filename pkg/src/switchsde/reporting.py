"""Deterministic report emission: schema-validated JSON and plain CSV.

Floats are serialized through ``repr`` (shortest round-trip form), so a
rerun with the same seed produces byte-identical files.
"""

import json
from importlib import resources

import jsonschema

SCHEMA_VERSION = "1"

with resources.files("switchsde.schemas").joinpath("report-v1.schema.json").open("rb") as fh:
    _SCHEMA = json.load(fh)


def render_json(kind, payload):
    """Wrap a payload with schema metadata, validate, and render canonically."""
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(payload)
    jsonschema.validate(doc, _SCHEMA)
    # allow_nan=False keeps the output strict JSON; non-finite values must
    # be mapped to null by the caller before they reach a report
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(x):
    return repr(float(x))


def series_payload(series):
    """Decay series as a JSON-ready mapping."""
    return {
        "times": [float(t) for t in series.times],
        "means": [float(m) for m in series.means],
        "std_errors": [float(s) for s in series.std_errors],
        "n_paths": int(series.n_paths),
    }


def decay_csv(series):
    """Decay series as CSV with columns t, mean, std_error, n."""
    lines = ["t,mean,std_error,n"]
    for t, m, se in zip(series.times, series.means, series.std_errors):
        lines.append(f"{_fmt(t)},{_fmt(m)},{_fmt(se)},{series.n_paths}")
    return "\n".join(lines) + "\n"


def trajectory_csv(traj):
    """Trajectory rows: time, regime, then one column per state component."""
    dim = traj.values.shape[1]
    header = "time,regime," + ",".join(f"x{k}" for k in range(dim))
    lines = [header]
    for t, r, row in zip(traj.times, traj.regimes, traj.values):
        lines.append(f"{_fmt(t)},{int(r)}," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def samples_csv(label_to_samples):
    """Invariant-measure samples: one labelled column set (label, value)."""
    lines = ["label,value"]
    for label, samples in label_to_samples.items():
        for v in samples:
            lines.append(f"{label},{_fmt(v)}")
    return "\n".join(lines) + "\n"


def expfun_csv(rows):
    """Exponential-functional table: delta ('cont' for continuous), t, mean, se, oracle."""
    lines = ["delta,t,mean,std_error,oracle"]
    for delta, t, mean, se, oracle in rows:
        dcol = "cont" if delta is None else _fmt(delta)
        ocol = "" if oracle is None else _fmt(oracle)
        lines.append(f"{dcol},{_fmt(t)},{_fmt(mean)},{_fmt(se)},{ocol}")
    return "\n".join(lines) + "\n"


def write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
