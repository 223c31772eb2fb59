"""Report files: CSV and JSON-lines record streams plus a plot-data JSON."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import fields
from pathlib import Path

from .nbody import ErrorRecord

SCHEMA_VERSION = 1
RECORD_FIELDS = [f.name for f in fields(ErrorRecord)]
_INT_FIELDS = {"N", "n_modes"}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            d = r.as_dict()
            w.writerow([_fmt(d[k]) for k in RECORD_FIELDS])


def read_records_csv(path) -> list[ErrorRecord]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# schema_version={SCHEMA_VERSION}":
            raise ValueError(f"{path}: unsupported or missing schema header {first!r}")
        out = []
        for row in csv.DictReader(fh):
            kw = {}
            for k in RECORD_FIELDS:
                v = row[k]
                if k in _INT_FIELDS:
                    kw[k] = int(v)
                elif k == "leak_flag":
                    kw[k] = v == "true"
                elif k == "status":
                    kw[k] = v
                else:
                    kw[k] = float(v)
            out.append(ErrorRecord(**kw))
        return out


def write_records_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            d = {"schema_version": SCHEMA_VERSION}
            d.update({k: _json_value(v) for k, v in r.as_dict().items()})
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def plot_data(records, fits) -> dict:
    ok = [r for r in records if r.status in ("ok", "under-truncated")]
    series_t: dict = {}
    series_n: dict = {}
    for r in ok:
        key_t = f"N={r.N},beta={r.beta!r}"
        s = series_t.setdefault(key_t, {"N": r.N, "beta": r.beta, "t": [], "error2": [],
                                        "trace_gamma": [], "kinetic": []})
        key_n = f"t={r.t!r},beta={r.beta!r}"
        m = series_n.setdefault(key_n, {"t": r.t, "beta": r.beta, "N": [], "error2": [],
                                        "normalized_error2": [], "trace_gamma": [], "kinetic": []})
        for k in ("t", "error2", "trace_gamma", "kinetic"):
            s[k].append(getattr(r, k))
        for k in ("N", "error2", "normalized_error2", "trace_gamma", "kinetic"):
            m[k].append(getattr(r, k))
    return {"schema_version": SCHEMA_VERSION, "time_series": list(series_t.values()),
            "n_series": list(series_n.values()), "fits": [f.as_dict() for f in fits]}


def emit_report(records, fits, outdir, prefix: str = "bogodyn") -> dict[str, Path]:
    """Write ``<prefix>_records.csv``, ``<prefix>_records.jsonl`` and ``<prefix>_plot.json``."""
    records = list(records)
    if not records:
        raise ValueError("refusing to write a report with no records")
    outdir = Path(outdir)
    paths = {"csv": outdir / f"{prefix}_records.csv",
             "jsonl": outdir / f"{prefix}_records.jsonl",
             "plot": outdir / f"{prefix}_plot.json"}
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        write_records_csv(records, paths["csv"])
        write_records_jsonl(records, paths["jsonl"])
        with open(paths["plot"], "w") as fh:
            json.dump(plot_data(records, fits), fh, indent=1, sort_keys=True, default=_json_value)
    except OSError as exc:
        raise OSError(f"writing report under {outdir}: {exc}") from exc
    return paths
