"""CSV and JSON persistence for event batches, histograms and reports.

Files carry provenance in ``# key=value`` header lines so that each one can
be traced back to the state, seed and configuration that produced it.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .analysis import RecoveryReport
from .detection import CentroidHistogram
from .sampler import EventBatch
from .states import state_from_dict

__all__ = [
    "write_events",
    "read_events",
    "write_histogram",
    "read_histogram",
    "write_report",
    "write_rows",
    "read_rows",
]

# 17 significant digits round-trip any float64 exactly
_FLOAT = "%.17g"


def _header_lines(meta: dict) -> list[str]:
    lines = []
    for key, value in meta.items():
        text = json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else str(value)
        lines.append(f"# {key}={text}\n")
    return lines


def _parse_header(path: Path) -> tuple[dict, int]:
    meta = {}
    skip = 0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            skip += 1
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    return meta, skip


def write_events(batch: EventBatch, path, extra: dict | None = None) -> Path:
    """Write an event batch as CSV, one event per row, columns x1..xN in lambda."""
    path = Path(path)
    meta = {
        "state": batch.state_descriptor,
        "seed": batch.seed,
        "n_photons": batch.n_photons,
        "n_events": batch.n_events,
    }
    meta.update(extra or {})
    cols = ",".join(f"x{i + 1}" for i in range(batch.n_photons))
    with open(path, "w", newline="") as fh:
        fh.writelines(_header_lines(meta))
        np.savetxt(fh, batch.positions, delimiter=",", fmt=_FLOAT, header=cols, comments="")
    return path


def read_events(path, *, verify: bool = False) -> EventBatch:
    """Read an event CSV written by :func:`write_events`.

    With ``verify=True`` the batch is regenerated from the recorded state and
    seed and compared value for value.
    """
    path = Path(path)
    meta, skip = _parse_header(path)
    pos = np.loadtxt(path, delimiter=",", skiprows=skip + 1, ndmin=2)
    state = json.loads(meta["state"]) if meta.get("state", "None") != "None" else None
    seed = int(meta["seed"]) if meta.get("seed", "None") != "None" else None
    batch = EventBatch(pos, seed=seed, state_descriptor=state)
    if verify:
        from .sampler import sample_events

        if state is None or seed is None:
            raise ValueError("file carries no state/seed provenance to verify against")
        again = sample_events(state_from_dict(state), batch.n_events, seed)
        if not np.array_equal(again.positions, batch.positions):
            raise ValueError(f"{path}: events do not match regeneration from recorded seed")
    return batch


def write_histogram(hist: CentroidHistogram, path, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = dict(hist.meta)
    meta["excluded"] = hist.excluded
    meta["bin_width"] = hist.bin_width
    meta.update(extra or {})
    with open(path, "w", newline="") as fh:
        fh.writelines(_header_lines(meta))
        writer = csv.writer(fh)
        writer.writerow(["bin_center_lambda", "count"])
        for x, c in zip(hist.bin_centers, hist.counts):
            writer.writerow([_FLOAT % x, int(c)])
    return path


def read_histogram(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Return (bin centres, counts, header metadata) of a histogram CSV."""
    path = Path(path)
    meta, skip = _parse_header(path)
    data = np.loadtxt(path, delimiter=",", skiprows=skip + 1, ndmin=2)
    return data[:, 0], data[:, 1].astype(np.int64), meta


def write_report(report: RecoveryReport, json_path, csv_path=None) -> Path:
    """Report summary as JSON plus the per-point table as a companion CSV."""
    json_path = Path(json_path)
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    csv_path = Path(csv_path) if csv_path else json_path.with_suffix(".csv")
    np.savetxt(
        csv_path,
        report.points_table(),
        delimiter=",",
        fmt=_FLOAT,
        header="X,reference,raw_estimate,scaled_estimate",
        comments="",
    )
    return json_path


def write_rows(path, columns: list[str], rows, meta: dict | None = None) -> Path:
    """Generic table writer used by the experiment commands."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.writelines(_header_lines(meta or {}))
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_FLOAT % v if isinstance(v, float) else v for v in row])
    return path


def read_rows(path) -> tuple[list[dict], dict]:
    path = Path(path)
    meta, skip = _parse_header(path)
    with open(path) as fh:
        for _ in range(skip):
            next(fh)
        rows = list(csv.DictReader(fh))
    return rows, meta
