"""Per-patient metric CSVs and their mean / median summaries."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UsageError
from .metrics import REGIONS, MetricsRecord
from .nifti import atomic_write_bytes

RECORD_FIELDS = ("subject", "region", "dice", "hd95", "penalized")
SUMMARY_FIELDS = ("stat", "region", "dice", "hd95", "n")
STATS = ("mean", "median")


@dataclass(frozen=True)
class SummaryTable:
    stat: str
    rows: dict  # region -> {"dice": value, "hd95": value}
    n: int


def _check_complete(records):
    by_subject = {}
    for rec in records:
        if rec.region not in REGIONS:
            raise UsageError(f"unknown region {rec.region!r} for subject {rec.subject}")
        seen = by_subject.setdefault(rec.subject, [])
        if rec.region in seen:
            raise UsageError(f"subject {rec.subject} has more than one {rec.region} record")
        seen.append(rec.region)
    for subject, seen in by_subject.items():
        missing = [r for r in REGIONS if r not in seen]
        if missing:
            raise UsageError(f"subject {subject} is missing region(s) {', '.join(missing)}")
    return len(by_subject)


def aggregate(records, stat="mean"):
    """Reduce per-patient records to one value per (region, metric)."""
    if stat not in STATS:
        raise UsageError(f"stat must be one of {STATS}, got {stat!r}")
    records = list(records)
    if not records:
        raise UsageError("no records to aggregate")
    n = _check_complete(records)
    reduce = np.mean if stat == "mean" else np.median
    rows = {}
    for region in REGIONS:
        sel = [r for r in records if r.region == region]
        rows[region] = {
            "dice": float(reduce([r.dice for r in sel])),
            "hd95": float(reduce([r.hd95 for r in sel])),
        }
    return SummaryTable(stat, rows, n)


def summary_csv_text(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for region in REGIONS:
        row = table.rows[region]
        w.writerow([table.stat, region, f"{row['dice']:.6g}", f"{row['hd95']:.6g}", table.n])
    return buf.getvalue()


def write_summary_csv(table, path):
    atomic_write_bytes(path, summary_csv_text(table).encode("ascii"))


def format_record(rec):
    # repr keeps full precision: 373.12866 prints as-is
    return [rec.subject, rec.region, repr(float(rec.dice)), repr(float(rec.hd95)),
            "true" if rec.penalized else "false"]


def append_records_csv(records, path):
    """Append records to ``path``; the header is written only for a new file."""
    records = list(records)
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not exists:
        w.writerow(RECORD_FIELDS)
    for rec in records:
        w.writerow(format_record(rec))
    old = b""
    if exists:
        with open(path, "rb") as f:
            old = f.read()
    atomic_write_bytes(path, old + buf.getvalue().encode("utf-8"))


def read_records_csv(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RECORD_FIELDS:
            raise FormatError(f"{path}: expected header {','.join(RECORD_FIELDS)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                pen = {"true": True, "false": False}[row["penalized"].strip().lower()]
                out.append(MetricsRecord(row["subject"], row["region"], float(row["dice"]),
                                         float(row["hd95"]), pen))
            except (KeyError, ValueError, AttributeError) as exc:
                raise FormatError(f"{path}:{line}: malformed record ({exc})") from None
    return out
