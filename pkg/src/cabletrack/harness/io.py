"""Run-log CSV and summary JSON."""

import csv
import json

import numpy as np

from .sim import WIDTH, RunLog, column_names

MAGIC = "# cabletrack run log"


def _fmt(v):
    return repr(float(v))


def write_runlog(log, path):
    """One row per control step; floats in shortest round-trip form."""
    names = column_names()
    with open(path, "w", newline="") as fh:
        fh.write(MAGIC + "\n")
        fh.write("# columns: " + ",".join(names) + "\n")
        for key in ("scenario", "stability_gains"):
            fh.write(f"# {key}: " + json.dumps(log.meta.get(key), sort_keys=True) + "\n")
        for note in log.meta.get("notes", []):
            fh.write("# note: " + note + "\n")
        if log.aborted is not None:
            fh.write("# aborted: " + json.dumps(log.aborted, sort_keys=True) + "\n")
        fh.write(",".join(names) + "\n")
        for row in log.data:
            fh.write(",".join(map(_fmt, row)) + "\n")


def read_runlog(path):
    meta = {"notes": []}
    aborted = None
    rows = []
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != MAGIC:
            raise ValueError(f"{path} is not a run log")
        header = None
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                if key in ("scenario", "stability_gains"):
                    meta[key] = json.loads(value)
                elif key == "aborted":
                    aborted = json.loads(value)
                elif key == "note":
                    meta["notes"].append(value)
                continue
            if header is None:
                header = next(csv.reader([line]))
                if header != column_names():
                    raise ValueError("run log columns do not match the schema")
                continue
            rows.append([float(v) for v in line.rstrip("\n").split(",")])
    data = np.array(rows, dtype=float).reshape(-1, WIDTH)
    return RunLog(data=data, meta=meta, aborted=aborted)


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")
