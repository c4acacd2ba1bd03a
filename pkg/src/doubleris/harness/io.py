"""Writing experiment tables as CSV or JSON.

Data files are byte-for-byte reproducible from (config, seed): every row
carries the seed and the config hash, and run-specific facts such as the
timestamp and wall time go to a separate ``<experiment>_run.json``.
"""

import csv
import json
import math
import platform
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import _jsonable


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    if x is None:
        return ""
    return str(x)


def _json_value(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _with_hash(rows, config_hash):
    return [{"config_hash": config_hash, **row} for row in rows]


def write_csv(path, rows):
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            if not rows:
                return path
            writer = csv.writer(fh, lineterminator="\n")
            header = list(rows[0])
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(row[k]) for k in header])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_results(result, config, out_dir, fmt="csv", wall_time=None):
    """Write the tables of ``result`` and a run-metadata file.

    Parameters
    ----------
    result : ExperimentResult
    config : ExperimentConfig
    out_dir : path-like
    fmt : {"csv", "json"}
    wall_time : float, optional
        Seconds spent; stored only in the run-metadata file.

    Returns
    -------
    list of Path
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    name = result.experiment
    h = config.config_hash
    written = []
    if fmt == "csv":
        for table, rows in result.tables.items():
            written.append(write_csv(out / f"{name}_{table}.csv", _with_hash(rows, h)))
    else:
        doc = {
            "experiment": name,
            "config_hash": h,
            "seed": config.seed,
            "config": _jsonable(config.tree),
            "metadata": {k: _json_value(v) for k, v in result.metadata.items()},
            "tables": {
                t: [{k: _json_value(v) for k, v in row.items()} for row in rows]
                for t, rows in result.tables.items()
            },
        }
        path = out / f"{name}.json"
        try:
            path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)

    run = {
        "experiment": name,
        "config_hash": h,
        "seed": config.seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": wall_time,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "ao_runs": result.ao_runs,
        "ao_unconverged": result.ao_unconverged,
        "metadata": {k: _json_value(v) for k, v in result.metadata.items()},
        "sweep": _jsonable(config.tree["sweep"]),
        "config": _jsonable(config.tree),
        "files": [p.name for p in written],
    }
    run_path = out / f"{name}_run.json"
    run_path.write_text(json.dumps(run, indent=1) + "\n", encoding="utf-8")
    written.append(run_path)
    return written


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    value = fn(*args, **kwargs)
    return value, time.perf_counter() - t0
