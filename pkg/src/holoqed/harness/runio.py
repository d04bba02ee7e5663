"""Artifact plumbing: manifest hashing, CSV/JSON writers, version stamp, output lock."""
import csv
import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from .. import __version__

LOCK_NAME = ".holoqed.lock"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def manifest_hash(manifest):
    """sha256 of the manifest without ``output_dir``, so reruns elsewhere hash alike."""
    body = {k: v for k, v in manifest.items() if k != "output_dir"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows, mhash):
    """Tidy CSV: a ``# manifest_sha256=...`` comment line, the header, then rows."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest_sha256={mhash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    """(manifest hash, header, rows as lists of strings)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        rows = list(csv.reader(fh))
    mhash = first.split("=", 1)[1] if first.startswith("# manifest_sha256=") else None
    return mhash, rows[0], rows[1:]


def version_stamp():
    """``git describe``-style identifier; falls back to the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"holoqed {__version__} ({out.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"holoqed {__version__}"
