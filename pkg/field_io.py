# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
File formats written and read by the CLI.

- SPFIELD: header ``SPFIELD v1 dim nx [ny [nz]] h [ascii|binary]`` then the
  row-major values (ASCII, or little-endian float64 when binary).
- CSV tables with a header row and repr-formatted floats.
- key=value report files.
- manifest.json describing inputs, seed, tolerances and versions.
"""

import csv
import json
import os
import platform
from datetime import datetime

import numpy as np

from solver_io import ConfigError

SPFIELD_MAGIC = "SPFIELD"
SPFIELD_VERSION = "v1"
TOOLKIT_VERSION = "1.0.0"


def format_value(value):
    """Deterministic text for CSV/report cells (shortest round-trip for floats)."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# --- SPFIELD ---

def write_spfield(path, domain, values, binary=False):
    values = np.asarray(values, dtype=np.float64)
    if values.shape != domain.shape:
        raise ConfigError(f"field shape {values.shape} does not match grid {domain.shape}")
    dims = " ".join(str(n) for n in domain.shape)
    encoding = "binary" if binary else "ascii"
    header = f"{SPFIELD_MAGIC} {SPFIELD_VERSION} {domain.dim} {dims} {repr(float(domain.h))} {encoding}\n"
    flat = np.ascontiguousarray(values).ravel(order="C")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(flat.astype("<f8").tobytes())
        else:
            # One grid row per text line
            rows = flat.reshape(-1, domain.shape[-1])
            for row in rows:
                f.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))
    return path


def read_spfield(path):
    """Returns (header dict, values array shaped (nx, ny[, nz]))."""
    with open(path, "rb") as f:
        raw = f.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ConfigError(f"{path}: missing SPFIELD header line")
    tokens = raw[:newline].decode("ascii", errors="replace").split()
    if len(tokens) < 5 or tokens[0] != SPFIELD_MAGIC or tokens[1] != SPFIELD_VERSION:
        raise ConfigError(f"{path}: not an SPFIELD v1 file")
    try:
        dim = int(tokens[2])
        shape = tuple(int(t) for t in tokens[3:3 + dim])
        h = float(tokens[3 + dim])
    except (ValueError, IndexError):
        raise ConfigError(f"{path}: malformed SPFIELD header")
    rest = tokens[4 + dim:]
    encoding = rest[0] if rest else "ascii"
    payload = raw[newline + 1:]
    n = int(np.prod(shape))
    if encoding == "binary":
        if len(payload) != 8 * n:
            raise ConfigError(f"{path}: expected {8 * n} payload bytes, found {len(payload)}")
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    elif encoding == "ascii":
        values = np.array(payload.decode("ascii").split(), dtype=np.float64)
        if values.size != n:
            raise ConfigError(f"{path}: expected {n} values, found {values.size}")
    else:
        raise ConfigError(f"{path}: unknown SPFIELD encoding '{encoding}'")
    header = {"dim": dim, "shape": shape, "h": h, "encoding": encoding}
    return header, values.reshape(shape)


# --- CSV / reports ---

def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def append_csv_row(path, header, row):
    """Appends one row, writing the header first if the file is new."""
    new_file = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if new_file:
            writer.writerow(header)
        writer.writerow([format_value(v) for v in row])


def read_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_report(path, items):
    """key=value report; nested dicts are flattened with dots, lists with [i]."""
    lines = []

    def flatten(prefix, value):
        if isinstance(value, dict):
            for k, v in value.items():
                flatten(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(value, (list, tuple)):
            lines.append(f"{prefix}.count={len(value)}")
            for i, v in enumerate(value):
                flatten(f"{prefix}[{i}]", v)
        else:
            lines.append(f"{prefix}={format_value(value)}")

    flatten("", items)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def read_report(path):
    result = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if "=" in line:
                key, value = line.split("=", 1)
                result[key] = value
    return result


def write_json(path, data):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_json_default)
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return str(obj)


def write_manifest(out_dir, command, config, seed, tolerances, outputs):
    import scipy

    manifest = {
        "command": command,
        "created": datetime.now().isoformat(timespec="seconds"),
        "inputs": config,
        "seed": seed,
        "tolerances": tolerances,
        "outputs": sorted(outputs),
        "versions": {
            "toolkit": TOOLKIT_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    return write_json(os.path.join(out_dir, "manifest.json"), manifest)
