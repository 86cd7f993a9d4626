"""File formats: mixture JSON, data CSV, partition CSV, run manifests.

Partition CSV files carry a header ``x0,...,x{d-1},weight,label`` preceded
by ``#`` comment lines holding the carrier kind, the cluster table and the
manifest hash.  Floats are written with ``repr`` so a file read back
reproduces the in-memory partition bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .density_models import NormalMixture
from .errors import InputError
from .mode_seek import UNASSIGNED, Partition

__all__ = [
    "RunManifest",
    "atomic_write",
    "load_mixture",
    "save_mixture",
    "load_json",
    "write_json",
    "load_data",
    "data_to_csv",
    "partition_to_csv",
    "partition_from_csv",
    "load_partition",
    "parse_grid_spec",
    "config_hash",
]


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical(config).encode()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class RunManifest:
    """Provenance of one command invocation; outputs quote its hash."""

    command: str
    inputs: list
    config: dict
    seed: int | None
    version: str
    started: str = field(default_factory=_now)
    finished: str | None = None

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def hash(self) -> str:
        body = {k: v for k, v in asdict(self).items() if k != "finished"}
        return config_hash(body)[:16]

    def finish(self) -> None:
        self.finished = _now()

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["config_hash"] = self.config_hash
        doc["hash"] = self.hash
        return doc


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def write_json(path, doc) -> None:
    atomic_write(path, json.dumps(doc, indent=2, default=_json_default) + "\n")


def load_mixture(path) -> NormalMixture:
    return NormalMixture.from_dict(load_json(path))


def save_mixture(path, mixture: NormalMixture) -> None:
    write_json(path, mixture.to_dict())


# ---------------------------------------------------------------------------
# Data CSV (headerless, one point per row)
# ---------------------------------------------------------------------------


def load_data(path) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except ValueError as exc:
        raise InputError(f"{path}: malformed data CSV ({exc})") from None
    if X.size == 0:
        raise InputError(f"{path}: no data rows")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: data contains non-finite values")
    return X


def data_to_csv(X, manifest_hash: str | None = None) -> str:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lines = [f"# manifest={manifest_hash}"] if manifest_hash else []
    lines += [",".join(repr(float(v)) for v in row) for row in X]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Partition CSV
# ---------------------------------------------------------------------------


def partition_to_csv(part: Partition, manifest_hash: str | None = None) -> str:
    d = part.atoms.shape[1]
    buf = io.StringIO()
    buf.write(f"# carrier={part.carrier}\n")
    buf.write("# clusters=" + ",".join(str(c) for c in part.cluster_ids) + "\n")
    if manifest_hash:
        buf.write(f"# manifest={manifest_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{k}" for k in range(d)] + ["weight", "label"])
    for atom, w, lab in zip(part.atoms, part.weights, part.labels):
        writer.writerow([repr(float(v)) for v in atom] + [repr(float(w)), int(lab)])
    return buf.getvalue()


def partition_from_csv(text: str, source: str = "<partition>") -> Partition:
    meta = {}
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        if header is None:
            header = next(csv.reader([line]))
            if len(header) < 3 or header[-2:] != ["weight", "label"]:
                raise InputError(f"{source}: header must end with 'weight,label'")
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise InputError(f"{source}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        rows.append(fields)
    if header is None or not rows:
        raise InputError(f"{source}: no partition rows")
    try:
        atoms = np.array([[float(v) for v in r[:-2]] for r in rows])
        weights = np.array([float(r[-2]) for r in rows])
        labels = np.array([int(r[-1]) for r in rows])
    except ValueError as exc:
        raise InputError(f"{source}: malformed partition entry ({exc})") from None
    if "clusters" in meta:
        ids = [int(c) for c in meta["clusters"].split(",") if c.strip()]
    else:
        ids = sorted(set(labels[labels != UNASSIGNED].tolist()))
    carrier = meta.get("carrier", "sample")
    return Partition(atoms, weights, labels, {c: None for c in ids}, carrier)


def load_partition(path) -> Partition:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    return partition_from_csv(text, str(path))


# ---------------------------------------------------------------------------
# Flag parsing helpers
# ---------------------------------------------------------------------------


def parse_grid_spec(spec: str) -> list:
    """``"lo:hi:steps,lo:hi:steps"`` -> list of 1-D axes (one per dimension)."""
    axes = []
    for k, part in enumerate(spec.split(",")):
        bits = part.split(":")
        if len(bits) != 3:
            raise InputError(f"grid axis {k} must be 'lo:hi:steps', got {part!r}")
        try:
            lo, hi, steps = float(bits[0]), float(bits[1]), int(bits[2])
        except ValueError:
            raise InputError(f"grid axis {k} has non-numeric bounds or step count: {part!r}") from None
        if steps < 1 or not hi >= lo:
            raise InputError(f"grid axis {k} needs hi >= lo and at least one step: {part!r}")
        axes.append(np.linspace(lo, hi, steps))
    return axes
