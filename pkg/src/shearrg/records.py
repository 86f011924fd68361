"""Result records and CSV series with round-trip-safe number formatting."""

import csv
import datetime as _dt
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "{:.17g}"


def build_id():
    """Content hash of the package sources (stands in for a commit id)."""
    h = hashlib.sha1()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _plain(value.real), "im": _plain(value.imag)}
    if hasattr(value, "value") and hasattr(value, "name"):
        return value.value
    return value


@dataclass
class ResultRecord:
    command: str
    inputs: dict
    outputs: dict
    errors: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def create(cls, command, inputs, outputs, errors=None, seed=None):
        prov = {"seed": seed, "build_id": build_id(),
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
        return cls(command, inputs, outputs, errors or {}, prov)

    def to_json(self):
        return json.dumps(_plain(asdict(self)), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def format_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([FLOAT_FORMAT.format(v) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def write_text(path, text):
    if path in (None, "-"):
        print(text, end="" if text.endswith("\n") else "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")
