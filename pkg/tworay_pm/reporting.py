"""
Reporting - CSV artifacts, the content-digest manifest and the run report
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

NOT_APPLICABLE = "NA"


def format_value(value) -> str:
    """Full-precision, platform-independent text for one CSV cell"""
    if value is None:
        return NOT_APPLICABLE
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass(frozen=True)
class ManifestEntry:
    """One written file; the report lists itself without a digest"""

    path: str
    sha256: str | None
    size: int | None


class Manifest:
    """Every file written into an output directory, with its digest"""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.entries: list[ManifestEntry] = []

    def add(self, path: Path) -> ManifestEntry:
        data = Path(path).read_bytes()
        entry = ManifestEntry(
            path=Path(path).relative_to(self.root).as_posix(),
            sha256=hashlib.sha256(data).hexdigest(),
            size=len(data),
        )
        self.entries = [e for e in self.entries if e.path != entry.path] + [entry]
        return entry

    def add_self(self, name: str) -> ManifestEntry:
        """Entry for a file that cannot contain its own digest"""
        entry = ManifestEntry(path=name, sha256=None, size=None)
        self.entries = [e for e in self.entries if e.path != name] + [entry]
        return entry

    def digests(self) -> dict[str, str]:
        return {e.path: e.sha256 for e in self.entries if e.sha256 is not None}

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        self.add(path)
        return path

    def write_csv(self, name: str, header, rows) -> Path:
        """UTF-8 CSV with LF line endings"""
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        self.add(path)
        log.info("wrote %s", path)
        return path


@dataclass
class RunReport:
    """Everything needed to rerun a study, plus its summary and manifest"""

    command: str
    config_echo: str
    rng: dict
    timings: dict[str, float] = field(default_factory=dict)
    summary: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)
    manifest: list[ManifestEntry] = field(default_factory=list)

    def to_json(self) -> str:
        data = asdict(self)
        return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"

    def write(self, out_dir: Path, name: str = "report.json") -> Path:
        path = Path(out_dir) / name
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")
