"""Loading and validating a magspec run directory."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import SUPPORTED_SCHEMA


class SchemaError(RuntimeError):
    """Run directory does not match the supported artifact schema version."""

    def __init__(self, found, supported):
        super().__init__(f"manifest schema_version {found} not supported "
                         f"(renderer supports {supported})")
        self.found = found
        self.supported = supported


@dataclass
class Table:
    """One CSV table: header plus string-valued rows (verbatim cells)."""

    name: str
    header: list
    rows: list

    def column(self, key):
        idx = self.header.index(key)
        return [row[idx] for row in self.rows]

    def floats(self, key):
        return [float(cell) for cell in self.column(key)]


@dataclass
class RunArtifacts:
    run_dir: Path
    manifest: dict
    tables: dict = field(default_factory=dict)
    documents: dict = field(default_factory=dict)

    @classmethod
    def load(cls, run_dir):
        run_dir = Path(run_dir)
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no manifest.json in {run_dir}")
        manifest = json.loads(manifest_path.read_text())
        version = manifest.get("schema_version")
        if version != SUPPORTED_SCHEMA:
            raise SchemaError(version, SUPPORTED_SCHEMA)
        arts = cls(run_dir=run_dir, manifest=manifest)
        for name in manifest.get("artifacts", []):
            path = run_dir / name
            if not path.exists():
                continue             # missing optional tables are tolerated
            if name.endswith(".csv"):
                with open(path, newline="") as fh:
                    rows = list(csv.reader(fh))
                if rows:
                    arts.tables[name] = Table(name, rows[0], rows[1:])
            elif name.endswith(".json"):
                arts.documents[name] = json.loads(path.read_text())
        return arts
