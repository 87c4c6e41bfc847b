"""Offline report generation from magspec CLI artifact directories.

Reads the JSON/CSV contract of a run directory (``manifest.json`` plus
per-module tables) and renders static SVG figures with an HTML index.  The
renderer never recomputes: every plotted number is read from a source table,
and derived quantities (fitted slopes, verdict counts) are echoed from the
JSON artifacts that already carry them.
"""

__version__ = "0.1.0"

SUPPORTED_SCHEMA = 1
