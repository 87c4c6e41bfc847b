"""Figure and HTML rendering for magspec run artifacts.

One figure (or echo table) per recognized artifact, plus ``index.html``.
Re-rendering into the same directory overwrites the same filenames, so the
operation is idempotent; the run directory itself is never written to.
"""

from __future__ import annotations

import argparse
import html
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .artifacts import RunArtifacts  # noqa: E402


def _save(fig, out_dir, stem):
    path = Path(out_dir) / f"{stem}.svg"
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path.name


def render_lengths(table, out_dir):
    lengths = table.floats("length")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(lengths, bins=min(24, max(6, len(lengths))), color="#33658a")
    ax.set_xlabel("geodesic length")
    ax.set_ylabel("count")
    ax.set_title("length spectrum (with iterates)")
    return _save(fig, out_dir, "lengths")


def render_spectrum(table, out_dir):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(table.floats("index"), table.floats("eigenvalue"), ".", ms=4,
            color="#2f4b7c")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_title("magnetic Schrodinger spectrum")
    return _save(fig, out_dir, "spectrum")


def render_isospectral(table, out_dir):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    gaps = table.floats("max_gap")
    ax.semilogy(table.floats("cutoff"), [max(g, 1e-17) for g in gaps],
                "o-", color="#886288")
    ax.set_xlabel("Galerkin cutoff")
    ax.set_ylabel("max eigenvalue gap")
    ax.set_title("gauge isospectrality: spectral decay of the gap")
    return _save(fig, out_dir, "isospectral")


def render_brackets(doc, out_dir):
    entries = doc["entries"]
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [f"{e['chart']}\n{e['identity_name']}" for e in entries]
    base = [max(e["residual"], 1e-17) for e in entries]
    fine = [max(e["residual_doubled"], 1e-17) for e in entries]
    xs = range(len(entries))
    ax.semilogy(xs, base, "s", label="base resolution", color="#33658a")
    ax.semilogy(xs, fine, "v", label="doubled resolution", color="#f26419")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, fontsize=6, rotation=45, ha="right")
    ax.set_ylabel("sup-node residual")
    ax.set_title("bracket-identity residuals under resolution doubling")
    ax.legend()
    return _save(fig, out_dir, "brackets")


def render_pestov(table, out_dir):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = table.floats("index")
    ax.semilogy(idx, [max(v, 1e-35) for v in table.floats("rearranged_residual")],
                "o", label="rearranged residual", color="#2f4b7c")
    ax.semilogy(idx, [max(v, 1e-35) for v in table.floats("beta_norm")],
                "^", label="beta norm", color="#f26419")
    ax.set_xlabel("manufactured solution")
    ax.set_title("energy-identity residuals on manufactured transport solutions")
    ax.legend()
    return _save(fig, out_dir, "pestov")


def render_transport(table, out_dir):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = table.floats("index")
    ax.plot(idx, table.floats("periodicity_defect"), "o", label="measured",
            color="#33658a")
    ax.plot(idx, table.floats("expected_defect"), "+", ms=12, label="expected",
            color="#f26419")
    ax.set_xlabel("orbit")
    ax.set_ylabel("holonomy defect mod 2 pi")
    ax.set_title("transport holonomy along closed orbits")
    ax.legend()
    return _save(fig, out_dir, "transport")


def render_xray(table, out_dir):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    lengths = table.floats("length")
    ax.plot(lengths, table.floats("value_f0"), "o", label="function part",
            color="#2f4b7c")
    ax.plot(lengths, table.floats("value_f1"), "s", label="one-form part",
            color="#886288")
    ax.set_xlabel("orbit length")
    ax.set_ylabel("line integral")
    ax.set_title("X-ray transform records")
    ax.legend()
    return _save(fig, out_dir, "xray")


def render_oracle(table, doc, out_dir):
    ks = table.floats("k")
    sig = table.floats("extrapolated")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    resid = [abs(s - k) for s, k in zip(sig, ks)]
    ax.loglog(ks, [max(r, 1e-17) for r in resid], "o", color="#33658a",
              label="sigma_k - |k|")
    if doc is not None:
        slope = doc.get("residual_order")
        fitted = doc.get("fitted_inverse_coeff")
        ax.set_title(f"disk DN asymptotics: fitted 1/|k| coeff {fitted:.6g}, "
                     f"post-fit residual order {slope:.3g}")
    else:
        ax.set_title("disk DN asymptotics")
    ax.set_xlabel("|k|")
    ax.legend()
    return _save(fig, out_dir, "oracle")


def _echo_table(doc, fields):
    cells = []
    for key, label in fields:
        val = doc
        for part in key.split("."):
            val = val.get(part) if isinstance(val, dict) else None
            if val is None:
                break
        cells.append((label, html.escape(str(val))))
    rows = "".join(f"<tr><td>{k}</td><td><code>{v}</code></td></tr>"
                   for k, v in cells)
    return f"<table border='1' cellpadding='4'>{rows}</table>"


def render(run_dir, out_dir):
    """Render every recognized artifact; returns the list of files written."""
    arts = RunArtifacts.load(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = []
    sections = []

    def add(title, figname):
        figures.append(figname)
        sections.append(f"<h2>{html.escape(title)}</h2>"
                        f"<img src='{figname}' style='max-width:720px'>")

    t = arts.tables
    d = arts.documents
    if "lengths.csv" in t:
        add("Length spectrum", render_lengths(t["lengths.csv"], out_dir))
    if "spectrum.csv" in t:
        add("Schrodinger spectrum", render_spectrum(t["spectrum.csv"], out_dir))
    if "isospectral.csv" in t:
        add("Gauge isospectrality", render_isospectral(t["isospectral.csv"],
                                                       out_dir))
    if "brackets.json" in d:
        add("Bracket identities", render_brackets(d["brackets.json"], out_dir))
    if "pestov.csv" in t:
        add("Pestov identity", render_pestov(t["pestov.csv"], out_dir))
    if "transport.csv" in t:
        add("Transport holonomy", render_transport(t["transport.csv"], out_dir))
    if "xray.csv" in t:
        add("X-ray records", render_xray(t["xray.csv"], out_dir))
    if "oracle.csv" in t:
        add("Disk DN oracle", render_oracle(t["oracle.csv"],
                                            d.get("oracle_fit.json"), out_dir))
    if "gauge_decisions.json" in d:
        doc = d["gauge_decisions.json"]
        sections.append("<h2>Gauge decisions</h2>"
                        + _echo_table(doc, [("errors", "classification errors"),
                                            ("counts.gauge", "gauge pairs"),
                                            ("counts.exact", "exact-form pairs"),
                                            ("counts.shift", "flux shifts")]))
    if "recovery.json" in d:
        doc = d["recovery.json"]
        rows = "".join(
            f"<tr><td>{html.escape(str(k))}</td><td><code>{html.escape(str(v))}</code></td></tr>"
            for k, v in [("winding", doc.get("winding")),
                         ("final symbol gap", doc.get("final_gap")),
                         ("electric-jet sups", doc.get("dq_sup")),
                         ("d(da) sups", doc.get("d_da_sup")),
                         ("degree drops", doc.get("degree_drop")),
                         ("obstructions", doc.get("obstructions"))])
        sections.append("<h2>Jet recovery</h2>"
                        f"<table border='1' cellpadding='4'>{rows}</table>")
    if not sections:
        sections.append("<p>No recognized tables in this run; nothing to plot."
                        "</p>")
    if "check_report.json" in d:
        checks = d["check_report.json"]["checks"]
        rows = "".join(
            f"<tr><td>{html.escape(c['name'])}</td>"
            f"<td>{'PASS' if c['passed'] else 'FAIL'}</td></tr>" for c in checks)
        sections.insert(0, "<h2>Invariant checks</h2>"
                        f"<table border='1' cellpadding='4'>{rows}</table>")

    manifest = arts.manifest
    head = (f"<h1>magspec run report</h1>"
            f"<p>subcommand <code>{html.escape(str(manifest.get('subcommand')))}</code>, "
            f"seed <code>{html.escape(str(manifest.get('seed')))}</code>, "
            f"versions <code>{html.escape(str(manifest.get('versions')))}</code></p>")
    (out_dir / "index.html").write_text(
        "<!doctype html><meta charset='utf-8'><title>magspec report</title>"
        + head + "".join(sections))
    return ["index.html"] + figures


def main(argv=None):
    ap = argparse.ArgumentParser(prog="magspec-report")
    ap.add_argument("run_dir")
    ap.add_argument("out_dir")
    args = ap.parse_args(argv)
    try:
        files = render(args.run_dir, args.out_dir)
    except Exception as exc:   # noqa: BLE001 - surface as exit status
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("\n".join(files))
    return 0


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
