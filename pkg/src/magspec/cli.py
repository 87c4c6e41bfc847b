"""Command-line front end: experiment orchestration and artifact persistence.

Each run writes one output directory containing per-module CSV/JSON tables
plus a ``manifest.json`` (written last) echoing the configuration, the seed,
and package versions.  Numeric CSV fields are formatted with 17 significant
digits, so identical configuration and seed reproduce byte-identical tables.

Subcommands: lengths, brackets, pestov, transport, schrodinger, gauge,
xray, steklov-symbol, steklov-oracle, recover-jets.  ``--check`` re-runs
the bundled invariant suite (writing every standard artifact) and exits
nonzero on any failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cosphere import (AffineFiberFunction, bracket_residuals,
                       pestov_residual, solve_transport_along_orbit)
from .dynamics import build_genus2_group, enumerate_closed_geodesics, torus_geodesic
from .errors import MagspecError
from .fields import FourierField
from .geometry import (hyperbolic_halfplane_chart, make_flat_torus,
                       make_general_chart, make_isothermal_chart)
from .schrodinger import (GaugeFunction, PotentialData, assemble_schrodinger,
                          eigenvalues, gauge_conjugate, isospectrality_check,
                          random_real_field)
from .steklov import (BoundaryGrid, asymptotic_match, disk_dn_oracle,
                      disk_jets, jet_recovery, symbol_factorize)
from .xray import gauge_equivalence_decision, xray_record

TWO_PI = 2 * np.pi
SCHEMA_VERSION = 1


def fmt(x):
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell if isinstance(cell, str) else fmt(cell)
                              for cell in row) + "\n")


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (artifact filenames, failure messages)
# ---------------------------------------------------------------------------

def run_lengths(out, cfg, rng):
    group = build_genus2_group()
    systole = min(2 * math.acosh(abs(np.trace(g)) / 2) for g in group.generators)
    # --cutoff doubles as the length cutoff for this subcommand
    l_max = float(cfg.get("l_max", cfg.get("cutoff",
                           float(cfg.get("l_max_factor", 2.0)) * systole)))
    budget = int(cfg.get("word_budget", 12))
    spec = enumerate_closed_geodesics(group, l_max, word_budget=budget)
    spec.export_csv(out / "lengths.csv")
    write_json(out / "lengths_meta.json",
               {"cutoff": l_max, "simple": spec.simple, "min_gap": spec.min_gap,
                **spec.meta})
    return ["lengths.csv", "lengths_meta.json"], []


def default_charts(resolution=8):
    flat = make_flat_torus((TWO_PI, TWO_PI), resolution)
    curved = make_isothermal_chart({(1, 0): 0.15, (-1, 0): 0.15,
                                    (0, 1): -0.1j, (0, -1): 0.1j},
                                   periods=(TWO_PI, TWO_PI),
                                   resolution=resolution)
    return flat, curved


def warped_torus(resolution=8):
    return make_general_chart(
        3, {(0, 0): {(0, 0, 0): 1.0, (0, 0, 1): 0.15, (0, 0, -1): 0.15},
            (1, 1): {(0, 0, 0): 1.2, (1, 0, 0): 0.1, (-1, 0, 0): 0.1},
            (2, 2): {(0, 0, 0): 1.0, (0, 1, 0): -0.1j, (0, -1, 0): 0.1j},
            (0, 1): {(1, 1, 0): 0.05, (-1, -1, 0): 0.05}},
        resolution=resolution, periods=(TWO_PI,) * 3)


def _bracket_field_2d(x, xi):
    base = np.exp(0.8 * np.sin(x[0]) * np.cos(x[1]))
    return base * (1.0 + 0.5 * np.real((xi[0] + 1j * xi[1]) ** 2))


def _bracket_field_3d(x, xi):
    base = 1.0 + 0.4 * (np.sin(x[0]) * np.cos(x[1]) + 0.3 * np.sin(x[2]))
    return base * (1.0 + 0.3 * (xi[0] * xi[1] + 0.4 * xi[2] ** 2))


def run_brackets(out, cfg, rng):
    tol = float(cfg.get("tol", 1e-6))
    resolution = int(cfg.get("resolution", 8))
    flat, curved = default_charts(resolution)
    hyper = hyperbolic_halfplane_chart(resolution=resolution)
    entries = []
    failures = []
    specs = [("flat_torus", flat, _bracket_field_2d),
             ("curved_torus", curved, _bracket_field_2d),
             ("hyperbolic_patch", hyper, _bracket_field_2d),
             ("warped_3torus", warped_torus(resolution), _bracket_field_3d)]
    for name, chart, field in specs:
        coarse = bracket_residuals(chart, [field])
        if name == "warped_3torus":
            fine_chart = warped_torus(2 * resolution)
        elif name == "hyperbolic_patch":
            fine_chart = hyperbolic_halfplane_chart(resolution=2 * resolution)
        elif name == "flat_torus":
            fine_chart = make_flat_torus((TWO_PI, TWO_PI), 2 * resolution)
        else:
            fine_chart = make_isothermal_chart(
                {(1, 0): 0.15, (-1, 0): 0.15, (0, 1): -0.1j, (0, -1): 0.1j},
                periods=(TWO_PI, TWO_PI), resolution=2 * resolution)
        fine = bracket_residuals(fine_chart, [field])
        for ident, resid in coarse.items():
            resid2 = fine[ident]
            if resid2 > 1e-14:
                order = math.log2(max(resid, 1e-300) / resid2)
            else:
                order = float("inf")
            entries.append({"identity_name": ident, "chart": name,
                            "resolution": chart.resolution, "residual": resid,
                            "residual_doubled": resid2,
                            "convergence_order": order})
            if resid > tol:
                failures.append(f"bracket {ident} on {name}: {resid:.2e} > {tol:.1e}")
    write_json(out / "brackets.json", {"entries": entries})
    return ["brackets.json"], failures


def manufactured_pestov(chart, rng, amplitude=0.25):
    psi = random_real_field(chart.periods, rng, degree=2, amplitude=amplitude)

    def u(x, xi):
        return np.exp(1j * np.real(psi(x))) * np.ones(np.shape(xi)[1:])

    comps = tuple((lambda x, j=j: -np.real(psi.deriv(j)(x))) for j in range(2))
    return u, AffineFiberFunction(chart, None, comps)


def run_pestov(out, cfg, rng):
    tol = float(cfg.get("tol", 1e-6))
    n_cases = int(cfg.get("cases", 20))
    flat, curved = default_charts()
    rows, failures = [], []
    for i in range(n_cases):
        chart = (flat, curved)[i % 2]
        u, f = manufactured_pestov(chart, rng)
        rep = pestov_residual(chart, u, f, nx=64, ntheta=24)
        rows.append((i, "flat" if i % 2 == 0 else "curved",
                     rep.identity_residual, rep.rearranged_residual,
                     rep.beta_norm, rep.transport_violation))
        if rep.rearranged_residual > tol or rep.beta_norm > 1e-8:
            failures.append(f"pestov case {i}: residual {rep.rearranged_residual:.2e}")
    write_csv(out / "pestov.csv",
              ["index", "chart", "identity_residual", "rearranged_residual",
               "beta_norm", "transport_violation"], rows)
    return ["pestov.csv"], failures


def run_transport(out, cfg, rng):
    chart = make_flat_torus((TWO_PI, TWO_PI))
    rows = []
    for i, (winding, c) in enumerate([((1, 0), 0.0), ((1, 0), 1.0),
                                      ((0, 1), 0.3), ((2, 1), 0.7)]):
        geo = torus_geodesic(chart, winding)
        f = AffineFiberFunction(chart, (lambda x, cc=c: cc * np.ones(x.shape[1:])),
                                None)
        sol = solve_transport_along_orbit(geo, f)
        expected = abs(math.remainder(c * geo.length, TWO_PI))
        rows.append((i, f"({winding[0]};{winding[1]})", c, sol.line_integral,
                     sol.periodicity_defect, expected))
    write_csv(out / "transport.csv",
              ["index", "winding", "coefficient", "line_integral",
               "periodicity_defect", "expected_defect"], rows)
    return ["transport.csv"], []


def run_schrodinger(out, cfg, rng):
    cutoff = int(cfg.get("cutoff", 16))
    count = int(cfg.get("count", 50))
    c = float(cfg.get("circle_a", 0.25))
    circle = make_flat_torus((TWO_PI,))
    pot = PotentialData(circle, (FourierField.constant(circle.periods, c),),
                        FourierField.zero(circle.periods))
    op = assemble_schrodinger(circle, pot, max(cutoff, 32))
    vals, resid = eigenvalues(op, min(count, op.dim))
    rows = [(i, v, r) for i, (v, r) in enumerate(zip(vals, resid))]
    write_csv(out / "spectrum.csv", ["index", "eigenvalue", "residual"], rows)
    torus = make_flat_torus((TWO_PI, TWO_PI))
    pot2 = PotentialData(torus, (random_real_field(torus.periods, rng, 2, 0.2),
                                 random_real_field(torus.periods, rng, 2, 0.2)),
                         random_real_field(torus.periods, rng, 2, 0.2))
    gauge = GaugeFunction(torus, (1, 0),
                          random_real_field(torus.periods, rng, 1, 0.2))
    gaps = []
    for cut in (4, 6, 8, 12, cutoff):
        gaps.append((cut, isospectrality_check(pot2, gauge, cut,
                                               min(count, (2 * cut + 1) ** 2))))
    write_csv(out / "isospectral.csv", ["cutoff", "max_gap"], gaps)
    failures = []
    if gaps[-1][1] > 1e-8:
        failures.append(f"isospectrality gap {gaps[-1][1]:.2e} at cutoff {cutoff}")
    return ["spectrum.csv", "isospectral.csv"], failures


def run_gauge(out, cfg, rng):
    tol = float(cfg.get("tol", 1e-6))
    n_trials = int(cfg.get("trials", 30))
    torus = make_flat_torus((TWO_PI, TWO_PI))
    geos = [torus_geodesic(torus, w) for w in [(1, 0), (0, 1), (1, 1), (2, -1)]]
    results, failures = [], []
    counts = {"gauge": 0, "exact": 0, "shift": 0}
    for i in range(n_trials):
        kind = ("gauge", "exact", "shift")[int(rng.integers(3))]
        counts[kind] += 1
        pot = PotentialData(torus, (random_real_field(torus.periods, rng),
                                    random_real_field(torus.periods, rng)),
                            FourierField.zero(torus.periods))
        if kind == "gauge":
            g = GaugeFunction(torus, tuple(int(w) for w in rng.integers(-2, 3, 2)),
                              random_real_field(torus.periods, rng))
            other = gauge_conjugate(pot, g)
            expect = "equivalent"
        elif kind == "exact":
            psi = random_real_field(torus.periods, rng)
            other = PotentialData(torus, tuple(pot.a[j] + psi.deriv(j)
                                               for j in range(2)), pot.q)
            expect = "equivalent"
        else:
            eps = float(rng.uniform(0.05, 0.45))
            other = PotentialData(
                torus, (pot.a[0] + FourierField.constant(torus.periods, eps),
                        pot.a[1]), pot.q)
            expect = "not_equivalent"
        dec = gauge_equivalence_decision(pot, other, geos, tol=tol)
        ok = dec.verdict == expect
        if not ok:
            failures.append(f"trial {i} ({kind}): got {dec.verdict}")
        results.append({"trial": i, "kind": kind, "expected": expect,
                        **dec.to_dict(), "ok": ok})
    write_json(out / "gauge_decisions.json",
               {"trials": results, "counts": counts,
                "errors": len(failures)})
    return ["gauge_decisions.json"], failures


def run_xray(out, cfg, rng):
    torus = make_flat_torus((TWO_PI, TWO_PI))
    q = random_real_field(torus.periods, rng)
    a = tuple(random_real_field(torus.periods, rng) for _ in range(2))
    rows = []
    for w in [(1, 0), (0, 1), (1, 1), (2, 1), (1, -2)]:
        geo = torus_geodesic(torus, w)
        rec = xray_record(lambda x: np.real(q(x)), a, geo)
        rows.append((geo.length, f"({w[0]};{w[1]})", rec.value_f0,
                     rec.value_f1, rec.combined))
    write_csv(out / "xray.csv",
              ["length", "geodesic", "value_f0", "value_f1", "combined"], rows)
    return ["xray.csv"], []


def steklov_demo_jets(J=4, n=24):
    grid = BoundaryGrid((TWO_PI, TWO_PI), n=n, n_fiber=n)
    m = 2
    g = np.zeros((J + 1, m, m) + grid.shape)
    g[0, 0, 0] = 1.0 + 0.15 * np.cos(grid.x[0])
    g[0, 1, 1] = 1.0 + 0.1 * np.sin(grid.x[1])
    g[0, 0, 1] = g[0, 1, 0] = 0.05 * np.sin(grid.x[0] + grid.x[1])
    for ell in range(1, J + 1):
        g[ell, 0, 0] = 0.1 / ell * np.cos(grid.x[0] + 0.3 * ell)
        g[ell, 1, 1] = 0.08 / ell * np.sin(grid.x[1] + 0.1 * ell)
    a_t = np.zeros((J + 1, m) + grid.shape, dtype=complex)
    q = np.zeros((J + 1,) + grid.shape, dtype=complex)
    for ell in range(J + 1):
        a_t[ell, 0] = 0.2 / (1 + ell) * np.cos(grid.x[1] + 0.5 * ell)
        a_t[ell, 1] = 0.15 / (1 + ell) * np.sin(grid.x[0] + 0.2 * ell)
        q[ell] = 0.3 / (1 + ell) * np.cos(grid.x[0] + grid.x[1] + 0.4 * ell)
    a_n = np.zeros((J + 1,) + grid.shape, dtype=complex)
    from .steklov import BoundaryJets
    return BoundaryJets(grid, J, g, a_t, a_n, q)


def run_steklov_symbol(out, cfg, rng):
    order = int(cfg.get("order", 4))
    jets = steklov_demo_jets(J=max(order, 4))
    sym = symbol_factorize(jets, order)
    with open(out / "symbol.json", "w") as fh:
        fh.write(sym.to_json())
    return ["symbol.json"], []


def run_steklov_oracle(out, cfg, rng):
    q = float(cfg.get("q", 1.0))
    ks = list(range(16, 65, 4))
    rows = []
    oracle = []
    for k in ks:
        s1, s2, extrap = disk_dn_oracle([0.0], [q], k,
                                        n_steps=int(cfg.get("steps", 1200)))
        rows.append((k, s1, 1.0 / int(cfg.get("steps", 1200)), extrap))
        oracle.append((k, extrap))
    write_csv(out / "oracle.csv", ["k", "sigma_k", "step", "extrapolated"], rows)
    jets = disk_jets(J=3, a_theta=[0.0], q_radial=[q])
    sym = symbol_factorize(jets, 3)
    fit = asymptotic_match(oracle, sym)
    write_json(out / "oracle_fit.json",
               {"q": q, "fitted_inverse_coeff": fit.fitted_inverse_coeff,
                "predicted_inverse_coeff": fit.predicted_inverse_coeff,
                "relative_error": fit.relative_error,
                "residual_order": fit.residual_order,
                "prediction_order": fit.prediction_order})
    failures = []
    if fit.relative_error > 0.02:
        failures.append(f"oracle fit off by {fit.relative_error:.1%}")
    return ["oracle.csv", "oracle_fit.json"], failures


def run_recover_jets(out, cfg, rng):
    order = int(cfg.get("order", 3))
    jets_a = steklov_demo_jets(J=order + 1)
    jets_b = jets_a.copy()
    grid = jets_a.grid
    winding = (1, -1)
    jets_b.a_t[0, 0] += winding[0]
    jets_b.a_t[0, 1] += winding[1]
    betas = {}
    for j in range(order + 1):
        beta = 0.3 / (1 + j) * np.cos(grid.x[0] + (0.2 if j % 2 else 0.7) * j
                                      + grid.x[1] * (j % 2))
        betas[j] = beta
        db = np.stack([np.real(np.fft.ifft2(np.fft.fft2(beta)
                                            * 1j * _wavenumbers(grid, alpha)))
                       for alpha in range(2)])
        jets_b.a_t[j] += db / math.factorial(j)
    sym_a = symbol_factorize(jets_a, order + 1)
    sym_b = symbol_factorize(jets_b, order + 1)
    state = jet_recovery(sym_a, sym_b, order=order)
    payload = {"winding": list(state.winding),
               "beta_errors": {str(j): float(np.max(np.abs(
                   (state.betas[j] - state.betas[j].mean())
                   - (betas[j] - betas[j].mean())))) for j in state.betas},
               "dq_sup": {str(j): float(np.max(np.abs(v)))
                          for j, v in state.dq_jets.items()},
               "d_da_sup": {str(j): v for j, v in state.d_da_sup.items()},
               "degree_drop": {str(j): v for j, v in state.degree_drop.items()},
               "final_gap": state.final_gap,
               "obstructions": [list(map(str, o)) for o in state.obstructions],
               "chi": state.chi_description}
    write_json(out / "recovery.json", payload)
    failures = []
    if state.final_gap > 1e-6:
        failures.append(f"recovery gap {state.final_gap:.2e}")
    return ["recovery.json"], failures


def _wavenumbers(grid, alpha):
    ks = [np.fft.fftfreq(n, d=1.0 / n) * grid.kappa[j]
          for j, n in enumerate(grid.shape)]
    mesh = np.meshgrid(*ks, indexing="ij")
    return mesh[alpha]


HANDLERS = {
    "lengths": run_lengths,
    "brackets": run_brackets,
    "pestov": run_pestov,
    "transport": run_transport,
    "schrodinger": run_schrodinger,
    "gauge": run_gauge,
    "xray": run_xray,
    "steklov-symbol": run_steklov_symbol,
    "steklov-oracle": run_steklov_oracle,
    "recover-jets": run_recover_jets,
}


def run_check(out, cfg, rng):
    """Run every subcommand with small settings; fail on any violation."""
    artifacts = []
    checks = []
    small = dict(cfg)
    small.setdefault("cases", 6)
    small.setdefault("trials", 12)
    small.setdefault("steps", 800)
    small.setdefault("order", 2)
    for name, handler in HANDLERS.items():
        cfg_local = dict(small)
        if name == "lengths":
            cfg_local.pop("cutoff", None)   # cutoff means eigenmodes elsewhere
        files, failures = handler(out, cfg_local, rng)
        artifacts.extend(files)
        checks.append({"name": name, "passed": not failures,
                       "failures": failures})
    write_json(out / "check_report.json", {"checks": checks})
    artifacts.append("check_report.json")
    failures = [f for c in checks for f in c["failures"]]
    return artifacts, failures


def load_config(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise MagspecError(f"config file {path!r} not found or unreadable")
    if "run" not in parser:
        raise MagspecError("config must contain a [run] section")
    return dict(parser["run"])


def main(argv=None):
    ap = argparse.ArgumentParser(prog="magspec", add_help=True)
    ap.add_argument("subcommand", nargs="?", default=None)
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="magspec-out")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--tol", type=float, default=None)
    ap.add_argument("--order", type=int, default=None)
    ap.add_argument("--cutoff", type=int, default=None)
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def bail(code, kind, message):
        payload = {"error": kind, "message": message}
        write_json(out / "error.json", payload)
        print(json.dumps(payload), file=sys.stderr)
        return code

    try:
        cfg = load_config(args.config) if args.config else {}
    except (MagspecError, configparser.Error) as exc:
        return bail(2, "bad_config", str(exc))
    for key in ("seed", "tol", "order", "cutoff"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)

    if args.check:
        handler, name = run_check, "check"
    elif args.subcommand in HANDLERS:
        handler, name = HANDLERS[args.subcommand], args.subcommand
    elif args.subcommand is None:
        return bail(2, "missing_subcommand",
                    f"expected one of {sorted(HANDLERS)} or --check")
    else:
        return bail(2, "unknown_subcommand",
                    f"{args.subcommand!r}; expected one of {sorted(HANDLERS)}")

    try:
        artifacts, failures = handler(out, cfg, rng)
    except MagspecError as exc:
        return bail(1, type(exc).__name__, str(exc))
    manifest = {"schema_version": SCHEMA_VERSION, "subcommand": name,
                "config": {k: str(v) for k, v in cfg.items()}, "seed": seed,
                "versions": {"magspec": __version__, "numpy": np.__version__},
                "artifacts": sorted(set(artifacts))}
    write_json(out / "manifest.json", manifest)
    if failures:
        return bail(1, "tolerance_violation", "; ".join(failures))
    return 0


if __name__ == "__main__":       # pragma: no cover
    sys.exit(main())
