"""Configuration-driven experiment runner.

Every subcommand reads one manifest, writes machine-readable artifacts
into the output directory, and exits 0 only if all asserted checks pass
(1: a named check failed, 2: manifest problems). CSV bodies are
deterministic for a fixed manifest and seed; the wall-time header line is
the only mutable part of any artifact.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compute_ids, decay_profile, ipr, smoothed_dos, spike_energy_grid, spike_fit
from .errors import ManifestError, MarylandError, PeakNotFound
from .library import verify_theorem_hypotheses
from .manifest import load_manifest
from .movingblock import (
    assemble_u2,
    build_u0,
    conjugate_and_extract,
    fit_mu,
    residual_edge_exponents,
)
from .operators import build_h
from .perturbation import convergence_report, rs_series

FMT = "%.12g"


class CheckFailure(Exception):
    def __init__(self, name, detail=""):
        self.name = name
        super().__init__(f"{name}: {detail}" if detail else name)


def _fmt(value):
    if isinstance(value, float):
        return FMT % value
    return str(value)


def _write_rows(path, manifest, t0, columns, rows):
    lines = [f"# manifest_sha256: {manifest.sha256}",
             f"# package: marylandlab {__version__}",
             f"# wall_time_s: {time.time() - t0:.3f}",  # mutable comment line
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _write_text(path, manifest, t0, lines):
    head = [f"# manifest_sha256: {manifest.sha256}",
            f"# package: marylandlab {__version__}",
            f"# wall_time_s: {time.time() - t0:.3f}"]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(head + list(lines)) + "\n")


def _eps_tag(eps):
    return ("eps" + ("%.4g" % eps)).replace(".", "p").replace("-", "m")


def _sample_phases(manifest, count, box):
    from .analysis import sample_phases
    rng = np.random.default_rng(manifest.seed)
    return sample_phases(rng, count, manifest.config.frequency(), box)


# ---------------------------------------------------------------------------
# subcommands

def run_verify(manifest, out, threads, strict, t0):
    checklist = verify_theorem_hypotheses(manifest.config)
    _write_text(out / "hypotheses.txt", manifest, t0, checklist.as_lines())
    for item in checklist.items:
        if not item.passed:
            raise CheckFailure(item.name, item.witness)
    if strict and checklist.warnings:
        raise CheckFailure("warnings-as-failures", checklist.warnings[0])


def run_spectrum(manifest, out, threads, strict, t0):
    cfg = manifest.config
    f, fv = cfg.sampling_function(), cfg.frequency()
    box = manifest.analysis_box()
    n_x = manifest.grids.get("x_points", 5)
    xs = _sample_phases(manifest, n_x, box)
    spec_rows, ipr_rows, decay_rows = [], [], []
    for eps in manifest.eps_list:
        for x in xs:
            h = build_h(f, fv, eps, x, box)
            evals, evecs = h.eigh()
            for k in range(len(evals)):
                vec = evecs[:, k]
                anchor = box.site(int(np.argmax(np.abs(vec))))
                spec_rows.append((eps, x, k, evals[k]))
                ipr_rows.append((eps, x, k, ipr(vec), "|".join(map(str, anchor))))
                prof = decay_profile(h, vec, anchor)
                for dist, amp in prof.samples:
                    decay_rows.append((eps, x, k, dist, amp))
    _write_rows(out / "spectrum.csv", manifest, t0, ["eps", "x", "k", "energy"], spec_rows)
    _write_rows(out / "ipr.csv", manifest, t0, ["eps", "x", "k", "ipr", "anchor"], ipr_rows)
    _write_rows(out / "decay.csv", manifest, t0, ["eps", "x", "k", "dist", "amp"], decay_rows)


def run_series(manifest, out, threads, strict, t0):
    cfg = manifest.config
    f, fv = cfg.sampling_function(), cfg.frequency()
    box = manifest.analysis_box()
    site = tuple(manifest.series.get("site", (0,) * box.d))
    order = int(manifest.series.get("order", 8))
    x = float(manifest.series.get("x", cfg.x0 + 0.5 * fv.omega1))
    eps = manifest.eps_list[0]
    h = build_h(f, fv, eps, x, box)
    coeffs = rs_series(h, site, order)
    v = np.sort(h.diagonal)
    delta = float(np.diff(v).min())
    report = convergence_report(coeffs, delta, 1.0, eps=eps)
    rows = []
    norms = coeffs.vector_norms()
    for j in range(order + 1):
        ratio = report.radii[j] if j < len(report.radii) else ""
        rows.append((j, coeffs.energies[j], norms[j], ratio))
    _write_rows(out / "series.csv", manifest, t0,
                ["order", "E_j", "psi_j_norm", "growth_ratio"], rows)
    _write_text(out / "convergence.txt", manifest, t0, [
        f"delta = {FMT % delta}",
        f"bound_constant = {FMT % report.bound_constant}",
        f"divergent = {report.divergent}",
    ])
    if report.divergent:
        raise CheckFailure("series-divergence", "growth ratio exceeds 1/eps")


def run_block(manifest, out, threads, strict, t0):
    cfg = manifest.config
    f, fv = cfg.sampling_function(), cfg.frequency()
    frame = cfg.frame()
    eps = manifest.eps_list[0]
    u0 = build_u0(frame, f, fv, eps,
                  x_points=manifest.grids.get("x_points", 33),
                  t_steps=manifest.grids.get("t_steps", 64))
    box = frame.r_prime_box
    labels = ["|".join(map(str, n)) for n in box.site_tuples()]
    frame_rows, sep_rows = [], []
    for x, u, w in zip(u0.path.x_grid, u0.path.frames, u0.path.eigenvalues):
        gaps = np.diff(np.sort(w))
        sep_rows.append((x, float(gaps.min()), float(gaps.min()) / eps if eps else np.inf))
        for i in range(box.size):
            for j in range(box.size):
                frame_rows.append((x, labels[i], labels[j], u[i, j]))
    _write_rows(out / "frames.csv", manifest, t0,
                ["x", "row_site", "col_site", "value"], frame_rows)
    _write_rows(out / "separation.csv", manifest, t0,
                ["x", "min_gap", "min_gap_over_eps"], sep_rows)
    _write_text(out / "block_checks.txt", manifest, t0, [
        f"kappa = {FMT % u0.path.kappa}",
        f"orthogonality_defect = {FMT % u0.path.orthogonality_defect()}",
        f"endpoint_translation_defect = {FMT % u0.endpoint_defect}",
        f"fitted_c_sep = {FMT % u0.csep_fitted}",
    ])
    if u0.path.orthogonality_defect() > 1e-10:
        raise CheckFailure("frame-orthogonality", "defect above 1e-10")
    if u0.endpoint_defect > 1e-8:
        raise CheckFailure("endpoint-translation", "defect above 1e-8")


def run_moving_block(manifest, out, threads, strict, t0):
    cfg = manifest.config
    f, fv = cfg.sampling_function(), cfg.frequency()
    frame = cfg.frame()
    box = manifest.analysis_box()
    x_points = manifest.grids.get("x_points", 17)
    profile_rows = []
    check_lines = []
    for eps in manifest.eps_list:
        u0 = build_u0(frame, f, fv, eps, x_points=x_points,
                      t_steps=manifest.grids.get("t_steps", 64))
        family = assemble_u2(u0, box)
        xs = np.linspace(frame.x0, frame.x0 + fv.omega1, max(4, x_points // 2),
                         endpoint=False)
        conj = conjugate_and_extract(family, x_grid=xs)
        for r in conj.f2_rows:
            profile_rows.append((eps, r.x, "|".join(map(str, r.site)), r.y,
                                 r.value, r.derivative, int(r.regular)))
        check_lines += [
            f"eps = {FMT % eps}",
            f"  unitarity_defect = {FMT % conj.unitarity_defect}",
            f"  spectra_defect = {FMT % conj.spectra_defect}",
            f"  strat2_defect = {FMT % conj.strat2_defect}",
            f"  covariance_defect = {FMT % conj.covariance_defect}",
            f"  f2_spread = {FMT % conj.f2_spread}",
            f"  diag_mode_gap = {FMT % conj.diag_mode_gap}",
        ]
        if conj.unitarity_defect > 1e-9:
            raise CheckFailure("u2-unitarity", f"defect {conj.unitarity_defect:.2e}")
        if conj.spectra_defect > 1e-8:
            raise CheckFailure("h2-spectra", f"defect {conj.spectra_defect:.2e}")
    _write_rows(out / "f2_profile.csv", manifest, t0,
                ["eps", "x", "site", "y", "f2", "f2_prime", "regular"], profile_rows)

    window = cfg.flat_window() if hasattr(cfg, "flat_window") else None
    mu_rows = []
    if window is not None and len(manifest.eps_list) >= 2:
        mu = fit_mu(frame, f, fv, manifest.eps_list, window,
                    x_points=max(5, x_points // 3))
        mu_rows.append(("flat", mu.slope, mu.band) + tuple(mu.floors))
        check_lines.append(f"mu_slope = {FMT % mu.slope}")
        if hasattr(cfg, "predicted_exponent") and strict and not mu.accepted:
            raise CheckFailure("mu-band", f"slope {mu.slope:.3f} off integer by > {mu.band}")
    _write_rows(out / "mu_fit.csv", manifest, t0,
                ["window", "fitted_mu", "band"] + [f"floor_{_eps_tag(e)}"
                                                   for e in manifest.eps_list], mu_rows)

    res_rows = []
    if len(manifest.eps_list) >= 2:
        exps, dexps = residual_edge_exponents(
            frame, f, fv, manifest.eps_list, frame.x0 + 0.37 * fv.omega1,
            dps=manifest.grids.get("pattern_dps", 50), derivatives=True)
        for (a, b), p in sorted(exps.items()):
            d = dexps.get((a, b))
            res_rows.append(("|".join(map(str, a)), "|".join(map(str, b)),
                             "below_floor" if p is None else p,
                             "below_floor" if d is None else d))
        from .operators import graph_from_exponents
        graph = graph_from_exponents(exps)
        lengths = [graph.min_length_at(n) for n in frame.block_sites()]
        lengths = [l for l in lengths if l is not None]
        mu = getattr(cfg, "predicted_exponent", None)
        if lengths and mu is not None:
            check_lines.append(f"conv3_min_edge_length = {min(lengths)} (needs >= {mu + 1})")
            if min(lengths) < mu + 1:
                raise CheckFailure("conv3-edge-length",
                                   f"min length {min(lengths)} below mu+1 = {mu + 1}")
            dmin = min(d for d in dexps.values() if d is not None)
            check_lines.append(
                f"conv4_min_edge_derivative_exponent = {FMT % dmin} (conv4, reconstructed; "
                f"needs >= {mu})")
            if dmin < mu - 0.3:
                raise CheckFailure("conv4-edge-derivative", f"exponent {dmin:.2f} below mu")
    _write_rows(out / "residual_edges.csv", manifest, t0,
                ["from_site", "to_site", "exponent", "derivative_exponent"], res_rows)
    _write_text(out / "moving_block_checks.txt", manifest, t0, check_lines)


def run_ids(manifest, out, threads, strict, t0):
    cfg = manifest.config
    f, fv = cfg.sampling_function(), cfg.frequency()
    center = float(manifest.spike.get("center", getattr(cfg, "energy", 0.0)))
    span = float(manifest.spike.get("span", 1.2 * (f.e_reg or 10.0)))
    box_size = manifest.grids.get("ids_box_size", 401)
    x_samples = manifest.grids.get("ids_x_samples", 256)
    fine = manifest.grids.get("ids_energy_points", 4001)
    curves = []
    for eps in manifest.eps_list:
        grid = spike_energy_grid(center, eps, -span, span, fine_points=fine)
        curve = compute_ids(f, fv, eps, box_size, x_samples, grid,
                            seed=manifest.seed, threads=threads)
        curves.append(curve)
        tag = _eps_tag(eps)
        _write_rows(out / f"ids_{tag}.csv", manifest, t0, ["energy", "value"],
                    list(zip(curve.energy_grid, curve.counts)))
        bw = max(0.5 * eps**2, 2.0 * float(np.min(np.diff(grid))))
        dos = smoothed_dos(curve, bw)
        _write_rows(out / f"ids_derivative_{tag}.csv", manifest, t0,
                    ["energy", "dos"], list(zip(curve.energy_grid, dos)))
    rows = []
    if "center" in manifest.spike or hasattr(cfg, "flat_window"):
        try:
            fit = spike_fit(curves, center,
                            bandwidth_factor=manifest.spike.get("bandwidth_factor", 0.5),
                            window_factor=manifest.spike.get("window_factor", 6.0))
        except PeakNotFound as exc:
            raise CheckFailure("spike-peak", str(exc))
        for eps, h, w in zip(fit.eps_list, fit.heights, fit.widths):
            rows.append((eps, h, w))
        rows.append(("height_exponent", fit.height_exponent, ""))
        rows.append(("width_exponent", fit.width_exponent, ""))
    _write_rows(out / "spike_fit.csv", manifest, t0, ["eps", "height", "width"], rows)


def run_dump_operator(manifest, out, threads, strict, t0):
    cfg = manifest.config
    f, fv = cfg.sampling_function(), cfg.frequency()
    box = manifest.analysis_box()
    x = float(manifest.series.get("x", cfg.x0 + 0.5 * fv.omega1))
    eps = manifest.eps_list[0]
    h = build_h(f, fv, eps, x, box)
    lines = [f"# x = {FMT % x}", f"# eps = {FMT % eps}"]
    for i in range(box.size):
        lines.append(f"# site {i} -> ({','.join(map(str, box.site(i)))})")
    m = h.matrix()
    for i in range(box.size):
        for j in range(i, box.size):
            if m[i, j] != 0.0:
                lines.append(f"{i} {j} {FMT % m[i, j]}")
    _write_text(out / "operator.txt", manifest, t0, lines)


COMMANDS = {
    "verify": run_verify,
    "spectrum": run_spectrum,
    "series": run_series,
    "block": run_block,
    "moving-block": run_moving_block,
    "ids": run_ids,
    "dump-operator": run_dump_operator,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="marylandlab",
        description="Finite-volume laboratory for Maryland-type operators with flat pieces")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--manifest", required=True, help="TOML experiment manifest")
    parser.add_argument("--out", default=None, help="output directory (default: manifest out)")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--strict", action="store_true",
                        help="treat warnings as failures")
    args = parser.parse_args(argv)

    t0 = time.time()
    try:
        manifest = load_manifest(args.manifest)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(manifest.out)
    try:
        COMMANDS[args.command](manifest, out, args.threads, args.strict, t0)
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    except MarylandError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: ok ({time.time() - t0:.1f} s) -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
