"""Manifest-driven command line front end.

Usage:
    cdch run --manifest study.json [--out dir] [--seed int] [--threads int]
    cdch validate --manifest study.json

Each run writes report.json (keys: command, inputs, results, provenance,
errors) plus command-specific CSV tables and SVG figures into the output
directory. Exit codes: 0 success, 2 manifest validation failure, 3 numerical
failure.
"""

import hashlib
import importlib.metadata
import importlib.resources
import json
import math
import os
import sys
import time

import click
import jsonschema
import numpy as np

from . import capacity as cap
from . import experiments as ex
from . import homogenize as hom
from . import reporting as rep
from .elliptic import CoefficientField, assemble, load_vector, solve
from .errors import CdchError, InvalidParams, InvalidSpec, NoConvergence, UnderResolved
from .geometry import DomainSpec, build_grid
from .measures import MeasureSpec, morrey_norm

_VALID_RESOLUTIONS = [2**k for k in range(5, 11)]  # 32 .. 1024


def _schema():
    with importlib.resources.files("cdch").joinpath("schema.json").open() as fh:
        return json.load(fh)


def validate_manifest(doc):
    """All schema violations for the manifest document, as message strings."""
    problems = []
    validator = jsonschema.Draft7Validator(_schema())
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.path)):
        loc = "/".join(str(p) for p in err.path) or "manifest"
        problems.append(f"{loc}: {err.message}")
    if problems:
        return problems

    numerics = doc.get("numerics", {})
    res_values = list(numerics.get("resolutions", []))
    if "resolution" in numerics:
        res_values.append(numerics["resolution"])
    for r in res_values:
        if r not in _VALID_RESOLUTIONS:
            problems.append("resolution must be a power of two in [32,1024]")
            break
    command = doc.get("command")
    if command == "rate" and len(numerics.get("eps_list", [])) < 4:
        problems.append("eps_list requires ≥ 4 values")
    if command == "radial":
        for key in ("n", "alpha", "R"):
            if key not in numerics:
                problems.append(f"radial requires numerics.{key}")
    if command in ("cell", "rate"):
        kind = doc.get("coefficient", {}).get("kind", "")
        if not kind.startswith("periodic_"):
            problems.append(f"{command} requires a periodic coefficient")
    if command in ("solve", "morrey", "hoelder") and "measure" not in doc:
        problems.append(f"{command} requires a measure")
    if (
        command in ("solve", "morrey", "cdc-scan", "vdc-scan", "hardy", "barrier", "hoelder")
        and "domain" not in doc
    ):
        problems.append(f"{command} requires a domain")
    return problems


# ---------------------------------------------------------------------------
# manifest -> library objects


def _measure_from(doc):
    kind = doc["kind"]
    sign = doc.get("sign", 1)
    if kind == "zero":
        return MeasureSpec.zero()
    if kind == "density":
        return MeasureSpec.density(doc.get("value", 1.0), sign=sign)
    if kind == "point_mass":
        return MeasureSpec.point_mass(doc["location"], doc.get("weight", 1.0), sign=sign)
    if kind == "circle_surface":
        return MeasureSpec.circle_surface(
            doc["radius"], doc.get("weight", 1.0), center=doc.get("center", (0.0, 0.0)), sign=sign
        )
    if kind == "sum":
        out = MeasureSpec.zero()
        for term in doc["terms"]:
            out = out + _measure_from(term)
        return out
    raise InvalidSpec(f"unknown measure kind {kind!r}")


def _coefficient_from(doc, grid):
    kind = doc.get("kind", "identity")
    if kind == "identity":
        A = CoefficientField.identity(grid)
    elif kind == "constant":
        A = CoefficientField.constant(grid, np.asarray(doc["matrix"], dtype=float))
    elif kind == "isotropic_sin":
        base = doc.get("base", 2.0)
        amp = doc.get("amplitude", 1.0)
        A = CoefficientField.from_scalar_function(
            grid,
            lambda x, y: base + amp * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y),
            lam=base - abs(amp),
            L=base + abs(amp),
        )
    else:
        raise InvalidSpec(f"coefficient kind {kind!r} is not an inline field")
    scale = doc.get("scale", 1.0)
    return A if scale == 1.0 else A.scaled(scale)


def _periodic_from(doc):
    kind = doc["kind"]
    cells = doc.get("cells", 64)
    if kind == "periodic_constant":
        return hom.PeriodicCoefficient.constant(np.asarray(doc["matrix"], dtype=float), n=cells)
    if kind == "periodic_layered":
        base = doc.get("base", 2.0)
        amp = doc.get("amplitude", 1.0)
        return hom.PeriodicCoefficient.layered(
            lambda y: base + amp * np.sin(2 * np.pi * y), n=cells
        )
    if kind == "periodic_checkerboard":
        return hom.PeriodicCoefficient.checkerboard(doc["a"], doc["b"], n=cells)
    if kind == "periodic_isotropic":
        base = doc.get("base", 2.0)
        amp = doc.get("amplitude", 1.0)
        return hom.PeriodicCoefficient.isotropic(
            lambda x, y: base + amp * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y), n=cells
        )
    raise InvalidSpec(f"coefficient kind {kind!r} is not periodic")


def _domain_from(doc):
    return DomainSpec.from_dict(doc)


# ---------------------------------------------------------------------------
# command implementations; each returns a results dict and writes artifacts


def _run_solve(m, outdir):
    num = m.get("numerics", {})
    grid = build_grid(_domain_from(m["domain"]), num.get("resolution", 128))
    A = _coefficient_from(m.get("coefficient", {"kind": "identity"}), grid)
    mu = _measure_from(m["measure"])
    sol = solve(
        assemble(grid, A), load_vector(grid, mu),
        tol=num.get("tol", 1e-10), precond=num.get("precond", "jacobi"),
        maxiter=num.get("max_iter"),
    )
    rep.solution_csv(os.path.join(outdir, "solution.csv"), grid, sol.values)
    rep.solution_heatmap_svg(os.path.join(outdir, "solution.svg"), grid, sol.values)
    return {
        "sup_norm": float(np.abs(sol.values).max()),
        "energy": sol.energy,
        "iterations": sol.iterations,
        "residual": sol.residual_norm,
    }


def _run_morrey(m, outdir):
    num = m.get("numerics", {})
    grid = build_grid(_domain_from(m["domain"]), num.get("resolution", 128))
    mu = _measure_from(m["measure"])
    report = morrey_norm(mu, grid, num.get("alpha", 1.0))
    return report.to_dict()


def _run_capacity(m, outdir):
    num = m.get("numerics", {})
    dom = m["domain"]
    if dom["kind"] != "condenser":
        raise InvalidSpec("capacity runs take a condenser domain")
    p = dom.get("params", {})
    cond = cap.CondenserSpec(
        tuple(p.get("u_center", (0.0, 0.0))), float(p.get("u_radius", 1.0)),
        "disk", tuple(p.get("k_center", (0.0, 0.0))), float(p.get("k_radius", 0.25)),
    )
    value = cap.variational_capacity(
        cond, num.get("resolution", 256), tol=num.get("tol", 1e-9),
        precond=num.get("precond", "jacobi"),
    )
    return {"capacity": float(value)}


def _run_cdc_scan(m, outdir):
    num = m.get("numerics", {})
    grid = build_grid(_domain_from(m["domain"]), num.get("resolution", 128))
    report = cap.cdc_scan(
        grid,
        n_samples=num.get("n_samples", 32),
        n_scales=num.get("n_scales", 3),
        local_resolution=num.get("local_resolution", 64),
        tol=num.get("tol", 1e-9),
    )
    records = [{"xi": (s[0], s[1]), "R": s[2], "ratio": s[3]} for s in report.samples]
    rep.scan_csv(os.path.join(outdir, "cdc_scan.csv"), records)
    rep.scan_scatter_svg(os.path.join(outdir, "cdc_scan.svg"), records, title="capacity density")
    return report.to_dict()


def _run_vdc_scan(m, outdir):
    num = m.get("numerics", {})
    grid = build_grid(_domain_from(m["domain"]), num.get("resolution", 128))
    report = cap.vdc_scan(
        grid, n_samples=num.get("n_samples", 32), n_scales=num.get("n_scales", 3)
    )
    records = [{"xi": (s[0], s[1]), "R": s[2], "ratio": s[3]} for s in report.samples]
    rep.scan_csv(os.path.join(outdir, "vdc_scan.csv"), records)
    rep.scan_scatter_svg(os.path.join(outdir, "vdc_scan.svg"), records, title="volume density")
    return report.to_dict()


def _run_hardy(m, outdir):
    num = m.get("numerics", {})
    spec = _domain_from(m["domain"])
    resolutions = num.get("resolutions", [num.get("resolution", 128)])
    report = cap.hardy_refinement_study(spec, resolutions, tol=num.get("tol", 1e-8))
    return report.to_dict()


def _run_barrier(m, outdir):
    num = m.get("numerics", {})
    grid = build_grid(_domain_from(m["domain"]), num.get("resolution", 128))
    alpha = num.get("alpha", 0.5)
    U = np.where(grid.interior, np.maximum(grid.delta, grid.h / 2.0) ** alpha, 0.0)
    report = cap.verify_strong_barrier(grid, U, alpha)
    rep.solution_heatmap_svg(
        os.path.join(outdir, "barrier_ratio.svg"), grid,
        np.nan_to_num(report.ratio_field), title="supersolution ratio",
    )
    return report.to_dict()


def _run_cell(m, outdir):
    num = m.get("numerics", {})
    A = _periodic_from(m["coefficient"])
    cell = hom.solve_cell(A, tol=num.get("tol", 1e-10))
    rep.cell_artifacts(outdir, cell)
    return {
        "A0": cell.A0.tolist(),
        "div_errors": np.asarray(cell.div_errors).tolist(),
        "V_inf": cell.V_inf,
    }


def _run_rate(m, outdir):
    num = m.get("numerics", {})
    spec = _domain_from(m.get("domain", {"kind": "unit_square"}))
    A = _periodic_from(m["coefficient"])
    mu = _measure_from(m.get("measure", {"kind": "density"}))
    report = ex.convergence_study(
        spec, A, mu, num["eps_list"],
        cells_per_period=num.get("cells_per_period", 16),
        tol=num.get("tol", 1e-10), precond=num.get("precond", "amg"),
    )
    rep.rate_csv(os.path.join(outdir, "rate.csv"), report.epsilons, report.sup_errors)
    rep.rate_loglog_svg(
        os.path.join(outdir, "rate.svg"),
        report.epsilons, report.sup_errors, report.fitted_rate, report.constant,
    )
    return report.to_dict()


def _run_hoelder(m, outdir):
    num = m.get("numerics", {})
    grid = build_grid(_domain_from(m["domain"]), num.get("resolution", 128))
    A = _coefficient_from(m.get("coefficient", {"kind": "identity"}), grid)
    mu = _measure_from(m["measure"])
    alpha = num.get("alpha", 1.0)
    ladder = [num["alpha0"]] if "alpha0" in num else None
    study = ex.hoelder_estimate_study(
        grid, A, mu, alpha, alpha0_ladder=ladder,
        tol=num.get("tol", 1e-10), precond=num.get("precond", "jacobi"),
    )
    rep.solution_heatmap_svg(
        os.path.join(outdir, "solution.svg"), grid, study["solution"].values
    )
    return {
        "morrey": study["morrey"].to_dict(),
        "hoelder": {str(a): r.to_dict() for a, r in study["hoelder"].items()},
        "ratios": {str(a): v for a, v in study["ratios"].items()},
    }


def _run_radial(m, outdir):
    num = m["numerics"]
    result = ex.radial_example(num["n"], num["alpha"], num["R"])
    rep.write_csv(
        os.path.join(outdir, "radial_profile.csv"), ["r", "u"],
        zip((f"{v:.17g}" for v in result["r"]), (f"{v:.17g}" for v in result["u"])),
    )
    rep.profile_svg(os.path.join(outdir, "radial_profile.svg"), result["r"], result["u"])
    return {"energy": result["energy"], "c_alpha_norm": result["c_alpha_norm"]}


_COMMANDS = {
    "solve": _run_solve,
    "morrey": _run_morrey,
    "capacity": _run_capacity,
    "cdc-scan": _run_cdc_scan,
    "vdc-scan": _run_vdc_scan,
    "hardy": _run_hardy,
    "barrier": _run_barrier,
    "cell": _run_cell,
    "rate": _run_rate,
    "hoelder": _run_hoelder,
    "radial": _run_radial,
}


# ---------------------------------------------------------------------------
# report assembly


def _provenance(manifest_bytes, seed):
    try:
        version = importlib.metadata.version("cdch")
    except importlib.metadata.PackageNotFoundError:
        version = "unknown"
    import scipy

    return {
        "manifest_sha256": hashlib.sha256(manifest_bytes).hexdigest(),
        "version": version,
        "modules": {"numpy": np.__version__, "scipy": scipy.__version__},
        "seed": seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _sanitize(obj):
    """Make results JSON-clean: numpy scalars to floats, non-finite to strings."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    return obj


def _write_report(outdir, report):
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(_sanitize(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


@click.group()
def main():
    """Elliptic solves, capacity diagnostics and homogenization studies."""


@main.command("validate")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
def validate_cmd(manifest):
    """Check a manifest against the schema; prints one violation per line."""
    with open(manifest) as fh:
        doc = json.load(fh)
    problems = validate_manifest(doc)
    for p in problems:
        click.echo(p)
    if problems:
        sys.exit(2)
    click.echo("ok")


@main.command("run")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=".", type=click.Path(file_okay=False))
@click.option("--seed", default=0, type=int)
@click.option("--threads", default=0, type=int)
def run_cmd(manifest, out, seed, threads):
    """Execute the study named by the manifest and write report.json."""
    if threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    with open(manifest, "rb") as fh:
        raw = fh.read()
    doc = json.loads(raw)
    os.makedirs(out, exist_ok=True)

    report = {
        "command": doc.get("command"),
        "inputs": doc,
        "results": None,
        "provenance": _provenance(raw, seed),
        "errors": [],
    }

    problems = validate_manifest(doc)
    if problems:
        report["errors"] = [{"type": "InvalidManifest", "message": p} for p in problems]
        _write_report(out, report)
        for p in problems:
            click.echo(p, err=True)
        sys.exit(2)

    np.random.seed(seed)
    try:
        report["results"] = _COMMANDS[doc["command"]](doc, out)
    except (InvalidSpec, InvalidParams) as err:
        report["errors"] = [{"type": type(err).__name__, "message": str(err)}]
        _write_report(out, report)
        click.echo(str(err), err=True)
        sys.exit(2)
    except CdchError as err:
        entry = {"type": type(err).__name__, "message": str(err)}
        if isinstance(err, NoConvergence):
            entry["residual"] = _sanitize(getattr(err, "residual", None))
            entry["iterations"] = getattr(err, "iterations", None)
        report["errors"] = [entry]
        _write_report(out, report)
        click.echo(str(err), err=True)
        sys.exit(3)
    _write_report(out, report)
    click.echo(os.path.join(out, "report.json"))


if __name__ == "__main__":
    main()
