"""CSV and SVG artifact writers for study outputs.

All plots are rendered with matplotlib and saved as SVG next to the
delimited files, so runs can be inspected without rerunning anything.
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geometry import MASK_EXTERIOR


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def solution_csv(path, grid, values):
    """Nodal field as (x, y, u) rows; exterior nodes are skipped."""
    X, Y = grid.node_coords()
    keep = grid.mask != MASK_EXTERIOR
    rows = zip(
        (f"{v:.17g}" for v in X[keep]),
        (f"{v:.17g}" for v in Y[keep]),
        (f"{v:.17g}" for v in values[keep]),
    )
    return write_csv(path, ["x", "y", "u"], rows)


def grid_csv(path, values):
    """Plain rectangular grid dump, one row of the array per CSV row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(values):
            writer.writerow([f"{v:.17g}" for v in row])
    return path


def heatmap_svg(path, values, title="", extent=None, mask=None, cmap="viridis"):
    vals = np.asarray(values, dtype=float)
    if mask is not None:
        vals = np.where(mask, vals, np.nan)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(vals, origin="lower", extent=extent, cmap=cmap, interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def solution_heatmap_svg(path, grid, values, title="solution"):
    x0, y0 = grid.origin
    extent = (x0, x0 + grid.nx * grid.h, y0, y0 + grid.ny * grid.h)
    return heatmap_svg(path, values, title=title, extent=extent, mask=grid.mask != MASK_EXTERIOR)


def scan_csv(path, records):
    """Capacity/volume scan rows (xi_x, xi_y, R, ratio)."""
    rows = [
        [f"{r['xi'][0]:.17g}", f"{r['xi'][1]:.17g}", f"{r['R']:.17g}", f"{r['ratio']:.17g}"]
        for r in records
    ]
    return write_csv(path, ["xi_x", "xi_y", "R", "ratio"], rows)


def scan_scatter_svg(path, records, title="density scan"):
    R = np.array([r["R"] for r in records])
    ratio = np.array([r["ratio"] for r in records])
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.scatter(np.log(R), ratio, s=12, alpha=0.7)
    ax.set_xlabel("log R")
    ax.set_ylabel("ratio")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def rate_csv(path, epsilons, sup_errors):
    rows = zip((f"{e:.17g}" for e in epsilons), (f"{s:.17g}" for s in sup_errors))
    return write_csv(path, ["epsilon", "sup_error"], rows)


def rate_loglog_svg(path, epsilons, sup_errors, fitted_rate, constant, title="convergence rate"):
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(sup_errors, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(eps, err, "o", label="sup error")
    fit = constant * eps**fitted_rate
    ax.loglog(eps, fit, "--", label=f"fit, rate {fitted_rate:.3f}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup error")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def profile_svg(path, x, y, xlabel="r", ylabel="u", title="radial profile"):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(x, y, "-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def cell_artifacts(outdir, cell):
    """Corrector and flux-potential grids as CSV plus SVG heatmaps."""
    paths = []
    for i in (0, 1):
        base = os.path.join(outdir, f"corrector_{i}")
        paths.append(grid_csv(base + ".csv", cell.chi[i]))
        paths.append(heatmap_svg(base + ".svg", cell.chi[i], title=f"corrector chi_{i}"))
    V = cell.V
    for i in (0, 1):
        for j in (0, 1):
            for k in (0, 1):
                if j >= k:
                    continue
                base = os.path.join(outdir, f"flux_potential_{i}{j}{k}")
                paths.append(grid_csv(base + ".csv", V[i, j, k]))
                paths.append(
                    heatmap_svg(base + ".svg", V[i, j, k], title=f"flux potential V_{i}{j}{k}")
                )
    return paths
