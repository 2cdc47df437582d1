"""Exploration plot of a one-parameter run: queries, safe-set band, final point.

Reads the harness's runs.csv, selects one 1-D run (variant + replicate), and
renders the queried parameters against their measured objectives with
iteration-order coloring, the safe-set extent band as it grew, and the final
query highlighted. Deterministic output (fixed style, no timestamps);
figure_data.json carries the plotted values.

Usage: python render_exploration.py --runs <csv> --out <dir>
       [--variant <name>] [--replicate <n>]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from studyframe import load_runs

PNG_METADATA = {"Software": None}
PDF_METADATA = {"CreationDate": None, "Producer": None, "Creator": None}


def render_exploration(runs_path, out_dir, variant: str | None = None, replicate: int = 0) -> dict:
    """Render one 1-D run; returns the plotted series."""
    frame = load_runs(runs_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if variant is None:
        variant = frame.strings("variant")[0]
    sel = frame.mask(variant=variant, replicate=replicate)
    if not sel.any():
        raise ValueError(f"no rows for variant={variant!r} replicate={replicate}")
    dims = set(frame.ints("dimension")[sel].tolist())
    if dims != {1}:
        raise ValueError(f"exploration plots need a 1-dimensional run, found dimension(s) {sorted(dims)}")

    order = np.argsort(frame.ints("iteration")[sel])
    theta = frame.floats("theta_0")[sel][order]
    y = frame.floats("y_objective")[sel][order]
    iters = frame.ints("iteration")[sel][order]
    lo = frame.floats("safe_min_0")[sel][order]
    hi = frame.floats("safe_max_0")[sel][order]

    fig, (ax, ax_band) = plt.subplots(
        2, 1, figsize=(6.4, 5.6), height_ratios=[3, 1], sharex=True
    )
    scatter = ax.scatter(theta, y, c=iters, cmap="viridis", s=42, zorder=3)
    ax.scatter([theta[-1]], [y[-1]], marker="o", s=160, facecolors="none",
               edgecolors="red", linewidths=2, zorder=4, label="final query")
    ax.axvspan(lo[-1], hi[-1], color="tab:orange", alpha=0.15, label="final safe set")
    fig.colorbar(scatter, ax=ax, label="iteration")
    ax.set_ylabel("measured objective")
    ax.set_title(f"{variant}, replicate {replicate}")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)

    ax_band.fill_between(iters, lo, hi, color="tab:orange", alpha=0.3, step="mid")
    ax_band.plot(iters, theta, "k.", markersize=4)
    ax_band.set_xlabel("iteration")
    ax_band.set_ylabel("safe extent")
    ax_band.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(out_dir / "exploration.png", dpi=150, metadata=PNG_METADATA)
    fig.savefig(out_dir / "exploration.pdf", metadata=PDF_METADATA)
    plt.close(fig)

    data = {
        "variant": variant,
        "replicate": replicate,
        "theta": theta.tolist(),
        "objective": y.tolist(),
        "iteration": iters.tolist(),
        "safe_min": lo.tolist(),
        "safe_max": hi.tolist(),
    }
    with open(out_dir / "figure_data.json", "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", required=True, help="path to runs.csv")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--variant", default=None)
    parser.add_argument("--replicate", type=int, default=0)
    args = parser.parse_args(argv)
    data = render_exploration(args.runs, args.out, args.variant, args.replicate)
    print(f"rendered {len(data['theta'])} queries -> {args.out}/exploration.png, .pdf")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
