"""Boxplots of the best objective per algorithm variant, one panel per dimension.

Reads the harness's summary.csv and renders the study's outcome
distributions: for each dimension a panel with one box per variant over the
replicates' best measured objectives. Output is deterministic: fixed layout,
fixed DPI, no timestamps, byte-stable across reruns. The exact values behind
the plot (per-box medians and quartiles) are written next to the images as
figure_data.json.

Usage: python render_boxplots.py --summary <csv> --out <dir>
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from studyframe import load_summary

PNG_METADATA = {"Software": None}
PDF_METADATA = {"CreationDate": None, "Producer": None, "Creator": None}


def render_boxplots(summary_path, out_dir) -> dict:
    """Render the figure; returns the per-(dimension, variant) box statistics."""
    frame = load_summary(summary_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dims = sorted(set(frame.ints("dimension").tolist()))
    variants = list(dict.fromkeys(frame.strings("variant")))  # stable order
    best = frame.floats("best_objective")

    fig, axes = plt.subplots(1, len(dims), figsize=(4.2 * len(dims), 4.0), squeeze=False)
    figure_data = {}
    for panel, dim in enumerate(dims):
        ax = axes[0][panel]
        data, labels = [], []
        for variant in variants:
            sel = frame.mask(variant=variant, dimension=dim)
            if not sel.any():
                continue
            values = best[sel]
            data.append(values)
            labels.append(variant)
            figure_data[f"d{dim}/{variant}"] = {
                "count": int(values.size),
                "median": float(np.median(values)),
                "q25": float(np.percentile(values, 25)),
                "q75": float(np.percentile(values, 75)),
            }
        ax.boxplot(data, tick_labels=labels, whis=(0.0, 100.0))
        ax.set_title(f"{dim} parameter{'s' if dim > 1 else ''}")
        ax.set_ylabel("best measured objective" if panel == 0 else "")
        ax.tick_params(axis="x", rotation=60)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_dir / "boxplots.png", dpi=150, metadata=PNG_METADATA)
    fig.savefig(out_dir / "boxplots.pdf", metadata=PDF_METADATA)
    plt.close(fig)

    with open(out_dir / "figure_data.json", "w", encoding="utf-8") as fh:
        json.dump(figure_data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return figure_data


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--summary", required=True, help="path to summary.csv")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    data = render_boxplots(args.summary, args.out)
    print(f"rendered {len(data)} boxes -> {args.out}/boxplots.png, .pdf, figure_data.json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
