"""Render traffic-volume figures to image files.

Separate from the analysis module so the data path stays import-light;
only report paths that actually plot pull in matplotlib.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from primer.traffic_analysis import VolumeSeries


def render_volume_figure(
    series: VolumeSeries,
    out_path: Union[str, Path],
    title: str = "Traffic volume",
) -> Path:
    """Plot packets per bin over time and save the figure.

    The output format follows the file extension (png, pdf, svg, ...).
    """
    out_path = Path(out_path)
    starts = [b.start for b in series.bins]
    packets = [b.packets for b in series.bins]
    nbytes = [b.bytes for b in series.bins]

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(starts, packets, width=series.bin_width * 0.9, align="edge", color="#3465a4")
    ax.set_xlabel("seconds since first packet")
    ax.set_ylabel("packets per bin", color="#3465a4")
    ax.set_title(title)

    ax2 = ax.twinx()
    ax2.step(
        [s + series.bin_width for s in starts],
        nbytes,
        where="pre",
        color="#cc0000",
        alpha=0.6,
        linewidth=1.0,
    )
    ax2.set_ylabel("bytes per bin", color="#cc0000")

    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
