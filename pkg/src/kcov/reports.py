"""Line-oriented structured-text reports and their companion figures.

Reports are ``key=value`` lines under a ``kcov-report/1`` magic line, with
a stable key order so repeated runs produce byte-identical files and
diffs stay reviewable.  Alongside each report the CLI renders a matplotlib
figure (confusion heatmap, CV grid, Gram heatmap, timing bars) to a PNG
next to the text file.
"""

from __future__ import annotations

import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

REPORT_MAGIC = "kcov-report/1"


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(float(value))
    return str(value)


def render_report(pairs: Iterable[tuple[str, object]]) -> str:
    lines = [REPORT_MAGIC]
    for key, value in pairs:
        lines.append(f"{key}={format_value(value)}")
    return "\n".join(lines) + "\n"


def write_report(path, pairs: Iterable[tuple[str, object]]) -> None:
    atomic_write_text(path, render_report(pairs))


def read_report(path) -> dict[str, str]:
    """Parse a report back into an ordered key -> raw string mapping."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_MAGIC:
        raise ValueError(f"{path}: missing {REPORT_MAGIC} magic line")
    out: dict[str, str] = {}
    for line in lines[1:]:
        if not line:
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file + rename so failures leave no partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def confusion_figure(class_labels: Sequence[int], matrix: np.ndarray, path) -> None:
    """Render a confusion-matrix heatmap with per-cell counts."""
    matrix = np.asarray(matrix)
    n = len(class_labels)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * n + 2.0),) * 2)
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(n), [str(c) for c in class_labels])
    ax.set_yticks(range(n), [str(c) for c in class_labels])
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = matrix.max() / 2.0 if matrix.max() > 0 else 0.5
    for i in range(n):
        for j in range(n):
            ax.text(
                j,
                i,
                str(int(matrix[i, j])),
                ha="center",
                va="center",
                color="white" if matrix[i, j] > threshold else "black",
                fontsize=8,
            )
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cv_grid_figure(cv_report, path) -> None:
    """One accuracy heatmap (gamma x C) per sigma value of the CV grid."""
    sigmas = list(cv_report.sigma_grid)
    gammas = list(cv_report.gamma_grid)
    cs = list(cv_report.c_grid)
    fig, axes = plt.subplots(
        1, len(sigmas), figsize=(3.2 * len(sigmas) + 1.2, 3.2), squeeze=False
    )
    acc = {
        (cell.sigma, cell.gamma, cell.c): cell.mean_accuracy
        for cell in cv_report.cells
    }
    last = None
    for k, sigma in enumerate(sigmas):
        grid = np.array([[acc[(sigma, g, c)] for c in cs] for g in gammas])
        ax = axes[0][k]
        last = ax.imshow(grid, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
        ax.set_xticks(range(len(cs)), [f"{c:g}" for c in cs], fontsize=7)
        ax.set_yticks(range(len(gammas)), [f"{g:g}" for g in gammas], fontsize=7)
        ax.set_xlabel("C")
        if k == 0:
            ax.set_ylabel("gamma")
        ax.set_title("sigma n/a" if sigma is None else f"sigma={sigma:g}", fontsize=9)
    fig.colorbar(last, ax=[ax for row in axes for ax in row], shrink=0.85,
                 label="mean fold accuracy")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def gram_figure(values: np.ndarray, path, title: str = "Gram matrix") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(values, cmap="magma")
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("trial")
    ax.set_ylabel("trial")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def bench_figure(labels: Sequence[str], seconds: Sequence[float], path) -> None:
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.bar(range(len(labels)), [s * 1e3 for s in seconds], color="#4878b0")
    ax.set_xticks(range(len(labels)), labels, fontsize=8)
    ax.set_ylabel("mean time [ms]")
    ax.set_title("descriptor cost scaling", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
