"""CSV tables and SVG line charts with an embedded machine-readable data block."""
from __future__ import annotations

import csv
import io
import os
import re
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

DATA_TAG = "chansel-data"


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    text = csv_text(header, rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return os.fspath(path)


def read_csv(path: str | os.PathLike) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_line_chart(path: str | os.PathLike, x: Sequence[float], series: dict, *, xlabel: str,
                     ylabel: str, title: str, invert_x: bool = False) -> str:
    """Line chart as SVG; the plotted values are repeated as CSV inside an XML comment."""
    style = {"svg.hashsalt": "chansel", "svg.fonttype": "path", "font.family": "DejaVu Sans"}
    with plt.rc_context(style):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for name, ys in series.items():
            ax.plot(list(x), list(ys), marker="o", label=name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.set_ylim(-0.02, 1.02)
        if invert_x:
            ax.invert_xaxis()
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower left")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    svg = buf.getvalue()
    header = [xlabel] + list(series)
    rows = [[xv] + [series[k][i] for k in series] for i, xv in enumerate(x)]
    block = f"<!-- {DATA_TAG}\n{csv_text(header, rows)}-->\n"
    pos = svg.index("<svg")
    svg = svg[:pos] + block + svg[pos:]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return os.fspath(path)


def read_chart_data(path: str | os.PathLike) -> list:
    """Rows of the data block embedded by :func:`write_line_chart`."""
    with open(path, encoding="utf-8") as fh:
        svg = fh.read()
    m = re.search(rf"<!-- {DATA_TAG}\n(.*?)-->", svg, re.S)
    if not m:
        raise ValueError(f"{path}: no embedded data block")
    return list(csv.DictReader(io.StringIO(m.group(1))))
