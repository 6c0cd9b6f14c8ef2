"""Figures for reports: rendered PNGs plus a regenerable plotting script."""
from __future__ import annotations

import io as _io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import write_atomic  # noqa: E402

_SCRIPT = '''"""Regenerate {png} from {csv}. Run with: python {script}"""
import csv
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

with open("{csv}") as fh:
    rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
header, data = rows[0], [[float(v) for v in r] for r in rows[1:] if r]
col = {{name: [r[i] for r in data] for i, name in enumerate(header)}}
t = [1.0 + v for v in col["{x}"]]
fig, ax = plt.subplots(figsize=(6, 4))
for name in {channels!r}:
    ys = [abs(v) for v in col[name]]
    ax.plot(t, ys, label=name)
ax.set_xscale("log")
ax.set_yscale("{yscale}")
ax.set_xlabel("1 + {x}")
ax.set_title("{title}")
ax.legend()
fig.tight_layout()
fig.savefig("{png}", dpi=100)
'''


def plot_script(csv_name: str, png_name: str, script_name: str, channels, x: str = "time",
                title: str = "", yscale: str = "log") -> str:
    return _SCRIPT.format(csv=csv_name, png=png_name, script=script_name, x=x,
                          channels=list(channels), title=title, yscale=yscale)


def render_curves(path, x, curves: dict, title: str = "", xlabel: str = "1 + t",
                  loglog: bool = True, reference: dict | None = None) -> str:
    """Render ``curves`` (name -> y array) against ``1 + x`` into a PNG.

    ``reference`` holds dashed comparison curves. Returns the file hash.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = 1.0 + np.asarray(x, dtype=float)
    for name, y in curves.items():
        y = np.abs(np.asarray(y, dtype=float))
        ok = y > 0
        ax.plot(xs[ok], y[ok], label=name)
    for name, y in (reference or {}).items():
        ax.plot(xs, np.asarray(y, dtype=float), "--", label=name)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    buf = _io.BytesIO()
    # fixed metadata keeps the bytes reproducible
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    return write_atomic(Path(path), buf.getvalue())
