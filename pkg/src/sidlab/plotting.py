"""Figure rendering for ablation reports.

Writes PNG companions next to the metrics CSV: validity versus NFE and
degree-histogram TV versus NFE, one line per sampler.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsRow

_STYLE = {"sid": "o-", "cid": "s-", "ddm": "^--", "dfm": "v--", "corrector": "d-"}


def _series(rows: list[MetricsRow], attr: str) -> dict[str, tuple[list, list]]:
    out: dict[str, tuple[list, list]] = {}
    for row in rows:
        xs, ys = out.setdefault(row.sampler, ([], []))
        xs.append(row.nfe)
        ys.append(getattr(row, attr))
    return out


def _render(rows: list[MetricsRow], attr: str, ylabel: str, path: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for sampler, (xs, ys) in sorted(_series(rows, attr).items()):
        order = sorted(range(len(xs)), key=lambda i: xs[i])
        ax.plot(
            [xs[i] for i in order],
            [ys[i] for i in order],
            _STYLE.get(sampler, "o-"),
            label=sampler,
            markersize=4,
        )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("NFE")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_ablation_figures(rows: list[MetricsRow], stem: str) -> list[str]:
    paths = [f"{stem}_validity.png", f"{stem}_degree_tv.png"]
    _render(rows, "validity", "validity fraction", paths[0])
    _render(rows, "degree_tv", "degree histogram TV", paths[1])
    return paths
