"""Figure definitions: each maps persisted sweep files onto one plot.

Every figure validates that its inputs come from the parameter point it
depicts (method, drive, spacing structure) using only the metadata embedded
in the files, then arranges the tabulated numbers on axes that mirror the
reference layout. Nothing here recomputes or extrapolates the physics; the
only arithmetic is axis transforms (log N) and shared normalization of
already-computed intensities.

Rendering is deterministic: a fixed style context, sorted series order, and
stripped image metadata make repeated renders of the same inputs
byte-identical.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import InputError, read_map, read_rows

__all__ = ["FIGURES", "FigureSpec", "render"]

_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "legend.fontsize": 8,
    "font.family": "DejaVu Sans",
    "mathtext.fontset": "dejavusans",
}

_P1 = r"$\overline{p}_1$"


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: which figure, from which files, to which image."""

    figure: str
    inputs: tuple
    out: str


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InputError(message)


def _uniform(rows, attr: str):
    """The single value an attribute takes across rows, else a config mismatch."""
    values = sorted({getattr(r, attr) for r in rows})
    _require(
        len(values) == 1,
        f"inputs mix parameter points: {attr} takes values {values} "
        f"(files: {sorted({r.source for r in rows})})",
    )
    return values[0]


def _steady(rows, figure: str):
    out = [r for r in rows if r.method != "disorder"]
    _require(bool(out), f"figure {figure} needs steady-state rows, none found")
    _require(
        all(r.epsilon is None for r in out),
        f"figure {figure} depicts ordered chains; inputs carry disorder strengths",
    )
    return out


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


# ---------------------------------------------------------------------------
# individual figures
# ---------------------------------------------------------------------------

def _fig_2a(inputs, ax) -> None:
    """Mean p1 vs lattice spacing, one curve per chain length."""
    rows = _steady([r for p in inputs for r in read_rows(p)], "2a")
    _require(all(r.method == "meanfield" for r in rows),
             "figure 2a plots the mean-field spacing sweep; non-meanfield rows present")
    _uniform(rows, "rabi"), _uniform(rows, "detuning")
    spacings = sorted({r.spacing for r in rows})
    _require(len(spacings) >= 5,
             f"figure 2a needs a spacing sweep, got only {len(spacings)} distinct d")
    _require(min(spacings) <= 1.0 and max(spacings) >= 3.0,
             f"figure 2a shows maxima at d/lambda = 1, 2, 3; inputs cover only "
             f"[{min(spacings):g}, {max(spacings):g}]")
    for n in sorted({r.n for r in rows}):
        pts = sorted((r.spacing, r.p1_bar) for r in rows if r.n == n)
        ax.plot(*zip(*pts), label=f"$N={n}$")
    ax.set_xlabel(r"$d/\lambda$")
    ax.set_ylabel(_P1)
    ax.legend()


def _fig_2b(inputs, ax) -> None:
    """Mean p1 vs atom number at d=lambda and 2*lambda, all methods overlaid."""
    per_file = {p: _steady(read_rows(p), "2b") for p in inputs}
    allrows = [r for rows in per_file.values() for r in rows]
    _uniform(allrows, "rabi"), _uniform(allrows, "detuning")
    spacings = sorted({r.spacing for r in allrows})
    _require(set(spacings) <= {1.0, 2.0},
             f"figure 2b compares d/lambda = 1 and 2; inputs carry d = {spacings}")
    _require(len(spacings) == 2, f"figure 2b needs both d = 1 and d = 2, got {spacings}")
    color = {1.0: "tab:green", 2.0: "tab:red"}
    markers = iter(["o", "x", "s", "+"])
    marker_for = {}
    for path in sorted(per_file):
        rows = per_file[path]
        for method in sorted({r.method for r in rows}):
            for d in spacings:
                pts = sorted((r.n, r.p1_bar) for r in rows
                             if r.method == method and r.spacing == d)
                if not pts:
                    continue
                if method == "meanfield":
                    ax.plot(*zip(*pts), color=color[d], linestyle="-",
                            label=f"MF, $d={d:g}\\lambda$")
                else:
                    key = (method, _stem(path))
                    if key not in marker_for:
                        marker_for[key] = next(markers)
                    ax.plot(*zip(*pts), color=color[d], linestyle="none",
                            marker=marker_for[key],
                            label=f"{method.upper()} ({_stem(path)}), $d={d:g}\\lambda$")
    ax.set_xlabel(r"$N$")
    ax.set_ylabel(_P1)
    ax.legend()


def _fig_3(inputs, ax) -> None:
    """Mean p1 vs (log10 N)^2: a straight-line family, one line per spacing."""
    rows = _steady([r for p in inputs for r in read_rows(p)], "3")
    _require(all(r.method == "meanfield" for r in rows),
             "figure 3 plots the mean-field scaling sweep; non-meanfield rows present")
    _uniform(rows, "rabi"), _uniform(rows, "detuning")
    spacings = sorted({r.spacing for r in rows})
    _require(len(spacings) >= 3 and all(abs(d - round(d)) < 1e-9 for d in spacings),
             f"figure 3 needs several integer spacings, got {spacings}")
    cmap = plt.get_cmap("cool")
    n_all = set()
    for i, d in enumerate(spacings):
        pts = sorted((math.log10(r.n) ** 2, r.p1_bar) for r in rows if r.spacing == d)
        _require(len(pts) >= 3, f"figure 3 needs >= 3 chain lengths per spacing at d={d:g}")
        chroma = cmap(i / max(len(spacings) - 1, 1))
        ax.plot(*zip(*pts), marker="o", markersize=3, color=chroma,
                label=f"$d={d:g}\\lambda$")
        n_all.update(r.n for r in rows if r.spacing == d)
    ax.set_xlabel(r"$(\log_{10} N)^2$")
    ax.set_ylabel(_P1)
    top = ax.secondary_xaxis(
        "top",
        functions=(lambda x: x, lambda x: x),
    )
    ticks = sorted(n_all)
    top.set_xticks([math.log10(n) ** 2 for n in ticks])
    top.set_xticklabels([str(n) for n in ticks])
    top.set_xlabel(r"$N$")
    ax.legend()


def _fig_4(inputs, fig) -> None:
    """Far-field intensity maps, panels by chain length, shared normalization."""
    maps = [read_map(p) for p in inputs]
    for m in maps:
        for key in ("method", "n", "spacing", "rabi", "detuning"):
            _require(key in m.meta, f"{m.source!r} meta lacks {key!r}; not a sweep map")
    ref = {k: maps[0].meta[k] for k in ("method", "spacing", "rabi", "detuning")}
    for m in maps[1:]:
        got = {k: m.meta[k] for k in ref}
        _require(got == ref,
                 f"map {m.source!r} comes from a different parameter point: "
                 f"{got} != {ref}")
    maps.sort(key=lambda m: m.meta["n"])
    peak = float(maps[-1].intensity.max())
    _require(peak > 0, "reference map has zero intensity; nothing to normalize")
    axes = fig.subplots(1, len(maps), squeeze=False)[0]
    mesh = None
    for ax, m in zip(axes, maps):
        mesh = ax.pcolormesh(
            np.degrees(m.phi), np.degrees(m.theta), m.intensity.T / peak,
            shading="auto", vmin=0.0, vmax=1.0, cmap="inferno", rasterized=True,
        )
        ax.set_title(f"$N={m.meta['n']}$")
        ax.set_xlabel(r"$\phi$ (deg)")
    axes[0].set_ylabel(r"$\theta$ (deg)")
    for ax in axes[1:]:
        ax.set_yticklabels([])
    fig.colorbar(mesh, ax=list(axes), label="intensity / max", fraction=0.05)


def _fig_b1(inputs, ax) -> None:
    """Mean-field vs trajectory predictions at half-wavelength spacing."""
    per_file = {p: _steady(read_rows(p), "B1") for p in inputs}
    allrows = [r for rows in per_file.values() for r in rows]
    _uniform(allrows, "rabi"), _uniform(allrows, "detuning")
    d = _uniform(allrows, "spacing")
    _require(d == 0.5, f"figure B1 is the d = lambda/2 comparison, inputs have d = {d:g}")
    methods = {r.method for r in allrows}
    _require("meanfield" in methods and methods - {"meanfield"},
             f"figure B1 compares meanfield against a trajectory/exact method, got {sorted(methods)}")
    markers = iter(["o", "x", "s", "+"])
    for path in sorted(per_file):
        rows = per_file[path]
        for method in sorted({r.method for r in rows}):
            pts = sorted((r.n, r.p1_bar) for r in rows if r.method == method)
            if method == "meanfield":
                ax.plot(*zip(*pts), color="tab:red", label="MF")
            else:
                ax.plot(*zip(*pts), linestyle="none", marker=next(markers),
                        label=f"{method.upper()} ({_stem(path)})")
    ax.set_xlabel(r"$N$")
    ax.set_ylabel(_P1)
    ax.legend()


def _fig_b2(inputs, ax) -> None:
    """Mean p1 vs N at spacings away from integer multiples of the wavelength."""
    rows = _steady([r for p in inputs for r in read_rows(p)], "B2")
    _require(all(r.method == "meanfield" for r in rows),
             "figure B2 plots mean-field sweeps; non-meanfield rows present")
    _uniform(rows, "rabi"), _uniform(rows, "detuning")
    spacings = sorted({r.spacing for r in rows})
    _require(all(abs(d - round(d)) > 0.05 for d in spacings),
             f"figure B2 requires non-integer spacings, got {spacings}")
    for d in spacings:
        pts = sorted((r.n, r.p1_bar) for r in rows if r.spacing == d)
        _require(len(pts) >= 3, f"figure B2 needs an N sweep per spacing at d={d:g}")
        ax.plot(*zip(*pts), marker=".", label=f"$d={d:g}\\lambda$")
    ax.set_xlabel(r"$N$")
    ax.set_ylabel(_P1)
    ax.set_ylim(bottom=0)
    ax.legend()


def _fig_b3(inputs, ax) -> None:
    """Ground-population ratio vs N in the identical-atom (very large N) limit."""
    rows = _steady([r for p in inputs for r in read_rows(p)], "B3")
    _require(all(r.method == "identical-atom" for r in rows),
             "figure B3 plots the identical-atom reduction; other methods present")
    _uniform(rows, "rabi"), _uniform(rows, "detuning"), _uniform(rows, "spacing")
    _require(all(r.ratio is not None for r in rows),
             "figure B3 needs the ground-population ratio column")
    pts = sorted((r.n, r.ratio) for r in rows)
    _require(len(pts) >= 4 and pts[-1][0] / pts[0][0] >= 1e3,
             "figure B3 spans decades of N; inputs cover too narrow a range")
    ax.semilogx(*zip(*pts), marker="o", markersize=3, color="tab:blue")
    ax.axhline(1.0, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xlabel(r"$N$")
    ax.set_ylabel(r"$\overline{p}_1/\overline{p}_2$")
    ax.set_ylim(0, 1.05)


def _fig_disorder(inputs, ax) -> None:
    """Disorder-averaged p1 vs N, one errorbar series per disorder strength."""
    rows = [r for p in inputs for r in read_rows(p) if r.method == "disorder"]
    _require(bool(rows), "disorder figure needs disorder-ensemble rows, none found")
    _uniform(rows, "rabi"), _uniform(rows, "detuning"), _uniform(rows, "spacing")
    for eps in sorted({r.epsilon for r in rows}):
        pts = sorted((r.n, r.p1_bar, r.std) for r in rows if r.epsilon == eps)
        ns, means, stds = zip(*pts)
        ax.errorbar(ns, means, yerr=stds, marker="o", markersize=3, capsize=2,
                    label=f"$\\epsilon={eps:g}$")
    ax.set_xlabel(r"$N$")
    ax.set_ylabel(r"$\langle\overline{p}_1\rangle$")
    ax.legend()


_AXES_FIGURES = {
    "2a": (_fig_2a, (4.8, 3.2)),
    "2b": (_fig_2b, (4.8, 3.2)),
    "3": (_fig_3, (4.8, 3.4)),
    "B1": (_fig_b1, (4.8, 3.2)),
    "B2": (_fig_b2, (4.8, 3.2)),
    "B3": (_fig_b3, (4.8, 3.2)),
    "disorder": (_fig_disorder, (4.8, 3.2)),
}

FIGURES = tuple(sorted(list(_AXES_FIGURES) + ["4"]))


def render(spec: FigureSpec) -> str:
    """Render one figure to spec.out; returns the written path.

    Raises InputError when the figure id is unknown, inputs are missing or
    empty, or the embedded configs do not match the figure's parameter point.
    """
    _require(spec.figure in FIGURES,
             f"unknown figure {spec.figure!r}; choose from {', '.join(FIGURES)}")
    _require(bool(spec.inputs), f"figure {spec.figure} needs at least one input file")
    out_dir = os.path.dirname(os.path.abspath(spec.out))
    os.makedirs(out_dir, exist_ok=True)
    with plt.rc_context(_STYLE):
        if spec.figure == "4":
            fig = plt.figure(figsize=(2.6 * len(spec.inputs) + 1.2, 2.8))
            try:
                _fig_4(spec.inputs, fig)
                fig.savefig(spec.out, metadata={"Software": None})
            finally:
                plt.close(fig)
        else:
            func, size = _AXES_FIGURES[spec.figure]
            fig, ax = plt.subplots(figsize=size)
            try:
                func(spec.inputs, ax)
                fig.tight_layout()
                fig.savefig(spec.out, metadata={"Software": None})
            finally:
                plt.close(fig)
    return spec.out
