"""Render publication-style figures from slmlab CSV artifacts.

Four figure kinds are supported:

* ``mse-curves``: error curves against observations or snr, log y-axis,
  from ``slm_sweep.csv`` or ``scalar_curve.csv``.
* ``roc``: unit-square detection curves from ``lambda,fpr,tpr`` files.
* ``fixed-point``: the information fixed-point curve (I' against the
  measurement rate) from ``fixed_point_curve.csv``.
* ``phase-diagram``: difficulty bands on the measurement-rate axis from
  a ``phase.csv`` transition row.

Figure specs are JSON files; see :class:`FigureSpec`.  Styling is fixed
in one place and no timestamps are embedded, so re-rendering the same
inputs yields byte-identical images.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["FigureSpec", "SchemaError", "render", "main"]

KINDS = ("mse-curves", "roc", "fixed-point", "phase-diagram")

#: Schema (required header) per figure kind and accepted CSV basename.
_SCHEMAS = {
    "slm_sweep.csv": ["M_obs", "amp_sq_err", "amp_post_var", "replica_mmse"],
    "scalar_curve.csv": ["s", "avg_sq_err", "avg_post_var", "avg_mmse"],
    "roc": ["lambda", "fpr", "tpr"],
    "fixed_point_curve.csv": ["delta", "M", "I_prime"],
    "phase.csv": ["delta_star", "delta_alg", "M_minus", "M_plus"],
}

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "svg.hashsalt": "slm-figures",
}

_PNG_METADATA = {"Software": "slm-figures"}


class SchemaError(ValueError):
    """Input CSV does not carry the expected columns."""


@dataclass
class FigureSpec:
    """Declarative description of one figure.

    ``inputs`` maps legend labels to CSV paths.  ``manifest`` optionally
    points at a run manifest; when its results block carries transition
    rates they are drawn as vertical markers, scaled by
    ``marker_scale`` (e.g. the signal dimension when the x-axis counts
    observations).
    """

    kind: str
    inputs: dict[str, str]
    output: str
    x_scale: str = "linear"
    y_scale: str = "linear"
    title: str = ""
    manifest: str | None = None
    marker_scale: float = 1.0

    @staticmethod
    def from_json(path: str) -> "FigureSpec":
        with open(path) as fh:
            raw = json.load(fh)
        unknown = set(raw) - {
            "kind", "inputs", "output", "x_scale", "y_scale", "title",
            "manifest", "marker_scale",
        }
        if unknown:
            raise ValueError(f"{path}: unknown spec keys {sorted(unknown)}")
        spec = FigureSpec(**raw)
        if spec.kind not in KINDS:
            raise ValueError(f"{path}: kind must be one of {KINDS}, got {spec.kind!r}")
        base = os.path.dirname(os.path.abspath(path))
        spec.inputs = {k: _resolve(base, v) for k, v in spec.inputs.items()}
        if spec.manifest:
            spec.manifest = _resolve(base, spec.manifest)
        if not os.path.isabs(spec.output):
            spec.output = os.path.join(base, spec.output)
        return spec


def _resolve(base: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base, path)


def _read_csv(path: str, expected: list[str]) -> dict[str, list[float]]:
    if not os.path.exists(path):
        raise SchemaError(f"input CSV does not exist: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != expected:
            raise SchemaError(
                f"{path}: expected columns {expected}, found {header}"
            )
        cols: dict[str, list[float]] = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(float(v) if v not in ("true", "false") else float(v == "true"))
    return cols


def _expected_header(kind: str, path: str) -> list[str]:
    name = os.path.basename(path)
    if kind == "roc":
        return _SCHEMAS["roc"]
    if name in _SCHEMAS:
        return _SCHEMAS[name]
    # fall back on figure kind for renamed files
    if kind == "mse-curves":
        raise SchemaError(
            f"{path}: mse-curves expects slm_sweep.csv or scalar_curve.csv naming"
        )
    if kind == "fixed-point":
        return _SCHEMAS["fixed_point_curve.csv"]
    return _SCHEMAS["phase.csv"]


def _transition_markers(spec: FigureSpec) -> dict[str, float]:
    if not spec.manifest:
        return {}
    with open(spec.manifest) as fh:
        manifest = json.load(fh)
    results = manifest.get("results", {})
    out = {}
    for key in ("delta_star", "delta_alg"):
        if key in results:
            out[key] = float(results[key]) * spec.marker_scale
    return out


def _render_mse_curves(spec: FigureSpec, ax) -> None:
    for label, path in sorted(spec.inputs.items()):
        cols = _read_csv(path, _expected_header(spec.kind, path))
        names = list(cols)
        x = cols[names[0]]
        for col in names[1:]:
            ax.plot(x, cols[col], label=f"{label}:{col}" if len(spec.inputs) > 1 else col)
        ax.set_xlabel(names[0])
    ax.set_ylabel("squared error")
    ax.set_yscale("log")  # error panels are always log-scale in y
    for name, x in _transition_markers(spec).items():
        ax.axvline(x, linestyle="--", color="k", alpha=0.6)
        ax.annotate(name, (x, ax.get_ylim()[1]), fontsize=8, ha="left", va="top")
    ax.legend(fontsize=8)


def _render_roc(spec: FigureSpec, ax) -> None:
    for label, path in sorted(spec.inputs.items()):
        cols = _read_csv(path, _SCHEMAS["roc"])
        pts = sorted(zip(cols["fpr"], cols["tpr"]))
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label)
    ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=1.0)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=8, loc="lower right")


def _render_fixed_point(spec: FigureSpec, ax) -> None:
    for label, path in sorted(spec.inputs.items()):
        cols = _read_csv(path, _expected_header(spec.kind, path))
        ax.plot(cols["delta"], cols["I_prime"], label=label)
    ax.set_xlabel("measurement rate")
    ax.set_ylabel("information rate derivative")
    for name, x in _transition_markers(spec).items():
        ax.axvline(x, linestyle="--", color="k", alpha=0.6)
    if len(spec.inputs) > 1:
        ax.legend(fontsize=8)


def _render_phase_diagram(spec: FigureSpec, ax) -> None:
    (path,) = list(spec.inputs.values())
    cols = _read_csv(path, _SCHEMAS["phase.csv"])
    if not cols["delta_star"]:
        raise SchemaError(f"{path}: no transition row to draw")
    d_star, d_alg = cols["delta_star"][0], cols["delta_alg"][0]
    top = max(1.25 * d_alg, d_alg + 0.1)
    ax.axhspan(0.0, d_star, color="0.85")
    ax.axhspan(d_star, d_alg, color="#f4c7c3")
    ax.axhspan(d_alg, top, color="#c3d7f4")
    ax.axhline(d_star, color="k", linewidth=1.0)
    ax.axhline(d_alg, color="k", linewidth=1.0, linestyle="--")
    ax.text(0.5, d_star / 2, "impossible", ha="center", va="center")
    ax.text(0.5, (d_star + d_alg) / 2, "hard", ha="center", va="center")
    ax.text(0.5, (d_alg + top) / 2, "easy", ha="center", va="center")
    ax.set_ylim(0, top)
    ax.set_xticks([])
    ax.set_ylabel("observations per unknown")


_RENDERERS = {
    "mse-curves": _render_mse_curves,
    "roc": _render_roc,
    "fixed-point": _render_fixed_point,
    "phase-diagram": _render_phase_diagram,
}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path.

    The written image depends only on the input files and the spec:
    fixed style, fixed metadata, no timestamps.
    """
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            _RENDERERS[spec.kind](spec, ax)
            if spec.x_scale != "linear":
                ax.set_xscale(spec.x_scale)
            if spec.kind not in ("mse-curves",) and spec.y_scale != "linear":
                ax.set_yscale(spec.y_scale)
            if spec.title:
                ax.set_title(spec.title)
            fig.tight_layout()
            out_dir = os.path.dirname(spec.output)
            if out_dir:
                os.makedirs(out_dir, exist_ok=True)
            fig.savefig(spec.output, format="png", metadata=_PNG_METADATA)
        finally:
            plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slm-figures", description="Render figures from slmlab CSV artifacts"
    )
    parser.add_argument("--spec", required=True, help="figure spec JSON file")
    args = parser.parse_args(argv)
    try:
        out = render(FigureSpec.from_json(args.spec))
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
