"""Static figures from the lattice suite's CSV outputs.

Four figure kinds: log-log localization-length scaling, smoothed-norm
slope fits, bound-report waterfalls and shell-mass traces.  Rendering is
deterministic: fixed fonts and sizes, hashed SVG ids salted with a
constant, no timestamps in the output metadata.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["FigureSpec", "RenderResult", "SchemaError", "EmptyDataError", "render", "main"]

KINDS = ("scaling", "normfit", "bounds", "shellmass")

_REQUIRED = {
    "scaling": ("sigma", "lambda", "eta", "log10_ell_lower"),
    "normfit": ("sigma", "j", "norm_kind", "value"),
    "bounds": ("sigma", "lambda", "term", "log10_value", "log10_target", "passed"),
    "shellmass": ("t", "norm", "shell_mass"),
}

_RC = {
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "figure.figsize": (6.4, 4.8),
    "figure.dpi": 100,
    "svg.hashsalt": "latticeloc-plots",
    "axes.unicode_minus": False,
}


class SchemaError(ValueError):
    pass


class EmptyDataError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str
    title: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


@dataclass
class RenderResult:
    out_path: str
    annotations: dict  # label -> (slope, stderr) or scalar values


def _read_csv(path: str, required) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: no header row") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing} (found {header})")
        cols = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(v)
    if not next(iter(cols.values()), []):
        raise EmptyDataError(f"{path}: no data rows")
    return cols


def _floats(vals):
    return [float(v) for v in vals]


def _fit(x, y):
    """Least squares slope/intercept/stderr, matching the producer's fit."""
    n = len(x)
    xm = sum(x) / n
    ym = sum(y) / n
    sxx = sum((xi - xm) ** 2 for xi in x)
    slope = sum((xi - xm) * (yi - ym) for xi, yi in zip(x, y)) / sxx
    intercept = ym - slope * xm
    ss_res = sum((yi - slope * xi - intercept) ** 2 for xi, yi in zip(x, y))
    stderr = math.sqrt(ss_res / max(n - 2, 1) / sxx)
    return slope, intercept, stderr


def _groups(cols, key):
    order, seen = [], set()
    for v in cols[key]:
        if v not in seen:
            seen.add(v)
            order.append(v)
    return order


def _render_scaling(cols, ax):
    annotations = {}
    for sval in _groups(cols, "sigma"):
        rows = [i for i, v in enumerate(cols["sigma"]) if v == sval]
        lam = [float(cols["lambda"][i]) for i in rows]
        ell = [float(cols["log10_ell_lower"][i]) for i in rows]
        eta = float(cols["eta"][rows[0]])
        x = [math.log10(v) for v in lam]
        ax.plot(x, ell, "o-", label=f"sigma={sval}")
        if len(rows) >= 2:
            slope, _b, err = _fit(x, ell)
            sigma = float(sval)
            if sigma < 0.5:
                pred = -(2.0 - eta) / (1.0 - 2.0 * sigma)
                note = f"slope {slope:.3f}+-{err:.3f} (pred {pred:.3f})"
            else:
                pred = None
                note = f"slope {slope:.3f}+-{err:.3f} (critical regime)"
            annotations[f"sigma={sval}"] = (slope, err)
            ax.annotate(note, (x[-1], ell[-1]), fontsize=8)
    ax.set_xlabel("log10 lambda")
    ax.set_ylabel("log10 localization length bound")
    ax.legend(fontsize=8)
    return annotations


def _render_normfit(cols, ax):
    annotations = {}
    rows_all = [i for i, k in enumerate(cols["norm_kind"]) if k == "linf_smoothed"]
    if not rows_all:
        raise EmptyDataError("normfit: no linf_smoothed rows")
    for sval in _groups(cols, "sigma"):
        rows = [i for i in rows_all if cols["sigma"][i] == sval]
        if len(rows) < 2:
            continue
        js = [float(cols["j"][i]) for i in rows]
        vals = [math.log2(float(cols["value"][i])) for i in rows]
        slope, intercept, err = _fit(js, vals)
        sigma = float(sval)
        pred = 1.0 - 2.0 * sigma
        ax.plot(js, vals, "o", label=f"sigma={sval}")
        ax.plot(js, [slope * j + intercept for j in js], "-", lw=0.8)
        ax.annotate(
            f"slope {slope:.4f}+-{err:.4f} (pred {pred:.2f})",
            (js[-1], vals[-1]),
            fontsize=8,
        )
        annotations[f"sigma={sval}"] = (slope, err)
    ax.set_xlabel("dyadic scale j")
    ax.set_ylabel("log2 smoothed sup norm")
    ax.legend(fontsize=8)
    return annotations


def _render_bounds(cols, ax):
    terms = [
        f"{t} (s={s}, l={l})"
        for t, s, l in zip(cols["term"], cols["sigma"], cols["lambda"])
    ]
    vals = _floats(cols["log10_value"])
    tgts = _floats(cols["log10_target"])
    ypos = range(len(terms))
    colors = ["#2a7" if float(p) > 0 else "#c33" for p in cols["passed"]]
    ax.barh(list(ypos), vals, color=colors)
    for y, t in zip(ypos, tgts):
        ax.plot([t, t], [y - 0.4, y + 0.4], "k-", lw=1.2)
    ax.set_yticks(list(ypos))
    ax.set_yticklabels(terms, fontsize=7)
    ax.set_xlabel("log10 value (bar) vs target (tick)")
    return {"terms": len(terms)}


def _render_shellmass(cols, ax):
    t = _floats(cols["t"])
    mass = _floats(cols["shell_mass"])
    norm = _floats(cols["norm"])
    ax.plot(t, mass, "o-", label="shell mass")
    ax.plot(t, norm, "s--", label="total norm", lw=0.8)
    ax.set_xlabel("time")
    ax.set_ylabel("mass")
    ax.legend(fontsize=8)
    return {"points": len(t)}


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure; raises before writing anything on bad input."""
    cols = _read_csv(spec.csv_path, _REQUIRED[spec.kind])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "scaling":
                ann = _render_scaling(cols, ax)
            elif spec.kind == "normfit":
                ann = _render_normfit(cols, ax)
            elif spec.kind == "bounds":
                ann = _render_bounds(cols, ax)
            else:
                ann = _render_shellmass(cols, ax)
            ax.set_title(spec.title or spec.kind)
            meta = {"Date": None} if spec.out_path.endswith(".svg") else {"Software": "plots"}
            fig.savefig(spec.out_path, metadata=meta)
        finally:
            plt.close(fig)
    return RenderResult(out_path=spec.out_path, annotations=ann)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plots", description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="csv_path", required=True)
    parser.add_argument("--out", dest="out_path", required=True)
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        result = render(FigureSpec(kind=args.kind, csv_path=args.csv_path,
                                   out_path=args.out_path, title=args.title))
    except (SchemaError, EmptyDataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(result.out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
