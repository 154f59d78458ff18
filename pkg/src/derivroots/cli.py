"""Command-line front end: ``derivroots <experiment> --config run.json``.

Each run gets a fresh directory under ``--out`` holding ``manifest.json``
(written first), ``report.json``, ``trials.csv`` and, for perturbation runs,
``scatter.csv`` and ``scatter.svg``.

Exit codes: 0 success, 1 runtime failure (the failing trial seed is printed
for ``--replay``), 2 invalid configuration (JSON diagnostics on stderr).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass
from xml.sax.saxutils import escape

from . import __version__, experiments
from .errors import DerivRootsError, TrialError, ValidationError

EXPERIMENTS = ("convergence", "anticonc", "counterexample", "moments", "perturbation", "frostman", "jensen")
LAYER_COLORS = {0: "black", 1: "blue"}
DEFAULT_STYLE = {"width": 640, "height": 640, "margin": 56, "marker_radius": 2.0, "title": None,
                 "colors": {}, "labels": {}, "other_color": "red"}


@dataclass(frozen=True)
class RunManifest:
    config_path: str | None
    output_dir: str
    experiment: str
    seed: int | None
    version: str
    timestamp: str

    def to_dict(self):
        return {"config_path": self.config_path, "output_dir": self.output_dir, "experiment": self.experiment,
                "seed": self.seed, "version": self.version, "timestamp": self.timestamp}


# ---------------------------------------------------------------- SVG


def _layer_rows(layers):
    if isinstance(layers, str):
        rows = list(csv.DictReader(io.StringIO(layers)))
    else:
        rows = list(layers)
    out = []
    for i, r in enumerate(rows):
        try:
            out.append((int(r["layer"]), float(r["re"]), float(r["im"])))
        except (KeyError, TypeError, ValueError):
            raise ValidationError("expected layer, re and im", f"layers[{i}]")
    return out


def _num(v):
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def _tick(v):
    s = f"{v:.3g}"
    return "0" if s == "-0" else s


def render_scatter(layers, style=None):
    """Deterministic SVG scatter plot of layered complex points.

    ``layers`` is scatter CSV text or rows with ``layer``, ``re`` and ``im``.
    Orders 0 and 1 draw black and blue, higher orders red unless ``style``
    says otherwise. Axes use one scale for both directions.
    """
    rows = _layer_rows(layers)
    if not rows:
        raise ValidationError("no points to plot", "layers")
    st = dict(DEFAULT_STYLE)
    st.update(style or {})
    W, H, pad = float(st["width"]), float(st["height"]), float(st["margin"])
    xs = [r[1] for r in rows]
    ys = [r[2] for r in rows]
    if not all(math.isfinite(v) for v in xs + ys):
        raise ValidationError("non-finite coordinate", "layers")
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0) or 1.0
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    half = 0.55 * span
    scale = min(W - 2 * pad, H - 2 * pad) / (2 * half)
    ox, oy = W / 2, H / 2

    def px(x):
        return ox + (x - cx) * scale

    def py(y):
        return oy - (y - cy) * scale

    order = sorted({r[0] for r in rows})
    colors = {int(k): v for k, v in st["colors"].items()}
    labels = {int(k): v for k, v in st["labels"].items()}
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(W)}" height="{_num(H)}" '
           f'viewBox="0 0 {_num(W)} {_num(H)}">',
           f'<rect x="0" y="0" width="{_num(W)}" height="{_num(H)}" fill="white"/>']
    if st["title"]:
        out.append(f'<text x="{_num(W / 2)}" y="{_num(pad / 2)}" text-anchor="middle" font-size="14">'
                   f'{escape(str(st["title"]))}</text>')
    # frame with extreme ticks, then the coordinate axes where visible
    lo_x, hi_x, lo_y, hi_y = cx - half, cx + half, cy - half, cy + half
    out.append(f'<g id="axes" stroke="#888" fill="none" stroke-width="1">')
    out.append(f'<rect x="{_num(px(lo_x))}" y="{_num(py(hi_y))}" width="{_num(2 * half * scale)}" '
               f'height="{_num(2 * half * scale)}"/>')
    if lo_y <= 0 <= hi_y:
        out.append(f'<line x1="{_num(px(lo_x))}" y1="{_num(py(0))}" x2="{_num(px(hi_x))}" y2="{_num(py(0))}"/>')
    if lo_x <= 0 <= hi_x:
        out.append(f'<line x1="{_num(px(0))}" y1="{_num(py(lo_y))}" x2="{_num(px(0))}" y2="{_num(py(hi_y))}"/>')
    out.append("</g>")
    out.append('<g id="ticks" font-size="10" fill="#444">')
    for v in (lo_x, cx, hi_x):
        out.append(f'<text x="{_num(px(v))}" y="{_num(py(lo_y) + 14)}" text-anchor="middle">{_tick(v)}</text>')
    for v in (lo_y, cy, hi_y):
        out.append(f'<text x="{_num(px(lo_x) - 4)}" y="{_num(py(v) + 3)}" text-anchor="end">{_tick(v)}</text>')
    out.append("</g>")
    rad = _num(float(st["marker_radius"]))
    for layer in order:
        color = colors.get(layer, LAYER_COLORS.get(layer, st["other_color"]))
        out.append(f'<g id="layer-{layer}" fill="{escape(color)}">')
        out.extend(f'<circle cx="{_num(px(x))}" cy="{_num(py(y))}" r="{rad}"/>'
                   for lay, x, y in rows if lay == layer)
        out.append("</g>")
    out.append('<g id="legend" font-size="12">')
    for i, layer in enumerate(order):
        color = colors.get(layer, LAYER_COLORS.get(layer, st["other_color"]))
        label = labels.get(layer, f"zeros of P^({layer})" if layer else "roots of P")
        y = pad / 2 + 16 * i + 12
        out.append(f'<rect x="{_num(W - pad - 120)}" y="{_num(y - 8)}" width="8" height="8" '
                   f'fill="{escape(color)}"/>')
        out.append(f'<text x="{_num(W - pad - 106)}" y="{_num(y)}">{escape(label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- diagnostics


def _field_line(text, fld):
    """Best-effort line number of the last key named in a field path."""
    if not text or not fld:
        return None
    keys = [k for k in re.split(r"[.\[\]]", fld) if k and not k.isdigit() and k != "config"]
    if not keys:
        return None
    pat = re.compile(r'"' + re.escape(keys[-1]) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def _fail_validation(err, text=None, path=None):
    fld = getattr(err, "field", None)
    diag = {"error": "validation", "message": getattr(err, "message", str(err)), "field": fld,
            "line": _field_line(text, fld), "config": path}
    print(json.dumps(diag), file=sys.stderr)
    return 2


def _guess_experiment(obj):
    if isinstance(obj, dict):
        if obj.get("experiment") in EXPERIMENTS:
            return obj["experiment"]
        for key, name in (("mu", "perturbation"), ("q", "counterexample"), ("r_grid", "frostman"),
                          ("k_values", "jensen")):
            if key in obj:
                return name
    return "convergence"


def _load(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise _JSONError(e, text)
    return obj, text


class _JSONError(Exception):
    def __init__(self, err, text):
        super().__init__(str(err))
        self.err = err
        self.text = text


# ---------------------------------------------------------------- main


def _parser():
    p = argparse.ArgumentParser(prog="derivroots", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"derivroots {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("validate",):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        if name == "validate":
            s.add_argument("--experiment", choices=EXPERIMENTS, help="schema to check against")
            continue
        s.add_argument("--out", default="runs", help="parent of the per-run output directory")
        s.add_argument("--threads", type=int, help="worker threads (default: $DERIVROOTS_THREADS or CPU count)")
        if name != "counterexample":
            s.add_argument("--replay", type=int, metavar="SEED", help="rerun one trial from its trial seed")
            s.add_argument("--n", type=int, help="degree of the replayed trial")
            s.add_argument("--trial", type=int, default=0, help="index of the replayed trial")
        else:
            s.add_argument("--q", type=float)
            s.add_argument("--k", type=int)
            s.add_argument("--trials", type=int)
            s.add_argument("--seed", type=int)
    return p


def _counter_config(args, obj):
    d = dict(obj or {})
    for key in ("q", "k", "trials", "seed"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    d.setdefault("trials", 100000)
    d.setdefault("seed", 0)
    return experiments.parse_config("counterexample", d)


def _output_dir(base, experiment):
    os.makedirs(base, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
    return tempfile.mkdtemp(prefix=f"{experiment}-{stamp}-", dir=base)


def _write(dirpath, name, text):
    with open(os.path.join(dirpath, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump(obj):
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def main(argv=None):
    args = _parser().parse_args(argv)
    text = None
    try:
        obj = None
        if args.config:
            obj, text = _load(args.config)
        if args.command == "validate":
            if obj is None:
                raise ValidationError("--config is required", "--config")
            name = args.experiment or _guess_experiment(obj)
            experiments.parse_config(name, {k: v for k, v in obj.items() if k != "style"})
            print(json.dumps({"valid": True, "experiment": name, "config": args.config}))
            return 0
        style = None
        if isinstance(obj, dict):
            style = obj.get("style")
            obj = {k: v for k, v in obj.items() if k != "style"}
        if args.command == "counterexample":
            cfg = _counter_config(args, obj)
        else:
            if obj is None:
                raise ValidationError("--config is required", "--config")
            cfg = experiments.parse_config(args.command, obj)
        threads = args.threads if args.threads is not None else experiments.default_threads()
        if threads < 1:
            raise ValidationError(f"must be >= 1, got {threads}", "--threads")
    except _JSONError as e:
        diag = {"error": "validation", "message": e.err.msg, "field": None, "line": e.err.lineno,
                "column": e.err.colno, "config": args.config}
        print(json.dumps(diag), file=sys.stderr)
        return 2
    except ValidationError as e:
        return _fail_validation(e, text, args.config)
    except OSError as e:
        print(json.dumps({"error": "io", "message": str(e), "config": args.config}), file=sys.stderr)
        return 2

    outdir = _output_dir(args.out, args.command)
    manifest = RunManifest(os.path.abspath(args.config) if args.config else None, os.path.abspath(outdir),
                           args.command, getattr(cfg, "seed", None), __version__,
                           _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    _write(outdir, "manifest.json", _dump(manifest.to_dict()))
    try:
        if getattr(args, "replay", None) is not None:
            n = args.n
            if n is None:
                grid = getattr(cfg, "n_grid", None) or (getattr(cfg, "n", None),)
                if len(grid) != 1:
                    raise ValidationError("several n in the grid; pass --n", "--n")
                n = grid[0]
            report = experiments.replay(args.command, cfg, n, args.replay, args.trial)
        else:
            report = experiments.run(args.command, cfg, threads)
    except ValidationError as e:
        return _fail_validation(e, text, args.config)
    except TrialError as e:
        print(f"error: {e}", file=sys.stderr)
        print(f"replay: derivroots {args.command} --config {args.config} --replay {e.seed} --n {e.n} "
              f"--trial {e.trial}", file=sys.stderr)
        return 1
    except DerivRootsError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    payload = report.to_json()
    payload["manifest"] = manifest.to_dict()
    if style is not None:
        payload["style"] = style
    _write(outdir, "report.json", _dump(payload))
    if report.records:
        _write(outdir, "trials.csv", report.to_csv())
    if report.scatter:
        _write(outdir, "scatter.csv", report.scatter_csv())
        _write(outdir, "scatter.svg", render_scatter(report.scatter, style))
    if args.command == "counterexample":
        print(json.dumps(report.extra))
    else:
        print(json.dumps({"output_dir": manifest.output_dir, "experiment": args.command}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
