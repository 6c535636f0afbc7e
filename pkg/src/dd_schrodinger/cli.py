"""Command line driver: ``dd-schrodinger --config FILE [overrides]``.

Exit status: 0 when every interface solve converged, 2 when a solve diverged,
broke down or stopped at the iteration cap, 1 on configuration errors.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
import warnings
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .algorithms import METHODS, SOLVERS, RunConfig, RunReport, run
from .errors import BadConfig, Breakdown, DDError, Diverged, DimensionTooLarge, InnerSolveFailed
from .interface import Decomposition, build_explicit, probe_dense, spectrum_small
from .mesh import DecompositionPlan
from .runtime import Runtime
from .subdomain import write_snapshot
from .transmission import TransmissionSpec

__all__ = ["main", "load_config", "emit_reports", "DEFAULTS", "EMIT_CHOICES"]

EMIT_CHOICES = ("csv", "svg", "snapshots", "spectrum")

DEFAULTS: Dict[str, Dict[str, object]] = {
    "domain": {"x_l": -16.0, "x_r": 16.0, "y_b": -8.0, "y_u": 8.0},
    "mesh": {"dx": 1 / 128, "dy": 1 / 8},
    "time": {"T": 0.5, "dt": 0.01, "steps": 0},
    "decomposition": {"N": 2, "outer": "same", "runtime": "sequential"},
    "transmission": {"kind": "robin", "p": 15.0, "m": 5, "theta": math.pi / 4},
    "method": {"name": "dds-new", "preconditioned": False, "potential": "0"},
    "solver": {"name": "gmres", "init": "zero", "seed": 0, "tol": 1e-10, "max_iter": 1000,
               "restart": 200, "inner_tol": 1e-12, "spectrum_cap": 4096},
    "output": {"dir": "out", "emit": ["csv"]},
}

# total cell count above which a run is flagged as cluster scale
_CLUSTER_CELLS = 2_000_000


def _merge(base, extra, where):
    out = {k: dict(v) for k, v in base.items()}
    for section, values in extra.items():
        if section not in out:
            raise BadConfig(f"unknown config section [{section}] in {where}")
        if not isinstance(values, dict):
            raise BadConfig(f"[{section}] must be a table in {where}")
        for key, val in values.items():
            if key not in out[section]:
                raise BadConfig(f"unknown key {key!r} in [{section}] of {where}")
            out[section][key] = val
    return out


def _resolve_config_path(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    preset = resources.files("dd_schrodinger").joinpath("presets", p.name)
    if preset.is_file():
        return Path(str(preset))
    raise BadConfig(f"config file {path!r} not found")


def load_config(path: Optional[str] = None) -> Dict[str, Dict[str, object]]:
    """Defaults updated with a TOML file; unknown sections or keys raise ``BadConfig``."""
    cfg = {k: dict(v) for k, v in DEFAULTS.items()}
    if path:
        p = _resolve_config_path(path)
        try:
            with open(p, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise BadConfig(f"cannot parse {p}: {exc}") from exc
        cfg = _merge(cfg, data, str(p))
    return cfg


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dd-schrodinger",
                                 description="Schwarz domain decomposition for the 2-D Schrodinger equation")
    ap.add_argument("--config", help="TOML file (or name of a shipped preset)")
    ap.add_argument("--method", choices=METHODS)
    ap.add_argument("--tc", choices=("robin", "pade"), help="transmission condition")
    ap.add_argument("--p", type=float, help="Robin parameter")
    ap.add_argument("--m", type=int, help="Pade order")
    ap.add_argument("--solver", choices=SOLVERS)
    ap.add_argument("--init", choices=("zero", "random"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--subdomains", type=int)
    ap.add_argument("--dx", type=float)
    ap.add_argument("--dy", type=float)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--T", type=float)
    ap.add_argument("--steps", type=int, help="number of DDS steps to run (0: all)")
    ap.add_argument("--potential", help="V(t, x, y), e.g. 'x^2+y^2'")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--max-iter", type=int, dest="max_iter")
    ap.add_argument("--preconditioned", action="store_true", default=None)
    ap.add_argument("--runtime", choices=("sequential", "threads"))
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--emit", action="append",
                    help="artifacts to write: csv, svg, snapshots, spectrum (repeat or comma-separate)")
    return ap


def _apply_overrides(cfg, ns):
    pairs = [
        ("method", "method", "name"), ("tc", "transmission", "kind"), ("p", "transmission", "p"),
        ("m", "transmission", "m"), ("solver", "solver", "name"), ("init", "solver", "init"),
        ("seed", "solver", "seed"), ("subdomains", "decomposition", "N"), ("dx", "mesh", "dx"),
        ("dy", "mesh", "dy"), ("dt", "time", "dt"), ("T", "time", "T"), ("steps", "time", "steps"),
        ("potential", "method", "potential"), ("tol", "solver", "tol"),
        ("max_iter", "solver", "max_iter"), ("preconditioned", "method", "preconditioned"),
        ("runtime", "decomposition", "runtime"), ("out", "output", "dir"),
    ]
    for attr, section, key in pairs:
        val = getattr(ns, attr)
        if val is not None:
            cfg[section][key] = val
    if ns.emit:
        items = []
        for e in ns.emit:
            items.extend(x.strip() for x in e.split(",") if x.strip())
        cfg["output"]["emit"] = items
    return cfg


def build_run_config(cfg) -> RunConfig:
    d, mesh, tm, dec = cfg["domain"], cfg["mesh"], cfg["time"], cfg["decomposition"]
    tr, me, so = cfg["transmission"], cfg["method"], cfg["solver"]
    emit = cfg["output"]["emit"]
    if isinstance(emit, str):
        emit = [emit]
    bad = [e for e in emit if e not in EMIT_CHOICES]
    if bad:
        raise BadConfig(f"unknown emit option(s) {bad}; choose from {', '.join(EMIT_CHOICES)}")
    plan = DecompositionPlan(float(d["x_l"]), float(d["x_r"]), float(d["y_b"]), float(d["y_u"]),
                             int(dec["N"]), float(mesh["dx"]), float(mesh["dy"]), float(tm["T"]),
                             float(tm["dt"]))
    cells = (plan.N_x - 1) * plan.N * (plan.N_y - 1)
    if cells > _CLUSTER_CELLS:
        warnings.warn(f"{cells} cells: cluster-scale problem, expect long run times and large memory use",
                      stacklevel=2)
    kind = str(tr["kind"]).lower()
    spec = TransmissionSpec(kind, p=float(tr["p"]), m=int(tr["m"]), theta=float(tr["theta"]))
    steps = int(tm["steps"]) or None
    return RunConfig(plan, spec, str(me["potential"]), method=str(me["name"]),
                     preconditioned=bool(me["preconditioned"]), solver=str(so["name"]),
                     init=str(so["init"]), seed=int(so["seed"]), tol=float(so["tol"]),
                     max_iter=int(so["max_iter"]), restart=int(so["restart"]), steps=steps,
                     outer=str(dec["outer"]), runtime=str(dec["runtime"]),
                     inner_tol=float(so["inner_tol"]))


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _atomic_write(path: Path, data, binary: bool = False):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb" if binary else "w", newline=None if binary else "") as fh:
            if callable(data):
                data(fh)
            else:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def history_csv(report: RunReport) -> str:
    lines = ["step,iteration,residual"]
    for step, hist in enumerate(report.histories, start=1):
        for it, res in enumerate(hist):
            lines.append(f"{step},{it},{_fmt(res)}")
    return "\n".join(lines) + "\n"


def read_history_csv(path) -> Dict[int, list]:
    out: Dict[int, list] = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            step, _, res = line.strip().split(",")
            out.setdefault(int(step), []).append(float(res))
    return out


def summary_text(report: RunReport, extra: Optional[Dict[str, object]] = None) -> str:
    lines = ["[result]", f"method = {report.method}", f"converged = {report.converged}",
             f"steps = {len(report.solve_reports)}",
             f"first_step_iterations = {report.first_step_iterations}",
             f"total_iterations = {sum(report.iterations)}",
             f"t_final = {_fmt(report.t_final)}"]
    finals = [r.final_residual for r in report.solve_reports]
    if finals:
        lines.append(f"max_final_residual = {_fmt(max(finals))}")
    lines.append("")
    lines.append("[counters]")
    lines += [f"{k} = {v}" for k, v in report.counters.items()]
    lines.append("")
    lines.append("[timings_seconds]")
    lines += [f"{k} = {v:.6f}" for k, v in report.timings.items()]
    lines.append("")
    lines.append("[config]")
    for k, v in report.config.echo().items():
        lines.append(f"{k} = {_fmt(v) if isinstance(v, float) else v}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def _svg_plot(series, title, xlabel, ylabel, logy=False, scatter=False, width=640, height=420):
    """Minimal SVG line or scatter plot of ``series = [(label, xs, ys), ...]``."""
    pad = 60
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.zeros(1)
    if logy:
        ys_all = np.log10(np.maximum(ys_all, 1e-300))
    if xs_all.size == 0:
        xs_all = ys_all = np.zeros(1)
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="15" y="{height / 2}" font-size="12" transform="rotate(-90 15 {height / 2})"'
           f' text-anchor="middle">{ylabel}</text>',
           f'<text x="{pad - 5}" y="{py(y0)}" text-anchor="end" font-size="10">{y0:.3g}</text>',
           f'<text x="{pad - 5}" y="{py(y1)}" text-anchor="end" font-size="10">{y1:.3g}</text>',
           f'<text x="{px(x0)}" y="{height - pad + 15}" text-anchor="middle" font-size="10">{x0:.3g}</text>',
           f'<text x="{px(x1)}" y="{height - pad + 15}" text-anchor="middle" font-size="10">{x1:.3g}</text>']
    for i, (label, xs, ys) in enumerate(series):
        c = colors[i % len(colors)]
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        if logy:
            ys = np.log10(np.maximum(ys, 1e-300))
        if scatter:
            out += [f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2" fill="{c}"/>' for x, y in zip(xs, ys)]
        elif len(xs):
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{c}"/>')
        out.append(f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" font-size="11"'
                   f' fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def compute_spectra(cfg: RunConfig, cap: int = 4096) -> Dict[str, np.ndarray]:
    """Eigenvalues of ``I - L`` (first DDS step or the SWR window) and, for a
    preconditioned run, of ``P^{-1}(I - L)``."""
    n_steps = cfg.plan.N_T if cfg.method.startswith("swr") else 1
    dec = Decomposition(cfg.plan, cfg.spec, cfg.potential, outer=cfg.outer, runtime=Runtime(cfg.runtime))
    dim = dec.layout(n_steps).size
    if dim > cap:
        raise DimensionTooLarge(f"interface dimension {dim} exceeds spectrum cap {cap}")
    L = probe_dense(lambda E: dec.apply(E, n_steps), dim)
    A = np.eye(dim) - L
    out = {"I-L": spectrum_small(A, cap)}
    if cfg.preconditioned:
        free = Decomposition(cfg.plan, cfg.spec, None, outer="same", runtime=Runtime(cfg.runtime))
        P = np.eye(dim) - build_explicit(free, n_steps).to_dense()
        out["P^-1(I-L)"] = spectrum_small(np.linalg.solve(P, A), cap)
    return out


def emit_reports(report: RunReport, out_dir, emit: Iterable[str] = ("csv",), spectra=None) -> list:
    """Write the requested artifacts; returns the written paths."""
    out = Path(out_dir)
    emit = set(emit)
    written = []
    _atomic_write(out / "summary.txt", summary_text(report))
    written.append(out / "summary.txt")
    if "csv" in emit:
        _atomic_write(out / "history.csv", history_csv(report))
        written.append(out / "history.csv")
    if "svg" in emit:
        series = [(f"step {k}", np.arange(len(h)), h) for k, h in enumerate(report.histories[:5], start=1)]
        _atomic_write(out / "convergence.svg",
                      _svg_plot(series, "interface residual", "iteration", "log10 residual", logy=True))
        written.append(out / "convergence.svg")
    if "spectrum" in emit and spectra:
        lines = ["operator,index,re,im"]
        for label, ev in spectra.items():
            lines += [f"{label},{i},{_fmt(z.real)},{_fmt(z.imag)}" for i, z in enumerate(ev)]
        _atomic_write(out / "spectrum.csv", "\n".join(lines) + "\n")
        written.append(out / "spectrum.csv")
        if "svg" in emit:
            series = [(label, ev.real, ev.imag) for label, ev in spectra.items()]
            _atomic_write(out / "spectrum.svg",
                          _svg_plot(series, "eigenvalues", "Re", "Im", scatter=True))
            written.append(out / "spectrum.svg")
    if "snapshots" in emit and report.fields:
        plan = report.config.plan
        field = report.global_field()
        path = out / "u_final.bin"
        out.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=out, prefix=".u_final.bin.")
        os.close(fd)
        try:
            write_snapshot(tmp, field, plan.dx, plan.dy, report.t_final)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        written.append(path)
    return written


def main(args=None) -> int:
    ns = _parser().parse_args(args)
    try:
        cfg = _apply_overrides(load_config(ns.config), ns)
        run_cfg = build_run_config(cfg)
        emit = cfg["output"]["emit"]
        emit = [emit] if isinstance(emit, str) else list(emit)
        out_dir = cfg["output"]["dir"]
        cap = int(cfg["solver"]["spectrum_cap"])
    except (DDError, ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        report = run(run_cfg)
    except (Diverged, Breakdown, InnerSolveFailed) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except DDError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    spectra = None
    if "spectrum" in emit:
        try:
            spectra = compute_spectra(run_cfg, cap)
        except DimensionTooLarge as exc:
            print(f"spectrum skipped: {exc}", file=sys.stderr)
    emit_reports(report, out_dir, emit, spectra)
    its = report.iterations
    print(f"{report.method}: {len(its)} interface solve(s), iterations {its[:10]}"
          f"{' ...' if len(its) > 10 else ''}, converged={report.converged}")
    print(f"artifacts in {out_dir}")
    return 0 if report.converged else 2


if __name__ == "__main__":
    sys.exit(main())
