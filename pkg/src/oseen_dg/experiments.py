"""Experiment drivers: uniform convergence tables and adaptive error curves.

Config files are INI text (``configparser``)::

    [experiment]
    domain = square          ; square | lshape | cube | thick_l
    mode = uniform           ; uniform | adaptive
    k = 2
    gamma = 40
    mu = 1
    beta = BETA1
    m = 4                    ; number of eigenvalues
    sigma = 0
    tol = 1e-8
    seed = 0
    references = builtin     ; builtin | comma separated values | absent

    [uniform]
    n0 = 16                  ; cells per direction on the coarsest level
    levels = 3               ; n doubles from level to level

    [adaptive]
    n0 = 32
    theta = 0.75
    first = 1
    max_dofs = 150000
    max_iterations = 30
"""
from __future__ import annotations

import configparser
import csv
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .adaptivity import AdaptConfig, AdaptTrace, run_algorithm1
from .assembly import assemble_primal
from .dg_space import build_space
from .eigensolver import solve_primal_system
from .fields import make_beta
from .mesh import generate

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "UniformTable",
    "convergence_order",
    "relative_error",
    "load_config",
    "load_references",
    "run_uniform",
    "run_adaptive",
    "write_svg",
    "read_csv_columns",
    "DOMAINS",
]

DOMAINS = ("square", "lshape", "cube", "thick_l")
DEFAULT_N0 = {"uniform": {"square": 16, "lshape": 16, "cube": 4, "thick_l": 4},
              "adaptive": {"square": 16, "lshape": 32, "cube": 4, "thick_l": 4}}
UNDEFINED = "undef"


class ConfigError(ValueError):
    pass


def convergence_order(lh: complex, lh2: complex, lh4: complex) -> float | None:
    """log2 |(l_h - l_{h/2}) / (l_{h/2} - l_{h/4})|; None when undefined."""
    num = abs(lh - lh2)
    den = abs(lh2 - lh4)
    if den == 0.0 or num == 0.0:
        return None
    return math.log2(num / den)


def relative_error(approx: complex, reference: complex) -> float:
    if reference == 0:
        raise ValueError("reference value must be non-zero")
    return abs(approx - reference) / abs(reference)


def load_references(domain: str, beta: str) -> list[float] | None:
    cp = configparser.ConfigParser()
    cp.read_string(resources.files("oseen_dg").joinpath("data/references.ini").read_text())
    key = f"{domain}.{beta.upper()}"
    if key not in cp:
        return None
    return [float(v) for v in cp[key]["values"].split(",")]


@dataclass
class ExperimentConfig:
    domain: str = "square"
    mode: str = "uniform"
    k: int = 2
    gamma: float = 40.0
    mu: float = 1.0
    beta: str = "BETA1"
    m: int = 4
    sigma: float = 0.0
    tol: float = 1e-8
    seed: int = 0
    references: list | None = None
    n0: int | None = None
    levels: int = 3
    theta: float | None = None
    first: int = 1
    max_dofs: int | None = None
    max_iterations: int = 30

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.mode not in ("uniform", "adaptive"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.gamma > 0 or not self.mu > 0:
            raise ConfigError("gamma and mu must be positive")
        if self.k < 1 or self.m < 1:
            raise ConfigError("k and m must be >= 1")
        if self.mode == "uniform" and self.levels < 1:
            raise ConfigError("need at least one level")
        if self.n0 is None:
            self.n0 = DEFAULT_N0[self.mode][self.domain]

    @property
    def dim(self) -> int:
        return 2 if self.domain in ("square", "lshape") else 3

    def adapt_config(self) -> AdaptConfig:
        refs = None
        if self.references is not None:
            refs = list(self.references)[self.first - 1: self.first - 1 + self.m]
            if len(refs) != self.m:
                raise ConfigError("not enough reference values for the cluster")
        try:
            return AdaptConfig(domain=self.domain, k=self.k, gamma=self.gamma, mu=self.mu, beta=self.beta,
                               theta=self.theta, first=self.first, m=self.m, n0=self.n0,
                               max_dofs=self.max_dofs, max_iterations=self.max_iterations, tol=self.tol,
                               sigma=self.sigma, seed=self.seed, references=refs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path, mode: str | None = None, **overrides) -> ExperimentConfig:
    """Parse an experiment file.

    ``mode`` replaces the file's mode; ``overrides`` with value None are ignored.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError("missing [experiment] section")
    ex = cp["experiment"]
    try:
        kw = dict(
            domain=ex.get("domain", "square").strip().lower(),
            mode=mode or ex.get("mode", "uniform").strip().lower(),
            k=ex.getint("k", 2), gamma=ex.getfloat("gamma", 40.0), mu=ex.getfloat("mu", 1.0),
            beta=ex.get("beta", "BETA1").strip().upper(), m=ex.getint("m", 4),
            sigma=ex.getfloat("sigma", 0.0), tol=ex.getfloat("tol", 1e-8), seed=ex.getint("seed", 0),
        )
        sec = cp[kw["mode"]] if kw["mode"] in cp else {}
        if "n0" in sec:
            kw["n0"] = int(sec["n0"])
        if kw["mode"] == "uniform":
            kw["levels"] = int(sec.get("levels", 3))
        else:
            kw["theta"] = float(sec["theta"]) if "theta" in sec else None
            kw["first"] = int(sec.get("first", 1))
            kw["max_dofs"] = int(float(sec["max_dofs"])) if "max_dofs" in sec else None
            kw["max_iterations"] = int(sec.get("max_iterations", 30))
        refs = ex.get("references", "").strip()
        if refs.lower() == "builtin":
            kw["references"] = load_references(kw["domain"], kw["beta"])
            if kw["references"] is None:
                raise ConfigError(f"no builtin references for {kw['domain']} / {kw['beta']}")
        elif refs:
            kw["references"] = [complex(v.strip().replace(" ", "")) for v in refs.split(",")]
            kw["references"] = [v.real if v.imag == 0 else v for v in kw["references"]]
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


# ------------------------------------------------------------------ uniform
@dataclass
class UniformTable:
    n: list = field(default_factory=list)
    h: list = field(default_factory=list)
    dofs: list = field(default_factory=list)
    eigenvalues: list = field(default_factory=list)   # per level, list of m complex

    def orders(self) -> list:
        """Per level, the order of each eigenvalue (None on the first two levels)."""
        out = []
        for i in range(len(self.eigenvalues)):
            if i < 2:
                out.append([None] * len(self.eigenvalues[i]))
                continue
            a, b, c = self.eigenvalues[i - 2: i + 1]
            out.append([convergence_order(x, y, z) for x, y, z in zip(a, b, c)])
        return out

    def write_csv(self, path) -> None:
        m = len(self.eigenvalues[0]) if self.eigenvalues else 0
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            head = ["n", "h", "dofs"]
            for j in range(1, m + 1):
                head += [f"lambda{j}_re", f"lambda{j}_im", f"order{j}"]
            w.writerow(head)
            for n, h, d, lams, ords in zip(self.n, self.h, self.dofs, self.eigenvalues, self.orders()):
                row = [str(n), f"{h:.17g}", str(d)]
                for lam, o in zip(lams, ords):
                    row += [f"{lam.real:.17g}", f"{lam.imag:.17g}", UNDEFINED if o is None else f"{o:.17g}"]
                w.writerow(row)

    def text(self) -> str:
        m = len(self.eigenvalues[0]) if self.eigenvalues else 0
        head = f"{'h':>12}" + "".join(f"{f'lambda{j}':>14}{'order':>7}" for j in range(1, m + 1))
        lines = [head]
        for h, lams, ords in zip(self.h, self.eigenvalues, self.orders()):
            s = f"{h:12.7f}"
            for lam, o in zip(lams, ords):
                s += f"{lam.real:14.7f}" + (f"{'':>7}" if o is None else f"{o:7.2f}")
            lines.append(s)
        return "\n".join(lines) + "\n"


def run_uniform(config: ExperimentConfig, out_dir=None) -> UniformTable:
    """Solve on ``levels`` structured meshes with n doubling each level."""
    beta = make_beta(config.beta, config.dim, domain=config.domain)
    table = UniformTable()
    for level in range(config.levels):
        n = config.n0 * 2**level
        mesh = generate(config.domain, n)
        space = build_space(mesh, config.k)
        system = assemble_primal(space, config.mu, beta, config.gamma)
        try:
            pairs, _ = solve_primal_system(system, config.m, config.sigma, config.tol, config.seed)
        except RuntimeError as exc:
            raise type(exc)(f"level {level} (n={n}): {exc}") from exc
        del system
        table.n.append(n)
        table.h.append(mesh.h)
        table.dofs.append(space.n_unknowns)
        table.eigenvalues.append([p.lam for p in pairs])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "uniform.csv")
        (out / "uniform.txt").write_text(table.text())
    return table


# ----------------------------------------------------------------- adaptive
def run_adaptive(config: ExperimentConfig, out_dir=None) -> AdaptTrace:
    """Adaptive run; writes trace.csv and, with references, trace.svg."""
    acfg = config.adapt_config()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    trace = run_algorithm1(acfg, out / "trace.csv" if out is not None else None)
    if out is not None and trace.rows and acfg.references is not None:
        series = {f"lambda{acfg.first + j}": (trace.dofs, trace.relative_errors(j)) for j in range(acfg.m)}
        write_svg(out / "trace.svg", series, slope=-2.0 * config.k / config.dim, ylabel="Rerr")
    return trace


# ---------------------------------------------------------------------- SVG
def _log_ticks(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def write_svg(path, series: dict, slope: float | None = None, xlabel="dof", ylabel="error",
              width=640, height=480, floor=1e-16) -> None:
    """Log-log plot: one polyline per series plus an optional slope guide."""
    margin = 60
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.maximum(np.asarray(y, float), floor) for _, y in series.values()])
    lx, ly = np.log10(xs), np.log10(ys)
    x0, x1 = math.floor(lx.min()), math.ceil(lx.max())
    y0, y1 = math.floor(ly.min()), math.ceil(ly.max())
    if x1 == x0:
        x1 += 1
    if y1 == y0:
        y1 += 1

    def px(v):
        return margin + (math.log10(v) - x0) / (x1 - x0) * (width - 2 * margin)

    def py(v):
        return height - margin - (math.log10(max(v, floor)) - y0) / (y1 - y0) * (height - 2 * margin)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    ET.SubElement(svg, "rect", x=str(margin), y=str(margin), width=str(width - 2 * margin),
                  height=str(height - 2 * margin), fill="none", stroke="black")
    for t in _log_ticks(x0, x1):
        X = px(10.0**t)
        ET.SubElement(svg, "text", x=f"{X:.1f}", y=str(height - margin + 18), **{"text-anchor": "middle",
                      "font-size": "11"}).text = f"1e{t}"
    for t in _log_ticks(y0, y1):
        Y = py(10.0**t)
        ET.SubElement(svg, "text", x=str(margin - 6), y=f"{Y + 4:.1f}", **{"text-anchor": "end",
                      "font-size": "11"}).text = f"1e{t}"
    ET.SubElement(svg, "text", x=str(width // 2), y=str(height - 15), **{"text-anchor": "middle"}).text = xlabel
    ET.SubElement(svg, "text", x="15", y=str(height // 2), transform=f"rotate(-90 15 {height // 2})",
                  **{"text-anchor": "middle"}).text = ylabel
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    for i, (name, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        ET.SubElement(svg, "polyline", points=pts, fill="none", stroke=colors[i % len(colors)],
                      **{"stroke-width": "1.5", "class": "series", "data-name": name})
        ET.SubElement(svg, "text", x=str(width - margin - 80), y=str(margin + 16 + 14 * i),
                      fill=colors[i % len(colors)], **{"font-size": "11"}).text = name
    if slope is not None:
        first_x, first_y = next(iter(series.values()))
        a, b = float(np.min(xs)), float(np.max(xs))
        ya = max(float(first_y[0]), floor) if len(first_y) else 1.0
        yb = ya * (b / a) ** slope
        ET.SubElement(svg, "line", x1=f"{px(a):.2f}", y1=f"{py(ya):.2f}", x2=f"{px(b):.2f}", y2=f"{py(yb):.2f}",
                      stroke="gray", **{"stroke-dasharray": "6,4", "class": "slope"})
        ET.SubElement(svg, "text", x=f"{px(b):.1f}", y=f"{py(yb) - 6:.1f}", fill="gray",
                      **{"text-anchor": "end", "font-size": "11"}).text = f"slope {slope:g}"
    ET.ElementTree(svg).write(str(path), encoding="utf-8", xml_declaration=True)


def read_csv_columns(path) -> dict:
    """Columns of a CSV as lists of strings keyed by header name."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return {}
    head, body = rows[0], rows[1:]
    return {h: [r[i] for r in body] for i, h in enumerate(head)}
