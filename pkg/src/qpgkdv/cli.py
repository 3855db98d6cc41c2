"""Command-line experiment runner.

Configuration is a flat ``key=value`` file (``--config``) plus ``--key value``
overrides.  Every subcommand writes CSV files into ``out``; ``solve`` also
renders two SVG line charts.  Exit codes: 0 success, 1 certificate or
tolerance failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .lattice import Box, WaveVector
from .oracle import rk4_truncated
from .picard import (TimeGrid, contraction_certificate, decay_certificate,
                     existence_constants, iterate, save_trajectory)
from .qpfield import DecayProfile, pde_residual, sample_initial_data
from .trees import combinatorics_rows


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    nu: int = 1
    p: int = 2
    radius: tuple = (6,)
    omega: tuple = (1.0,)
    omega_rational: Optional[tuple] = None
    A: float = 0.5
    kappa: float = 1.0
    seed: int = 0
    t_end: object = "auto"
    M: int = 64
    tol: float = 1e-10
    k_max: int = 50
    realness: bool = True
    out: str = "out"
    method: str = "auto"
    steps: int = 4096
    gap_tol: float = 1e-6
    residual_tol: float = 1e-3
    residual_mode: str = "pointwise"
    samples: int = 16

    def profile(self) -> DecayProfile:
        return DecayProfile(self.A, self.kappa, self.p, self.nu)

    def wave_vector(self) -> WaveVector:
        if self.omega_rational is not None:
            return WaveVector.from_rationals(self.omega_rational)
        return WaveVector(self.omega)

    def box(self) -> Box:
        return Box(self.radius)

    def resolved_t_end(self) -> float:
        if self.t_end == "auto":
            return existence_constants(self.profile(), self.wave_vector()).t0 / 2
        return float(self.t_end)


def _tuple(text, kind):
    return tuple(kind(v) for v in str(text).split(",") if v.strip())


def _bool(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "nu": int, "p": int, "seed": int, "M": int, "k_max": int, "steps": int, "samples": int,
    "A": float, "kappa": float, "tol": float, "gap_tol": float, "residual_tol": float,
    "radius": lambda s: _tuple(s, int),
    "omega": lambda s: _tuple(s, float),
    "omega_rational": lambda s: _tuple(s, Fraction),
    "t_end": lambda s: "auto" if str(s).strip() == "auto" else float(s),
    "realness": _bool,
    "out": str, "method": str, "residual_mode": str,
}


def read_config_file(path) -> dict:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        entries[key.strip()] = val.strip()
    return entries


def build_config(entries: dict) -> ExperimentConfig:
    """Parse raw string entries and validate every numeric constraint."""
    known = {f.name for f in fields(ExperimentConfig)}
    parsed = {}
    for key, raw in entries.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            parsed[key] = _PARSERS[key](raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    cfg = replace(ExperimentConfig(), **parsed)
    if "radius" in parsed and len(cfg.radius) == 1 and cfg.nu > 1:
        cfg = replace(cfg, radius=cfg.radius * cfg.nu)
    elif "radius" not in parsed:
        cfg = replace(cfg, radius=(cfg.radius[0],) * cfg.nu)
    if "omega" not in parsed and "omega_rational" not in parsed and cfg.nu > 1:
        raise ConfigError("nu > 1 needs an explicit omega")
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.profile()
        omega = cfg.wave_vector()
        Box(cfg.radius)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if omega.nu != cfg.nu:
        raise ConfigError(f"omega has {omega.nu} components but nu={cfg.nu}")
    if len(cfg.radius) != cfg.nu:
        raise ConfigError(f"radius has {len(cfg.radius)} entries but nu={cfg.nu}")
    if cfg.t_end != "auto" and not (isinstance(cfg.t_end, float) and cfg.t_end > 0):
        raise ConfigError(f"t_end must be positive or 'auto', got {cfg.t_end!r}")
    if cfg.M < 2:
        raise ConfigError(f"M must be >= 2, got {cfg.M}")
    if cfg.steps < 1 or cfg.steps % cfg.M:
        raise ConfigError(f"steps={cfg.steps} must be a positive multiple of M={cfg.M}")
    if not cfg.tol > 0 or cfg.k_max < 1:
        raise ConfigError("tol must be positive and k_max >= 1")
    if cfg.method not in ("auto", "direct", "fft"):
        raise ConfigError(f"method must be auto, direct or fft, got {cfg.method!r}")
    if cfg.residual_mode not in ("pointwise", "galerkin"):
        raise ConfigError(f"residual_mode must be pointwise or galerkin, got {cfg.residual_mode!r}")
    if cfg.samples < 3:
        raise ConfigError("samples must be >= 3")


# -- output helpers ---------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_chart(series, title: str, xlabel: str, ylabel: str,
               width: int = 640, height: int = 420) -> str:
    """Minimal SVG line chart; `series` is a list of ``(label, xs, ys)``."""
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(y)]
    left, right, top, bottom = 70, 150, 40, 55
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for i in range(5):
        xv, yv = x0 + i / 4 * (x1 - x0), y0 + i / 4 * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        colour = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        if coords:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _shell_profile(values, l1):
    """Largest log10 |c| on each |n|_1 shell, skipping empty shells."""
    xs, ys = [], []
    for s in range(int(l1.max()) + 1):
        m = np.max(np.abs(values[l1 == s])) if np.any(l1 == s) else 0.0
        if m > 0:
            xs.append(s)
            ys.append(math.log10(m))
    return xs, ys


# -- subcommands -----------------------------------------------------------

def _prepare(cfg: ExperimentConfig):
    profile, omega, box = cfg.profile(), cfg.wave_vector(), cfg.box()
    consts = existence_constants(profile, omega)
    grid = TimeGrid(cfg.resolved_t_end(), cfg.M)
    c0 = sample_initial_data(profile, box, cfg.seed, realness=cfg.realness)
    return profile, omega, box, consts, grid, c0


def constants_rows(consts, t_end: float):
    return [("t0", consts.t0), ("t0_decay", consts.t0_decay),
            ("t0_contraction", consts.t0_contraction), ("box_const", consts.box_const),
            ("theta", consts.theta), ("contraction_coeff", consts.contraction_coeff),
            ("t_end", t_end), ("q", consts.contraction_coeff * t_end)]


def cmd_solve(cfg: ExperimentConfig) -> int:
    profile, omega, box, consts, grid, c0 = _prepare(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = iterate(c0, omega, cfg.p, grid, tol=cfg.tol, k_max=cfg.k_max, method=cfg.method)
    traj = result.final
    decay = decay_certificate(traj, consts, profile)
    contraction = contraction_certificate(result.diffs, consts, grid.t_end)

    write_csv(out / "constants.csv", ["name", "value"], constants_rows(consts, grid.t_end))
    write_csv(out / "diffs.csv", ["k", "diff", "bound", "ratio", "ok"], contraction.rows)
    write_csv(out / "certificates.csv", ["certificate", "passed", "detail"], [
        ("converged", result.converged, f"k={len(result.diffs)}"),
        ("decay_half_rate", decay.certified,
         f"worst_margin={decay.worst_margin:.6g} node={decay.worst_node} n={decay.worst_n}"),
        ("decay_quarter_rate", decay.certified_quarter_rate, ""),
        ("contraction", contraction.passed, f"q={contraction.q:.6g}"),
    ])
    save_trajectory(traj, out / "trajectory", p=cfg.p, seed=cfg.seed)

    l1 = box.l1_grid()
    picks = sorted({0, grid.M // 2, grid.M})
    series = [(f"node {j}", *_shell_profile(traj.values[j], l1)) for j in picks]
    shells = list(range(int(l1.max()) + 1))
    series.append(("bound", shells,
                   [math.log10(consts.box_const) - profile.kappa / 2 * s / math.log(10) for s in shells]))
    (out / "decay.svg").write_text(line_chart(series, "coefficient decay", "|n|", "log10 |c|"),
                                   encoding="utf-8")
    ks = list(range(1, len(result.diffs) + 1))
    gaps = [math.log10(d) if d > 0 else -math.inf for d in result.diffs]
    (out / "diffs.svg").write_text(line_chart([("gap", ks, gaps)], "Picard gaps", "k",
                                              "log10 sup gap"), encoding="utf-8")

    ok = result.converged and decay.certified and contraction.passed
    print(f"solve: converged={result.converged} k={len(result.diffs)} decay={decay.certified} "
          f"contraction={contraction.passed}")
    return 0 if ok else 1


def cmd_compare_oracle(cfg: ExperimentConfig) -> int:
    _, omega, box, consts, grid, c0 = _prepare(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = iterate(c0, omega, cfg.p, grid, tol=cfg.tol, k_max=cfg.k_max, method=cfg.method)
    ref = rk4_truncated(c0, omega, cfg.p, box, grid.t_end, cfg.steps, M=cfg.M)
    gaps = np.max(np.abs(result.final.values - ref.values).reshape(grid.M + 1, -1), axis=1)
    in_theory = grid.t_end <= consts.t0
    write_csv(out / "compare.csv", ["node", "t", "gap", "in_theory"],
              [(j, float(t), float(g), in_theory) for j, (t, g) in enumerate(zip(grid.nodes, gaps))])
    worst = float(np.max(gaps))
    print(f"compare-oracle: max gap {worst:.3e} (tolerance {cfg.gap_tol:g})"
          + ("" if in_theory else "; t_end exceeds t0, outside the theory"))
    return 0 if worst <= cfg.gap_tol and result.converged else 1


def residual_samples(M: int, count: int) -> list:
    return sorted({int(round(v)) for v in np.linspace(0, M, count)})


def cmd_residual(cfg: ExperimentConfig) -> int:
    _, omega, _, _, grid, c0 = _prepare(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = iterate(c0, omega, cfg.p, grid, tol=cfg.tol, k_max=cfg.k_max, method=cfg.method)
    xs = np.linspace(0.0, 2 * math.pi / omega.norm, cfg.samples, endpoint=False)
    rows, worst = [], 0.0
    for j in residual_samples(grid.M, cfg.samples):
        pw = pde_residual(result.final, omega, cfg.p, [j], xs, nonlinear="pointwise")
        gk = pde_residual(result.final, omega, cfg.p, [j], xs, nonlinear="galerkin")
        rows.append((j, float(grid.nodes[j]), pw, gk))
        worst = max(worst, pw if cfg.residual_mode == "pointwise" else gk)
    write_csv(out / "residual.csv", ["node", "t", "residual_pointwise", "residual_galerkin"], rows)
    ok = worst <= cfg.residual_tol
    print(f"residual: max {cfg.residual_mode} residual {worst:.3e} (tolerance {cfg.residual_tol:g})")
    if not ok:
        print("residual: above tolerance; compare the galerkin column to separate truncation "
              "from time discretisation", file=sys.stderr)
    return 0 if ok else 1


def cmd_constants(cfg: ExperimentConfig) -> int:
    consts = existence_constants(cfg.profile(), cfg.wave_vector())
    for name, value in constants_rows(consts, cfg.resolved_t_end()):
        print(f"{name}={_fmt(value)}")
    return 0


def cmd_verify_combinatorics(k_max: int, p_list, out, fault: bool = False) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = combinatorics_rows(k_max, p_list, fault=fault)
    write_csv(out / "combinatorics.csv", ["lemma", "k", "p", "params", "lhs", "rhs", "pass"], rows)
    failed = [r for r in rows if r[-1] is False]
    skipped = sum(r[-1] is None for r in rows)
    print(f"verify-combinatorics: {len(rows)} rows, {len(failed)} failed, {skipped} skipped by caps")
    for r in failed:
        print(f"  FAIL {r[0]} k={r[1]} p={r[2]} {r[3]}: {r[4]} vs {r[5]}", file=sys.stderr)
    return 1 if failed else 0


# -- entry point -------------------------------------------------------------

def _overrides(tokens) -> dict:
    entries = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise ConfigError(f"missing value for {tok}")
        entries[key.replace("-", "_")] = val
    return entries


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qpgkdv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "compare-oracle", "residual", "constants"):
        sp = sub.add_parser(name, help=f"{name} (extra --key value pairs override the config)")
        sp.add_argument("--config", help="key=value configuration file")
    vc = sub.add_parser("verify-combinatorics", help="exact checks of the tree combinatorics")
    vc.add_argument("--k-max", type=int, default=3)
    vc.add_argument("--p-list", default="2,3")
    vc.add_argument("--out", default="out")
    vc.add_argument("--fault", action="store_true", help="inject one wrong factorial (self-test)")
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.command == "verify-combinatorics":
            if extra:
                raise ConfigError(f"unexpected arguments {extra}")
            try:
                p_list = _tuple(args.p_list, int)
            except ValueError:
                raise ConfigError(f"bad p list {args.p_list!r}") from None
            if args.k_max < 1 or not p_list or min(p_list) < 2:
                raise ConfigError("need k_max >= 1 and every p >= 2")
            return cmd_verify_combinatorics(args.k_max, p_list, args.out, args.fault)
        entries = read_config_file(args.config) if args.config else {}
        entries.update(_overrides(extra))
        cfg = build_config(entries)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handler = {"solve": cmd_solve, "compare-oracle": cmd_compare_oracle,
               "residual": cmd_residual, "constants": cmd_constants}[args.command]
    return handler(cfg)


if __name__ == "__main__":
    sys.exit(main())
