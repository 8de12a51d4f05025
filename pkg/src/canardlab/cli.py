"""Command-line front end: config parsing, report assembly and CSV export."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys as _sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import expr as ex
from . import lienard as li
from . import melnikov as mk
from . import normalform as nfm
from . import slowgeom as sg
from . import sysmodel as sm
from . import tracer as tr

SCHEMA_VERSION = 1
SQRT2PI = mk.SQRT2PI


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    system: sm.SlowFastSystem
    eps: float | None = None
    tol: float = 1e-10
    seeds: int = 16
    sweep_eps: tuple[float, ...] = (0.05, 0.02, 0.01)
    eta_index: int = 0
    normalization: li.NormalizationResult | None = None
    source: str = ""


_TOL_KEYS = {"tol.root_abs": "root_abs", "tol.sign_margin": "sign_margin",
             "tol.canard_abs": "canard_abs", "tol.rank_rel": "rank_rel"}


def _number(text: str, line: int) -> float:
    try:
        return float(ex.evaluate(ex.parse(text, ()), {}))
    except ex.ExprError as err:
        raise ConfigError(f"bad number {text!r}: {err}", line) from err


def _numbers(text: str, line: int) -> list[float]:
    return [_number(t.strip(), line) for t in text.split(",") if t.strip()]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse key = value lines; '#' starts a comment."""
    raw: dict[str, tuple[str, int]] = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError("expected key = value", n)
        k, v = (p.strip() for p in s.split("=", 1))
        if not k:
            raise ConfigError("empty key", n)
        if k in raw:
            raise ConfigError(f"duplicate key {k!r}", n)
        raw[k] = (v, n)

    plain = {"f", "g", "lambda", "lambda.name", "window", "eps", "integrator_tol", "seeds", "sweep_eps",
             "eta_index", "lienard_F", "lienard_shift", *_TOL_KEYS}
    for k, (_, n) in raw.items():
        base_key = k[:-5] if k.endswith(".name") else k
        if k not in plain and not (base_key.startswith("eta_") and base_key[4:].isdigit()):
            raise ConfigError(f"unknown key {k!r}", n)

    def get(k, default=None):
        return raw[k] if k in raw else (default, None)

    eta_keys = sorted((k for k in raw if k.startswith("eta_") and k[4:].isdigit()), key=lambda k: int(k[4:]))
    for i, k in enumerate(eta_keys, 1):
        if int(k[4:]) != i:
            raise ConfigError(f"eta indices must run 1..m without gaps, got {k!r}", raw[k][1])

    normalization = None
    if "lienard_F" in raw:
        v, n = raw["lienard_F"]
        c = _numbers(v, n)
        if len(c) != 4:
            raise ConfigError("lienard_F needs four ascending coefficients c0, c1, c2, c3", n)
        lam_v = _number(*raw["lambda"]) if "lambda" in raw else 1.0 / 6.0
        eta_v = _number(*raw["eta_1"]) if "eta_1" in raw else 1.0 / 12.0
        eps_v = _number(*raw["eps"]) if "eps" in raw else 0.01
        shift = _number(*raw["lienard_shift"]) if "lienard_shift" in raw else 0.0
        try:
            normalization = li.normalize_lienard(li.LienardSpec(tuple(c), eta=eta_v, lam=lam_v, eps=eps_v, shift=shift))
        except li.LienardError as err:
            raise ConfigError(str(err), n) from err
        if normalization.system is None:
            return RunConfig(li.lienard_system(), normalization=normalization, source=source)
        system = normalization.system
        eps = normalization.record.eps
    else:
        for key in ("f", "g"):
            if key not in raw:
                raise ConfigError(f"missing mandatory key {key!r}")
        if "lambda" not in raw:
            raise ConfigError("missing mandatory key 'lambda'")
        if not eta_keys:
            raise ConfigError("missing mandatory key 'eta_1'")
        lam_name = get("lambda.name", "lambda")[0]
        names = [get(f"{k}.name", "eta" if len(eta_keys) == 1 else k)[0] for k in eta_keys]
        base = {lam_name: _number(*raw["lambda"])}
        for k, nm in zip(eta_keys, names):
            base[nm] = _number(*raw[k])
        kw = {}
        if "window" in raw:
            w = _numbers(*raw["window"])
            if len(w) != 4 or not (w[0] < w[1] and w[2] < w[3]):
                raise ConfigError("window needs x_lo, x_hi, y_lo, y_hi with lo < hi", raw["window"][1])
            kw["window"] = tuple(w)
        tol = {}
        for k, attr in _TOL_KEYS.items():
            if k in raw:
                tol[attr] = _number(*raw[k])
        if tol:
            kw["tol"] = sm.Tolerances(**tol)
        roster = ("x", "y", "eps", lam_name, *names)
        exprs = {}
        for key in ("f", "g"):
            v, n = raw[key]
            try:
                exprs[key] = ex.parse(v, roster)
            except ex.UnknownIdentifierError as err:
                raise ConfigError(f"unknown identifier {err.name!r} in {key}", n) from err
            except ex.ParseError as err:
                raise ConfigError(f"syntax error in {key}: {err}", n) from err
        system = sm.SlowFastSystem(exprs["f"], exprs["g"], lam_name, tuple(names), base,
                                   f_text=raw["f"][0], g_text=raw["g"][0], **kw)
        eps = _number(*raw["eps"]) if "eps" in raw else None
    cfg = RunConfig(system, eps, normalization=normalization, source=source)
    if "integrator_tol" in raw:
        cfg.tol = _number(*raw["integrator_tol"])
    if "seeds" in raw:
        cfg.seeds = int(_number(*raw["seeds"]))
    if "sweep_eps" in raw:
        cfg.sweep_eps = tuple(_numbers(*raw["sweep_eps"]))
    if "eta_index" in raw:
        cfg.eta_index = int(_number(*raw["eta_index"])) - 1
        if not 0 <= cfg.eta_index < system.m:
            raise ConfigError("eta_index out of range", raw["eta_index"][1])
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


# ---------------------------------------------------------------- reference values

def is_reference_lienard(sys: sm.SlowFastSystem) -> bool:
    ref = li.lienard_system()
    if sys.params != ref.params:
        return False
    same = ex.fold(sys.f) == ex.fold(ref.f) and ex.fold(sys.g) == ex.fold(ref.g)
    return same and all(abs(a - b) < 1e-12 for a, b in zip(sys.mu(), ref.mu()))


def _annotate(value, expected, tol: float, path: str) -> dict:
    d = {"value": value, "path": path}
    if expected is not None:
        d["reference_value"] = expected
        if isinstance(expected, (list, tuple)) and isinstance(value, (list, tuple)):
            d["matches_reference"] = bool(len(value) == len(expected)
                                          and all(abs(a - b) <= tol for a, b in zip(value, expected)))
        else:
            d["matches_reference"] = bool(abs(value - expected) <= tol)
    return d


def _candidates(value: float, expected: Sequence[float], tol: float, path: str) -> dict:
    return {"value": value, "path": path,
            "reference_candidates": [{"reference_value": e, "matches_reference": bool(abs(value - e) <= tol)}
                                     for e in expected]}


# ---------------------------------------------------------------- report sections

def _hyp_section(sys) -> tuple[dict, sm.HypothesisReport]:
    rep = sm.check_hypotheses(sys)
    d = rep.to_dict()
    d["path"] = "closed-form"
    return d, rep


def _system_echo(cfg: RunConfig) -> dict:
    s = cfg.system
    d = {"f": s.f_text if s.f_text is not None else ex.to_string(s.f),
         "g": s.g_text if s.g_text is not None else ex.to_string(s.g),
         "lambda": s.lam, "etas": list(s.etas), "base": {k: s.base[k] for k in s.params},
         "window": list(s.window), "eps": cfg.eps, "source": cfg.source}
    if cfg.normalization is not None:
        d["normalization"] = cfg.normalization.to_dict()
    return d


def analyze_section(cfg: RunConfig) -> dict:
    s = cfg.system
    ref = is_reference_lienard(s)
    i = cfg.eta_index
    pts = sm.canard_points(s)
    out = {"reference_system": ref, "eta_index": i + 1, "canard_points": []}
    a_lists = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", nfm.NormalFormWarning)
        for k, p in enumerate(pts):
            nf = nfm.normal_form(s, p)
            oracle = nfm.a_coefficients_oracle(s, p)
            a_lists.append(nf.a)
            d_cf = mk.distance_closed_form(nf.a)
            d_q = mk.distance_quadrature(nf.a)
            ra = None
            if ref:
                ra = [0.0, 0.0, -4.0 / 3.0, -6.0, 0.0, 3.0 * p.orientation]
            entry = {
                "data": {**p.to_dict(), "path": "closed-form"},
                "location": _annotate([p.alpha, p.omega], [[0.0, 0.0], [1.0, 1.0 / 6.0]][k] if ref else None,
                                      1e-10, "closed-form"),
                "g_lambda": _annotate(p.partials["g_lam"], [-0.5, 0.5][k] if ref else None, 1e-12, "closed-form"),
                "f_y": _annotate(p.partials["f_y"], 1.0 if ref else None, 1e-12, "closed-form"),
                "normal_form": nf.to_dict() | {"path": "closed-form"},
                "a_taylor": _annotate(list(nf.a), ra, 1e-6, "closed-form"),
                "a_quadrature": _annotate(list(oracle), ra, 1e-6, "quadrature"),
                "a_paths_agree": bool(max(abs(x - y) for x, y in zip(nf.a, oracle)) < 1e-6),
                "melnikov": {
                    "closed_form": d_cf.to_dict(),
                    "quadrature": d_q.to_dict(),
                    "paths_agree": bool(np.allclose(d_cf.as_array(), d_q.as_array(), rtol=1e-8, atol=1e-12)),
                    "d_lambda2": _annotate(d_q.d_lambda2, -SQRT2PI, 1e-10, "quadrature"),
                    "d_eta2": _annotate(d_q.d_eta2[i], 3.0 * SQRT2PI * p.orientation if ref else None,
                                        1e-8, "quadrature"),
                    "d_r2": _candidates(d_q.d_r2, [-SQRT2PI, -2.0 * SQRT2PI] if ref else [], 1e-8, "quadrature"),
                },
            }
            out["canard_points"].append(entry)
    out["normal_form_warnings"] = [str(w.message) for w in caught]
    br = sm.beta_rank(s, pts, i)
    out["beta_rank"] = br.to_dict() | {"path": "closed-form"}
    curve = mk.canard_curve_expansion(pts, a_lists, i)
    out["canard_curve"] = {
        **curve.to_dict(), "path": "closed-form",
        "lambda_slope": _candidates(curve.lambda_slope, [-2.0 / 9.0] if ref else [], 1e-8, "closed-form"),
        "eta_slope": _annotate(curve.eta_slope, 0.0 if ref else None, 1e-10, "closed-form"),
    }
    # re-solve beta_1 = beta_2 = 0 from a displaced start so the base values are recovered, not echoed
    guess = [v * 1.2 if v else 0.05 for v in s.mu()]
    mu_c, _ = sm.solve_canard_parameters(s, guess, i)
    out["canard_parameters"] = _annotate([float(mu_c[0]), float(mu_c[1 + i])],
                                         [1.0 / 6.0, 1.0 / 12.0] if ref else None, 1e-10, "closed-form")
    out["canard_parameters"]["start"] = guess
    if cfg.eps is not None and cfg.eps > 0:
        lam, eta = mk.solve_canard_pair(pts, a_lists, cfg.eps, i)
        out["canard_pair_at_eps"] = {"eps": cfg.eps, "lambda": lam, "eta": eta, "path": "closed-form"}
    return out


def cycles_section(cfg: RunConfig, outdir: Path | None) -> dict:
    s = cfg.system
    roots = sg.find_cycle_pair(s)
    rows = []
    for k, r in enumerate(roots):
        cyc = sg.build_cycle(s, r.s1, r.s2)
        name = f"cycle_gamma_{k}.csv"
        if outdir is not None:
            write_csv(outdir / name, ["arc", "x", "y"], cyc.tagged_rows())
        rows.append({"root": r.to_dict(), "cycle": cyc.to_dict(), "csv": name, "path": "quadrature"})
    return {"roots": rows, "count": len(rows)}


def trace_section(cfg: RunConfig, eps: float, mu: Sequence[float], outdir: Path | None) -> dict:
    s = cfg.system
    eqs = tr.equilibria(s, eps, mu)
    cycles = tr.find_limit_cycles(s, eps, mu, n_seeds=cfg.seeds, tol=min(cfg.tol, 1e-10))
    large = [c for c in cycles if len(c.encloses) > 1]
    small = [c for c in cycles if len(c.encloses) <= 1]
    rows = []
    for k, c in enumerate(cycles):
        name = f"orbits/limit_cycle_{k}.csv"
        t = c.times
        if outdir is not None:
            write_csv(outdir / name, ["t", "x", "y"], ((tt, x, y) for tt, (x, y) in zip(t, c.polyline)))
        rows.append(c.to_dict() | {"csv": name, "path": "traced", "kind": "large" if c in large else "small"})
    ref = is_reference_lienard(s) and abs(eps - 0.045) < 1e-12 and abs(mu[0] - 0.163) < 1e-12 \
        and abs(mu[1] - 1.0 / 12.0) < 1e-7
    d = {"eps": eps, "mu": list(mu), "equilibria": [e.to_dict() | {"path": "traced"} for e in eqs],
         "cycles": rows, "cycle_count": len(cycles), "large_cycle_count": len(large),
         "small_cycle_count": len(small), "path": "traced"}
    if ref:
        d["small_cycle_count_reference"] = _annotate(len(small), 2, 0, "traced")
        d["cycle_count_reference"] = _annotate(len(cycles), 3, 0, "traced")
    return d


def _sweep_one(args):
    cfg, eps, gamma = args
    s = cfg.system
    if is_reference_lienard(s):
        e = li.edge_cycle(eps)
        return {"eps": eps, "lambda": li.canard_lambda(eps) + e.delta, "eta": 1.0 / 12.0,
                "edge": e.to_dict(), "hausdorff": tr.hausdorff(e.polyline, gamma), "path": "traced"}, e.polyline
    pts = sm.canard_points(s)
    a = [nfm.normal_form(s, p).a for p in pts]
    lam, eta = mk.solve_canard_pair(pts, a, eps, cfg.eta_index)
    mu = list(s.mu())
    mu[0], mu[1 + cfg.eta_index] = lam, eta
    cycles = [c for c in tr.find_limit_cycles(s, eps, mu, n_seeds=cfg.seeds) if len(c.encloses) > 1]
    if not cycles:
        return {"eps": eps, "lambda": lam, "eta": eta, "hausdorff": None, "path": "traced"}, None
    c = cycles[0]
    return {"eps": eps, "lambda": lam, "eta": eta, "cycle": c.to_dict(),
            "hausdorff": tr.hausdorff(c.polyline, gamma), "path": "traced"}, c.polyline


def sweep_section(cfg: RunConfig, outdir: Path | None) -> dict:
    s = cfg.system
    roots = sg.find_cycle_pair(s)
    if not roots:
        return {"error": "no slow-fast cycle pair in the admissible region", "entries": []}
    r = roots[0]
    gamma = sg.build_cycle(s, r.s1, r.s2).polyline
    threads = max(1, int(os.environ.get("CANARDLAB_THREADS", "1") or 1))
    jobs = [(cfg, float(e), gamma) for e in cfg.sweep_eps]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    entries = []
    for k, (row, poly) in enumerate(results):
        if poly is not None and outdir is not None:
            name = f"orbits/sweep_{k}.csv"
            write_csv(outdir / name, ["x", "y"], poly)
            row["csv"] = name
        entries.append(row)
    h = [e["hausdorff"] for e in entries]
    mono = all(a is not None and b is not None and b <= a for a, b in zip(h, h[1:]))
    return {"s_pair": r.to_dict(), "entries": entries, "monotone_non_increasing": mono, "path": "traced"}


# ---------------------------------------------------------------- output

def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        o = float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return o


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else "%.17g" % v for v in row) + "\n")


def write_report(path: Path, report: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), indent=2) + "\n")


# ---------------------------------------------------------------- commands

COMMANDS = ("check", "analyze", "cycles", "trace", "sweep")


def run(command: str, cfg: RunConfig, outdir: Path | None = None, eps: float | None = None,
        lam: float | None = None, etas: Sequence[float] = ()) -> tuple[int, dict]:
    """Execute one subcommand; returns (exit code, report)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
    report: dict = {"schema_version": SCHEMA_VERSION, "tool": {"name": "canardlab", "version": __version__},
                    "command": command, "system": _system_echo(cfg),
                    "tolerances": {**vars(cfg.system.tol), "integrator": cfg.tol}}
    norm = cfg.normalization
    if norm is not None and norm.system is None:
        report["hypotheses"] = {"all_passed": False, "bendixson": norm.verdict, "detail": norm.detail}
        code = 2
    else:
        hyp, rep = _hyp_section(cfg.system)
        report["hypotheses"] = hyp
        ok = rep.all_passed
        code = 0 if ok else 2
        if ok or command == "trace":
            if command == "analyze":
                report["analysis"] = analyze_section(cfg)
            elif command == "cycles":
                report["cycles"] = cycles_section(cfg, outdir)
            elif command == "trace":
                e = eps if eps is not None else cfg.eps
                if e is None or e <= 0:
                    raise ConfigError("trace needs a positive eps (--eps or config key eps)")
                mu = list(cfg.system.mu())
                if lam is not None:
                    mu[0] = lam
                for k, v in enumerate(etas):
                    if k >= cfg.system.m:
                        raise ConfigError("more --eta values than slow parameters")
                    mu[1 + k] = v
                report["trace"] = trace_section(cfg, e, mu, outdir)
            elif command == "sweep":
                report["sweep"] = sweep_section(cfg, outdir)
    report["exit_code"] = code
    if outdir is not None:
        write_report(outdir / "report.json", report)
    return code, report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="canardlab", description="Analyze planar slow-fast systems with two canard points.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key = value system description")
    p.add_argument("--eps", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eta", type=float, action="append", default=[], help="repeat once per slow parameter")
    p.add_argument("--out", default="out")
    p.add_argument("--tol", type=float, help="integrator tolerance")
    p.add_argument("--seeds", type=int, help="seeds per return-map section")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.tol is not None:
            cfg.tol = args.tol
        if args.seeds is not None:
            cfg.seeds = args.seeds
        if args.eps is not None and args.command == "sweep":
            cfg.sweep_eps = (args.eps,)
        code, rep = run(args.command, cfg, Path(args.out), args.eps, args.lam, args.eta)
    except (ConfigError, ex.ExprError, sm.SystemError_, tr.ReturnMapError, mk.RankDeficiencyError,
            sg.LevelError, sg.DivergentIntegralError, ValueError, RuntimeError) as err:
        print(f"canardlab: error: {err}", file=_sys.stderr)
        return 1
    status = "hypotheses pass" if code == 0 else "hypotheses fail"
    print(f"canardlab {args.command}: {status}; report at {Path(args.out) / 'report.json'}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
