"""Command-line interface: ``tfchan {bounds,mc,ep,loc}``.

Configs are JSON documents. A manifest written by an earlier run is also
accepted as a config: its ``config`` member is used. Exit codes are 0 on
success, 2 for config errors, 3 for accuracy failures and 4 when Monte-Carlo
runs failed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, localization, mc
from .channel import SupportRegion
from .specfun import AccuracyError

EXIT_OK, EXIT_CONFIG, EXIT_ACCURACY, EXIT_MC = 0, 2, 3, 4

CSV_COLUMNS = ["run_id", "seed", "U_size", "u", "mu1", "mu2", "p", "q", "case", "alpha", "ratio",
               "certificate", "uniform_bound", "gl_bound", "kozek_bound", "notes"]
MANIFEST_NAME = "manifest.json"


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "tool_version" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    return doc


def _take(cfg: dict, allowed: dict) -> dict:
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = dict(allowed)
    out.update(cfg)
    return out


def _region(cfg: dict) -> SupportRegion:
    shape = cfg.get("shape")
    try:
        if shape == "rect":
            return SupportRegion.rect(cfg["tau"], cfg["nu"])
        return SupportRegion.from_measure(shape, float(cfg["U"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad support specification: {exc}") from None


def _number(cfg, key, lo=None, allow_inf=False):
    try:
        v = float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number") from None
    if math.isnan(v) or (math.isinf(v) and not allow_inf) or (lo is not None and v < lo):
        raise ConfigError(f"{key} out of range")
    return v


def _threads(arg: int | None) -> int:
    env = os.environ.get("TFCHAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("TFCHAN_THREADS must be an integer") from None
    return max(1, arg or 1)


def write_manifest(out: Path, command: str, config: dict, outputs: list[str]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "tool_version": __version__,
        "master_seed": config.get("master_seed"),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": outputs,
        "config": config,
    }
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# bounds


BOUNDS_DEFAULTS = {"shape": "disc", "U": 0.01, "tau": None, "nu": None, "p": 2.0, "q": 2.0,
                   "case": "C1", "alpha": 0.0, "L": None}


def cmd_bounds(cfg: dict) -> dict:
    cfg = _take(cfg, BOUNDS_DEFAULTS)
    U = _region(cfg)
    p, q = _number(cfg, "p", 1), _number(cfg, "q", 1, allow_inf=True)
    if p == math.inf:
        raise ConfigError("p must be finite")
    if cfg["case"] not in ("C1", "C2"):
        raise ConfigError("case must be C1 or C2")
    try:
        inputs = bounds.BoundInputs.gaussian(U, p, q, cfg["case"], _number(cfg, "alpha"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    k = inputs.tag.k
    if cfg["L"] is not None:
        L, note = _number(cfg, "L"), "supplied"
    else:
        closed = bounds.gaussian_mean_localization(U, k)
        lag = localization.laguerre_lower_bound(U, 0)
        lag = lag ** (1 / k) if math.isfinite(lag) else -math.inf
        L = max(closed, lag)
        note = "Gaussian l(2|U|/k)" if closed >= lag else "Laguerre lower bound"
    rep = bounds.bound_report(inputs, L)
    rep["thm4"].notes += f" ({note})"
    rep.add("lemma2", math.inf, "needs a channel")
    out = rep.to_dict()
    out["context"]["L"] = L
    return out


def _print_bounds(rep: dict):
    ctx = rep["context"]
    print(" ".join(f"{k}={_fmt(v)}" for k, v in ctx.items()))
    for row in rep["bounds"]:
        val = "n/a" if row["value"] is None else _fmt(row["value"])
        print(f"{row['name']:<22} {val:<24} {row['notes']}")


# mc


MC_KEYS = {f: getattr(mc.McConfig(), f) for f in mc.McConfig.__dataclass_fields__}


def mc_config(cfg: dict, seed: int | None = None, threads: int | None = None) -> mc.McConfig:
    cfg = _take(cfg, MC_KEYS)
    if seed is not None:
        cfg["master_seed"] = int(seed)
    cfg["threads"] = 1 if threads is None else threads
    try:
        cfg["U_range"] = tuple(float(v) for v in cfg["U_range"])
        cfg["mu_range"] = tuple(float(v) for v in cfg["mu_range"])
        for key in ("N", "K", "master_seed"):
            cfg[key] = int(cfg[key])
        for key in ("p", "q", "alpha", "Delta", "variance"):
            cfg[key] = float(cfg[key])
        return mc.McConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad mc config: {exc}") from None


def record_row(r: mc.McRecord) -> list[str]:
    vals = [r.run_id, r.seed, r.U_size, r.u, r.mu.mu1, r.mu.mu2, r.p, r.q, r.case, r.alpha,
            r.ratio, r.certificate, r.uniform_bound, r.gl_bound, r.kozek_bound, r.notes]
    return [_fmt(v) for v in vals]


def write_csv(path: Path, records: list, manifest: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest={manifest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(record_row(r))


def _log_map(lo, hi, a, b):
    llo, lhi = math.log10(lo), math.log10(hi)
    return lambda v: a + (math.log10(v) - llo) / (lhi - llo) * (b - a)


def write_svg(path: Path, records: list, manifest: str):
    """Log-log scatter of ratios against |U| with the uniform and GL bounds."""
    ok = sorted((r for r in records if not r.failed), key=lambda r: r.U_size)
    W, H, m = 640, 480, 60
    xs = [r.U_size for r in ok]
    series = {
        "ratio": [r.ratio for r in ok],
        "uniform": [r.uniform_bound for r in ok],
        "gl": [r.gl_bound for r in ok],
    }
    ys = [v for s in series.values() for v in s if v > 0 and math.isfinite(v)]
    lines = [f"<!-- manifest={manifest} -->",
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    if xs and ys:
        x0, x1 = min(xs), max(xs)
        if x1 <= x0:
            x0, x1 = x0 / 2, x1 * 2
        y0, y1 = min(ys) / 1.5, max(ys) * 1.5
        fx = _log_map(x0, x1, m, W - m / 2)
        fy = _log_map(y0, y1, H - m, m / 2)
        lines.append(f'<g id="axes" stroke="black" fill="none">'
                     f'<line x1="{m}" y1="{H - m}" x2="{W - m / 2}" y2="{H - m}"/>'
                     f'<line x1="{m}" y1="{H - m}" x2="{m}" y2="{m / 2}"/></g>')
        for d in range(math.floor(math.log10(x0)), math.ceil(math.log10(x1)) + 1):
            if x0 <= 10.0**d <= x1:
                lines.append(f'<text x="{fx(10.0**d):.2f}" y="{H - m + 18}" font-size="12" '
                             f'text-anchor="middle">1e{d}</text>')
        for d in range(math.floor(math.log10(y0)), math.ceil(math.log10(y1)) + 1):
            if y0 <= 10.0**d <= y1:
                lines.append(f'<text x="{m - 6}" y="{fy(10.0**d):.2f}" font-size="12" '
                             f'text-anchor="end">1e{d}</text>')
        lines.append(f'<text x="{W / 2}" y="{H - 12}" font-size="13" text-anchor="middle">|U|</text>')
        lines.append(f'<text x="16" y="{H / 2}" font-size="13" text-anchor="middle" '
                     f'transform="rotate(-90 16 {H / 2})">E_p / ||Sigma||_q</text>')
        for name, colour in (("uniform", "#d62728"), ("gl", "#1f77b4")):
            pts = " ".join(f"{fx(x):.2f},{fy(y):.2f}" for x, y in zip(xs, series[name])
                           if y > 0 and math.isfinite(y))
            if pts:
                lines.append(f'<polyline id="{name}" fill="none" stroke="{colour}" points="{pts}"/>')
        lines.append('<g id="ratio" fill="black">')
        for x, y in zip(xs, series["ratio"]):
            if y > 0:
                lines.append(f'<circle cx="{fx(x):.2f}" cy="{fy(y):.2f}" r="1.5"/>')
        lines.append("</g>")
    lines.append('<g id="legend" font-size="12">'
                 f'<circle cx="{W - 150}" cy="20" r="3" fill="black"/>'
                 f'<text x="{W - 140}" y="24">MC ratio</text>'
                 f'<line x1="{W - 155}" y1="38" x2="{W - 145}" y2="38" stroke="#d62728"/>'
                 f'<text x="{W - 140}" y="42">uniform bound</text>'
                 f'<line x1="{W - 155}" y1="56" x2="{W - 145}" y2="56" stroke="#1f77b4"/>'
                 f'<text x="{W - 140}" y="60">GL bound</text></g>')
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n")


def cmd_mc(cfg: mc.McConfig, out: Path, svg: bool = False, log=print) -> tuple[list, dict, int]:
    outputs = ["results.csv"] + (["scatter.svg"] if svg else [])
    write_manifest(out, "mc", cfg.to_dict(), outputs)
    status = EXIT_OK
    try:
        records = mc.run_mc(cfg)
    except mc.McAbort as exc:
        records, status = exc.records, EXIT_MC
        log(f"aborted: {exc}", file=sys.stderr)
    write_csv(out / "results.csv", records, MANIFEST_NAME)
    if svg:
        write_svg(out / "scatter.svg", records, MANIFEST_NAME)
    summary = mc.summarize(records, cfg.Delta)
    if summary["failed"] and status == EXIT_OK:
        status = EXIT_MC
    return records, summary, status


# ep


EP_DEFAULTS = {"coefficients": None, "seed": None, "K": 4, "U": None, "u": None, "mu": [0.0, 0.0],
               "p": 2.0, "q": 2.0, "case": "C1", "alpha": 0.0, "Delta": 1e-8, "placement": "corner",
               "variance": 1.0, "expected_ratio": None}


def _coefficients(cfg: dict):
    if cfg["coefficients"] is not None:
        try:
            c = np.array([complex(a, b) for a, b in cfg["coefficients"]])
        except (TypeError, ValueError):
            raise ConfigError("coefficients must be [re, im] pairs") from None
        if cfg["u"] is None and cfg["U"] is None:
            raise ConfigError("explicit coefficients need u or U")
        K = int(round(math.sqrt(c.size)))
        if K * K != c.size or c.size == 0:
            raise ConfigError("need K^2 coefficients")
        u = float(cfg["u"]) if cfg["u"] is not None else math.sqrt(_number(cfg, "U", 0)) / K
        return c, u, K
    if cfg["seed"] is None or cfg["U"] is None:
        raise ConfigError("need coefficients, or seed and U")
    K = int(cfg["K"])
    rng = np.random.default_rng(int(cfg["seed"]))
    try:
        c, u = mc.sample_channel(K, _number(cfg, "U", 0), rng, float(cfg["variance"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return c, u, K


def cmd_ep(cfg: dict, log=print) -> dict:
    cfg = _take(cfg, EP_DEFAULTS)
    c, u, K = _coefficients(cfg)
    p, q = _number(cfg, "p", 1), _number(cfg, "q", 1, allow_inf=True)
    case, alpha, Delta = cfg["case"], _number(cfg, "alpha"), _number(cfg, "Delta", 0)
    if case not in ("C1", "C2"):
        raise ConfigError("case must be C1 or C2")
    if cfg["placement"] not in ("corner", "centered") or Delta <= 0:
        raise ConfigError("bad placement or Delta")
    if case == "C2" and alpha == 0.5:
        log("route: analytic F_k fast path (C2, alpha=1/2)", file=sys.stderr)
    else:
        log(f"route: quadrature F_k ({case}, alpha={_fmt(alpha)})", file=sys.stderr)
    try:
        mu = [float(v) for v in cfg["mu"]]
        ratio, cert, budget = mc.ep_certified(c, u, mu, p, q, case, alpha, Delta,
                                              mc.model_origin(K, u, cfg["placement"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = {"ratio": ratio, "certificate": cert, "Delta": Delta, "u": u, "K": K,
           "L": budget.L, "delta": budget.delta}
    if cfg["expected_ratio"] is not None:
        out["expected_ratio"] = float(cfg["expected_ratio"])
        out["matches_expected"] = abs(ratio - out["expected_ratio"]) <= 2 * Delta
    return out


# loc


LOC_DEFAULTS = {"shape": "disc", "U": 0.01, "tau": None, "nu": None, "r": None, "rtol": 1e-6}


def cmd_loc(cfg: dict) -> dict:
    cfg = _take(cfg, LOC_DEFAULTS)
    U = _region(cfg)
    r = None if cfg["r"] is None else _number(cfg, "r", 0)
    rep = localization.loc_report(U, r, _number(cfg, "rtol", 0))
    lower = rep["laguerre_lower"][0]
    qq = rep["lambda_max_QstarQ"]
    rep["chain_holds"] = bool(lower <= qq * (1 + 1e-9) and qq <= rep["N2"]) if math.isfinite(lower) else None
    return rep


def _print_kv(d: dict):
    for k, v in d.items():
        if isinstance(v, list):
            v = " ".join(_fmt(x) for x in v)
        print(f"{k:<20} {_fmt(v)}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfchan", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"tfchan {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("bounds", "evaluate the E_p bounds for a support region"),
                       ("mc", "run a Monte-Carlo verification campaign"),
                       ("ep", "certified E_p ratio for one finite channel"),
                       ("loc", "localization-operator eigenvalues and fidelity bounds")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--json", action="store_true", help="machine-readable stdout")
        if name == "mc":
            sp.add_argument("--svg", action="store_true")
            sp.add_argument("--seed", type=int)
            sp.add_argument("--threads", type=int)
    return ap


def _emit(doc: dict, as_json: bool, printer):
    if as_json:
        print(json.dumps(doc, indent=2, sort_keys=True, default=_fmt))
    else:
        printer(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else None
        if args.command == "mc":
            mcfg = mc_config(cfg, args.seed, _threads(args.threads))
            records, summary, status = cmd_mc(mcfg, out or Path("tfchan-mc"), args.svg)
            _emit(summary, args.json, _print_kv)
            return status
        if args.command == "bounds":
            rep = cmd_bounds(cfg)
            if out:
                write_manifest(out, "bounds", cfg, ["bounds.json"])
                (out / "bounds.json").write_text(json.dumps({"manifest": MANIFEST_NAME, **rep}, indent=2) + "\n")
            _emit(rep, args.json, _print_bounds)
            return EXIT_OK
        if args.command == "ep":
            try:
                res = cmd_ep(cfg)
            except AccuracyError as exc:
                best = getattr(exc, "best", None)
                print(f"accuracy failure: {exc}" + (f"; best {best.value}" if best else ""), file=sys.stderr)
                return EXIT_ACCURACY
            if out:
                write_manifest(out, "ep", cfg, ["ep.json"])
                (out / "ep.json").write_text(json.dumps({"manifest": MANIFEST_NAME, **res}, indent=2) + "\n")
            _emit(res, args.json, _print_kv)
            return EXIT_OK
        rep = cmd_loc(cfg)
        if out:
            write_manifest(out, "loc", cfg, ["loc.json"])
            (out / "loc.json").write_text(json.dumps({"manifest": MANIFEST_NAME, **rep}, indent=2) + "\n")
        _emit(rep, args.json, _print_kv)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AccuracyError as exc:
        print(f"accuracy failure: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
