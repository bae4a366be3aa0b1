"""Command-line entry point: ``nsquant <command> [options]``.

Every flag has a JSON config-file equivalent (same name, dashes replaced by
underscores); flags given on the command line override the file.  Outputs
are deterministic given input bytes, configuration and seed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bandwidth import local_bandwidth_profile, select_bandwidth
from .curvefit import default_grid
from .datafile import deseasonalize, read_series, write_series
from .errors import NsquantError, ParseError, SpecValidationError
from .inference import iqr_band, pointwise_band
from .kernel import get_kernel
from .procsim import (ExperimentSpec, boundary_experiment, coverage_study, simulate, spec_from_dict,
                      spec_to_dict)

DEFAULT_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
MODES = ("auto-static", "auto-local", "fixed")
EXIT_OK, EXIT_FATAL, EXIT_USAGE = 0, 1, 2


@dataclass
class RunConfig:
    alpha: list | None = None
    gamma: float = 0.05
    bandwidth_mode: str = "auto-static"
    bandwidth: float | None = None
    second_bandwidth: float | None = None
    kernel: str = "epanechnikov"
    seed: int = 0
    output_dir: str = "."
    input: str | None = None
    output: str | None = None
    period: int | None = None
    grid_size: int | None = None
    # experiment settings (simulate, coverage, boundary)
    process: dict | None = None
    n: int | None = None
    replications: int = 100
    test_points: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    t: float = 0.0

    def levels(self, default=DEFAULT_LEVELS) -> list[float]:
        lv = list(default if self.alpha is None else self.alpha)
        if not lv:
            raise ValueError("at least one quantile level is required")
        if any(not 0.0 < a < 1.0 for a in lv):
            raise ValueError("quantile levels must lie in (0, 1)")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("quantile levels must be strictly increasing")
        return lv

    def validate(self) -> None:
        if self.bandwidth_mode not in MODES:
            raise ValueError(f"bandwidth mode must be one of {MODES}")
        if self.bandwidth_mode == "fixed" and self.bandwidth is None:
            raise ValueError("fixed bandwidth mode needs --bandwidth")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        get_kernel(self.kernel)


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ParseError("config file must hold a JSON object")
    names = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(unknown)}")
    if "alpha" in data and not isinstance(data["alpha"], list):
        data["alpha"] = [data["alpha"]]
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


# -- output helpers --------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _level_tag(alpha: float) -> str:
    return format(alpha, "g")


def _flag_counts(flags) -> dict:
    c = Counter(f for row in flags for f in row.split("|") if f)
    return dict(sorted(c.items()))


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _config_record(cfg: RunConfig) -> dict:
    rec = asdict(cfg)
    for k in ("input", "output", "output_dir"):
        rec.pop(k)
    return rec


def _grid(cfg: RunConfig, n: int):
    return default_grid(n, cfg.grid_size)


def _need_input(cfg: RunConfig):
    if not cfg.input:
        raise ParseError("--input is required")
    return read_series(cfg.input)


def _choose_bandwidth(series, alpha, cfg: RunConfig, kernel) -> tuple[object, dict]:
    """Bandwidth (scalar, or array over the sample times) plus a summary record."""
    if cfg.bandwidth_mode == "fixed":
        return float(cfg.bandwidth), {"bandwidth": float(cfg.bandwidth)}
    if cfg.bandwidth_mode == "auto-static":
        sel = select_bandwidth(series, alpha, kernel)
        rec = sel.to_dict()
        rec["bandwidth"] = sel.b_star
        return sel.b_star, rec
    prof = local_bandwidth_profile(series, alpha, kernel)
    rec = {
        "b_yj": prof.b_yj,
        "bandwidth": float(np.median(prof.b_local)),
        "bandwidth_min": float(prof.b_local.min()),
        "bandwidth_max": float(prof.b_local.max()),
        "rho_star_mean": float(prof.rho_star_local.mean()),
        "clamped_points": int(prof.clamped.sum()),
    }
    return prof.b_local, rec


def _bbar(b, cfg: RunConfig) -> float:
    if cfg.second_bandwidth is not None:
        return float(cfg.second_bandwidth)
    return 0.5 * float(np.median(np.asarray(b, dtype=float)))


# -- commands -------------------------------------------------------------

def cmd_fit(cfg: RunConfig) -> int:
    series, _ = _need_input(cfg)
    kernel = get_kernel(cfg.kernel)
    out = _out_dir(cfg)
    grid = _grid(cfg, series.n)
    records = []
    for alpha in cfg.levels():
        rec = {"alpha": alpha}
        try:
            b, brec = _choose_bandwidth(series, alpha, cfg, kernel)
            bbar = _bbar(b, cfg)
            band = pointwise_band(series, alpha, b, bbar, cfg.gamma, kernel, grid)
            name = f"curve_alpha_{_level_tag(alpha)}.csv"
            band.to_csv(out / name)
            rec.update(status="ok", file=name, second_bandwidth=bbar, flags=_flag_counts(band.flags), **brec)
        except (NsquantError, ValueError, ArithmeticError) as exc:
            rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
            print(f"level {alpha}: {exc}", file=sys.stderr)
        records.append(rec)
    write_json(out / "summary.json", {"command": "fit", "n": series.n, "config": _config_record(cfg),
                                      "levels": records})
    return EXIT_OK if any(r["status"] == "ok" for r in records) else EXIT_FATAL


def cmd_iqr(cfg: RunConfig) -> int:
    series, _ = _need_input(cfg)
    kernel = get_kernel(cfg.kernel)
    out = _out_dir(cfg)
    grid = _grid(cfg, series.n)
    b25, r25 = _choose_bandwidth(series, 0.25, cfg, kernel)
    b75, r75 = _choose_bandwidth(series, 0.75, cfg, kernel)
    bbar = _bbar(np.minimum(np.median(b25), np.median(b75)), cfg)
    band = iqr_band(series, b25, b75, bbar, cfg.gamma, kernel, grid)
    band.to_csv(out / "iqr.csv")
    write_json(out / "summary.json", {
        "command": "iqr", "n": series.n, "config": _config_record(cfg), "file": "iqr.csv",
        "lower_level": r25, "upper_level": r75, "second_bandwidth": bbar,
        "crossing_points": int(np.sum(band.center.crossing)), "flags": _flag_counts(band.flags),
    })
    return EXIT_OK


def cmd_deseasonalize(cfg: RunConfig) -> int:
    series, labels = _need_input(cfg)
    if cfg.period is None:
        raise ValueError("--period is required")
    values = deseasonalize(series.values, int(cfg.period))
    dest = Path(cfg.output) if cfg.output else _out_dir(cfg) / "deseasonalized.csv"
    write_series(dest, values, labels)
    return EXIT_OK


def _process(cfg: RunConfig):
    if cfg.process is None:
        raise ParseError("a process description is required (config key 'process')")
    spec = spec_from_dict(cfg.process)
    spec.validate()
    return spec


def cmd_simulate(cfg: RunConfig) -> int:
    spec = _process(cfg)
    if not cfg.n or cfg.n < 1:
        raise ValueError("--n must be a positive integer")
    x = simulate(spec, int(cfg.n), cfg.seed)
    dest = Path(cfg.output) if cfg.output else _out_dir(cfg) / "series.csv"
    write_series(dest, x)
    return EXIT_OK


def cmd_coverage(cfg: RunConfig) -> int:
    spec = _process(cfg)
    if not cfg.n:
        raise ValueError("--n is required")
    out = _out_dir(cfg)
    kernel = get_kernel(cfg.kernel)
    bw = cfg.bandwidth if cfg.bandwidth_mode == "fixed" or cfg.bandwidth is not None else None
    reports = []
    lines = ["alpha,t,truth,coverage,mean_width,replications,failures"]
    for alpha in cfg.levels(default=(0.5,)):
        es = ExperimentSpec(spec, int(cfg.n), alpha, cfg.gamma, int(cfg.replications),
                            tuple(cfg.test_points), cfg.seed, bw, kernel=kernel)
        rep = coverage_study(es)
        cov, wid = rep.coverage(), rep.mean_width()
        for k, t in enumerate(rep.test_points):
            lines.append(",".join([_fmt(alpha), _fmt(t), _fmt(rep.truth[k]), _fmt(cov[k]), _fmt(wid[k]),
                                   str(rep.replications), str(rep.failures)]))
        reports.append({"alpha": alpha, **rep.to_dict()})
    (out / "coverage.csv").write_text("\n".join(lines) + "\n")
    write_json(out / "coverage.json", {"process": spec_to_dict(spec), "n": cfg.n, "reports": reports})
    return EXIT_OK


def cmd_bandwidth(cfg: RunConfig) -> int:
    series, _ = _need_input(cfg)
    kernel = get_kernel(cfg.kernel)
    mode = "auto-static" if cfg.bandwidth_mode == "fixed" else cfg.bandwidth_mode
    recs = []
    for alpha in cfg.levels():
        rec = {"alpha": alpha}
        try:
            _, brec = _choose_bandwidth(series, alpha, RunConfig(bandwidth_mode=mode), kernel)
            rec.update(status="ok", **brec)
        except (NsquantError, ValueError, ArithmeticError) as exc:
            rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
        recs.append(rec)
    doc = {"command": "bandwidth", "mode": mode, "n": series.n, "levels": recs}
    write_json(_out_dir(cfg) / "bandwidth.json", doc)
    print(json.dumps(_clean(doc), indent=2, sort_keys=True))
    return EXIT_OK if any(r["status"] == "ok" for r in recs) else EXIT_FATAL


def cmd_boundary(cfg: RunConfig) -> int:
    spec = _process(cfg)
    if not cfg.n:
        raise ValueError("--n is required")
    kernel = get_kernel(cfg.kernel)
    recs = []
    for alpha in cfg.levels(default=(0.9,)):
        rep = boundary_experiment(spec, alpha, int(cfg.n), int(cfg.replications), cfg.bandwidth, cfg.seed,
                                  cfg.t, kernel)
        recs.append({"alpha": alpha, "ratio": rep.ratio, **asdict(rep)})
    doc = {"process": spec_to_dict(spec), "n": cfg.n, "reports": recs}
    write_json(_out_dir(cfg) / "boundary.json", doc)
    print(json.dumps(_clean(doc), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "fit": (cmd_fit, "jackknifed quantile curves with pointwise bands"),
    "iqr": (cmd_iqr, "interquartile-range curve with a pointwise band"),
    "deseasonalize": (cmd_deseasonalize, "remove residue-class means of a given period"),
    "simulate": (cmd_simulate, "simulate a locally stationary process"),
    "coverage": (cmd_coverage, "Monte Carlo coverage of the pointwise bands"),
    "bandwidth": (cmd_bandwidth, "report the selected bandwidths"),
    "boundary": (cmd_boundary, "local linear vs local constant error at a boundary point"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsquant", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--input")
        p.add_argument("--output-dir")
        p.add_argument("--output", help="destination file (deseasonalize, simulate)")
        p.add_argument("--config", help="JSON file; flags override its entries")
        p.add_argument("--alpha", type=float, action="append", help="quantile level (repeatable)")
        p.add_argument("--bandwidth", type=float)
        p.add_argument("--bandwidth-mode", choices=MODES)
        p.add_argument("--second-bandwidth", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--kernel")
        p.add_argument("--seed", type=int)
        p.add_argument("--period", type=int)
        p.add_argument("--grid-size", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--replications", type=int)
        p.add_argument("--t", type=float, help="evaluation point (boundary)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args)
        return func(cfg)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecValidationError as exc:
        print(f"error: invalid process: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (NsquantError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
