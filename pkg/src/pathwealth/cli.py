"""Command-line front end: ``pathwealth <command> --config run.json``.

Commands: wealth, aggregate, universal, verify, asymptotics.  Outputs are
CSV and JSON files in the output directory (``--output-dir``, else the
config's ``output_dir``, else ``$PATHWEALTH_OUTPUT_DIR``, else
``./pathwealth_out``).  Exit codes: 0 success, 2 configuration or input
error, 3 ruin or jump-bound violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import aggregation, universal
from .errors import CSVError, InvalidParams, OmegaViolation, PathwealthError, Ruin
from .paths import (
    CadlagPath,
    OmegaConstraint,
    Partition,
    RefinementLadder,
    check_omega,
    default_ladder,
    dyadic_ladder,
    ingest_csv,
    path_to_csv,
)
from .scenarios import generate
from .strategies import Strategy, from_spec
from .wealth import (
    CLOSED_FORM_KINDS,
    closed_form_wealth,
    ito_decomposition,
    verify_self_financing,
    wealth_limit,
)

log = logging.getLogger("pathwealth")

COMMANDS = ("wealth", "aggregate", "universal", "verify", "asymptotics")
OUTPUT_ENV = "PATHWEALTH_OUTPUT_DIR"


class ConfigError(PathwealthError):
    pass


def _num(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not serialisable: {type(v)!r}")


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_num) + "\n"


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# config


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def build_path(spec: dict, seed: int | None, base: Path) -> CadlagPath:
    if not isinstance(spec, dict):
        raise ConfigError("'path' must be an object")
    sources = [k for k in ("generator", "csv", "json") if k in spec]
    if len(sources) != 1:
        raise ConfigError("'path' needs exactly one of 'generator', 'csv', 'json'")
    src = sources[0]
    if src == "generator":
        s = spec.get("seed", seed)
        if s is None:
            raise ConfigError("generator paths need a seed")
        return generate(spec["generator"], spec.get("params", {}), int(s))
    if src == "csv":
        return ingest_csv(str(_resolve(base, spec["csv"])), spec.get("interpolation", "constant"))
    try:
        text = _resolve(base, spec["json"]).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read path file: {exc}") from exc
    return CadlagPath.from_json(text)


def build_ladder(spec: dict | None, path: CadlagPath) -> RefinementLadder:
    if spec is None or spec.get("kind", "default") == "default":
        return default_ladder(path, max_levels=int((spec or {}).get("levels", 8)))
    kind = spec["kind"]
    if kind == "dyadic":
        return dyadic_ladder(
            float(spec.get("T", path.horizon)),
            base_cells=int(spec.get("base_cells", 16)),
            max_levels=int(spec.get("levels", 8)),
            include=path.times if path.interpolation == "constant" else None,
        )
    if kind == "uniform":
        return RefinementLadder((Partition.uniform(path.horizon, int(spec["cells"])),), "custom")
    if kind == "knots":
        return RefinementLadder((Partition(path.times),), "custom")
    raise ConfigError(f"unknown ladder kind {kind!r}")


def build_strategies(cfg: dict) -> list[Strategy]:
    specs = cfg.get("strategies")
    if not isinstance(specs, list) or not specs:
        raise ConfigError("'strategies' must be a non-empty list of strategy specs")
    return [from_spec(s) for s in specs]


def build_omega(cfg: dict) -> OmegaConstraint | None:
    o = cfg.get("omega")
    if o is None:
        return None
    return OmegaConstraint(float(o["delta_minus"]), float(o["delta_plus"]))


class Run:
    def __init__(self, cfg: dict, base: Path, out: Path, seed: int | None):
        self.cfg = cfg
        self.base = base
        self.out = out
        self.seed = seed if seed is not None else cfg.get("seed")
        self.path = build_path(cfg.get("path"), self.seed, base) if "path" in cfg else None
        if self.path is None:
            raise ConfigError("config needs a 'path' source")
        self.ladder = build_ladder(cfg.get("ladder"), self.path)
        self.omega = build_omega(cfg)
        out.mkdir(parents=True, exist_ok=True)
        (out / "path.csv").write_text(path_to_csv(self.path))

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        log.info("wrote %s", self.out / name)


def _names(strategies):
    return [f"{k + 1}:{s.kind}" for k, s in enumerate(strategies)]


def cmd_wealth(run: Run) -> dict:
    strategies = build_strategies(run.cfg)
    xi = float(run.cfg.get("xi", 1.0))
    summary = {"strategies": [], "horizon": run.path.horizon}
    oracle_rows = []
    for k, s in enumerate(strategies):
        curve = wealth_limit(s, run.path, run.ladder, xi)
        run.write(f"wealth_{k + 1}.csv", curve.to_csv())
        entry = {"name": _names(strategies)[k], "spec": s.to_spec(), **curve.to_dict()}
        if s.kind in CLOSED_FORM_KINDS:
            t = run.path.horizon
            cf = xi * closed_form_wealth(s, None, run.path, t)
            err = abs(curve.final - cf) / cf
            oracle_rows.append([k + 1, s.kind, t, curve.final, cf, err])
            entry["closed_form"] = cf
        sf = verify_self_financing(s, run.path, run.ladder.finest, xi, probes=int(run.cfg.get("probes", 10)))
        entry["self_financing"] = sf.to_dict()
        summary["strategies"].append(entry)
    write_csv(run.out / "oracle.csv", ["strategy", "kind", "t", "V", "closed_form", "rel_err"], oracle_rows)
    run.write("wealth.json", dump_json(summary))
    return summary


def cmd_aggregate(run: Run) -> dict:
    strategies = build_strategies(run.cfg)
    m = len(strategies)
    b = np.asarray(run.cfg.get("b", [1.0 / m] * m), dtype=float)
    agg = aggregation.laissez_faire(strategies, b)
    res = aggregation.run_aggregate_on_path(agg, run.path, run.ladder.finest)
    mix = b @ res.child_wealths
    err = aggregation.verify_mixture(res.w_hat, res.child_wealths, b)
    report = {"b": b, "mixture_error": err, "horizon": run.path.horizon}
    rows = []
    if np.all(b > 0):
        tr = aggregation.tracking_report(res.child_wealths, res.w_hat, b, run.path.horizon)
        report["tracking"] = tr.to_dict()
        ratio = tr.ratio
    else:
        ratio = res.child_wealths.max(axis=0) / res.w_hat
        report["tracking"] = None
    for i, t in enumerate(res.times):
        rows.append([t, res.w_hat[i], mix[i], res.child_wealths[:, i].max(), ratio[i]])
    write_csv(run.out / "aggregate.csv", ["t", "W_hat", "mixture", "W_star", "ratio"], rows)
    sc = run.cfg.get("scenarios")
    if sc is not None:
        count = int(sc.get("count", 8))
        s0 = int(sc.get("seed", run.seed if run.seed is not None else 0))
        paths = [generate(sc["generator"], sc.get("params", {}), s0 + j) for j in range(count)]
        mm = aggregation.minimax_weights(strategies, paths)
        report["minimax"] = mm.to_dict()
        write_csv(run.out / "minimax.csv", ["scenario", "ratio"], [[j, r] for j, r in enumerate(mm.scenario_ratios)])
        if m <= 3:
            oracle = _grid_oracle(mm.terminal_wealths)
            report["minimax"]["grid_oracle"] = oracle
    run.write("aggregate.json", dump_json(report))
    return report


def _grid_oracle(W: np.ndarray, n: int = 200) -> dict:
    a = W / W.max(axis=1, keepdims=True)
    m = a.shape[1]
    ticks = np.linspace(0, 1, n + 1)
    pts = np.array(np.meshgrid(*([ticks] * (m - 1)), indexing="ij")).reshape(m - 1, -1).T if m > 1 else np.zeros((1, 0))
    pts = pts[pts.sum(axis=1) <= 1 + 1e-12]
    B = np.hstack([pts, 1 - pts.sum(axis=1, keepdims=True)])
    vals = np.max(1.0 / (a @ B.T), axis=0)
    j = int(np.argmin(vals))
    return {"b": B[j].tolist(), "value": float(vals[j]), "resolution": 1.0 / n}


def _universal_grid(run: Run):
    from .paths import discretize

    if run.path.interpolation == "linear" or "ladder" in run.cfg:
        return discretize(run.path, run.ladder.finest)
    return discretize(run.path, run.path.times)


def cmd_universal(run: Run) -> dict:
    strategies = build_strategies(run.cfg)
    q = universal.make_quadrature(len(strategies), run.cfg.get("quadrature"))
    if run.omega is not None and not check_omega(run.path, run.omega).ok:
        rep = check_omega(run.path, run.omega)
        raise OmegaViolation(f"path leaves the jump bounds (min {rep.min_ratio!r}, max {rep.max_ratio!r})",
                             rep.worst_time)
    grid = _universal_grid(run)
    res = universal.universal_from_grid(strategies, grid, q, run.omega, w_star_curve=True)
    report = res.to_dict()
    dm = run.omega.delta_minus if run.omega else 0.0
    dp = run.omega.delta_plus if run.omega else 0.0
    report["exact_ratio_check"] = universal.exact_ratio_check(res, res.gram, dm, dp).to_dict()
    run.write("universal.json", dump_json(report))
    run.write("universal_curves.csv", res.curves_csv())
    if "horizons" in run.cfg:
        report["asymptotics"] = _asymptotics(run, strategies, q)
    return report


def _asymptotics(run: Run, strategies, q) -> list[dict]:
    horizons = run.cfg.get("horizons")
    if not horizons:
        raise ConfigError("'horizons' must be a non-empty list")
    part = None if run.path.interpolation != "linear" else run.ladder.finest
    rows = universal.asymptotics_experiment(strategies, run.path, horizons, q, part)
    out = [r.to_dict() for r in rows]
    write_csv(
        run.out / "asymptotics.csv",
        ["t", "log_ratio", "log_det_term", "ratio", "rate", "interior"],
        [[r.t, r.log_ratio, r.log_det_term, r.ratio, r.rate, str(r.interior).lower()] for r in rows],
    )
    run.write("asymptotics.json", dump_json(out))
    return out


def cmd_asymptotics(run: Run) -> list[dict]:
    strategies = build_strategies(run.cfg)
    q = universal.make_quadrature(len(strategies), run.cfg.get("quadrature"))
    return _asymptotics(run, strategies, q)


def cmd_verify(run: Run) -> dict:
    strategies = build_strategies(run.cfg)
    report = {"strategies": []}
    if run.omega is not None:
        rep = check_omega(run.path, run.omega)
        report["omega"] = {"ok": rep.ok, "min_ratio": rep.min_ratio, "max_ratio": rep.max_ratio,
                           "worst_time": rep.worst_time}
    for k, s in enumerate(strategies):
        sf = verify_self_financing(s, run.path, run.ladder.finest, probes=int(run.cfg.get("probes", 10)))
        ito = ito_decomposition(s, run.path, run.ladder, run.omega)
        report["strategies"].append({
            "name": _names(strategies)[k],
            "self_financing": sf.to_dict(),
            "ito": {"residual": ito.residual, "bound_holds": ito.bound_holds,
                    "jump_series": float(ito.jumps[-1]), "bound": float(ito.bound[-1])},
        })
    run.write("verify.json", dump_json(report))
    return report


HANDLERS = {
    "wealth": cmd_wealth,
    "aggregate": cmd_aggregate,
    "universal": cmd_universal,
    "verify": cmd_verify,
    "asymptotics": cmd_asymptotics,
}


def output_dir(arg: str | None, cfg: dict, base: Path) -> Path:
    if arg:
        return Path(arg)
    if cfg.get("output_dir"):
        return _resolve(base, cfg["output_dir"])
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path("pathwealth_out")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pathwealth", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output-dir", help="directory for result files")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        base = Path(args.config).resolve().parent
        run = Run(cfg, base, output_dir(args.output_dir, cfg, base), args.seed)
        HANDLERS[args.command](run)
    except (Ruin, OmegaViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InvalidParams, CSVError, KeyError, TypeError, ValueError) as exc:
        msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
