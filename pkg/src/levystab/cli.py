"""Command-line front end: ``levystab [experiment] --config run.json --set key=value ...``.

Every run is a pure function of the resolved configuration (defaults, then the
config file, then ``--set`` overrides, then ``--seed``).  Reports embed that
configuration and its SHA-256 hash; nothing time- or host-dependent is written.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    EquivalenceError,
    LevyError,
    NoSolutionError,
)
from .levy_core import LevyModel
from .measure_change import (
    MeasureSelector,
    girsanov_for,
    martingale_residual,
    memm_sign_classify,
    tilted_triplet,
)
from .parametric import ParametricFamily, equivalent_drift
from .pricing import PayoffSpec, SimConfig, cf_price, law_under, mc_price, model_price, price_gap
from .stability_bounds import (
    ModelPair,
    compute_bound_report,
    convergence_curve_cor3,
    parametric_bound_thm2,
)
from .estimation import estimator_distribution

EXIT_OK, EXIT_NO_SOLUTION, EXIT_EQUIVALENCE, EXIT_CONFIG, EXIT_OTHER = 0, 2, 3, 4, 1

EXPERIMENTS = ("calibrate", "bound", "price", "stability", "parametric", "convergence")
TABLE_EXPERIMENTS = ("stability", "parametric", "convergence")

STABILITY_HEADER = ("param", "delta", "gap", "stderr", "bound_thm1", "bound_cor1", "holds")
PARAMETRIC_HEADER = ("n", "eps", "sup_R_T", "bound", "empirical_gap", "stderr")
CONVERGENCE_HEADER = ("n", "eps_n", "sup_R_T", "bound", "empirical_gap", "stderr")

DEFAULT_CONFIG: dict[str, Any] = {
    "experiment": "calibrate",
    "model": {"family": "vg", "b": 0.0, "c": 0.0, "params": {"C": 1.0, "M": 5.0, "N": 5.0}},
    "tilde": None,
    "tilde_drift": "equivalent",
    "selector": {"kind": "esscher", "q": None},
    "payoff": {"kind": "call", "K": 1.0},
    "T": 1.0,
    "r": 0.0,
    "seed": 0,
    "sim": {"n_paths": 100_000, "n_steps": 1, "small_jump_cutoff": 1e-3, "batch_size": 50_000},
    "pricing": {"method": "cf"},
    "stability": {"params": None, "deltas": [0.0, 0.01, 0.02, 0.05, 0.1], "method": "cf"},
    "parametric": {"eps": None, "n": 2000, "batches": 50, "dt": 1.0 / 12.0, "quantile": 0.95},
    "convergence": {"sizes": [500, 2000, 8000], "batches": 50, "dt": 1.0 / 12.0, "quantile": 0.95},
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_set(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"empty key in --set {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def _apply_set(cfg: dict[str, Any], path: list[str], value: Any) -> None:
    if path[0] not in DEFAULT_CONFIG:
        raise ConfigError(f"unknown configuration key {path[0]!r}")
    node = cfg
    for p in path[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[path[-1]] = value


def resolve_config(config_path: str | None, sets: Sequence[str] = (), seed: int | None = None,
                   experiment: str | None = None) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path!r}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULT_CONFIG))
        if unknown:
            raise ConfigError(f"unknown configuration keys {unknown}")
        cfg = _merge(cfg, loaded)
    for item in sets:
        _apply_set(cfg, *_parse_set(item))
    if seed is not None:
        cfg["seed"] = int(seed)
    if experiment is not None:
        cfg["experiment"] = experiment
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg['experiment']!r}")
    return cfg


def config_hash(cfg: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


class _Run:
    """Typed views of a resolved configuration."""

    def __init__(self, cfg: dict[str, Any]):
        self.cfg = cfg
        try:
            self.model = LevyModel.from_dict(cfg["model"])
            self.T = float(cfg["T"])
            self.r = float(cfg["r"])
            sel = dict(cfg["selector"] or {})
            self.selector = MeasureSelector(sel.get("kind", "esscher"), sel.get("q"), self.r)
            self.payoff = PayoffSpec.from_dict(cfg["payoff"])
            self.seed = int(cfg["seed"])
            self.sim = SimConfig.from_dict({**cfg["sim"], "seed": self.seed})
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None
        if not self.T > 0:
            raise ConfigError("T must be positive")

    def tilde(self) -> LevyModel:
        spec = self.cfg.get("tilde")
        if not spec:
            raise ConfigError("this experiment needs a 'tilde' model")
        try:
            tilde = LevyModel.from_dict(spec)
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"invalid tilde model: {exc}") from None
        mode = self.cfg.get("tilde_drift", "equivalent")
        if mode == "equivalent":
            if tilde.family == self.model.family and tilde.has_jumps:
                tilde = tilde.replace(b=equivalent_drift(self.model, tilde))
        elif mode != "given":
            raise ConfigError("tilde_drift must be 'equivalent' or 'given'")
        return tilde

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.cfg.get(name) or {})


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def cmd_calibrate(run: _Run) -> dict[str, Any]:
    model, sel = run.model, run.selector
    out: dict[str, Any] = {"selector": sel.to_dict(), "model": model.to_dict()}
    if sel.kind == "memm" and model.family in ("vg", "gmy", "cgmy"):
        out["memm_sign"] = memm_sign_classify(model, run.r).to_dict()
    pair = girsanov_for(sel, model)
    law = tilted_triplet(model, pair)
    out["girsanov"] = pair.to_dict()
    if pair.lam is not None:
        out["lambda"] = pair.lam
    if sel.kind == "fq":
        out["beta_q"] = pair.beta
        out["support_ok"] = pair.support_violation(model) is None
    out["residual"] = pair.report.residual if pair.report else 0.0
    out["martingale_residual"] = martingale_residual(law, run.r)
    out["tilted"] = law.to_dict()
    return out


def cmd_bound(run: _Run) -> dict[str, Any]:
    pair = ModelPair(run.model, run.tilde(), run.selector, run.T)
    return compute_bound_report(pair, run.payoff.growth).to_dict()


def cmd_price(run: _Run) -> dict[str, Any]:
    law = law_under(run.model, run.selector)
    method = run.section("pricing").get("method", "cf")
    out: dict[str, Any] = {"payoff": run.payoff.to_dict(), "tilted": law.to_dict()}
    if method in ("cf", "both"):
        out["cf"] = cf_price(law, run.payoff, T=run.T, r=run.r).to_dict()
    if method in ("mc", "both"):
        out["mc"] = mc_price(law, run.payoff, run.T, run.r, run.sim).to_dict()
    if method not in ("cf", "mc", "both"):
        raise ConfigError("pricing.method must be cf, mc or both")
    return out


def _default_params(model: LevyModel) -> list[str]:
    return ["b"] if model.family == "bs" else ["M", "N"] if model.has_left else ["N"]


def cmd_stability(run: _Run) -> list[dict[str, Any]]:
    sec = run.section("stability")
    params = sec.get("params") or _default_params(run.model)
    deltas = [float(d) for d in sec.get("deltas", [])]
    method = sec.get("method", "cf")
    rows = []
    for name in params:
        for delta in deltas:
            row: dict[str, Any] = {"param": name, "delta": delta}
            try:
                if name in ("b", "c"):
                    tilde = run.model.replace(**{name: getattr(run.model, name) * (1.0 + delta)})
                elif name in run.model.params:
                    tilde = run.model.replace(**{name: run.model.params[name] * (1.0 + delta)})
                    tilde = tilde.replace(b=equivalent_drift(run.model, tilde))
                else:
                    raise ConfigError(f"model has no parameter {name!r}")
                pair = ModelPair(run.model, tilde, run.selector, run.T)
                rep = compute_bound_report(pair, run.payoff.growth)
                gap, se = price_gap(run.model, tilde, run.selector, run.payoff, run.T, run.r,
                                    run.sim, method=method)
                row.update(gap=gap, stderr=se, bound_thm1=rep.bound_thm1, bound_cor1=rep.bound_cor1,
                           holds=bool(gap <= rep.bound_thm1 + 3 * se and gap <= rep.bound_cor1 + 3 * se))
            except ConfigError:
                raise
            except (LevyError, ValueError) as exc:
                row.update(gap=None, stderr=None, bound_thm1=None, bound_cor1=None, holds="error",
                           error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
    return rows


def cmd_parametric(run: _Run) -> list[dict[str, Any]]:
    sec = run.section("parametric")
    family = ParametricFamily(run.model)
    n, batches, dt = int(sec.get("n", 2000)), int(sec.get("batches", 50)), float(sec.get("dt", 1.0 / 12.0))
    dist = estimator_distribution(family, None, n, batches, run.seed, dt=dt)
    theta = family.theta0
    eps = sec.get("eps")
    if eps is None:
        eps = float(np.quantile(dist.distances(), float(sec.get("quantile", 0.95))))
    ref = model_price(run.model, run.selector, run.payoff, run.T, run.r)
    errs = []
    for th in dist.thetas:
        try:
            errs.append(abs(model_price(family.model(th), run.selector, run.payoff, run.T, run.r) - ref))
        except (LevyError, ValueError):
            continue
    errs = np.asarray(errs)
    pb = parametric_bound_thm2(family, theta, dist.thetas, float(eps), run.payoff.growth, run.selector, run.T)
    return [{
        "n": n, "eps": float(eps), "sup_R_T": pb.sup_R_T, "bound": pb.value,
        "empirical_gap": float(errs.mean()) if errs.size else math.nan,
        "stderr": float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0,
        "exceed_prob": pb.exceed_prob, "certified": pb.certified, "excluded": pb.excluded,
        "failed_batches": dist.failed,
    }]


def cmd_convergence(run: _Run) -> list[dict[str, Any]]:
    sec = run.section("convergence")
    return convergence_curve_cor3(
        ParametricFamily(run.model), None, [int(n) for n in sec.get("sizes", [500, 2000, 8000])],
        batches=int(sec.get("batches", 50)), dt=float(sec.get("dt", 1.0 / 12.0)), payoff=run.payoff,
        selector=run.selector, T=run.T, r=run.r, seed=run.seed, quantile=float(sec.get("quantile", 0.95)))


COMMANDS = {
    "calibrate": cmd_calibrate,
    "bound": cmd_bound,
    "price": cmd_price,
    "stability": cmd_stability,
    "parametric": cmd_parametric,
    "convergence": cmd_convergence,
}
HEADERS = {"stability": STABILITY_HEADER, "parametric": PARAMETRIC_HEADER, "convergence": CONVERGENCE_HEADER}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def render_json(experiment: str, cfg: dict[str, Any], result: Any, status: str = "ok") -> str:
    doc = {"experiment": experiment, "status": status, "config": cfg, "config_sha256": config_hash(cfg),
           "result": result}
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(experiment: str, rows: list[dict[str, Any]]) -> str:
    header = HEADERS[experiment]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(row.get(h)) for h in header])
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levystab",
        description="Martingale-measure calibration, Hellinger price-gap bounds and stability experiments "
                    "for exponential Lévy models.")
    p.add_argument("experiment", nargs="?", choices=EXPERIMENTS,
                   help="experiment to run (overrides the config's 'experiment')")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry by dotted path; VALUE is parsed as JSON when possible")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.sets, args.seed, args.experiment)
        run = _Run(cfg)
        experiment = cfg["experiment"]
        if args.format == "csv" and experiment not in TABLE_EXPERIMENTS:
            raise ConfigError(f"csv output is available for {TABLE_EXPERIMENTS} only")
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (DomainError, ValueError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    try:
        result = COMMANDS[experiment](run)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except NoSolutionError as exc:
        err = {"type": "NoSolution", "message": str(exc),
               "bracket": list(exc.bracket) if exc.bracket else None}
        if run.selector.kind == "memm" and run.model.family in ("vg", "gmy", "cgmy"):
            try:
                err["memm_sign"] = memm_sign_classify(run.model, run.r).to_dict()
            except LevyError:
                pass
        _emit(render_json(experiment, cfg, {"error": err}, "no_solution"), args.output)
        sys.stderr.write(f"no solution: {exc}\n")
        return EXIT_NO_SOLUTION
    except (EquivalenceError, DivergenceError) as exc:
        err = {"type": type(exc).__name__, "message": str(exc), "tail": getattr(exc, "tail", None)}
        _emit(render_json(experiment, cfg, {"error": err}, "not_equivalent"), args.output)
        sys.stderr.write(f"equivalence/integrability failure: {exc}\n")
        return EXIT_EQUIVALENCE
    except LevyError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_OTHER
    if args.format == "csv":
        _emit(render_csv(experiment, result), args.output)
        if args.output:
            Path(str(args.output) + ".meta.json").write_text(render_json(experiment, cfg, {"rows": result}))
    else:
        payload = {"rows": result} if experiment in TABLE_EXPERIMENTS else result
        _emit(render_json(experiment, cfg, payload), args.output)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
