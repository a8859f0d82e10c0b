"""``treegauss`` command line: entropy curves, metric comparisons, simulation, verdicts.

Every run writes CSV tables plus JSON files into ``--out``.  Each JSON file
carries the fully resolved configuration; each CSV gets a sidecar
``<name>.config.json`` with the same content, so any artifact can be
regenerated from what sits next to it.
"""
from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any

import click
import numpy as np

from . import criteria as crit
from .entropy import (chain_resolvable_range, covering_curve, dudley_integral,
                      entropy_equivalence_report, fit_exponent, geometric_grid, sudakov_sup)
from .gauss_sim import DEFAULT_BINARY_CAP, SimConfig, estimate_esup
from .rng import DEFAULT_SEED
from .tree_core import BINARY, CHAIN, Tree, TreeError, tree_from_json_dict
from .tree_metrics import ChainMetric, distance_matrix
from .weights import LEVEL, WeightError, WeightSystem, weights_from_dict

REPRODUCE_TARGETS = ("prop41", "prop42", "cor62", "c2-remark", "onesided")


class ConfigError(click.ClickException):
    exit_code = 2


class DepthCapError(click.ClickException):
    exit_code = 3


class NonHomogeneousError(click.ClickException):
    exit_code = 4


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _parse_depths(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--depth expects an integer or a comma list, got {text!r}") from None


def resolve_config(base: dict, **overrides) -> dict:
    cfg = json.loads(json.dumps(base))  # deep copy through JSON keeps it serializable
    for key, val in overrides.items():
        if val is None:
            continue
        if key in ("eps_start", "eps_stop", "eps_points"):
            cfg.setdefault("eps", {})[key[4:]] = val
        else:
            cfg[key] = val
    cfg.setdefault("seed", DEFAULT_SEED)
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def _tree(cfg: dict) -> Tree:
    if "tree" not in cfg:
        raise ConfigError("config needs a 'tree' entry")
    try:
        return tree_from_json_dict(cfg["tree"])
    except TreeError as exc:
        if "exceeds the cap" in str(exc):
            raise DepthCapError(str(exc)) from None
        raise ConfigError(f"invalid tree: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid tree: {exc}") from None


def _weights(doc: Any, tree: Tree | None) -> WeightSystem:
    if doc is None:
        raise ConfigError("config needs a 'weights' entry")
    try:
        w = weights_from_dict(doc, tree)
        if tree is not None:
            w.validate_tree(tree)
        return w
    except (WeightError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid weights: {exc}") from None


def _grid(cfg: dict, tree: Tree, w: WeightSystem) -> np.ndarray | None:
    eps = cfg.get("eps") or {}
    points = int(eps.get("points", 64))
    start, stop = eps.get("start"), eps.get("stop")
    if start is None or stop is None:
        if tree.kind == CHAIN:
            hi, lo = chain_resolvable_range(tree, w)
        else:
            D = distance_matrix(tree, w, "d")
            pos = D[D > 0]
            if pos.size == 0:
                return None
            hi, lo = float(pos.max()), float(pos.min())
        if hi <= 0:
            return None
        start = hi if start is None else start
        stop = lo if stop is None else stop
    try:
        return geometric_grid(float(start), float(stop), points)
    except ValueError as exc:
        raise ConfigError(f"invalid eps grid: {exc}") from None


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else ("inf" if obj > 0 else ("-inf" if obj < 0 else "nan"))
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, columns: list[str], rows: list[dict], cfg: dict) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([_cell(row.get(c, "")) for c in columns])
    write_json(path.with_name(path.stem + ".config.json"), {"config": cfg})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return v


def _out_dir(out: str) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return path


# ---------------------------------------------------------------------------
# runners (importable, used by the commands and by reproduce)
# ---------------------------------------------------------------------------

ENTROPY_COLUMNS = ["eps", "lower", "upper", "exact", "metric"]
SIM_COLUMNS = ["depth", "replicas", "mean_sup", "stderr", "seed"]


def run_entropy(cfg: dict, out: Path) -> dict:
    tree = _tree(cfg)
    w = _weights(cfg.get("weights"), tree)
    grid = _grid(cfg, tree, w)
    summary: dict[str, Any] = {"config": cfg, "metrics": {}}
    for metric in cfg.get("metrics", ["d"]):
        if metric not in ("d", "dX", "dhat"):
            raise ConfigError(f"unknown metric {metric!r}")
        path = out / f"curve_{metric}.csv"
        if grid is None:
            write_csv(path, ENTROPY_COLUMNS, [], cfg)
            summary["metrics"][metric] = {"dudley": 0.0, "sudakov": 0.0, "points": 0}
            continue
        try:
            curve = covering_curve(tree, w, grid, metric)
        except TreeError as exc:
            raise ConfigError(str(exc)) from None
        write_csv(path, ENTROPY_COLUMNS, curve.rows(), cfg)
        dud = dudley_integral(curve)
        entry = {"dudley": dud.value, "dudley_tail_eps": dud.tail_eps,
                 "dudley_tail_truncated": dud.tail_truncated, "sudakov": sudakov_sup(curve),
                 "diameter": curve.diameter, "points": len(curve.results)}
        if len(curve.results) >= 5:
            entry["slope"] = fit_exponent(curve.eps, curve.upper)
        summary["metrics"][metric] = entry
    write_json(out / "entropy_summary.json", summary)
    return summary


def run_compare_metrics(cfg: dict, out: Path) -> dict:
    tree = _tree(cfg)
    w = _weights(cfg.get("weights"), tree)
    summary: dict[str, Any] = {"config": cfg}
    table_depth = int(cfg.get("table_depth", 0))
    if table_depth and tree.kind == CHAIN:
        cm = ChainMetric(tree, w)
        k_max = min(table_depth, tree.height)
        d_col = [cm.d(0, k) for k in range(1, k_max + 1)]
        x_row = cm.dX_from(0)
        rows = [{"k": k, "d_root": d_col[k - 1], "dX_root": float(x_row[k])} for k in range(1, k_max + 1)]
        write_csv(out / "metric_table.csv", ["k", "d_root", "dX_root"], rows, cfg)
        summary["table"] = {"max_abs_d_minus_half": max(abs(v - 0.5) for v in d_col),
                            "first_k_dX_below_1e-3": next((r["k"] for r in rows if r["dX_root"] < 1e-3), None)}
    grid = None if cfg.get("table_only", False) else _grid(cfg, tree, w)
    if grid is not None:
        rep = entropy_equivalence_report(tree, w, grid)
        write_csv(out / "compare.csv", ["eps", "N_d", "N_dX", "eps2logN_d", "eps2logN_dX", "ratio"],
                  rep.rows(), cfg)
        summary["equivalence"] = {
            "sup_eps2logN_d": rep.sup_d, "sup_eps2logN_dX": rep.sup_dX, "sup_factor": rep.sup_factor,
            "ratio_first": float(rep.ratio[0]), "ratio_last": float(rep.ratio[-1]),
            "ratio_growth": rep.ratio_growth,
            "dudley_d": rep.dudley_d.value, "dudley_dX": rep.dudley_dX.value,
            "dudley_tail_eps": rep.dudley_d.tail_eps,
        }
    write_json(out / "compare_summary.json", summary)
    return summary


def _growth_slope(depths, means) -> tuple[float, float]:
    x = np.log2(np.asarray(depths, dtype=float))
    if x.size < 2:
        return float("nan"), float("nan")
    coef = np.polyfit(x, means, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, x) - means) ** 2)))
    return float(coef[0]), resid


def run_simulate(cfg: dict, out: Path) -> dict:
    tree = _tree(cfg)
    cap = int(cfg.get("binary_cap", DEFAULT_BINARY_CAP))
    if tree.kind == BINARY and tree.height > cap:
        raise DepthCapError(f"binary depth {tree.height} exceeds the simulation cap {cap}")
    systems = cfg.get("systems") or {"sim": cfg.get("weights")}
    depths = cfg.get("depths") or [tree.height]
    if max(depths) > tree.height:
        if tree.kind == BINARY and max(depths) > cap:
            raise DepthCapError(f"depth {max(depths)} exceeds the simulation cap {cap}")
        raise ConfigError(f"depths exceed the tree height {tree.height}")
    summary: dict[str, Any] = {"config": cfg, "systems": {}}
    for name, wdoc in systems.items():
        w = _weights(wdoc, tree)
        try:
            sim = SimConfig(tree, w, int(cfg.get("replicas", 100)), int(cfg["seed"]), list(depths),
                            cfg.get("statistic", "abs"), binary_cap=cap)
        except TreeError as exc:
            raise DepthCapError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        est = estimate_esup(sim)
        write_csv(out / f"{name}.csv", SIM_COLUMNS, est.rows(), cfg)
        slope, resid = _growth_slope(est.depths, est.mean)
        summary["systems"][name] = {"depths": est.depths, "mean_sup": est.mean.tolist(),
                                    "stderr": est.stderr.tolist(), "slope_vs_log2_depth": slope,
                                    "fit_residual": resid}
    write_json(out / "simulate_summary.json", summary)
    return summary


def run_criteria(cfg: dict, out: Path) -> dict:
    entries = cfg.get("batch")
    if entries is None:
        entries = [{"name": "weights", "weights": cfg.get("weights")}]
    N = int(cfg.get("N", crit.DEFAULT_N))
    N_g1 = int(cfg.get("N_g1", crit.DEFAULT_N_G1))
    verdicts = {}
    rows = []
    for entry in entries:
        doc = entry.get("weights")
        if isinstance(doc, dict) and doc.get("mode", LEVEL) != LEVEL:
            raise NonHomogeneousError(f"{entry.get('name')}: criteria need homogeneous weights")
        w = _weights(doc, None)
        if entry.get("transform") == "product":
            w = crit.product_weight_transfer(w)
        v = crit.combined_verdict(w, N, N_g1)
        d = v.to_dict()
        if "expect" in entry:
            d["expected"] = entry["expect"]
        verdicts[entry["name"]] = d
        fin = {k: t.final for k, t in v.traces.items()}
        rows.append({"name": entry["name"], "classification": v.classification, "rule": v.rule or "",
                     "certainty": v.certainty, **{k: fin.get(k, "") for k in ("G", "Q", "G1", "G2")}})
    write_csv(out / "criteria.csv", ["name", "classification", "rule", "certainty", "G", "Q", "G1", "G2"],
              rows, cfg)
    doc = {"config": cfg, "verdicts": verdicts}
    if len(entries) == 1 and cfg.get("batch") is None:
        doc.update(next(iter(verdicts.values())))
    write_json(out / "verdict.json", doc)
    return doc


RUNNERS = {"entropy": run_entropy, "compare-metrics": run_compare_metrics,
           "simulate": run_simulate, "criteria": run_criteria}


def frozen_config(target: str) -> dict:
    text = resources.files("treegauss").joinpath("configs", f"{target}.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# click wiring
# ---------------------------------------------------------------------------

def _common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file."),
        click.option("--out", default="out", show_default=True, help="Output directory."),
        click.option("--seed", type=lambda s: int(str(s), 0), default=None,
                     help=f"Master seed (u64, default {DEFAULT_SEED:#x})."),
        click.option("--replicas", type=int, default=None),
        click.option("--depth", default=None, help="Depth or comma-separated depth list."),
        click.option("--eps-start", type=float, default=None),
        click.option("--eps-stop", type=float, default=None),
        click.option("--eps-points", type=int, default=None),
        click.option("--quiet", is_flag=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _execute(command: str, config_path, out, seed, replicas, depth, eps_start, eps_stop, eps_points,
             quiet, base: dict | None = None):
    if base is None:
        base = _load_json(Path(config_path)) if config_path else {}
    depths = _parse_depths(depth)
    overrides = dict(seed=seed, replicas=replicas, eps_start=eps_start, eps_stop=eps_stop,
                     eps_points=eps_points)
    if depths is not None:
        if command == "simulate":
            overrides["depths"] = depths
            tree = dict(base.get("tree", {}))
            if tree.get("kind") in (BINARY, CHAIN):
                tree["depth"] = max(depths)
                base = {**base, "tree": tree}
        else:
            tree = dict(base.get("tree", {}))
            tree["depth"] = depths[-1]
            base = {**base, "tree": tree}
    cfg = resolve_config(base, **overrides)
    result = RUNNERS[command](cfg, _out_dir(out))
    if not quiet:
        shown = {k: v for k, v in result.items() if k != "config"}
        click.echo(json.dumps(_clean(shown), indent=2, sort_keys=True))


@click.group()
def main():
    """Gaussian sums on weighted trees: metrics, entropy, simulation and boundedness criteria."""


@main.command()
@_common
def entropy(**kw):
    """Covering-number curve, Dudley upper sum and Sudakov functional."""
    _execute("entropy", **kw)


@main.command("compare-metrics")
@_common
def compare_metrics(**kw):
    """Entropy of d against d_X, plus the distance table from the root."""
    _execute("compare-metrics", **kw)


@main.command()
@_common
def simulate(**kw):
    """Monte Carlo estimate of E sup |X_t| per truncation depth."""
    _execute("simulate", **kw)


@main.command()
@_common
def criteria(**kw):
    """Boundedness verdict for level weights (single spec or batch)."""
    _execute("criteria", **kw)


@main.command()
@click.argument("target", type=click.Choice(REPRODUCE_TARGETS))
@_common
def reproduce(target, **kw):
    """Run one of the frozen configurations shipped with the package."""
    doc = frozen_config(target)
    if kw.get("config_path"):
        raise ConfigError("reproduce uses its frozen config; drop --config")
    _execute(doc["command"], base=doc["config"], **kw)


if __name__ == "__main__":
    main()
