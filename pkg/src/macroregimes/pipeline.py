"""End-to-end run from one YAML config, with hashed stage caches and CSV exports."""

from __future__ import annotations

import copy
import csv
import datetime as dt
import hashlib
import json
import pickle
import platform
import warnings
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .correlation import WindowSpec, windowed_stack
from .ingest import align_meta, load_levels, load_meta, restrict_complete, to_returns, write_levels, write_meta
from .leadlag import LAG_GRID, NoLeadLagError, regime_leadlag
from .profile import export_profiles, profile_regimes, regime_row_map
from .regimes import SimilarityKind, kmeans_regimes, pca_embed, time_similarity
from .signed import stability_series
from .strategy import run_leadlag_strategy, write_blotter, write_comparison
from .synth import planted_leadlag_panel, planted_regime_panel

STAGES = ("ingest", "correlate", "regimes", "network", "profile", "leadlag", "strategy")

DEFAULTS = {
    "data": {"levels_path": None, "meta_path": None, "missing": "error", "synthetic": None},
    "window": {"length": 60, "stride": 1, "method": "weighted_kendall"},
    "similarity": {"kind": "metacorrelation"},
    "pca": {"dims": None, "variance_target": 0.9},
    "kmeans": {"k_range": [2, 10], "seed": 0},
    "network": {"enabled": True, "threshold": 0.2, "k_range": [2, 10], "lookback": 4, "rule": "max"},
    "profile": {"k_range": [2, 15], "rule": "max"},
    "leadlag": {"enabled": True, "lag_grid": list(LAG_GRID), "alpha": 0.05, "beta": 1.0,
                "k_range": [2, 10], "fdr": False},
    "strategy": {"enabled": True},
}

# stage -> (upstream stage, config sections feeding it)
_DEPENDS = {
    "ingest": (None, ("data",)),
    "correlate": ("ingest", ("window",)),
    "regimes": ("correlate", ("similarity", "pca", "kmeans")),
    "network": ("correlate", ("network", "kmeans")),
    "profile": ("regimes", ("profile",)),
    "leadlag": ("regimes", ("leadlag",)),
    "strategy": ("leadlag", ("strategy",)),
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A stage failed; ``diagnostics`` carries per-date messages gathered so far."""

    def __init__(self, stage, message, diagnostics=()):
        self.stage = stage
        self.diagnostics = list(diagnostics)
        text = f"stage {stage!r} failed: {message}"
        if self.diagnostics:
            text += "\n  " + "\n  ".join(self.diagnostics[:20])
        super().__init__(text)


# ---------------------------------------------------------------- config


def _merge(defaults, given, prefix, applied):
    out = {}
    for key, default in defaults.items():
        name = f"{prefix}.{key}" if prefix else key
        if key not in given:
            out[key] = copy.deepcopy(default)
            if isinstance(default, dict):
                applied.extend(f"{name}.{k}" for k in default)
            else:
                applied.append(name)
        elif isinstance(default, dict) and isinstance(given[key], dict) and key not in ("synthetic",):
            out[key] = _merge(default, given[key], name, applied)
        else:
            out[key] = given[key]
    extra = set(given) - set(defaults)
    if extra:
        raise ConfigError(f"unknown config keys under {prefix or 'top level'}: {sorted(extra)}")
    return out


def _k_range(v, name):
    if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, int) for x in v) and 2 <= v[0] <= v[1]):
        raise ConfigError(f"{name} must be [k_min, k_max] with 2 <= k_min <= k_max")
    return range(v[0], v[1] + 1)


def load_config(source, base_dir=None) -> tuple[dict, list]:
    """Config dict with defaults filled in, plus the dotted names of applied defaults.

    ``source`` is a path to a YAML file or an already-parsed mapping.
    Relative data paths resolve against the config file's directory.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        given = yaml.safe_load(path.read_text()) or {}
        base_dir = path.parent if base_dir is None else base_dir
    else:
        given = copy.deepcopy(dict(source))
    if not isinstance(given, dict):
        raise ConfigError("config must be a mapping of sections")
    given.pop("version", None)
    applied = []
    cfg = _merge(DEFAULTS, given, "", applied)
    # pca: an explicit dims switches off the variance target
    if cfg["pca"]["dims"] is not None and "variance_target" not in given.get("pca", {}):
        cfg["pca"]["variance_target"] = None
    _validate(cfg)
    data = cfg["data"]
    if base_dir is not None:
        for key in ("levels_path", "meta_path"):
            if data[key] is not None and not Path(data[key]).is_absolute():
                data[key] = str(Path(base_dir) / data[key])
    return cfg, applied


def _validate(cfg):
    data = cfg["data"]
    if data["synthetic"] is None and (data["levels_path"] is None or data["meta_path"] is None):
        raise ConfigError("data needs levels_path and meta_path, or a synthetic section")
    if data["missing"] not in ("error", "restrict"):
        raise ConfigError("data.missing must be 'error' or 'restrict'")
    try:
        WindowSpec(**cfg["window"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"window: {exc}") from None
    try:
        SimilarityKind(cfg["similarity"]["kind"])
    except ValueError:
        raise ConfigError(f"similarity.kind must be one of {[k.value for k in SimilarityKind]}") from None
    pca = cfg["pca"]
    if (pca["dims"] is None) == (pca["variance_target"] is None):
        raise ConfigError("pca needs exactly one of dims and variance_target")
    for sec in ("kmeans", "network", "profile", "leadlag"):
        _k_range(cfg[sec]["k_range"], f"{sec}.k_range")
    if not 0 < cfg["network"]["threshold"] < 1:
        raise ConfigError("network.threshold must lie in (0, 1)")
    if cfg["network"]["lookback"] < 1:
        raise ConfigError("network.lookback must be >= 1")
    ll = cfg["leadlag"]
    if not ll["lag_grid"] or any(int(g) < 1 for g in ll["lag_grid"]):
        raise ConfigError("leadlag.lag_grid must be a non-empty list of positive lags")
    if not 0 < ll["alpha"] < 1 or ll["beta"] <= 0:
        raise ConfigError("leadlag.alpha must lie in (0, 1) and leadlag.beta must be positive")


def config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def stage_keys(cfg) -> dict:
    """Cache key per stage: the upstream key chained with this stage's config sections."""
    keys = {}
    for stage in STAGES:
        up, sections = _DEPENDS[stage]
        payload = {s: cfg[s] for s in sections}
        if stage == "ingest" and cfg["data"]["synthetic"] is None:
            payload["files"] = [_file_digest(cfg["data"]["levels_path"]), _file_digest(cfg["data"]["meta_path"])]
        blob = json.dumps([keys.get(up), payload], sort_keys=True, default=str)
        keys[stage] = hashlib.sha256(blob.encode()).hexdigest()
    return keys


# ---------------------------------------------------------------- stages


def _synthetic_panel(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind", "regimes")
    if kind == "regimes":
        return planted_regime_panel(**spec)
    if kind == "leadlag":
        return planted_leadlag_panel(**spec)[0], None
    raise ConfigError(f"unknown synthetic kind {kind!r}")


def stage_ingest(cfg, ctx):
    data = cfg["data"]
    if data["synthetic"] is not None:
        panel, truth = _synthetic_panel(data["synthetic"])
        return {"panel": panel, "truth": truth}
    levels = load_levels(data["levels_path"])
    if data["missing"] == "restrict":
        levels = restrict_complete(levels)
    meta = align_meta(levels, load_meta(data["meta_path"]))
    return {"panel": to_returns(levels, meta), "truth": None}


def stage_correlate(cfg, ctx):
    panel = ctx["ingest"]["panel"]
    spec = WindowSpec(**cfg["window"])
    msg = spec.ratio_warning(panel.N)
    if msg:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return {"stack": windowed_stack(panel, spec, threads=ctx["threads"])}


def stage_regimes(cfg, ctx):
    stack = ctx["correlate"]["stack"]
    S = time_similarity(stack, cfg["similarity"]["kind"])
    emb = pca_embed(S, dims=cfg["pca"]["dims"], variance_target=cfg["pca"]["variance_target"])
    km = cfg["kmeans"]
    lo, hi = km["k_range"]
    hi = min(hi, len(stack) - 1)
    if hi < lo:
        raise ValueError(f"{len(stack)} windows are too few for kmeans.k_range {km['k_range']}")
    labels = kmeans_regimes(emb, range(lo, hi + 1), seed=km["seed"], dates=stack.end_dates)
    labels.end_rows = stack.end_rows
    rows = regime_row_map(ctx["ingest"]["panel"].T, stack.end_rows, labels.labels, stack.spec.stride)
    return {"labels": labels, "similarity": S, "embedding": emb, "row_regimes": rows}


def stage_network(cfg, ctx):
    net = cfg["network"]
    values, parts, notes = stability_series(
        ctx["correlate"]["stack"], net["threshold"], _k_range(net["k_range"], "network.k_range"),
        net["lookback"], net["rule"], threads=ctx["threads"], seed=cfg["kmeans"]["seed"],
    )
    return {"stability": values, "partitions": parts, "notes": notes}


def stage_profile(cfg, ctx):
    pr = cfg["profile"]
    panel = ctx["ingest"]["panel"]
    lo, hi = pr["k_range"]
    ks = range(lo, min(hi, panel.N) + 1)
    return {"profiles": profile_regimes(panel, ctx["correlate"]["stack"], ctx["regimes"]["labels"], ks,
                                        rule=pr["rule"])}


def stage_leadlag(cfg, ctx):
    ll = cfg["leadlag"]
    panel = ctx["ingest"]["panel"]
    rows = ctx["regimes"]["row_regimes"]
    out = {}
    for r in range(ctx["regimes"]["labels"].K):
        seg = panel.values[rows == r]
        try:
            out[r] = regime_leadlag(
                seg, panel.asset_classes, ll["lag_grid"], _k_range(ll["k_range"], "leadlag.k_range"),
                ll["beta"], ll["alpha"], ll["fdr"], seed=cfg["kmeans"]["seed"], regime_id=r,
                threads=ctx["threads"], nodes=panel.asset_ids,
            )
        except (NoLeadLagError, ValueError) as exc:
            warnings.warn(f"regime {r}: lead-lag skipped ({exc})", RuntimeWarning, stacklevel=2)
    return {"results": out}


def stage_strategy(cfg, ctx):
    results = ctx["leadlag"]["results"]
    clusterings = {r: res.clustering for r, res in results.items()}
    report = run_leadlag_strategy(ctx["ingest"]["panel"], ctx["regimes"]["row_regimes"], clusterings)
    return {"report": report}


_STAGE_FUNCS = {
    "ingest": stage_ingest, "correlate": stage_correlate, "regimes": stage_regimes,
    "network": stage_network, "profile": stage_profile, "leadlag": stage_leadlag,
    "strategy": stage_strategy,
}


def _enabled(cfg, stage) -> bool:
    if stage in ("network", "leadlag", "strategy"):
        if not cfg[stage]["enabled"]:
            return False
    if stage == "strategy":
        return cfg["leadlag"]["enabled"]
    return True


# ---------------------------------------------------------------- exports


def _writer(path):
    fh = Path(path).open("w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.12g}"


def export_ingest(res, d: Path):
    panel = res["panel"]
    write_levels(d / "returns.csv", panel.dates, [a.name for a in panel.assets], panel.values)
    write_meta(d / "meta.csv", panel.assets)
    if res["truth"] is not None:
        fh, w = _writer(d / "truth.csv")
        with fh:
            w.writerow(["date", "regime_id"])
            for day, t in zip(panel.dates, res["truth"]):
                w.writerow([day.isoformat(), int(t)])


def export_correlate(res, d: Path):
    res["stack"].save(d / "correlations")


def export_regimes(res, d: Path):
    lab, emb = res["labels"], res["embedding"]
    fh, w = _writer(d / "regimes.csv")
    with fh:
        w.writerow(["date", "regime_id"])
        for day, r in zip(lab.dates, lab.labels):
            w.writerow([day.isoformat(), int(r)])
    fh, w = _writer(d / "inertia.csv")
    with fh:
        w.writerow(["K", "inertia"])
        for k, v in lab.inertia_curve.items():
            w.writerow([k, _fmt(v)])
    fh, w = _writer(d / "explained_variance.csv")
    with fh:
        w.writerow(["component", "ratio", "cumulative"])
        for i, (v, c) in enumerate(zip(emb.explained_variance_ratio, np.cumsum(emb.explained_variance_ratio)), 1):
            w.writerow([i, _fmt(v), _fmt(c)])
    fh, w = _writer(d / "embedding.csv")
    with fh:
        w.writerow(["date", *(f"pc{i + 1}" for i in range(emb.dims)), "regime_id"])
        for day, p, r in zip(lab.dates, emb.points, lab.labels):
            w.writerow([day.isoformat(), *map(_fmt, p), int(r)])


def export_network(res, d: Path, ctx):
    stack = ctx["correlate"]["stack"]
    fh, w = _writer(d / "partitions.csv")
    with fh:
        w.writerow(["date", "asset_id", "cluster"])
        for day, P in zip(stack.end_dates, res["partitions"]):
            if P is None:
                continue
            for node, c in zip(P.nodes, P.assignment):
                w.writerow([day.isoformat(), int(node), int(c)])
    fh, w = _writer(d / "stability.csv")
    with fh:
        w.writerow(["date", "ari_stability"])
        for day, v in zip(stack.end_dates, res["stability"]):
            w.writerow([day.isoformat(), _fmt(float(v))])


def export_profile(res, d: Path, ctx):
    d.mkdir(parents=True, exist_ok=True)
    export_profiles(res["profiles"], d, ctx["ingest"]["panel"])


def export_leadlag(res, d: Path, ctx):
    panel = ctx["ingest"]["panel"]
    names = [a.name for a in panel.assets]
    fh, w = _writer(d / "lags.csv")
    with fh:
        w.writerow(["regime", "lag", "n_relations", "chosen"])
        for r, rl in res["results"].items():
            for g, c in rl.counts.items():
                w.writerow([r, g, c, int(g == rl.lag)])
    for r, rl in res["results"].items():
        sub = d / f"regime_{r}"
        sub.mkdir(parents=True, exist_ok=True)
        fh, w = _writer(sub / "edges.csv")
        with fh:
            w.writerow(["leader", "lagger", "strength", "lag"])
            for i, j, s in rl.matrix.edges():
                w.writerow([names[i], names[j], _fmt(s), rl.lag])
        cl = rl.clustering
        rank = {c: i + 1 for i, c in enumerate(cl.ordering)}
        fh, w = _writer(sub / "clustering.csv")
        with fh:
            w.writerow(["asset", "cluster", "rank"])
            for i, c in enumerate(cl.partition.assignment):
                w.writerow([names[i], int(c), rank[int(c)]])
        fh, w = _writer(sub / "v_measure.csv")
        with fh:
            w.writerow(["k", "v_measure"])
            for k, v in cl.v_curve.items():
                w.writerow([k, _fmt(v)])


def export_strategy(res, d: Path, ctx):
    write_blotter(res["report"], d / "blotter.csv")
    write_comparison(res["report"], d / "comparison.csv")


_EXPORTS = {
    "ingest": lambda res, d, ctx: export_ingest(res, d),
    "correlate": lambda res, d, ctx: export_correlate(res, d),
    "regimes": lambda res, d, ctx: export_regimes(res, d),
    "network": export_network, "profile": export_profile,
    "leadlag": export_leadlag, "strategy": export_strategy,
}


# ---------------------------------------------------------------- driver


def _versions() -> dict:
    return {"macroregimes": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def run(config, out, until: str = "strategy", resume: bool = False, seed: int | None = None,
        threads: int = 1, run_name: str | None = None) -> Path:
    """Execute the stages up to ``until`` and write every export into a new run directory.

    Stage results are cached under ``out/cache`` keyed by a hash chained
    through upstream stages, so a changed setting invalidates everything
    downstream of it. With ``resume`` matching caches are reused.
    """
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; choose from {STAGES}")
    cfg, applied = load_config(config)
    if seed is not None:
        cfg["kmeans"]["seed"] = int(seed)
        applied = [a for a in applied if a != "kmeans.seed"]
    out = Path(out)
    stamp = dt.datetime.now(dt.timezone.utc)
    run_dir = out / (run_name or f"run-{stamp.strftime('%Y%m%dT%H%M%S%fZ')}")
    run_dir.mkdir(parents=True, exist_ok=False)
    cache = out / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    keys = stage_keys(cfg)

    ctx = {"threads": max(1, int(threads))}
    stage_log, all_warnings = {}, []
    for stage in STAGES[: STAGES.index(until) + 1]:
        if not _enabled(cfg, stage):
            stage_log[stage] = {"status": "disabled"}
            continue
        path = cache / f"{stage}-{keys[stage][:20]}.pkl"
        if resume and path.exists():
            with path.open("rb") as fh:
                res, notes = pickle.load(fh)
            status = "cached"
        else:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                try:
                    res = _STAGE_FUNCS[stage](cfg, ctx)
                except Exception as exc:
                    raise StageError(stage, str(exc), [str(c.message) for c in caught]) from exc
            notes = list(dict.fromkeys(str(c.message) for c in caught))
            with path.open("wb") as fh:
                pickle.dump((res, notes), fh)
            status = "computed"
        ctx[stage] = res
        all_warnings += [f"{stage}: {n}" for n in notes]
        d = run_dir if stage in ("ingest", "correlate") else run_dir / stage
        d.mkdir(parents=True, exist_ok=True)
        _EXPORTS[stage](res, d, ctx)
        stage_log[stage] = {"status": status, "key": keys[stage]}

    manifest = {
        "created": stamp.isoformat(),
        "config_hash": config_hash(cfg),
        "config": cfg,
        "applied_defaults": applied,
        "seeds": {"kmeans": cfg["kmeans"]["seed"], "sponge": cfg["kmeans"]["seed"],
                  "hermitian": cfg["kmeans"]["seed"]},
        "threads": ctx["threads"],
        "versions": _versions(),
        "stages": stage_log,
        "warnings": all_warnings,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return run_dir


def write_synthetic(out, kind: str = "regimes", seed: int = 0, **params) -> Path:
    """Write a synthetic panel as levels.csv + meta.csv (+ truth.csv) and a matching config.yaml."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "regimes":
        panel, truth = planted_regime_panel(seed=seed, **params)
    elif kind == "leadlag":
        panel, truth = planted_leadlag_panel(seed=seed, **params)
        truth = None
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    first = np.busday_offset(np.datetime64(panel.dates[0]), -1, roll="backward").astype(object)
    dates = (first, *panel.dates)
    levels = np.empty((panel.T + 1, panel.N))
    levels[0] = 100.0
    for j, a in enumerate(panel.assets):
        if a.return_kind.value == "simple_difference":
            levels[1:, j] = 100.0 + np.cumsum(panel.values[:, j])
        else:
            levels[1:, j] = 100.0 * np.cumprod(1.0 + panel.values[:, j])
    write_levels(out / "levels.csv", dates, [a.name for a in panel.assets], levels)
    write_meta(out / "meta.csv", panel.assets)
    if truth is not None:
        fh, w = _writer(out / "truth.csv")
        with fh:
            w.writerow(["date", "regime_id"])
            for day, t in zip(panel.dates, truth):
                w.writerow([day.isoformat(), int(t)])
    cfg = {"data": {"levels_path": "levels.csv", "meta_path": "meta.csv"},
           "kmeans": {"k_range": [2, 10], "seed": seed}}
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    return out


__all__ = ["ConfigError", "StageError", "DEFAULTS", "STAGES", "load_config", "config_hash", "stage_keys",
           "run", "write_synthetic"]
