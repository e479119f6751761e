import csv
import json

import numpy as np
import pytest
import yaml

from macroregimes import cli
from macroregimes.pipeline import (
    DEFAULTS,
    ConfigError,
    StageError,
    load_config,
    run,
    stage_keys,
    write_synthetic,
)
from macroregimes.signed import ari

FAST = {
    "window": {"length": 30, "stride": 5},
    "kmeans": {"k_range": [2, 6], "seed": 0},
    "network": {"k_range": [2, 4]},
    "profile": {"k_range": [2, 5]},
    "leadlag": {"lag_grid": [1, 2, 5], "k_range": [2, 4]},
}


def make_config(tmp_path, **override):
    data_dir = write_synthetic(tmp_path / "data", "regimes", seed=1, K=3, N=8, dates_per_regime=150)
    cfg = yaml.safe_load((data_dir / "config.yaml").read_text())
    for sec, vals in {**FAST, **override}.items():
        cfg.setdefault(sec, {}).update(vals)
    path = data_dir / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def read_tree(run_dir):
    return {p.relative_to(run_dir).as_posix(): p.read_bytes()
            for p in sorted(run_dir.rglob("*")) if p.is_file() and p.name != "manifest.json"}


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    return make_config(tmp_path_factory.mktemp("cfg"))


class TestConfig:
    def test_defaults_recorded(self):
        cfg, applied = load_config({"data": {"levels_path": "a.csv", "meta_path": "b.csv"}}, base_dir="/x")
        assert cfg["window"] == DEFAULTS["window"]
        assert "window.length" in applied and "kmeans.seed" in applied
        assert "data.levels_path" not in applied
        assert cfg["data"]["levels_path"] == "/x/a.csv"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            load_config({"data": {"levels_path": "a", "meta_path": "b"}, "window": {"lenght": 10}})

    @pytest.mark.parametrize("bad", [
        {"network": {"threshold": 1.5}},
        {"window": {"length": 1}},
        {"kmeans": {"k_range": [1, 4]}},
        {"similarity": {"kind": "nope"}},
        {"leadlag": {"lag_grid": []}},
        {"data": {"missing": "fill"}},
    ])
    def test_invalid_values(self, bad):
        base = {"data": {"levels_path": "a", "meta_path": "b"}}
        for k, v in bad.items():
            base.setdefault(k, {}).update(v)
        with pytest.raises(ConfigError):
            load_config(base)

    def test_missing_data(self):
        with pytest.raises(ConfigError, match="levels_path"):
            load_config({})

    def test_pca_dims_overrides_target(self):
        cfg, _ = load_config({"data": {"synthetic": {"K": 2, "N": 4, "dates_per_regime": 50}}, "pca": {"dims": 3}})
        assert cfg["pca"] == {"dims": 3, "variance_target": None}

    def test_cache_keys_chain(self, config):
        cfg, _ = load_config(config)
        a = stage_keys(cfg)
        cfg["leadlag"]["alpha"] = 0.01
        b = stage_keys(cfg)
        same = [s for s in a if a[s] == b[s]]
        assert same == ["ingest", "correlate", "regimes", "network", "profile"]


@pytest.fixture(scope="module")
def runs(config, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    first = run(config, out, run_name="a", threads=1)
    second = run(config, out, run_name="b", threads=4)
    return out, first, second


class TestRun:
    def test_layout(self, runs):
        _, d, _ = runs
        for name in ("returns.csv", "meta.csv", "correlations", "regimes/regimes.csv",
                     "regimes/inertia.csv", "regimes/explained_variance.csv", "network/stability.csv",
                     "network/partitions.csv", "leadlag/lags.csv", "strategy/blotter.csv",
                     "strategy/comparison.csv", "manifest.json"):
            assert (d / name).exists(), name
        assert any((d / "profile").iterdir())

    def test_manifest(self, runs, config):
        _, d, _ = runs
        m = json.loads((d / "manifest.json").read_text())
        assert set(m["stages"]) == {"ingest", "correlate", "regimes", "network", "profile", "leadlag", "strategy"}
        assert all(s["status"] == "computed" for s in m["stages"].values())
        assert m["seeds"]["kmeans"] == 0
        assert "pca.variance_target" in m["applied_defaults"]
        assert "numpy" in m["versions"] and len(m["config_hash"]) == 64

    def test_thread_count_does_not_change_outputs(self, runs):
        _, a, b = runs
        ta, tb = read_tree(a), read_tree(b)
        assert ta.keys() == tb.keys()
        assert [k for k in ta if ta[k] != tb[k]] == []

    def test_resume_uses_cache(self, runs, config):
        out, a, _ = runs
        c = run(config, out, run_name="c", resume=True)
        m = json.loads((c / "manifest.json").read_text())
        assert {s["status"] for s in m["stages"].values()} == {"cached"}
        assert read_tree(c) == read_tree(a)

    def test_changed_setting_invalidates_downstream(self, runs, config, tmp_path):
        out, a, _ = runs
        cfg = yaml.safe_load(config.read_text())
        cfg["leadlag"]["alpha"] = 0.01
        cfg["data"] = {k: str(config.parent / v) for k, v in cfg["data"].items()}
        changed = tmp_path / "changed.yaml"
        changed.write_text(yaml.safe_dump(cfg))
        d = run(changed, out, run_name="d", resume=True)
        stages = json.loads((d / "manifest.json").read_text())["stages"]
        assert stages["regimes"]["status"] == "cached"
        assert stages["leadlag"]["status"] == stages["strategy"]["status"] == "computed"

    def test_existing_run_dir_refused(self, runs, config):
        out, _, _ = runs
        with pytest.raises(FileExistsError):
            run(config, out, run_name="a")

    def test_until(self, config, tmp_path):
        d = run(config, tmp_path, until="regimes", run_name="r")
        assert (d / "regimes" / "regimes.csv").exists() and not (d / "network").exists()
        assert set(json.loads((d / "manifest.json").read_text())["stages"]) == {"ingest", "correlate", "regimes"}


class TestWarningsAndErrors:
    def test_short_window_warning_in_manifest(self, tmp_path):
        cfg = {"data": {"synthetic": {"K": 2, "N": 12, "dates_per_regime": 60, "seed": 0}},
               "window": {"length": 8, "stride": 4}, "kmeans": {"k_range": [2, 3]},
               "network": {"enabled": False}, "leadlag": {"enabled": False}}
        d = run(cfg, tmp_path, until="regimes", run_name="w")
        m = json.loads((d / "manifest.json").read_text())
        assert any(w.startswith("correlate:") for w in m["warnings"])

    def test_stage_error(self, tmp_path):
        cfg = {"data": {"synthetic": {"K": 2, "N": 4, "dates_per_regime": 10, "seed": 0}},
               "window": {"length": 30}}
        with pytest.raises(StageError) as err:
            run(cfg, tmp_path, until="correlate", run_name="e")
        assert err.value.stage == "correlate"

    def test_disabled_stages(self, tmp_path):
        cfg = {"data": {"synthetic": {"K": 2, "N": 6, "dates_per_regime": 80, "seed": 0}},
               "window": {"length": 20, "stride": 5}, "kmeans": {"k_range": [2, 4]},
               "network": {"enabled": False}, "leadlag": {"enabled": False}, "profile": {"k_range": [2, 4]}}
        d = run(cfg, tmp_path, run_name="x")
        stages = json.loads((d / "manifest.json").read_text())["stages"]
        assert stages["network"] == stages["leadlag"] == stages["strategy"] == {"status": "disabled"}


class TestSyntheticRecovery:
    def test_three_regimes_recovered(self, tmp_path):
        data_dir = write_synthetic(tmp_path / "data", "regimes", seed=0, K=3, N=20, dates_per_regime=510)
        cfg = yaml.safe_load((data_dir / "config.yaml").read_text())
        cfg["window"] = {"length": 40, "stride": 10}
        (data_dir / "run.yaml").write_text(yaml.safe_dump(cfg))
        d = run(data_dir / "run.yaml", tmp_path / "out", until="regimes", run_name="s")
        truth = {r["date"]: int(r["regime_id"]) for r in csv.DictReader((data_dir / "truth.csv").open())}
        rows = list(csv.DictReader((d / "regimes" / "regimes.csv").open()))
        found = [int(r["regime_id"]) for r in rows]
        expected = [truth[r["date"]] for r in rows]
        assert len(set(found)) == 3
        assert ari(found, expected) >= 0.9


class TestCli:
    def test_synth_then_run(self, tmp_path, capsys):
        assert cli.main(["synth", "--out", str(tmp_path / "s"), "--regimes", "2", "--assets", "6",
                         "--length", "100"]) == 0
        cfg = yaml.safe_load((tmp_path / "s" / "config.yaml").read_text())
        cfg["window"] = {"length": 20, "stride": 5}
        cfg["kmeans"]["k_range"] = [2, 4]
        (tmp_path / "s" / "config.yaml").write_text(yaml.safe_dump(cfg))
        capsys.readouterr()
        rc = cli.main(["regimes", "--config", str(tmp_path / "s" / "config.yaml"),
                       "--out", str(tmp_path / "o"), "--name", "cli", "--seed", "3"])
        assert rc == 0
        assert capsys.readouterr().out.strip().endswith("cli")
        m = json.loads((tmp_path / "o" / "cli" / "manifest.json").read_text())
        assert m["seeds"]["kmeans"] == 3

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("window: {length: 10}\n")
        assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_leadlag_synth(self, tmp_path):
        assert cli.main(["synth", "--out", str(tmp_path), "--kind", "leadlag", "--length", "200"]) == 0
        assert (tmp_path / "levels.csv").exists() and not (tmp_path / "truth.csv").exists()
