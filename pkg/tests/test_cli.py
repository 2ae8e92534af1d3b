import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from shmvoi import cli
from shmvoi.config import StudyConfig, load_config, validate_config
from shmvoi.errors import ConfigurationError

ROOT = Path(__file__).resolve().parents[1]


# ------------------------------------------------------------------ configuration


def test_empty_document_gives_defaults():
    cfg, errors = validate_config({}, check_physics=False)
    assert errors == []
    assert cfg.study.case == "scour" and cfg.study.sensors == 12
    assert cfg.samples.n_theta == 200 and cfg.samples.n_laplace == 2000
    assert cfg.update.truth == [9.85e-4, 2.28]
    assert cfg.likelihood.use_curvatures is False


def test_case_and_scale_defaults():
    cfg, _ = validate_config({"study": {"case": "corrosion"}}, scale="paper", check_physics=False)
    assert cfg.study.sensors == 24
    assert cfg.samples.n_theta == 2000 and cfg.samples.n_laplace == 10000
    assert cfg.likelihood.use_curvatures is True
    assert len(cfg.update.truth) == 4


def test_unknown_keys_get_suggestions():
    _, errors = validate_config({"studdy": {}, "study": {"sead": 3}}, check_physics=False)
    assert "studdy: unknown key; did you mean 'study'?" in errors
    assert "study.sead: unknown key; did you mean 'seed'?" in errors


def test_type_errors_name_the_field():
    _, errors = validate_config({"study": {"seed": "x"}, "cost": {"r": True}}, check_physics=False)
    assert any(e.startswith("study.seed: expected an integer") for e in errors)
    assert any(e.startswith("cost.r: expected a number") for e in errors)


@pytest.mark.parametrize("doc, field", [
    ({"study": {"case": "fatigue"}}, "study.case"),
    ({"study": {"sensors": 8}}, "study.sensors"),
    ({"samples": {"n_mcmc": 10}}, "samples.n_mcmc"),
    ({"cost": {"ratios": []}}, "cost.ratios"),
    ({"cost": {"r": 1.5}}, "cost.r"),
    ({"update": {"truth": [1.0]}}, "update.truth"),
    ({"update": {"checkpoints": [60]}}, "update.checkpoints"),
    ({"prior": {"marginals": [{"family": "beta", "mean": 1.0, "cv": 0.1}] * 2}}, "prior.marginals[0]"),
    ({"likelihood": {"use_shapes": True, "use_curvatures": True}}, "likelihood.use_curvatures"),
    ({"vibration": {"ssi_order": 11}}, "vibration.ssi_order"),
])
def test_cross_checks(doc, field):
    cfg, errors = validate_config(doc, check_physics=False)
    assert cfg is None
    assert any(e.startswith(field) for e in errors), errors


def test_nyquist_check():
    _, errors = validate_config({"vibration": {"fs": 100.0}})
    assert len(errors) == 1
    assert errors[0].startswith("vibration.fs: 100 Hz is below the Nyquist margin 2.5 x f6")


def test_hash_ignores_key_order_and_output_dir():
    a, _ = validate_config({"study": {"seed": 1, "case": "scour"}, "cost": {"r": 0.03}}, check_physics=False)
    b, _ = validate_config({"cost": {"r": 0.03}, "study": {"case": "scour", "seed": 1, "output_dir": "elsewhere"}},
                           check_physics=False)
    assert a.hash() == b.hash()
    c, _ = validate_config({"study": {"seed": 2}}, check_physics=False)
    assert c.hash() != a.hash()


def test_load_config_files(tmp_path):
    for name in ("scour_desk.toml", "corrosion_desk.toml"):
        cfg = load_config(ROOT / "scripts" / "configs" / name)
        assert isinstance(cfg, StudyConfig)
    bad = tmp_path / "bad.toml"
    bad.write_text("[study\n")
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(bad)
    bad.write_text("[vibration]\nfs = 100.0\n")
    with pytest.raises(ConfigurationError, match="Nyquist"):
        load_config(bad)
    assert load_config(None, seed=5).study.seed == 5


# ------------------------------------------------------------------ command line


@pytest.fixture
def run_dir(tmp_path, grid_cache, scour_table):
    """Output directory pre-seeded with the cached scour grid."""
    cache = tmp_path / "out" / "cache"
    cache.mkdir(parents=True)
    for f in Path(grid_cache).glob("grid-scour-*"):
        shutil.copy(f, cache)
    conf = tmp_path / "study.toml"
    conf.write_text(
        '[study]\ncase = "scour"\nseed = 11\n'
        "[samples]\nn_theta = 20\nn_prior_mcs = 500\nn_mcmc = 1000\nn_laplace = 200\n"
        "[update]\ncheckpoints = [5, 10]\nyears = 10\nmethod = \"laplace\"\n"
    )
    return tmp_path / "out", conf


def _read_all(stage_dir: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(stage_dir.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[vibration]\nfs = 100.0\n")
    assert cli.main(["lcc-prior", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "Nyquist" in capsys.readouterr().err
    bad.write_text("[studdy]\n")
    assert cli.main(["lcc-prior", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "did you mean 'study'" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["no-such-stage"])


def test_numerical_failure_exit_code(run_dir, monkeypatch):
    out, conf = run_dir

    def boom(pipe):
        from shmvoi.errors import InferenceError
        raise InferenceError("did not converge")

    monkeypatch.setitem(cli.STAGE_FUNCS, "lcc-prior", boom)
    assert cli.main(["lcc-prior", "--config", str(conf), "--output", str(out)]) == cli.EXIT_NUMERICAL


def test_stage_outputs_cache_and_determinism(run_dir, capsys):
    out, conf = run_dir
    args = ["lcc-prior", "--config", str(conf), "--output", str(out)]
    assert cli.main(args) == 0
    assert "lcc-prior: done" in capsys.readouterr().out
    man = json.loads((out / "lcc-prior" / "manifest.json").read_text())
    assert man["cache_hits"]["grid"] is True
    assert man["master_seed"] == 11 and "theta" in man["seeds"]
    assert not (out / "lcc-prior" / "plots").exists()
    first = _read_all(out / "lcc-prior")
    assert set(first) == {"costs.csv", "optimum.csv", "theta.csv", "prior-curve.csv"}

    assert cli.main(args) == 0
    assert "lcc-prior: cached" in capsys.readouterr().out

    for f in (out / "lcc-prior").iterdir():
        f.unlink()
    assert cli.main(args) == 0
    assert "lcc-prior: done" in capsys.readouterr().out
    assert _read_all(out / "lcc-prior") == first


def test_tampered_output_is_recomputed(run_dir, capsys):
    out, conf = run_dir
    args = ["lcc-prior", "--config", str(conf), "--output", str(out)]
    cli.main(args)
    target = out / "lcc-prior" / "optimum.csv"
    good = target.read_text()
    target.write_text("garbage")
    cli.main(args)
    assert "lcc-prior: done" in capsys.readouterr().out.splitlines()[-1]
    assert target.read_text() == good


def test_seed_override_changes_samples(run_dir):
    out, conf = run_dir
    for d in ("a", "b"):
        shutil.copytree(out / "cache", out / d / "cache")
    cli.main(["lcc-prior", "--config", str(conf), "--output", str(out / "a")])
    cli.main(["lcc-prior", "--config", str(conf), "--output", str(out / "b"), "--seed", "12"])
    ta = (out / "a" / "lcc-prior" / "theta.csv").read_text()
    tb = (out / "b" / "lcc-prior" / "theta.csv").read_text()
    assert ta != tb


def test_update_and_reliability_stages(run_dir):
    out, conf = run_dir
    assert cli.main(["reliability", "--config", str(conf), "--output", str(out), "--emit-plots"]) == 0
    for stage, names in {
        "simulate-data": {"history.jsonl", "truth.csv"},
        "update": {"posterior.csv", "samples-year5.csv", "samples-year10.csv", "diagnostics.json"},
        "reliability": {"prior.csv", "posterior-year5.csv", "posterior-year10.csv", "truth.csv"},
    }.items():
        assert names <= set(_read_all(out / stage)), stage
    assert (out / "update" / "plots" / "damage-bands.csv").exists()
    lines = (out / "simulate-data" / "history.jsonl").read_text().splitlines()
    assert len(lines) == 10
    post = np.genfromtxt(out / "update" / "posterior.csv", delimiter=",", names=True, dtype=None, encoding=None)
    assert list(post["year"]) == [0, 5, 10]
    width = post["D1_T_p95"] - post["D1_T_p05"]
    assert width[2] < width[0]


def test_hash_collision_is_refused(run_dir):
    out, conf = run_dir
    cli.main(["lcc-prior", "--config", str(conf), "--output", str(out)])
    mpath = out / "lcc-prior" / "manifest.json"
    man = json.loads(mpath.read_text())
    man["config"]["cost"]["r"] = 0.5
    mpath.write_text(json.dumps(man))
    assert cli.main(["lcc-prior", "--config", str(conf), "--output", str(out)]) == cli.EXIT_CONFIG


def test_csv_formatting():
    text = cli.csv_text(["a", "b", "c"], [[1, 0.1 + 0.2, None], [np.int64(2), np.inf, "x"]])
    assert text.splitlines() == ["a,b,c", "1,0.3,", "2,inf,x"]
