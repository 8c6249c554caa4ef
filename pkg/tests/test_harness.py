import json
import os

import pytest

from sidlab.harness import (
    CSV_HEADER,
    ConfigError,
    MissingModelError,
    config_from_dict,
    load_config,
    load_models,
    read_csv,
    run_ablation,
)


def small_config_dict(seed=777):
    return {
        "format": "sidlab-config",
        "version": 1,
        "seed": seed,
        "family": {"kind": "toy_molecule", "valences": [1, 2, 3], "n_min": 3, "n_max": 4},
        "noise": "mask",
        "schedule": "cosine",
        "dataset": {"size": 60},
        "denoiser": {"kind": "mpnn", "hidden": 8, "layers": 1, "epochs": 1, "lr": 0.002},
        "critic": {"enabled": True, "hidden": 8, "layers": 1, "epochs": 1, "lr": 0.002},
        "samplers": ["sid", "ddm", "cid"],
        "nfe": [2, 4],
        "samples_per_cell": 8,
    }


def test_config_parse_and_validation():
    cfg = config_from_dict(small_config_dict())
    assert cfg.seed == 777 and cfg.nfe == (2, 4)
    bad = small_config_dict()
    bad["nfe"] = []
    with pytest.raises(ConfigError):
        config_from_dict(bad)
    bad = small_config_dict()
    bad["samplers"] = ["warp"]
    with pytest.raises(ConfigError):
        config_from_dict(bad)
    bad = small_config_dict()
    bad["critic"]["enabled"] = False
    with pytest.raises(ConfigError):
        config_from_dict(bad)  # cid requires the critic
    bad = small_config_dict()
    bad["noise"] = "uniform"
    with pytest.raises(ConfigError):
        config_from_dict(bad)  # cid requires mask noise


def test_load_config_seed_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(small_config_dict()))
    cfg = load_config(path, seed_override=1234)
    assert cfg.seed == 1234
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_missing_models_error(tmp_path):
    cfg = config_from_dict(small_config_dict())
    with pytest.raises(MissingModelError):
        load_models(cfg, str(tmp_path / "empty"))


def test_ablation_grid_csv_and_figures(tmp_path):
    cfg = config_from_dict(small_config_dict())
    run_dir = str(tmp_path / "run")
    out_csv = str(tmp_path / "results.csv")
    rows = run_ablation(cfg, run_dir, out_csv, plot=True)
    assert len(rows) == 6  # three samplers x two NFEs
    text = open(out_csv).read()
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 7
    assert text.endswith("\n") and "\r" not in text
    back = read_csv(out_csv)
    assert [(r.sampler, r.nfe) for r in back] == [(r.sampler, r.nfe) for r in rows]
    assert os.path.exists(str(tmp_path / "results_validity.png"))
    assert os.path.exists(str(tmp_path / "results_degree_tv.png"))
    # artifacts from the lifecycle
    assert os.path.exists(os.path.join(run_dir, "dataset.jsonl"))
    assert os.path.exists(os.path.join(run_dir, "denoiser.json"))
    assert os.path.exists(os.path.join(run_dir, "critic.json"))


def test_ablation_rerun_byte_identical(tmp_path):
    cfg = config_from_dict(small_config_dict(seed=31415))
    paths = []
    for name in ("a", "b"):
        run_dir = str(tmp_path / name)
        out_csv = str(tmp_path / f"{name}.csv")
        run_ablation(cfg, run_dir, out_csv, plot=False)
        paths.append((run_dir, out_csv))
    for fname in ("dataset.jsonl", "denoiser.json", "critic.json"):
        a = open(os.path.join(paths[0][0], fname), "rb").read()
        b = open(os.path.join(paths[1][0], fname), "rb").read()
        assert a == b, fname
    assert open(paths[0][1], "rb").read() == open(paths[1][1], "rb").read()
