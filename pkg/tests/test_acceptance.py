"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and measured values. The heavy directional test (criterion 9) trains
the full model pipeline once via a session fixture.
"""

import os
import time

import pytest

from sidlab.harness import load_config, run_ablation
from sidlab.verify import (
    check_corrector_equivalence,
    check_distribution_recovery,
    check_equivariance,
    check_forward_equivalence,
    check_gradients,
    check_mask_collapse,
    check_one_step_identity,
    check_optimal_critic,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def report(number: int, result, limit_s: float | None = None) -> None:
    line = f"criterion {number}: {result.line()}"
    print(line)
    assert result.passed, line
    if limit_s is not None:
        assert result.seconds < limit_s, f"criterion {number} runtime {result.seconds:.1f}s exceeds {limit_s}s"


def test_criterion_1_forward_equivalence():
    report(1, check_forward_equivalence(), limit_s=1.0)


def test_criterion_2_one_step_identity():
    report(2, check_one_step_identity(), limit_s=10.0)


def test_criterion_3_corrector_equivalence():
    report(3, check_corrector_equivalence())


def test_criterion_4_optimal_critic():
    report(4, check_optimal_critic(), limit_s=120.0)


def test_criterion_5_mask_collapse():
    report(5, check_mask_collapse())


def test_criterion_6_gradient_correctness():
    report(6, check_gradients(), limit_s=60.0)


def test_criterion_7_equivariance():
    report(7, check_equivariance())


def test_criterion_8_distribution_recovery():
    report(8, check_distribution_recovery(), limit_s=300.0)


@pytest.fixture(scope="session")
def ablation_rows(tmp_path_factory):
    config = load_config(os.path.join(CONFIG_DIR, "acceptance_toy_molecule.json"))
    run_dir = str(tmp_path_factory.mktemp("acceptance_run"))
    out_csv = os.path.join(run_dir, "results.csv")
    start = time.perf_counter()
    rows = run_ablation(config, run_dir, out_csv, plot=True)
    elapsed = time.perf_counter() - start
    return rows, elapsed, run_dir


def test_criterion_9_directional_ablation(ablation_rows):
    rows, elapsed, _ = ablation_rows
    val = {(r.sampler, r.nfe): r.validity for r in rows}
    lines = [
        f"  T={t}: cid={val[('cid', t)]:.3f} sid={val[('sid', t)]:.3f} ddm={val[('ddm', t)]:.3f}"
        for t in (16, 32, 64, 256)
    ]
    ok = True
    for t in (16, 64):
        ok &= val[("cid", t)] >= val[("sid", t)] > val[("ddm", t)]
    # low-NFE critic advantage also at T=32
    ok &= val[("cid", 32)] >= val[("sid", 32)]
    # compounding-error demonstration at every grid point
    for t in (16, 64, 256):
        ok &= val[("sid", t)] > val[("ddm", t)]
    # sid validity non-decreasing in NFE
    ok &= val[("sid", 16)] <= val[("sid", 64)] <= val[("sid", 256)]
    flag = "PASS" if ok else "FAIL"
    print(f"criterion 9: [{flag}] directional ablation ({elapsed:.0f}s)\n" + "\n".join(lines))
    assert ok
    assert elapsed < 1800.0


def test_criterion_9_report_artifacts(ablation_rows):
    _, _, run_dir = ablation_rows
    assert os.path.exists(os.path.join(run_dir, "results.csv"))
    assert os.path.exists(os.path.join(run_dir, "results_validity.png"))
    assert os.path.exists(os.path.join(run_dir, "results_degree_tv.png"))


def test_criterion_10_determinism(tmp_path):
    config = load_config(os.path.join(CONFIG_DIR, "determinism_small.json"))
    outputs = []
    for name in ("first", "second"):
        run_dir = str(tmp_path / name)
        out_csv = str(tmp_path / f"{name}.csv")
        run_ablation(config, run_dir, out_csv, plot=False)
        blobs = {}
        for fname in ("dataset.jsonl", "denoiser.json", "critic.json"):
            blobs[fname] = open(os.path.join(run_dir, fname), "rb").read()
        blobs["results.csv"] = open(out_csv, "rb").read()
        outputs.append(blobs)
    same = all(outputs[0][k] == outputs[1][k] for k in outputs[0])
    print(f"criterion 10: [{'PASS' if same else 'FAIL'}] byte-identical dataset, models, CSV across two runs")
    assert same
