"""End-to-end acceptance checks, one test per shipped guarantee.

Each test prints a single PASS line naming the guarantee, so a plain
`pytest -v tests/test_acceptance.py` reads as the acceptance checklist.
The heavyweight fixture runs the complete default benchmark twice and is
shared by the checks that audit its artifacts.
"""

import json
import time

import numpy as np
import pytest
import test_nn

from pcal import cli, data, nn, trainer
from pcal.attackers import (ElasticNetParams, ElasticNetRegressor,
                            EVALUATION_SUITE, ForestParams,
                            RandomForestRegressor, r_squared)
from pcal.seeding import derive_seed

ROOT_SEED = 42          # the default config's root seed


@pytest.fixture(scope="module")
def benchmark_runs(tmp_path_factory):
    """Two complete default-config benchmark runs plus wall-clock times."""
    base = tmp_path_factory.mktemp("acceptance")
    dirs, walls = [], []
    for name in ("run_a", "run_b"):
        out = base / name
        start = time.monotonic()
        assert cli.main(["all", "--out", str(out)]) == 0
        walls.append(time.monotonic() - start)
        dirs.append(out)
    return dirs, walls


def load_report(run_dir, method):
    return json.loads((run_dir / f"report_{method}.json").read_text())


def test_criterion_1_gradients_match_finite_differences():
    rng = np.random.default_rng(1234)
    start = time.monotonic()
    worst = 0.0
    for trial in range(20):
        n_hidden = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 17)) for _ in range(n_hidden + 2)]
        rows = int(rng.integers(1, 9))
        activation = "sigmoid" if trial % 2 else "linear"
        net, x = test_nn.sample_net_and_input(widths, activation,
                                              seed=int(rng.integers(2 ** 31)),
                                              rows=rows)
        err = test_nn.finite_difference_check(net, x, seed=trial, h=1e-5)
        worst = max(worst, err)
        assert err <= 1e-4, f"trial {trial}: widths {widths}, error {err}"
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"ACCEPTANCE 1 PASS: gradient oracle, 20 nets, "
          f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_regressor_oracles():
    rng = np.random.default_rng(77)
    for trial in range(5):
        x = rng.normal(size=(20, 5))
        y = x @ rng.normal(size=5) + rng.normal() + 0.1 * rng.normal(size=20)
        alpha = float(rng.uniform(0.05, 2.0))
        model = ElasticNetRegressor(ElasticNetParams(
            alpha=alpha, l1_ratio=0.0, max_iters=50000, tol=1e-14))
        model.fit(x, y)
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        ref = np.linalg.solve(xc.T @ xc / 20 + alpha * np.eye(5),
                              xc.T @ yc / 20)
        np.testing.assert_allclose(model.coef_, ref, atol=1e-6)

    x = rng.normal(size=(16, 2))
    y = rng.normal(size=16)
    tree = RandomForestRegressor(ForestParams(
        n_trees=1, max_depth=16, min_samples_leaf=1, feature_subsample=1.0,
        bootstrap=False), seed=0)
    tree.fit(x, y)
    np.testing.assert_allclose(tree.predict(x), y, atol=1e-12)

    target = np.array([1.0, 2.0, 3.0])
    assert r_squared(target, target) == pytest.approx(1.0)
    assert r_squared(np.full(3, 2.0), target) == pytest.approx(0.0)
    assert r_squared(np.array([1.0, 2.0, 2.0]), target) == pytest.approx(0.5)
    print("ACCEPTANCE 2 PASS: ridge closed form, tree memorization, "
          "r-squared 1.0/0.0/0.5")


def test_criterion_3_identity_representation_fully_leaks(benchmark_runs):
    dirs, _ = benchmark_runs
    report = load_report(dirs[0], "UP")
    worst = report["worst_case_r2"]
    assert worst >= 0.99
    assert abs(1.0 - worst) <= 0.01
    print(f"ACCEPTANCE 3 PASS: raw-feature worst-case attack r2 {worst:.4f}")


def test_criterion_4_benchmark_ordering(benchmark_runs):
    dirs, walls = benchmark_runs
    reports = {m: load_report(dirs[0], m) for m in ("UP", "WP", "SP", "PCAL")}
    util = {m: r["utility_accuracy"] for m, r in reports.items()}
    worst = {m: r["worst_case_r2"] for m, r in reports.items()}

    assert util["SP"] < util["WP"] < util["PCAL"]
    assert util["UP"] - util["PCAL"] <= 5.0
    assert worst["PCAL"] <= worst["WP"] - 0.15
    assert worst["PCAL"] <= worst["UP"] - 0.5
    assert walls[0] < 300.0
    print("ACCEPTANCE 4 PASS: utility "
          f"SP {util['SP']:.2f} < WP {util['WP']:.2f} < PCAL {util['PCAL']:.2f} "
          f"(UP {util['UP']:.2f}); worst-case r2 PCAL {worst['PCAL']:.3f} "
          f"vs WP {worst['WP']:.3f} / UP {worst['UP']:.3f}; "
          f"{walls[0]:.0f}s wall")


def test_criterion_5_restart_contract():
    ds, _ = data.standardize(data.generate_synthetic(
        data.SyntheticSpec(n_rows=256, seed=5)))
    cfg = trainer.PcalConfig(lambda_=0.0, epochs=6, batch_size=64,
                             ensemble_size=2, hidden_width=8, repr_width=4,
                             seed=1, restart_patience=3)
    state = trainer.train_pcal(cfg, ds)
    flags = [rec["restarted"] for rec in state.history]
    assert sum(flags) == 1 and state.restart_count == 1

    # the restart itself swaps every hacker and nothing else
    state2 = trainer.init_state(cfg, ds.n_features, ds.n_privacy)
    anon0 = nn.net_checksum(state2.anonymizer)
    task0 = nn.net_checksum(state2.task_net)
    members0 = [nn.net_checksum(m) for m in state2.ensemble.members]
    state2.history.append({"phi": -1.0, "restarted": False})
    trainer.restart_if_stalled(state2)    # first epoch sets the best phi
    for _ in range(3):
        state2.history.append({"phi": -1.0, "restarted": False})
        state2, restarted = trainer.restart_if_stalled(state2)
    assert restarted
    assert nn.net_checksum(state2.anonymizer) == anon0
    assert nn.net_checksum(state2.task_net) == task0
    fresh = [nn.net_checksum(m) for m in state2.ensemble.members]
    assert all(a != b for a, b in zip(fresh, members0))
    print(f"ACCEPTANCE 5 PASS: one restart in {len(flags)} stalled epochs "
          f"(epoch {flags.index(True)}); masking nets untouched, "
          "all hackers reinitialized")


def test_criterion_6_isolation_and_determinism(benchmark_runs):
    ds, _ = data.standardize(data.generate_synthetic(
        data.SyntheticSpec(n_rows=256, seed=5)))
    cfg = trainer.PcalConfig(epochs=10, batch_size=64, ensemble_size=2,
                             hidden_width=8, repr_width=4, seed=1)
    trainer.train_pcal(cfg, ds, debug_isolation=True)

    dirs, _ = benchmark_runs
    compared = ["dataset.csv", "history.jsonl", "reports.json", "report.txt",
                "report.csv"] + [f"report_{m}.json"
                                 for m in ("UP", "WP", "SP", "PCAL")]
    for rel in compared:
        a = (dirs[0] / rel).read_bytes()
        b = (dirs[1] / rel).read_bytes()
        assert a == b, f"{rel} differs between identical runs"
    print(f"ACCEPTANCE 6 PASS: 10-epoch isolation run clean; "
          f"{len(compared)} artifacts byte-identical across runs")


def test_criterion_7_evaluation_suite_disjoint(benchmark_runs):
    dirs, _ = benchmark_runs
    manifest = json.loads(
        (dirs[0] / "checkpoints" / "manifest.json").read_text())
    trained_seeds = set(manifest["all_ensemble_seeds"])
    suite_seed = derive_seed(ROOT_SEED, "eval")
    suite_seeds = {derive_seed(suite_seed, "suite", name)
                   for name in EVALUATION_SUITE}
    assert not (trained_seeds & suite_seeds)
    report = load_report(dirs[0], "PCAL")
    assert report["metadata"]["suite_disjoint_from_training"] is True
    print(f"ACCEPTANCE 7 PASS: {len(trained_seeds)} training seeds disjoint "
          f"from {len(suite_seeds)} evaluation seeds")
