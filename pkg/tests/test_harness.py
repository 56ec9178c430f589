import json
import os

import numpy as np
import pytest

from scalealloc import allocator, harness, synthgen
from scalealloc.curves import CurveSet, ModelSpec, read_curves, write_curves
from scalealloc.harness import ExperimentConfig, Strategy
from scalealloc.scaling_law import law_from_curves

DATA = os.path.join(os.path.dirname(__file__), "data")


def test_relative_improvement():
    assert harness.relative_improvement(4.0, 3.8) == pytest.approx(0.05)
    assert harness.relative_improvement(3.3, 3.3) == 0
    assert 3.17 * (1 - 0.0258) == pytest.approx(3.088, abs=5e-4)
    with pytest.raises(ValueError):
        harness.relative_improvement(0.0, 1.0)


def test_regret():
    assert harness.regret(2.6, 2.6) == 0
    assert harness.regret(3.0, 2.6) == pytest.approx(0.4)
    assert harness.regret(2.6 - 1e-9, 2.6) == 0
    with pytest.raises(ValueError):
        harness.regret(3.0, None)
    with pytest.raises(ValueError):
        harness.regret(2.0, 2.6)


def test_cost_saving():
    assert round(harness.cost_saving(1e4, 7.7e5), 3) == 0.987
    assert harness.cost_saving(1e5, 4.1e5) == pytest.approx(0.7561, abs=1e-4)
    assert harness.cost_saving(5.0, 5.0) == 0
    with pytest.warns(RuntimeWarning):
        assert harness.cost_saving(2.0, 1.0) == -1.0


def test_run_seed_distinct_and_stable():
    seeds = {harness.run_seed(0, m, b, r) for m in (5, 10) for b in (1e2, 1e3) for r in range(5)}
    assert len(seeds) == 20
    assert harness.run_seed(3, 5, 100.0, 2) == harness.run_seed(3, 5, 100, 2)


def test_config_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(runs=0)
    with pytest.raises(ValueError):
        ExperimentConfig(pool_sizes=())
    with pytest.raises(ValueError):
        ExperimentConfig(dataset="Imaginary")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"runz": 3})
    cfg = ExperimentConfig(pool_sizes=(3, 4), budgets=(1.0,), noise=synthgen.NoiseConfig("ou", 0.1, 0.5),
                           region=(1e18, 1e20))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert harness.load_config(path) == cfg


def test_single_model_campaign_reports_quantized_curve_minimum():
    cfg = ExperimentConfig(pool_sizes=(1,), budgets=(1.0,), strategies=("SH",), runs=1)
    rep = harness.run_campaign(cfg)
    res = rep.results[0]
    n = int(res.selected[1:])
    steps = (10**15) // (6 * n)
    expected = synthgen.loss_surface(synthgen.HOFFMANN, n, steps)
    assert rep.cell(1, 1.0, "SH").mean_loss == pytest.approx(expected, rel=1e-12)


def small_config(**kw):
    base = dict(pool_sizes=(4,), budgets=(1.0,), strategies=("SH", "SH_LMC", "UA"), runs=3,
                gp_restarts=1, gp_max_iter=40)
    base.update(kw)
    return ExperimentConfig(**base)


def test_pairing_and_counts():
    rep = harness.run_campaign(small_config())
    by_run = {}
    for r in rep.results:
        by_run.setdefault(r.run, set()).add(r.pool_hash)
    assert all(len(h) == 1 for h in by_run.values())
    for c in rep.cells:
        assert c.wins + c.equal + c.losses == c.runs - c.failures
    sh = rep.cell(4, 1.0, "SH")
    assert sh.equal == sh.runs and sh.rel_mean == 0


def test_campaign_is_deterministic():
    cfg = small_config(noise=synthgen.NoiseConfig("awgn", 1e-3))
    a, b = harness.run_campaign(cfg), harness.run_campaign(cfg)
    assert harness.format_table(a) == harness.format_table(b)


def test_parallel_matches_serial():
    cfg = small_config(strategies=("SH", "UA"))
    assert harness.format_table(harness.run_campaign(cfg, workers=2)) == harness.format_table(harness.run_campaign(cfg))


def test_failures_are_counted_and_excluded(monkeypatch):
    real = allocator.run_sh
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("boom")
        return real(*a, **k)

    monkeypatch.setattr(allocator, "run_sh", flaky)
    rep = harness.run_campaign(small_config(strategies=("SH",)))
    cell = rep.cell(4, 1.0, "SH")
    assert cell.failures == 1
    assert sum(r.error is not None for r in rep.results) == 1
    ok = [r.loss for r in rep.results if r.error is None]
    assert cell.mean_loss == pytest.approx(np.mean(ok))


def test_relative_metrics_skip_runs_where_sh_is_optimal():
    rep = harness.run_campaign(small_config(strategies=("SH", "UA"), runs=6))
    ua = rep.cell(4, 1.0, "UA")
    sh_runs = [r for r in rep.results if r.strategy == "SH"]
    assert ua.eligible == sum(r.selected != r.oracle_model for r in sh_runs)


def test_empty_strategies_give_header_only_table(tmp_path):
    rep = harness.run_campaign(small_config(strategies=()))
    assert harness.format_table(rep) == "\t".join(harness.TABLE_COLUMNS) + "\n"


def test_table_matches_golden_file(tmp_path):
    cfg = ExperimentConfig(pool_sizes=(4,), budgets=(10.0,), strategies=("SH", "UA"), runs=4, base_seed=11)
    rep = harness.run_campaign(cfg)
    paths = harness.emit(rep, "table", tmp_path)
    with open(paths[0]) as fh, open(os.path.join(DATA, "golden_table.tsv")) as gh:
        assert fh.read() == gh.read()
    with open(paths[1]) as fh:
        rows = [json.loads(line) for line in fh]
    assert len(rows) == 8 and {r["strategy"] for r in rows} == {"SH", "UA"}


def test_plotdata_round_trip_reproduces_law(tmp_path):
    rng = np.random.default_rng(2)
    grid = np.geomspace(1e15, 1e21, 80)
    curves = CurveSet([synthgen.generate_curve(synthgen.HOFFMANN, ModelSpec(f"n{n}", n), grid)
                       for n in synthgen.sample_model_sizes(rng, 6, range(18, 34))])
    law = law_from_curves(curves, (1e18, 1e20))
    harness.emit_plotdata(curves, {"sh": law}, tmp_path)
    back = read_curves(tmp_path / "curves.csv")
    assert law_from_curves(back, (1e18, 1e20)) == law
    assert harness.read_laws(tmp_path / "laws.json")["sh"] == law


def test_campaign_plotdata_and_bad_destination(tmp_path):
    rep = harness.run_campaign(small_config(strategies=("SH",), runs=1))
    paths = harness.emit(rep, "plotdata", tmp_path / "out")
    cells = json.load(open(paths[0]))["cells"]
    assert cells[0]["strategy"] == "SH"
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        harness.emit(rep, "table", blocker / "sub")
    with pytest.raises(ValueError):
        harness.emit(rep, "pdf", tmp_path)


def test_recorded_dataset_campaign(tmp_path):
    rng = np.random.default_rng(3)
    grid = np.geomspace(1e14, 1e19, 60)
    curves = CurveSet([synthgen.generate_curve(synthgen.HOFFMANN, ModelSpec(f"n{n}", n), grid)
                       for n in synthgen.sample_model_sizes(rng, 8, range(10, 30))])
    path = tmp_path / "rec.csv"
    write_curves(curves, path)
    cfg = ExperimentConfig(dataset=f"RecordedFile:{path}", pool_sizes=(4,), budgets=(100.0,),
                           strategies=("SH", "UA"), runs=3, region=(1e15, 1e16))
    rep = harness.run_campaign(cfg)
    for r in rep.results:
        assert r.error is None and r.selected in curves
        assert r.full_cost > 0 and np.isfinite(r.abc_full)
    with pytest.raises(ValueError):
        harness.run_campaign(ExperimentConfig(dataset=f"RecordedFile:{path}", pool_sizes=(9,), runs=1,
                                              strategies=("SH",)))


def test_strategy_surrogates():
    assert Strategy("SH_DE_MMF").surrogate is allocator.Surrogate.DE_MMF
    assert Strategy.UA.surrogate is allocator.Surrogate.NONE
