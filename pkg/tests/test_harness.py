import math
from dataclasses import replace

import numpy as np
import pytest

from wpmec import cli
from wpmec.harness import (BoundViolation, ExperimentPlan, config_from_mapping,
                           jain, parse_config_text, plan_from_mapping,
                           results_to_csv, run_to_row, simulate_run, sweep,
                           trace_to_csv)
from wpmec.model import SystemConfig
from _reference import reference_run


def small_cfg(**kw):
    base = dict(
        n_devices=3,
        device_distance_m=(3.0, 6.0, 10.0),
        harvest_eff=(0.8,) * 3,
        a_max=(1.0,) * 3,
        r_max=(0.05,) * 3,
        c_max=(2.0,) * 3,
        epsilon=(0.5,) * 3,
        v_param=50.0,
    )
    base.update(kw)
    return SystemConfig(**base)


class TestJain:
    def test_perfect_fairness(self):
        assert jain((3.0, 3.0, 3.0)) == pytest.approx(1.0)

    def test_single_active_device(self):
        assert jain((1.0, 0.0, 0.0, 0.0)) == pytest.approx(0.25)

    def test_half_active(self):
        assert jain((1.0, 1.0, 0.0, 0.0)) == pytest.approx(0.5)

    def test_all_zero_reports_one(self):
        assert jain((0.0, 0.0)) == 1.0

    def test_contract(self):
        with pytest.raises(ValueError):
            jain(())
        with pytest.raises(ValueError):
            jain((1.0, -0.5))


class TestEngineMatchesReference:
    @pytest.mark.parametrize("policy", ["PCF", "PPF", "PF", "HDO"])
    def test_trace_equivalence(self, policy):
        cfg = small_cfg(feedback_interval=3, g_max_slots=25)
        slots = 60
        metrics = simulate_run(cfg, policy, seed=13, slots=slots, warmup=0,
                               check="off", trace=True)
        got = metrics.per_slot_series
        ref = reference_run(cfg, policy, seed=13, slots=slots)
        for key, eng in (("mu0", got.mu0), ("q", got.q), ("z", got.z),
                         ("s", got.s), ("mu", got.mu), ("rate", got.rate),
                         ("admit", got.admit), ("drop", got.drop),
                         ("offloaded", got.offloaded)):
            assert np.allclose(eng, ref[key], rtol=1e-9, atol=1e-12), key
        assert (got.age == ref["age"]).all()
        assert ref["ledger_err"].max() <= 1e-9

    def test_never_drop_variant_matches(self):
        cfg = small_cfg(v_param=30.0).with_infinite_drop_price()
        metrics = simulate_run(cfg, "PCF", seed=5, slots=50, warmup=0,
                               check="off", trace=True)
        ref = reference_run(cfg, "PCF", seed=5, slots=50)
        assert np.allclose(metrics.per_slot_series.q, ref["q"],
                           rtol=1e-9, atol=1e-12)
        assert float(metrics.per_slot_series.drop.sum()) == 0.0


class TestSimulateRun:
    def test_deterministic(self):
        cfg = SystemConfig()
        a = simulate_run(cfg, "PPF", seed=9, slots=700, warmup=100)
        b = simulate_run(cfg, "PPF", seed=9, slots=700, warmup=100)
        assert a == b

    def test_empty_arrivals_all_zero(self):
        cfg = small_cfg(a_max=(0.0,) * 3, epsilon=(0.0,) * 3)
        m = simulate_run(cfg, "PCF", seed=1, slots=300, warmup=0)
        assert m.avg_throughput == 0.0
        assert m.avg_utility == 0.0
        assert m.total_dropped == 0.0
        assert max(m.max_q) == 0.0 and max(m.max_s) == 0.0
        assert max(m.max_age_per_device) == 0
        assert m.jain_degenerate

    def test_bound_violation_raises_with_slot_dump(self):
        cfg = replace(SystemConfig(), v_param=100.0).with_infinite_drop_price()
        with pytest.raises(BoundViolation, match="z_backlog.*slot 202"):
            simulate_run(cfg, "PCF", seed=0, slots=400, warmup=0)

    def test_per_slot_invariants(self):
        cfg = SystemConfig()
        m = simulate_run(cfg, "PCF", seed=2, slots=800, warmup=0, trace=True)
        tr = m.per_slot_series
        assert (tr.offloaded.sum(axis=1) <= sum(cfg.c_max) + 1e-9).all()
        per_slot_utility = (np.log1p(tr.admit)
                            - cfg.drop_price * tr.drop).sum(axis=1)
        cap = sum(math.log1p(a) for a in cfg.a_max)
        assert (per_slot_utility <= cap + 1e-9).all()
        assert (tr.mu0 + tr.mu.sum(axis=1) <= 1.0 + 1e-9).all()

    def test_solver_diagnostics_within_tolerances(self):
        m = simulate_run(SystemConfig(), "PCF", seed=4, slots=1500, warmup=0)
        assert m.max_stationarity_resid <= 1.01e-9
        assert m.max_per_device_resid <= 1e-6
        assert m.max_budget_resid <= 1e-9

    def test_admitted_accounting(self):
        cfg = small_cfg()
        cfg_adm = replace(cfg, throughput_accounting="admitted")
        slots, warmup = 400, 100
        d = simulate_run(cfg, "PCF", seed=6, slots=slots, warmup=warmup,
                         trace=True)
        a = simulate_run(cfg_adm, "PCF", seed=6, slots=slots, warmup=warmup)
        tr = d.per_slot_series
        expect = tr.admit[warmup:].sum() / (slots - warmup)
        assert a.avg_throughput == pytest.approx(expect, rel=1e-12)
        # in an overloaded cell devices admit more than they deliver
        assert a.avg_throughput >= d.avg_throughput


class TestSweep:
    def plan(self, seeds=2, slots=400):
        return ExperimentPlan(
            policies=("PCF", "PPF"), v_grid=(50.0, 100.0), p_grid=(2.0,),
            n_seeds=seeds, horizon_slots=slots, base=small_cfg(),
            warmup_slots=100,
        )

    def test_rows_deterministic_and_ordered(self):
        res_a, fail_a = sweep(self.plan())
        res_b, fail_b = sweep(self.plan())
        assert not fail_a and not fail_b
        assert results_to_csv(res_a) == results_to_csv(res_b)
        keys = [(r[0], r[1], r[3]) for r in res_a]
        assert keys == [("PCF", 50.0, 0), ("PCF", 50.0, 1), ("PCF", 100.0, 0),
                        ("PCF", 100.0, 1), ("PPF", 50.0, 0), ("PPF", 50.0, 1),
                        ("PPF", 100.0, 0), ("PPF", 100.0, 1)]

    def test_parallel_matches_serial(self):
        res_s, _ = sweep(self.plan())
        res_p, _ = sweep(self.plan(), parallel=2)
        assert results_to_csv(res_s) == results_to_csv(res_p)

    def test_failures_do_not_abort_other_cells(self):
        plan = ExperimentPlan(
            policies=("PCF",), v_grid=(100.0,), p_grid=(2.0, math.inf),
            n_seeds=1, horizon_slots=400, base=SystemConfig(),
            warmup_slots=0,
        )
        results, failures = sweep(plan)
        assert len(results) == 1  # p=2 cell survives
        assert len(failures) == 1  # no-drop cell trips the virtual-queue bound
        assert "z_backlog" in failures[0][4]


class TestCsv:
    def test_row_format(self):
        m = simulate_run(small_cfg(), "PCF", seed=0, slots=300, warmup=50)
        row = run_to_row("PCF", 50.0, 2.0, 0, m)
        head = "policy,V,p,seed,avg_throughput_mb"
        assert results_to_csv([("PCF", 50.0, 2.0, 0, m)]).startswith(head)
        assert row.split(",")[:4] == ["PCF", "50.0", "2.0", "0"]
        assert len(row.split(",")) == 12

    def test_inf_price_label(self):
        m = simulate_run(small_cfg().with_infinite_drop_price(), "PCF",
                         seed=0, slots=100, warmup=0, check="off")
        row = run_to_row("PCF", 50.0, math.inf, 0, m)
        assert row.split(",")[2] == "inf"

    def test_trace_csv_shape(self):
        m = simulate_run(small_cfg(), "PCF", seed=0, slots=40, warmup=0,
                         trace=True)
        text = trace_to_csv(m.per_slot_series)
        lines = text.strip().split("\n")
        assert lines[0].startswith("slot,device,")
        assert len(lines) == 1 + 40 * 3


class TestConfigFiles:
    def test_parse_and_build(self):
        text = """
        # experiment
        n_devices = 4
        device_distance_m = 3, 5, 7, 9
        a_max = 1.0
        epsilon = 0.25
        v_param = 250
        drop_price = 2
        policies = PCF, PF
        v_grid = 100, 200
        p_grid = 2, inf
        n_seeds = 3
        horizon_slots = 1200
        """
        plan = plan_from_mapping(parse_config_text(text))
        assert plan.base.n_devices == 4
        assert plan.base.a_max == (1.0,) * 4
        assert plan.base.epsilon == (0.25,) * 4
        assert plan.policies == ("PCF", "PF")
        assert plan.p_grid == (2.0, math.inf)
        assert plan.n_seeds == 3

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_text("mystery_knob = 7")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_config_text("v_param = 1\nv_param = 2")

    def test_infinite_drop_price(self):
        cfg = config_from_mapping(parse_config_text("drop_price = inf"))
        assert cfg.never_drop and cfg.drop_price == 1e9

    def test_n_devices_rebroadcasts_defaults(self):
        cfg = config_from_mapping(parse_config_text("n_devices = 5"))
        assert len(cfg.a_max) == 5
        assert cfg.device_distance_m == (3.0, 4.0, 5.0, 6.0, 7.0)


class TestCli:
    def test_bounds_subcommand(self, capsys):
        assert cli.main(["bounds", "--v", "400", "--p", "2"]) == 0
        out = capsys.readouterr().out
        assert "B1 =" in out and "B2 =" in out
        assert "746.865886" in out

    def test_run_subcommand_writes_csv(self, tmp_path):
        code = cli.main([
            "run", "--policy", "PCF", "--v", "50", "--p", "2",
            "--seeds", "1", "--slots", "120", "--warmup", "0",
            "--out", str(tmp_path), "--trace",
        ])
        assert code == 0
        csv = (tmp_path / "run.csv").read_text()
        assert csv.startswith("policy,V,p,seed,")
        assert (tmp_path / "trace_seed0.csv").exists()

    def test_sweep_subcommand(self, tmp_path):
        plan = tmp_path / "plan.cfg"
        plan.write_text(
            "policies = PCF\nv_grid = 50\np_grid = 2\nn_seeds = 2\n"
            "horizon_slots = 150\nwarmup_slots = 0\nn_devices = 3\n"
            "device_distance_m = 3, 6, 10\n"
        )
        code = cli.main(["sweep", "--config", str(plan),
                         "--out", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "results.csv").read_text().strip().split("\n")
        assert len(lines) == 3

    def test_run_stdout_when_no_out(self, capsys):
        code = cli.main(["run", "--policy", "HDO", "--v", "50", "--p", "2",
                         "--seeds", "1", "--slots", "100", "--warmup", "0"])
        assert code == 0
        assert capsys.readouterr().out.startswith("policy,V,p,seed,")
