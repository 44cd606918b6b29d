from dataclasses import replace

import numpy as np
import pytest

from wpmec.baselines import (PfState, hdo_decide, initial_pf_state, pf_decide,
                             pf_update)
from wpmec.model import SystemConfig
from wpmec.scheduler import SlotObservation, run_slot


def obs_of(rng, cfg):
    n = cfg.n_devices
    return SlotObservation(
        q=tuple(rng.uniform(0.0, 400.0, n)),
        z=tuple(rng.uniform(0.0, 400.0, n)),
        s=tuple(rng.uniform(0.0, 150.0, n)),
        delta=tuple(10 ** rng.uniform(-2.0, 1.5, n)),
        arrivals=tuple(rng.uniform(0.0, 1.0, n)),
    )


class TestHdo:
    def test_equals_run_slot_with_zero_virtual_queues(self):
        cfg = SystemConfig()
        rng = np.random.default_rng(41)
        for _ in range(20):
            obs = obs_of(rng, cfg)
            via_hdo = hdo_decide(obs, cfg, None)
            zeroed = replace(obs, z=(0.0,) * cfg.n_devices)
            via_run = run_slot(zeroed, cfg, None)
            assert via_hdo == via_run

    def test_age_blind_discard_rule(self):
        cfg = replace(SystemConfig(), v_param=100.0)  # p = 2
        n = cfg.n_devices
        obs = SlotObservation(q=(250.0,) * n, z=(1e6,) * n, s=(0.0,) * n,
                              delta=(10.0,) * n, arrivals=(0.5,) * n)
        dec = hdo_decide(obs, cfg, None)
        assert dec.drop == tuple(cfg.a_max)  # 250 > V*p = 200, z ignored

    def test_no_discard_below_threshold(self):
        cfg = replace(SystemConfig(), v_param=150.0)
        n = cfg.n_devices
        obs = SlotObservation(q=(250.0,) * n, z=(1e6,) * n, s=(0.0,) * n,
                              delta=(10.0,) * n, arrivals=(0.5,) * n)
        assert hdo_decide(obs, cfg, None).drop == (0.0,) * n  # 250 < 300

    def test_age_blind_policy_ages_out_data(self):
        # without the virtual queues nothing forces stale data out, so the
        # age-blind baseline's worst age dwarfs the age-aware policy's
        from wpmec.harness import simulate_run
        cfg = replace(SystemConfig(), v_param=400.0)
        hdo, pcf = [], []
        for seed in range(3):
            h = simulate_run(cfg, "HDO", seed, slots=3000, warmup=500,
                             check="off")
            p = simulate_run(cfg, "PCF", seed, slots=3000, warmup=500)
            hdo.append(max(h.max_age_per_device))
            pcf.append(max(p.max_age_per_device))
        assert min(hdo) > 2 * max(pcf)


class TestPf:
    def test_symmetric_smoothed_rates_split_equally(self):
        cfg = SystemConfig()
        n = cfg.n_devices
        obs = SlotObservation(q=(1.0,) * n, z=(0.0,) * n, s=(0.0,) * n,
                              delta=(5.0,) * n, arrivals=(0.5,) * n)
        state = initial_pf_state(n)
        dec = pf_decide(obs, None, state, cfg)
        assert len(set(dec.mu)) == 1
        assert dec.mu0 + sum(dec.mu) == pytest.approx(1.0, abs=1e-9)

    def test_starved_device_gets_most_airtime(self):
        cfg = SystemConfig()
        n = cfg.n_devices
        obs = SlotObservation(q=(1.0,) * n, z=(0.0,) * n, s=(0.0,) * n,
                              delta=(5.0,) * n, arrivals=(0.5,) * n)
        rates = [0.5] * n
        rates[3] = 1e-6  # starved
        state = PfState(avg_rate=tuple(rates))
        dec = pf_decide(obs, None, state, cfg)
        assert dec.mu[3] == max(dec.mu)

    def test_admits_everything_and_caps_drops(self):
        cfg = SystemConfig()
        n = cfg.n_devices
        rng = np.random.default_rng(42)
        obs = obs_of(rng, cfg)
        expired = tuple(rng.uniform(0.0, 3.0, n))
        dec = pf_decide(obs, None, initial_pf_state(n), cfg, expired)
        assert dec.admit == obs.arrivals
        assert dec.drop == tuple(min(e, 1.0) for e in expired)

    def test_window_one_tracks_last_rate(self):
        state = PfState(avg_rate=(0.7, 0.4), window=1.0)
        new = pf_update(state, (0.2, 0.9))
        assert new.avg_rate == (0.2, 0.9)

    def test_update_floors_at_tiny_positive(self):
        state = PfState(avg_rate=(1.0,), window=1.0)
        assert pf_update(state, (0.0,)).avg_rate[0] == 1e-9

    def test_state_validation(self):
        with pytest.raises(ValueError):
            PfState(avg_rate=(0.0,), window=0.5)
        with pytest.raises(ValueError):
            PfState(avg_rate=(1.0,), window=0.0)
