"""Slow reference simulator composed purely from the public step functions.

Used as the independent route for checking the compiled engine: same dynamics,
same decision rules, but built slot by slot from model/scheduler/feedback/
baselines primitives with the batch ledger as explicit DataBatch tuples.
"""

from dataclasses import replace

import numpy as np

from wpmec.baselines import initial_pf_state, pf_decide, pf_update
from wpmec.environment import EnvStream, channel_delta, offload_rate
from wpmec.feedback import end_of_slot, initial_store, observe
from wpmec.model import (ApState, DeviceState, ledger_mass, max_age,
                         step_ap_queue, step_device_queue, step_virtual_queue)
from wpmec.scheduler import (SlotObservation, allocate_time, decide_admission,
                             decide_discard, select_offload_set)


def reference_run(cfg, policy, seed, slots):
    """Simulate and return per-slot arrays matching the engine's trace."""
    n = cfg.n_devices
    p = cfg.drop_price
    stream = EnvStream(cfg, seed)

    devices = [DeviceState() for _ in range(n)]
    ap = ApState(s_backlogs=(0.0,) * n, r_current=(0.0,) * n)
    store = initial_store(n)
    pf_state = initial_pf_state(n)

    out = {key: np.zeros((slots, n)) for key in
           ("q", "z", "s", "mu", "rate", "admit", "drop", "offloaded")}
    out["age"] = np.zeros((slots, n), dtype=np.int64)
    out["mu0"] = np.zeros(slots)
    out["ledger_err"] = np.zeros((slots, n))

    for t in range(slots):
        env = stream.draw_slot(t)
        delta = tuple(channel_delta(cfg, env.gains[i], i) for i in range(n))
        true_q = tuple(d.q_backlog for d in devices)
        true_z = tuple(d.z_backlog for d in devices)

        for i in range(n):
            out["q"][t, i] = true_q[i]
            out["z"][t, i] = true_z[i]
            out["s"][t, i] = ap.s_backlogs[i]
            out["age"][t, i] = max_age(devices[i], t)

        # AP-side view
        if policy == "PCF":
            obs = SlotObservation(q=true_q, z=true_z, s=ap.s_backlogs,
                                  delta=delta, arrivals=env.arrivals)
        else:
            obs = observe(store, ap, delta, env.arrivals)
        if policy == "HDO":
            obs = replace(obs, z=(0.0,) * n)

        # time allocation
        if policy == "PF":
            expired = tuple(
                sum(b.size for b in devices[i].batches
                    if t - b.admitted_slot >= cfg.g_max_slots)
                for i in range(n)
            )
            decision = pf_decide(obs, env, pf_state, cfg, expired)
            mu0, mu, rate = decision.mu0, decision.mu, decision.rate
            admit, drop = decision.admit, decision.drop
        else:
            active = select_offload_set(obs, p)
            mu0, mu = allocate_time(obs, active, p, cfg.kappa, cfg.sigma,
                                    cfg.bandwidth_hz)
            rate = tuple(offload_rate(cfg, delta[i], mu0, mu[i], i)
                         for i in range(n))
            # device-side rules always act on true local state
            admit = tuple(decide_admission(true_q[i], env.arrivals[i],
                                           cfg.v_param) for i in range(n))
            if cfg.never_drop:
                drop = (0.0,) * n
            elif policy == "HDO":
                drop = tuple(decide_discard(true_q[i], 0.0, cfg.v_param, p,
                                            cfg.a_max[i]) for i in range(n))
            else:
                drop = tuple(decide_discard(true_q[i], true_z[i], cfg.v_param,
                                            p, cfg.a_max[i]) for i in range(n))

        offloaded = tuple(min(rate[i], true_q[i]) for i in range(n))

        out["mu0"][t] = mu0
        for i in range(n):
            out["mu"][t, i] = mu[i]
            out["rate"][t, i] = rate[i]
            out["admit"][t, i] = admit[i]
            out["drop"][t, i] = drop[i]
            out["offloaded"][t, i] = offloaded[i]

        # state advance
        new_devices = []
        for i in range(n):
            dev = step_device_queue(devices[i], rate[i], drop[i], admit[i], t)
            if policy in ("PCF", "PPF"):
                z_new = step_virtual_queue(devices[i].z_backlog, rate[i],
                                           drop[i], cfg.epsilon[i], p)
                dev = replace(dev, z_backlog=z_new)
            out["ledger_err"][t, i] = abs(ledger_mass(dev) - dev.q_backlog)
            new_devices.append(dev)
        devices = new_devices
        ap = ApState(
            s_backlogs=tuple(step_ap_queue(ap.s_backlogs[i], env.proc[i],
                                           offloaded[i]) for i in range(n)),
            r_current=env.proc,
        )

        if policy != "PCF":
            refreshed = [i for i in range(n)
                         if mu[i] > 0.0
                         or store.snapshot_age[i] >= cfg.feedback_interval]
            store = end_of_slot(store,
                                refreshed,
                                [d.q_backlog for d in devices],
                                [d.z_backlog for d in devices], t)
        if policy == "PF":
            pf_state = pf_update(pf_state, offloaded)

    return out
