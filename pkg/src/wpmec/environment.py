"""Seeded stochastic processes and physical-layer formulas.

Channel fades, data arrivals and AP processing capacities come from
counter-based Philox streams, one stream per (seed, device, purpose). Every
sample is produced by inverse-CDF transform of exactly one uniform draw, so
slot t of a stream can be addressed randomly (Philox advance) or produced in
bulk, with identical values either way. Adding devices or extending the
horizon never perturbs existing streams.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.random import Generator, Philox

from .model import SystemConfig

# substream purposes
_FADE, _ARRIVAL, _PROC = 0, 1, 2

# key layout: seed * 2^32 + device * 2^8 + purpose
_DEVICE_STRIDE = 1 << 8
_SEED_STRIDE = 1 << 32


@dataclass(frozen=True)
class EnvDraw:
    """One slot's exogenous randomness: channel gains, arrivals, capacities."""

    gains: Tuple[float, ...]
    arrivals: Tuple[float, ...]
    proc: Tuple[float, ...]


def _stream_key(seed: int, device: int, purpose: int) -> int:
    return seed * _SEED_STRIDE + device * _DEVICE_STRIDE + purpose


def _uniforms(seed: int, device: int, purpose: int, start: int, count: int) -> np.ndarray:
    # Philox advances its counter in blocks of four 64-bit words (four
    # doubles); position to the containing block and discard the offset
    block, offset = divmod(start, 4)
    gen = Generator(Philox(key=_stream_key(seed, device, purpose)).advance(block))
    return gen.random(offset + count)[offset:]


def _fade_from_uniform(u):
    # Exp(1) by inverse CDF; floored so gains stay strictly positive
    return np.maximum(-np.log1p(-u), 1e-300)


def _bounded_from_uniform(u, cap: float, model: str):
    if model == "uniform":
        return u * cap
    if model == "constant":
        return np.full_like(u, cap)
    # bernoulli: cap with probability 1/2
    return np.where(u < 0.5, cap, 0.0)


class EnvStream:
    """Per-run environment sampler bound to (config, seed)."""

    def __init__(self, cfg: SystemConfig, seed: int):
        if seed < 0:
            raise ValueError("EnvStream: seed must be >= 0")
        self.cfg = cfg
        self.seed = seed
        self._path_gain = tuple(
            1e-3 * d ** (-cfg.path_loss_exp) for d in cfg.device_distance_m
        )

    def draw_slot(self, t: int) -> EnvDraw:
        """Slot-t draw, addressed directly; deterministic in (seed, t, device)."""
        cfg = self.cfg
        n = cfg.n_devices
        gains, arrivals, proc = [], [], []
        for i in range(n):
            u_fade = _uniforms(self.seed, i, _FADE, t, 1)[0]
            u_arr = _uniforms(self.seed, i, _ARRIVAL, t, 1)[0]
            u_proc = _uniforms(self.seed, i, _PROC, t, 1)[0]
            gains.append(self._path_gain[i] * float(_fade_from_uniform(u_fade)))
            arrivals.append(float(_bounded_from_uniform(
                np.float64(u_arr), cfg.a_max[i], cfg.arrival_model)))
            proc.append(float(_bounded_from_uniform(
                np.float64(u_proc), cfg.r_max[i], cfg.proc_model)))
        return EnvDraw(tuple(gains), tuple(arrivals), tuple(proc))

    def draw_trace(self, horizon: int):
        """Bulk (horizon, n_devices) arrays of gains, arrivals and capacities.

        Row t equals draw_slot(t) exactly.
        """
        cfg = self.cfg
        n = cfg.n_devices
        gains = np.empty((horizon, n))
        arrivals = np.empty((horizon, n))
        proc = np.empty((horizon, n))
        for i in range(n):
            u = _uniforms(self.seed, i, _FADE, 0, horizon)
            gains[:, i] = self._path_gain[i] * _fade_from_uniform(u)
            u = _uniforms(self.seed, i, _ARRIVAL, 0, horizon)
            arrivals[:, i] = _bounded_from_uniform(u, cfg.a_max[i], cfg.arrival_model)
            u = _uniforms(self.seed, i, _PROC, 0, horizon)
            proc[:, i] = _bounded_from_uniform(u, cfg.r_max[i], cfg.proc_model)
        return gains, arrivals, proc


def draw_slot(cfg: SystemConfig, rng_stream: EnvStream, t: int) -> EnvDraw:
    """Functional form of EnvStream.draw_slot."""
    if rng_stream.cfg is not cfg and rng_stream.cfg != cfg:
        raise ValueError("draw_slot: stream was built for a different config")
    return rng_stream.draw_slot(t)


def channel_delta(cfg: SystemConfig, gain: float, i: int) -> float:
    """Effective uplink SNR coefficient: harvest_eff * P0 * gain^2 / N0."""
    return cfg.harvest_eff[i] * cfg.ap_power_w * gain * gain / cfg.noise_w


def harvested_energy(cfg: SystemConfig, gain: float, mu0: float, i: int) -> float:
    """Energy (J) device i harvests during the transfer portion mu0."""
    if not 0.0 <= mu0 <= 1.0 + 1e-12:
        raise ValueError("harvested_energy: mu0 must lie in [0, 1]")
    return cfg.harvest_eff[i] * cfg.ap_power_w * gain * mu0 * cfg.slot_seconds


def offload_rate(cfg: SystemConfig, delta: float, mu0: float, mu_i: float,
                 i: int) -> float:
    """Link-capped uplink rate (internal units per slot) for one device.

    Zero airtime means zero rate; otherwise mu_i * W * log2(1 + delta*mu0/mu_i)
    scaled to internal units and capped at c_max.
    """
    if mu0 < 0.0 or mu_i < 0.0:
        raise ValueError("offload_rate: portions must be >= 0")
    if mu_i == 0.0:
        return 0.0
    bits = mu_i * cfg.bandwidth_hz * math.log2(1.0 + delta * mu0 / mu_i)
    return min(cfg.c_max[i], bits * cfg.slot_seconds / cfg.unit_scale_bits)
