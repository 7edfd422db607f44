"""Instance configuration and seeded instance generation.

Config keys mirror DeviceParams / HapParams field names plus a few generation
knobs. Unknown keys are rejected.

Randomness per seed is drawn in a fixed order from one generator (distance
offsets, CPU provisioning factors, weights) and the fading from a second one,
all independent of the swept values, so grid points share random numbers.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .model import (DeviceParams, DomainError, HapParams, NetworkInstance,
                    harvest_upper_bound, mean_channel_gain, sample_channels)


@dataclass(frozen=True)
class InstanceConfig:
    n_devices: int = 6
    mean_distance: float = 3.0
    distance_spread: float = 1.0
    l_th: float = 4000.0
    # HAP
    tx_power: float = 3.0
    cpu_speed_ap: float = 1e9
    bandwidth: float = 2e6
    noise_power: float = 1e-10
    eh_efficiency: float = 0.51
    frame_length: float = 1.0
    antenna_gain: float = 4.11
    carrier_freq: float = 915e6
    path_loss_exp: float = 2.8
    # devices
    device_tx_power: float = 1e-4
    cycles_per_bit: float = 100.0
    energy_coeff: float = 1e-26
    battery_cap: float = 1e-2
    cpu_policy: str = "provisioned"      # or "uniform"
    cpu_factor: tuple = (2.0, 3.0)       # kappa range for "provisioned"
    cpu_range: tuple = (1e8, 3e8)        # cycles/s range for "uniform"
    weights: str = "uniform-random"      # or "ones"
    weight_range: tuple = (1.0, 2.0)
    fading: bool = True

    def __post_init__(self):
        if self.n_devices < 1:
            raise DomainError("n_devices must be >= 1")
        if self.cpu_policy not in ("provisioned", "uniform"):
            raise DomainError(f"unknown cpu_policy {self.cpu_policy!r}")
        if self.weights not in ("uniform-random", "ones"):
            raise DomainError(f"unknown weights mode {self.weights!r}")
        for k in ("cpu_factor", "cpu_range", "weight_range"):
            object.__setattr__(self, k, tuple(float(x) for x in getattr(self, k)))

    def hap(self) -> HapParams:
        return HapParams(tx_power=self.tx_power, cpu_speed=self.cpu_speed_ap, bandwidth=self.bandwidth,
                         noise_power=self.noise_power, eh_efficiency=self.eh_efficiency,
                         frame_length=self.frame_length, antenna_gain=self.antenna_gain,
                         carrier_freq=self.carrier_freq, path_loss_exp=self.path_loss_exp)

    def updated(self, **kw) -> "InstanceConfig":
        # grid aliases used by the experiment harness
        alias = {"f_ap": "cpu_speed_ap", "d_e": "path_loss_exp", "eta": "eh_efficiency",
                 "N": "n_devices", "d_mean": "mean_distance"}
        kw = {alias.get(k, k): v for k, v in kw.items()}
        if "n_devices" in kw:
            kw["n_devices"] = int(kw["n_devices"])
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceConfig":
        names = {f.name for f in fields(cls)}
        bad = set(d) - names
        if bad:
            raise DomainError(f"unknown config keys: {sorted(bad)}")
        return cls(**d)


def load_config(path) -> InstanceConfig:
    """Read a YAML or JSON file holding InstanceConfig keys."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        import yaml
        data = yaml.safe_load(text) or {}
    return InstanceConfig.from_dict(data)


def _device_rng(seed):
    return np.random.default_rng([int(seed), 0])


def _fading_seed(seed):
    return int(np.random.SeedSequence([int(seed), 1]).generate_state(1)[0])


def draw_devices(cfg: InstanceConfig, seed: int):
    """Distances, CPU speeds and weights for one seed."""
    N = cfg.n_devices
    rng = _device_rng(seed)
    offs = rng.uniform(-1.0, 1.0, N)
    kappa_u = rng.uniform(0.0, 1.0, N)
    w_u = rng.uniform(0.0, 1.0, N)
    d = np.maximum(cfg.mean_distance + cfg.distance_spread * offs, 0.1)
    hap = cfg.hap()
    hbar = np.atleast_1d(mean_channel_gain(hap, d))
    if cfg.cpu_policy == "provisioned":
        lo, hi = cfg.cpu_factor
        kappa = lo + (hi - lo) * kappa_u
        f = kappa * (harvest_upper_bound(hap, hbar) / (cfg.energy_coeff * cfg.frame_length)) ** (1 / 3)
    else:
        lo, hi = cfg.cpu_range
        f = lo + (hi - lo) * kappa_u
    if cfg.weights == "ones":
        w = np.ones(N)
    else:
        lo, hi = cfg.weight_range
        w = lo + (hi - lo) * w_u
    devs = tuple(DeviceParams(index=n, weight=float(w[n]), cpu_speed=float(f[n]),
                              cycles_per_bit=cfg.cycles_per_bit, energy_coeff=cfg.energy_coeff,
                              tx_power=cfg.device_tx_power, battery_cap=cfg.battery_cap,
                              distance=float(d[n])) for n in range(N))
    return devs


def make_instance(cfg: InstanceConfig, seed: int, fading_seed: int | None = None) -> NetworkInstance:
    """One frame for ``seed``; ``fading_seed`` redraws only the fading."""
    devs = draw_devices(cfg, seed)
    hap = cfg.hap()
    fs = _fading_seed(seed) if fading_seed is None else fading_seed
    ch = sample_channels(hap, [d.distance for d in devs], fs, fading=cfg.fading)
    return NetworkInstance(devs, hap, ch, cfg.l_th)
