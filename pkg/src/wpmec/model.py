"""Network model: device/HAP parameters, channels, strategies, allocations.

All physics is in SI units (bits, joules, seconds, watts). Device ids are
0-based throughout the package.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 3e8


class DomainError(ValueError):
    """Raised for arguments outside an operation's domain."""


class AssumptionError(ValueError):
    """Raised when an instance violates the energy-constrained assumption."""


@dataclass(frozen=True)
class DeviceParams:
    index: int
    weight: float = 1.0
    cpu_speed: float = 2e8
    cycles_per_bit: float = 100.0
    energy_coeff: float = 1e-26
    tx_power: float = 1e-4
    battery_cap: float = 1e-2
    distance: float = 3.0

    def __post_init__(self):
        for name in ("weight", "cpu_speed", "cycles_per_bit", "energy_coeff",
                     "tx_power", "battery_cap", "distance"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"device {self.index}: {name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class HapParams:
    tx_power: float = 3.0
    cpu_speed: float = 1e9
    bandwidth: float = 2e6
    noise_power: float = 1e-10
    eh_efficiency: float = 0.51
    frame_length: float = 1.0
    antenna_gain: float = 4.11
    carrier_freq: float = 915e6
    path_loss_exp: float = 2.8

    def __post_init__(self):
        if not 0 < self.eh_efficiency < 1:
            raise DomainError(f"eh_efficiency must lie in (0,1), got {self.eh_efficiency}")
        for name in ("tx_power", "cpu_speed", "bandwidth", "noise_power",
                     "frame_length", "antenna_gain", "carrier_freq"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"hap {name} must be finite and > 0, got {v}")
        if not (np.isfinite(self.path_loss_exp) and self.path_loss_exp >= 0):
            raise DomainError("path_loss_exp must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    seed: int | None = None
    mean_gains: np.ndarray | None = None

    def __post_init__(self):
        g = np.array(self.gains, dtype=float)
        if g.ndim != 1 or g.size == 0 or not np.all(g > 0) or not np.all(np.isfinite(g)):
            raise DomainError("channel gains must be a non-empty vector of positive values")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)
        if self.mean_gains is not None:
            mg = np.array(self.mean_gains, dtype=float)
            mg.setflags(write=False)
            object.__setattr__(self, "mean_gains", mg)

    def __len__(self):
        return self.gains.size

    def to_csv(self, path) -> None:
        """Write device_id, mean_gain, fading_factor, gain rows."""
        mg = self.mean_gains if self.mean_gains is not None else self.gains
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["device_id", "mean_gain", "fading_factor", "gain"])
            for n, (a, g) in enumerate(zip(mg, self.gains)):
                wr.writerow([n, repr(float(a)), repr(float(g / a)), repr(float(g))])

    @classmethod
    def from_csv(cls, path, seed=None) -> "ChannelRealization":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["device_id"]))
        return cls(gains=np.array([float(r["gain"]) for r in rows]),
                   mean_gains=np.array([float(r["mean_gain"]) for r in rows]), seed=seed)


def mean_channel_gain(hap: HapParams, d):
    """Free-space path-loss mean gain A_d * (c / (4 pi f_c d))**d_e."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be > 0")
    g = hap.antenna_gain * (SPEED_OF_LIGHT / (4 * math.pi * hap.carrier_freq * d)) ** hap.path_loss_exp
    return float(g) if g.ndim == 0 else g


def sample_channels(hap: HapParams, distances: Sequence[float], seed: int,
                    fading: bool = True) -> ChannelRealization:
    """Rayleigh block fading: h_n = hbar_n * alpha_n with alpha_n ~ Exp(1)."""
    hbar = np.atleast_1d(mean_channel_gain(hap, np.asarray(distances, dtype=float)))
    if fading:
        alpha = np.random.default_rng(seed).exponential(1.0, hbar.size)
    else:
        alpha = np.ones_like(hbar)
    return ChannelRealization(gains=hbar * alpha, seed=seed, mean_gains=hbar)


def harvest_upper_bound(hap: HapParams, h) -> float:
    """eta * P * h * T, the most a device can collect in one frame."""
    return hap.eh_efficiency * hap.tx_power * h * hap.frame_length


def harvested_energy(device: DeviceParams, hap: HapParams, h: float, alpha1: float) -> float:
    if not 0 < alpha1 <= 1:
        raise DomainError(f"alpha1 must lie in (0,1], got {alpha1}")
    return min(harvest_upper_bound(hap, h) * alpha1, device.battery_cap)


def uplink_rate(device: DeviceParams, hap: HapParams, h: float) -> float:
    return hap.bandwidth * math.log2(1 + device.tx_power * h / hap.noise_power)


def downlink_rate(hap: HapParams, h: float) -> float:
    return hap.bandwidth * math.log2(1 + hap.tx_power * h / hap.noise_power)


@dataclass(frozen=True)
class NetworkInstance:
    devices: tuple
    hap: HapParams
    channels: ChannelRealization
    l_th: float = 4000.0

    def __post_init__(self):
        devs = tuple(self.devices)
        object.__setattr__(self, "devices", devs)
        if len(devs) < 1:
            raise DomainError("need at least one device")
        if len(self.channels) != len(devs):
            raise DomainError("channel vector length must equal the number of devices")
        if self.l_th < 0:
            raise DomainError("l_th must be >= 0")
        for n, d in enumerate(devs):
            if d.index != n:
                raise DomainError(f"device at position {n} has index {d.index}")
        object.__setattr__(self, "assumption_violations", self._check_assumption())

    @property
    def N(self) -> int:
        return len(self.devices)

    @property
    def h(self) -> np.ndarray:
        return self.channels.gains

    @property
    def weights(self) -> np.ndarray:
        return np.array([d.weight for d in self.devices])

    def _check_assumption(self) -> tuple:
        """Devices for which k f^3 T <= eta P h T (energy-constrained assumption fails)."""
        T = self.hap.frame_length
        bad = []
        for d, h in zip(self.devices, self.channels.gains):
            if d.energy_coeff * d.cpu_speed ** 3 * T <= harvest_upper_bound(self.hap, h):
                bad.append(d.index)
        return tuple(bad)

    @property
    def energy_constrained(self) -> bool:
        return not self.assumption_violations

    def with_weights(self, w) -> "NetworkInstance":
        devs = tuple(replace(d, weight=float(x)) for d, x in zip(self.devices, w))
        return NetworkInstance(devs, self.hap, self.channels, self.l_th)


@dataclass(frozen=True, order=True)
class CollaborationStrategy:
    """psi = {m, o, p, q}; o[i] (SD) is paired with p[i] (AD)."""
    sds: tuple
    ads: tuple
    ids: tuple

    def __post_init__(self):
        o, p, q = (tuple(int(x) for x in s) for s in (self.sds, self.ads, self.ids))
        object.__setattr__(self, "sds", o)
        object.__setattr__(self, "ads", p)
        object.__setattr__(self, "ids", q)
        if len(o) != len(p):
            raise DomainError("|o| must equal |p|")
        allv = o + p + q
        N = len(allv)
        if len(set(allv)) != N:
            raise DomainError("o, p, q must be pairwise disjoint without repeats")
        if set(allv) != set(range(N)):
            raise DomainError(f"o, p, q must partition devices 0..{N - 1}")

    @property
    def m(self) -> int:
        return len(self.sds)

    @property
    def N(self) -> int:
        return len(self.sds) + len(self.ads) + len(self.ids)

    @classmethod
    def non_collaborative(cls, N: int) -> "CollaborationStrategy":
        return cls((), (), tuple(range(N)))

    def key(self):
        """Sort key used for deterministic tie-breaking: (m, o, p, q)."""
        return (self.m, self.sds, self.ads, self.ids)

    def __str__(self):
        pairs = ",".join(f"{a}>{b}" for a, b in zip(self.sds, self.ads))
        return f"m={self.m}[{pairs}]"


@dataclass(frozen=True)
class Allocation:
    """Time split and data split in bits.

    sd rows are (l_loc, l_ap, l_pi) per cluster; ad holds l_loc per AD;
    idv rows are (l_loc, l_ap) per ID.
    """
    alpha1: float
    alpha2: float
    sd: np.ndarray
    ad: np.ndarray
    idv: np.ndarray

    def __post_init__(self):
        sd = np.array(self.sd, dtype=float).reshape(-1, 3)
        ad = np.array(self.ad, dtype=float).reshape(-1)
        idv = np.array(self.idv, dtype=float).reshape(-1, 2)
        if sd.shape[0] != ad.shape[0]:
            raise DomainError("sd and ad must have one row per cluster")
        for a in (sd, ad, idv):
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise DomainError("data allocations must be finite and >= 0")
            a.setflags(write=False)
        object.__setattr__(self, "sd", sd)
        object.__setattr__(self, "ad", ad)
        object.__setattr__(self, "idv", idv)
        a1, a2 = float(self.alpha1), float(self.alpha2)
        if not (0 < a1 <= 1 and 0 <= a2 < 1 and a1 + a2 <= 1 + 1e-8):
            raise DomainError(f"invalid time split alpha1={a1}, alpha2={a2}")
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)

    @property
    def m(self) -> int:
        return self.sd.shape[0]

    @classmethod
    def zeros(cls, strategy: CollaborationStrategy, alpha1=1.0, alpha2=0.0) -> "Allocation":
        m = strategy.m
        return cls(alpha1, alpha2, np.zeros((m, 3)), np.zeros(m), np.zeros((len(strategy.ids), 2)))

    def to_vector(self) -> np.ndarray:
        """Flatten to the LP column order (bits, unscaled)."""
        blocks = [np.array([self.alpha1, self.alpha2])]
        if self.m:
            blocks.append(np.column_stack([self.sd, self.ad]).ravel())
        blocks.append(self.idv.ravel())
        return np.concatenate(blocks)

    @classmethod
    def from_vector(cls, x, strategy: CollaborationStrategy) -> "Allocation":
        x = np.asarray(x, dtype=float)
        m, nq = strategy.m, len(strategy.ids)
        if x.size != 2 + 4 * m + 2 * nq:
            raise DomainError("vector length does not match strategy")
        cl = x[2:2 + 4 * m].reshape(m, 4)
        return cls(x[0], x[1], cl[:, :3], cl[:, 3], x[2 + 4 * m:].reshape(nq, 2))


def _check_shape(instance, strategy, allocation):
    if strategy.N != instance.N:
        raise DomainError("strategy size does not match instance")
    if allocation.m != strategy.m or allocation.idv.shape[0] != len(strategy.ids):
        raise DomainError("allocation shape does not match strategy")


def wscr(instance: NetworkInstance, strategy: CollaborationStrategy, allocation: Allocation) -> float:
    """Weighted bits processed in one frame."""
    _check_shape(instance, strategy, allocation)
    w = instance.weights
    total = 0.0
    for i, (o, p) in enumerate(zip(strategy.sds, strategy.ads)):
        total += w[o] * allocation.sd[i].sum() + w[p] * allocation.ad[i]
    for k, q in enumerate(strategy.ids):
        total += w[q] * allocation.idv[k].sum()
    return float(total)


@dataclass(frozen=True)
class Violation:
    tag: str
    lhs: float
    rhs: float
    slack: float


@dataclass(frozen=True)
class ViolationReport:
    entries: tuple = ()
    worst_violation: float = 0.0
    # largest max(lhs - rhs, 0) / scale over every constraint, inside tol or not
    worst_relative: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.entries

    def tags(self):
        return [e.tag for e in self.entries]


def constraint_rows(instance: NetworkInstance, strategy: CollaborationStrategy,
                    allocation: Allocation) -> list:
    """Every constraint as (tag, lhs, rhs, scale) in SI units.

    scale is the magnitude against which a violation is judged (largest
    absolute term on either side).
    """
    _check_shape(instance, strategy, allocation)
    hap, devs, h = instance.hap, instance.devices, instance.h
    T, a1, a2 = hap.frame_length, allocation.alpha1, allocation.alpha2
    lth = instance.l_th
    rows = []

    def add(tag, terms, rhs_terms):
        lhs, rhs = sum(terms), sum(rhs_terms)
        scale = max([abs(t) for t in terms] + [abs(t) for t in rhs_terms] + [1e-300])
        rows.append((tag, lhs, rhs, scale))

    def rup(n):
        return uplink_rate(devs[n], hap, h[n])

    def ecomp(n, bits, phi_n=None):
        d = devs[n]
        return d.energy_coeff * d.cpu_speed ** 2 * (d.cycles_per_bit if phi_n is None else phi_n) * bits

    for i, (o, p) in enumerate(zip(strategy.sds, strategy.ads)):
        loc, ap, pi = allocation.sd[i]
        add(f"7d[{o}]", [(ap + pi) / rup(o)], [a2 * T])
    for i, (o, p) in enumerate(zip(strategy.sds, strategy.ads)):
        pi = allocation.sd[i, 2]
        add(f"7e[{o}>{p}]", [a1 * T, a2 * T, devs[o].cycles_per_bit * pi / devs[p].cpu_speed,
                             pi / downlink_rate(hap, h[p])], [T])
    for i, (o, p) in enumerate(zip(strategy.sds, strategy.ads)):
        pi = allocation.sd[i, 2]
        add(f"7f[{p}]", [devs[p].cycles_per_bit * allocation.ad[i] / devs[p].cpu_speed,
                         devs[o].cycles_per_bit * pi / devs[p].cpu_speed], [T])
    for k, q in enumerate(strategy.ids):
        add(f"7h[{q}]", [allocation.idv[k, 1] / rup(q)], [a2 * T])
    hap_terms = [devs[o].cycles_per_bit * allocation.sd[i, 1] / hap.cpu_speed
                 for i, o in enumerate(strategy.sds)]
    hap_terms += [devs[q].cycles_per_bit * allocation.idv[k, 1] / hap.cpu_speed
                  for k, q in enumerate(strategy.ids)]
    add("7i", hap_terms + [a1 * T, a2 * T], [T])

    # energy causality, harvest branch and battery branch per device class
    sd_e = [[ecomp(o, allocation.sd[i, 0]), devs[o].tx_power * (allocation.sd[i, 1] + allocation.sd[i, 2]) / rup(o)]
            for i, o in enumerate(strategy.sds)]
    ad_e = [[ecomp(p, allocation.ad[i]), ecomp(p, allocation.sd[i, 2], devs[o].cycles_per_bit)]
            for i, (o, p) in enumerate(zip(strategy.sds, strategy.ads))]
    id_e = [[ecomp(q, allocation.idv[k, 0]), devs[q].tx_power * allocation.idv[k, 1] / rup(q)]
            for k, q in enumerate(strategy.ids)]
    for fam, devlist, terms in (("sd", strategy.sds, sd_e), ("ad", strategy.ads, ad_e),
                                ("id", strategy.ids, id_e)):
        for n, t in zip(devlist, terms):
            add(f"8{fam}h[{n}]", t, [harvest_upper_bound(hap, h[n]) * a1])
        for n, t in zip(devlist, terms):
            add(f"8{fam}max[{n}]", t, [devs[n].battery_cap])

    for i, o in enumerate(strategy.sds):
        add(f"7o[{o}]", [lth], list(allocation.sd[i]))
    for i, p in enumerate(strategy.ads):
        add(f"7p[{p}]", [lth], [allocation.ad[i]])
    for k, q in enumerate(strategy.ids):
        add(f"7q[{q}]", [lth], list(allocation.idv[k]))

    vec = allocation.to_vector()
    for j, v in enumerate(vec):
        add(f"7r[{j}]", [-v], [0.0])
    return rows


def validate(instance: NetworkInstance, strategy: CollaborationStrategy,
             allocation: Allocation, tol: float = 1e-8) -> ViolationReport:
    """Check every constraint; a row is violated when lhs - rhs > tol * scale."""
    entries, worst_rel = [], 0.0
    for tag, lhs, rhs, scale in constraint_rows(instance, strategy, allocation):
        excess = lhs - rhs
        if excess > 0:
            worst_rel = max(worst_rel, excess / scale)
            if excess > tol * scale:
                entries.append(Violation(tag, lhs, rhs, rhs - lhs))
    worst = max((e.lhs - e.rhs for e in entries), default=0.0)
    return ViolationReport(tuple(entries), worst, worst_rel)
