"""Compile (instance, strategy) into the standard-form LP  min c'x  s.t. Ax <= b, x >= 0.

Column order: alpha1, alpha2, then per cluster (l_o^loc, l_o^ap, l_o^p, l_p^loc),
then per ID (l_q^loc, l_q^ap).

Row order (documented and fixed):
    7d x m      SD offload time
    7e x m      AD forward + assist window
    7f x m      AD total compute time
    7h x (N-2m) ID offload time
    7i x 1      HAP compute budget
    energy x 2N family-major: SD harvest, SD battery, AD harvest, AD battery,
                ID harvest, ID battery
    7o x m, 7p x m, 7q x (N-2m)   minimum data, negated into <= form

Data columns are in kilobits and energy rows in millijoules; the time rows stay
in seconds. The scale factors live on the layout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (AssumptionError, CollaborationStrategy, DomainError, NetworkInstance,
                    downlink_rate, harvest_upper_bound, uplink_rate)

BIT_SCALE = 1e3      # bits per LP data unit
ENERGY_SCALE = 1e-3  # joules per LP energy unit


@dataclass(frozen=True)
class VariableLayout:
    names: tuple
    N: int
    m: int
    bit_scale: float = BIT_SCALE
    energy_scale: float = ENERGY_SCALE

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def column_scale(self) -> np.ndarray:
        """Multiply LP columns by this to get SI values (bits, fractions)."""
        s = np.full(len(self.names), self.bit_scale)
        s[:2] = 1.0
        return s

    @classmethod
    def for_strategy(cls, strategy: CollaborationStrategy) -> "VariableLayout":
        names = ["alpha1", "alpha2"]
        for o, p in zip(strategy.sds, strategy.ads):
            names += [f"l_loc[{o}]", f"l_ap[{o}]", f"l_pi[{o}>{p}]", f"l_loc[{p}]"]
        for q in strategy.ids:
            names += [f"l_loc[{q}]", f"l_ap[{q}]"]
        return cls(tuple(names), strategy.N, strategy.m)


@dataclass(frozen=True)
class StandardFormLp:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    layout: VariableLayout
    row_tags: tuple
    strategy: CollaborationStrategy | None = None

    @property
    def shape(self):
        return self.A.shape

    def objective_value(self, x1) -> float:
        """WSCR (weighted bits) of an LP point."""
        return float(-(self.c @ x1) * self.layout.bit_scale)

    def to_si(self, x1) -> np.ndarray:
        return np.asarray(x1) * self.layout.column_scale

    def from_si(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) / self.layout.column_scale

    def dump(self, path) -> None:
        """Plain-text dump: header, then c, then one line per row: tag b a_1 ... a_n."""
        with open(path, "w") as fh:
            r, n = self.A.shape
            fh.write(f"# standard-form LP rows={r} cols={n}\n")
            fh.write("# columns " + " ".join(self.layout.names) + "\n")
            fh.write("c " + " ".join(repr(float(v)) for v in self.c) + "\n")
            for tag, bi, row in zip(self.row_tags, self.b, self.A):
                fh.write(f"{tag} {float(bi)!r} " + " ".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True)
class SlackFormLp:
    """Equality form A2 x3 = b, x3 >= 0, with A2 = [A1 | I]."""
    c3: np.ndarray
    A2: np.ndarray
    b: np.ndarray
    n_original: int


def build(instance: NetworkInstance, strategy: CollaborationStrategy) -> StandardFormLp:
    if strategy.N != instance.N:
        raise DomainError("strategy size does not match instance")
    if instance.assumption_violations:
        raise AssumptionError(
            f"devices {list(instance.assumption_violations)} violate k f^3 T > eta P h T")
    hap, devs, h = instance.hap, instance.devices, instance.h
    N, m = instance.N, strategy.m
    o, p, q = strategy.sds, strategy.ads, strategy.ids
    nq = len(q)
    T = hap.frame_length
    ks, es = BIT_SCALE, ENERGY_SCALE
    layout = VariableLayout.for_strategy(strategy)
    ncol = 2 + 4 * m + 2 * nq

    def cl(i, j):
        return 2 + 4 * i + j

    def qc(k, j):
        return 2 + 4 * m + 2 * k + j

    rup = np.array([uplink_rate(d, hap, hn) for d, hn in zip(devs, h)])
    rdn = np.array([downlink_rate(hap, hn) for hn in h])
    phi = np.array([d.cycles_per_bit for d in devs])
    f = np.array([d.cpu_speed for d in devs])
    # joules per bit of local computing at each device's own speed
    kf2 = np.array([d.energy_coeff * d.cpu_speed ** 2 for d in devs])
    pw = np.array([d.tx_power for d in devs])
    emax = np.array([d.battery_cap for d in devs])
    harv = np.array([harvest_upper_bound(hap, hn) for hn in h])

    rows, rhs, tags = [], [], []

    def new():
        r = np.zeros(ncol)
        rows.append(r)
        return r

    for i in range(m):
        r = new()
        r[cl(i, 1)] = r[cl(i, 2)] = ks / rup[o[i]]
        r[1] = -T
        rhs.append(0.0)
        tags.append(f"7d[{o[i]}]")
    for i in range(m):
        r = new()
        r[0] = r[1] = T
        r[cl(i, 2)] = ks * (phi[o[i]] / f[p[i]] + 1 / rdn[p[i]])
        rhs.append(T)
        tags.append(f"7e[{o[i]}>{p[i]}]")
    for i in range(m):
        r = new()
        r[cl(i, 3)] = ks * phi[p[i]] / f[p[i]]
        r[cl(i, 2)] = ks * phi[o[i]] / f[p[i]]
        rhs.append(T)
        tags.append(f"7f[{p[i]}]")
    for k in range(nq):
        r = new()
        r[qc(k, 1)] = ks / rup[q[k]]
        r[1] = -T
        rhs.append(0.0)
        tags.append(f"7h[{q[k]}]")
    r = new()
    r[0] = r[1] = T
    for i in range(m):
        r[cl(i, 1)] = ks * phi[o[i]] / hap.cpu_speed
    for k in range(nq):
        r[qc(k, 1)] = ks * phi[q[k]] / hap.cpu_speed
    rhs.append(T)
    tags.append("7i")

    # energy rows: coefficient (J/bit) * (bits/kbit) / (J/mJ)
    ec = ks / es
    sd_rows, ad_rows, id_rows = [], [], []
    for i in range(m):
        e = np.zeros(ncol)
        e[cl(i, 0)] = ec * kf2[o[i]] * phi[o[i]]
        e[cl(i, 1)] = e[cl(i, 2)] = ec * pw[o[i]] / rup[o[i]]
        sd_rows.append((o[i], e))
        e = np.zeros(ncol)
        e[cl(i, 3)] = ec * kf2[p[i]] * phi[p[i]]
        e[cl(i, 2)] = ec * kf2[p[i]] * phi[o[i]]
        ad_rows.append((p[i], e))
    for k in range(nq):
        e = np.zeros(ncol)
        e[qc(k, 0)] = ec * kf2[q[k]] * phi[q[k]]
        e[qc(k, 1)] = ec * pw[q[k]] / rup[q[k]]
        id_rows.append((q[k], e))
    for fam, fam_rows in (("sd", sd_rows), ("ad", ad_rows), ("id", id_rows)):
        for n, e in fam_rows:
            r = new()
            r[:] = e
            r[0] = -harv[n] / es
            rhs.append(0.0)
            tags.append(f"8{fam}h[{n}]")
        for n, e in fam_rows:
            r = new()
            r[:] = e
            rhs.append(emax[n] / es)
            tags.append(f"8{fam}max[{n}]")

    lth = instance.l_th / ks
    for i in range(m):
        r = new()
        r[cl(i, 0)] = r[cl(i, 1)] = r[cl(i, 2)] = -1.0
        rhs.append(-lth)
        tags.append(f"7o[{o[i]}]")
    for i in range(m):
        r = new()
        r[cl(i, 3)] = -1.0
        rhs.append(-lth)
        tags.append(f"7p[{p[i]}]")
    for k in range(nq):
        r = new()
        r[qc(k, 0)] = r[qc(k, 1)] = -1.0
        rhs.append(-lth)
        tags.append(f"7q[{q[k]}]")

    c = np.zeros(ncol)
    w = instance.weights
    for i in range(m):
        c[cl(i, 0)] = c[cl(i, 1)] = c[cl(i, 2)] = -w[o[i]]
        c[cl(i, 3)] = -w[p[i]]
    for k in range(nq):
        c[qc(k, 0)] = c[qc(k, 1)] = -w[q[k]]

    A = np.array(rows)
    b = np.array(rhs)
    assert A.shape == (4 * N + m + 1, 2 * N + 2), A.shape
    for arr in (c, A, b):
        arr.setflags(write=False)
    return StandardFormLp(c, A, b, layout, tuple(tags), strategy)


def to_slack_form(lp: StandardFormLp) -> SlackFormLp:
    r, n = lp.A.shape
    A2 = np.hstack([lp.A, np.eye(r)])
    c3 = np.concatenate([lp.c, np.zeros(r)])
    N, m = lp.layout.N, lp.layout.m
    # barrier sum runs over 6N+m+3 = (2N+2) + (4N+m+1) coordinates
    if lp.strategy is not None and A2.shape[1] != 6 * N + m + 3:
        raise AssertionError(f"slack form has {A2.shape[1]} variables, expected {6 * N + m + 3}")
    return SlackFormLp(c3, A2, lp.b.copy(), n)
