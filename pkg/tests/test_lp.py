import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpmec.config import InstanceConfig, make_instance
from wpmec.lp import build, to_slack_form
from wpmec.model import (Allocation, AssumptionError, ChannelRealization, CollaborationStrategy, DeviceParams,
                         HapParams, NetworkInstance, validate, wscr)
from wpmec.strategy import priority_strategy


def inst_for(N, seed=0, **kw):
    return make_instance(InstanceConfig(n_devices=N, **kw), seed)


def test_shape_n2_m1():
    inst = inst_for(2)
    lp = build(inst, CollaborationStrategy((0,), (1,), ()))
    assert lp.A.shape == (10, 6)
    assert to_slack_form(lp).A2.shape[1] == 16


def test_shape_n20_m0_has_no_cluster_rows():
    inst = inst_for(20, seed=3)
    lp = build(inst, CollaborationStrategy.non_collaborative(20))
    assert lp.A.shape == (81, 42)
    assert not [t for t in lp.row_tags if t[:2] in ("7d", "7e", "7f", "7o", "7p")]


def test_row_order_documented():
    inst = inst_for(5)
    s = CollaborationStrategy((3, 0), (1, 4), (2,))
    tags = build(inst, s).row_tags
    fams = []
    for t in tags:
        f = t.split("[")[0]
        if not fams or fams[-1] != f:
            fams.append(f)
    assert fams == ["7d", "7e", "7f", "7h", "7i", "8sdh", "8sdmax", "8adh", "8admax", "8idh", "8idmax",
                    "7o", "7p", "7q"]
    assert tags[:2] == ("7d[3]", "7d[0]")


def test_objective_entries_are_negated_weights():
    inst = inst_for(4, seed=2)
    s = CollaborationStrategy((2,), (0,), (1, 3))
    lp = build(inst, s)
    assert lp.c[0] == 0 and lp.c[1] == 0
    w = inst.weights
    assert lp.c[2:].tolist() == [-w[2], -w[2], -w[2], -w[0], -w[1], -w[1], -w[3], -w[3]]


def test_layout_bijection():
    s = CollaborationStrategy((1,), (0,), (2,))
    lp = build(inst_for(3), s)
    assert lp.layout.names == ("alpha1", "alpha2", "l_loc[1]", "l_ap[1]", "l_pi[1>0]", "l_loc[0]",
                               "l_loc[2]", "l_ap[2]")
    assert [lp.layout.index(n) for n in lp.layout.names] == list(range(8))


def test_deterministic_bytes():
    s = CollaborationStrategy((0,), (2,), (1, 3))
    a, b = build(inst_for(4, 9), s), build(inst_for(4, 9), s)
    for x, y in ((a.A, b.A), (a.b, b.b), (a.c, b.c)):
        assert x.tobytes() == y.tobytes()


def test_arrays_read_only():
    lp = build(inst_for(2), CollaborationStrategy.non_collaborative(2))
    with pytest.raises(ValueError):
        lp.A[0, 0] = 1.0


def test_assumption_violation_refused():
    devs = tuple(DeviceParams(index=n, cpu_speed=1e6) for n in range(2))
    inst = NetworkInstance(devs, HapParams(), ChannelRealization(np.full(2, 1e-2)))
    with pytest.raises(AssumptionError):
        build(inst, CollaborationStrategy.non_collaborative(2))


def test_slack_form_identity_blocks():
    lp = build(inst_for(3), CollaborationStrategy((0,), (1,), (2,)))
    sf = to_slack_form(lp)
    r, n = lp.A.shape
    np.testing.assert_array_equal(sf.A2[:, :n], lp.A)
    np.testing.assert_array_equal(sf.A2[:, n:], np.eye(r))
    np.testing.assert_array_equal(sf.c3, np.concatenate([lp.c, np.zeros(r)]))


def _random_points(lp, rng, k):
    """Points inside and around the polytope in LP units."""
    n = lp.A.shape[1]
    x = rng.uniform(0, 1, (k, n))
    x[:, :2] = rng.dirichlet([1, 1, 1], k)[:, :2]
    # scale the data columns by a random factor spanning feasible and infeasible magnitudes
    x[:, 2:] *= 10 ** rng.uniform(-1, 4, (k, 1))
    return x


@pytest.mark.parametrize("N,m", [(2, 0), (2, 1), (4, 1), (5, 2), (6, 3)])
def test_builder_matches_validator(N, m):
    rng = np.random.default_rng(N * 10 + m)
    inst = inst_for(N, seed=N + m)
    s = priority_strategy(inst, m)
    lp = build(inst, s)
    for x in _random_points(lp, rng, 200):
        a = Allocation.from_vector(lp.to_si(x), s)
        lp_ok = bool(np.all(lp.A @ x <= lp.b + 1e-9 * np.maximum(np.abs(lp.A) @ np.abs(x), np.abs(lp.b))))
        assert validate(inst, s, a, tol=1e-9).ok == lp_ok


def test_builder_matches_validator_near_optimum():
    # shrink / stretch the data columns of an optimum: both sides of the min-data and capacity rows
    from wpmec.ipm import solve
    rng = np.random.default_rng(0)
    inst = inst_for(4, seed=5)
    s = priority_strategy(inst, 1)
    lp = build(inst, s)
    res = solve(lp)
    assert res.converged
    x0 = res.x1_lp
    seen = set()
    for _ in range(1000):
        x = x0.copy()
        x[2:] *= rng.uniform(0.0, 1.05, x0.size - 2)
        a = Allocation.from_vector(lp.to_si(x), s)
        lp_ok = bool(np.all(lp.A @ x <= lp.b + 1e-9 * np.maximum(np.abs(lp.A) @ np.abs(x), np.abs(lp.b))))
        assert validate(inst, s, a, tol=1e-9).ok == lp_ok
        seen.add(lp_ok)
    assert seen == {True, False}


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(1, 6), data=st.data())
def test_objective_equals_wscr(seed, N, data):
    inst = inst_for(N, seed=seed)
    if inst.assumption_violations:
        return
    m = data.draw(st.integers(0, N // 2))
    s = priority_strategy(inst, m)
    lp = build(inst, s)
    rng = np.random.default_rng(seed)
    x = _random_points(lp, rng, 1)[0]
    a = Allocation.from_vector(lp.to_si(x), s)
    assert lp.objective_value(x) == pytest.approx(wscr(inst, s, a), rel=1e-12)


def test_dump(tmp_path):
    lp = build(inst_for(2), CollaborationStrategy((1,), (0,), ()))
    p = tmp_path / "lp.txt"
    lp.dump(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# standard-form LP rows=10 cols=6"
    assert len(lines) == 3 + 10
    tag, b0, *row = lines[3].split()
    assert tag == lp.row_tags[0] and float(b0) == lp.b[0]
    np.testing.assert_array_equal([float(v) for v in row], lp.A[0])


def test_coefficients_well_scaled():
    lp = build(inst_for(8, seed=1), priority_strategy(inst_for(8, seed=1), 2))
    nz = np.abs(lp.A[lp.A != 0])
    assert nz.max() / nz.min() < 1e8
