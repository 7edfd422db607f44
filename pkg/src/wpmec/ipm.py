"""Primal-dual barrier interior-point method for  min c'x  s.t. Ax <= b, x >= 0.

The LP is put in slack form A2 x3 = b with A2 = [A | I] and the perturbed KKT
system

    F_mu = (A2 x3 - b,  X Lambda 1 - mu 1,  A2' v + c3 - lambda) = 0

is driven to zero by damped Newton steps while mu decays geometrically. Every
numerical routine accepts arrays with a leading batch axis, so many LPs of the
same shape can be solved in lock-step (``solve_batch``); ``solve`` is the
batch-of-one case.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import SlackFormLp, StandardFormLp, to_slack_form

_SOLVE_COUNT = 0


def solve_count() -> int:
    """Number of LPs solved in this process (batch members count individually)."""
    return _SOLVE_COUNT


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    mu0: float = 100.0
    decay: float = 0.2
    tol: float = 1e-8
    max_iters: int = 200
    tau: float = 0.995            # fraction-to-boundary factor
    armijo_c: float = 1e-4        # Goldstein-style sufficient decrease constant
    backtrack: float = 0.5
    min_step: float = 1e-12
    init_fraction: float = 0.3    # data variables start at this share of their bound
    slack_floor: float = 0.1
    stall_window: int = 25
    regularization: float = 1e-12
    direction_accuracy: float = 1e-3  # back-substitution error that triggers the full-system route
    schedule: str = "guarded"     # "every-iteration" | "guarded" | "per-subproblem"
    route: str = "normal"         # "normal" (block elimination) or "full"
    equilibrate: bool = True
    guard_step: float = 0.5       # "guarded": mu is held after a step shorter than this

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0,1)")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0,1)")
        if self.schedule not in ("every-iteration", "guarded", "per-subproblem"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.route not in ("normal", "full"):
            raise ValueError(f"unknown route {self.route!r}")


@dataclass
class BarrierState:
    x3: np.ndarray
    lam: np.ndarray
    v: np.ndarray
    mu: float
    iter: int = 0


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    residual: float
    mu: float
    wall_time: float
    message: str = ""


@dataclass(frozen=True)
class SolveResult:
    x1: np.ndarray           # original variables in SI units (alpha, bits) when a layout exists
    objective: float         # WSCR (weighted bits) or -c'x for a bare LP
    status: str              # converged | iteration-limit | infeasible | numerical-failure
    stats: SolveStats
    x1_lp: np.ndarray = field(repr=False, default=None)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# -- core numerical routines (batch-agnostic) ---------------------------------

class SlackMatrix:
    """[A1 | I] stored through A1 alone; supports a leading batch axis."""

    def __init__(self, A1):
        self.A1 = A1

    @property
    def shape(self):
        r, n1 = self.A1.shape[-2:]
        return self.A1.shape[:-2] + (r, n1 + r)

    @property
    def ndim(self):
        return self.A1.ndim

    def __getitem__(self, idx):
        return SlackMatrix(self.A1[idx])

    def dense(self):
        r = self.A1.shape[-2]
        eye = np.broadcast_to(np.eye(r), self.A1.shape[:-2] + (r, r))
        return np.concatenate([self.A1, eye], axis=-1)


def _dense(A):
    return A.dense() if isinstance(A, SlackMatrix) else A


def _mv(A, x):
    if isinstance(A, SlackMatrix):
        n1 = A.A1.shape[-1]
        return np.matmul(A.A1, x[..., :n1, None])[..., 0] + x[..., n1:]
    return np.matmul(A, x[..., None])[..., 0]


def _mtv(A, y):
    if isinstance(A, SlackMatrix):
        return np.concatenate([np.matmul(np.swapaxes(A.A1, -1, -2), y[..., None])[..., 0], y], axis=-1)
    return np.matmul(np.swapaxes(A, -1, -2), y[..., None])[..., 0]


def _abs_mv(A, x):
    if isinstance(A, SlackMatrix):
        return _mv(SlackMatrix(np.abs(A.A1)), x)
    return _mv(np.abs(A), x)


def _normal_matrix(A, D):
    """A diag(D) A'."""
    if isinstance(A, SlackMatrix):
        n1 = A.A1.shape[-1]
        M = np.matmul(A.A1 * D[..., None, :n1], np.swapaxes(A.A1, -1, -2))
        i = np.arange(M.shape[-1])
        M[..., i, i] += D[..., n1:]
        return M
    return np.matmul(A * D[..., None, :], np.swapaxes(A, -1, -2))


def kkt_residual(A2, b, c3, x, lam, v, mu):
    mu = np.asarray(mu)[..., None] if np.ndim(mu) else mu
    g1 = _mv(A2, x) - b
    g2 = x * lam - mu
    g3 = _mtv(A2, v) + c3 - lam
    return g1, g2, g3


def residual(state: BarrierState, lp: SlackFormLp):
    """(gamma1, gamma2, gamma3) at a state."""
    return kkt_residual(lp.A2, lp.b, lp.c3, state.x3, state.lam, state.v, state.mu)


def residual_metric(g1, g2, g3):
    """Largest absolute component of the residual vector."""
    return np.maximum(np.maximum(np.abs(g1).max(-1), np.abs(g2).max(-1)), np.abs(g3).max(-1))


def residual_norm(g1, g2, g3):
    return np.sqrt((g1 * g1).sum(-1) + (g2 * g2).sum(-1) + (g3 * g3).sum(-1))


def kkt_jacobian(A2, x, lam):
    """Full Jacobian of F_mu w.r.t. (lambda, v, x3); batched along leading axes."""
    r, n = A2.shape[-2:]
    lead = A2.shape[:-2]
    J = np.zeros(lead + (2 * n + r, 2 * n + r))
    ii = np.arange(n)
    J[..., :r, n + r:] = A2
    J[..., r + ii, ii] = x
    J[..., r + ii, n + r + ii] = lam
    J[..., r + n + ii, ii] = -1.0
    J[..., r + n:, n:n + r] = np.swapaxes(A2, -1, -2)
    return J


def _solve_reg(M, rhs, reg):
    try:
        sol = np.linalg.solve(M, rhs[..., None])[..., 0]
        if np.all(np.isfinite(sol)):
            return sol
    except np.linalg.LinAlgError:
        pass
    d = np.abs(np.diagonal(M, axis1=-2, axis2=-1)).max(-1)
    eye = np.eye(M.shape[-1])
    Mr = M + (reg * np.maximum(d, 1.0))[..., None, None] * eye
    try:
        sol = np.linalg.solve(Mr, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Newton system singular (cond={np.linalg.cond(M).max():.3g})") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalFailure(f"Newton system ill-conditioned (cond={np.linalg.cond(M).max():.3g})")
    return sol


def newton_step(A2, x, lam, g1, g2, g3, reg=1e-12, route="normal", accuracy=1e-10):
    """Solve [[0,0,A2],[X,0,L],[-I,A2',0]] (dl, dv, dx) = -(g1, g2, g3).

    The normal route eliminates dl = A2' dv + g3 and dx = -(g2 + X dl)/lam,
    leaving (A2 D A2') dv = g1 - A2 (g2 + X g3)/lam with D = X/lam.
    """
    if route == "full":
        return _newton_full(A2, x, lam, g1, g2, g3, reg)
    D = x / lam
    M = _normal_matrix(A2, D)
    rhs = g1 - _mv(A2, (g2 + x * g3) / lam)
    dv = _solve_reg(M, rhs, reg)
    dl = _mtv(A2, dv) + g3
    dx = -(g2 + x * dl) / lam
    # rows 2 and 3 hold by construction; check row 1 and redo inaccurate
    # directions on the unreduced system (normal equations square the conditioning)
    err = np.abs(_mv(A2, dx) + g1).max(-1)
    scale = np.abs(_abs_mv(A2, np.abs(dx))).max(-1) + np.abs(g1).max(-1) + 1e-300
    bad = ~(err <= accuracy * scale)
    if np.any(bad):
        if A2.ndim == 2:
            return _newton_full(A2, x, lam, g1, g2, g3, reg)
        k = np.flatnonzero(bad)
        dl[k], dv[k], dx[k] = _newton_full(A2[k], x[k], lam[k], g1[k], g2[k], g3[k], reg)
    return dl, dv, dx


def _newton_full(A2, x, lam, g1, g2, g3, reg):
    A2 = _dense(A2)
    r, n = A2.shape[-2:]
    J = kkt_jacobian(A2, x, lam)
    sol = _solve_reg(J, -np.concatenate([g1, g2, g3], axis=-1), reg)
    return sol[..., :n], sol[..., n:n + r], sol[..., n + r:]


def newton_direction(state: BarrierState, lp: SlackFormLp, route="normal"):
    """(dlambda, dv, dx3) for a single state."""
    g = residual(state, lp)
    return newton_step(lp.A2, state.x3, state.lam, *g, route=route)


def boundary_step(x, dx, lam, dl, tau):
    """Largest beta <= 1 keeping x + beta dx >= (1 - tau) x, same for lambda."""
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.where(dx < 0, -x / dx, np.inf).min(-1)
        rl = np.where(dl < 0, -lam / dl, np.inf).min(-1)
    return np.minimum(1.0, tau * np.minimum(rx, rl))


def step_length(state: BarrierState, direction, lp: SlackFormLp, options: SolverOptions | None = None) -> float:
    """Fraction-to-boundary cap, then backtracking until
    ||F(z + beta d)|| <= (1 - c beta) ||F(z)||."""
    o = options or SolverOptions()
    dl, dv, dx = direction
    beta = float(boundary_step(state.x3, dx, state.lam, dl, o.tau))
    f0 = residual_norm(*residual(state, lp))
    while beta >= o.min_step:
        g = kkt_residual(lp.A2, lp.b, lp.c3, state.x3 + beta * dx, state.lam + beta * dl,
                         state.v + beta * dv, state.mu)
        if residual_norm(*g) <= (1 - o.armijo_c * beta) * f0:
            return beta
        beta *= o.backtrack
    raise NumericalFailure("step length underflow")


# -- initialization ------------------------------------------------------------

def _equilibrate(A, b):
    s = np.abs(A).max(-1)
    s[s == 0] = 1.0
    return A / s[..., None], b / s


def initial_point(A, b, has_alphas: bool, options: SolverOptions):
    """Primal start for the inequality form; slacks are clipped to a floor.

    Alphas start at (0.5, 0.25); every other variable at ``init_fraction`` of
    the largest value its rows allow on its own.
    """
    n = A.shape[-1]
    x = np.zeros(A.shape[:-2] + (n,))
    start = 0
    if has_alphas:
        x[..., 0], x[..., 1] = 0.5, 0.25
        start = 2
    base = b - _mv(A[..., :, :start], x[..., :start])
    ok = (A[..., :, start:] > 0) & (base[..., :, None] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ok, base[..., :, None] / A[..., :, start:], np.inf).min(-2)
    x[..., start:] = options.init_fraction * np.where(np.isfinite(ratio), ratio, 1.0)
    x2 = np.maximum(b - _mv(A, x), options.slack_floor)
    return x, x2


def variable_bounds(A, b):
    """Upper bounds U on x implied by Ax <= b, x >= 0 (inf when none is found).

    A row bounds x_j when every other coefficient is >= 0 or belongs to a
    column that is already bounded; two sweeps cover the LP structure.
    """
    U = np.full(A.shape[:-2] + (A.shape[-1],), np.inf)
    neg = np.minimum(A, 0.0)
    for _ in range(2):
        fin = np.isfinite(U)
        extra = -_mv(neg, np.where(fin, U, 0.0))
        unb = ((A < 0) & ~fin[..., None, :]).sum(-1)
        ok = (A > 0) & (unb == 0)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ok, (b + extra)[..., :, None] / A, np.inf).min(-2)
        U = np.minimum(U, ratio)
    return U


def farkas_infeasible(A, b, U, v, margin=1e-9):
    """True where y = max(v, 0) proves {Ax <= b, 0 <= x <= U} empty.

    For feasible x, y'Ax <= y'b while y'Ax >= sum_j min((A'y)_j, 0) U_j.
    """
    y = np.maximum(v, 0.0)
    z = _mtv(A, y)
    with np.errstate(invalid="ignore"):
        low = np.where(z < 0, z * U, 0.0).sum(-1)
        mag = (np.abs(b) * y).sum(-1) + np.where(z < 0, -z * U, 0.0).sum(-1)
    by = (b * y).sum(-1)
    return np.isfinite(low) & (low - by > margin * mag) & (mag > 0)


# -- driver --------------------------------------------------------------------

def _lp_arrays(lp):
    if isinstance(lp, StandardFormLp):
        return np.asarray(lp.A, float), np.asarray(lp.b, float), np.asarray(lp.c, float), lp.layout is not None
    c, A, b = lp
    return np.asarray(A, float), np.asarray(b, float), np.asarray(c, float), False


def bare_lp(c, A, b) -> StandardFormLp:
    """Wrap a plain (c, A, b) triple; objective is reported as -c'x."""
    return StandardFormLp(np.asarray(c, float), np.asarray(A, float), np.asarray(b, float), None, ())


def solve(lp, options: SolverOptions | None = None, trace=None) -> SolveResult:
    """Solve one LP. ``trace`` may be a path or a list collecting per-iteration rows."""
    return solve_batch([lp], options, trace=trace)[0]


def solve_batch(lps, options: SolverOptions | None = None, trace=None) -> list:
    """Solve same-shape LPs in lock-step; results are independent per LP."""
    global _SOLVE_COUNT
    o = options or SolverOptions()
    lps = list(lps)
    if not lps:
        return []
    t0 = time.perf_counter()
    arrs = [_lp_arrays(lp) for lp in lps]
    shapes = {a[0].shape for a in arrs}
    if len(shapes) != 1:
        raise ValueError(f"solve_batch needs same-shape LPs, got {sorted(shapes)}")
    B = len(lps)
    r, n1 = arrs[0][0].shape
    n = n1 + r
    c3 = np.zeros((B, n))
    x = np.empty((B, n))
    A1 = np.stack([a[0] for a in arrs])
    bb = np.stack([a[1] for a in arrs])
    c3[:, :n1] = np.stack([a[2] for a in arrs])
    has_alpha = arrs[0][3]
    if o.equilibrate:
        A1, bb = _equilibrate(A1, bb)
    A2 = SlackMatrix(A1)
    U = variable_bounds(A1, bb)
    x[:, :n1], x[:, n1:] = initial_point(A1, bb, has_alpha, o)
    lam = o.mu0 / x
    v = np.zeros((B, r))
    mu = np.full(B, o.mu0)

    status = np.array(["iteration-limit"] * B, dtype=object)
    message = [""] * B
    iters = np.zeros(B, dtype=int)
    final_res = np.full(B, np.inf)
    active = np.ones(B, dtype=bool)
    g1_hist = [[] for _ in range(B)]
    rows = [] if trace is not None else None

    for k in range(o.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ai, bi, ci = A2[idx], bb[idx], c3[idx]
        xi, li, vi, mi = x[idx], lam[idx], v[idx], mu[idx]
        g1, g2, g3 = kkt_residual(Ai, bi, ci, xi, li, vi, mi)
        metric = residual_metric(g1, g2, g3)
        final_res[idx] = metric
        g1n = np.abs(g1).max(-1)
        done = (metric <= o.tol) & (mi <= o.tol)
        stalled = ~done & farkas_infeasible(A1[idx], bi, U[idx], vi)
        for j in np.flatnonzero(stalled):
            message[idx[j]] = "dual ray certifies infeasibility; l_th likely unattainable"
        for j, i in enumerate(idx):
            h = g1_hist[i]
            h.append(g1n[j])
            w = o.stall_window
            if not done[j] and len(h) > w and h[-1] > o.tol and h[-1] > 0.99 * h[-1 - w]:
                stalled[j] = True
                message[i] = (f"primal residual stalled at {g1n[j]:.3g} over {w} "
                              "iterations; l_th likely unattainable")
        for j, i in enumerate(idx):
            if done[j]:
                status[i] = "converged"
            elif stalled[j]:
                status[i] = "infeasible"
        stop = done | stalled
        if k == o.max_iters:
            stop[:] = True
        if rows is not None and idx[0] == 0:
            obj = -(ci[0, :n1] @ xi[0, :n1])
            rows.append((k, float(mi[0]), float(metric[0]), np.nan, float(obj)))
        active[idx[stop]] = False
        keep = ~stop
        if not keep.any():
            break
        idx = idx[keep]
        Ai, bi, ci = Ai[keep], bi[keep], ci[keep]
        xi, li, vi, mi = xi[keep], li[keep], vi[keep], mi[keep]
        g1, g2, g3 = g1[keep], g2[keep], g3[keep]
        try:
            dl, dv, dx = newton_step(Ai, xi, li, g1, g2, g3, o.regularization, o.route, o.direction_accuracy)
        except NumericalFailure as exc:
            dl, dv, dx, bad = _per_problem_directions(Ai, xi, li, g1, g2, g3, o)
            for j in np.flatnonzero(bad):
                status[idx[j]] = "numerical-failure"
                message[idx[j]] = str(exc)
                active[idx[j]] = False
        beta = boundary_step(xi, dx, li, dl, o.tau)
        f0 = residual_norm(g1, g2, g3)
        pending = np.isfinite(beta) & active[idx]
        accepted = np.zeros(idx.size, dtype=bool)
        while pending.any():
            p = np.flatnonzero(pending)
            bp = beta[p][:, None]
            gt = kkt_residual(Ai[p], bi[p], ci[p], xi[p] + bp * dx[p], li[p] + bp * dl[p],
                              vi[p] + bp * dv[p], mi[p])
            ok = residual_norm(*gt) <= (1 - o.armijo_c * beta[p]) * f0[p]
            accepted[p[ok]] = True
            pending[p[ok]] = False
            rej = p[~ok]
            beta[rej] *= o.backtrack
            small = rej[beta[rej] < o.min_step]
            pending[small] = False
        # roundoff-limited steps near a degenerate optimum: accept the
        # boundary-capped step when it does not worsen the max-abs residual
        retry = np.flatnonzero(~accepted & active[idx])
        if retry.size:
            b0 = boundary_step(xi[retry], dx[retry], li[retry], dl[retry], o.tau)
            bp = b0[:, None]
            gt = kkt_residual(Ai[retry], bi[retry], ci[retry], xi[retry] + bp * dx[retry],
                              li[retry] + bp * dl[retry], vi[retry] + bp * dv[retry], mi[retry])
            ok = residual_metric(*gt) <= metric[keep][retry]
            beta[retry[ok]] = b0[ok]
            accepted[retry[ok]] = True
        for j in np.flatnonzero(~accepted & active[idx]):
            status[idx[j]] = "numerical-failure"
            message[idx[j]] = "step length underflow"
            active[idx[j]] = False
        acc = np.flatnonzero(accepted)
        ia = idx[acc]
        ba = beta[acc][:, None]
        x[ia] = xi[acc] + ba * dx[acc]
        lam[ia] = li[acc] + ba * dl[acc]
        v[ia] = vi[acc] + ba * dv[acc]
        iters[ia] += 1
        if o.schedule == "every-iteration":
            mu[ia] *= o.decay
        elif o.schedule == "guarded":
            # hold mu after a short step so the iterate can recentre
            mu[ia] = np.where(beta[acc] >= o.guard_step, mu[ia] * o.decay, mu[ia])
        else:
            g1n, g2n, g3n = kkt_residual(A2[ia], bb[ia], c3[ia], x[ia], lam[ia], v[ia], mu[ia])
            inner = residual_metric(g1n, g2n, g3n) <= np.maximum(o.tol, mu[ia])
            mu[ia] = np.where(inner, mu[ia] * o.decay, mu[ia])
        if rows is not None and acc.size and ia[0] == 0:
            rows[-1] = rows[-1][:3] + (float(beta[acc][0]),) + rows[-1][4:]

    wall = time.perf_counter() - t0
    _SOLVE_COUNT += B
    if trace is not None:
        _emit_trace(trace, rows)
    out = []
    for i, lp in enumerate(lps):
        xl = x[i, :n1].copy()
        layout = getattr(lp, "layout", None)
        if layout is not None:
            xs = xl * layout.column_scale
            obj = float(-(c3[i, :n1] @ xl) * layout.bit_scale)
        else:
            xs = xl
            obj = float(-(c3[i, :n1] @ xl))
        if status[i] != "converged":
            obj = float("nan")
        st = SolveStats(int(iters[i]), float(final_res[i]), float(mu[i]), wall / B, message[i])
        out.append(SolveResult(xs, obj, str(status[i]), st, xl))
    return out


def _per_problem_directions(A2, x, lam, g1, g2, g3, o):
    B = A2.shape[0]
    dl, dv, dx = np.zeros_like(x), np.zeros_like(g1), np.zeros_like(x)
    bad = np.zeros(B, dtype=bool)
    for i in range(B):
        try:
            dl[i], dv[i], dx[i] = newton_step(A2[i], x[i], lam[i], g1[i], g2[i], g3[i],
                                              o.regularization, o.route, o.direction_accuracy)
        except NumericalFailure:
            bad[i] = True
    return dl, dv, dx, bad


def _emit_trace(trace, rows):
    header = ("iter", "mu", "residual", "beta", "objective")
    if isinstance(trace, list):
        trace.extend(dict(zip(header, r)) for r in rows)
        return
    with open(trace, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
