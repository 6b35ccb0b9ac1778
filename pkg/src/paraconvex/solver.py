"""Box-constrained minimization over the decision u at a fixed condition x.

Three routes:
  - lse/plse: projected gradient with Armijo backtracking on the smooth
    convex objective.
  - ma/pma: smoothing homotopy: solve the weight-identical log-sum-exp twin
    along a decreasing temperature schedule with warm starts. The final
    certificate adds T_final * log I to the smooth gap, which is sound
    because the twin sandwiches the piecewise-linear objective within
    T * log I everywhere.
  - fnn: multi-start projected gradient (nonconvex, no certificate).

Convex certificates use the first-order gap at the returned point: for a
convex f and any feasible v, f(u) - f(v) <= <g, u - v>, so
max_v <g, u - v> over the box (a per-coordinate corner choice) upper-bounds
the suboptimality. No oracle or dual solve is needed, and the bound is valid
in any dimension.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, NumericOverflow, UnsupportedNetwork
from .networks import (
    Network,
    forward,
    forward_batch,
    grad_u_batch,
    shifted_lse,
    softmax_over_T,
    u_bank,
)
from .numerics import BoxDomain, Rng, sample_uniform_box

_MIN_STEP = 1e-18


@dataclass
class SolveOptions:
    max_iters: int = 500
    grad_tolerance: float = 1e-6
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    homotopy_schedule: tuple = (0.1, 0.01, 1e-3, 1e-4)
    restarts: int = 16
    seed: int = 0
    keep_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tolerance > 0:
            raise ValueError("grad_tolerance must be positive")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not (0.0 < self.armijo < 1.0):
            raise ValueError("armijo constant must lie in (0, 1)")
        sched = tuple(float(t) for t in self.homotopy_schedule)
        if not sched or any(t <= 0 for t in sched):
            raise ValueError("homotopy schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("homotopy schedule must be strictly decreasing")
        self.homotopy_schedule = sched
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class SolveResult:
    u_star: np.ndarray
    value: float
    certificate: float
    iterations: int
    wall_time_s: float
    trace: list | None = None

    def to_json(self) -> dict:
        certified = np.isfinite(self.certificate)
        return {
            "u_star": [float(v) for v in self.u_star],
            "value": self.value,
            "certificate": self.certificate if certified else None,
            "certified": bool(certified),
            "iterations": self.iterations,
            "wall_time_s": self.wall_time_s,
        }


def project_box(u: np.ndarray, domain: BoxDomain) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (domain.dim,):
        raise DimensionMismatch(f"point has shape {u.shape}, box has dim {domain.dim}")
    return np.clip(u, domain.lower, domain.upper)


def first_order_gap(g: np.ndarray, u: np.ndarray, domain: BoxDomain) -> float:
    """max over feasible v of <g, u - v>: per-coordinate corner maximization.
    Nonnegative, and an upper bound on f(u) - min f for convex f."""
    terms = np.maximum(g * (u - domain.lower), g * (u - domain.upper))
    return float(np.sum(np.maximum(terms, 0.0)))


def _pg_on_bank(A_u, c, T, domain, u0, opts):
    """Projected gradient with Armijo backtracking on the log-sum-exp of an
    affine bank. Returns (u, value, iterations, trace)."""

    def value(u):
        v = float(shifted_lse(A_u @ u + c, T))
        if not np.isfinite(v):
            raise NumericOverflow("objective became non-finite during line search")
        return v

    def grad(u):
        return A_u.T @ softmax_over_T(A_u @ u + c, T)

    u = project_box(u0, domain)
    f = value(u)
    trace = [f] if opts.keep_trace else None
    s = opts.initial_step
    iters = 0
    for _ in range(opts.max_iters):
        g = grad(u)
        # stationarity at a fixed unit reference step; the line-search step
        # itself may grow arbitrarily large on flat objectives, which would
        # make a step-relative residual meaningless
        residual = np.linalg.norm(u - project_box(u - g, domain))
        if residual <= opts.grad_tolerance * max(1.0, abs(f)):
            break
        accepted = False
        while s >= _MIN_STEP:
            cand = project_box(u - s * g, domain)
            f_cand = value(cand)
            if f_cand <= f + opts.armijo * float(g @ (cand - u)):
                accepted = True
                break
            s *= opts.backtrack
        if not accepted:
            break  # flat to numeric precision
        iters += 1
        u, f = cand, f_cand
        if trace is not None:
            trace.append(f)
        s *= 2.0  # Armijo will cut an overgrown step right back
    return u, f, iters, trace


def minimize_smooth_convex(
    net: Network, x: np.ndarray, domain: BoxDomain, opts: SolveOptions | None = None
) -> SolveResult:
    """Minimize an lse/plse net over u in the box at fixed x."""
    if net.kind not in ("lse", "plse"):
        raise UnsupportedNetwork(f"smooth solver requires lse or plse, got {net.kind}")
    if domain.dim != net.m:
        raise DimensionMismatch("domain dimension must equal the net's m")
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    A_u, c = u_bank(net, x)
    u0 = 0.5 * (domain.lower + domain.upper)
    u, _, iters, trace = _pg_on_bank(A_u, c, net.T, domain, u0, opts)
    g = A_u.T @ softmax_over_T(A_u @ u + c, net.T)
    cert = first_order_gap(g, u, domain)
    return SolveResult(
        u_star=u,
        value=forward(net, x, u),
        certificate=cert,
        iterations=iters,
        wall_time_s=time.perf_counter() - t0,
        trace=trace,
    )


def minimize_pma(
    net: Network, x: np.ndarray, domain: BoxDomain, opts: SolveOptions | None = None
) -> SolveResult:
    """Minimize an ma/pma net over u by temperature homotopy on its smooth twin."""
    if net.kind not in ("ma", "pma"):
        raise UnsupportedNetwork(f"homotopy solver requires ma or pma, got {net.kind}")
    if domain.dim != net.m:
        raise DimensionMismatch("domain dimension must equal the net's m")
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    A_u, c = u_bank(net, x)  # the twin shares the bank; T enters only the smoothing
    u = 0.5 * (domain.lower + domain.upper)
    total_iters = 0
    trace = [] if opts.keep_trace else None
    for T in opts.homotopy_schedule:
        u, _, iters, stage_trace = _pg_on_bank(A_u, c, T, domain, u, opts)
        total_iters += iters
        if trace is not None:
            trace.extend(stage_trace)
    T_final = opts.homotopy_schedule[-1]
    g = A_u.T @ softmax_over_T(A_u @ u + c, T_final)
    smooth_gap = first_order_gap(g, u, domain)
    cert = smooth_gap + T_final * np.log(net.I)
    return SolveResult(
        u_star=u,
        value=forward(net, x, u),
        certificate=cert,
        iterations=total_iters,
        wall_time_s=time.perf_counter() - t0,
        trace=trace,
    )


def minimize_fnn(
    net: Network, x: np.ndarray, domain: BoxDomain, opts: SolveOptions | None = None
) -> SolveResult:
    """Best of `restarts` projected-gradient runs from seeded uniform starts.

    The restarts advance in lockstep: each sweep takes one Armijo-tested step
    per restart, halving that restart's step on rejection. Iterates only move
    on accepted decrease, so every restart descends monotonically. The
    certificate is +inf: the objective is nonconvex and carries no bound.
    """
    if net.kind != "fnn":
        raise UnsupportedNetwork(f"multi-start solver is for fnn, got {net.kind}")
    if domain.dim != net.m:
        raise DimensionMismatch("domain dimension must equal the net's m")
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    R = opts.restarts
    Us = sample_uniform_box(domain, R, Rng(opts.seed))
    X_rep = np.tile(np.asarray(x, dtype=np.float64), (R, 1))
    fs = forward_batch(net, X_rep, Us)
    steps = np.full(R, opts.initial_step)
    done = np.zeros(R, dtype=bool)
    trace = [float(fs.min())] if opts.keep_trace else None
    sweeps = 0
    for _ in range(opts.max_iters):
        sweeps += 1
        G = grad_u_batch(net, X_rep, Us)
        ref = np.clip(Us - G, domain.lower, domain.upper)  # unit reference step
        residual = np.linalg.norm(Us - ref, axis=1)
        done |= residual <= opts.grad_tolerance * np.maximum(1.0, np.abs(fs))
        cand = np.clip(Us - steps[:, None] * G, domain.lower, domain.upper)
        f_cand = forward_batch(net, X_rep, cand)
        decrease = f_cand <= fs + opts.armijo * np.sum(G * (cand - Us), axis=1)
        move = decrease & ~done
        Us[move] = cand[move]
        fs[move] = f_cand[move]
        steps[move] *= 2.0
        steps[~decrease & ~done] *= opts.backtrack
        done |= steps < _MIN_STEP
        if trace is not None:
            trace.append(float(fs.min()))
        if done.all():
            break
    best = int(np.argmin(fs))
    u = Us[best]
    return SolveResult(
        u_star=u,
        value=forward(net, x, u),
        certificate=np.inf,
        iterations=sweeps,
        wall_time_s=time.perf_counter() - t0,
        trace=trace,
    )


def minimize(
    net: Network, x: np.ndarray, domain: BoxDomain, opts: SolveOptions | None = None
) -> SolveResult:
    """Dispatch to the solver matching the net's kind."""
    if net.kind in ("lse", "plse"):
        return minimize_smooth_convex(net, x, domain, opts)
    if net.kind in ("ma", "pma"):
        return minimize_pma(net, x, domain, opts)
    return minimize_fnn(net, x, domain, opts)
