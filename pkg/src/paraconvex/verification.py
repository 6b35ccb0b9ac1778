"""Executable checks of the library's mathematical guarantees.

Four families:
  - sandwich: a log-sum-exp net and its weight-identical max-affine twin
    differ by at least 0 and at most T * log I, everywhere.
  - convexity: every bank-based kind is convex in u at fixed x (midpoint
    inequality, sampled).
  - gradients: analytic u-gradients agree with central finite differences
    away from LeakyReLU kinks.
  - envelope: the Moreau-Yosida envelope of a convex function is a pointwise
    under-approximation, monotone in the smoothing weight, converging to the
    function as the weight vanishes.

Every check is a pure function of its seed, so reports are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, UnsupportedNetwork
from .networks import (
    Network,
    forward,
    forward_batch,
    grad_u,
    hidden_preactivations,
    nonsmooth_twin,
)
from .numerics import BoxDomain, Rng, grid_axes
from .training import init_network

SANDWICH_SLACK = 1e-9
CONVEXITY_SLACK = 1e-9
GRADIENT_REL_TOL = 1e-5
ENVELOPE_SLACK = 1e-9
HUBER_SPOT_TOL = 1e-3


@dataclass
class CheckReport:
    name: str
    samples: int
    max_violation: float
    passed: bool
    notes: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "notes": self.notes,
        }


# --- sandwich ---------------------------------------------------------------


def check_sandwich(
    trials: int = 1000,
    dims: tuple = (8, 4),
    I: int = 30,
    T: float = 0.1,
    seed: int = 0,
    points_per_trial: int = 5,
    hidden: tuple = (16, 16),
) -> CheckReport:
    """Random smooth/nonsmooth twin pairs at random dims up to `dims`:
    0 <= smooth - nonsmooth <= T * log I must hold at every sampled (x, u)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = Rng(seed)
    n_max, m_max = dims
    upper = T * np.log(I)
    worst = -np.inf
    for _ in range(trials):
        draws = rng.uniform(2)
        n = 1 + int(draws[0] * n_max)
        m = 1 + int(draws[1] * m_max)
        net_seed = int(rng.next_uint64(1)[0] % (2**31))
        plse = init_network("plse", n, m, seed=net_seed, I=I, T=T, hidden=hidden)
        pma = nonsmooth_twin(plse)
        X = rng.uniform_in(-1.0, 1.0, points_per_trial * n).reshape(-1, n)
        U = rng.uniform_in(-1.0, 1.0, points_per_trial * m).reshape(-1, m)
        gap = forward_batch(plse, X, U) - forward_batch(pma, X, U)
        worst = max(worst, float(np.max(-gap)), float(np.max(gap - upper)))
    return CheckReport(
        name="sandwich",
        samples=trials * points_per_trial,
        max_violation=worst,
        passed=worst <= SANDWICH_SLACK,
        notes=f"I={I} T={T} dims<=({n_max},{m_max}) bound={upper!r}",
    )


# --- convexity ---------------------------------------------------------------

_LAMBDAS = (0.25, 0.5, 0.75)


def convexity_violation(
    fn, n: int, m: int, x_samples: int, u_pairs: int, rng: Rng
) -> tuple[float, int]:
    """Max midpoint-convexity violation of a batch callable fn(X, U) -> (B,).

    Returns (violation, inequalities tested). Positive violation beyond
    slack means fn is not convex in u on [-1,1]^m for some sampled x.
    """
    X = rng.uniform_in(-1.0, 1.0, x_samples * n).reshape(-1, n)
    U1 = rng.uniform_in(-1.0, 1.0, x_samples * u_pairs * m).reshape(-1, m)
    U2 = rng.uniform_in(-1.0, 1.0, x_samples * u_pairs * m).reshape(-1, m)
    X_rep = np.repeat(X, u_pairs, axis=0)
    f1 = fn(X_rep, U1)
    f2 = fn(X_rep, U2)
    worst = -np.inf
    for lam in _LAMBDAS:
        mid = fn(X_rep, lam * U1 + (1.0 - lam) * U2)
        worst = max(worst, float(np.max(mid - lam * f1 - (1.0 - lam) * f2)))
    return worst, x_samples * u_pairs * len(_LAMBDAS)


def check_convexity(
    net: Network, x_samples: int = 100, u_pairs: int = 100, seed: int = 0
) -> CheckReport:
    """Midpoint convexity in u for a bank-based net."""
    if net.kind == "fnn":
        raise UnsupportedNetwork("fnn carries no convexity guarantee to check")
    worst, count = convexity_violation(
        lambda X, U: forward_batch(net, X, U), net.n, net.m, x_samples, u_pairs,
        Rng(seed),
    )
    return CheckReport(
        name=f"convexity:{net.kind}",
        samples=count,
        max_violation=worst,
        passed=worst <= CONVEXITY_SLACK,
        notes=f"n={net.n} m={net.m} I={net.I} lambdas={_LAMBDAS}",
    )


# --- gradients ---------------------------------------------------------------


def _kink_margin(net: Network, x: np.ndarray, u: np.ndarray) -> float:
    """Smallest |pre-activation| across hidden units; only fnn has kinks in u."""
    if net.kind != "fnn":
        return np.inf
    pres = hidden_preactivations(net.mlp, np.concatenate([x, u]))
    return min(float(np.min(np.abs(z))) for z in pres)


def check_gradients(
    kinds=("fnn", "lse", "plse"),
    trials: int = 100,
    seed: int = 0,
    h: float = 1e-4,
    gradient_scale: float = 1.0,
) -> CheckReport:
    """Central finite differences vs grad_u at kink-free random points.

    gradient_scale multiplies the analytic gradient; anything but 1.0 is a
    deliberate corruption so tests can confirm the check actually fails.
    """
    bad = set(kinds) - {"fnn", "lse", "plse"}
    if bad:
        raise UnsupportedNetwork(f"no smooth u-gradient for kinds {sorted(bad)}")
    rng = Rng(seed)
    worst = 0.0
    count = 0
    for kind in kinds:
        for trial in range(trials):
            net_seed = int(rng.next_uint64(1)[0] % (2**31))
            net = init_network(kind, 2, 2, seed=net_seed, I=6, T=0.1, hidden=(8, 8))
            x = rng.uniform_in(-1.0, 1.0, 2)
            u = rng.uniform_in(-1.0, 1.0, 2)
            for _ in range(50):  # stay clear of kinks for the FD stencil
                if _kink_margin(net, x, u) > 100 * h:
                    break
                u = rng.uniform_in(-1.0, 1.0, 2)
            g = gradient_scale * grad_u(net, x, u)
            fd = np.zeros_like(u)
            for j in range(u.shape[0]):
                e = np.zeros_like(u)
                e[j] = h
                fd[j] = (forward(net, x, u + e) - forward(net, x, u - e)) / (2 * h)
            rel = float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
            worst = max(worst, rel)
            count += 1
    return CheckReport(
        name="gradients:" + ",".join(kinds),
        samples=count,
        max_violation=worst,
        passed=worst < GRADIENT_REL_TOL,
        notes=f"h={h!r} central differences",
    )


# --- Moreau-Yosida envelope ---------------------------------------------------


@dataclass
class EnvelopeTable:
    """Envelope of f over a box grid: env[i] = min_j ||node_i - node_j||^2/(2 eta)
    + f(node_j). argmin[i] is the prox point's grid index (first on ties)."""

    eta: float
    nodes: np.ndarray
    f_values: np.ndarray
    envelope: np.ndarray
    argmin: np.ndarray

    def __post_init__(self):
        if np.any(self.envelope > self.f_values + ENVELOPE_SLACK):
            raise ValueError("envelope exceeds the source function on the grid")


def moreau_envelope(
    f,
    domain: BoxDomain,
    eta: float,
    resolution: int,
    vectorized: bool = False,
) -> EnvelopeTable:
    """Grid Moreau-Yosida envelope; dimension capped at 2 (cost is quadratic
    in the node count). With vectorized=True, f maps an (N, dim) array to (N,)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if domain.dim > 2:
        raise DimensionMismatch("envelope grid limited to dimension <= 2")
    axes = grid_axes(domain, resolution)
    if domain.dim == 1:
        nodes = axes[0][:, None]
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
    if vectorized:
        f_vals = np.asarray(f(nodes), dtype=np.float64)
    else:
        f_vals = np.array([float(f(u)) for u in nodes])
    K = nodes.shape[0]
    env = np.empty(K)
    arg = np.empty(K, dtype=np.int64)
    chunk = max(1, int(2**22 // max(K, 1)))  # ~32 MB of float64 per block
    for lo in range(0, K, chunk):
        hi = min(lo + chunk, K)
        d2 = np.sum(
            (nodes[lo:hi, None, :] - nodes[None, :, :]) ** 2, axis=-1
        )
        obj = d2 / (2.0 * eta) + f_vals[None, :]
        arg[lo:hi] = np.argmin(obj, axis=1)
        env[lo:hi] = obj[np.arange(hi - lo), arg[lo:hi]]
    return EnvelopeTable(eta=eta, nodes=nodes, f_values=f_vals, envelope=env,
                         argmin=arg)


def check_envelope_properties(
    f,
    etas,
    domain: BoxDomain,
    resolution: int = 4001,
    vectorized: bool = False,
    name: str = "envelope",
) -> CheckReport:
    """Under-approximation, monotonicity in eta, and sup-gap decrease.

    etas must be strictly decreasing; with a single eta only the
    under-approximation property is testable.
    """
    etas = [float(e) for e in etas]
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be strictly decreasing")
    tables = [moreau_envelope(f, domain, eta, resolution, vectorized) for eta in etas]
    worst = -np.inf
    # (i) below the function
    for t in tables:
        worst = max(worst, float(np.max(t.envelope - t.f_values)))
    # (ii) larger eta smooths further down: env_{eta'} <= env_{eta} for eta' >= eta
    for big, small in zip(tables, tables[1:]):
        worst = max(worst, float(np.max(big.envelope - small.envelope)))
    # (iii) sup-gap shrinks as eta decreases
    gaps = [float(np.max(t.f_values - t.envelope)) for t in tables]
    for wider, tighter in zip(gaps, gaps[1:]):
        worst = max(worst, tighter - wider)
    return CheckReport(
        name=name,
        samples=len(etas) * resolution,
        max_violation=worst,
        passed=worst <= ENVELOPE_SLACK,
        notes=f"etas={etas} sup_gaps={gaps!r}",
    )


def _huber_spot_report(resolution: int = 4001) -> CheckReport:
    """f(u)=|u| with eta=0.5 at u=1 has the closed-form envelope value
    1 - eta/2 = 0.75; the grid value must land within HUBER_SPOT_TOL."""
    domain = BoxDomain.symmetric(1)
    table = moreau_envelope(
        lambda U: np.abs(U[:, 0]), domain, eta=0.5, resolution=resolution,
        vectorized=True,
    )
    at_one = float(table.envelope[-1])  # last node is u = 1.0
    err = abs(at_one - 0.75)
    return CheckReport(
        name="envelope:huber-spot",
        samples=resolution,
        max_violation=err,
        passed=err <= HUBER_SPOT_TOL,
        notes=f"value_at_1={at_one!r} expected=0.75",
    )


# --- suites -------------------------------------------------------------------

SUITES = ("sandwich", "convexity", "gradients", "envelope", "all")


def run_check_suite(suite: str, seed: int = 0) -> list[CheckReport]:
    """The named suite's reports, deterministic in `seed` (no timestamps)."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    reports = []
    if suite in ("sandwich", "all"):
        reports.append(check_sandwich(seed=seed))
    if suite in ("convexity", "all"):
        for offset, kind in enumerate(("ma", "lse", "pma", "plse")):
            net = init_network(kind, 2, 2, seed=seed + 1000 + offset, I=8,
                               T=0.1, hidden=(8, 8))
            reports.append(check_convexity(net, seed=seed + offset))
    if suite in ("gradients", "all"):
        for kind in ("fnn", "lse", "plse"):
            reports.append(check_gradients(kinds=(kind,), seed=seed))
    if suite in ("envelope", "all"):
        domain = BoxDomain.symmetric(1)
        reports.append(
            check_envelope_properties(
                lambda U: U[:, 0] ** 2, (1.0, 0.1, 0.01), domain,
                vectorized=True, name="envelope:quadratic",
            )
        )
        reports.append(
            check_envelope_properties(
                lambda U: np.abs(U[:, 0]), (1.0, 0.1, 0.01), domain,
                vectorized=True, name="envelope:absolute",
            )
        )
        reports.append(_huber_spot_report())
    return reports
