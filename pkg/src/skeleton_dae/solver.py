"""Solvers for ``B x' = x + f(t)`` with singular ``B``.

Regular chains: the reduced problem ``B^p y' = y + M f``, ``y(0) = c0`` is
integrated with fixed-step RK4 and ``x`` is recovered by back-substitution
through the chain.  Degenerate chains: ``x`` is a finite combination of
derivatives of ``f`` and is computed without integration.

Back-substitution needs derivatives of the reduced solution up to order
``p + 1``.  They come from the algebraic recurrence
``y^(k+1) = (B^p)^-1 (y^(k) + (M f)^(k))``, never from differencing samples.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .chain import ChainKind, SkeletonChain, build_chain, build_projector
from .errors import (
    ChainMismatchError,
    ChainNotRegularError,
    NonFiniteError,
    NotNilpotentError,
    StepTooCoarseError,
)
from .linalg import DEFAULT_TOL
from .signals import Signal

log = logging.getLogger(__name__)

DEFAULT_INTEGRATION_TOL = 1e-8
HYPERPLANE_TOL = 1e-10
STABILITY_MARGIN = 1e-9


def time_grid(t_end: float, step: float) -> np.ndarray:
    """Uniform grid on ``[0, t_end]`` whose spacing is the largest value ``<= step``
    that divides ``t_end`` evenly."""
    if not (t_end > 0 and step > 0 and step <= t_end):
        raise ValueError(f"need 0 < step <= t_end, got step={step}, t_end={t_end}")
    n = max(1, math.ceil(t_end / step - 1e-9))
    return np.linspace(0.0, t_end, n + 1)


def _check_forcing(b, f):
    if f.dim != b.shape[0]:
        raise ValueError(f"forcing has dim {f.dim}, B is {b.shape[0]}x{b.shape[1]}")


@dataclass(frozen=True)
class RegularizedIVP:
    """``B x' = x + f`` with the hyperplane condition ``M x(0) = c0``."""

    b: np.ndarray
    f: Signal
    c0: np.ndarray
    t_end: float = 1.0
    step: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "b", linalg.as_matrix(self.b, "B"))
        object.__setattr__(self, "c0", linalg.as_vector(self.c0, "c0"))
        _check_forcing(self.b, self.f)
        time_grid(self.t_end, self.step)


@dataclass(frozen=True)
class DegenerateProblem:
    b: np.ndarray
    f: Signal
    t_end: float = 1.0
    step: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "b", linalg.as_matrix(self.b, "B"))
        _check_forcing(self.b, self.f)
        time_grid(self.t_end, self.step)


@dataclass
class Trajectory:
    """Sampled solution.

    ``derivatives`` holds the analytic ``x'(t_k)`` (not differenced samples);
    ``level_states[i - 1]`` is the reduced variable ``x_i = A_{2i} ... A_2 x``.
    """

    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray | None = None
    level_states: list[np.ndarray] | None = None
    residual_max: float = float("nan")
    hyperplane_defect: float | None = None
    error_estimate: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.states)):
            raise NonFiniteError("trajectory states are not finite")


def residual_norm(b, traj: Trajectory, f) -> float:
    """``max_k ||B x'(t_k) - x(t_k) - f(t_k)||_inf``.

    Uses the analytic derivatives carried by the trajectory; falls back to
    second-order differences of the samples when there are none.
    """
    b = np.asarray(b, dtype=np.float64)
    deriv = traj.derivatives
    if deriv is None:
        deriv = np.gradient(traj.states, traj.times, axis=0, edge_order=2)
    r = deriv @ b.T - traj.states - f.evaluate(traj.times, 0)
    return float(np.max(np.abs(r))) if r.size else 0.0


def _require_chain(b, chain, kind):
    if chain is None:
        chain = build_chain(b)
    elif not chain.matches(b):
        raise ChainMismatchError("chain was not built from this problem's B")
    if chain.kind is not kind:
        raise ChainMismatchError(f"expected a {kind} chain, got {chain.kind}")
    return chain


def _back_substitute(chain: SkeletonChain, top: list[np.ndarray], f_derivs: list[np.ndarray]):
    """Recover ``x_0`` and its first derivative from the terminal level.

    ``top[k]`` is ``x_p^(k)`` sampled on the grid for ``k = 0..p+1`` and
    ``f_derivs[k]`` is ``f^(k)``.  Uses ``x_i^(k) = -G_i f^(k) + A_{2i+1} x_{i+1}^(k+1)``.
    Returns ``(x, x', [x_1, ..., x_p])``.
    """
    proj = chain.partial_projectors()
    p = chain.p
    current = top
    levels = [top[0]] if p else []
    for i in range(p - 1, -1, -1):
        a_odd = chain.levels[i].a_odd
        g = proj[i]
        current = [-(f_derivs[k] @ g.T) + current[k + 1] @ a_odd.T for k in range(i + 2)]
        if i:
            levels.append(current[0])
    levels.reverse()
    return current[0], current[1], levels


def _rk4_affine(k_mat, g_nodes, y0, h):
    """Classical RK4 for ``y' = K (y + g(t))`` on a uniform grid.

    ``g_nodes`` samples ``g`` at spacing ``h / 2`` (``2N + 1`` rows for ``N``
    steps).  The method is linear in ``y``, so each step is ``y <- P y + q_n``
    with ``P`` the RK4 stability polynomial of ``hK`` and the ``q_n``
    computed for all steps at once; the arithmetic is that of the usual
    four-stage scheme.
    """
    r = k_mat.shape[0]
    g0, gh, g1 = g_nodes[:-1:2], g_nodes[1::2], g_nodes[2::2]
    kt = k_mat.T

    def stages(y, a, b, c):
        k1 = (y + a) @ kt
        k2 = (y + 0.5 * h * k1 + b) @ kt
        k3 = (y + 0.5 * h * k2 + b) @ kt
        k4 = (y + h * k3 + c) @ kt
        return h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    zeros = np.zeros((1, r))
    # P^T acting on row vectors
    pt = np.eye(r) + stages(np.eye(r), zeros, zeros, zeros)
    q = stages(np.zeros_like(g0), g0, gh, g1)

    out = np.empty((g0.shape[0] + 1, r))
    y = np.asarray(y0, dtype=np.float64)
    out[0] = y
    for n in range(g0.shape[0]):
        y = y @ pt + q[n]
        out[n + 1] = y
    return out


def integrate_reduced(k_mat, forcing, y0, times, tol=DEFAULT_INTEGRATION_TOL):
    """Integrate ``y' = K (y + g(t))`` with RK4 at the grid step and at half step.

    Returns the half-step solution sampled on ``times`` together with the
    Richardson estimate ``max |y_h - y_{h/2}| / 15``.  Raises
    :class:`StepTooCoarseError` when the estimate exceeds
    ``tol * (1 + max |y|)``.
    """
    n = times.size - 1
    h = times[-1] / n
    quarter = np.linspace(0.0, times[-1], 4 * n + 1)
    g = forcing(quarter)
    coarse = _rk4_affine(k_mat, g[::2], y0, h)
    fine = _rk4_affine(k_mat, g, y0, h / 2.0)[::2]
    estimate = float(np.max(np.abs(coarse - fine))) / 15.0 if fine.size else 0.0
    bound = tol * (1.0 + (float(np.max(np.abs(fine))) if fine.size else 0.0))
    if not np.all(np.isfinite(fine)) or estimate > bound:
        raise StepTooCoarseError(estimate, bound)
    return fine, estimate


def solve_regular(
    ivp: RegularizedIVP,
    chain: SkeletonChain | None = None,
    int_tol: float = DEFAULT_INTEGRATION_TOL,
) -> Trajectory:
    """Solve ``B x' = x + f``, ``M x(0) = c0`` for a regular chain."""
    chain = _require_chain(ivp.b, chain, ChainKind.REGULAR)
    p = chain.p
    terminal = chain.terminal
    if ivp.c0.size != terminal.shape[0]:
        raise ChainMismatchError(f"c0 has dim {ivp.c0.size}, terminal space has dim {terminal.shape[0]}")
    k_mat = linalg.inverse(terminal, chain.tol)
    proj_p = build_projector(chain)
    times = time_grid(ivp.t_end, ivp.step)

    def reduced_forcing(t):
        return ivp.f.evaluate(t, 0) @ proj_p.T

    y, estimate = integrate_reduced(k_mat, reduced_forcing, ivp.c0, times, int_tol)

    f_derivs = [ivp.f.evaluate(times, k) for k in range(p + 2)]
    top = [y]
    for k in range(p + 1):
        top.append((top[k] + f_derivs[k] @ proj_p.T) @ k_mat.T)

    x, dx, levels = _back_substitute(chain, top, f_derivs)
    traj = Trajectory(times, x, dx, levels, error_estimate=estimate, info={"kind": "regular", "p": p})
    traj.residual_max = residual_norm(ivp.b, traj, ivp.f)
    traj.hyperplane_defect = float(np.max(np.abs(proj_p @ x[0] - ivp.c0))) if ivp.c0.size else 0.0
    if traj.hyperplane_defect > HYPERPLANE_TOL * (1.0 + float(np.max(np.abs(ivp.c0), initial=0.0))):
        warnings.warn(f"hyperplane defect {traj.hyperplane_defect:.3e} above {HYPERPLANE_TOL:g}", RuntimeWarning)
    log.debug("regular solve p=%d residual=%.3e estimate=%.3e", p, traj.residual_max, estimate)
    return traj


def solve_degenerate(prob: DegenerateProblem, chain: SkeletonChain | None = None) -> Trajectory:
    """Closed-form solution for a degenerate (nilpotent) chain; no initial data."""
    chain = _require_chain(prob.b, chain, ChainKind.DEGENERATE)
    p = chain.p
    proj_p = build_projector(chain)
    times = time_grid(prob.t_end, prob.step)
    f_derivs = [prob.f.evaluate(times, k) for k in range(p + 2)]
    top = [-(fk @ proj_p.T) for fk in f_derivs]
    x, dx, levels = _back_substitute(chain, top, f_derivs)
    traj = Trajectory(times, x, dx, levels, info={"kind": "degenerate", "p": p})
    traj.residual_max = residual_norm(prob.b, traj, prob.f)
    return traj


def solve(b, f, c0=None, t_end=1.0, step=1e-3, tol=DEFAULT_TOL, int_tol=DEFAULT_INTEGRATION_TOL):
    """Dispatch on the chain kind.  ``c0`` is ignored (with a warning) for degenerate chains."""
    chain = build_chain(b, tol)
    if chain.kind is ChainKind.DEGENERATE:
        if c0 is not None and len(c0):
            warnings.warn("degenerate chain: the solution needs no initial data, c0 ignored", UserWarning)
        return chain, solve_degenerate(DegenerateProblem(b, f, t_end, step), chain)
    if c0 is None:
        raise ChainMismatchError(f"regular chain needs c0 of dim {chain.dims[-1]}")
    return chain, solve_regular(RegularizedIVP(b, f, c0, t_end, step), chain, int_tol)


def nilpotent_index_ok(b, p, tol=DEFAULT_TOL) -> bool:
    b = np.asarray(b, dtype=np.float64)
    scale = (1.0 + linalg.max_norm(b)) ** p
    return linalg.max_norm(np.linalg.matrix_power(b, p)) <= tol * scale


def solve_nilpotent_iteration(b, f: Signal, p: int, t_end: float = 1.0, step: float = 1e-2, tol=DEFAULT_TOL) -> Trajectory:
    """Symbolic iteration ``u_0 = 0``, ``u_n = -f + B u_{n-1}'`` for nilpotent ``B`` (``B^p = 0``).

    ``u_p`` is cross-checked against the unrolled form ``-sum_k B^k f^(k)``;
    the largest discrepancy is stored in ``info["closed_form_defect"]`` and
    ``info["solution"]`` holds ``u_p`` as a :class:`Signal`.
    """
    b = linalg.as_matrix(b, "B")
    _check_forcing(b, f)
    if p < 1:
        raise ValueError("p must be at least 1")
    if not nilpotent_index_ok(b, p, tol):
        raise NotNilpotentError(f"B^{p} is not zero at tolerance {tol:g}")

    u = Signal.zeros(f.dim)
    for _ in range(p):
        u = (-f) + u.derivative().apply(b)

    times = time_grid(t_end, step)
    states = u.evaluate(times, 0)
    closed = np.zeros_like(states)
    bk = np.eye(b.shape[0])
    for k in range(p):
        closed -= f.evaluate(times, k) @ bk.T
        bk = b @ bk
    traj = Trajectory(
        times,
        states,
        u.evaluate(times, 1),
        info={"kind": "nilpotent-iteration", "p": p, "solution": u,
              "closed_form_defect": float(np.max(np.abs(states - closed)))},
    )
    traj.residual_max = residual_norm(b, traj, f)
    return traj


# ---------------------------------------------------------------- verdicts


class Consistency(enum.Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal basis of ``ker B^T``; ``vectors`` has one basis vector per row."""

    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ConsistencyVerdict:
    verdict: Consistency
    defect: float
    basis: NullspaceBasis

    @property
    def consistent(self) -> bool:
        return self.verdict is Consistency.CONSISTENT


def adjoint_null_space(b, tol: float = DEFAULT_TOL) -> NullspaceBasis:
    b = linalg.as_matrix(b, "B")
    return NullspaceBasis(linalg.null_space(b.T, tol).T)


def check_classical_consistency(b, x0, f, tol: float = DEFAULT_TOL) -> ConsistencyVerdict:
    """Necessary condition for the classical problem: ``<x0 + f(0), psi> = 0`` for ``B^T psi = 0``.

    ``tol`` is the rank tolerance for the null space and, scaled by
    ``1 + ||x0 + f(0)||_inf``, the threshold for the defect.
    """
    b = linalg.as_matrix(b, "B")
    x0 = linalg.as_vector(x0, "x0")
    if x0.size != b.shape[0] or f.dim != b.shape[0]:
        raise ValueError("dimension mismatch between B, x0 and f")
    basis = adjoint_null_space(b, tol)
    v = x0 + f.evaluate(0.0, 0)
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("x0 + f(0) is not finite")
    defect = float(np.max(np.abs(basis.vectors @ v))) if basis.dim else 0.0
    ok = defect <= tol * (1.0 + float(np.max(np.abs(v), initial=0.0)))
    return ConsistencyVerdict(Consistency.CONSISTENT if ok else Consistency.INCONSISTENT, defect, basis)


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INDETERMINATE = "indeterminate"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class StabilityVerdict:
    """``spectrum`` and ``abscissa`` refer to the terminal ``B^p``; ``decay_rate`` is
    ``-max Re`` over the spectrum of ``(B^p)^-1``, the exponent at which
    homogeneous solutions decay (negative when they grow)."""

    verdict: Stability
    spectrum: np.ndarray
    abscissa: float
    decay_rate: float


def check_stability(chain: SkeletonChain, margin: float = STABILITY_MARGIN) -> StabilityVerdict:
    if chain.kind is not ChainKind.REGULAR:
        raise ChainNotRegularError("stability is defined for regular chains only")
    ev = linalg.eigenvalues(chain.terminal)
    abscissa = float(np.max(ev.real))
    # Re(1/lambda) = Re(lambda) / |lambda|^2, same sign as Re(lambda)
    decay_rate = -float(np.max((1.0 / ev).real))
    if np.any(ev.real > margin):
        verdict = Stability.UNSTABLE
    elif np.all(ev.real < -margin):
        verdict = Stability.STABLE
    else:
        verdict = Stability.INDETERMINATE
    return StabilityVerdict(verdict, ev, abscissa, decay_rate)
