"""Attached skeleton chains.

Starting from ``B^0 = B`` each iterate is split into skeleton factors
``B^i = A_{2i+1} A_{2i+2}`` and the factors are multiplied back in the
opposite order, ``B^{i+1} = A_{2i+2} A_{2i+1}``.  Ranks strictly drop at
every step, so the process stops after at most ``n`` levels with an
iterate that is either invertible (a *regular* chain) or zero (a
*degenerate* chain).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import linalg
from .linalg import DEFAULT_TOL, SkeletonFactorization, full_rank_factorize


class ChainKind(enum.Enum):
    REGULAR = "regular"
    DEGENERATE = "degenerate"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ChainLevel:
    """One permutation step.

    ``a_odd`` (``r_{i-1} x r_i``) and ``a_even`` (``r_i x r_{i-1}``) factor the
    previous iterate as ``a_odd @ a_even``; ``b_next = a_even @ a_odd``.
    """

    a_odd: np.ndarray
    a_even: np.ndarray
    b_next: np.ndarray

    @property
    def rank(self) -> int:
        return self.b_next.shape[0]


@dataclass(frozen=True)
class SkeletonChain:
    b0: np.ndarray
    levels: tuple[ChainLevel, ...]
    kind: ChainKind
    tol: float = DEFAULT_TOL

    @property
    def p(self) -> int:
        return len(self.levels)

    @property
    def dims(self) -> list[int]:
        return [self.b0.shape[0]] + [lv.rank for lv in self.levels]

    @property
    def terminal(self) -> np.ndarray:
        return self.levels[-1].b_next if self.levels else self.b0

    def iterate(self, i: int) -> np.ndarray:
        """``B^i`` for ``0 <= i <= p``."""
        return self.b0 if i == 0 else self.levels[i - 1].b_next

    def partial_projectors(self) -> list[np.ndarray]:
        """``[G_0, ..., G_p]`` with ``G_0 = I`` and ``G_i = A_{2i} ... A_2``."""
        g = np.eye(self.b0.shape[0])
        out = [g]
        for lv in self.levels:
            g = lv.a_even @ g
            out.append(g)
        return out

    def matches(self, b) -> bool:
        b = np.asarray(b, dtype=np.float64)
        return b.shape == self.b0.shape and np.array_equal(b, self.b0)


def classify_iterate(m, zero_level: float, tol: float) -> str:
    """``"zero"``, ``"invertible"`` or ``"singular"``.

    The absolute zero test comes first: a tiny iterate made of rounding noise
    would otherwise pass the scale-free invertibility test.
    """
    if linalg.max_norm(m) <= zero_level:
        return "zero"
    if linalg.is_invertible(m, tol):
        return "invertible"
    return "singular"


def build_chain(
    b,
    tol: float = DEFAULT_TOL,
    factorize: Callable[[np.ndarray, float], SkeletonFactorization] = full_rank_factorize,
) -> SkeletonChain:
    """Build the attached skeleton chain of a square matrix.

    An iterate counts as zero when its max-norm is at most
    ``tol * (1 + ||B||_max)`` and as invertible when
    ``sigma_min > tol * sigma_max``; anything else is factored again.
    ``factorize`` may be replaced by any routine returning a valid skeleton
    factorization (used to test independence from the factor choice).
    """
    b0 = linalg.as_matrix(b, "B")
    n = b0.shape[0]
    if b0.shape != (n, n) or n == 0:
        raise ValueError(f"B must be a non-empty square matrix, got shape {b0.shape}")
    zero_level = tol * (1.0 + linalg.max_norm(b0))

    levels = []
    current = b0
    while True:
        state = classify_iterate(current, zero_level, tol)
        if state == "zero":
            kind = ChainKind.DEGENERATE
            break
        if state == "invertible":
            kind = ChainKind.REGULAR
            break
        fac = factorize(current, tol)
        if not 0 < fac.rank < current.shape[0]:
            raise ArithmeticError(f"factorization of a singular nonzero iterate returned rank {fac.rank}")
        b_next = fac.right @ fac.left
        b_next.flags.writeable = False
        levels.append(ChainLevel(fac.left, fac.right, b_next))
        current = b_next
    return SkeletonChain(b0, tuple(levels), kind, tol)


def build_projector(chain: SkeletonChain) -> np.ndarray:
    """Regularizing map ``M = A_{2p} ... A_4 A_2`` (``r_p x n``); identity when ``p = 0``."""
    return chain.partial_projectors()[-1]


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float = 0.0
    bound: float = 0.0
    detail: str = ""


@dataclass
class ChainReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def select(self, prefix) -> list[CheckResult]:
        return [c for c in self.checks if c.name.startswith(prefix)]


def spectrum_mismatch(parent, child, zero_cut=0.0) -> float:
    """Distance between the nonzero spectra of ``parent = X Y`` and ``child = Y X``.

    The parent has ``dim(parent) - dim(child)`` extra zero eigenvalues; the
    smallest-magnitude ones are discarded before an optimal one-to-one
    matching.  Pairs where both eigenvalues are below ``zero_cut`` count as
    matching zeros (defective zero eigenvalues are only computed to about
    ``eps^(1/k)``).
    """
    ev_parent = linalg.eigenvalues(parent)
    ev_child = linalg.eigenvalues(child)
    extra = ev_parent.size - ev_child.size
    if extra < 0:
        raise ValueError("child iterate is larger than its parent")
    ev_parent = ev_parent[np.argsort(np.abs(ev_parent), kind="stable")][extra:]
    if ev_child.size == 0:
        return 0.0
    cost = np.abs(ev_parent[:, None] - ev_child[None, :])
    rows, cols = linear_sum_assignment(cost)
    d = cost[rows, cols]
    both_zero = (np.abs(ev_parent[rows]) <= zero_cut) & (np.abs(ev_child[cols]) <= zero_cut)
    d = np.where(both_zero, 0.0, d)
    return float(d.max())


def _zero_cut(m, order):
    norm = float(linalg.singular_values(m)[0]) if m.size else 0.0
    return 100.0 * (np.finfo(float).eps * max(m.shape[0], 1) * (1.0 + norm)) ** (1.0 / max(order, 1))


def verify_chain(chain: SkeletonChain, tol: float = DEFAULT_TOL, spectral_tol: float = 1e-8) -> ChainReport:
    """Check every structural property of a chain; failures are reported, never raised.

    Residual bounds are ``tol * (1 + ||.||_max)`` for the factor identities and
    ``spectral_tol * (1 + ||B^i||_2)`` for the shared nonzero spectrum.
    """
    report = ChainReport()
    add = report.checks.append
    dims = chain.dims
    zero_level = chain.tol * (1.0 + linalg.max_norm(chain.b0))

    for i, lv in enumerate(chain.levels, start=1):
        prev = chain.iterate(i - 1)
        r_prev, r = prev.shape[0], lv.b_next.shape[0]
        shapes_ok = (
            lv.a_odd.shape == (r_prev, r)
            and lv.a_even.shape == (r, r_prev)
            and lv.b_next.shape == (r, r)
        )
        add(CheckResult(f"shapes[{i}]", shapes_ok, detail=f"{lv.a_odd.shape} {lv.a_even.shape} {lv.b_next.shape}"))
        if not shapes_ok:
            continue

        bound = tol * (1.0 + linalg.max_norm(prev))
        res = linalg.max_norm(lv.a_odd @ lv.a_even - prev)
        add(CheckResult(f"condition1[{i}]", res <= bound, res, bound))

        bound = tol * (1.0 + linalg.max_norm(lv.b_next))
        res = linalg.max_norm(lv.a_even @ lv.a_odd - lv.b_next)
        add(CheckResult(f"permutation[{i}]", res <= bound, res, bound))

        add(CheckResult(f"rank_drop[{i}]", r < r_prev, detail=f"{r_prev} -> {r}"))

        ranks = (linalg.rank_of(lv.a_odd, chain.tol), linalg.rank_of(lv.a_even, chain.tol))
        add(CheckResult(f"factor_rank[{i}]", ranks == (r, r), detail=f"ranks {ranks}, expected {r}"))

        state = classify_iterate(prev, zero_level, chain.tol)
        add(CheckResult(f"interior[{i - 1}]", state == "singular", detail=state))

        order = chain.p - (i - 1) + (1 if chain.kind is ChainKind.DEGENERATE else 0)
        res = spectrum_mismatch(prev, lv.b_next, _zero_cut(prev, order))
        bound = spectral_tol * (1.0 + (float(linalg.singular_values(prev)[0]) if prev.size else 0.0))
        add(CheckResult(f"spectrum[{i}]", res <= bound, res, bound))

    add(CheckResult("dims_decreasing", all(a > b for a, b in zip(dims, dims[1:])), detail=str(dims)))

    state = classify_iterate(chain.terminal, zero_level, chain.tol)
    expected = {"zero": ChainKind.DEGENERATE, "invertible": ChainKind.REGULAR}.get(state)
    add(CheckResult("terminal", chain.kind is expected, detail=f"terminal is {state}, kind={chain.kind}"))
    return report
