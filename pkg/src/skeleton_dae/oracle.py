"""Test problems with known solutions.

``B = S diag(C, N) S^-1`` with ``C`` invertible and ``N`` nilpotent splits
``B x' = x + f`` into ``C y' = y + g1`` and ``N z' = z + g2`` where
``(g1, g2) = S^-1 f`` and ``x = S (y, z)``.  The nilpotent part is
``z = -sum_k N^k g2^(k)``.  The core part is obtained from a matrix
exponential: ``g1`` is a linear readout of a finite set of exp-poly-trig
basis functions ``phi`` with ``phi' = F phi``, so ``(y, phi)`` obeys a
constant-coefficient linear system.

None of this goes through the skeleton chain, which is what makes it a
usable reference for the chain-based solvers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import linalg
from .errors import SpecInvalidError
from .signals import COS, SIN, Signal, SignalTerm


@dataclass(frozen=True)
class SynthSpec:
    core: np.ndarray  # c x c, invertible
    nilpotent: np.ndarray  # q x q, N^q = 0
    similarity: np.ndarray  # (c+q) x (c+q)
    f: Signal
    c0_core: np.ndarray  # dim c

    @property
    def c(self) -> int:
        return self.core.shape[0]

    @property
    def q(self) -> int:
        return self.nilpotent.shape[0]

    @property
    def n(self) -> int:
        return self.c + self.q

    def validate(self, tol=1e-10):
        c, q = self.c, self.q
        if self.core.shape != (c, c) or self.nilpotent.shape != (q, q):
            raise SpecInvalidError("core and nilpotent blocks must be square")
        if self.similarity.shape != (c + q, c + q):
            raise SpecInvalidError(f"similarity must be {(c + q, c + q)}")
        if self.f.dim != c + q or np.shape(self.c0_core) != (c,):
            raise SpecInvalidError("forcing or c0_core has the wrong dimension")
        if c and not linalg.is_invertible(self.core, tol):
            raise SpecInvalidError("core block is singular")
        if q and linalg.max_norm(np.linalg.matrix_power(self.nilpotent, q)) > tol * (1 + linalg.max_norm(self.nilpotent)) ** q:
            raise SpecInvalidError("nilpotent block is not nilpotent")
        if not linalg.is_invertible(self.similarity, tol):
            raise SpecInvalidError("similarity is singular")


def block_matrix(spec: SynthSpec) -> np.ndarray:
    s = spec.similarity
    d = np.zeros((spec.n, spec.n))
    d[: spec.c, : spec.c] = spec.core
    d[spec.c :, spec.c :] = spec.nilpotent
    return s @ d @ np.linalg.inv(s)


def _modal_system(g: Signal):
    """Basis functions spanning ``g``: returns ``(F, phi0, readout)`` with
    ``phi' = F phi``, ``phi(0) = phi0`` and ``g(t) = readout @ phi(t)``."""
    max_power: dict = {}
    for comp in g.components:
        for term in comp:
            mode = (term.exp_rate, term.omega if term.trig else 0.0)
            max_power[mode] = max(max_power.get(mode, 0), term.power)

    index = {}
    for (a, w), kmax in sorted(max_power.items()):
        for j in range(kmax + 1):
            if w:
                index[(a, w, j, COS)] = len(index)
                index[(a, w, j, SIN)] = len(index)
            else:
                index[(a, w, j, None)] = len(index)

    m = len(index)
    F = np.zeros((m, m))
    phi0 = np.zeros(m)
    for (a, w, j, trig), row in index.items():
        # d/dt t^j e^{at} trig(wt) = j t^{j-1}(...) + a (...) + w * (rotated trig)
        F[row, row] = a
        if j:
            F[row, index[(a, w, j - 1, trig)]] = j
        if trig == COS:
            F[row, index[(a, w, j, SIN)]] = -w
        elif trig == SIN:
            F[row, index[(a, w, j, COS)]] = w
        if j == 0 and trig != SIN:
            phi0[row] = 1.0

    readout = np.zeros((g.dim, m))
    for i, comp in enumerate(g.components):
        for term in comp:
            w = term.omega if term.trig else 0.0
            readout[i, index[(term.exp_rate, w, term.power, term.trig)]] += term.coef
    return F, phi0, readout


class AnalyticSolution:
    """Reference solution ``x(t) = S (y(t), z(t))`` of a synthesized problem."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        c = spec.c
        s = spec.similarity
        self.s = s
        g = spec.f.apply(np.linalg.inv(s))
        g1, g2 = g.take(0, c), g.take(c, spec.n)

        z = Signal.zeros(spec.q)
        nk = np.eye(spec.q)
        for k in range(spec.q):
            z = z - g2.derivative(k).apply(nk)
            nk = spec.nilpotent @ nk
        self.nilpotent_part = z

        if c:
            k_mat = np.linalg.inv(spec.core)
            F, phi0, readout = _modal_system(g1)
            m = F.shape[0]
            a = np.zeros((c + m, c + m))
            a[:c, :c] = k_mat
            a[:c, c:] = k_mat @ readout
            a[c:, c:] = F
            self._aug = a
            self._init = np.concatenate([np.asarray(spec.c0_core, dtype=np.float64), phi0])
        else:
            self._aug = None

    def core_part(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        c = self.spec.c
        if not c:
            return np.zeros((times.size, 0))
        diffs = np.diff(times)
        uniform = times.size > 2 and times[0] == 0.0 and np.allclose(diffs, diffs[0], rtol=1e-12, atol=0)
        if uniform:
            prop = expm(self._aug * diffs[0])
            v = self._init.copy()
            out = np.empty((times.size, c))
            out[0] = v[:c]
            for k in range(1, times.size):
                v = prop @ v
                out[k] = v[:c]
            return out
        return np.array([(expm(self._aug * t) @ self._init)[:c] for t in times])

    def evaluate(self, times) -> np.ndarray:
        """States at ``times`` as an array of shape ``(len(times), n)``."""
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        y = self.core_part(times)
        z = self.nilpotent_part.evaluate(times, 0).reshape(times.size, self.spec.q)
        return np.hstack([y, z]) @ self.s.T

    __call__ = evaluate

    def initial_state(self) -> np.ndarray:
        return self.evaluate([0.0])[0]


def synthesize(spec: SynthSpec):
    """Return ``(B, analytic)`` for a validated spec."""
    spec.validate()
    return block_matrix(spec), AnalyticSolution(spec)


def _orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _core_block(rng, c, stability):
    if stability is None:
        s = rng.uniform(0.5, 2.0, c)
        return _orthogonal(rng, c) @ np.diag(s) @ _orthogonal(rng, c).T
    # normal matrix built from 1x1 and rotation 2x2 blocks
    d = np.zeros((c, c))
    i = 0
    blocks = []
    while i < c:
        re = -rng.uniform(0.5, 1.5)
        if c - i >= 2 and rng.random() < 0.5:
            im = rng.uniform(0.2, 1.0)
            d[i : i + 2, i : i + 2] = [[re, im], [-im, re]]
            blocks.append((i, 2))
            i += 2
        else:
            d[i, i] = re
            blocks.append((i, 1))
            i += 1
    if stability == "unstable":
        j, size = blocks[rng.integers(len(blocks))]
        for k in range(j, j + size):
            d[k, k] = -d[k, k]
    elif stability != "stable":
        raise ValueError(f"unknown stability request {stability!r}")
    q = _orthogonal(rng, c)
    return q @ d @ q.T


def _nilpotent_block(rng, q):
    n = np.triu(rng.uniform(-0.5, 0.5, (q, q)), 2)
    for i in range(q - 1):
        if rng.random() < 0.8:
            n[i, i + 1] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
    return n


def _random_signal(rng, n):
    comps = []
    for _ in range(n):
        terms = []
        for _ in range(rng.integers(0, 4)):
            trig = [None, SIN, COS][rng.integers(3)]
            terms.append(
                SignalTerm(
                    coef=float(rng.uniform(-1.0, 1.0)),
                    power=int(rng.integers(0, 3)),
                    exp_rate=float(rng.uniform(-0.5, 0.5)) if rng.random() < 0.5 else 0.0,
                    trig=trig,
                    omega=float(rng.uniform(0.5, 1.5)) if trig else 0.0,
                )
            )
        comps.append(terms)
    return Signal.from_terms(comps)


def random_spec(seed: int, n: int, core_dim: int | None = None, stability: str | None = None, forced=True) -> SynthSpec:
    """Seed-deterministic random spec of total size ``n``.

    ``core_dim`` fixes ``c`` (otherwise drawn from ``0..n``).  ``stability``
    is ``None``, ``"stable"`` (core spectrum in the open left half-plane) or
    ``"unstable"`` (one eigenvalue, or conjugate pair, in the right
    half-plane).  ``forced=False`` gives ``f = 0``.
    """
    if not 1 <= n <= 12:
        raise ValueError("n must be between 1 and 12")
    rng = np.random.default_rng(seed)
    c = int(rng.integers(0, n + 1)) if core_dim is None else core_dim
    if not 0 <= c <= n:
        raise ValueError("core_dim out of range")
    if stability is not None and c == 0:
        raise ValueError("stability request needs a nonempty core")
    q = n - c
    core = _core_block(rng, c, stability)
    nil = _nilpotent_block(rng, q)
    sim = _orthogonal(rng, n) @ np.diag(np.exp(rng.uniform(0.0, np.log(4.0), n))) @ _orthogonal(rng, n).T
    f = _random_signal(rng, n) if forced else Signal.zeros(n)
    c0 = rng.uniform(-1.0, 1.0, c)
    return SynthSpec(core, nil, sim, f, c0)
