"""Vector forcing signals with exact derivatives.

A component is a finite sum of terms ``c * t^k * exp(a*t) * {1, sin(w*t), cos(w*t)}``.
The class is closed under ``d/dt``, so derivatives of any order are exact
symbolic objects rather than finite-difference approximations.

Text form (one component per ``;``)::

    t^2 ; 3*sin(2*t) - t*exp(-1*t) + 0.5
"""
from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import OrderCapExceededError, ParseError

DEFAULT_ORDER_CAP = 32

SIN = "sin"
COS = "cos"


@dataclass(frozen=True)
class SignalTerm:
    coef: float
    power: int = 0
    exp_rate: float = 0.0
    trig: str | None = None
    omega: float = 0.0

    def __post_init__(self):
        if self.power < 0 or int(self.power) != self.power:
            raise ValueError("power must be a nonnegative integer")
        if self.trig not in (None, SIN, COS):
            raise ValueError(f"unknown trig kind {self.trig!r}")
        for v in (self.coef, self.exp_rate, self.omega):
            if not math.isfinite(v):
                raise ValueError("signal term parameters must be finite")

    @property
    def key(self):
        return (self.power, self.exp_rate, self.trig, self.omega)

    def normalized(self) -> SignalTerm | None:
        """Canonical form: ``w > 0`` for trig terms, ``None`` for a vanishing term."""
        coef, trig, omega = self.coef, self.trig, self.omega
        if trig is None:
            omega = 0.0
        elif omega == 0.0:
            if trig == SIN:
                return None
            trig = None
        elif omega < 0:
            omega = -omega
            if trig == SIN:
                coef = -coef
        if coef == 0.0:
            return None
        return SignalTerm(float(coef), int(self.power), float(self.exp_rate) + 0.0, trig, float(omega))

    def evaluate(self, t):
        t = np.asarray(t, dtype=np.float64)
        v = self.coef * t**self.power
        if self.exp_rate:
            v = v * np.exp(self.exp_rate * t)
        if self.trig == SIN:
            v = v * np.sin(self.omega * t)
        elif self.trig == COS:
            v = v * np.cos(self.omega * t)
        return v

    def derivative(self) -> list[SignalTerm]:
        c, k, a, trig, w = self.coef, self.power, self.exp_rate, self.trig, self.omega
        out = []
        if k:
            out.append(SignalTerm(c * k, k - 1, a, trig, w))
        if a:
            out.append(SignalTerm(c * a, k, a, trig, w))
        if trig == SIN:
            out.append(SignalTerm(c * w, k, a, COS, w))
        elif trig == COS:
            out.append(SignalTerm(-c * w, k, a, SIN, w))
        return out

    def to_text(self, with_sign=True) -> str:
        coef = self.coef if with_sign else abs(self.coef)
        factors = []
        if self.power == 1:
            factors.append("t")
        elif self.power > 1:
            factors.append(f"t^{self.power}")
        if self.exp_rate:
            factors.append(f"exp({self.exp_rate!r}*t)")
        if self.trig:
            factors.append(f"{self.trig}({self.omega!r}*t)")
        if not factors:
            return repr(float(coef))
        if coef == 1.0:
            return "*".join(factors)
        return "*".join([repr(float(coef))] + factors)


def _combine(terms: Iterable[SignalTerm]) -> tuple[SignalTerm, ...]:
    acc: dict = {}
    for term in terms:
        term = term.normalized()
        if term is None:
            continue
        acc[term.key] = acc.get(term.key, 0.0) + term.coef
    merged = (SignalTerm(c, *key) for key, c in acc.items())
    return tuple(sorted((t for t in merged if t.coef != 0.0), key=_sort_key))


def _sort_key(term):
    return (term.power, term.exp_rate, term.trig or "", term.omega)


@dataclass(frozen=True)
class Signal:
    """Vector signal ``f: R -> R^n``; ``components[i]`` is the term sum of ``f_i``."""

    components: tuple[tuple[SignalTerm, ...], ...]
    max_order: int = DEFAULT_ORDER_CAP

    @classmethod
    def from_terms(cls, components: Sequence[Iterable[SignalTerm]], max_order=DEFAULT_ORDER_CAP) -> Signal:
        return cls(tuple(_combine(c) for c in components), max_order)

    @classmethod
    def zeros(cls, dim: int) -> Signal:
        return cls(tuple(() for _ in range(dim)))

    @classmethod
    def constant(cls, values) -> Signal:
        return cls.from_terms([[SignalTerm(float(v))] for v in values])

    @property
    def dim(self) -> int:
        return len(self.components)

    def is_zero(self) -> bool:
        return not any(self.components)

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Value of the ``order``-th derivative at ``t``.

        Scalar ``t`` gives shape ``(dim,)``; an array of times gives ``(len(t), dim)``.
        """
        if order < 0:
            raise ValueError("order must be nonnegative")
        if order > self.max_order:
            raise OrderCapExceededError(f"derivative order {order} exceeds cap {self.max_order}")
        sig = _nth_derivative(self, order)
        t_arr = np.asarray(t, dtype=np.float64)
        if not np.all(np.isfinite(t_arr)):
            raise ValueError("t must be finite")
        out = np.zeros(t_arr.shape + (self.dim,))
        for i, comp in enumerate(sig.components):
            for term in comp:
                out[..., i] += term.evaluate(t_arr)
        return out

    __call__ = evaluate

    def derivative(self, times: int = 1) -> Signal:
        return _nth_derivative(self, times)

    def apply(self, matrix) -> Signal:
        """The signal ``matrix @ f``."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != self.dim:
            raise ValueError(f"cannot apply a {m.shape} matrix to a signal of dim {self.dim}")
        rows = []
        for row in m:
            rows.append(
                [
                    SignalTerm(w * term.coef, *term.key)
                    for w, comp in zip(row, self.components)
                    if w != 0.0
                    for term in comp
                ]
            )
        return Signal.from_terms(rows, self.max_order)

    def __add__(self, other: Signal) -> Signal:
        if not isinstance(other, Signal):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return Signal.from_terms([a + b for a, b in zip(self.components, other.components)], self.max_order)

    def __neg__(self) -> Signal:
        return self.scale(-1.0)

    def __sub__(self, other: Signal) -> Signal:
        return self + (-other)

    def scale(self, factor: float) -> Signal:
        return Signal.from_terms(
            [[SignalTerm(factor * t.coef, *t.key) for t in comp] for comp in self.components], self.max_order
        )

    def stack(self, other: Signal) -> Signal:
        """Concatenate components: ``(f, g)``."""
        return Signal(self.components + other.components, self.max_order)

    def take(self, start: int, stop: int) -> Signal:
        return Signal(self.components[start:stop], self.max_order)

    def to_strings(self) -> list[str]:
        return [_component_text(c) for c in self.components]

    def __str__(self):
        return " ; ".join(self.to_strings())


def _component_text(comp) -> str:
    if not comp:
        return "0"
    parts = [comp[0].to_text()]
    for term in comp[1:]:
        parts.append(("- " if term.coef < 0 else "+ ") + term.to_text(with_sign=False))
    return " ".join(parts)


@functools.lru_cache(maxsize=4096)
def _nth_derivative(sig: Signal, order: int) -> Signal:
    if order == 0:
        return sig
    prev = _nth_derivative(sig, order - 1)
    return Signal.from_terms([[d for term in comp for d in term.derivative()] for comp in prev.components], sig.max_order)


def differentiate(f: Signal) -> Signal:
    return f.derivative(1)


def evaluate(f, t, order: int = 0) -> np.ndarray:
    return f.evaluate(t, order)


class CallableSignal:
    """Forcing outside the exp-poly-trig class.

    ``fn(t, order)`` must return the ``order``-th derivative at scalar ``t``
    as a length-``dim`` vector.  The solvers only call ``evaluate``, so any
    object with ``dim`` and ``evaluate(t, order)`` works the same way.
    """

    def __init__(self, dim: int, fn: Callable[[float, int], Sequence[float]], max_order=DEFAULT_ORDER_CAP):
        self.dim = dim
        self.fn = fn
        self.max_order = max_order

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        if order > self.max_order:
            raise OrderCapExceededError(f"derivative order {order} exceeds cap {self.max_order}")
        t_arr = np.asarray(t, dtype=np.float64)
        if t_arr.ndim == 0:
            return np.asarray(self.fn(float(t_arr), order), dtype=np.float64).reshape(self.dim)
        return np.array([np.asarray(self.fn(float(s), order), dtype=np.float64).reshape(self.dim) for s in t_arr])

    __call__ = evaluate


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]+)"
    r"|(?P<op>[-+*^();])"
    r")"
)


@dataclass
class _Tok:
    kind: str  # 'num', 'name', op character, or 'end'
    text: str
    pos: int


def _tokenize(text):
    toks, pos = [], 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos, {"number", "t", "exp", "sin", "cos"})
        start = m.start(m.lastgroup)
        value = m.group(m.lastgroup)
        kind = value if m.lastgroup == "op" else m.lastgroup
        toks.append(_Tok(kind, value, start))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    FACTOR_START = {"number", "t", "exp", "sin", "cos"}

    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, message, expected):
        raise ParseError(message, self.text, self.tok.pos, expected)

    def accept(self, kind):
        if self.tok.kind == kind:
            self.i += 1
            return True
        return False

    def expect(self, kind, expected=None):
        tok = self.tok
        if tok.kind != kind:
            shown = tok.text or "end of input"
            self.error(f"unexpected {shown!r}", expected or {kind})
        self.i += 1
        return tok

    def signal(self):
        comps = [self.component()]
        while self.accept(";"):
            comps.append(self.component())
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}", {"+", "-", "*", ";", "end of input"})
        return comps

    def component(self):
        terms = []
        sign = 1.0
        if self.accept("-"):
            sign = -1.0
        else:
            self.accept("+")
        terms.append(self.term(sign))
        while self.tok.kind in ("+", "-"):
            sign = -1.0 if self.expect(self.tok.kind).kind == "-" else 1.0
            terms.append(self.term(sign))
        return terms

    def term(self, sign):
        coef, power, rate, trig = sign, 0, 0.0, None
        while True:
            start = self.tok.pos
            if self.accept("-"):
                coef = -coef
            kind = self.tok.kind
            if kind == "num":
                coef *= float(self.expect("num").text)
            elif kind == "name" and self.tok.text == "t":
                self.i += 1
                if self.accept("^"):
                    tok = self.expect("num", {"integer"})
                    if not tok.text.isdigit():
                        raise ParseError("exponent must be a nonnegative integer", self.text, tok.pos, {"integer"})
                    power += int(tok.text)
                else:
                    power += 1
            elif kind == "name" and self.tok.text in ("exp", "sin", "cos"):
                fname = self.tok.text
                self.i += 1
                self.expect("(")
                rate_here = self.linear()
                self.expect(")")
                if fname == "exp":
                    rate += rate_here
                elif trig is not None:
                    raise ParseError("at most one sin/cos factor per term", self.text, start, {"*", "+", "-", ";"})
                else:
                    trig = (fname, rate_here)
            elif kind == "name":
                self.error(f"unknown name {self.tok.text!r}", self.FACTOR_START)
            else:
                self.error(f"unexpected {self.tok.text or 'end of input'!r}", self.FACTOR_START)
            if not self.accept("*"):
                break
        if trig is None:
            return SignalTerm(coef, power, rate)
        return SignalTerm(coef, power, rate, trig[0], trig[1])

    def linear(self):
        """``[-] [number *] t`` inside exp/sin/cos."""
        k = -1.0 if self.accept("-") else 1.0
        if self.tok.kind == "num":
            k *= float(self.expect("num").text)
            self.expect("*", {"*"})
        tok = self.tok
        if not (tok.kind == "name" and tok.text == "t"):
            self.error(f"unexpected {tok.text or 'end of input'!r}", {"t", "number", "-"})
        self.i += 1
        return k


def parse_signal(text: str, dim: int | None = None, max_order=DEFAULT_ORDER_CAP) -> Signal:
    """Parse the ``;``-separated component grammar into a :class:`Signal`."""
    comps = _Parser(text).signal()
    if dim is not None and len(comps) != dim:
        raise ParseError(f"expected {dim} components, found {len(comps)}", text, len(text), {";"})
    return Signal.from_terms(comps, max_order)


def parse_components(parts: Sequence[str], max_order=DEFAULT_ORDER_CAP) -> Signal:
    """Parse one expression per component (the problem-file layout)."""
    comps = []
    for part in parts:
        parsed = _Parser(part).signal()
        if len(parsed) != 1:
            raise ParseError("component expression must not contain ';'", part, part.index(";"), {"+", "-"})
        comps.append(parsed[0])
    return Signal.from_terms(comps, max_order)
