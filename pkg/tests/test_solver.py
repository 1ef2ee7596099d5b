import math
import warnings

import numpy as np
import pytest

from skeleton_dae.chain import build_chain, build_projector
from skeleton_dae.errors import (
    ChainMismatchError,
    ChainNotRegularError,
    NotNilpotentError,
    OrderCapExceededError,
    StepTooCoarseError,
)
from skeleton_dae.linalg import SkeletonFactorization, full_rank_factorize
from skeleton_dae.oracle import random_spec, synthesize
from skeleton_dae.signals import CallableSignal, Signal, parse_signal
from skeleton_dae.solver import (
    Consistency,
    DegenerateProblem,
    RegularizedIVP,
    Stability,
    check_classical_consistency,
    check_stability,
    residual_norm,
    solve,
    solve_degenerate,
    solve_nilpotent_iteration,
    solve_regular,
    time_grid,
)

SHIFT = np.array([[0.0, 1.0], [0.0, 0.0]])
PROJ = np.array([[1.0, 0.0], [0.0, 0.0]])


def test_time_grid():
    g = time_grid(1.0, 0.3)
    assert g[0] == 0.0 and g[-1] == 1.0 and np.all(np.diff(g) <= 0.3 + 1e-15)
    assert time_grid(2.0, 1e-3).size == 2001
    with pytest.raises(ValueError):
        time_grid(1.0, 2.0)


# ---------------------------------------------------------------- regular


def test_regular_growth():
    tr = solve_regular(RegularizedIVP(PROJ, Signal.zeros(2), [1.0], 1.0, 1e-3))
    expected = np.column_stack([np.exp(tr.times), np.zeros_like(tr.times)])
    assert np.max(np.abs(tr.states - expected)) <= 1e-9
    assert tr.states[-1, 0] == pytest.approx(math.e, abs=1e-10)
    assert tr.hyperplane_defect <= 1e-10
    assert tr.residual_max <= 1e-8


def test_regular_decay():
    tr = solve_regular(RegularizedIVP([[-1.0, 0.0], [0.0, 0.0]], Signal.zeros(2), [1.0], 1.0, 1e-3))
    expected = np.column_stack([np.exp(-tr.times), np.zeros_like(tr.times)])
    assert np.max(np.abs(tr.states - expected)) <= 1e-9


def test_regular_algebraic_component():
    tr = solve_regular(RegularizedIVP(PROJ, parse_signal("0 ; sin(1*t)"), [0.0], 1.0, 1e-3))
    expected = np.column_stack([np.zeros_like(tr.times), -np.sin(tr.times)])
    assert np.max(np.abs(tr.states - expected)) <= 1e-12
    assert tr.residual_max <= 1e-12
    assert len(tr.level_states) == 1 and np.allclose(tr.level_states[0], 0.0)


def test_regular_p0_is_plain_ode():
    # B = 2: x' = (x + 1)/2, x(0) = 0  ->  x = e^{t/2} - 1
    tr = solve_regular(RegularizedIVP([[2.0]], parse_signal("1"), [0.0], 1.0, 1e-2))
    assert np.max(np.abs(tr.states[:, 0] - (np.exp(tr.times / 2) - 1))) <= 1e-10
    assert tr.level_states == []


def test_regular_errors():
    chain = build_chain(PROJ)
    with pytest.raises(ChainMismatchError):
        solve_regular(RegularizedIVP(PROJ, Signal.zeros(2), [1.0, 2.0]), chain)
    with pytest.raises(ChainMismatchError):
        solve_regular(RegularizedIVP(np.eye(2), Signal.zeros(2), [1.0, 2.0]), chain)
    with pytest.raises(ChainMismatchError):
        solve_regular(RegularizedIVP(SHIFT, Signal.zeros(2), []))


def test_step_too_coarse():
    with pytest.raises(StepTooCoarseError):
        solve_regular(RegularizedIVP([[-1e-3]], Signal.zeros(1), [1.0], 1.0, 0.1))


def test_callable_forcing_regular():
    f = CallableSignal(2, lambda t, k: [0.0, math.sin(t + k * math.pi / 2)])
    tr = solve_regular(RegularizedIVP(PROJ, f, [0.0], 1.0, 1e-2))
    assert np.allclose(tr.states[:, 1], -np.sin(tr.times), atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_linearity_in_c0(seed):
    spec = random_spec(seed, 5, core_dim=2)
    b, _ = synthesize(spec)
    chain = build_chain(b)
    g = np.random.default_rng(seed)
    c0, d0 = g.standard_normal(2), g.standard_normal(2)
    alpha, beta = 0.7, -1.3

    def run(c):
        return solve_regular(RegularizedIVP(b, spec.f, c, 1.0, 1e-2), chain).states

    lhs = run(alpha * c0 + beta * d0)
    rhs = alpha * run(c0) + beta * run(d0) + (1 - alpha - beta) * run(np.zeros(2))
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


def _scrambling_factorizer(seed):
    g = np.random.default_rng(seed)

    def factorize(m, tol):
        fac = full_rank_factorize(m, tol)
        t = g.standard_normal((fac.rank, fac.rank)) + 3 * np.eye(fac.rank)
        return SkeletonFactorization(fac.left @ t, np.linalg.solve(t, fac.right), fac.rank, tol, fac.singular_values)

    return factorize


@pytest.mark.parametrize("seed", range(10))
def test_factor_choice_invariance(seed):
    spec = random_spec(seed, 6, core_dim=1 + seed % 4)
    b, _ = synthesize(spec)
    chain = build_chain(b)
    other = build_chain(b, factorize=_scrambling_factorizer(seed))
    m, m_other = build_projector(chain), build_projector(other)
    assert not np.allclose(m, m_other)
    # frame change R with M' = R M
    r = m_other @ np.linalg.pinv(m)
    assert np.allclose(r @ m, m_other, atol=1e-10)
    c0 = np.random.default_rng(seed).standard_normal(chain.dims[-1])
    a = solve_regular(RegularizedIVP(b, spec.f, c0, 1.0, 1e-2), chain)
    c = solve_regular(RegularizedIVP(b, spec.f, r @ c0, 1.0, 1e-2), other)
    assert np.max(np.abs(a.states - c.states)) <= 1e-8


# ---------------------------------------------------------------- degenerate


def test_degenerate_example():
    tr = solve_degenerate(DegenerateProblem(SHIFT, parse_signal("t ; t^2"), 2.0, 0.5))
    expected = np.column_stack([-3 * tr.times, -tr.times**2])
    assert np.max(np.abs(tr.states - expected)) <= 1e-14
    assert tr.residual_max <= 1e-10
    assert np.allclose(tr.level_states[0][:, 0], -tr.times**2)


def test_degenerate_homogeneous_is_zero():
    tr = solve_degenerate(DegenerateProblem(SHIFT, Signal.zeros(2)))
    assert np.all(tr.states == 0.0)


def test_degenerate_zero_matrix():
    f = parse_signal("exp(1*t) ; cos(2*t)")
    tr = solve_degenerate(DegenerateProblem(np.zeros((2, 2)), f, 1.0, 0.1))
    assert np.allclose(tr.states, -f.evaluate(tr.times), atol=1e-15)


def test_degenerate_order_cap():
    f = Signal(parse_signal("t ; t^2").components, max_order=1)
    with pytest.raises(OrderCapExceededError):
        solve_degenerate(DegenerateProblem(SHIFT, f))


def test_degenerate_rejects_regular_chain():
    with pytest.raises(ChainMismatchError):
        solve_degenerate(DegenerateProblem(PROJ, Signal.zeros(2)))


def test_residual_fault_injection():
    f = parse_signal("t ; t^2")
    tr = solve_degenerate(DegenerateProblem(SHIFT, f, 2.0, 0.5))
    assert residual_norm(SHIFT, tr, f) <= 1e-10
    tr.states[2] = 0.0
    assert residual_norm(SHIFT, tr, f) >= 1.0


def test_residual_without_derivatives():
    f = parse_signal("t ; t^2")
    tr = solve_degenerate(DegenerateProblem(SHIFT, f, 1.0, 1e-3))
    tr.derivatives = None
    assert residual_norm(SHIFT, tr, f) <= 1e-6


# ---------------------------------------------------------------- nilpotent iteration


def test_nilpotent_iteration_example():
    f = parse_signal("t ; t^2")
    tr = solve_nilpotent_iteration(SHIFT, f, 2, 2.0, 0.5)
    assert tr.info["solution"] == parse_signal("-3*t ; -t^2")
    assert tr.info["closed_form_defect"] == 0.0
    assert tr.residual_max <= 1e-10


def test_nilpotent_first_iterate():
    # u_1 = -f regardless of B
    f = parse_signal("t ; t^2")
    u = Signal.zeros(2)
    u1 = (-f) + u.derivative().apply(SHIFT)
    assert u1 == parse_signal("-t ; -t^2")


def test_nilpotent_zero_forcing():
    tr = solve_nilpotent_iteration(SHIFT, Signal.zeros(2), 2)
    assert np.all(tr.states == 0.0)


def test_not_nilpotent():
    with pytest.raises(NotNilpotentError):
        solve_nilpotent_iteration(PROJ, Signal.zeros(2), 3)
    with pytest.raises(NotNilpotentError):
        solve_nilpotent_iteration(np.diag([1.0, 1.0, 1.0], 1), Signal.zeros(4), 2)


@pytest.mark.parametrize("seed", range(10))
def test_iteration_matches_degenerate(seed):
    spec = random_spec(seed, 1 + seed % 6, core_dim=0)
    b, _ = synthesize(spec)
    a = solve_degenerate(DegenerateProblem(b, spec.f, 1.0, 0.05))
    c = solve_nilpotent_iteration(b, spec.f, spec.q, 1.0, 0.05)
    assert np.max(np.abs(a.states - c.states)) <= 1e-12


# ---------------------------------------------------------------- verdicts


def test_consistency_invertible():
    v = check_classical_consistency(np.eye(2), [3.0, -1.0], Signal.zeros(2))
    assert v.verdict is Consistency.CONSISTENT and v.basis.dim == 0


def test_consistency_shift_inconsistent():
    v = check_classical_consistency(SHIFT, [0.0, 1.0], Signal.zeros(2))
    assert v.verdict is Consistency.INCONSISTENT
    assert v.defect == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.abs(v.basis.vectors), [[0.0, 1.0]])
    assert np.allclose(v.basis.vectors @ SHIFT, 0.0)


def test_consistency_shift_consistent():
    v = check_classical_consistency(SHIFT, [5.0, 0.0], parse_signal("t ; t^2"))
    assert v.consistent


@pytest.mark.parametrize("seed", range(10))
def test_degenerate_solution_is_consistent(seed):
    spec = random_spec(seed, 4, core_dim=0)
    b, _ = synthesize(spec)
    tr = solve_degenerate(DegenerateProblem(b, spec.f, 1.0, 0.1))
    assert check_classical_consistency(b, tr.states[0], spec.f).consistent


@pytest.mark.parametrize(
    "terminal, verdict",
    [([[-1.0]], Stability.STABLE), ([[1.0]], Stability.UNSTABLE), ([[-1.0, 5.0], [0.0, -2.0]], Stability.STABLE)],
)
def test_stability_examples(terminal, verdict):
    v = check_stability(build_chain(terminal))
    assert v.verdict is verdict


def test_stability_indeterminate_and_errors():
    assert check_stability(build_chain([[0.0, 1.0], [-1.0, 0.0]])).verdict is Stability.INDETERMINATE
    with pytest.raises(ChainNotRegularError):
        check_stability(build_chain(SHIFT))


def test_stability_decay_rate():
    v = check_stability(build_chain([[-1.0, 5.0], [0.0, -2.0]]))
    assert v.abscissa == pytest.approx(-1.0)
    assert v.decay_rate == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_stable_solutions_decay(seed):
    spec = random_spec(seed, 5, core_dim=3, stability="stable", forced=False)
    b, _ = synthesize(spec)
    chain = build_chain(b)
    v = check_stability(chain)
    assert v.verdict is Stability.STABLE
    tr = solve_regular(RegularizedIVP(b, spec.f, np.ones(3), 10.0, 1e-2), chain)
    early = np.max(np.abs(tr.states[1]))
    assert np.max(np.abs(tr.states[-1])) < early * math.exp(-v.decay_rate * 10 / 2)


# ---------------------------------------------------------------- dispatch


def test_solve_dispatch():
    chain, tr = solve(SHIFT, parse_signal("t ; t^2"), t_end=1.0, step=0.1)
    assert chain.kind.value == "degenerate"
    with pytest.warns(UserWarning):
        solve(SHIFT, parse_signal("t ; t^2"), c0=[1.0], t_end=1.0, step=0.1)
    with pytest.raises(ChainMismatchError):
        solve(PROJ, Signal.zeros(2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        chain, tr = solve(PROJ, Signal.zeros(2), c0=[1.0], t_end=1.0, step=0.01)
    assert tr.states[-1, 0] == pytest.approx(math.e, rel=1e-9)
