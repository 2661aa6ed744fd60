import numpy as np
import pytest

from hameng.model import random_sequence
from hameng.toggling import (
    FrameDynamics, c_integrals, coefficients_at, compute_c_integrals, doubling_gap,
    gauss_legendre_unit, parity_residual, toggling_trace,
)


def riemann_c_integrals(seq, basis, order, per_segment=600):
    """Midpoint-rule iterated integrals on a uniform sub-grid of every segment."""
    dyn = FrameDynamics(basis)
    arr = seq.as_array()
    axes = np.column_stack([arr[:, 1] * np.cos(arr[:, 2]), arr[:, 1] * np.sin(arr[:, 2]),
                            arr[:, 3]])
    u = (np.arange(per_segment) + 0.5) / per_segment
    vals = dyn.segment_values(axes, arr[:, 0], u)
    dts = np.repeat(arr[:, 0] / per_segment, per_segment)
    c = vals.reshape(-1, vals.shape[-1])
    out = [(c * dts[:, None]).sum(axis=0)]
    prev = c * dts[:, None]  # increments of the order-r running integral
    for r in range(2, order + 1):
        running = np.cumsum(prev, axis=0) - 0.5 * prev
        inc = np.einsum("ti,t...->ti...", c * dts[:, None], running)
        out.append(inc.sum(axis=0))
        prev = inc
    return out


def test_gauss_legendre_unit_integrates_polynomials():
    x, w, s = gauss_legendre_unit(8)
    assert w.sum() == pytest.approx(1.0)
    assert w @ x**5 == pytest.approx(1 / 6)
    # spectral integration matrix: int_0^x t^3 dt
    assert np.allclose(s @ x**3, x**4 / 4, atol=1e-13)


def test_adjoint_matches_matrix_route(basis3, rng):
    seq = random_sequence(rng, 4)
    a = toggling_trace(seq, basis3, 6)
    b = toggling_trace(seq, basis3, 6, method="matrix")
    assert np.allclose(a.values, b.values, atol=1e-10)


def test_adjoint_matches_pointwise_conjugation(basis3, rng):
    seq = random_sequence(rng, 5)
    tr = toggling_trace(seq, basis3, 4)
    times = tr.times.reshape(tr.values.shape[:2])
    for q, j in [(0, 0), (2, 1), (4, 3)]:
        assert np.allclose(tr.values[q, j], coefficients_at(seq, basis3, times[q, j]), atol=1e-10)


def test_unknown_method(basis3, rng):
    with pytest.raises(ValueError):
        toggling_trace(random_sequence(rng, 3), basis3, method="bogus")


def test_shuffle_identities(basis3, rng):
    seq = random_sequence(rng, 7)
    ci = compute_c_integrals(seq, basis3, 3)
    c1, c2, c3 = ci[1], ci[2], ci[3]
    lhs2 = np.multiply.outer(c1, c1)
    assert np.abs(lhs2 - (c2 + c2.T)).max() < 1e-9 * max(1.0, np.abs(lhs2).max())
    lhs3 = np.multiply.outer(c1, c2)  # i shuffled into (j, k)
    rhs3 = c3 + np.transpose(c3, (1, 0, 2)) + np.transpose(c3, (2, 0, 1))
    assert np.abs(lhs3 - rhs3).max() < 1e-8 * max(1.0, np.abs(lhs3).max())


def test_agrees_with_dense_riemann_oracle(basis3, rng):
    seq = random_sequence(rng, 5)
    ci = compute_c_integrals(seq, basis3, 3)
    ref = riemann_c_integrals(seq, basis3, 3)
    for r in range(1, 4):
        rel = np.abs(ci[r] - ref[r - 1]).max() / np.abs(ref[r - 1]).max()
        assert rel < 1e-4


def test_node_doubling_converges(basis3, rng):
    seq = random_sequence(rng, 6)
    assert doubling_gap(seq, basis3, 3, 16) < 1e-8


def test_order_cap_and_bounds(basis3, rng):
    tr = toggling_trace(random_sequence(rng, 3), basis3, 8)
    with pytest.raises(ValueError):
        c_integrals(tr, 5)
    with pytest.raises(ValueError):
        c_integrals(tr, 0)
    with pytest.raises(KeyError):
        c_integrals(tr, 2)[3]


def test_first_order_is_time_integral(basis3, rng):
    seq = random_sequence(rng, 4)
    tr = toggling_trace(seq, basis3, 16)
    ci = c_integrals(tr, 1)
    assert np.allclose(ci[1], tr.matrix @ tr.weights)
    assert ci.total_time == pytest.approx(seq.total_time)


def test_parity_residual_zero_for_palindromic_trace(basis3):
    # idle cycles have a constant trace, so every tensor is symmetric up to sign
    from hameng.model import ControlSegment, ControlSequence

    seq = ControlSequence((ControlSegment(2.0),) * 3)
    ci = compute_c_integrals(seq, basis3, 2)
    assert parity_residual(ci, 2) < 1e-12
