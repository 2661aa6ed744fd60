"""Magnus terms from time-ordered coefficient integrals.

``Hbar^(r-1) T = sum_{i1..ir} F(h_i1, ..., h_ir) cbar[i1..ir]`` where ``F`` is
a signed sum over all orderings of the product ``h_i1 ... h_ir``, weighted by
the ascent/descent statistics of the ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

from . import ops
from .cspace import CSpaceBasis
from .model import ControlSequence, NetworkSpec, ParameterRealization, control_hamiltonian, \
    internal_hamiltonian

F_ORDER_CAP = 4


@dataclass(frozen=True)
class PermutationWeight:
    perm: tuple
    ascents: int
    descents: int
    weight: complex


@lru_cache(maxsize=None)
def permutation_weights(r: int) -> tuple:
    """All ``r!`` orderings with weight ``(-i)^(r-1) (-1)^db da! db! / r!``.

    The ordering is the word ``(perm[0], ..., perm[r-1])``; a descent is a
    position with ``perm[k] > perm[k+1]``.
    """
    out = []
    for p in permutations(range(r)):
        db = sum(1 for a, b in zip(p, p[1:]) if a > b)
        da = r - 1 - db
        w = (-1j) ** (r - 1) * (-1) ** db * math.factorial(da) * math.factorial(db) / math.factorial(r)
        out.append(PermutationWeight(p, da, db, complex(w)))
    return tuple(out)


def _check_order(r: int, cap: int) -> None:
    if not 1 <= r <= cap:
        raise ValueError(f"order {r} outside 1..{cap}")


def f_coefficient(operators, cap: int = F_ORDER_CAP) -> np.ndarray:
    """``F(a_1, ..., a_r) = sum_pi w(pi) a_pi(1) ... a_pi(r)``."""
    r = len(operators)
    _check_order(r, cap)
    out = np.zeros_like(operators[0], dtype=complex)
    for pw in permutation_weights(r):
        prod = operators[pw.perm[0]]
        for k in pw.perm[1:]:
            prod = prod @ operators[k]
        out += pw.weight * prod
    return out


def _ordered_products(stacks) -> np.ndarray:
    """``P[j1, ..., jr] = Y1[j1] @ ... @ Yr[jr]`` for stacks of shape ``(k, d, d)``."""
    out = stacks[0]
    for y in stacks[1:]:
        out = np.matmul(out[..., None, :, :], y)
    return out


def f_tensor(slot_stacks) -> np.ndarray:
    """``T[i1, ..., ir] = F(X1[i1], ..., Xr[ir])`` for per-slot stacks ``Xk``."""
    r = len(slot_stacks)
    _check_order(r, F_ORDER_CAP)
    out = None
    for pw in permutation_weights(r):
        prod = _ordered_products([slot_stacks[k] for k in pw.perm])
        # prod axis k carries the index of slot perm[k]
        inv = np.argsort(pw.perm)
        term = pw.weight * np.transpose(prod, tuple(inv) + (r, r + 1))
        out = term if out is None else out + term
    return out


def contract_f(weights: np.ndarray, slot_stacks) -> np.ndarray:
    """``sum_i weights[i1..ir] F(X1[i1], ..., Xr[ir])`` without forming the full tensor."""
    r = len(slot_stacks)
    _check_order(r, F_ORDER_CAP)
    d = slot_stacks[0].shape[-1]
    total = np.zeros((d, d), dtype=complex)
    for pw in permutation_weights(r):
        c = np.transpose(weights, pw.perm)
        ys = [slot_stacks[k] for k in pw.perm]
        acc = np.einsum("j...,jxy->...xy", c, ys[0])
        for y in ys[1:]:
            acc = np.einsum("j...xy,jyz->...xz", acc, y)
        total += pw.weight * acc
    return total


def reconstruct_magnus(cint, basis: CSpaceBasis, real, order: int) -> list:
    """Magnus terms ``[Hbar^(0), ..., Hbar^(order-1)]`` at a parameter realization."""
    if cint.order < order:
        raise ValueError(f"C-integrals computed to order {cint.order} < {order}")
    values = real.values if isinstance(real, ParameterRealization) else real
    h = basis.instantiate(values)
    out = []
    for r in range(1, order + 1):
        term = contract_f(cint[r], [h] * r) / cint.total_time
        out.append(ops.hermitian_part(term))
    return out


# ---------------------------------------------------------- graph derivatives


def slot_assignments(graph_edges) -> list:
    """Distinct orderings of the parameter multiset over the slots."""
    return sorted(set(permutations(graph_edges)), key=repr)


def graph_derivative_f(indices, graph_edges, basis: CSpaceBasis) -> np.ndarray:
    """Taylor coefficient of ``prod_{m in G} eta_m`` in ``F(h_i1(eta), ..., h_ir(eta))``.

    This is the sum over distinct assignments of the multiset ``G`` to the
    slots; for distinct parameters it equals the mixed partial derivative.
    Zero when ``|G| != r`` or when a slot has no block for its parameter.
    """
    r = len(indices)
    d = 1 << basis.n
    zero = np.zeros((d, d), dtype=complex)
    if len(graph_edges) != r:
        return zero
    total = zero.copy()
    for assign in slot_assignments(graph_edges):
        blocks = [basis.elements[i].blocks.get(m) for i, m in zip(indices, assign)]
        if any(b is None for b in blocks):
            continue
        total += f_coefficient(blocks)
    return total


def graph_derivative_tensor(graph_edges, basis: CSpaceBasis, order: int | None = None,
                            ) -> np.ndarray:
    """All ``d_G F[i1..ir]`` at once, shape ``(k,)*r + (d, d)``."""
    r = len(graph_edges) if order is None else order
    k, d = len(basis), 1 << basis.n
    if len(graph_edges) != r:
        return np.zeros((k,) * r + (d, d), dtype=complex)
    zero = np.zeros((k, d, d), dtype=complex)
    out = None
    for assign in slot_assignments(graph_edges):
        stacks = [basis.stacks.get(m, zero) for m in assign]
        if any(not s.any() for s in stacks):
            continue
        t = f_tensor(stacks)
        out = t if out is None else out + t
    if out is None:
        out = np.zeros((k,) * r + (d, d), dtype=complex)
    return out


def graph_derivative_magnus(cint, basis: CSpaceBasis, graph_edges) -> np.ndarray:
    """``d_G Hbar^(r-1)`` for ``r = |G|``."""
    r = len(graph_edges)
    zero = np.zeros((len(basis), 1 << basis.n, 1 << basis.n), dtype=complex)
    total = None
    for assign in slot_assignments(graph_edges):
        stacks = [basis.stacks.get(m, zero) for m in assign]
        t = contract_f(cint[r], stacks)
        total = t if total is None else total + t
    return ops.hermitian_part(total / cint.total_time)


# ------------------------------------------------------------------- oracle


def toggled_perturbation_slices(seq: ControlSequence, net: NetworkSpec, real, slices: int):
    """Midpoint samples of the toggling-frame perturbation and the slice widths."""
    values = real.values if isinstance(real, ParameterRealization) else real
    eps = sum(v for m, v in values.items() if isinstance(m, str))
    pr = ParameterRealization({m: values.get(m, 0.0) for m in net.loops + net.edges})
    h_int = internal_hamiltonian(net, pr)
    frame = np.eye(net.dim, dtype=complex)
    hs, dts = [], []
    for seg in seq.segments:
        hc = control_hamiltonian(seg, net.n)
        w, v = np.linalg.eigh(hc)
        dt = seg.duration / slices
        taus = (np.arange(slices) + 0.5) * dt
        hp = h_int + eps * hc
        for tau in taus:
            u = (v * np.exp(-1j * w * tau)) @ v.conj().T @ frame
            hs.append(u.conj().T @ hp @ u)
            dts.append(dt)
        frame = (v * np.exp(-1j * w * seg.duration)) @ v.conj().T @ frame
    return np.array(hs), np.array(dts)


def _running(x: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """``int_0^{t_j} x`` at slice midpoints: strictly earlier slices plus half of slice j."""
    w = x * dt[:, None, None]
    return np.cumsum(w, axis=0) - 0.5 * w


def _tail(x: np.ndarray, dt: np.ndarray) -> np.ndarray:
    w = x * dt[:, None, None]
    return np.cumsum(w[::-1], axis=0)[::-1] - 0.5 * w


def _comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def magnus_oracle(seq: ControlSequence, net: NetworkSpec, real, order: int,
                  slices: int = 500) -> list:
    """Direct discretized nested-commutator Magnus terms, orders ``r <= 3``.

    Intended for testing; cost grows linearly in ``slices``.
    """
    if order > 3:
        raise ValueError("magnus_oracle supports order <= 3")
    if slices < 500:
        raise ValueError("magnus_oracle needs >= 500 slices per segment")
    hs, dt = toggled_perturbation_slices(seq, net, real, slices)
    total = dt.sum()
    out = [np.einsum("j,jxy->xy", dt, hs) / total]
    if order >= 2:
        a = _running(hs, dt)
        inner = _comm(hs, a)
        out.append(-0.5j * np.einsum("j,jxy->xy", dt, inner) / total)
    if order >= 3:
        a = _running(hs, dt)
        ba = _running(_comm(hs, a), dt)
        term_a = np.einsum("j,jxy->xy", dt, _comm(hs, ba))
        tail = _tail(hs, dt)
        bb = _tail(_comm(hs, tail), dt)
        term_b = np.einsum("j,jxy->xy", dt, _comm(hs, bb))
        out.append(-(term_a + term_b) / (6 * total))
    return [ops.hermitian_part(h) for h in out]


def effective_hamiltonian(seq: ControlSequence, net: NetworkSpec, real) -> np.ndarray:
    """``logm(U_pert) / T`` where ``U = U_pri U_pert``."""
    from .model import primary_propagator, total_propagator

    values = real.values if isinstance(real, ParameterRealization) else real
    pr = ParameterRealization({m: values.get(m, 0.0) for m in net.parameter_ids})
    u = total_propagator(seq, net, pr)
    u_pri = primary_propagator(seq, net.n)
    return ops.logm_unitary(u_pri.conj().T @ u) / seq.total_time
