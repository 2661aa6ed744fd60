"""Toggling-frame coefficient traces and their time-ordered integrals.

Two routes compute the coefficients ``c_i(t)`` of the toggling-frame
perturbation in a :class:`~hameng.cspace.CSpaceBasis`:

* ``method="adjoint"`` evolves the coefficient vector directly with the
  adjoint representation of the collective controls on the basis (exact for
  piecewise-constant controls, |C|-dimensional, fast).
* ``method="matrix"`` conjugates every parameter block by the primary
  propagator and projects, checking that nothing leaks out of the basis.

Time-ordered integrals use composite Gauss-Legendre quadrature with a
spectral integration matrix inside each segment and Chen's concatenation
identity across segment boundaries. The convention is that the first index
carries the latest time::

    cbar[i1, ..., ir] = int_0^T dt1 int_0^t1 dt2 ... c_i1(t1) ... c_ir(tr)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from numpy.polynomial import legendre

from . import ops
from .cspace import CSpaceBasis, CSpaceError, adjoint_matrices, control_coordinates, project
from .model import ControlSequence, control_axis, control_hamiltonian

DEFAULT_NODES = 16
ORDER_CAP = 4
RESIDUAL_TOL = 1e-9
QUADRATURE_RTOL = 1e-8


@lru_cache(maxsize=32)
def gauss_legendre_unit(n_nodes: int):
    """Nodes, weights and integration matrix of ``n_nodes``-point GL on ``[0, 1]``.

    ``S[j, k]`` integrates the ``k``-th Lagrange basis polynomial from 0 to
    node ``j``; it is exact for polynomials of degree ``< n_nodes``.
    """
    x, w = legendre.leggauss(n_nodes)
    eye = np.eye(n_nodes)
    vander = legendre.legvander(x, n_nodes - 1)
    vint = np.column_stack(
        [legendre.legval(x, legendre.legint(eye[m], lbnd=-1)) for m in range(n_nodes)]
    )
    smat = np.linalg.solve(vander.T, vint.T).T
    for arr in (x, w, smat):
        arr.setflags(write=False)
    return (x + 1) / 2, w / 2, smat / 2


@dataclass
class ToggleTrace:
    """Coefficient samples on per-segment Gauss-Legendre nodes.

    ``values[q, j, i]`` is ``c_i`` at node ``j`` of segment ``q``.
    """

    durations: np.ndarray
    unit_nodes: np.ndarray
    unit_weights: np.ndarray
    values: np.ndarray

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    @property
    def times(self) -> np.ndarray:
        starts = np.concatenate([[0.0], np.cumsum(self.durations)[:-1]])
        return (starts[:, None] + self.durations[:, None] * self.unit_nodes[None, :]).ravel()

    @property
    def weights(self) -> np.ndarray:
        return (self.durations[:, None] * self.unit_weights[None, :]).ravel()

    @property
    def matrix(self) -> np.ndarray:
        """``|C| x (nodes)`` matrix of samples."""
        return self.values.reshape(-1, self.values.shape[-1]).T


@dataclass
class CIntegralTensor:
    order: int
    tensors: list
    total_time: float

    def __getitem__(self, r: int) -> np.ndarray:
        if not 1 <= r <= self.order:
            raise KeyError(f"order {r} not computed (have 1..{self.order})")
        return self.tensors[r - 1]

    def vector(self, r: int) -> np.ndarray:
        """Flattened order-``r`` tensor (last index fastest)."""
        return self[r].reshape(-1)


class FrameDynamics:
    """Adjoint-representation evolution of toggling-frame coefficients."""

    def __init__(self, basis: CSpaceBasis):
        self.basis = basis
        self.gen = adjoint_matrices(basis)
        self.ctrl = control_coordinates(basis)
        k = len(basis)
        c0 = np.zeros(k)
        for comp in basis.components:
            if comp.static is not None:
                c, _ = project(comp.static, basis)
                c0 += c
        self.c0 = c0

    def segment_values(self, axes: np.ndarray, durations: np.ndarray, unit_nodes: np.ndarray,
                       ) -> np.ndarray:
        """Coefficients at ``durations[q] * unit_nodes`` inside each segment, ``(Q, N, k)``.

        ``axes`` holds the rotation vectors ``(wx, wy, wz)`` of the segments.
        """
        lam = np.einsum("qa,aij->qij", axes, self.gen)
        mu, v = np.linalg.eigh(1j * lam)
        start = self.c0[None, :] + axes @ self.ctrl
        y = np.einsum("qki,qk->qi", v.conj(), start)
        tau = durations[:, None] * unit_nodes[None, :]
        phase = np.exp(-1j * mu[:, None, :] * tau[:, :, None])
        local = np.einsum("qik,qjk->qji", v, phase * y[:, None, :]).real
        ends = np.einsum("qik,qk,qlk->qil", v, np.exp(-1j * mu * durations[:, None]), v.conj()).real
        frame = np.eye(len(self.c0))
        out = np.empty_like(local)
        for q in range(len(durations)):
            out[q] = local[q] @ frame.T
            frame = frame @ ends[q]
        return out

    def trace(self, seq: ControlSequence, nodes_per_segment: int = DEFAULT_NODES) -> ToggleTrace:
        x, w, _ = gauss_legendre_unit(nodes_per_segment)
        arr = seq.as_array()
        axes = np.column_stack(
            [arr[:, 1] * np.cos(arr[:, 2]), arr[:, 1] * np.sin(arr[:, 2]), arr[:, 3]]
        )
        vals = self.segment_values(axes, arr[:, 0], x)
        return ToggleTrace(arr[:, 0].copy(), x, w, vals)


def toggling_trace(seq: ControlSequence, basis: CSpaceBasis,
                   nodes_per_segment: int = DEFAULT_NODES, method: str = "adjoint",
                   dynamics: FrameDynamics | None = None) -> ToggleTrace:
    """Coefficients of ``U_pri^dagger(t) H_pert(t) U_pri(t)`` along ``seq``."""
    if nodes_per_segment < 4:
        raise ValueError("nodes_per_segment must be >= 4")
    if method == "adjoint":
        return (dynamics or FrameDynamics(basis)).trace(seq, nodes_per_segment)
    if method != "matrix":
        raise ValueError(f"unknown method {method!r}")
    x, w, _ = gauss_legendre_unit(nodes_per_segment)
    n = basis.n
    frame = np.eye(1 << n, dtype=complex)
    vals = np.empty((len(seq), nodes_per_segment, len(basis)))
    for q, seg in enumerate(seq.segments):
        hc = control_hamiltonian(seg, n)
        evals, evecs = np.linalg.eigh(hc)
        comps = [c.at(seg) for c in basis.components]
        for j, tau in enumerate(x * seg.duration):
            u = (evecs * np.exp(-1j * evals * tau)) @ evecs.conj().T @ frame
            total = np.zeros(len(basis))
            for op in comps:
                c, resid = project(op.conjugate_by(u), basis)
                if resid > RESIDUAL_TOL * max(1.0, op.norm()):
                    raise CSpaceError(
                        f"toggled perturbation leaves the basis (residual {resid:.2e})"
                    )
                total += c
            vals[q, j] = total
        frame = (evecs * np.exp(-1j * evals * seg.duration)) @ evecs.conj().T @ frame
    return ToggleTrace(np.array([s.duration for s in seq.segments]), x, w, vals)


def coefficients_at(seq: ControlSequence, basis: CSpaceBasis, t: float) -> np.ndarray:
    """Direct conjugation of the perturbation at a single time ``t`` (oracle helper)."""
    n = basis.n
    u = np.eye(1 << n, dtype=complex)
    bounds = seq.boundaries
    q = int(np.clip(np.searchsorted(bounds, t, side="right") - 1, 0, len(seq) - 1))
    for seg in seq.segments[:q]:
        u = ops.expm_skew(control_hamiltonian(seg, n), seg.duration) @ u
    seg = seq.segments[q]
    u = ops.expm_skew(control_hamiltonian(seg, n), t - bounds[q]) @ u
    total = np.zeros(len(basis))
    for comp in basis.components:
        c, _ = project(comp.at(seg).conjugate_by(u), basis)
        total += c
    return total


# ------------------------------------------------------------------ integrals


def segment_integrals(trace: ToggleTrace, order: int) -> list:
    """Per-segment local iterated integrals, ``[L1 (Q,k), L2 (Q,k,k), ...]``."""
    n_nodes = len(trace.unit_nodes)
    _, w, smat = gauss_legendre_unit(n_nodes)
    dur = trace.durations
    c = trace.values  # (Q, N, k)
    out = []
    inner = None  # running J^{(r-1)} at the nodes, shape (Q, N, k, ..., k)
    for r in range(1, order + 1):
        if inner is None:
            integrand = c
        else:
            integrand = c.reshape(c.shape + (1,) * (r - 1)) * inner[:, :, None, ...]
        out.append(np.einsum("j,qj...->q...", w, integrand) * dur.reshape((-1,) + (1,) * r))
        if r < order:
            inner = np.einsum("ij,qj...->qi...", smat, integrand) * dur.reshape(
                (-1, 1) + (1,) * r
            )
    return out


def c_integrals(trace: ToggleTrace, order: int, cap: int = ORDER_CAP) -> CIntegralTensor:
    """All time-ordered integrals up to ``order``, accumulated with Chen's identity."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > cap:
        raise ValueError(f"order {order} exceeds the configured cap {cap}")
    local = segment_integrals(trace, order)
    k = trace.values.shape[-1]
    acc = [np.zeros((k,) * r) for r in range(1, order + 1)]
    for q in range(trace.n_segments):
        new = []
        for r in range(1, order + 1):
            t = acc[r - 1] + local[r - 1][q]
            for p in range(1, r):
                # later segment supplies the leading p indices
                t = t + np.multiply.outer(local[p - 1][q], acc[r - p - 1])
            new.append(t)
        acc = new
    return CIntegralTensor(order, acc, trace.total_time)


def compute_c_integrals(seq: ControlSequence, basis: CSpaceBasis, order: int,
                        nodes_per_segment: int = DEFAULT_NODES,
                        dynamics: FrameDynamics | None = None) -> CIntegralTensor:
    tr = toggling_trace(seq, basis, nodes_per_segment, dynamics=dynamics)
    return c_integrals(tr, order)


def parity_residual(cint: CIntegralTensor, r: int, indices=None) -> float:
    """Root-sum-square of ``cbar[i1..ir] - (-1)^r cbar[ir..i1]`` over non-constant tuples.

    ``indices`` optionally restricts the tuples to a subset of basis indices.
    """
    if cint.order < r:
        raise ValueError(f"need order >= {r}")
    t = cint[r]
    diff = t - (-1) ** r * np.transpose(t, tuple(range(r))[::-1])
    if indices is not None:
        idx = np.asarray(indices)
        diff = diff[np.ix_(*([idx] * r))]
    mask = np.ones(diff.shape, dtype=bool)
    for i in range(diff.shape[0]):
        mask[(i,) * r] = False
    return float(np.sqrt(np.sum(diff[mask] ** 2)))


def doubling_gap(seq: ControlSequence, basis: CSpaceBasis, order: int,
                 nodes_per_segment: int = DEFAULT_NODES,
                 dynamics: FrameDynamics | None = None) -> float:
    """Largest relative change of any tensor entry when the node count doubles."""
    dyn = dynamics or FrameDynamics(basis)
    a = compute_c_integrals(seq, basis, order, nodes_per_segment, dyn)
    b = compute_c_integrals(seq, basis, order, 2 * nodes_per_segment, dyn)
    gap = 0.0
    for r in range(1, order + 1):
        scale = max(np.abs(b[r]).max(), 1e-300)
        gap = max(gap, float(np.abs(a[r] - b[r]).max() / scale))
    return gap


def all_index_tuples(k: int, r: int):
    return product(range(k), repeat=r)
