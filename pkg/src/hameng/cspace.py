"""Minimal composite operator space of the toggling-frame perturbation.

A :class:`ParametricOperator` is a linear form ``sum_m eta_m O_m`` stored as a
map from parameter id to the operator block ``O_m``. The space of such forms
carries the inner product ``<<A, B>> = sum_m hs_inner(A_m, B_m)``, and the
primary algebra acts on it blockwise through ``X -> i[g, X]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .model import (
    ControlSegment,
    NetworkSpec,
    ParamId,
    control_hamiltonian,
    format_param,
    parameter_operator,
    param_sort_key,
)

RANK_RTOL = 1e-9
COMPONENT_ORDER = ("error", "detuning", "coupling")


class CSpaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParametricOperator:
    blocks: dict
    component_tag: str = ""

    def __post_init__(self):
        dims = {b.shape for b in self.blocks.values()}
        if len(dims) > 1:
            raise CSpaceError(f"blocks disagree on dimension: {dims}")

    @property
    def params(self) -> tuple:
        return tuple(sorted(self.blocks, key=param_sort_key))

    @property
    def dim(self) -> int:
        return next(iter(self.blocks.values())).shape[0]

    def block(self, m: ParamId):
        return self.blocks.get(m)

    def instantiate(self, values) -> np.ndarray:
        """Evaluate the linear form at concrete parameter values."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for m, b in self.blocks.items():
            v = values.get(m, 0.0)
            if v:
                out += v * b
        return out

    def map(self, fn) -> "ParametricOperator":
        return ParametricOperator({m: fn(b) for m, b in self.blocks.items()}, self.component_tag)

    def conjugate_by(self, u: np.ndarray) -> "ParametricOperator":
        """Blockwise ``u^dagger O_m u``."""
        ud = u.conj().T
        return self.map(lambda b: ud @ b @ u)

    def adjoint_action(self, g: np.ndarray) -> "ParametricOperator":
        """Blockwise ``i [g, O_m]`` (keeps Hermitian blocks Hermitian)."""
        return self.map(lambda b: 1j * ops.commutator(g, b))

    def __add__(self, other):
        keys = set(self.blocks) | set(other.blocks)
        out = {}
        for m in keys:
            a, b = self.blocks.get(m), other.blocks.get(m)
            out[m] = a if b is None else (b if a is None else a + b)
        return ParametricOperator(out, self.component_tag)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, s: float):
        return self.map(lambda b: s * b)

    __rmul__ = __mul__

    def inner(self, other: "ParametricOperator") -> float:
        total = 0.0
        for m, a in self.blocks.items():
            b = other.blocks.get(m)
            if b is not None:
                total += ops.hs_inner(a, b).real
        return total

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))


def parametric_coordinates(op: ParametricOperator, param_ids) -> np.ndarray:
    """Real Pauli coordinates ``(param id) x (Pauli string)``, flattened."""
    dim = op.dim
    out = []
    for m in param_ids:
        b = op.blocks.get(m)
        if b is None:
            out.append(np.zeros(dim * dim))
        else:
            out.append(ops.pauli_coefficients(b).real)
    return np.concatenate(out)


# ------------------------------------------------------------------ generators


def primary_generators(net: NetworkSpec, max_iter: int = 16) -> list:
    """Commutator closure of the collective controls ``SX/2, SY/2, SZ/2``."""
    gens = [0.5 * ops.collective(c, net.n) for c in "XYZ"]
    coords = [ops.pauli_coefficients(g).real for g in gens]
    basis = _orthonormal_rows(np.array(coords))
    for _ in range(max_iter):
        added = False
        for a in list(gens):
            for b in list(gens):
                c = 1j * ops.commutator(a, b)
                v = ops.pauli_coefficients(c).real
                if _enlarges(basis, v):
                    gens.append(ops.hermitian_part(c))
                    basis = _orthonormal_rows(np.vstack([basis, v]))
                    added = True
        if not added:
            return gens
    raise CSpaceError(f"generator closure did not converge (size {len(gens)})")


def _orthonormal_rows(m: np.ndarray) -> np.ndarray:
    if m.size == 0:
        return m.reshape(0, m.shape[-1] if m.ndim == 2 else 0)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    keep = s > RANK_RTOL * max(s[0], 1e-300)
    return vt[keep]


def _enlarges(basis: np.ndarray, v: np.ndarray, rtol: float = RANK_RTOL) -> bool:
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return False
    resid = v - basis.T @ (basis @ v) if len(basis) else v
    return np.linalg.norm(resid) > rtol * nv


# ------------------------------------------------------------------ components


@dataclass(frozen=True)
class PerturbationComponent:
    """One summand ``H_pert^w`` of the perturbation, as a parametric operator.

    ``static`` is ``None`` for the control-error component, whose block is the
    (time-dependent) control Hamiltonian itself.
    """

    name: str
    params: tuple
    n: int
    static: ParametricOperator | None = None

    @property
    def time_dependent(self) -> bool:
        return self.static is None

    def at(self, seg: ControlSegment) -> ParametricOperator:
        if self.static is not None:
            return self.static
        h = control_hamiltonian(seg, self.n)
        return ParametricOperator({m: h for m in self.params}, self.name)

    def seed(self, rng: np.random.Generator) -> ParametricOperator:
        """Representative element used to grow the space."""
        if self.static is not None:
            return self.static
        w = rng.standard_normal(3)
        seg = ControlSegment(1.0, float(np.hypot(w[0], w[1])), float(np.arctan2(w[1], w[0])),
                             float(w[2]))
        return self.at(seg)


def perturbation_components(net: NetworkSpec, include=COMPONENT_ORDER) -> list:
    """Split the perturbation into error, detuning and coupling components.

    Components whose parameter set is empty on ``net`` are dropped.
    """
    comps = []
    for name in COMPONENT_ORDER:
        if name not in include:
            continue
        if name == "error" and net.error_ids:
            comps.append(PerturbationComponent("error", tuple(net.error_ids), net.n))
        elif name == "detuning" and net.loops:
            blocks = {m: parameter_operator(m, net) for m in net.loops}
            comps.append(PerturbationComponent("detuning", net.loops, net.n,
                                               ParametricOperator(blocks, "detuning")))
        elif name == "coupling" and net.edges:
            blocks = {m: parameter_operator(m, net) for m in net.edges}
            comps.append(PerturbationComponent("coupling", net.edges, net.n,
                                               ParametricOperator(blocks, "coupling")))
    return comps


# ----------------------------------------------------------------------- basis


@dataclass
class CSpaceBasis:
    elements: list
    components: list
    offsets: list
    dims: list
    param_ids: tuple
    n: int
    composite_dim: int | None = None
    _stack: dict = field(default=None, repr=False)

    def __len__(self):
        return len(self.elements)

    @property
    def component_names(self) -> list:
        return [c.name for c in self.components]

    def component_slice(self, name: str) -> slice:
        k = self.component_names.index(name)
        return slice(self.offsets[k], self.offsets[k] + self.dims[k])

    def component_of(self, i: int) -> str:
        return self.elements[i].component_tag

    @property
    def stacks(self) -> dict:
        """Per parameter id, the ``(|C|, d, d)`` array of blocks (zeros where absent)."""
        if self._stack is None:
            d = 1 << self.n
            st = {}
            for m in self.param_ids:
                arr = np.zeros((len(self.elements), d, d), dtype=complex)
                for i, h in enumerate(self.elements):
                    b = h.blocks.get(m)
                    if b is not None:
                        arr[i] = b
                st[m] = arr
            self._stack = st
        return self._stack

    def gram(self) -> np.ndarray:
        k = len(self.elements)
        g = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                g[i, j] = self.elements[i].inner(self.elements[j])
        return g

    def instantiate(self, values) -> np.ndarray:
        """Stack of ``h_i(eta)`` for concrete parameter values, shape ``(|C|, d, d)``."""
        d = 1 << self.n
        out = np.zeros((len(self.elements), d, d), dtype=complex)
        for m, arr in self.stacks.items():
            v = values.get(m, 0.0)
            if v:
                out += v * arr
        return out

    def dump(self, tol: float = 1e-12) -> dict:
        """JSON-ready description: dimensions and (param, Pauli, coefficient) triples."""
        elems = []
        for i, h in enumerate(self.elements):
            terms = []
            for m in h.params:
                for label, c in ops.to_pauli_map(h.blocks[m], tol).items():
                    terms.append([format_param(m), label, float(np.real(c))])
            elems.append({"index": i, "component": h.component_tag, "terms": terms})
        return {
            "n": self.n,
            "components": self.component_names,
            "dims": list(self.dims),
            "total": len(self.elements),
            "composite_minimal_dim": self.composite_dim,
            "elements": elems,
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.dump(), fh, indent=1)


def project(op: ParametricOperator, basis: CSpaceBasis) -> tuple:
    """Coefficients ``<<h_i, op>>`` and the norm of the unexplained remainder."""
    c = np.zeros(len(basis.elements))
    d = 1 << basis.n
    for m, b in op.blocks.items():
        st = basis.stacks.get(m)
        if st is not None:
            c += (np.einsum("ixy,xy->i", st.conj(), b) / d).real
    resid2 = 0.0
    for m, b in op.blocks.items():
        st = basis.stacks.get(m)
        rem = b if st is None else b - np.einsum("i,ixy->xy", c, st)
        resid2 += float(np.vdot(rem, rem).real) / d
    return c, float(np.sqrt(resid2))


def projection_residual(op: ParametricOperator, basis: CSpaceBasis) -> float:
    """Residual norm computed explicitly from ``op - sum c_i h_i``."""
    c, _ = project(op, basis)
    rem = op
    for ci, h in zip(c, basis.elements):
        if ci:
            rem = rem - ci * h
    return rem.norm()


def _grow(seeds: list, gens: list, param_ids, max_iter: int, label: str) -> list:
    """Algorithm-1 span growth: apply generators to the newest vectors until closed."""
    vecs: list = []
    coords = np.zeros((0, 0))
    for s in seeds:
        v = parametric_coordinates(s, param_ids)
        if coords.size == 0:
            if np.linalg.norm(v) > 0:
                vecs.append(s)
                coords = v[None, :]
        elif _independent(coords, v):
            vecs.append(s)
            coords = np.vstack([coords, v])
    if not vecs:
        return []
    i_max, i_new, it = len(vecs), len(vecs), 0
    while i_new > 0:
        it += 1
        if it > max_iter:
            raise CSpaceError(f"{label}: span growth exceeded {max_iter} rounds (dim {len(vecs)})")
        t = 0
        for i in range(i_max - i_new, i_max):
            for g in gens:
                cand = vecs[i].adjoint_action(g)
                v = parametric_coordinates(cand, param_ids)
                if _independent(coords, v):
                    vecs.append(cand)
                    coords = np.vstack([coords, v])
                    t += 1
        i_max += t
        i_new = t
    return vecs


def _independent(coords: np.ndarray, v: np.ndarray) -> bool:
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return False
    scale = max(nv, np.linalg.norm(coords, axis=1).max())
    q, _ = np.linalg.qr(coords.T)
    resid = v - q @ (q.T @ v)
    return np.linalg.norm(resid) > RANK_RTOL * scale


def _gram_schmidt(vecs: list) -> list:
    out: list = []
    for v in vecs:
        w = v
        for _ in range(2):  # re-orthogonalize once for stability
            for u in out:
                w = w - u.inner(w) * u
        nrm = w.norm()
        if nrm > RANK_RTOL * max(v.norm(), 1e-300):
            out.append(w * (1.0 / nrm))
    return out


def minimal_composite_cspace(components: list, gens: list | None = None,
                             net: NetworkSpec | None = None, seed: int = 12345,
                             max_iter: int = 64) -> CSpaceBasis:
    """Orthonormal basis of the composite space, grown component by component.

    Each component is seeded with its own perturbation and closed under the
    primary algebra; the per-component bases are concatenated so that each
    basis element belongs to exactly one component. The dimension of the
    minimal composite space (single direct-sum seed) is computed as well and
    stored in ``composite_dim``.
    """
    if not components:
        raise CSpaceError("need at least one perturbation component")
    n = components[0].n
    if gens is None:
        gens = primary_generators(net if net is not None else NetworkSpec(n))
    rng = np.random.default_rng(seed)
    elements, offsets, dims = [], [], []
    all_ids: list = []
    seeds = []
    for comp in components:
        s = comp.seed(rng)
        seeds.append(s)
        ids = comp.params
        vecs = _grow([s], gens, ids, max_iter, comp.name)
        ortho = _gram_schmidt(vecs)
        for h in ortho:
            object.__setattr__(h, "component_tag", comp.name)
        offsets.append(len(elements))
        dims.append(len(ortho))
        elements.extend(ortho)
        all_ids.extend(ids)
    param_ids = tuple(all_ids)
    # minimal composite: one seed vector, the direct sum of all components
    combined = seeds[0]
    for s in seeds[1:]:
        combined = combined + s
    comp_dim = len(_grow([combined], gens, param_ids, max_iter, "composite"))
    return CSpaceBasis(elements, list(components), offsets, dims, param_ids, n, comp_dim)


def build_cspace(net: NetworkSpec, include=COMPONENT_ORDER, seed: int = 12345) -> CSpaceBasis:
    comps = perturbation_components(net, include)
    return minimal_composite_cspace(comps, primary_generators(net), net, seed=seed)


def adjoint_matrices(basis: CSpaceBasis, gens: list | None = None) -> np.ndarray:
    """Matrices ``M_a[i, j] = <<h_i, i[g_a, h_j]>>`` for the collective generators.

    With ``g = (SX/2, SY/2, SZ/2)`` these are real and antisymmetric, and
    block-diagonal over components.
    """
    if gens is None:
        gens = [0.5 * ops.collective(c, basis.n) for c in "XYZ"]
    k = len(basis.elements)
    out = np.zeros((len(gens), k, k))
    for a, g in enumerate(gens):
        for j, h in enumerate(basis.elements):
            c, _ = project(h.adjoint_action(g), basis)
            out[a, :, j] = c
    return out


def control_coordinates(basis: CSpaceBasis) -> np.ndarray:
    """Coordinates of the error component with block ``g_a`` for each generator.

    Row ``a`` is the projection of ``{e: S_a/2}``; the error coordinates for a
    segment with rotation vector ``w`` are ``w @ rows``.
    """
    k = len(basis.elements)
    out = np.zeros((3, k))
    err = [c for c in basis.components if c.name == "error"]
    if not err:
        return out
    for a, letter in enumerate("XYZ"):
        g = 0.5 * ops.collective(letter, basis.n)
        op = ParametricOperator({m: g for m in err[0].params}, "error")
        out[a], _ = project(op, basis)
    return out
