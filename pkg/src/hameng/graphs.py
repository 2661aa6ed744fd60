"""Parameter graphs, achievable subspaces and linear constraint systems.

A parameter graph is a multiset of parameter ids; coupling ids ``(i, j)`` are
edges, detuning ids ``(i, i)`` are loops and error ids are formal edges that
attach to nothing. Graph derivatives ``d_G F`` of the Magnus coefficients are
vectorized over Pauli coordinates and stacked into ``A(G)`` whose columns are
indexed by the flattened C-integral tuples ``(i1, ..., ir)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations

import numpy as np

from . import ops
from .cspace import CSpaceBasis
from .magnus import graph_derivative_tensor
from .model import NetworkSpec, ParamId, format_param, is_error_id, param_sort_key, parse_param

RANK_RTOL = 1e-9
SUPPORT_RTOL = 1e-12
COMPONENT_OF = {"error": "error", "loop": "detuning", "edge": "coupling"}


class InfeasibleTargetError(ValueError):
    """A requested target lies outside the reachable set; ``distance`` says how far."""

    def __init__(self, message: str, distance: float, graph=None):
        super().__init__(message)
        self.distance = distance
        self.graph = graph


def _kind(m: ParamId) -> str:
    if is_error_id(m):
        return "error"
    return "loop" if m[0] == m[1] else "edge"


def _sorted_ids(ids) -> tuple:
    return tuple(sorted(ids, key=param_sort_key))


@dataclass(frozen=True)
class ParameterGraph:
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "edges", _sorted_ids(self.edges))

    @classmethod
    def parse(cls, text: str) -> "ParameterGraph":
        body = text.strip().strip("{}")
        return cls(tuple(parse_param(t) for t in body.split(",") if t.strip()))

    @property
    def r(self) -> int:
        return len(self.edges)

    @property
    def vertices(self) -> tuple:
        return tuple(sorted({v for m in self.edges if not is_error_id(m) for v in m}))

    @property
    def error_count(self) -> int:
        return sum(1 for m in self.edges if is_error_id(m))

    @property
    def label(self) -> str:
        return "{" + ",".join(format_param(m) for m in self.edges) + "}"

    def __str__(self):
        return self.label

    def is_connected(self) -> bool:
        """Non-error edges form one connected component; error edges are free."""
        verts = self.vertices
        if not verts:
            return True
        parent = {v: v for v in verts}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for m in self.edges:
            if not is_error_id(m):
                parent[find(m[0])] = find(m[1])
        return len({find(v) for v in verts}) == 1

    def relabel(self, mapping: dict) -> "ParameterGraph":
        out = []
        for m in self.edges:
            if is_error_id(m):
                out.append(m)
            else:
                out.append(tuple(sorted((mapping[m[0]], mapping[m[1]]))))
        return ParameterGraph(tuple(out))

    @property
    def canonical_form(self) -> tuple:
        """Lexicographically smallest sorted edge list over all vertex relabelings."""
        verts = self.vertices
        best = None
        for perm in permutations(range(1, len(verts) + 1)):
            g = self.relabel(dict(zip(verts, perm)))
            key = tuple(param_sort_key(m) for m in g.edges)
            if best is None or key < best[0]:
                best = (key, g.edges)
        return best[1] if best else self.edges

    def isomorphic(self, other: "ParameterGraph") -> bool:
        return self.r == other.r and self.canonical_form == other.canonical_form

    def to_json(self) -> list:
        return [format_param(m) for m in self.edges]


def enumerate_graphs(net: NetworkSpec, r: int, include_error: bool = True,
                     component_filter=None, connected: bool | None = True) -> list:
    """Parameter graphs with ``r`` edges embeddable in ``net``, up to isomorphism.

    ``connected=True`` (default) keeps connected graphs only, ``False`` keeps
    only disconnected ones and ``None`` keeps both. Each class is represented
    by its lexicographically first labeled instance inside ``net``. Output is
    ordered by error-edge count, then by that instance.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    allowed = set(component_filter) if component_filter is not None else None
    ids = []
    for m in net.parameter_ids:
        comp = COMPONENT_OF[_kind(m)]
        if comp == "error" and not include_error:
            continue
        if allowed is not None and comp not in allowed:
            continue
        ids.append(m)
    ids = _sorted_ids(ids)
    seen = {}
    for combo in combinations_with_replacement(ids, r):
        g = ParameterGraph(combo)
        if connected is not None and g.is_connected() != connected:
            continue
        key = g.canonical_form
        if key not in seen:
            seen[key] = g
    return sorted(seen.values(),
                  key=lambda g: (g.error_count, tuple(param_sort_key(m) for m in g.edges)))


# ------------------------------------------------------------ vectorization


def derivative_matrix(graph: ParameterGraph, basis: CSpaceBasis) -> np.ndarray:
    """Pauli coordinates of every ``d_G F[i1..ir]``, shape ``(4**n, |C|**r)``."""
    t = graph_derivative_tensor(graph.edges, basis)
    k = len(basis)
    d = 1 << basis.n
    coeffs = ops.pauli_coefficients(t.reshape((k ** graph.r, d, d)))
    scale = np.abs(coeffs).max(initial=0.0)
    if np.abs(coeffs.imag).max(initial=0.0) > 1e-9 * max(scale, 1.0):
        raise RuntimeError("graph derivative is not Hermitian")
    return coeffs.real.T.copy()


def _support(a: np.ndarray) -> np.ndarray:
    scale = np.abs(a).max(initial=0.0)
    if scale == 0.0:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(np.abs(a).max(axis=1) > SUPPORT_RTOL * scale)


def _target_vector(target, n: int) -> np.ndarray:
    if isinstance(target, dict):
        target = ops.from_pauli_map(target, n)
    target = np.asarray(target)
    if target.ndim == 2:
        return ops.pauli_coefficients(target).real
    return target.astype(float)


def column_space(a: np.ndarray, rtol: float = RANK_RTOL, scale: float = 0.0) -> np.ndarray:
    """Left singular vectors above ``rtol * max(sigma_max, scale)``.

    ``scale`` anchors the cut for matrices that may be numerically zero.
    """
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    ref = max(s[0] if s.size else 0.0, scale)
    if ref == 0.0:
        return np.zeros((a.shape[0], 0))
    return u[:, s > rtol * ref]


def row_space(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    return column_space(a.T, rtol)


def nullspace(a: np.ndarray, rtol: float = RANK_RTOL, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis (columns) of ``{x : a x = 0}``."""
    if a.shape[0] == 0:
        return np.eye(a.shape[1])
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    ref = max(s[0] if s.size else 0.0, scale)
    rank = int(np.sum(s > rtol * ref)) if ref > 0 else 0
    return vt[rank:].T.copy()


@dataclass
class ConstraintSystem:
    """``A(G) c = d(G)`` on the support rows of ``A``.

    ``target`` is the operator form of ``d_G H_target`` as a coefficient vector
    over the support rows, or ``None`` for decoupling. With ``t_prime=None`` and
    a target, the scale is free and only the direction is constrained.
    """

    graph: ParameterGraph
    A: np.ndarray
    rows: np.ndarray
    n: int
    target: np.ndarray | None = None
    t_prime: float | None = None
    _compressed: tuple | None = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return self.graph.r

    @property
    def kind(self) -> str:
        if self.target is None or not np.any(self.target):
            return "decouple"
        return "free" if self.t_prime is None else "fixed"

    @property
    def d(self) -> np.ndarray:
        if self.kind == "decouple":
            return np.zeros(len(self.rows))
        return self.target * (1.0 if self.t_prime is None else self.t_prime)

    @property
    def row_labels(self) -> list:
        return [ops.pauli_label(int(p), self.n) for p in self.rows]

    def achieved_t_prime(self, cvec: np.ndarray) -> float:
        """Best scale ``T'`` with ``A c ~ T' o``; zero for decoupling systems."""
        if self.target is None or not np.any(self.target):
            return 0.0
        return float(self.target @ (self.A @ cvec) / (self.target @ self.target))

    def residual(self, cvec: np.ndarray) -> float:
        ac = self.A @ cvec
        if self.kind == "free":
            return float(np.linalg.norm(ac - self.achieved_t_prime(cvec) * self.target))
        return float(np.linalg.norm(ac - self.d))

    def compressed(self) -> tuple:
        """``(B, d', o')`` with ``B = S V^T`` so that ``|A c - d| = |B c - d'|`` on feasible ``d``."""
        if self._compressed is None:
            u, s, vt = np.linalg.svd(self.A, full_matrices=False)
            keep = s > RANK_RTOL * s[0] if s.size and s[0] > 0 else np.zeros(0, bool)
            u, s, vt = u[:, keep], s[keep], vt[keep]
            tgt = np.zeros(len(self.rows)) if self.target is None else self.target
            self._compressed = (s[:, None] * vt, u.T @ self.d, u.T @ tgt)
        return self._compressed


def constraint_system(graph: ParameterGraph, basis: CSpaceBasis, target=None,
                      t_prime: float | None = 1.0, check: bool = True) -> ConstraintSystem:
    """Assemble ``A(G)`` and the target side.

    ``target`` may be a Pauli map, a matrix or a full Pauli coefficient
    vector. Raises :class:`InfeasibleTargetError` if it has a component outside
    ``S(G)``.
    """
    if isinstance(graph, str):
        graph = ParameterGraph.parse(graph)
    full = derivative_matrix(graph, basis)
    rows = _support(full)
    a = full[rows]
    tvec = None
    if target is not None:
        o = _target_vector(target, basis.n)
        if np.any(o):
            tvec = o[rows]
            if check:
                outside = np.linalg.norm(np.delete(o, rows))
                q = column_space(a)
                inside = tvec - q @ (q.T @ tvec)
                dist = float(np.hypot(outside, np.linalg.norm(inside)))
                if dist > 1e-9 * np.linalg.norm(o):
                    raise InfeasibleTargetError(
                        f"target for {graph.label} lies outside S(G) (residual {dist:.3e})",
                        dist, graph,
                    )
    return ConstraintSystem(graph, a, rows, basis.n, tvec, t_prime)


# ---------------------------------------------------------------- subspaces


@dataclass
class Subspace:
    """Orthonormal basis of an operator subspace in Pauli coordinates."""

    vectors: np.ndarray  # (len(rows), dim)
    rows: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def full_vectors(self) -> np.ndarray:
        out = np.zeros((4 ** self.n, self.dim))
        out[self.rows] = self.vectors
        return out

    def operators(self) -> list:
        labels = [ops.pauli_label(int(p), self.n) for p in self.rows]
        return [ops.from_pauli_map(dict(zip(labels, v)), self.n) for v in self.vectors.T]

    def pauli_maps(self, tol: float = 1e-10) -> list:
        labels = [ops.pauli_label(int(p), self.n) for p in self.rows]
        return [{lab: float(c) for lab, c in zip(labels, v) if abs(c) > tol} for v in self.vectors.T]

    def residual(self, op) -> float:
        """Relative distance of ``op`` from the subspace."""
        o = _target_vector(op, self.n)
        full = self.full_vectors()
        r = o - full @ (full.T @ o)
        return float(np.linalg.norm(r) / max(np.linalg.norm(o), 1e-300))


def achievable_subspace(graph: ParameterGraph, basis: CSpaceBasis,
                        restriction: np.ndarray | None = None) -> Subspace:
    """``S(G)``, optionally with C-integral vectors confined to ``restriction``'s column span."""
    if isinstance(graph, str):
        graph = ParameterGraph.parse(graph)
    full = derivative_matrix(graph, basis)
    rows = _support(full)
    a = full[rows]
    if restriction is not None:
        a = a @ restriction
    return Subspace(column_space(a), rows, basis.n)


def span_distance(ops_a, ops_b, n: int) -> float:
    """Largest relative residual projecting either list onto the span of the other."""
    va = np.column_stack([_target_vector(o, n) for o in ops_a])
    vb = np.column_stack([_target_vector(o, n) for o in ops_b])
    qa, qb = column_space(va), column_space(vb)
    worst = 0.0
    for v, q in ((va, qb), (vb, qa)):
        r = v - q @ (q.T @ v)
        worst = max(worst, float((np.linalg.norm(r, axis=0) / np.linalg.norm(v, axis=0)).max()))
    return worst


def graphs_equivalent(g1: ParameterGraph, g2: ParameterGraph, basis: CSpaceBasis,
                      rtol: float = RANK_RTOL) -> bool:
    """Row spaces of ``A(G1)`` and ``A(G2)`` coincide."""
    if g1.r != g2.r:
        raise ValueError("graphs must have the same number of edges")
    r1 = row_space(derivative_matrix(g1, basis))
    r2 = row_space(derivative_matrix(g2, basis))
    if r1.shape[1] != r2.shape[1]:
        return False
    if r1.shape[1] == 0:
        return True
    return float(np.linalg.norm(r1 - r2 @ (r2.T @ r1), 2)) <= max(rtol, 1e-8)


# -------------------------------------------------------------- feasibility


@dataclass
class FeasibilityStep:
    graph: ParameterGraph
    kind: str
    image_dim: int
    image_basis: np.ndarray
    offset: np.ndarray
    distance: float
    feasible: bool

    def to_json(self) -> dict:
        return {
            "graph": self.graph.label,
            "kind": self.kind,
            "image_dim": self.image_dim,
            "distance": self.distance,
            "feasible": self.feasible,
        }


@dataclass
class FeasibilityReport:
    steps: list
    particular: np.ndarray
    null_basis: np.ndarray

    @property
    def feasible(self) -> bool:
        return all(s.feasible for s in self.steps)

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "null_dim": int(self.null_basis.shape[1]),
            "steps": [s.to_json() for s in self.steps],
        }


def feasible_targets(systems, rtol: float = RANK_RTOL) -> FeasibilityReport:
    """Process constraints in order, keeping ``c = c_p + N z`` consistent with all so far.

    Each step reports the affine image ``A(G)[c_p + span N]``. Free-scale
    targets are solved at ``T' = 1``. Processing continues past an infeasible
    step without updating the solution, so every step is reported.
    """
    systems = list(systems)
    if not systems:
        raise ValueError("no constraint systems given")
    ncol = systems[0].A.shape[1]
    if any(s.A.shape[1] != ncol for s in systems):
        raise ValueError("constraint systems must share the C-integral index space")
    cp = np.zeros(ncol)
    nb = np.eye(ncol)
    steps = []
    for sys in systems:
        an = sys.A @ nb
        scale = float(np.linalg.norm(sys.A, 2)) if sys.A.size else 0.0
        img = column_space(an, rtol, scale)
        offset = sys.A @ cp
        rhs = sys.target if sys.kind == "free" else sys.d
        delta = rhs - offset
        dist = float(np.linalg.norm(delta - img @ (img.T @ delta)))
        tol = 1e-9 * max(np.linalg.norm(rhs), np.linalg.norm(offset), 1.0)
        ok = bool(dist <= tol)
        steps.append(FeasibilityStep(sys.graph, sys.kind, img.shape[1], img, offset, dist, ok))
        if ok and an.size:
            z, *_ = np.linalg.lstsq(an, delta, rcond=None)
            cp = cp + nb @ z
            nb = nb @ nullspace(an, rtol, scale)
    return FeasibilityReport(steps, cp, nb)


def graph_report(graphs, basis: CSpaceBasis) -> list:
    out = []
    for g in graphs:
        s = achievable_subspace(g, basis)
        out.append({"graph": g.label, "edges": g.to_json(), "dim": s.dim,
                    "basis": s.pauli_maps()})
    return out


def write_graph_report(graphs, basis: CSpaceBasis, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph_report(graphs, basis), fh, indent=1)
