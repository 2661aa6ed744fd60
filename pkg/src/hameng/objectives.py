"""Cost functions for sequence design.

``f_pri`` measures how far the collective propagator is from the target gate,
``f^(0)`` compares first-order C-integrals with the zeroth-order target and
``f^(r-1)`` is the root-sum-square of constraint residuals over the graphs
attached to order ``r``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cspace import CSpaceBasis
from .graphs import ConstraintSystem
from .model import ControlSequence, NetworkSpec, primary_propagator
from .toggling import DEFAULT_NODES, FrameDynamics, c_integrals

DEFAULT_WEIGHTS = {"pri": 10.0, 0: 1.0, 1: 0.3, 2: 0.1}


def _term_name(order_index: int) -> str:
    return f"f{order_index}"


@dataclass
class DesignSpec:
    """Everything the total cost needs besides the sequence.

    ``zeroth_target`` is the composite coefficient vector of the scaled
    zeroth-order targets (``None`` means decouple). ``zeroth_indices``
    restricts ``f^(0)`` to a subset of basis coordinates. ``systems`` maps an
    order ``r`` (edges per graph) to its constraint systems. ``weights`` keys
    are ``"pri"`` and the Magnus index ``r-1``.
    """

    basis: CSpaceBasis
    u_target: np.ndarray | None = None
    zeroth_target: np.ndarray | None = None
    zeroth_indices: np.ndarray | None = None
    systems: dict = field(default_factory=dict)
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    t_prime_floor: float = 1.0
    nodes_per_segment: int = DEFAULT_NODES

    def __post_init__(self):
        for key, w in self.weights.items():
            if w < 0:
                raise ValueError(f"weight {key!r} must be non-negative")
        for r, systems in self.systems.items():
            for s in systems:
                if s.order != r:
                    raise ValueError(f"graph {s.graph.label} has {s.order} edges, filed under order {r}")
        k = len(self.basis)
        if self.zeroth_target is not None and len(self.zeroth_target) != k:
            raise ValueError(f"zeroth target has length {len(self.zeroth_target)}, basis has {k}")

    @property
    def max_order(self) -> int:
        return max([1] + [r for r, s in self.systems.items() if s])

    def weight(self, key) -> float:
        return float(self.weights.get(key, 0.0))


@dataclass
class CostBreakdown:
    total: float
    terms: dict
    t_primes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"total": self.total, "terms": dict(self.terms), "t_prime": dict(self.t_primes)}


def cost_primary(seq: ControlSequence, net: NetworkSpec | int, spec: DesignSpec | None = None,
                 ) -> float:
    """``1 - |Tr(U_pri^dagger U_target)| / Tr(U_target^dagger U_target)``."""
    n = net if isinstance(net, int) else net.n
    target = None if spec is None else spec.u_target
    if target is None:
        # collective rotation factorizes over qubits
        u = primary_propagator(seq, 1)
        return max(0.0, float(1.0 - abs(np.trace(u) / 2) ** n))
    u = primary_propagator(seq, n)
    return max(0.0, float(1.0 - abs(np.trace(u.conj().T @ target)) / np.trace(target.conj().T @ target).real))


def cost_zeroth(cint, spec: DesignSpec) -> float:
    """``|cbar^(1) - T * target|`` over the selected coordinates."""
    c1 = cint[1]
    tgt = np.zeros_like(c1) if spec.zeroth_target is None else np.asarray(spec.zeroth_target)
    if tgt.shape != c1.shape:
        raise ValueError(f"zeroth target length {tgt.shape} does not match {c1.shape}")
    diff = c1 - cint.total_time * tgt
    if spec.zeroth_indices is not None:
        diff = diff[spec.zeroth_indices]
    return float(np.linalg.norm(diff))


def _system_residual(system: ConstraintSystem, cvec: np.ndarray, floor: float) -> tuple:
    b, dprime, oprime = system.compressed()
    bc = b @ cvec
    if system.kind == "free":
        oo = system.target @ system.target
        tp = float(oprime @ bc / oo)
        res2 = float(np.sum((bc - tp * oprime) ** 2)) + max(0.0, floor - abs(tp)) ** 2
        return res2, tp
    return float(np.sum((bc - dprime) ** 2)), None


def cost_order(cint, systems, t_prime_floor: float = 0.0) -> float:
    """``sqrt(sum_G |A(G) c - d(G)|^2)`` for systems sharing one order."""
    return _cost_order(cint, systems, t_prime_floor)[0]


def _cost_order(cint, systems, floor: float) -> tuple:
    systems = list(systems)
    if not systems:
        return 0.0, {}
    r = systems[0].order
    cvec = cint.vector(r)
    total = 0.0
    tps = {}
    for s in systems:
        res2, tp = _system_residual(s, cvec, floor)
        total += res2
        if tp is not None:
            tps[s.graph.label] = tp
    return float(np.sqrt(total)), tps


class Objective:
    """Callable total cost with cached frame dynamics."""

    def __init__(self, spec: DesignSpec, net: NetworkSpec):
        self.spec = spec
        self.net = net
        self.dynamics = FrameDynamics(spec.basis)

    def c_integrals(self, seq: ControlSequence):
        tr = self.dynamics.trace(seq, self.spec.nodes_per_segment)
        return c_integrals(tr, self.spec.max_order)

    def breakdown(self, seq: ControlSequence) -> CostBreakdown:
        spec = self.spec
        terms = {"pri": cost_primary(seq, self.net, spec)}
        cint = self.c_integrals(seq)
        terms[_term_name(0)] = cost_zeroth(cint, spec)
        tps = {}
        for r, systems in sorted(spec.systems.items()):
            if not systems:
                continue
            val, tp = _cost_order(cint, systems, spec.t_prime_floor)
            key = _term_name(r - 1)
            # single-edge graph systems share the f0 slot with the coefficient target
            terms[key] = float(np.hypot(terms[key], val)) if key in terms else val
            tps.update(tp)
        total = spec.weight("pri") * terms["pri"]
        for key, val in terms.items():
            if key != "pri":
                total += spec.weight(int(key[1:])) * val
        return CostBreakdown(float(total), terms, tps)

    def __call__(self, seq: ControlSequence) -> float:
        return self.breakdown(seq).total

    def residual_vector(self, seq: ControlSequence) -> np.ndarray:
        """Weighted residuals whose zero set is the zero set of the total cost.

        Used by least-squares refinement; the primary term enters as
        ``sqrt(f_pri)``, which is locally linear in the control error.
        """
        spec = self.spec
        parts = [np.atleast_1d(np.sqrt(spec.weight("pri") * cost_primary(seq, self.net, spec)))]
        cint = self.c_integrals(seq)
        c1 = cint[1]
        tgt = np.zeros_like(c1) if spec.zeroth_target is None else np.asarray(spec.zeroth_target)
        diff = c1 - cint.total_time * tgt
        if spec.zeroth_indices is not None:
            diff = diff[spec.zeroth_indices]
        parts.append(np.sqrt(spec.weight(0)) * diff)
        for r, systems in sorted(spec.systems.items()):
            w = np.sqrt(spec.weight(r - 1))
            if not systems:
                continue
            cvec = cint.vector(r)
            for s in systems:
                b, dprime, oprime = s.compressed()
                bc = b @ cvec
                if s.kind == "free":
                    tp = float(oprime @ bc / (s.target @ s.target))
                    parts.append(w * (bc - tp * oprime))
                    parts.append(np.atleast_1d(w * max(0.0, spec.t_prime_floor - abs(tp))))
                else:
                    parts.append(w * (bc - dprime))
        return np.concatenate(parts)


def cost_total(seq: ControlSequence, net: NetworkSpec, spec: DesignSpec) -> CostBreakdown:
    """``w_pri f_pri + w_0 f^(0) + sum_r w_(r-1) f^(r-1)`` with the per-term breakdown."""
    return Objective(spec, net).breakdown(seq)


class CostLogger:
    """Writes one JSON object per line: iteration, evaluations, Q and the breakdown."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")

    def log(self, iteration: int, evaluations: int, q: int, breakdown: CostBreakdown) -> None:
        rec = {"iteration": iteration, "evaluations": evaluations, "q": q}
        rec.update(breakdown.to_json())
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
