"""Derivative-free sequence search, symmetrization and span probing.

Interior segments are parameterized by an unconstrained vector
``(a, phi, b)`` per segment with ``omega1 = omega_max * sigmoid(a)`` and
``delta_omega = omega_max * tanh(b)``, so every candidate satisfies the box
constraints. The first and last segments are idle.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .cspace import CSpaceBasis
from .model import DT_DEFAULT, OMEGA_MAX_DEFAULT, ControlSegment, ControlSequence, NetworkSpec, \
    primary_propagator, random_sequence
from .objectives import CostBreakdown, CostLogger, DesignSpec, Objective
from .toggling import FrameDynamics, c_integrals

IDENTITY_CYCLE_TOL = 1e-6
PROBE_RTOL = 1e-8


class SearchError(RuntimeError):
    pass


@dataclass
class SearchConfig:
    q_min: int = 4
    q_max: int = 24
    q_step: int = 2
    population: int | None = None
    max_evals: int = 100_000
    restarts: int = 0
    sigma0: float = 0.6
    seed: int = 1
    target: float = 1e-6
    thresholds: dict | None = None
    omega_max: float = OMEGA_MAX_DEFAULT
    dt: float = DT_DEFAULT
    pad_logit: float = -4.0
    threads: int = 1
    symmetric: bool = False
    polish_evals: int = 0

    def __post_init__(self):
        if self.q_min < 3:
            raise ValueError("q_min must be >= 3 (the endpoint rule takes two segments)")
        if self.q_max < self.q_min:
            raise ValueError("q_max must be >= q_min")
        if self.q_step < 1:
            raise ValueError("q_step must be >= 1")
        if self.population is not None and self.population < 4:
            raise ValueError("population must be >= 4")
        if self.max_evals < 1 or self.restarts < 0 or self.sigma0 <= 0:
            raise ValueError("max_evals >= 1, restarts >= 0 and sigma0 > 0 required")
        if self.symmetric and (self.q_min % 2 or self.q_step % 2):
            raise ValueError("symmetric search needs even q_min and q_step")

    def n_interior(self, q: int) -> int:
        """Free segments for a total of ``q`` segments."""
        return q // 2 - 1 if self.symmetric else q - 2

    def decode(self, x: np.ndarray) -> ControlSequence:
        if self.symmetric:
            return mirror(decode_half(x, self.omega_max, self.dt))
        return decode(x, self.omega_max, self.dt)

    def converged(self, b: CostBreakdown) -> bool:
        if self.thresholds:
            return all(b.terms.get(k, 0.0) <= v for k, v in self.thresholds.items())
        return b.total <= self.target


# ---------------------------------------------------------- parameterization


def _wrap(phi):
    """Phase in ``[0, 2 pi)``; ``np.mod`` alone can round tiny negatives up to ``2 pi``."""
    out = np.mod(phi, 2 * math.pi)
    return np.where(out >= 2 * math.pi, 0.0, out)


def decode(x: np.ndarray, omega_max: float = OMEGA_MAX_DEFAULT, dt: float = DT_DEFAULT,
           ) -> ControlSequence:
    """Map ``3 (Q-2)`` unconstrained numbers to a bounded sequence with idle endpoints."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    w1 = omega_max / (1.0 + np.exp(-x[:, 0]))
    phi = _wrap(x[:, 1])
    dw = omega_max * np.tanh(x[:, 2])
    segs = [ControlSegment(dt)]
    segs += [ControlSegment(dt, float(a), float(p), float(b)) for a, p, b in zip(w1, phi, dw)]
    segs.append(ControlSegment(dt))
    return ControlSequence(tuple(segs), omega_max=omega_max, dt_default=dt, endpoint_rule=True)


def decode_half(x: np.ndarray, omega_max: float = OMEGA_MAX_DEFAULT, dt: float = DT_DEFAULT,
                ) -> ControlSequence:
    """Like :func:`decode` but only the first segment is idle (the half of a mirrored cycle)."""
    full = decode(x, omega_max, dt)
    return ControlSequence(full.segments[:-1], omega_max=omega_max, dt_default=dt)


def encode(seq: ControlSequence, clip: float = 12.0) -> np.ndarray:
    """Inverse of :func:`decode` for the interior segments (bounds are clipped)."""
    arr = seq.as_array()[1:-1]
    wm = seq.omega_max
    frac = np.clip(arr[:, 1] / wm, 1e-12, 1 - 1e-12)
    a = np.clip(np.log(frac / (1 - frac)), -clip, clip)
    b = np.clip(np.arctanh(np.clip(arr[:, 3] / wm, -1 + 1e-12, 1 - 1e-12)), -clip, clip)
    return np.column_stack([a, arr[:, 2], b]).ravel()


def pad(x: np.ndarray, extra: int, logit: float) -> np.ndarray:
    """Append ``extra`` near-idle interior segments."""
    return np.concatenate([np.asarray(x, float), np.tile([logit, 0.0, 0.0], extra)])


# --------------------------------------------------------------- optimizers


class AskTellOptimizer(Protocol):
    def ask(self) -> list: ...

    def tell(self, xs: list, fs: list) -> None: ...

    def stop(self) -> bool: ...


class CMAOptimizer:
    """Thin ask/tell adaptor over :mod:`cma`."""

    def __init__(self, x0: np.ndarray, sigma0: float, seed: int, max_evals: int,
                 population: int | None = None):
        import cma

        opts = {"seed": int(seed) % (2**32 - 1) + 1, "maxfevals": int(max_evals),
                "verbose": -9, "verb_disp": 0, "verb_log": 0, "tolfun": 1e-14,
                "tolx": 1e-14}
        if population:
            opts["popsize"] = int(population)
        self.es = cma.CMAEvolutionStrategy(np.asarray(x0, float), sigma0, opts)

    def ask(self) -> list:
        return self.es.ask()

    def tell(self, xs: list, fs: list) -> None:
        self.es.tell(xs, fs)

    def stop(self) -> bool:
        return bool(self.es.stop())


OptimizerFactory = Callable[..., AskTellOptimizer]


@dataclass
class SearchResult:
    sequence: ControlSequence
    breakdown: CostBreakdown
    converged: bool
    evaluations: int
    x: np.ndarray
    trace: list = field(default_factory=list)


def _stages(cfg: SearchConfig) -> list:
    return list(range(cfg.q_min, cfg.q_max + 1, cfg.q_step))


def optimize(spec: DesignSpec, cfg: SearchConfig, net: NetworkSpec,
             basis: CSpaceBasis | None = None, optimizer: OptimizerFactory = CMAOptimizer,
             log_path=None, x0: np.ndarray | None = None) -> SearchResult:
    """Minimize the total cost with progressive segment counts.

    ``basis`` defaults to ``spec.basis``. The trace holds one record per
    generation. Evaluations are gathered in population order, so results are
    deterministic for a given seed whatever ``cfg.threads`` is.
    """
    if basis is not None and basis is not spec.basis:
        spec = DesignSpec(**{**spec.__dict__, "basis": basis})
    obj = Objective(spec, net)
    rng = np.random.default_rng(cfg.seed)
    logger = CostLogger(log_path) if log_path else None
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    evals = 0
    best = None  # (total, breakdown, x, q)
    trace = []
    iteration = 0
    stages = _stages(cfg)

    def evaluate(x):
        return obj.breakdown(cfg.decode(x))

    try:
        for si, q in enumerate(stages):
            nvar = 3 * cfg.n_interior(q)
            if best is not None:
                start = pad(best[2], (nvar - len(best[2])) // 3, cfg.pad_logit)
            elif x0 is not None and len(x0) == nvar:
                start = np.asarray(x0, float)
            else:
                start = _random_start(rng, cfg.n_interior(q))
            budget = (cfg.max_evals - evals) // (len(stages) - si)
            for run in range(cfg.restarts + 1):
                if budget <= 0:
                    break
                run_start = start if run == 0 else _random_start(rng, cfg.n_interior(q))
                opt = optimizer(run_start, cfg.sigma0, seed=cfg.seed + 7919 * si + run,
                                max_evals=budget // (cfg.restarts + 1 - run),
                                population=cfg.population)
                used = 0
                while not opt.stop():
                    xs = opt.ask()
                    if used + len(xs) > budget:
                        break
                    results = list(pool.map(evaluate, xs)) if pool else [evaluate(x) for x in xs]
                    fs = [r.total for r in results]
                    opt.tell(xs, fs)
                    used += len(xs)
                    evals += len(xs)
                    iteration += 1
                    k = int(np.argmin(fs))
                    if best is None or fs[k] < best[0]:
                        best = (fs[k], results[k], np.array(xs[k]), q)
                    rec = {"iteration": iteration, "evaluations": evals, "q": q,
                           "best_total": best[0], "generation_min": fs[k]}
                    trace.append(rec)
                    if logger:
                        logger.log(iteration, evals, q, results[k])
                    if cfg.converged(best[1]):
                        break
                budget -= used
                if cfg.converged(best[1]):
                    break
            if best is not None and cfg.converged(best[1]):
                break
    finally:
        if pool:
            pool.shutdown()
        if logger:
            logger.close()
    if best is None:
        raise SearchError("no evaluations performed; increase max_evals")
    x, bd = best[2], best[1]
    if cfg.polish_evals > 0 and not cfg.converged(bd):
        x, used = polish(obj, cfg, x)
        evals += used
        cand = evaluate(x)
        if cand.total < bd.total:
            bd = cand
        else:
            x = best[2]
        trace.append({"iteration": iteration + 1, "evaluations": evals, "q": best[3],
                      "best_total": bd.total, "polish": True})
    seq = cfg.decode(x)
    return SearchResult(seq, bd, cfg.converged(bd), evals, x, trace)


def polish(obj: Objective, cfg: SearchConfig, x0: np.ndarray) -> tuple:
    """Trust-region least-squares refinement of the residual vector.

    Returns the refined point and the number of residual evaluations.
    """
    from scipy.optimize import least_squares

    count = [0]

    def fun(x):
        count[0] += 1
        return obj.residual_vector(cfg.decode(x))

    sol = least_squares(fun, np.asarray(x0, float), method="trf", x_scale=1.0,
                        max_nfev=max(1, cfg.polish_evals // (len(x0) + 1)),
                        ftol=1e-15, xtol=1e-15, gtol=1e-15)
    return sol.x, count[0]


def _random_start(rng: np.random.Generator, n_interior: int) -> np.ndarray:
    x = np.empty((n_interior, 3))
    x[:, 0] = rng.normal(0.0, 1.0, n_interior)
    x[:, 1] = rng.uniform(0.0, 2 * math.pi, n_interior)
    x[:, 2] = rng.normal(0.0, 0.5, n_interior)
    return x.ravel()


# ----------------------------------------------------------- symmetrization


def identity_fidelity(seq: ControlSequence) -> float:
    """``|Tr U_pri| / 2`` for one qubit; the collective cycle is the identity up to phase iff this is 1."""
    return float(abs(np.trace(primary_propagator(seq, 1))) / 2)


def symmetrize(seq: ControlSequence, tol: float = IDENTITY_CYCLE_TOL) -> ControlSequence:
    """Append the time-reversed, sign-flipped schedule.

    The second half runs the segments in reverse order with the control
    Hamiltonian negated (``phi -> phi + pi``, ``delta_omega -> -delta_omega``),
    which undoes the primary rotation step by step. For an identity cycle the
    toggling-frame perturbation then satisfies ``H(2T - t) = H(t)``.
    """
    fid = identity_fidelity(seq)
    if fid < 1 - tol:
        raise SearchError(
            f"symmetrize needs a base cycle whose collective rotation is the identity "
            f"(|Tr U|/2 = {fid:.8f} < {1 - tol})"
        )
    return mirror(seq)


def mirror(seq: ControlSequence) -> ControlSequence:
    """``seq`` followed by its reversed, negated copy; no precondition.

    The primary propagator of the result is the identity and the toggling
    frame satisfies ``H(2T - t) = H(t)`` for any ``seq``.
    """
    back = [ControlSegment(s.duration, s.omega1, float(_wrap(s.phi + math.pi)),
                           -s.delta_omega) for s in reversed(seq.segments)]
    endpoint = seq.endpoint_rule or seq.segments[0].is_idle
    return ControlSequence(seq.segments + tuple(back), seq.omega_max, seq.dt_default, endpoint)


# --------------------------------------------------------------- span probe


@dataclass
class SpanProbe:
    order: int
    rank: int
    basis: np.ndarray  # (|C|**r, rank)
    singular_values: np.ndarray

    def residual(self, vector: np.ndarray) -> float:
        v = np.asarray(vector, float)
        r = v - self.basis @ (self.basis.T @ v)
        return float(np.linalg.norm(r) / max(np.linalg.norm(v), 1e-300))

    def probably_unachievable(self, vector: np.ndarray, tol: float = 1e-6) -> bool:
        return self.residual(vector) > tol


def span_probe(net: NetworkSpec, basis: CSpaceBasis, r: int, n_sequences: int, q: int,
               seed: int = 0, omega_max: float = OMEGA_MAX_DEFAULT, dt: float = DT_DEFAULT,
               sampler: Callable | None = None) -> SpanProbe:
    """Numerical span of ``cbar^(r)`` over random bounded sequences.

    ``sampler(rng, q)`` may replace the default uniform sampler.
    """
    rng = np.random.default_rng(seed)
    dyn = FrameDynamics(basis)
    k = len(basis)
    if n_sequences < 1:
        raise ValueError("n_sequences must be >= 1")
    vecs = np.empty((k ** r, n_sequences))
    for s in range(n_sequences):
        seq = sampler(rng, q) if sampler else random_sequence(rng, q, omega_max, dt)
        vecs[:, s] = c_integrals(dyn.trace(seq), r).vector(r)
    u, sv, _ = np.linalg.svd(vecs, full_matrices=False)
    rank = int(np.sum(sv > PROBE_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
    return SpanProbe(r, rank, u[:, :rank].copy(), sv)
