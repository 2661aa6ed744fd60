"""Collectively driven qubit networks: controls, internal Hamiltonian, ensembles.

Units: time in microseconds, angular frequencies in rad/us. Coupling and
detuning parameters are angular frequencies; the Rabi error is dimensionless.

Parameter ids are ``(i, i)`` for the detuning of qubit ``i``, ``(i, j)`` with
``i < j`` for a coupling, and strings such as ``"e"`` for control-error
parameters.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from . import ops

ParamId = Union[tuple, str]

DIPOLAR = np.diag([-1.0, -1.0, 2.0])
HEISENBERG = np.eye(3)
OMEGA_MAX_DEFAULT = 2 * math.pi * 0.25  # 250 kHz in rad/us
DT_DEFAULT = 2.0

SEQUENCE_HEADER = ("duration_us", "omega1_khz", "phi_rad", "delta_omega_khz")


def khz_to_rad_us(f_khz: float) -> float:
    return 2 * math.pi * f_khz * 1e-3


def rad_us_to_khz(w: float) -> float:
    return w / (2 * math.pi * 1e-3)


class ModelError(ValueError):
    pass


def is_error_id(m: ParamId) -> bool:
    return isinstance(m, str)


def param_sort_key(m: ParamId):
    # errors first, then detunings, then couplings
    if is_error_id(m):
        return (0, m, 0, 0)
    i, j = m
    return (1 if i == j else 2, "", i, j)


def format_param(m: ParamId) -> str:
    if is_error_id(m):
        return m
    i, j = m
    return f"{i}{j}" if max(i, j) < 10 else f"{i}-{j}"


def parse_param(text: str) -> ParamId:
    text = text.strip()
    if text and text[0].isalpha():
        return text
    if "-" in text:
        a, b = text.split("-")
    elif len(text) == 2:
        a, b = text
    else:
        raise ModelError(f"cannot parse parameter id {text!r}")
    i, j = sorted((int(a), int(b)))
    return (i, j)


# ---------------------------------------------------------------- sequences


@dataclass(frozen=True)
class ControlSegment:
    duration: float
    omega1: float = 0.0
    phi: float = 0.0
    delta_omega: float = 0.0

    @property
    def is_idle(self) -> bool:
        return self.omega1 == 0.0 and self.delta_omega == 0.0


@dataclass(frozen=True)
class ControlSequence:
    segments: tuple
    omega_max: float = OMEGA_MAX_DEFAULT
    dt_default: float = DT_DEFAULT
    endpoint_rule: bool = False

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ModelError("a control sequence needs at least one segment")
        tol = 1e-12 * max(self.omega_max, 1.0)
        for k, s in enumerate(segs):
            if s.duration <= 0:
                raise ModelError(f"segment {k}: duration must be positive")
            if s.omega1 < -tol or s.omega1 > self.omega_max + tol:
                raise ModelError(f"segment {k}: omega1={s.omega1} outside [0, omega_max]")
            if abs(s.delta_omega) > self.omega_max + tol:
                raise ModelError(f"segment {k}: |delta_omega| exceeds omega_max")
        if self.endpoint_rule and not (segs[0].is_idle and segs[-1].is_idle):
            raise ModelError("endpoint rule: first and last segments must be idle")

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def concatenate(self, other: "ControlSequence") -> "ControlSequence":
        return ControlSequence(
            self.segments + other.segments, self.omega_max, self.dt_default, False
        )

    def as_array(self) -> np.ndarray:
        """Rows of ``(duration, omega1, phi, delta_omega)``."""
        return np.array(
            [(s.duration, s.omega1, s.phi, s.delta_omega) for s in self.segments], dtype=float
        )

    @classmethod
    def from_array(cls, rows, **kw) -> "ControlSequence":
        return cls(tuple(ControlSegment(*map(float, r)) for r in np.asarray(rows)), **kw)

    @classmethod
    def idle(cls, q: int, dt: float = DT_DEFAULT, **kw) -> "ControlSequence":
        return cls(tuple(ControlSegment(dt) for _ in range(q)), dt_default=dt, **kw)


def write_sequence_csv(seq: ControlSequence, path) -> None:
    """Write ``seq`` in the kHz-based CSV exchange format."""
    with open(path, "w", newline="") as fh:
        fh.write(sequence_to_csv(seq))


def sequence_to_csv(seq: ControlSequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SEQUENCE_HEADER)
    for s in seq.segments:
        w.writerow(
            [repr(float(s.duration)), repr(rad_us_to_khz(s.omega1)), repr(float(s.phi)),
             repr(rad_us_to_khz(s.delta_omega))]
        )
    return buf.getvalue()


def read_sequence_csv(path, omega_max: float = OMEGA_MAX_DEFAULT, endpoint_rule: bool = False,
                      ) -> ControlSequence:
    text = Path(path).read_text()
    return sequence_from_csv(text, omega_max=omega_max, endpoint_rule=endpoint_rule)


def sequence_from_csv(text: str, omega_max: float = OMEGA_MAX_DEFAULT,
                      endpoint_rule: bool = False) -> ControlSequence:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ModelError("empty sequence file")
    header = tuple(c.strip() for c in rows[0])
    if header != SEQUENCE_HEADER:
        raise ModelError(f"bad sequence header {header}; expected {SEQUENCE_HEADER}")
    segs = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != 4:
            raise ModelError(f"line {lineno}: expected 4 columns, got {len(r)}")
        try:
            d, w1, phi, dw = (float(c) for c in r)
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
        segs.append(ControlSegment(d, khz_to_rad_us(w1), phi, khz_to_rad_us(dw)))
    dts = {s.duration for s in segs}
    dt = dts.pop() if len(dts) == 1 else DT_DEFAULT
    return ControlSequence(tuple(segs), omega_max=omega_max, dt_default=dt,
                           endpoint_rule=endpoint_rule)


# ------------------------------------------------------------------ network


@dataclass(frozen=True)
class NetworkSpec:
    n: int
    edges: tuple = ()
    loops: tuple = ()
    error_ids: tuple = ()
    d_tensor: np.ndarray = field(default_factory=lambda: DIPOLAR.copy())

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("network needs at least one qubit")
        edges = tuple(sorted({tuple(sorted(map(int, e))) for e in self.edges}))
        for i, j in edges:
            if not (1 <= i < j <= self.n):
                raise ModelError(f"edge {(i, j)} not a pair over 1..{self.n}")
        loops = tuple(sorted({(int(i), int(i)) for i, _ in
                              ((m if isinstance(m, tuple) else (m, m)) for m in self.loops)}))
        for i, _ in loops:
            if not 1 <= i <= self.n:
                raise ModelError(f"loop {(i, i)} outside 1..{self.n}")
        d = np.asarray(self.d_tensor, dtype=float)
        if d.shape != (3, 3) or not np.allclose(d, d.T):
            raise ModelError("d_tensor must be a symmetric 3x3 matrix")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "loops", loops)
        object.__setattr__(self, "error_ids", tuple(self.error_ids))
        object.__setattr__(self, "d_tensor", d)

    @classmethod
    def all_to_all(cls, n: int, d_tensor=DIPOLAR, detuning: bool = True,
                   error: bool = True) -> "NetworkSpec":
        return cls(
            n,
            edges=tuple(combinations(range(1, n + 1), 2)),
            loops=tuple((i, i) for i in range(1, n + 1)) if detuning else (),
            error_ids=("e",) if error else (),
            d_tensor=np.asarray(d_tensor, dtype=float),
        )

    @classmethod
    def chain(cls, n: int, d_tensor=DIPOLAR, detuning: bool = True,
              error: bool = True) -> "NetworkSpec":
        return cls(
            n,
            edges=tuple((i, i + 1) for i in range(1, n)),
            loops=tuple((i, i) for i in range(1, n + 1)) if detuning else (),
            error_ids=("e",) if error else (),
            d_tensor=np.asarray(d_tensor, dtype=float),
        )

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def parameter_ids(self) -> tuple:
        return tuple(self.error_ids) + self.loops + self.edges

    def __hash__(self):
        return hash((self.n, self.edges, self.loops, self.error_ids, self.d_tensor.tobytes()))

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return (self.n, self.edges, self.loops, self.error_ids) == (
            other.n, other.edges, other.loops, other.error_ids
        ) and np.array_equal(self.d_tensor, other.d_tensor)

    def with_n(self, n: int) -> "NetworkSpec":
        """Same topology family replayed on ``n`` qubits (all-to-all or chain)."""
        if len(self.edges) == self.n * (self.n - 1) // 2:
            return NetworkSpec.all_to_all(n, self.d_tensor, bool(self.loops), bool(self.error_ids))
        return NetworkSpec.chain(n, self.d_tensor, bool(self.loops), bool(self.error_ids))


def detuning_operator(i: int, n: int) -> np.ndarray:
    return 0.5 * ops.single_site("Z", i, n)


def coupling_operator(i: int, j: int, n: int, d_tensor=DIPOLAR) -> np.ndarray:
    """``(1/4) sigma_i . D . sigma_j``."""
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for a, la in enumerate("XYZ"):
        for b, lb in enumerate("XYZ"):
            if d_tensor[a, b] != 0.0:
                letters = ["I"] * n
                letters[i - 1] = la
                letters[j - 1] = lb
                out += d_tensor[a, b] * ops.build_pauli("".join(letters), n)
    return 0.25 * out


def parameter_operator(m: ParamId, net: NetworkSpec) -> np.ndarray:
    """Operator multiplying the static parameter ``m`` in the internal Hamiltonian."""
    if is_error_id(m):
        raise ModelError("error parameters multiply the time-dependent control Hamiltonian")
    i, j = m
    if i == j:
        return detuning_operator(i, net.n)
    return coupling_operator(i, j, net.n, net.d_tensor)


def control_hamiltonian(seg: ControlSegment, n: int, eps: float = 0.0) -> np.ndarray:
    """``(1+eps) [ (w1/2)(cos phi SX + sin phi SY) + (dw/2) SZ ]``."""
    sx, sy, sz = (ops.collective(c, n) for c in "XYZ")
    h = 0.5 * seg.omega1 * (math.cos(seg.phi) * sx + math.sin(seg.phi) * sy)
    h = h + 0.5 * seg.delta_omega * sz
    return (1.0 + eps) * h


def control_axis(seg: ControlSegment) -> np.ndarray:
    """Rotation vector ``(wx, wy, wz)`` of the collective field, rad/us."""
    return np.array(
        [seg.omega1 * math.cos(seg.phi), seg.omega1 * math.sin(seg.phi), seg.delta_omega]
    )


@dataclass(frozen=True)
class ParameterRealization:
    values: dict

    def __getitem__(self, m):
        return self.values[m]

    def get(self, m, default=0.0):
        return self.values.get(m, default)

    @property
    def eps(self) -> float:
        return float(sum(v for m, v in self.values.items() if is_error_id(m)))

    def scaled(self, factor: float) -> "ParameterRealization":
        return ParameterRealization({m: factor * v for m, v in self.values.items()})

    def check(self, net: NetworkSpec) -> None:
        ids = set(net.parameter_ids)
        missing = ids - set(self.values)
        if missing:
            raise ModelError(f"missing parameter {format_param(sorted(missing, key=param_sort_key)[0])}")
        extra = set(self.values) - ids
        if extra:
            raise ModelError(f"unexpected parameter {format_param(sorted(extra, key=param_sort_key)[0])}")


def internal_hamiltonian(net: NetworkSpec, real: ParameterRealization) -> np.ndarray:
    out = np.zeros((net.dim, net.dim), dtype=complex)
    for m in net.loops + net.edges:
        if m not in real.values:
            raise ModelError(f"missing parameter {format_param(m)}")
        v = real.values[m]
        if v != 0.0:
            out += v * parameter_operator(m, net)
    return out


def total_propagator(seq: ControlSequence, net: NetworkSpec, real: ParameterRealization,
                     eps: float | None = None) -> np.ndarray:
    """``U = U_Q ... U_2 U_1`` with the first segment acting first."""
    if eps is None:
        eps = real.eps
    h_int = internal_hamiltonian(net, real)
    u = np.eye(net.dim, dtype=complex)
    for seg in seq.segments:
        u = ops.expm_skew(control_hamiltonian(seg, net.n, eps) + h_int, seg.duration) @ u
    return u


def primary_propagator(seq: ControlSequence, n: int) -> np.ndarray:
    u = np.eye(1 << n, dtype=complex)
    for seg in seq.segments:
        u = ops.expm_skew(control_hamiltonian(seg, n), seg.duration) @ u
    return u


# ----------------------------------------------------------------- ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    sigma_dip: float = 0.0
    sigma_z: float = 0.0
    sigma_eps: float = 0.0
    rho_corr: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_dip, self.sigma_z, self.sigma_eps) < 0:
            raise ModelError("ensemble standard deviations must be non-negative")
        if abs(self.rho_corr) > 1:
            raise ModelError("rho_corr must lie in [-1, 1]")
        if self.rho_corr != 0 and self.sigma_z == 0:
            raise ModelError("correlated coupling model needs sigma_z > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must be an unsigned 64-bit integer")


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based (Philox) substream for realization ``index`` under ``seed``.

    The 128-bit Philox key is ``seed | index << 64`` so every realization owns an
    independent stream, regardless of evaluation order.
    """
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(index) << 64)))


def sample_realization(net: NetworkSpec, ens: EnsembleSpec, index: int = 0,
                       rng: np.random.Generator | None = None) -> ParameterRealization:
    """Draw detunings, Rabi error and couplings for one ensemble member.

    Draw order is fixed: all detunings (qubit order), then one normal per error
    id, then one normal per edge (sorted order).
    """
    if rng is None:
        rng = realization_rng(ens.seed, index)
    delta = rng.standard_normal(net.n) * ens.sigma_z
    eps = rng.standard_normal(len(net.error_ids)) * ens.sigma_eps
    noise = rng.standard_normal(len(net.edges))
    values: dict = {}
    for m, v in zip(net.error_ids, eps):
        values[m] = float(v)
    for (i, _) in net.loops:
        values[(i, i)] = float(delta[i - 1])
    rho = ens.rho_corr
    for (i, j), z in zip(net.edges, noise):
        if rho != 0.0:
            b = rho * ens.sigma_dip / (math.sqrt(2) * ens.sigma_z) * (delta[i - 1] + delta[j - 1])
            b += math.sqrt(1 - rho * rho) * ens.sigma_dip * z
        else:
            b = ens.sigma_dip * z
        values[(i, j)] = float(b)
    return ParameterRealization(values)


def zero_realization(net: NetworkSpec) -> ParameterRealization:
    return ParameterRealization({m: 0.0 for m in net.parameter_ids})


def random_sequence(rng: np.random.Generator, q: int, omega_max: float = OMEGA_MAX_DEFAULT,
                    dt: float = DT_DEFAULT, endpoint_rule: bool = False) -> ControlSequence:
    """Uniformly random bounded segments."""
    segs = []
    for k in range(q):
        if endpoint_rule and k in (0, q - 1):
            segs.append(ControlSegment(dt))
            continue
        segs.append(ControlSegment(
            dt,
            float(rng.uniform(0, omega_max)),
            float(rng.uniform(0, 2 * math.pi)),
            float(rng.uniform(-omega_max, omega_max)),
        ))
    return ControlSequence(tuple(segs), omega_max=omega_max, dt_default=dt,
                           endpoint_rule=endpoint_rule)


def closing_segment(seq: ControlSequence, duration: float | None = None) -> ControlSegment:
    """Single segment that returns the collective rotation of ``seq`` to +-identity."""
    u = primary_propagator(seq, 1)
    if np.trace(u).real < 0:
        u = -u  # global sign is irrelevant; keeps the rotation angle <= pi
    w = ops.logm_unitary(u.conj().T)
    vec = np.array([np.trace(ops.PAULI_MATRICES[c] @ w).real for c in "XYZ"])
    duration = seq.dt_default if duration is None else duration
    omega = vec / duration
    w1 = float(math.hypot(omega[0], omega[1]))
    phi = float(math.atan2(omega[1], omega[0])) if w1 > 0 else 0.0
    return ControlSegment(duration, w1, phi, float(omega[2]))


def iter_realizations(net: NetworkSpec, ens: EnsembleSpec, count: int) -> Iterable:
    for k in range(count):
        yield sample_realization(net, ens, k)
