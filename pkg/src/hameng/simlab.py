"""Ensemble simulation of stroboscopic autocorrelation signals.

``S(k) = Tr(U^k rho0 U^-k rho0) / (N 2^N)`` with ``rho0 = sum_i sigma_alpha^i``
and ``U = U(T_seq)`` drawn per ensemble member. The Rabi error is fixed per
realization for all repetitions.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, ops
from .model import ControlSequence, EnsembleSpec, NetworkSpec, read_sequence_csv, \
    sample_realization, sequence_to_csv, total_propagator

UNITARY_DRIFT_TOL = 1e-6
RESULT_HEADER = ("t_ms", "S_mean", "S_stderr")


class SimulationError(RuntimeError):
    pass


@dataclass
class SimulationCampaign:
    sequence: ControlSequence
    net: NetworkSpec
    ensemble: EnsembleSpec
    k_max: int
    n_realizations: int
    observable: str = "x"
    label: str = "campaign"

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.observable.lower() not in ("x", "y", "z"):
            raise ValueError(f"observable must be x, y or z, got {self.observable!r}")

    @classmethod
    def from_file(cls, path, net: NetworkSpec, ensemble: EnsembleSpec, **kw):
        return cls(read_sequence_csv(path), net, ensemble, **kw)

    def describe(self) -> dict:
        """JSON-ready description that determines the result bit for bit."""
        return {
            "label": self.label,
            "sequence_csv": sequence_to_csv(self.sequence),
            # internal units; the kHz text above does not round-trip bit for bit
            "segments": [[s.duration, s.omega1, s.phi, s.delta_omega]
                         for s in self.sequence.segments],
            "omega_max": self.sequence.omega_max,
            "endpoint_rule": self.sequence.endpoint_rule,
            "n": self.net.n,
            "edges": [list(e) for e in self.net.edges],
            "loops": [list(m) for m in self.net.loops],
            "error_ids": list(self.net.error_ids),
            "d_tensor": self.net.d_tensor.tolist(),
            "ensemble": asdict(self.ensemble),
            "k_max": self.k_max,
            "n_realizations": self.n_realizations,
            "observable": self.observable.lower(),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SimulationResult:
    times_us: np.ndarray
    s_mean: np.ndarray
    s_stderr: np.ndarray
    per_realization: np.ndarray  # (n_ok, k_max + 1)
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def times_ms(self) -> np.ndarray:
        return self.times_us * 1e-3

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for t, m, s in zip(self.times_ms, self.s_mean, self.s_stderr):
            w.writerow([repr(float(t)), repr(float(m)), repr(float(s))])
        return buf.getvalue()

    def write(self, csv_path, meta_path=None) -> None:
        Path(csv_path).write_text(self.to_csv())
        if meta_path is None:
            meta_path = Path(csv_path).with_suffix(".meta.json")
        Path(meta_path).write_text(json.dumps(self.metadata, indent=1, sort_keys=True))


def collective_observable(alpha: str, n: int) -> np.ndarray:
    return np.asarray(ops.collective(alpha.upper(), n))


def stroboscopic_signal(u: np.ndarray, rho0: np.ndarray, k_max: int) -> np.ndarray:
    """``Tr(U^k rho0 U^-k rho0) / Tr(rho0^2)`` for ``k = 0..k_max`` via the eigenbasis of ``u``."""
    norm = float(np.vdot(rho0, rho0).real)
    lam, v = np.linalg.eig(u)
    # eig of a unitary can return a non-orthogonal basis for near-degenerate phases
    if np.abs(v.conj().T @ v - np.eye(len(lam))).max() > 1e-8:
        t, z = _schur_eig(u)
        lam, v = t, z
    r = v.conj().T @ rho0 @ v
    w = (np.abs(r) ** 2).ravel()
    theta = np.angle(lam)
    dtheta = (theta[:, None] - theta[None, :]).ravel()
    keep = w > 1e-15 * w.max()
    w, dtheta = w[keep], dtheta[keep]
    ks = np.arange(k_max + 1)
    out = (np.cos(np.outer(ks, dtheta)) @ w) / norm
    out[0] = 1.0
    return out


def _schur_eig(u: np.ndarray):
    import scipy.linalg

    t, z = scipy.linalg.schur(u, output="complex")
    return np.diag(t), z


def stroboscopic_signal_direct(u: np.ndarray, rho0: np.ndarray, k_max: int) -> np.ndarray:
    """Reference implementation by repeated conjugation."""
    norm = float(np.vdot(rho0, rho0).real)
    out = np.empty(k_max + 1)
    rho = rho0.astype(complex)
    out[0] = 1.0
    for k in range(1, k_max + 1):
        rho = u @ rho @ u.conj().T
        out[k] = float(np.vdot(rho, rho0).real) / norm
    return out


def _realization(campaign: SimulationCampaign, index: int):
    real = sample_realization(campaign.net, campaign.ensemble, index)
    u = total_propagator(campaign.sequence, campaign.net, real)
    drift = ops.unitarity_defect(u)
    if drift > UNITARY_DRIFT_TOL:
        return None, f"realization {index}: unitarity drift {drift:.2e}"
    rho0 = collective_observable(campaign.observable, campaign.net.n)
    return stroboscopic_signal(u, rho0, campaign.k_max), None


def autocorrelation(campaign: SimulationCampaign, threads: int = 1) -> SimulationResult:
    """Average ``S(k T_seq)`` over ensemble members drawn from independent substreams."""
    idx = range(campaign.n_realizations)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda i: _realization(campaign, i), idx))
    else:
        results = [_realization(campaign, i) for i in idx]
    rows = [s for s, err in results if s is not None]
    failures = [err for s, err in results if err is not None]
    if not rows:
        raise SimulationError("all realizations failed: " + "; ".join(failures[:3]))
    data = np.array(rows)
    mean = data.mean(axis=0)
    stderr = (data.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) > 1
              else np.zeros_like(mean))
    times = np.arange(campaign.k_max + 1) * campaign.sequence.total_time
    meta = {
        "seed": campaign.ensemble.seed,
        "config_hash": campaign.config_hash(),
        "version": __version__,
        "config": campaign.describe(),
        "n_ok": len(rows),
        "failures": failures,
    }
    return SimulationResult(times, mean, stderr, data, failures, meta)


def rerun_from_metadata(meta: dict, threads: int = 1) -> SimulationResult:
    """Rebuild a campaign from its metadata record and run it again."""
    from .model import ControlSegment, sequence_from_csv

    cfg = meta["config"]
    if "segments" in cfg:
        seq = ControlSequence(tuple(ControlSegment(*row) for row in cfg["segments"]),
                              omega_max=cfg["omega_max"], endpoint_rule=cfg["endpoint_rule"])
    else:
        seq = sequence_from_csv(cfg["sequence_csv"])
    net = NetworkSpec(cfg["n"], tuple(map(tuple, cfg["edges"])), tuple(map(tuple, cfg["loops"])),
                      tuple(cfg["error_ids"]), np.array(cfg["d_tensor"]))
    camp = SimulationCampaign(seq, net, EnsembleSpec(**cfg["ensemble"]), cfg["k_max"],
                              cfg["n_realizations"], cfg["observable"], cfg["label"])
    return autocorrelation(camp, threads)


def three_body_consistency(campaign: SimulationCampaign, threads: int = 1) -> float:
    """Largest pairwise gap between the x, y and z autocorrelation curves (matched seeds)."""
    curves = []
    for alpha in "xyz":
        c = SimulationCampaign(campaign.sequence, campaign.net, campaign.ensemble,
                               campaign.k_max, campaign.n_realizations, alpha, campaign.label)
        curves.append(autocorrelation(c, threads).s_mean)
    worst = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            worst = max(worst, float(np.abs(curves[i] - curves[j]).max()))
    return worst


@dataclass
class GaussianFit:
    sigma: float
    residual: float
    n_points: int


def fit_gaussian_decay(t: np.ndarray, s: np.ndarray, window: float, floor: float = 0.1,
                       ) -> GaussianFit:
    """Fit ``S = exp(-t^2 sigma^2 / 2)`` on ``t <= window`` where ``S > floor``.

    ``sigma`` is in inverse units of ``t``. Least squares on ``log S`` versus
    ``t^2`` through the origin.
    """
    t = np.asarray(t, float)
    s = np.asarray(s, float)
    mask = (t <= window) & (s > floor)
    if mask.sum() < 5:
        raise ValueError(f"need >= 5 points with S > {floor} inside the window, got {mask.sum()}")
    x = t[mask] ** 2
    y = np.log(s[mask])
    denom = float(x @ x)
    slope = float(x @ y) / denom if denom > 0 else 0.0
    sigma = math.sqrt(max(0.0, -2.0 * slope))
    resid = float(np.sqrt(np.mean((y - slope * x) ** 2)))
    return GaussianFit(sigma, resid, int(mask.sum()))


def time_to_threshold(t: np.ndarray, s: np.ndarray, level: float = 1 / math.e) -> float:
    """First time the curve falls to ``level`` (linear interpolation); ``inf`` if never."""
    below = np.flatnonzero(s <= level)
    if below.size == 0:
        return math.inf
    k = int(below[0])
    if k == 0:
        return float(t[0])
    t0, t1, s0, s1 = t[k - 1], t[k], s[k - 1], s[k]
    return float(t0 + (s0 - level) * (t1 - t0) / (s0 - s1))


SWEEP_HEADER = ("sequence", "sigma_dip_khz", "t_1e_ms", "status")


def regime_sweep(sequences: dict, net: NetworkSpec, base: EnsembleSpec, sigma_dip_grid,
                 k_max: int, n_realizations: int, horizons_ms=(), observable: str = "x",
                 threads: int = 1, scale_with_dip: dict | None = None) -> list:
    """One autocorrelation run per (sequence, sigma_dip); returns table rows.

    ``scale_with_dip`` optionally gives fixed ratios ``sigma_z / sigma_dip``
    (key ``"z"``) applied per cell; otherwise ``base.sigma_z`` is kept.
    """
    from .model import rad_us_to_khz

    rows = []
    for name, seq in sequences.items():
        for sd in sigma_dip_grid:
            row = {"sequence": name, "sigma_dip_khz": rad_us_to_khz(sd)}
            try:
                sz = base.sigma_z if not scale_with_dip else scale_with_dip.get("z", 0.0) * sd
                ens = EnsembleSpec(sd, sz, base.sigma_eps, base.rho_corr, base.seed)
                res = autocorrelation(SimulationCampaign(seq, net, ens, k_max, n_realizations,
                                                         observable, name), threads)
                row["t_1e_ms"] = time_to_threshold(res.times_ms, res.s_mean)
                for h in horizons_ms:
                    k = int(np.argmin(np.abs(res.times_ms - h)))
                    row[f"S_at_{h:g}ms"] = float(res.s_mean[k])
                row["status"] = "ok"
            except Exception as exc:  # recorded per cell
                row["t_1e_ms"] = math.nan
                for h in horizons_ms:
                    row[f"S_at_{h:g}ms"] = math.nan
                row["status"] = f"failed: {exc}"
            rows.append(row)
    return rows


def sweep_to_csv(rows: list) -> str:
    if not rows:
        return ""
    keys = list(rows[0].keys())
    keys = [k for k in keys if k != "status"] + ["status"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
