"""Command-line entry point.

Exit codes: 0 success, 2 config or parse error, 3 infeasible target,
4 search did not converge.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, ops

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 2, 3, 4

_NUM = {"type": "number"}
_BOOL = {"type": "boolean"}
_UINT = {"type": "integer", "minimum": 0}
_PAULI_MAP = {"type": "object", "additionalProperties": _NUM}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


CONFIG_SCHEMA = _obj({
    "network": _obj({
        "n": {"type": "integer", "minimum": 1, "maximum": 7},
        "topology": {"enum": ["all_to_all", "chain"]},
        "d_tensor": {"oneOf": [
            {"enum": ["dipolar", "heisenberg"]},
            {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 3,
                                        "maxItems": 3}, "minItems": 3, "maxItems": 3},
        ]},
        "detuning": _BOOL,
        "error": _BOOL,
    }, required=["n"]),
    "control": _obj({
        "omega_max_khz": {"type": "number", "exclusiveMinimum": 0},
        "dt_us": {"type": "number", "exclusiveMinimum": 0},
        "endpoint_rule": _BOOL,
    }),
    "cspace": _obj({
        "components": {"type": "array", "items": {"enum": ["error", "detuning", "coupling"]}},
        "seed": _UINT,
    }),
    "ensemble": _obj({
        "sigma_dip_khz": {"type": "number", "minimum": 0},
        "sigma_z_khz": {"type": "number", "minimum": 0},
        "sigma_eps": {"type": "number", "minimum": 0},
        "rho_corr": {"type": "number", "minimum": -1, "maximum": 1},
        "seed": _UINT,
    }),
    "design": _obj({
        "decouple": {"type": "array", "items": {"type": "string"}},
        "targets": {"type": "object", "additionalProperties": _PAULI_MAP},
        "t_prime": {"oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0}]},
        "t_prime_floor": {"type": "number", "minimum": 0},
        "zeroth_components": {"type": "array",
                              "items": {"enum": ["error", "detuning", "coupling"]}},
        "zeroth_target": {"type": "object", "additionalProperties": _PAULI_MAP},
        "u_target": {"enum": ["identity"]},
        "weights": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "thresholds": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "max_order": {"type": "integer", "minimum": 1, "maximum": 4},
    }),
    "search": _obj({
        "q_min": {"type": "integer", "minimum": 3},
        "q_max": {"type": "integer", "minimum": 3},
        "q_step": {"type": "integer", "minimum": 1},
        "population": {"type": "integer", "minimum": 4},
        "max_evals": {"type": "integer", "minimum": 1},
        "restarts": {"type": "integer", "minimum": 0},
        "sigma0": {"type": "number", "exclusiveMinimum": 0},
        "target": {"type": "number", "minimum": 0},
        "symmetric": {"type": "boolean"},
        "polish_evals": {"type": "integer", "minimum": 0},
        "seed": _UINT,
    }),
    "simulation": _obj({
        "n": {"type": "integer", "minimum": 2, "maximum": 7},
        "k_max": {"type": "integer", "minimum": 1},
        "n_realizations": {"type": "integer", "minimum": 1},
        "observable": {"enum": ["x", "y", "z"]},
        "regimes": {"type": "array", "items": _obj({
            "name": {"type": "string"},
            "sigma_dip_khz": {"type": "number", "minimum": 0},
            "sigma_z_khz": {"type": "number", "minimum": 0},
            "sigma_eps": {"type": "number", "minimum": 0},
            "rho_corr": {"type": "number", "minimum": -1, "maximum": 1},
        })},
        "fit_window_ms": {"type": "number", "exclusiveMinimum": 0},
        "horizons_ms": {"type": "array", "items": _NUM},
    }),
    "probe": _obj({
        "order": {"type": "integer", "minimum": 1, "maximum": 4},
        "n_sequences": {"type": "integer", "minimum": 1},
        "q": {"type": "integer", "minimum": 1},
        "seed": _UINT,
    }),
    "verify": _obj({
        "slices": {"type": "integer", "minimum": 500},
        "orders": {"type": "integer", "minimum": 1, "maximum": 3},
        "tolerance": {"type": "number", "minimum": 0},
    }),
})


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text()) if path else {}
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("config failed schema validation:\n" + "\n".join(lines))
    q = cfg.get("search", {})
    if q.get("q_max", 24) < q.get("q_min", 4):
        raise ConfigError("search.q_max must be >= search.q_min")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ------------------------------------------------------------ config → model


def _d_tensor(spec):
    from .model import DIPOLAR, HEISENBERG

    if spec is None or spec == "dipolar":
        return DIPOLAR
    if spec == "heisenberg":
        return HEISENBERG
    return np.array(spec, dtype=float)


def network_from(cfg: dict, n: int | None = None):
    from .model import ModelError, NetworkSpec

    net = cfg.get("network", {"n": 3})
    build = NetworkSpec.chain if net.get("topology", "all_to_all") == "chain" else \
        NetworkSpec.all_to_all
    try:
        return build(n or net.get("n", 3), _d_tensor(net.get("d_tensor")),
                     net.get("detuning", True), net.get("error", True))
    except ModelError as exc:
        raise ConfigError(str(exc)) from None


def control_from(cfg: dict) -> tuple:
    from .model import DT_DEFAULT, OMEGA_MAX_DEFAULT, khz_to_rad_us

    c = cfg.get("control", {})
    wm = khz_to_rad_us(c["omega_max_khz"]) if "omega_max_khz" in c else OMEGA_MAX_DEFAULT
    return wm, c.get("dt_us", DT_DEFAULT), c.get("endpoint_rule", False)


def ensemble_from(block: dict, seed: int):
    from .model import EnsembleSpec, ModelError, khz_to_rad_us

    try:
        return EnsembleSpec(khz_to_rad_us(block.get("sigma_dip_khz", 0.0)),
                            khz_to_rad_us(block.get("sigma_z_khz", 0.0)),
                            block.get("sigma_eps", 0.0), block.get("rho_corr", 0.0), seed)
    except ModelError as exc:
        raise ConfigError(str(exc)) from None


def basis_from(cfg: dict, net):
    from .cspace import COMPONENT_ORDER, build_cspace

    cs = cfg.get("cspace", {})
    include = cs.get("components", list(COMPONENT_ORDER))
    present = {"error": bool(net.error_ids), "detuning": bool(net.loops),
               "coupling": bool(net.edges)}
    include = tuple(c for c in COMPONENT_ORDER if c in include and present[c])
    if not include:
        raise ConfigError("no perturbation component selected")
    return build_cspace(net, include, cs.get("seed", 12345))


def _graph_in_basis(label: str, basis):
    from .graphs import ParameterGraph

    try:
        g = ParameterGraph.parse(label)
    except Exception as exc:
        raise ConfigError(f"bad graph label {label!r}: {exc}") from None
    missing = [m for m in g.edges if m not in basis.param_ids]
    if missing:
        raise ConfigError(f"graph {label} uses parameters outside the C space: {missing}")
    return g


def systems_from(cfg: dict, basis) -> dict:
    """Constraint systems grouped by order; raises InfeasibleTargetError on bad targets."""
    from .graphs import constraint_system

    d = cfg.get("design", {})
    t_prime = d.get("t_prime", None)
    out: dict = {}
    for label in d.get("decouple", []):
        g = _graph_in_basis(label, basis)
        out.setdefault(g.r, []).append(constraint_system(g, basis))
    for label, pmap in d.get("targets", {}).items():
        g = _graph_in_basis(label, basis)
        _check_pauli_map(pmap, basis.n)
        out.setdefault(g.r, []).append(constraint_system(g, basis, pmap, t_prime))
    return out


def _check_pauli_map(pmap: dict, n: int) -> None:
    for k in pmap:
        if len(k) != n or set(k.upper()) - set("IXYZ"):
            raise ConfigError(f"Pauli string {k!r} is not a length-{n} word over IXYZ")


def design_spec_from(cfg: dict, basis, systems: dict):
    from .cspace import ParametricOperator, project
    from .model import parse_param
    from .objectives import DEFAULT_WEIGHTS, DesignSpec

    d = cfg.get("design", {})
    weights = dict(DEFAULT_WEIGHTS)
    for k, w in d.get("weights", {}).items():
        if k == "pri":
            weights["pri"] = w
        elif k.startswith("f") and k[1:].isdigit():
            weights[int(k[1:])] = w
        else:
            raise ConfigError(f"unknown weight key {k!r} (use pri, f0, f1, ...)")
    idx = None
    if "zeroth_components" in d:
        idx = np.concatenate([np.arange(len(basis))[basis.component_slice(c)]
                              for c in d["zeroth_components"] if c in basis.component_names]
                             ).astype(int)
    z = None
    if d.get("zeroth_target"):
        blocks = {}
        for lab, pmap in d["zeroth_target"].items():
            _check_pauli_map(pmap, basis.n)
            blocks[parse_param(lab)] = ops.from_pauli_map(pmap, basis.n)
        z, resid = project(ParametricOperator(blocks), basis)
        if resid > 1e-9 * max(1.0, np.linalg.norm(z)):
            raise ConfigError(f"zeroth target leaves the C space (residual {resid:.3e})")
    return DesignSpec(basis, None, z, idx, systems, weights, d.get("t_prime_floor", 1.0))


def _thresholds(cfg: dict) -> dict | None:
    return cfg.get("design", {}).get("thresholds")


def search_config_from(cfg: dict, seed: int | None, threads: int):
    from .search import SearchConfig

    s = dict(cfg.get("search", {}))
    if seed is not None:
        s["seed"] = seed
    wm, dt, _ = control_from(cfg)
    return SearchConfig(omega_max=wm, dt=dt, thresholds=_thresholds(cfg), threads=threads, **s)


# ------------------------------------------------------------------ outputs


class Context:
    def __init__(self, args, cfg: dict):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)

    def seed(self, block: str, default: int = 0) -> int:
        if self.args.seed is not None:
            return self.args.seed
        return self.cfg.get(block, {}).get("seed", default)

    def write_meta(self, name: str, extra: dict | None = None) -> None:
        rec = {"command": self.args.command, "argv": sys.argv[1:], "version": __version__,
               "config_hash": config_hash(self.cfg), "config": self.cfg,
               "seed": self.args.seed}
        if extra:
            rec.update(extra)
        (self.out / f"{name}.meta.json").write_text(json.dumps(rec, indent=1, sort_keys=True,
                                                                default=str))


def _read_sequence(path, cfg):
    from .model import ModelError, read_sequence_csv

    wm, _, rule = control_from(cfg)
    try:
        return read_sequence_csv(path, omega_max=wm, endpoint_rule=rule)
    except (OSError, ModelError) as exc:
        raise ConfigError(f"cannot parse sequence {path}: {exc}") from None


# ----------------------------------------------------------------- commands


def cmd_cspace(ctx: Context) -> int:
    net = network_from(ctx.cfg)
    basis = basis_from(ctx.cfg, net)
    dims = ", ".join(str(d) for d in basis.dims)
    names = ", ".join(basis.component_names)
    path = ctx.out / "cspace.json"
    basis.dump_json(path)
    print(f"components: {names}")
    print(f"dims: {dims} (composite {basis.composite_dim})")
    print(f"basis written to {path}")
    ctx.write_meta("cspace", {"dims": basis.dims, "composite": basis.composite_dim})
    return EXIT_OK


def cmd_graphs(ctx: Context) -> int:
    from .graphs import achievable_subspace, enumerate_graphs

    net = network_from(ctx.cfg)
    basis = basis_from(ctx.cfg, net)
    comps = ctx.args.components or basis.component_names
    graphs = enumerate_graphs(net, ctx.args.order, include_error="error" in comps,
                              component_filter=comps)
    report = []
    for g in graphs:
        s = achievable_subspace(g, basis)
        report.append({"graph": g.label, "dim_S": s.dim, "basis": s.pauli_maps()})
        print(f"{g.label:<16} dim S(G) = {s.dim}")
    print(f"{len(graphs)} graphs")
    (ctx.out / f"graphs_r{ctx.args.order}.json").write_text(json.dumps(report, indent=1))
    ctx.write_meta(f"graphs_r{ctx.args.order}", {"count": len(graphs)})
    return EXIT_OK


def _feasibility(ctx: Context, basis) -> tuple:
    from .graphs import InfeasibleTargetError, feasible_targets

    try:
        systems = systems_from(ctx.cfg, basis)
    except InfeasibleTargetError as exc:
        return None, {"feasible": False, "error": str(exc), "distance": exc.distance}
    reports = {}
    ok = True
    for r, syss in sorted(systems.items()):
        rep = feasible_targets(syss)
        reports[str(r)] = rep.to_json()
        ok &= rep.feasible
    return systems, {"feasible": ok, "orders": reports}


def _print_feasibility(report: dict) -> None:
    if "error" in report:
        print(f"infeasible: {report['error']}")
        return
    for r, rep in report["orders"].items():
        for s in rep["steps"]:
            flag = "ok" if s["feasible"] else "REJECTED"
            print(f"order {r} {s['graph']:<14} {s['kind']:<9} image dim {s['image_dim']:>3} "
                  f"distance {s['distance']:.2e} {flag}")
    print("feasible" if report["feasible"] else "infeasible")


def cmd_feasible(ctx: Context) -> int:
    net = network_from(ctx.cfg)
    basis = basis_from(ctx.cfg, net)
    _, report = _feasibility(ctx, basis)
    _print_feasibility(report)
    (ctx.out / "feasibility.json").write_text(json.dumps(report, indent=1))
    ctx.write_meta("feasible", {"feasible": report["feasible"]})
    return EXIT_OK if report["feasible"] else EXIT_INFEASIBLE


def _verify_rows(seq, basis, spec, cfg: dict) -> list:
    from .objectives import Objective

    obj = Objective(spec, None)
    cint = obj.c_integrals(seq)
    tol = cfg.get("verify", {}).get("tolerance", 1e-2)
    rows = []
    for r, syss in sorted(spec.systems.items()):
        for s in syss:
            res = s.residual(cint.vector(r))
            row = {"order": r - 1, "graph": s.graph.label, "residual": res,
                   "pass": bool(res <= tol)}
            if s.kind == "free":
                row["t_prime"] = s.achieved_t_prime(cint.vector(r))
            rows.append(row)
    return rows


def _print_rows(rows: list) -> None:
    for row in rows:
        extra = f"  T'={row['t_prime']:.4g}" if "t_prime" in row else ""
        print(f"H^({row['order']}) {row['graph']:<14} residual {row['residual']:.3e} "
              f"{'PASS' if row['pass'] else 'FAIL'}{extra}")


def cmd_design(ctx: Context) -> int:
    from .model import write_sequence_csv
    from .search import optimize

    net = network_from(ctx.cfg)
    basis = basis_from(ctx.cfg, net)
    systems, report = _feasibility(ctx, basis)
    if not report["feasible"]:
        _print_feasibility(report)
        (ctx.out / "feasibility.json").write_text(json.dumps(report, indent=1))
        return EXIT_INFEASIBLE
    spec = design_spec_from(ctx.cfg, basis, systems)
    scfg = search_config_from(ctx.cfg, ctx.args.seed, ctx.args.threads)
    res = optimize(spec, scfg, net, log_path=ctx.out / "trace.jsonl")
    write_sequence_csv(res.sequence, ctx.out / "sequence.csv")
    rows = _verify_rows(res.sequence, basis, spec, ctx.cfg)
    print(f"Q={len(res.sequence)} evaluations={res.evaluations} converged={res.converged}")
    for k, v in res.breakdown.terms.items():
        print(f"  {k:<4} {v:.3e}")
    for g, tp in res.breakdown.t_primes.items():
        print(f"  achieved T' for {g}: {tp:.4g}")
    _print_rows(rows)
    ctx.write_meta("design", {"converged": res.converged, "evaluations": res.evaluations,
                              "terms": res.breakdown.terms, "t_prime": res.breakdown.t_primes,
                              "verify": rows})
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_verify(ctx: Context) -> int:
    from .graphs import InfeasibleTargetError
    from .magnus import effective_hamiltonian, reconstruct_magnus
    from .model import ParameterRealization, internal_hamiltonian, sample_realization
    from .toggling import parity_residual

    seq = _read_sequence(ctx.args.sequence, ctx.cfg)
    net = network_from(ctx.cfg)
    basis = basis_from(ctx.cfg, net)
    try:
        systems = systems_from(ctx.cfg, basis)
    except InfeasibleTargetError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    spec = design_spec_from(ctx.cfg, basis, systems)
    rows = _verify_rows(seq, basis, spec, ctx.cfg)
    _print_rows(rows)
    from .toggling import compute_c_integrals

    vcfg = ctx.cfg.get("verify", {})
    order = vcfg.get("orders", 3)
    cint = compute_c_integrals(seq, basis, order, spec.nodes_per_segment)
    ne = [i for i in range(len(basis)) if basis.component_of(i) != "error"]
    parity = {r: parity_residual(cint, r, ne) for r in range(2, order + 1)}
    for r, p in parity.items():
        print(f"parity residual r={r} (non-error components): {p:.3e}")
    ens = ensemble_from(ctx.cfg.get("ensemble", {}), ctx.seed("ensemble"))
    real = sample_realization(net, ens, 0)
    h = internal_hamiltonian(net, real)
    scale = float(np.linalg.norm(h, 2)) + abs(real.eps) * 0.5 * net.n * seq.omega_max
    oracle = None
    if scale > 0:
        # keep the perturbation inside the convergent regime of the series
        shrink = min(1.0, 0.3 / (scale * seq.total_time))
        real = ParameterRealization({m: v * shrink for m, v in real.values.items()})
        hs = reconstruct_magnus(cint, basis, real, order)
        oracle = float(np.linalg.norm(sum(hs) - effective_hamiltonian(seq, net, real), 2))
        print(f"logm oracle discrepancy (order {order}, scale {shrink:.3g}): {oracle:.3e}")
    ctx.write_meta("verify", {"rows": rows, "parity": parity, "oracle": oracle})
    return EXIT_OK


def _regimes(cfg: dict) -> list:
    sim = cfg.get("simulation", {})
    regs = sim.get("regimes")
    if regs:
        return regs
    e = cfg.get("ensemble", {})
    return [{"name": "base", **{k: v for k, v in e.items() if k != "seed"}}]


def cmd_simulate(ctx: Context) -> int:
    from .simlab import SimulationCampaign, autocorrelation, fit_gaussian_decay, time_to_threshold

    sim = ctx.cfg.get("simulation", {})
    net = network_from(ctx.cfg, sim.get("n"))
    seed = ctx.seed("ensemble")
    summary = []
    n_ok = 0
    for path in ctx.args.sequences:
        try:
            seq = _read_sequence(path, ctx.cfg)
        except ConfigError as exc:
            print(f"skip {path}: {exc}")
            continue
        n_ok += 1
        for i, reg in enumerate(_regimes(ctx.cfg)):
            ens = ensemble_from(reg, seed)
            name = f"{Path(path).stem}__{reg.get('name', f'regime{i}')}"
            camp = SimulationCampaign(seq, net, ens, sim.get("k_max", 100),
                                      sim.get("n_realizations", 50), sim.get("observable", "x"),
                                      name)
            res = autocorrelation(camp, ctx.args.threads)
            res.write(ctx.out / f"{name}.csv", ctx.out / f"{name}.meta.json")
            row = {"campaign": name, "t_1e_ms": time_to_threshold(res.times_ms, res.s_mean)}
            if "fit_window_ms" in sim:
                try:
                    row["gaussian_sigma_per_ms"] = fit_gaussian_decay(
                        res.times_ms, res.s_mean, sim["fit_window_ms"]).sigma
                except ValueError as exc:
                    row["gaussian_sigma_per_ms"] = math.nan
                    row["fit_error"] = str(exc)
            for h in sim.get("horizons_ms", []):
                k = int(np.argmin(np.abs(res.times_ms - h)))
                row[f"S_at_{h:g}ms"] = float(res.s_mean[k])
            summary.append(row)
            print(json.dumps(row))
    if n_ok == 0:
        return EXIT_CONFIG
    (ctx.out / "summary.json").write_text(json.dumps(summary, indent=1))
    ctx.write_meta("simulate", {"summary": summary})
    return EXIT_OK


def cmd_symmetrize(ctx: Context) -> int:
    from .model import write_sequence_csv
    from .search import SearchError, symmetrize

    seq = _read_sequence(ctx.args.sequence, ctx.cfg)
    try:
        out = symmetrize(seq)
    except SearchError as exc:
        print(str(exc))
        return EXIT_CONFIG
    path = ctx.out / (Path(ctx.args.sequence).stem + "_sym.csv")
    write_sequence_csv(out, path)
    print(f"wrote {path} ({len(out)} segments, T={out.total_time:g} us)")
    ctx.write_meta("symmetrize", {"output": str(path)})
    return EXIT_OK


def cmd_probe(ctx: Context) -> int:
    from .search import span_probe

    net = network_from(ctx.cfg)
    basis = basis_from(ctx.cfg, net)
    p = ctx.cfg.get("probe", {})
    wm, dt, _ = control_from(ctx.cfg)
    order = ctx.args.order or p.get("order", 2)
    probe = span_probe(net, basis, order, p.get("n_sequences", len(basis) ** order + 10),
                       p.get("q", 12), ctx.seed("probe"), wm, dt)
    print(f"order {order}: spanned dimension {probe.rank} of {len(basis) ** order}")
    np.savetxt(ctx.out / f"probe_r{order}.csv", probe.basis, delimiter=",")
    ctx.write_meta(f"probe_r{order}", {"rank": probe.rank})
    return EXIT_OK


COMMANDS = {
    "cspace": cmd_cspace,
    "graphs": cmd_graphs,
    "feasible": cmd_feasible,
    "design": cmd_design,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "symmetrize": cmd_symmetrize,
    "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hameng", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON project config")
    common.add_argument("--seed", type=int, help="override every seed in the config (u64)")
    common.add_argument("--threads", type=int, default=1, help="worker cap")
    common.add_argument("--out", default="out", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("cspace", parents=[common], help="C-space dimensions and basis dump")
    g = sub.add_parser("graphs", parents=[common], help="enumerate parameter graphs")
    g.add_argument("--order", "-r", type=int, required=True, help="edges per graph")
    g.add_argument("--components", nargs="+", choices=["error", "detuning", "coupling"])
    sub.add_parser("feasible", parents=[common], help="check design targets")
    sub.add_parser("design", parents=[common], help="search for a sequence")
    v = sub.add_parser("verify", parents=[common], help="residuals of a sequence file")
    v.add_argument("sequence")
    s = sub.add_parser("simulate", parents=[common], help="autocorrelation campaigns")
    s.add_argument("sequences", nargs="+")
    y = sub.add_parser("symmetrize", parents=[common], help="append the reversed cycle")
    y.add_argument("sequence")
    pr = sub.add_parser("probe", parents=[common], help="random-sequence span probe")
    pr.add_argument("--order", "-r", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        ctx = Context(args, cfg)
        return COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
