import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hameng.cspace import build_cspace
from hameng.graphs import constraint_system
from hameng.magnus import reconstruct_magnus
from hameng.model import (
    ControlSegment, ControlSequence, NetworkSpec, ParameterRealization, primary_propagator,
    random_sequence,
)
from hameng.objectives import DesignSpec, Objective
from hameng.search import (
    CMAOptimizer, SearchConfig, SearchError, decode, decode_half, encode, identity_fidelity,
    mirror, optimize, span_probe, symmetrize,
)
from hameng.toggling import compute_c_integrals, parity_residual

from conftest import identity_cycle


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=30).filter(lambda v: len(v) % 3 == 0))
def test_decode_respects_bounds(values):
    seq = decode(np.array(values))
    assert seq.endpoint_rule and seq.segments[0].is_idle and seq.segments[-1].is_idle
    for s in seq.segments:
        assert 0 <= s.omega1 <= seq.omega_max
        assert abs(s.delta_omega) <= seq.omega_max
        assert 0 <= s.phi < 2 * math.pi
        assert s.duration == seq.dt_default


def test_encode_inverts_decode(rng):
    x = rng.normal(0, 1, 3 * 6)
    x[1::3] = np.mod(x[1::3], 2 * math.pi)
    assert np.allclose(encode(decode(x)), x, atol=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(q_min=2)
    with pytest.raises(ValueError):
        SearchConfig(q_min=8, q_max=6)
    with pytest.raises(ValueError):
        SearchConfig(population=2)
    with pytest.raises(ValueError):
        SearchConfig(q_min=7, symmetric=True)


def test_trivial_identity_target():
    net = NetworkSpec(2, edges=(), loops=(), error_ids=("e",))
    basis = build_cspace(net, include=("error",))
    spec = DesignSpec(basis, weights={"pri": 1.0, 0: 0.0})
    res = optimize(spec, SearchConfig(q_min=4, q_max=4, max_evals=3000, seed=5, target=1e-6),
                   net)
    assert res.converged and res.breakdown.total <= 1e-6


def _detuning_problem():
    net = NetworkSpec.all_to_all(2, error=False)
    basis = build_cspace(net, include=("detuning",))
    return net, DesignSpec(basis)


def test_two_qubit_detuning_decoupling():
    net, spec = _detuning_problem()
    cfg = SearchConfig(q_min=8, q_max=8, max_evals=20000, seed=2,
                       thresholds={"pri": 1e-6, "f0": 1e-3})
    res = optimize(spec, cfg, net)
    assert res.converged, res.breakdown.terms
    assert res.breakdown.terms["f0"] <= 1e-3
    assert res.evaluations <= 20000
    assert len(res.sequence) == 8


def test_search_is_deterministic(tmp_path):
    net, spec = _detuning_problem()
    cfg = SearchConfig(q_min=5, q_max=6, q_step=1, max_evals=600, seed=9)
    a = optimize(spec, cfg, net, log_path=tmp_path / "a.jsonl")
    b = optimize(spec, cfg, net)
    assert np.array_equal(a.x, b.x)
    assert a.breakdown.total == b.breakdown.total
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert len(lines) == len([t for t in a.trace if not t.get("polish")])


def test_threads_do_not_change_result():
    net, spec = _detuning_problem()
    a = optimize(spec, SearchConfig(q_min=5, q_max=5, max_evals=300, seed=4), net)
    b = optimize(spec, SearchConfig(q_min=5, q_max=5, max_evals=300, seed=4, threads=3), net)
    assert np.array_equal(a.x, b.x)


def test_polish_reduces_cost():
    net, spec = _detuning_problem()
    base = SearchConfig(q_min=6, q_max=6, max_evals=200, seed=3)
    plain = optimize(spec, base, net)
    cfg = SearchConfig(q_min=6, q_max=6, max_evals=200, seed=3, polish_evals=3000,
                       thresholds={"pri": 1e-9, "f0": 1e-9})
    polished = optimize(spec, cfg, net)
    assert polished.breakdown.total <= plain.breakdown.total


def test_cma_optimizer_ask_tell():
    opt = CMAOptimizer(np.zeros(4), 0.5, seed=1, max_evals=400, population=8)
    while not opt.stop():
        xs = opt.ask()
        opt.tell(xs, [float(np.sum((x - 1) ** 2)) for x in xs])
    assert np.allclose(opt.es.result.xbest, 1, atol=0.2)


def test_symmetrize_cancels_odd_orders(net3, rng):
    net = NetworkSpec.all_to_all(3)
    basis = build_cspace(net)
    seq = identity_cycle(rng, 8)
    sym = symmetrize(seq)
    assert len(sym) == 2 * len(seq)
    assert identity_fidelity(sym) == pytest.approx(1.0, abs=1e-12)
    ne = [i for i in range(len(basis)) if basis.component_of(i) != "error"]
    ci_sym = compute_c_integrals(sym, basis, 2)
    assert parity_residual(ci_sym, 2, ne) <= 1e-6
    # first-order term without the error parameter
    real = ParameterRealization({m: (0.0 if m == "e" else 0.01 * rng.standard_normal())
                                 for m in net.parameter_ids})
    h_base = reconstruct_magnus(compute_c_integrals(seq, basis, 2), basis, real, 2)[1]
    h_sym = reconstruct_magnus(ci_sym, basis, real, 2)[1]
    assert np.linalg.norm(h_sym) <= 1e-3 * np.linalg.norm(h_base)


def test_symmetrize_requires_identity_cycle(rng):
    seq = ControlSequence((ControlSegment(2.0), ControlSegment(1.0, 1.0, 0.0, 0.0)))
    with pytest.raises(SearchError):
        symmetrize(seq)


def test_mirror_always_returns_identity(rng):
    seq = random_sequence(rng, 5)
    m = mirror(seq)
    u = primary_propagator(m, 2)
    assert np.allclose(u, np.eye(4), atol=1e-12)


def test_symmetric_search_has_vanishing_first_order():
    net = NetworkSpec.all_to_all(2, error=False)
    basis = build_cspace(net, include=("detuning", "coupling"))
    systems = {2: [constraint_system(g, basis) for g in ["{11,11}", "{11,12}", "{12,12}"]]}
    spec = DesignSpec(basis, systems=systems)
    cfg = SearchConfig(q_min=8, q_max=8, max_evals=200, seed=1, symmetric=True)
    res = optimize(spec, cfg, net)
    assert len(res.sequence) == 8
    assert res.breakdown.terms["f1"] < 1e-10
    assert res.breakdown.terms["pri"] < 1e-12
    assert decode_half(res.x).segments == res.sequence.segments[:4]


def test_span_probe_detects_reachable_directions(basis3, net3):
    probe = span_probe(net3, basis3, 1, 30, 6, seed=2)
    assert probe.rank == len(basis3)
    probe2 = span_probe(net3, basis3, 2, 40, 6, seed=2)
    assert probe2.rank < len(basis3) ** 2
    # a vector built from sampled sequences is reachable
    seq = random_sequence(np.random.default_rng(8), 6)
    v = compute_c_integrals(seq, basis3, 1).vector(1)
    assert not probe.probably_unachievable(v)
    with pytest.raises(ValueError):
        span_probe(net3, basis3, 1, 0, 6)
