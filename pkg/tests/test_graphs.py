import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hameng import ops
from hameng.graphs import (
    InfeasibleTargetError, ParameterGraph, achievable_subspace, constraint_system,
    derivative_matrix, enumerate_graphs, feasible_targets, graph_report, graphs_equivalent,
    nullspace, span_distance, write_graph_report,
)
from hameng.magnus import graph_derivative_tensor
from hameng.model import NetworkSpec

# operator lists quoted as fixtures (3-qubit Pauli maps)
CROSS_TERM_SPAN = [
    {"ZZI": 2, "XXI": -1, "YYI": -1}, {"XXI": 1, "YYI": -1}, {"XYI": 1}, {"YXI": 1},
    {"XZI": 1}, {"ZXI": 1}, {"YZI": 1}, {"ZYI": 1},
]
THREE_BODY_SPAN = [
    {"XYZ": 1, "XZY": 1, "YXZ": 1, "YZX": 1, "ZXY": 1, "ZYX": 1},
    {"XXY": 1, "XYX": 1, "YXX": 1, "YYY": -2, "ZZY": 1, "ZYZ": 1, "YZZ": 1},
    {"XXZ": 1, "XZX": 1, "ZXX": 1, "ZZZ": -2, "YYZ": 1, "YZY": 1, "ZYY": 1},
    {"YYX": 1, "YXY": 1, "XYY": 1, "XXX": -3, "ZZX": 2, "ZXZ": 2, "XZZ": 2},
    {"XXY": -1, "XYX": -1, "YXX": -1, "ZZY": 1, "ZYZ": 1, "YZZ": 1},
    {"XXZ": 1, "XZX": 1, "ZXX": 1, "YYZ": -1, "YZY": -1, "ZYY": -1},
    {"YYX": -3, "YXY": -3, "XYY": -3, "XXX": 1, "ZZX": 2, "ZXZ": 2, "XZZ": 2},
]


def canon(labels):
    return {ParameterGraph.parse(s).canonical_form for s in labels}


def test_parse_and_label():
    g = ParameterGraph.parse("{12, e, 11}")
    assert g.edges == ("e", (1, 1), (1, 2))
    assert g.label == "{e,11,12}" and g.r == 3 and g.error_count == 1
    assert g.vertices == (1, 2)


def test_connectivity_ignores_error_edges():
    assert ParameterGraph.parse("{e,11,12}").is_connected()
    assert not ParameterGraph.parse("{11,22}").is_connected()
    assert not ParameterGraph.parse("{12,34}").is_connected()
    assert ParameterGraph.parse("{e,e}").is_connected()


def test_first_order_graphs(net3):
    assert [g.label for g in enumerate_graphs(net3, 2)] == [
        "{11,11}", "{11,12}", "{12,12}", "{12,13}", "{e,11}", "{e,12}", "{e,e}"]
    listed = ["{11,11}", "{11,12}", "{12,12}", "{12,23}", "{e,11}", "{e,12}", "{e,e}"]
    assert {g.canonical_form for g in enumerate_graphs(net3, 2)} == canon(listed)


def test_second_order_coupling_graphs():
    found = enumerate_graphs(NetworkSpec.all_to_all(4), 3, include_error=False,
                             component_filter=["coupling"])
    listed = ["{12,12,23}", "{12,23,13}", "{12,13,14}", "{12,12,12}", "{12,23,34}"]
    assert len(found) == 5
    assert {g.canonical_form for g in found} == canon(listed)


def test_chain_two_qubits_third_order_count():
    found = enumerate_graphs(NetworkSpec.chain(2, error=False), 3)
    assert [g.label for g in found] == [
        "{11,11,11}", "{11,11,12}", "{11,22,12}", "{11,12,12}", "{12,12,12}"]


def test_small_network_limits_embeddings():
    # the path {12,23,34} and the star {12,13,14} need four qubits
    found = enumerate_graphs(NetworkSpec.all_to_all(3), 3, include_error=False,
                             component_filter=["coupling"])
    assert [g.label for g in found] == ["{12,12,12}", "{12,12,13}", "{12,13,23}"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["e", "11", "22", "33", "12", "13", "23", "14", "34"]),
                min_size=1, max_size=4), st.permutations([1, 2, 3, 4]))
def test_canonical_form_invariant_under_relabeling(labels, perm):
    g = ParameterGraph.parse("{" + ",".join(labels) + "}")
    h = g.relabel(dict(zip([1, 2, 3, 4], perm)))
    assert g.canonical_form == h.canonical_form
    assert g.isomorphic(h)


def test_isomorphic_graphs_are_equivalent(basis3):
    a, b = ParameterGraph.parse("{12,23}"), ParameterGraph.parse("{13,23}")
    assert graphs_equivalent(a, b, basis3)
    assert not graphs_equivalent(ParameterGraph.parse("{12,12}"), a, basis3)
    with pytest.raises(ValueError):
        graphs_equivalent(a, ParameterGraph.parse("{12}"), basis3)


def test_disconnected_graphs_have_zero_derivative(basis3, net3):
    for r in (2, 3):
        for g in enumerate_graphs(net3, r, connected=False):
            assert np.abs(graph_derivative_tensor(g.edges, basis3)).sum() <= 1e-10
            assert not np.abs(derivative_matrix(g, basis3)).max() > 1e-12


def test_derivative_matrix_matches_tensor(basis3):
    g = ParameterGraph.parse("{11,12}")
    a = derivative_matrix(g, basis3)
    t = graph_derivative_tensor(g.edges, basis3)
    k = len(basis3)
    coeffs = ops.pauli_coefficients(t.reshape((k * k,) + t.shape[2:]))
    assert np.allclose(a, coeffs.T.real, atol=1e-12)
    assert np.abs(coeffs.imag).max() < 1e-12


def test_cross_term_subspace(basis3):
    s = achievable_subspace("{11,12}", basis3)
    assert s.dim == 8
    assert span_distance(s.operators(), [ops.from_pauli_map(m, 3) for m in CROSS_TERM_SPAN],
                         3) <= 1e-9


def test_three_body_subspace_in_restricted_nullspace(basis3):
    null = nullspace(derivative_matrix(ParameterGraph.parse("{12,12}"), basis3)[
        np.any(derivative_matrix(ParameterGraph.parse("{12,12}"), basis3), axis=1)])
    s = achievable_subspace("{12,23}", basis3, restriction=null)
    assert s.dim == 7
    assert achievable_subspace("{12,23}", basis3).dim == 10
    assert span_distance(s.operators(), [ops.from_pauli_map(m, 3) for m in THREE_BODY_SPAN],
                         3) <= 1e-9


def test_rank_equals_subspace_dimension(basis3, net3):
    for g in enumerate_graphs(net3, 2):
        a = derivative_matrix(g, basis3)
        assert np.linalg.matrix_rank(a, tol=1e-9 * max(np.abs(a).max(), 1)) == \
            achievable_subspace(g, basis3).dim


def test_constraint_system_kinds(basis3):
    dec = constraint_system("{12,12}", basis3)
    assert dec.kind == "decouple" and not dec.d.any()
    fixed = constraint_system("{11,12}", basis3, CROSS_TERM_SPAN[0], t_prime=2.0)
    assert fixed.kind == "fixed"
    free = constraint_system("{11,12}", basis3, CROSS_TERM_SPAN[0], t_prime=None)
    assert free.kind == "free"
    c = np.linalg.lstsq(free.A, 3.0 * free.target, rcond=None)[0]
    assert free.achieved_t_prime(c) == pytest.approx(3.0)
    assert free.residual(c) < 1e-9
    assert fixed.residual(c) == pytest.approx(np.linalg.norm(free.target), rel=1e-9)


def test_rejects_target_outside_subspace(basis3):
    with pytest.raises(InfeasibleTargetError) as info:
        constraint_system("{11,12}", basis3, {"XYZ": 1.0})
    assert info.value.distance > 0.5


def test_three_body_pipeline_is_feasible(basis3):
    systems = [constraint_system(g, basis3) for g in
               ["{11,11}", "{11,12}", "{e,11}", "{e,12}", "{e,e}", "{12,12}"]]
    systems.append(constraint_system("{12,23}", basis3, THREE_BODY_SPAN[0], t_prime=None))
    rep = feasible_targets(systems)
    assert rep.feasible
    assert rep.steps[-1].image_dim == 7


def test_feasibility_reports_conflict(basis3):
    # asking the same graph for two different targets cannot be met
    a = constraint_system("{11,12}", basis3, CROSS_TERM_SPAN[0])
    b = constraint_system("{11,12}", basis3, CROSS_TERM_SPAN[2])
    rep = feasible_targets([a, b])
    assert not rep.feasible
    assert [s.feasible for s in rep.steps] == [True, False]


def test_graph_report_written(basis3, net3, tmp_path):
    graphs = enumerate_graphs(net3, 1)
    assert [g.label for g in graphs] == ["{11}", "{12}", "{e}"]
    rows = graph_report(graphs, basis3)
    assert [r["dim"] for r in rows] == [3, 5, 3]
    write_graph_report(graphs, basis3, tmp_path / "g.json")
    assert (tmp_path / "g.json").stat().st_size > 0
