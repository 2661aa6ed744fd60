import numpy as np
import pytest

from hameng import ops
from hameng.cspace import (
    CSpaceError, ParametricOperator, adjoint_matrices, build_cspace, minimal_composite_cspace,
    perturbation_components, project, projection_residual,
)
from hameng.model import NetworkSpec


@pytest.mark.parametrize("n", [2, 3, 4])
def test_flagship_dims(n):
    basis = build_cspace(NetworkSpec.all_to_all(n))
    assert basis.dims == [3, 3, 5]
    assert basis.composite_dim == 11
    assert basis.component_names == ["error", "detuning", "coupling"]


def test_heisenberg_coupling_is_invariant():
    net = NetworkSpec.all_to_all(3, error=False, d_tensor=np.eye(3))
    basis = build_cspace(net, include=("coupling",))
    assert basis.dims == [1]


def test_detuning_only():
    basis = build_cspace(NetworkSpec.chain(3, error=False), include=("detuning",))
    assert basis.dims == [3]


def test_gram_is_identity(basis3):
    assert np.allclose(basis3.gram(), np.eye(len(basis3)), atol=1e-12)


def test_closed_under_collective_rotations(basis3):
    gens = [0.5 * ops.collective(c, basis3.n) for c in "XYZ"]
    for h in basis3.elements:
        for g in gens:
            assert projection_residual(h.adjoint_action(g), basis3) < 1e-10


def test_adjoint_matrices_antisymmetric_block_diagonal(basis3):
    m = adjoint_matrices(basis3)
    assert np.allclose(m, -np.transpose(m, (0, 2, 1)), atol=1e-12)
    for a, sa in enumerate(basis3.component_names):
        for b, sb in enumerate(basis3.component_names):
            if a != b:
                blk = m[:, basis3.component_slice(sa), basis3.component_slice(sb)]
                assert np.abs(blk).max() < 1e-12


def test_project_round_trip(basis3, rng):
    c = rng.standard_normal(len(basis3))
    op = basis3.elements[0] * c[0]
    for ci, h in zip(c[1:], basis3.elements[1:]):
        op = op + h * ci
    back, resid = project(op, basis3)
    assert np.allclose(back, c, atol=1e-12) and resid < 1e-10


def test_parametric_operator_instantiate():
    a = ParametricOperator({(1, 1): ops.build_pauli("ZI"), (2, 2): ops.build_pauli("IZ")})
    h = a.instantiate({(1, 1): 2.0, (2, 2): -1.0})
    assert np.allclose(h, 2 * ops.build_pauli("ZI") - ops.build_pauli("IZ"))
    assert a.norm() == pytest.approx(np.sqrt(2))


def test_dump_is_json_ready(basis3, tmp_path):
    path = tmp_path / "c.json"
    basis3.dump_json(path)
    import json

    data = json.loads(path.read_text())
    assert data["dims"] == [3, 3, 5] and data["total"] == 11


def test_empty_components_rejected():
    with pytest.raises(CSpaceError):
        minimal_composite_cspace([])


def test_components_drop_empty_parameter_sets():
    comps = perturbation_components(NetworkSpec(2, edges=(), loops=((1, 1),), error_ids=()))
    assert [c.name for c in comps] == ["detuning"]
