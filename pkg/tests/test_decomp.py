import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schwarzlab.decomp import (bubble_dofs, build_restrictions, check_assembling,
                               partition_grid)
from schwarzlab.meshfem import assemble, build_mesh

from conftest import make_instance


class TestPartitionGrid:
    def test_2x2_equal_counts(self):
        mesh = build_mesh(4, 4, boundary="robin")
        part = partition_grid(mesh, 2, 2)
        assert part.n_subdomains == 4
        for i in range(4):
            assert len(part.elements_of(i)) == 8

    def test_single_subdomain(self):
        mesh = build_mesh(4, 4, boundary="robin")
        part = partition_grid(mesh, 1, 1)
        assert part.n_subdomains == 1
        assert len(part.elements_of(0)) == mesh.n_triangles

    def test_two_strips(self):
        mesh = build_mesh(4, 2, boundary="robin")
        part = partition_grid(mesh, 2, 1)
        assert part.n_subdomains == 2
        assert len(part.elements_of(0)) == len(part.elements_of(1)) == 8

    def test_indivisible_rejected(self):
        mesh = build_mesh(5, 4, boundary="robin")
        with pytest.raises(ValueError):
            partition_grid(mesh, 2, 2)


class TestRestrictions:
    def test_cross_point_multiplicity(self):
        _, _, dec = make_instance(4, 4, 2, 2)
        mu = dec.multiplicities.mu
        assert np.max(mu) == 4
        assert int(np.sum(mu == 4)) == 1     # single center cross dof

    def test_single_subdomain_identity(self):
        _, prob, dec = make_instance(4, 4, 1, 1)
        R = dec.R_matrix(0).to_dense().real
        assert np.array_equal(R, np.eye(prob.n))

    def test_RRt_identity(self):
        _, _, dec = make_instance(8, 8, 2, 2)
        for i in range(dec.n_sub):
            R = dec.R_matrix(i).to_dense().real
            assert np.array_equal(R @ R.T, np.eye(R.shape[0]))

    def test_RtR_multiplicities(self):
        _, _, dec = make_instance(8, 8, 4, 2)
        total = sum(dec.R_matrix(i).to_dense().real.T @ dec.R_matrix(i).to_dense().real
                    for i in range(dec.n_sub))
        assert np.array_equal(total, np.diag(dec.multiplicities.mu.astype(float)))

    def test_coverage(self):
        _, prob, dec = make_instance(8, 8, 2, 2)
        rng = np.random.default_rng(0)
        for _ in range(20):
            vhat = rng.standard_normal(prob.n)
            assert np.linalg.norm(dec.apply_R(vhat)) > 0.0


class TestAssembling:
    def test_exact_zero(self):
        _, _, dec = make_instance(8, 8, 2, 2, wave=True, kappa=2.0, eta=2.0)
        rep = check_assembling(dec)
        assert rep.passed
        assert rep.max_dev_matrix == 0.0
        assert rep.max_dev_load == 0.0

    def test_injected_fault_located(self):
        _, _, dec = make_instance(4, 4, 2, 2)
        parts = [dict(p) for p in dec.local_parts]
        broken = parts[0]["A0"].to_dense()
        r, c = np.nonzero(broken)
        broken[r[0], c[0]] += 1e-3
        from schwarzlab.linalg import SparseMatrix
        parts[0] = dict(parts[0], A0=SparseMatrix.from_dense(broken))
        rep = check_assembling(dec, local_parts=parts)
        assert not rep.passed
        assert rep.worst_entry is not None
        g = dec.maps[0]
        assert rep.worst_entry == (int(g[r[0]]), int(g[c[0]]))

    def test_twin_scalar_sum(self):
        from schwarzlab.formulations import twin_scalar
        ts = twin_scalar(a=(1.0, 1.0), m=1.0, alpha=1.0, f=(1.0, 1.0))
        assert ts.decomp.problem.A_hat().to_dense()[0, 0] == 2.0


class TestBubbles:
    def test_single_subdomain_all_bubbles(self):
        _, prob, dec = make_instance(4, 4, 1, 1)
        masks = bubble_dofs(dec)
        assert int(np.sum(masks[0])) == prob.n

    def test_two_strips_interface_excluded(self):
        _, _, dec = make_instance(4, 4, 2, 1)
        masks = bubble_dofs(dec)
        interface = set(int(k) for k in dec.multiplicities.interface_dofs)
        for i, mask in enumerate(masks):
            local_interface = {int(g) for g in dec.maps[i][~mask]}
            assert local_interface == interface

    def test_twin_scalar_no_bubbles(self):
        from schwarzlab.formulations import twin_scalar
        ts = twin_scalar()
        masks = bubble_dofs(ts.decomp)
        assert not any(mask.any() for mask in masks)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([(4, 4, 2, 2), (6, 4, 3, 2), (8, 8, 4, 4), (6, 6, 2, 3)]),
       st.booleans(), st.floats(0.0, 4.0))
def test_assembling_property(shape, wave, kappa):
    nx, ny, px, py = shape
    if wave and kappa == 0.0:
        kappa = 1.0
    mesh = build_mesh(nx, ny, boundary="robin")
    prob = assemble(mesh, kappa=kappa if wave else 0.0, eta=1.0,
                    absorption=0.25, wave=wave)
    dec = build_restrictions(mesh, partition_grid(mesh, px, py), prob)
    rep = check_assembling(dec)
    assert rep.max_dev_matrix == 0.0 and rep.max_dev_load == 0.0
