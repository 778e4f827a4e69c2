"""Shared builders for test instances."""

import numpy as np
import pytest

from schwarzlab.decomp import build_restrictions, partition_grid
from schwarzlab.meshfem import assemble, build_mesh


def make_instance(nx=8, ny=8, px=2, py=2, *, wave=False, kappa=0.0, eta=1.0,
                  absorption=0.0, boundary="robin", source="constant"):
    """Mesh, problem, and decomposition in one call."""
    mesh = build_mesh(nx, ny, boundary=boundary)
    problem = assemble(mesh, kappa=kappa, eta=eta, absorption=absorption,
                       source=source, wave=wave)
    decomp = build_restrictions(mesh, partition_grid(mesh, px, py), problem)
    return mesh, problem, decomp


def primal_reference(decomp):
    uhat = np.asarray(decomp.problem.direct_solve())
    return decomp.apply_R(uhat)


@pytest.fixture(scope="session")
def coercive_2x2():
    """Laplace-type SPD instance on 2x2 subdomains with a cross point."""
    return make_instance(8, 8, 2, 2, wave=False, kappa=0.0, eta=1.0,
                         boundary="robin", source="point:0.3,0.4")


@pytest.fixture(scope="session")
def helmholtz_2x2():
    """All-Robin wave instance on 2x2 subdomains."""
    return make_instance(8, 8, 2, 2, wave=True, kappa=2.0, eta=2.0,
                         boundary="robin", source="point:0.3,0.4")
