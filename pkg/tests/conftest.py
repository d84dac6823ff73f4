import numpy as np
import pytest

import voxtop as vt


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def face_fixed_mask(grid, axis=0, side=0):
    """All three dofs fixed on one domain face."""
    mask = np.zeros(grid.n_dofs, dtype=bool)
    ranges = [range(grid.nelx + 1), range(grid.nely + 1), range(grid.nelz + 1)]
    ranges[axis] = [0 if side == 0 else ranges[axis][-1]]
    for k in ranges[2]:
        for j in ranges[1]:
            for i in ranges[0]:
                node = grid.node_id(i, j, k)
                mask[3 * node : 3 * node + 3] = True
    return mask


def cantilever_state(nelx, nely, nelz, rho=None, model=None, h=1.0):
    """Fixed x = 0 face, point load at the free-end face center, -z."""
    grid = vt.build_grid(nelx, nely, nelz, h)
    if rho is None:
        rho = np.ones(grid.n_elements)
    model = model or vt.MaterialModel()
    state = vt.OperatorState(grid, rho, model, face_fixed_mask(grid), vt.unit_stiffness(0.3, h))
    f = np.zeros(grid.n_dofs)
    f[3 * grid.node_id(nelx, nely // 2, nelz // 2) + 2] = -1.0
    return grid, state, f


def random_free_vector(rng, state):
    v = rng.standard_normal(state.grid.n_dofs)
    v[state.fixed_idx] = 0.0
    return v
