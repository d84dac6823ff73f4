import numpy as np
import pytest

import voxtop as vt
from voxtop.grid import Box, Region, element_dofs_array

from oracles import brute_force_element_nodes


def test_single_element_counts():
    g = vt.build_grid(1, 1, 1, 1.0)
    assert g.n_elements == 1
    assert g.n_nodes == 8
    assert g.n_dofs == 24


def test_benchmark_element_count():
    g = vt.build_grid(64, 32, 32, 1.0)
    assert g.n_elements == 65_536


def test_node_numbering_and_element_nodes_2x1x1():
    g = vt.build_grid(2, 1, 1, 1.0)
    assert g.node_id(2, 1, 1) == 11
    nodes = vt.element_nodes(g, 1)
    assert set(nodes.tolist()) == {1, 2, 4, 5, 7, 8, 10, 11}


@pytest.mark.parametrize("bad", [(0, 1, 1, 1.0), (1, -1, 1, 1.0), (1, 1, 1, 0.0), (1, 1, 1, -2.0)])
def test_build_grid_rejects_bad_dimensions(bad):
    with pytest.raises(ValueError):
        vt.build_grid(*bad)


def test_element_nodes_single_element_covers_grid():
    g = vt.build_grid(1, 1, 1, 1.0)
    assert set(vt.element_nodes(g, 0).tolist()) == set(range(8))


def test_center_node_incidence_2x2x2():
    g = vt.build_grid(2, 2, 2, 1.0)
    center = g.node_id(1, 1, 1)
    hits = sum(center in vt.element_nodes(g, e) for e in range(g.n_elements))
    assert hits == 8


def test_element_nodes_against_brute_force():
    g = vt.build_grid(3, 2, 2, 1.0)
    for e in range(g.n_elements):
        assert sorted(vt.element_nodes(g, e).tolist()) == brute_force_element_nodes(
            3, 2, 2, e
        )


def test_element_nodes_out_of_range():
    g = vt.build_grid(2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        vt.element_nodes(g, 8)


def test_node_id_bijection():
    g = vt.build_grid(4, 3, 2, 0.5)
    for k in range(3):
        for j in range(4):
            for i in range(5):
                assert g.node_ijk(g.node_id(i, j, k)) == (i, j, k)
    for e in range(g.n_elements):
        i, j, k = g.element_ijk(e)
        assert g.element_id(i, j, k) == e


def test_incidence_sum_matches_valence():
    g = vt.build_grid(3, 3, 3, 1.0)
    all_nodes = np.concatenate([vt.element_nodes(g, e) for e in range(g.n_elements)])
    valence = np.bincount(all_nodes, minlength=g.n_nodes)
    assert valence.sum() == 8 * g.n_elements
    assert valence[g.node_id(0, 0, 0)] == 1  # corner
    assert valence[g.node_id(1, 1, 1)] == 8  # interior


def test_element_dofs_array_matches_element_nodes():
    g = vt.build_grid(3, 2, 4, 1.0)
    edofs = element_dofs_array(g)
    for e in (0, 5, g.n_elements - 1):
        nodes = vt.element_nodes(g, e)
        expected = np.concatenate([[3 * n, 3 * n + 1, 3 * n + 2] for n in nodes])
        assert np.array_equal(edofs[e], expected)


# regions -------------------------------------------------------------------


def test_classify_no_boxes_all_active():
    g = vt.build_grid(3, 3, 3, 1.0)
    mask = vt.classify_regions(g, [])
    assert np.all(mask.active)


def test_classify_whole_domain_box():
    g = vt.build_grid(3, 3, 3, 1.0)
    box = Box((0, 0, 0), g.domain)
    mask = vt.classify_regions(g, [(box, Region.PASSIVE_SOLID)])
    assert np.all(mask.passive_solid)


def test_classify_top_deck_layer():
    # 140 x 10 x 20 domain at 112 x 8 x 16: a 1.5 deep top box catches one layer
    g = vt.build_grid(112, 8, 16, 1.25)
    deck = Box((0, 0, 20 - 1.5), (140, 10, 20))
    mask = vt.classify_regions(g, [(deck, Region.PASSIVE_SOLID)])
    assert mask.passive_solid.sum() == 112 * 8
    solid3 = mask.passive_solid.reshape(g.elem_shape)
    assert solid3[-1].all() and not solid3[:-1].any()


def test_classify_later_boxes_override():
    g = vt.build_grid(4, 4, 4, 1.0)
    whole = Box((0, 0, 0), g.domain)
    half = Box((0, 0, 0), (4, 4, 2))
    mask = vt.classify_regions(
        g, [(whole, Region.PASSIVE_SOLID), (half, Region.PASSIVE_VOID)]
    )
    assert mask.passive_void.sum() == 32
    assert mask.passive_solid.sum() == 32


def test_classify_box_outside_domain():
    g = vt.build_grid(4, 4, 4, 1.0)
    with pytest.raises(ValueError):
        vt.classify_regions(g, [(Box((0, 0, 0), (5, 4, 4)), Region.PASSIVE_VOID)])


# boundary ------------------------------------------------------------------


def test_make_boundary_validates_ranges():
    g = vt.build_grid(2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        vt.make_boundary(g, [g.n_dofs])
    with pytest.raises(ValueError):
        vt.make_boundary(g, [0], loads=[(g.n_dofs + 3, 1.0)])


def test_make_boundary_rejects_load_on_fixed_dof():
    g = vt.build_grid(2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        vt.make_boundary(g, [5], loads=[(5, 1.0)])


def test_boundary_force_vector_accumulates():
    g = vt.build_grid(2, 2, 2, 1.0)
    b = vt.make_boundary(g, [0, 1, 2], loads=[(9, 2.0), (9, 0.5), (12, -1.0)])
    f = b.external_force(g)
    assert f[9] == 2.5 and f[12] == -1.0
    assert b.fixed_mask(g).sum() == 3
