import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutshape.levelset import (CellClass, classify, combine_max,
                               extract_isoline, from_values, preset_levelset,
                               read_polylines, read_snapshot, write_polylines,
                               write_snapshot)
from cutshape.mesh import build_uniform_mesh

CENTER = (0.5, 0.5)


@pytest.fixture(scope="module")
def mesh16():
    return build_uniform_mesh(16)


@pytest.fixture(scope="module")
def mesh100():
    return build_uniform_mesh(100)


def node_index(n, i, j):
    return j * (n + 1) + i


class TestPresets:
    def test_circle_zero_node_snapped(self, mesh100):
        # node (0.75, 0.5) sits exactly on the radius-1/4 circle
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh100)
        k = node_index(100, 75, 50)
        assert phi.values[k] == -1e-10

    def test_circle_center_value(self, mesh100):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.125), mesh100)
        k = node_index(100, 50, 50)
        assert phi.values[k] == pytest.approx(0.125)

    def test_ellipse_center_value(self, mesh100):
        phi = preset_levelset("ellipse", dict(center=CENTER, c1=0.375, c2=0.125),
                              mesh100)
        k = node_index(100, 50, 50)
        assert phi.values[k] == pytest.approx(1.0)

    def test_unknown_preset(self, mesh16):
        with pytest.raises(ValueError):
            preset_levelset("heart", {}, mesh16)

    def test_missing_parameter(self, mesh16):
        with pytest.raises(KeyError):
            preset_levelset("circle", dict(center=CENTER), mesh16)

    def test_nonfinite_rejected(self, mesh16):
        vals = np.zeros(mesh16.num_nodes)
        vals[3] = np.inf
        with pytest.raises(ValueError):
            from_values(mesh16, vals)


class TestCombineMax:
    def test_idempotent(self, mesh16):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh16)
        assert np.array_equal(combine_max(phi, phi).values, phi.values)

    def test_identity_element(self, mesh16):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh16)
        bottom = from_values(mesh16, np.full(mesh16.num_nodes, -10.0))
        assert np.array_equal(combine_max(phi, bottom).values, phi.values)

    def test_two_lame_positive_in_both_holes(self, mesh100):
        params = dict(
            first=dict(center=(0.32, 0.5), a=1296.0, b=1296.0, power=4),
            second=dict(center=(0.68, 0.5), a=1296.0, b=1296.0, power=4))
        phi = preset_levelset("two_lame", params, mesh100)
        assert phi.values[node_index(100, 32, 50)] > 0
        assert phi.values[node_index(100, 68, 50)] > 0
        assert phi.values[node_index(100, 50, 50)] < 0

    def test_mesh_mismatch(self, mesh16, mesh100):
        a = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh16)
        b = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh100)
        with pytest.raises(ValueError):
            combine_max(a, b)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_commutative_and_bounding(self, seed):
        mesh = build_uniform_mesh(4)
        rng = np.random.default_rng(seed)
        a = from_values(mesh, rng.uniform(-1, 1, mesh.num_nodes))
        b = from_values(mesh, rng.uniform(-1, 1, mesh.num_nodes))
        ab = combine_max(a, b)
        ba = combine_max(b, a)
        assert np.array_equal(ab.values, ba.values)
        assert np.all(ab.values >= np.minimum(a.values, b.values))


class TestClassify:
    def test_all_inside(self, mesh16):
        phi = from_values(mesh16, -np.ones(mesh16.num_nodes))
        cls = classify(mesh16, phi)
        assert np.all(cls.classes == CellClass.INSIDE)
        assert len(cls.active_primal) == mesh16.num_triangles

    def test_all_outside_empty_active(self, mesh16):
        phi = from_values(mesh16, np.ones(mesh16.num_nodes))
        cls = classify(mesh16, phi)
        assert len(cls.active_primal) == 0

    def test_circle_cut_ring(self, mesh100):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.125), mesh100)
        cls = classify(mesh100, phi)
        assert 40 <= len(cls.cut) <= 200
        assert len(cls.cut) == 170  # frozen regression value
        chains = extract_isoline(mesh100, phi)
        assert len(chains) == 1  # the cut cells form one closed ring

    @settings(max_examples=25, deadline=None)
    @given(st.floats(min_value=1e-6, max_value=1e6), st.integers(0, 2**32 - 1))
    def test_scaling_invariance(self, scale, seed):
        mesh = build_uniform_mesh(5)
        rng = np.random.default_rng(seed)
        vals = rng.uniform(-1, 1, mesh.num_nodes)
        a = classify(mesh, from_values(mesh, vals))
        b = classify(mesh, from_values(mesh, scale * vals))
        assert np.array_equal(a.classes, b.classes)


class TestIsoline:
    def test_circle_chain_accuracy(self, mesh100):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh100)
        chains = extract_isoline(mesh100, phi)
        assert len(chains) == 1
        chain = chains[0]
        assert np.array_equal(chain[0], chain[-1])
        r = np.linalg.norm(chain - np.array(CENTER), axis=1)
        assert np.max(np.abs(r - 0.25)) <= 10.0 * mesh100.h**2

    def test_two_circles_two_chains(self, mesh100):
        params = dict(first=dict(center=(0.2, 0.5), radius=0.15),
                      second=dict(center=(0.8, 0.5), radius=0.15))
        phi = preset_levelset("two_circles", params, mesh100)
        assert len(extract_isoline(mesh100, phi)) == 2

    def test_all_negative_empty(self, mesh16):
        phi = from_values(mesh16, -np.ones(mesh16.num_nodes))
        assert extract_isoline(mesh16, phi) == []

    def test_no_repeated_interior_vertices(self, mesh16):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.3), mesh16)
        for chain in extract_isoline(mesh16, phi):
            interior = chain[:-1]
            uniq = np.unique(np.round(interior, 14), axis=0)
            assert len(uniq) == len(interior)

    def test_orientation_annulus_on_left(self, mesh100):
        # phi < 0 outside the hole: walking direction keeps it on the left,
        # so the chain encircles the hole clockwise (negative signed area)
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.25), mesh100)
        chain = extract_isoline(mesh100, phi)[0]
        x, y = chain[:-1, 0], chain[:-1, 1]
        xn, yn = chain[1:, 0], chain[1:, 1]
        signed_area = 0.5 * np.sum(x * yn - xn * y)
        assert signed_area < 0

    def test_endpoints_interior_to_edges(self, mesh16):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.3), mesh16)
        chains = extract_isoline(mesh16, phi)
        verts = np.vstack([c[:-1] for c in chains])
        # every vertex must sit strictly inside a mesh edge: never on a node
        d = np.linalg.norm(verts[:, None, :] - mesh16.nodes[None, :, :], axis=2)
        assert d.min() > 1e-12


class TestSnapshotIO:
    def test_roundtrip(self, mesh16, tmp_path):
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.3), mesh16)
        path = tmp_path / "levelset_0.txt"
        write_snapshot(path, phi, 0)
        back = read_snapshot(path, mesh16)
        assert np.array_equal(back.values, phi.values)
        first = path.read_text().splitlines()[0]
        assert first == "levelset n=16 iter=0"

    def test_polyline_roundtrip(self, mesh100, tmp_path):
        params = dict(first=dict(center=(0.2, 0.5), radius=0.15),
                      second=dict(center=(0.8, 0.5), radius=0.15))
        phi = preset_levelset("two_circles", params, mesh100)
        chains = extract_isoline(mesh100, phi)
        path = tmp_path / "iso.txt"
        write_polylines(path, chains)
        back = read_polylines(path)
        assert len(back) == 2
        for a, b in zip(chains, back):
            assert np.allclose(a, b)
