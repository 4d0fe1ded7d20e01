import numpy as np
import pytest

from cutshape import shapegrad as sg
from cutshape.cutquad import decompose, ghost_face_set
from cutshape.fem import FEFunction, FemParams, solve_dual, solve_primal
from cutshape.levelset import preset_levelset
from cutshape.mesh import build_uniform_mesh
from cutshape.problems import circle_data
from cutshape.velocity import build_velocity_space

CENTER = (0.5, 0.5)


def setup_state(n, radius=0.125):
    mesh = build_uniform_mesh(n)
    phi = preset_levelset("circle", dict(center=CENTER, radius=radius), mesh)
    d = decompose(mesh, phi)
    data = circle_data()
    params = FemParams()
    u, system = solve_primal(mesh, d, data, params)
    p = solve_dual(mesh, d, system, u, data, params)
    space = build_velocity_space(mesh, d)
    return mesh, phi, d, data, params, u, p, space


@pytest.fixture(scope="module")
def state25():
    return setup_state(25)


def central_fd(mesh, phi, theta, t, kind, data, params):
    jp = sg.perturbed_cost(mesh, phi, theta, +t, kind, data, params)
    jm = sg.perturbed_cost(mesh, phi, theta, -t, kind, data, params)
    return (jp - jm) / (2.0 * t)


class TestStructuralZeros:
    def test_zero_adjoint_zero_functionals(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        p0 = FEFunction(p.dofmap, np.zeros_like(p.coeffs))
        for fn in (sg.assemble_continuous_sd(mesh, d, space, u, p0, data, params),
                   sg.assemble_discrete_sd(mesh, d, space, u, p0, data, params)):
            assert np.abs(fn.values).max() == 0.0
        b = sg.assemble_boundary_sd(
            mesh, d, space, FEFunction(u.dofmap, np.zeros_like(u.coeffs)), p0,
            params)
        assert np.abs(b.values).max() == 0.0

    def test_constant_field_continuous(self, state25):
        # div theta = 0 and S(theta) = 0 for constant theta: only the
        # data-gradient term survives
        mesh, phi, d, data, params, u, p, space = state25
        fn = sg.assemble_continuous_sd(mesh, d, space, u, p, data, params)
        theta = np.tile([1.0, 0.0], (mesh.num_nodes, 1))
        val = sg.evaluate_sd(fn, theta)
        # the same integral computed directly: int (grad f . e_x) p
        sq = d.subcell_quadrature("neg", params.quad_order)
        pn = p.nodal(mesh.num_nodes)
        from cutshape.cutquad import tri_reference_rule
        bary, w_ref = tri_reference_rule(params.quad_order)
        tn = mesh.triangles[d.cls.inside]
        pts = np.einsum("qj,kjd->kqd", bary, mesh.nodes[tn])
        wq = w_ref[None, :] * mesh.tri_areas[d.cls.inside][:, None]
        gf = data.grad_f(pts.reshape(-1, 2)).reshape(len(tn), -1, 2)
        pv = np.einsum("kj,qj->kq", pn[tn], bary)
        ref = np.sum(wq * gf[:, :, 0] * pv)
        gf2 = data.grad_f(sq.points)
        pv2 = np.einsum("mi,mi->m", sq.lam, pn[sq.tn])
        ref += np.sum(sq.weights * gf2[:, 0] * pv2)
        assert val == pytest.approx(ref, rel=1e-12)

    def test_mesh_map_with_zero_field(self, state25):
        mesh, phi, d, data, params, *_ = state25
        theta = np.zeros((mesh.num_nodes, 2))
        j0 = sg.perturbed_cost(mesh, phi, theta, 0.0,
                               sg.PerturbationKind.MESH_MAP, data, params)
        jt = sg.perturbed_cost(mesh, phi, theta, 1e-3,
                               sg.PerturbationKind.MESH_MAP, data, params)
        assert jt == j0

    def test_perturbed_cost_t0_matches_cost_bitwise(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        from cutshape.fem import cost
        j_ref = cost(mesh, u, data, params)
        theta = np.tile([0.5, -0.25], (mesh.num_nodes, 1))
        for kind in sg.PerturbationKind:
            assert sg.perturbed_cost(mesh, phi, theta, 0.0, kind, data,
                                     params) == j_ref

    def test_inverted_triangle_reported(self, state25):
        mesh, phi, d, data, params, *_ = state25
        rng = np.random.default_rng(0)
        theta = sg.random_smooth_field(mesh, rng)
        with pytest.raises(ValueError, match="triangle"):
            sg.perturbed_cost(mesh, phi, theta, 50.0,
                              sg.PerturbationKind.MESH_MAP, data, params)


class TestEpsFaceTerm:
    def test_zero_field(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        faces = ghost_face_set(mesh, d.cls, region="plus")
        w = u.nodal(mesh.num_nodes)
        v = p.nodal(mesh.num_nodes)
        theta = np.zeros((mesh.num_nodes, 2))
        assert sg.eps_face_term(mesh, int(faces[0]), w, v, theta) == 0.0

    def test_global_linear_no_jump(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        faces = ghost_face_set(mesh, d.cls, region="plus")
        lin = mesh.nodes @ np.array([1.3, -0.4])
        rng = np.random.default_rng(5)
        theta = sg.random_smooth_field(mesh, rng)
        assert sg.eps_face_term(mesh, int(faces[3]), lin, lin, theta) \
            == pytest.approx(0.0, abs=1e-12)

    def test_rigid_translation(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        faces = ghost_face_set(mesh, d.cls, region="plus")
        w = u.nodal(mesh.num_nodes)
        v = p.nodal(mesh.num_nodes)
        theta = np.tile([0.7, -0.3], (mesh.num_nodes, 1))
        assert sg.eps_face_term(mesh, int(faces[10]), w, v, theta) \
            == pytest.approx(0.0, abs=1e-14)

    def test_assembler_matches_reference_sum(self, state25):
        # the batched face-correction assembly agrees with the standalone
        # per-face reference, summed with the gamma*h weight
        mesh, phi, d, data, params, u, p, space = state25
        un = u.nodal(mesh.num_nodes)
        pn = p.nodal(mesh.num_nodes)
        rng = np.random.default_rng(11)
        theta = sg.random_smooth_field(mesh, rng)
        vals = sg._face_correction_terms(mesh, d, space, un, pn, params.gamma,
                                         params.ghost_mode)
        fn = sg.SDFunctional(sg.SDVariant.DISCRETE, vals, space)
        assembled = sg.evaluate_sd(fn, theta)
        faces = ghost_face_set(mesh, d.cls, mode=params.ghost_mode,
                               region="plus")
        ref = sg.GHOST_SD_SIGN * params.gamma * mesh.h * sum(
            sg.eps_face_term(mesh, int(f), un, pn, theta) for f in faces)
        assert assembled == pytest.approx(ref, rel=1e-10)


class TestLinearity:
    def test_all_variants_linear_in_theta(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        fns = [
            sg.assemble_continuous_sd(mesh, d, space, u, p, data, params),
            sg.assemble_discrete_sd(mesh, d, space, u, p, data, params),
            sg.assemble_boundary_sd(mesh, d, space, u, p, params),
        ]
        rng = np.random.default_rng(4)
        t1 = sg.random_smooth_field(mesh, rng)
        t2 = sg.random_smooth_field(mesh, rng)
        for fn in fns:
            lhs = sg.evaluate_sd(fn, 2.5 * t1 - 1.25 * t2)
            rhs = 2.5 * sg.evaluate_sd(fn, t1) - 1.25 * sg.evaluate_sd(fn, t2)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    def test_evaluate_rejects_mismatch(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        fn = sg.assemble_boundary_sd(mesh, d, space, u, p, params)
        with pytest.raises(ValueError):
            sg.evaluate_sd(fn, np.zeros((3, 2)))


class TestFiniteDifferenceOracles:
    def test_discrete_exact_under_mesh_map(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        fn = sg.assemble_discrete_sd(mesh, d, space, u, p, data, params)
        rng = np.random.default_rng(42)
        for _ in range(3):
            theta = sg.random_smooth_field(mesh, rng)
            fd = central_fd(mesh, phi, theta, 1e-5,
                            sg.PerturbationKind.MESH_MAP, data, params)
            assembled = sg.evaluate_sd(fn, theta)
            assert abs(assembled - fd) <= 1e-3 * abs(assembled)

    def test_boundary_exact_under_trace_correction(self, state25):
        mesh, phi, d, data, params, u, p, space = state25
        fn = sg.assemble_boundary_sd(mesh, d, space, u, p, params)
        rng = np.random.default_rng(43)
        for _ in range(3):
            theta = sg.random_smooth_field(mesh, rng)
            fd = central_fd(mesh, phi, theta, 1e-5,
                            sg.PerturbationKind.BOUNDARY_CORRECTION, data,
                            params)
            assembled = sg.evaluate_sd(fn, theta)
            assert abs(assembled - fd) <= 1e-3 * abs(assembled)

    def test_discrete_exact_with_localized_ghost(self):
        # the face-correction sum must track the active ghost set exactly
        mesh = build_uniform_mesh(25)
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.125),
                              mesh)
        d = decompose(mesh, phi)
        data = circle_data()
        params = FemParams(ghost_mode="interface_zone")
        u, system = solve_primal(mesh, d, data, params)
        p = solve_dual(mesh, d, system, u, data, params)
        space = build_velocity_space(mesh, d)
        fn = sg.assemble_discrete_sd(mesh, d, space, u, p, data, params)
        theta = sg.random_smooth_field(mesh, np.random.default_rng(9))
        fd = central_fd(mesh, phi, theta, 1e-5,
                        sg.PerturbationKind.MESH_MAP, data, params)
        assembled = sg.evaluate_sd(fn, theta)
        assert abs(assembled - fd) <= 1e-3 * abs(assembled)

    def test_far_support_kills_extra_terms(self):
        # a test field vanishing near the interface (and off every ghost face
        # of the localized set) sees no interface or face-correction terms,
        # so the discrete and continuous functionals coincide on it
        mesh = build_uniform_mesh(25)
        phi = preset_levelset("circle", dict(center=CENTER, radius=0.125),
                              mesh)
        d = decompose(mesh, phi)
        data = circle_data()
        params = FemParams(ghost_mode="interface_zone")
        u, system = solve_primal(mesh, d, data, params)
        p = solve_dual(mesh, d, system, u, data, params)
        space = build_velocity_space(mesh, d)
        r = np.linalg.norm(mesh.nodes - np.array(CENTER), axis=1)
        cutoff = np.clip((r - 0.35) / 0.05, 0.0, 1.0)   # zero within r=0.35
        theta = np.column_stack([cutoff, 0.5 * cutoff])
        disc = sg.evaluate_sd(
            sg.assemble_discrete_sd(mesh, d, space, u, p, data, params), theta)
        cont = sg.evaluate_sd(
            sg.assemble_continuous_sd(mesh, d, space, u, p, data, params),
            theta)
        assert disc == pytest.approx(cont, rel=1e-12)

    def test_continuous_approximates_discrete(self):
        # consistency: the two volume-form gradients approach each other
        # under refinement on a fixed test field
        rng = np.random.default_rng(7)
        rel = []
        for n in (25, 50, 100):
            mesh, phi, d, data, params, u, p, space = setup_state(n)
            theta = sg.random_smooth_field(mesh, np.random.default_rng(7))
            c = sg.evaluate_sd(
                sg.assemble_continuous_sd(mesh, d, space, u, p, data, params),
                theta)
            dd = sg.evaluate_sd(
                sg.assemble_discrete_sd(mesh, d, space, u, p, data, params),
                theta)
            rel.append(abs(c - dd) / abs(dd))
        assert rel[2] < rel[1] < rel[0]


class TestTranslationSanity:
    def test_offset_circle_direction_agreement(self):
        # guess circle offset to the left of the truth: moving it rightward
        # must decrease the misfit, and all three gradients agree on that
        n = 50
        mesh = build_uniform_mesh(n)
        phi = preset_levelset("circle",
                              dict(center=(0.45, 0.5), radius=0.25), mesh)
        d = decompose(mesh, phi)
        data = circle_data()
        params = FemParams()
        u, system = solve_primal(mesh, d, data, params)
        p = solve_dual(mesh, d, system, u, data, params)
        space = build_velocity_space(mesh, d)
        # unit x-translation localized around the interface ring
        r = np.linalg.norm(mesh.nodes - np.array([0.45, 0.5]), axis=1)
        cut = np.clip((0.40 - r) / 0.05, 0.0, 1.0)
        theta = np.column_stack([cut, np.zeros(mesh.num_nodes)])
        vals = {}
        for name, fn in (
            ("cont", sg.assemble_continuous_sd(mesh, d, space, u, p, data,
                                               params)),
            ("disc", sg.assemble_discrete_sd(mesh, d, space, u, p, data,
                                             params)),
            ("bnd", sg.assemble_boundary_sd(mesh, d, space, u, p, params)),
        ):
            vals[name] = sg.evaluate_sd(fn, theta)
        fd = central_fd(mesh, phi, theta, 1e-4,
                        sg.PerturbationKind.MESH_MAP, data, params)
        assert fd < 0
        assert all(np.sign(v) == np.sign(fd) for v in vals.values()), vals
