import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microlam.constructions import (
    BranchingParams,
    CutoffProfiles,
    branching_complex,
    branching_labels,
    branching_unit_cell,
    build_two_well_branching,
    default_branching_wells,
    potential_matrix,
    row_cross,
    simple_laminate,
)
from microlam.errors import CompatibilityError, DegenerateParametersError, InvalidInputError
from microlam.field_grid import Grid, rasterize
from microlam.regions import interface_check
from microlam.symbol_core import divergence
from microlam.energy import surface_energy

DIV3 = divergence()
DIV2 = divergence(2, 2)


class TestProfiles:
    @given(st.floats(-2, 3))
    def test_ranges(self, t):
        assert 0 <= CutoffProfiles.phi(t) <= 1
        assert 0 <= CutoffProfiles.phi_branch(t) <= 1
        assert abs(CutoffProfiles.tent(t)) <= 0.25

    def test_breakpoints(self):
        phi = CutoffProfiles.phi
        np.testing.assert_allclose(phi([0.0, 0.125, 0.25, 0.375, 1.0]), [0, 0, 0.5, 1, 1])
        pb = CutoffProfiles.phi_branch
        np.testing.assert_allclose(pb([0.0, 0.5, 0.625, 0.75, 1.0]), [1, 1, 0.5, 0, 0])

    @pytest.mark.parametrize("theta", [0.5, 0.3, 0.7])
    def test_tent_periodic_and_continuous(self, theta):
        t = np.linspace(0, 1, 1001)
        h = CutoffProfiles.tent(t, theta)
        assert h[0] == pytest.approx(h[-1], abs=1e-15)
        assert np.max(np.abs(np.diff(h))) <= max(theta, 1 - theta) * 1e-3 + 1e-12
        assert set(np.round(CutoffProfiles.tent_prime(t[:-1] + 1e-4, theta), 12)) <= {round(1 - theta, 12), round(-theta, 12)}

    def test_potential_matrix(self, t3):
        for i in range(3):
            D = t3[f"S{i + 1}"] - t3[f"A{i + 1}"]
            M = potential_matrix(D, i)
            np.testing.assert_allclose(row_cross(np.eye(3)[i], M), D, atol=1e-15)
        with pytest.raises(CompatibilityError):
            potential_matrix(np.eye(3), 0)


class TestSimpleLaminate:
    @pytest.mark.parametrize("p", [1, 2, 5])
    def test_compatible(self, t3, p):
        rc = simple_laminate(t3["A1"], t3["S1"], [1, 0, 0], 0.5, p)
        rc.validate()
        assert rc.meta["periodic_interfaces"] == 2 * p
        assert interface_check(rc, DIV3).passed
        np.testing.assert_allclose(rc.volume_by_label(), [0.5, 0.5], rtol=1e-12)
        np.testing.assert_allclose(rc.mean_value(), 0.5 * (t3["A1"] + t3["S1"]))
        assert rc.elastic_energy() == 0.0

    def test_interior_interfaces(self, t3):
        rc = simple_laminate(t3["A1"], t3["S1"], [1, 0, 0], 0.5, 3)
        jump = np.linalg.norm(t3["S1"] - t3["A1"])
        assert rc.surface_energy() == pytest.approx((2 * 3 - 1) * jump, rel=1e-12)

    def test_equal_wells(self, t3):
        rc = simple_laminate(t3["A1"], t3["A1"])
        assert len(rc) == 1 and rc.interfaces and all(it.j < 0 for it in rc.interfaces)

    def test_incompatible(self, t3):
        with pytest.raises(CompatibilityError) as exc:
            simple_laminate(t3["A1"], t3["A2"])
        assert exc.value.certificate is not None and not exc.value.certificate.member

    def test_wrong_normal(self, t3):
        with pytest.raises(CompatibilityError):
            simple_laminate(t3["A1"], t3["S1"], [0, 1, 0])

    def test_direction_found_automatically(self, t3):
        rc = simple_laminate(t3["A2"], t3["S2"])
        assert np.allclose(np.abs(rc.meta["normal"]), [0, 1, 0])

    @pytest.mark.parametrize("bad", [dict(lam=0.0), dict(lam=1.0), dict(p=0)])
    def test_parameter_domain(self, t3, bad):
        with pytest.raises(InvalidInputError):
            simple_laminate(t3["A1"], t3["S1"], **bad)

    def test_raster_exact(self, t3):
        rc = simple_laminate(t3["A1"], t3["S1"], [1, 0, 0], 0.5, 2)
        ras = rasterize(rc, Grid(3, 8))
        assert ras.pair_energy() == 0.0
        chi = ras.phase_field()
        assert surface_energy(chi) == pytest.approx(4 * np.linalg.norm(t3["S1"]), rel=1e-12)


def cell_wells(b2=1.0, d=2):
    A = np.zeros((d, d))
    B = np.zeros((d, d))
    B[0, 1] = b2
    return A, B


class TestUnitCell:
    @pytest.mark.parametrize("b2", [1.0, 0.5, 3.0])
    def test_reference_energy(self, b2):
        cell = branching_unit_cell(*cell_wells(b2), 0.5, 0.25, 0.5)
        assert cell.analytic_elastic == pytest.approx(b2**2 / 2048, rel=1e-14)
        assert cell.complex.elastic_energy() == pytest.approx(b2**2 / 2048, rel=1e-12)

    @given(st.floats(0.1, 0.9), st.floats(0.05, 0.45), st.floats(0.5, 1.0))
    def test_exact_energies_match_formula(self, lam, l, h):
        cell = branching_unit_cell(*cell_wells(), lam, l, h)
        cell.complex.validate()
        assert cell.complex.elastic_energy() == pytest.approx(cell.analytic_elastic, rel=1e-9)
        assert cell.complex.surface_energy() + 0.0 <= cell.analytic_surface * (1 + 1e-9)

    def test_perturbation_identities(self):
        A, B = cell_wells()
        lam, l, h = 0.4, 0.2, 0.5
        cell = branching_unit_cell(A, B, lam, l, h)
        At = A + cell.E
        np.testing.assert_allclose((At - A) @ np.array([0.0, 1.0]), 0, atol=1e-15)
        np.testing.assert_allclose((B - At) @ cell.normal, 0, atol=1e-15)

    @pytest.mark.parametrize("d", [2, 3])
    def test_jump_conditions(self, d):
        A, B = default_branching_wells(d)
        cell = branching_unit_cell(A, B, 0.5, 0.25, 0.5, d=d)
        rep = interface_check(cell.complex, divergence(d, d))
        assert rep.passed and rep.n_interfaces > 4

    def test_exterior_trace_is_datum(self):
        A, B = cell_wells()
        cell = branching_unit_cell(A, B, 0.3, 0.25, 0.5)
        np.testing.assert_allclose(cell.complex.exterior, 0.3 * A + 0.7 * B)
        assert cell.complex.exterior_axes == (0,)

    def test_corrupted_value_flagged(self):
        A, B = cell_wells()
        cell = branching_unit_cell(A, B, 0.5, 0.25, 0.5)
        reg = next(r for r in cell.complex.regions if r.tag == "w3")
        reg.value = reg.value + np.array([[0.0, 0.0], [0.1, 0.0]])
        rep = interface_check(cell.complex, DIV2)
        assert not rep.passed and rep.max_residual > 0.05

    @pytest.mark.parametrize("l,h", [(0.5, 0.5), (0.6, 0.5), (0.2, 1.5), (0.0, 0.5)])
    def test_domain(self, l, h):
        with pytest.raises(InvalidInputError):
            branching_unit_cell(*cell_wells(), 0.5, l, h)

    def test_wells_must_agree_on_e1(self):
        A = np.zeros((2, 2))
        with pytest.raises(CompatibilityError):
            branching_unit_cell(A, np.eye(2), 0.5, 0.2, 0.5)


class TestBranchingParams:
    def test_layers(self):
        p = BranchingParams(N=8, theta=0.3)
        assert p.l(0) == 1 / 8 and p.h(0) == pytest.approx(0.35)
        assert p.y(1) - p.y(0) == pytest.approx(p.h(0))
        assert p.l(p.j0) < p.h(p.j0) and p.l(p.j0 + 1) >= p.h(p.j0 + 1)

    @pytest.mark.parametrize("N,theta", [(1, 0.3), (3, 0.3), (2, 0.45)])
    def test_degenerate(self, N, theta):
        with pytest.raises(DegenerateParametersError):
            BranchingParams(N=N, theta=theta)

    @pytest.mark.parametrize("kw", [dict(N=0), dict(N=8, theta=0.2), dict(N=8, theta=0.5),
                                    dict(N=8, lam=1.0), dict(N=8, d=4), dict(N=8, variant="x")])
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            BranchingParams(**kw)


class TestBranching:
    @pytest.mark.parametrize("d,variant", [(2, "upper"), (3, "upper"), (3, "d_dim")])
    def test_window_jump_conditions(self, d, variant):
        p = BranchingParams(N=6, d=d, variant=variant)
        rc = branching_complex(p, periods=2)
        rep = interface_check(rc, divergence(d, d))
        assert rep.passed, rep.max_residual

    def test_full_complex_2d(self):
        p = BranchingParams(N=5, d=2)
        rc = branching_complex(p)
        rc.validate()
        assert interface_check(rc, DIV2).passed
        res = build_two_well_branching(p, 0.0)
        assert rc.elastic_energy() == pytest.approx(res.energy.E_el_pair, rel=1e-10)
        assert rc.surface_energy() == pytest.approx(res.energy.E_surf, rel=1e-10)

    def test_layers_match_closed_form(self):
        p = BranchingParams(N=10, d=2)
        res = build_two_well_branching(p, 0.01)
        layer_el = 2 * sum(r["elastic"] for r in res.layers if not r.get("cutoff"))
        assert layer_el == pytest.approx(res.analytic["elastic_layers"], rel=1e-12)
        layer_surf = 2 * sum(r["surface"] for r in res.layers if not r.get("cutoff"))
        assert layer_surf == pytest.approx(res.analytic["surface_layers"], rel=1e-12)

    def test_exterior_datum(self):
        p = BranchingParams(N=6, d=2, lam=0.3)
        ras = rasterize(branching_complex(p), Grid(2, 96))
        vals = ras.values()
        F = p.F
        # top and bottom rows of cells sit in the cut-off band, where u = F
        np.testing.assert_array_equal(vals[:, 0], np.broadcast_to(F, vals[:, 0].shape))
        np.testing.assert_array_equal(vals[:, -1], np.broadcast_to(F, vals[:, -1].shape))

    def test_labels_agree_with_complex(self, rng):
        p = BranchingParams(N=5, d=2)
        ras = rasterize(branching_complex(p), Grid(2, 64))
        c = (np.arange(64) + 0.5) / 64
        pts = np.stack(np.meshgrid(c, c, indexing="ij"), -1).reshape(-1, 2)
        lab = branching_labels(p, pts).reshape(64, 64)
        assert np.mean(lab != ras.labels) < 0.01

    # the thinnest cut-off band is theta^2/8 ~ 0.011 wide, so n >= 256 resolves it
    @pytest.mark.parametrize("n", [256, 512])
    def test_raster_matches_exact(self, n):
        p = BranchingParams(N=6, d=2)
        res = build_two_well_branching(p, 0.0)
        ras = rasterize(branching_complex(p), Grid(2, n))
        tol = 5 * 2 / n
        assert ras.pair_energy() == pytest.approx(res.energy.E_el_pair, rel=tol)
        assert surface_energy(ras.phase_field(), periodic=False) == pytest.approx(
            res.E_surf_anisotropic, rel=tol)

    def test_monotone_in_N(self):
        Ns = [5, 6, 8, 12, 16, 24, 32]
        res = [build_two_well_branching(BranchingParams(N=N), 0.0) for N in Ns]
        el = [r.energy.E_el_pair for r in res]
        surf = [r.energy.E_surf for r in res]
        assert all(a > b for a, b in zip(el, el[1:]))
        assert all(a < b for a, b in zip(surf, surf[1:]))
        assert all(r.energy.E_total == r.energy.E_el_pair for r in res)

    @pytest.mark.parametrize("eps", [1e-3, 1e-4, 1e-5])
    def test_minimizing_N(self, eps):
        Ns = list(range(5, 120))
        tot = [build_two_well_branching(BranchingParams(N=N), eps).energy.E_total for N in Ns]
        best = Ns[int(np.argmin(tot))]
        ref = round(eps ** (-1 / 3))
        assert ref / 2 <= best <= 2 * ref

    def test_flexible_jump_has_no_elastic_energy(self):
        A = np.zeros((3, 3))
        B = np.zeros((3, 3))
        B[0, 2] = 1.0
        p = BranchingParams(N=8, d=3, A=A, B=B)
        res = build_two_well_branching(p, 0.01)
        assert res.energy.E_el_pair == 0.0
        assert res.energy.E_surf == pytest.approx(2 * 8 - 1)
        assert interface_check(branching_complex(p), DIV3).passed

    def test_d_dim_energy_bounded_by_upper_shape(self):
        for N in (6, 8):
            p = BranchingParams(N=N, d=3, variant="d_dim")
            res = build_two_well_branching(p, 1e-3)
            assert res.energy.E_total <= 10 * res.bound_shape

    def test_d_dim_diagonal_interface(self):
        p = BranchingParams(N=6, d=3, variant="d_dim")
        A, B = p.A, p.B
        for j, k in ((1, 2),):
            zeta = np.eye(3)[j] + np.eye(3)[k]
            Ej = np.outer((B - A)[:, j], np.eye(3)[0])
            Ek = np.outer((B - A)[:, k], np.eye(3)[0])
            # same magnitude perturbations differ only by a multiple of e_1 rows
            np.testing.assert_allclose((Ej - Ek) @ zeta, 0, atol=1e-15)

    def test_negative_eps(self):
        with pytest.raises(InvalidInputError):
            build_two_well_branching(BranchingParams(N=8), -1.0)


def test_upper_bound_ratio_is_bounded():
    ratios = []
    for eps in (1e-2, 1e-3, 1e-4, 1e-5):
        N = max(5, round(eps ** (-1 / 3)))
        res = build_two_well_branching(BranchingParams(N=N), eps)
        ratios.append(res.energy.E_total / res.bound_shape)
    assert max(ratios) / min(ratios) < 3
    assert math.isfinite(max(ratios))
