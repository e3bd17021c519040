import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microlam.energy import surface_energy
from microlam.errors import InvalidInputError, SequencingError
from microlam.regions import interface_check
from microlam.symbol_core import divergence
from microlam.t3_construction import (
    S_MATS,
    WELLS,
    T3Params,
    build_t3_laminate,
    evaluate_t3,
    paper_depth,
    paper_schedule,
    rasterize_t3,
    round_schedule,
    t3_energy_bound,
    t3_region_complex,
)

DIV = divergence()


def proof_bounds(r):
    """Unit-constant bounds after one and two laminations."""
    r1 = float(r[0])
    out = {1: (0.5 + 3 * r1, 10 / r1)}
    if len(r) > 1:
        r2 = float(r[1])
        out[2] = (0.25 + 3 * r1 + 1.5 * r2 / r1, 10 / r1 + 5 / r2)
    return out


class TestSchedule:
    def test_rounding_down(self):
        r = round_schedule([0.3, 0.1, 0.03])
        assert r == (Fraction(1, 4), Fraction(1, 10), Fraction(1, 34))
        assert all(a <= t for a, t in zip(r, [0.3, 0.1, 0.03]))

    @given(st.lists(st.floats(0.001, 0.49), min_size=1, max_size=5))
    def test_rounded_targets_admissible(self, targets):
        targets = sorted(targets, reverse=True)
        targets = [t * 0.4**k for k, t in enumerate(targets)]
        try:
            r = round_schedule(targets)
        except SequencingError:
            return
        ext = [Fraction(1)] * 3 + list(r)
        for k in range(1, len(r) + 1):
            assert (ext[k - 1] / (2 * ext[k + 2])).denominator == 1
        T3Params(len(r), r)

    def test_target_out_of_range(self):
        with pytest.raises(SequencingError):
            round_schedule([0.5])

    @pytest.mark.parametrize("r", [(Fraction(1, 4), Fraction(1, 8)), (Fraction(1, 3),),
                                   (Fraction(1, 4), Fraction(1, 10), Fraction(1, 35))])
    def test_inadmissible(self, r):
        with pytest.raises(SequencingError) as exc:
            T3Params(len(r), r)
        assert "r_" in str(exc.value)

    def test_too_few_periods(self):
        with pytest.raises(SequencingError):
            T3Params(2, (Fraction(1, 4),))

    def test_negative_eps(self):
        with pytest.raises(InvalidInputError):
            T3Params(1, (Fraction(1, 4),), -1.0)

    @pytest.mark.parametrize("eps,m", [(1e-2, 2), (1e-4, 3), (1e-6, 4)])
    def test_paper_depth(self, eps, m):
        assert paper_depth(eps) == m
        p = paper_schedule(eps)
        assert p.m == m and p.eps == eps
        r = eps ** (1 / (m + 1))
        assert float(p.r[0]) <= r

    def test_float_periods_become_fractions(self):
        p = T3Params(1, (0.25,))
        assert p.r == (Fraction(1, 4),)

    def test_bound_terms(self):
        b = t3_energy_bound(T3Params(2, (Fraction(1, 4), Fraction(1, 16)), 0.01))
        assert b["elastic"] == pytest.approx(0.25 + 0.25 + 0.25 * 0.25)
        assert b["surface"] == 16
        assert b["total"] == pytest.approx(b["elastic"] + 0.16)


class TestLedger:
    def test_depth_zero_is_constant_datum(self):
        res = build_t3_laminate(T3Params(0, ()))
        assert res.energy.E_el_pair == pytest.approx(10 / 9)
        assert res.energy.E_surf == 0

    @pytest.mark.parametrize("r", [(Fraction(1, 4),), (Fraction(1, 4), Fraction(1, 16)),
                                   (Fraction(1, 6), Fraction(1, 24))])
    def test_within_factor_two_of_proof_counting(self, r):
        res = build_t3_laminate(T3Params(len(r), r, 0.0))
        bounds = proof_bounds(r)
        for q in (0, 1):
            ratios = [res.increments[m][("elastic", "surface")[q]] / bounds[m][q] for m in bounds]
            # one constant per quantity absorbs the unspecified C
            C = math.sqrt(max(ratios) * min(ratios))
            assert all(0.5 <= x / C <= 2 for x in ratios)
            assert max(ratios) <= 1.0

    def test_increments_are_consistent(self, r_two):
        res = build_t3_laminate(T3Params(2, r_two))
        inc = res.increments
        assert [row["m"] for row in inc] == [0, 1, 2]
        for a, b in zip(inc, inc[1:]):
            assert b["d_elastic"] == pytest.approx(b["elastic"] - a["elastic"])
            assert b["surface"] > a["surface"]
        assert inc[-1]["elastic"] == res.energy.E_el_pair

    @pytest.mark.parametrize("fixture", ["r_one", "r_two"])
    def test_volume_bookkeeping(self, fixture, request):
        r = request.getfixturevalue(fixture)
        res = build_t3_laminate(T3Params(len(r), r))
        assert res.off_well_volume <= 2.0 ** -len(r) + res.cutoff_volume + 1e-12
        assert 0 < res.leaf_volume <= 1

    @pytest.mark.parametrize("fixture", ["r_one", "r_two"])
    def test_cell_checks_pass(self, fixture, request):
        r = request.getfixturevalue(fixture)
        res = build_t3_laminate(T3Params(len(r), r), check=True)
        assert res.interface_passed is True
        assert res.interface_residual <= 1e-12

    def test_check_off_by_default(self, r_one):
        assert build_t3_laminate(T3Params(1, r_one)).interface_passed is None

    def test_eps_override(self, r_one):
        res = build_t3_laminate(T3Params(1, r_one, 0.1), eps=0.01)
        assert res.energy.eps == 0.01
        assert res.energy.E_total == pytest.approx(res.energy.E_el_pair + 0.01 * res.energy.E_surf)

    def test_memoisation_keeps_builds_small(self):
        res = build_t3_laminate(paper_schedule(1e-6), increments=False)
        assert res.builds < 200


class TestExplicit:
    @pytest.mark.parametrize("fixture", ["r_one", "r_two"])
    def test_complex_matches_ledger(self, fixture, request):
        r = request.getfixturevalue(fixture)
        p = T3Params(len(r), r)
        res = build_t3_laminate(p, increments=False)
        rc = t3_region_complex(p)
        assert rc.elastic_energy() == pytest.approx(res.energy.E_el_pair, rel=1e-10)
        assert rc.surface_energy() == pytest.approx(res.energy.E_surf, rel=1e-10)
        assert rc.total_volume() == pytest.approx(1.0, rel=1e-12)

    def test_complex_divergence_free(self, r_one):
        rep = interface_check(t3_region_complex(T3Params(1, r_one)), DIV)
        assert rep.passed, rep.max_residual

    def test_labels_are_nearest_wells(self, rng, r_two):
        p = T3Params(2, r_two)
        x = rng.random((2000, 3))
        u, lab, _ = evaluate_t3(p, x)
        dist = ((u[:, None] - WELLS[None]) ** 2).sum(axis=(2, 3))
        np.testing.assert_array_equal(lab, np.argmin(dist, axis=1))

    def test_exterior_and_potential(self, r_one):
        p = T3Params(1, r_one)
        x = np.array([[1.5, 0.5, 0.5], [-0.2, 0.3, 0.1]])
        u, _, v = evaluate_t3(p, x)
        np.testing.assert_array_equal(u, np.broadcast_to(S_MATS[3], u.shape))
        np.testing.assert_allclose(v, 0.5 * np.cross(S_MATS[3][None], x[:, None, :]))

    def test_potential_curl_is_u(self, rng, r_one):
        # row-wise curl of the potential by central differences away from kinks
        p = T3Params(1, r_one)
        h = 1e-6
        x = rng.random((200, 3)) * 0.98 + 0.01
        u, _, _ = evaluate_t3(p, x)
        grads = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            grads.append((evaluate_t3(p, x + e)[2] - evaluate_t3(p, x - e)[2]) / (2 * h))
        g = np.stack(grads, axis=-1)  # g[n, i, j, k] = d_k v_ij
        curl = np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0],
                         g[..., 1, 0] - g[..., 0, 1]], axis=-1)
        err = np.abs(curl - u).max(axis=(1, 2))
        assert np.mean(err < 1e-6) > 0.95


class TestRaster:
    @pytest.mark.parametrize("fixture", ["r_one", "r_two"])
    def test_raster_matches_analytic(self, fixture, request):
        r = request.getfixturevalue(fixture)
        p = T3Params(len(r), r)
        res = build_t3_laminate(p, increments=False)
        n = 64
        ras = rasterize_t3(p, n)
        tol = 5 * 3 / n
        assert ras.pair_energy() == pytest.approx(res.energy.E_el_pair, rel=tol)
        assert surface_energy(ras.phase_field(), periodic=False) == pytest.approx(
            res.E_surf_anisotropic, rel=tol)

    def test_boundary_cells_carry_datum(self, r_one):
        ras = rasterize_t3(T3Params(1, r_one), 32)
        u = ras.tensor_field().values
        for face in (u[0], u[-1], u[:, 0], u[:, -1], u[:, :, 0], u[:, :, -1]):
            np.testing.assert_array_equal(face, np.broadcast_to(S_MATS[3], face.shape))
