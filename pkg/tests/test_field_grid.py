import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microlam.errors import DimensionError, InvalidInputError, TilingError
from microlam.field_grid import (
    ConeSpec,
    Grid,
    PhaseField,
    TensorField,
    block_phase_field,
    cone_multiplier,
    cone_symbol,
    dft,
    idft,
    l2_norm_sq,
    load_field,
    mean,
    rasterize,
    save_field,
)
from microlam.hulls_and_wells import t3_wells
from microlam.regions import RegionComplex, box_constraints, make_region

T3 = t3_wells().array


def half_cubes(d=3, cut=0.5):
    lo, hi = np.zeros(d), np.ones(d)
    mid = hi.copy()
    mid[0] = cut
    left = make_region(box_constraints(lo, mid), T3[0], 0)
    lo2 = lo.copy()
    lo2[0] = cut
    right = make_region(box_constraints(lo2, hi), T3[2], 2)
    return RegionComplex([left, right], T3)


class TestGrid:
    @pytest.mark.parametrize("d,n", [(1, 8), (4, 8), (2, 3), (2, 5), (3, 2)])
    def test_invalid(self, d, n):
        with pytest.raises(InvalidInputError):
            Grid(d, n)

    def test_wavevectors_nyquist_negative(self):
        k = Grid(2, 8).wavevectors()
        assert k[..., 0].min() == -4 and k[..., 0].max() == 3


class TestFields:
    def test_phase_labels_checked(self):
        with pytest.raises(InvalidInputError):
            PhaseField(Grid(2, 4), np.full((4, 4), 3), T3)

    def test_phase_shape_checked(self):
        with pytest.raises(DimensionError):
            PhaseField(Grid(2, 4), np.zeros((4, 6), dtype=int), T3)

    def test_tensor_finite(self):
        v = np.zeros((4, 4, 2))
        v[0, 0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            TensorField(Grid(2, 4), v)

    def test_diagonal_traces(self, rng):
        chi = block_phase_field(Grid(3, 8), T3, rng)
        for i in range(3):
            np.testing.assert_array_equal(chi.diagonal(i), chi.chi[..., i, i])


class TestDFT:
    def test_constant(self):
        c = dft(np.full((8, 8), 2.5), 2)
        assert c[0, 0] == pytest.approx(2.5)
        c[0, 0] = 0
        assert np.abs(c).max() < 1e-14

    def test_cosine_two_modes(self):
        x = (np.arange(16) + 0.5) / 16
        f = np.broadcast_to(np.cos(2 * np.pi * 3 * x)[:, None], (16, 16))
        c = dft(f, 2)
        big = np.argwhere(np.abs(c) > 1e-12)
        assert sorted(map(tuple, big)) == [(3, 0), (13, 0)]

    @given(st.integers(0, 2**31), st.sampled_from([2, 3]), st.sampled_from([4, 8]))
    def test_plancherel_and_inverse(self, seed, d, n):
        f = np.random.default_rng(seed).standard_normal((n,) * d + (2,))
        c = dft(f, d)
        assert np.sum(np.abs(c) ** 2) == pytest.approx(np.mean(np.sum(f**2, axis=-1)) , rel=1e-10)
        np.testing.assert_allclose(idft(c, d), f, atol=1e-12)

    def test_mean_is_zero_mode(self, rng):
        f = TensorField(Grid(3, 8), rng.standard_normal((8, 8, 8, 3, 3)))
        np.testing.assert_allclose(mean(f), dft(f.values, 3)[0, 0, 0].real, atol=1e-14)
        np.testing.assert_allclose(mean(f), f.values.reshape(-1, 3, 3).sum(0) / 512, atol=1e-14)

    def test_balanced_laminate_mean_zero(self):
        g = Grid(2, 8)
        v = np.where(np.arange(8) < 4, 1.0, -1.0)[:, None] * np.ones((8, 8))
        assert mean(TensorField(g, v)) == pytest.approx(0.0)
        assert l2_norm_sq(TensorField(g, v)) == pytest.approx(1.0)


class TestCones:
    def test_retained_and_removed(self):
        g = Grid(3, 16)
        sym = cone_symbol(g, ConeSpec(0, 0.1, 10))
        assert sym[0, 5, 0] == 1.0
        assert sym[5, 0, 0] == 0.0

    def test_invalid_spec(self):
        with pytest.raises(InvalidInputError):
            ConeSpec(0, 1.5, 1.0)
        with pytest.raises(InvalidInputError):
            ConeSpec(0, 0.5, 0.0)

    @given(st.integers(0, 2**31), st.floats(0.05, 1.0), st.floats(0.5, 12.0))
    def test_sharp_idempotent(self, seed, mu, radius):
        g = Grid(3, 8)
        f = np.random.default_rng(seed).standard_normal(g.shape)
        once = cone_multiplier(f, g, ConeSpec(1, mu, radius))
        twice = cone_multiplier(once, g, ConeSpec(1, mu, radius))
        np.testing.assert_allclose(twice, once, atol=1e-12)

    @given(st.integers(0, 2**31), st.floats(0.05, 0.5), st.floats(0.5, 6.0))
    def test_nesting(self, seed, mu, radius):
        g = Grid(3, 8)
        f = np.random.default_rng(seed).standard_normal(g.shape)

        def kept(m, r):
            return np.sum(cone_multiplier(f, g, ConeSpec(2, m, r)) ** 2)

        assert kept(mu, radius) <= kept(2 * mu, radius) + 1e-12
        assert kept(mu, radius) <= kept(mu, 2 * radius) + 1e-12

    def test_smooth_equals_one_on_cone_and_vanishes_outside_double(self):
        g = Grid(3, 16)
        spec = ConeSpec(0, 0.3, 4.0)
        sharp = cone_symbol(g, spec)
        smooth = cone_symbol(g, spec, smooth=True)
        assert np.all(smooth[sharp == 1] == 1)
        outer = cone_symbol(g, ConeSpec(0, 0.6, 8.0))
        assert np.all(smooth[outer == 0] == 0)

    def test_truncation_error_decreases_with_radius(self, r_one):
        from microlam.t3_construction import T3Params, rasterize_t3

        chi = rasterize_t3(T3Params(1, r_one, 0.01), 16).phase_field()
        g = chi.grid
        errs = []
        for radius in (1, 2, 4, 8, 16):
            e = 0.0
            for j in range(3):
                f = chi.diagonal(j)
                e += np.mean((f - cone_multiplier(f, g, ConeSpec(j, 0.5, radius))) ** 2)
            errs.append(e)
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))


class TestRasterize:
    def test_half_cubes(self):
        ras = rasterize(half_cubes(), Grid(3, 8))
        lab = ras.labels
        assert np.all(lab[:4] == 0) and np.all(lab[4:] == 2)

    def test_laminate_exact(self):
        from microlam.constructions import simple_laminate

        rc = simple_laminate(T3[0], np.diag([0.0, 2 / 3, 2.0]), [1, 0, 0], 0.5, 4)
        lab = rasterize(rc, Grid(3, 16)).labels
        expected = ((np.arange(16) // 2) % 2).astype(int)
        np.testing.assert_array_equal(lab[:, 0, 0], expected)

    def test_branching_volume_fractions(self):
        from microlam.constructions import BranchingParams, branching_complex

        rc = branching_complex(BranchingParams(N=5, d=2))
        exact = rc.volume_by_label()
        for n in (16, 32, 64, 128):
            lab = rasterize(rc, Grid(2, n)).labels
            frac = np.bincount(lab.ravel(), minlength=2) / lab.size
            assert np.max(np.abs(frac - exact)) <= 2 / n

    def test_uncovered(self):
        rc = half_cubes()
        rc.regions = rc.regions[:1]
        with pytest.raises(TilingError):
            rasterize(rc, Grid(3, 8))

    def test_tie_goes_to_smallest_index(self):
        # cut at a cell centre: the centre belongs to both regions
        rc = half_cubes(d=2, cut=0.5625)
        lab = rasterize(rc, Grid(2, 8)).labels
        assert np.all(lab[4] == 0)


class TestFileIO:
    def test_phase_round_trip(self, tmp_path, rng):
        chi = block_phase_field(Grid(3, 8), T3, rng)
        path = str(tmp_path / "f.bin")
        save_field(path, chi, {"eps": 0.1})
        back, side = load_field(path)
        np.testing.assert_array_equal(back.labels, chi.labels)
        np.testing.assert_array_equal(back.wells, chi.wells)
        assert side["meta"]["eps"] == 0.1
        assert (tmp_path / "f.bin").stat().st_size == 8 * 512

    def test_tensor_round_trip_bit_exact(self, tmp_path, rng):
        u = TensorField(Grid(2, 8), rng.standard_normal((8, 8, 3, 2)))
        path = str(tmp_path / "u.bin")
        save_field(path, u)
        back, _ = load_field(path)
        assert back.values.tobytes() == u.values.tobytes()
        raw = np.fromfile(path, dtype="<f8")
        assert raw[1] == u.values[0, 0, 0, 1]  # component-fastest layout

    def test_truncated_payload(self, tmp_path, rng):
        u = TensorField(Grid(2, 4), rng.standard_normal((4, 4)))
        path = str(tmp_path / "u.bin")
        save_field(path, u)
        with open(path, "ab") as fh:
            fh.write(b"\0" * 8)
        with pytest.raises(InvalidInputError):
            load_field(path)
