import math

import numpy as np
import pytest
from scipy.special import sici

from pairscope.errors import BasisDegenerateError, ConfigError, ProjectionDegenerateError
from pairscope.modes import (
    GAUSSIAN_HG,
    ApertureConfig,
    QuadratureSpec,
    Scene,
    _gamma_rows,
    _gram_schmidt,
    build_basis,
    eta_squared_rows,
    export_basis_csv,
    export_overlaps_csv,
    overlaps,
    psf_eval,
)

from conftest import DELTA, SIGMA


class TestApertureConfig:
    def test_derived_scales(self):
        ap = ApertureConfig.from_ratio(3.7, 1.4)
        assert ap.sigma * ap.delta == pytest.approx(2.0 * math.pi, rel=4e-16)
        assert ap.r * ap.delta == pytest.approx(2.0 * ap.beta, rel=4e-16)

    def test_rejects_bad_geometry(self):
        with pytest.raises(ConfigError):
            ApertureConfig(delta=0.0)
        with pytest.raises(ConfigError):
            ApertureConfig(delta=1.0, beta=-0.1)


class TestScene:
    def test_two_point(self):
        sc = Scene.two_point(0.3, split=0.25)
        assert sc.sources == ((0.3, 0.25), (-0.3, 0.75))

    def test_brightness_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            Scene(sources=((0.0, 0.5), (0.1, 0.6)))
        with pytest.raises(ConfigError):
            Scene(sources=((0.0, -0.2), (0.1, 1.2)))
        with pytest.raises(ConfigError):
            Scene(sources=())


class TestPsf:
    def test_peak_is_removable_singularity(self, ap_r0):
        assert psf_eval(ap_r0, 0.0) == pytest.approx(math.sqrt(DELTA / (2 * math.pi)), abs=1e-15)

    def test_first_zero_at_rayleigh_angle(self, ap_r0):
        assert abs(psf_eval(ap_r0, SIGMA)) < 1e-15

    def test_unit_norm_against_quadrature_plus_tail_oracle(self, ap_r0):
        # High-resolution grid integral over the window, plus the closed-form
        # sinc^2 tail int_T^inf sin^2 u/u^2 du = sin^2(T)/T + pi/2 - Si(2T).
        grid = QuadratureSpec().build(DELTA)
        vals = psf_eval(ap_r0, grid.x)
        windowed = float(np.dot(grid.w, vals * vals))
        T = 0.5 * DELTA * grid.half_width
        tail = (2.0 / math.pi) * (math.sin(T) ** 2 / T + math.pi / 2 - sici(2 * T)[0])
        assert windowed + tail == pytest.approx(1.0, abs=1e-9)


class TestBuildBasis:
    def test_k1_is_normalized_psf(self, ap_r0, basis_k1):
        grid = basis_k1.grid
        psf = psf_eval(ap_r0, grid.x)
        psf /= math.sqrt(float(np.dot(grid.w, psf * psf)))
        assert np.max(np.abs(basis_k1.values[0] - psf)) < 1e-10
        assert abs(basis_k1.gram()[0, 0] - 1.0) < 1e-10

    def test_psf_adapted_gram_identity(self, ap_r0):
        basis = build_basis(ap_r0, 4)
        dev = np.max(np.abs(basis.gram() - np.eye(4)))
        assert dev <= 1e-8

    def test_gram_against_independent_simpson_rule(self, ap_r0):
        # Same window, different quadrature: modes re-evaluated from their
        # derivative-expansion coefficients on a uniform Simpson grid.
        from scipy.integrate import simpson

        basis = build_basis(ap_r0, 4)
        xs = np.linspace(-basis.grid.half_width, basis.grid.half_width, 20001)
        rows = basis.sample(xs)
        gram = np.array([[simpson(rows[i] * rows[j], x=xs) for j in range(4)] for i in range(4)])
        assert np.max(np.abs(gram - np.eye(4))) < 1e-6

    def test_gaussian_hg_normalization(self, ap_r0):
        basis = build_basis(ap_r0, 3, kind=GAUSSIAN_HG)
        gram = basis.gram()
        for q in range(3):
            assert gram[q, q] == pytest.approx(1.0, abs=1e-10)
        assert np.max(np.abs(gram - np.eye(3))) < 1e-10

    def test_k_must_be_positive(self, ap_r0):
        with pytest.raises(ConfigError):
            build_basis(ap_r0, 0)

    def test_unknown_kind(self, ap_r0):
        with pytest.raises(ConfigError):
            build_basis(ap_r0, 2, kind="prolate")

    def test_gram_schmidt_degeneracy_names_failing_mode(self):
        rows = np.array([[1.0, 0.0, 0.0], [1.0, 1e-14, 0.0]])
        w = np.ones(3) / 3.0
        rows /= np.sqrt(np.sum(w * rows * rows, axis=1))[:, None]
        with pytest.raises(BasisDegenerateError) as err:
            _gram_schmidt(rows, w)
        assert err.value.q == 1


class TestOverlaps:
    def test_gamma0_at_zero_shift(self, basis_k3):
        table = overlaps(basis_k3, Scene.single(0.0))
        assert table.gamma[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_k1_eta_is_unity(self, basis_k1):
        table = overlaps(basis_k1, Scene.single(0.37 * SIGMA))
        assert table.eta[0, 0] ** 2 == pytest.approx(1.0, abs=1e-12)

    def test_k10_normalization_and_parity(self, ap_r0):
        basis = build_basis(ap_r0, 10)
        table = overlaps(basis, Scene.two_point(0.2 * SIGMA))
        assert np.allclose(np.sum(table.eta**2, axis=1), 1.0, atol=1e-12)
        plus, minus = table.gamma
        for q in range(10):
            assert minus[q] == pytest.approx((-1.0) ** q * plus[q], abs=1e-8)

    def test_support_convergence_is_monotone_to_one(self, ap_r0):
        # Captured fraction of the shifted PSF at x = 0.3 sigma.
        frozen = {
            1: 0.744229385086728,
            2: 0.985177266502121,
            4: 0.999994996310948,
            8: 0.999999999999997,
            16: 1.000000000000000,
        }
        previous = 0.0
        for K, expected in frozen.items():
            basis = build_basis(ap_r0, K)
            total = float(np.sum(_gamma_rows(basis, np.array([0.3 * SIGMA])) ** 2))
            assert total == pytest.approx(expected, abs=1e-9)
            assert total >= previous - 1e-12
            previous = total
        assert previous >= 1.0 - 1e-9

    def test_projection_degenerate_far_source(self, basis_k1):
        with pytest.raises(ProjectionDegenerateError):
            overlaps(basis_k1, Scene.single(1e9 * SIGMA))

    def test_eta_squared_rows_match_overlaps(self, basis_k3):
        xs = np.array([0.1 * SIGMA, -0.4 * SIGMA])
        rows = eta_squared_rows(basis_k3, xs)
        table = overlaps(basis_k3, Scene(sources=((0.1 * SIGMA, 0.5), (-0.4 * SIGMA, 0.5))))
        assert np.max(np.abs(rows - table.eta**2)) < 1e-14


class TestGaussianHgClosedForm:
    def test_poisson_overlap_law(self, ap_r0):
        basis = build_basis(ap_r0, 6, kind=GAUSSIAN_HG)
        s = basis.hg_width
        for d in (0.05, 0.2, 0.5):
            gamma = _gamma_rows(basis, np.array([d]))[0]
            closed = [
                math.exp(-d * d / (8 * s * s)) * (d / (2 * s)) ** q / math.sqrt(math.factorial(q))
                for q in range(6)
            ]
            assert np.max(np.abs(gamma - np.array(closed))) < 1e-12


class TestCsvExport:
    def test_overlap_csv_schema(self, basis_k2, tmp_path):
        table = overlaps(basis_k2, Scene.two_point(0.2 * SIGMA))
        path = tmp_path / "overlaps.csv"
        export_overlaps_csv(table, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "q,x,gamma,eta"
        assert len(lines) == 1 + 2 * basis_k2.K
        q, x, gamma, eta = lines[1].split(",")
        assert int(q) == 0
        assert float(x) == pytest.approx(0.2 * SIGMA)
        assert float(eta) == pytest.approx(table.eta[0, 0])

    def test_basis_csv(self, basis_k2, tmp_path):
        path = tmp_path / "basis.csv"
        export_basis_csv(basis_k2, path, stride=512)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "q,x,phi"
        n_samples = basis_k2.grid.x[::512].size
        assert len(lines) == 1 + 2 * n_samples
