import numpy as np
import pytest

from pencrit import (
    FamilyKind,
    FamilySpec,
    FitOptions,
    FitResult,
    Innovation,
    ModelSubset,
    RngStream,
    SandwichMatrices,
    SingularMatrixError,
    Trajectory,
    TrajectoryKind,
    contrast,
    estimate_sandwich,
    fit_mce,
    project_to_subset,
    simulate_acx,
    simulate_mod,
    vartheta_diagnostic,
)

FAST = FitOptions(n_starts=2)


@pytest.fixture(scope="module")
def ar1_traj():
    spec = FamilySpec(FamilyKind.ARX, p=1)
    return spec, simulate_acx(spec, [0.0, 0.5, 1.0], 2000, rng=RngStream(42))


class TestFitMce:
    def test_location_toy_mean(self):
        spec = FamilySpec(FamilyKind.ARX, p=0)
        traj = simulate_acx(spec, [0.7, 1.0], 500, rng=RngStream(1))
        fit = fit_mce(spec, traj, ModelSubset((1,)))
        assert fit.theta_hat[0] == pytest.approx(float(np.mean(traj.obs)), abs=1e-6)
        assert fit.theta_hat[1] == 0.0  # sigma pinned off the subset

    def test_ar1_slope_only_matches_ols_ratio(self, ar1_traj):
        spec, traj = ar1_traj
        fit = fit_mce(spec, traj, ModelSubset((2,)))
        y = traj.obs
        ylag = np.concatenate([[0.0], y[:-1]])
        oracle = float(np.dot(y, ylag) / np.dot(ylag, ylag))
        assert fit.theta_hat[1] == pytest.approx(oracle, abs=1e-4)

    def test_full_ar1_matches_ols(self, ar1_traj):
        spec, traj = ar1_traj
        fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
        y = traj.obs
        X = np.column_stack([np.ones(traj.n), np.concatenate([[0.0], y[:-1]])])
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        sigma = float(np.sqrt(np.mean((y - X @ beta) ** 2)))
        oracle = np.array([beta[0], beta[1], sigma])
        np.testing.assert_allclose(fit.theta_hat, oracle, atol=1e-4)
        assert fit.converged

    def test_ingarch_two_free_coordinates_vs_grid(self):
        spec = FamilySpec(FamilyKind.INGARCH_P, p=1)
        traj = simulate_mod(spec, [1.0, 0.5], 500, rng=RngStream(2))
        fit = fit_mce(spec, traj, ModelSubset((1, 2)))

        def total(a0, a1):
            return contrast(spec, traj, [a0, a1], per_term=False).total

        # staged grid oracle: coarse pass over the box, then a 1e-3-step
        # refinement window around the coarse winner
        lo, hi = spec.box_arrays()
        coarse0 = np.arange(lo[0], hi[0] + 1e-12, 0.05)
        coarse1 = np.arange(lo[1], hi[1] + 1e-12, 0.05)
        best = min(((total(a, b), a, b) for a in coarse0 for b in coarse1))
        _, a_c, b_c = best
        fine0 = np.arange(max(lo[0], a_c - 0.06), min(hi[0], a_c + 0.06) + 1e-12, 1e-3)
        fine1 = np.arange(max(lo[1], b_c - 0.06), min(hi[1], b_c + 0.06) + 1e-12, 1e-3)
        best = min(((total(a, b), a, b) for a in fine0 for b in fine1))
        _, a_g, b_g = best
        assert fit.theta_hat[0] == pytest.approx(a_g, abs=2e-3)
        assert fit.theta_hat[1] == pytest.approx(b_g, abs=2e-3)
        assert fit.contrast_at_min <= best[0] + 1e-9

    def test_theta_hat_respects_subset(self, ar1_traj):
        spec, traj = ar1_traj
        m = ModelSubset((2, 3))
        fit = fit_mce(spec, traj, m)
        np.testing.assert_array_equal(project_to_subset(fit.theta_hat, m),
                                      fit.theta_hat)

    def test_contrast_at_min_consistent(self, ar1_traj):
        spec, traj = ar1_traj
        fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
        recomputed = contrast(spec, traj, fit.theta_hat, per_term=False).total
        assert fit.contrast_at_min == pytest.approx(recomputed, rel=1e-10)

    def test_value_not_worse_than_any_start(self, ar1_traj):
        spec, traj = ar1_traj
        lo, hi = spec.box_arrays()
        center = 0.5 * (lo + hi)
        fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
        assert fit.contrast_at_min <= contrast(spec, traj, center,
                                               per_term=False).total + 1e-9

    def test_nested_minimum_nonincreasing(self, ar1_traj):
        spec, traj = ar1_traj
        small = fit_mce(spec, traj, ModelSubset((1, 3)))
        large = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
        assert large.contrast_at_min <= small.contrast_at_min + 1e-6

    def test_empty_subset_rejected(self, ar1_traj):
        spec, traj = ar1_traj
        from pencrit import FitFailureError

        with pytest.raises(FitFailureError):
            fit_mce(spec, traj, ModelSubset(()))

    def test_root_n_rate(self):
        spec = FamilySpec(FamilyKind.ARX, p=1)
        theta = np.array([0.0, 0.5, 1.0])
        m = ModelSubset((1, 2, 3))
        errs = {10_000: [], 40_000: []}
        for rep in range(100):
            for n in errs:
                traj = simulate_acx(spec, theta, n, burn_in=200,
                                    rng=RngStream(900 + rep, n))
                fit = fit_mce(spec, traj, m, FAST)
                errs[n].append(float(np.linalg.norm(fit.theta_hat - theta)))
        assert np.median(errs[40_000]) <= 0.6 * np.median(errs[10_000])

    def test_keep_trace(self, ar1_traj):
        spec, traj = ar1_traj
        fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)),
                      FitOptions(keep_trace=True))
        assert fit.optimizer_trace
        assert all(len(entry) == 2 for entry in fit.optimizer_trace)

    def test_to_json_roundtrips(self, ar1_traj):
        import json

        spec, traj = ar1_traj
        fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
        payload = json.loads(fit.to_json())
        assert payload["subset"] == [1, 2, 3]
        assert payload["converged"] is True


@pytest.fixture(scope="module")
def ar1_sandwich():
    spec = FamilySpec(FamilyKind.ARX, p=1)
    traj = simulate_acx(spec, [0.0, 0.5, 1.0], 100_000, rng=RngStream(77))
    fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
    return estimate_sandwich(spec, traj, fit)


class TestSandwich:
    def test_reconstruction_identity(self, ar1_sandwich):
        sand = ar1_sandwich
        lhs = sand.F_hat @ sand.Sigma_hat @ sand.F_hat
        scale = np.max(np.abs(sand.G_hat))
        np.testing.assert_allclose(lhs, sand.G_hat, atol=1e-8 * scale)

    def test_symmetry_and_psd(self, ar1_sandwich):
        sand = ar1_sandwich
        for mat in (sand.F_hat, sand.G_hat, sand.Sigma_hat):
            np.testing.assert_allclose(mat, mat.T, atol=1e-8 * np.max(np.abs(mat)))
        assert np.min(np.linalg.eigvalsh(sand.G_hat)) >= -1e-10

    def test_gaussian_ar_proportional_to_two(self, ar1_sandwich):
        sand = ar1_sandwich
        np.testing.assert_allclose(sand.G_hat, 2.0 * sand.F_hat,
                                   rtol=0.05, atol=0.05 * np.max(np.abs(sand.G_hat)))
        vt, resid = vartheta_diagnostic(sand)
        assert 1.9 <= vt <= 2.1
        assert resid < 0.1

    def test_arch_proportional_to_two(self):
        spec = FamilySpec(FamilyKind.ARCH, p=1)
        traj = simulate_acx(spec, [0.5, 0.3], 100_000, rng=RngStream(78))
        fit = fit_mce(spec, traj, ModelSubset((1, 2)))
        sand = estimate_sandwich(spec, traj, fit)
        np.testing.assert_allclose(sand.G_hat, 2.0 * sand.F_hat,
                                   rtol=0.10, atol=0.10 * np.max(np.abs(sand.G_hat)))

    def test_misspecified_variance_flagged(self):
        # heavy-tailed innovations break the proportionality of G and F
        spec = FamilySpec(FamilyKind.ARX, p=1)
        traj = simulate_acx(spec, [0.0, 0.5, 1.0], 40_000,
                            innovation=Innovation.STUDENT_STD,
                            rng=RngStream(79), student_df=5.0)
        fit = fit_mce(spec, traj, ModelSubset((1, 2, 3)))
        _, resid = vartheta_diagnostic(estimate_sandwich(spec, traj, fit))
        assert resid > 0.25

    def test_proportional_inputs_exact(self):
        f = np.array([[2.0, 0.3], [0.3, 1.0]])
        sand = SandwichMatrices(
            subset=ModelSubset((1, 2)), F_hat=f, G_hat=2.0 * f,
            Sigma_hat=2.0 * np.linalg.inv(f), condition_F=1.0,
        )
        vt, resid = vartheta_diagnostic(sand)
        assert vt == pytest.approx(2.0, abs=1e-12)
        assert resid == pytest.approx(0.0, abs=1e-12)

    def test_singular_f_names_subset(self):
        # all-zero series with the intercept pinned: every variance term is
        # clamped at the floor, so the restricted Hessian is identically zero
        spec = FamilySpec(FamilyKind.ARCH, p=1)
        traj = Trajectory(obs=np.zeros(200), kind=TrajectoryKind.REAL)
        fit = FitResult(subset=ModelSubset((2,)),
                        theta_hat=np.array([0.0, 0.5]),
                        contrast_at_min=0.0, converged=True, iterations=0,
                        n_obs=200)
        with pytest.raises(SingularMatrixError, match=r"\{2\}"):
            estimate_sandwich(spec, traj, fit)

    def test_warns_on_nonconverged_fit(self, ar1_sandwich):
        spec = FamilySpec(FamilyKind.ARX, p=1)
        traj = simulate_acx(spec, [0.0, 0.5, 1.0], 500, rng=RngStream(80))
        fit = FitResult(subset=ModelSubset((1, 2, 3)),
                        theta_hat=np.array([0.0, 0.4, 1.0]),
                        contrast_at_min=0.0, converged=False, iterations=0,
                        n_obs=500)
        with pytest.warns(UserWarning):
            estimate_sandwich(spec, traj, fit)
