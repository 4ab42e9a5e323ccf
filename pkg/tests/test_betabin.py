from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from dtaug.betabin import (LogPoly, PriorHyper, alpha_conditional_log_weights, approx_grid_posterior,
                           augment_counts, beta_marginal_log_weights, build_approx_posterior,
                           cstar_series, default_grid, exact_grid_posterior, group_series, hpd_level,
                           log_convolve, log_exact_density, logpdf_approx_joint, rising_factorial_logpoly,
                           run_gibbs_betabin, sample_alpha_given_beta, sample_beta_marginal,
                           total_variation, write_grid_csv, _collapsed_tables)
from dtaug.data import BinData, GibbsConfig
from dtaug.stats import NumericalAbort, normalize_log_weights

PRIOR = PriorHyper(3.0, 0.0)


def stirling_first(n):
    """Unsigned Stirling numbers of the first kind by the integer recurrence."""
    row = [1]
    for r in range(n):
        nxt = [0] * (len(row) + 1)
        for d, c in enumerate(row):
            nxt[d + 1] += c
            nxt[d] += r * c
        row = nxt
    return row


def single_term(i, j, g_offset, n=3, k=2):
    """An ApproxPosterior with one live coefficient in each table."""
    ap = build_approx_posterior([1] * k, n, PRIOR, 0, 0)
    return type(ap)(LogPoly(i, [0.0]), LogPoly(j, [0.0]), LogPoly(g_offset, [0.0]),
                    ap.n, ap.k, ap.c, ap.gamma, 0, 0)


class TestLogPoly:
    def test_rising_factorial_examples(self):
        assert rising_factorial_logpoly(0).coeffs().tolist() == [1.0]
        p1 = rising_factorial_logpoly(1)
        assert p1.min_degree == 1 and np.allclose(p1.coeffs(), [1.0])
        p2 = rising_factorial_logpoly(2)
        assert p2.min_degree == 1 and np.allclose(p2.coeffs(), [1.0, 1.0])
        p3 = rising_factorial_logpoly(3)
        assert p3.min_degree == 1 and np.allclose(p3.coeffs(), [2.0, 3.0, 1.0])

    @pytest.mark.parametrize("n", [4, 9, 17, 29, 60])
    def test_stirling_numbers(self, n):
        ref = np.array(stirling_first(n)[1:], dtype=object)
        got = rising_factorial_logpoly(n).log_coeffs
        assert np.allclose(got, [float(np.log(float(c))) for c in ref], rtol=1e-13)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
           st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    def test_log_convolve_matches_linear(self, a, b):
        ref = np.convolve(np.exp(a), np.exp(b))
        assert np.allclose(np.exp(log_convolve(a, b)), ref, rtol=1e-12)

    def test_log_convolve_keeps_tiny_terms(self):
        out = log_convolve([0.0, -800.0], [0.0, -800.0])
        assert np.isclose(out[2], -1600.0) and np.isclose(out[1], -800.0 + np.log(2.0))

    def test_log_convolve_neg_inf(self):
        out = log_convolve([-np.inf, 0.0], [0.0])
        assert out[0] == -np.inf and out[1] == 0.0

    def test_log_eval(self):
        p = rising_factorial_logpoly(3)
        x = np.array([0.5, 2.0, 7.0])
        assert np.allclose(np.exp(p.log_eval(np.log(x))), x * (x + 1) * (x + 2))

    def test_invalid(self):
        with pytest.raises(ValueError):
            LogPoly(0, [])
        with pytest.raises(ValueError):
            LogPoly(-1, [0.0])
        with pytest.raises(ValueError):
            rising_factorial_logpoly(-1)


class TestSeries:
    def test_group_series_is_complete_homogeneous(self):
        # coefficient t of prod_s (1 - s/u)^-1 is h_t(1, ..., n)
        n, m1 = 3, 6
        ref = [sum(1 for _ in ()) for _ in ()]
        ref = []
        for t in range(m1 + 1):
            total = 0
            for a in range(t + 1):
                for b in range(t - a + 1):
                    c = t - a - b
                    total += 1**a * 2**b * 3**c
            ref.append(total)
        assert np.allclose(group_series(n, m1).coeffs(), ref)

    def test_cstar_brute_force(self):
        # compare with a linear-space expansion of u^(nk+c) prod(...)^-1 (u - (n-gamma))^-c
        n, k, c, gamma, m1, m2 = 2, 2, 3.0, 0.5, 4, 3
        g = np.ones(1)
        for s in range(1, n + 1):
            g = np.convolve(g, float(s) ** np.arange(m1 + 1))[: m1 + 1]
        total = np.convolve(g, g)
        t = np.arange(m2 + 1)
        prior = special.binom(c + t - 1, t) * (n - gamma) ** t
        ref = np.convolve(total, prior)
        got = cstar_series(n, k, c, gamma, m1, m2)
        assert got.min_degree == 0 and got.max_degree == k * m1 + m2
        assert np.allclose(got.coeffs(), ref, rtol=1e-12)

    def test_trivial_tables(self):
        ap = build_approx_posterior([1, 2], 3, PriorHyper(3.0, 3.0), 0, 0)
        assert ap.cstar.log_coeffs.tolist() == [0.0]

    def test_small_example(self):
        ap = build_approx_posterior([1, 2], 3, PRIOR, 5, 5)
        assert (ap.a.min_degree, ap.a.max_degree) == (2, 3) and np.allclose(ap.a.coeffs(), [1.0, 1.0])
        assert (ap.b.min_degree, ap.b.max_degree) == (2, 3) and np.allclose(ap.b.coeffs(), [1.0, 1.0])

    def test_baseball_dimensions(self, baseball_data):
        y_aug = baseball_data.y.copy()
        ap = build_approx_posterior(y_aug, baseball_data.n_max, PRIOR, 30, 30)
        assert ap.g0 == 143
        assert ap.a.min_degree == np.count_nonzero(y_aug >= 1) and ap.a.max_degree == y_aug.sum()
        assert ap.b.min_degree == np.count_nonzero(y_aug <= 13) and ap.b.max_degree == np.sum(14 - y_aug)
        assert (ap.cstar.min_degree, ap.cstar.max_degree) == (0, 10 * 30 + 30)
        for poly in (ap.a, ap.b, ap.cstar):
            assert np.all(np.isfinite(poly.log_coeffs))

    @settings(max_examples=30)
    @given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 6), st.integers(0, 6), st.data())
    def test_support_bookkeeping(self, n, k, m1, m2, data):
        y = np.array(data.draw(st.lists(st.integers(0, n), min_size=k, max_size=k)))
        ap = build_approx_posterior(y, n, PriorHyper(2.5, data.draw(st.floats(0, n))), m1, m2)
        assert ap.a.min_degree == np.count_nonzero(y >= 1) and ap.a.max_degree == y.sum()
        assert ap.b.min_degree == np.count_nonzero(y <= n - 1) and ap.b.max_degree == np.sum(n - y)
        assert ap.cstar.max_degree == k * m1 + m2
        assert np.all(np.isfinite(ap.a.log_coeffs)) and np.all(np.isfinite(ap.b.log_coeffs))

    def test_errors(self):
        with pytest.raises(ValueError, match="gamma"):
            build_approx_posterior([1, 2], 3, PriorHyper(3.0, 3.5), 2, 2)
        with pytest.raises(ValueError):
            build_approx_posterior([1, 4], 3, PRIOR, 2, 2)
        with pytest.raises(ValueError):
            build_approx_posterior([1, 2], 3, PRIOR, -1, 2)
        with pytest.raises(ValueError):
            PriorHyper(2.0, 0.0)
        bad = PriorHyper(3.0, 0.0)
        object.__setattr__(bad, "c", 1.5)
        with pytest.raises(ValueError, match="normalized"):
            build_approx_posterior([1, 2], 3, bad, 2, 2)


class TestJointDensity:
    def test_single_term(self):
        ap = single_term(2, 3, 4)
        a, b = 1.7, 0.4
        g = ap.g0 + 4
        ref = 2 * np.log(a) + 3 * np.log(b) - g * np.log(a + b + ap.n)
        assert np.isclose(logpdf_approx_joint(ap, a, b), ref, rtol=1e-13)

    def test_matches_exact_for_large_alpha_beta(self):
        # the series converges quickly once alpha + beta >> n
        d = BinData([1, 3, 2], [5, 5, 5])
        ap = build_approx_posterior(d.y, 5, PRIOR, 40, 40)
        pts = [(50.0, 50.0), (5.0, 5.0), (100.0, 3.0)]
        offs = [log_exact_density(d, PRIOR, a, b) - np.log(a * b) - logpdf_approx_joint(ap, a, b) for a, b in pts]
        binom = np.sum(special.gammaln(6.0) - special.gammaln(d.y + 1.0) - special.gammaln(6.0 - d.y))
        assert np.allclose(offs, binom, atol=1e-9)

    def test_success_failure_symmetry(self):
        y = np.array([1, 4, 2])
        p = build_approx_posterior(y, 5, PRIOR, 8, 8)
        q = build_approx_posterior(5 - y, 5, PRIOR, 8, 8)
        a, b = np.array([0.3, 2.0, 9.0]), np.array([4.0, 0.7, 1.1])
        assert np.allclose(logpdf_approx_joint(p, a, b), logpdf_approx_joint(q, b, a), rtol=1e-13)

    def test_positive_arguments(self):
        ap = build_approx_posterior([1, 2], 3, PRIOR, 2, 2)
        with pytest.raises(ValueError):
            logpdf_approx_joint(ap, 0.0, 1.0)

    def test_convergence_with_order(self):
        # on a fixed window the normalized approximation approaches the exact density
        d = BinData([1, 1], [2, 2])
        ax = np.linspace(-2, 4, 50)
        ex = exact_grid_posterior(d, PRIOR, ax, ax, tail=None)
        errs = []
        for m in (20, 80, 160):
            ap = build_approx_posterior(d.y, 2, PRIOR, m, m)
            errs.append(np.max(np.abs(approx_grid_posterior(ap, ax, ax).density / ex.density - 1)))
        assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5


class TestBetaMarginal:
    def test_collapsed_matches_brute_force(self):
        ap = build_approx_posterior([1, 3, 2], 5, PRIOR, 4, 3)
        i, j, l_idx, logw = beta_marginal_log_weights(ap)
        _, _, s_vals, table = _collapsed_tables(ap)
        brute = np.full(table.shape, -np.inf)
        for s_pos, s in enumerate(s_vals):
            for li in range(table.shape[1]):
                sel = (i + j == s) & (l_idx == li)
                if sel.any():
                    brute[s_pos, li] = special.logsumexp(logw[sel])
        # the two differ only by a constant
        off = table - brute
        assert np.allclose(off, off.flat[0], atol=1e-10)

    def test_weights_normalize(self):
        ap = build_approx_posterior([1, 3, 2], 5, PRIOR, 6, 6)
        assert abs(normalize_log_weights(beta_marginal_log_weights(ap)[3]).sum() - 1) < 1e-12

    def test_single_component(self, rng):
        ap = single_term(2, 3, 1)
        g = ap.g0 + 1
        draws = np.array([sample_beta_marginal(ap, rng) for _ in range(30_000)])
        B = draws / (ap.n + draws)
        assert stats.kstest(B, stats.beta(3 + 1, g - 2 - 3 - 2).cdf).pvalue > 0.01

    @pytest.mark.slow
    def test_marginal_matches_1d_oracle(self, rng, baseball_data):
        y_aug = np.round(baseball_data.y * 14 / baseball_data.n).astype(int)
        ap = build_approx_posterior(y_aug, 14, PRIOR, 30, 30)
        draws = np.array([sample_beta_marginal(ap, rng) for _ in range(30_000)])
        # integrate the joint over log alpha on a wide grid, then normalize over log beta
        la = np.linspace(-12, 30, 1200)
        lb = np.linspace(-10, 30, 1200)
        cdf_grid = np.empty(lb.size)
        for jj, v in enumerate(lb):
            f = logpdf_approx_joint(ap, np.exp(la), np.exp(v)) + la
            cdf_grid[jj] = special.logsumexp(f) + v
        dens = np.exp(cdf_grid - cdf_grid.max())
        cdf = integrate.cumulative_trapezoid(dens, lb, initial=0.0)
        cdf /= cdf[-1]
        ks = np.max(np.abs(np.searchsorted(np.sort(np.log(draws)), lb, side="right") / draws.size - cdf))
        assert ks < 0.02


class TestAlphaConditional:
    def test_single_component(self, rng):
        ap = single_term(2, 3, 1)
        g = ap.g0 + 1
        beta = 0.8
        draws = np.array([sample_alpha_given_beta(ap, beta, rng) for _ in range(100_000)])
        A = draws / (ap.n + beta + draws)
        assert stats.kstest(A, stats.beta(2 + 1, g - 2 - 1).cdf).pvalue > 0.01

    def test_negative_exponents_finite(self, baseball_data):
        ap = build_approx_posterior(baseball_data.y, 14, PRIOR, 30, 30)
        for beta in (1e-3, 1.0, 1e4):
            i, l_idx, logw = alpha_conditional_log_weights(ap, beta)
            assert np.any(l_idx - i - 1 < 0)
            assert np.all(np.isfinite(logw))

    def test_conditional_matches_1d_oracle(self, rng):
        ap = build_approx_posterior([2, 3, 1], 5, PRIOR, 20, 20)
        beta = 1.3
        draws = np.log([sample_alpha_given_beta(ap, beta, rng) for _ in range(50_000)])
        la = np.linspace(-15, 35, 20_000)
        f = logpdf_approx_joint(ap, np.exp(la), beta) + la
        dens = np.exp(f - f.max())
        cdf = integrate.cumulative_trapezoid(dens, la, initial=0.0)
        cdf /= cdf[-1]
        ks = np.max(np.abs(np.searchsorted(np.sort(draws), la, side="right") / draws.size - cdf))
        assert ks < 0.02

    def test_joint_hpd_coverage(self, rng):
        ap = build_approx_posterior([2, 3, 1, 4], 5, PRIOR, 25, 25)
        ax = np.linspace(-8, 26, 500)
        grid = approx_grid_posterior(ap, ax, ax)
        level = hpd_level(grid, 0.5)
        pairs = []
        for _ in range(40_000):
            b = sample_beta_marginal(ap, rng)
            pairs.append((sample_alpha_given_beta(ap, b, rng), b))
        a, b = np.array(pairs).T
        logp = logpdf_approx_joint(ap, np.exp(ax)[:, None], np.exp(ax)[None, :]) + ax[:, None] + ax[None, :]
        norm = np.log(np.sum(np.exp(logp - logp.max()) * grid.cell_weights())) + logp.max()
        dens = np.exp(logpdf_approx_joint(ap, a, b) + np.log(a * b) - norm)
        assert abs(np.mean(dens >= level) - 0.5) < 0.02


class TestExactGrid:
    def test_normalized_and_symmetric(self):
        d = BinData([1, 3, 2], [5, 5, 4])
        flip = BinData(d.n - d.y, d.n)
        la, lb = default_grid(d, PRIOR, 201)
        g = exact_grid_posterior(d, PRIOR, la, lb)
        assert abs(np.sum(g.density * g.cell_weights()) - 1) < 1e-6
        gf = exact_grid_posterior(flip, PRIOR, lb, la)
        assert np.allclose(gf.density, g.density.T, rtol=1e-10, atol=0)

    def test_single_trial_pmf(self):
        for y in (0, 1):
            d = BinData([1, 0, 1], [2, 1, 2])  # valid container; evaluate one group directly
            a, b = 0.7, 2.2
            single = BinData.__new__(BinData)
            object.__setattr__(single, "y", np.array([y]))
            object.__setattr__(single, "n", np.array([1]))
            logp = log_exact_density(single, PriorHyper(3.0, 0.0), a, b) + 3 * np.log(a + b) - np.log(a * b)
            expected = a / (a + b) if y == 1 else b / (a + b)
            assert np.isclose(np.exp(logp), expected, rtol=1e-12)
            assert d.k == 3

    def test_narrow_grid(self, baseball_data):
        ax = np.linspace(-1, 3, 50)
        with pytest.raises(ValueError, match="narrow"):
            exact_grid_posterior(baseball_data, PRIOR, ax, ax)

    def test_tv_and_hpd(self):
        d = BinData([1, 3, 2], [5, 5, 5])
        la, lb = default_grid(d, PRIOR, 151)
        g = exact_grid_posterior(d, PRIOR, la, lb)
        assert total_variation(g, g) == 0.0
        lev = hpd_level(g, 0.5)
        inside = np.sum((g.density >= lev) * g.density * g.cell_weights())
        assert abs(inside - 0.5) < 0.02

    def test_grid_csv(self, tmp_path):
        d = BinData([1, 3, 2], [5, 5, 5])
        ax = np.linspace(-1, 1, 4)
        g = exact_grid_posterior(d, PRIOR, ax, ax, tail=None)
        write_grid_csv(g, tmp_path / "g.csv")
        rows = (tmp_path / "g.csv").read_text().splitlines()
        assert rows[0] == "log_alpha,log_beta,density" and len(rows) == 17


class TestGibbs:
    def test_homogeneous_counts_not_augmented(self, rng):
        d = BinData([1, 3, 2], [5, 5, 5])
        for _ in range(50):
            assert np.array_equal(augment_counts(d, 1.3, 0.7, rng), d.y)

    def test_augmentation_is_binomial(self, rng):
        # [y_aug | theta] ~ Binomial(n_max, theta) when y_obs ~ Binomial(n_i, theta)
        theta, n_i, n_max, reps = 0.3, 4, 9, 200_000
        y_obs = rng.binomial(n_i, theta, reps)
        y_aug = y_obs + rng.binomial(n_max - n_i, theta, reps)
        freq = np.bincount(y_aug, minlength=n_max + 1) / reps
        pmf = stats.binom.pmf(np.arange(n_max + 1), n_max, theta)
        assert np.all(np.abs(freq - pmf) < 4 * np.sqrt(pmf * (1 - pmf) / reps) + 1e-12)

    def test_chain_shape_and_reproducibility(self, baseball_data):
        cfg = GibbsConfig(300, 100, seed=5)
        a = run_gibbs_betabin(baseball_data, PRIOR, 10, 10, cfg)
        b = run_gibbs_betabin(baseball_data, PRIOR, 10, 10, cfg)
        assert a.names == ["alpha", "beta"] and len(a) == 200
        assert np.array_equal(a.draws, b.draws)
        assert np.all(a.draws > 0)

    def test_gamma_exceeding_n_rejected(self, baseball_data):
        with pytest.raises(ValueError):
            run_gibbs_betabin(baseball_data, PriorHyper(3.0, 20.0), 5, 5, GibbsConfig(10, 1))

    def test_normalizability_failure_aborts(self, baseball_data):
        bad = PriorHyper(3.0, 0.0)
        object.__setattr__(bad, "c", 1.0)
        with pytest.raises(NumericalAbort, match="y_aug"):
            run_gibbs_betabin(baseball_data, bad, 5, 5, GibbsConfig(10, 1))
