import itertools
import math

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from lfim.engine import ParameterGrid
from lfim.models import (
    AdjacencySpec,
    CorrelationModel,
    DegenerateSummaryError,
    DPBernoulliModel,
    GKModel,
    IsingModel,
    ModelError,
    corr_simulate_summary,
    dp_simulate_summary,
    gk_quantile,
    gk_simulate_summary,
    ising_exact_enumeration,
    ising_gibbs_simulate,
    ising_simulate_summary,
    likelihood_based_contour_mc,
    likelihood_contour_values,
    odds_ratio_transform,
    skew_kurtosis,
    tulap_sample,
    tulap_variance,
)
from lfim.models.ising import edge_sums, enumeration_configs
from lfim.streams import stream


def rng(tag="t", i=0):
    return stream(123, tag, i)


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------

class TestCorrelation:
    def test_null_sample_corr_mean(self):
        s = CorrelationModel(n=30).simulate_summaries(0.0, 10_000, rng())
        assert abs(s.mean()) < 0.02

    def test_crossprod_mean(self):
        s = CorrelationModel(n=30, summary_choice="crossprod_1d").simulate_summaries(0.5, 10_000, rng())
        se = s.std() / 100
        assert abs(s.mean() - 15.0) < 4 * se

    def test_sufficient_2d_shape_and_mean(self):
        s = CorrelationModel(n=30, summary_choice="sufficient_2d").simulate_summaries(0.5, 5000, rng())
        assert s.shape == (5000, 2)
        assert abs(s[:, 0].mean() - 60.0) < 0.5

    def test_single_summary_function(self):
        a = corr_simulate_summary(0.3, 30, "sample_corr", rng("x"))
        b = CorrelationModel(n=30).simulate_summary(0.3, rng("x"))
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("rho", [-1.0, 1.0, 1.5])
    def test_open_interval(self, rho):
        with pytest.raises(ModelError):
            CorrelationModel().simulate_summaries(rho, 1, rng())

    def test_bad_summary_choice(self):
        with pytest.raises(ModelError):
            CorrelationModel(summary_choice="median")

    def test_reproducible(self):
        m = CorrelationModel()
        assert np.array_equal(m.simulate_summaries(0.2, 50, rng("r")), m.simulate_summaries(0.2, 50, rng("r")))


# ---------------------------------------------------------------------------
# g-and-k
# ---------------------------------------------------------------------------

class TestGK:
    def test_reduces_to_normal_quantile(self):
        u = np.linspace(0.001, 0.999, 999)
        assert np.max(np.abs(gk_quantile(u) - ndtri(u))) <= 1e-12
        assert gk_quantile(0.5) == 0.0

    def test_worked_value(self):
        expected = (1 + 0.8 * math.tanh(1.0)) * 2**0.25
        assert gk_quantile(ndtr(1.0), g=2.0, k=0.25) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.9137, abs=1e-4)

    def test_strictly_increasing(self):
        r = np.random.default_rng(1)
        u = np.linspace(0.0005, 0.9995, 1000)
        for _ in range(50):
            q = gk_quantile(u, r.normal(), r.uniform(0.1, 3), r.uniform(-5, 5), r.uniform(0.0, 3))
            assert np.all(np.diff(q) > 0)

    def test_negative_k_can_break_monotonicity(self):
        # k > -1/2 alone does not make Q a quantile function when c = 0.8
        u = np.linspace(0.0005, 0.9995, 1000)
        q = gk_quantile(u, 0.0, 1.0, 0.9, -0.4)
        assert np.any(np.diff(q) < 0)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1])
    def test_domain(self, u):
        with pytest.raises(ModelError):
            gk_quantile(u)

    def test_parameter_box(self):
        with pytest.raises(ModelError):
            gk_quantile(0.5, k=-0.5)
        with pytest.raises(ModelError):
            gk_quantile(0.5, sigma=0.0)

    def test_normal_skewness(self):
        s = GKModel(n=1000, g=0, k=0).simulate_summaries((0.0, 0.0), 200, rng())
        assert abs(s[:, 0].mean()) < 0.05

    def test_reference_truth_smoke(self):
        s = GKModel(n=100).simulate_summaries((2.0, 0.25), 200, rng())
        assert np.all(np.isfinite(s))
        assert np.mean(s[:, 1] > 0) >= 0.95

    def test_draws_follow_quantile_function(self):
        # data are Q(U): their empirical quantiles track gk_quantile
        x = GKModel(n=200_000).simulate_data((1.0, 0.1), 1, rng())[0]
        for p in (0.1, 0.5, 0.9):
            assert np.quantile(x, p) == pytest.approx(gk_quantile(p, g=1.0, k=0.1), abs=0.02)

    def test_moment_definitions(self):
        x = np.array([[0.0, 1.0, 2.0, 10.0]])
        xc = x - x.mean()
        m2, m3, m4 = (xc**2).mean(), (xc**3).mean(), (xc**4).mean()
        assert np.allclose(skew_kurtosis(x)[0], [m3 / m2**1.5, m4 / m2**2 - 3])

    def test_degenerate_sample(self):
        with pytest.raises(DegenerateSummaryError):
            skew_kurtosis(np.ones((1, 10)))

    def test_simulate_at_matches_loop_distribution(self):
        m = GKModel(n=100)
        thetas = np.tile([2.0, 0.25], (4000, 1))
        a = m.simulate_at(thetas, rng("a"))
        b = m.simulate_summaries((2.0, 0.25), 4000, rng("b"))
        assert abs(np.median(a[:, 0]) - np.median(b[:, 0])) < 0.05

    def test_function_form(self):
        assert np.array_equal(gk_simulate_summary((2, 0.25), 100, rng("f")), GKModel(n=100).simulate_summary((2, 0.25), rng("f")))

    def test_four_free_parameters(self):
        m = GKModel(n=50, free=("mu", "sigma", "g", "k"))
        assert m.param_names == ("mu", "sigma", "g", "k")
        assert m.simulate_summaries((0, 1, 2, 0.25), 3, rng()).shape == (3, 2)


# ---------------------------------------------------------------------------
# DP Bernoulli
# ---------------------------------------------------------------------------

class TestDP:
    def test_tulap_mean_and_variance(self):
        x = tulap_sample(rng(), 1_000_000)
        assert abs(x.mean()) < 0.01
        assert abs(x.var() - tulap_variance(1.0)) < 0.05
        assert tulap_variance(1.0) == pytest.approx(1.925, abs=1e-3)

    def test_geometric_counts_failures(self):
        # G1 - G2 is integer-valued and symmetric; U keeps |N - round(N)| <= 1/2
        x = tulap_sample(rng("g"), 100_000)
        assert np.all(np.abs(x - np.round(x)) <= 0.5)
        p = -math.expm1(-1.0)
        # P(G1 - G2 = 0) for failure-count geometrics = p / (2 - p)
        assert np.mean(np.round(x) == 0) == pytest.approx(p / (2 - p), abs=0.01)

    def test_zero_theta_is_noise(self):
        s = DPBernoulliModel(n=25).simulate_summaries(0.0, 100_000, rng())
        assert abs(s.mean()) < 0.02

    def test_half_mean(self):
        s = DPBernoulliModel(n=25).simulate_summaries(0.5, 100_000, rng())
        assert abs(s.mean() - 12.5) < 0.05

    def test_stochastic_order(self):
        m = DPBernoulliModel(n=25)
        grid = np.linspace(-5, 30, 200)
        lo = np.sort(m.simulate_summaries(0.3, 100_000, rng("lo"))[:, 0])
        hi = np.sort(m.simulate_summaries(0.6, 100_000, rng("hi"))[:, 0])
        f_lo = np.searchsorted(lo, grid, side="right") / lo.size
        f_hi = np.searchsorted(hi, grid, side="right") / hi.size
        assert np.all(f_hi <= f_lo + 0.01)

    def test_box(self):
        with pytest.raises(ModelError):
            DPBernoulliModel().simulate_summaries(1.2, 1, rng())

    def test_function_form(self):
        assert np.array_equal(dp_simulate_summary(0.4, 25, rng("f")), DPBernoulliModel(n=25).simulate_summary(0.4, rng("f")))


# ---------------------------------------------------------------------------
# Ising
# ---------------------------------------------------------------------------

class TestAdjacency:
    def test_lattice_edges(self):
        a = AdjacencySpec.lattice(4, 4)
        assert a.node_count == 16 and len(a.edges) == 24
        assert AdjacencySpec.lattice(20, 20).edges.shape == (760, 2)

    def test_parse_descriptor(self):
        assert len(AdjacencySpec.parse("lattice:2x3").edges) == 7
        assert len(AdjacencySpec.parse("lattice:2×3").edges) == 7

    def test_edge_list(self):
        a = AdjacencySpec.from_edge_list("# ring\n0 1\n1 2\n2 0  # closing edge\n")
        assert a.node_count == 3 and len(a.edges) == 3

    @pytest.mark.parametrize("text", ["0 0\n", "0 1\n1 0\n", "0 5\n", "0\n", "a b\n"])
    def test_edge_list_errors(self, text):
        with pytest.raises(ModelError):
            AdjacencySpec.from_edge_list(text, node_count=4)


class TestIsing:
    def test_independent_spins(self):
        m = IsingModel(adjacency=AdjacencySpec.lattice(20, 20), allow_zero_beta=True, burn_in=5)
        z = m.simulate_data((0.0, 0.0), 10_000, rng())
        assert abs(z.sum(axis=1).mean()) < 4
        es = edge_sums(z, m.adjacency)
        assert abs(es.mean()) < 4 * es.std() / 100

    def test_strong_field(self):
        m = IsingModel(adjacency=AdjacencySpec.lattice(20, 20), allow_zero_beta=True, burn_in=5)
        z = m.simulate_data((0.0, 5.0), 100, rng())
        assert np.mean(z == 1) >= 0.99

    def test_empty_adjacency(self):
        m = IsingModel(adjacency=AdjacencySpec(5, np.zeros((0, 2))), burn_in=2)
        z = m.simulate_data((0.7, 0.0), 2000, rng())
        assert abs(z.mean()) < 0.05

    def test_gibbs_matches_enumeration_edge_sum(self):
        a = AdjacencySpec.lattice(4, 4)
        p = ising_exact_enumeration(0.25, 0.0, a)
        es = edge_sums(enumeration_configs(16), a)
        mean, var = p @ es, p @ es**2 - (p @ es) ** 2
        z = IsingModel(adjacency=a, zero_field=True).simulate_data((0.25,), 20_000, rng())
        got = edge_sums(z, a).mean()
        assert abs(got - mean) < 3 * math.sqrt(var / 20_000)

    @pytest.mark.parametrize("shape,theta", [((2, 2), (0.4, 0.2)), ((4, 4), (0.3, -0.1))])
    def test_gibbs_marginals_match_enumeration(self, shape, theta):
        a = AdjacencySpec.lattice(*shape)
        p = ising_exact_enumeration(*theta, a)
        configs = enumeration_configs(a.node_count)
        up = p @ (configs == 1)  # P(z_i = +1)
        n = 20_000
        z = IsingModel(adjacency=a).simulate_data(theta, n, rng("m"))
        freq = (z == 1).mean(axis=0)
        se = np.sqrt(up * (1 - up) / n)
        assert np.all(np.abs(freq - up) < 3.5 * se)

    def test_enumeration_sums_to_one(self):
        p = ising_exact_enumeration(0.3, 0.1, AdjacencySpec.lattice(4, 4))
        assert abs(p.sum() - 1) < 1e-12

    def test_enumeration_uniform_at_zero(self):
        a = AdjacencySpec.from_edge_list("0 5\n3 9\n1 2\n", node_count=16)
        assert np.allclose(ising_exact_enumeration(0.0, 0.0, a), 2.0**-16, rtol=0, atol=1e-18)

    def test_enumeration_spin_flip_symmetry(self):
        a = AdjacencySpec.lattice(3, 3)
        p = ising_exact_enumeration(0.4, 0.0, a)
        # z -> -z flips every bit, i.e. index b -> 2^N - 1 - b
        assert np.allclose(p, p[::-1], rtol=1e-13, atol=0)

    def test_enumeration_matches_literal_brute_force(self):
        a = AdjacencySpec.lattice(2, 2)
        A = a.matrix()
        beta, field_ = 0.3, 0.0
        weights = {}
        for z in itertools.product((-1, 1), repeat=4):
            z = np.array(z)
            weights[tuple(z)] = math.exp(beta / 2 * z @ A @ z + field_ * z.sum())
        total = sum(weights.values())
        p = ising_exact_enumeration(beta, field_, a)
        for row, prob in zip(enumeration_configs(4), p):
            assert abs(prob - weights[tuple(int(v) for v in row)] / total) < 1e-12

    def test_enumeration_cap(self):
        with pytest.raises(ModelError):
            ising_exact_enumeration(0.1, 0.0, AdjacencySpec.lattice(3, 7))

    def test_summaries(self):
        a = AdjacencySpec.lattice(3, 3)
        s1 = ising_simulate_summary((0.2, 0.1), a, "edge_sum_1d", 1, 10, rng("s"))
        s2 = ising_simulate_summary((0.2, 0.1), a, "edge_and_site_2d", 1, 10, rng("s"))
        z = ising_gibbs_simulate((0.2, 0.1), a, 1, 10, rng("s"))
        assert s1.tolist() == [edge_sums(z, a)[0]]
        assert s2.tolist() == [edge_sums(z, a)[0], z.sum()]

    def test_chain_independent_of_batch(self):
        m = IsingModel(adjacency=AdjacencySpec.lattice(5, 5))
        a = m.simulate_data((0.3, 0.0), 3, rng("b"))
        b = m.simulate_data((0.3, 0.0), 10, rng("b"))
        assert np.array_equal(a, b[:3])

    def test_beta_constraint(self):
        with pytest.raises(ModelError):
            IsingModel(zero_field=True).check_theta((0.0,))
        IsingModel(zero_field=True, allow_zero_beta=True).check_theta((0.0,))

    def test_odds_ratio(self):
        assert odds_ratio_transform(0.0) == 1.0
        assert odds_ratio_transform(0.16) == pytest.approx(1.896, abs=1e-3)
        assert odds_ratio_transform(0.25) == pytest.approx(math.e)

    def test_load_data(self, tmp_path):
        f = tmp_path / "s.txt"
        f.write_text("1 -1\n-1 1\n")
        m = IsingModel(adjacency=AdjacencySpec.lattice(2, 2))
        assert m.load_data(str(f)).tolist() == [1, -1, -1, 1]
        f.write_text("1 0\n-1 1\n")
        with pytest.raises(ModelError):
            m.load_data(str(f))


# ---------------------------------------------------------------------------
# likelihood oracle
# ---------------------------------------------------------------------------

class TestLikelihoodOracle:
    def test_contour_is_one_at_mle(self):
        m = CorrelationModel(n=30)
        data = m.simulate_data(0.5, 1, rng("d"))[0]
        grid = ParameterGrid.from_ranges({"rho": (-0.95, 0.95, 0.01)})
        tab = likelihood_based_contour_mc(m, data, grid, 200, 1)
        lik = tab.pi
        assert lik.max() == 1.0
        assert np.all((lik >= 0) & (lik <= 1))

    def test_ising_oracle_runs(self):
        m = IsingModel(zero_field=True)
        data = m.simulate_data((0.25,), 1, rng("i"))[0]
        grid = ParameterGrid.from_ranges({"beta": (0.01, 1.0, 0.01)})
        tab = likelihood_based_contour_mc(m, data, grid, 300, 2)
        assert tab.pi.max() == 1.0

    def test_subset_matches_full(self):
        m = CorrelationModel(n=30)
        data = m.simulate_data(0.5, 1, rng("d"))[0]
        grid = ParameterGrid.from_ranges({"rho": (-0.9, 0.9, 0.1)})
        full = likelihood_contour_values(m, data, grid, 100, 3)
        part = likelihood_contour_values(m, data, grid, 100, 3, indices=[4, 14])
        assert np.array_equal(full[[4, 14]], part)

    def test_correlation_loglik_matches_density(self):
        from scipy.stats import multivariate_normal

        from lfim.models.likelihood import CorrelationLikelihood

        data = CorrelationModel(n=10).simulate_data(0.3, 1, rng("ll"))[0]
        rho = np.array([-0.5, 0.0, 0.7])
        got = CorrelationLikelihood(10).loglik(CorrelationLikelihood(10).statistic(data), rho)[0]
        want = [multivariate_normal([0, 0], [[1, r], [r, 1]]).logpdf(data).sum() + 10 * math.log(2 * math.pi) for r in rho]
        assert np.allclose(got, want, rtol=1e-12)

    def test_unsupported_models(self):
        grid = ParameterGrid.from_ranges({"theta": (0.1, 0.9, 0.1)})
        with pytest.raises(ModelError):
            likelihood_contour_values(DPBernoulliModel(), [3.0], grid, 10, 0)
        with pytest.raises(ModelError):
            likelihood_contour_values(IsingModel(zero_field=False), np.ones(16), grid, 10, 0)
