import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pepkit.data import Dataset, SplitSpec, split, synth_blobs
from pepkit.errors import ConfigError, NoPEPBenefitWarning
from pepkit.nn import NetworkSpec, ParamVector, forward, init_params, softmax
from pepkit.pep import (PerturbConfig, SigmaSearchConfig, average_probs, baseline_log_likelihood,
                        ensemble_log_likelihood, ensemble_loglik_per_example, ensemble_predict,
                        golden_section_sigma, mask_vector, member_log_likelihoods, sample_member,
                        sigma_grid_scan)
from pepkit.search import INV_PHI, golden_section_max


class TestGoldenSection:
    def test_quadratic_peak(self):
        res = golden_section_max(lambda s: -(s - 2) ** 2, 0.0, 5.0, 30)
        assert abs(res.x_star - 2) < 1e-3

    @pytest.mark.parametrize("n", [1, 2, 7, 20, 30])
    def test_width_recurrence(self, n):
        res = golden_section_max(lambda s: -(s - 1.3) ** 2, 0.0, 5.0, n)
        assert abs((res.high - res.low) - 5.0 * INV_PHI ** n) < 1e-9

    @pytest.mark.parametrize("n", [1, 4, 7])
    def test_call_count(self, n):
        calls = []
        golden_section_max(lambda s: calls.append(s) or -s * s, -1.0, 2.0, n)
        assert len(calls) == n + 1

    def test_bad_bracket(self):
        with pytest.raises(ConfigError):
            golden_section_max(lambda s: 0.0, 1.0, 1.0, 3)
        with pytest.raises(ConfigError):
            golden_section_max(lambda s: 0.0, 0.0, 1.0, 0)

    @given(st.floats(0.1, 4.9))
    def test_unimodal_peak_inside_final_bracket(self, peak):
        res = golden_section_max(lambda s: -abs(s - peak), 0.0, 5.0, 25)
        assert res.low - 1e-12 <= peak <= res.high + 1e-12


@pytest.fixture(scope="module")
def small_model():
    data = split(synth_blobs(3, 40, 4, 1.0, 2), SplitSpec((0.5, 0.25, 0.25), 2))
    spec = NetworkSpec.from_widths([4, 6, 3])
    return spec, init_params(spec, np.random.default_rng(7)), data


class TestSampling:
    def test_zero_sigma_returns_theta(self, small_model):
        spec, p, _ = small_model
        assert sample_member(spec, p, PerturbConfig(0.0), 3).values.tobytes() == p.values.tobytes()

    def test_gaussian_scale(self):
        spec = NetworkSpec.from_widths([100, 100])
        p = ParamVector.zeros(spec)
        delta = sample_member(spec, p, PerturbConfig(0.1, seed=4), 0).values[mask_vector(spec, None)]
        assert delta.size == 10_000
        assert abs(delta.std() - 0.1) < 0.003

    def test_uniform_support(self):
        spec = NetworkSpec.from_widths([50, 20])
        delta = sample_member(spec, ParamVector.zeros(spec), PerturbConfig(0.1, distribution="uniform"), 1).values
        assert np.all(np.abs(delta) <= 0.1 * math.sqrt(3))
        assert abs(delta[mask_vector(spec, None)].std() - 0.1) < 0.01

    def test_mask_respected(self, small_model):
        spec, p, _ = small_model
        flags = mask_vector(spec, None)
        for j in range(3):
            member = sample_member(spec, p, PerturbConfig(0.5, seed=1), j).values
            assert member[~flags].tobytes() == p.values[~flags].tobytes()
            assert np.all(member[flags] != p.values[flags])

    def test_explicit_mask(self, small_model):
        spec, p, _ = small_model
        member = sample_member(spec, p, PerturbConfig(0.5, mask=[(1, "bias")]), 0)
        changed = member.values != p.values
        assert changed.sum() == 3
        assert np.all(changed[spec.layout()[3].offset:])

    def test_noise_independent_of_sigma(self, small_model):
        spec, p, _ = small_model
        a = sample_member(spec, p, PerturbConfig(0.1, seed=3), 2).values - p.values
        b = sample_member(spec, p, PerturbConfig(0.4, seed=3), 2).values - p.values
        np.testing.assert_allclose(b, 4 * a, rtol=1e-12, atol=1e-15)

    def test_config_validation(self):
        for bad in (dict(sigma=-1.0), dict(sigma=0.1, members=0), dict(sigma=0.1, distribution="cauchy"),
                    dict(sigma=0.1, mask=[])):
            with pytest.raises(ConfigError):
                PerturbConfig(**bad)
        with pytest.raises(ConfigError):
            SigmaSearchConfig(1e-3, 1e-3)


class TestEnsemble:
    def test_single_member_zero_sigma_is_baseline(self, small_model):
        spec, p, data = small_model
        base = softmax(forward(spec, p, data.features))
        assert ensemble_predict(spec, p, PerturbConfig(0.0, 1), data.features).tobytes() == base.tobytes()

    def test_zero_sigma_many_members_bit_exact(self, small_model):
        spec, p, data = small_model
        base = softmax(forward(spec, p, data.features))
        assert ensemble_predict(spec, p, PerturbConfig(0.0, 10), data.features).tobytes() == base.tobytes()
        val = data.subset("validation")
        value, _ = ensemble_log_likelihood(spec, p, PerturbConfig(0.0, 7), val)
        assert value == baseline_log_likelihood(spec, p, val)

    def test_two_member_mean(self):
        avg = average_probs([np.array([[0.8, 0.2]]), np.array([[0.6, 0.4]])])
        np.testing.assert_allclose(avg, [[0.7, 0.3]], rtol=0, atol=1e-15)

    def test_log_of_mean(self):
        ll = np.log(np.array([[0.5], [0.25]]))
        assert ensemble_loglik_per_example(ll)[0] == pytest.approx(math.log(0.375), abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 2.0), st.integers(1, 6))
    def test_jensen_rows_and_hull(self, seed, sigma, m):
        g = np.random.default_rng(seed)
        spec = NetworkSpec.from_widths([3, 4, 3])
        p = ParamVector(g.normal(size=spec.param_count), spec.layout())
        data = Dataset(g.normal(size=(6, 3)), g.integers(0, 3, 6))
        cfg = PerturbConfig(sigma, m, seed=seed)
        value, members = ensemble_log_likelihood(spec, p, cfg, data)
        assert value >= np.mean(members) - 1e-12
        probs = ensemble_predict(spec, p, cfg, data.features)
        np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-9)
        stack = np.stack([softmax(forward(spec, sample_member(spec, p, cfg, j), data.features))
                          for j in range(m)])
        assert np.all(stack.min(axis=0) - 1e-15 <= probs) and np.all(probs <= stack.max(axis=0) + 1e-15)

    def test_member_matrix_shape(self, small_model):
        spec, p, data = small_model
        assert member_log_likelihoods(spec, p, PerturbConfig(0.1, 4), data).shape == (4, len(data))


class TestSigmaSearch:
    def test_curve_bookkeeping_and_determinism(self, small_model):
        spec, p, data = small_model
        search = SigmaSearchConfig(1e-3, 1.0, iterations=5, members=3, seed=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoPEPBenefitWarning)
            s1, c1 = golden_section_sigma(spec, p, search, data.subset("validation"))
            s2, c2 = golden_section_sigma(spec, p, search, data.subset("validation"))
        assert len(c1.points) == 5 + 2
        assert np.all(np.diff(c1.sigmas()) > 0)
        assert all(len(pt.member_ll) == 3 for pt in c1.points)
        assert s1 == s2 and c1.values().tobytes() == c2.values().tobytes()
        assert c1.sigmas()[0] == 1e-3

    def test_no_benefit_warning_on_flat_model(self):
        # a well-separated, confident model only loses likelihood under large noise
        data = split(synth_blobs(2, 50, 2, 0.1, 0), SplitSpec((0.5, 0.25, 0.25), 0))
        spec = NetworkSpec.from_widths([2, 2])
        tr = data.subset("train")
        mu = np.stack([tr.features[tr.labels == k].mean(0) for k in range(2)])
        w = (mu * 4).T
        b = -(mu * mu).sum(1) * 2
        p = ParamVector(np.concatenate([w.ravel(), b]), spec.layout())
        with pytest.warns(NoPEPBenefitWarning):
            golden_section_sigma(spec, p, SigmaSearchConfig(1.0, 5.0, 4, 3), data.subset("validation"))

    def test_overtrained_interior_maximum(self, overtrained):
        ex, series = overtrained
        val = ex.data.subset("validation")
        sigma_star, _ = golden_section_sigma(ex.spec, series.final.params, ex.search, val)
        assert ex.search.sigma_low < sigma_star < ex.search.sigma_high
        at_star, _ = ensemble_log_likelihood(ex.spec, series.final.params,
                                             ex.search.perturb(sigma_star), val)
        at_low, _ = ensemble_log_likelihood(ex.spec, series.final.params,
                                            ex.search.perturb(ex.search.sigma_low), val)
        assert at_star > at_low
        grid = sigma_grid_scan(ex.spec, series.final.params, ex.search, val, 50)
        assert 0 < grid.values().argmax() < 49
