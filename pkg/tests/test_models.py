import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import expit, gammaln

from bayesbench.harness import ModelInput, SchemaError
from bayesbench.models import (
    MODELS,
    HierarchicalModel,
    build_model,
    bt_win_probability,
    davidson_probabilities,
    pointwise_loglik,
    simulate,
)
from bayesbench.posterior import hpd_interval
from bayesbench.sampler import SamplerConfig, check_gradient, nuts_sample
from recovery import CASES, run_replication


def simulated(name, seed=0):
    """A model fitted to data simulated from its own recovery case."""
    rng = np.random.default_rng(seed)
    case = CASES[name](rng)
    data = build_model(name, case.data).simulate(case.truth, rng)
    return build_model(name, data), case


@pytest.fixture(scope="module", params=sorted(MODELS))
def model(request):
    return simulated(request.param)[0]


# -- shared contracts -----------------------------------------------------------


def test_gradient_matches_finite_differences(model):
    rng = np.random.default_rng(0)
    worst = max(check_gradient(model, rng.normal(0, 0.7, model.dimension)) for _ in range(20))
    assert worst < 1e-4


def test_loglik_sums_to_likelihood_part_of_density(model):
    rng = np.random.default_rng(1)
    for _ in range(5):
        theta = rng.normal(0, 0.5, model.dimension)
        lp, _ = model.log_density_grad(theta)
        prior = model.log_prior(theta, np.zeros(model.dimension))
        ll = model.pointwise_loglik(model.constrain(theta)[None, :])
        assert ll.shape == (1, model.data.n_obs)
        assert lp - prior == pytest.approx(ll.sum(), rel=1e-9, abs=1e-8)


def test_constrain_round_trip(model):
    theta = np.random.default_rng(2).normal(0, 0.5, model.dimension)
    params = {k: v[0] for k, v in model.unpack(model.constrain(theta)).items()}
    assert np.allclose(model.unconstrain(params), theta, atol=1e-10)
    assert np.array_equal(model.pack(params), model.constrain(theta))


def test_pointwise_loglik_shape(model):
    mat = np.stack([model.constrain(np.zeros(model.dimension))] * 3)
    assert pointwise_loglik(model, mat).shape == (3, model.data.n_obs)


def test_simulation_is_deterministic(model):
    params = model.constrain(np.random.default_rng(3).normal(0, 0.3, model.dimension))
    a, b = simulate(model, params, seed=7), simulate(model, params, seed=7)
    assert np.array_equal(a.y, b.y)
    for extra in ("event", "tie"):
        if getattr(a, extra) is not None:
            assert np.array_equal(getattr(a, extra), getattr(b, extra))


def test_names_match_constrained_vector(model):
    assert len(model.names) == len(model.constrain(np.zeros(model.dimension)))
    assert len(set(model.names)) == len(model.names)


def test_prior_scale_multiplies_sds():
    m, _ = simulated("binomial")
    wide = build_model("binomial", m.data, prior_scale=2.0)
    assert wide.prior_sds() == {k: 2 * v for k, v in m.prior_sds().items()}
    only_a = build_model("binomial", m.data, prior_scale={"a_alg": 0.5})
    assert only_a.prior_sds()["a_alg"] == 2.5 and only_a.prior_sds()["s"] == m.prior_sds()["s"]


def test_wrong_input_kind_is_rejected():
    m, _ = simulated("binomial")
    with pytest.raises(SchemaError, match="cox"):
        build_model("cox", m.data)


def test_invalid_simulation_params_are_rejected():
    m, case = simulated("linear")
    with pytest.raises(ValueError, match="sigma"):
        m.simulate({**case.truth, "sigma": -1.0}, 0)


# -- binomial ----------------------------------------------------------------


def _binomial_data(y, n, x=None):
    k = len(y)
    return ModelInput("binomial", np.asarray(y), np.zeros(k, dtype=np.int64), ["A"], ["B"],
                      alg_idx=np.zeros(k, dtype=np.int64), x=np.zeros(k) if x is None else x,
                      n_trials=np.asarray(n))


def test_binomial_zero_parameters_give_even_odds():
    m = build_model("binomial", _binomial_data([2], [10]))
    ll = m.pointwise_loglik(m.constrain(np.zeros(m.dimension))[None, :])[0, 0]
    assert ll == pytest.approx(math.log(math.comb(10, 2)) + 10 * math.log(0.5))


def test_binomial_row_likelihood_is_the_pmf():
    m = build_model("binomial", _binomial_data([2], [10], x=np.array([3.0])))
    p = {"a_alg": np.array([[0.4]]), "b_noise": np.array([[-0.2]]), "s": np.array([1.0]),
         "a_bm": np.array([[0.1]])}
    prob = expit(0.4 + 0.1 - 0.2 * 3)
    assert m.loglik(p)[0, 0] == pytest.approx(stats.binom(10, prob).logpmf(2))


def test_binomial_rejects_more_successes_than_trials():
    with pytest.raises(SchemaError):
        _binomial_data([11], [10])


def test_binomial_certain_success_gives_y_equal_n():
    m, case = simulated("binomial")
    sim = m.simulate({**case.truth, "a_alg": np.array([60.0, 60.0])}, 0)
    assert np.array_equal(sim.y, sim.n_trials)


# -- relative improvement ------------------------------------------------------


def test_null_relative_improvement_concentrates_at_zero():
    # exact zeros make the residual-scale posterior improper (the likelihood
    # grows without bound as sigma -> 0), so the responses carry a tiny jitter
    n = 40
    y = np.random.default_rng(0).normal(0, 0.01, n)
    data = ModelInput("relative_improvement", y, np.arange(n) % 4, ["A"], ["B0", "B1", "B2", "B3"],
                      alg_idx=np.zeros(n, dtype=np.int64))
    m = build_model("relative_improvement", data)
    draws = nuts_sample(m, SamplerConfig(chains=2, warmup=300, iterations=300, seed=0))
    a = draws.flat("a_alg[A]")
    assert abs(a.mean()) < 0.05 and a.std() < 0.1


# -- Bradley-Terry and Davidson ----------------------------------------------


def test_equal_strengths_are_a_coin_flip():
    assert bt_win_probability(0.7, 0.7) == 0.5


def test_de_beats_nm_with_table_strengths():
    assert bt_win_probability(1.99, -2.98) == pytest.approx(0.993, abs=5e-4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(-50, 50))
def test_bt_likelihood_is_translation_invariant(strengths, c):
    m, case = simulated("bradley_terry")
    p = m._single({**case.truth, "a_alg": np.array(strengths)})
    shifted = m._single({**case.truth, "a_alg": np.array(strengths) + c})
    assert np.allclose(m.loglik(p), m.loglik(shifted), atol=1e-9)


def test_bradley_terry_rejects_ties():
    m, _ = simulated("davidson")
    tie = m.data.tie.copy()
    tie[0] = True
    with pytest.raises(SchemaError, match="tie"):
        build_model("bradley_terry", m.data.with_response(m.data.y, tie=tie))


def test_davidson_symmetric_point_is_uniform():
    probs = davidson_probabilities(0.0, 0.0, 0.0)
    assert np.allclose(probs, 1 / 3, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30), st.floats(-30, 30))
def test_davidson_outcomes_form_a_simplex(a_i, a_j, nu):
    probs = np.array(davidson_probabilities(a_i, a_j, nu))
    assert np.all(probs >= 0)
    assert abs(probs.sum() - 1) < 1e-12


def test_davidson_without_ties_reduces_to_bradley_terry():
    win_i, win_j, tie = davidson_probabilities(1.3, -0.4, -60.0)
    assert tie < 1e-25
    assert win_i == pytest.approx(bt_win_probability(1.3, -0.4), abs=1e-12)


def test_davidson_loglik_uses_the_outcome_probabilities():
    m, case = simulated("davidson")
    p = m._single(case.truth)
    ll = m.loglik(p)[0]
    d = m.data
    a = case.truth["a_alg"]
    s1 = a[d.algo1] + case.truth["a_bm"][d.algo1, d.bm_idx]
    s0 = a[d.algo0] + case.truth["a_bm"][d.algo0, d.bm_idx]
    w1, w0, tie = davidson_probabilities(s1, s0, case.truth["nu_tie"])
    expected = np.where(d.tie, np.log(tie), np.where(d.y == 1, np.log(w1), np.log(w0)))
    assert np.allclose(ll, expected)


# -- Cox -----------------------------------------------------------------------


def _cox(y, event, a):
    k = len(y)
    data = ModelInput("survival", np.asarray(y, float), np.zeros(k, dtype=np.int64), ["A"], ["B"],
                      alg_idx=np.zeros(k, dtype=np.int64), x=np.zeros(k), event=np.asarray(event))
    m = build_model("cox", data)
    p = m._single({"a_alg": np.array([a]), "b_noise": np.array([0.0]), "s": 1.0, "a_bm": np.array([0.0])})
    return m.loglik(p)[0]


def test_censored_row_is_the_survival_function():
    lam = math.exp(-4.0)
    assert _cox([50.0], [0], -4.0)[0] == pytest.approx(-lam * 50.0, rel=1e-14)


def test_event_row_is_the_exponential_density():
    lam = math.exp(-4.0)
    assert _cox([50.0], [1], -4.0)[0] == pytest.approx(math.log(lam) - lam * 50.0, rel=1e-14)


def test_survival_derivative_reproduces_density():
    h = 1e-4
    y = 37.0
    surv = np.exp(_cox([y - h, y + h], [0, 0], -3.5))
    density = math.exp(_cox([y], [1], -3.5)[0])
    assert (surv[0] - surv[1]) / (2 * h) == pytest.approx(density, rel=1e-6)


def test_cox_point_estimate_mean_time():
    assert 1 / math.exp(-5.09) == pytest.approx(162, abs=0.5)


def test_cox_rejects_nonpositive_times():
    with pytest.raises(SchemaError):
        _cox([0.0], [1], 0.0)


def test_cox_censoring_grows_as_budget_shrinks():
    m, case = simulated("cox")
    fractions = [1 - m.simulate(case.truth, 5, censor_at=np.full(m.data.n_obs, c)).event.mean()
                 for c in (200.0, 60.0, 20.0, 5.0)]
    assert fractions == sorted(fractions) and fractions[0] < fractions[-1]


# -- Student-t -------------------------------------------------------------------


def _cpu(y, alg):
    k = len(y)
    return ModelInput("cpu", np.asarray(y, float), np.zeros(k, dtype=np.int64), ["A", "B"][: max(alg) + 1], ["X"],
                      alg_idx=np.asarray(alg))


def test_student_t_approaches_normal_for_large_nu():
    y = np.array([-2.0, -0.3, 0.4, 1.7])
    m = build_model("student_t", _cpu(y, [0, 0, 0, 0]))
    p = m._single({"a_alg": np.array([0.2]), "sigma": np.array([0.8]), "nu": 1e9, "s": 1.0,
                   "a_bm": np.array([0.1])})
    ratio = np.exp(m.loglik(p)[0] - stats.norm(0.3, 0.8).logpdf(y))
    assert np.allclose(ratio, 1, atol=1e-7)


def test_student_t_row_is_the_t_density():
    y = np.array([0.5, 3.0])
    m = build_model("student_t", _cpu(y, [0, 0]))
    p = m._single({"a_alg": np.array([0.2]), "sigma": np.array([0.8]), "nu": 3.0, "s": 1.0,
                   "a_bm": np.array([0.0])})
    assert np.allclose(m.loglik(p)[0], stats.t(3.0, 0.2, 0.8).logpdf(y))


def test_student_t_needs_two_observations_per_algorithm():
    with pytest.raises(SchemaError, match="2 observations"):
        build_model("student_t", _cpu([0.1, 0.2, 0.3], [0, 0, 1]))


# -- Jacobian of the log-scale parameterization ------------------------------------


class _ScaleToy(HierarchicalModel):
    """y ~ N(0, sigma) with sigma ~ Exponential(1), sampled as log(sigma)."""

    kind = "toy"

    def _layout(self):
        self.u_blocks = [("log_sigma", 1)]
        self.c_blocks = [("sigma", ())]

    def _priors(self):
        return [("log_sigma", "exponential", 1.0, "sigma")]

    def log_density_grad(self, theta):
        y = self.data.y
        sigma = math.exp(theta[0])
        ss = float(y @ y)
        lp = -len(y) * theta[0] - 0.5 * ss / sigma**2
        grad = np.array([-len(y) + ss / sigma**2])
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        return np.exp(theta)


def test_log_scale_sampling_matches_dense_grid_posterior():
    y = np.array([0.3, -1.2, 0.8, 0.1, -0.5])
    toy = _ScaleToy(ModelInput("toy", y, np.zeros(len(y), dtype=np.int64), ["A"], ["B"]))
    draws = nuts_sample(toy, SamplerConfig(chains=4, warmup=1000, iterations=25_000, seed=4)).flat("sigma")
    grid = np.linspace(1e-4, 8, 400_001)
    qs = np.arange(1, 10) / 10

    def grid_quantiles(log_post):
        cdf = np.cumsum(np.exp(log_post - log_post.max()))
        return np.interp(qs, cdf / cdf[-1], grid)

    loglik = stats.norm(0, grid[:, None]).logpdf(y).sum(axis=1)
    exact = grid_quantiles(loglik - grid)
    assert np.max(np.abs(np.quantile(draws, qs) - exact)) < 0.01
    # dropping the Jacobian would shift the answer well beyond the tolerance
    no_jacobian = grid_quantiles(loglik - grid - np.log(grid))
    assert np.max(np.abs(no_jacobian - exact)) > 0.05


# -- simulate-then-fit oracles (one replication each) --------------------------------


@pytest.mark.parametrize(
    "name, focal",
    [
        ("binomial", ["a_alg[A0]", "a_alg[A1]"]),
        ("relative_improvement", ["a_alg[A0]"]),
        ("cox", ["a_alg[A0]"]),
        ("student_t", ["nu"]),
    ],
)
def test_simulate_then_fit_covers_truth(name, focal):
    covered, _, data = run_replication(name, seed=1)
    assert all(covered[f] for f in focal)
    if name == "cox":
        assert 0.2 < 1 - data.event.mean() < 0.45


def test_recovery_truths_match_documented_values():
    rng = np.random.default_rng(0)
    assert CASES["binomial"](rng).focal["a_alg[A0]"] == -1.0
    assert CASES["relative_improvement"](rng).focal["a_alg[A0]"] == 0.3
    assert CASES["cox"](rng).focal["a_alg[A0]"] == -4.0
    assert CASES["student_t"](rng).focal["nu"] == 3.0
