"""Test cases for the Gaussian families and the ELBO gradient estimators."""
import math

import numpy as np
import pytest
from scipy import integrate, stats

from src.core import autodiff as ad
from src.core import variational as vi
from src.core.exceptions import DegenerateCovarianceError, DivergedError, NonFiniteValueError
from src.core.transforms import ConstraintSpec, ParameterBlock, TransformSet
from src.core.variational import FullRankParams, MeanFieldParams
from tests.conftest import bind


def test_mean_field_sample_and_standardize_are_inverse(rng) -> None:
    """Standardizing a draw recovers the noise that produced it."""
    params = MeanFieldParams(rng.normal(size=3), rng.normal(size=3) * 0.3)
    eta = rng.normal(size=3)
    draw = vi.sample(params, eta)
    assert np.allclose(vi.standardize(params, draw.zeta), eta), "Standardization did not invert sampling"


def test_full_rank_sample_and_standardize_are_inverse(rng) -> None:
    """Full-rank draws round-trip through the Cholesky factor."""
    params = FullRankParams(rng.normal(size=3), np.array([[1.0, 0, 0], [0.5, 0.8, 0], [-0.2, 0.3, 1.5]]))
    eta = rng.normal(size=3)
    zeta = vi.sample(params, eta).zeta
    assert np.allclose(zeta, params.mu + params.L @ eta), "zeta = mu + L eta expected"
    assert np.allclose(vi.standardize(params, zeta), eta), "Standardization did not invert sampling"


def test_log_q_matches_scipy() -> None:
    """log q agrees with scipy for both families."""
    mf = MeanFieldParams(np.array([0.5, -1.0]), np.array([0.1, -0.3]))
    z = np.array([0.2, -0.7])
    expected = stats.norm(mf.mu, np.exp(mf.omega)).logpdf(z).sum()
    assert math.isclose(vi.log_q(mf, z), expected, rel_tol=1e-12), "Mean-field log q wrong"

    L = np.array([[1.2, 0.0], [0.6, 0.5]])
    fr = FullRankParams(np.array([0.5, -1.0]), L)
    expected = stats.multivariate_normal(fr.mu, L @ L.T).logpdf(z)
    assert math.isclose(vi.log_q(fr, z), expected, rel_tol=1e-12), "Full-rank log q wrong"


def test_entropy_closed_forms() -> None:
    """Entropies match the Gaussian closed forms."""
    mf = MeanFieldParams(np.zeros(2), np.array([0.0, math.log(2.0)]))
    assert math.isclose(vi.entropy(mf), 2 * 0.5 * (1 + math.log(2 * math.pi)) + math.log(2.0)), \
        "Mean-field entropy wrong"
    L = np.array([[2.0, 0.0], [1.0, 3.0]])
    fr = FullRankParams(np.zeros(2), L)
    expected = stats.multivariate_normal(np.zeros(2), L @ L.T).entropy()
    assert math.isclose(vi.entropy(fr), expected, rel_tol=1e-12), "Full-rank entropy wrong"


def test_flatten_round_trip() -> None:
    """Parameter vectors flatten to (mu, omega) or (mu, lower triangle of L)."""
    fr = FullRankParams(np.array([1.0, 2.0]), np.array([[1.0, 0.0], [3.0, 4.0]]))
    flat = fr.flatten()
    assert flat.tolist() == [1.0, 2.0, 1.0, 3.0, 4.0], f"Unexpected layout {flat}"
    back = FullRankParams.unflatten(2, flat)
    assert np.allclose(back.L, fr.L) and np.allclose(back.mu, fr.mu), "Unflatten lost information"


def test_degenerate_cholesky_is_rejected() -> None:
    """A zero diagonal in L is reported before estimating gradients."""
    model, data = bind("gaussian_target", mean=[0.0, 0.0])
    fr = FullRankParams(np.zeros(2), np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateCovarianceError):
        vi.advi_gradient(model.bind(data), model.transform_set(data), fr, np.zeros((1, 2)))


def test_advi_gradient_at_optimum_is_zero_for_gaussian_target(standard_normal) -> None:
    """With q equal to N(0,1) the expected gradient vanishes; eta=+-1 pairs cancel exactly."""
    model, data = standard_normal
    params = MeanFieldParams.zeros(1)
    eta = np.array([[1.0], [-1.0]])
    est = vi.advi_gradient(model.bind(data), model.transform_set(data), params, eta)
    assert np.allclose(est.grad_mu, 0.0), f"grad mu should vanish, got {est.grad_mu}"
    assert np.allclose(est.grad_omega, 0.0), f"grad omega should vanish, got {est.grad_omega}"


def test_advi_gradient_single_draw_closed_form(standard_normal) -> None:
    """For log p = -zeta^2/2: grad_mu = -zeta, grad_omega = -zeta eta sigma + 1."""
    model, data = standard_normal
    params = MeanFieldParams(np.array([0.3]), np.array([math.log(0.5)]))
    eta = np.array([[0.8]])
    zeta = 0.3 + 0.5 * 0.8
    est = vi.advi_gradient(model.bind(data), model.transform_set(data), params, eta)
    assert math.isclose(est.grad_mu[0], -zeta), f"grad mu {est.grad_mu[0]} != {-zeta}"
    assert math.isclose(est.grad_omega[0], -zeta * 0.8 * 0.5 + 1.0), "grad omega wrong"


def test_full_rank_gradient_is_lower_triangular(correlated_gaussian, rng) -> None:
    """grad_L keeps only the lower triangle."""
    model, data = correlated_gaussian
    params = FullRankParams.identity(2)
    est = vi.advi_gradient(model.bind(data), model.transform_set(data), params, rng.normal(size=(3, 2)))
    assert est.grad_L[0, 1] == 0.0, "Upper triangle of grad_L must be zero"
    assert est.flatten().size == 2 + 3, "Flattened gradient should match the parameter layout"


def _mean_and_se(samples):
    samples = np.asarray(samples)
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(len(samples))


def test_estimators_unbiased_on_standard_normal(standard_normal) -> None:
    """Both estimators average to the exact ELBO gradient for q = N(mu, sigma), p = N(0, 1)."""
    model, data = standard_normal
    bound, ts = model.bind(data), model.transform_set(data)
    mu, sigma = 0.4, 0.7
    params = MeanFieldParams(np.array([mu]), np.array([math.log(sigma)]))
    # ELBO = -(mu^2 + sigma^2)/2 + log sigma + const
    exact_mu, exact_omega = -mu, -sigma ** 2 + 1.0

    rng = np.random.default_rng(11)
    eta = rng.standard_normal((20_000, 1, 1))
    advi = [vi.advi_gradient(bound, ts, params, e) for e in eta]
    bbvi = [vi.bbvi_gradient(bound, ts, params, mu + sigma * e) for e in eta]
    for name, estimates in (("advi", advi), ("bbvi", bbvi)):
        m_mu, se_mu = _mean_and_se([e.grad_mu[0] for e in estimates])
        m_om, se_om = _mean_and_se([e.grad_omega[0] for e in estimates])
        assert abs(m_mu - exact_mu) < 4 * se_mu + 1e-12, f"{name} grad mu biased: {m_mu} vs {exact_mu}"
        assert abs(m_om - exact_omega) < 4 * se_om + 1e-12, f"{name} grad omega biased: {m_om} vs {exact_omega}"


class Cliff:
    """Standard normal log joint that cannot be evaluated beyond x = 5."""

    transforms = TransformSet((ParameterBlock("x", ConstraintSpec.unconstrained(), scalar=True),))

    def log_joint(self, values, likelihood_scale=1.0):
        x = values["x"]
        if ad.value_of(x) > 5.0:
            raise NonFiniteValueError("log_joint", -1, float("inf"))
        return ad.mul(-0.5, ad.mul(x, x))


def test_failed_draws_are_redrawn() -> None:
    """A failed draw is replaced and counted while the raw ELBO records the failure."""
    model = Cliff()
    eta = np.array([[10.0], [0.1]])
    est = vi.advi_gradient(model, model.transforms, MeanFieldParams.zeros(1), eta,
                           rng=np.random.default_rng(0), max_redraws=3)
    assert est.discarded == 1, f"Exactly one draw should be discarded, got {est.discarded}"
    assert est.samples_used == 2, "The discarded draw should have been replaced"
    assert np.all(np.isfinite(est.grad_mu)), "Gradient must stay finite"
    assert est.raw_elbo_estimate == -math.inf, "A failed original draw makes the raw ELBO -inf"
    assert math.isfinite(est.elbo_estimate), "The estimate averages the redrawn values"
    clean = vi.advi_gradient(model, model.transforms, MeanFieldParams.zeros(1), np.array([[0.1], [-0.3]]))
    assert clean.raw_elbo_estimate == clean.elbo_estimate, "Without failures both ELBO values agree"


def test_all_draws_failing_raises_diverged() -> None:
    """If no draw can be evaluated the estimator reports divergence."""
    model = Cliff()
    params = MeanFieldParams(np.array([10.0]), np.array([-20.0]))
    with pytest.raises(DivergedError):
        vi.advi_gradient(model, model.transforms, params, np.zeros((2, 1)),
                         rng=np.random.default_rng(0), max_redraws=2)


def test_estimate_elbo_on_matched_gaussian(standard_normal) -> None:
    """ELBO of q = p is zero (log evidence of a normalized target)."""
    model, data = standard_normal
    eta = np.random.default_rng(3).standard_normal((20_000, 1))
    elbo = vi.estimate_elbo(model.bind(data), model.transform_set(data), MeanFieldParams.zeros(1), eta)
    assert abs(elbo) < 0.02, f"ELBO of the exact posterior should be ~0, got {elbo}"


def test_implicit_density_integrates_to_one(weibull_poisson) -> None:
    """q pushed through exp is a proper density on the positive reals."""
    model, data = weibull_poisson
    ts = model.transform_set(data)
    params = MeanFieldParams(np.array([0.2]), np.array([math.log(0.4)]))
    grid = np.linspace(1e-4, 12.0, 40_001)
    dens = np.exp([vi.implicit_constrained_density(params, ts, [t]) for t in grid])
    total = integrate.trapezoid(dens, grid)
    assert abs(total - 1.0) < 1e-3, f"Implicit density integrates to {total}"
    assert vi.implicit_constrained_density(params, ts, [-1.0]) == -math.inf, "Outside support is -inf"


def test_init_params() -> None:
    """Zero init is mu = 0, omega = 0 (or L = I); a radius draws uniform means."""
    mf = vi.init_params("meanfield", 3)
    assert np.all(mf.mu == 0.0) and np.all(mf.omega == 0.0), "Mean-field init should be zeros"
    fr = vi.init_params("fullrank", 2)
    assert np.array_equal(fr.L, np.eye(2)), "Full-rank init should be the identity"
    drawn = vi.init_params("meanfield", 50, np.random.default_rng(0), init_radius=2.0)
    assert np.all(np.abs(drawn.mu) < 2.0), "Radius init must stay inside (-r, r)"
