"""Test cases for constraint transforms and their Jacobians."""
import math

import numpy as np
import pytest

from src.core import autodiff as ad
from src.core import transforms as tr
from src.core.exceptions import ConstraintError
from src.core.transforms import ConstraintSpec, ParameterBlock, PositiveLink, TransformSet

SPECS = [
    ConstraintSpec.unconstrained(3),
    ConstraintSpec.positive(2),
    ConstraintSpec.lower_bounded(-1.5, 2),
    ConstraintSpec.positive(2).with_link("softplus"),
    ConstraintSpec.upper_bounded(4.0, 2),
    ConstraintSpec.interval(-1.0, 1.0, 2),
    ConstraintSpec.ordered(4),
    ConstraintSpec.positive_ordered(3),
    ConstraintSpec.simplex(4),
]


def _log_abs_det(spec, zeta):
    jac = tr.inverse_with_grad(spec, zeta).jacobian
    if spec.kind == tr.ConstraintKind.SIMPLEX:
        # the last coordinate is determined by the others
        jac = jac[:-1]
    return np.linalg.slogdet(jac)[1]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.describe())
def test_round_trip(spec, rng) -> None:
    """forward(inverse(zeta)) recovers zeta."""
    for _ in range(5):
        zeta = rng.normal(size=spec.unconstrained_dim)
        theta = tr.inverse(spec, zeta).theta
        back = tr.forward(spec, theta)
        assert np.allclose(back, zeta, atol=1e-8), f"{spec.describe()}: {back} != {zeta}"


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.describe())
def test_log_jacobian_matches_determinant(spec, rng) -> None:
    """The analytic log-Jacobian equals log|det J| of the tape Jacobian."""
    zeta = rng.normal(size=spec.unconstrained_dim)
    point = tr.inverse(spec, zeta)
    expected = _log_abs_det(spec, zeta)
    assert math.isclose(point.log_abs_det_jac_inv, expected, rel_tol=1e-8, abs_tol=1e-10), \
        f"{spec.describe()}: {point.log_abs_det_jac_inv} vs {expected}"


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.describe())
def test_decodes_strictly_feasible_for_extreme_zeta(spec) -> None:
    """Huge unconstrained values still decode strictly inside the domain."""
    for magnitude in (-800.0, -40.0, 40.0, 800.0):
        zeta = np.full(spec.unconstrained_dim, magnitude)
        theta = tr.inverse(spec, zeta).theta
        assert np.all(np.isfinite(theta)), f"{spec.describe()}: non-finite decode at {magnitude}"
        if spec.kind == tr.ConstraintKind.LOWER_BOUNDED:
            assert np.all(theta > spec.lb), f"lower bound violated at {magnitude}"
        elif spec.kind == tr.ConstraintKind.UPPER_BOUNDED:
            assert np.all(theta < spec.ub), f"upper bound violated at {magnitude}"
        elif spec.kind == tr.ConstraintKind.INTERVAL:
            assert np.all((theta > spec.lb) & (theta < spec.ub)), f"interval violated at {magnitude}"
        elif spec.kind == tr.ConstraintKind.SIMPLEX:
            assert np.all(theta > 0.0), "simplex entries must be positive"
            assert math.isclose(theta.sum(), 1.0, abs_tol=1e-8), "simplex must sum to one"
        elif spec.kind in (tr.ConstraintKind.ORDERED, tr.ConstraintKind.POSITIVE_ORDERED):
            assert np.all(np.diff(theta) > 0.0), f"ordering violated at {magnitude}"


def test_simplex_origin_is_uniform() -> None:
    """zeta = 0 decodes to the uniform simplex point."""
    theta = tr.inverse(ConstraintSpec.simplex(5), np.zeros(4)).theta
    assert np.allclose(theta, 0.2), f"Expected uniform weights, got {theta}"


def test_interval_scalar_example() -> None:
    """interval(-1, 1) at zeta=0 is theta=0 with log-Jacobian log(2) - 2 log 2."""
    point = tr.inverse(ConstraintSpec.interval(-1.0, 1.0), [0.0])
    assert point.theta[0] == 0.0, "Midpoint expected"
    assert math.isclose(point.log_abs_det_jac_inv, math.log(0.5)), "Wrong interval log-Jacobian"


def test_positive_log_link_example() -> None:
    """lower_bounded(0) with the log link: theta = e^zeta, log-Jacobian = zeta."""
    point = tr.inverse(ConstraintSpec.positive(), [1.3])
    assert math.isclose(point.theta[0], math.exp(1.3)), "Wrong decode"
    assert math.isclose(point.log_abs_det_jac_inv, 1.3), "Wrong log-Jacobian"


def test_softplus_link_is_nearly_linear_for_large_zeta() -> None:
    """softplus decode grows linearly rather than exponentially."""
    spec = ConstraintSpec.positive().with_link(PositiveLink.SOFTPLUS)
    theta = tr.inverse(spec, [30.0]).theta[0]
    assert math.isclose(theta, 30.0, rel_tol=1e-10), f"softplus(30) should be ~30, got {theta}"


def test_forward_rejects_infeasible_values() -> None:
    """forward names the offending coordinate."""
    with pytest.raises(ConstraintError) as info:
        tr.forward(ConstraintSpec.positive(3), [1.0, -2.0, 3.0])
    assert info.value.coordinate == 1, "Offending coordinate not reported"
    with pytest.raises(ConstraintError):
        tr.forward(ConstraintSpec.simplex(3), [0.5, 0.4, 0.2])
    with pytest.raises(ConstraintError):
        tr.forward(ConstraintSpec.ordered(3), [0.0, 1.0, 1.0])


def test_invalid_specs_are_rejected() -> None:
    """Empty intervals and empty vectors are configuration errors."""
    with pytest.raises(ConstraintError):
        ConstraintSpec.interval(1.0, 1.0)
    with pytest.raises(ConstraintError):
        ConstraintSpec.ordered(0)


def test_one_element_simplex_is_the_constant_one() -> None:
    """simplex(1) has no free coordinates and decodes to [1]."""
    point = tr.inverse(ConstraintSpec.simplex(1), [])
    assert point.theta.tolist() == [1.0], f"Expected [1.0], got {point.theta}"
    assert point.log_abs_det_jac_inv == 0.0, "No Jacobian term expected"


def test_inverse_vars_gradient_of_log_jacobian(rng) -> None:
    """The tape gradient of the log-Jacobian matches finite differences."""
    spec = ConstraintSpec.simplex(4)
    zeta = rng.normal(size=3)
    grad = tr.inverse_with_grad(spec, zeta).log_jac_grad
    h = 1e-6
    fd = np.zeros(3)
    for i in range(3):
        up, down = zeta.copy(), zeta.copy()
        up[i] += h
        down[i] -= h
        fd[i] = (tr.inverse(spec, up).log_abs_det_jac_inv - tr.inverse(spec, down).log_abs_det_jac_inv) / (2 * h)
    assert np.allclose(grad, fd, rtol=1e-6, atol=1e-8), f"{grad} vs {fd}"


def test_weibull_poisson_transformed_density_tends_to_minus_infinity() -> None:
    """The transformed density vanishes smoothly at both ends of the real line."""
    assert tr.weibull_poisson_transformed_density(0, -math.inf) == -math.inf, "Should be -inf at -inf"
    assert tr.weibull_poisson_transformed_density(0, -50.0) < -40.0, "Should fall off to the left"
    assert tr.weibull_poisson_transformed_density([1, 2], 5.0) < -100.0, "Should fall off to the right"
    with pytest.raises(ConstraintError):
        tr.weibull_poisson_transformed_density(-1, 0.0)


def test_transform_set_layout() -> None:
    """Block names flatten to block.row.index and dims add up."""
    ts = TransformSet((
        ParameterBlock("mu", ConstraintSpec.unconstrained(), scalar=True),
        ParameterBlock("theta", ConstraintSpec.simplex(3), count=2),
        ParameterBlock("sigma", ConstraintSpec.positive(2)),
    ))
    assert ts.dim == 1 + 2 * 2 + 2, f"Wrong unconstrained dim {ts.dim}"
    assert ts.constrained_dim == 1 + 2 * 3 + 2, f"Wrong constrained dim {ts.constrained_dim}"
    assert ts.flat_names() == ["mu", "theta.1.1", "theta.1.2", "theta.1.3",
                               "theta.2.1", "theta.2.2", "theta.2.3", "sigma.1", "sigma.2"], \
        "Unexpected flattened names"


def test_transform_set_tape_and_numeric_paths_agree(rng) -> None:
    """TransformSet.inverse_vars on a tape and inverse on floats give the same point."""
    ts = TransformSet((
        ParameterBlock("phi", ConstraintSpec.interval(-1.0, 1.0), scalar=True),
        ParameterBlock("w", ConstraintSpec.positive_ordered(3), count=2),
    ))
    zeta = rng.normal(size=ts.dim)
    tape = ad.Tape()
    values, log_jac = ts.inverse_vars(tape.variables(zeta))
    point = ts.inverse(zeta)
    flat = ts.flatten({"phi": ad.value_of(values["phi"]),
                       "w": [[ad.value_of(v) for v in row] for row in values["w"]]})
    assert np.allclose(flat, point.theta), "Tape and numeric decodes differ"
    assert math.isclose(ad.value_of(log_jac), point.log_abs_det_jac_inv), "Log-Jacobians differ"
    assert np.allclose(ts.forward(point.theta), zeta, atol=1e-8), "Round trip through the set failed"


def test_with_positive_link_switches_only_one_sided_blocks() -> None:
    """Softplus applies to lower and upper bounds, not intervals."""
    ts = TransformSet((
        ParameterBlock("a", ConstraintSpec.positive(), scalar=True),
        ParameterBlock("b", ConstraintSpec.interval(0.0, 1.0), scalar=True),
    )).with_positive_link("softplus")
    assert ts.block("a").spec.link == PositiveLink.SOFTPLUS, "Positive block not switched"
    theta = ts.inverse([0.0, 0.0]).theta
    assert math.isclose(theta[0], math.log(2.0)), "softplus(0) should be log 2"
    assert math.isclose(theta[1], 0.5), "Interval block should be unaffected"
