import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampedplate import DampingSpec, DomainSpec, ModalField, Pointwise, SpecError, apply_damping, build_operator
from dampedplate.damping import coercivity_probe, dissipation_rate, lipschitz_probe, make_damping
from dampedplate.forces import random_field
from dampedplate.spectral import inner

PI = np.pi
ONE = Pointwise.constant(1.0)

SPECS = {
    "kelvin_voigt": DampingSpec(theta=1.0, sigma0=Pointwise(poly=(0.05, 0.0, 0.05))),
    "structural": DampingSpec(theta=1.0, sigma10=Pointwise(poly=(0.2, 0.0, 0.1)), sigma11=Pointwise.constant(0.3),
                              structural_r=1.0),
    "structural_half": DampingSpec(theta=0.5, sigma10=Pointwise.constant(2.0)),
    "friction": DampingSpec(theta=0.5, g0=Pointwise(poly=(1.0, 0.0, 0.5)), g1=Pointwise.constant(0.2),
                            friction_power=2.0),
    "friction_cubic": DampingSpec(theta=1.0, g1=ONE, friction_power=3.0),
}
WAVE = DampingSpec(theta=1.0, wave_sigma0=Pointwise(poly=(0.1, 0.0, 1.0)), wave_eta=0.5, wave_sigma1=ONE)


@pytest.fixture(scope="module")
def plate():
    dom = DomainSpec(2, (1.0, 1.0), 8)
    return dom, build_operator(dom, "plate")


@pytest.fixture(scope="module")
def wave():
    dom = DomainSpec(2, (1.0, 1.0), 8)
    return dom, build_operator(dom, "wave")


def test_zero_velocity_gives_zero(plate, wave):
    dom, A = plate
    rng = np.random.default_rng(0)
    u = random_field(A, rng, 3.0)
    zero = ModalField.zeros(dom)
    for spec in SPECS.values():
        assert not np.any(apply_damping(spec, A, u, zero).coeffs)
        assert dissipation_rate(spec, A, u, zero) == 0.0
    dom, Aw = wave
    assert not np.any(apply_damping(WAVE, Aw, random_field(Aw, rng, 3.0), zero).coeffs)


def test_kelvin_voigt_eigenmode(plate):
    dom, A = plate
    spec = DampingSpec(theta=1.0, sigma0=ONE)
    e1 = ModalField.mode(dom, (1, 1))
    D = apply_damping(spec, A, ModalField.zeros(dom), e1).coeffs
    expected = np.zeros(dom.shape)
    expected[0, 0] = 4 * PI**4
    assert np.allclose(D, expected, rtol=0, atol=1e-9)
    assert dissipation_rate(spec, A, ModalField.zeros(dom), e1) == pytest.approx(4 * PI**4, rel=1e-12)


def test_linear_friction_is_identity(plate):
    dom, A = plate
    spec = DampingSpec(theta=0.5, g0=ONE)
    e1 = ModalField.mode(dom, (1, 1))
    u = random_field(A, np.random.default_rng(1), 2.0)
    assert np.allclose(apply_damping(spec, A, u, e1).coeffs, e1.coeffs, rtol=0, atol=1e-14)


def test_cubic_friction_rate_on_interval():
    dom = DomainSpec(1, (1.0,), 16)
    A = build_operator(dom, "plate")
    spec = DampingSpec(theta=1.0, g1=ONE, friction_power=3.0)
    rate = dissipation_rate(spec, A, ModalField.zeros(dom), ModalField.mode(dom, 1))
    assert abs(rate - 1.5) <= 1e-10


def test_rate_matches_modal_inner_product(plate, wave):
    rng = np.random.default_rng(2)
    for (dom, A), specs in ((plate, SPECS.values()), (wave, [WAVE])):
        for spec in specs:
            u, v = random_field(A, rng, 2.0), random_field(A, rng, 1.0, s=0.0)
            modal = inner(apply_damping(spec, A, u, v), v)
            assert modal == pytest.approx(dissipation_rate(spec, A, u, v), rel=1e-8)


def test_linearity_in_velocity(plate, wave):
    rng = np.random.default_rng(3)
    dom, A = plate
    u, v = random_field(A, rng, 2.0), random_field(A, rng, 1.0, s=0.0)
    for name in ("kelvin_voigt", "structural", "structural_half"):
        spec = SPECS[name]
        assert np.allclose(apply_damping(spec, A, u, v * 2.5).coeffs, 2.5 * apply_damping(spec, A, u, v).coeffs,
                           rtol=1e-12, atol=1e-12)
    dom, Aw = wave
    u, v = random_field(Aw, rng, 2.0), random_field(Aw, rng, 1.0, s=0.0)
    assert np.allclose(apply_damping(WAVE, Aw, u, v * -3.0).coeffs, -3.0 * apply_damping(WAVE, Aw, u, v).coeffs,
                       rtol=1e-12, atol=1e-12)


def test_coercivity_examples(plate):
    dom, A = plate
    rep = coercivity_probe(DampingSpec(theta=1.0, sigma0=ONE), A, rho=2.0, samples=30)
    assert rep.alpha == pytest.approx(1.0, rel=1e-10)
    assert not rep.violation
    fric = DampingSpec(theta=0.5, g0=ONE)
    rep = coercivity_probe(fric, A, rho=2.0, samples=30)
    assert 0 < rep.alpha <= A.lambda1 ** -0.5 * (1 + 1e-12)
    e1 = ModalField.mode(dom, (1, 1))
    ratio = dissipation_rate(fric, A, ModalField.zeros(dom), e1) / A.lambda1**0.5
    assert ratio == pytest.approx(A.lambda1 ** -0.5, rel=1e-12)
    rep = coercivity_probe(DampingSpec(test_mode=True), A, rho=2.0, samples=5)
    assert rep.alpha == 0.0 and rep.violation


def test_lipschitz_examples(plate):
    dom, A = plate
    rng = np.random.default_rng(4)
    u, v = random_field(A, rng, 2.0).coeffs, random_field(A, rng, 1.0, s=0.0).coeffs
    rep = lipschitz_probe(SPECS["friction"], A, 2.0, pairs=[(u, v, u, v)])
    assert rep.c_lipschitz == 0.0 and rep.c_monotone == 0.0 and rep.min_monotone == 0.0
    rep = lipschitz_probe(DampingSpec(theta=1.0, sigma0=ONE), A, 2.0, samples=20)
    assert rep.gamma == pytest.approx(1.0, rel=1e-10)
    rep = lipschitz_probe(SPECS["friction_cubic"], A, 2.0, samples=20)
    assert rep.min_monotone >= 0.0
    assert np.isfinite(rep.c_lipschitz)


def test_proxy_is_nonnegative_diagonal(plate):
    dom, A = plate
    rng = np.random.default_rng(5)
    u = random_field(A, rng, 2.0).coeffs
    for spec in SPECS.values():
        p = make_damping(spec, A).proxy(u)
        assert p.shape == dom.shape and np.all(p >= 0)


@pytest.mark.parametrize("spec, kind, rule", [
    (DampingSpec(theta=0.0, g0=ONE), "plate", "theta-range"),
    (DampingSpec(theta=1.0), "plate", "damping-empty"),
    (DampingSpec(theta=0.5, sigma0=ONE), "plate", "kelvin-voigt-theta"),
    (DampingSpec(theta=1.0, sigma0=Pointwise(poly=(0.0, 0.0, 1.0))), "plate", "kelvin-voigt-positivity"),
    (DampingSpec(theta=1.0, sigma0=ONE), "wave", "kelvin-voigt-operator"),
    (DampingSpec(theta=0.5, sigma10=ONE, sigma11=ONE), "plate", "structural-theta-half"),
    (DampingSpec(theta=1.0, sigma10=Pointwise(poly=(-1.0,))), "plate", "structural-nonnegative"),
    (DampingSpec(theta=1.0, sigma11=ONE, structural_r=0.5), "plate", "structural-exponent"),
    (DampingSpec(theta=1.0, g0=Pointwise(poly=(0.0, 1.0))), "plate", "friction-sign"),
    (DampingSpec(theta=1.0, g1=ONE, friction_power=4.0), "plate", "friction-growth"),
    (DampingSpec(theta=0.5, g1=ONE, friction_power=3.0), "plate", "friction-growth"),
    (DampingSpec(theta=1.0, wave_sigma0=ONE, wave_eta=1.0), "wave", "wave-eta"),
    (DampingSpec(theta=1.0, wave_sigma0=ONE), "plate", "wave-nonlocal-operator"),
    (DampingSpec(theta=0.5, wave_sigma0=ONE), "wave", "wave-nonlocal-theta"),
    (DampingSpec(theta=1.0, wave_sigma0=Pointwise(poly=(-1.0,))), "wave", "wave-sigma0-positivity"),
])
def test_spec_rules(spec, kind, rule):
    with pytest.raises(SpecError) as exc:
        spec.check(DomainSpec(2, (1.0, 1.0), 4), kind)
    assert exc.value.rule == rule


def test_valid_specs_pass():
    dom = DomainSpec(2, (1.0, 1.0), 4)
    for spec in SPECS.values():
        spec.check(dom, "plate")
    WAVE.check(dom, "wave")
    DampingSpec(test_mode=True).check(dom)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(SPECS)), st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_dissipation_nonnegative(name, seed, rho):
    dom = DomainSpec(2, (1.0, 1.0), 6)
    A = build_operator(dom, "plate")
    rng = np.random.default_rng(seed)
    u, v = random_field(A, rng, rho, n_modes=dom.size), random_field(A, rng, rho, s=0.0, n_modes=dom.size)
    assert dissipation_rate(SPECS[name], A, u, v) >= -1e-12
