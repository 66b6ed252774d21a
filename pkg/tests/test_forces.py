import numpy as np
import pytest
from scipy.integrate import trapezoid

from dampedplate import DomainSpec, GridField, ModalField, ModelSpec, Pointwise, SpecError, build_operator, to_modal
from dampedplate.forces import (
    airy_solve,
    berger_force,
    clamped_airy_grid,
    force,
    gradient_consistency_probe,
    karman_bracket,
    karman_force,
    kirchhoff_force,
    make_force,
    nemytskii,
    potential,
    potential_bound_probe,
    random_field,
    wave_force,
)
from dampedplate.spectral import basis_for, inner

PI = np.pi
CUBE = Pointwise(poly=(0.0, 0.0, 0.0, 1.0))


def fine_quad_1d(func, n=4096):
    x = np.linspace(0.0, 1.0, n + 1)
    return trapezoid(func(x), x)


def load_field(dom, seed=3):
    rng = np.random.default_rng(seed)
    c = np.zeros(dom.shape)
    c[(slice(0, 3),) * dom.dimension] = rng.standard_normal((3,) * dom.dimension)
    return GridField(basis_for(dom).synth(c), dom)


# -- Kirchhoff ---------------------------------------------------------------


def test_kirchhoff_trivial(square8, rng):
    dom, A = square8
    u = random_field(A, rng, 2.0)
    assert not np.any(kirchhoff_force(u, ModelSpec("kirchhoff")).coeffs)


def test_nemytskii_cube():
    dom = DomainSpec(1, (1.0,), 8)
    u = ModalField.mode(dom, 1, 2.0 / np.sqrt(2))  # grid value 2 at x = 1/2
    g = nemytskii(u, CUBE)
    mid = dom.grid_shape[0] // 2
    assert g.values[mid] == pytest.approx(8.0, rel=1e-14)


def test_kirchhoff_flux_against_fine_quadrature():
    dom = DomainSpec(1, (1.0,), 8)
    spec = ModelSpec("kirchhoff", kappa=1.0, q=2.0, r=0.0, mu=0.0)
    e1 = ModalField.mode(dom, 1)
    value = inner(kirchhoff_force(e1, spec), e1)
    # (F(u), e1) = int |u'|^2 u' e1' with u = e1 = sqrt(2) sin(pi x)
    oracle = fine_quad_1d(lambda x: (np.sqrt(2) * PI * np.cos(PI * x)) ** 4)
    assert abs(value - oracle) <= 1e-8 * abs(oracle)


def test_kirchhoff_linear_phi_is_diagonal(square8, rng):
    dom, A = square8
    spec = ModelSpec("kirchhoff", phi=Pointwise(poly=(0.0, 3.5)))
    u = random_field(A, rng, 1.0, n_modes=dom.size)
    assert np.allclose(kirchhoff_force(u, spec).coeffs, 3.5 * u.coeffs, rtol=0, atol=1e-12)


# -- von Karman --------------------------------------------------------------


def test_bracket_properties(square8, rng):
    dom, A = square8
    u, v = random_field(A, rng), random_field(A, rng)
    assert not np.any(karman_bracket(u, ModalField.zeros(dom)).values)
    assert np.array_equal(karman_bracket(u, v).values, karman_bracket(v, u).values)
    w = random_field(A, rng)
    lhs = karman_bracket(u, v * 2.0 + w).values
    rhs = 2.0 * karman_bracket(u, v).values + karman_bracket(u, w).values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-10 * np.abs(lhs).max())


def test_bracket_center_value(square8):
    dom, _ = square8
    u = ModalField.mode(dom, (1, 1), 1.0)  # 2 sin(pi x) sin(pi y)
    g = karman_bracket(u, u).values
    c = dom.grid_shape[0] // 2
    assert g[c, c] == pytest.approx(8 * PI**4, rel=1e-12)


def test_bracket_rejects_1d():
    dom = DomainSpec(1, (1.0,), 8)
    with pytest.raises(ValueError):
        karman_bracket(ModalField.zeros(dom), ModalField.zeros(dom))


def test_airy_hinged(square8, rng):
    dom, A = square8
    assert not np.any(airy_solve(ModalField.zeros(dom)).coeffs)
    u = random_field(A, rng, 3.0)
    v = airy_solve(u)
    res = A.eigenvalues * v.coeffs + to_modal(karman_bracket(u, u)).coeffs
    assert np.max(np.abs(res)) <= 1e-10
    assert np.array_equal(v.coeffs, airy_solve(-u).coeffs)


def test_airy_clamped_boundary_conditions():
    dom = DomainSpec(2, (1.0, 1.0), 8)
    u = ModalField.mode(dom, (1, 1))
    v = clamped_airy_grid(u).values
    h = 1.0 / (dom.grid_shape[0] - 1)
    edges = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
    assert np.max(np.abs(edges)) <= 1e-8
    # zero normal derivative: extending v by reflection (v_{-1} = v_1) must
    # reproduce the bilaplacian at every interior node, including those
    # next to the boundary
    ext = np.pad(v, 2, mode="reflect")

    def lap(a):
        return (a[2:, 1:-1] + a[:-2, 1:-1] + a[1:-1, 2:] + a[1:-1, :-2] - 4 * a[1:-1, 1:-1]) / h**2

    bilap = lap(lap(ext))
    src = -karman_bracket(u, u).values
    interior = (slice(1, -1), slice(1, -1))
    err = np.max(np.abs(bilap[interior] - src[interior]))
    assert err <= 1e-8 * np.max(np.abs(src))
    normal = (ext[3, 2:-2] - ext[1, 2:-2]) / (2 * h)
    assert np.max(np.abs(normal)) <= 1e-8


def test_karman_force_examples(square8, rng):
    dom, A = square8
    spec = ModelSpec("karman")
    assert not np.any(karman_force(ModalField.zeros(dom), spec).coeffs)
    p = load_field(dom)
    loaded = ModelSpec("karman", load=p)
    assert np.allclose(karman_force(ModalField.zeros(dom), loaded).coeffs, -to_modal(p).coeffs, atol=1e-14)
    u = random_field(A, rng, 2.0)
    assert np.allclose(karman_force(-u, spec).coeffs, -karman_force(u, spec).coeffs, rtol=0, atol=1e-12)


def test_literal_squared_stress_potential_is_not_a_primitive(square8, rng):
    # the Airy-energy form must be the one whose derivative is F; the
    # alternative 1/4 int |v(u)|^2 fails the same central-difference check
    dom, A = square8
    spec = ModelSpec("karman")
    f = make_force(spec, A)

    def literal(c):
        return 0.25 * float(np.sum(f.airy(c)[1] ** 2))

    worst = 0.0
    for _ in range(5):
        u, w = random_field(A, rng, 2.0).coeffs, random_field(A, rng, 1.0).coeffs
        exact = float(np.sum(f.force(u) * w))
        h = 1e-4
        fd = (literal(u + h * w) - literal(u - h * w)) / (2 * h)
        worst = max(worst, abs(fd - exact) / max(abs(exact), abs(fd)))
        assert gradient_consistency_probe(spec, ModalField(u, dom), ModalField(w, dom)) <= 1e-4
    assert worst > 1e-2


# -- Berger ------------------------------------------------------------------


def test_berger_examples(square8):
    dom, A = square8
    spec = ModelSpec("berger", kappa=1.0)
    assert not np.any(berger_force(ModalField.zeros(dom), spec).coeffs)
    e1 = ModalField.mode(dom, (1, 1))
    F = berger_force(e1, spec).coeffs
    assert F[0, 0] == pytest.approx(4 * PI**4, rel=1e-13)
    assert np.count_nonzero(F) == 1
    buckled = ModelSpec("berger", kappa=1.0, gamma=4 * PI**2)
    G = A.eigenvalues * e1.coeffs + berger_force(e1, buckled).coeffs
    assert np.max(np.abs(G)) <= 1e-10
    assert potential(e1, spec) == pytest.approx(PI**4, rel=1e-13)
    assert potential(ModalField.zeros(dom), spec) == 0.0


@pytest.mark.parametrize("c", [0.3, 0.7, 1.5])
def test_berger_one_mode_equilibrium_family(square8, c):
    dom, A = square8
    gamma = 2 * PI**2 + 2 * PI**2 * c**2
    u = ModalField.mode(dom, (1, 1), c)
    G = A.eigenvalues * u.coeffs + berger_force(u, ModelSpec("berger", kappa=1.0, gamma=gamma)).coeffs
    assert np.max(np.abs(G)) <= 1e-10


# -- wave --------------------------------------------------------------------


def test_wave_examples(interval16):
    dom, A = interval16
    assert not np.any(wave_force(ModalField.mode(dom, 2), ModelSpec("wave")).coeffs)
    c = 1.7
    u = ModalField.mode(dom, 1, c)
    e1 = ModalField.mode(dom, 1)
    value = inner(wave_force(u, ModelSpec("wave", phi=CUBE)), e1)
    oracle = fine_quad_1d(lambda x: (c * np.sqrt(2) * np.sin(PI * x)) ** 3 * np.sqrt(2) * np.sin(PI * x))
    assert abs(value - oracle) <= 1e-8 * abs(oracle)
    assert value == pytest.approx(1.5 * c**3, rel=1e-12)
    f = load_field(dom)
    F = wave_force(ModalField.zeros(dom), ModelSpec("wave", load=f)).coeffs
    assert np.allclose(F, -to_modal(f).coeffs, atol=1e-14)


# -- F = Pi' -----------------------------------------------------------------


def gradient_specs(dom):
    p = load_field(dom)
    rng = np.random.default_rng(9)
    f0 = ModalField(np.where(np.arange(dom.size).reshape(dom.shape) < 5, rng.standard_normal(dom.shape), 0.0), dom)
    return {
        "kirchhoff": ModelSpec("kirchhoff", kappa=1.0, q=2.0, r=1.0, mu=0.5,
                               phi=Pointwise(poly=(0.0, -1.0, 0.0, 1.0), sines=((0.5, 2.0),)), load=p),
        "karman": ModelSpec("karman", load=p, f0=f0),
        "berger": ModelSpec("berger", kappa=1.3, gamma=25.0, load=p),
        "wave": ModelSpec("wave", phi=Pointwise(poly=(0.0, 0.5, 0.0, 1.0)), load=p),
    }


@pytest.mark.parametrize("variant", ["kirchhoff", "karman", "berger", "wave"])
def test_gradient_consistency(variant):
    dom = DomainSpec(2, (1.0, 1.0), 8)
    spec = gradient_specs(dom)[variant]
    A = build_operator(dom, spec.operator_kind)
    rng = np.random.default_rng(len(variant))
    errs = [gradient_consistency_probe(spec, random_field(A, rng, 2.0), random_field(A, rng, 1.0))
            for _ in range(20)]
    assert max(errs) <= 1e-4


def test_gradient_consistency_tight_cases(square8, rng):
    dom, A = square8
    for _ in range(5):
        u, w = random_field(A, rng, 1.0), random_field(A, rng, 1.0)
        assert gradient_consistency_probe(ModelSpec("berger", kappa=1.0, gamma=3.0), u, w) <= 1e-5
        assert gradient_consistency_probe(ModelSpec("kirchhoff", phi=CUBE), u, w) <= 1e-6


def test_gradient_consistency_clamped():
    dom = DomainSpec(2, (1.0, 1.0), 6)
    A = build_operator(dom, "plate")
    spec = ModelSpec("karman", airy_bc="clamped", airy_tol=1e-12)
    rng = np.random.default_rng(4)
    for _ in range(3):
        assert gradient_consistency_probe(spec, random_field(A, rng, 2.0), random_field(A, rng, 1.0)) <= 1e-4


def test_zero_maps_to_minus_load(square8):
    dom, _ = square8
    p = load_field(dom)
    zero = ModalField.zeros(dom)
    for spec in (ModelSpec("kirchhoff", kappa=1.0, phi=CUBE, load=p), ModelSpec("berger", kappa=1.0, load=p),
                 ModelSpec("karman", load=p)):
        assert np.allclose(force(zero, spec).coeffs, -to_modal(p).coeffs, atol=1e-14)


# -- probes and admission rules ---------------------------------------------


def test_potential_bound_probe_examples():
    sq = DomainSpec(2, (1.0, 1.0), 6)
    rep = potential_bound_probe(ModelSpec("berger", kappa=1.0), sq, samples=20)
    assert rep.feasible and rep.constant == 0.0
    assert rep.eta == 0.25
    rep = potential_bound_probe(ModelSpec("kirchhoff", kappa=1.0, phi=CUBE), sq, samples=20)
    assert rep.feasible and rep.constant == 0.0
    lam1 = 2 * PI**2
    rep = potential_bound_probe(ModelSpec("wave", phi=Pointwise(poly=(0.0, -lam1 / 2))), sq, samples=20)
    assert rep.feasible and rep.constant == 0.0
    assert all(np.isfinite(v) for v in rep.lipschitz.values())


def test_potential_bound_probe_detects_unbounded_below():
    sq = DomainSpec(2, (1.0, 1.0), 6)
    spec = ModelSpec("wave", phi=Pointwise(poly=(0.0, -3 * PI**2)))
    rep = potential_bound_probe(spec, sq, samples=20)
    assert not rep.feasible
    assert rep.max_violation > 0


@pytest.mark.parametrize("spec, dim, rule", [
    (ModelSpec("kirchhoff", q=1.0, r=2.0), 2, "kirchhoff-exponents"),
    (ModelSpec("kirchhoff", kappa=-1.0), 2, "kirchhoff-kappa"),
    (ModelSpec("kirchhoff", phi=Pointwise(poly=(0.0, -500.0))), 2, "kirchhoff-phi-coercivity"),
    (ModelSpec("berger", kappa=0.0), 2, "berger-kappa"),
    (ModelSpec("karman"), 1, "karman-dimension"),
    (ModelSpec("karman", airy_bc="free"), 2, "karman-airy-bc"),
    (ModelSpec("wave", phi=Pointwise(poly=(0, 0, 0, 0, 0, 1.0))), 2, "wave-source-growth"),
    (ModelSpec("wave", phi=Pointwise(poly=(0.0, -30.0))), 2, "wave-source-coercivity"),
    (ModelSpec("plate"), 2, "model-variant"),
])
def test_spec_rules(spec, dim, rule):
    dom = DomainSpec(dim, (1.0,) * dim, 4)
    with pytest.raises(SpecError) as exc:
        spec.check(dom)
    assert exc.value.rule == rule


def test_valid_specs_pass(square8):
    dom, _ = square8
    for spec in gradient_specs(dom).values():
        spec.check(dom)


def test_operator_kind_mismatch(square8):
    dom, A = square8
    with pytest.raises(SpecError):
        make_force(ModelSpec("wave"), A)
