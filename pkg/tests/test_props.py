import numpy as np
import pytest

from semigroup_lab.core import props
from semigroup_lab.core.assembly import FormEvaluator, assemble_L
from semigroup_lab.core.errors import SizeExceededError
from semigroup_lab.core.grid import Grid, GridFunction
from semigroup_lab.core.presets import get_preset, polar_field, preset_names, with_confinement
from semigroup_lab.main import positivity_compliant


@pytest.fixture
def compliant(preset, report_for):
    coeffs = preset('coupling-negative')
    return coeffs, report_for(coeffs)


def test_adversarial_battery(grid_1d):
    battery = props.adversarial_functions(grid_1d, 2)
    labels = [label for label, _ in battery]
    assert labels[:4] == ['high-frequency', 'boundary-hugging', 'single-component[0]', 'single-component[1]']
    assert sum(label.startswith('rotating-wave') for label in labels) == 12
    assert sum(label.startswith('wide-plateau') for label in labels) == 6
    assert all(values.shape == (grid_1d.n_nodes, 2) for _, values in battery)
    edge = dict(battery)['boundary-hugging']
    assert edge[0, 0] == 1.0 and edge[-1, 1] == 1.0 and edge[5, 0] == 0.0


@pytest.mark.parametrize('name', ['identity', 'coupling-negative', 'nonsymmetric-sectorial', 'drift-coupled',
                                  'c-transport', 'trig-2d'])
def test_accretivity_with_computed_shift(preset, report_for, name):
    coeffs = preset(name)
    grid = Grid.from_box(coeffs.box, 12 if coeffs.d == 2 else 48)
    result = props.check_accretivity(coeffs, grid, report_for(coeffs).omega, n_trials=50)
    assert result.passed, result.note
    assert result.name == 'accretivity'


def test_accretivity_fails_without_shift_under_strong_drift(preset):
    coeffs = preset('strong-drift')
    result = props.check_accretivity(coeffs, Grid.from_box(coeffs.box, 64), 0.0, n_trials=20, expected_failure=True)
    assert not result.passed
    assert result.ok and result.verdict == 'expected-fail'
    assert result.name == 'accretivity-necessity'
    assert result.witness['label'].startswith('rotating-wave')
    assert isinstance(result.witness['function'], GridFunction)


def test_form_continuity_and_norm_equivalence(trig, trig_report, grid_2d):
    continuity, equivalence = props.check_form_continuity(trig, grid_2d, trig_report, n_trials=50)
    assert continuity.passed and continuity.measured <= continuity.bound
    assert equivalence.passed and equivalence.measured > 0


def test_L2_quasicontractivity(compliant, grid_1d):
    coeffs, report = compliant
    result = props.check_L2_quasicontractivity(coeffs, grid_1d, report.omega_h, trials=5, dt=0.05, times=(0.1, 0.5))
    assert result.passed, result.measured


def test_L2_quasicontractivity_follows_omega_and_reports_omega_h(preset, report_for, grid_1d):
    coeffs = preset('c-transport')
    report = report_for(coeffs)
    assert report.omega_h > report.omega
    result = props.check_L2_quasicontractivity(coeffs, grid_1d, report.omega, trials=5, dt=0.05,
                                               omega_h=report.omega_h)
    assert result.passed, result.note
    assert 'omega_h' in result.note


def test_L2_quasicontractivity_of_trig_on_a_fine_grid(trig, trig_report):
    result = props.check_L2_quasicontractivity(trig, Grid.from_box(trig.box, 32), trig_report.omega, trials=50)
    assert result.passed, result.measured


def test_ouhabaz_functional_with_omega_tilde(preset, report_for, grid_1d):
    coeffs = preset('drift-coupled')
    result = props.check_ouhabaz_linf_functional(coeffs, grid_1d, report_for(coeffs).omega_tilde, trials=50)
    assert result.passed, result.note


def test_ouhabaz_functional_needs_the_divergence_shift(preset):
    coeffs = preset('div-heavy')
    result = props.check_ouhabaz_linf_functional(coeffs, Grid.from_box(coeffs.box, 64), 0.0, trials=20,
                                                 expected_failure=True)
    assert result.ok and not result.passed
    assert result.name == 'ouhabaz-linf-functional-necessity'
    assert 'wide-plateau' in result.witness['label']


def test_single_function_helpers(compliant, grid_1d):
    coeffs, report = compliant
    small = GridFunction.from_callable(grid_1d, lambda p: 0.5 * np.hstack([np.exp(-p ** 2)] * 2))
    assert props.ouhabaz_functional(small, coeffs, report.omega_tilde) == 0.0
    assert props.positivity_criterion(small, coeffs, report.omega) == 0.0


def test_Linf_and_Lp_quasicontractivity(compliant, grid_1d):
    coeffs, report = compliant
    results = props.check_Linf_quasicontractivity(coeffs, grid_1d, report, trials=5, dt=0.05, times=(0.1, 0.5))
    names = [r.name for r in results]
    assert names == ['lp-quasicontractivity[p=2]', 'lp-quasicontractivity[p=4]', 'lp-quasicontractivity[p=8]',
                     'linf-quasicontractivity']
    assert all(r.passed for r in results), [(r.name, r.measured) for r in results]


def test_monotone_grid(preset, report_for, grid_1d):
    strong = preset('strong-drift')
    refined, bound = props.monotone_grid(grid_1d, report_for(strong))
    assert bound and refined.spacing.max() <= 1.0 / (2 * 10.0)
    identity = preset('identity')
    assert props.monotone_grid(grid_1d, report_for(identity)) == (grid_1d, False)


def test_positivity_forward_on_compliant_preset(compliant, grid_1d):
    coeffs, report = compliant
    result = props.check_positivity_forward(coeffs, grid_1d, report, trials=50, dt=0.05, steps=20)
    assert result.passed, result.note


def test_positivity_reverse_control_finds_no_witness(compliant, grid_1d):
    coeffs, report = compliant
    result = props.check_positivity_reverse(coeffs, grid_1d, report, dt=0.05, expected_failure=True)
    assert result.name == 'positivity-reverse-control'
    assert not result.passed and result.ok
    assert 'no witness found' in result.note


@pytest.mark.parametrize('name', ['coupling-positive-v12', 'coupling-positive-strong', 'coupling-F12'])
def test_positivity_reverse_finds_witness(preset, report_for, grid_1d, name):
    coeffs = preset(name)
    result = props.check_positivity_reverse(coeffs, grid_1d, report_for(coeffs), dt=0.05)
    assert result.passed, result.note
    assert result.measured >= 1.0


@pytest.mark.parametrize('name', [name for name in preset_names() if get_preset(name).d == 1])
def test_positivity_directions_match_compliance(preset, report_for, grid_1d, name):
    coeffs = preset(name)
    report = report_for(coeffs)
    compliant = positivity_compliant(coeffs)
    forward = props.check_positivity_forward(coeffs, grid_1d, report, trials=200, dt=0.01, steps=100)
    reverse = props.check_positivity_reverse(coeffs, grid_1d, report, dt=0.01)
    assert forward.passed == compliant, forward.note
    assert reverse.passed == (not compliant), reverse.note


def test_reverse_candidates_have_unit_norm(preset, grid_1d):
    coeffs = preset('coupling-positive-v12')
    for label, values in props._reverse_form_candidates(coeffs, grid_1d):
        assert grid_1d.cell_volume * np.sum(values ** 2) == pytest.approx(1.0), label


def test_kato_inequality(compliant, grid_1d):
    coeffs, _ = compliant
    result = props.check_kato_inequality(coeffs, grid_1d, polar_field(2))
    assert result.passed, result.note
    assert 'K=' in result.note and 'calibrated on n=(31,)' in result.note


def test_kato_inequality_in_two_dimensions(trig, grid_2d):
    result = props.check_kato_inequality(trig, grid_2d, polar_field(2))
    assert result.passed, result.note


def test_sector(trig, trig_report, grid_2d):
    result = props.check_sector(trig, grid_2d, trig_report.omega, n_trials=50, eig_omega=trig_report.omega_h)
    assert result.passed, result.note
    assert 0 <= result.measured < np.pi / 2
    assert 'max Re eig' in result.note


def test_sector_skips_eigenvalues_on_large_grids(compliant, grid_1d):
    coeffs, report = compliant
    result = props.check_sector(coeffs, grid_1d, report.omega, n_trials=20, limit=10)
    assert 'skipped' in result.note


def test_sector_angle_of_nonsymmetric_potential_stays_within_M(preset, report_for, grid_1d):
    coeffs = preset('nonsymmetric-sectorial')
    report = report_for(coeffs)
    result = props.check_sector(coeffs, grid_1d, report.omega, n_trials=200)
    assert result.passed, result.note
    assert np.tan(result.measured) <= report.M + 1e-3


def test_sector_angle_of_symmetric_operator_is_zero(preset, grid_1d):
    result = props.check_sector(preset('identity'), grid_1d, 0.0, n_trials=200)
    assert result.passed, result.note
    assert result.measured <= 1e-12


def test_sector_tangent_is_scale_invariant(compliant, grid_1d, rng):
    coeffs, report = compliant
    evaluator = FormEvaluator(coeffs, grid_1d)
    values = props.random_functions(grid_1d, coeffs.m, 20, rng, complex_valued=True)
    tangent = props.sector_tangent(evaluator, values, report.omega)
    assert props.sector_tangent(evaluator, 3.0 * values, report.omega) == pytest.approx(tangent, rel=1e-12)


def test_spectrum_dominance_in_one_dimension(preset):
    coeffs = preset('identity')
    grid = Grid.from_box(coeffs.box, 48)
    result = props.spectrum_study(coeffs, with_confinement(coeffs), grid)
    assert result.passed, result.note
    assert len(result.witness['bounded']) == 20
    assert np.all(np.diff(result.witness['confining']) >= 0)


def test_spectrum_of_identical_sets_passes(preset):
    coeffs = preset('coupling-negative')
    result = props.spectrum_study(coeffs, coeffs, Grid.from_box(coeffs.box, 24))
    assert result.passed and result.measured == 0.0


def test_spectrum_in_two_dimensions_reports_slope_only(preset):
    coeffs = preset('identity', d=2)
    grid = Grid.from_box(coeffs.box, 10)
    result = props.spectrum_study(coeffs, with_confinement(coeffs), grid)
    assert result.passed, result.note
    assert 'gap slope' in result.note
    assert 'gap trend not required for d=2' in result.note


def test_lowest_eigenvalues_limit(compliant, grid_1d):
    coeffs, _ = compliant
    with pytest.raises(SizeExceededError):
        props.lowest_eigenvalues(assemble_L(coeffs, grid_1d), limit=10)


def test_resolvent_checks(compliant, grid_1d):
    coeffs, report = compliant
    identity, bound = props.check_resolvent(assemble_L(coeffs, grid_1d), report.omega_h)
    assert identity.name == 'resolvent-identity' and identity.passed
    assert bound.name == 'resolvent-bound' and bound.passed


def test_resolvent_smoothness(preset):
    coeffs = preset('identity')
    result = props.check_resolvent_smoothness(coeffs, Grid.from_box(coeffs.box, 31), 0.0)
    assert result.passed, result.note


def test_adjoint_duality_exact_for_constant_coefficients(preset, grid_1d):
    result = props.check_adjoint_duality(preset('nonsymmetric-sectorial'), grid_1d)
    assert result.passed and result.note == 'exact transpose equality'


def test_adjoint_duality_order_for_variable_drift(preset, grid_1d):
    result = props.check_adjoint_duality(preset('drift-coupled'), grid_1d)
    assert result.passed, result.note
    assert 'order' in result.note


def test_reduction_identity(preset, report_for, grid_1d):
    coeffs = preset('c-transport')
    result = props.check_reduction_identity(coeffs, grid_1d, report_for(coeffs).gamma)
    assert result.passed, result.measured


def test_hypothesis_checks(preset, report_for):
    coeffs = preset('c-transport')
    results = props.hypothesis_checks(coeffs, report_for(coeffs), lemma_trials=2000, sector_points=200)
    names = [r.name for r in results]
    assert names[:3] == ['generalized-cauchy-schwarz', 'divergence-consistency', 'reduced-sectoriality']
    assert 'hypothesis[H1]' in names
    assert all(r.passed for r in results)


def test_hypothesis_checks_skip_reduction_without_transport(compliant):
    coeffs, report = compliant
    names = [r.name for r in props.hypothesis_checks(coeffs, report, lemma_trials=2000, sector_points=200)]
    assert 'reduced-sectoriality' not in names
