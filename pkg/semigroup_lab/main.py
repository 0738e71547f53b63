"""
Scenario runner.

    python -m semigroup_lab.main --config scenario.cfg --scenario all --seed 42 --out out -v

A scenario file holds `key = value` lines with `#` comments; every key is
optional and defaults come from config/defaults.json. Exit codes: 0 when
every check matches its expectation, 1 when some check does not, 2 on a
configuration or solver error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, ValidationError, field_validator, \
    model_validator

from .core.assembly import assemble_L
from .core.coeffs import CoefficientSet, HypothesisReport, hypothesis_report, sample_points
from .core.errors import ConfigError, LabError, ParseError, UnknownKeyError, UnknownPresetError
from .core.evolve import EvolutionConfig, Scheme, convergence_order, evolve, semigroup_law_check
from .core.grid import Grid, GridFunction
from .core.presets import get_preset, named_function, preset_names, with_confinement
from .core import props
from .core.results import CheckResult, PropertyReport
from .utils.export import matrix_triplets, snapshot_text, write_report
from .utils.resources import ResourceMeter

logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).parent / 'config' / 'defaults.json'

SCENARIOS = ('hypotheses', 'generation', 'contractivity', 'positivity', 'adjoint', 'spectrum', 'kato',
             'convergence', 'all')


def read_defaults(path=DEFAULTS_PATH) -> Dict[str, Dict]:
    """
    Read the JSON defaults table.

    Returns:
        dict with the sections scenario, sampling, trials, limits, tolerances
    """
    return json.loads(Path(path).read_text(encoding='utf-8'))


DEFAULTS = read_defaults()


class Sampling(BaseModel):
    samples: PositiveInt
    tensor_axis: PositiveInt
    xi_samples: PositiveInt
    sector_points: PositiveInt


class Trials(BaseModel):
    trials: PositiveInt
    evolution_trials: PositiveInt
    lemma_trials: PositiveInt


class Limits(BaseModel):
    dense_limit: PositiveInt
    eig_limit: PositiveInt


class Tolerances(BaseModel):
    accretivity: float
    l2_contractivity: float
    linf_contractivity: float
    ouhabaz: float
    positivity_form: float
    positivity_dynamic: float
    reverse_form: float
    reverse_dynamic: float
    sector_margin: float
    kato_safety: float
    divergence_defect: float


class LabSettings(BaseModel):
    sampling: Sampling
    trials: Trials
    limits: Limits
    tolerances: Tolerances

    @classmethod
    def from_defaults(cls, data: Optional[Dict] = None) -> 'LabSettings':
        data = DEFAULTS if data is None else data
        return cls(**{key: data[key] for key in ('sampling', 'trials', 'limits', 'tolerances')})


_SCENARIO = DEFAULTS['scenario']


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    scenario: str = _SCENARIO['scenario']
    preset: str = _SCENARIO['preset']
    d: Optional[int] = None
    box: Optional[Tuple[Tuple[float, float], ...]] = None
    n: Tuple[int, ...] = (_SCENARIO['n'],)
    scheme: Scheme = Scheme(_SCENARIO['scheme'])
    dt: PositiveFloat = _SCENARIO['dt']
    T: PositiveFloat = _SCENARIO['T']
    seed: int = _SCENARIO['seed']
    out: str = _SCENARIO['out']
    trials: PositiveInt = DEFAULTS['trials']['trials']
    samples: PositiveInt = DEFAULTS['sampling']['samples']

    @field_validator('scenario')
    @classmethod
    def _known_scenario(cls, value: str) -> str:
        if value not in SCENARIOS:
            raise ValueError(f"unknown scenario '{value}'; known: {', '.join(SCENARIOS)}")
        return value

    @field_validator('preset')
    @classmethod
    def _known_preset(cls, value: str) -> str:
        if value not in preset_names():
            raise ValueError(f"unknown preset '{value}'")
        return value

    @field_validator('n', mode='before')
    @classmethod
    def _node_counts(cls, value):
        if isinstance(value, (int, np.integer)):
            value = (int(value),)
        if any(int(k) < 3 for k in value):
            raise ValueError('every axis needs n >= 3')
        return tuple(value)

    @field_validator('d')
    @classmethod
    def _dimension(cls, value):
        if value is not None and value not in (1, 2):
            raise ValueError('d must be 1 or 2')
        return value

    @model_validator(mode='after')
    def _consistent(self) -> 'ScenarioConfig':
        if self.dt > self.T:
            raise ValueError(f'dt={self.dt} exceeds T={self.T}')
        if self.box is not None:
            if any(not b > a for a, b in self.box):
                raise ValueError('every box axis needs a < b')
            if self.d is not None and len(self.box) != self.d:
                raise ValueError(f'box has {len(self.box)} axes but d={self.d}')
        if self.d is not None and len(self.n) not in (1, self.d):
            raise ValueError(f'n has {len(self.n)} entries but d={self.d}')
        return self

    def build(self) -> Tuple[CoefficientSet, Grid]:
        coeffs = get_preset(self.preset, d=self.d, box=self.box)
        n = self.n * coeffs.d if len(self.n) == 1 else self.n
        if len(n) != coeffs.d:
            raise ParseError(f'n has {len(self.n)} entries but the preset has d={coeffs.d}')
        grid = Grid.from_box(coeffs.box, n)
        logger.info('grid n=%s h=%s N=%d', grid.n, grid.spacing, grid.unknowns(coeffs.m))
        return coeffs, grid


def _parse_value(key: str, raw: str):
    if key == 'box':
        axes = [axis for axis in raw.split(';') if axis.strip()]
        return tuple(tuple(float(v) for v in axis.split(',')) for axis in axes)
    if key == 'n':
        return tuple(int(v) for v in raw.split(','))
    return raw


def parse_config(text: str) -> ScenarioConfig:
    """
    Parse line-oriented `key = value` text into a validated ScenarioConfig.

    Raises:
        ParseError: malformed line, duplicate key or invalid value (with its line number)
        UnknownKeyError: key outside the accepted set
        UnknownPresetError: preset is not registered
    """
    values, lines = {}, {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ParseError(f"expected 'key = value', got '{line}'", number)
        key, raw = (part.strip() for part in line.split('=', 1))
        if key not in ScenarioConfig.model_fields:
            raise UnknownKeyError(f"unknown key '{key}'", number)
        if key in values:
            raise ParseError(f"duplicate key '{key}'", number)
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ParseError(f'{key}: {exc}', number) from None
        lines[key] = number
    if 'preset' in values and values['preset'] not in preset_names():
        raise UnknownPresetError(f"line {lines['preset']}: unknown preset '{values['preset']}'; "
                                 f"known: {', '.join(preset_names())}")
    try:
        return ScenarioConfig(**values)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = error['loc'][0] if error['loc'] else None
        raise ParseError(f"{key or 'config'}: {error['msg']}", lines.get(key)) from None


def read_config(path) -> ScenarioConfig:
    """
    Read and parse a scenario file.

    Raises:
        ConfigError: the file is not UTF-8 text, or any error of parse_config
    """
    try:
        text = Path(path).read_text(encoding='utf-8')
    except UnicodeDecodeError as exc:
        raise ConfigError(f'{path}: not UTF-8 text ({exc.reason} at byte {exc.start})') from None
    return parse_config(text)


# Scenarios

def _oracle_grid(grid: Grid, m: int, limit: int) -> Grid:
    """Coarsen (nested) until the unknown count fits the dense limit."""
    while grid.unknowns(m) > limit and any(k > 3 for k in grid.n):
        grid = grid.with_n([max(3, (k - 1) // 2) for k in grid.n])
    return grid


def _gaussian(grid: Grid, m: int) -> GridFunction:
    """exp(-|x - c|^2 / w^2) in every component, w an eighth of the box."""
    points = grid.points()
    center = np.array([0.5 * (a + b) for a, b in grid.box])
    width = min(b - a for a, b in grid.box) / 8.0
    values = np.exp(-np.sum((points - center) ** 2, axis=1) / width ** 2)
    return GridFunction(grid, np.repeat(values[:, None], m, axis=1))


def positivity_compliant(coeffs: CoefficientSet, samples: int = 2000, seed: int = 0) -> bool:
    """F off-diagonal zero, v_ij <= 0 for i != j and C zero on the sample."""
    points = sample_points(coeffs.box, samples, seed)
    off = ~np.eye(coeffs.m, dtype=bool)
    F, V = coeffs.F(points), coeffs.V(points)
    return bool(not np.any(F[:, off]) and np.all(V[:, off] <= 0) and coeffs.C.is_zero(points))


class ScenarioRunner:
    """Runs the checks of one scenario against one preset and collects a PropertyReport."""

    def __init__(self, config: ScenarioConfig, settings: Optional[LabSettings] = None):
        self.config = config
        self.settings = settings or LabSettings.from_defaults()
        self.coeffs, self.grid = config.build()
        self.report = PropertyReport(config.scenario, config.preset, config.seed)
        self.hyp: Optional[HypothesisReport] = None
        self.artefacts: Dict[str, str] = {}
        self.usage = None

    @property
    def tol(self) -> 'Tolerances':
        return self.settings.tolerances

    def oracle_grid(self, limit: Optional[int] = None) -> Grid:
        limit = limit or self.settings.limits.eig_limit
        grid = _oracle_grid(self.grid, self.coeffs.m, limit)
        if grid != self.grid:
            self.report.metadata.setdefault('oracle grid', str(grid.n))
        return grid

    def hypotheses(self):
        s = self.settings.sampling
        self.report.extend(props.hypothesis_checks(
            self.coeffs, self.hyp, self.config.seed, self.settings.trials.lemma_trials,
            self.tol.divergence_defect, s.sector_points))

    def generation(self):
        c, hyp, seed, trials = self.coeffs, self.hyp, self.config.seed, self.config.trials
        self.report.add(props.check_accretivity(c, self.grid, hyp.omega, trials, seed, self.tol.accretivity))
        strong = get_preset('strong-drift')
        self.report.add(props.check_accretivity(strong, Grid.from_box(strong.box, 64), 0.0, 100, seed,
                                                self.tol.accretivity, expected_failure=True))
        self.report.extend(props.check_form_continuity(c, self.grid, hyp, trials, seed))
        self.report.add(props.check_L2_quasicontractivity(
            c, self.grid, hyp.omega, self.settings.trials.evolution_trials, seed, self.config.dt,
            tol=self.tol.l2_contractivity, omega_h=hyp.omega_h))
        self.report.add(props.check_sector(c, self.oracle_grid(), hyp.omega, trials, seed, self.tol.sector_margin,
                                           eig_omega=hyp.omega_h, limit=self.settings.limits.eig_limit))
        self.report.extend(props.check_resolvent(assemble_L(c, self.grid), hyp.omega_h, seed))

    def contractivity(self):
        c, hyp, seed = self.coeffs, self.hyp, self.config.seed
        self.report.add(props.check_ouhabaz_linf_functional(c, self.grid, hyp.omega_tilde, self.config.trials,
                                                            seed, self.tol.ouhabaz))
        heavy = get_preset('div-heavy')
        self.report.add(props.check_ouhabaz_linf_functional(heavy, Grid.from_box(heavy.box, 64), 0.0, 100, seed,
                                                            self.tol.ouhabaz, expected_failure=True))
        self.report.extend(props.check_Linf_quasicontractivity(
            c, self.grid, hyp, self.settings.trials.evolution_trials, seed, self.config.dt,
            tol=self.tol.linf_contractivity))

    def positivity(self):
        c, hyp, seed = self.coeffs, self.hyp, self.config.seed
        reverse = dict(seed=seed, dt=self.config.dt, form_tol=self.tol.reverse_form,
                       dynamic_tol=self.tol.reverse_dynamic)
        if positivity_compliant(c, self.settings.sampling.sector_points, seed):
            self.report.add(props.check_positivity_forward(
                c, self.grid, hyp, self.config.trials, seed, self.config.dt,
                form_tol=self.tol.positivity_form, dynamic_tol=self.tol.positivity_dynamic))
            self.report.add(props.check_positivity_reverse(c, self.grid, hyp, expected_failure=True, **reverse))
        else:
            self.report.add(props.check_positivity_reverse(c, self.grid, hyp, **reverse))

    def adjoint(self):
        self.report.add(props.check_adjoint_duality(self.coeffs, self.grid))
        try:
            self.report.add(props.check_reduction_identity(self.coeffs, self.grid, self.hyp.gamma))
        except LabError as exc:
            self.report.add(CheckResult('reduction-identity', float('inf'), 0.0, 0.0, False, note=str(exc)))
        self.artefacts['operator.triplets'] = matrix_triplets(assemble_L(self.coeffs, self.grid).matrix)

    def spectrum(self):
        grid = self.oracle_grid()
        self.report.add(props.spectrum_study(self.coeffs, with_confinement(self.coeffs), grid,
                                             limit=self.settings.limits.eig_limit))

    def kato(self):
        name = 'polar' if self.coeffs.m >= 2 else 'positive'
        self.report.add(props.check_kato_inequality(self.coeffs, self.grid, named_function(name, self.coeffs),
                                                    safety=self.tol.kato_safety))

    def convergence(self):
        c, cfg = self.coeffs, self.config
        dense_limit = self.settings.limits.dense_limit
        grid = self.oracle_grid(dense_limit)
        L = assemble_L(c, grid)
        f0 = _gaussian(grid, c.m)
        for scheme, order, slack in ((Scheme.IMPLICIT_EULER, 1.0, 0.2), (Scheme.CRANK_NICOLSON, 2.0, 0.3)):
            study = convergence_order(f0, cfg.T, L, scheme, limit=dense_limit)
            name = f'convergence[{scheme.value}]'
            if study.exact:
                self.report.add(CheckResult(name, 0.0, 0.0, slack, True, note='exact'))
            else:
                self.report.add(CheckResult.compare(name, abs(study.order - order), 0.0, slack,
                                                    note=f'order {study.order:.3f}'))
        dense = EvolutionConfig(Scheme.DENSE_EXPONENTIAL, cfg.dt, cfg.T, dense_limit=dense_limit)
        self.report.add(semigroup_law_check(f0, 0.3, 0.2, dense, L))
        stepping = EvolutionConfig(cfg.scheme, cfg.dt, cfg.T, dense_limit=dense_limit)
        if cfg.scheme.stepping:
            n = stepping.steps(cfg.T)
            self.report.add(semigroup_law_check(f0, (n // 2) * cfg.dt, (n - n // 2) * cfg.dt, stepping, L))
        result = evolve(f0, stepping, L, times=[cfg.T])
        self.artefacts['snapshots/final.csv'] = snapshot_text(result.snapshots[-1], cfg.T, cfg.scheme.value, cfg.dt)
        self.report.metadata['evolution'] = f'{result.scheme.value}, {len(result.step_times)} samples'
        self.report.add(props.check_resolvent_smoothness(c, self.grid, self.hyp.omega_h))

    def run(self) -> PropertyReport:
        with ResourceMeter() as meter:
            s = self.settings.sampling
            self.hyp = hypothesis_report(self.coeffs, self.config.samples, self.config.seed, s.xi_samples,
                                         s.sector_points, s.tensor_axis, self.tol.divergence_defect)
            self.report.hypotheses = self.hyp
            self.report.metadata['grid'] = f'n={self.grid.n}, N={self.grid.unknowns(self.coeffs.m)}'
            steps: Dict[str, Callable[[], None]] = {
                'hypotheses': self.hypotheses, 'generation': self.generation,
                'contractivity': self.contractivity, 'positivity': self.positivity, 'adjoint': self.adjoint,
                'spectrum': self.spectrum, 'kato': self.kato, 'convergence': self.convergence,
            }
            wanted: List[str] = list(steps) if self.config.scenario == 'all' else [self.config.scenario]
            if 'hypotheses' not in wanted:
                wanted.insert(0, 'hypotheses')
            if not self.hyp.passed:
                logger.warning('hypotheses not verified for %s; only the hypothesis checks run', self.config.preset)
                wanted = ['hypotheses']
            for name in wanted:
                logger.info('scenario step %s', name)
                steps[name]()
        self.usage = meter.usage
        return self.report


def run(config: ScenarioConfig, settings: Optional[LabSettings] = None) -> int:
    """Execute the scenario and write its artefacts; returns the exit code 0, 1 or 2."""
    try:
        runner = ScenarioRunner(config, settings)
        report = runner.run()
        write_report(config.out, report, runner.usage.describe(), runner.artefacts)
    except (LabError, ValidationError, ValueError, OSError) as exc:
        logger.error('run failed: %s', exc)
        print(f'error: {exc}', file=sys.stderr)
        return 2
    for check in report.failures:
        logger.warning('%s: %s (measured %.6g, bound %.6g)', check.name, check.verdict, check.measured, check.bound)
    return 0 if report.ok else 1


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description='Property checks for discretized elliptic systems.')
    parser.add_argument('--config', help='scenario file with key = value lines')
    parser.add_argument('--scenario', choices=SCENARIOS, help='overrides the scenario of the file')
    parser.add_argument('--seed', type=int, help='overrides the seed of the file')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('-v', '--verbose', action='store_true', help='log at INFO level')
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    try:
        config = read_config(args.config) if args.config else parse_config('')
        overrides = {key: value for key, value in
                     (('scenario', args.scenario), ('seed', args.seed), ('out', args.out)) if value is not None}
        if overrides:
            config = ScenarioConfig(**{**config.model_dump(), **overrides})
    except (LabError, ValidationError, OSError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return 2
    return run(config)


if __name__ == '__main__':
    sys.exit(main())
