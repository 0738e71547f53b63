"""
Check records and the report that aggregates them.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass
class CheckResult:
    """
    Outcome of one measurable property.

    Args:
        name: Check identifier, used as the CSV key
        measured: The observed quantity
        bound: Theoretical bound the quantity is compared against
        tolerance: Absolute slack added to (or subtracted from) the bound
        passed: Verdict; measured <= bound + tolerance, or >= bound - tolerance when lower is set
        lower: True for lower-bound checks
        witness: Offending sample or grid function, kept only on failure
        note: Free text for the summary
        expected_failure: The check is a necessity demonstration and is supposed to fail
    """
    name: str
    measured: float
    bound: float
    tolerance: float
    passed: bool
    lower: bool = False
    witness: Optional[Any] = None
    note: str = ''
    expected_failure: bool = False

    @classmethod
    def compare(cls, name: str, measured: float, bound: float, tolerance: float, lower: bool = False,
                **kwargs) -> 'CheckResult':
        measured, bound = float(measured), float(bound)
        if lower:
            passed = measured >= bound - tolerance
        else:
            passed = measured <= bound + tolerance
        return cls(name, measured, bound, float(tolerance), bool(passed), lower, **kwargs)

    @property
    def ok(self) -> bool:
        """True when the verdict matches what the scenario expects."""
        return self.passed != self.expected_failure

    @property
    def verdict(self) -> str:
        if self.expected_failure:
            return 'expected-fail' if not self.passed else 'unexpected-pass'
        return 'pass' if self.passed else 'fail'


@dataclass
class PropertyReport:
    scenario: str
    preset: str
    seed: int
    hypotheses: Optional[Any] = None
    checks: List[CheckResult] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def add(self, result: CheckResult) -> CheckResult:
        self.checks.append(result)
        return result

    def extend(self, results) -> None:
        self.checks.extend(results)

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.ok]

    def find(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

