"""
Check records and the comparison report
"""

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, List, Optional

from simulation.estimates import Estimate

CSV_COLUMNS = ('name', 'predicted', 'estimated', 'se', 'tolerance_rule', 'passed', 'seed', 'params')


@dataclass
class CheckRecord:
    name: str
    predicted: Optional[float]
    estimated: float
    se: float
    tolerance_rule: str
    passed: bool
    seed: Optional[int] = None
    params: Dict[str, Any] = dataclass_field(default_factory=dict)

    @classmethod
    def within_se(cls, name: str, predicted: float, estimate: Estimate, k: float = 3.0,
                  **params) -> 'CheckRecord':
        """Pass when |estimate - predicted| <= k SE"""
        return cls(name=name, predicted=float(predicted), estimated=estimate.value, se=estimate.se,
                   tolerance_rule=f'|estimated - predicted| <= {k:g} SE',
                   passed=bool(estimate.within(predicted, k)), seed=estimate.seed,
                   params=dict(estimate.params, **params))

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'predicted': self.predicted, 'estimated': self.estimated,
                'se': self.se, 'tolerance_rule': self.tolerance_rule, 'passed': self.passed,
                'seed': self.seed, 'params': self.params}


@dataclass
class ComparisonReport:
    records: List[CheckRecord] = dataclass_field(default_factory=list)
    sections: Dict[str, Any] = dataclass_field(default_factory=dict)
    provenance: Dict[str, Any] = dataclass_field(default_factory=dict)

    def add(self, record: CheckRecord):
        self.records.append(record)

    def extend(self, records: List[CheckRecord]):
        self.records.extend(records)

    def merge(self, other: 'ComparisonReport'):
        self.records.extend(other.records)
        self.sections.update(other.sections)

    @property
    def verdict(self) -> bool:
        """AND of all checks; an empty report does not pass"""
        return bool(self.records) and all(r.passed for r in self.records)

    def failed(self) -> List[CheckRecord]:
        return [r for r in self.records if not r.passed]

    def rows(self) -> List[List[Any]]:
        rows = []
        for r in self.records:
            rows.append([r.name, _cell(r.predicted), _cell(r.estimated), _cell(r.se),
                         r.tolerance_rule, r.passed, r.seed, _params(r.params)])
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {'verdict': 'pass' if self.verdict else 'fail',
                'checks': [r.to_dict() for r in self.records],
                'failed': [r.name for r in self.failed()],
                'sections': self.sections,
                'provenance': self.provenance}


def _cell(value: Optional[float]) -> str:
    if value is None:
        return ''
    if isinstance(value, float) and math.isnan(value):
        return 'nan'
    return repr(float(value))


def _params(params: Dict[str, Any]) -> str:
    return ';'.join(f'{k}={v}' for k, v in sorted(params.items()) if not isinstance(v, (list, dict)))
