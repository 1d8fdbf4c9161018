"""Diagnostic report values: named estimates with uncertainty and verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class DiagnosticReport:
    """One named scalar estimate with Monte-Carlo error and a verdict.

    ``bound_or_tolerance`` is the threshold the estimate was judged
    against (may be +inf for purely informational reports). Metadata keys
    carry run parameters (dt, n_paths, seeds, sweeps, ...).
    """

    name: str
    estimate: float
    stderr: float
    bound_or_tolerance: float
    verdict: str
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "bound": self.bound_or_tolerance,
            "verdict": self.verdict,
            "metadata": _jsonable(self.metadata),
        }


def leq_verdict(estimate: float, stderr: float, bound: float) -> str:
    """Verdict for a noisy 'estimate <= bound' comparison.

    INCONCLUSIVE when the 3-sigma band straddles the threshold, otherwise
    a clean PASS/FAIL by point comparison.
    """
    if abs(estimate - bound) <= 3.0 * stderr:
        return INCONCLUSIVE
    return PASS if estimate <= bound else FAIL


def within_verdict(estimate: float, target: float, half_width: float) -> str:
    """Verdict for a two-sided '|estimate - target| <= half_width' check."""
    return PASS if abs(estimate - target) <= half_width else FAIL


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return value.item()
    if hasattr(value, "tolist"):  # numpy array
        return value.tolist()
    return value


def reports_to_json(reports: list[DiagnosticReport]) -> str:
    """Deterministic JSON rendering (sorted keys, no timestamps)."""
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)


def write_report_json(reports: list[DiagnosticReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(reports_to_json(reports))
        fh.write("\n")


def format_summary_table(reports: list[DiagnosticReport]) -> str:
    """Human-readable fixed-width table, one line per report."""
    lines = [f"{'name':<34} {'estimate':>14} {'stderr':>12} {'bound':>14} verdict"]
    for r in reports:
        lines.append(
            f"{r.name:<34} {r.estimate:>14.6g} {r.stderr:>12.3g} "
            f"{r.bound_or_tolerance:>14.6g} {r.verdict}"
        )
    return "\n".join(lines)
