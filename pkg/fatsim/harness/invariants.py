# fatsim/harness/invariants.py
"""
Post-run checks on a RunHistory.

Each check returns (ok, problems). verify_history runs them all and returns a
verdict dict; check_history raises InvariantViolation on a failed verdict.
"""

import math
from typing import Any, Callable, Dict, List, Tuple

from loguru import logger

from fatsim.errors import InvariantViolation
from fatsim.federation import WEIGHT_TOLERANCE, AggregationMode, Phase, RunHistory, phase_of
from fatsim.model import ArchDescriptor

CheckResult = Tuple[bool, List[str]]


def _result(problems: List[str]) -> CheckResult:
    return (len(problems) == 0, problems)


# -------------------------
# Individual checks
# -------------------------
def monotone_rounds(history: RunHistory) -> CheckResult:
    rounds = [r.round for r in history.records]
    problems = [f"round {b} follows round {a}" for a, b in zip(rounds, rounds[1:]) if b <= a]
    return _result(problems)


def one_record_per_eval_round(history: RunHistory) -> CheckResult:
    cfg = history.config
    expected = [t for t in range(cfg.total_rounds) if cfg.is_eval_round(t)]
    found = [r.round for r in history.records]
    return _result([] if found == expected else [f"evaluation rounds {found}, expected {expected}"])


def finite_values(history: RunHistory) -> CheckResult:
    problems = [f"round {t}: train loss {v}" for t, v in enumerate(history.train_loss) if not math.isfinite(v)]
    for r in history.records:
        if not all(math.isfinite(d) for d in r.dice):
            problems.append(f"round {r.round}: dice {r.dice}")
    return _result(problems)


def weights_normalized(history: RunHistory) -> CheckResult:
    problems = []
    for plan in history.plans:
        total = math.fsum(plan.weights)
        if abs(total - 1.0) > WEIGHT_TOLERANCE or any(w <= 0 for w in plan.weights):
            problems.append(f"round {plan.round}: weights {plan.weights} sum to {total!r}")
    return _result(problems)


def homogeneous_phases(history: RunHistory) -> CheckResult:
    """FAT rounds aggregate only supervised or only unsupervised silos."""
    cfg = history.config
    if cfg.aggregation_mode is not AggregationMode.FAT:
        return _result([])
    problems = []
    for plan in history.plans:
        flags = {p in cfg.supervised_ids for p in plan.participants}
        expected = {plan.phase is Phase.SUPERVISED}
        if flags != expected:
            problems.append(f"round {plan.round} [{plan.phase.value}] mixes participants {plan.participants}")
    return _result(problems)


def schedule_matches(history: RunHistory) -> CheckResult:
    cfg = history.config
    if cfg.aggregation_mode is not AggregationMode.FAT:
        return _result([])
    a = cfg.alternation_period
    problems = [
        f"round {p.round}: phase {p.phase.value}, schedule says {phase_of(p.round, a).value}"
        for p in history.plans
        if p.phase is not phase_of(p.round, a)
    ]
    problems += [
        f"csv row {r.round}: phase {r.phase}, schedule says {phase_of(r.round, a).value}"
        for r in history.records
        if r.phase != phase_of(r.round, a).value
    ]
    # any 2A consecutive rounds hold exactly A supervised ones
    sup = [p.phase is Phase.SUPERVISED for p in history.plans]
    for start in range(max(0, len(sup) - 2 * a + 1)):
        if sum(sup[start : start + 2 * a]) != a:
            problems.append(f"rounds {start}..{start + 2 * a - 1} do not hold exactly {a} supervised rounds")
    return _result(problems)


def descriptor_unchanged(history: RunHistory, desc: ArchDescriptor) -> CheckResult:
    final = history.final_params
    if final is None:
        return _result(["run produced no final model"])
    return _result([] if final.desc == desc else [f"final descriptor {final.desc} != initial {desc}"])


# -------------------------
# Verdict
# -------------------------
CHECKS: Dict[str, Callable[[RunHistory], CheckResult]] = {
    "monotone_rounds": monotone_rounds,
    "one_record_per_eval_round": one_record_per_eval_round,
    "finite_values": finite_values,
    "weights_normalized": weights_normalized,
    "homogeneous_phases": homogeneous_phases,
    "schedule_matches": schedule_matches,
}


def verify_history(history: RunHistory, desc: ArchDescriptor) -> Dict[str, Any]:
    """
    Returns { "verified": bool, "failed": [check names], "details": {name: problems} }.
    """
    details: Dict[str, List[str]] = {}
    for name, check in CHECKS.items():
        ok, problems = check(history)
        if not ok:
            details[name] = problems
    ok, problems = descriptor_unchanged(history, desc)
    if not ok:
        details["descriptor_unchanged"] = problems
    for name, problems in details.items():
        logger.warning("invariant {} failed: {}", name, problems[:3])
    return {"verified": not details, "failed": sorted(details), "details": details}


def check_history(history: RunHistory, desc: ArchDescriptor) -> Dict[str, Any]:
    verdict = verify_history(history, desc)
    if not verdict["verified"]:
        raise InvariantViolation(f"run failed invariant checks: {', '.join(verdict['failed'])}")
    return verdict
