# fatsim/federation/server.py
"""
The server loop.

Every mode shares one driver (`_federate`): per round it asks the mode for a
plan, dispatches the current global model to the participating silos, waits
for all of them (the aggregation barrier), aggregates, and evaluates on the
test set when the round is an evaluation round.

Silo jobs may run on a thread pool (`jobs` > 1). Contributions are sorted by
silo id before aggregation and every silo draws from its own
(seed, silo id, round) stream, so the result is the same for any worker count.
"""

import contextvars
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from fatsim import rng
from fatsim.errors import ConfigurationError
from fatsim.federation.aggregate import weighted_average
from fatsim.federation.config import BASELINE_MODES, AggregationMode, FederationConfig
from fatsim.federation.history import MetricsRecord, RunHistory
from fatsim.federation.schedule import Phase, RoundPlan, gaussian_rampup, normalized_weights, phase_of, ramp_weights
from fatsim.losses import LabelMap, per_class_dice
from fatsim.model import ModelParams, predict_labels
from fatsim.silo import LocalUpdate, SiloDataset, fit_selftrain, fit_supervised, fit_unsupervised, pool_silos

SiloJob = Callable[[], LocalUpdate]


@dataclass(frozen=True)
class RoundOutcome:
    plan: RoundPlan
    params: ModelParams
    mean_loss: float
    n_aggregated: int


# ----------------------------------------------------------
# Evaluation
# ----------------------------------------------------------
def evaluate(params: ModelParams, test_set: SiloDataset) -> List[float]:
    """Per-class Dice of argmax predictions, pooled over every test pixel."""
    truth = test_set.truth
    if truth is None:
        raise ConfigurationError(f"test silo {test_set.silo_id} has no labels")
    pred = LabelMap(predict_labels(params, test_set.images), params.desc.n_classes)
    return per_class_dice(pred, truth)


# ----------------------------------------------------------
# Silo jobs
# ----------------------------------------------------------
def _run_jobs(jobs: Dict[int, SiloJob], workers: int) -> List[LocalUpdate]:
    """Run one job per silo and return the updates sorted by silo id."""
    if workers <= 1 or len(jobs) <= 1:
        updates = [job() for job in jobs.values()]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            # each job runs in a copy of the caller's context (compute precision)
            futures = [pool.submit(contextvars.copy_context().run, job) for job in jobs.values()]
            updates = [f.result() for f in futures]
    return sorted(updates, key=lambda u: u.silo_id)


def _aggregate_round(t: int, phase: Phase, updates: Sequence[LocalUpdate], weights: Sequence[float]) -> RoundOutcome:
    plan = RoundPlan(t, phase, tuple(u.silo_id for u in updates), tuple(weights))
    params = weighted_average([u.params for u in updates], weights)
    mean_loss = float(np.mean([u.mean_loss for u in updates]))
    return RoundOutcome(plan, params, mean_loss, len(updates))


def _fedavg_round(t: int, phase: Phase, updates: Sequence[LocalUpdate]) -> RoundOutcome:
    return _aggregate_round(t, phase, updates, normalized_weights([float(u.n_samples) for u in updates]))


def _supervised_jobs(silos: Sequence[SiloDataset], theta: ModelParams, cfg: FederationConfig, t: int) -> Dict[int, SiloJob]:
    return {s.silo_id: (lambda s=s: fit_supervised(s, theta, cfg.local, t)) for s in silos}


def _unsupervised_jobs(silos: Sequence[SiloDataset], theta: ModelParams, cfg: FederationConfig, t: int) -> Dict[int, SiloJob]:
    return {s.silo_id: (lambda s=s: fit_unsupervised(s, theta, cfg.local, t)) for s in silos}


def _selftrain_jobs(silos: Sequence[SiloDataset], theta: ModelParams, cfg: FederationConfig, t: int) -> Dict[int, SiloJob]:
    return {s.silo_id: (lambda s=s: fit_selftrain(s, theta, cfg.local, None, t)) for s in silos}


# ----------------------------------------------------------
# Startup checks
# ----------------------------------------------------------
def _split_silos(cfg: FederationConfig, silos: Sequence[SiloDataset]) -> Tuple[List[SiloDataset], List[SiloDataset]]:
    ids = [s.silo_id for s in silos]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate silo ids: {ids}")
    if sorted(ids) != list(range(cfg.n_silos)):
        raise ConfigurationError(f"expected silos 0..{cfg.n_silos - 1}, got {sorted(ids)}")
    for s in silos:
        if s.supervised != (s.silo_id in cfg.supervised_ids):
            raise ConfigurationError(
                f"silo {s.silo_id} supervised={s.supervised} disagrees with supervised ids {cfg.supervised_ids}"
            )
    ordered = sorted(silos, key=lambda s: s.silo_id)
    return [s for s in ordered if s.supervised], [s for s in ordered if not s.supervised]


def _check_mode(cfg: FederationConfig, allowed: Sequence[AggregationMode], op: str) -> None:
    if cfg.aggregation_mode not in allowed:
        raise ConfigurationError(f"{op} cannot run mode {cfg.aggregation_mode.value}")


# ----------------------------------------------------------
# Driver
# ----------------------------------------------------------
RoundFn = Callable[[int, ModelParams], RoundOutcome]


def _federate(
    cfg: FederationConfig,
    theta0: ModelParams,
    test_set: SiloDataset,
    round_fn: RoundFn,
    progress: bool = False,
) -> RunHistory:
    history = RunHistory(cfg)
    theta = theta0
    mode = cfg.aggregation_mode.value
    logger.info("starting {} run: T={} A={} seed={}", mode, cfg.total_rounds, cfg.alternation_period, cfg.seed)

    for t in tqdm(range(cfg.total_rounds), desc=mode, disable=not progress):
        start = time.perf_counter()
        outcome = round_fn(t, theta)
        if outcome.params.desc != theta0.desc:
            raise ConfigurationError(f"round {t} changed the model descriptor")
        theta = outcome.params
        elapsed = (time.perf_counter() - start) * 1000.0

        history.plans.append(outcome.plan)
        history.aggregated.append(outcome.n_aggregated)
        history.wall_ms.append(elapsed)
        history.train_loss.append(outcome.mean_loss)
        logger.info(
            "round {} [{}] participants={} loss={:.4f}",
            t,
            outcome.plan.phase.value,
            list(outcome.plan.participants),
            outcome.mean_loss,
        )

        if cfg.is_eval_round(t):
            dice = evaluate(theta, test_set)
            history.records.append(
                MetricsRecord(t, outcome.plan.phase.value, mode, cfg.seed, tuple(dice), outcome.mean_loss, elapsed)
            )
            logger.info("round {} eval dice={}", t, [round(d, 4) for d in dice])

    history.final_params = theta
    return history


# ----------------------------------------------------------
# Public runs
# ----------------------------------------------------------
def run_fat(
    cfg: FederationConfig,
    silos: Sequence[SiloDataset],
    theta0: ModelParams,
    test_set: SiloDataset,
    progress: bool = False,
) -> RunHistory:
    """Alternate A supervised rounds with A unsupervised rounds, aggregating one group at a time."""
    _check_mode(cfg, (AggregationMode.FAT,), "run_fat")
    sup, unsup = _split_silos(cfg, silos)
    if not sup:
        raise ConfigurationError("FAT needs at least one supervised silo")
    if not unsup:
        raise ConfigurationError("FAT unsupervised rounds would have no participants; use FedAvgAll")

    def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
        phase = phase_of(t, cfg.alternation_period)
        if phase is Phase.SUPERVISED:
            updates = _run_jobs(_supervised_jobs(sup, theta, cfg, t), cfg.jobs)
        else:
            updates = _run_jobs(_unsupervised_jobs(unsup, theta, cfg, t), cfg.jobs)
        # group-normalized: N_S or N_U in the denominator
        return _fedavg_round(t, phase, updates)

    return _federate(cfg, theta0, test_set, round_fn, progress)


def run_weighted_ramp(
    cfg: FederationConfig,
    silos: Sequence[SiloDataset],
    theta0: ModelParams,
    test_set: SiloDataset,
    progress: bool = False,
) -> RunHistory:
    """Every silo every round; unsupervised contributions scaled by the Gaussian ramp-up."""
    _check_mode(cfg, (AggregationMode.WEIGHTED_RAMP,), "run_weighted_ramp")
    sup, unsup = _split_silos(cfg, silos)
    if not unsup:
        raise ConfigurationError("WeightedRamp needs at least one unsupervised silo")
    if cfg.total_rounds < 2:
        raise ConfigurationError("WeightedRamp needs at least 2 rounds for the ramp-up")

    def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
        jobs = _supervised_jobs(sup, theta, cfg, t)
        jobs.update(_unsupervised_jobs(unsup, theta, cfg, t))
        updates = _run_jobs(jobs, cfg.jobs)
        eta = gaussian_rampup(t, cfg.total_rounds)
        weights = ramp_weights([u.n_samples for u in updates], [u.silo_id in cfg.supervised_ids for u in updates], eta)
        logger.debug("round {} ramp eta={:.6f}", t, eta)
        return _aggregate_round(t, Phase.MIXED, updates, weights)

    return _federate(cfg, theta0, test_set, round_fn, progress)


def run_baseline(
    cfg: FederationConfig,
    silos: Sequence[SiloDataset],
    theta0: ModelParams,
    test_set: SiloDataset,
    progress: bool = False,
) -> RunHistory:
    """FedAvgAll, SupervisedOnly, ThresholdSOTA, Centralized and SemiCentralized."""
    _check_mode(cfg, BASELINE_MODES, "run_baseline")
    sup, unsup = _split_silos(cfg, silos)
    mode = cfg.aggregation_mode

    if mode is AggregationMode.FEDAVG_ALL:
        everyone = [s.as_supervised() for s in sorted(silos, key=lambda s: s.silo_id)]

        def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
            return _fedavg_round(t, Phase.SUPERVISED, _run_jobs(_supervised_jobs(everyone, theta, cfg, t), cfg.jobs))

    elif mode is AggregationMode.SUPERVISED_ONLY:

        def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
            return _fedavg_round(t, Phase.SUPERVISED, _run_jobs(_supervised_jobs(sup, theta, cfg, t), cfg.jobs))

    elif mode is AggregationMode.THRESHOLD_SOTA:
        warmup = cfg.effective_warmup
        logger.info("threshold self-training: {} supervised-only warm-up rounds", warmup)

        def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
            jobs = _supervised_jobs(sup, theta, cfg, t)
            if t < warmup:
                return _fedavg_round(t, Phase.SUPERVISED, _run_jobs(jobs, cfg.jobs))
            jobs.update(_selftrain_jobs(unsup, theta, cfg, t))
            return _fedavg_round(t, Phase.MIXED, _run_jobs(jobs, cfg.jobs))

    elif mode is AggregationMode.CENTRALIZED:
        pooled = pool_silos(list(silos), supervised=True)
        # one stream for the whole run: T rounds of E epochs == one T*E-epoch run
        gen = rng.silo_stream(cfg.seed, pooled.silo_id, 0, "supervised")

        def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
            update = fit_supervised(pooled, theta, cfg.local, t, gen=gen)
            plan = RoundPlan(t, Phase.SUPERVISED, (pooled.silo_id,), (1.0,))
            return RoundOutcome(plan, update.params, update.mean_loss, 0)

    else:
        if not unsup:
            raise ConfigurationError("SemiCentralized needs at least one unsupervised silo")
        labelled = pool_silos(sup, supervised=True)
        unlabelled = pool_silos(unsup, supervised=False)

        def round_fn(t: int, theta: ModelParams) -> RoundOutcome:
            first = fit_supervised(labelled, theta, cfg.local, t)
            second = fit_unsupervised(unlabelled, first.params, cfg.local, t)
            plan = RoundPlan(t, Phase.MIXED, (labelled.silo_id,), (1.0,))
            return RoundOutcome(plan, second.params, float(np.mean([first.mean_loss, second.mean_loss])), 0)

    return _federate(cfg, theta0, test_set, round_fn, progress)


def run_federation(
    cfg: FederationConfig,
    silos: Sequence[SiloDataset],
    theta0: ModelParams,
    test_set: SiloDataset,
    progress: bool = False,
) -> RunHistory:
    """Dispatch on cfg.aggregation_mode."""
    if cfg.aggregation_mode is AggregationMode.FAT:
        return run_fat(cfg, silos, theta0, test_set, progress)
    if cfg.aggregation_mode is AggregationMode.WEIGHTED_RAMP:
        return run_weighted_ramp(cfg, silos, theta0, test_set, progress)
    return run_baseline(cfg, silos, theta0, test_set, progress)
