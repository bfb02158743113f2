import logging
import re
import time
import tomllib
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import ValidationError

from src.config import NumericsSettings
from src.exceptions import ConfigParseError, ConfigValidationError, SteinVerifyError
from src.models.estimates import PropertyTally, Verdict
from src.models.experiment import ExperimentConfig, ResultRecord
from src.models.geometry import describe
from src.models.stein import SmoothedIndicator, SteinField, SteinSolution
from src.services.distribution_service import DistributionService
from src.services.gaussian_integral_service import (
    CUBIC_BOUND,
    MIXED_BOUND,
    GaussianIntegralService,
)
from src.services.harness_service import HarnessService
from src.services.lemma_service import LemmaService
from src.services.solution_service import SolutionService
from src.services.stream_service import TAG_PROBES, StreamService

logger = logging.getLogger(__name__)

MIXED_PROBES = 1000
_LINE_IN_MESSAGE = re.compile(r"line (\d+)")


def _key_line(text: str, key: str) -> Optional[int]:
    """First line on which ``key`` is assigned, if any."""
    pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return None


class ExperimentService:
    @staticmethod
    def load_config(path: Union[str, Path]) -> ExperimentConfig:
        """
        Read and validate an experiment configuration.

        Args:
            path: TOML file describing exactly one experiment

        Returns:
            ExperimentConfig: validated configuration

        Raises:
            ConfigParseError: malformed TOML or an unknown key, with its line number
            ConfigValidationError: a known key with an invalid value
        """
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            match = _LINE_IN_MESSAGE.search(str(e))
            raise ConfigParseError(str(e), line=int(match.group(1)) if match else None) from e

        tolerances = data.get("tolerances")
        if isinstance(tolerances, dict):
            for key in tolerances:
                if key not in NumericsSettings.model_fields:
                    raise ConfigParseError(f"unknown key '{key}' (tolerances.{key})", line=_key_line(text, key))

        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            error = e.errors()[0]
            loc = ".".join(str(part) for part in error["loc"])
            if error["type"] == "extra_forbidden":
                key = str(error["loc"][-1])
                raise ConfigParseError(f"unknown key '{key}' ({loc})", line=_key_line(text, key)) from e
            raise ConfigValidationError(loc or "config", error["msg"]) from e

    @staticmethod
    def _lemma_integrals(config: ExperimentConfig) -> List[PropertyTally]:
        """Closed-form Gaussian integrals against their quadrature and Monte Carlo evaluations."""
        tallies = []
        cubic = GaussianIntegralService.cubic_constant()
        tallies.append(PropertyTally(
            property="cubic_constant",
            scenario="E|3Z - Z^3|",
            probes=1,
            violations=int(abs(cubic - CUBIC_BOUND) > 1e-4),
            worst_margin=1e-4 - abs(cubic - CUBIC_BOUND),
            tolerance=1e-4,
            value=cubic,
            verdict=Verdict.PASS if abs(cubic - CUBIC_BOUND) <= 1e-4 else Verdict.FAIL,
        ))

        rng = StreamService.generator(config.seed, TAG_PROBES, 0)
        margins = []
        for _ in range(MIXED_PROBES):
            u = rng.standard_normal(config.k)
            v = rng.standard_normal(config.k)
            scale = float(np.linalg.norm(u) * np.linalg.norm(v) ** 2)
            margins.append(MIXED_BOUND * scale - GaussianIntegralService.mixed_third_derivative(u, v))
        margins = np.array(margins)
        tallies.append(PropertyTally(
            property="mixed_third_derivative_bound",
            scenario=f"random (u, v) in R^{config.k}",
            probes=margins.size,
            violations=int(np.sum(margins < 0)),
            worst_margin=float(margins.min()),
            tolerance=0.0,
            verdict=Verdict.FAIL if np.any(margins < 0) else Verdict.PASS,
        ))

        x = rng.standard_normal(config.k)
        mean, se = GaussianIntegralService.abs_linear_mc(x, config.samples, config.seed)
        exact = GaussianIntegralService.abs_linear(x)
        gap = abs(mean - exact)
        tallies.append(PropertyTally(
            property="linear_integral",
            scenario=f"E|x.Z| with |x|={np.linalg.norm(x):.4f}",
            probes=config.samples,
            violations=int(gap > 4.0 * se),
            worst_margin=4.0 * se - gap,
            tolerance=4.0 * se,
            value=mean,
            verdict=Verdict.PASS if gap <= 4.0 * se else Verdict.FAIL,
        ))
        return tallies

    @staticmethod
    def _run_lemmas(config: ExperimentConfig, record: dict):
        cfg = config.numerics()
        sets = config.convex_sets() if config.sets else LemmaService.scenario_sets(config.k, config.seed)
        for convex_set in sets:
            for eps in config.eps:
                record["properties"].extend(
                    LemmaService.run_scenario(convex_set, eps, config.points, config.probes, config.seed, cfg)
                )
                record["identity"].append(HarnessService.gaussian_stein_identity(
                    SteinField(convex_set=convex_set, eps=eps), config.samples, config.seed,
                    workers=config.workers, settings=cfg,
                ))
        record["properties"].extend(ExperimentService._lemma_integrals(config))

    @staticmethod
    def _run_gaussian_concentration(config: ExperimentConfig, record: dict):
        cfg = config.numerics()
        for convex_set in config.convex_sets():
            record["concentration"].extend(HarnessService.gaussian_concentration_grid(
                convex_set, config.eps_pairs(), config.samples, config.seed, config.workers, cfg,
            ))

    @staticmethod
    def _run_sum_concentration(config: ExperimentConfig, record: dict):
        cfg = config.numerics()
        family = config.distribution()
        for convex_set in config.convex_sets():
            record["concentration"].extend(HarnessService.sum_concentration_grid(
                family, config.summand_index, convex_set, config.eps, config.samples, config.seed, config.workers, cfg,
            ))
            if config.random_eps:
                record["concentration"].append(HarnessService.sum_concentration_random_eps(
                    family, config.summand_index, convex_set, config.samples, config.seed, config.workers, cfg,
                ))

    @staticmethod
    def _run_berry_esseen(config: ExperimentConfig, record: dict):
        cfg = config.numerics()
        family = config.distribution()
        sets = config.set_family.build(config.k)
        record["discrepancy"].append(HarnessService.discrepancy(
            family, sets, config.samples, config.seed, set_family=config.set_family.kind,
            workers=config.workers, settings=cfg,
        ))
        if config.smoothing:
            for convex_set in config.convex_sets():
                for eps in config.eps:
                    record["smoothing"].append(HarnessService.smoothing_gap(
                        family, convex_set, eps, config.samples, config.seed, config.workers, cfg,
                    ))

    @staticmethod
    def _run_adversarial(config: ExperimentConfig, record: dict):
        record["discrepancy"].append(HarnessService.adversarial_halfspace_search(
            config.distribution(), config.samples, config.seed, restarts=config.restarts,
            workers=config.workers, initial_direction=config.initial_direction, settings=config.numerics(),
        ))

    @staticmethod
    def _run_stein_residual(config: ExperimentConfig, record: dict):
        cfg = config.numerics()
        if config.probe_points:
            points = np.array(config.probe_points, dtype=float)
        elif config.k == 1:
            points = np.array([[-1.0], [0.3], [2.0]])
        else:
            # uniform in the ball of radius 3
            rng = StreamService.generator(config.seed, TAG_PROBES, config.k)
            directions = rng.standard_normal((config.residual_points, config.k))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            radii = 3.0 * rng.uniform(size=config.residual_points) ** (1.0 / config.k)
            points = directions * radii[:, None]

        for convex_set in config.convex_sets():
            for eps in config.eps:
                solution = SteinSolution(
                    indicator=SmoothedIndicator(convex_set=convex_set, eps=eps),
                    n_s=cfg.n_s,
                    n_z=cfg.n_z,
                    seed=config.seed,
                )
                for w in points:
                    residual = SolutionService.stein_residual(solution, w, cfg)
                    ok = residual <= config.residual_tol
                    record["properties"].append(PropertyTally(
                        property="stein_residual",
                        scenario=f"{describe(convex_set)} eps={eps:g} w={np.round(w, 4).tolist()}",
                        probes=1,
                        violations=0 if ok else 1,
                        worst_margin=config.residual_tol - residual,
                        tolerance=config.residual_tol,
                        value=residual,
                        verdict=Verdict.PASS if ok else Verdict.FAIL,
                    ))

    @staticmethod
    def run(config: ExperimentConfig) -> ResultRecord:
        """
        Run the configured experiment.

        The result depends only on the configuration (seed included), never on
        the worker count or on wall-clock entropy.
        """
        runners = {
            "lemmas": ExperimentService._run_lemmas,
            "gaussian-concentration": ExperimentService._run_gaussian_concentration,
            "sum-concentration": ExperimentService._run_sum_concentration,
            "berry-esseen": ExperimentService._run_berry_esseen,
            "adversarial": ExperimentService._run_adversarial,
            "stein-residual": ExperimentService._run_stein_residual,
        }
        logger.info(f"starting {config.experiment}: k={config.k} n={config.n} family={config.family} "
                    f"samples={config.samples} seed={config.seed}")
        started = time.perf_counter()
        record = {"concentration": [], "discrepancy": [], "properties": [], "smoothing": [], "identity": []}

        gamma = None
        if config.experiment in ("sum-concentration", "berry-esseen", "adversarial"):
            gamma = DistributionService.gamma(config.distribution())
        try:
            runners[config.experiment](config, record)
        except SteinVerifyError as e:
            logger.error(f"{config.experiment} failed: {e}")
            e.add_note(f"experiment {config.experiment} (k={config.k}, n={config.n}, seed={config.seed})")
            raise

        result = ResultRecord(
            config=config,
            gamma=gamma.gamma if gamma else None,
            gamma_method=gamma.method if gamma else None,
            wall_time_s=time.perf_counter() - started,
            **record,
        )
        fails = sum(v is Verdict.FAIL for v in result.verdicts())
        logger.info(f"finished {config.experiment} in {result.wall_time_s:.1f}s: "
                    f"{len(result.verdicts())} verdicts, {fails} failed")
        return result
