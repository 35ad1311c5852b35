"""Run configuration for the command line."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, fields
from typing import Any, Mapping

import voluptuous as vol

from .const import (
    COMMANDS,
    CONF_ALPHA,
    CONF_ANNOTATORS,
    CONF_COMMAND,
    CONF_COMPARISONS,
    CONF_DEV,
    CONF_EPOCHS,
    CONF_FORMAT,
    CONF_GOLD,
    CONF_IMAGE,
    CONF_INPUT,
    CONF_LABELS,
    CONF_METRIC,
    CONF_MODEL,
    CONF_OUTPUT,
    CONF_PRED,
    CONF_RATIOS,
    CONF_RESOLVED,
    CONF_RUNS,
    CONF_SCORES_A,
    CONF_SCORES_B,
    CONF_SEED,
    CONF_SELECT,
    CONF_SPLIT,
    CONF_STRATEGY,
    CONF_THRESHOLD,
    CONF_UNDECIDED,
    CONF_VERBOSE,
    CONF_WORKERS,
    DEFAULT_ALPHA,
    DEFAULT_ANNOTATORS,
    DEFAULT_COMPARISONS,
    DEFAULT_EPOCHS,
    DEFAULT_FORMAT,
    DEFAULT_METRIC,
    DEFAULT_RATIOS,
    DEFAULT_RUNS,
    DEFAULT_SEED,
    DEFAULT_SELECT,
    DEFAULT_STRATEGY,
    DEFAULT_THRESHOLD,
    DEFAULT_WORKERS,
    ENV_SEED,
    FORMAT_CONLL,
    METRIC_NAMES,
    RATIO_TOLERANCE,
    REPORT_FORMATS,
    SELECT_HL,
    SELECT_MA,
    STRATEGY_CONCAT,
    STRATEGY_MAJ,
    STRATEGY_MULTIOUTPUT,
    STRATEGY_PREF,
    STRATEGY_SEPARATE,
)
from .errors import ConfigError

_LOGGER = logging.getLogger(__name__)

STRATEGIES = (STRATEGY_SEPARATE, STRATEGY_CONCAT, STRATEGY_MULTIOUTPUT, STRATEGY_PREF, STRATEGY_MAJ)
_PATH = vol.Any(None, str)

RUN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_COMMAND): vol.In(COMMANDS),
        vol.Optional(CONF_INPUT, default=None): _PATH,
        vol.Optional(CONF_OUTPUT, default=None): _PATH,
        vol.Optional(CONF_GOLD, default=None): _PATH,
        vol.Optional(CONF_PRED, default=None): _PATH,
        vol.Optional(CONF_MODEL, default=None): _PATH,
        vol.Optional(CONF_IMAGE, default=None): _PATH,
        vol.Optional(CONF_SCORES_A, default=None): _PATH,
        vol.Optional(CONF_SCORES_B, default=None): _PATH,
        vol.Optional(CONF_DEV, default=None): _PATH,
        vol.Optional(CONF_SPLIT, default=None): _PATH,
        vol.Optional(CONF_UNDECIDED, default=None): _PATH,
        vol.Optional(CONF_RESOLVED, default=None): _PATH,
        vol.Optional(CONF_METRIC, default=DEFAULT_METRIC): vol.In(METRIC_NAMES),
        vol.Optional(CONF_SEED, default=None): vol.Any(None, vol.Coerce(int)),
        vol.Optional(CONF_STRATEGY, default=DEFAULT_STRATEGY): vol.In(STRATEGIES),
        vol.Optional(CONF_RATIOS, default=list(DEFAULT_RATIOS)): vol.All(
            [vol.All(vol.Coerce(float), vol.Range(min=0))], vol.Length(min=3, max=3)
        ),
        vol.Optional(CONF_THRESHOLD, default=DEFAULT_THRESHOLD): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_ANNOTATORS, default=DEFAULT_ANNOTATORS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_ALPHA, default=DEFAULT_ALPHA): vol.All(
            vol.Coerce(float), vol.Range(min=0, max=1, min_included=False)
        ),
        vol.Optional(CONF_COMPARISONS, default=DEFAULT_COMPARISONS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_FORMAT, default=DEFAULT_FORMAT): vol.In(REPORT_FORMATS + (FORMAT_CONLL,)),
        vol.Optional(CONF_EPOCHS, default=DEFAULT_EPOCHS): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional(CONF_RUNS, default=DEFAULT_RUNS): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional(CONF_WORKERS, default=DEFAULT_WORKERS): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional(CONF_SELECT, default=DEFAULT_SELECT): vol.In((SELECT_HL, SELECT_MA)),
        vol.Optional(CONF_VERBOSE, default=False): bool,
        vol.Optional(CONF_LABELS, default=False): bool,
    },
    extra=vol.REMOVE_EXTRA,
)


def resolve_seed(explicit: int | None, environ: Mapping[str, str] | None = None) -> int:
    """--seed wins, then EPISTACT_SEED, then the default."""
    if explicit is not None:
        return explicit
    environ = os.environ if environ is None else environ
    raw = environ.get(ENV_SEED)
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as err:
        raise ConfigError(f"{ENV_SEED}: not an integer: {raw!r}") from err


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs besides its input files."""

    command: str
    input: str | None = None
    output: str | None = None
    gold: str | None = None
    pred: str | None = None
    model: str | None = None
    image: str | None = None
    scores_a: str | None = None
    scores_b: str | None = None
    dev: str | None = None
    split: str | None = None
    undecided: str | None = None
    resolved: str | None = None
    metric: str = DEFAULT_METRIC
    seed: int = DEFAULT_SEED
    strategy: str = DEFAULT_STRATEGY
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    threshold: int = DEFAULT_THRESHOLD
    annotators: int = DEFAULT_ANNOTATORS
    alpha: float = DEFAULT_ALPHA
    comparisons: int = DEFAULT_COMPARISONS
    format: str = DEFAULT_FORMAT
    epochs: int = DEFAULT_EPOCHS
    runs: int = DEFAULT_RUNS
    workers: int = DEFAULT_WORKERS
    select: str = DEFAULT_SELECT
    verbose: bool = False
    labels: bool = False

    @classmethod
    def from_mapping(
        cls, data: Mapping[str, Any], environ: Mapping[str, str] | None = None
    ) -> "RunConfig":
        """Validate raw options (e.g. ``vars(args)``) into a RunConfig."""
        try:
            options = RUN_CONFIG_SCHEMA({k: v for k, v in data.items() if v is not None})
        except vol.Invalid as err:
            where = ".".join(str(p) for p in err.path) or "options"
            raise ConfigError(f"{where}: {err.msg}") from err

        options[CONF_SEED] = resolve_seed(options[CONF_SEED], environ)
        options[CONF_RATIOS] = tuple(options[CONF_RATIOS])
        if abs(math.fsum(options[CONF_RATIOS]) - 1.0) > RATIO_TOLERANCE:
            raise ConfigError(f"ratios: must sum to 1, got {options[CONF_RATIOS]}")
        if options[CONF_THRESHOLD] > options[CONF_ANNOTATORS]:
            raise ConfigError(
                f"threshold: {options[CONF_THRESHOLD]} exceeds annotator count {options[CONF_ANNOTATORS]}"
            )
        known = {f.name for f in fields(cls)}
        config = cls(**{k: v for k, v in options.items() if k in known})
        _LOGGER.debug("⚙️ Run config: %s", config)
        return config
