"""Experiment configuration: flat ``key = value`` text with dotted sections.

Grammar
-------
One assignment per line, ``#`` starts a comment, blank lines ignored::

    # two-user broadcast, 16-QAM downlink
    input1 = qam16
    input2 = qam16
    fading.K_dB = -6.88
    qos.theta1 = 0.01
    power.p_avg_dB = 5
    sweep.lambda1 = 0, 0.25, 0.5, 0.75, 1

Values are scalars or comma-separated lists; quantities the literature
quotes in dB (``fading.K_dB``, ``power.p_avg_dB``) are converted to
linear scale once, here, and nowhere else.  Unknown or duplicate keys
are rejected so typos fail loudly before any solve starts.

Recognized keys (defaults in parentheses):

=====================  ====================================================
``input1``/``input2``  named alphabet: bpsk, qpsk, qam16, gaussian; or give
                       ``inputN.symbols`` + ``inputN.probs`` inline instead
``fading.K_dB``        Rician K-factor in dB for both users (-6.88); the
                       linear form ``fading.K`` and per-user overrides
                       ``fading.K1_dB``/``fading.K2_dB``/... also work
``fading.mean_power``  mean channel power, shared or per-user suffix (1.0)
``fading.n_per_dim``   marginal nodes per user for the product grid (20)
``fading.method``      quantile | monte_carlo (quantile)
``fading.seed``        grid seed, used by monte_carlo only (0)
``qos.theta1/theta2``  QoS decay exponents, 1/bits (0.01)
``qos.t_frame``        frame duration, seconds (1.0)
``qos.bandwidth``      bandwidth, Hz (100.0)
``power.p_avg``        average power budget, linear (1.0); or p_avg_dB
``sweep.lambda1``      rate-weight sweep, each in [0, 1] (0,.25,.5,.75,1)
``decoding.rule``      strongest_last | theorem2 | fixed_order_21 |
                       fixed_order_12 (strongest_last)
``solver.<name>``      any tolerance/iteration field of SolverSettings
``queue.n_frames``     simulated frames per validation run (1000000)
``queue.seeds``        one run per seed (101, 102, 103)
``queue.arrival_scale``  arrivals as a fraction of effective capacity (0.95)
``boundary.z_max``     threshold-search bracket; default is the 99.9th
                       percentile of the stronger user's power marginal
``boundary.n_samples`` z2 samples when fitting a boundary curve (64)
``output.dir``         where CSVs land (unset: CLI decides)
=====================  ====================================================

``canonical_lines`` re-serializes a parsed config with every default
resolved and all dB forms reduced to linear, sorted by key; its SHA-256
(``config_sha256``) identifies the experiment in CSV headers, and
parsing the dump reproduces the config exactly.
"""

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from .constellation import (
    GAUSSIAN,
    InputKind,
    custom_constellation,
    is_gaussian,
    standard_constellation,
)
from .errors import ConfigError
from .fading import FadingGrid, RicianSpec, build_grid
from .power import QoSParams, SolverSettings
from .regions import RULES

GRID_METHODS = ("quantile", "monte_carlo")
STANDARD_INPUT_NAMES = ("bpsk", "qpsk", "qam16", "gaussian")
Z_MAX_PERCENTILE = 0.999

_INT_SOLVER_FIELDS = {
    f.name for f in fields(SolverSettings) if f.type in (int, "int")
}


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated inputs for one experiment; all quantities linear scale."""

    input1: InputKind
    input2: InputKind
    spec1: RicianSpec
    spec2: RicianSpec
    n_per_dim: int
    grid_method: str
    grid_seed: int
    qos: QoSParams
    p_avg: float
    lambda_sweep: tuple
    rule: str
    settings: SolverSettings
    queue_n_frames: int
    queue_seeds: tuple
    queue_arrival_scale: float
    boundary_z_max: float
    boundary_samples: int
    out_dir: str | None = None

    def __post_init__(self):
        if self.n_per_dim < 2:
            raise ConfigError("fading.n_per_dim must be at least 2")
        if self.grid_method not in GRID_METHODS:
            raise ConfigError(f"fading.method must be one of {GRID_METHODS}")
        if self.p_avg <= 0:
            raise ConfigError("power budget must be positive")
        if not self.lambda_sweep:
            raise ConfigError("sweep.lambda1 must list at least one weight")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambda_sweep):
            raise ConfigError("sweep.lambda1 entries must lie in [0, 1]")
        if self.rule not in RULES:
            raise ConfigError(f"decoding.rule must be one of {tuple(RULES)}")
        if self.queue_n_frames < 10_000:
            raise ConfigError("queue.n_frames must be at least 10^4")
        if not self.queue_seeds:
            raise ConfigError("queue.seeds must list at least one seed")
        if self.queue_arrival_scale <= 0:
            raise ConfigError("queue.arrival_scale must be positive")
        if not np.isfinite(self.boundary_z_max) or self.boundary_z_max <= 0:
            raise ConfigError("boundary.z_max must be positive and finite")
        if self.boundary_samples < 2:
            raise ConfigError("boundary.n_samples must be at least 2")

    def grid(self) -> FadingGrid:
        return build_grid(
            self.spec1, self.spec2, self.n_per_dim, self.grid_method, self.grid_seed
        )


class _Pairs:
    """Raw key/value pool; every take() removes a key so leftovers are typos."""

    def __init__(self, pairs: dict):
        self._pairs = dict(pairs)

    def take(self, key: str, default=None) -> str | None:
        return self._pairs.pop(key, default)

    def take_float(self, key: str, default: float) -> float:
        raw = self._pairs.pop(key, None)
        return default if raw is None else _to_float(key, raw)

    def take_int(self, key: str, default: int) -> int:
        raw = self._pairs.pop(key, None)
        return default if raw is None else _to_int(key, raw)

    def finish(self):
        if self._pairs:
            unknown = ", ".join(sorted(self._pairs))
            raise ConfigError(f"unknown config keys: {unknown}")


def _to_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _to_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def parse_pairs(text: str) -> dict:
    """Text -> ordered ``{dotted.key: raw value}``; structural errors only."""
    pairs = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip().strip('"')
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _exclusive(pairs: _Pairs, linear_key: str, db_key: str) -> float | None:
    """One quantity, two spellings; forbid giving both."""
    raw_linear = pairs.take(linear_key)
    raw_db = pairs.take(db_key)
    if raw_linear is not None and raw_db is not None:
        raise ConfigError(f"give {linear_key} or {db_key}, not both")
    if raw_db is not None:
        return db_to_linear(_to_float(db_key, raw_db))
    if raw_linear is not None:
        return _to_float(linear_key, raw_linear)
    return None


def _parse_input(pairs: _Pairs, user: int) -> InputKind:
    name = pairs.take(f"input{user}")
    raw_symbols = pairs.take(f"input{user}.symbols")
    raw_probs = pairs.take(f"input{user}.probs")
    if name is not None and raw_symbols is not None:
        raise ConfigError(f"input{user}: give a name or inline symbols, not both")
    if (raw_symbols is None) != (raw_probs is None):
        raise ConfigError(f"input{user}: symbols and probs must come together")
    if raw_symbols is not None:
        try:
            symbols = [complex(tok) for tok in _split_list(raw_symbols)]
        except ValueError:
            raise ConfigError(f"input{user}.symbols: malformed complex value") from None
        probs = [_to_float(f"input{user}.probs", tok) for tok in _split_list(raw_probs)]
        return custom_constellation(symbols, probs, name=f"custom{user}")
    if name is None:
        raise ConfigError(f"input{user} is required (or inline symbols/probs)")
    if name.lower() == "gaussian":
        return GAUSSIAN
    return standard_constellation(name)


def _parse_fading(pairs: _Pairs) -> tuple[RicianSpec, RicianSpec]:
    shared_k = _exclusive(pairs, "fading.K", "fading.K_dB")
    shared_mp = pairs.take("fading.mean_power")
    specs = []
    for user in (1, 2):
        k = _exclusive(pairs, f"fading.K{user}", f"fading.K{user}_dB")
        if k is not None and shared_k is not None:
            raise ConfigError("give fading.K for both users or per-user, not both")
        if k is None:
            k = shared_k if shared_k is not None else db_to_linear(-6.88)
        raw_mp = pairs.take(f"fading.mean_power{user}", shared_mp)
        mp = 1.0 if raw_mp is None else _to_float("fading.mean_power", raw_mp)
        specs.append(RicianSpec(k, mp))
    return specs[0], specs[1]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; every module validator runs before returning."""
    pairs = _Pairs(parse_pairs(text))

    input1 = _parse_input(pairs, 1)
    input2 = _parse_input(pairs, 2)
    spec1, spec2 = _parse_fading(pairs)
    n_per_dim = pairs.take_int("fading.n_per_dim", 20)
    grid_method = pairs.take("fading.method", "quantile")
    grid_seed = pairs.take_int("fading.seed", 0)

    qos = QoSParams(
        theta1=pairs.take_float("qos.theta1", 0.01),
        theta2=pairs.take_float("qos.theta2", 0.01),
        t_frame=pairs.take_float("qos.t_frame", 1.0),
        bandwidth=pairs.take_float("qos.bandwidth", 100.0),
    )
    p_avg = _exclusive(pairs, "power.p_avg", "power.p_avg_dB")
    if p_avg is None:
        p_avg = 1.0

    raw_sweep = pairs.take("sweep.lambda1")
    if raw_sweep is None:
        lambda_sweep = (0.0, 0.25, 0.5, 0.75, 1.0)
    else:
        lambda_sweep = tuple(
            _to_float("sweep.lambda1", tok) for tok in _split_list(raw_sweep)
        )
    rule = pairs.take("decoding.rule", "strongest_last")

    solver_kwargs = {}
    for field in fields(SolverSettings):
        raw = pairs.take(f"solver.{field.name}")
        if raw is None:
            continue
        convert = _to_int if field.name in _INT_SOLVER_FIELDS else _to_float
        solver_kwargs[field.name] = convert(f"solver.{field.name}", raw)
    settings = SolverSettings(**solver_kwargs)

    queue_n_frames = pairs.take_int("queue.n_frames", 1_000_000)
    raw_seeds = pairs.take("queue.seeds")
    if raw_seeds is None:
        queue_seeds = (101, 102, 103)
    else:
        queue_seeds = tuple(_to_int("queue.seeds", tok) for tok in _split_list(raw_seeds))
    queue_arrival_scale = pairs.take_float("queue.arrival_scale", 0.95)

    raw_z_max = pairs.take("boundary.z_max")
    if raw_z_max is None:
        boundary_z_max = float(
            max(spec1.ppf(Z_MAX_PERCENTILE), spec2.ppf(Z_MAX_PERCENTILE))
        )
    else:
        boundary_z_max = _to_float("boundary.z_max", raw_z_max)
    boundary_samples = pairs.take_int("boundary.n_samples", 64)
    out_dir = pairs.take("output.dir")

    pairs.finish()
    return ExperimentConfig(
        input1=input1,
        input2=input2,
        spec1=spec1,
        spec2=spec2,
        n_per_dim=n_per_dim,
        grid_method=grid_method,
        grid_seed=grid_seed,
        qos=qos,
        p_avg=p_avg,
        lambda_sweep=lambda_sweep,
        rule=rule,
        settings=settings,
        queue_n_frames=queue_n_frames,
        queue_seeds=queue_seeds,
        queue_arrival_scale=queue_arrival_scale,
        boundary_z_max=boundary_z_max,
        boundary_samples=boundary_samples,
        out_dir=out_dir,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt_complex(value: complex) -> str:
    return repr(complex(value)).strip("()")


def canonical_lines(config: ExperimentConfig) -> list[str]:
    """Fully resolved, linear-scale, sorted re-serialization of a config.

    Feeding the joined lines back through parse_config reproduces the
    config, so the SHA-256 of this dump identifies the experiment.
    """
    lines = []

    def put(key, value):
        lines.append(f"{key} = {value}")

    for user, inp in ((1, config.input1), (2, config.input2)):
        if is_gaussian(inp) or inp.name in STANDARD_INPUT_NAMES:
            put(f"input{user}", inp.name)
        else:
            put(f"input{user}.symbols", ", ".join(_fmt_complex(s) for s in inp.symbols))
            put(f"input{user}.probs", ", ".join(repr(float(p)) for p in inp.probs))
    for user, spec in ((1, config.spec1), (2, config.spec2)):
        put(f"fading.K{user}", repr(spec.k_factor))
        put(f"fading.mean_power{user}", repr(spec.mean_power))
    put("fading.n_per_dim", config.n_per_dim)
    put("fading.method", config.grid_method)
    put("fading.seed", config.grid_seed)
    for name in ("theta1", "theta2", "t_frame", "bandwidth"):
        put(f"qos.{name}", repr(getattr(config.qos, name)))
    put("power.p_avg", repr(config.p_avg))
    put("sweep.lambda1", ", ".join(repr(lam) for lam in config.lambda_sweep))
    put("decoding.rule", config.rule)
    for field in fields(SolverSettings):
        value = getattr(config.settings, field.name)
        put(f"solver.{field.name}", value if field.name in _INT_SOLVER_FIELDS else repr(value))
    put("queue.n_frames", config.queue_n_frames)
    put("queue.seeds", ", ".join(str(s) for s in config.queue_seeds))
    put("queue.arrival_scale", repr(config.queue_arrival_scale))
    put("boundary.z_max", repr(config.boundary_z_max))
    put("boundary.n_samples", config.boundary_samples)
    if config.out_dir is not None:
        put("output.dir", config.out_dir)
    return sorted(lines)


def config_sha256(config: ExperimentConfig) -> str:
    text = "\n".join(canonical_lines(config)) + "\n"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
