"""Monte Carlo study of the gamma estimators over a parameter grid.

Every random draw is determined by ``(master seed, scenario key, replication,
stream role)`` through :class:`numpy.random.SeedSequence`, where the scenario
key is a hash of the scenario's model parameters. Results therefore do not
depend on worker count, execution order, on which other scenarios share the
grid, or on whether a run was resumed from stored per-scenario files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .estimators import Method, estimate_all
from .vasicek import PairModel, simulate_panel

__all__ = [
    "DEFAULT_ESTIMATORS",
    "STAT_NAMES",
    "ScenarioSpec",
    "EstimatorStats",
    "ScenarioStats",
    "StudyConfig",
    "StratifiedTable",
    "NonFactorialGridError",
    "replication_rng",
    "summarize",
    "run_scenario",
    "run_grid",
    "stratify",
    "results_to_csv",
    "results_from_csv",
    "full_config",
    "desk_config",
]

log = logging.getLogger(__name__)

DEFAULT_ESTIMATORS = (
    Method.IMM, Method.IM2, Method.IM3, Method.MAD, Method.DMM, Method.MAX, Method.KEN,
)
STAT_NAMES = ("bias", "std", "rmse", "min", "q05", "q25", "q50", "q75", "q95", "max")
PARAM_NAMES = ("T", "n", "p", "rho", "gamma")
RESULT_COLUMNS = PARAM_NAMES + ("estimator",) + STAT_NAMES + ("degenerate_count",)

ROLE_PANEL = 0
ROLE_BIAS = 1


@dataclass(frozen=True)
class ScenarioSpec:
    """One grid point. ``n``, ``p`` and ``rho`` apply to both sectors and all dates."""

    T: int
    n: int
    p: float
    rho: float
    gamma: float
    reps: int = 1000
    m: int = 25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T < 2:
            raise ValueError("T must be > 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.reps < 1 or self.m < 1:
            raise ValueError("reps and m must be >= 1")
        self.model()  # validates p, rho, gamma

    def model(self) -> PairModel:
        return PairModel.symmetric(self.p, self.rho, self.gamma)

    @property
    def params(self) -> tuple:
        return (self.T, self.n, self.p, self.rho, self.gamma)

    @property
    def key(self) -> int:
        """Stable 63-bit identifier derived from the model parameters only."""
        text = f"{self.T}|{self.n}|{float(self.p).hex()}|{float(self.rho).hex()}|{float(self.gamma).hex()}"
        digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") >> 1


def replication_rng(seed: int, scenario_key: int, rep: int, role: int) -> np.random.Generator:
    """Independent generator for one (scenario, replication, role) triple."""
    ss = np.random.SeedSequence(seed, spawn_key=(scenario_key, rep, role))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class EstimatorStats:
    bias: float
    std: float
    rmse: float
    min: float
    q05: float
    q25: float
    q50: float
    q75: float
    q95: float
    max: float
    degenerate_count: int = 0


@dataclass
class ScenarioStats:
    spec: ScenarioSpec
    stats: dict[Method, EstimatorStats]
    io_error: str | None = field(default=None, compare=False)


def summarize(values: np.ndarray, truth: float, degenerate_count: int = 0) -> EstimatorStats:
    """Bias, sample standard deviation, RMSE and order statistics of ``values``.

    Quantiles interpolate linearly between order statistics at position
    ``(reps - 1) * q``. With a single replication the standard deviation is 0.
    """
    values = np.asarray(values, dtype=float)
    errors = values - truth
    qs = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95], method="linear")
    return EstimatorStats(
        bias=float(np.mean(errors)),
        std=float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        rmse=float(math.sqrt(np.mean(errors * errors))),
        min=float(np.min(values)),
        q05=float(qs[0]),
        q25=float(qs[1]),
        q50=float(qs[2]),
        q75=float(qs[3]),
        q95=float(qs[4]),
        max=float(np.max(values)),
        degenerate_count=int(degenerate_count),
    )


def simulate_estimates(
    spec: ScenarioSpec,
    estimators: Sequence[Method] = DEFAULT_ESTIMATORS,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw estimates of every replication.

    Returns ``(values, degenerate)`` arrays of shape ``(reps, len(estimators))``.
    """
    estimators = [Method(e) for e in estimators]
    model = spec.model()
    sizes = [(spec.n, spec.n)] * spec.T
    key = spec.key
    values = np.empty((spec.reps, len(estimators)))
    degenerate = np.zeros((spec.reps, len(estimators)), dtype=bool)
    for r in range(spec.reps):
        panel = simulate_panel(model, sizes, replication_rng(spec.seed, key, r, ROLE_PANEL))
        report = estimate_all(
            panel, estimators, m=spec.m, rng=replication_rng(spec.seed, key, r, ROLE_BIAS)
        )
        for j, est in enumerate(estimators):
            values[r, j] = report.estimates[est].value
            degenerate[r, j] = report.estimates[est].degenerate
    return values, degenerate


def run_scenario(
    spec: ScenarioSpec,
    estimators: Sequence[Method] = DEFAULT_ESTIMATORS,
) -> ScenarioStats:
    """Simulate ``spec.reps`` panels and summarise each estimator.

    Degenerate estimates enter the statistics at their fallback value and
    are counted in ``degenerate_count``.
    """
    estimators = [Method(e) for e in estimators]
    values, degenerate = simulate_estimates(spec, estimators)
    stats = {
        est: summarize(values[:, j], spec.gamma, int(degenerate[:, j].sum()))
        for j, est in enumerate(estimators)
    }
    return ScenarioStats(spec, stats)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _rows(result: ScenarioStats) -> Iterable[list[str]]:
    spec = result.spec
    for est, st in result.stats.items():
        yield [_fmt(v) for v in spec.params] + [est.value] + [
            _fmt(getattr(st, s)) for s in STAT_NAMES
        ] + [str(st.degenerate_count)]


def results_to_csv(results: Iterable[ScenarioStats], path=None) -> str:
    """Per-scenario result table, one row per (scenario, estimator), full precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for res in results:
        writer.writerows(_rows(res))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def results_from_csv(source, reps: int = 1, m: int = 1, seed: int = 0) -> list[ScenarioStats]:
    """Read a result table back; run settings are not stored and use the given values."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return results_from_csv(fh, reps, m, seed)
    reader = csv.DictReader(source)
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise ValueError(f"expected columns {','.join(RESULT_COLUMNS)}")
    grouped: dict[tuple, ScenarioStats] = {}
    for row in reader:
        params = (int(row["T"]), int(row["n"]), float(row["p"]), float(row["rho"]), float(row["gamma"]))
        if params not in grouped:
            spec = ScenarioSpec(*params, reps=reps, m=m, seed=seed)
            grouped[params] = ScenarioStats(spec, {})
        grouped[params].stats[Method(row["estimator"])] = EstimatorStats(
            *(float(row[s]) for s in STAT_NAMES), degenerate_count=int(row["degenerate_count"])
        )
    return list(grouped.values())


def _scenario_file(results_dir: Path, spec: ScenarioSpec, estimators: Sequence[Method]) -> Path:
    tag = f"{spec.reps}|{spec.m}|{spec.seed}|{','.join(e.value for e in estimators)}"
    run_hash = hashlib.blake2b(tag.encode(), digest_size=4).hexdigest()
    return results_dir / f"scenario-{spec.key:016x}-{run_hash}.csv"


def _run_one(args: tuple[ScenarioSpec, tuple[Method, ...], str | None]) -> ScenarioStats:
    spec, estimators, results_dir = args
    result = run_scenario(spec, estimators)
    if results_dir is not None:
        target = _scenario_file(Path(results_dir), spec, estimators)
        tmp = target.with_suffix(".tmp")
        try:
            results_to_csv([result], tmp)
            os.replace(tmp, target)
        except OSError as exc:
            result.io_error = f"{type(exc).__name__}: {exc}"
    return result


def _load_stored(path: Path, spec: ScenarioSpec, estimators: Sequence[Method]) -> ScenarioStats | None:
    try:
        stored = results_from_csv(path, spec.reps, spec.m, spec.seed)
    except (OSError, ValueError, KeyError) as exc:
        log.warning("ignoring unreadable result file %s: %s", path, exc)
        return None
    if len(stored) != 1 or stored[0].spec != spec or list(stored[0].stats) != list(estimators):
        log.warning("ignoring mismatched result file %s", path)
        return None
    return stored[0]


def run_grid(
    grid: Sequence[ScenarioSpec],
    workers: int = 1,
    estimators: Sequence[Method] = DEFAULT_ESTIMATORS,
    results_dir=None,
) -> list[ScenarioStats]:
    """Run every scenario of ``grid``; results come back in grid order.

    With ``results_dir``, each finished scenario is stored as its own CSV and
    scenarios whose file already exists are loaded instead of recomputed. A
    failed write is recorded on that scenario's ``io_error`` and logged; the
    remaining scenarios still run.
    """
    if not grid:
        raise ValueError("grid must not be empty")
    estimators = tuple(Method(e) for e in estimators)
    rdir = None
    if results_dir is not None:
        rdir = Path(results_dir)
        rdir.mkdir(parents=True, exist_ok=True)

    results: list[ScenarioStats | None] = [None] * len(grid)
    todo = []
    for i, spec in enumerate(grid):
        if rdir is not None:
            path = _scenario_file(rdir, spec, estimators)
            if path.exists():
                results[i] = _load_stored(path, spec, estimators)
        if results[i] is None:
            todo.append(i)

    jobs = [(grid[i], estimators, None if rdir is None else str(rdir)) for i in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_one, jobs))
    else:
        done = [_run_one(job) for job in jobs]
    for i, res in zip(todo, done):
        if res.io_error:
            log.error("scenario %s: could not store result: %s", grid[i].params, res.io_error)
        results[i] = res
    return results  # type: ignore[return-value]


class NonFactorialGridError(ValueError):
    """Stratification needs every combination of the parameter levels exactly once."""


@dataclass
class StratifiedTable:
    """Unweighted means of scenario statistics per level of one parameter.

    ``rows`` maps each level to ``{(statistic, estimator): mean}``; ``average``
    holds the means over all included scenarios.
    """

    variable: str
    statistics: tuple[str, ...]
    estimators: tuple[Method, ...]
    rows: list[tuple[float, dict[tuple[str, Method], float]]]
    average: dict[tuple[str, Method], float]
    where: dict[str, float] = field(default_factory=dict)

    def _columns(self) -> list[tuple[str, Method]]:
        return [(s, e) for s in self.statistics for e in self.estimators]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = self._columns()
        writer.writerow([self.variable] + [f"{s}_{e.value}" for s, e in cols])
        for level, vals in self.rows:
            writer.writerow([_fmt(level)] + [repr(vals[c]) for c in cols])
        writer.writerow(["avg"] + [repr(self.average[c]) for c in cols])
        return buf.getvalue()

    def to_markdown(self, decimals: int = 6) -> str:
        cols = self._columns()
        header = [self.variable] + [f"{s} {e.value}" for s, e in cols]
        body = [[_level_str(level)] + [f"{vals[c]:.{decimals}f}" for c in cols] for level, vals in self.rows]
        body.append(["avg"] + [f"{self.average[c]:.{decimals}f}" for c in cols])
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]

        def line(cells):
            return "| " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)) + " |"

        sep = "|" + "|".join("-" * (w + 1) + ":" for w in widths) + "|"
        out = [line(header), sep] + [line(r) for r in body]
        if self.where:
            cond = ", ".join(f"{k}={_level_str(v)}" for k, v in self.where.items())
            out.insert(0, f"Restricted to {cond}\n")
        return "\n".join(out) + "\n"


def _level_str(level) -> str:
    return f"{level:g}" if isinstance(level, float) else str(level)


def stratify(
    results: Sequence[ScenarioStats],
    variable: str,
    statistics: Sequence[str] = ("std", "rmse"),
    estimators: Sequence[Method] | None = None,
    where: Mapping[str, float] | None = None,
) -> StratifiedTable:
    """Average scenario statistics per level of ``variable``.

    ``where`` restricts the scenarios first, e.g. ``{"gamma": 0.25}`` for a
    bias table at a single correlation. The remaining scenarios must form a
    full factorial grid.

    Raises
    ------
    NonFactorialGridError
        If some combination of levels is missing or duplicated.
    """
    if variable not in PARAM_NAMES:
        raise ValueError(f"variable must be one of {PARAM_NAMES}, got {variable!r}")
    for s in statistics:
        if s not in STAT_NAMES + ("degenerate_count",):
            raise ValueError(f"unknown statistic {s!r}")
    where = dict(where or {})
    for k in where:
        if k not in PARAM_NAMES:
            raise ValueError(f"cannot filter on {k!r}")
    idx = {name: i for i, name in enumerate(PARAM_NAMES)}
    chosen = [
        r for r in results
        if all(math.isclose(r.spec.params[idx[k]], v, rel_tol=0, abs_tol=1e-12) for k, v in where.items())
    ]
    if not chosen:
        raise NonFactorialGridError("no scenarios left after filtering")
    params = [r.spec.params for r in chosen]
    levels = [sorted(set(col)) for col in zip(*params)]
    if len(set(params)) != len(params) or len(params) != math.prod(len(lv) for lv in levels):
        raise NonFactorialGridError(
            f"{len(params)} scenarios do not form a full factorial grid over "
            + " x ".join(str(len(lv)) for lv in levels) + " levels"
        )
    if estimators is None:
        estimators = list(chosen[0].stats)
    estimators = tuple(Method(e) for e in estimators)
    cols = [(s, e) for s in statistics for e in estimators]

    def means(group: list[ScenarioStats]) -> dict[tuple[str, Method], float]:
        return {
            (s, e): float(np.mean([getattr(r.stats[e], s) for r in group])) for s, e in cols
        }

    j = idx[variable]
    rows = [(lv, means([r for r in chosen if r.spec.params[j] == lv])) for lv in levels[j]]
    return StratifiedTable(variable, tuple(statistics), estimators, rows, means(chosen), where)


@dataclass(frozen=True)
class StudyConfig:
    """A factorial grid plus run settings, as read from a JSON config file."""

    T: tuple[int, ...]
    n: tuple[int, ...]
    p: tuple[float, ...]
    rho: tuple[float, ...]
    gamma: tuple[float, ...]
    reps: int = 1000
    m: int = 25
    seed: int = 0
    estimators: tuple[Method, ...] = DEFAULT_ESTIMATORS

    def scenarios(self) -> list[ScenarioSpec]:
        return [
            ScenarioSpec(T, n, p, rho, g, reps=self.reps, m=self.m, seed=self.seed)
            for T, n, p, rho, g in itertools.product(self.T, self.n, self.p, self.rho, self.gamma)
        ]

    @classmethod
    def from_dict(cls, data: Mapping) -> "StudyConfig":
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        missing = [k for k in PARAM_NAMES if k not in data]
        if missing:
            raise ValueError(f"config is missing grid lists: {missing}")
        kw = {k: tuple(data[k]) for k in PARAM_NAMES}
        kw["T"] = tuple(int(v) for v in kw["T"])
        kw["n"] = tuple(int(v) for v in kw["n"])
        for k in ("p", "rho", "gamma"):
            kw[k] = tuple(float(v) for v in kw[k])
        for k in ("reps", "m", "seed"):
            if k in data:
                kw[k] = int(data[k])
        if "estimators" in data:
            kw["estimators"] = tuple(Method(e) for e in data["estimators"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = [e.value for e in self.estimators]
        for k in PARAM_NAMES:
            d[k] = list(d[k])
        return d

    def with_settings(self, **kw) -> "StudyConfig":
        return replace(self, **kw)


def full_config(seed: int = 0) -> StudyConfig:
    """The full grid: 6*6*6*6*7 = 9072 scenarios, 10,000 reps, M = 100."""
    return StudyConfig(
        T=(25, 50, 100, 200, 400, 800),
        n=(100, 200, 400, 800, 1600, 3200),
        p=(0.01, 0.02, 0.04, 0.08, 0.16, 0.32),
        rho=(0.01, 0.02, 0.04, 0.08, 0.16, 0.32),
        gamma=(-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0),
        reps=10_000,
        m=100,
        seed=seed,
    )


def desk_config(seed: int = 0) -> StudyConfig:
    """Small grid around mid-range parameters that runs in minutes."""
    return StudyConfig(
        T=(25, 100),
        n=(100, 400),
        p=(0.04,),
        rho=(0.04,),
        gamma=(0.0, 0.25),
        reps=1000,
        m=25,
        seed=seed,
    )
