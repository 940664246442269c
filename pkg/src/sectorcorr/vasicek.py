"""Two-sector Vasicek event model: parameters, implied moments, simulation.

Each sector has a mean event probability ``p`` and an intra-sector asset
correlation ``rho``. Conditional on its systematic factor ``Y`` the events in
a sector are independent Bernoulli draws with probability
``Phi((Phi^-1(p) - sqrt(rho) * Y) / sqrt(1 - rho))``. The two factors are
standard normal with correlation ``gamma``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .num_kernels import bvn_cdf, std_normal_cdf, std_normal_inv_cdf

__all__ = [
    "SectorParams",
    "PairModel",
    "SectorMoments",
    "PairMoments",
    "PanelRow",
    "Panel",
    "PanelFormatError",
    "mixing_prob",
    "pair_moments",
    "simulate_latent",
    "simulate_counts",
    "simulate_panel",
    "read_panel_csv",
    "write_panel_csv",
]

PANEL_HEADER = ("t", "n", "d", "n_tilde", "d_tilde")


@dataclass(frozen=True)
class SectorParams:
    """Mean event probability ``p`` and intra-sector asset correlation ``rho``."""

    p: float
    rho: float

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho!r}")


@dataclass(frozen=True)
class PairModel:
    sector_a: SectorParams
    sector_b: SectorParams
    gamma: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [-1, 1], got {self.gamma!r}")

    @classmethod
    def symmetric(cls, p: float, rho: float, gamma: float) -> "PairModel":
        """Both sectors share ``(p, rho)``, as in the simulation study grid."""
        sector = SectorParams(p, rho)
        return cls(sector, sector, gamma)


@dataclass(frozen=True)
class SectorMoments:
    """Moments of one sector's probit-scale factor and event probability.

    ``mu`` and ``sigma2`` are the mean and variance of ``Phi^-1(P)``; ``p2`` is
    ``E[P**2]``.
    """

    mu: float
    sigma2: float
    p2: float


class PairMoments(NamedTuple):
    sector_a: SectorMoments
    sector_b: SectorMoments
    q: float


def mixing_prob(sector: SectorParams, y):
    """Conditional event probability given the systematic factor ``y``.

    Strictly decreasing in ``y``. Accepts a scalar or an array of factors.
    """
    z = (std_normal_inv_cdf(sector.p) - math.sqrt(sector.rho) * y) / math.sqrt(1.0 - sector.rho)
    return std_normal_cdf(z)


def _sector_moments(sector: SectorParams) -> SectorMoments:
    a = std_normal_inv_cdf(sector.p)
    return SectorMoments(
        mu=a / math.sqrt(1.0 - sector.rho),
        sigma2=sector.rho / (1.0 - sector.rho),
        p2=bvn_cdf(a, a, sector.rho),
    )


def pair_moments(model: PairModel) -> PairMoments:
    """Closed-form moments implied by ``model``.

    ``q = E[P * P~] = Phi2(Phi^-1(p), Phi^-1(p~), gamma * sqrt(rho * rho~))``.
    """
    a = std_normal_inv_cdf(model.sector_a.p)
    b = std_normal_inv_cdf(model.sector_b.p)
    delta = model.gamma * math.sqrt(model.sector_a.rho * model.sector_b.rho)
    return PairMoments(
        _sector_moments(model.sector_a),
        _sector_moments(model.sector_b),
        bvn_cdf(a, b, delta),
    )


def simulate_latent(model: PairModel, rng: np.random.Generator, size=None):
    """Draw standard normal factor pairs ``(y, y_tilde)`` with correlation ``gamma``.

    ``y_tilde = gamma * y + sqrt(1 - gamma**2) * z``, so at ``gamma = +-1`` the
    pair is exactly (anti)comonotone. ``size`` follows numpy conventions; with
    ``size=None`` two floats are returned.
    """
    gamma = model.gamma
    shape = (2,) if size is None else (2, *np.atleast_1d(size))
    z = rng.standard_normal(shape)
    y = z[0]
    y_tilde = gamma * y + math.sqrt(max(0.0, 1.0 - gamma * gamma)) * z[1]
    if size is None:
        return float(y), float(y_tilde)
    return y, y_tilde


def simulate_counts(model: PairModel, n, n_tilde, rng: np.random.Generator, size=None):
    """Vectorised event-count simulation.

    Returns ``(d, d_tilde)`` with shape ``(T,)`` or ``(size, T)``. Latent
    factors are drawn first for every date, then binomial counts; the order
    is fixed so results depend only on the generator state.
    """
    n = np.asarray(n, dtype=np.int64)
    n_tilde = np.asarray(n_tilde, dtype=np.int64)
    T = n.shape[0]
    shape = T if size is None else (size, T)
    y, y_tilde = simulate_latent(model, rng, size=shape)
    prob = mixing_prob(model.sector_a, y)
    prob_tilde = mixing_prob(model.sector_b, y_tilde)
    d = rng.binomial(n, prob)
    d_tilde = rng.binomial(n_tilde, prob_tilde)
    return d, d_tilde


class PanelRow(NamedTuple):
    t: int
    n: int
    d: int
    n_tilde: int
    d_tilde: int


class PanelFormatError(ValueError):
    """Malformed panel CSV input; ``line`` is the 1-based line number if known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True, eq=False)
class Panel:
    """Event-count panel for two sectors over ``T > 1`` observation dates.

    Stored column-wise as integer numpy arrays.
    """

    t: np.ndarray
    n: np.ndarray
    d: np.ndarray
    n_tilde: np.ndarray
    d_tilde: np.ndarray

    def __post_init__(self) -> None:
        cols = {}
        for name in PANEL_HEADER:
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 1:
                raise ValueError(f"panel column {name!r} must be one-dimensional")
            if arr.size and not np.issubdtype(arr.dtype, np.integer):
                if not np.all(np.equal(np.mod(arr, 1), 0)):
                    raise ValueError(f"panel column {name!r} must hold integers")
            cols[name] = arr.astype(np.int64)
            object.__setattr__(self, name, cols[name])
        T = cols["t"].shape[0]
        if any(c.shape[0] != T for c in cols.values()):
            raise ValueError("panel columns must have equal length")
        if T < 2:
            raise ValueError(f"a panel needs T > 1 observation dates, got T={T}")
        if np.any(np.diff(cols["t"]) <= 0):
            raise ValueError("date indices must be strictly increasing")
        if np.any(cols["n"] < 1) or np.any(cols["n_tilde"] < 1):
            raise ValueError("cohort sizes n and n_tilde must be >= 1")
        if np.any(cols["d"] < 0) or np.any(cols["d"] > cols["n"]):
            raise ValueError("event counts must satisfy 0 <= d <= n")
        if np.any(cols["d_tilde"] < 0) or np.any(cols["d_tilde"] > cols["n_tilde"]):
            raise ValueError("event counts must satisfy 0 <= d_tilde <= n_tilde")

    @property
    def T(self) -> int:
        return int(self.t.shape[0])

    @property
    def rows(self) -> list[PanelRow]:
        return list(self)

    def __len__(self) -> int:
        return self.T

    def __iter__(self) -> Iterator[PanelRow]:
        for vals in zip(self.t, self.n, self.d, self.n_tilde, self.d_tilde):
            yield PanelRow(*(int(v) for v in vals))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Panel):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in PANEL_HEADER)

    @classmethod
    def from_rows(cls, rows: Sequence[PanelRow | tuple]) -> "Panel":
        arr = np.asarray([tuple(r) for r in rows], dtype=np.int64).reshape(-1, 5)
        return cls(*arr.T)

    @classmethod
    def from_counts(cls, n, d, n_tilde, d_tilde) -> "Panel":
        """Build a panel with dates ``1..T`` from count arrays."""
        d = np.asarray(d)
        return cls(np.arange(1, d.shape[0] + 1), n, d, n_tilde, d_tilde)


def simulate_panel(
    model: PairModel,
    sizes: Sequence[tuple[int, int]],
    rng: np.random.Generator,
) -> Panel:
    """Simulate one panel with per-date cohort sizes ``sizes[t] = (n, n_tilde)``.

    Conditional on the factor pair of a date, the two counts are independent
    binomials. Deterministic given the generator state.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    if sizes.ndim != 2 or sizes.shape[1] != 2:
        raise ValueError("sizes must be a sequence of (n, n_tilde) pairs")
    if sizes.shape[0] < 2:
        raise ValueError("a panel needs at least two observation dates")
    if np.any(sizes < 1):
        raise ValueError("cohort sizes must be >= 1")
    n, n_tilde = sizes[:, 0], sizes[:, 1]
    d, d_tilde = simulate_counts(model, n, n_tilde, rng)
    return Panel.from_counts(n, d, n_tilde, d_tilde)


def write_panel_csv(panel: Panel, path=None) -> str:
    """Serialise ``panel`` as ``t,n,d,n_tilde,d_tilde`` CSV with LF endings.

    Returns the text; also writes it to ``path`` when given.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PANEL_HEADER)
    writer.writerows(panel)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def read_panel_csv(source) -> Panel:
    """Parse a panel CSV from a path or an open text stream.

    Raises
    ------
    PanelFormatError
        On a wrong header, a malformed row (with its line number), or a
        structurally invalid panel.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_panel_csv(fh)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise PanelFormatError("empty panel file", line=1) from None
    if tuple(h.strip() for h in header) != PANEL_HEADER:
        raise PanelFormatError(f"expected header {','.join(PANEL_HEADER)}", line=1)
    rows = []
    for record in reader:
        line = reader.line_num
        if not record or all(not f.strip() for f in record):
            continue
        if len(record) != 5:
            raise PanelFormatError(f"expected 5 fields, got {len(record)}", line=line)
        try:
            row = PanelRow(*(int(f.strip()) for f in record))
        except ValueError:
            raise PanelFormatError(f"non-integer field in {record!r}", line=line) from None
        if row.n < 1 or row.n_tilde < 1:
            raise PanelFormatError("cohort sizes must be >= 1", line=line)
        if not 0 <= row.d <= row.n or not 0 <= row.d_tilde <= row.n_tilde:
            raise PanelFormatError("event count outside [0, n]", line=line)
        if rows and row.t <= rows[-1].t:
            raise PanelFormatError("date indices must be strictly increasing", line=line)
        rows.append(row)
    if len(rows) < 2:
        raise PanelFormatError(f"a panel needs T > 1 observation dates, got T={len(rows)}")
    return Panel.from_rows(rows)
