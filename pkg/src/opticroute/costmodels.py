"""Microscopic cost models and the density -> cost-function map.

Each model turns a node density ``lam`` (nodes/m^2) into a resource cost per
meter of progress; dividing by ``c_nominal`` gives the unitless cost function
that plays the role of a refractive index.

Single-hop statistics come from a Monte-Carlo search for the node that
minimises ``(a d^b + c) / x`` in the positive quadrant.  Rather than sampling
a huge fixed window, the search grows a sequence of nested rectangles
``[0, D(r)] x [0, H(r)]``, each guaranteed to contain every point whose ratio
is at most ``r``; a trial stops as soon as its best ratio is certified.  The
result is exact for the Poisson process on the whole quadrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
from scipy.optimize import brentq

from ._backend import kernels
from .errors import ConvergenceError, DomainError, ParameterError, StateError
from .field import FieldKind, ScalarField2D

BANDWIDTH_NOMINAL = 4.0 * math.sqrt(2.0) / math.pi
ANCHOR_DENSITY = 0.05

_MAX_LEVELS = 48
_POISSON_CHUNK = 32.0
MIN_ENERGY_TRIALS = 10_000


def d_opt(a: float, b: float, c: float) -> float:
    """Hop length minimising ``(a d^b + c) / d``."""
    if not (a > 0 and c > 0):
        raise DomainError(f"d_opt needs a > 0 and c > 0, got a={a}, c={c}")
    if not b > 1:
        raise DomainError(f"d_opt needs b > 1 (no interior minimum for b={b})")
    return (c / ((b - 1.0) * a)) ** (1.0 / b)


def min_cost_per_meter(a: float, b: float, c: float) -> float:
    """Infimum of ``(a d^b + c) / d``, the infinite-density limit."""
    d = d_opt(a, b, c)
    if d > 0:
        return (a * d**b + c) / d
    # d_opt underflowed (subnormal c); the closed form needs no division by it
    return b / (b - 1.0) * c ** (1.0 - 1.0 / b) * ((b - 1.0) * a) ** (1.0 / b)


@dataclass(frozen=True)
class HopStats:
    mean_progress: float
    mean_cost: float
    mean_ratio: float
    n_trials: int
    se_progress: float = 0.0
    se_cost: float = 0.0
    se_ratio: float = 0.0
    cost_per_meter: float = math.nan
    se_cost_per_meter: float = 0.0
    n_enlarged: int = 0

    @classmethod
    def from_samples(cls, x: np.ndarray, cost: np.ndarray, n_enlarged: int = 0) -> "HopStats":
        n = len(x)
        ratio = cost / x
        mx, mc = float(np.mean(x)), float(np.mean(cost))
        rho = mc / mx
        sd = lambda v: float(np.std(v, ddof=1) / math.sqrt(n))
        return cls(
            mean_progress=mx,
            mean_cost=mc,
            mean_ratio=float(np.mean(ratio)),
            n_trials=n,
            se_progress=sd(x),
            se_cost=sd(cost),
            se_ratio=sd(ratio),
            cost_per_meter=rho,
            # delta method for a ratio of means
            se_cost_per_meter=sd(cost - rho * x) / mx,
            n_enlarged=int(n_enlarged),
        )


@dataclass(frozen=True)
class HopSample:
    """Raw per-trial outcomes of the single-hop search."""

    x: np.ndarray
    y: np.ndarray
    cost: np.ndarray
    levels: np.ndarray

    @property
    def distance(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @property
    def ratio(self) -> np.ndarray:
        return self.cost / self.x

    @property
    def n_enlarged(self) -> int:
        return int(np.count_nonzero(self.levels > 0))

    def stats(self) -> HopStats:
        return HopStats.from_samples(self.x, self.cost, self.n_enlarged)


def _level_schedule(lam: float, a: float, b: float, c: float):
    """Nested certification rectangles with expected point counts 1, 2, 4, ..."""
    if c < 1e-12 * a * lam ** (-0.5 * b):
        # adding c only raises ratios, so the c = 0 rectangles still certify;
        # a negligible c would otherwise underflow d_opt
        c = 0.0
    r_min = min_cost_per_meter(a, b, c) if c > 0 else 0.0

    def reach(r):
        if c == 0:
            return (r / a) ** (1.0 / (b - 1.0))
        d_hi = (r / a) ** (1.0 / (b - 1.0))
        lo = d_opt(a, b, c)
        g = lambda d: a * d**b + c - r * d
        if g(d_hi) <= 0:
            return d_hi
        return brentq(g, lo, d_hi, xtol=1e-14 * d_hi, rtol=1e-15, maxiter=200)

    def rect(r):
        D = reach(r)
        s = 0.0 if r_min == 0 else r_min / r
        return D, D * math.sqrt(max(0.0, 1.0 - s * s))

    def r_for_area(area):
        if c == 0:
            # D = H = (r/a)^(1/(b-1))  =>  r = a * area^((b-1)/2)
            return a * area ** ((b - 1.0) / 2.0)
        lo = r_min
        hi = max(2.0 * r_min, 1e-300)
        while rect(hi)[0] * rect(hi)[1] < area:
            hi *= 2.0
        f = lambda r: math.log(max(rect(r)[0] * rect(r)[1], 1e-300)) - math.log(area)
        return brentq(f, lo * (1 + 1e-15) + 1e-300, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=300)

    r_cert, D, H = [], [], []
    for k in range(_MAX_LEVELS):
        target = (2.0**k) / lam
        r = r_for_area(target)
        d, hgt = rect(r)
        # guard against roundoff making a rectangle smaller than its predecessor
        if D and (d < D[-1] or hgt < H[-1]):
            d, hgt = max(d, D[-1]), max(hgt, H[-1])
        r_cert.append(r)
        D.append(d)
        H.append(hgt)
    areas = np.array(D) * np.array(H)
    mu = lam * np.diff(np.concatenate([[0.0], areas]))
    mu = np.maximum(mu, 0.0)
    n_chunks = np.maximum(1, np.ceil(mu / _POISSON_CHUNK)).astype(np.int64)
    chunk_mean = mu / n_chunks
    return (
        np.array(D),
        np.array(H),
        chunk_mean,
        np.exp(-chunk_mean),
        n_chunks,
        np.array(r_cert),
    )


def sample_hops(lam: float, a: float, b: float, c: float, n_trials: int, seed: int) -> HopSample:
    """Run ``n_trials`` independent single-hop searches with cost ``a d^b + c``.

    ``c = 0`` is allowed here (``a=1, b=2, c=0`` is the quadratic
    bandwidth-limited cost).  Trial ``t`` draws from a stream keyed by
    ``(seed, t)``, so results do not depend on how trials are batched.
    """
    if not (lam > 0 and math.isfinite(lam)):
        raise DomainError(f"density must be positive, got {lam}")
    if not (a > 0 and b > 1 and c >= 0):
        raise ParameterError(f"need a > 0, b > 1, c >= 0; got a={a}, b={b}, c={c}")
    if n_trials < 2:
        raise ParameterError("need at least two trials")
    sched = _level_schedule(float(lam), float(a), float(b), float(c))
    x, y, cost, levels = kernels.hop_trials(int(seed), 0, int(n_trials), float(a), float(b), float(c), *sched)
    if np.any(levels < 0):
        raise ConvergenceError(f"{int(np.sum(levels < 0))} hop trials exhausted the search schedule")
    return HopSample(x, y, cost, levels)


def energy_cost_mc(lam: float, a: float, b: float, c: float, n_trials: int = MIN_ENERGY_TRIALS, seed: int = 0) -> HopStats:
    """Expected progress and cost per hop under the energy model ``a d^b + c``."""
    if n_trials < MIN_ENERGY_TRIALS:
        raise ParameterError(f"energy_cost_mc needs n_trials >= {MIN_ENERGY_TRIALS}, got {n_trials}")
    d_opt(a, b, c)
    return sample_hops(lam, a, b, c, n_trials, seed).stats()


def bandwidth_hop_formulas(lam: float) -> HopStats:
    """Closed-form hop statistics for the quadratic (bandwidth-limited) cost."""
    if not lam > 0:
        raise DomainError(f"density must be positive, got {lam}")
    ex = 1.0 / math.sqrt(2.0 * lam)
    ec = 4.0 / (math.pi * lam)
    return HopStats(
        mean_progress=ex,
        mean_cost=ec,
        mean_ratio=math.sqrt(2.0 / lam),
        n_trials=0,
        cost_per_meter=ec / ex,
    )


# -- models -----------------------------------------------------------------

def _check_density(lam):
    arr = np.asarray(lam, dtype=np.float64)
    if not np.all(arr > 0):
        raise DomainError(f"density must be positive, got {arr[arr <= 0].ravel()[0] if arr.ndim else arr}")
    return arr


def _loglinear(lams: np.ndarray, vals: np.ndarray, lam: np.ndarray) -> np.ndarray:
    lo, hi = lams[0], lams[-1]
    if np.any(lam < lo * (1 - 1e-12)) or np.any(lam > hi * (1 + 1e-12)):
        raise DomainError(f"density outside tabulated range [{lo:.6g}, {hi:.6g}]")
    return np.interp(np.log(lam), np.log(lams), vals)


def _scalar_or_array(arr: np.ndarray, lam):
    return float(arr) if np.ndim(lam) == 0 else arr


@dataclass(frozen=True)
class Bandwidth:
    """Quadratic transmission cost ``d^2``: cost ``1/sqrt(lam)`` at the default normalisation."""

    c_nominal: float = BANDWIDTH_NOMINAL
    name = "bandwidth"

    def evaluate(self, lam):
        arr = _check_density(lam)
        return _scalar_or_array((BANDWIDTH_NOMINAL / self.c_nominal) / np.sqrt(arr), lam)

    def to_dict(self):
        return {"type": self.name, "c_nominal": self.c_nominal}


@dataclass(frozen=True)
class MinHop:
    """Hop-count cost ``sqrt(lam)``."""

    c_nominal: float = 1.0
    name = "min_hop"

    def evaluate(self, lam):
        arr = _check_density(lam)
        return _scalar_or_array(np.sqrt(arr) / self.c_nominal, lam)

    def to_dict(self):
        return {"type": self.name, "c_nominal": self.c_nominal}


@dataclass(frozen=True)
class Constant:
    value: float = 1.0
    c_nominal: float = 1.0
    name = "constant"

    def __post_init__(self):
        if not self.value > 0:
            raise ParameterError("constant cost must be positive")

    def evaluate(self, lam):
        arr = _check_density(lam)
        return _scalar_or_array(np.full(arr.shape, self.value / self.c_nominal), lam)

    def to_dict(self):
        return {"type": self.name, "value": self.value, "c_nominal": self.c_nominal}


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Cost per meter sampled at increasing densities, interpolated log-linearly."""

    lambdas: np.ndarray
    costs: np.ndarray
    c_nominal: float = 1.0
    name = "tabulated"

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=np.float64)
        costs = np.asarray(self.costs, dtype=np.float64)
        if lams.ndim != 1 or lams.shape != costs.shape or len(lams) < 2:
            raise ParameterError("tabulated model needs matching 1-D arrays of length >= 2")
        if not (np.all(lams > 0) and np.all(np.diff(lams) > 0)):
            raise ParameterError("tabulated densities must be positive and strictly increasing")
        if not np.all(costs > 0):
            raise ParameterError("tabulated costs must be positive")
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "costs", costs)

    def evaluate(self, lam):
        arr = _check_density(lam)
        return _scalar_or_array(_loglinear(self.lambdas, self.costs, arr) / self.c_nominal, lam)

    def to_dict(self):
        return {"type": self.name, "lambda": self.lambdas.tolist(), "cost": self.costs.tolist(), "c_nominal": self.c_nominal}


@dataclass(frozen=True, eq=False)
class EnergyTable:
    """Monte-Carlo estimates of ``E[C]/E[X]`` (energy per meter) versus density."""

    lambdas: np.ndarray
    cost: np.ndarray
    std_error: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, EnergyTable):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("lambdas", "cost", "std_error"))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("lambda,cost,std_error\n")
            for row in zip(self.lambdas, self.cost, self.std_error):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        return path

    @classmethod
    def read_csv(cls, path) -> "EnergyTable":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy())


@dataclass(frozen=True)
class Energy:
    """Energy-limited model with transmission cost ``a d^b + c``.

    The density -> cost map is a Monte-Carlo table; call :meth:`build_table`
    first.  With ``c_nominal=None`` the curve is normalised to pass through
    cost 1 at density 0.05.
    """

    a: float
    b: float
    c: float
    c_nominal: float | None = None
    table: EnergyTable | None = field(default=None, compare=False)
    name = "energy"

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ParameterError(f"energy model needs a > 0 and c > 0, got a={self.a}, c={self.c}")
        if not (1 < self.b <= 6):
            raise ParameterError(f"energy exponent b must lie in (1, 6], got {self.b}")

    @property
    def d_opt(self) -> float:
        return d_opt(self.a, self.b, self.c)

    def build_table(
        self,
        lam_min: float,
        lam_max: float,
        n_trials: int = MIN_ENERGY_TRIALS,
        seed: int = 0,
        n_points: int = 64,
    ) -> "Energy":
        """Return a copy with a table over ``[lam_min/2, 2*lam_max]``."""
        if not (0 < lam_min <= lam_max):
            raise ParameterError("need 0 < lam_min <= lam_max")
        lams = np.geomspace(lam_min / 2.0, lam_max * 2.0, n_points)
        stats = [energy_cost_mc(float(l), self.a, self.b, self.c, n_trials, seed) for l in lams]
        table = EnergyTable(
            lams,
            np.array([s.cost_per_meter for s in stats]),
            np.array([s.se_cost_per_meter for s in stats]),
        )
        c_nom = self.c_nominal
        if c_nom is None:
            c_nom = energy_cost_mc(ANCHOR_DENSITY, self.a, self.b, self.c, n_trials, seed).cost_per_meter
        return replace(self, c_nominal=float(c_nom), table=table)

    def evaluate(self, lam):
        if self.table is None or self.c_nominal is None:
            raise StateError("energy model evaluated before its cost table was built")
        arr = _check_density(lam)
        return _scalar_or_array(_loglinear(self.table.lambdas, self.table.cost, arr) / self.c_nominal, lam)

    def to_dict(self):
        return {"type": self.name, "a": self.a, "b": self.b, "c": self.c, "c_nominal": self.c_nominal}


CostModel = Union[Bandwidth, MinHop, Constant, Energy, Tabulated]


def evaluate(model: CostModel, lam):
    """Unitless cost at density ``lam`` (scalar or array)."""
    return model.evaluate(lam)


def cost_model_from_dict(cfg: dict) -> CostModel:
    """Build a model from its JSON description (``{"type": ...}``)."""
    cfg = dict(cfg)
    kind = str(cfg.pop("type", "")).lower().replace("-", "_")
    c_nom = cfg.pop("c_nominal", None)
    extra = {} if c_nom is None else {"c_nominal": float(c_nom)}
    try:
        if kind == "bandwidth":
            return Bandwidth(**extra)
        if kind in ("min_hop", "minhop"):
            return MinHop(**extra)
        if kind == "constant":
            return Constant(float(cfg.get("value", 1.0)), **extra)
        if kind == "energy":
            return Energy(float(cfg["a"]), float(cfg["b"]), float(cfg["c"]), c_nominal=None if c_nom is None else float(c_nom))
        if kind == "tabulated":
            return Tabulated(np.asarray(cfg["lambda"], float), np.asarray(cfg["cost"], float), **extra)
    except KeyError as exc:
        raise ParameterError(f"cost model {kind!r} is missing parameter {exc.args[0]!r}") from None
    raise ParameterError(f"unknown cost model type {kind!r}")


def build_cost_field(
    density: ScalarField2D,
    model: CostModel,
    *,
    n_trials: int = MIN_ENERGY_TRIALS,
    seed: int = 0,
) -> ScalarField2D:
    """Apply ``model`` at every node of a density field.

    An :class:`Energy` model without a table gets one spanning the field's
    density range (``n_trials`` and ``seed`` feed the Monte Carlo).
    """
    lam = density.values
    if not np.all(lam > 0):
        i, j = np.unravel_index(np.argmin(lam), lam.shape)
        raise DomainError(f"density {lam[i, j]!r} at grid node ({i}, {j}) is not positive")
    if isinstance(model, Energy) and model.table is None:
        model = model.build_table(float(lam.min()), float(lam.max()), n_trials=n_trials, seed=seed)
    try:
        vals = np.asarray(model.evaluate(lam), dtype=np.float64)
    except DomainError as exc:
        flat = lam.ravel()
        for k, v in enumerate(flat):
            try:
                model.evaluate(float(v))
            except DomainError:
                i, j = np.unravel_index(k, lam.shape)
                raise DomainError(f"{exc} at grid node ({i}, {j})") from None
        raise
    return ScalarField2D(density.spec, vals, FieldKind.COST)
