"""Finite Poisson configurations and truncated intensity models.

A configuration is a finite set of timed, vector-valued jump atoms on a
window [0, T]; it is one realization of a Poisson random measure N with
intensity dt x sigma on [0, T] x R^d, where sigma is a finite (truncated)
jump measure.  This module hosts the creation/annihilation operators
(add_particle / remove_particle), the integrals N(f) and the compensated
integral, auxiliary uniform marks, and a line-oriented text serialization.

All types are immutable after construction and safe to share across
workers.  Atom equality is exact equality of the stored (time, mark) reals,
which is what unambiguous support membership for add/remove requires.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .rng import substream

__all__ = [
    "Atom",
    "Configuration",
    "MarkedConfiguration",
    "IntensityModel",
    "ConfigurationError",
    "InvalidModelError",
    "sample_configuration",
    "sample_configuration_from",
    "sample_batch",
    "BatchedConfigurations",
    "add_particle",
    "remove_particle",
    "attach_marks",
    "integrate",
    "compensated_integrate",
    "write_configuration",
    "read_configuration",
    "superpose",
]


class ConfigurationError(ValueError):
    """Raised for malformed atoms, configurations, or serialized data."""


class InvalidModelError(ValueError):
    """Raised when an intensity model has a nonpositive horizon or rate."""


@dataclass(frozen=True)
class Atom:
    """One jump: a time in [0, T] and a nonzero mark vector in R^d."""

    time: float
    mark: tuple[float, ...]

    def __init__(self, time: float, mark) -> None:
        mark_t = tuple(float(m) for m in np.atleast_1d(np.asarray(mark, dtype=float)))
        object.__setattr__(self, "time", float(time))
        object.__setattr__(self, "mark", mark_t)
        if not np.isfinite(self.time):
            raise ConfigurationError("atom time must be finite")
        if not all(np.isfinite(m) for m in mark_t):
            raise ConfigurationError("atom mark must be finite")
        if all(m == 0.0 for m in mark_t):
            raise ConfigurationError("atom mark must be a nonzero vector")

    @property
    def dim(self) -> int:
        return len(self.mark)

    def mark_array(self) -> np.ndarray:
        return np.asarray(self.mark, dtype=float)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Configuration:
    """A finite configuration: atoms sorted by strictly increasing time.

    Times are pairwise distinct (the time component of the intensity is
    diffuse); every mutation-returning operation maintains the sort order
    and never touches its input.
    """

    horizon: float
    dim: int
    times: np.ndarray
    marks: np.ndarray
    intensity_ref: str = "manual"

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _readonly(np.atleast_1d(self.times)))
        marks = np.asarray(self.marks, dtype=float)
        if marks.size == 0:
            marks = marks.reshape(0, self.dim)
        marks = np.atleast_2d(marks)
        object.__setattr__(self, "marks", _readonly(marks))
        self._validate()

    def _validate(self) -> None:
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise ConfigurationError("horizon must be positive and finite")
        if self.dim < 1:
            raise ConfigurationError("mark dimension must be >= 1")
        if self.times.ndim != 1 or self.marks.shape != (self.times.size, self.dim):
            raise ConfigurationError(
                f"shape mismatch: times {self.times.shape}, marks {self.marks.shape}, dim {self.dim}"
            )
        if self.times.size:
            if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.marks)):
                raise ConfigurationError("times and marks must be finite")
            if self.times[0] < 0.0 or self.times[-1] > self.horizon:
                raise ConfigurationError("atom times must lie in [0, T]")
            if np.any(np.diff(self.times) <= 0.0):
                raise ConfigurationError("atom times must be strictly increasing")
            if np.any(np.all(self.marks == 0.0, axis=1)):
                raise ConfigurationError("atom marks must be nonzero vectors")

    @classmethod
    def _from_arrays_unchecked(
        cls, horizon: float, dim: int, times: np.ndarray, marks: np.ndarray, intensity_ref: str
    ) -> "Configuration":
        # Hot-loop constructor for arrays already known to satisfy the invariants.
        obj = object.__new__(cls)
        object.__setattr__(obj, "horizon", horizon)
        object.__setattr__(obj, "dim", dim)
        object.__setattr__(obj, "times", times)
        object.__setattr__(obj, "marks", marks)
        object.__setattr__(obj, "intensity_ref", intensity_ref)
        return obj

    @property
    def n_atoms(self) -> int:
        return int(self.times.size)

    def atom(self, i: int) -> Atom:
        return Atom(self.times[i], self.marks[i])

    def __iter__(self) -> Iterator[Atom]:
        for i in range(self.n_atoms):
            yield self.atom(i)

    def __len__(self) -> int:
        return self.n_atoms

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.dim == other.dim
            and self.intensity_ref == other.intensity_ref
            and self.times.shape == other.times.shape
            and bool(np.all(self.times == other.times))
            and bool(np.all(self.marks == other.marks))
        )

    def __repr__(self) -> str:
        return (
            f"Configuration(T={self.horizon}, d={self.dim}, n={self.n_atoms}, "
            f"intensity_ref={self.intensity_ref!r})"
        )


@dataclass(frozen=True)
class MarkedConfiguration:
    """A configuration with one auxiliary uniform [0,1) mark per atom."""

    base: Configuration
    aux_marks: np.ndarray

    def __post_init__(self) -> None:
        aux = _readonly(np.atleast_1d(self.aux_marks))
        object.__setattr__(self, "aux_marks", aux)
        if aux.shape != (self.base.n_atoms,):
            raise ConfigurationError("one auxiliary mark per atom is required")
        if aux.size and (aux.min() < 0.0 or aux.max() >= 1.0):
            raise ConfigurationError("auxiliary marks must lie in [0, 1)")


@dataclass(frozen=True)
class IntensityModel:
    """A finite-activity jump intensity dt x sigma on [0, T] x R^d.

    sigma is the truncated jump measure (small jumps below `epsilon`
    removed), with total mass `rate`, a normalized sampler, a deterministic
    quadrature `sigma_integrate`, and the first-moment vector `mean` used as
    the compensator density.  `sigma_integrate(f)` integrates a vectorized
    mark function f((k, d) array) -> (k,) against sigma.
    """

    label: str
    family: str
    horizon: float
    dim: int
    epsilon: float
    rate: float
    jump_sampler: Callable[[np.random.Generator, int], np.ndarray]
    sigma_integrate: Callable[[Callable[[np.ndarray], np.ndarray]], float]
    mean: np.ndarray
    diffuse: bool = True

    def __post_init__(self) -> None:
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise InvalidModelError(f"nonpositive horizon {self.horizon}")
        if not (self.rate > 0.0 and np.isfinite(self.rate)):
            raise InvalidModelError(f"rate must be finite and positive, got {self.rate}")
        if self.dim < 1:
            raise InvalidModelError("mark dimension must be >= 1")
        if self.epsilon < 0.0:
            raise InvalidModelError("truncation level must be >= 0")
        object.__setattr__(self, "mean", _readonly(np.atleast_1d(self.mean)))
        if self.mean.shape != (self.dim,):
            raise InvalidModelError("compensator mean must have shape (dim,)")

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n marks from sigma / rate, shaped (n, dim)."""
        out = np.asarray(self.jump_sampler(rng, n), dtype=float).reshape(n, self.dim)
        # exact zero marks have probability zero; redraw defensively
        bad = np.all(out == 0.0, axis=1)
        while np.any(bad):
            out[bad] = np.asarray(self.jump_sampler(rng, int(bad.sum())), dtype=float).reshape(-1, self.dim)
            bad = np.all(out == 0.0, axis=1)
        return out

    def nu_integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integrate a time-homogeneous mark function against dt x sigma."""
        return self.horizon * self.sigma_integrate(f)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_configuration(model: IntensityModel, seed: int) -> Configuration:
    """Draw one configuration: Poisson(rate*T) atoms, uniform times, sigma marks."""
    return sample_configuration_from(model, substream(seed))


def sample_configuration_from(model: IntensityModel, rng: np.random.Generator) -> Configuration:
    """Like sample_configuration but drawing from an explicit stream."""
    if not (model.rate > 0.0 and model.horizon > 0.0):
        raise InvalidModelError("model with nonpositive rate or horizon")
    n = int(rng.poisson(model.rate * model.horizon))
    times = np.sort(rng.uniform(0.0, model.horizon, size=n))
    while n > 1 and np.any(np.diff(times) <= 0.0):  # ties have probability ~0
        times = np.sort(rng.uniform(0.0, model.horizon, size=n))
    marks = model.sample_marks(rng, n)
    return Configuration(model.horizon, model.dim, times, marks, intensity_ref=model.label)


@dataclass(frozen=True)
class BatchedConfigurations:
    """A flat batch of sampled configurations for vectorized estimators.

    Atom data of sample i lives in rows offsets[i]:offsets[i+1]; sample_index
    maps each flat row back to its sample.
    """

    model: IntensityModel
    nsamples: int
    counts: np.ndarray        # (nsamples,)
    offsets: np.ndarray       # (nsamples + 1,)
    times: np.ndarray         # (total,)
    marks: np.ndarray         # (total, d)

    @property
    def sample_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.nsamples), self.counts)

    def config(self, i: int) -> Configuration:
        # invariants hold by construction (sampler output); skip re-validation
        lo, hi = self.offsets[i], self.offsets[i + 1]
        order = np.argsort(self.times[lo:hi], kind="stable")
        times = self.times[lo:hi][order]
        marks = self.marks[lo:hi][order]
        times.setflags(write=False)
        marks.setflags(write=False)
        return Configuration._from_arrays_unchecked(
            self.model.horizon, self.model.dim, times, marks, self.model.label
        )

    def sum_per_sample(self, values: np.ndarray) -> np.ndarray:
        """Sum per-atom values (total,) into per-sample totals (nsamples,)."""
        return np.bincount(self.sample_index, weights=values, minlength=self.nsamples)


def sample_batch(model: IntensityModel, nsamples: int, seed: int) -> BatchedConfigurations:
    """Draw nsamples configurations in flat arrays (times unsorted within samples)."""
    rng = substream(seed)
    counts = rng.poisson(model.rate * model.horizon, size=nsamples)
    total = int(counts.sum())
    times = rng.uniform(0.0, model.horizon, size=total)
    marks = model.sample_marks(rng, total)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return BatchedConfigurations(model, nsamples, counts, offsets, times, marks)


# ---------------------------------------------------------------------------
# creation / annihilation
# ---------------------------------------------------------------------------

def _find_atom(cfg: Configuration, a: Atom) -> int:
    """Index of the atom equal to a, or -1."""
    i = int(np.searchsorted(cfg.times, a.time))
    if i < cfg.n_atoms and cfg.times[i] == a.time and tuple(cfg.marks[i]) == a.mark:
        return i
    return -1


def add_particle(cfg: Configuration, a: Atom) -> Configuration:
    """Insert atom a in time order; identity if a is already in the support."""
    if a.dim != cfg.dim:
        raise ConfigurationError(f"atom dimension {a.dim} != configuration dimension {cfg.dim}")
    if not (0.0 <= a.time <= cfg.horizon):
        raise ConfigurationError(f"atom time {a.time} outside [0, {cfg.horizon}]")
    i = int(np.searchsorted(cfg.times, a.time))
    if i < cfg.n_atoms and cfg.times[i] == a.time:
        if tuple(cfg.marks[i]) == a.mark:
            return cfg
        raise ConfigurationError(f"time collision at t={a.time} with a different mark")
    times = np.insert(cfg.times, i, a.time)
    marks = np.insert(cfg.marks, i, a.mark_array(), axis=0)
    times.setflags(write=False)
    marks.setflags(write=False)
    return Configuration._from_arrays_unchecked(cfg.horizon, cfg.dim, times, marks, cfg.intensity_ref)


def remove_particle(cfg: Configuration, a: Atom) -> Configuration:
    """Remove the atom equal to a if present; identity off the support."""
    i = _find_atom(cfg, a)
    if i < 0:
        return cfg
    return remove_index(cfg, i)


def remove_index(cfg: Configuration, i: int) -> Configuration:
    """Remove the i-th atom (used by the per-atom engine loops)."""
    times = np.delete(cfg.times, i)
    marks = np.delete(cfg.marks, i, axis=0)
    times.setflags(write=False)
    marks.setflags(write=False)
    return Configuration._from_arrays_unchecked(cfg.horizon, cfg.dim, times, marks, cfg.intensity_ref)


def attach_marks(cfg: Configuration, seed: int) -> MarkedConfiguration:
    """Attach one uniform [0,1) auxiliary mark per atom, deterministic per seed."""
    rng = substream(seed)
    return MarkedConfiguration(cfg, rng.random(cfg.n_atoms))


def superpose(a: Configuration, b: Configuration, intensity_ref: str = "superposed") -> Configuration:
    """Merge two configurations on the same window (independent components)."""
    if a.horizon != b.horizon or a.dim != b.dim:
        raise ConfigurationError("superposition requires matching horizon and dimension")
    times = np.concatenate([a.times, b.times])
    marks = np.concatenate([a.marks, b.marks], axis=0)
    order = np.argsort(times, kind="stable")
    return Configuration(a.horizon, a.dim, times[order], marks[order], intensity_ref=intensity_ref)


# ---------------------------------------------------------------------------
# integrals
# ---------------------------------------------------------------------------

def integrate(cfg: Configuration, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    """N(f): sum of f over atoms; f(times (n,), marks (n,d)) -> (n,)."""
    if cfg.n_atoms == 0:
        return 0.0
    return float(np.sum(f(cfg.times, cfg.marks)))


def compensated_integrate(
    cfg: Configuration,
    model: IntensityModel,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    time_dependent: bool = False,
    n_time_nodes: int = 64,
) -> float:
    """(N - nu)(f) for the truncated intensity nu = dt x sigma.

    Time-homogeneous f costs one sigma quadrature; time-dependent f uses a
    Gauss-Legendre rule in time on top of the sigma quadrature.
    """
    jump_part = integrate(cfg, f)
    try:
        if time_dependent:
            nodes, weights = np.polynomial.legendre.leggauss(n_time_nodes)
            ts = 0.5 * model.horizon * (nodes + 1.0)
            ws = 0.5 * model.horizon * weights
            comp = sum(
                w * model.sigma_integrate(lambda xs, t=t: f(np.full(len(xs), t), xs))
                for t, w in zip(ts, ws)
            )
        else:
            comp = model.horizon * model.sigma_integrate(lambda xs: f(np.zeros(len(xs)), xs))
    except Exception as exc:  # pragma: no cover - quadrature diagnostics
        raise ConfigurationError(f"compensator quadrature failed: {exc}") from exc
    if not np.isfinite(comp):
        raise ConfigurationError(f"compensator quadrature returned {comp}")
    return jump_part - comp


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_configuration(cfg: Configuration) -> str:
    """Serialize to the line format: header 'T d n', then 'time mark_1 .. mark_d'."""
    lines = [f"{cfg.horizon:.17g} {cfg.dim} {cfg.n_atoms}"]
    for i in range(cfg.n_atoms):
        row = " ".join(f"{v:.17g}" for v in (cfg.times[i], *cfg.marks[i]))
        lines.append(row)
    return "\n".join(lines) + "\n"


def read_configuration(text: str, intensity_ref: str = "manual") -> Configuration:
    """Parse the line format; rejects unsorted or duplicate times."""
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise ConfigurationError("empty configuration text")
    head = rows[0].split()
    if len(head) != 3:
        raise ConfigurationError(f"bad header {rows[0]!r}, expected 'T d n'")
    horizon, dim, n = float(head[0]), int(head[1]), int(head[2])
    if len(rows) - 1 != n:
        raise ConfigurationError(f"expected {n} atom lines, found {len(rows) - 1}")
    times = np.empty(n)
    marks = np.empty((n, dim))
    for i, ln in enumerate(rows[1:]):
        vals = [float(v) for v in ln.split()]
        if len(vals) != 1 + dim:
            raise ConfigurationError(f"atom line {i + 2}: expected {1 + dim} fields, got {len(vals)}")
        times[i] = vals[0]
        marks[i] = vals[1:]
    if n > 1 and np.any(np.diff(times) <= 0.0):
        raise ConfigurationError("atom times must be strictly increasing (no duplicates)")
    return Configuration(horizon, dim, times, marks, intensity_ref=intensity_ref)
