"""Functionals of Poisson configurations with added-particle derivatives.

Each functional exposes two callables: ``value(cfg)``, the pathwise
evaluation F(w), and ``add_derivative(cfg, t, x)``, the (m x d) Jacobian of
x -> F(cfg + atom(t, x)) in the mark of the inserted atom.  The derivative
is taken only with respect to the mark; the insertion time enters as a
parameter.  This pair is exactly what the carre-du-champ engine consumes:
it lends a particle at each atom of the configuration, differentiates, and
takes the particle back before integrating against N.

Closed derivatives are provided where a pathwise formula exists; the SDE
solver falls back to central finite differences over full re-evaluation.
All paths are the compensated paths of the truncated model: jump sums minus
the linear compensator drift t * mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .configuration import Atom, Configuration, IntensityModel, add_particle

__all__ = [
    "Functional",
    "FunctionalError",
    "finite_difference_add_derivative",
    "stack_functionals",
    "scale_functional",
    "compose_functional",
    "PiecewiseConstant",
    "make_path_eval",
    "make_doleans",
    "make_pair_doleans",
    "make_stochastic_area",
    "make_time_integral",
    "make_generalized_ou",
    "make_running_sup",
    "make_nearest_point",
    "make_jump_sde",
    "make_triangular_sde",
    "FUNCTIONAL_BUILDERS",
    "build_functional",
]


class FunctionalError(ValueError):
    """Raised for domain violations or incompatible parameters."""


@dataclass(frozen=True)
class Functional:
    """A configuration functional with its added-particle mark derivative."""

    label: str
    out_dim: int
    mark_dim: int
    value: Callable[[Configuration], np.ndarray]
    add_derivative: Callable[[Configuration, float, np.ndarray], np.ndarray]
    has_closed_derivative: bool = True


# finite-difference step per mark coordinate
def _fd_step(xk: float) -> float:
    return max(1e-5, 1e-7 * abs(xk))


def finite_difference_add_derivative(
    value: Callable[[Configuration], np.ndarray],
    cfg: Configuration,
    t: float,
    x: np.ndarray,
    out_dim: int,
) -> np.ndarray:
    """Central-difference Jacobian of the added-particle map x -> F(cfg + (t, x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    jac = np.empty((out_dim, d))
    for k in range(d):
        h = _fd_step(x[k])
        for _ in range(4):
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            if np.any(xp != 0.0) and np.any(xm != 0.0):
                break
            h *= 0.5  # avoid the excluded zero mark
        fp = np.atleast_1d(value(add_particle(cfg, Atom(t, xp))))
        fm = np.atleast_1d(value(add_particle(cfg, Atom(t, xm))))
        jac[:, k] = (fp - fm) / (2.0 * h)
    return jac


def with_fd_derivative(label: str, out_dim: int, mark_dim: int, value) -> Functional:
    """Wrap a raw value map into a Functional differentiated by finite differences."""

    def add_derivative(cfg: Configuration, t: float, x: np.ndarray) -> np.ndarray:
        return finite_difference_add_derivative(value, cfg, t, x, out_dim)

    return Functional(label, out_dim, mark_dim, value, add_derivative, has_closed_derivative=False)


def stack_functionals(fs: Sequence[Functional], label: str | None = None) -> Functional:
    """Concatenate functionals into one vector-valued functional."""
    if len({f.mark_dim for f in fs}) != 1:
        raise FunctionalError("stacked functionals must share the mark dimension")
    m = sum(f.out_dim for f in fs)

    def value(cfg: Configuration) -> np.ndarray:
        return np.concatenate([np.atleast_1d(f.value(cfg)) for f in fs])

    def add_derivative(cfg: Configuration, t: float, x: np.ndarray) -> np.ndarray:
        return np.vstack([f.add_derivative(cfg, t, x) for f in fs])

    return Functional(
        label or "+".join(f.label for f in fs),
        m,
        fs[0].mark_dim,
        value,
        add_derivative,
        has_closed_derivative=all(f.has_closed_derivative for f in fs),
    )


def scale_functional(f: Functional, c: float) -> Functional:
    return replace(
        f,
        label=f"{c}*{f.label}",
        value=lambda cfg: c * np.atleast_1d(f.value(cfg)),
        add_derivative=lambda cfg, t, x: c * f.add_derivative(cfg, t, x),
    )


def compose_functional(
    phi: Callable[[np.ndarray], float],
    grad_phi: Callable[[np.ndarray], np.ndarray],
    f: Functional,
    label: str = "phi(F)",
) -> Functional:
    """Scalar composition phi(F) with the chain-rule added-particle derivative.

    The gradient of phi is evaluated at F of the configuration with the
    particle added, which is the correct pathwise object before the
    particle is taken back.
    """

    def value(cfg: Configuration) -> np.ndarray:
        return np.atleast_1d(float(phi(np.atleast_1d(f.value(cfg)))))

    def add_derivative(cfg: Configuration, t: float, x: np.ndarray) -> np.ndarray:
        vals_plus = np.atleast_1d(f.value(add_particle(cfg, Atom(t, x))))
        d_inner = f.add_derivative(cfg, t, x)
        return np.atleast_2d(np.asarray(grad_phi(vals_plus), dtype=float) @ d_inner)

    return Functional(label, 1, f.mark_dim, value, add_derivative, f.has_closed_derivative)


# ---------------------------------------------------------------------------
# path helpers
# ---------------------------------------------------------------------------

def _upto(cfg: Configuration, t: float, strict: bool = False) -> slice:
    side = "left" if strict else "right"
    return slice(0, int(np.searchsorted(cfg.times, t, side=side)))


def _path_value(cfg: Configuration, mean: np.ndarray, s: float, strict: bool = False) -> np.ndarray:
    """Compensated path at s (left limit if strict)."""
    sel = _upto(cfg, s, strict)
    return cfg.marks[sel].sum(axis=0) - s * mean


def _check_window(t: float, horizon: float) -> None:
    if not (0.0 < t <= horizon):
        raise FunctionalError(f"evaluation time {t} outside (0, {horizon}]")


# ---------------------------------------------------------------------------
# worked functionals
# ---------------------------------------------------------------------------

def make_path_eval(model: IntensityModel, t: float) -> Functional:
    """The compensated path Y_t itself (one output per mark coordinate)."""
    _check_window(t, model.horizon)
    mean = model.mean
    d = model.dim
    eye = np.eye(d)
    zero = np.zeros((d, d))

    def value(cfg: Configuration) -> np.ndarray:
        return _path_value(cfg, mean, t)

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        return eye if alpha <= t else zero

    return Functional(f"path_eval(t={t})", d, d, value, add_derivative)


def _doleans_value(cfg: Configuration, mean: np.ndarray, t: float) -> float:
    # exp(Y_t) prod (1 + dY) exp(-dY) collapses to exp(-t*mean) prod (1 + dY)
    jumps = cfg.marks[_upto(cfg, t), 0]
    if np.any(jumps <= -1.0):
        raise FunctionalError("exponential functional needs all marks > -1")
    return math.exp(-t * mean[0]) * float(np.prod(1.0 + jumps))


def make_doleans(model: IntensityModel, t: float) -> Functional:
    """The exponential of the compensated path: solution of dZ = Z_- dY."""
    _check_window(t, model.horizon)
    if model.dim != 1:
        raise FunctionalError("exponential functional ships for mark dimension 1")
    mean = model.mean

    def value(cfg: Configuration) -> np.ndarray:
        return np.array([_doleans_value(cfg, mean, t)])

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        # adding a jump y at alpha <= t multiplies the value by (1 + y)
        if alpha > t:
            return np.zeros((1, 1))
        return np.array([[_doleans_value(cfg, mean, t)]])

    return Functional(f"doleans(t={t})", 1, 1, value, add_derivative)


def make_pair_doleans(model: IntensityModel, t: float) -> Functional:
    """The pair (Y_t, exponential of Y at t); derivative column (1, value)."""
    return stack_functionals(
        [make_path_eval(model, t), make_doleans(model, t)], label=f"pair_doleans(t={t})"
    )


def make_stochastic_area(model: IntensityModel, t: float) -> Functional:
    """(X1(t), X2(t), area), area = int X1(s-) dX2 - int X2(s-) dX1.

    Both coordinates are compensated paths; the stochastic integrals expand
    pathwise into jump sums plus the closed-form integral of the
    piecewise-linear path against the linear drift.
    """
    _check_window(t, model.horizon)
    if model.dim != 2:
        raise FunctionalError("stochastic area needs mark dimension 2")
    mean = model.mean

    def value(cfg: Configuration) -> np.ndarray:
        sel = _upto(cfg, t)
        ts = cfg.times[sel]
        dj = cfg.marks[sel]
        n = ts.size
        jved = np.vstack([np.zeros(2), np.cumsum(dj, axis=0)])  # J after i jumps
        left = jved[:n] - ts[:, None] * mean                      # X(tau_i-)
        area = float(np.sum(left[:, 0] * dj[:, 1] - left[:, 1] * dj[:, 0]))
        # drift corrections -mu2 int X1 + mu1 int X2 with int X = int J - mu t^2/2
        seg = np.diff(np.concatenate([ts, [t]])) if n else np.array([])
        int_j = jved[1:].T @ seg if n else np.zeros(2)
        int_x = int_j - mean * 0.5 * t * t
        area += -mean[1] * int_x[0] + mean[0] * int_x[1]
        xt = jved[n] - t * mean
        return np.array([xt[0], xt[1], area])

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        if alpha > t:
            return np.zeros((3, 2))
        xt = _path_value(cfg, mean, t)
        xa = _path_value(cfg, mean, alpha)
        xam = _path_value(cfg, mean, alpha, strict=True)
        a = xt[1] - xa[1] - xam[1]
        b = xt[0] - xa[0] - xam[0]
        return np.array([[1.0, 0.0], [0.0, 1.0], [a, -b]])

    return Functional(f"area(t={t})", 3, 2, value, add_derivative)


_GL8_NODES, _GL8_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _segment_quad(fn: Callable[[float], np.ndarray], a: float, b: float) -> np.ndarray:
    """8-point Gauss-Legendre of a vector-valued integrand on [a, b]."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    acc = 0.0
    for node, w in zip(_GL8_NODES, _GL8_WEIGHTS):
        acc = acc + w * np.asarray(fn(mid + half * node))
    return half * acc


def make_time_integral(
    model: IntensityModel,
    g: Callable[[np.ndarray], np.ndarray],
    gprime: Callable[[np.ndarray], np.ndarray],
    t: float = 1.0,
    out_dim: int = 1,
    label: str = "time_integral",
) -> Functional:
    """int_0^t g(Y_s) ds along the piecewise-linear compensated path.

    g maps R^d -> R^m with Jacobian gprime; integration is 8-point
    Gauss-Legendre per inter-jump segment, exact for the shipped polynomial
    probes.  The added-particle derivative is int_alpha^t gprime(Y_s + x) ds.
    """
    _check_window(t, model.horizon)
    mean = model.mean
    d = model.dim

    def segments(cfg: Configuration, start: float) -> list[tuple[float, float]]:
        inner = cfg.times[(cfg.times > start) & (cfg.times < t)]
        pts = np.concatenate([[start], inner, [t]])
        return [(pts[i], pts[i + 1]) for i in range(pts.size - 1) if pts[i + 1] > pts[i]]

    def value(cfg: Configuration) -> np.ndarray:
        acc = np.zeros(out_dim)
        for a, b in segments(cfg, 0.0):
            base = cfg.marks[_upto(cfg, a)].sum(axis=0)
            acc = acc + _segment_quad(lambda s: np.atleast_1d(g(base - s * mean)), a, b)
        return acc

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        if alpha >= t:
            return np.zeros((out_dim, d))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        acc = np.zeros((out_dim, d))
        for a, b in segments(cfg, alpha):
            base = cfg.marks[_upto(cfg, a)].sum(axis=0) + x
            acc = acc + _segment_quad(
                lambda s: np.atleast_2d(gprime(base - s * mean)), a, b
            )
        return acc

    return Functional(f"{label}(t={t})", out_dim, d, value, add_derivative)


def make_generalized_ou(model: IntensityModel, x0: float, t: float) -> Functional:
    """exp(xi_t) (x0 + int_0^t exp(-xi_s-) d eta_s) for a 2-d driver (xi, eta).

    Mark coordinates are (xi-jump, eta-jump); the exponential of the
    piecewise-linear xi path is integrated in closed form on inter-jump
    segments, so the whole evaluation is quadrature-free.
    """
    _check_window(t, model.horizon)
    if model.dim != 2:
        raise FunctionalError("generalized O-U needs mark dimension 2 (xi, eta jumps)")
    mu_xi, mu_eta = float(model.mean[0]), float(model.mean[1])

    def xi_at(cfg: Configuration, s: float, strict: bool = False) -> float:
        return float(cfg.marks[_upto(cfg, s, strict), 0].sum() - mu_xi * s)

    def exp_neg_xi_integral(cfg: Configuration, b: float) -> float:
        """int_0^b exp(-xi_s) ds, closed form per segment."""
        ts = cfg.times[_upto(cfg, b)]
        pts = np.concatenate([[0.0], ts[ts > 0.0], [b]])
        acc = 0.0
        cum = 0.0
        k = 0
        for i in range(pts.size - 1):
            a, q = pts[i], pts[i + 1]
            while k < cfg.n_atoms and cfg.times[k] <= a:
                cum += cfg.marks[k, 0]
                k += 1
            if q > a:
                if mu_xi == 0.0:
                    acc += math.exp(-cum) * (q - a)
                else:
                    acc += math.exp(-cum) * (math.exp(mu_xi * q) - math.exp(mu_xi * a)) / mu_xi
        return acc

    def eta_integral(cfg: Configuration, b: float) -> float:
        """int_[0,b] exp(-xi_s-) d eta_s: jumps at times <= b plus drift part."""
        sel = _upto(cfg, b)
        acc = 0.0
        for i in range(sel.stop):
            de = cfg.marks[i, 1]
            if de != 0.0:
                acc += math.exp(-xi_at(cfg, cfg.times[i], strict=True)) * de
        return acc - mu_eta * exp_neg_xi_integral(cfg, b)

    def value(cfg: Configuration) -> np.ndarray:
        return np.array([math.exp(xi_at(cfg, t)) * (x0 + eta_integral(cfg, t))])

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        if alpha > t:
            return np.zeros((1, 2))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        dxi, deta = float(x[0]), float(x[1])
        front = math.exp(xi_at(cfg, t) + dxi)
        disc = math.exp(-xi_at(cfg, alpha, strict=True))
        d_xi = front * (x0 + eta_integral(cfg, alpha) + disc * deta)
        d_eta = front * disc
        return np.array([[d_xi, d_eta]])

    return Functional(f"gou(x0={x0},t={t})", 1, 2, value, add_derivative)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous piecewise-constant function on [0, inf)."""

    breaks: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        if len(self.breaks) != len(self.values) or not self.breaks:
            raise FunctionalError("one value per breakpoint is required")
        if self.breaks[0] != 0.0 or any(
            b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])
        ):
            raise FunctionalError("breakpoints must start at 0 and increase")

    def __call__(self, s: float) -> float:
        i = int(np.searchsorted(self.breaks, s, side="right")) - 1
        return self.values[max(i, 0)]

    def left(self, s: float) -> float:
        i = int(np.searchsorted(self.breaks, s, side="left")) - 1
        return self.values[max(i, 0)]


def make_running_sup(
    model: IntensityModel, t: float, K: PiecewiseConstant | None = None
) -> Functional:
    """sup_{s<=t} (Y_s + K_s) for a piecewise-constant deterministic K.

    The path is piecewise linear between jump and breakpoint times, so the
    sup is attained at segment endpoints.  The added-particle derivative is
    1 when the post-insertion argmax lies at or after the insertion time
    (ties resolve to 1), else 0.
    """
    _check_window(t, model.horizon)
    if model.dim != 1:
        raise FunctionalError("running sup ships for mark dimension 1")
    K = K or PiecewiseConstant()
    mu = float(model.mean[0])

    def H(cfg: Configuration, s: float) -> float:
        return float(cfg.marks[_upto(cfg, s), 0].sum() - mu * s + K(s))

    def H_left(cfg: Configuration, s: float) -> float:
        return float(cfg.marks[_upto(cfg, s, strict=True), 0].sum() - mu * s + K.left(s))

    def events(cfg: Configuration, lo: float, hi: float) -> np.ndarray:
        ev = [lo, hi]
        ev.extend(cfg.times[(cfg.times > lo) & (cfg.times < hi)])
        ev.extend(b for b in K.breaks if lo < b < hi)
        return np.unique(np.asarray(ev))

    def sup_closed(cfg: Configuration, lo: float, hi: float) -> float:
        """sup of H over the closed interval [lo, hi]."""
        best = -math.inf
        for s in events(cfg, lo, hi):
            best = max(best, H(cfg, s))
            if s > lo:
                best = max(best, H_left(cfg, s))
        return best

    def sup_before(cfg: Configuration, a: float) -> float:
        """sup of H over [0, a): right values strictly before a, left limit at a."""
        if a <= 0.0:
            return -math.inf
        best = H_left(cfg, a)
        for s in events(cfg, 0.0, a):
            if s < a:
                best = max(best, H(cfg, s))
            if 0.0 < s < a:
                best = max(best, H_left(cfg, s))
        return best

    def value(cfg: Configuration) -> np.ndarray:
        return np.array([sup_closed(cfg, 0.0, t)])

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        if alpha > t:
            return np.zeros((1, 1))
        y = float(np.atleast_1d(x)[0])
        after = sup_closed(cfg, alpha, t) + y
        before = sup_before(cfg, alpha)
        return np.array([[1.0 if after >= before else 0.0]])

    return Functional(f"sup(t={t})", 1, 1, value, add_derivative)


def make_nearest_point(model: IntensityModel) -> Functional:
    """Distance from the origin to the nearest mark (times are ignored).

    Empty configurations evaluate to +inf; diagnostics that use this
    functional condition on at least one atom.
    """
    d = model.dim

    def value(cfg: Configuration) -> np.ndarray:
        if cfg.n_atoms == 0:
            return np.array([math.inf])
        return np.array([float(np.min(np.linalg.norm(cfg.marks, axis=1)))])

    def add_derivative(cfg: Configuration, alpha: float, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r = float(np.linalg.norm(x))
        if r > value(cfg)[0]:
            return np.zeros((1, d))
        return (x / r).reshape(1, d)

    return Functional("nearest", 1, d, value, add_derivative)


def make_jump_sde(
    model: IntensityModel,
    c: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    t: float,
    euler_step: float = 1e-2,
    state_dim: int | None = None,
    compensator: Callable[[float, np.ndarray], np.ndarray] | str | None = "quadrature",
    label: str = "jump_sde",
) -> Functional:
    """Pure-jump SDE dX = c(s, X_-, u) dN~ solved pathwise.

    Jumps apply c at each atom; between jumps the compensator drift
    -int c(s, X, u) sigma(du) is advanced by explicit Euler with step
    euler_step.  `compensator` may be a closed-form callable (s, X) -> drift
    vector, the string "linear_mark" (valid when c is linear in the mark,
    drift = c(s, X, mean)), or "quadrature" for the generic slow path.
    Derivatives are finite differences over full re-evaluation.
    """
    _check_window(t, model.horizon)
    if euler_step <= 0.0:
        raise FunctionalError("euler step must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    m = state_dim or x0.size
    if x0.size != m:
        raise FunctionalError("x0 must have the state dimension")

    if callable(compensator):
        drift = compensator
    elif compensator == "linear_mark":
        def drift(s: float, state: np.ndarray) -> np.ndarray:
            return np.atleast_1d(c(s, state, model.mean))
    elif compensator == "quadrature":
        def drift(s: float, state: np.ndarray) -> np.ndarray:
            return np.array(
                [
                    model.sigma_integrate(
                        lambda us, j=j: np.array([np.atleast_1d(c(s, state, u))[j] for u in us])
                    )
                    for j in range(m)
                ]
            )
    else:
        raise FunctionalError(f"unknown compensator mode {compensator!r}")

    drift_free = compensator == "linear_mark" and bool(np.all(model.mean == 0.0))

    def advance(state: np.ndarray, a: float, b: float) -> np.ndarray:
        if b <= a or drift_free:
            return state
        nsteps = max(1, math.ceil((b - a) / euler_step))
        h = (b - a) / nsteps
        s = a
        for _ in range(nsteps):
            state = state - h * drift(s, state)
            s += h
        return state

    def value(cfg: Configuration) -> np.ndarray:
        state = x0.copy()
        s = 0.0
        for i in range(int(np.searchsorted(cfg.times, t, side="right"))):
            tau = float(cfg.times[i])
            state = advance(state, s, tau)
            state = state + np.atleast_1d(c(tau, state, cfg.marks[i]))
            s = tau
        return advance(state, s, t)

    return with_fd_derivative(f"{label}(t={t})", m, model.dim, value)


def make_triangular_sde(
    model: IntensityModel,
    z0: Sequence[float] = (0.0, 0.0, 0.0),
    t: float = 1.0,
    euler_step: float = 1e-2,
) -> Functional:
    """Triangular 3-d system driven by a 2-d jump path.

    dZ1 = dY1, dZ2 = 2 Z1_- dY1 + dY2, dZ3 = Z1_- dY1 + 2 dY2: a degenerate
    system whose jump-driven version still spreads over R^3.
    """
    if model.dim != 2:
        raise FunctionalError("this preset needs mark dimension 2")

    def c(s: float, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.array([u[0], 2.0 * z[0] * u[0] + u[1], z[0] * u[0] + 2.0 * u[1]])

    return make_jump_sde(
        model,
        c,
        np.asarray(z0, dtype=float),
        t,
        euler_step=euler_step,
        state_dim=3,
        compensator="linear_mark",
        label="jump_sde[triangular]",
    )


# ---------------------------------------------------------------------------
# registry for the experiment runner
# ---------------------------------------------------------------------------

_TIME_INTEGRAL_PROBES: dict[str, tuple[Callable, Callable]] = {
    "identity": (lambda y: y[:1], lambda y: np.eye(1, y.size)),
    "square": (
        lambda y: np.array([float(y @ y)]),
        lambda y: 2.0 * y.reshape(1, -1),
    ),
    "cubic": (
        lambda y: np.array([float(np.sum(y**3))]),
        lambda y: 3.0 * (y**2).reshape(1, -1),
    ),
}


def _build_time_integral(model: IntensityModel, params: dict) -> Functional:
    name = params.pop("g", "square")
    if name not in _TIME_INTEGRAL_PROBES:
        raise FunctionalError(f"unknown probe g={name!r}; known: {sorted(_TIME_INTEGRAL_PROBES)}")
    g, gp = _TIME_INTEGRAL_PROBES[name]
    return make_time_integral(model, g, gp, label=f"time_integral[{name}]", **params)


def _build_sup(model: IntensityModel, params: dict) -> Functional:
    breaks = tuple(params.pop("k_breaks", (0.0,)))
    values = tuple(params.pop("k_values", (0.0,)))
    return make_running_sup(model, K=PiecewiseConstant(breaks, values), **params)


FUNCTIONAL_BUILDERS: dict[str, dict] = {
    "path_eval": {"build": lambda model, p: make_path_eval(model, **p), "params": "t"},
    "doleans": {"build": lambda model, p: make_doleans(model, **p), "params": "t"},
    "pair_doleans": {"build": lambda model, p: make_pair_doleans(model, **p), "params": "t"},
    "area": {"build": lambda model, p: make_stochastic_area(model, **p), "params": "t"},
    "time_integral": {
        "build": _build_time_integral,
        "params": "t=1, g=identity|square|cubic",
    },
    "gou": {"build": lambda model, p: make_generalized_ou(model, **p), "params": "x0, t"},
    "sup": {"build": _build_sup, "params": "t, k_breaks=[0], k_values=[0]"},
    "nearest": {"build": lambda model, p: make_nearest_point(model, **p), "params": "(none)"},
    "jump_sde": {
        "build": lambda model, p: make_triangular_sde(model, **p),
        "params": "z0=[0,0,0], t=1, euler_step=0.01",
    },
}


def build_functional(label: str, model: IntensityModel, **params) -> Functional:
    if label not in FUNCTIONAL_BUILDERS:
        raise KeyError(f"unknown functional {label!r}; known: {sorted(FUNCTIONAL_BUILDERS)}")
    return FUNCTIONAL_BUILDERS[label]["build"](model, dict(params))
