"""Multiple Poisson integrals, their algebraic identities, and second quantization.

The computational definition of the n-fold compensated integral I_n of a
product kernel is the factorial-measure inclusion-exclusion

    I_n = sum over subsets J of {1..n} of (-1)^(n-|J|)
          * prod_{j not in J} nu(u_j) * N^(|J|)(tensor_{j in J} u_j),

where N^(k) sums the product over ordered k-tuples of distinct atoms.  For
equal factors N^(k) is k! times an elementary symmetric polynomial, which
the stable descending recurrence evaluates; the exponential generating
series and the product formula then hold pathwise and serve as tests, not
definitions.

The shipped bottom semigroup is keep-or-resample: each mark is kept with
probability exp(-t) or redrawn from the normalized jump measure.  It is
symmetric, exactly simulatable, and has the closed form
p_t u = exp(-t) u + (1 - exp(-t)) mean_sigma(u), so its second quantization
can be verified without nested approximation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .configuration import (
    BatchedConfigurations,
    Configuration,
    IntensityModel,
    sample_batch,
)
from .diagnostics import EstimatorReport
from .functionals import Functional, with_fd_derivative
from .lent_particle import GammaSpec
from .rng import substream

__all__ = [
    "MarkFunction",
    "ProductKernel",
    "ChaosError",
    "factorial_measure",
    "elementary_symmetric",
    "multiple_integral",
    "multiple_integral_equal",
    "multiple_integral_functional",
    "ExpSeriesResult",
    "exp_series_check",
    "orthogonality_mc",
    "chaos_gamma_closed",
    "chaos_gamma_alternating",
    "product_formula_check",
    "ResamplingSemigroup",
    "pt_apply",
    "pt_symmetry_check",
    "mehler_apply",
    "mehler_exponential_check",
    "second_quantization_check",
]

MAX_DEGREE = 8


class ChaosError(ValueError):
    """Raised for degree caps, radius violations, or missing gradients."""


@dataclass(frozen=True)
class MarkFunction:
    """A bounded mark function with an optional gradient, both vectorized.

    fn maps marks (n, d) -> (n,); grad, when present, maps (n, d) -> (n, d)
    and is required by the closed chaos carre-du-champ formula.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "u"

    def __call__(self, marks: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(marks), dtype=float)

    def gradient(self, marks: np.ndarray) -> np.ndarray:
        if self.grad is None:
            raise ChaosError(f"mark function {self.label!r} has no gradient")
        return np.asarray(self.grad(marks), dtype=float)


@dataclass(frozen=True)
class ProductKernel:
    """A product kernel u_1 x ... x u_n (symmetrized implicitly), n <= 8."""

    factors: tuple[MarkFunction, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.factors) <= MAX_DEGREE:
            raise ChaosError(f"product kernels support 1..{MAX_DEGREE} factors")

    @property
    def degree(self) -> int:
        return len(self.factors)

    def check_bounds(self, probe_marks: np.ndarray) -> None:
        for f in self.factors:
            vals = f(probe_marks)
            if np.any(np.abs(vals) > f.sup_bound + 1e-12):
                raise ChaosError(f"factor {f.label!r} exceeds its stated bound")


def equal_kernel(u: MarkFunction, n: int) -> ProductKernel:
    return ProductKernel(factors=(u,) * n)


# ---------------------------------------------------------------------------
# factorial measures and multiple integrals
# ---------------------------------------------------------------------------

def elementary_symmetric(values: np.ndarray, kmax: int) -> np.ndarray:
    """e_0..e_kmax of the values by the stable descending-index recurrence."""
    e = np.zeros(kmax + 1)
    e[0] = 1.0
    top = 0
    for v in np.asarray(values, dtype=float):
        top = min(top + 1, kmax)
        for k in range(top, 0, -1):
            e[k] += v * e[k - 1]
    return e


def factorial_measure(cfg: Configuration, u: Callable[[np.ndarray], np.ndarray], k: int) -> float:
    """Sum of prod u over ordered k-tuples of distinct atoms: k! e_k(u values)."""
    if k < 0:
        raise ChaosError("order k must be >= 0")
    if k == 0:
        return 1.0
    if k > cfg.n_atoms:
        return 0.0
    vals = np.asarray(u(cfg.marks), dtype=float)
    return math.factorial(k) * float(elementary_symmetric(vals, k)[k])


def _nu_values(model: IntensityModel, factors: Sequence[MarkFunction]) -> np.ndarray:
    return np.array([model.nu_integrate(f) for f in factors])


def multiple_integral_equal(
    cfg: Configuration,
    model: IntensityModel,
    u: MarkFunction,
    n: int,
    nu_u: float | None = None,
) -> float:
    """I_n of the equal-factor kernel by the binomial inclusion-exclusion."""
    if n > MAX_DEGREE:
        raise ChaosError(f"degree {n} > {MAX_DEGREE} unsupported")
    if nu_u is None:
        nu_u = model.nu_integrate(u)
    vals = u(cfg.marks) if cfg.n_atoms else np.zeros(0)
    e = elementary_symmetric(vals, min(n, vals.size))
    out = 0.0
    for k in range(0, n + 1):
        nk = math.factorial(k) * (e[k] if k < e.size else 0.0)
        out += math.comb(n, k) * (-nu_u) ** (n - k) * nk
    return float(out)


def multiple_integral(
    cfg: Configuration,
    model: IntensityModel,
    kernel: ProductKernel,
    nu_values: Sequence[float] | None = None,
) -> float:
    """I_n of a product kernel; distinct factors go through a subset DP.

    dp[S] accumulates the factorial measure of the sub-product over the
    factor subset S; the inclusion-exclusion then weights each subset by
    the intensity integrals of the complementary factors.
    """
    n = kernel.degree
    factors = kernel.factors
    if all(f is factors[0] for f in factors):
        nu0 = None if nu_values is None else float(nu_values[0])
        return multiple_integral_equal(cfg, model, factors[0], n, nu_u=nu0)
    nus = np.asarray(nu_values, dtype=float) if nu_values is not None else _nu_values(model, factors)
    vals = (
        np.vstack([f(cfg.marks) for f in factors]) if cfg.n_atoms else np.zeros((n, 0))
    )
    size = 1 << n
    dp = np.zeros(size)
    dp[0] = 1.0
    for a in range(cfg.n_atoms):
        prev = dp.copy()
        for s in range(1, size):
            acc = 0.0
            j_bits = s
            while j_bits:
                low = j_bits & -j_bits
                j = low.bit_length() - 1
                acc += prev[s ^ low] * vals[j, a]
                j_bits ^= low
            dp[s] += acc
    total = 0.0
    for s in range(size):
        prod_nu = 1.0
        bits = (~s) & (size - 1)
        while bits:
            low = bits & -bits
            prod_nu *= nus[low.bit_length() - 1]
            bits ^= low
        sign = -1.0 if (n - bin(s).count("1")) % 2 else 1.0
        total += sign * prod_nu * dp[s]
    return float(total)


def multiple_integral_functional(
    model: IntensityModel, u: MarkFunction, n: int, label: str | None = None
) -> Functional:
    """Wrap cfg -> I_n(u tensor n) as a functional for the derivative oracle."""
    nu_u = model.nu_integrate(u)

    def value(cfg: Configuration) -> np.ndarray:
        return np.array([multiple_integral_equal(cfg, model, u, n, nu_u=nu_u)])

    return with_fd_derivative(label or f"I_{n}[{u.label}]", 1, model.dim, value)


# ---------------------------------------------------------------------------
# pathwise algebraic identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpSeriesResult:
    residual: float
    tail_scale: float  # (t sup|u|)^(n_max+1) e^(|t| nu(|u|))
    n_max: int

    @property
    def ratio(self) -> float:
        return self.residual / self.tail_scale if self.tail_scale > 0 else math.inf


def exp_series_check(
    cfg: Configuration,
    model: IntensityModel,
    u: MarkFunction,
    t: float,
    n_max: int,
) -> ExpSeriesResult:
    """Pathwise residual of the exponential generating series of the chaos.

    prod_atoms (1 + t u) * exp(-t nu(u)) is compared with the partial sum
    sum_{n<=n_max} t^n/n! I_n(u tensor n); the residual is bounded by the
    Taylor tail scale returned alongside.
    """
    radius = abs(t) * u.sup_bound
    if radius >= 0.5:
        raise ChaosError(f"series radius violated: |t| sup|u| = {radius} >= 1/2")
    nu_u = model.nu_integrate(u)
    nu_abs = model.nu_integrate(lambda xs: np.abs(u(xs)))
    vals = u(cfg.marks) if cfg.n_atoms else np.zeros(0)
    lhs = float(np.prod(1.0 + t * vals)) * math.exp(-t * nu_u)
    e = elementary_symmetric(vals, min(n_max, vals.size))
    rhs = 0.0
    for n in range(0, n_max + 1):
        i_n = 0.0
        for k in range(0, n + 1):
            ek = e[k] if k < e.size else 0.0
            i_n += math.comb(n, k) * (-nu_u) ** (n - k) * math.factorial(k) * ek
        rhs += t**n / math.factorial(n) * i_n
    scale = radius ** (n_max + 1) * math.exp(abs(t) * nu_abs)
    return ExpSeriesResult(residual=abs(lhs - rhs), tail_scale=scale, n_max=n_max)


def product_formula_check(
    cfg: Configuration,
    model: IntensityModel,
    u: MarkFunction,
    v: MarkFunction,
    s: float,
    t: float,
) -> float:
    """Relative residual of the two-kernel generating identity.

    exp(N log(1+su) - s nu(u)) exp(N log(1+tv) - t nu(v)) equals
    exp(N log(1+su+tv+stuv) - nu(su+tv+stuv)) exp(st nu(uv)) exactly; both
    sides are evaluated independently.
    """
    if abs(s) * u.sup_bound >= 0.5 or abs(t) * v.sup_bound >= 0.5:
        raise ChaosError("product-formula radius violated")
    nu_u = model.nu_integrate(u)
    nu_v = model.nu_integrate(v)
    nu_uv = model.nu_integrate(lambda xs: u(xs) * v(xs))
    if cfg.n_atoms:
        uv_u, uv_v = u(cfg.marks), v(cfg.marks)
    else:
        uv_u = uv_v = np.zeros(0)
    lhs = math.exp(float(np.sum(np.log1p(s * uv_u))) - s * nu_u) * math.exp(
        float(np.sum(np.log1p(t * uv_v))) - t * nu_v
    )
    mixed = s * uv_u + t * uv_v + s * t * uv_u * uv_v
    nu_mixed = s * nu_u + t * nu_v + s * t * nu_uv
    rhs = math.exp(float(np.sum(np.log1p(mixed))) - nu_mixed) * math.exp(s * t * nu_uv)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


# ---------------------------------------------------------------------------
# vectorized sampling of chaos statistics
# ---------------------------------------------------------------------------

def _power_sums(batch: BatchedConfigurations, vals: np.ndarray, kmax: int) -> np.ndarray:
    """Per-sample power sums p_1..p_kmax, shape (nsamples, kmax)."""
    out = np.empty((batch.nsamples, kmax))
    idx = batch.sample_index
    pk = np.ones_like(vals)
    for k in range(1, kmax + 1):
        pk = pk * vals
        out[:, k - 1] = np.bincount(idx, weights=pk, minlength=batch.nsamples)
    return out


def _e_from_power_sums(p: np.ndarray, kmax: int) -> np.ndarray:
    """Newton identities: e_0..e_kmax from power sums, vectorized over rows."""
    e = np.zeros(p.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for k in range(1, kmax + 1):
        acc = np.zeros(p.shape[:-1])
        for i in range(1, k + 1):
            acc += (-1.0) ** (i - 1) * e[..., k - i] * p[..., i - 1]
        e[..., k] = acc / k
    return e


def _i_n_from_e(e: np.ndarray, nu_u: float, n: int) -> np.ndarray:
    out = np.zeros(e.shape[:-1])
    for k in range(0, n + 1):
        out += math.comb(n, k) * (-nu_u) ** (n - k) * math.factorial(k) * e[..., k]
    return out


def orthogonality_mc(
    model: IntensityModel,
    u: MarkFunction,
    v: MarkFunction,
    mdeg: int,
    ndeg: int,
    nsamples: int,
    seed: int,
) -> EstimatorReport:
    """Monte Carlo E[I_m(u...) I_n(v...)] against delta_mn n! <u, v>^n."""
    if max(mdeg, ndeg) > MAX_DEGREE:
        raise ChaosError(f"degrees must be <= {MAX_DEGREE}")
    batch = sample_batch(model, nsamples, seed)
    uv = u(batch.marks) if batch.times.size else np.zeros(0)
    vv = v(batch.marks) if batch.times.size else np.zeros(0)
    nu_u = model.nu_integrate(u)
    nu_v = model.nu_integrate(v)
    e_u = _e_from_power_sums(_power_sums(batch, uv, mdeg), mdeg)
    e_v = _e_from_power_sums(_power_sums(batch, vv, ndeg), ndeg)
    i_m = _i_n_from_e(e_u, nu_u, mdeg)
    i_n = _i_n_from_e(e_v, nu_v, ndeg)
    prod = i_m * i_n
    inner = model.nu_integrate(lambda xs: u(xs) * v(xs))
    ref = math.factorial(ndeg) * inner**ndeg if mdeg == ndeg else 0.0
    return EstimatorReport(
        name=f"orthogonality[m={mdeg},n={ndeg}]",
        estimate=float(prod.mean()),
        reference=float(ref),
        standard_error=float(prod.std(ddof=1) / math.sqrt(nsamples)),
        nsamples=nsamples,
    )


# ---------------------------------------------------------------------------
# chaos carre du champ
# ---------------------------------------------------------------------------

def _gamma_uv(spec: GammaSpec, u: MarkFunction, v: MarkFunction, marks: np.ndarray) -> np.ndarray:
    gu = u.gradient(marks)
    gv = v.gradient(marks)
    out = np.empty(marks.shape[0])
    for a in range(marks.shape[0]):
        out[a] = float(gu[a] @ spec.alpha(marks[a]) @ gv[a])
    return out


def _reduced_integrals(vals: np.ndarray, full: np.ndarray, order: int) -> np.ndarray:
    """I_k with one atom removed, for every atom, from the full-path values.

    Uses the one-atom update I_k(w) = I_k(w - atom) + k u(atom) I_{k-1}(w - atom)
    solved downward from I_0 = 1: shape (n_atoms, order + 1).
    """
    n = vals.size
    out = np.empty((n, order + 1))
    out[:, 0] = 1.0
    for k in range(1, order + 1):
        out[:, k] = full[k] - k * vals * out[:, k - 1]
    return out


def _full_integrals(cfg: Configuration, model: IntensityModel, u: MarkFunction, order: int, nu_u: float) -> tuple[np.ndarray, np.ndarray]:
    vals = u(cfg.marks) if cfg.n_atoms else np.zeros(0)
    e = elementary_symmetric(vals, min(order, vals.size))
    full = np.empty(order + 1)
    for n in range(order + 1):
        acc = 0.0
        for k in range(0, n + 1):
            ek = e[k] if k < e.size else 0.0
            acc += math.comb(n, k) * (-nu_u) ** (n - k) * math.factorial(k) * ek
        full[n] = acc
    return vals, full


def chaos_gamma_closed(
    cfg: Configuration,
    model: IntensityModel,
    u: MarkFunction,
    v: MarkFunction,
    i: int,
    j: int,
    spec: GammaSpec,
) -> float:
    """Closed-form carre du champ of the pair (I_i(u tensor i), I_j(v tensor j)).

    Lending a particle at an atom turns each multiple integral into i times
    the order-(i-1) integral with the free argument at the atom and the
    remaining arguments off that atom, so

        Gamma = i j sum_atoms I_{i-1}(u; w minus atom) I_{j-1}(v; w minus atom)
                          gamma[u, v](mark).

    The inner integrals on the reduced configurations are recovered from
    the full-configuration ones by the one-atom downward recursion; the
    alternating polynomial form over the full configuration (see
    chaos_gamma_alternating) telescopes to the same value.
    """
    if max(i, j) > MAX_DEGREE or min(i, j) < 1:
        raise ChaosError("degrees must lie in 1..8")
    if cfg.n_atoms == 0:
        return 0.0
    nu_u = model.nu_integrate(u)
    nu_v = model.nu_integrate(v)
    uvals, ufull = _full_integrals(cfg, model, u, i - 1, nu_u)
    vvals, vfull = _full_integrals(cfg, model, v, j - 1, nu_v)
    iu = _reduced_integrals(uvals, ufull, i - 1)[:, i - 1]
    iv = _reduced_integrals(vvals, vfull, j - 1)[:, j - 1]
    gam = _gamma_uv(spec, u, v, cfg.marks)
    return float(i * j * np.sum(iu * iv * gam))


def chaos_gamma_alternating(
    cfg: Configuration,
    model: IntensityModel,
    u: MarkFunction,
    v: MarkFunction,
    i: int,
    j: int,
    spec: GammaSpec,
) -> float:
    """The same matrix entry via the alternating sums over the full configuration.

    Gamma = i! j! sum_atoms S_i(a) S_j(a) gamma[u, v](mark_a) with
    S_i(a) = sum_{k=1}^{i} (-1)^k u(mark_a)^{k-1} I_{i-k}(full) / (i-k)!.
    Equal to chaos_gamma_closed by telescoping; kept as an independent
    evaluation route for tests.
    """
    if cfg.n_atoms == 0:
        return 0.0
    nu_u = model.nu_integrate(u)
    nu_v = model.nu_integrate(v)
    uvals, ufull = _full_integrals(cfg, model, u, i - 1, nu_u)
    vvals, vfull = _full_integrals(cfg, model, v, j - 1, nu_v)

    def s_poly(vals: np.ndarray, full: np.ndarray, deg: int) -> np.ndarray:
        acc = np.zeros(vals.size)
        for k in range(1, deg + 1):
            acc += (-1.0) ** k * vals ** (k - 1) * full[deg - k] / math.factorial(deg - k)
        return acc

    gam = _gamma_uv(spec, u, v, cfg.marks)
    su = s_poly(uvals, ufull, i)
    sv = s_poly(vvals, vfull, j)
    return float(math.factorial(i) * math.factorial(j) * np.sum(su * sv * gam))


# ---------------------------------------------------------------------------
# keep-or-resample semigroup and second quantization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResamplingSemigroup:
    """Bottom semigroup: keep each mark with probability exp(-t), else resample."""

    model: IntensityModel

    def keep_prob(self, t: float) -> float:
        if t < 0.0:
            raise ChaosError("semigroup time must be >= 0")
        return math.exp(-t)

    def resample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.model.sample_marks(rng, n)


def pt_apply(sg: ResamplingSemigroup, u: MarkFunction, t: float) -> MarkFunction:
    """Closed form of the semigroup action: exp(-t) u + (1-exp(-t)) mean_sigma(u)."""
    q = sg.keep_prob(t)
    mean_u = sg.model.sigma_integrate(u) / sg.model.rate
    grad = None
    if u.grad is not None:
        grad = lambda marks: q * u.gradient(marks)
    return MarkFunction(
        fn=lambda marks: q * u(marks) + (1.0 - q) * mean_u,
        sup_bound=q * u.sup_bound + (1.0 - q) * abs(mean_u),
        grad=grad,
        label=f"p_{t:g}[{u.label}]",
    )


def pt_symmetry_check(
    sg: ResamplingSemigroup,
    u: MarkFunction,
    v: MarkFunction,
    t: float,
    nsamples: int,
    seed: int,
) -> EstimatorReport:
    """Self-adjointness under the normalized jump law: E[u p_t v] = E[v p_t u]."""
    rng = substream(seed)
    marks = sg.model.sample_marks(rng, nsamples)
    ptu, ptv = pt_apply(sg, u, t), pt_apply(sg, v, t)
    diff = u(marks) * ptv(marks) - v(marks) * ptu(marks)
    return EstimatorReport(
        name=f"pt_symmetry[t={t:g}]",
        estimate=float(diff.mean()),
        reference=0.0,
        standard_error=float(diff.std(ddof=1) / math.sqrt(nsamples)),
        nsamples=nsamples,
    )


def mehler_apply(
    sg: ResamplingSemigroup,
    F: Functional,
    cfg: Configuration,
    t: float,
    n_inner: int,
    seed: int,
) -> tuple[float, float]:
    """Inner Monte Carlo of the second-quantized semigroup applied to F at cfg.

    Each atom's mark is independently kept with probability exp(-t) or
    resampled from the normalized jump measure; returns the inner mean and
    its standard error.
    """
    if n_inner < 1:
        raise ChaosError("n_inner must be >= 1")
    if t == 0.0:
        return float(np.atleast_1d(F.value(cfg))[0]), 0.0
    q = sg.keep_prob(t)
    rng = substream(seed)
    vals = np.empty(n_inner)
    for rep in range(n_inner):
        if cfg.n_atoms:
            keep = rng.random(cfg.n_atoms) < q
            marks = np.where(keep[:, None], cfg.marks, sg.resample(rng, cfg.n_atoms))
            moved = Configuration(
                cfg.horizon, cfg.dim, cfg.times, marks, intensity_ref=cfg.intensity_ref
            )
        else:
            moved = cfg
        vals[rep] = float(np.atleast_1d(F.value(moved))[0])
    se = float(vals.std(ddof=1) / math.sqrt(n_inner)) if n_inner > 1 else 0.0
    return float(vals.mean()), se


def _chunked(n: int, block: int):
    for lo in range(0, n, block):
        yield lo, min(lo + block, n)


def mehler_exponential_check(
    sg: ResamplingSemigroup,
    g: MarkFunction,
    t: float,
    nsamples: int,
    n_inner: int,
    seed: int,
    block: int = 20000,
) -> EstimatorReport:
    """Exponential intertwining: inner-MC of prod(1 + g) after per-atom motion
    against prod(1 + p_t g) on the same configuration, paired per sample.

    Requires -1/2 <= g <= 0 so both sides stay in (0, 1].
    """
    model = sg.model
    q = sg.keep_prob(t)
    ptg = pt_apply(sg, g, t)
    lhs = np.empty(nsamples)
    rhs = np.empty(nsamples)
    for blk, (lo, hi) in enumerate(_chunked(nsamples, block)):
        batch = sample_batch(model, hi - lo, seed=_derived(seed, 101, blk))
        rng = substream(seed, 202, blk)
        total = batch.times.size
        gv = g(batch.marks) if total else np.zeros(0)
        if np.any(gv < -0.5 - 1e-12) or np.any(gv > 1e-12):
            raise ChaosError("exponential check needs -1/2 <= g <= 0")
        log_pt = np.log1p(ptg(batch.marks)) if total else np.zeros(0)
        rhs[lo:hi] = np.exp(batch.sum_per_sample(log_pt))
        if total:
            keep = rng.random((total, n_inner)) < q
            res_marks = sg.resample(rng, total * n_inner).reshape(total, n_inner, -1)
            gres = g(res_marks.reshape(-1, model.dim)).reshape(total, n_inner)
            moved = np.where(keep, gv[:, None], gres)
            logs = np.log1p(moved)
            per_rep = np.vstack(
                [
                    np.bincount(batch.sample_index, weights=logs[:, rep], minlength=batch.nsamples)
                    for rep in range(n_inner)
                ]
            )
            lhs[lo:hi] = np.exp(per_rep).mean(axis=0)
        else:
            lhs[lo:hi] = 1.0
    diff = lhs - rhs
    return EstimatorReport(
        name=f"mehler_exponential[t={t:g}]",
        estimate=float(lhs.mean()),
        reference=float(rhs.mean()),
        standard_error=float(diff.std(ddof=1) / math.sqrt(nsamples)),
        nsamples=nsamples,
    )


def second_quantization_check(
    sg: ResamplingSemigroup,
    u: MarkFunction,
    n: int,
    t: float,
    nsamples: int,
    n_inner: int,
    seed: int,
    block: int = 10000,
) -> EstimatorReport:
    """Chaos-wise action of the lifted semigroup.

    Per configuration, the inner-MC mean of I_n(u tensor n) after per-atom
    keep-or-resample motion is compared with I_n((p_t u) tensor n) on the
    unmoved configuration; the paired residual is zero in expectation.
    """
    if n > 6:
        raise ChaosError("second-quantization check ships for n <= 6")
    model = sg.model
    q = sg.keep_prob(t)
    nu_u = model.nu_integrate(u)
    ptu = pt_apply(sg, u, t)
    nu_ptu = model.nu_integrate(ptu)
    diffs = np.empty(nsamples)
    for blk, (lo, hi) in enumerate(_chunked(nsamples, block)):
        m = hi - lo
        batch = sample_batch(model, m, seed=_derived(seed, 303, blk))
        rng = substream(seed, 404, blk)
        total = batch.times.size
        # reference side on the unmoved configurations
        pv = ptu(batch.marks) if total else np.zeros(0)
        e_ref = _e_from_power_sums(_power_sums(batch, pv, n), n)
        ref = _i_n_from_e(e_ref, nu_ptu, n)
        if total:
            keep = rng.random((total, n_inner)) < q
            res = sg.resample(rng, total * n_inner).reshape(total, n_inner, -1)
            ures = u(res.reshape(-1, model.dim)).reshape(total, n_inner)
            uv = u(batch.marks)
            moved = np.where(keep, uv[:, None], ures)
            # power sums per (sample, rep)
            flat_idx = (batch.sample_index[:, None] * n_inner + np.arange(n_inner)[None, :]).ravel()
            p = np.empty((m * n_inner, n))
            pk = np.ones(total * n_inner)
            mv = moved.ravel()
            for k in range(1, n + 1):
                pk = pk * mv
                p[:, k - 1] = np.bincount(flat_idx, weights=pk, minlength=m * n_inner)
            e_in = _e_from_power_sums(p, n)
            i_in = _i_n_from_e(e_in, nu_u, n).reshape(m, n_inner)
            inner_mean = i_in.mean(axis=1)
        else:
            inner_mean = np.full(m, (-nu_u) ** n)
        diffs[lo:hi] = inner_mean - ref
    return EstimatorReport(
        name=f"second_quantization[n={n},t={t:g}]",
        estimate=float(diffs.mean()),
        reference=0.0,
        standard_error=float(diffs.std(ddof=1) / math.sqrt(nsamples)),
        nsamples=nsamples,
    )


def _derived(seed: int, tag: int, blk: int) -> int:
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, blk)).generate_state(1)[0])
