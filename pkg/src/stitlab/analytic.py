"""Probabilities and mean values for the typical I-segment of a spatial STIT
tessellation, evaluated numerically.

Everything in this module rests on three distributions for the typical
I-segment: the law ``p_n`` of the number of internal vertices, the joint law
``p_mj`` of the numbers of internal T- and X-vertices, and the joint law
``p_lr`` of left/right-pointing internal T-vertices.  All three are double
integrals over the unit square; the inner integral can be carried out in
closed form, which reduces every series this module needs to 1-d integrals
of powers of two rational functions ``v0(a) = 3a/(1+2a)`` and
``v1(a) = (1+2a)/(2+a)``.  That reduction is what makes sums to
``n_max = 10000`` cheap; the generic 2-d adaptive quadrature is kept as an
independent cross-check path.

Edge-class probabilities come in two variants:

* ``independent-types`` treats the types of neighbouring internal vertices,
  conditioned on the total count ``n``, as independent with probability
  ``p_{T|n}``.  This reproduces the published closed forms and tables.
* ``joint-exact`` evaluates the same class counts under the exact joint
  law ``p_mj``, for which vertex types conditioned on ``n`` are an
  exchangeable mixture rather than independent.  The two variants differ
  in the third decimal; the simulation engine adjudicates between them.

The P1 equality classes additionally come with two label assignments
(``as-printed`` and ``figure-consistent``) that swap which groups of edges
count as equal to one or two plate sides; again the comparison harness
decides empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .quadrature import QuadratureConfig, quad2d, quad1d

LN2 = math.log(2.0)
LN3 = math.log(3.0)

#: closed forms for quantities with exact expressions
P0_EXACT = 189.0 / 8.0 * LN3 - 26.0 * LN2 - 15.0 / 2.0
PROB_ANY_T_EXACT = 17.0 - 24.0 * LN2
MU_VT_P11_EXACT = 27.0 * LN3 - 28.0 * LN2 - 19.0 / 2.0
P_T_EXACT = 3.0 * (7.0 / 2.0 + 28.0 / 3.0 * LN2 - 9.0 * LN3) / (1.0 - P0_EXACT)


@dataclass(frozen=True)
class SeriesConfig:
    n_max: int = 10000
    tail_report: bool = True

    def __post_init__(self):
        if self.n_max < 100:
            raise ValueError("n_max must be at least 100")


# ---------------------------------------------------------------------------
# integrands
# ---------------------------------------------------------------------------

def _d(a, b):
    # denominator base: 1 + 2a + b - ab
    return 1.0 + 2.0 * a + b - a * b


def _u(a, b):
    # numerator base: 3a + b - ab
    return 3.0 * a + b - a * b


def p_n(n: int, config: QuadratureConfig | None = None) -> tuple[float, float]:
    """P(typical I-segment has exactly ``n`` internal vertices).

    Adaptive 2-d quadrature; returns ``(value, error_bound)``.  Large ``n``
    is evaluated in log space so the power does not underflow.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")

    def f(a, b):
        u, d = _u(a, b), _d(a, b)
        if n == 0:
            return 3.0 * (1.0 - a) ** 3 / d
        with np.errstate(divide="ignore"):
            logs = n * np.log(u) - (n + 1) * np.log(d)
        return 3.0 * (1.0 - a) ** 3 * np.exp(logs)

    return quad2d(f, config=config)


def p_mj(m: int, j: int, config: QuadratureConfig | None = None) -> tuple[float, float]:
    """P(exactly ``m`` internal T-vertices and ``j`` internal X-vertices)."""
    if m < 0 or j < 0:
        raise ValueError("m and j must be nonnegative")
    log_coef = math.log(3.0) + m * LN2 + math.lgamma(m + j + 1) \
        - math.lgamma(m + 1) - math.lgamma(j + 1)

    def f(a, b):
        d = _d(a, b)
        x = a + b - a * b  # inner base for the X count
        with np.errstate(divide="ignore"):
            logs = -(m + j + 1) * np.log(d)
            if m:
                logs = logs + m * np.log(np.maximum(a, 1e-300))
            if j:
                logs = logs + j * np.log(np.maximum(x, 1e-300))
        return (1.0 - a) ** 3 * np.exp(log_coef + logs)

    return quad2d(f, config=config)


def p_lr(l: int, r: int, config: QuadratureConfig | None = None) -> tuple[float, float]:
    """P(exactly ``l`` left- and ``r`` right-pointing internal T-vertices)."""
    if l < 0 or r < 0:
        raise ValueError("l and r must be nonnegative")
    k = l + r
    coef = 3.0 * math.comb(k, l)

    def f(a):
        return coef * (1.0 - a) ** 3 * a ** k / (1.0 + a) ** (k + 1)

    return quad1d(f, 0.0, 1.0, config)


def t_count_marginal(m: int, config: QuadratureConfig | None = None,
                     tail_tol: float = 1e-9) -> tuple[float, float]:
    """P(exactly ``m`` internal T-vertices), summed over the X count.

    Sums ``p_mj`` over ``j`` until a geometric tail bound falls below
    ``tail_tol``; the bound is folded into the returned error estimate.
    """
    total = 0.0
    err = 0.0
    prev = None
    j = 0
    while True:
        val, e = p_mj(m, j, config)
        total += val
        err += e
        if prev is not None and val < prev:
            ratio = val / prev
            tail = val * ratio / (1.0 - ratio)
            if tail < tail_tol and j > m + 4:
                return total, err + tail
        prev = val
        j += 1
        if j > 400:
            raise RuntimeError("t_count_marginal failed to converge")


# ---------------------------------------------------------------------------
# reduced 1-d series engine
# ---------------------------------------------------------------------------

def _a_grid(nodes_per_panel: int = 24):
    """Quadrature grid on [0,1] geometrically refined toward a = 1.

    The integrands concentrate in a boundary layer of width ~1/n near
    a = 1, so panels halve in width down to machine scale.
    """
    breaks = [0.0, 0.25, 0.5, 0.625, 0.75]
    width = 0.125
    while width > 1e-15:
        breaks.append(1.0 - width)
        width /= 2.0
    breaks.append(1.0)
    gx, gw = leggauss(nodes_per_panel)
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (gx + 1.0))
        weights.append(half * gw)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class SegmentSeries:
    """Arrays over n of the segment-level laws and their first two
    T-count moment sums, plus tail diagnostics.

    Attributes
    ----------
    p : ``p[n]`` = P(nu = n)
    s1 : ``s1[n]`` = E[nu_T / n ; nu = n]  (so ``p_{T|n} = s1[n]/p[n]``)
    s2 : ``s2[n]`` = E[nu_T (nu_T - 1) / (n (n-1)) ; nu = n]; the exact
         probability that two distinct internal vertices are both T.
    """

    n_max: int
    p: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.n_max + 1)

    @property
    def p_t_given(self) -> np.ndarray:
        """p_{T|n} with the n = 0 slot unused (set to 0)."""
        out = np.zeros(self.n_max + 1)
        mask = self.p[1:] > 0
        out[1:][mask] = np.clip(self.s1[1:][mask] / self.p[1:][mask], 0.0, 1.0)
        return out

    @property
    def pmf_deficit(self) -> float:
        """1 - sum p_n, the untruncated pmf mass beyond n_max."""
        return max(0.0, 1.0 - float(self.p.sum()))

    @property
    def edge_deficit(self) -> float:
        """1 - (1/3) sum (n+1) p_n, the edge-weighted tail mass.

        Every class-probability series distributes the (n+1) edges of a
        segment over classes, so this bounds the truncation error of any
        single class probability.
        """
        return max(0.0, 1.0 - float(((self.n + 1) * self.p).sum()) / 3.0)


@lru_cache(maxsize=8)
def segment_series(n_max: int = 10000) -> SegmentSeries:
    """Tabulate p_n, s1_n, s2_n for n = 0..n_max via the reduced integrals.

    With v0 = 3a/(1+2a) and v1 = (1+2a)/(2+a):

    * p_n  = 3 int (1-a)^2 G_n(a) da  with  G_n = sum_{k>n} (v1^k - v0^k)/k,
      computed by the downward recursion G_n = G_{n-1} - (v1^n - v0^n)/n
      from G_0 = log((2+a)/(1+2a)), Kahan-compensated and clamped at 0.
    * s1_n = (6/n)   int a (1-a) (v1^n - v0^n) da
    * s2_n = 12 int a^2 [ (v1^{n-1}-v0^{n-1})/(n-1) - (v1^n-v0^n)/n ] da
    """
    a, w = _a_grid()
    v1 = (1.0 + 2.0 * a) / (2.0 + a)
    v0 = 3.0 * a / (1.0 + 2.0 * a)
    c2 = (1.0 - a) ** 2
    g = np.log((2.0 + a) / (1.0 + 2.0 * a))
    comp = np.zeros_like(g)
    pow1 = np.ones_like(a)
    pow0 = np.ones_like(a)

    p = np.zeros(n_max + 1)
    s1 = np.zeros(n_max + 1)
    s2 = np.zeros(n_max + 1)
    p[0] = 3.0 * float(np.sum(w * c2 * g))
    aw = w * a * (1.0 - a)
    a2w = w * a * a
    c2w = w * c2
    for n in range(1, n_max + 1):
        prev_diff = pow1 - pow0
        pow1 = pow1 * v1
        pow0 = pow0 * v0
        diff = pow1 - pow0
        term = diff / n
        # Kahan-compensated subtraction keeps the deep tail of p_n above
        # the rounding floor of a plain running difference.
        y = -term - comp
        t = g + y
        comp = (t - g) - y
        g = t
        np.maximum(g, 0.0, out=g)
        p[n] = 3.0 * float(np.sum(c2w * g))
        s1[n] = (6.0 / n) * float(np.sum(aw * diff))
        if n >= 2:
            s2[n] = 12.0 * float(np.sum(a2w * (prev_diff / (n - 1) - term)))
    return SegmentSeries(n_max=n_max, p=p, s1=s1, s2=s2)


def p_t_given_n(n: int, series: SegmentSeries | None = None) -> float:
    """P(a uniformly chosen internal vertex is T | segment has n of them)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    series = series or segment_series()
    if n > series.n_max:
        raise ValueError("n exceeds the tabulated range")
    if series.p[n] <= 0:
        raise RuntimeError(f"p_{n} evaluated to zero; precision exhausted")
    return float(np.clip(series.s1[n] / series.p[n], 0.0, 1.0))


def p_t_overall(config: QuadratureConfig | None = None,
                series: SegmentSeries | None = None) -> dict:
    """Probability that a random internal vertex of the typical I-segment
    with internal vertices is of T-type, via two independent routes.

    Route one integrates the closed 2-d form; route two sums the series
    E[nu_T/nu; nu = n] over n.  A mismatch beyond 1e-6 raises.
    """
    cfg = config or QuadratureConfig()

    def f(a, b):
        return 2.0 * a * (1.0 - a) ** 2 / _d(a, b)

    num, num_err = quad2d(f, config=cfg)
    p0, p0_err = p_n(0, cfg)
    p_t_integral = 3.0 * num / (1.0 - p0)

    series = series or segment_series()
    p_t_series = float(series.s1[1:].sum()) / (1.0 - series.p[0])

    if abs(p_t_integral - p_t_series) > 1e-6:
        raise RuntimeError(
            "p_T routes disagree: integral %.12f vs series %.12f"
            % (p_t_integral, p_t_series)
        )
    return {
        "p_t": p_t_integral,
        "p_x": 1.0 - p_t_integral,
        "p_t_series": p_t_series,
        "route_gap": abs(p_t_integral - p_t_series),
        "error_bound": 3.0 * (num_err + p0_err) / (1.0 - p0),
    }


def prob_any_t(config: QuadratureConfig | None = None) -> tuple[float, float]:
    """P(the typical I-segment carries at least one internal T-vertex).

    Uses the 1-d reduction of the summed T-marginal, 6 a (1-a)^2 / (1+a).
    """
    def f(a):
        return 6.0 * a * (1.0 - a) ** 2 / (1.0 + a)

    return quad1d(f, 0.0, 1.0, config)


def mu_vt_p11_integral(config: QuadratureConfig | None = None) -> tuple[float, float]:
    """The closed 2-d integral behind the published mean number of
    single-plate-side edges at the typical T-vertex, 6a(1-a)U/D."""
    def f(a, b):
        return 6.0 * a * (1.0 - a) * _u(a, b) / _d(a, b)

    return quad2d(f, config=config)


# ---------------------------------------------------------------------------
# edge-class probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassProbabilities:
    """One labelled family of edge-class probabilities plus diagnostics."""

    values: dict
    variant: str
    tail_deficit: float


def epsilon_edge_types(series_cfg: SeriesConfig | None = None,
                       series: SegmentSeries | None = None) -> dict[str, ClassProbabilities]:
    """Probabilities that the typical edge has endpoint pair TT / XX / TX.

    Returns both evaluation variants keyed ``independent-types`` (the
    published series, using p_{T|n}^2 for neighbouring vertices) and
    ``joint-exact`` (second factorial moments of the exact joint law).
    In both, XX and TX follow from TT through the exact identities
    eps_XX = eps_TT - 1/3 and eps_TX = 4/3 - 2 eps_TT.
    """
    series_cfg = series_cfg or SeriesConfig()
    s = series or segment_series(series_cfg.n_max)
    n = s.n
    ptn = s.p_t_given
    nm1 = n[2:] - 1

    tt_iid = (s.p[0] + 2.0 * float((ptn[1:] * s.p[1:]).sum())
              + float((nm1 * ptn[2:] ** 2 * s.p[2:]).sum())) / 3.0
    tt_joint = (s.p[0] + 2.0 * float(s.s1[1:].sum())
                + float((nm1 * s.s2[2:]).sum())) / 3.0

    out = {}
    for name, tt in (("independent-types", tt_iid), ("joint-exact", tt_joint)):
        out[name] = ClassProbabilities(
            values={"TT": tt, "XX": tt - 1.0 / 3.0, "TX": 4.0 / 3.0 - 2.0 * tt},
            variant=name,
            tail_deficit=s.edge_deficit,
        )
    return out


def epsilon_p1(series_cfg: SeriesConfig | None = None,
               series: SegmentSeries | None = None) -> dict[str, ClassProbabilities]:
    """Probabilities that the typical edge equals 1, 2 or 3 plate sides.

    Two groups of edges are in play: the *boundary group* (segments with a
    single internal vertex, plus the two extreme edges of longer segments,
    plus interior XX / LL / RR pairs) and the *interior group* (interior
    LR and TX pairs).  The ``figure-consistent`` assignment puts the
    boundary group in class 2 and the interior group in class 1; the
    ``as-printed`` assignment swaps them.  Class 3 is the no-internal-
    vertex case in both.  Each assignment is returned in both evaluation
    variants, keyed ``<assignment>/<variant>``.
    """
    series_cfg = series_cfg or SeriesConfig()
    s = series or segment_series(series_cfg.n_max)
    n = s.n
    ptn = s.p_t_given
    pxn = 1.0 - ptn
    nm1 = n[2:] - 1
    p2 = s.p[2:]

    cls3 = s.p[0] / 3.0

    # independent-types variant
    boundary_iid = (2.0 * s.p[1]
                    + float(((2.0 + nm1 * (ptn[2:] ** 2 / 2.0 + pxn[2:] ** 2)) * p2).sum())) / 3.0
    interior_iid = float((nm1 * (ptn[2:] ** 2 / 2.0 + 2.0 * ptn[2:] * pxn[2:]) * p2).sum()) / 3.0

    # joint-exact variant: E[p^2|n] p_n -> s2, E[p(1-p)|n] p_n -> s1 - s2,
    # E[(1-p)^2|n] p_n -> p - 2 s1 + s2
    s1_, s2_ = s.s1[2:], s.s2[2:]
    boundary_joint = (2.0 * s.p[1]
                      + float(((2.0 * p2 + nm1 * (s2_ / 2.0 + (p2 - 2.0 * s1_ + s2_)))).sum())) / 3.0
    interior_joint = float((nm1 * (s2_ / 2.0 + 2.0 * (s1_ - s2_))).sum()) / 3.0

    out = {}
    for variant, bnd, interior in (
        ("independent-types", boundary_iid, interior_iid),
        ("joint-exact", boundary_joint, interior_joint),
    ):
        out[f"figure-consistent/{variant}"] = ClassProbabilities(
            values={"P1,1": interior, "P1,2": bnd, "P1,3": cls3},
            variant=f"figure-consistent/{variant}",
            tail_deficit=s.edge_deficit,
        )
        out[f"as-printed/{variant}"] = ClassProbabilities(
            values={"P1,1": bnd, "P1,2": interior, "P1,3": cls3},
            variant=f"as-printed/{variant}",
            tail_deficit=s.edge_deficit,
        )
    return out


def epsilon_z1(series_cfg: SeriesConfig | None = None,
               series: SegmentSeries | None = None) -> dict[str, ClassProbabilities]:
    """Probabilities that the typical edge equals 0, 1 or 2 cell ridges."""
    series_cfg = series_cfg or SeriesConfig()
    s = series or segment_series(series_cfg.n_max)
    n = s.n
    ptn = s.p_t_given
    nm1 = n[2:] - 1
    p2 = s.p[2:]

    cls2 = s.p[0] / 3.0
    one_iid = (2.0 * ptn[1] * s.p[1]
               + float(((2.0 * ptn[2:] + nm1 * ptn[2:] ** 2 / 2.0) * p2).sum())) / 3.0
    one_joint = (2.0 * s.s1[1]
                 + float((2.0 * s.s1[2:] + nm1 * s.s2[2:] / 2.0).sum())) / 3.0

    out = {}
    for variant, one in (("independent-types", one_iid), ("joint-exact", one_joint)):
        out[variant] = ClassProbabilities(
            values={"Z1,0": 1.0 - one - cls2 - s.edge_deficit, "Z1,1": one, "Z1,2": cls2},
            variant=variant,
            tail_deficit=s.edge_deficit,
        )
    return out


# ---------------------------------------------------------------------------
# the XX-edge count pmf on the typical I-segment
# ---------------------------------------------------------------------------

@dataclass
class PmfTable:
    """Probability table with per-entry error bounds and tail bookkeeping."""

    values: np.ndarray
    error_bounds: np.ndarray
    deficit: float
    label: str = ""

    def __post_init__(self):
        if np.any(self.values < -1e-12) or np.any(self.values > 1.0 + 1e-9):
            raise ValueError("pmf entries must lie in [0, 1]")


def nu_exx_pmf(n_big: int, series_cfg: SeriesConfig | None = None,
               series: SegmentSeries | None = None) -> PmfTable:
    """Published product-form pmf of the number of XX edges on the typical
    I-segment, for counts 0..n_big.

    Treats the indicator events for neighbouring XX pairs as independent
    with parameter p_{X|n}^2, which double-counts neither tail; the exact
    law is in :func:`nu_exx_pmf_exact`.
    """
    from scipy.special import gammaln

    series_cfg = series_cfg or SeriesConfig()
    s = series or segment_series(series_cfg.n_max)
    n = s.n
    pxn = 1.0 - s.p_t_given
    vals = np.zeros(n_big + 1)
    vals[0] = s.p[0] + s.p[1] + float(
        (((1.0 - pxn[2:] ** 2) ** (n[2:] - 1)) * s.p[2:]).sum()
    )
    for big in range(1, n_big + 1):
        nn = n[big + 1:]
        q = np.clip(pxn[big + 1:], 1e-300, 1.0 - 1e-15)
        pp = s.p[big + 1:]
        logs = (gammaln(nn) - gammaln(big + 1) - gammaln(nn - big)
                + 2.0 * big * np.log(q)
                + (nn - 1 - big) * np.log1p(-q * q))
        vals[big] = float((np.exp(logs) * pp).sum())
    return PmfTable(
        values=np.clip(vals, 0.0, 1.0),
        error_bounds=np.full(n_big + 1, s.pmf_deficit),
        deficit=max(0.0, 1.0 - float(vals.sum())),
        label="independent-pairs",
    )


def nu_exx_conditionals(n_cap: int, n_big: int,
                        series: SegmentSeries | None = None,
                        grid: tuple[int, int] = (160, 40)) -> dict:
    """Conditional laws P(nu_XX = N | nu = n) for n <= n_cap, N <= n_big.

    ``exact`` evaluates the adjacent-pair count chain under the joint
    latent mixture; ``product`` is the independent-pairs shortcut
    C(n-1,N) q^2N (1-q^2)^(n-1-N) with q = p_{X|n}.  Conditioning on the
    internal-vertex count makes these immune to the size bias of the
    complete-segment selection, so they are the right targets for
    finite-window mechanism tests.
    """
    from scipy.special import gammaln

    ga, gwa = leggauss(grid[0])
    gb, gwb = leggauss(grid[1])
    xa = 0.5 * (ga + 1.0)
    wa = 0.5 * gwa
    xb = 0.5 * (gb + 1.0)
    wb = 0.5 * gwb
    A, B = np.meshgrid(xa, xb, indexing="ij")
    W = np.outer(wa, wb)
    u, d = _u(A, B), _d(A, B)
    pt = 2.0 * A / u
    px = 1.0 - pt

    cmax = n_big + 2
    shape = A.shape + (cmax + 1,)
    dp_t = np.zeros(shape)
    dp_x = np.zeros(shape)
    dp_t[..., 0] = pt
    dp_x[..., 0] = px
    weight = 3.0 * (1.0 - A) ** 3 * u / d ** 2
    ratio = u / d

    exact = np.zeros((n_cap + 1, n_big + 1))
    exact[0, 0] = 1.0
    if n_cap >= 1:
        exact[1, 0] = 1.0
    for n in range(2, n_cap + 1):
        weight = weight * ratio
        new_t = (dp_t + dp_x) * pt[..., None]
        new_x = dp_t * px[..., None]
        new_x[..., 1:] += dp_x[..., :-1] * px[..., None]
        new_x[..., cmax] += dp_x[..., cmax] * px
        dp_t, dp_x = new_t, new_x
        tot = dp_t + dp_x
        wq = weight * W
        norm = float(wq.sum())
        for c in range(n_big + 1):
            exact[n, c] = float((wq * tot[..., c]).sum()) / norm

    s = series or segment_series()
    product = np.zeros((n_cap + 1, n_big + 1))
    product[0, 0] = 1.0
    if n_cap >= 1:
        product[1, 0] = 1.0
    ptn = s.p_t_given
    for n in range(2, n_cap + 1):
        q = min(max(1.0 - ptn[n], 1e-12), 1.0 - 1e-12)
        for c in range(min(n_big, n - 1) + 1):
            logv = (gammaln(n) - gammaln(c + 1) - gammaln(n - c)
                    + 2 * c * math.log(q) + (n - 1 - c) * math.log1p(-q * q))
            product[n, c] = math.exp(logv)
    return {"exact": exact, "product": product, "n_cap": n_cap}


def nu_exx_pmf_exact(n_big: int, n_cut: int = 800,
                     grid: tuple[int, int] = (160, 40)) -> PmfTable:
    """Exact pmf of the XX-edge count on the typical I-segment.

    Conditioned on the two latent mixture variables, internal vertex types
    are i.i.d., so the count of adjacent X-X pairs follows a two-state
    chain law.  This runs that chain once per quadrature node, weighting
    each step n by the node's contribution to p_n.  Both the overlap of
    neighbouring pairs and the latent mixture are thereby handled exactly,
    up to the reported truncation.
    """
    ga, gwa = leggauss(grid[0])
    gb, gwb = leggauss(grid[1])
    xa = 0.5 * (ga + 1.0)
    wa = 0.5 * gwa
    xb = 0.5 * (gb + 1.0)
    wb = 0.5 * gwb
    A, B = np.meshgrid(xa, xb, indexing="ij")
    W = np.outer(wa, wb)
    u, d = _u(A, B), _d(A, B)
    pt = 2.0 * A / u
    px = 1.0 - pt

    s = segment_series()
    cmax = n_big + 2
    shape = A.shape + (cmax + 1,)
    dp_t = np.zeros(shape)
    dp_x = np.zeros(shape)
    dp_t[..., 0] = pt
    dp_x[..., 0] = px
    weight = 3.0 * (1.0 - A) ** 3 * u / d ** 2  # n = 1 layer
    ratio = u / d

    vals = np.zeros(n_big + 1)
    vals[0] = s.p[0] + s.p[1]
    for n in range(2, n_cut + 1):
        weight = weight * ratio
        new_t = (dp_t + dp_x) * pt[..., None]
        new_x = dp_t * px[..., None]
        new_x[..., 1:] += dp_x[..., :-1] * px[..., None]
        # counts at the cap stay at the cap (they can only ever grow)
        new_x[..., cmax] += dp_x[..., cmax] * px
        dp_t, dp_x = new_t, new_x
        tot = dp_t + dp_x
        wq = weight * W
        for c in range(n_big + 1):
            vals[c] += float((wq * tot[..., c]).sum())
    tail = max(0.0, 1.0 - float(s.p[: n_cut + 1].sum()))
    return PmfTable(
        values=np.clip(vals, 0.0, 1.0),
        error_bounds=np.full(n_big + 1, tail + 1e-9),
        deficit=max(0.0, 1.0 - float(vals.sum())),
        label="joint-exact",
    )


# ---------------------------------------------------------------------------
# derived mean-value tables
# ---------------------------------------------------------------------------

def vertex_edge_series(series: SegmentSeries | None = None) -> dict:
    """Series-based vertex/edge adjacency means that are not plain
    multiples of the class probabilities, in all evaluation variants.

    Keys mirror the derived-table names; each maps to a dict with
    ``published`` (the printed series), ``independent-types`` (the printed
    counting corrected for both endpoints of each edge, still under
    independent types) and ``joint-exact`` values.
    """
    s = series or segment_series()
    n = s.n
    ptn = s.p_t_given
    pxn = 1.0 - ptn
    nm1 = n[2:] - 1
    p2 = s.p[2:]
    s1_, s2_ = s.s1[2:], s.s2[2:]

    published_vt = float((nm1 * s.s1[2:]).sum())           # sum (n-1) p_{T|n} p_n
    iid_vt = float((nm1 * (ptn[2:] ** 2 + 2 * ptn[2:] * pxn[2:]) * p2).sum())
    joint_vt = float((nm1 * (2.0 * s1_ - s2_)).sum())

    published_vx = 2.0 * float((nm1 * ptn[2:] * pxn[2:] * p2).sum())
    iid_vx = 2.0 * published_vx
    joint_vx = 4.0 * float((nm1 * (s1_ - s2_)).sum())

    return {
        "mu_V[T],E[P1,1]": {
            "published": published_vt,
            "independent-types": iid_vt,
            "joint-exact": joint_vt,
        },
        "mu_V[X],E[P1,1]": {
            "published": published_vx,
            "independent-types": iid_vx,
            "joint-exact": joint_vx,
        },
    }


EDGE_CLASS_NAMES = ("TT", "XX", "TX", "P1,1", "P1,2", "P1,3",
                    "Z1,0", "Z1,1", "Z1,2")


def derived_tables(eps: dict, series: SegmentSeries | None = None) -> dict:
    """All adjacency mean values that follow from the edge-class
    probabilities by linear intensity relations.

    ``eps`` maps the nine class names in :data:`EDGE_CLASS_NAMES` to
    probabilities (choose the assignment/variant upstream).  The slots that
    need their own series (vertex/plate-side means) use the published
    series, matching the printed tables; the variant-resolved versions of
    those two values live in :func:`vertex_edge_series`.
    """
    s = series or segment_series()
    out = {}
    e_tt = eps["TT"]

    out["mu_V[T],E[TT]"] = 6.0 * e_tt
    out["mu_V[T],E[XX]"] = 0.0
    out["mu_V[T],E[TX]"] = 4.0 - 6.0 * e_tt
    out["mu_V[X],E[TT]"] = 0.0
    out["mu_V[X],E[XX]"] = 12.0 * e_tt - 4.0
    out["mu_V[X],E[TX]"] = 8.0 - 12.0 * e_tt
    out["mu_V,E[TT]"] = 4.0 * e_tt
    out["mu_V,E[XX]"] = 4.0 * e_tt - 4.0 / 3.0
    out["mu_V,E[TX]"] = 16.0 / 3.0 - 8.0 * e_tt

    for cls in ("P1,1", "P1,2", "P1,3", "Z1,0", "Z1,1", "Z1,2"):
        out[f"mu_V,E[{cls}]"] = 4.0 * eps[cls]

    out["mu_V[T],E[P1,3]"] = 6.0 * eps["P1,3"]
    out["mu_V[T],E[Z1,1]"] = 6.0 * eps["Z1,1"]
    out["mu_V[T],E[Z1,2]"] = 6.0 * eps["Z1,2"]
    out["mu_V[T],E[Z1,0]"] = 4.0 - 6.0 * (eps["Z1,1"] + eps["Z1,2"])
    out["mu_V[X],E[P1,3]"] = 0.0
    out["mu_V[X],E[Z1,0]"] = 4.0
    out["mu_V[X],E[Z1,1]"] = 0.0
    out["mu_V[X],E[Z1,2]"] = 0.0

    vseries = vertex_edge_series(s)
    out["mu_V[T],E[P1,1]"] = vseries["mu_V[T],E[P1,1]"]["published"]
    out["mu_V[X],E[P1,1]"] = vseries["mu_V[X],E[P1,1]"]["published"]
    out["mu_V[T],E[P1,2]"] = 4.0 - out["mu_V[T],E[P1,3]"] - out["mu_V[T],E[P1,1]"]
    out["mu_V[X],E[P1,2]"] = 4.0 - out["mu_V[X],E[P1,1]"]

    out["eta_V,V[T]"] = 8.0 / 3.0
    out["eta_V,V[X]"] = 4.0 / 3.0
    out["eta_V[T],V[T]"] = 6.0 * e_tt
    out["eta_V[T],V[X]"] = 4.0 - 6.0 * e_tt
    out["eta_V[X],V[T]"] = 8.0 - 12.0 * e_tt
    out["eta_V[X],V[X]"] = 12.0 * e_tt - 4.0

    for cls in EDGE_CLASS_NAMES:
        out[f"mu_P,E[{cls}]"] = 36.0 / 7.0 * eps[cls]
        out[f"mu_Z2,E[{cls}]"] = 10.0 * eps[cls]
        out[f"mu_int(Z2),E[{cls}]"] = 2.0 * eps[cls]
        out[f"mu_bd(Z2),E[{cls}]"] = 8.0 * eps[cls]
        out[f"mu_I,E[{cls}]"] = 24.0 * eps[cls]
        out[f"mu_int(I),E[{cls}]"] = 12.0 * eps[cls]
        out[f"mu_bd(I),E[{cls}]"] = 12.0 * eps[cls]
        out[f"mu_Z,E[{cls}]"] = 36.0 * eps[cls]
        out[f"mu_sk(Z),E[{cls}]"] = 24.0 * eps[cls]

    out["eps_P1[E,1]"] = 3.0 / 7.0 * (eps["P1,1"] + 2.0 * eps["P1,2"] + 3.0 * eps["P1,3"])
    out["eps_Z1[E,1]"] = eps["Z1,1"] + 2.0 * eps["Z1,2"]
    return out


# ---------------------------------------------------------------------------
# segment-level Monte Carlo oracle
# ---------------------------------------------------------------------------

def sample_typical_segment(t: float, rng: np.random.Generator,
                           size: int = 1) -> dict[str, np.ndarray]:
    """Draw (length, birth time, left count, right count) for the typical
    I-segment directly from its joint law.

    Birth time has density 3 s^2 / t^3 on (0, t); length given the birth
    time is exponential with rate s/2; the left/right internal T-vertex
    counts given both are independent Poisson(length (t - s) / 2).  This
    sampler is the independent oracle for the quadrature pmfs.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    beta = t * rng.random(size) ** (1.0 / 3.0)
    length = rng.exponential(2.0 / beta)
    lam = 0.5 * length * (t - beta)
    nu_l = rng.poisson(lam)
    nu_r = rng.poisson(lam)
    return {"length": length, "beta": beta, "nu_l": nu_l, "nu_r": nu_r}
