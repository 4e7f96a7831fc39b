"""Scale/speed analysis of one-dimensional diffusion generators and
Wasserstein contraction certificates.

Given a generator ``L = a(x) d^2/dx^2 + b(x) d/dx`` on an interval and an
increasing metric function ``rho``, this module builds the scale density
``s'(x) = exp(-B(x))`` with ``B(x) = int_c^x b/a``, the speed density
``m'(x) = 1/(a s')``, the invariant mean ``mu(rho)``, the comparison
function

    u(x) = s'(x) * int_x^{upper} (rho(y) - mu(rho)) m'(y) dy,

the contraction constant ``c_W = sup u/rho'``, and the decay certificate
(delta, K).

Numerical architecture: a cos-spaced cell decomposition of a truncated
"bulk" (holding all but ~1e-19 of the speed mass) carries per-cell
log-integrals of ``|rho - mu(rho)| m'``, ``m'`` and ``s'``, combined with
log-sum-exp prefix chains. All exponentials enter as B-differences, so the
machinery survives drift potentials of order -10^6 at the scan edges.
Cells adjacent to open endpoints are integrated by tanh-sinh quadrature to
capture integrable boundary singularities (Jacobi, Bessel, branching speed
densities). The c_W scan can extend the domain geometrically on infinite
sides; extension cells are tanh-sinh integrated in log space and sampled
at their edges, and isolated evaluations beyond the bulk use a direct
decaying-tail integral anchored at the evaluation point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import tanhsinh as _tanhsinh

from . import calculus
from .exprlang import Expr, differentiate, evaluate

__all__ = [
    "Interval", "DiffusionSpec", "MetricSpec", "ScaleSpeed",
    "HypothesisReport", "EndpointVerdict", "Certificate", "CwResult",
    "build_scale_speed", "check_hypotheses", "compute_u", "compute_cw",
    "condition_C_check", "certify", "alpha_sweep", "tilde_metric",
    "TildeMetric", "spectral_gap_lower_bound",
    "NoCertificateError", "HypothesisError",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class HypothesisError(ValueError):
    """A structural hypothesis (ellipticity, finite speed mass) failed."""


class NoCertificateError(RuntimeError):
    """c_W appears unbounded; no contraction certificate exists."""


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    lower_closed: bool = False
    upper_closed: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")
        if self.lower_closed and not np.isfinite(self.lower):
            raise ValueError("a closed endpoint must be finite")
        if self.upper_closed and not np.isfinite(self.upper):
            raise ValueError("a closed endpoint must be finite")


@dataclass(frozen=True)
class DiffusionSpec:
    """Interval with boundary types plus coefficient expressions a(x), b(x).

    `c` is the base point anchoring the scale function; when None it
    defaults to xi0, the point where rho equals its invariant mean.
    """
    interval: Interval
    a: Expr
    b: Expr
    c: float | None = None

    def __post_init__(self):
        if self.c is not None and not self.interval.lower < self.c < self.interval.upper:
            raise ValueError(f"base point c={self.c} not interior to the interval")


class MetricSpec:
    """Increasing function rho defining the metric |rho(x) - rho(y)|.

    The symbolic derivative rho' is computed once and cached.
    """

    def __init__(self, rho: Expr):
        self.rho = rho
        self.rho_prime = differentiate(rho)

    def __call__(self, x):
        return evaluate(self.rho, x)

    def d(self, x: float, y: float) -> float:
        return abs(float(evaluate(self.rho, x)) - float(evaluate(self.rho, y)))


@dataclass
class EndpointVerdict:
    endpoint: str          # "lower" | "upper"
    verdict: str           # "pass" | "fail" | "inconclusive" | "skipped"
    detail: str = ""
    trace: list = field(default_factory=list)


@dataclass
class HypothesisReport:
    h1: tuple        # (verdict, detail)
    h2: list         # [EndpointVerdict]
    h3: tuple        # (verdict, m_total)
    h4: list         # [EndpointVerdict]
    rho_in_l2: tuple  # (verdict, integral of rho^2 dmu)

    def all_passed(self) -> bool:
        ok = self.h1[0] == "pass" and self.h3[0] == "pass" and self.rho_in_l2[0] == "pass"
        for v in list(self.h2) + list(self.h4):
            ok = ok and v.verdict in ("pass", "skipped")
        return ok


@dataclass
class CwResult:
    c_w: float
    arg: float
    boundary_flag: bool
    unbounded_suspected: bool = False
    widenings: list = field(default_factory=list)  # [(scan_lo, scan_hi, sup)]


@dataclass
class Certificate:
    mode: str                     # "part_a" | "part_b"
    c_w: float
    arg_cw: float
    delta: float
    K: float
    spectral_gap_lower: float
    alpha: float | None = None
    condition_C: tuple | None = None   # (C, M, phi)
    u_table: list = field(default_factory=list)


def _logaddexp(a: float, b: float) -> float:
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def _log_quad_tanhsinh(log_f, lo: float, hi: float, rtol: float = 1e-10) -> float:
    """log of int_lo^hi exp(log_f(y)) dy, shifted for stability."""
    probe_x = lo + (hi - lo) * np.array([1e-7, 1e-4, 0.01, 0.25, 0.5, 0.75, 0.99, 1 - 1e-4, 1 - 1e-7])
    with np.errstate(all="ignore"):
        probe = np.asarray(log_f(probe_x), dtype=float)
    finite = probe[np.isfinite(probe)]
    shift = float(np.max(finite)) if len(finite) else 0.0

    def g(y):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(np.minimum(log_f(y) - shift, 700.0))

    res = _tanhsinh(g, lo, hi, rtol=rtol, atol=1e-300, maxlevel=10)
    v = float(res.integral)
    if not np.isfinite(v) or v <= 0.0:
        return -np.inf
    return shift + math.log(v)


class ScaleSpeed:
    """Scale density, speed density and derived analysis quantities.

    Attributes of note: ``m_total`` (speed mass of the whole interval),
    ``mu_rho`` (invariant mean of rho), ``xi0`` (where rho crosses that
    mean), ``c`` (scale anchor, B(c) = 0), ``bulk_lo``/``bulk_hi`` (the
    truncated bulk carrying essentially all speed mass).
    """

    N_CELLS = 1536
    EXT_CELLS = 96          # extension cells appended per widening step

    def __init__(self, spec: DiffusionSpec, metric: MetricSpec,
                 truncation: tuple[float, float] | None = None):
        self.spec = spec
        self.metric = metric
        iv = spec.interval
        self._anchor = self._initial_anchor()
        if truncation is None:
            truncation = (self._auto_edge(-1.0), self._auto_edge(+1.0))
        t_lo, t_hi = float(truncation[0]), float(truncation[1])
        if not (iv.lower <= t_lo < t_hi <= iv.upper):
            raise ValueError("truncation must lie inside the state interval")
        self.bulk_lo, self.bulk_hi = t_lo, t_hi
        self._build_base()

    # -- low-level drift-potential integration -------------------------------

    def _initial_anchor(self) -> float:
        iv = self.spec.interval
        if self.spec.c is not None:
            return float(self.spec.c)
        if np.isfinite(iv.lower) and np.isfinite(iv.upper):
            return 0.5 * (iv.lower + iv.upper)
        if np.isfinite(iv.lower):
            return iv.lower + 1.0
        if np.isfinite(iv.upper):
            return iv.upper - 1.0
        return 0.0

    def _drift_ratio(self, x):
        a = np.asarray(evaluate(self.spec.a, x), dtype=float)
        if np.any(a <= 0.0):
            bad = float(np.asarray(x)[a <= 0.0].flat[0])
            raise HypothesisError(f"a(x) <= 0 at x={bad:.6g}: ellipticity violated")
        return np.asarray(evaluate(self.spec.b, x), dtype=float) / a

    def _segment_B(self, lo, hi):
        """int_lo^hi b/a by 16-node Gauss-Legendre, batched over segments."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = mid[..., None] + half[..., None] * _GL_NODES
        vals = self._drift_ratio(nodes.ravel()).reshape(nodes.shape)
        return half * (vals @ _GL_WEIGHTS)

    def _signed_dB(self, anchor: float, pts: np.ndarray) -> np.ndarray:
        """B(pts) - B(anchor) by per-point GL segments from the anchor."""
        pts = np.asarray(pts, dtype=float)
        lo = np.minimum(pts, anchor)
        hi = np.maximum(pts, anchor)
        seg = self._segment_B(lo, hi)
        return np.where(pts >= anchor, seg, -seg)

    def _auto_edge(self, direction: float) -> float:
        """Bulk edge on an infinite side: march from the anchor until the
        speed density has decayed ~e^-45 below its running peak."""
        iv = self.spec.interval
        if direction < 0 and np.isfinite(iv.lower):
            return iv.lower
        if direction > 0 and np.isfinite(iv.upper):
            return iv.upper
        x, b_here, b_max, span = self._anchor, 0.0, 0.0, 1.0
        for _ in range(80):
            x_next = x + direction * span
            seg = float(self._segment_B(np.array([min(x, x_next)]),
                                        np.array([max(x, x_next)]))[0])
            b_here += seg if x_next > x else -seg
            x = x_next
            b_max = max(b_max, b_here)
            if b_here - b_max < -45.0:
                return x
            span *= 1.6
        return x

    # -- base construction ----------------------------------------------------

    def _build_base(self):
        n = self.N_CELLS
        theta = np.linspace(0.0, math.pi, n + 1)
        edges = self.bulk_lo + (self.bulk_hi - self.bulk_lo) * 0.5 * (1.0 - np.cos(theta))
        edges[0], edges[-1] = self.bulk_lo, self.bulk_hi

        seg = self._segment_B(edges[:-1], edges[1:])
        B_edges = np.concatenate([[0.0], np.cumsum(seg)])
        k0 = min(max(int(np.searchsorted(edges, self._anchor)), 0), n)
        B_edges -= B_edges[k0]
        self._edges, self._B_edges = edges, B_edges

        # Invariant mass and rho-mean, plain quadrature shifted by max B.
        Bmax = float(np.max(B_edges))
        self._Bmax = Bmax
        node_x, node_B, node_a, node_rho, halves = self._node_sweep()
        with np.errstate(over="ignore", under="ignore"):
            w = np.exp(node_B - Bmax) / node_a
        mass_cells = halves * (w @ _GL_WEIGHTS)
        rho_cells = halves * ((w * node_rho) @ _GL_WEIGHTS)
        # Singular open endpoints: redo the outermost cells with tanh-sinh.
        mass_cells, rho_cells = self._fix_singular_moment_cells(mass_cells, rho_cells, Bmax)
        tail_lo = self._tail_moments(-1.0, Bmax)
        tail_hi = self._tail_moments(+1.0, Bmax)
        total_mass = float(np.sum(mass_cells)) + tail_lo[0] + tail_hi[0]
        total_rho = float(np.sum(rho_cells)) + tail_lo[1] + tail_hi[1]
        if not (np.isfinite(total_mass) and total_mass > 0.0):
            raise HypothesisError("speed measure mass is not finite and positive (H3)")
        self.m_total = total_mass * math.exp(Bmax)
        self.log_m_total = Bmax + math.log(total_mass)
        self.mu_rho = total_rho / total_mass

        # xi0 and the anchor c.
        span = self.bulk_hi - self.bulk_lo
        lo_p, hi_p = self.bulk_lo + 1e-9 * span, self.bulk_hi - 1e-9 * span
        r_lo = float(evaluate(self.metric.rho, lo_p)) - self.mu_rho
        r_hi = float(evaluate(self.metric.rho, hi_p)) - self.mu_rho
        if r_lo * r_hi > 0:
            raise HypothesisError("rho - mu(rho) does not change sign on the bulk")
        self.xi0 = calculus.find_root(
            lambda t: np.asarray(evaluate(self.metric.rho, t), dtype=float) - self.mu_rho,
            lo_p, hi_p, tol=1e-13)
        self.c = float(self.spec.c) if self.spec.c is not None else self.xi0
        self._B_edges = self._B_edges - float(self._B_points(np.array([self.c]))[0])
        self._Bmax = float(np.max(self._B_edges))
        for p in sorted({self.xi0, self.c}):
            self._insert_edge(p)
        self._rebuild_chains()

    def _node_sweep(self):
        edges = self._edges
        lo, hi = edges[:-1], edges[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        node_B = self._B_points(nodes).reshape(len(lo), 16)
        node_a = np.asarray(evaluate(self.spec.a, nodes), dtype=float).reshape(len(lo), 16)
        node_rho = np.asarray(evaluate(self.metric.rho, nodes), dtype=float).reshape(len(lo), 16)
        return nodes, node_B, node_a, node_rho, half

    def _fix_singular_moment_cells(self, mass_cells, rho_cells, shift):
        iv = self.spec.interval
        edges = self._edges

        def redo(j):
            lm = self._log_cell_quad(edges[j], edges[j + 1], "m")
            lr_pos = self._log_cell_quad(edges[j], edges[j + 1], "m", extra="rho+")
            lr_neg = self._log_cell_quad(edges[j], edges[j + 1], "m", extra="rho-")
            mass_cells[j] = math.exp(lm - shift) if np.isfinite(lm) else 0.0
            pos = math.exp(lr_pos - shift) if np.isfinite(lr_pos) else 0.0
            negv = math.exp(lr_neg - shift) if np.isfinite(lr_neg) else 0.0
            rho_cells[j] = pos - negv

        if np.isfinite(iv.lower) and not iv.lower_closed:
            redo(0)
            redo(1)
        if np.isfinite(iv.upper) and not iv.upper_closed:
            redo(len(edges) - 2)
            redo(len(edges) - 3)
        return mass_cells, rho_cells

    def _tail_moments(self, direction: float, shift: float):
        """(mass, rho-moment) of the speed measure beyond the bulk on an
        infinite side, relative to exp(shift). Doubling-span march."""
        iv = self.spec.interval
        if direction < 0:
            if np.isfinite(iv.lower):
                return 0.0, 0.0
            edge, B_edge = self._edges[0], self._B_edges[0]
        else:
            if np.isfinite(iv.upper):
                return 0.0, 0.0
            edge, B_edge = self._edges[-1], self._B_edges[-1]
        mass = rho_mom = 0.0
        x, B_here = edge, B_edge
        B_peak = B_edge
        span = max(1.0, 0.005 * (self._edges[-1] - self._edges[0]))
        for _ in range(120):
            x_next = x + direction * span
            lo_, hi_ = (x_next, x) if direction < 0 else (x, x_next)
            mid, half = 0.5 * (lo_ + hi_), 0.5 * (hi_ - lo_)
            seg_nodes = mid + half * _GL_NODES
            Bn = B_here + self._signed_dB(x, seg_nodes)
            a = np.asarray(evaluate(self.spec.a, seg_nodes), dtype=float)
            rho_v = np.asarray(evaluate(self.metric.rho, seg_nodes), dtype=float)
            with np.errstate(over="ignore", under="ignore"):
                w = np.exp(np.minimum(Bn - shift, 700.0)) / a
            mass += half * float(w @ _GL_WEIGHTS)
            rho_mom += half * float((w * rho_v) @ _GL_WEIGHTS)
            seg_full = float(self._segment_B(np.array([min(x, x_next)]),
                                             np.array([max(x, x_next)]))[0])
            B_here += seg_full if x_next > x else -seg_full
            x = x_next
            B_peak = max(B_peak, B_here)
            if B_here - B_peak < -50.0:
                break
            span *= 2.0
        return mass, rho_mom

    def _insert_edge(self, p: float):
        edges = self._edges
        if p <= edges[0] or p >= edges[-1] or np.any(edges == p):
            return
        k = int(np.searchsorted(edges, p))
        Bp = float(self._B_points(np.array([p]))[0])
        self._edges = np.insert(edges, k, p)
        self._B_edges = np.insert(self._B_edges, k, Bp)

    # -- log cell machinery ----------------------------------------------------

    def _log_cell_quad(self, lo: float, hi: float, kind: str, extra: str | None = None) -> float:
        """Tanh-sinh log-integral over one cell of m' (kind 'm'), of
        |rho-mu| m' ('u'), or of s' ('s'); `extra` weights 'm' by the
        positive or negative part of rho."""
        rho, mu = self.metric.rho, self.mu_rho

        def log_f(y):
            y = np.asarray(y, dtype=float)
            with np.errstate(all="ignore"):
                if kind == "s":
                    return -self._B_points(y)
                base = self._B_points(y) - np.log(np.asarray(evaluate(self.spec.a, y), dtype=float))
                if kind == "u":
                    rv = np.asarray(evaluate(rho, y), dtype=float)
                    return base + np.log(np.abs(rv - mu))
                if extra == "rho+":
                    rv = np.asarray(evaluate(rho, y), dtype=float)
                    return base + np.where(rv > 0, np.log(np.maximum(rv, 1e-300)), -np.inf)
                if extra == "rho-":
                    rv = np.asarray(evaluate(rho, y), dtype=float)
                    return base + np.where(rv < 0, np.log(np.maximum(-rv, 1e-300)), -np.inf)
                return base

        return _log_quad_tanhsinh(log_f, lo, hi)

    def _rebuild_chains(self):
        """Per-cell log integrals (GL in the bulk, tanh-sinh at open
        endpoints and in extension cells) and the prefix chains."""
        edges, B_edges = self._edges, self._B_edges
        lo, hi = edges[:-1], edges[1:]
        n_cells = len(lo)
        _, node_B, node_a, node_rho, half = self._node_sweep()
        shift = np.maximum(B_edges[:-1], B_edges[1:])
        shift_s = np.minimum(B_edges[:-1], B_edges[1:])
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            w_m = np.exp(node_B - shift[:, None]) / node_a
            cell_m = half * (w_m @ _GL_WEIGHTS)
            cell_u = half * ((np.abs(node_rho - self.mu_rho) * w_m) @ _GL_WEIGHTS)
            cell_s = half * (np.exp(-(node_B - shift_s[:, None])) @ _GL_WEIGHTS)
            log_m = np.where(cell_m > 0, np.log(np.maximum(cell_m, 1e-300)) + shift, -np.inf)
            log_u = np.where(cell_u > 0, np.log(np.maximum(cell_u, 1e-300)) + shift, -np.inf)
            log_s = np.where(cell_s > 0, np.log(np.maximum(cell_s, 1e-300)) - shift_s, -np.inf)

        # Cells where plain GL is unreliable: open finite endpoints
        # (integrable singularities) and extension cells (exponential
        # boundary layers much narrower than the cell).
        iv = self.spec.interval
        redo = set()
        if np.isfinite(iv.lower) and not iv.lower_closed and edges[0] == iv.lower:
            redo.update([0, 1])
        if np.isfinite(iv.upper) and not iv.upper_closed and edges[-1] == iv.upper:
            redo.update([n_cells - 1, n_cells - 2])
        redo.update(j for j in range(n_cells)
                    if lo[j] < self.bulk_lo or hi[j] > self.bulk_hi)
        for j in sorted(redo):
            log_m[j] = self._log_cell_quad(lo[j], hi[j], "m")
            log_u[j] = self._log_cell_quad(lo[j], hi[j], "u")
            log_s[j] = self._log_cell_quad(lo[j], hi[j], "s")

        self._log_cell_m, self._log_cell_u, self._log_cell_s = log_m, log_u, log_s
        self._log_tail_u_lo = self._log_u_beyond_edges("lower")
        self._log_tail_u_hi = self._log_u_beyond_edges("upper")

        i_xi = int(np.searchsorted(edges, self.xi0))
        i_c = int(np.searchsorted(edges, self.c))
        self._i_xi, self._i_c = i_xi, i_c
        self._u_prefix_low = np.logaddexp.accumulate(
            np.concatenate([[self._log_tail_u_lo], log_u[:i_xi]]))
        self._u_prefix_high = np.logaddexp.accumulate(
            np.concatenate([[self._log_tail_u_hi], log_u[i_xi:][::-1]]))[::-1]
        self._m_prefix_up = np.logaddexp.accumulate(np.concatenate([[-np.inf], log_m[i_c:]]))
        self._m_prefix_down = np.logaddexp.accumulate(
            np.concatenate([[-np.inf], log_m[:i_c][::-1]]))
        self._s_prefix_up = np.logaddexp.accumulate(np.concatenate([[-np.inf], log_s[i_c:]]))
        self._s_prefix_down = np.logaddexp.accumulate(
            np.concatenate([[-np.inf], log_s[:i_c][::-1]]))

    def _log_u_beyond_edges(self, side: str) -> float:
        """log int of |rho - mu(rho)| m' beyond the outermost edge."""
        iv = self.spec.interval
        if side == "lower":
            if np.isfinite(iv.lower):
                return -np.inf
            edge, B_edge, sgn = self._edges[0], self._B_edges[0], -1.0
        else:
            if np.isfinite(iv.upper):
                return -np.inf
            edge, B_edge, sgn = self._edges[-1], self._B_edges[-1], +1.0
        total = -np.inf
        x, B_here = edge, B_edge
        B_peak = B_here
        span = max(1.0, 1e-3 * (self._edges[-1] - self._edges[0]))
        for _ in range(200):
            x_next = x + sgn * span
            lo_, hi_ = (x_next, x) if sgn < 0 else (x, x_next)
            mid, half = 0.5 * (lo_ + hi_), 0.5 * (hi_ - lo_)
            seg_nodes = mid + half * _GL_NODES
            dB = np.array([float(self._segment_B(np.array([min(x, s)]),
                                                 np.array([max(x, s)]))[0]) for s in seg_nodes])
            Bn = B_here + np.where(seg_nodes >= x, dB, -dB)
            a = np.asarray(evaluate(self.spec.a, seg_nodes), dtype=float)
            rho_v = np.asarray(evaluate(self.metric.rho, seg_nodes), dtype=float)
            g = np.abs(rho_v - self.mu_rho) / a
            peak = float(np.max(Bn))
            with np.errstate(over="ignore", under="ignore"):
                val = half * float((g * np.exp(Bn - peak)) @ _GL_WEIGHTS)
            if val > 0.0:
                total = _logaddexp(total, peak + math.log(val))
            seg_full = float(self._segment_B(np.array([min(x, x_next)]),
                                             np.array([max(x, x_next)]))[0])
            B_here += seg_full if x_next > x else -seg_full
            x = x_next
            B_peak = max(B_peak, B_here)
            if B_here - B_peak < -55.0:
                break
            span *= 2.0
        return total

    # -- evaluables -------------------------------------------------------------

    def _B_points(self, x) -> np.ndarray:
        """B(x) = int_c^x b/a via the nearest cell edge + local GL segment."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self._edges, x) - 1, 0, len(self._edges) - 1)
        anchors = self._edges[idx]
        out = self._B_edges[idx].copy()
        moved = x != anchors
        if np.any(moved):
            lo = np.minimum(anchors[moved], x[moved])
            hi = np.maximum(anchors[moved], x[moved])
            seg = self._segment_B(lo, hi)
            out[moved] += np.where(x[moved] >= anchors[moved], seg, -seg)
        return out

    def B(self, x):
        """Drift potential int_c^x b/a; scalar in, scalar out."""
        res = self._B_points(x)
        return float(res[0]) if np.ndim(x) == 0 else res

    def s_prime(self, x):
        """Scale density exp(-B). May overflow far outside the bulk; the
        log-space quantities below are safe everywhere."""
        res = np.exp(-self._B_points(x))
        return float(res[0]) if np.ndim(x) == 0 else res

    def m_prime(self, x):
        """Speed density exp(B)/a."""
        a = np.asarray(evaluate(self.spec.a, x), dtype=float)
        res = np.exp(self._B_points(x)) / a
        return float(res[0]) if np.ndim(x) == 0 else res

    def mu_density(self, x):
        """Invariant probability density m'/m(I)."""
        return self.m_prime(x) / self.m_total

    def _log_partial(self, edge_idx, x, lower_side: bool, kind: str) -> np.ndarray:
        """log int between edges[edge_idx] and x of the chosen density,
        batched; each pair must lie within a single bulk cell."""
        anchors = self._edges[edge_idx]
        lo = np.where(lower_side, anchors, x)
        hi = np.where(lower_side, x, anchors)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        Bn = self._B_points(nodes).reshape(len(lo), 16)
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            if kind == "s":
                logs = -Bn
            else:
                a_n = np.asarray(evaluate(self.spec.a, nodes), dtype=float).reshape(len(lo), 16)
                logs = Bn - np.log(a_n)
                if kind == "u":
                    rho_n = np.asarray(evaluate(self.metric.rho, nodes),
                                       dtype=float).reshape(len(lo), 16)
                    logs = logs + np.log(np.abs(rho_n - self.mu_rho))
            shift = np.max(logs, axis=1, keepdims=True)
            shift = np.where(np.isfinite(shift), shift, 0.0)
            vals = half * (np.exp(logs - shift) @ _GL_WEIGHTS)
        return np.where(vals > 0, np.log(np.maximum(vals, 1e-300)) + shift[:, 0], -np.inf)

    def log_u(self, x) -> np.ndarray:
        """log u(x) on the bulk, vectorized.

        Points at or below xi0 accumulate |rho - mu| m' from the lower
        endpoint, points above from the upper endpoint; both equal u
        because the full integral of (rho - mu(rho)) m' vanishes.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any((x < self.bulk_lo) | (x > self.bulk_hi)):
            raise ValueError("log_u is restricted to the bulk; use compute_u for tail points")
        edges = self._edges
        i_xi = self._i_xi
        Bx = self._B_points(x)
        out = np.empty_like(x)
        low = x <= self.xi0
        if np.any(low):
            xl = x[low]
            idx = np.clip(np.searchsorted(edges, xl) - 1, 0, i_xi - 1)
            prefix = self._u_prefix_low[idx]
            part = self._log_partial(idx, xl, lower_side=True, kind="u")
            out[low] = np.logaddexp(prefix, part) - Bx[low]
        if np.any(~low):
            xh = x[~low]
            idx = np.clip(np.searchsorted(edges, xh), i_xi + 1, len(edges) - 1)
            prefix = self._u_prefix_high[idx - i_xi]
            part = self._log_partial(idx, xh, lower_side=False, kind="u")
            out[~low] = np.logaddexp(prefix, part) - Bx[~low]
        return out

    def u(self, x):
        """The comparison function u on the bulk; positive there."""
        res = np.exp(self.log_u(x))
        return float(res[0]) if np.ndim(x) == 0 else res

    def log_u_at_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(edges, log u at edges) — exact from the prefix chains alone,
        valid across bulk and extension cells alike."""
        edges, B_edges = self._edges, self._B_edges
        i_xi = self._i_xi
        low = self._u_prefix_low - B_edges[:i_xi + 1]
        high = self._u_prefix_high - B_edges[i_xi:]
        return edges, np.concatenate([low[:-1], [np.logaddexp(low[-1], high[0])
                                                 - 0.0 * B_edges[i_xi]], high[1:]])

    def u_tail_direct(self, x: float) -> float:
        """u at a point beyond the bulk: direct decaying-tail integral of
        (rho - mu(rho))/a * exp(B(y) - B(x)) anchored at x."""
        sgn = +1.0 if x > self.xi0 else -1.0
        total = 0.0
        pos, rel_B, peak = float(x), 0.0, 0.0
        scale = max(1.0, abs(x)) if not np.isfinite(self.bulk_hi - self.bulk_lo) \
            else max(1e-3 * (self.bulk_hi - self.bulk_lo), 1e-6)
        ratio0 = abs(float(self._drift_ratio(np.array([x]))[0]))
        span = min(scale, 1.0 / max(ratio0, 1e-3))
        iv = self.spec.interval
        bound = iv.upper if sgn > 0 else iv.lower
        for _ in range(300):
            nxt = pos + sgn * span
            if np.isfinite(bound):
                nxt = min(nxt, bound) if sgn > 0 else max(nxt, bound)
            lo_, hi_ = (nxt, pos) if sgn < 0 else (pos, nxt)
            if hi_ <= lo_:
                break
            mid, half = 0.5 * (lo_ + hi_), 0.5 * (hi_ - lo_)
            seg_nodes = mid + half * _GL_NODES
            dB = np.array([float(self._segment_B(np.array([min(pos, s)]),
                                                 np.array([max(pos, s)]))[0]) for s in seg_nodes])
            Bn = rel_B + np.where(seg_nodes >= pos, dB, -dB) * (1.0 if sgn > 0 else 1.0)
            if sgn < 0:
                Bn = rel_B - np.where(seg_nodes >= pos, dB, -dB) * 0.0 - np.where(
                    seg_nodes >= pos, dB, -dB)
            a = np.asarray(evaluate(self.spec.a, seg_nodes), dtype=float)
            rho_v = np.asarray(evaluate(self.metric.rho, seg_nodes), dtype=float)
            g = sgn * (rho_v - self.mu_rho) / a
            with np.errstate(over="ignore", under="ignore"):
                total += half * float((g * np.exp(np.minimum(Bn, 500.0))) @ _GL_WEIGHTS)
            seg_full = float(self._segment_B(np.array([min(pos, nxt)]),
                                             np.array([max(pos, nxt)]))[0])
            rel_B += seg_full if nxt > pos else -seg_full
            pos = nxt
            peak = max(peak, rel_B)
            if np.isfinite(bound) and pos == bound:
                break
            if rel_B - peak < -55.0:
                break
            span *= 1.8
        return max(total, 0.0)

    # -- widening ---------------------------------------------------------------

    def widen(self, factor: float = 2.0) -> "ScaleSpeed":
        """New ScaleSpeed with the span extended by `factor` around xi0 on
        infinite sides; extension cells are appended and the prefix chains
        rebuilt. Bulk cells, m_total, mu_rho and xi0 are reused unchanged."""
        iv = self.spec.interval
        add_lo = np.empty(0)
        add_hi = np.empty(0)
        if not np.isfinite(iv.lower):
            new_lo = self.xi0 - factor * (self.xi0 - self._edges[0])
            add_lo = np.linspace(new_lo, self._edges[0], self.EXT_CELLS + 1)[:-1]
        if not np.isfinite(iv.upper):
            new_hi = self.xi0 + factor * (self._edges[-1] - self.xi0)
            add_hi = np.linspace(self._edges[-1], new_hi, self.EXT_CELLS + 1)[1:]
        if len(add_lo) == 0 and len(add_hi) == 0:
            return self
        fresh = ScaleSpeed.__new__(ScaleSpeed)
        fresh.spec, fresh.metric = self.spec, self.metric
        fresh._anchor = self._anchor
        fresh.bulk_lo, fresh.bulk_hi = self.bulk_lo, self.bulk_hi
        fresh.m_total, fresh.log_m_total = self.m_total, self.log_m_total
        fresh.mu_rho, fresh.xi0, fresh.c = self.mu_rho, self.xi0, self.c
        fresh._Bmax = self._Bmax
        edges = np.concatenate([add_lo, self._edges, add_hi])
        # Cumulative B across the extension edges.
        B_new_lo = np.empty(0)
        if len(add_lo):
            segs = self._segment_B(add_lo, np.concatenate([add_lo[1:], [self._edges[0]]]))
            B_new_lo = self._B_edges[0] - np.cumsum(segs[::-1])[::-1]
        B_new_hi = np.empty(0)
        if len(add_hi):
            segs = self._segment_B(np.concatenate([[self._edges[-1]], add_hi[:-1]]), add_hi)
            B_new_hi = self._B_edges[-1] + np.cumsum(segs)
        fresh._edges = edges
        fresh._B_edges = np.concatenate([B_new_lo, self._B_edges, B_new_hi])
        fresh._rebuild_chains()
        return fresh


def build_scale_speed(spec: DiffusionSpec, metric: MetricSpec,
                      truncation: tuple[float, float] | None = None) -> ScaleSpeed:
    """Construct the scale/speed machinery on a (possibly auto-chosen)
    truncation. Raises :class:`HypothesisError` on an ellipticity violation
    or non-finite speed mass."""
    return ScaleSpeed(spec, metric, truncation)


# --- hypothesis checks ---------------------------------------------------------

def _endpoint_check(ss: ScaleSpeed, side: str, which: str) -> EndpointVerdict:
    """H2 (non-explosion) or H4 (s not in L2(dm)) at one endpoint,
    classified by numerical divergence detection. Cutoffs stay inside the
    bulk, where the scale/speed primitives are accurate."""
    iv = ss.spec.interval
    closed = iv.lower_closed if side == "lower" else iv.upper_closed
    if closed:
        return EndpointVerdict(side, "skipped", "endpoint contained in I (reflecting)")

    def log_m_between(x):
        return _log_between(ss, x, kind="m")

    def log_s_between(x):
        return _log_between(ss, x, kind="s")

    if which == "h2":
        def integrand(t):
            t = np.asarray(t, dtype=float)
            with np.errstate(over="ignore", under="ignore"):
                return np.exp(np.minimum(log_m_between(t) - ss._B_points(t), 705.0))
    else:
        def integrand(t):
            t = np.asarray(t, dtype=float)
            a = np.asarray(evaluate(ss.spec.a, t), dtype=float)
            with np.errstate(over="ignore", under="ignore"):
                return np.exp(np.minimum(2.0 * log_s_between(t) + ss._B_points(t)
                                         - np.log(a), 705.0))

    c = ss.c
    if side == "upper":
        edge = ss.bulk_hi
        if np.isfinite(iv.upper):
            gap = iv.upper - c
            cutoffs = [iv.upper - gap * 0.25 ** k for k in range(1, 7)]
            hi = iv.upper
        else:
            cutoffs = [c + (edge - c) * 0.5 ** k for k in range(5, -1, -1)]
            hi = np.inf
        verdict = calculus.detect_divergence(integrand, c, hi, cutoffs)
    else:
        edge = ss.bulk_lo
        if np.isfinite(iv.lower):
            gap = c - iv.lower
            cutoffs = [iv.lower + gap * 0.25 ** k for k in range(1, 7)]
            flip_hi = -iv.lower
        else:
            cutoffs = [c - (c - edge) * 0.5 ** k for k in range(5, -1, -1)]
            flip_hi = np.inf
        flipped = sorted(-np.asarray(cutoffs))

        def flipped_integrand(t):
            return integrand(-np.asarray(t, dtype=float))

        verdict = calculus.detect_divergence(flipped_integrand, -c, flip_hi, flipped)
    status = {"diverges": "pass", "converges": "fail", "inconclusive": "inconclusive"}[verdict.verdict]
    detail = {"pass": "integral diverges as required",
              "fail": "integral converges; condition violated",
              "inconclusive": "growth too slow to classify within the bulk"}[status]
    return EndpointVerdict(side, status, detail, verdict.trace)


def _log_between(ss: ScaleSpeed, x, kind: str) -> np.ndarray:
    """log int between c and x of m' (kind 'm') or s' (kind 's')."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    edges = ss._edges
    i_c = ss._i_c
    prefix_up = ss._m_prefix_up if kind == "m" else ss._s_prefix_up
    prefix_down = ss._m_prefix_down if kind == "m" else ss._s_prefix_down
    out = np.empty_like(x)
    up = x >= ss.c
    if np.any(up):
        xu = x[up]
        idx = np.clip(np.searchsorted(edges, xu) - 1, i_c, len(edges) - 2)
        xu_clip = np.maximum(xu, edges[idx])
        prefix = prefix_up[idx - i_c]
        part = ss._log_partial(idx, xu_clip, lower_side=True, kind=kind)
        out[up] = np.logaddexp(prefix, part)
    if np.any(~up):
        xd = x[~up]
        idx = np.clip(np.searchsorted(edges, xd), 1, i_c)
        xd_clip = np.minimum(xd, edges[idx])
        prefix = prefix_down[i_c - idx]
        part = ss._log_partial(idx, xd_clip, lower_side=False, kind=kind)
        out[~up] = np.logaddexp(prefix, part)
    return out


def check_hypotheses(spec: DiffusionSpec, metric: MetricSpec, ss: ScaleSpeed) -> HypothesisReport:
    """Probe ellipticity (H1), non-explosion (H2), finite speed measure
    (H3), essential self-adjointness (H4), and rho in L2(mu). Failures
    are verdicts, not exceptions."""
    n = 4096
    lo, hi = ss.bulk_lo, ss.bulk_hi
    xs = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    a_vals = np.asarray(evaluate(spec.a, xs), dtype=float)
    rp_vals = np.asarray(evaluate(metric.rho_prime, xs), dtype=float)
    if np.any(a_vals <= 0.0):
        h1 = ("fail", f"a(x) <= 0 at x={float(xs[a_vals <= 0.0][0]):.6g}")
    elif np.any(rp_vals <= 0.0):
        h1 = ("fail", f"rho'(x) <= 0 at x={float(xs[rp_vals <= 0.0][0]):.6g}")
    else:
        h1 = ("pass", f"a > 0 and rho' > 0 on a {n}-point grid")

    h2 = [_endpoint_check(ss, "lower", "h2"), _endpoint_check(ss, "upper", "h2")]
    h4 = [_endpoint_check(ss, "lower", "h4"), _endpoint_check(ss, "upper", "h4")]
    h3 = ("pass" if np.isfinite(ss.m_total) and ss.m_total > 0 else "fail", ss.m_total)

    rho2_cells = _moment_cells(ss, power=2)
    val = rho2_cells / ss.m_total
    rho_l2 = ("pass" if np.isfinite(val) else "fail", float(val))
    return HypothesisReport(h1=h1, h2=h2, h3=h3, h4=h4, rho_in_l2=rho_l2)


def _moment_cells(ss: ScaleSpeed, power: int) -> float:
    edges = ss._edges
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    Bn = ss._B_points(nodes).reshape(len(lo), 16)
    a_n = np.asarray(evaluate(ss.spec.a, nodes), dtype=float).reshape(len(lo), 16)
    rho_n = np.asarray(evaluate(ss.metric.rho, nodes), dtype=float).reshape(len(lo), 16)
    with np.errstate(over="ignore", under="ignore"):
        w = np.exp(Bn - ss._Bmax) / a_n
        cells = half * ((np.abs(rho_n) ** power * w) @ _GL_WEIGHTS)
    return float(np.sum(cells)) * math.exp(ss._Bmax)


# --- c_W, condition (C), certificates --------------------------------------------

def compute_u(ss: ScaleSpeed, metric: MetricSpec, x):
    """u(x) = s'(x) int_x^{upper} (rho - mu(rho)) m' dy; scalar or array.
    Inside the bulk this uses the cached cell chains; beyond it, a direct
    decaying-tail integral anchored at x."""
    scalar = np.ndim(x) == 0
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x_arr)
    inside = (x_arr >= ss.bulk_lo) & (x_arr <= ss.bulk_hi)
    if np.any(inside):
        out[inside] = np.exp(ss.log_u(x_arr[inside]))
    for i in np.nonzero(~inside)[0]:
        out[i] = ss.u_tail_direct(float(x_arr[i]))
    return float(out[0]) if scalar else out


def _scan_sup(ss: ScaleSpeed, n_coarse: int) -> tuple[float, float, float, float]:
    """(arg, sup) of u/rho' over the current span: calculus.supremum over
    the bulk plus exact edge samples across extension cells. Returns
    (arg, sup, span_lo, span_hi)."""

    def bulk_ratio(t):
        rp = np.asarray(evaluate(ss.metric.rho_prime, t), dtype=float)
        return np.exp(ss.log_u(t) - np.log(rp))

    arg, sup = calculus.supremum(bulk_ratio, ss.bulk_lo, ss.bulk_hi, n_coarse)
    edges, log_u_edges = ss.log_u_at_edges()
    interior = (edges > ss.spec.interval.lower) & (edges < ss.spec.interval.upper)
    e = edges[interior]
    with np.errstate(all="ignore"):
        rp = np.asarray(evaluate(ss.metric.rho_prime, e), dtype=float)
        vals = np.exp(log_u_edges[interior] - np.log(rp))
    if len(vals):
        k = int(np.nanargmax(vals))
        if np.isfinite(vals[k]) and vals[k] > sup:
            arg, sup = float(e[k]), float(vals[k])
    return arg, sup, float(ss._edges[0]), float(ss._edges[-1])


def compute_cw(ss: ScaleSpeed, metric: MetricSpec,
               scan_domain: tuple[float, float] | None = None,
               n_coarse: int = 1024, stabilize_rel: float = 1e-4,
               max_widenings: int = 40) -> tuple[CwResult, ScaleSpeed]:
    """sup of u/rho'.

    With an explicit `scan_domain` the sup is taken there directly. On
    infinite intervals the span is otherwise widened geometrically until
    the sup stabilizes within `stabilize_rel`. `boundary_flag` marks a
    maximizer within the outer 2% of the final span. `unbounded_suspected`
    is set when the sup keeps growing with non-decaying increments at the
    boundary (or the widening budget runs out); `c_w` then holds the last,
    still-growing, scan value rather than an estimate of a finite sup.

    Returns the result together with the (possibly widened) ScaleSpeed.
    """
    iv = ss.spec.interval
    if scan_domain is not None:
        def ratio(t):
            rp = np.asarray(evaluate(metric.rho_prime, t), dtype=float)
            return np.exp(ss.log_u(np.asarray(t, dtype=float)) - np.log(rp))
        lo = max(scan_domain[0], ss.bulk_lo)
        hi = min(scan_domain[1], ss.bulk_hi)
        arg, sup = calculus.supremum(ratio, lo, hi, n_coarse)
        flag = not (lo + 0.02 * (hi - lo) < arg < hi - 0.02 * (hi - lo))
        return CwResult(sup, arg, flag, False, [(lo, hi, sup)]), ss

    infinite = not (np.isfinite(iv.lower) and np.isfinite(iv.upper))
    history = []
    increments = []
    prev_sup = None
    for _ in range(max_widenings):
        arg, sup, span_lo, span_hi = _scan_sup(ss, n_coarse)
        history.append((span_lo, span_hi, sup))
        span = span_hi - span_lo
        flag = not (span_lo + 0.02 * span < arg < span_hi - 0.02 * span)
        if not infinite:
            return CwResult(sup, arg, flag, False, history), ss
        if prev_sup is not None:
            inc = sup - prev_sup
            increments.append(inc)
            if abs(inc) <= stabilize_rel * max(abs(sup), 1e-300):
                return CwResult(sup, arg, flag, False, history), ss
            if len(increments) >= 3 and all(d > 0 for d in increments[-3:]) and flag:
                d1, d2, d3 = increments[-3:]
                if d3 >= 0.8 * d2 and d2 >= 0.8 * d1:
                    return CwResult(sup, arg, True, True, history), ss
        prev_sup = sup
        ss = ss.widen(2.0)
    return CwResult(history[-1][2], history[-1][1] if False else arg, True, True, history), ss


def condition_C_check(spec: DiffusionSpec, metric: MetricSpec, phi: Expr,
                      scan_domain: tuple[float, float], n_grid: int = 4096):
    """Check the comparison condition for a candidate test function phi:
    rho' <= phi <= C rho' and (a phi' + b phi)' <= M rho', using symbolic
    derivatives. Returns (C, M, lower_ok); M is clamped at 0."""
    from .exprlang import add, mul
    lo, hi = scan_domain
    phi_prime = differentiate(phi)
    drift_form = differentiate(add(mul(spec.a, phi_prime), mul(spec.b, phi)))

    def ratio(t):
        return (np.asarray(evaluate(phi, t), dtype=float)
                / np.asarray(evaluate(metric.rho_prime, t), dtype=float))

    def m_ratio(t):
        return (np.asarray(evaluate(drift_form, t), dtype=float)
                / np.asarray(evaluate(metric.rho_prime, t), dtype=float))

    _, C = calculus.supremum(ratio, lo, hi, n_grid)
    _, neg_inf_ratio = calculus.supremum(lambda t: -ratio(t), lo, hi, n_grid)
    lower_ok = (-neg_inf_ratio) >= 1.0 - 1e-9
    _, M_sup = calculus.supremum(m_ratio, lo, hi, n_grid)
    return float(C), float(max(0.0, M_sup)), bool(lower_ok)


class TildeMetric:
    """The intrinsic contraction metric: tilde_rho(x) = int_c^x u, strictly
    increasing since u > 0. Callable on floats or arrays; linear
    extrapolation with slope u(edge) beyond the bulk."""

    def __init__(self, ss: ScaleSpeed):
        self.ss = ss
        edges = ss._edges
        in_bulk = (edges >= ss.bulk_lo) & (edges <= ss.bulk_hi)
        self._edges = edges[in_bulk]
        lo, hi = self._edges[:-1], self._edges[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        u_nodes = np.exp(ss.log_u(nodes)).reshape(len(lo), 16)
        cells = half * (u_nodes @ _GL_WEIGHTS)
        cum = np.concatenate([[0.0], np.cumsum(cells)])
        i_c = int(np.searchsorted(self._edges, ss.c))
        self._cum = cum - cum[i_c]
        self._u_lo = float(np.exp(ss.log_u(self._edges[0])))
        self._u_hi = float(np.exp(ss.log_u(self._edges[-1])))

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x_arr)
        below = x_arr < self._edges[0]
        above = x_arr > self._edges[-1]
        mid = ~(below | above)
        if np.any(mid):
            xm = x_arr[mid]
            idx = np.clip(np.searchsorted(self._edges, xm) - 1, 0, len(self._edges) - 2)
            lo = self._edges[idx]
            halves = 0.5 * (xm - lo)
            nodes = (0.5 * (lo + xm))[:, None] + halves[:, None] * _GL_NODES
            u_nodes = np.exp(self.ss.log_u(nodes.ravel())).reshape(len(xm), 16)
            out[mid] = self._cum[idx] + halves * (u_nodes @ _GL_WEIGHTS)
        out[below] = self._cum[0] + self._u_lo * (x_arr[below] - self._edges[0])
        out[above] = self._cum[-1] + self._u_hi * (x_arr[above] - self._edges[-1])
        return float(out[0]) if scalar else out

    def d(self, x: float, y: float) -> float:
        return abs(self(x) - self(y))

    def deriv(self, x):
        return compute_u(self.ss, self.ss.metric, x)


def tilde_metric(ss: ScaleSpeed, metric: MetricSpec) -> TildeMetric:
    """Evaluable tilde_rho with derivative u (cached cumulative quadrature)."""
    return TildeMetric(ss)


def spectral_gap_lower_bound(c_w: float) -> float:
    """Spectral-gap lower bound 1/c_W."""
    return 1.0 / c_w


def _tabulate_u(ss: ScaleSpeed, n: int = 101) -> list:
    lo, hi = ss.bulk_lo, ss.bulk_hi
    xs = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    us = np.exp(ss.log_u(xs))
    return [(float(a), float(b)) for a, b in zip(xs, us)]


def _k_supremum(ss: ScaleSpeed, phi: Expr, alpha: float, n_coarse: int = 1024) -> float:
    """sup over the current span of (u + alpha phi)/rho', including
    extension-edge samples."""

    def g(t):
        t = np.asarray(t, dtype=float)
        phi_t = np.asarray(evaluate(phi, t), dtype=float)
        rp = np.asarray(evaluate(ss.metric.rho_prime, t), dtype=float)
        return np.exp(ss.log_u(t) - np.log(rp)) + alpha * phi_t / rp

    _, sup = calculus.supremum(g, ss.bulk_lo, ss.bulk_hi, n_coarse)
    edges, log_u_edges = ss.log_u_at_edges()
    iv = ss.spec.interval
    outside = ((edges < ss.bulk_lo) | (edges > ss.bulk_hi)) \
        & (edges > iv.lower) & (edges < iv.upper)
    if np.any(outside):
        e = edges[outside]
        with np.errstate(all="ignore"):
            rp = np.asarray(evaluate(ss.metric.rho_prime, e), dtype=float)
            phi_e = np.asarray(evaluate(phi, e), dtype=float)
            vals = np.exp(log_u_edges[outside] - np.log(rp)) + alpha * phi_e / rp
        m = float(np.nanmax(vals))
        if np.isfinite(m) and m > sup:
            sup = m
    return sup


def certify(spec: DiffusionSpec, metric: MetricSpec, phi: Expr | None = None,
            alpha: float | None = None, ss: ScaleSpeed | None = None,
            cw: CwResult | None = None, k_cap: float = 100.0,
            n_sweep: int = 32) -> Certificate:
    """Build a contraction certificate.

    With a test function `phi` (and optional rate parameter `alpha`): a
    part-(a) certificate, delta = (1 - alpha M)/(C alpha + c_W) and
    K = sup((u + alpha phi)/rho')/alpha, requiring condition (C) to hold.
    Without `phi`: the part-(b) certificate for the intrinsic metric
    tilde_rho, delta = 1/c_W and K = 1. The spectral-gap lower bound
    1/c_W is always attached.

    When `alpha` is omitted it is chosen from a log-spaced sweep as the
    delta-maximizing value subject to K <= `k_cap`.
    """
    if ss is None:
        ss = build_scale_speed(spec, metric)
    if cw is None:
        cw, ss = compute_cw(ss, metric)
    if cw.unbounded_suspected or not np.isfinite(cw.c_w):
        raise NoCertificateError(
            f"c_W unbounded suspected (scan sup still growing, last {cw.c_w:.6g})")
    c_w = cw.c_w
    gap = spectral_gap_lower_bound(c_w)
    u_table = _tabulate_u(ss)

    if phi is None:
        return Certificate(mode="part_b", c_w=c_w, arg_cw=cw.arg, delta=gap, K=1.0,
                           spectral_gap_lower=gap, u_table=u_table)

    scan = (ss.bulk_lo, ss.bulk_hi)
    C, M, lower_ok = condition_C_check(spec, metric, phi, scan)
    if not lower_ok:
        raise ValueError("condition (C) failed: phi < rho' somewhere on the scan domain")

    def delta_of(al: float) -> float:
        return (1.0 - al * M) / (C * al + c_w)

    if alpha is None:
        alpha_max = (1.0 / M) if M > 0 else 10.0 * c_w
        alphas = np.geomspace(alpha_max * 1e-4, alpha_max * (0.999 if M > 0 else 1.0), n_sweep)
        feasible = [(delta_of(al), al) for al in alphas
                    if _k_supremum(ss, phi, al) / al <= k_cap]
        alpha = max(feasible)[1] if feasible else float(alphas[-1])
    alpha = float(alpha)
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if M > 0 and not alpha < 1.0 / M:
        raise ValueError(f"alpha={alpha} outside (0, 1/M) with M={M:.6g}")

    K = _k_supremum(ss, phi, alpha) / alpha
    return Certificate(mode="part_a", c_w=c_w, arg_cw=cw.arg, delta=delta_of(alpha),
                       K=K, spectral_gap_lower=gap, alpha=alpha,
                       condition_C=(C, M, phi), u_table=u_table)


def alpha_sweep(spec: DiffusionSpec, metric: MetricSpec, phi: Expr, n: int = 32,
                ss: ScaleSpeed | None = None, cw: CwResult | None = None) -> list:
    """(alpha, delta, K) across n log-spaced alphas in (0, 1/M), or up to
    10 c_W when M = 0. Every row is a valid part-(a) certificate."""
    if ss is None:
        ss = build_scale_speed(spec, metric)
    if cw is None:
        cw, ss = compute_cw(ss, metric)
    if cw.unbounded_suspected:
        raise NoCertificateError("c_W unbounded suspected; sweep not available")
    C, M, lower_ok = condition_C_check(spec, metric, phi, (ss.bulk_lo, ss.bulk_hi))
    if not lower_ok:
        raise ValueError("condition (C) failed: phi < rho' somewhere on the scan domain")
    alpha_max = (1.0 / M) if M > 0 else 10.0 * cw.c_w
    alphas = np.geomspace(alpha_max * 1e-4, alpha_max * (0.999 if M > 0 else 1.0), n)
    return [(float(al),
             float((1.0 - al * M) / (C * al + cw.c_w)),
             float(_k_supremum(ss, phi, al) / al))
            for al in alphas]
