"""Canonical solutions, connection matrix and Stokes matrices of
d - (A0/z^2 + x/z) dz on the Riemann sphere.

Angles are handled as continuous real numbers so that log z is tracked along
every path. The log branch on the base sector is the literal angle range
(d1 - 2 pi, d1) where d1 is the first Stokes ray counterclockwise from the base
direction.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import _kernels
from . import lie_core as lc
from .errors import BaseOnRay, DegenerateA0, IntegratorFailure, Resonant, SeedAccuracy, TriangularityViolation

TWO_PI = 2 * np.pi
REGULARITY_MARGIN = 1e-6
RAY_MARGIN = 1e-8
RESONANCE_MARGIN = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = 1e-12
    atol: float = 1e-14
    radius: float = 1.0  # matching radius |z_m|
    series_cap: int = 40  # cap on the order of the asymptotic series at 0
    seed_tol: float = 1e-15
    max_junk_exponent: float = 9.0
    frobenius_tail: float = 1e-17
    infinity_radius: float = None  # where the series at infinity is summed (None: |z|)


DEFAULT_OPTIONS = SolverOptions()


# ---------------------------------------------------------------------------
# connection and sector layout


@dataclass(frozen=True)
class IrregularConnection:
    a0: np.ndarray  # diagonal entries of A0
    x: np.ndarray

    def __post_init__(self):
        a0 = np.asarray(self.a0, dtype=complex)
        if a0.ndim == 2:
            a0 = np.diag(a0).copy()
        x = np.asarray(self.x, dtype=complex)
        n = a0.shape[0]
        if x.shape != (n, n):
            raise ValueError(f"x must be {n}x{n}")
        check_regular(a0)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.a0.shape[0]

    @property
    def delta(self):
        return np.diag(self.x).copy()

    def with_x(self, x):
        return IrregularConnection(self.a0, x)


def check_regular(a0):
    a0 = np.asarray(a0)
    n = a0.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if abs(a0[i] - a0[j]) < REGULARITY_MARGIN:
                raise DegenerateA0(f"A0 entries {i} and {j} coincide")


def _wrap(angle):
    return np.mod(angle, TWO_PI)


@dataclass
class SectorLayout:
    a0: np.ndarray
    base_direction: float
    rays: list  # d_1 < d_2 < ... < d_2l as continuous angles, d_1 in (base, base + 2 pi)
    ray_pairs: list  # ray_pairs[k] = [(p, q), ...] with arg(a_q - a_p) = d_{k+1}
    order: tuple  # indices sorted from smallest to largest
    theta0: float  # bisector of the base sector (continuous value inside the branch)
    sectors: list = field(default_factory=list)  # (lo, hi) of Sect_i within the branch range

    @property
    def n_rays(self):
        return len(self.rays)

    @property
    def half(self):
        return len(self.rays) // 2

    @property
    def branch_cut(self):
        return self.rays[0] if self.rays else self.base_direction + np.pi

    @property
    def log_branch(self):
        """Open interval of arg z on the base sector's branch."""
        return (self.branch_cut - TWO_PI, self.branch_cut)

    def bisector(self, i):
        lo, hi = self.sectors[i]
        return 0.5 * (lo + hi)

    def positive_roots(self):
        rank = {k: r for r, k in enumerate(self.order)}
        return [(i, j) for i in range(len(self.a0)) for j in range(len(self.a0)) if i != j and rank[i] < rank[j]]

    def context(self):
        return lc.LieContext(len(self.a0), self.order)

    def precedes(self, i, j):
        return self.order.index(i) < self.order.index(j)

    def crossings(self, start, end):
        """Root pairs (p, q) of the rays strictly between two continuous angles, in path order."""
        lo, hi = min(start, end), max(start, end)
        hits = []
        for k, d in enumerate(self.rays):
            m0 = int(np.ceil((lo - d) / TWO_PI))
            m1 = int(np.floor((hi - d) / TWO_PI))
            for m in range(m0, m1 + 1):
                ang = d + m * TWO_PI
                if lo < ang < hi:
                    hits.append((ang, k))
        hits.sort(reverse=bool(end < start))
        return [pair for _, k in hits for pair in self.ray_pairs[k]]

    def sector_of(self, angle):
        """Index of the sector containing a (continuous) angle."""
        for i, (lo, hi) in enumerate(self.sectors):
            shift = np.floor((angle - lo) / TWO_PI) * TWO_PI
            a = angle - shift
            if lo < a < hi:
                return i
        raise BaseOnRay(f"angle {angle} lies on a Stokes ray")


def sector_layout(a0, base_direction):
    a0 = np.asarray(a0, dtype=complex)
    if a0.ndim == 2:
        a0 = np.diag(a0).copy()
    check_regular(a0)
    n = a0.shape[0]
    base = float(base_direction)
    raw = []
    for p in range(n):
        for q in range(n):
            if p != q:
                raw.append((_wrap(np.angle(a0[q] - a0[p])), (p, q)))
    raw.sort()
    angles, pairs = [], []
    for ang, pq in raw:
        if angles and abs(ang - angles[-1]) < 1e-10:
            pairs[-1].append(pq)
        else:
            angles.append(ang)
            pairs.append([pq])
    if len(angles) > 1 and abs(angles[0] + TWO_PI - angles[-1]) < 1e-10:
        pairs[0].extend(pairs.pop())
        angles.pop()
    for ang in angles:
        diff = abs(_wrap(base - ang + np.pi) - np.pi)
        if diff < RAY_MARGIN:
            raise BaseOnRay(f"base direction {base} is on the Stokes ray {ang}")
    if not angles:
        layout = SectorLayout(a0, base, [], [], tuple(range(n)), base, [(base - np.pi, base + np.pi)])
        return layout
    # d_1: first ray strictly counterclockwise from the base direction
    cont = [a + TWO_PI * np.ceil((base - a) / TWO_PI) for a in angles]
    cont = [c if c > base else c + TWO_PI for c in cont]
    idx = np.argsort(cont)
    rays = [cont[k] for k in idx]
    ray_pairs = [pairs[k] for k in idx]
    two_l = len(rays)
    sectors = [(rays[-1] - TWO_PI, rays[0])]
    for i in range(1, two_l):
        sectors.append((rays[i - 1] - TWO_PI, rays[i] - TWO_PI))
    theta0 = 0.5 * (sectors[0][0] + sectors[0][1])
    proj = np.imag(a0 * np.exp(-1j * theta0))
    order = tuple(int(k) for k in np.argsort(-proj, kind="stable"))
    return SectorLayout(a0, base, rays, ray_pairs, order, theta0, sectors)


# ---------------------------------------------------------------------------
# formal series


@dataclass
class FormalSeries:
    coefficients: np.ndarray  # (N+1, n, n), coefficients[0] = identity
    pole: str
    order: int


def formal_H_series(conn, order):
    coeffs = _kernels.formal_h_coeffs(conn.a0, conn.x, order)
    return FormalSeries(coeffs, "zero", order)


def formal_recursion_residual(conn, series):
    """max_k ||[A0, H_k] - ((k-1) H_{k-1} - x H_{k-1} + H_{k-1} delta)||."""
    a0 = np.diag(conn.a0)
    x = conn.x
    d = np.diag(conn.delta)
    worst = 0.0
    h = series.coefficients
    for k in range(1, h.shape[0]):
        lhs = a0 @ h[k] - h[k] @ a0
        rhs = (k - 1) * h[k - 1] - x @ h[k - 1] + h[k - 1] @ d
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def frobenius_Hinf(conn, order):
    """Coefficients G_k of H_inf = 1 + sum_k G_k z^{-k}: (k + ad_x) G_k = -A0 G_{k-1}."""
    lam, v, vinv = _residue_eig(conn.x)
    _check_resonance(lam, order)
    if v is not None:
        a0_eig = vinv @ np.diag(conn.a0) @ v
        g = _kernels.frobenius_coeffs(a0_eig, lam, order)
        g = np.einsum("ij,kjl,lm->kim", v, g, vinv)
    else:
        g = _frobenius_dense(conn, order)
    return FormalSeries(g, "infinity", order)


def frobenius_recursion_residual(conn, series):
    a0 = np.diag(conn.a0)
    x = conn.x
    g = series.coefficients
    worst = 0.0
    for k in range(1, g.shape[0]):
        lhs = k * g[k] + x @ g[k] - g[k] @ x
        worst = max(worst, float(np.max(np.abs(lhs + a0 @ g[k - 1]))))
    return worst


def _residue_eig(x):
    lam, v = np.linalg.eig(x)
    if np.linalg.cond(v) > lc.COND_THRESHOLD:
        return lam, None, None
    return lam, v, np.linalg.inv(v)


def _check_resonance(lam, order):
    gaps = (lam[:, None] - lam[None, :]).ravel()
    ks = np.arange(1, order + 1)
    dist = np.min(np.abs(ks[:, None] + gaps[None, :])) if order >= 1 else np.inf
    if dist < RESONANCE_MARGIN:
        raise Resonant("k + ad_x is singular for some k; residue is resonant")


def _frobenius_dense(conn, order):
    n = conn.n
    a0 = np.diag(conn.a0)
    ad = lc.ad_matrix(conn.x)
    out = np.zeros((order + 1, n, n), dtype=complex)
    out[0] = np.eye(n)
    for k in range(1, order + 1):
        rhs = -(a0 @ out[k - 1]).reshape(-1)
        out[k] = np.linalg.solve(k * np.eye(n * n) + ad, rhs).reshape(n, n)
    return out


# ---------------------------------------------------------------------------
# integration along paths


def _solve(rhs, y0, span, rtol, atol):
    shape = y0.shape
    sol = solve_ivp(
        lambda s, y: rhs(s, y.reshape(shape)).ravel(),
        span,
        y0.astype(complex).ravel(),
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise IntegratorFailure(sol.message)
    return sol.y[:, -1].reshape(shape)


def _radial_h(conn, acols, dcols, h0, theta, r0, r1, opts):
    a0 = conn.a0
    x = conn.x
    e = np.exp(1j * theta)

    def rhs(s, h):
        return _kernels.h_rhs(s * e, e, a0, x, acols, dcols, h)

    return _solve(rhs, h0, (r0, r1), opts.rtol, opts.atol)


def _arc_h(conn, acols, dcols, h0, radius, phi0, phi1, opts):
    if phi0 == phi1:
        return h0
    a0 = conn.a0
    x = conn.x

    def rhs(phi, h):
        z = radius * np.exp(1j * phi)
        return _kernels.h_rhs(z, 1j * z, a0, x, acols, dcols, h)

    return _solve(rhs, h0, (phi0, phi1), opts.rtol, opts.atol)


def transport_arc(conn, f0, radius, phi0, phi1, opts=DEFAULT_OPTIONS):
    """Continue a fundamental solution along |z| = radius from arg phi0 to arg phi1."""
    if phi0 == phi1:
        return np.array(f0, dtype=complex)
    a0 = conn.a0
    x = conn.x

    def rhs(phi, f):
        z = radius * np.exp(1j * phi)
        return _kernels.f_rhs(z, 1j * z, a0, x, f)

    return _solve(rhs, np.asarray(f0, dtype=complex), (phi0, phi1), opts.rtol, opts.atol)


def transport_radial(conn, f0, theta, r0, r1, opts=DEFAULT_OPTIONS):
    if r0 == r1:
        return np.array(f0, dtype=complex)
    a0 = conn.a0
    x = conn.x
    e = np.exp(1j * theta)

    def rhs(s, f):
        return _kernels.f_rhs(s * e, e, a0, x, f)

    return _solve(rhs, np.asarray(f0, dtype=complex), (r0, r1), opts.rtol, opts.atol)


def _power(values, radius, arg):
    return np.exp(values * (np.log(radius) + 1j * arg))


# ---------------------------------------------------------------------------
# canonical solutions at 0


def _seed(coeffs, j, t_max, seed_tol, cap):
    """Seed radius and truncation order for column j (least-term rule)."""
    norms = np.linalg.norm(coeffs[:, :, j], axis=1)
    ks = np.arange(coeffs.shape[0])

    def err(t):
        terms = norms[1:] * t ** ks[1:]
        k = int(np.argmin(terms)) + 1
        return terms[k - 1], k

    if err(t_max)[0] <= seed_tol:
        t = t_max
    else:
        lo, hi = 1e-4 * t_max, t_max
        if err(lo)[0] > seed_tol:
            raise SeedAccuracy("cannot meet seed tolerance at any admissible radius")
        for _ in range(60):
            mid = np.sqrt(lo * hi)
            if err(mid)[0] <= seed_tol:
                lo = mid
            else:
                hi = mid
        t = lo
    _, k = err(t)
    return t, min(k, cap + 1)


@dataclass
class _Pinned:
    column: int
    seed_angle: float  # continuous
    pinned_against: set  # k with the pinned property


def _candidate_angles(layout):
    out = []
    for lo, hi in layout.sectors:
        w = hi - lo
        m = min(np.deg2rad(6.0), w / 3)
        out.extend([lo + m, 0.5 * (lo + hi), hi - m])
    return out


def _column_closure(layout, j, start, end):
    s = {j}
    for p, q in layout.crossings(start, end):
        if p in s:
            s.add(q)
    return s


def _plan_sector(layout, conn, i, seeds_t):
    """Choose seed directions so that every (column j, other index k) is pinned."""
    n = conn.n
    a0 = conn.a0
    phi = layout.bisector(i)
    plan = []
    cands = _candidate_angles(layout)
    for j in range(n):
        others = [m for m in range(n) if m != j]
        options = []
        for c in cands:
            base = (c - phi) % TWO_PI
            for delta in (base, base - TWO_PI):
                theta = phi + delta
                exps = [
                    abs(a0[m] - a0[j]) * np.cos(theta - np.angle(a0[m] - a0[j])) / seeds_t[j] for m in others
                ]
                junk = max(exps) if exps else -np.inf
                s = _column_closure(layout, j, phi, theta)
                options.append((max(junk, 0.0) + abs(delta), junk, theta, s))
        options.sort(key=lambda o: o[0])
        chosen = {}
        for k in others:
            for score, junk, theta, s in options:
                if k not in s:
                    break
            else:
                raise SeedAccuracy(f"no admissible seed direction pins column {j} against {k}")
            if junk > 0 and junk > np.log(1e-3 / 1e-15):
                raise SeedAccuracy(f"seed direction for column {j} amplifies errors by e^{junk:.1f}")
            chosen.setdefault(theta, set()).add(k)
        if not others:
            chosen[phi] = set()
        for theta, ks in chosen.items():
            plan.append(_Pinned(j, theta, ks))
    return plan


class CanonicalSolver:
    """Evaluates canonical solutions F_i of the given connection."""

    def __init__(self, conn, layout, opts=DEFAULT_OPTIONS, series_cap=None):
        self.conn = conn
        self.layout = layout
        self.opts = opts
        self.cap = opts.series_cap if series_cap is None else series_cap
        self.coeffs = _kernels.formal_h_coeffs(conn.a0, conn.x, self.cap + 1)
        self.diagnostics = {}

    def _seed_params(self, radius):
        n = self.conn.n
        return [_seed(self.coeffs, j, 0.5 * radius, self.opts.seed_tol, self.cap) for j in range(n)]

    def pinned_vector(self, j, theta, radius, target_arg, t0, order):
        """Solution with the asymptotics of column j along arg z = theta, continued to the target."""
        conn = self.conn
        coeffs = self.coeffs
        z0 = t0 * np.exp(1j * theta)
        powers = z0 ** np.arange(order)
        u0 = np.tensordot(powers, coeffs[:order, :, j], axes=(0, 0)).reshape(-1, 1)
        acols = conn.a0[j : j + 1].copy()
        dcols = conn.delta[j : j + 1].copy()
        u = _radial_h(conn, acols, dcols, u0, theta, t0, radius, self.opts)
        u = _arc_h(conn, acols, dcols, u, radius, theta, target_arg, self.opts)
        z = radius * np.exp(1j * target_arg)
        scale = np.exp(-conn.a0[j] / z) * _power(conn.delta[j], radius, target_arg)
        return u[:, 0] * scale

    def evaluate(self, i, radius=None, arg=None):
        """F_i at radius * e^{i arg}; arg defaults to the bisector of Sect_i."""
        conn = self.conn
        layout = self.layout
        n = conn.n
        radius = self.opts.radius if radius is None else radius
        if arg is None:
            arg = layout.bisector(i)
        if not layout.rays:
            # n = 1: the equation is scalar and solved in closed form
            if n > 1:
                raise DegenerateA0("no Stokes rays for n > 1")
            z = radius * np.exp(1j * arg)
            return np.diag(np.exp(-conn.a0 / z) * _power(conn.delta, radius, arg))
        seeds = self._seed_params(radius)
        t0s = [s[0] for s in seeds]
        plan = _plan_sector(layout, conn, i, t0s)
        eqs = {k: ([], []) for k in range(n)}
        for item in plan:
            j = item.column
            t0, order = seeds[j]
            v = self.pinned_vector(j, item.seed_angle, radius, arg, t0, order)
            for k in item.pinned_against:
                eqs[k][0].append(v)
                eqs[k][1].append(0.0)
            eqs[j][0].append(v)
            eqs[j][1].append(1.0)
        y = np.zeros((n, n), dtype=complex)
        worst = 0.0
        for k in range(n):
            a = np.array(eqs[k][0])
            b = np.array(eqs[k][1], dtype=complex)
            sol, *_ = np.linalg.lstsq(a, b, rcond=None)
            y[k] = sol
            worst = max(worst, float(np.max(np.abs(a @ sol - b))))
        self.diagnostics[(i, radius, arg)] = {"lstsq_residual": worst, "seed_radii": t0s}
        return np.linalg.inv(y)


def eval_canonical_F(conn, layout, sector_index, z, arg=None, opts=DEFAULT_OPTIONS, series_cap=None):
    """F_i(z) = H_i(z) e^{-A0/z} z^{delta(x)} with the log branch continued from the base sector."""
    if arg is None:
        arg = _representative(np.angle(z), layout.bisector(sector_index))
    solver = CanonicalSolver(conn, layout, opts, series_cap)
    return solver.evaluate(sector_index, abs(z), arg)


def _representative(angle, center):
    return angle + TWO_PI * np.round((center - angle) / TWO_PI)


# ---------------------------------------------------------------------------
# solution at infinity


def eval_F_infinity(conn, z, arg=None, opts=DEFAULT_OPTIONS, radius0=None, order=None):
    """F_inf = H_inf z^x: series summed at |z| = R0, then continued radially to z."""
    radius = abs(z)
    if arg is None:
        arg = np.angle(z)
    r0 = radius0 if radius0 is not None else (opts.infinity_radius or radius)
    h = _sum_infinity_series(conn, r0 * np.exp(1j * arg), opts.frobenius_tail, order)
    f = h @ _residue_power(conn.x, r0, arg)
    if r0 != radius:
        f = transport_radial(conn, f, arg, r0, radius, opts)
    return f


def _sum_infinity_series(conn, w, tail, order=None):
    lam, v, vinv = _residue_eig(conn.x)
    k = order or 40
    while True:
        _check_resonance(lam, k)
        if v is not None:
            a0_eig = vinv @ np.diag(conn.a0) @ v
            g = _kernels.frobenius_coeffs(a0_eig, lam, k)
        else:
            g = _frobenius_dense(conn, k)
        powers = w ** (-np.arange(k + 1, dtype=float))
        terms = np.abs(g).reshape(k + 1, -1).max(axis=1) * np.abs(powers)
        if order is not None or terms[-1] < tail or k >= 640:
            break
        k *= 2
    h = np.tensordot(powers, g, axes=(0, 0))
    if v is not None:
        h = v @ h @ vinv
    return h


def _residue_power(x, radius, arg):
    return expm(x * (np.log(radius) + 1j * arg))


# ---------------------------------------------------------------------------
# monodromy data


@dataclass
class MonodromyData:
    C: np.ndarray
    S_plus: np.ndarray
    S_minus: np.ndarray
    delta_x: np.ndarray
    layout: SectorLayout
    x: np.ndarray
    tolerances: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def connection_matrix(conn, layout, opts=DEFAULT_OPTIONS, radius=None, series_cap=None):
    """C = F_0(z_m)^{-1} F_inf(z_m) on the bisector of the base sector."""
    radius = opts.radius if radius is None else radius
    if not layout.rays:
        return np.eye(conn.n, dtype=complex)
    arg = layout.theta0
    solver = CanonicalSolver(conn, layout, opts, series_cap)
    f0 = solver.evaluate(0, radius, arg)
    finf = eval_F_infinity(conn, radius * np.exp(1j * arg), arg, opts)
    return np.linalg.solve(f0, finf)


def monodromy(conn, layout, opts=DEFAULT_OPTIONS, check=True):
    """Connection matrix and both Stokes matrices from one set of canonical solutions."""
    n = conn.n
    delta = conn.delta
    if not layout.rays:
        eye = np.eye(n, dtype=complex)
        return MonodromyData(eye, eye.copy(), eye.copy(), np.diag(delta), layout, conn.x, _tol(opts))
    radius = opts.radius
    th0 = layout.theta0
    thl = layout.bisector(layout.half)
    solver = CanonicalSolver(conn, layout, opts)
    f0 = solver.evaluate(0, radius, th0)
    fl = solver.evaluate(layout.half, radius, thl)
    finf = eval_F_infinity(conn, radius * np.exp(1j * th0), th0, opts)
    c = np.linalg.solve(f0, finf)
    # F_l continued counterclockwise into Sect_0 equals F_0 S_-
    fl_moved = transport_arc(conn, fl, radius, thl, th0, opts)
    s_minus = np.linalg.solve(f0, fl_moved)
    # F_0 continued counterclockwise into Sect_l equals F_l S_+ e^{2 pi i delta}
    f0_moved = transport_arc(conn, f0, radius, th0, thl + TWO_PI, opts)
    s_plus = np.linalg.solve(fl, f0_moved) * np.exp(-2j * np.pi * delta)[None, :]
    data = MonodromyData(c, s_plus, s_minus, np.diag(delta), layout, conn.x, _tol(opts), dict(solver.diagnostics))
    if check:
        off = triangularity_defect(data)
        if off > 1e-6:
            raise TriangularityViolation(f"Stokes matrices off their unipotent structure by {off:.2e}")
    return data


def _tol(opts):
    return {"ode_rtol": opts.rtol, "ode_atol": opts.atol, "seed_tol": opts.seed_tol}


def stokes_matrices(conn, layout, opts=DEFAULT_OPTIONS):
    data = monodromy(conn, layout, opts)
    return data.S_plus, data.S_minus


def structure_masks(layout):
    """Boolean masks of the strictly upper / strictly lower entries w.r.t. the layout ordering."""
    n = len(layout.a0)
    upper = np.zeros((n, n), dtype=bool)
    for i, j in layout.positive_roots():
        upper[i, j] = True
    return upper, upper.T.copy()


def triangularity_defect(data):
    """Largest entry of S_+ - 1 outside the upper part, or of S_- - 1 outside the lower part."""
    upper, lower = structure_masks(data.layout)
    eye = np.eye(upper.shape[0])
    dp = np.abs(data.S_plus - eye)
    dm = np.abs(data.S_minus - eye)
    return float(max(dp[~upper].max(initial=0.0), dm[~lower].max(initial=0.0)))


def monodromy_relation_residual(data):
    """||C e^{2 pi i x} C^{-1} - S_- S_+ e^{2 pi i delta}||_inf.

    Both sides are the monodromy of F_0 around 0 (F_inf = F_0 C).
    """
    lhs = data.C @ expm(2j * np.pi * data.x) @ np.linalg.inv(data.C)
    rhs = data.S_minus @ data.S_plus @ expm(2j * np.pi * data.delta_x)
    return float(np.max(np.abs(lhs - rhs)))


def printed_relation_residual(data):
    """||C^{-1} e^{2 pi i delta} C - S_- S_+ e^{2 pi i delta}||_inf (kept for comparison)."""
    e = expm(2j * np.pi * data.delta_x)
    lhs = np.linalg.inv(data.C) @ e @ data.C
    rhs = data.S_minus @ data.S_plus @ e
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# Stokes map and the rescaled connection matrix


def stokes_map(conn, layout, opts=DEFAULT_OPTIONS, data=None):
    """(e^{-pi i delta} S_-^{-1}, e^{-pi i delta} S_+ e^{2 pi i delta}, delta)."""
    from .poisson_geometry import GStarTriple, check_membership

    if data is None:
        data = monodromy(conn, layout, opts)
    d = np.diag(data.delta_x)
    em = np.diag(np.exp(-1j * np.pi * d))
    bm = em @ np.linalg.inv(data.S_minus)
    bp = em @ data.S_plus @ np.diag(np.exp(2j * np.pi * d))
    triple = GStarTriple(bm, bp, np.diag(d), tuple(layout.order))
    check_membership(triple)
    return triple


def c2pii_field(ctx, a0, layout, opts=DEFAULT_OPTIONS, fd_step=1e-4):
    """x -> C(x / (2 pi i)) as a cached map g* -> G."""
    from .rmatrix_dynamics import GValuedMap

    a0 = np.asarray(a0, dtype=complex)
    if a0.ndim == 2:
        a0 = np.diag(a0).copy()

    def ev(x):
        conn = IrregularConnection(a0, np.asarray(x, dtype=complex) / (2j * np.pi))
        return connection_matrix(conn, layout, opts)

    return GValuedMap(ev, ctx.n, fd_step=fd_step, name="C_2pii")
