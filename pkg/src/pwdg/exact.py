"""Closed-form Helmholtz solutions used as references and boundary data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import element_quadrature

BESSEL_X_MAX = 60.0
#: the ascending series is used up to here; beyond it cancellation costs digits
SERIES_X_MAX = 2.0


def _bessel_series(nu: float, x: np.ndarray):
    """J_nu and J_nu' by the ascending series (accurate for moderate x)."""
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    # leading term via logs so that subnormal x does not underflow x/2
    logh = np.log(xs) - math.log(2.0)
    term = np.where(pos, np.exp(nu * logh), 1.0 if nu == 0 else 0.0) / math.gamma(nu + 1.0)
    total = term.copy()
    dtotal = np.where(pos, 0.5 * np.exp((nu - 1.0) * logh) / math.gamma(nu), 0.0) if nu > 0 \
        else np.zeros_like(x)
    quarter = 0.25 * x * x
    m = 0
    while m < 500:
        m += 1
        term = term * (-quarter / (m * (m + nu)))
        total = total + term
        dtotal = dtotal + term * (2 * m + nu) / xs
        if np.all(np.abs(term) <= 1e-18 * np.abs(total)):
            break
    return total, dtotal


def _bessel_miller(nu: float, x: np.ndarray):
    """J_nu and J_{nu+1} by Miller's backward recurrence (x > 0)."""
    xmax = float(x.max())
    n_start = int(xmax + 30 + 8 * math.sqrt(xmax)) + 2
    if n_start % 2:
        n_start += 1
    f_next = np.zeros_like(x)        # f_{k+1}
    f_cur = np.full_like(x, 1e-300)  # f_k, starting at k = n_start
    norm = np.zeros_like(x)
    f0 = f1 = None

    def weight(k):
        if k == 0:
            return math.gamma(nu + 1.0)
        return (nu + 2 * k) * math.exp(math.lgamma(nu + k) - math.lgamma(k + 1.0))

    for k in range(n_start, -1, -1):
        if k % 2 == 0:
            norm = norm + weight(k // 2) * f_cur
        if k == 1:
            f1 = f_cur
        if k == 0:
            f0 = f_cur
            break
        f_prev = 2.0 * (nu + k) / x * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > 1e250
        if np.any(big):
            s = np.where(big, 1e-250, 1.0)
            f_cur, f_next, norm = f_cur * s, f_next * s, norm * s
            if f1 is not None:
                f1 = f1 * s
    scale = (0.5 * x) ** nu / norm
    return f0 * scale, f1 * scale


def bessel_j(order: float, x):
    """Bessel function of the first kind and its derivative.

    Parameters
    ----------
    order : float
        Order ``xi >= 0`` (fractional orders allowed).
    x : float or array_like
        Arguments in ``[0, 60]``.

    Returns
    -------
    value, derivative
        Same shape as ``x``.  The derivative at ``x = 0`` is the analytic
        limit (``inf`` for ``0 < order < 1``).
    """
    nu = float(order)
    if nu < 0:
        raise ValueError("order must be nonnegative")
    arr = np.asarray(x, dtype=float)
    flat = arr.reshape(-1)
    if np.any(~np.isfinite(flat)) or np.any(flat < 0) or np.any(flat > BESSEL_X_MAX):
        raise ValueError(f"argument outside [0, {BESSEL_X_MAX}]")
    val = np.empty_like(flat)
    der = np.empty_like(flat)
    low = flat <= SERIES_X_MAX
    if np.any(low):
        val[low], der[low] = _bessel_series(nu, flat[low])
    high = ~low
    if np.any(high):
        xs = flat[high]
        j, jn1 = _bessel_miller(nu, xs)
        val[high] = j
        der[high] = nu / xs * j - jn1
    zero = flat == 0.0
    if np.any(zero):
        if nu == 0.0 or nu > 1.0:
            der[zero] = 0.0
        elif nu == 1.0:
            der[zero] = 0.5
        else:
            der[zero] = np.inf
    if arr.ndim == 0:
        return float(val[0]), float(der[0])
    return val.reshape(arr.shape), der.reshape(arr.shape)


# ---------------------------------------------------------------------- solutions
class ExactSolution:
    """Base class: ``evaluate(points) -> (u, grad u)`` on (N, 2) points."""

    kappa: float

    def evaluate(self, points):
        raise NotImplementedError

    def index(self, points) -> np.ndarray:
        """Refractive index at ``points`` (1 unless overridden)."""
        return np.ones(len(np.atleast_2d(points)))


@dataclass(frozen=True)
class PlaneWave(ExactSolution):
    direction: tuple[float, float]
    kappa: float
    amplitude: complex = 1.0

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.asarray(self.direction, dtype=float)
        d = d / np.linalg.norm(d)
        u = self.amplitude * np.exp(1j * self.kappa * (pts @ d))
        return u, 1j * self.kappa * u[:, None] * d[None, :]


@dataclass(frozen=True)
class Bessel(ExactSolution):
    """``J_xi(kappa r) sin(xi theta)`` with theta in [0, 2 pi)."""

    xi: float
    kappa: float

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        theta = np.where(theta < 0, theta + 2.0 * np.pi, theta)
        j, dj = bessel_j(self.xi, self.kappa * r)
        s, c = np.sin(self.xi * theta), np.cos(self.xi * theta)
        u = j * s
        pos = r > 0
        rr = np.where(pos, r, 1.0)
        ur = np.where(pos, self.kappa * np.where(pos, dj, 0.0) * s, 0.0)
        ut = np.where(pos, j * self.xi * c / rr, 0.0)
        cos_t, sin_t = np.where(pos, x / rr, 1.0), np.where(pos, y / rr, 0.0)
        gx = ur * cos_t - ut * sin_t
        gy = ur * sin_t + ut * cos_t
        if np.any(~pos):
            if self.xi == 1.0:
                # J_1(kr) sin(theta) ~ (k/2) y near the origin
                gx = np.where(pos, gx, 0.0)
                gy = np.where(pos, gy, 0.5 * self.kappa)
            else:
                # zero for xi > 1; the singular xi < 1 case gets a finite placeholder
                gx = np.where(pos, gx, 0.0)
                gy = np.where(pos, gy, 0.0)
        return u.astype(complex), np.column_stack([gx, gy]).astype(complex)


@dataclass(frozen=True)
class Transmission(ExactSolution):
    """Plane wave hitting the interface y = 0 from below.

    The medium below has index ``n1`` and carries the incident wave with
    direction ``(cos theta_i, sin theta_i)`` plus the reflected wave; the
    medium above has index ``n2``.  ``theta_i`` is measured from the
    interface, so the wave is evanescent above when
    ``n1 cos theta_i > n2``.
    """

    n1: float
    n2: float
    kappa: float
    theta_i: float

    @property
    def direction(self):
        return math.cos(self.theta_i), math.sin(self.theta_i)

    @property
    def k1(self) -> float:
        return self.kappa * self.n1 * self.direction[0]

    @property
    def k2(self) -> complex:
        d1 = self.direction[0]
        rad = self.n2 ** 2 - self.n1 ** 2 * d1 ** 2
        if rad >= 0:
            return complex(self.kappa * math.sqrt(rad))
        return 1j * self.kappa * math.sqrt(-rad)

    @property
    def evanescent(self) -> bool:
        return self.n2 ** 2 - (self.n1 * self.direction[0]) ** 2 < 0

    @property
    def reflection(self) -> complex:
        kn = self.kappa * self.n1 * self.direction[1]
        return -(self.k2 - kn) / (self.k2 + kn)

    @property
    def transmission(self) -> complex:
        return 1.0 + self.reflection

    def index(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.where(pts[:, 1] < 0, self.n1, self.n2).astype(float)

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        d1, d2 = self.direction
        kn = self.kappa * self.n1
        up = y >= 0
        # above: T exp(i(K1 x + K2 y)); below: incident + reflected
        yu = np.where(up, y, 0.0)
        yl = np.where(up, 0.0, y)
        t_wave = self.transmission * np.exp(1j * (self.k1 * x + self.k2 * yu))
        inc = np.exp(1j * kn * (d1 * x + d2 * yl))
        ref = self.reflection * np.exp(1j * kn * (d1 * x - d2 * yl))
        u = np.where(up, t_wave, inc + ref)
        gx = np.where(up, 1j * self.k1 * t_wave, 1j * kn * d1 * (inc + ref))
        gy = np.where(up, 1j * self.k2 * t_wave, 1j * kn * d2 * (inc - ref))
        return u, np.column_stack([gx, gy])


def eval_exact(solution: ExactSolution, point):
    """``(u, grad u)`` at a single point or an (N, 2) array of points."""
    pts = np.asarray(point, dtype=float)
    u, g = solution.evaluate(np.atleast_2d(pts))
    if pts.ndim == 1:
        return complex(u[0]), g[0]
    return u, g


def boundary_data(solution: ExactSolution, kind: str, points, normals):
    """Dirichlet trace ``u`` or impedance data ``du/dnu - i kappa_loc u``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    u, g = solution.evaluate(pts)
    kind = kind.lower()
    if kind == "dirichlet":
        return u
    if kind == "impedance":
        nu = np.atleast_2d(np.asarray(normals, dtype=float))
        k_loc = solution.kappa * solution.index(pts)
        return np.sum(g * nu, axis=1) - 1j * k_loc * u
    raise ValueError(f"unknown boundary condition {kind!r}")


def relative_l2_error(mesh, space, coeffs, exact: ExactSolution, degree: int = 10) -> float:
    """``||u_h - u|| / ||u||`` in L2 over the mesh by triangle quadrature."""
    points, weights = element_quadrature(mesh, degree)
    nt, q = weights.shape
    flat = points.reshape(-1, 2)
    elements = np.repeat(np.arange(nt), q)
    u, _ = exact.evaluate(flat)
    uh, _ = space.evaluate(coeffs, elements, flat)
    num = np.sum(weights * np.abs((uh - u).reshape(nt, q)) ** 2)
    den = np.sum(weights * np.abs(u.reshape(nt, q)) ** 2)
    if den == 0:
        raise ZeroDivisionError("exact solution has zero L2 norm")
    return float(np.sqrt(num / den))
