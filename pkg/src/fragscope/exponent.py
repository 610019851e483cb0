"""Levy exponent, critical constants and multifractal spectra."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np
from scipy import integrate, optimize

from .errors import BracketFailure, DivergentExponent, OutOfRangeBeta
from .model import BINARY_POWERLAW, BINARY_UNIFORM, TERNARY, DislocationModel

QUAD_TOL = 1e-12
ROOT_TOL = 1e-12
PBAR_BRACKET = (1e-6, 64.0)


def p_lower(model: DislocationModel) -> float:
    """Finiteness boundary of the exponent (exclusive)."""
    if model.kind == BINARY_UNIFORM:
        return -2.0
    if model.kind == BINARY_POWERLAW:
        return model.a - 2.0
    return -math.inf


def _check_domain(model, p):
    lo = p_lower(model)
    if not p > lo:
        raise DivergentExponent(f"exponent of {model.kind} diverges at p={p} (needs p > {lo})")


# -- closed forms -----------------------------------------------------------

def _closed(model, p, order):
    if model.kind == BINARY_UNIFORM:
        return (p / (p + 2), 2 / (p + 2) ** 2, -4 / (p + 2) ** 3)[order]
    if model.kind == TERNARY:
        l3 = math.log(3.0)
        e = 3.0 ** (-p)
        return (1 - e, l3 * e, -l3 * l3 * e)[order]
    return None


def _atomic(model, p, order, epsilon):
    terms = []
    for rate, sizes in model.atoms:
        if 1.0 - sizes[0] <= epsilon:
            continue
        logs = [math.log(s) for s in sizes]
        if order == 0:
            # 1 - sum u^{p+1} = -sum(u (u^p - 1)) for conservative partitions, keeps Phi(0) exact
            val = -math.fsum(s * math.expm1(p * lg) for s, lg in zip(sizes, logs))
        elif order == 1:
            val = math.fsum(math.exp((p + 1) * lg) * -lg for lg in logs)
        else:
            val = -math.fsum(math.exp((p + 1) * lg) * lg * lg for lg in logs)
        terms.append(rate * val)
    return math.fsum(terms)


# -- quadrature for continuous binary models ---------------------------------

def _binary_terms(log_s, log_1ms, s, p, order):
    """Integrand (without the density) for a binary split with first block s."""
    q = p + 1.0
    if order == 0:
        # 1 - s^q - (1-s)^q == -expm1(q log(1-s)) - s^q
        return -math.expm1(q * log_1ms) - math.exp(q * log_s)
    if order == 1:
        return math.exp(q * log_s) * -log_s + math.exp(q * log_1ms) * -log_1ms
    return -(math.exp(q * log_s) * log_s * log_s + math.exp(q * log_1ms) * log_1ms * log_1ms)


def _left_integrand(v, p, order, a_w, m):
    # s = v^m on the left half; density s^{-a_w}; Jacobian m v^{m-1}
    if v <= 0.0:
        return 0.0
    log_v = math.log(v)
    log_s = m * log_v
    s = math.exp(log_s)
    log_1ms = math.log1p(-s)
    log_weight = math.log(m) + (m - 1.0 - a_w * m) * log_v
    if order == 0:
        q = p + 1.0
        # 1 - (1-s)^q computed stably, then split the s^q term so each piece is weighted in log space
        head = -math.expm1(q * log_1ms)
        if head != 0.0:
            first = math.copysign(math.exp(math.log(abs(head)) + log_weight), head)
        else:
            first = 0.0
        second = math.exp(q * log_s + log_weight)
        return first - second
    if order == 1:
        t1 = math.exp((p + 1.0) * log_s + log_weight) * -log_s
        t2 = math.exp((p + 1.0) * log_1ms + log_weight) * -log_1ms if log_1ms != 0.0 else 0.0
        return t1 + t2
    t1 = math.exp((p + 1.0) * log_s + log_weight) * log_s * log_s
    t2 = math.exp((p + 1.0) * log_1ms + log_weight) * log_1ms * log_1ms if log_1ms != 0.0 else 0.0
    return -(t1 + t2)


def _right_integrand(v, p, order, a_w):
    # 1 - s = v^2 on the right half; Jacobian 2v
    if v <= 0.0:
        return 0.0
    log_1ms = 2.0 * math.log(v)
    s = 1.0 - v * v
    log_s = math.log1p(-v * v)
    return _binary_terms(log_s, log_1ms, s, p, order) * math.exp(-a_w * log_s) * 2.0 * v


def _binary_quad(model, p, order, epsilon):
    a_w = model.a if model.kind == BINARY_POWERLAW else 0.0
    # s = v^m makes both endpoint terms s^{1-a} and s^{p+1-a} at worst bounded near v = 0
    m = min(max(2.0 / (2.0 - a_w), 1.0 / (p + 2.0 - a_w)), 64.0)
    lo, hi = epsilon, 1.0 - epsilon
    v_lo = lo ** (1.0 / m) if lo > 0 else 0.0
    v_mid = 0.5 ** (1.0 / m)
    opts = dict(epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400)
    left, _ = integrate.quad(partial(_left_integrand, p=p, order=order, a_w=a_w, m=m), v_lo, v_mid, **opts)
    right, _ = integrate.quad(partial(_right_integrand, p=p, order=order, a_w=a_w), math.sqrt(1.0 - hi), math.sqrt(0.5), **opts)
    return left + right


def _evaluate(model, p, order, epsilon=0.0, method="auto"):
    p = float(p)
    _check_domain(model, p)
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "closed") and epsilon == 0.0:
        val = _closed(model, p, order)
        if val is not None:
            return val
        if method == "closed":
            raise ValueError(f"no closed form for {model.kind}")
    if model.is_atomic:
        return _atomic(model, p, order, epsilon)
    return _binary_quad(model, p, order, epsilon)


def phi(model: DislocationModel, p: float, epsilon: float = 0.0, method: str = "auto") -> float:
    """Levy exponent of the (optionally truncated) tagged subordinator."""
    return _evaluate(model, p, 0, epsilon, method)


def phi_derivatives(model: DislocationModel, p: float, epsilon: float = 0.0, method: str = "auto"):
    """``(phi'(p), phi''(p))`` by differentiating under the integral."""
    return _evaluate(model, p, 1, epsilon, method), _evaluate(model, p, 2, epsilon, method)


def phi_prime(model, p, epsilon=0.0, method="auto"):
    return _evaluate(model, p, 1, epsilon, method)


# -- critical constants ------------------------------------------------------

@dataclass(frozen=True)
class ExponentProfile:
    pbar: float
    c: float
    l: float
    phi0prime: float
    phi2_at_pbar: float
    phi2_at_zero: float
    pbar_residual: float
    phi_at_pbar: float
    epsilon: float = 0.0

    def as_dict(self):
        return asdict(self)


def _bracketed_root(fn, lo, hi, what):
    grid = []
    f_lo = fn(lo)
    f_hi = fn(hi)
    grid.extend([(lo, f_lo), (hi, f_hi)])
    doublings = 0
    while f_lo * f_hi > 0 and doublings < 8:
        hi *= 2.0
        f_hi = fn(hi)
        grid.append((hi, f_hi))
        doublings += 1
    if f_lo * f_hi > 0:
        probe = np.linspace(lo, hi, 9)
        diag = [(float(x), float(fn(x))) for x in probe]
        raise BracketFailure(f"{what}: no sign change on [{lo}, {hi}]", grid=diag)
    return optimize.brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def pbar_equation(model, p, epsilon=0.0, method="auto"):
    """``phi(p) - (1+p) phi'(p)``; its positive root is pbar."""
    return phi(model, p, epsilon, method) - (1.0 + p) * phi_prime(model, p, epsilon, method)


def solve_pbar(model: DislocationModel, epsilon: float = 0.0, method: str = "auto") -> ExponentProfile:
    g = partial(pbar_equation, model, epsilon=epsilon, method=method)
    pbar = _bracketed_root(g, *PBAR_BRACKET, what="pbar")
    d1, d2 = phi_derivatives(model, pbar, epsilon, method)
    phi_pbar = phi(model, pbar, epsilon, method)
    d1_0, d2_0 = phi_derivatives(model, 0.0, epsilon, method)
    residual = phi_pbar / (1.0 + pbar) - d1
    return ExponentProfile(
        pbar=pbar,
        c=d1,
        l=1.5 / (1.0 + pbar),
        phi0prime=d1_0,
        phi2_at_pbar=d2,
        phi2_at_zero=d2_0,
        pbar_residual=residual,
        phi_at_pbar=phi_pbar,
        epsilon=epsilon,
    )


def psi(model, q, epsilon=0.0):
    """Characteristic exponent of the log-correlated field, q - phi(q-1)/phi'(0)."""
    return q - phi(model, q - 1.0, epsilon) / phi_prime(model, 0.0, epsilon)


def psi_prime(model, q, epsilon=0.0):
    return 1.0 - phi_prime(model, q - 1.0, epsilon) / phi_prime(model, 0.0, epsilon)


def psi_and_alignment(model: DislocationModel, profile: ExponentProfile):
    """Solve psi'(q) = psi(q)/q; return ``(qbar, |qbar - (pbar + 1)|)``."""
    eps = profile.epsilon

    def h(q):
        return q * psi_prime(model, q, eps) - psi(model, q, eps)

    qbar = _bracketed_root(h, 1.0 + PBAR_BRACKET[0], 1.0 + PBAR_BRACKET[1], what="qbar")
    return qbar, abs(qbar - (profile.pbar + 1.0))


def covariance_constants(model: DislocationModel, epsilon: float = 0.0):
    """The two candidate per-unit-time covariance constants, -phi''(0) and -phi''(-1)."""
    return -phi_derivatives(model, 0.0, epsilon)[1], -phi_derivatives(model, -1.0, epsilon)[1]


# -- multifractal spectrum ---------------------------------------------------

@dataclass(frozen=True)
class SpectrumPoint:
    beta: float
    q_beta: float
    dim_euclid: float
    dim_intrinsic: float
    alpha: float
    f_alpha: float

    def as_dict(self):
        return asdict(self)


def _spectrum_lower(model):
    return max(-1.0, p_lower(model))


def solve_q_beta(model, beta, epsilon=0.0):
    lo = _spectrum_lower(model)
    lo_eval = lo + 1e-9 if math.isfinite(lo) else -1.0
    f = lambda q: phi_prime(model, q, epsilon) - beta
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise OutOfRangeBeta(f"beta={beta} is too small to be attained")
    return optimize.brentq(f, lo_eval, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def spectrum(model: DislocationModel, beta: float, profile: ExponentProfile | None = None,
             epsilon: float = 0.0) -> SpectrumPoint:
    """Euclidean and intrinsic-metric dimensions of the set of points decaying at rate beta."""
    profile = profile or solve_pbar(model, epsilon)
    lo = _spectrum_lower(model)
    beta = float(beta)
    upper = phi_prime(model, lo + 1e-9, epsilon) if model.kind == BINARY_UNIFORM or model.is_atomic else math.inf
    if not (profile.c - 1e-12 <= beta < upper) or beta <= 0:
        raise OutOfRangeBeta(f"beta={beta} outside [{profile.c}, {upper})")
    q = solve_q_beta(model, beta, epsilon)
    ph = phi(model, q, epsilon)
    d0 = profile.phi0prime
    dim_e = 1.0 + q - ph / beta
    dim_i = beta / d0 * (1.0 + q) - ph / d0
    alpha = psi_prime(model, q + 1.0, epsilon)
    f_alpha = psi(model, q + 1.0, epsilon) - alpha * (q + 1.0)
    return SpectrumPoint(beta, q, dim_e, dim_i, alpha, f_alpha)


def solve_p_alpha(model, alpha, epsilon=0.0):
    """Root of psi'(p) = alpha, found independently of the beta parametrisation."""
    lo = _spectrum_lower(model) + 1.0
    lo_eval = lo + 1e-9
    f = lambda p: psi_prime(model, p, epsilon) - alpha
    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise OutOfRangeBeta(f"alpha={alpha} outside the spectrum")
    return optimize.brentq(f, lo_eval, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def f_alpha(model, alpha, epsilon=0.0):
    p = solve_p_alpha(model, alpha, epsilon)
    return psi(model, p, epsilon) - alpha * p
