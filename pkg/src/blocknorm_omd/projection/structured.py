"""Bregman projections onto simplices and simplex pyramids by KKT root finding.

For a block potential with constants ``(γ, p)`` every block of the minimiser
of ``h(z) − ⟨θ, z⟩`` over ``{z ≥ ℓ, Σz = σ}`` has the form

    z_i = max(ℓ, a_j (θ_i + τ)),    a_j = γ ‖z_{B_j}‖^{2−p},

with a scalar multiplier ``τ`` for the sum constraint.  The simplex
``s·Δ`` is the case ``ℓ = 0, σ = s``.  The pyramid
``conv(s·e_1, …, s·e_d, a·1)`` is the union over ``ℓ ∈ [0, a]`` of the
slices ``{z ≥ ℓ, Σz = s + ℓ (d − s/a)}``; the optimal slice is where the
derivative of the slice value, ``τ σ'(ℓ) + Σ_i κ_i``, changes sign.

Three nested monotone scalar equations are solved with safeguarded Newton
steps (per-block ``a_j``, then ``τ``, then ``ℓ``), using exact derivatives
obtained by implicit differentiation.  All levels are warm-started from the
previous call through a small state dictionary.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import NumericalFailure

_TINY = 1e-300


def newton_increasing(fun, x0, lo, hi, xtol, ftol, max_iter=200):
    """Root of a nondecreasing scalar function with a safeguarded Newton method.

    ``fun(x)`` returns ``(f, df, payload)``.  ``lo``/``hi`` bracket the root
    (``hi`` may be ``inf``).  Returns ``(x, payload)`` at the last evaluation.
    """
    x = min(max(x0, lo), hi) if math.isfinite(hi) else max(x0, lo)
    expand = max(abs(x), 1.0) * 1e-3
    for _ in range(max_iter):
        f, df, payload = fun(x)
        if abs(f) <= ftol:
            return x, payload
        if f < 0:
            lo = x
        else:
            hi = x
        if hi - lo <= xtol:
            return x, payload
        xn = x - f / df if (df > 0 and math.isfinite(df)) else math.nan
        if lo < xn < hi:
            if abs(xn - x) <= xtol:
                f2, _, payload2 = fun(xn)
                if abs(f2) <= abs(f):
                    return xn, payload2
                return x, payload
            x = xn
        elif math.isfinite(hi):
            x = 0.5 * (lo + hi)
        else:
            x = lo + expand
            expand *= 4.0
    raise NumericalFailure("scalar Newton search did not converge", gap=abs(f))


class _Eval:
    __slots__ = ("Z", "a", "S", "S_tau", "S_ell", "kappa", "Q0", "Qtau", "Qell", "NA")


class BlockKKT:
    """Projection kernel for one mirror map (Euclidean or block norm)."""

    def __init__(self, gamma: float, p: float, partition=None):
        self.gamma = float(gamma)
        self.p = float(p)
        self.partition = partition
        if p == 2.0:
            self.mode = "quad"
        elif partition.block_size == 1:
            self.mode = "singleton"
        else:
            self.mode = "coupled"

    # layout -----------------------------------------------------------------

    def to_blocks(self, theta):
        if self.mode == "quad":
            return theta.reshape(1, -1)
        if self.mode == "singleton":
            return theta.reshape(-1, 1)
        return self.partition.to_blocks(theta)

    def from_blocks(self, Z):
        if self.mode == "coupled":
            return self.partition.from_blocks(Z)
        return Z.reshape(-1)

    def link(self, value):
        """``∇h`` of a single coordinate block holding only ``value`` (≥ 0)."""
        return value ** (self.p - 1.0) / self.gamma

    # per-block curvature scalars a_j ----------------------------------------------

    def _block_scalars(self, U, ell, warm):
        g, p = self.gamma, self.p
        if self.mode == "quad":
            return np.full(U.shape[0], g)
        q = 1.0 / (p - 1.0)
        if self.mode == "singleton":
            u = U[:, 0]
            zf = (g * np.maximum(u, 0.0)) ** q
            z = np.maximum(zf, ell)
            with np.errstate(divide="ignore"):
                return np.where(z > 0, g * z ** (2.0 - p), 0.0)
        Up = np.maximum(U, 0.0)
        nplus = np.sqrt(np.einsum("ij,ij->i", Up, Up))
        a_free = (g * nplus ** (2.0 - p)) ** q
        if ell == 0.0:
            return a_free
        m = U.shape[1]
        c1 = g * (ell * math.sqrt(m)) ** (2.0 - p)
        lo = np.maximum(a_free, c1)
        hi = np.maximum(2.0 * c1, 2.0**q * a_free)
        a = lo.copy()
        live = nplus > 0
        if warm is not None and warm.shape == a.shape:
            a = np.where(live, np.clip(warm, lo, hi), lo)
        if not live.any():
            return lo
        idx = np.flatnonzero(live)
        b = np.log(a[idx])
        blo, bhi = np.log(lo[idx]), np.log(hi[idx])
        Ui = U[idx]
        lng = math.log(g)
        for _ in range(100):
            ai = np.exp(b)[:, None]
            V = ai * Ui
            act = V > ell
            Zi = np.where(act, V, ell)
            N2 = np.einsum("ij,ij->i", Zi, Zi)
            P2 = np.einsum("ij,ij->i", np.where(act, Ui, 0.0), np.where(act, Ui, 0.0))
            psi = b - lng - 0.5 * (2.0 - p) * np.log(N2)
            dpsi = 1.0 - (2.0 - p) * (ai[:, 0] ** 2) * P2 / N2
            blo = np.where(psi < 0, b, blo)
            bhi = np.where(psi > 0, b, bhi)
            step = psi / dpsi
            bn = b - step
            out = ~((bn > blo) & (bn < bhi))
            bn = np.where(out, 0.5 * (blo + bhi), bn)
            done = np.abs(bn - b) <= 4e-16 * np.maximum(1.0, np.abs(b))
            b = bn
            if np.all(done | (bhi - blo <= 4e-16 * np.maximum(1.0, np.abs(b)))):
                break
        else:
            raise NumericalFailure("block curvature search did not converge")
        a[idx] = np.exp(b)
        return a

    # one evaluation at (τ, ℓ) --------------------------------------------------

    def evaluate(self, Th, tau, ell, warm=None) -> _Eval:
        p = self.p
        U = Th + tau
        a = self._block_scalars(U, ell, warm)
        V = a[:, None] * U
        act = V > ell
        Z = np.where(act, V, ell)
        Ua = np.where(act, U, 0.0)
        P1 = Ua.sum(axis=1)
        k = act.sum(axis=1)
        na = U.shape[1] - k
        sumU_A = U.sum(axis=1) - P1

        e = _Eval()
        e.Z, e.a = Z, a
        e.S = float(Z.sum())
        pos = a > 0
        inv_a = np.where(pos, 1.0 / np.where(pos, a, 1.0), 0.0)
        if p == 2.0:
            da_tau = da_ell = np.zeros_like(a)
        else:
            P2 = np.einsum("ij,ij->i", Ua, Ua)
            N2 = a * a * P2 + na * ell * ell
            safe = N2 > 0
            N2s = np.where(safe, N2, 1.0)
            D = 1.0 - (2.0 - p) * a * a * P2 / N2s
            c = np.where(safe, (2.0 - p) * a / (N2s * D), 0.0)
            da_tau = c * a * a * P1
            da_ell = c * na * ell
        e.S_tau = float((a * k).sum() + (P1 * da_tau).sum())
        e.S_ell = float(na.sum() + (P1 * da_ell).sum())
        # κ_i = ∇h(z)_i − θ_i − τ on coordinates held at the lower bound
        e.kappa = float((na * ell * inv_a).sum() - sumU_A.sum())
        w = na * ell * inv_a * inv_a
        e.Q0 = float((na * inv_a).sum())
        e.Qtau = float((w * da_tau).sum())
        e.Qell = float((w * da_ell).sum())
        e.NA = float(na.sum())
        return e

    # solvers --------------------------------------------------------------------

    def solve_slice(self, Th, ell, sigma, tau0=None, warm=None):
        """Solve for τ on the slice ``{z ≥ ℓ, Σz = σ}``; returns ``(τ, eval)``."""
        tmax = float(Th.max())
        lo = -tmax
        hi = self.link(sigma) - tmax
        scale = max(abs(lo), abs(hi), 1.0)
        state = {"warm": warm}

        def fun(tau):
            ev = self.evaluate(Th, tau, ell, state["warm"])
            state["warm"] = ev.a
            return ev.S - sigma, ev.S_tau, ev
        x0 = hi if tau0 is None or not math.isfinite(tau0) else tau0
        return newton_increasing(fun, x0, lo, hi, xtol=4e-16 * scale, ftol=2e-16 * max(sigma, _TINY) * 4)

    def project_simplex(self, theta, s, state=None):
        Th = self.to_blocks(theta)
        tau0 = state.get("tau") if state else None
        warm = state.get("a") if state else None
        tau, ev = self.solve_slice(Th, 0.0, s, tau0, warm)
        if state is not None:
            state.update(tau=tau, a=ev.a)
        return self.from_blocks(ev.Z)

    def project_pyramid(self, theta, s, apex, d, state=None, tol=1e-9):
        """Projection onto ``conv(s·e_i, apex·1)``; returns ``z``."""
        Th = self.to_blocks(theta)
        s1 = d - s / apex
        st = state if state is not None else {}

        # apex optimal?  check its Frank-Wolfe gap directly
        m = Th.shape[1]
        if self.mode == "quad":
            g_apex = apex / self.gamma
        else:
            g_apex = (apex * math.sqrt(m)) ** (self.p - 2.0) * apex / self.gamma
        grad = g_apex - theta
        vals_min = min(s * float(grad.min()), apex * float(grad.sum()))
        if apex * float(grad.sum()) - vals_min <= tol:
            return np.full(d, apex)

        cache = {"tau": st.get("tau"), "a": st.get("a")}

        def slice_eval(ell):
            sigma = s + ell * s1
            tau, ev = self.solve_slice(Th, ell, sigma, cache["tau"], cache["a"])
            cache["tau"], cache["a"] = tau, ev.a
            E = s1 * tau + ev.kappa
            tprime = -(ev.S_ell - s1) / ev.S_tau if ev.S_tau > 0 else math.nan
            dE = s1 * tprime + ev.Q0 - (ev.Qtau * tprime + ev.Qell) - ev.NA * tprime
            return E, dE, (tau, ev)

        E0, _, pay0 = slice_eval(0.0)
        if E0 >= 0:
            tau, ev = pay0
            st.update(tau=tau, a=ev.a, ell=0.0)
            return self.from_blocks(ev.Z)
        ell0 = st.get("ell")
        if ell0 is None or not (0.0 < ell0 < apex):
            ell0 = 0.5 * apex
        # a slice-derivative error δ moves the gap by at most about δ·apex
        ell, (tau, ev) = newton_increasing(
            slice_eval, ell0, 0.0, apex, xtol=4e-16 * apex, ftol=1e-3 * tol / apex
        )
        st.update(tau=tau, a=ev.a, ell=ell)
        return self.from_blocks(ev.Z)
