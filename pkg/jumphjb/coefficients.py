# Copyright 2026 JumpHJB Development Team.
#
# This file is part of JumpHJB, a toolkit for controlled jump-diffusions
# with recursive costs.
#
# JumpHJB is free software: you can redistribute it and/or modify it
# under the terms of the GNU Lesser General Public License (LGPL) as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# JumpHJB is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY
# or FITNESS FOR A PARTICULAR PURPOSE. See the GNU Lesser General
# Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public
# License along with JumpHJB. If not, see <http://www.gnu.org/licenses/>.

"""Problem instances and the operators built from them.

A :class:`CoefficientSet` holds the coefficients of the controlled
state equation

    dX = b(t, X, u) dt + sigma(t, X, u) dW + int_E g(t, e, X-, u) mu~(dt, de)

and of the recursive cost

    -dY = f(t, X, u, Y, Z, int_E K(e) l(t, e) nu(de)) dt - Z dW
          - int_E K(e) mu~(dt, de),     Y(T) = h(X(T)).

The coefficient callbacks are batched: the state argument has shape
``(P, n)`` and the control argument shape ``(P, k)``. The callbacks
return

* ``b(t, x, u)`` with shape ``(P, n)``,
* ``sigma(t, x, u)`` with shape ``(P, n, d)``,
* ``g(t, e, x, u)`` with shape ``(P, n)`` for a single mark *e*,
* ``f(t, x, u, y, z, k)`` with shape ``(P,)``,
* ``h(x)`` with shape ``(P,)``,
* ``l_weight(t, e)`` a non-negative number.

Coefficient sets flagged as random receive an extra ``history``
keyword, a read-only :class:`jumphjb.forward.NoiseHistory` handle.

The operators of this module accept a single state or a batch and
return a number or a ``(P,)`` array. The infimum over the control set
is an exact minimum over the finite control grid with ties broken
toward the lowest control index.
"""

import copy
from collections import OrderedDict

import numpy as np
from twisted.logger import Logger

from jumphjb.errors import InvalidInstance
from jumphjb.field import Field, MarkField, VectorField
from jumphjb.util import as_batch, column, unbatch

log = Logger()


class CoefficientSet(object):
    """The problem instance (b, sigma, g, f, h, l) with growth exponent
    *p* and a finite control set."""

    def __init__(self, b, sigma, g, f, h, n=1, d=1, l_weight=None, p=2,
                 controls=((0.0,),), random=False, name=None):
        if p < 2:
            raise InvalidInstance("growth exponent p must be at least 2")
        if n < 1 or d < 1:
            raise InvalidInstance("dimensions must be positive")
        controls = np.asarray(controls, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1)
        self.b = b
        self.sigma = sigma
        self.g = g
        self.f = f
        self.h = h
        self.l_weight = l_weight
        self.n = n
        self.d = d
        self.p = p
        self.controls = controls
        self.random = random
        self.name = name

    def replace(self, **changes):
        """A copy with some attributes replaced."""
        other = copy.copy(self)
        for key, value in changes.items():
            if not hasattr(self, key):
                raise InvalidInstance("unknown coefficient %r" % key)
            setattr(other, key, value)
        if "controls" in changes:
            other.controls = np.asarray(other.controls, dtype=float)
            if other.controls.ndim == 1:
                other.controls = other.controls.reshape(-1, 1)
        return other

    @property
    def control_dimension(self):
        return self.controls.shape[1]

    def require_controls(self):
        if len(self.controls) == 0:
            raise InvalidInstance("the control set is empty")

    def check_states(self, batch):
        if batch.shape[1] != self.n:
            raise InvalidInstance("expected states of dimension %d, got %d"
                                  % (self.n, batch.shape[1]))

    def control_batch(self, u, count):
        """Broadcast a control point or a batch of them to ``(P, k)``."""
        u = np.asarray(u, dtype=float)
        if u.ndim <= 1:
            u = u.reshape(1, -1)
        try:
            return np.broadcast_to(u, (count, self.control_dimension))
        except ValueError:
            raise InvalidInstance("controls of shape %s do not match "
                                  "dimension %d" % (u.shape,
                                                    self.control_dimension))

    def _extra(self, history):
        if self.random:
            return {"history": history}
        return {}

    def drift(self, t, x, u, history=None):
        u = self.control_batch(u, len(x))
        values = np.asarray(self.b(t, x, u, **self._extra(history)),
                            dtype=float)
        return np.broadcast_to(values, x.shape)

    def diffusion(self, t, x, u, history=None):
        u = self.control_batch(u, len(x))
        values = np.asarray(self.sigma(t, x, u, **self._extra(history)),
                            dtype=float)
        return np.broadcast_to(values, (len(x), self.n, self.d))

    def jump(self, t, e, x, u, history=None):
        u = self.control_batch(u, len(x))
        values = np.asarray(self.g(t, e, x, u, **self._extra(history)),
                            dtype=float)
        return np.broadcast_to(values, x.shape)

    def jumps(self, t, x, u, mm, history=None):
        """Displacements at every atom, shape ``(P, m, n)``."""
        result = np.empty((len(x), mm.size, self.n))
        for j, mark in enumerate(mm.marks):
            result[:, j] = self.jump(t, mark, x, u, history)
        return result

    def driver(self, t, x, u, y, z, k, history=None):
        count = len(x)
        u = self.control_batch(u, count)
        y = column(y, count)
        z = np.broadcast_to(np.asarray(z, dtype=float), (count, self.d))
        k = column(k, count)
        return column(self.f(t, x, u, y, z, k, **self._extra(history)),
                      count)

    def terminal(self, x, history=None):
        return column(self.h(x, **self._extra(history)), len(x))

    def weights(self, t, mm):
        """The weight l(t, e) at every atom."""
        if self.l_weight is None:
            return np.ones(mm.size)
        return np.array([float(self.l_weight(t, e)) for e in mm.marks])

    def __repr__(self):
        return "<CoefficientSet %s: n=%d, d=%d, p=%g, %d controls>" % (
            self.name or "anonymous", self.n, self.d, self.p,
            len(self.controls))


class TestField(object):
    """A semimartingale test field: the value *phi* with its spatial
    derivatives, the drift rate *alpha*, the Brownian characteristic
    *beta* with its Jacobian and the jump characteristic *gamma*."""

    def __init__(self, phi, alpha=None, beta=None, gamma=None):
        self.phi = phi
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma

    def growth_ratio(self, cs, mm, t, points):
        """Largest ratio of the combined size of all characteristics to
        ``1 + |x|^p`` over the *points*."""
        batch, _ = as_batch(points, cs.n)
        count = len(batch)
        size = np.abs(self.phi.value(t, batch)).reshape(count)
        size = size + np.linalg.norm(self.phi.gradient(t, batch).reshape(
            count, -1), axis=1)
        size = size + np.linalg.norm(self.phi.hessian(t, batch).reshape(
            count, -1), axis=1)
        if self.alpha is not None:
            size = size + np.abs(column(self.alpha(t, batch), count))
        if self.beta is not None:
            size = size + np.linalg.norm(self.beta.value(t, batch).reshape(
                count, -1), axis=1)
            size = size + np.linalg.norm(self.beta.jacobian(t, batch).reshape(
                count, -1), axis=1)
        if self.gamma is not None:
            gamma = _mark_field(self.gamma).atom_values(t, batch, mm)
            size = size + np.sqrt(mm.integrate(gamma * gamma))
        weight = 1 + np.linalg.norm(batch, axis=1) ** cs.p
        return float(np.max(size / weight))


def _evaluate(phi, t, batch):
    if phi is None:
        return np.zeros(len(batch))
    if isinstance(phi, Field):
        return column(phi.value(t, batch), len(batch))
    return column(phi(t, batch), len(batch))


def _mark_field(psi):
    if psi is None:
        return MarkField.zero()
    if isinstance(psi, MarkField):
        return psi
    return MarkField(psi)


def _shaped(value, count, shape, name):
    value = np.asarray(value, dtype=float)
    try:
        return np.broadcast_to(value, (count,) + shape)
    except ValueError:
        raise InvalidInstance("%s of shape %s does not match %s"
                              % (name, value.shape, shape))


def hamiltonian(cs, t, x, u, y, p_grad, q, Q, A, k_agg, history=None):
    """The Hamiltonian

        f(t, x, u, y, sigma^T p + q, k) + <p, b> + Tr(Q sigma^T)
        + 1/2 Tr(A sigma sigma^T).

    Here *p_grad* has shape ``(n,)``, *q* shape ``(d,)``, *Q* shape
    ``(n, d)`` and *A* shape ``(n, n)``, all optionally with a leading
    batch axis.
    """
    batch, single = as_batch(x)
    cs.check_states(batch)
    count, n, d = len(batch), cs.n, cs.d
    y = _shaped(y, count, (), "y")
    p_grad = _shaped(p_grad, count, (n,), "gradient")
    q = _shaped(q, count, (d,), "q")
    Q = _shaped(Q, count, (n, d), "Q")
    A = _shaped(A, count, (n, n), "A")
    k_agg = _shaped(k_agg, count, (), "k")

    sigma = cs.diffusion(t, batch, u, history)
    z = np.einsum("pnd,pn->pd", sigma, p_grad) + q
    value = cs.driver(t, batch, u, y, z, k_agg, history)
    value = value + np.einsum("pn,pn->p", p_grad,
                              cs.drift(t, batch, u, history))
    value = value + np.einsum("pnd,pnd->p", Q, sigma)
    value = value + 0.5 * np.einsum("pij,pjk,pik->p", A, sigma, sigma)
    return unbatch(value, single)


def nonlocal_I(cs, phi, t, mark, x, u, history=None):
    """The jump difference ``phi(t, x + g(t, e, x, u)) - phi(t, x)``."""
    batch, single = as_batch(x)
    cs.check_states(batch)
    moved = batch + cs.jump(t, mark, batch, u, history)
    diff = _evaluate(phi, t, moved) - _evaluate(phi, t, batch)
    return unbatch(diff, single)


def nonlocal_L(cs, mm, t, x, u, phi, psi=None, history=None):
    """The weighted nonlocal term

        int_E (I_phi(t, e, x, u) + psi(t, e, x + g)) l(t, e) nu(de).
    """
    batch, single = as_batch(x)
    cs.check_states(batch)
    psi = _mark_field(psi)
    base = _evaluate(phi, t, batch)
    weights = mm.weights * cs.weights(t, mm)
    total = np.zeros(len(batch))
    for j, mark in enumerate(mm.marks):
        moved = batch + cs.jump(t, mark, batch, u, history)
        term = (_evaluate(phi, t, moved) - base
                + column(psi.func(t, mark, moved), len(batch)))
        total += weights[j] * term
    return unbatch(total, single)


def drift_candidates(cs, mm, t, x, V, Z=None, K=None, history=None):
    """The per-control integrand of the drift operator, shape ``(c, P)``.

    For every control *u* this is

        H(t, x, u, V, DV, Z, DZ, D^2V, L(t, x, u, V, K))
        + int_E [I_V - <g, DV> + I_K] nu(de)

    with ``I_K(t, e, x, u) = K(t, e, x + g) - K(t, e, x)``.
    """
    cs.require_controls()
    batch, _ = as_batch(x)
    cs.check_states(batch)
    count = len(batch)
    if Z is None:
        Z = VectorField.zero(cs.n, cs.d)
    K = _mark_field(K)

    v = _evaluate(V, t, batch)
    dv = np.asarray(V.gradient(t, batch), dtype=float).reshape(count, cs.n)
    d2v = np.asarray(V.hessian(t, batch),
                     dtype=float).reshape(count, cs.n, cs.n)
    q = np.asarray(Z.value(t, batch), dtype=float).reshape(count, cs.d)
    # DZ is stored as d Z_j / d x_i, which is (n, d).
    Q = np.transpose(np.asarray(Z.jacobian(t, batch), dtype=float).reshape(
        count, cs.d, cs.n), (0, 2, 1))
    k_here = K.atom_values(t, batch, mm)
    nu = mm.weights
    lw = nu * cs.weights(t, mm)

    rows = []
    for u in cs.controls:
        k_agg = np.zeros(count)
        extra = np.zeros(count)
        for j, mark in enumerate(mm.marks):
            g = cs.jump(t, mark, batch, u, history)
            moved = batch + g
            iv = _evaluate(V, t, moved) - v
            k_moved = column(K.func(t, mark, moved), count)
            k_agg += lw[j] * (iv + k_moved)
            extra += nu[j] * (iv - np.einsum("pn,pn->p", g, dv)
                              + k_moved - k_here[:, j])
        rows.append(hamiltonian(cs, t, batch, u, v, dv, q, Q, d2v, k_agg,
                                history) + extra)
    return np.array(rows).reshape(len(cs.controls), count)


def minimize_drift(cs, mm, t, x, V, Z=None, K=None, history=None):
    """Return the minimum of :func:`drift_candidates` over the controls
    together with the index of the minimizing control."""
    batch, single = as_batch(x)
    rows = drift_candidates(cs, mm, t, batch, V, Z, K, history)
    # argmin returns the first minimum, the lowest control index.
    index = np.argmin(rows, axis=0)
    values = rows[index, np.arange(rows.shape[1])]
    if single:
        return float(values[0]), int(index[0])
    return values, index


def drift_F(cs, mm, t, x, V, Z=None, K=None, history=None):
    """The drift operator F(t, x, V, Z, K): the minimum over the control
    set of :func:`drift_candidates`."""
    return minimize_drift(cs, mm, t, x, V, Z, K, history)[0]


def test_field_F(cs, mm, t, x, tf, history=None):
    """The drift operator with the test field's characteristics in
    place of (V, Z, K)."""
    return drift_F(cs, mm, t, x, tf.phi, tf.beta, tf.gamma, history)


def generator_L(cs, mm, t, x, u, phi, history=None):
    """The integro-differential generator

        <b, Dphi> + 1/2 Tr(sigma sigma^T D^2phi)
        + int_E [phi(x + g) - phi(x) - <g, Dphi>] nu(de).
    """
    batch, single = as_batch(x)
    cs.check_states(batch)
    count = len(batch)
    dphi = np.asarray(phi.gradient(t, batch), dtype=float).reshape(count,
                                                                   cs.n)
    d2phi = np.asarray(phi.hessian(t, batch),
                       dtype=float).reshape(count, cs.n, cs.n)
    sigma = cs.diffusion(t, batch, u, history)
    value = np.einsum("pn,pn->p", cs.drift(t, batch, u, history), dphi)
    value = value + 0.5 * np.einsum("pij,pjk,pik->p", d2phi, sigma, sigma)
    base = _evaluate(phi, t, batch)
    for j, mark in enumerate(mm.marks):
        g = cs.jump(t, mark, batch, u, history)
        value += mm.weights[j] * (_evaluate(phi, t, batch + g) - base
                                  - np.einsum("pn,pn->p", g, dphi))
    return unbatch(value, single)


class ProbeSpec(object):
    """Where and how densely the assumption probes sample.

    The probe draws *pairs* random pairs of states in the box
    ``[lower, upper]``, random controls and random times in
    ``[0, horizon]``. Ratios above *bound* are flagged.
    """

    def __init__(self, lower, upper, pairs=200, bound=100.0, horizon=1.0):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if pairs < 1:
            raise InvalidInstance("the probe grid is empty")
        self.pairs = int(pairs)
        self.bound = float(bound)
        self.horizon = float(horizon)

    def sample_states(self, rng):
        return self.lower + (self.upper - self.lower) * rng.random(
            (self.pairs, len(self.lower)))


def _ratio(numerator, denominator):
    numerator = np.asarray(numerator, dtype=float)
    denominator = np.broadcast_to(np.asarray(denominator, dtype=float),
                                  numerator.shape)
    safe = np.where(denominator > 0, denominator, 1.0)
    ratio = np.where(denominator > 0, numerator / safe,
                     np.where(numerator > 0, np.inf, 0.0))
    if ratio.size == 0:
        return 0.0
    return float(np.max(ratio))


def probe_assumptions(cs, mm, probe, rng):
    """Empirical Lipschitz and growth ratios of the coefficients.

    Each ratio is the largest observed value of the left-hand side of a
    Lipschitz or growth condition divided by its weighted right-hand
    side, so a condition holds on the probe with constant C exactly when
    the ratio is at most C. The report also counts violations of the
    monotonicity of f in its last argument and of the bound
    ``0 <= l(t, e) <= C (1 + |e|)``.
    """
    cs.require_controls()
    if len(probe.lower) != cs.n:
        raise InvalidInstance("probe box of dimension %d for states of "
                              "dimension %d" % (len(probe.lower), cs.n))
    count = probe.pairs
    x = probe.sample_states(rng)
    x2 = probe.sample_states(rng)
    u = cs.controls[rng.integers(len(cs.controls), size=count)]
    u2 = cs.controls[rng.integers(len(cs.controls), size=count)]
    t = float(probe.horizon * rng.random())
    y, y2 = rng.standard_normal(count), rng.standard_normal(count)
    z = rng.standard_normal((count, cs.d))
    z2 = rng.standard_normal((count, cs.d))
    k, k2 = rng.standard_normal(count), rng.standard_normal(count)

    dx = np.linalg.norm(x - x2, axis=1)
    du = np.linalg.norm(u - u2, axis=1)
    nx, nx2 = np.linalg.norm(x, axis=1), np.linalg.norm(x2, axis=1)
    size_u, size_u2 = np.linalg.norm(u, axis=1), np.linalg.norm(u2, axis=1)
    p = cs.p

    b, b2 = cs.drift(t, x, u), cs.drift(t, x2, u2)
    s, s2 = cs.diffusion(t, x, u), cs.diffusion(t, x2, u2)
    db = np.linalg.norm(b - b2, axis=1)
    ds = np.linalg.norm((s - s2).reshape(count, -1), axis=1)
    size_b = np.linalg.norm(b, axis=1)
    size_s = np.linalg.norm(s.reshape(count, -1), axis=1)

    ratios = OrderedDict()
    ratios["lipschitz_b"] = _ratio(db, dx + du)
    ratios["lipschitz_sigma"] = _ratio(ds, dx + du)
    ratios["lipschitz_b_sigma"] = _ratio(db + ds, dx + du)
    ratios["growth_b_sigma"] = _ratio(size_b + size_s, 1 + nx + size_u)

    finite = bool(np.all(np.isfinite(b)) and np.all(np.isfinite(s)))
    lip_g, growth_g = 0.0, 0.0
    for j, mark in enumerate(mm.marks):
        g, g2 = cs.jump(t, mark, x, u), cs.jump(t, mark, x2, u2)
        finite = finite and bool(np.all(np.isfinite(g)))
        rho = mm.rho[j]
        lip_g = max(lip_g, _ratio(np.linalg.norm(g - g2, axis=1),
                                  rho * (dx + du)))
        growth_g = max(growth_g, _ratio(np.linalg.norm(g, axis=1),
                                        rho * (1 + nx + size_u)))
    ratios["lipschitz_g"] = lip_g
    ratios["growth_g"] = growth_g

    fx = cs.driver(t, x, u, y, z, k)
    fx2 = cs.driver(t, x2, u2, y, z, k)
    weight = (1 + nx ** (p - 1) + nx2 ** (p - 1)
              + size_u ** (p - 1) + size_u2 ** (p - 1))
    ratios["lipschitz_f_state"] = _ratio(np.abs(fx - fx2), weight * (dx + du))
    fy2 = cs.driver(t, x, u, y2, z2, k2)
    dyzk = np.abs(y - y2) + np.linalg.norm(z - z2, axis=1) + np.abs(k - k2)
    ratios["lipschitz_f_yzk"] = _ratio(np.abs(fx - fy2), dyzk)
    f0 = cs.driver(t, x, u, 0.0, np.zeros(cs.d), 0.0)
    ratios["growth_f"] = _ratio(np.abs(f0), 1 + nx ** p + size_u ** p)

    h, h2 = cs.terminal(x), cs.terminal(x2)
    ratios["lipschitz_h"] = _ratio(np.abs(h - h2),
                                   (1 + nx ** (p - 1) + nx2 ** (p - 1)) * dx)
    ratios["growth_h"] = _ratio(np.abs(h), 1 + nx ** p)
    finite = finite and bool(np.all(np.isfinite(fx)) and
                             np.all(np.isfinite(h)))

    lw = cs.weights(t, mm)
    ratios["weight_l"] = _ratio(np.abs(lw), 1 + np.linalg.norm(mm.marks,
                                                               axis=1))
    violations = OrderedDict()
    violations["negative_weight"] = int(np.sum(lw < 0))
    step = np.abs(rng.standard_normal(count))
    fk = cs.driver(t, x, u, y, z, k + step)
    tolerance = 1e-12 * (1 + np.abs(fx))
    violations["monotone_k"] = int(np.sum(fk < fx - tolerance))

    flags = [name for name, value in ratios.items()
             if not value <= probe.bound]
    flags.extend(name for name, value in violations.items() if value)
    if not finite:
        flags.append("finite")
    report = OrderedDict()
    report["ratios"] = ratios
    report["violations"] = violations
    report["exp_integrability"] = mm.exp_integrability()
    report["finite"] = finite
    report["flags"] = flags
    if flags:
        log.warn("assumption probe flagged {flags}", flags=flags)
    else:
        log.debug("assumption probe passed: {ratios}", ratios=dict(ratios))
    return report
