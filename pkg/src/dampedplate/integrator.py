"""Time evolution of the modal Galerkin system ``u'' + D(u, u') + A u + F(u) = 0``.

The step is the implicit midpoint (trapezoidal) rule for the linear part,
with the stiff pieces ``A u`` and a frozen diagonal damping proxy solved
exactly mode by mode, and the remaining nonlinear residual
``F + D - proxy`` resolved by fixed-point correction. The force is
averaged along the segment ``[u0, u1]`` with Gauss--Legendre nodes (the
average vector field), which reproduces ``Pi(u1) - Pi(u0)`` exactly for
polynomial potentials up to degree ``2 * avf_nodes``. Consequently the
discrete energy drops by exactly ``dt * (D(u_mid, v_mid), v_mid)`` per
step, and the ledger's trapezoidal dissipation integral differs from it
only by an O(dt^2) quadrature error that the residual ``r(t)`` measures.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .damping import DampingSpec, make_damping
from .forces import ModelSpec, make_force
from .spectral import ModalField, OperatorA

log = logging.getLogger(__name__)


class StepRejected(ArithmeticError):
    pass


class IntegrationError(RuntimeError):
    """Evolution aborted; ``dump`` holds the state at failure."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 1e-3
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    tol_step: float = 1e-8
    residual_budget: float = 1e-6
    corrector_iterations: int = 2
    corrector_tol: float = 1e-13
    max_corrector_iterations: int = 60
    adaptive: bool = True
    avf_nodes: int = 2
    grow: float = 1.25

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.corrector_iterations < 1 or self.avf_nodes < 1:
            raise ValueError("corrector_iterations and avf_nodes must be >= 1")


@dataclass(frozen=True)
class StatePair:
    u: ModalField
    v: ModalField
    t: float = 0.0

    def __post_init__(self):
        if self.u.domain != self.v.domain:
            raise ValueError("displacement and velocity live on different discretisations")
        if not math.isfinite(self.t):
            raise ValueError("time must be finite")


# energy round-off allowance in units of machine epsilon times the energy scale
ROUNDOFF_ULPS = 64
LEDGER_FIELDS = ("kinetic", "elastic", "potential", "energy", "dissipation", "residual", "theta_integral")


@dataclass
class EnergyLedger:
    """Energy bookkeeping per sample.

    ``energy = kinetic + elastic + potential``; ``dissipation`` is the
    trapezoidal integral of ``(D(u, v), v)`` over the accepted steps and
    ``residual = energy + dissipation - energy[0]``. ``theta_integral``
    accumulates ``|A^{theta/2} v|^2`` in time.
    """

    kinetic: np.ndarray
    elastic: np.ndarray
    potential: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    residual: np.ndarray
    theta_integral: np.ndarray

    def __getitem__(self, key: str) -> np.ndarray:
        if key not in LEDGER_FIELDS:
            raise KeyError(key)
        return getattr(self, key)

    def items(self):
        return ((k, getattr(self, k)) for k in LEDGER_FIELDS)

    def subsample(self, sl) -> "EnergyLedger":
        return EnergyLedger(**{k: a[sl] for k, a in self.items()})


@dataclass
class Trajectory:
    """Sampled states plus the energy ledger at each sample."""

    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    ledger: EnergyLedger
    domain: object
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> StatePair:
        return StatePair(ModalField(self.u[i], self.domain), ModalField(self.v[i], self.domain), float(self.times[i]))

    @property
    def final(self) -> StatePair:
        return self.state(-1)

    def subsample(self, every: int) -> "Trajectory":
        sl = slice(None, None, every)
        return Trajectory(self.times[sl], self.u[sl], self.v[sl], self.ledger.subsample(sl),
                          self.domain, dict(self.meta))


class System:
    """Operator, force and damping evaluators bundled for stepping."""

    def __init__(self, A: OperatorA, model: ModelSpec | None, damping: DampingSpec,
                 settings: IntegratorSettings | None = None):
        self.A = A
        self.model = model
        self.damping_spec = damping
        self.settings = settings or IntegratorSettings()
        self.force = make_force(model, A)
        self.damping = make_damping(damping, A)
        self.lam = A.eigenvalues
        self.theta = damping.theta
        nodes, weights = np.polynomial.legendre.leggauss(self.settings.avf_nodes)
        self._avf = list(zip(0.5 * (nodes + 1.0), 0.5 * weights))

    # -- energy pieces -------------------------------------------------
    def energy_parts(self, cu, cv) -> tuple[float, float, float]:
        kin = 0.5 * float(np.sum(cv * cv))
        ela = 0.5 * float(np.sum(self.lam * cu * cu))
        return kin, ela, float(self.force.potential(cu))

    def energy(self, cu, cv) -> float:
        return sum(self.energy_parts(cu, cv))

    def theta_sq(self, cv) -> float:
        return float(np.sum(self.lam**self.theta * cv * cv))

    def acceleration(self, cu, cv) -> np.ndarray:
        return -(self.damping.apply(cu, cv) + self.lam * cu + self.force.force(cu))

    # -- one step --------------------------------------------------------
    def _force_avg(self, u0, u1):
        if np.array_equal(u0, u1):
            return self.force.force(u0)
        du = u1 - u0
        return sum(w * self.force.force(u0 + s * du) for s, w in self._avf)

    def step_arrays(self, u0: np.ndarray, v0: np.ndarray, dt: float):
        """Advance coefficient arrays by ``dt``; raises :class:`StepRejected`."""
        st = self.settings
        lam = self.lam
        prox = self.damping.proxy(u0)
        a = 0.25 * dt * dt * lam
        p = 0.5 * dt * prox
        denom = 1.0 + a + p
        rhs = v0 * (1.0 - a - p) - dt * lam * u0
        nonlin = self.force.force(u0) + self.damping.apply(u0, v0) - prox * v0
        scale0 = float(np.abs(v0).max() + dt * np.abs(lam * u0).max())
        v1 = (rhs - dt * nonlin) / denom
        prev = np.inf
        for it in range(1, st.max_corrector_iterations + 1):
            u1 = u0 + 0.5 * dt * (v0 + v1)
            vb = 0.5 * (v0 + v1)
            nonlin = self._force_avg(u0, u1) + self.damping.apply(0.5 * (u0 + u1), vb) - prox * vb
            v_new = (rhs - dt * nonlin) / denom
            diff = float(np.abs(v_new - v1).max())
            v1 = v_new
            if not math.isfinite(diff):
                raise StepRejected("non-finite corrector iterate")
            if it >= st.corrector_iterations and diff <= st.corrector_tol * (scale0 + float(np.abs(v1).max())):
                break
            if it >= 3 and diff > 2.0 * prev:
                raise StepRejected(f"corrector diverging (increment {diff:.3g})")
            prev = diff
        else:
            raise StepRejected("corrector did not converge")
        return u0 + 0.5 * dt * (v0 + v1), v1, it


def step(state: StatePair, dt: float, A: OperatorA, model: ModelSpec | None, damping: DampingSpec,
         settings: IntegratorSettings | None = None) -> StatePair:
    if not dt > 0:
        raise ValueError("dt must be positive")
    sys_ = System(A, model, damping, settings)
    u1, v1, _ = sys_.step_arrays(state.u.coeffs, state.v.coeffs, dt)
    return StatePair(ModalField(u1, A.domain), ModalField(v1, A.domain), state.t + dt)


# ---------------------------------------------------------------------------
# Evolution with ledger
# ---------------------------------------------------------------------------


@dataclass
class RunState:
    """Complete loop state of an evolution; serialisable for exact resume."""

    t: float
    u: np.ndarray
    v: np.ndarray
    dt: float
    horizon: float
    stride: float
    out_index: int
    energy0: float
    energy: float
    rate: float
    theta_sq: float
    dissipation: float = 0.0
    theta_integral: float = 0.0
    steps: int = 0
    rejections: int = 0
    max_increase: float = -np.inf
    max_step_residual: float = 0.0
    records: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    t0: float = 0.0

    @property
    def next_output(self) -> float:
        return self.t0 + self.out_index * self.stride

    @property
    def done(self) -> bool:
        return self.next_output > self.horizon + 1e-9 * self.stride or self.t >= self.horizon


class Evolver:
    def __init__(self, system: System):
        self.sys = system

    def start(self, state0: StatePair, horizon: float, stride: float | None = None) -> RunState:
        if not horizon > 0:
            raise ValueError("horizon T must be positive")
        stride = stride or horizon / 100
        s = self.sys
        u, v = np.array(state0.u.coeffs, dtype=float), np.array(state0.v.coeffs, dtype=float)
        e = s.energy(u, v)
        rs = RunState(t=float(state0.t), u=u, v=v, dt=min(s.settings.dt, s.settings.dt_max), horizon=float(state0.t + horizon),
                      stride=float(stride), out_index=1, energy0=e, energy=e, rate=s.damping.rate(u, v),
                      theta_sq=s.theta_sq(v), t0=float(state0.t))
        self._record(rs)
        return rs

    def _record(self, rs: RunState):
        kin, ela, pot = self.sys.energy_parts(rs.u, rs.v)
        en = kin + ela + pot
        rs.records.append((rs.t, rs.u.copy(), rs.v.copy(), kin, ela, pot, en, rs.dissipation,
                           en + rs.dissipation - rs.energy0, rs.theta_integral))

    def _allowance(self, rs: RunState, dt: float, dissipated: float) -> float:
        # a fixed fraction of the energy dissipated in the step plus a share
        # of the still-unspent budget spread over the remaining horizon
        st = self.sys.settings
        scale = 1.0 + abs(rs.energy0)
        unspent = max(0.75 * st.residual_budget * scale - abs(rs.energy + rs.dissipation - rs.energy0), 0.0)
        remaining = max(rs.horizon - rs.t, dt)
        share = 0.5 * st.residual_budget * abs(dissipated) + 0.5 * unspent * dt / remaining
        # never ask for less than the round-off of an energy evaluation
        floor = ROUNDOFF_ULPS * np.finfo(float).eps * (scale + abs(rs.energy))
        return max(min(st.tol_step * scale, share), floor)

    def _attempt(self, rs: RunState, dt: float):
        s = self.sys
        u1, v1, _ = s.step_arrays(rs.u, rs.v, dt)
        e1 = s.energy(u1, v1)
        r1 = s.damping.rate(u1, v1)
        dres = e1 - rs.energy + 0.5 * dt * (rs.rate + r1)
        return u1, v1, e1, r1, dres

    def _step_allowance(self, rs, dt, attempt):
        return self._allowance(rs, dt, 0.5 * dt * (rs.rate + attempt[3]))

    def _commit(self, rs: RunState, dt, u1, v1, e1, r1, dres):
        s = self.sys
        th1 = s.theta_sq(v1)
        rs.dissipation += 0.5 * dt * (rs.rate + r1)
        rs.theta_integral += 0.5 * dt * (rs.theta_sq + th1)
        rs.max_increase = max(rs.max_increase, e1 - rs.energy)
        rs.max_step_residual = max(rs.max_step_residual, abs(dres))
        rs.u, rs.v, rs.energy, rs.rate, rs.theta_sq = u1, v1, e1, r1, th1
        rs.steps += 1
        rs.dt_history.append(dt)

    def _dump(self, rs):
        return {"t": rs.t, "dt": rs.dt, "u": rs.u.tolist(), "v": rs.v.tolist(), "energy": rs.energy,
                "steps": rs.steps, "rejections": rs.rejections}

    def advance(self, rs: RunState, until: float | None = None) -> RunState:
        """Step until ``until`` (a sample time) or the horizon."""
        st = self.sys.settings
        stop = rs.horizon if until is None else min(until, rs.horizon)
        while not rs.done and rs.t < stop * (1 - 1e-14) - 1e-300:
            t_out = rs.next_output
            dt = min(rs.dt, t_out - rs.t)
            lands = dt >= t_out - rs.t - 1e-12 * rs.stride
            if lands:
                dt = t_out - rs.t
            try:
                attempt = self._attempt(rs, dt)
            except StepRejected as exc:
                self._reject(rs, dt, str(exc))
                continue
            u1, v1, e1, r1, dres = attempt
            allow = self._step_allowance(rs, dt, attempt)
            if st.adaptive and abs(dres) > allow:
                self._reject(rs, dt, f"energy residual {dres:.3g} above tolerance")
                continue
            self._commit(rs, dt, u1, v1, e1, r1, dres)
            if lands:
                rs.t = t_out
                self._record(rs)
                rs.out_index += 1
            else:
                rs.t += dt
            if st.adaptive and dt == rs.dt and abs(dres) < 0.25 * allow:
                rs.dt = min(rs.dt * st.grow, st.dt_max)
        return rs

    def _reject(self, rs, dt, reason):
        st = self.sys.settings
        rs.rejections += 1
        if not st.adaptive:
            raise IntegrationError(f"step rejected in fixed-step mode at t={rs.t:.6g}: {reason}", self._dump(rs))
        rs.dt = min(rs.dt, dt) * 0.5
        if rs.dt < st.dt_min:
            raise IntegrationError(f"dt underflow below dt_min={st.dt_min:g} at t={rs.t:.6g}: {reason}",
                                   self._dump(rs))

    def trajectory(self, rs: RunState, meta: dict | None = None) -> Trajectory:
        return records_to_trajectory(rs, self.sys, meta)


def records_to_trajectory(rs: RunState, system: System, meta: dict | None = None) -> Trajectory:
    recs = rs.records
    times = np.array([r[0] for r in recs])
    u = np.array([r[1] for r in recs])
    v = np.array([r[2] for r in recs])
    cols = np.array([r[3:] for r in recs], dtype=float).reshape(len(recs), 7)
    ledger = EnergyLedger(*cols.T.copy())
    m = {
        "steps": rs.steps,
        "rejections": rs.rejections,
        "max_energy_increase": rs.max_increase,
        "max_step_residual": rs.max_step_residual,
        "dt_min_used": min(rs.dt_history) if rs.dt_history else None,
        "dt_max_used": max(rs.dt_history) if rs.dt_history else None,
        "dt_history": np.asarray(rs.dt_history, dtype=float),
        "settings": asdict(system.settings),
        "theta": system.theta,
    }
    m.update(meta or {})
    return Trajectory(times, u, v, ledger, system.A.domain, m)


def evolve(state0: StatePair, T: float, A: OperatorA, model: ModelSpec | None, damping: DampingSpec,
           settings: IntegratorSettings | None = None, output_stride: float | None = None,
           meta: dict | None = None) -> Trajectory:
    """Integrate to ``t0 + T`` and return samples every ``output_stride``."""
    ev = Evolver(System(A, model, damping, settings))
    rs = ev.start(state0, T, output_stride)
    ev.advance(rs)
    return ev.trajectory(rs, meta)


def energy_residual(traj: Trajectory) -> np.ndarray:
    """``r(t) = E(t) + int_0^t (D, u_t) - E(0)`` at each sample."""
    return np.asarray(traj.ledger["residual"])


# ---------------------------------------------------------------------------
# Paired evolution for difference diagnostics
# ---------------------------------------------------------------------------


@dataclass
class PairedTrajectories:
    first: Trajectory
    second: Trajectory
    times: np.ndarray
    difference_energy: np.ndarray
    difference_theta_integral: np.ndarray
    u_difference_sq: np.ndarray

    @property
    def h_distance_sq(self) -> np.ndarray:
        return 2.0 * self.difference_energy


def difference_evolve(state_a: StatePair, state_b: StatePair, T: float, A: OperatorA, model: ModelSpec | None,
                      damping: DampingSpec, settings: IntegratorSettings | None = None,
                      output_stride: float | None = None) -> PairedTrajectories:
    """Evolve two states on a shared dt sequence and record the difference energy.

    ``E_z = (|z'|^2 + |A^{1/2} z|^2) / 2`` for ``z = u1 - u2``; every step
    must pass the acceptance test for both members.
    """
    system = System(A, model, damping, settings)
    ev = Evolver(system)
    ra, rb = ev.start(state_a, T, output_stride), ev.start(state_b, T, output_stride)
    lam, th = system.lam, system.theta
    st = system.settings

    def dz(ua, va, ub, vb):
        z, zt = ua - ub, va - vb
        return 0.5 * float(np.sum(zt * zt) + np.sum(lam * z * z)), float(np.sum(lam**th * zt * zt))

    ez0, zth = dz(ra.u, ra.v, rb.u, rb.v)
    ez_series, zint_series = [ez0], [0.0]
    zint = 0.0
    while not ra.done:
        t_out = ra.next_output
        dt = min(ra.dt, t_out - ra.t)
        lands = dt >= t_out - ra.t - 1e-12 * ra.stride
        if lands:
            dt = t_out - ra.t
        try:
            pa = ev._attempt(ra, dt)
            pb = ev._attempt(rb, dt)
        except StepRejected as exc:
            ev._reject(ra, dt, str(exc))
            rb.dt = ra.dt
            continue
        worst = max(abs(pa[4]) / ev._step_allowance(ra, dt, pa), abs(pb[4]) / ev._step_allowance(rb, dt, pb))
        if st.adaptive and worst > 1.0:
            ev._reject(ra, dt, "energy residual above tolerance")
            rb.dt = ra.dt
            continue
        ev._commit(ra, dt, *pa)
        ev._commit(rb, dt, *pb)
        _, zth1 = dz(ra.u, ra.v, rb.u, rb.v)
        zint += 0.5 * dt * (zth + zth1)
        zth = zth1
        if lands:
            ra.t = rb.t = t_out
            ev._record(ra)
            ev._record(rb)
            ra.out_index += 1
            rb.out_index += 1
            ez_series.append(dz(ra.u, ra.v, rb.u, rb.v)[0])
            zint_series.append(zint)
        else:
            ra.t += dt
            rb.t = ra.t
        if st.adaptive and dt == ra.dt and worst < 0.25:
            ra.dt = rb.dt = min(ra.dt * st.grow, st.dt_max)
    ta, tb = ev.trajectory(ra), ev.trajectory(rb)
    udiff = np.sum((ta.u - tb.u) ** 2, axis=tuple(range(1, ta.u.ndim)))
    return PairedTrajectories(ta, tb, ta.times, np.array(ez_series), np.array(zint_series), udiff)
