"""Closed-loop simulation of the sampled-data system under any trigger policy.

Runs that share a model, policy, horizon, step and disturbance profile are
advanced together as one batch: every row follows the same global grid
``t_n = n * dt`` but has its own held input and its own sample schedule.
A step is cut short whenever a row reaches a sample instant or a switch of
eta or of the disturbance, so neither the held input nor the piecewise
constant signals smear across a switch.  Event rules are checked at the end of every
(sub-)step and the first upcrossing is refined by bisection.  Rows are
updated independently, which keeps each run bit-identical whether it is
simulated alone or inside a batch.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (ControlLaw, DisturbanceProfile, EtaSchedule, PlantModel, _rk4,
                       build_model)
from .errors import ContractViolation, DomainError
from .samplers import (BISECTION_RESOLUTION, NominalPrediction, Periodic, TriggerPolicy,
                       _bisect_crossing)

__all__ = ["Scenario", "Trace", "simulate", "simulate_batch", "replay_event_times"]

DEFAULT_BLOWUP_RADIUS = 1e6


@dataclass(frozen=True, eq=False)
class Scenario:
    policy: TriggerPolicy
    x0: np.ndarray
    model: str | PlantModel = "rigid_body"
    law: ControlLaw | None = None
    eta: EtaSchedule | float | Sequence[float] = 1.0
    nominal_eta: tuple = (1.0,)
    T: float = 15.0
    dt: float = 1e-4
    disturbance: DisturbanceProfile | None = None
    seed: int = 0
    eta_box: tuple | None = None
    blowup_radius: float = DEFAULT_BLOWUP_RADIUS
    scenario_id: str = ""
    plant: PlantModel = field(init=False, repr=False)
    controller: ControlLaw = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.model, str):
            plant, controller = build_model(self.model, self.eta_box)
        else:
            if self.law is None:
                raise ContractViolation("a custom plant needs an explicit control law")
            plant, controller = self.model, self.law
        if self.law is not None:
            controller = self.law
        object.__setattr__(self, "plant", plant)
        object.__setattr__(self, "controller", controller)
        if not isinstance(self.eta, EtaSchedule):
            object.__setattr__(self, "eta", EtaSchedule.constant(self.eta))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "nominal_eta",
                           tuple(np.atleast_1d(np.asarray(self.nominal_eta, dtype=float))))
        if self.disturbance is None:
            object.__setattr__(self, "disturbance",
                               DisturbanceProfile.zero(plant.dim_disturbance))

        if not self.T > 0 or not self.dt > 0:
            raise ContractViolation("T and dt must be positive")
        if x0.size != plant.dim_state:
            raise ContractViolation(f"x0 has size {x0.size}, model expects {plant.dim_state}")
        if np.linalg.norm(x0) > plant.state_domain_radius:
            raise DomainError("x0 lies outside the model's state domain")
        for value in self.eta.values:
            if value.size != plant.dim_eta or not plant.contains_eta(value):
                raise DomainError(f"true eta {value.tolist()} outside the model's box")
        if self.disturbance.dim != plant.dim_disturbance:
            raise ContractViolation("disturbance dimension does not match the model")


@dataclass(eq=False)
class Trace:
    """Simulated trajectory.

    ``inputs[i]`` is the input held on ``[times[i], times[i+1])``.
    ``intervals[k]`` is the interval emitted at ``sample_instants[k]`` by a
    self-triggered or periodic policy (event policies leave it empty).
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    is_sample: np.ndarray
    sample_instants: np.ndarray
    intervals: np.ndarray
    eta_schedule: EtaSchedule
    diverged: bool = False
    divergence_time: float | None = None
    policy_kind: str = ""
    prediction_caps: int = 0
    scenario_id: str = ""
    horizon: float = 0.0

    @property
    def sample_states(self):
        return self.states[self.is_sample]

    def segments(self):
        """Index ranges ``(start, stop)`` of the rows belonging to each inter-sample interval."""
        starts = np.nonzero(self.is_sample)[0]
        stops = np.append(starts[1:], len(self.times))
        # the closing row of a segment is the next sample row (or the last row)
        return [(int(a), int(min(b + 1, len(self.times)))) for a, b in zip(starts, stops)]

    def to_csv(self, path):
        n, m, p = self.states.shape[1], self.inputs.shape[1], self.disturbances.shape[1]
        header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                  + [f"w{i + 1}" for i in range(p)] + ["is_sample"])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in zip(self.times, self.states, self.inputs, self.disturbances,
                           self.is_sample):
                t, x, u, w, s = row
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x]
                                + [repr(float(v)) for v in u] + [repr(float(v)) for v in w]
                                + [int(s)])


def _same_disturbance(a: DisturbanceProfile, b: DisturbanceProfile):
    if a is b:
        return True
    return a.dim == b.dim and len(a.segments) == len(b.segments) and all(
        s[0] == q[0] and s[1] == q[1] and np.array_equal(s[2], q[2])
        for s, q in zip(a.segments, b.segments))


def _compatible(a: Scenario, b: Scenario):
    same_model = a.plant.dynamics is b.plant.dynamics or (
        a.plant.name == b.plant.name != "custom")
    same_law = a.controller.law is b.controller.law or (
        a.controller.name == b.controller.name != "custom")
    return (same_model and same_law and a.T == b.T and a.dt == b.dt
            and (a.policy is b.policy or a.policy == b.policy)
            and _same_disturbance(a.disturbance, b.disturbance))


class _Batch:
    def __init__(self, scenarios: Sequence[Scenario]):
        first = scenarios[0]
        for sc in scenarios[1:]:
            if not _compatible(first, sc):
                raise ContractViolation(
                    "batched scenarios must share model, law, policy, T, dt and disturbance")
        self.scenarios = scenarios
        self.model, self.law = first.plant, first.controller
        self.policy, self.profile = first.policy, first.disturbance
        self.dt, self.T = first.dt, first.T
        self.B = len(scenarios)
        schedules = [sc.eta for sc in scenarios]
        self.schedules = schedules
        self.eta_const = (np.stack([s.values[0] for s in schedules])
                          if all(s.is_constant for s in schedules) else None)
        self.blowup = np.array([sc.blowup_radius for sc in scenarios])

    def eta_fn(self, rows):
        if self.eta_const is not None:
            e = self.eta_const[rows]
            return lambda _t: e
        scheds = [self.schedules[i] for i in rows]

        def at(t):
            t = np.broadcast_to(np.asarray(t, dtype=float), (len(scheds),))
            return np.stack([s.at(ti) for s, ti in zip(scheds, t)])

        return at

    def run(self):
        B, n, m = self.B, self.model.dim_state, self.model.dim_input
        dt, T = self.dt, self.T
        n_steps = int(round(T / dt))
        if abs(n_steps * dt - T) > 1e-9 * dt:
            n_steps = int(math.ceil(T / dt))
        grid = np.minimum(np.arange(n_steps + 1) * dt, T)
        snap = 1e-9 * dt
        profile = self.profile
        policy = self.policy
        is_event = policy.is_event
        periodic = isinstance(policy, Periodic)
        f = self.model.dynamics

        x = np.stack([sc.x0 for sc in self.scenarios]).astype(float)
        t = np.zeros(B)
        u = np.zeros((B, m))
        xk = x.copy()
        t_next = np.full(B, np.inf)
        t_sched = np.zeros(B)
        k_count = np.zeros(B, dtype=np.int64)
        active = np.ones(B, dtype=bool)
        div_time = np.full(B, np.nan)
        caps = np.zeros(B, dtype=np.int64)
        # eta and the disturbance are piecewise constant; their switches are forced
        # integration breakpoints so that no RK4 stage reads across a switch
        bp_lists = [sorted({b for b in list(self.profile.breakpoints) + list(sc.eta.times)
                            if snap < b < T - snap}) + [math.inf]
                    for sc in self.scenarios]
        bp_pos = np.zeros(B, dtype=np.int64)
        bp_next = np.array([bl[0] for bl in bp_lists])

        rec_x = np.empty((n_steps + 1, B, n))
        rec_u = np.empty((n_steps + 1, B, m))
        rec_s = np.zeros((n_steps + 1, B), dtype=bool)
        last_row = np.full(B, -1)
        # sample log: one chunk of (rows, instants, intervals) per sampling call
        log_rows, log_t, log_h = [], [], []
        extra = [[] for _ in range(B)]

        def sample(rows):
            xs = x[rows]
            xk[rows] = xs
            u[rows] = self.law(xs)
            stamps = t_sched[rows]
            log_rows.append(rows)
            log_t.append(stamps)
            if is_event:
                return
            if periodic:
                k_count[rows] += 1
                h = np.full(len(rows), policy.h)
                nxt = k_count[rows] * policy.h
            else:
                if isinstance(policy, NominalPrediction):
                    h, capped = policy.predict(self.model, self.law, xs, dt)
                    caps[rows] += capped
                else:
                    h = np.atleast_1d(policy.interval(np.linalg.norm(xs, axis=1)))
                nxt = stamps + h
            log_h.append(np.asarray(h, dtype=float))
            t_next[rows] = nxt

        sample(np.arange(B))
        rec_s[0] = True

        for step in range(n_steps):
            t_end = grid[step + 1]
            live = np.nonzero(active)[0]
            if live.size == 0:
                break
            rec_x[step, live] = x[live]
            rec_u[step, live] = u[live]
            last_row[live] = step
            while True:
                rows = np.nonzero(active & (t < t_end))[0]
                if rows.size == 0:
                    break
                tn = t_next[rows]
                bn = bp_next[rows]
                on_grid = np.abs(tn - t_end) <= snap
                stop = np.where(np.abs(bn - t_end) <= snap, t_end, np.minimum(t_end, bn))
                target = np.where(on_grid, t_end, np.minimum(stop, tn))
                t0 = t[rows]
                h = target - t0
                x_old, u_rows = x[rows], u[rows]
                eta0, w0 = self.eta_fn(rows)(t0), profile.at(t0)
                eta_at = lambda _t, e=eta0: e  # noqa: E731
                w_at = lambda _t, v=w0: v  # noqa: E731
                x_new = _rk4(f, x_old, u_rows, t0, h, eta_at, w_at)
                new_t = target.copy()
                fired = np.zeros(rows.size, dtype=bool)
                if is_event:
                    xk_rows = xk[rows]
                    g_old = policy.value(x_old, xk_rows)
                    g_new = policy.value(x_new, xk_rows)
                    fired = (g_new >= 0) & (g_old < 0)
                    if np.any(fired):
                        sel = np.nonzero(fired)[0]
                        xk_sub = xk[rows[sel]]
                        e_s, w_s = eta0[sel], w0[sel]
                        t_hit, x_hit = _bisect_crossing(
                            f, x_old[sel], u_rows[sel], t0[sel], t0[sel], target[sel],
                            lambda _t: e_s, lambda _t: w_s,
                            lambda xs: policy.value(xs, xk_sub))
                        new_t[sel] = t_hit
                        x_new[sel] = x_hit

                norms = np.linalg.norm(x_new, axis=1)
                bad = ~np.isfinite(norms) | (norms > self.blowup[rows])
                if np.any(bad):
                    for j in np.nonzero(bad)[0]:
                        i = rows[j]
                        active[i] = False
                        div_time[i] = new_t[j]
                        if np.isfinite(norms[j]) and new_t[j] > t[i]:
                            extra[i].append((new_t[j], x_new[j].copy(), u[i].copy(), False))
                    good = ~bad
                    rows, x_new, new_t, fired, on_grid = (rows[good], x_new[good], new_t[good],
                                                          fired[good], on_grid[good])
                    tn = t_next[rows]
                x[rows] = x_new
                t[rows] = new_t
                crossed = rows[t[rows] >= bp_next[rows] - snap]
                for i in crossed:
                    while bp_lists[i][bp_pos[i]] <= t[i] + snap:
                        bp_pos[i] += 1
                    bp_next[i] = bp_lists[i][bp_pos[i]]
                hit = fired | (new_t == tn) | (on_grid & (new_t == t_end))
                if np.any(hit):
                    hit_rows = rows[hit]
                    t_sched[hit_rows] = np.where(is_event, new_t[hit], tn[hit])
                    sample(hit_rows)
                    on_end = t[hit_rows] == t_end
                    rec_s[step + 1, hit_rows[on_end]] = True
                    for i in hit_rows[~on_end]:
                        extra[i].append((t[i], x[i].copy(), u[i].copy(), True))

        live = np.nonzero(active)[0]
        rec_x[n_steps, live] = x[live]
        rec_u[n_steps, live] = u[live]
        last_row[live] = n_steps

        all_rows = np.concatenate(log_rows)
        all_t = np.concatenate(log_t)
        all_h = np.concatenate(log_h) if log_h else np.empty(0)
        traces = []
        for i, sc in enumerate(self.scenarios):
            mine = all_rows == i
            stop = last_row[i] + 1
            times = grid[:stop]
            states = rec_x[:stop, i]
            inputs = rec_u[:stop, i]
            flags = rec_s[:stop, i]
            if extra[i]:
                et, ex, eu, es = zip(*extra[i])
                times = np.concatenate([times, et])
                states = np.vstack([states, np.array(ex)])
                inputs = np.vstack([inputs, np.array(eu)])
                flags = np.concatenate([flags, np.array(es, dtype=bool)])
                order = np.argsort(times, kind="stable")
                times, states, inputs, flags = times[order], states[order], inputs[order], flags[order]
            diverged = not active[i]
            traces.append(Trace(
                times=times, states=np.array(states), inputs=np.array(inputs),
                disturbances=self.profile.at(times), is_sample=np.array(flags),
                sample_instants=all_t[mine], intervals=all_h[mine] if log_h else np.empty(0),
                eta_schedule=sc.eta, diverged=diverged,
                divergence_time=float(div_time[i]) if diverged else None,
                policy_kind=policy.kind, prediction_caps=int(caps[i]),
                scenario_id=sc.scenario_id, horizon=T))
        return traces


def simulate_batch(scenarios: Sequence[Scenario]) -> list[Trace]:
    """Simulate compatible scenarios together; returns one trace per scenario, in order."""
    if not scenarios:
        return []
    return _Batch(list(scenarios)).run()


def simulate(scenario: Scenario) -> Trace:
    return simulate_batch([scenario])[0]


def replay_event_times(trace: Trace, rule) -> list[float]:
    """First upcrossing of an event rule inside each inter-sample segment of a trace.

    The rule is evaluated on the stored rows; a crossing between two rows is
    refined by bisection on the linear interpolant.  Segments where the rule
    never fires contribute nothing.
    """
    out = []
    for start, stop in trace.segments():
        x_k = trace.states[start]
        xs = trace.states[start + 1:stop]
        if len(xs) == 0:
            continue
        g = np.atleast_1d(rule.value(xs, x_k))
        g_prev = np.concatenate([np.atleast_1d(rule.value(trace.states[start], x_k)), g[:-1]])
        idx = np.nonzero((g >= 0) & (g_prev < 0))[0]
        if idx.size == 0:
            continue
        j = start + 1 + int(idx[0])
        ta, tb = trace.times[j - 1], trace.times[j]
        xa, xb = trace.states[j - 1], trace.states[j]
        while tb - ta > BISECTION_RESOLUTION:
            tm = 0.5 * (ta + tb)
            xm = xa + (xb - xa) * (tm - trace.times[j - 1]) / (trace.times[j] - trace.times[j - 1])
            if rule.value(xm, x_k) >= 0:
                tb = tm
            else:
                ta = tm
        out.append(float(tb))
    return out
