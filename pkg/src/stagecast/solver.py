"""Explicit MacCormack reference solver for 1-D unsteady channel flow.

The solver advances depth ``h`` and section-averaged velocity ``u`` on a
uniform grid using the non-conservative form of the shallow-water
equations,

    dh/dt + u dh/dx + h du/dx = 0
    du/dt + u du/dx + g dh/dx = g (S0 - Sf)

with Manning friction.  Each step averages the two one-sided MacCormack
sweeps (forward-then-backward and backward-then-forward), which removes
the directional bias of the classic scheme; on symmetric data the update
is symmetric to the last bit.  The time step adapts to the CFL limit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import (
    G_FT_S2,
    HOUR_S,
    MILE_FT,
    RiverScenario,
    friction_slope,
    interpolate_boundary,
)

__all__ = ["SolverConfig", "FlowField", "SolverError", "solve", "check_mass_balance"]


class SolverError(RuntimeError):
    """Raised when a run goes physically or numerically bad; the message
    names the step, the grid cell, and the simulated time."""


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs for :func:`solve`.

    ``n_cells`` counts grid points along the reach, endpoints included.
    ``cfl`` is the Courant number applied to ``max(|u| + sqrt(g h))``.
    The friction and bed-slope switches exist for idealized test flows;
    production runs keep both on.
    """

    n_cells: int = 400
    cfl: float = 0.9
    include_friction: bool = True
    include_bed_slope: bool = True
    max_steps: int = 2_000_000
    dt_floor_s: float = 1e-9

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError("n_cells must be at least 4")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must be in (0, 1)")


@dataclass
class FlowField:
    """Solver output sampled on the reporting grid.

    ``h`` and ``u`` have shape (n_times, n_stations); ``h`` is depth above
    the bed in feet, ``u`` velocity in ft/s.
    """

    x_miles: np.ndarray
    t_hours: np.ndarray
    h: np.ndarray
    u: np.ndarray
    wall_clock_seconds: float

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return (
            np.array_equal(self.x_miles, other.x_miles)
            and np.array_equal(self.t_hours, other.t_hours)
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.u, other.u)
            and self.wall_clock_seconds == other.wall_clock_seconds
        )


def _diff(f: np.ndarray, dx: float, forward: bool) -> np.ndarray:
    """One-sided spatial difference; the off-end row falls back one-sided
    and is always overwritten by a boundary condition afterwards."""
    out = np.empty_like(f)
    if forward:
        out[:-1] = (f[1:] - f[:-1]) / dx
        out[-1] = (f[-1] - f[-2]) / dx
    else:
        out[1:] = (f[1:] - f[:-1]) / dx
        out[0] = (f[1] - f[0]) / dx
    return out


def _check_state(h, u, step, t_s):
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(u))):
        bad = int(np.argmax(~(np.isfinite(h) & np.isfinite(u))))
        raise SolverError(f"non-finite state at step {step}, cell {bad}, t={t_s:.3f} s")
    if np.any(h <= 0.0):
        bad = int(np.argmax(h <= 0.0))
        raise SolverError(f"non-positive depth at step {step}, cell {bad}, t={t_s:.3f} s")


def _sweep(h, u, dt, dx, g, source_fn, bc_fn, t_new, predictor_forward: bool):
    """One MacCormack predictor/corrector pass in a fixed sweep direction."""
    dh = _diff(h, dx, predictor_forward)
    du = _diff(u, dx, predictor_forward)
    hp = h - dt * (u * dh + h * du)
    up = u - dt * (u * du + g * dh) - dt * source_fn(h, u)
    bc_fn(hp, up, t_new)

    dhp = _diff(hp, dx, not predictor_forward)
    dup = _diff(up, dx, not predictor_forward)
    hn = 0.5 * (h + hp - dt * (up * dhp + hp * dup))
    un = 0.5 * (u + up - dt * (up * dup + g * dhp) - dt * source_fn(hp, up))
    bc_fn(hn, un, t_new)
    return hn, un


def _run(
    h,
    u,
    dx_ft,
    t_end_s,
    bc_fn,
    on_interval,
    *,
    source_fn,
    cfl,
    g=G_FT_S2,
    dt_floor_s=1e-9,
    max_steps=2_000_000,
):
    """Advance (h, u) to ``t_end_s``, reporting each accepted step.

    ``bc_fn(h, u, t)`` fixes the boundary rows in place; ``on_interval``
    receives (t_prev, t_new, h_prev, u_prev, h_new, u_new) after every step
    so the caller can interpolate output times that the step crossed.
    """
    t = 0.0
    step = 0
    while t < t_end_s:
        _check_state(h, u, step, t)
        celerity = np.abs(u) + np.sqrt(g * h)
        dt = cfl * dx_ft / float(np.max(celerity))
        if not np.isfinite(dt) or dt < dt_floor_s:
            raise SolverError(f"CFL collapse: dt={dt!r} s at step {step}, t={t:.3f} s")
        if step >= max_steps:
            raise SolverError(f"exceeded {max_steps} steps at t={t:.3f} s of {t_end_s:.3f} s")
        t_new = t + dt

        ha, ua = _sweep(h, u, dt, dx_ft, g, source_fn, bc_fn, t_new, predictor_forward=True)
        hb, ub = _sweep(h, u, dt, dx_ft, g, source_fn, bc_fn, t_new, predictor_forward=False)
        h_new = 0.5 * (ha + hb)
        u_new = 0.5 * (ua + ub)
        bc_fn(h_new, u_new, t_new)

        on_interval(t, t_new, h, u, h_new, u_new)
        h, u = h_new, u_new
        t = t_new
        step += 1
    _check_state(h, u, step, t)
    return h, u


def solve(scenario: RiverScenario, config: SolverConfig = SolverConfig()) -> FlowField:
    """Run the scenario and sample the solution at its stations and output times.

    The upstream boundary imposes the discharge series via ``u = Q/(w h)``
    with depth linearly extrapolated from the interior; the downstream
    boundary imposes the stage series with velocity extrapolated.  Station
    and output-time sampling is linear interpolation of the grid solution.
    """
    started = time.perf_counter()
    geom = scenario.geometry
    bounds = scenario.boundaries
    g = G_FT_S2
    length_ft = geom.length_miles * MILE_FT
    x_ft = np.linspace(0.0, length_ft, config.n_cells)
    dx = length_ft / (config.n_cells - 1)
    stations_ft = np.asarray(scenario.station_positions_miles) * MILE_FT

    n_t = int(round(scenario.t_total_hours / scenario.output_dt_hours)) + 1
    t_out_h = scenario.output_dt_hours * np.arange(n_t)
    t_out_h[-1] = min(float(t_out_h[-1]), scenario.t_total_hours)
    t_out_s = t_out_h * HOUR_S

    s0 = geom.bed_slope if config.include_bed_slope else 0.0
    if config.include_friction:
        def source_fn(h, u):
            return g * (friction_slope(geom.width_ft, geom.manning_n, h, u) - s0)
    else:
        def source_fn(h, u):
            return g * (np.zeros_like(h) - s0)

    def bc_fn(h, u, t_s):
        t_h = t_s / HOUR_S
        h[0] = 2.0 * h[1] - h[2]
        if h[0] <= 0.0:
            raise SolverError(f"upstream depth extrapolated non-positive at t={t_s:.3f} s")
        q = interpolate_boundary(bounds.upstream_discharge_cfs, min(t_h, scenario.t_total_hours))
        u[0] = q / (geom.width_ft * h[0])
        h[-1] = interpolate_boundary(bounds.downstream_stage_ft, min(t_h, scenario.t_total_hours))
        u[-1] = 2.0 * u[-2] - u[-3]

    h = np.full(config.n_cells, bounds.initial_depth_ft, dtype=np.float64)
    u = np.full(config.n_cells, bounds.initial_velocity_fps, dtype=np.float64)
    bc_fn(h, u, 0.0)

    h_out = np.empty((n_t, stations_ft.size))
    u_out = np.empty((n_t, stations_ft.size))
    h_out[0] = np.interp(stations_ft, x_ft, h)
    u_out[0] = np.interp(stations_ft, x_ft, u)
    cursor = 1

    def on_interval(t0, t1, h0, u0, h1, u1):
        nonlocal cursor
        while cursor < n_t and t_out_s[cursor] <= t1 + 1e-9:
            theta = (t_out_s[cursor] - t0) / (t1 - t0)
            h_mid = h0 + theta * (h1 - h0)
            u_mid = u0 + theta * (u1 - u0)
            h_out[cursor] = np.interp(stations_ft, x_ft, h_mid)
            u_out[cursor] = np.interp(stations_ft, x_ft, u_mid)
            cursor += 1

    _run(
        h,
        u,
        dx,
        float(t_out_s[-1]),
        bc_fn,
        on_interval,
        source_fn=source_fn,
        cfl=config.cfl,
        g=g,
        dt_floor_s=config.dt_floor_s,
        max_steps=config.max_steps,
    )
    if cursor != n_t:
        raise SolverError(f"run ended with {n_t - cursor} output times unsampled")

    return FlowField(
        x_miles=np.asarray(scenario.station_positions_miles, dtype=np.float64),
        t_hours=t_out_h,
        h=h_out,
        u=u_out,
        wall_clock_seconds=time.perf_counter() - started,
    )


def check_mass_balance(field: FlowField, scenario: RiverScenario) -> float:
    """Relative volume-conservation error of a solved field.

    Compares the storage change ``integral of w*h dx`` between the first
    and last output times against the net boundary influx (trapezoidal
    quadrature of the sampled boundary fluxes), normalized by the total
    inflow volume.  A zero-flux run (still water) falls back to the
    initial storage as the normalizer so the error is still well defined.
    """
    w = scenario.geometry.width_ft
    x_ft = field.x_miles * MILE_FT
    t_s = field.t_hours * HOUR_S
    storage = w * np.trapezoid(field.h, x_ft, axis=1)
    q_in = w * field.u[:, 0] * field.h[:, 0]
    q_out = w * field.u[:, -1] * field.h[:, -1]
    net_influx = np.trapezoid(q_in - q_out, t_s)
    inflow_volume = float(np.trapezoid(q_in, t_s))
    denominator = inflow_volume if inflow_volume > 0.0 else float(storage[0])
    if denominator <= 0.0:
        raise ValueError("need positive inflow volume or initial storage to normalize the balance error")
    return float(abs((storage[-1] - storage[0]) - net_influx) / denominator)
