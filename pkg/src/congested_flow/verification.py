"""Full invariant battery over a simulated run.

Collects every proved microscopic and Eulerian property into one structured
report: Signorini complementarity, multiplier signs and boundary values,
the one-sided slope bound, the restart (semigroup) identity, momentum and
energy behaviour, monotonicity of the contact set, weak-form residuals,
Eulerian reconstruction sanity and the Wasserstein time modulus.  The same
battery backs the command-line verifier and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from .cone import SpacingCone, project_onto_cone, qp_oracle_project
from .dynamics import (
    active_set_monotone,
    multipliers_at,
    pressure_measure,
    verify_complementarity,
    verify_estimates,
    verify_oleinik,
    verify_semigroup,
)
from .eulerian import (
    complementarity_eulerian,
    oleinik_eulerian,
    pressure_pushforward,
    snapshot,
    wasserstein_time_modulus,
    weak_residual_suite,
)
from .fields import FieldTrace, oleinik_field_check, verify_discrete_pde

__all__ = ["run_battery", "cone_oracle_sweep"]

TOL_COMPLEMENTARITY = 1e-10
TOL_MIN_LAMBDA = 1e-12
TOL_SEMIGROUP = 1e-9
TOL_MOMENTUM_PER_N = 1e-12
TOL_WEAK_RESIDUAL = 1e-8


def _sample_times(horizon: float, count: int, events: np.ndarray) -> np.ndarray:
    """Sample instants avoiding the event times themselves."""
    ts = np.linspace(0.0, horizon, count + 2)[1:-1]
    if events.size:
        near = np.min(np.abs(ts[:, None] - events[None, :]), axis=1)
        ts = ts + np.where(near < 1e-9, 3e-9, 0.0)
    return np.unique(np.clip(ts, 0.0, horizon))


def run_battery(trace: FieldTrace, rng: np.random.Generator | None = None,
                sample_count: int = 12, weak_residuals: bool = True,
                inject: str | None = None) -> dict:
    """Run every check on a simulated trace; returns {check: report-dict}.

    ``inject`` corrupts the input of exactly one check (negative control):
    "negative-lambda", "energy-bump" or "stale-density".
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    timeline = trace.timeline
    cone = timeline.cone
    horizon = timeline.horizon
    events = timeline.event_times()
    ts = _sample_times(horizon, sample_count, events)
    checks: dict[str, dict] = {}

    compl_worst = None
    oleinik_worst = None
    momentum_err = 0.0
    sum_u0 = float(np.sum(timeline.u0))
    for st in timeline.iter_states(ts):
        mult = multipliers_at(st, timeline.u0)
        if inject == "negative-lambda" and st.time == ts[-1]:
            lam = mult.lambdas.copy()
            lam[len(lam) // 2] = -1e-3
            mult = type(mult)(lam)
        rep = verify_complementarity(st, mult, TOL_COMPLEMENTARITY)
        if compl_worst is None or rep.value > compl_worst.value:
            compl_worst = rep
        if st.time > 0.0:
            rep_o = verify_oleinik(st)
            if oleinik_worst is None or rep_o.value > oleinik_worst.value:
                oleinik_worst = rep_o
        momentum_err = max(momentum_err, abs(float(np.sum(st.velocities)) - sum_u0))
    checks["complementarity"] = {
        "passed": compl_worst.passed, "value": compl_worst.value,
        "tolerance": TOL_COMPLEMENTARITY, "detail": compl_worst.detail,
    }
    checks["oleinik"] = {
        "passed": oleinik_worst is None or oleinik_worst.passed,
        "value": 0.0 if oleinik_worst is None else oleinik_worst.value,
        "tolerance": 1.0,
        "detail": "strict one-sided slope bound at sampled times",
    }
    checks["momentum_conservation"] = {
        "passed": momentum_err <= TOL_MOMENTUM_PER_N * timeline.n,
        "value": momentum_err, "tolerance": TOL_MOMENTUM_PER_N * timeline.n,
        "detail": "max |sum u(t) - sum u0| over sampled times",
    }

    est = verify_estimates(timeline)
    if inject == "energy-bump":
        est = dict(est)
        est["passed"] = est["final_energy"] + 1.0 <= est["initial_energy"]
    checks["energy_dissipation"] = {
        "passed": est["passed"],
        "value": est["final_energy"] - est["initial_energy"],
        "tolerance": 0.0,
        "detail": f"energy {est['initial_energy']:.6g} -> {est['final_energy']:.6g}",
    }

    worst_sg = None
    if horizon > 0.0:
        for _ in range(20):
            s, t = np.sort(rng.uniform(0.0, horizon, 2))
            if t - s < 1e-9:
                continue
            rep = verify_semigroup(timeline, float(s), float(t), TOL_SEMIGROUP)
            if worst_sg is None or rep.value > worst_sg.value:
                worst_sg = rep
    checks["semigroup"] = {
        "passed": worst_sg is None or worst_sg.passed,
        "value": 0.0 if worst_sg is None else worst_sg.value,
        "tolerance": TOL_SEMIGROUP,
        "detail": "restart identity on 20 random (s, t) pairs",
    }

    checks["active_set_monotone"] = {
        "passed": active_set_monotone(timeline), "value": float(len(timeline.events)),
        "tolerance": 0.0, "detail": "contact set nondecreasing along events",
    }

    pde = verify_discrete_pde(trace)
    checks["discrete_pde"] = {
        "passed": pde["passed"],
        "value": max(pde["order1_max_residual"], pde["order2_max_residual"],
                     pde["multiplier_exclusion_max"], pde["atom_exclusion_max"]),
        "tolerance": pde["tolerance"],
        "detail": "interpolated order-1/order-2 systems and exclusion relations",
    }

    field_ole_ok = True
    field_ole_val = 0.0
    for t in ts:
        if t <= 0.0:
            continue
        rep = oleinik_field_check(trace, float(t))
        field_ole_ok &= rep["passed"]
        field_ole_val = max(field_ole_val, rep["max_ratio"])
    checks["oleinik_field"] = {
        "passed": bool(field_ole_ok), "value": field_ole_val, "tolerance": 1.0,
        "detail": "field-level slope bound and L1 gradient bound",
    }

    # Eulerian reconstruction
    measure = pressure_measure(timeline)
    press = pressure_pushforward(measure, trace)
    atoms_by_time = {a.time: a for a in press.atoms}
    mass_err = 0.0
    density_excess = 0.0
    contact_density_err = 0.0
    density_tol = 1e-12
    compl_e_ok = True
    ole_e_ok = True
    check_times = list(ts) + [t for t, _ in measure.atoms]
    states = timeline.states_at(sorted(check_times))
    for st in states:
        snap = snapshot(st, cone, trace.padding)
        if inject == "stale-density" and st.time == ts[0]:
            snap = type(snap)(snap.time, snap.edges, snap.density * 1.5,
                              snap.velocity, snap.two_r)
        mass_err = max(mass_err, abs(snap.total_mass() - 1.0))
        density_excess = max(density_excess, float(np.max(snap.density)) - 1.0)
        gaps = np.diff(snap.edges)[1:]
        ctol = 1e-12 * (1.0 + float(np.abs(snap.edges).max()))
        # a gap certified equal to two_r within ctol pins the density to 1
        # within ctol / two_r; exact (zero) at dyadic particle counts
        density_tol = max(density_tol, ctol / cone.two_r * 1.001)
        on_contact = np.abs(gaps - cone.two_r) <= ctol
        if np.any(on_contact):
            contact_density_err = max(contact_density_err, float(
                np.max(np.abs(snap.density[1:][on_contact] - 1.0))))
        atom = atoms_by_time.get(st.time)
        if atom is not None:
            rep = complementarity_eulerian(snap, atom)
            compl_e_ok &= rep.passed
        if st.time > 0.0:
            ole_e_ok &= oleinik_eulerian(snap).passed
    checks["eulerian_reconstruction"] = {
        "passed": bool(mass_err <= 1e-12 and density_excess <= density_tol
                       and contact_density_err <= density_tol),
        "value": max(mass_err, density_excess, contact_density_err),
        "tolerance": density_tol,
        "detail": "mass 1, density <= 1, contact cells at density 1",
    }
    checks["eulerian_complementarity"] = {
        "passed": bool(compl_e_ok), "value": 0.0 if compl_e_ok else 1.0,
        "tolerance": 1e-10, "detail": "pressure atoms supported in saturated cells",
    }
    checks["eulerian_oleinik"] = {
        "passed": bool(ole_e_ok), "value": 0.0 if ole_e_ok else 1.0,
        "tolerance": 1.0, "detail": "Eulerian slope bound at sampled times",
    }

    w2_ok = True
    w2_val = 0.0
    if horizon > 0.0:
        for _ in range(10):
            s, t = np.sort(rng.uniform(0.0, horizon, 2))
            rep = wasserstein_time_modulus(trace, float(s), float(t))
            w2_ok &= rep["passed"]
            w2_val = max(w2_val, rep["modulus"])
    checks["wasserstein_modulus"] = {
        "passed": bool(w2_ok), "value": w2_val, "tolerance": 0.0,
        "detail": "W2 time modulus below the velocity-integral bound",
    }

    if weak_residuals:
        suite = weak_residual_suite(trace, tol=TOL_WEAK_RESIDUAL)
        checks["weak_residuals"] = {
            "passed": suite["passed"], "value": suite["max_abs_residual"],
            "tolerance": suite["tolerance"],
            "detail": f"mass/momentum residuals over {suite['count']} test functions",
        }

    checks["all_passed"] = {
        "passed": all(v["passed"] for k, v in checks.items()),
        "value": 0.0, "tolerance": 0.0, "detail": "conjunction of all checks",
    }
    return checks


def cone_oracle_sweep(n_values, instances: int, rng: np.random.Generator,
                      tol: float = 1e-9) -> dict:
    """Randomized equivalence of the PAVA projection and the KKT oracle."""
    from .cone import qp_oracle_project_many

    worst = 0.0
    worst_cert = 0.0
    total = 0
    for n in n_values:
        cone = SpacingCone.canonical(int(n))
        ys = rng.normal(0.0, 1.0, (instances, int(n))) * (2.0 / n) \
            + np.arange(int(n)) * (0.5 / n)
        ref = qp_oracle_project_many(cone, ys)
        for row in range(instances):
            x = project_onto_cone(cone, ys[row])
            worst = max(worst, float(np.max(np.abs(x - ref[row]))))
        _, cert = qp_oracle_project(cone, ys[0])
        worst_cert = max(worst_cert, cert.max_complementarity_violation,
                         -min(0.0, cert.min_lambda))
        total += instances
    return {
        "passed": bool(worst <= tol and worst_cert <= 1e-10),
        "max_abs_deviation": worst,
        "max_certificate_violation": worst_cert,
        "instances": total,
        "tolerance": tol,
    }
