"""
Acceptance suite. Each criterion prints one PASS/FAIL line; the lines are
also collected into the pytest terminal summary. Run standalone with
``python tests/test_acceptance.py``.
"""

import functools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES, state_suite  # noqa: E402

from phasemeter import joint, kernel1d  # noqa: E402
from phasemeter import phasespace as ps  # noqa: E402
from phasemeter.fock import make_number_state, random_finite_state  # noqa: E402

PROFILES = ("default", "fine")
DETUNE = (1.25, 1.5, 2.0)
FLOOR = 1e-10  # below this a residual is float roundoff on either grid


def emit(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def process(profile, ratio=1.0):
    if ratio == 1.0:
        return joint.build_process(joint.optimal_config(1.0, profile=profile))
    return joint.build_process(joint.detuned_config(1.0, ratio, profile=profile))


# ---------------------------------------------------------------- cached computations


@functools.lru_cache(maxsize=None)
def universality(profile):
    proc = process(profile)
    rows = {}
    for name, s in state_suite().items():
        t0 = time.perf_counter()
        rho = joint.pointer_distribution(joint.evolve(proc, s))
        q = ps.husimi_q(s, proc.mu_x, proc.mu_p)
        rep = ps.measure_equality_oracle(rho, q, 6, None, 1e-4, 1e-5, 1e-3)
        rows[name] = (ps.l1_distance(rho, q), rep, time.perf_counter() - t0)
    return rows


@functools.lru_cache(maxsize=None)
def per_state_errors(profile, ratio=1.0, names=None):
    """Second moments, commutators and c/d residuals from one pass of error vectors per regime."""
    proc = process(profile, ratio)
    suite = state_suite()
    names = names or tuple(suite)
    dv = proc.volume_element
    out = {}
    for name in names:
        s = suite[name]
        row = {}
        for regime, sign in (("retrodictive", -1), ("predictive", +1)):
            _, ex, ep = joint.error_vectors(proc, s, regime)
            sx = np.vdot(ex, ex).real * dv
            sp = np.vdot(ep, ep).real * dv
            cross = np.vdot(ex, ep) * dv
            lam_best = (sx / sp) ** 0.25
            res = {}
            for label, lam in (("target", 1.0), ("best", lam_best)):
                r = (ex / lam + sign * 1j * lam * ep) / np.sqrt(2)
                res[label] = float(np.sqrt(np.vdot(r, r).real * dv))
            row[regime] = {"sx": sx, "sp": sp, "comm": 2j * cross.imag, "res": res}
            del ex, ep
        out[name] = row
    return out


@functools.lru_cache(maxsize=None)
def worst_case(profile, ratio, regime, dim):
    return joint.worst_case_errors(process(profile, ratio), regime, dim)


@functools.lru_cache(maxsize=None)
def partial_ops(profile, dim):
    return joint.partial_expectations(process(profile), "retrodictive", dim)


@functools.lru_cache(maxsize=None)
def posterior_regions(profile):
    proc = process(profile)
    s = state_suite()["disp2_xp"]
    J = joint.evolve(proc, s)
    rho_ptr = joint.pointer_distribution(J)
    regions = [
        ps.Region(-1, 1, -1, 1),
        ps.Region(0, 2, -2, 0),
        ps.Region(-3, 0.5, -0.5, 3),
        ps.Region(-2, 2, -0.5, 0.5),
        ps.Region(-1.7, -0.3, -1, 1.4),
    ]
    dists = []
    for r in regions:
        rho, _ = joint.condition_on_region(J, r, dim=40)
        mix = ps.p_mixture_density(rho_ptr.restricted(r, renormalize=True), 1.0, 40)
        dists.append(ps.trace_distance(rho, mix))
    return dists


def small_region_fidelities():
    """Readout grid fine enough (0.025 lam) that a 0.05-lam square holds 3 x 3 cells.

    Memory caps the pointer extent at +-7 lam, which holds one state of each
    family (number, superposition, displaced) inside the edge tolerance.
    """
    hx = joint.grid_for(1.0, 1.0, 0.5, 0.5).half_extent[0]
    cfg = joint.optimal_config(1.0, grid=joint.GridSpec((128, 560, 560), (hx, 7.0, 7.0)))
    proc = joint.build_process(cfg)
    suite = state_suite()
    out = []
    for name, (cx, cp) in (("fock1", (0.5, -0.25)), ("disp0_xp", (1.0, 0.5)), ("sup02i", (0.0, 1.0))):
        J = joint.evolve(proc, suite[name])
        i, j = np.argmin(np.abs(proc.mu_x - cx)), np.argmin(np.abs(proc.mu_p - cp))
        cx, cp = proc.mu_x[i], proc.mu_p[j]
        region = ps.Region.centred(cx, cp, 0.05 + 1e-9)
        cells = int(region.mask(proc.mu_x, proc.mu_p).sum())
        rho, _ = joint.condition_on_region(J, region, dim=32)
        c = ps.coherent_fock_coefficients(ps.CoherentLabel(cx, cp), 32)
        out.append((name, cells, ps.fidelity_with_pure(rho, c.amplitudes)))
        del J
    return out


@functools.lru_cache(maxsize=None)
def moment_gaps(profile):
    worst = 0.0
    for seed in range(30):
        s = random_finite_state(seed, seed % 7, 16)
        g = ps.husimi_q(s, *ps.axes_for_state(s, profile))
        for m in range(5):
            for n in range(5):
                worst = max(worst, abs(ps.grid_moment(g, m, n) - ps.q_moment_operator(s, m, n)))
    return worst


@functools.lru_cache(maxsize=None)
def kernel_limits(points):
    x = kernel1d.uniform_grid(points, 16.0)
    dx = x[1] - x[0]
    f = np.full((x.size, x.size), (x.size * dx) ** -0.5, dtype=complex)
    f = f * np.exp(1j * 0.7 * x)[None, :]
    delta = kernel1d.delta_kernel(f, x)
    d_err = 0.0
    for a, x0, p0 in ((1.0, 0.0, 0.0), (0.6, 1.5, 3.0), (1.4, -2.0, -1.0)):
        psi = kernel1d.gaussian_packet(x, a, x0, p0)
        d_err = max(d_err, float(np.max(np.abs(kernel1d.outcome_distribution(delta, psi) - np.abs(psi) ** 2))))
    g_err = 0.0
    for w in (0.1, 0.5, 2.0):
        a = 1.0
        psi = kernel1d.gaussian_packet(x, a)
        rho = kernel1d.outcome_distribution(kernel1d.gaussian_kernel(w, x), psi)
        s2 = a**2 + w**2
        g_err = max(g_err, float(np.max(np.abs(rho - np.exp(-(x**2) / (2 * s2)) / np.sqrt(2 * np.pi * s2)))))
    return d_err, g_err


# ---------------------------------------------------------------- criteria


def test_criterion_1_universality():
    limits = {"default": (1e-3, 60.0), "fine": (1e-5, 600.0)}
    ok_all, parts = True, []
    for profile in PROFILES:
        rows = universality(profile)
        l1_max = max(r[0] for r in rows.values())
        slowest = max(r[2] for r in rows.values())
        verdicts = {r[1].verdict for r in rows.values()}
        mom = max(r[1].moment_distance for r in rows.values())
        chf = max(r[1].charfn_distance for r in rows.values())
        l1_tol, t_tol = limits[profile]
        ok = l1_max < l1_tol and verdicts == {"equal"} and slowest <= t_tol
        ok_all &= ok
        parts.append(
            f"{profile}: max L1 {l1_max:.2e} (<{l1_tol:g}), verdicts {sorted(verdicts)}, "
            f"moment gap {mom:.1e}, charfn gap {chf:.1e}, slowest state {slowest:.1f}s (<={t_tol:g}s)"
        )
    assert emit(1, ok_all, "; ".join(parts))


def test_criterion_2_error_saturation():
    opt = {r: worst_case("default", 1.0, r, 8) for r in joint.REGIMES}
    t0 = time.perf_counter()
    sweep = {ratio: {r: worst_case("default", ratio, r, 8).product for r in joint.REGIMES} for ratio in DETUNE}
    elapsed = time.perf_counter() - t0
    ok = all(abs(opt[r].product - 0.5) < 1e-3 for r in joint.REGIMES)
    margins = {r: [sweep[k][r] - 0.5 for k in DETUNE] for r in joint.REGIMES}
    ok &= all(m[0] > 0 and all(b > a for a, b in zip(m, m[1:])) for m in margins.values())
    ok &= elapsed <= 120.0
    detail = (
        f"optimal products retro {opt['retrodictive'].product:.12f}, pred {opt['predictive'].product:.12f}; "
        + ", ".join(f"x{k}: {sweep[k]['retrodictive']:.5f}/{sweep[k]['predictive']:.5f}" for k in DETUNE)
        + f"; sweep {elapsed:.1f}s (<=120s)"
    )
    assert emit(2, ok, detail)


def test_criterion_3_constant_resolution():
    errs = per_state_errors("default")
    lams = np.array([np.sqrt(2 * r["retrodictive"]["sx"]) for r in errs.values()])
    ops = partial_ops("default", 8)
    half = 4
    dx2 = float(np.max(np.abs(ops[("X", 2)].entries[:half, :half] - 0.5 * np.eye(half))))
    dp2 = float(np.max(np.abs(ops[("P", 2)].entries[:half, :half] - 0.5 * np.eye(half))))
    spread = float(lams.max() - lams.min())
    ok = spread < 1e-4 and dx2 < 1e-4 and dp2 < 1e-4
    assert emit(3, ok, f"lambda_psi in [{lams.min():.10f}, {lams.max():.10f}] (spread {spread:.1e}); "
                       f"|M_X2 - I/2| {dx2:.1e}, |M_P2 - I/2| {dp2:.1e} on levels 0-3 of 8")


def test_criterion_4_residuals():
    errs = per_state_errors("default")
    c_opt = max(r["retrodictive"]["res"]["target"] for r in errs.values())
    d_opt = max(r["predictive"]["res"]["target"] for r in errs.values())
    ok = c_opt < 1e-4 and d_opt < 1e-4
    parts = [f"optimal max c {c_opt:.1e}, d {d_opt:.1e}"]
    for ratio in DETUNE:
        det = per_state_errors("default", ratio, ("fock0", "disp0_xp"))
        c = min(min(r["retrodictive"]["res"].values()) for r in det.values())
        d = min(min(r["predictive"]["res"].values()) for r in det.values())
        ok &= c > 0.05 and d > 0.05
        parts.append(f"x{ratio}: min c {c:.4f}, d {d:.4f}")
    assert emit(4, ok, "; ".join(parts) + " (detuned minimized over lambda)")


def test_criterion_5_commutators():
    errs = per_state_errors("default")
    ri = max(abs(r["retrodictive"]["comm"] + 1j) for r in errs.values())
    pf = max(abs(r["predictive"]["comm"] - 1j) for r in errs.values())
    ok = ri < 1e-4 and pf < 1e-4
    assert emit(5, ok, f"max |<[eXi,ePi]> + i| {ri:.1e}, max |<[eXf,ePf]> - i| {pf:.1e} over 12 states")


def test_criterion_6_posterior():
    fids = small_region_fidelities()
    dists = posterior_regions("default")
    ok = all(f > 1 - 1e-3 for _, _, f in fids) and all(d < 1e-3 for d in dists) and all(c >= 9 for _, c, _ in fids)
    f_txt = ", ".join(f"{n} {1 - f:.1e} ({c} cells)" for n, c, f in fids)
    assert emit(6, ok, f"0.05-lam region fidelity deficits {f_txt}; "
                       f"max trace distance to coherent mixture over 5 regions {max(dists):.1e}")


def test_criterion_7_moment_identity():
    gap = moment_gaps("default")
    violations = 0
    for seed in range(30):
        l = seed % 7
        s = random_finite_state(seed, l, 24)
        for n in range(9):
            if ps.q_moment_operator(s, n, n).real > ps.moment_growth_bound(l, n) * (1 + 1e-12):
                violations += 1
    ok = gap < 1e-4 and violations == 0
    assert emit(7, ok, f"max |operator - grid| moment gap {gap:.1e} over 30 states, m,n<=4; growth-bound violations {violations}")


def test_criterion_8_single_coordinate_limits():
    d_err, g_err = kernel_limits(1024)
    near, far = kernel1d.de_broglie_deviation(0.1), kernel1d.de_broglie_deviation(3.0)
    ok = d_err < 1e-6 and g_err < 1e-4 and near < 1e-2 and far > 0.1
    assert emit(8, ok, f"delta kernel {d_err:.1e}; Gaussian vs closed form {g_err:.1e}; "
                       f"de Broglie deviation {near:.4f} at 0.1, {far:.4f} at 3")


def _metrics(profile):
    rows = universality(profile)
    m = {
        "C1 L1(rho,Q)": max(r[0] for r in rows.values()),
        "C1 moment gap": max(r[1].moment_distance for r in rows.values()),
        "C1 charfn gap": max(r[1].charfn_distance for r in rows.values()),
    }
    dim = 8 if profile == "default" else 4
    m["C2 |product-1/2|"] = max(abs(worst_case(profile, 1.0, r, dim).product - 0.5) for r in joint.REGIMES)
    sub = ("fock0", "fock3", "sup13", "disp2_xp")
    errs = per_state_errors(profile) if profile == "default" else per_state_errors(profile, 1.0, sub)
    lams = [np.sqrt(2 * errs[n]["retrodictive"]["sx"]) for n in sub]
    m["C3 lambda_psi spread"] = float(np.ptp(lams))
    m["C3 |lambda_psi-1|"] = max(abs(v - 1) for v in lams)
    m["C4 c residual"] = max(errs[n]["retrodictive"]["res"]["target"] for n in sub)
    m["C4 d residual"] = max(errs[n]["predictive"]["res"]["target"] for n in sub)
    m["C5 commutator"] = max(
        max(abs(errs[n]["retrodictive"]["comm"] + 1j), abs(errs[n]["predictive"]["comm"] - 1j)) for n in sub
    )
    m["C6 mixture trace distance"] = max(posterior_regions(profile))
    m["C7 moment gap"] = moment_gaps(profile)
    d_err, g_err = kernel_limits(1024 if profile == "default" else 2048)
    m["C8 delta kernel"] = d_err
    m["C8 Gaussian closed form"] = g_err
    return m


def test_criterion_9_convergence():
    coarse, fine = _metrics("default"), _metrics("fine")
    ok_all, parts = True, []
    for key in coarse:
        a, b = coarse[key], fine[key]
        if max(a, b) <= FLOOR:
            status = "roundoff floor"
        elif b <= a / 10:
            status = f"improved x{a / max(b, 1e-300):.0f}"
        else:
            status = "NOT improved"
            ok_all = False
        parts.append(f"{key} {a:.1e}->{b:.1e} {status}")
    assert emit(9, ok_all, "; ".join(parts))


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
