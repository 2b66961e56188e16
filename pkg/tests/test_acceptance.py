"""Exit criteria of the build, each at its stated tolerance.

Every test records one ``criterion N: PASS/FAIL`` line; the lines are repeated
in the terminal summary.  Run directly with ``python tests/test_acceptance.py``.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from lobspde import cli
from lobspde import data_io as dio
from lobspde import estimation as est
from lobspde import lob_model as lm
from lobspde import price, sde_core, spectral, streams
from lobspde.sde_core import TimeGrid

from conftest import INTC_ROW, QQQ_ROW, report, row_params

pytestmark = pytest.mark.acceptance


# --- 1. eigen-relation ------------------------------------------------------

def test_c01_eigenfunctions_solve_side_operator():
    rng = np.random.default_rng(1)
    worst_fd, worst_ev = 0.0, 0.0
    for _ in range(20):
        p = spectral.SideParams(eta=rng.uniform(0.2, 2.0), beta=rng.uniform(0.0, 3.0),
                                alpha=rng.uniform(-2.0, 2.0), L=rng.uniform(0.5, 4.0),
                                side=str(rng.choice(["bid", "ask"])))
        x = spectral.side_grid(p, 8000)
        for k in range(1, 6):
            h = spectral.eigenfunction(p, k, x)
            nu = spectral.eigenvalue(p, k)
            xi, ah = spectral.apply_operator_fd(p, x, h)
            hi = h[2:-2]
            worst_fd = max(worst_fd, np.linalg.norm(ah + nu * hi) / np.linalg.norm(nu * hi)
                           if nu != 0 else np.linalg.norm(ah) / np.linalg.norm(hi))
            closed = -p.alpha + p.eta * k ** 2 * math.pi ** 2 / p.L ** 2 + p.beta ** 2 / (4 * p.eta)
            worst_ev = max(worst_ev, abs(nu - closed) / max(1.0, abs(closed)))
    ok = worst_fd <= 1e-6 and worst_ev <= 1e-12
    report("1", ok, f"max FD residual {worst_fd:.2e} (<=1e-6), eigenvalue mismatch {worst_ev:.1e}")
    assert ok


# --- 2. spectral vs finite differences ------------------------------------

def _smooth_side_profile(side, x):
    y = np.abs(x)
    return side.sign * y ** 2 * (side.L - y) * np.exp(-y)


def test_c02_spectral_matches_crank_nicolson():
    side = spectral.SideParams(eta=0.5, beta=1.0, alpha=0.2, L=2.0, side="ask")
    x = spectral.side_grid(side, 512)
    u0 = _smooth_side_profile(side, x)
    t = 0.5
    modal = spectral.evolve(spectral.expand(u0, side, 60, x), t).reconstruct(x)
    cn = spectral.crank_nicolson(side, u0, x, t, 2000)
    l2 = math.sqrt(integrate.simpson((modal - cn) ** 2, x=x))
    rel = l2 / math.sqrt(integrate.simpson(cn ** 2, x=x))

    # near-zero noise: the stochastic book collapses onto the deterministic flow
    p = lm.ModelParams(bid=side.mirrored(), ask=side, sigma_b=1e-12, sigma_a=1e-12)
    xb = lm.BookDensity.grid(p.L, 512)
    u_book = np.concatenate([_smooth_side_profile(p.bid, xb[:513]), _smooth_side_profile(p.ask, xb[513:])])
    path = lm.simulate_general_initial(p, lm.BookDensity(xb, u_book), TimeGrid.over(t, 10), 60, seed=0,
                                       n_paths=1, sample_every=10)
    ua = path.values[0, -1, 512:]
    cn_a = spectral.crank_nicolson(p.ask, u_book[512:], xb[512:], t, 2000)
    l2_book = math.sqrt(integrate.simpson((ua - cn_a) ** 2, x=xb[512:]))
    ok = l2 < 1e-3 and l2_book < 1e-3
    report("2", ok, f"L2 error spectral vs CN {l2:.2e} (rel {rel:.1e}), stochastic sigma->0 {l2_book:.2e} (<1e-3)")
    assert ok


# --- 3. factorisation of the general solution ------------------------------

def test_c03_general_solution_factorises():
    p = lm.ModelParams.from_rates(0.4, 0.7, 0.3, 0.5, -0.4, L=1.5, eta=0.8, gamma_b=0.7, gamma_a=1.3)
    x = lm.BookDensity.grid(p.L, 400)
    m = x.size // 2
    u0 = np.zeros_like(x)
    u0[:m + 1] = _smooth_side_profile(p.bid, x[:m + 1])
    u0[m:] = _smooth_side_profile(p.ask, x[m:]) * (1 + np.cos(3 * x[m:]) ** 2)
    K = 12
    path = lm.simulate_general_initial(p, lm.BookDensity(x, u0), TimeGrid.over(1.0, 50), K, seed=5,
                                       n_paths=100, sample_every=5)
    worst = 0.0
    for side, e, sl in ((p.bid, path.exp_b, slice(0, m + 1)), (p.ask, path.exp_a, slice(m, x.size))):
        xs = x[sl]
        ref = spectral.expand(u0[sl], side, K, xs)
        det = np.stack([spectral.evolve(ref, t).reconstruct(xs) for t in path.times])
        det[:, 0 if side.side == "ask" else -1] = 0.0
        ratio = path.values[:, :, sl] / e[:, :, None]
        dev = np.max(np.abs(ratio - det[None]), axis=(0, 2)) / np.max(np.abs(det), axis=1)
        worst = max(worst, float(dev.max()))
    ok = worst <= 1e-10
    report("3", ok, f"max relative deviation of u/E from spectral evolution {worst:.2e} (<=1e-10)")
    assert ok


# --- 4. reciprocal identity ------------------------------------------------

def test_c04_reciprocal_identity():
    grid = TimeGrid.over(2.0, 400)
    cases = [(0.3, 0.0, 0.0, 0.0), (1.0, 5.0, -0.5, 0.5), (0.5, 2.0, -0.99, -0.9),
             (0.2, 10.0, 0.0, 5.0), (2.0, 20.0, -0.8, 3.0)]
    worst = 0.0
    for i, (sig, lam, lo, hi) in enumerate(cases):
        rng = np.random.default_rng(40 + i)
        marks = (sde_core.compound_poisson_marks(grid, lam, lo, hi, rng, 50) if lam > 0
                 else np.zeros((50, grid.n_steps + 1)))
        dw = sde_core.brownian_increments(grid, 40 + i, 50)[:, 0, :]
        x = sde_core.driver_from_increments(grid, dw, sig, marks)
        y = sde_core.reciprocal_driver(x)
        prod = sde_core.stochastic_exponential(x) * sde_core.stochastic_exponential(y)
        worst = max(worst, float(np.max(np.abs(prod - 1.0))))
    ok = worst <= 1e-10
    report("4", ok, f"max |E(X) E(Y) - 1| over {len(cases)} jump-diffusion cases {worst:.2e} (<=1e-10)")
    assert ok


# --- 5. factor moments -----------------------------------------------------

def _within(est_, se, target, k=4.0):
    return abs(est_ - target) <= k * se


def test_c05_factor_moments():
    n, t = 100_000, 1.0
    grid = TimeGrid.over(t, 200)
    p = lm.ModelParams.from_rates(0.8, 0.3, 0.6, 0.4, -0.3, L=1.0)
    init = lm.FactorState(v_a=2.0, v_b=3.0)
    logs = {"bid": [], "ask": []}
    for off, size in streams.chunks(n, 20_000):
        tr = lm.simulate_two_factor(p, init, grid, 11, size, off)
        logs["bid"].append(np.log(tr.v_b[:, -1]))
        logs["ask"].append(np.log(tr.v_a[:, -1]))
    lines, ok = [], True
    for side, v0, nu, sig in (("bid", 3.0, p.nu_b, p.sigma_b), ("ask", 2.0, p.nu_a, p.sigma_a)):
        z = np.concatenate(logs[side])
        mu, var = math.log(v0) - (nu + 0.5 * sig ** 2) * t, sig ** 2 * t
        se_m = z.std(ddof=1) / math.sqrt(n)
        dev2 = (z - z.mean()) ** 2
        se_v = dev2.std(ddof=1) / math.sqrt(n)
        ok &= _within(z.mean(), se_m, mu) and _within(z.var(ddof=1), se_v, var)
        lines.append(f"{side} log-mean {(z.mean() - mu) / se_m:+.2f}se log-var {(z.var(ddof=1) - var) / se_v:+.2f}se")

    q = row_params(QQQ_ROW, mean_reverting=True)
    k = q.depth_factor
    init = lm.FactorState(v_a=0.5 * QQQ_ROW["dbar_a"] / k, v_b=1.6 * QQQ_ROW["dbar_b"] / k)
    ends = {"bid": [], "ask": []}
    for off, size in streams.chunks(n, 20_000):
        tr = lm.simulate_mean_reverting(q, init, grid, 12, size, off)
        ends["bid"].append(tr.v_b[:, [100, 200]])
        ends["ask"].append(tr.v_a[:, [100, 200]])
    for side, v0 in (("bid", init.v_b), ("ask", init.v_a)):
        v = np.concatenate(ends[side])
        for j, tt in enumerate((0.5, 1.0)):
            m = sde_core.mean_at(q.factor_sde(side), v0, tt)
            se = v[:, j].std(ddof=1) / math.sqrt(n)
            ok &= _within(v[:, j].mean(), se, m)
            lines.append(f"{side} E[V_{tt}] {(v[:, j].mean() - m) / se:+.2f}se")
    report("5", ok, "; ".join(lines) + " (all within 4se)")
    assert ok


# --- 6. stationary law and autocorrelation ---------------------------------

def test_c06_stationary_law_and_autocorrelation():
    sde = sde_core.LinearSDEParams(a=-2.0, b=0.5, c=4.0)
    law = sde_core.stationary_law(sde)
    assert law.shape > 3
    n = 20_000
    grid = TimeGrid.over(10.0, 1000)
    z = np.concatenate([sde_core.solve_linear_sde(sde, sde_core.brownian_driver(
        grid, seed=21, n_paths=size, path_offset=off), 1.0)[:, -1] for off, size in streams.chunks(n, 5000)])
    se_m = z.std(ddof=1) / math.sqrt(n)
    se_v = ((z - z.mean()) ** 2).std(ddof=1) / math.sqrt(n)
    ok = _within(z.mean(), se_m, law.mean) and _within(z.var(ddof=1), se_v, law.variance)
    lines = [f"shape {law.shape:g} mean {(z.mean() - law.mean) / se_m:+.2f}se "
             f"var {(z.var(ddof=1) - law.variance) / se_v:+.2f}se"]

    # autocorrelation from a stationary start, batch-means bands
    n_ac, batches = 40_000, 20
    grid = TimeGrid.over(1.0, 200)
    lags = (0.1, 0.3, 0.6)
    idx = [grid.index_of(l) for l in lags]
    parts = []
    for off, size in streams.chunks(n_ac, 2000):
        z0 = law.sample(streams.block_rng(22, 0, off), size)
        path = sde_core.solve_linear_sde(sde, sde_core.brownian_driver(grid, seed=22, n_paths=size,
                                                                       path_offset=off), z0)
        parts.append(path[:, [0] + idx])
    zz = np.concatenate(parts)
    for j, lag in enumerate(lags):
        a, b = zz[:, 0], zz[:, j + 1]
        corr = np.corrcoef(a, b)[0, 1]
        sub = [np.corrcoef(a[s], b[s])[0, 1] for s in np.array_split(np.arange(n_ac), batches)]
        se = np.std(sub, ddof=1) / math.sqrt(batches)
        target = sde_core.stationary_autocorrelation(sde, lag)
        ok &= _within(corr, se, target)
        lines.append(f"acf({lag}) {corr:.4f} vs {target:.4f} ({(corr - target) / se:+.2f}se)")
    report("6", ok, "; ".join(lines) + " (within 4se)")
    assert ok


# --- 7. mid-price volatility -----------------------------------------------

def test_c07_mid_price_volatility():
    lines, ok = [], True
    for name, row in (("INTC", INTC_ROW), ("QQQ", QQQ_ROW)):
        p = row_params(row)
        k = p.depth_factor
        init = lm.FactorState(v_a=row["dbar_a"] / k, v_b=row["dbar_b"] / k)
        s1 = np.concatenate([lm.simulate_two_factor(p, init, TimeGrid.over(1.0, 50), 31, size, off).s[:, -1]
                             for off, size in streams.chunks(100_000, 25_000)])
        ratio = s1.var(ddof=1) / 1.0 / price.mid_vol(p) ** 2
        ok &= abs(ratio - 1) <= 0.05
        lines.append(f"{name} Var(S_1)/(sigma_S^2 t) = {ratio:.4f}")
    report("7", ok, "; ".join(lines) + " (within 5%)")
    assert ok


# --- 8. probability of an up-move --------------------------------------------

def test_c08_up_move_probability():
    nu = 2.0
    p = lm.ModelParams.from_rates(nu, nu, 0.6, 0.5, -0.2, L=1.0, vbar_b=1.0, vbar_a=1.0)
    k = p.depth_factor
    dbar = p.vbar_b / nu * k
    dt = 0.1 / nu
    y = 0.1 * price.mid_vol(p) * math.sqrt(dt)
    grid = TimeGrid.over(dt, 1)
    imbal = (-0.4, -0.2, 0.0, 0.2, 0.4)
    mc, th, worst = [], [], 0.0
    for i, r in enumerate(imbal):
        d_b, d_a = dbar * (1 + r), dbar * (1 - r)
        tr = lm.simulate_mean_reverting(p, lm.FactorState(v_a=d_a / k, v_b=d_b / k), grid, 80 + i,
                                        100_000, substeps=50)
        mc.append(float(np.mean(tr.s[:, -1] - tr.s[:, 0] >= y)))
        th.append(price.prob_up_move(p, d_b, d_a, dbar, dbar, y, dt))
        worst = max(worst, abs(mc[-1] - th[-1]))
    monotone = all(np.diff(mc) < 0) and all(np.diff(th) < 0)
    ok = worst <= 0.02 and monotone
    pairs = ", ".join(f"{r:+.1f}: {m:.3f}/{t:.3f}" for r, m, t in zip(imbal, mc, th))
    report("8", ok, f"imbalance MC/formula {pairs}; max gap {100 * worst:.2f}pp (<=2pp), "
                    f"monotone {monotone}")
    assert ok


# --- 9. estimator recovery --------------------------------------------------

N_REP, N_OBS, DT_OBS = 50, 100_000, 0.05


@pytest.fixture(scope="module")
def recovery():
    p = row_params(QQQ_ROW, mean_reverting=True)
    grid = TimeGrid(0.0, DT_OBS, N_OBS - 1)
    law_b = sde_core.stationary_law(p.factor_sde("bid"))
    law_a = sde_core.stationary_law(p.factor_sde("ask"))
    rows = []
    for rep in range(N_REP):
        rng = streams.block_rng(90, 0, rep * streams.BLOCK)
        init = lm.FactorState(v_a=float(law_a.sample(rng)), v_b=float(law_b.sample(rng)))
        tr = lm.simulate_mean_reverting(p, init, grid, 90, 1, rep, substeps=2)
        e = est.estimate_params(tr.path(0).depth_series(p))
        # iid draws from the invariant depth law for the moment identity
        k = p.depth_factor
        iid = k * law_b.sample(rng, N_OBS)
        rows.append((e, est.estimate_mom(iid).c))
    return p, law_b, rows


def _median_rel(vals, target):
    return float(np.median(np.abs(np.asarray(vals) / target - 1)))


def test_c09_estimators_recover_parameters(recovery):
    p, law_b, rows = recovery
    es = [r[0] for r in rows]
    checks = []
    for tag, nu, sig in (("b", p.nu_b, p.sigma_b), ("a", p.nu_a, p.sigma_a)):
        checks.append((f"nu_{tag}", _median_rel([getattr(e, f"nu_{tag}") for e in es], nu), 0.05))
        checks.append((f"sigma_{tag} (rcg)", _median_rel([getattr(e, f"sigma_{tag}") for e in es], sig), 0.10))
        checks.append((f"sigma_{tag} (rv)", _median_rel([getattr(e, f"sigma_rv_{tag}") for e in es], sig), 0.10))
        c_true = 2 * nu / sig ** 2
        checks.append((f"c_{tag} vs 2nu/sigma^2", _median_rel([getattr(e, f"c_{tag}") for e in es], c_true), 0.05))
    rho_err = float(np.median([abs(e.rho_ab - p.rho_ab) for e in es]))
    c_iid = [r[1] for r in rows]
    checks.append(("c (iid) vs shape-1", _median_rel(c_iid, law_b.shape - 1), 0.05))
    ok = all(v <= tol for _, v, tol in checks) and rho_err <= 0.05
    detail = ", ".join(f"{n} {100 * v:.2f}%" for n, v, _ in checks)
    report("9", ok, f"median errors over {N_REP} runs: {detail}, rho {rho_err:.4f} (abs)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the moment estimator converges to shape - 1, not the shape")
def test_c09_moment_estimator_against_literal_shape(recovery):
    _, law_b, rows = recovery
    err = _median_rel([r[1] for r in rows], law_b.shape)
    ok = err <= 0.05
    report("9-literal", ok, f"c (iid) vs inverse-Gamma shape {law_b.shape:.3f}: median error "
                            f"{100 * err:.2f}% (<=5%); expected to fail, estimator targets shape-1")
    assert ok


# --- 10. profile fitting ----------------------------------------------------

def test_c10_profile_fit():
    ticks = np.arange(1, 21)
    worst = 0.0
    for g in (0.25, 0.86, 0.95):
        for a in (0.52, 1.0):
            sizes = 400.0 * est.profile_shape(ticks, g, a, 1000.0)
            fit = est.fit_profile_ls(ticks, sizes, nonlinear=True)
            worst = max(worst, abs(fit.gamma - g), abs(fit.scaling_exponent_a - a))

    p = lm.ModelParams.from_rates(0.0, 0.0, 0.02, 0.02, 0.0, L=10.0, gamma_b=25.0, gamma_a=35.0)
    tr = lm.simulate_two_factor(p, lm.FactorState(2e4, 2e4), TimeGrid.over(1e4, 10_000 - 1), 7)
    prof = dio.average_profile(dio.synthetic_snapshots(p, tr, np.random.default_rng(7)))
    gaps = []
    for side in ("bid", "ask"):
        ls = est.fit_profile_ls(prof.ticks, prof.side(side))
        pk = est.fit_profile_peak(prof.ticks, prof.side(side))
        gaps.append(abs(pk.gamma / ls.gamma - 1))
    ok = worst <= 1e-4 and max(gaps) <= 0.10
    report("10", ok, f"noiseless recovery error {worst:.1e} (<=1e-4); peak vs LS gamma on "
                     f"{prof.count} snapshots {100 * gaps[0]:.2f}% bid, {100 * gaps[1]:.2f}% ask (<=10%)")
    assert ok


# --- 11. balanced book conserves the mean ------------------------------------

def test_c11_balanced_book_mean_is_constant():
    L = 1.0
    eta, gb, ga = 0.5, 1.0, 2.0
    alpha = lambda g: eta * math.pi ** 2 / L ** 2 + eta * g ** 2
    bid = spectral.SideParams(eta, 2 * eta * gb, alpha(gb), L, "bid")
    ask = spectral.SideParams(eta, 2 * eta * ga, alpha(ga), L, "ask")
    p = lm.ModelParams(bid=bid, ask=ask, sigma_b=0.5, sigma_a=0.7, rho_ab=-0.3)
    assert max(map(abs, lm.balance_condition(p))) < 1e-12
    u0 = lm.BookDensity.from_factors(p, 1.5, 1.0, 256)
    x = u0.x_grid
    phis = {"gauss": np.exp(-x ** 2 / 0.5) * np.cos(2 * x), "cauchy": 1 / (1 + (x - 0.3) ** 2),
            "ramp": x + 0.5 * x ** 3}
    grid = TimeGrid.over(1.0, 100)
    n = 10_000
    sums = {k: [] for k in phis}
    for off, size in streams.chunks(n, 1000):
        path = lm.simulate_general_initial(p, u0, grid, 3, seed=111, n_paths=size, path_offset=off,
                                           sample_every=10)
        for k, f in phis.items():
            sums[k].append(integrate.simpson(path.values * f, x=x, axis=-1))
    worst, ok = 0.0, True
    for k, parts in sums.items():
        v = np.concatenate(parts)
        d = v - v[:, :1]
        se = d[:, 1:].std(axis=0, ddof=1) / math.sqrt(n)
        z = np.abs(d[:, 1:].mean(axis=0)) / se
        worst = max(worst, float(z.max()))
        ok &= bool(np.all(z <= 4))
    report("11", ok, f"max |mean change of <u_t, phi>| over t in (0, 1], 3 test functions: "
                     f"{worst:.2f}se (<=4se)")
    assert ok


# --- 12. moving-boundary weak form -------------------------------------------

def test_c12_weak_form_with_moving_boundary():
    p = lm.ModelParams.from_rates(1.2, 0.8, 0.6, 0.7, -0.3, L=1.0, gamma_b=1.0, gamma_a=2.0,
                                  theta=0.5, c_s=0.5)
    init = lm.FactorState(v_a=1.0, v_b=1.5)
    grid = TimeGrid.over(0.1, 500)
    phis = {"gauss": lambda x: np.exp(-x ** 2 / 0.5) * np.cos(2 * x),
            "cauchy": lambda x: 1 / (1 + (x - 0.3) ** 2)}
    ok, lines, flipped_z = True, [], []
    for name, phi in phis.items():
        m, se, scale = price.weak_form_defect(p, init, phi, grid, 121, 10_000)
        mf, sef, _ = price.weak_form_defect(p, init, phi, grid, 121, 10_000, boundary_sign=-1.0)
        ok &= abs(m) <= 4 * se
        flipped_z.append(abs(mf) / sef)
        lines.append(f"{name} residual {m:+.2e} ({m / se:+.2f}se, change {scale:.2e}), "
                     f"flipped sign {mf / sef:+.1f}se")
    ok &= max(flipped_z) > 4
    report("12", ok, "; ".join(lines)
           + " (correct sign within 4se for both; flipped sign rejected by at least one)")
    assert ok


# --- 13. CLI determinism and ingestion ----------------------------------------

def _ini(path: Path, sections: dict) -> str:
    path.write_text("".join(f"[{s}]\n" + "".join(f"{k} = {v}\n" for k, v in kv.items())
                            for s, kv in sections.items()))
    return str(path)


def _tree(d: Path) -> dict:
    return {f.name: f.read_bytes() for f in sorted(d.iterdir())}


def test_c13_cli_determinism_and_round_trip(tmp_path):
    model = dict(nu_b=QQQ_ROW["nu_b"], nu_a=QQQ_ROW["nu_a"], sigma_b=QQQ_ROW["sigma_b"],
                 sigma_a=QQQ_ROW["sigma_a"], rho_ab=QQQ_ROW["rho"], dbar_b=QQQ_ROW["dbar_b"],
                 dbar_a=QQQ_ROW["dbar_a"], L=1.0, theta=0.01)
    sim = _ini(tmp_path / "sim.ini", {"model": model, "simulate": {"horizon": 1800, "dt": 0.05,
                                                                   "substeps": 2, "seed": 5}})
    pf = lm.ModelParams.from_rates(0.0, 0.0, 0.02, 0.02, 0.0, L=10.0, gamma_b=25.0, gamma_a=30.0)
    tr = lm.simulate_two_factor(pf, lm.FactorState(2e4, 2e4), TimeGrid.over(2000.0, 2000), 9)
    snaps = dio.synthetic_snapshots(pf, tr, np.random.default_rng(9))
    dio.write_orderbook_file(tmp_path / "ob.csv", snaps)
    runs = {
        "simulate": ["simulate", "--config", sim, "--plot"],
        "profile-fit": ["profile-fit", "--input", str(tmp_path / "ob.csv"), "--window", "1000", "--plot"],
        "estimate": ["estimate", "--input", str(tmp_path / "a-simulate" / "depth_series.csv"), "--plot"],
        "vol-compare": ["vol-compare", "--input", str(tmp_path / "a-simulate" / "depth_series.csv"),
                        "--window", "900", "--plot"],
    }
    same = {}
    for name, args in runs.items():
        outs = []
        for tag in ("a", "b"):
            d = tmp_path / f"{tag}-{name}"
            assert cli.main(args + ["--out-dir", str(d)]) == 0
            outs.append(_tree(d))
        same[name] = outs[0] == outs[1] and len(outs[0]) > 0

    # ingestion round trip: integer and decimal prices, timestamps from a message file
    lossless = True
    for fmt in ("int", "dollars"):
        f1, f2 = tmp_path / f"rt1-{fmt}.csv", tmp_path / f"rt2-{fmt}.csv"
        dio.write_orderbook_file(f1, snaps, price_format=fmt)
        back = dio.parse_orderbook_file(f1, 20).snapshots
        dio.write_orderbook_file(f2, back, price_format=fmt)
        lossless &= f1.read_bytes() == f2.read_bytes() and all(
            a.timestamp_ns == b.timestamp_ns and np.array_equal(a.ask_prices, b.ask_prices)
            and np.array_equal(a.bid_sizes, b.bid_sizes) for a, b in zip(snaps, back))
    body, msg = tmp_path / "body.csv", tmp_path / "msg.csv"
    dio.write_orderbook_file(body, snaps, with_time=False)
    msg.write_text("".join(f"{s.timestamp_ns // dio.NS}.{s.timestamp_ns % dio.NS:09d},1,0,0,0,0\n"
                           for s in snaps))
    back = dio.parse_orderbook_file(body, 20, time_source="message", message_path=msg).snapshots
    lossless &= [s.timestamp_ns for s in back] == [s.timestamp_ns for s in snaps]
    ok = all(same.values()) and lossless
    report("13", ok, "byte-identical reruns: " + ", ".join(f"{k} {v}" for k, v in same.items())
           + f"; ingestion round trip lossless {lossless}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-rA"]))
