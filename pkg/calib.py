import json, math, time
import numpy as np
from dipolarray import (
    linear_chain, mf_steady_state, qmcw_steady_state, exact_master_equation,
    identical_atom_sweep, disorder_average, DriveParams, DisorderSpec,
)
from dipolarray.observables import populations

drive = DriveParams()
out = {}

def mf_p1(n, d):
    geo = linear_chain(n, d)
    rep = mf_steady_state(geo, drive=drive)
    assert rep.converged, (n, d, rep.residual)
    return float(np.mean(rep.state.populations()[:, 0]))

# --- headline N=200 d=2
t0 = time.time()
out["c5_p1"] = mf_p1(200, 2.0)
out["c5_time"] = time.time() - t0
print("C5", out["c5_p1"], f"{out['c5_time']:.1f}s", flush=True)

# --- scaling law d in 2..8, N in 10,25,50,100
t0 = time.time()
table = {}
for d in range(2, 9):
    for n in (10, 25, 50, 100):
        table[f"{d}_{n}"] = mf_p1(n, float(d))
out["c6_table"] = table
slopes, r2s = {}, {}
for d in range(2, 9):
    x = np.array([math.log10(n) ** 2 for n in (10, 25, 50, 100)])
    y = np.array([table[f"{d}_{n}"] for n in (10, 25, 50, 100)])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    slopes[d] = float(coef[0]); r2s[d] = 1 - ss_res / ss_tot
out["c6_slopes"] = slopes
out["c6_r2"] = r2s
out["c6_slope_ratio"] = {d: slopes[d] * d * d / (slopes[2] * 4) for d in slopes}
out["c6_time"] = time.time() - t0
print("C6", {k: round(v, 4) for k, v in r2s.items()}, flush=True)
print("C6 slope*(d/2)^2 / slope(2):", {k: round(v, 3) for k, v in out["c6_slope_ratio"].items()}, flush=True)

# --- fig2a structure N=10, d 0.6..3.2 step 0.05
t0 = time.time()
ds = [round(0.6 + 0.05 * i, 10) for i in range(53)]
curve = {str(d): mf_p1(10, d) for d in ds}
out["c4_curve"] = curve
out["c4_time"] = time.time() - t0
print("C4 done", f"{out['c4_time']:.1f}s", flush=True)

# --- appendix B2: d=2.5, sqrt2; N 20..100
t0 = time.time()
b2 = {}
for d in (2.5, math.sqrt(2.0)):
    vals = {n: mf_p1(n, d) for n in (20, 40, 60, 80, 100)}
    b2[f"{d:.6f}"] = vals
out["c7_vals"] = {k: {str(n): v for n, v in vv.items()} for k, vv in b2.items()}
for k, vv in b2.items():
    v = list(vv.values())
    print("C7", k, "spread", (max(v) - min(v)) / min(v), flush=True)
out["c7_time"] = time.time() - t0

# --- identical atom to 1e9
t0 = time.time()
ns = [10, 100, 1000, 10**4, 10**5, 10**6, 3 * 10**6, 10**7, 10**8, 10**9]
res = identical_atom_sweep(ns, 2.0, drive)
out["c8_ratio"] = {str(r.n): r.ratio for r in res}
out["c8_converged"] = all(r.converged for r in res)
out["c8_time"] = time.time() - t0
print("C8", {k: round(v, 4) for k, v in out["c8_ratio"].items()}, f"{out['c8_time']:.1f}s", flush=True)

# --- truncation/MF validity: N=6 d=0.5 MF vs QMCW; N=3 1-exc vs 2-exc
t0 = time.time()
geo6 = linear_chain(6, 0.5)
q6 = qmcw_steady_state(geo6, drive=drive, n_traj=2400, seed=2)
r6 = populations(q6, geometry=geo6, drive=drive)
m6 = mf_p1(6, 0.5)
out["c10_q6"] = [r6.p1_bar, r6.p1_bar_se]
out["c10_m6"] = m6
out["c10_q6_time"] = time.time() - t0
print("C10 N=6 qmcw", r6.p1_bar, "+-", r6.p1_bar_se, "mf", m6,
      "rel", abs(m6 - r6.p1_bar) / r6.p1_bar, f"{out['c10_q6_time']:.1f}s", flush=True)
t0 = time.time()
geo3 = linear_chain(3, 0.5)
q31 = qmcw_steady_state(geo3, drive=drive, max_excitations=1, n_traj=2400, seed=3)
q32 = qmcw_steady_state(geo3, drive=drive, max_excitations=2, n_traj=2400, seed=4)
r31 = populations(q31, geometry=geo3, drive=drive)
r32 = populations(q32, geometry=geo3, drive=drive)
comb = math.hypot(r31.p1_bar_se, r32.p1_bar_se)
out["c10_exc"] = [r31.p1_bar, r31.p1_bar_se, r32.p1_bar, r32.p1_bar_se,
                  abs(r31.p1_bar - r32.p1_bar) / comb]
out["c10_exc_time"] = time.time() - t0
print("C10 exc", out["c10_exc"], f"{out['c10_exc_time']:.1f}s", flush=True)

# --- disorder full scale: N in 10,50; eps 0.05; 500 realizations
t0 = time.time()
dis = {}
for n in (10, 50):
    sw = disorder_average(n, DisorderSpec(epsilon=0.05, n_realizations=500, seed=0),
                          drive, spacing=2.0)
    ordered = mf_p1(n, 2.0)
    dis[str(n)] = {"mean": sw.mean, "std": sw.std, "ordered": ordered,
                   "n_converged": sw.n_converged, "failed": sw.failed,
                   "sigma_gap": (ordered - sw.mean) / sw.std}
out["c9"] = dis
out["c9_time"] = time.time() - t0
print("C9", json.dumps(dis, indent=1), f"{out['c9_time']:.1f}s", flush=True)

# --- exact-oracle equivalence full: N=2, d in {1,2}
t0 = time.time()
c3 = {}
for d in (1.0, 2.0):
    geo = linear_chain(2, d)
    q = qmcw_steady_state(geo, drive=drive, n_traj=2400, seed=5)
    ex = exact_master_equation(geo, drive=drive, max_excitations=1)
    rq = populations(q, geometry=geo, drive=drive)
    re_ = populations(ex, geometry=geo, drive=drive)
    mf = mf_p1(2, d)
    c3[str(d)] = {"qmcw": rq.p1_bar, "se": rq.p1_bar_se, "exact": re_.p1_bar,
                  "mf": mf, "nse": abs(rq.p1_bar - re_.p1_bar) / rq.p1_bar_se,
                  "mf_rel": abs(mf - re_.p1_bar) / re_.p1_bar}
out["c3"] = c3
out["c3_time"] = time.time() - t0
print("C3", json.dumps(c3, indent=1), f"{out['c3_time']:.1f}s", flush=True)

with open("calib.json", "w") as fh:
    json.dump(out, fh, indent=1)
print("ALL DONE", flush=True)
