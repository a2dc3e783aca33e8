"""Offline search for a polynomial dual metric W(theta, vx) for the planar quadrotor.

Solves a gridded SDP that minimises the condition number bound of W subject to
the contraction LMI on the unactuated subspace, then verifies the result on a
finer grid and writes the metric JSON consumed by the Rust crate.

    python3 tools/design_metric.py --lam 0.5 --deg 2 --out configs/quadrotor_metric.json
"""
import argparse
import itertools
import json

import cvxpy as cp
import numpy as np

G = 9.81
TH_MAX, VX_MAX, VZ_MAX, THD_MAX = np.pi / 4, 2.0, 1.0, np.pi / 3


def jac(th, vx, vz, thd):
    s, c = np.sin(th), np.cos(th)
    a = np.zeros((6, 6))
    a[0, 2] = -vx * s - vz * c
    a[0, 3] = c
    a[0, 4] = -s
    a[1, 2] = vx * c - vz * s
    a[1, 3] = s
    a[1, 4] = c
    a[2, 5] = 1
    a[3, 2] = -G * c
    a[3, 4] = thd
    a[3, 5] = vz
    a[4, 2] = G * s
    a[4, 3] = -thd
    a[4, 5] = -vx
    return a


def drift(th, vx, vz, thd):
    s, c = np.sin(th), np.cos(th)
    return np.array([vx * c - vz * s, vx * s + vz * c, thd, vz * thd - G * s, -vx * thd - G * c, 0.0])


def monomials(deg):
    return [(i, j) for i in range(deg + 1) for j in range(deg + 1) if i + j <= deg]


def w_at(coeffs, mons, th, vx):
    return sum(c * (th ** i * vx ** j) for c, (i, j) in zip(coeffs, mons))


def dw_along(coeffs, mons, th, vx, fv):
    out = 0
    for c, (i, j) in zip(coeffs, mons):
        d = 0.0
        if i > 0:
            d += i * th ** (i - 1) * vx ** j * fv[2]
        if j > 0:
            d += j * th ** i * vx ** (j - 1) * fv[3]
        if d != 0.0:
            out = out + c * d
    return out


def contraction_lhs(coeffs, mons, lam, th, vx, vz, thd):
    w = w_at(coeffs, mons, th, vx)
    a = jac(th, vx, vz, thd)
    fv = drift(th, vx, vz, thd)
    full = -dw_along(coeffs, mons, th, vx, fv) + a @ w + w @ a.T + 2 * lam * w
    return full[:4, :4]


def solve(lam, deg, n_grid, margin):
    mons = monomials(deg)
    ws = [cp.Variable((6, 6), symmetric=True) for _ in mons]
    t = cp.Variable()
    cons = []
    for th, vx in itertools.product(np.linspace(-TH_MAX, TH_MAX, n_grid), np.linspace(-VX_MAX, VX_MAX, n_grid)):
        w = w_at(ws, mons, th, vx)
        cons += [w >> np.eye(6), w << t * np.eye(6)]
        for vz, thd in itertools.product([-VZ_MAX, VZ_MAX], [-THD_MAX, THD_MAX]):
            s = contraction_lhs(ws, mons, lam, th, vx, vz, thd)
            cons.append((s + s.T) / 2 << -margin * np.eye(4))
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    return mons, [w.value for w in ws], prob.status


def verify(mons, coeffs, lam, n_grid):
    worst, lo, hi = -np.inf, np.inf, 0.0
    for th, vx in itertools.product(np.linspace(-TH_MAX, TH_MAX, n_grid), np.linspace(-VX_MAX, VX_MAX, n_grid)):
        w = w_at(coeffs, mons, th, vx)
        ev = np.linalg.eigvalsh(w)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
        for vz, thd in itertools.product([-VZ_MAX, VZ_MAX], [-THD_MAX, THD_MAX]):
            s = contraction_lhs(coeffs, mons, lam, th, vx, vz, thd)
            worst = max(worst, np.linalg.eigvalsh((s + s.T) / 2)[-1])
    return worst, lo, hi


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--deg", type=int, default=2)
    ap.add_argument("--grid", type=int, default=9)
    ap.add_argument("--margin", type=float, default=1e-2)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply W by this factor")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    mons, coeffs, status = solve(args.lam, args.deg, args.grid, args.margin)
    print("status", status)
    coeffs = [args.scale * (c + c.T) / 2 for c in coeffs]
    worst, lo, hi = verify(mons, coeffs, args.lam, 61)
    # M = W^-1, so the metric bounds invert the dual bounds
    alpha_lower, alpha_upper = 1.0 / hi, 1.0 / lo
    print(f"worst contraction eig {worst:.3e}  W eig [{lo:.4f}, {hi:.4f}]  ratio {hi / lo:.2f}")
    if worst > 0:
        raise SystemExit("contraction LMI violated on the verification grid")
    doc = {
        "state_dim": 6,
        "coordinates": [2, 3],
        "lambda": args.lam,
        # pad the sandwich slightly so grid-interpolation error stays inside it
        "alpha_lower": alpha_lower * 0.99,
        "alpha_upper": alpha_upper * 1.01,
        "terms": [{"exponents": list(m), "matrix": c.round(12).tolist()} for m, c in zip(mons, coeffs)],
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


if __name__ == "__main__":
    main()
