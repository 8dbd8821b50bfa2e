#!/usr/bin/env python3
"""Solve an SDPA sparse file (.dat-s) with cvxpy as an independent check.

Reads the SDPA pair in the standard-form reading used by the exporter,

    minimize <-F_0, Y>  subject to  <F_i, Y> = c_i,  Y >= 0,

and prints the optimal value plus any "* objective_offset" comment, so the
number is directly comparable with the occmom relaxation value.
"""

import argparse
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    offset = 0.0
    tokens = []
    with open(path) as fh:
        for line in fh:
            if line.startswith(("*", '"')):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "objective_offset":
                    offset = float(parts[1])
                continue
            for ch in ",{}()":
                line = line.replace(ch, " ")
            tokens.extend(line.split())
    pos = 0

    def take(n):
        nonlocal pos
        out = tokens[pos : pos + n]
        if len(out) != n:
            raise ValueError("truncated SDPA file")
        pos += n
        return out

    m = int(take(1)[0])
    nblocks = int(take(1)[0])
    sizes = [int(s) for s in take(nblocks)]
    rhs = np.array([float(v) for v in take(m)])
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    rest = tokens[pos:]
    if len(rest) % 5:
        raise ValueError("malformed entry list")
    for k in range(0, len(rest), 5):
        matno, blk, i, j = (int(t) for t in rest[k : k + 4])
        v = float(rest[k + 4])
        mats[matno][blk - 1][i - 1, j - 1] = v
        mats[matno][blk - 1][j - 1, i - 1] = v
    return sizes, rhs, mats, offset


def solve(path, solver):
    sizes, rhs, mats, offset = read_sdpa(path)
    ys, cons = [], []
    for s in sizes:
        if s > 0:
            y = cp.Variable((s, s), symmetric=True)
            cons.append(y >> 0)
        else:
            y = cp.Variable(-s, nonneg=True)
        ys.append(y)

    def pair(blocks):
        terms = []
        for y, s, f in zip(ys, sizes, blocks):
            if not f.any():
                continue
            terms.append(cp.trace(f @ y) if s > 0 else np.diag(f) @ y)
        return cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)

    for i, ci in enumerate(rhs):
        cons.append(pair(mats[i + 1]) == ci)
    prob = cp.Problem(cp.Minimize(-pair(mats[0])), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"external solver status: {prob.status}")
    return prob.value + offset, prob.status


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("file", help="SDPA sparse file")
    ap.add_argument("--solver", default="CLARABEL", help="cvxpy solver name (default CLARABEL)")
    args = ap.parse_args()
    try:
        value, status = solve(args.file, args.solver)
    except Exception as exc:  # report and fail; the caller decides what to do
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{value:.12g} {status}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
