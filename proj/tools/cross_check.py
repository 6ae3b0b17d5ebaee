#!/usr/bin/env python3
"""Solve a dumped conic problem with cvxpy and print status and objective.

Usage: cross_check.py problem.txt [--solver CLARABEL|SCS]
"""
import argparse
import sys

import cvxpy as cp
import numpy as np


def read_problem(path):
    tokens = open(path).read().split()
    pos = 0

    def take():
        nonlocal pos
        pos += 1
        return tokens[pos - 1]

    if take() != "conic-problem" or take() != "v1":
        sys.exit("not a conic-problem v1 file")
    take()  # blocks
    blocks = [(take(), int(take())) for _ in range(int(take()))]

    def triplets(count):
        return [(int(take()), int(take()), int(take()), float(take())) for _ in range(count)]

    take()  # objective
    objective = triplets(int(take()))
    take()  # constraints
    constraints = []
    for _ in range(int(take())):
        sense, rhs, count = take(), float(take()), int(take())
        constraints.append((sense, rhs, triplets(count)))
    return blocks, objective, constraints


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("problem")
    parser.add_argument("--solver", default="CLARABEL")
    args = parser.parse_args()

    blocks, objective, constraints = read_problem(args.problem)
    variables = []
    cones = []
    for kind, dim in blocks:
        if kind == "psd":
            v = cp.Variable((dim, dim), symmetric=True)
            cones.append(v >> 0)
        else:
            v = cp.Variable(dim)
            cones.append(v >= 0)
        variables.append((kind, v))

    def linear(trips):
        expr = 0
        for b, r, c, val in trips:
            kind, v = variables[b]
            if kind == "psd":
                expr = expr + (val * v[r, c] if r == c else 2 * val * v[r, c])
            else:
                expr = expr + val * v[r]
        return expr

    cons = list(cones)
    for sense, rhs, trips in constraints:
        lhs = linear(trips)
        cons.append(lhs <= rhs if sense == "le" else lhs >= rhs if sense == "ge" else lhs == rhs)
    prob = cp.Problem(cp.Minimize(linear(objective)), cons)
    prob.solve(solver=args.solver)
    print(prob.status, prob.value)


if __name__ == "__main__":
    main()
