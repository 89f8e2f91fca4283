import itertools

import numpy as np
import pytest

from maasgame.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    residuals,
    solve_lp,
    warm_resolve,
)

TOL = 1e-7


def vertex_enumeration_optimum(c, A, rels, b, minimize=True):
    """Independent oracle: enumerate basic feasible points of
    {x >= 0, A x rel b} by solving all square subsystems of the
    inequality-to-equality closures, keep the feasible ones, and take the
    best objective. Only viable for tiny instances."""
    m, n = A.shape
    # rows as <=: flip >= rows; equalities kept as two-sided
    rows = []
    for i in range(m):
        if rels[i] == "<=":
            rows.append((A[i], b[i], False))
        elif rels[i] == ">=":
            rows.append((-A[i], -b[i], False))
        else:
            rows.append((A[i], b[i], True))
    # candidate active sets: n constraints chosen among rows + nonnegativity
    cons = [(r[0], r[1]) for r in rows] + [
        (np.eye(n)[j], 0.0) for j in range(n)
    ]
    best = None
    for active in itertools.combinations(range(len(cons)), n):
        M = np.array([cons[i][0] for i in active])
        rhs = np.array([cons[i][1] for i in active])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, rhs)
        if np.any(x < -1e-9):
            continue
        ok = True
        for lhs, rhs_i, is_eq in rows:
            val = lhs @ x
            if is_eq and abs(val - rhs_i) > 1e-8:
                ok = False
                break
            if not is_eq and val > rhs_i + 1e-8:
                ok = False
                break
        if not ok:
            continue
        obj = float(c @ x)
        if best is None or (obj < best if minimize else obj > best):
            best = obj
    return best


def build(c, A, rels, b, minimize=True):
    lp = LinearProgram(minimize=minimize)
    for j, cj in enumerate(c):
        lp.add_variable(f"x{j}", obj=cj)
    for i in range(len(b)):
        lp.add_constraint({j: A[i, j] for j in range(len(c))}, rels[i], b[i])
    return lp


def test_min_with_lower_bound_row():
    lp = LinearProgram()
    lp.add_variable("x", obj=1.0)
    lp.add_constraint({"x": 1.0}, ">=", 3.0)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value(lp, "x") == pytest.approx(3.0, abs=TOL)
    assert sol.objective == pytest.approx(3.0, abs=TOL)


def test_infeasible_bounds():
    lp = LinearProgram(minimize=False)
    lp.add_variable("u", obj=1.0)
    lp.add_constraint({"u": 1.0}, "<=", 5.0)
    lp.add_constraint({"u": 1.0}, ">=", 7.0)
    assert solve_lp(lp).status == INFEASIBLE


def test_unbounded():
    lp = LinearProgram(minimize=False)
    lp.add_variable("x", obj=1.0)
    lp.add_constraint({"x": -1.0}, "<=", 0.0)
    assert solve_lp(lp).status == UNBOUNDED


def test_equalities_and_max():
    lp = LinearProgram(minimize=False)
    lp.add_variable("a", obj=2.0)
    lp.add_variable("b", obj=1.0)
    lp.add_constraint({"a": 1.0, "b": 1.0}, "=", 4.0)
    lp.add_constraint({"a": 1.0}, "<=", 3.0)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value(lp, "a") == pytest.approx(3.0, abs=TOL)
    assert sol.objective == pytest.approx(7.0, abs=TOL)


def test_variable_bounds_and_shift():
    lp = LinearProgram()
    lp.add_variable("x", obj=1.0, lb=2.0, ub=10.0)
    lp.add_variable("y", obj=-1.0, ub=4.0)
    lp.add_constraint({"x": 1.0, "y": 1.0}, ">=", 5.0)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value(lp, "x") == pytest.approx(2.0, abs=TOL)
    assert sol.value(lp, "y") == pytest.approx(4.0, abs=TOL)
    assert sol.objective == pytest.approx(-2.0, abs=TOL)


def test_random_lps_match_vertex_enumeration_oracle():
    rng = np.random.RandomState(7)
    checked = 0
    for trial in range(40):
        m, n = 5, 8
        A = np.round(rng.uniform(-2, 3, size=(m, n)), 2)
        b = np.round(rng.uniform(0.5, 6, size=m), 2)
        c = np.round(rng.uniform(-3, 3, size=n), 2)
        rels = ["<="] * m
        # bounding box keeps every instance bounded for the oracle
        A[-1] = np.ones(n)
        b[-1] = 20.0
        # mixed senses on a few rows keeps phase 1 honest
        if trial % 3 == 0:
            rels[0] = ">="
            b[0] = round(rng.uniform(0.0, 0.4), 2)
        lp = build(c, A, rels, b)
        sol = solve_lp(lp)
        oracle = vertex_enumeration_optimum(c, A, rels, b)
        if oracle is None:
            assert sol.status == INFEASIBLE
            continue
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(oracle, abs=1e-7)
        assert residuals(lp, sol.x) <= TOL
        checked += 1
    assert checked >= 20


def test_determinism_same_objective_to_1e9():
    rng = np.random.RandomState(3)
    A = rng.uniform(-1, 2, size=(6, 9))
    b = rng.uniform(1, 4, size=6)
    c = rng.uniform(-2, 2, size=9)
    objs = set()
    for _ in range(3):
        sol = solve_lp(build(c, A, ["<="] * 6, b))
        objs.add(round(sol.objective, 12))
    assert len(objs) == 1


def test_duality_spot_check():
    rng = np.random.RandomState(11)
    for _ in range(10):
        A = rng.uniform(0.1, 2, size=(4, 6))
        b = rng.uniform(1, 5, size=4)
        c = rng.uniform(0.1, 3, size=6)
        lp = build(-c, A, ["<="] * 4, b, minimize=False)  # max -c: keep it feasible/bounded
        sol = solve_lp(lp)
        assert sol.status == OPTIMAL
        assert sol.dual_objective() == pytest.approx(sol.objective, abs=1e-6)


def test_warm_resolve_nonbinding_row_unchanged():
    lp = LinearProgram(minimize=False)
    lp.add_variable("x", obj=1.0)
    lp.add_constraint({"x": 1.0}, "<=", 5.0)
    sol = solve_lp(lp)
    sol2 = warm_resolve(lp, [({"x": 1.0}, "<=", 9.0)], sol)
    assert sol2.status == OPTIMAL
    assert sol2.objective == pytest.approx(sol.objective, abs=TOL)
    assert sol2.value(lp, "x") == pytest.approx(5.0, abs=TOL)


def test_warm_resolve_violated_row_weakly_worsens():
    lp = LinearProgram(minimize=False)
    lp.add_variable("x", obj=1.0)
    lp.add_variable("y", obj=1.0)
    lp.add_constraint({"x": 1.0, "y": 1.0}, "<=", 10.0)
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(10.0, abs=TOL)
    sol2 = warm_resolve(lp, [({"x": 1.0}, "<=", 2.0), ({"y": 1.0}, "<=", 3.0)], sol)
    assert sol2.status == OPTIMAL
    assert sol2.objective <= sol.objective + TOL
    assert sol2.objective == pytest.approx(5.0, abs=TOL)


def test_warm_resolve_geq_rows_and_infeasible():
    lp = LinearProgram()
    lp.add_variable("x", obj=1.0)
    lp.add_constraint({"x": 1.0}, "<=", 4.0)
    sol = solve_lp(lp)
    sol2 = warm_resolve(lp, [({"x": 1.0}, ">=", 3.0)], sol)
    assert sol2.status == OPTIMAL
    assert sol2.value(lp, "x") == pytest.approx(3.0, abs=TOL)
    sol3 = warm_resolve(lp, [({"x": 1.0}, ">=", 6.0)], sol2)
    assert sol3.status == INFEASIBLE


def test_row_generation_equals_one_shot_on_random_lps():
    # acceptance criterion: 50 random LPs, row generation vs one-shot, 1e-7
    rng = np.random.RandomState(23)
    agree = 0
    for _ in range(50):
        m, n = 6, 7
        A = rng.uniform(-1, 2.5, size=(m, n))
        b = rng.uniform(1, 6, size=m)
        c = rng.uniform(-2, 2, size=n)
        one_shot = solve_lp(build(c, A, ["<="] * m, b))

        lp = build(c, A[:2], ["<="] * 2, b[:2])
        sol = solve_lp(lp)
        for i in range(2, m):
            row = ({j: A[i, j] for j in range(n)}, "<=", b[i])
            # unbounded intermediates fall back to a cold solve inside
            sol = warm_resolve(lp, [row], sol)
            if sol.status == INFEASIBLE:
                break
        assert sol.status == one_shot.status
        if sol.status == OPTIMAL:
            assert sol.objective == pytest.approx(one_shot.objective, abs=1e-7)
            assert residuals(lp, sol.x) <= TOL
            agree += 1
    assert agree >= 40  # the rest were legitimately infeasible/unbounded


def test_mps_dump_roundtrip_smoke(tmp_path):
    from maasgame.lp import dump_mps

    lp = LinearProgram()
    lp.add_variable("flow", obj=1.5, lb=1.0, ub=9.0)
    lp.add_variable("fare", obj=-2.0)
    lp.add_constraint({"flow": 1.0, "fare": 2.0}, ">=", 3.0)
    path = tmp_path / "debug.mps"
    dump_mps(lp, path)
    text = path.read_text()
    assert "ROWS" in text and "ENDATA" in text and "BOUNDS" in text
