"""Shared synthetic-data and random-formula generators for the test suite."""

import itertools

import numpy as np

from glmmkit import DataTable, build_design, get_family, parse_terms

LETTERS = "abcdefghijklmnopqrstuvwxyz"


def make_table(n, n_cat=2, n_num=2, max_levels=4, seed=0, with_y=True):
    """A synthetic table with categorical columns c1.. and numeric x1..."""
    rng = np.random.default_rng(seed)
    cols = {}
    if with_y:
        cols["y"] = rng.normal(size=n)
    for i in range(n_cat):
        n_lev = int(rng.integers(2, max_levels + 1))
        levels = [f"l{j}" for j in range(n_lev)]
        # make sure every level is observed
        codes = np.concatenate([np.arange(n_lev), rng.integers(0, n_lev, size=n - n_lev)])
        rng.shuffle(codes)
        cols[f"c{i + 1}"] = [levels[j] for j in codes]
    for i in range(n_num):
        cols[f"x{i + 1}"] = rng.normal(size=n)
    return DataTable.from_dict(cols)


def random_formula(rng, n_cat=2, n_num=2, max_terms=5, max_order=3):
    """Random additive formula over c*/x* columns, possibly without intercept."""
    factors = [f"c{i + 1}" for i in range(n_cat)] + [f"x{i + 1}" for i in range(n_num)]
    n_terms = int(rng.integers(1, max_terms + 1))
    terms = []
    for _ in range(n_terms):
        order = int(rng.integers(1, max_order + 1))
        pick = rng.choice(factors, size=min(order, len(factors)), replace=False)
        terms.append(":".join(pick))
    rhs = " + ".join(terms)
    if rng.uniform() < 0.2:
        rhs = "0 + " + rhs
    return "y ~ " + rhs


def design_for(formula, table, family="gaussian"):
    terms = parse_terms(formula)
    dm, state = build_design(terms, table, get_family(family))
    return dm, state


def full_coding_rank(termset, table):
    """Rank of the (overcomplete) all-full-indicator design: the target span."""
    columns = []
    if termset.has_intercept:
        columns.append(np.ones(table.n_rows))
    for term in termset.common:
        pieces = []
        for comp in term.components:
            col = table[comp.var if comp.var else comp.name]
            if col.is_numeric:
                pieces.append([col.values])
            else:
                pieces.append([
                    (col.codes == j).astype(float) for j in range(len(col.levels))
                ])
        for combo in itertools.product(*pieces):
            out = np.ones(table.n_rows)
            for piece in combo:
                out = out * piece
            columns.append(out)
    X = np.column_stack(columns)
    s = np.linalg.svd(X, compute_uv=False)
    return int(np.sum(s > 1e-8 * s[0]))


def numerical_rank(X):
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    return int(np.sum(s > 1e-8 * s[0]))
