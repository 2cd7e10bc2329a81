"""Design-matrix construction.

Turns a resolved TermSet plus a DataTable into the common-effects matrix X
and the group-effects matrix Z.  Categorical factors are coded with the
lattice redundancy algorithm so the result is structurally full rank:
each term expands over the subsets of its categorical factors, subsets
already spanned by earlier terms are skipped, and remaining subsets are
greedily collapsed into full (indicator) codings.  Only reference-level
(drop-first) contrasts are used.

Numeric predictors wrapped in scale()/center() are stateful: the training
build records the mean/sd once and replays them for any later dataset.
When the model has an intercept, every non-intercept column of X is
centered and the pre-centering column means are kept for reporting and
prediction.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DesignError
from .formula import Term
from .tabular import CategoricalColumn, NumericColumn

RANK_RTOL = 1e-8


@dataclass
class TransformState:
    """Stored statistics for stateful column transforms (scale/center)."""

    entries: dict = field(default_factory=dict)  # "scale(x)" -> (kind, mean, sd)
    frozen: bool = False

    def fit_or_replay(self, key, kind, values):
        if self.frozen:
            if key not in self.entries:
                raise DesignError(f"transform {key!r} was never fitted")
            _, mean, sd = self.entries[key]
        else:
            if key in self.entries:
                _, mean, sd = self.entries[key]
            else:
                mean = float(np.mean(values))
                sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
                if kind == "scale" and sd <= 0:
                    raise DesignError(f"cannot scale zero-variance column in {key!r}")
                self.entries[key] = (kind, mean, sd)
        if kind == "scale":
            return (values - mean) / sd
        return values - mean


@dataclass
class ResponseInfo:
    name: str
    values: np.ndarray | None
    kind: str  # numeric | bernoulli | binomial
    success_level: str | None = None
    trials: np.ndarray | None = None


@dataclass
class GroupBlock:
    """One (expr | factor) block of Z."""

    factor: str
    levels: list
    expr_names: list  # e.g. ["1", "x"]
    expr_sds: list  # sample sd of each expr column (augmented prior rule)
    sd_names: list  # "1|g", "x|g", ...
    u_names: list  # flat coefficient names, level fastest
    z_start: int
    z_stop: int

    @property
    def n_levels(self):
        return len(self.levels)


@dataclass
class DesignMatrices:
    X: np.ndarray
    x_names: list
    column_means: np.ndarray  # pre-centering means of X columns
    Z: np.ndarray
    z_names: list
    groups: list
    response: ResponseInfo
    has_intercept: bool
    centered: bool
    levels: dict  # variable -> level list used for encoding
    term_columns: dict  # term/entry name -> owned column or prior-entry names
    n_obs: int

    def uncentered_X(self):
        if not self.centered:
            return self.X
        out = self.X + self.column_means[None, :]
        if self.has_intercept:
            out[:, 0] = 1.0
        return out


# ---------------------------------------------------------------------------
# Factor evaluation
# ---------------------------------------------------------------------------


def _format_level(value):
    return f"{value:g}"


def _column_values(data, name, context):
    if name not in data:
        raise DesignError(f"variable {name!r} ({context}) not found in the data")
    return data[name]


def _require_complete(values, name):
    if np.isnan(values).any():
        raise DesignError(
            f"variable {name!r} has missing values; drop incomplete rows first"
        )


def _numeric_values(data, name, context):
    col = _column_values(data, name, context)
    if not col.is_numeric:
        raise DesignError(f"variable {name!r} ({context}) must be numeric")
    values = col.values.astype(np.float64)
    _require_complete(values, name)
    return values


def _categorical_codes(data, name, levels_ref):
    """Return (levels, codes); numeric columns are coerced to categorical."""
    col = _column_values(data, name, "categorical factor")
    if col.is_numeric:
        _require_complete(col.values, name)
        strings = [_format_level(v) for v in col.values]
    else:
        if col.missing_mask().any():
            raise DesignError(
                f"variable {name!r} has missing values; drop incomplete rows first"
            )
        strings = [col.levels[c] for c in col.codes]
    if levels_ref is None:
        levels = sorted(set(strings))
    else:
        levels = levels_ref
        unseen = sorted(set(strings) - set(levels))
        if unseen:
            raise DesignError(
                f"variable {name!r} has level(s) {unseen} not present in the "
                "training data"
            )
    index = {lev: i for i, lev in enumerate(levels)}
    codes = np.array([index[s] for s in strings], dtype=np.int64)
    return levels, codes


def _eval_arith(node, data):
    from .formula import Arith, Literal, Variable

    if isinstance(node, Variable):
        return _numeric_values(data, node.name, "arithmetic block")
    if isinstance(node, Literal):
        return float(node.value)
    if isinstance(node, Arith):
        left = _eval_arith(node.left, data)
        right = _eval_arith(node.right, data)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            return left / right
        if node.op == "**":
            return left ** right
    raise DesignError("malformed arithmetic block")


def _eval_component(comp, data, state, levels):
    """Evaluate one term component to ('num', values) or ('cat', levels, codes)."""
    if comp.kind == "var":
        col = _column_values(data, comp.var, "model term")
        if col.is_numeric:
            values = col.values.astype(np.float64)
            _require_complete(values, comp.var)
            return ("num", values)
        ref = levels.get(comp.var)
        levs, codes = _categorical_codes(data, comp.var, ref)
        levels.setdefault(comp.var, levs)
        return ("cat", levs, codes)
    if comp.kind == "call":
        values = _numeric_values(data, comp.var, f"{comp.name}")
        kind = comp.name.split("(", 1)[0]
        return ("num", state.fit_or_replay(comp.name, kind, values))
    if comp.kind == "brace":
        values = _eval_arith(comp.expr, data)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 0:
            raise DesignError(f"{comp.name} does not involve any data column")
        if not np.all(np.isfinite(values)):
            raise DesignError(f"{comp.name} produced non-finite values")
        return ("num", values)
    raise DesignError(f"cannot evaluate component {comp.name!r}")


# ---------------------------------------------------------------------------
# Lattice coding
# ---------------------------------------------------------------------------


def encode_term(term, factors, spanned, n_obs):
    """Encode one term given its evaluated factors and the spanned-subterm set.

    Returns (columns, names) and marks newly covered lattice subterms in
    ``spanned``.  Keys pair the term's numeric signature with a subset of its
    categorical factors, so terms with different numeric parts never shadow
    each other.
    """
    num_positions = [i for i, f in enumerate(factors) if f[0] == "num"]
    cat_positions = [i for i, f in enumerate(factors) if f[0] == "cat"]
    num_key = tuple(term.components[i].name for i in num_positions)

    numeric_prod = np.ones(n_obs)
    for i in num_positions:
        numeric_prod = numeric_prod * factors[i][1]

    needed = []
    for size in range(len(cat_positions) + 1):
        for combo in itertools.combinations(cat_positions, size):
            key = (num_key, frozenset(term.components[i].name for i in combo))
            if key not in spanned:
                spanned.add(key)
                needed.append({i: False for i in combo})
    _simplify_subterms(needed)

    columns, names = [], []
    for subterm in needed:
        cols, nms = _subterm_columns(term, factors, subterm, num_positions, numeric_prod)
        columns.extend(cols)
        names.extend(nms)
    return columns, names


def _simplify_subterms(subterms):
    """Greedily absorb subset codings into full codings of one more factor."""
    changed = True
    while changed:
        changed = False
        for short in sorted(subterms, key=len):
            for long in subterms:
                if len(long) != len(short) + 1:
                    continue
                if not all(k in long and long[k] == v for k, v in short.items()):
                    continue
                extra = [k for k in long if k not in short]
                long[extra[0]] = True
                subterms.remove(short)
                changed = True
                break
            if changed:
                break
    return subterms


def _subterm_columns(term, factors, subterm, num_positions, numeric_prod):
    choice_lists = []  # per displayed component: list of (column, name piece)
    for i, comp in enumerate(term.components):
        if i in num_positions:
            continue
        if i not in subterm:
            continue
        _, levs, codes = factors[i]
        start = 0 if subterm[i] else 1  # full vs drop-first coding
        choices = []
        for j in range(start, len(levs)):
            indicator = (codes == j).astype(np.float64)
            choices.append((indicator, f"{comp.name}[{levs[j]}]"))
        choice_lists.append(choices)

    base_pieces = [term.components[i].name for i in num_positions]
    if not choice_lists:
        name = ":".join(base_pieces) if base_pieces else "Intercept"
        return [numeric_prod.copy()], [name]

    columns, names = [], []
    for combo in itertools.product(*choice_lists):
        col = numeric_prod.copy()
        pieces = list(base_pieces)
        for indicator, piece in combo:
            col = col * indicator
            pieces.append(piece)
        columns.append(col)
        names.append(":".join(pieces))
    return columns, names


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------


def _numerical_rank(X):
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * s[0]))


def build_design(terms, data, family, state=None, levels_ref=None, check_rank=True,
                 response_ref=None):
    """Build design matrices on training data.

    Returns ``(DesignMatrices, TransformState)``.  X is centered (except the
    leading ones column) whenever the model has an intercept.
    """
    state = state if state is not None else TransformState()
    levels = {} if levels_ref is None else dict(levels_ref)
    n = data.n_rows

    if response_ref is None:
        response = _build_response(terms.response, data, family)
    else:
        response = _replay_response(terms.response, data, response_ref)

    spanned = set()
    columns, names = [], []
    term_columns = {}
    if terms.has_intercept:
        cols, nms = encode_term(Term(()), [], spanned, n)
        columns.extend(cols)
        names.extend(nms)
        term_columns["Intercept"] = ["Intercept"]
    for term in terms.common:
        factors = [_eval_component(c, data, state, levels) for c in term.components]
        cols, nms = encode_term(term, factors, spanned, n)
        columns.extend(cols)
        names.extend(nms)
        term_columns[term.name] = list(nms)

    X = np.column_stack(columns) if columns else np.empty((n, 0))
    column_means = X.mean(axis=0) if X.size else np.zeros(X.shape[1])
    centered = False
    if terms.has_intercept and X.shape[1] > 1:
        X = X.copy()
        X[:, 1:] -= column_means[1:]
        centered = True

    z_parts, z_names, groups = [], [], []
    z_offset = 0
    for gterm in terms.group:
        block_cols, block_names, block = build_group_block(
            gterm, data, state, levels, z_offset
        )
        z_parts.extend(block_cols)
        z_names.extend(block_names)
        groups.append(block)
        z_offset += len(block_cols)
        for sd_name in block.sd_names:
            term_columns[sd_name] = [sd_name]
    Z = np.column_stack(z_parts) if z_parts else np.empty((n, 0))

    if check_rank and X.shape[1]:
        rank = _numerical_rank(X)
        if rank < X.shape[1]:
            raise DesignError(
                f"design matrix X is rank deficient ({rank} < {X.shape[1]} columns); "
                "the model terms are numerically redundant"
            )

    dm = DesignMatrices(
        X=X,
        x_names=names,
        column_means=column_means,
        Z=Z,
        z_names=z_names,
        groups=groups,
        response=response,
        has_intercept=terms.has_intercept,
        centered=centered,
        levels=levels,
        term_columns=term_columns,
        n_obs=n,
    )
    return dm, state


def _replay_response(resp, data, reference):
    """Response info for a prediction build; only trials are ever needed."""
    trials = None
    if reference.kind == "binomial" and resp.prop is not None:
        t_name = resp.prop[1]
        if t_name in data:
            trials = _numeric_values(data, t_name, "binomial trials")
    return ResponseInfo(
        name=reference.name,
        values=None,
        kind=reference.kind,
        success_level=reference.success_level,
        trials=trials,
    )


def _build_response(resp, data, family):
    if resp.prop is not None:
        s_name, t_name = resp.prop
        if family.name != "binomial":
            raise DesignError("prop(successes, trials) responses need the binomial family")
        successes = _numeric_values(data, s_name, "binomial successes")
        trials_vals = _numeric_values(data, t_name, "binomial trials")
        return ResponseInfo(
            name=resp.name, values=successes, kind="binomial", trials=trials_vals
        )
    if resp.name not in data:
        raise DesignError(f"response variable {resp.name!r} not found in the data")
    col = data[resp.name]
    if family.name == "binomial":
        raise DesignError("the binomial family needs a prop(successes, trials) response")
    if col.is_numeric:
        values = col.values.astype(np.float64)
        _require_complete(values, resp.name)
        if resp.level is not None:
            raise DesignError(
                f"response level [{resp.level}] only applies to categorical responses"
            )
        kind = "bernoulli" if family.name == "bernoulli" else "numeric"
        return ResponseInfo(name=resp.name, values=values, kind=kind)
    # categorical response
    if family.name != "bernoulli":
        raise DesignError(
            f"categorical response {resp.name!r} cannot be used with the "
            f"{family.name!r} family"
        )
    if col.missing_mask().any():
        raise DesignError(
            f"response {resp.name!r} has missing values; drop incomplete rows first"
        )
    level = resp.level if resp.level is not None else col.levels[0]
    if level not in col.levels:
        raise DesignError(
            f"response level {level!r} not found in {resp.name!r}; observed "
            f"levels: {col.levels}"
        )
    success_code = col.levels.index(level)
    values = (col.codes == success_code).astype(np.float64)
    return ResponseInfo(
        name=resp.name, values=values, kind="bernoulli", success_level=level
    )


def build_group_block(gterm, data, state, levels, z_offset):
    """Row-wise Kronecker block for one (expr | factor) group term."""
    ref = levels.get(gterm.factor)
    g_levels, g_codes = _categorical_codes(data, gterm.factor, ref)
    levels.setdefault(gterm.factor, g_levels)
    if len(g_levels) < 2 and ref is None:
        raise DesignError(
            f"grouping factor {gterm.factor!r} has a single level; a group term "
            "needs at least two"
        )
    n = len(g_codes)

    spanned = set()
    expr_cols, expr_names = [], []
    if gterm.expr_intercept:
        cols, _ = encode_term(Term(()), [], spanned, n)
        expr_cols.extend(cols)
        expr_names.append("1")
    for term in gterm.expr_terms:
        factors = [_eval_component(c, data, state, levels) for c in term.components]
        cols, nms = encode_term(term, factors, spanned, n)
        expr_cols.extend(cols)
        expr_names.extend(nms)
    if not expr_cols:
        raise DesignError(f"group term ({gterm.name}) has an empty left-hand side")

    columns, names = [], []
    expr_sds = []
    for e_col, e_name in zip(expr_cols, expr_names):
        expr_sds.append(float(np.std(e_col, ddof=1)) if n > 1 else 0.0)
        for j, level in enumerate(g_levels):
            columns.append(e_col * (g_codes == j))
            names.append(f"{e_name}|{gterm.factor}[{level}]")

    block = GroupBlock(
        factor=gterm.factor,
        levels=g_levels,
        expr_names=expr_names,
        expr_sds=expr_sds,
        sd_names=[f"{e}|{gterm.factor}" for e in expr_names],
        u_names=list(names),
        z_start=z_offset,
        z_stop=z_offset + len(columns),
    )
    return columns, names, block


def apply_transforms(new_data, state):
    """Replay fitted scale/center transforms on new data."""
    if not state.entries:
        return {}
    out = {}
    for key, (kind, mean, sd) in state.entries.items():
        var = key.split("(", 1)[1].rstrip(")")
        values = _numeric_values(new_data, var, key)
        out[key] = (values - mean) / sd if kind == "scale" else values - mean
    return out


def build_for_prediction(terms, new_data, state, reference):
    """Design matrices for new data, aligned with a training build.

    Categorical columns are encoded against the training level sets, stateful
    transforms replay the stored statistics, and X is returned uncentered so
    it composes directly with reported coefficients.
    """
    frozen = TransformState(entries=dict(state.entries), frozen=True)
    dm, _ = build_design(
        terms,
        new_data,
        None,
        state=frozen,
        levels_ref=reference.levels,
        check_rank=False,
        response_ref=reference.response,
    )
    if dm.x_names != reference.x_names or dm.z_names != reference.z_names:
        raise DesignError(
            "prediction design does not align with the training design; "
            f"expected columns {reference.x_names}, got {dm.x_names}"
        )
    out = DesignMatrices(
        X=dm.uncentered_X(),
        x_names=dm.x_names,
        column_means=reference.column_means,
        Z=dm.Z,
        z_names=dm.z_names,
        groups=dm.groups,
        response=dm.response,
        has_intercept=dm.has_intercept,
        centered=False,
        levels=reference.levels,
        term_columns=dm.term_columns,
        n_obs=dm.n_obs,
    )
    return out


def dump_design(dm, x_path, z_path=None):
    """Debug dump of X (and optionally Z) with column names as CSV."""
    _write_matrix(x_path, dm.X, dm.x_names)
    if z_path is not None and dm.Z.shape[1]:
        _write_matrix(z_path, dm.Z, dm.z_names)


def _write_matrix(path, matrix, names):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join(names) + "\n")
        for row in matrix:
            handle.write(",".join(repr(float(v)) for v in row) + "\n")
