"""Model assembly: one object tying together formula, data, family, link,
design matrices, and priors, plus the parameter layout used by the sampler
and the manifest needed to rebuild prediction designs later."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import design as design_mod
from . import priors as priors_mod
from .errors import DesignError, FamilyError, PriorError
from .families import get_family, get_link, validate_response
from .formula import collect_variables, parse_terms
from .priors import Prior, PriorSet
from .tabular import ColumnStats, DataTable, column_stats, drop_incomplete, read_csv

MANIFEST_SCHEMA = 1


@dataclass
class ParameterLayout:
    """Index bookkeeping for the unconstrained parameter vector.

    Order: common coefficients (intercept first when present), one log-SD per
    group expression column, the standardized group coefficients, then
    log-transformed auxiliaries.
    """

    n_beta: int
    n_group_sd: int
    n_u: int
    aux_names: list
    sd_index_of_u: np.ndarray  # maps each u column to its SD parameter
    names: list  # reported names, aligned with the reported draw columns

    @property
    def n_params(self):
        return self.n_beta + self.n_group_sd + self.n_u + len(self.aux_names)

    @property
    def beta_slice(self):
        return slice(0, self.n_beta)

    @property
    def sd_slice(self):
        return slice(self.n_beta, self.n_beta + self.n_group_sd)

    @property
    def u_slice(self):
        start = self.n_beta + self.n_group_sd
        return slice(start, start + self.n_u)

    @property
    def aux_slice(self):
        start = self.n_beta + self.n_group_sd + self.n_u
        return slice(start, start + len(self.aux_names))


@dataclass
class Model:
    formula: str
    terms: object
    data: DataTable
    family: object
    link: object
    design: design_mod.DesignMatrices
    transform_state: design_mod.TransformState
    priors: PriorSet
    layout: ParameterLayout
    y_stats: ColumnStats
    dropped_rows: int = 0
    prior_overrides: dict | None = None

    @property
    def n_obs(self):
        return self.design.n_obs

    def describe(self):
        return describe_model(self)

    def fit(self, draws=1000, tune=1000, chains=None, target_accept=0.8, seed=None):
        from .sampler import fit as _fit

        return _fit(self, draws=draws, tune=tune, chains=chains,
                    target_accept=target_accept, seed=seed)

    # Ordered priors for [beta..., group sds..., auxiliaries...]; the
    # standardized group coefficients are standard-normal by construction.
    def beta_priors(self):
        out = []
        if self.design.has_intercept:
            out.append(self.priors.intercept)
        out.extend(self.priors.common[name] for name in self.slope_names())
        return out

    def slope_names(self):
        names = self.design.x_names
        return names[1:] if self.design.has_intercept else list(names)

    def sd_priors(self):
        return [self.priors.group_sd[name] for name in self.sd_entry_names()]

    def sd_entry_names(self):
        names = []
        for block in self.design.groups:
            names.extend(block.sd_names)
        return names

    def aux_priors(self):
        return [self.priors.auxiliary[name] for name in self.layout.aux_names]

    def group_coef_layout(self):
        """Map each group coefficient name to its SD entry name."""
        out = {}
        for block in self.design.groups:
            for e_name, sd_name in zip(block.expr_names, block.sd_names):
                for level in block.levels:
                    out[f"{e_name}|{block.factor}[{level}]"] = sd_name
        return out


def build_model(formula, data, family="gaussian", link=None, priors=None,
                dropna=False):
    """Assemble a model from a formula and a data table (or CSV path)."""
    if isinstance(data, (str, bytes)):
        data = read_csv(data)
    terms = parse_terms(formula)
    fam = get_family(family)
    link_name = link if link is not None else fam.default_link
    if link_name not in fam.allowed_links:
        raise FamilyError(
            f"link {link_name!r} is not available for family {fam.name!r}; "
            f"choose from {fam.allowed_links}"
        )
    lnk = get_link(link_name)

    dropped = 0
    if dropna:
        present = [v for v in collect_variables(terms) if v in data]
        data, dropped = drop_incomplete(data, present)

    dm, state = design_mod.build_design(terms, data, fam)
    validate_response(fam, dm.response.values, dm.response.trials)

    y_stats = _response_stats(dm.response)
    prior_set = _default_priors(dm, fam, lnk, y_stats)
    prior_set = priors_mod.apply_overrides(prior_set, priors, dm.term_columns)
    layout = _build_layout(dm, fam)

    return Model(
        formula=formula,
        terms=terms,
        data=data,
        family=fam,
        link=lnk,
        design=dm,
        transform_state=state,
        priors=prior_set,
        layout=layout,
        y_stats=y_stats,
        dropped_rows=dropped,
        prior_overrides=priors,
    )


def _response_stats(response):
    values = response.values
    if response.kind == "binomial":
        values = response.values / response.trials
    if values.size < 2:
        raise DesignError("need at least 2 observations to derive default priors")
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1))
    return ColumnStats(mean=mean, sd=float(np.sqrt(var)), var=var)


def _default_priors(dm, family, link, y_stats):
    X_raw = dm.uncentered_X()
    slope_cols = dm.x_names[1:] if dm.has_intercept else list(dm.x_names)
    offset = 1 if dm.has_intercept else 0

    common = {}
    for j, name in enumerate(slope_cols):
        sd_x = float(np.std(X_raw[:, offset + j], ddof=1))
        common[name] = priors_mod.default_slope_prior(y_stats, sd_x, family)

    intercept = None
    if dm.has_intercept:
        means = dm.column_means[offset:]
        intercept = priors_mod.default_intercept_prior(
            y_stats, means, [common[c] for c in slope_cols], family, link
        )

    group_sd = {}
    for block in dm.groups:
        for e_name, sd_name, e_sd in zip(block.expr_names, block.sd_names,
                                         block.expr_sds):
            if e_name == "1":
                if intercept is not None:
                    source = intercept
                else:
                    source = priors_mod.default_intercept_prior(
                        y_stats, dm.column_means[offset:],
                        [common[c] for c in slope_cols], family, link,
                    )
                scale = source.params["sigma"]
            elif e_name in common:
                scale = common[e_name].params["sigma"]
            else:
                if e_sd <= 0:
                    raise PriorError(
                        f"group expression column {e_name!r} has zero variance"
                    )
                augmented = priors_mod.default_slope_prior(y_stats, e_sd, family)
                scale = augmented.params["sigma"]
            group_sd[sd_name] = priors_mod.default_group_sd_prior(scale)

    auxiliary = priors_mod.default_auxiliary_priors(family, y_stats)
    provenance = {name: "default" for name in
                  (["Intercept"] if intercept else [])
                  + list(common) + list(group_sd) + list(auxiliary)}
    return PriorSet(
        intercept=intercept,
        common=common,
        group_sd=group_sd,
        auxiliary=auxiliary,
        provenance=provenance,
    )


def _build_layout(dm, family):
    names = list(dm.x_names)
    sd_names = []
    sd_index_of_u = []
    u_names = []
    for block in dm.groups:
        for e_idx, sd_name in enumerate(block.sd_names):
            sd_names.append(sd_name + "_sigma")
            for level in block.levels:
                sd_index_of_u.append(len(sd_names) - 1)
        u_names.extend(block.u_names)
    aux_names = [name for name, _ in family.auxiliary]
    resp = dm.response.name
    reported_aux = [f"{resp}_{name}" for name in aux_names]
    return ParameterLayout(
        n_beta=len(dm.x_names),
        n_group_sd=len(sd_names),
        n_u=len(u_names),
        aux_names=aux_names,
        sd_index_of_u=np.asarray(sd_index_of_u, dtype=np.int64),
        names=names + sd_names + u_names + reported_aux,
    )


# ---------------------------------------------------------------------------
# Description block
# ---------------------------------------------------------------------------


def describe_model(model):
    """Plain-text model card: formula, family, link, size, and all priors."""
    lines = [
        f"Formula: {model.formula}",
        f"Family name: {model.family.display_name}",
        f"Link: {model.link.name}",
        f"Observations: {model.n_obs}",
        "Priors:",
        "  Common-level effects",
    ]
    if model.priors.intercept is not None:
        lines.append(f"    Intercept ~ {model.priors.intercept}")
    for name in model.slope_names():
        lines.append(f"    {name} ~ {model.priors.common[name]}")
    if model.priors.group_sd:
        lines.append("")
        lines.append("  Group-level effects")
        for name in model.sd_entry_names():
            lines.append(f"    {name}_sigma ~ {model.priors.group_sd[name]}")
    if model.priors.auxiliary:
        lines.append("")
        lines.append("  Auxiliary parameters")
        for name, prior in model.priors.auxiliary.items():
            lines.append(f"    {name} ~ {prior}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Manifest (prediction needs: levels, transforms, means, priors, names)
# ---------------------------------------------------------------------------


def to_manifest(model):
    dm = model.design
    return {
        "schema": MANIFEST_SCHEMA,
        "formula": model.formula,
        "family": model.family.name,
        "link": model.link.name,
        "n_obs": model.n_obs,
        "dropped_rows": model.dropped_rows,
        "response": {
            "name": dm.response.name,
            "kind": dm.response.kind,
            "success_level": dm.response.success_level,
        },
        "levels": dm.levels,
        "transforms": {k: list(v) for k, v in model.transform_state.entries.items()},
        "column_means": [float(v) for v in dm.column_means],
        "x_names": dm.x_names,
        "z_names": dm.z_names,
        "param_names": model.layout.names,
        "priors": {k: v.to_dict() for k, v in model.priors.all_entries().items()},
        "prior_overrides": _serialize_overrides(model.prior_overrides),
    }


def _serialize_overrides(overrides):
    if overrides is None:
        return None
    out = {}
    for key, value in overrides.items():
        if key == "terms":
            out[key] = {
                name: (v.to_dict() if isinstance(v, Prior) else v)
                for name, v in value.items()
            }
        else:
            out[key] = value.to_dict() if isinstance(value, Prior) else value
    return out


def from_manifest(manifest, training_data):
    """Rebuild a model from a manifest plus the stored training table."""
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise DesignError(
            f"unsupported manifest schema {manifest.get('schema')!r}; expected "
            f"{MANIFEST_SCHEMA}"
        )
    model = build_model(
        manifest["formula"],
        training_data,
        family=manifest["family"],
        link=manifest["link"],
        priors=manifest.get("prior_overrides"),
    )
    if model.layout.names != manifest["param_names"]:
        raise DesignError(
            "rebuilt model does not match the manifest: parameter names differ "
            f"({model.layout.names} vs {manifest['param_names']})"
        )
    if model.design.x_names != manifest["x_names"]:
        raise DesignError("rebuilt model does not match the manifest: X columns differ")
    return model


def write_manifest(model, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(to_manifest(model), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
