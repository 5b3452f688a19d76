//! Subcommand implementations. Each takes the validated configuration and
//! writes its files through [`Output`].

use pcp_core::data::{partition, split, Dataset, Encoder, GroupScheme};
use pcp_core::functionals::{group_estimates, per_obs_stats, summarize, EstimateKind, PerObsStats, StatisticKind};
use pcp_core::inference::{
    intersection_test_levels, median, sorted_groups_run, NormalDraws, Selection, SortedGroupsConfig, P_VALUE_CONVENTION,
};
use pcp_core::learners::hyperopt::{describe, hyperopt_network, hyperopt_trees, HyperoptOutcome, TreeSearch};
use pcp_core::learners::{
    cross_entropy_loss, cross_fit_predict, feature_group_importance, impurity_importance, nominal_parameter_count,
    train_learner, ClassifierModel, LearnerConfig, Target,
};
use pcp_core::rng::{derive_seed, tags};
use pcp_core::synth::{GroundTruth, SyntheticDgp};
use pcp_core::{Error, ProbQuad, Result};

use crate::config::{LearnerArg, RunConfig, SelectionMode};
use crate::figures::{five_numbers, gaussian_kde};
use crate::output::{Cell, Output, Table};

pub fn load_dgp(cfg: &RunConfig) -> Result<SyntheticDgp> {
    match &cfg.data.dgp {
        Some(p) => SyntheticDgp::load(p),
        None => Ok(SyntheticDgp::insurance_default()),
    }
}

/// The dataset named in the config, or a simulated one with its truth.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<GroundTruth>)> {
    match &cfg.data.dataset {
        Some(path) => {
            let schema = match &cfg.data.schema {
                Some(s) => pcp_core::data::CategoricalSchema::load(s)?,
                None => pcp_core::data::CategoricalSchema::default_insurance(),
            };
            Ok((Dataset::load_csv(path, &schema)?, None))
        }
        None => {
            let (d, gt) = load_dgp(cfg)?.sample_dataset(cfg.data.n, derive_seed(cfg.seed, tags::SAMPLE, 0))?;
            Ok((d, Some(gt)))
        }
    }
}

fn opt_num(v: Option<f64>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::Num)
}

fn opt_int(v: Option<usize>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::from)
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / weights.iter().sum::<f64>()
}

pub fn simulate(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let dgp = load_dgp(cfg)?;
    let (d, gt) = dgp.sample_dataset(cfg.data.n, derive_seed(cfg.seed, tags::SAMPLE, 0))?;
    out.mark("sample");
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    out.write("data.csv", &buf)?;
    let mut buf = Vec::new();
    gt.write_csv(d.schema(), &mut buf)?;
    out.write("truth.csv", &buf)?;
    out.write("schema.toml", d.schema().to_toml_string()?.as_bytes())?;
    out.write("dgp.toml", dgp.to_toml_string()?.as_bytes())?;

    let truth = gt.per_record(&d)?;
    let w = d.weights();
    let shares = d.class_frequencies();
    let mut t = Table::new(&["quantity", "value"]);
    t.push(vec!["records".into(), d.len().into()]);
    t.push(vec!["total weight".into(), d.total_weight().into()]);
    for (k, name) in [
        "share (c=0, r=0)",
        "share (c=0, r=1)",
        "share (c=1, r=0)",
        "share (c=1, r=1)",
    ]
    .iter()
    .enumerate()
    {
        t.push(vec![(*name).into(), shares[k].into()]);
    }
    t.push(vec!["distinct cells".into(), gt.cells.len().into()]);
    let cov: Vec<f64> = truth.iter().map(|c| c.cov).collect();
    let rho: Vec<f64> = truth.iter().map(|c| c.rho).collect();
    t.push(vec!["mean true covariance".into(), weighted_mean(&cov, &w).into()]);
    t.push(vec!["mean true correlation".into(), weighted_mean(&rho, &w).into()]);
    out.table("simulate", &t)
}

fn hyperopt_table(outcome: &HyperoptOutcome, n_inputs: usize) -> Table {
    let mut t = Table::new(&[
        "candidate",
        "kind",
        "config",
        "parameters",
        "nominal_parameters",
        "validation_loss",
        "test_loss",
        "epochs",
        "selected",
    ]);
    for (i, c) in outcome.report.candidates.iter().enumerate() {
        t.push(vec![
            i.into(),
            c.config.kind().to_string().into(),
            describe(&c.config).into(),
            c.parameters.into(),
            match &c.config {
                LearnerConfig::Network(n) => nominal_parameter_count(n, n_inputs).into(),
                _ => Cell::Text(String::new()),
            },
            opt_num(c.validation_loss),
            c.test_loss.into(),
            opt_int(c.epochs),
            (i == outcome.report.selected).into(),
        ]);
    }
    t
}

pub fn hyperopt(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (d, _) = load_data(cfg)?;
    out.mark("data");
    let outcome = match cfg.learner_config(cfg.learner) {
        LearnerConfig::Network(base) => hyperopt_network(&d, &cfg.hyperopt.grid, &cfg.split_plan(), &base)?,
        tree => {
            let candidates = match &tree {
                LearnerConfig::Forest(base) => cfg.hyperopt.forest_grid.forest_candidates(base),
                LearnerConfig::Boosted(base) => cfg.hyperopt.boosted_grid.boosted_candidates(base),
                LearnerConfig::Network(_) => unreachable!(),
            };
            let search = TreeSearch {
                seed: derive_seed(cfg.seed, tags::SPLIT, 0),
                ..cfg.hyperopt.tree_search
            };
            hyperopt_trees(&d, &candidates, &search)?
        }
    };
    out.mark("search");
    out.table("hyperopt", &hyperopt_table(&outcome, Encoder::new(d.schema()).width()))?;
    out.write(
        "selected.toml",
        toml::to_string(&outcome.report.best().config)?.as_bytes(),
    )?;
    out.write("selected_model.json", outcome.model.to_json()?.as_bytes())
}

pub fn fit(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (d, _) = load_data(cfg)?;
    let (train, validation, test) = split(&d, &cfg.split_plan())?;
    let encoder = Encoder::new(d.schema());
    let model = train_learner(
        &cfg.learner_config(cfg.learner),
        &train,
        Some(&validation),
        &encoder,
        Target::Joint,
    )?;
    let constant = ClassifierModel::constant(&train, Target::Joint);
    out.mark("train");
    let mut t = Table::new(&["part", "records", "loss", "constant_loss"]);
    for (name, part) in [("train", &train), ("validation", &validation), ("test", &test)] {
        t.push(vec![
            name.into(),
            part.len().into(),
            cross_entropy_loss(&model, part)?.into(),
            cross_entropy_loss(&constant, part)?.into(),
        ]);
    }
    out.table("fit", &t)?;
    if let Some(report) = &model.report {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        out.write("training.csv", &buf)?;
    }
    out.write("model.json", model.to_json()?.as_bytes())
}

fn scheme_labels(scheme: &GroupScheme, groups: usize) -> (String, String) {
    match scheme {
        GroupScheme::ByModality { feature } => (feature.clone(), format!("each modality (L={groups})")),
        GroupScheme::ByQuartile { feature } => (feature.clone(), format!("quartiles (L={groups})")),
        GroupScheme::ByValue { .. } => ("value".into(), format!("value groups (L={groups})")),
    }
}

fn estimate_kinds(statistic: StatisticKind, with_naive: bool) -> Vec<EstimateKind> {
    match (statistic, with_naive) {
        (StatisticKind::Covariance, _) => vec![EstimateKind::Covariance],
        (StatisticKind::Correlation, true) => vec![EstimateKind::NaiveCorrelation, EstimateKind::DebiasedCorrelation],
        (StatisticKind::Correlation, false) => vec![EstimateKind::DebiasedCorrelation],
    }
}

fn cross_fitted_quads(cfg: &RunConfig, d: &Dataset) -> Result<Vec<ProbQuad>> {
    let folds = pcp_core::data::make_folds(d, cfg.estimate.folds, derive_seed(cfg.seed, tags::FOLDS, 0))?;
    cross_fit_predict(d, &cfg.learner_config(cfg.learner), &folds)
}

/// Values of `kind` with their weights and a mask of usable records.
fn statistic_values(stats: &[PerObsStats], kind: StatisticKind) -> Vec<Option<f64>> {
    stats
        .iter()
        .map(|s| match kind {
            StatisticKind::Correlation if s.degenerate => None,
            _ => Some(s.statistic(kind)),
        })
        .collect()
}

fn group_table(d: &Dataset, quads: &[ProbQuad], cfg: &RunConfig, with_naive: bool) -> Result<Table> {
    let mut t = Table::new(&[
        "scheme",
        "modalities",
        "estimator",
        "group",
        "estimate",
        "se",
        "records",
        "effective_size",
    ]);
    for scheme in &cfg.intersection.schemes {
        let groups = partition(d, scheme)?;
        let (name, modalities) = scheme_labels(scheme, groups.len());
        for statistic in cfg.statistics() {
            for kind in estimate_kinds(statistic, with_naive) {
                for e in group_estimates(d, quads, &groups, kind)? {
                    t.push(vec![
                        name.clone().into(),
                        modalities.clone().into(),
                        kind.to_string().into(),
                        e.label.into(),
                        e.estimate.into(),
                        e.se.into(),
                        e.n.into(),
                        e.effective_size.into(),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

pub fn estimate(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (d, _) = load_data(cfg)?;
    let encoder = Encoder::new(d.schema());
    let raw_model = train_learner(&cfg.learner_config(cfg.learner), &d, None, &encoder, Target::Joint)?;
    let raw = per_obs_stats(&raw_model.predict_quads(&d)?);
    out.mark("raw fit");
    let cf_quads = cross_fitted_quads(cfg, &d)?;
    let cf = per_obs_stats(&cf_quads);
    out.mark("cross-fit");
    let weights = d.weights();
    let statistics = cfg.statistics();

    let mut per_obs = Table::new(&[
        "record",
        "estimate",
        "p00",
        "p01",
        "p10",
        "p11",
        "covariance",
        "correlation",
    ]);
    for (label, stats) in [("raw", &raw), ("cross-fitted", &cf)] {
        for (i, s) in stats.iter().enumerate() {
            let mut row: Vec<Cell> = vec![i.into(), label.into()];
            row.extend(s.quad.to_array().iter().map(|v| Cell::Num(*v)));
            row.push(s.cov.into());
            row.push(if s.degenerate {
                Cell::Num(f64::NAN)
            } else {
                s.rho.into()
            });
            per_obs.push(row);
        }
    }
    out.write("per_observation.csv", &per_obs.to_csv()?)?;

    let mut summary = Table::new(&["statistic", "estimate", "records", "mean", "dispersion", "min", "max"]);
    let mut density = Table::new(&["statistic", "estimate", "bandwidth", "x", "density"]);
    for &kind in &statistics {
        for (label, stats) in [("raw", &raw), ("cross-fitted", &cf)] {
            let (values, w): (Vec<f64>, Vec<f64>) = statistic_values(stats, kind)
                .into_iter()
                .zip(&weights)
                .filter_map(|(v, w)| v.map(|v| (v, *w)))
                .unzip();
            if values.is_empty() {
                return Err(Error::Numerical(format!("every {label} {kind} is degenerate")));
            }
            let s = summarize(&values, &w)?;
            summary.push(vec![
                kind.to_string().into(),
                label.into(),
                values.len().into(),
                s.mean.into(),
                s.dispersion.into(),
                s.min.into(),
                s.max.into(),
            ]);
            let (h, grid) = gaussian_kde(&values, cfg.estimate.density_points);
            for (x, f) in grid {
                density.push(vec![
                    kind.to_string().into(),
                    label.into(),
                    h.into(),
                    x.into(),
                    f.into(),
                ]);
            }
        }
    }
    out.table("summary", &summary)?;
    out.write("density.csv", &density.to_csv()?)?;

    for &kind in &statistics {
        let values = statistic_values(&cf, kind);
        let mut t = Table::new(&["feature", "modality", "records", "min", "q1", "median", "q3", "max"]);
        for (f, feat) in d.schema().features.iter().enumerate() {
            for (level, code) in feat.modalities.iter().enumerate() {
                let v: Vec<f64> = d
                    .records()
                    .iter()
                    .zip(&values)
                    .filter(|(r, _)| r.levels[f] == level)
                    .filter_map(|(_, v)| *v)
                    .collect();
                let five = five_numbers(&v).unwrap_or([f64::NAN; 5]);
                let mut row: Vec<Cell> = vec![feat.name.clone().into(), Cell::Int(*code), v.len().into()];
                row.extend(five.iter().map(|x| Cell::Num(*x)));
                t.push(row);
            }
        }
        out.table(&format!("boxplot_{kind}"), &t)?;
    }

    out.table("groups", &group_table(&d, &cf_quads, cfg, true)?)?;
    out.mark("tables");
    Ok(())
}

pub fn test_intersection(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (d, _) = load_data(cfg)?;
    let quads = cross_fitted_quads(cfg, &d)?;
    out.mark("cross-fit");
    let mut t = Table::new(&[
        "estimator",
        "group",
        "modalities",
        "level",
        "k0",
        "k",
        "statistic",
        "decision",
        "ci_low",
        "ci_high",
        "ci_clamped",
    ]);
    let mut index = 0u64;
    for scheme in &cfg.intersection.schemes {
        let groups = partition(&d, scheme)?;
        let (name, modalities) = scheme_labels(scheme, groups.len());
        for statistic in cfg.statistics() {
            for kind in estimate_kinds(statistic, false) {
                let est = group_estimates(&d, &quads, &groups, kind)?;
                let estimates: Vec<f64> = est.iter().map(|e| e.estimate).collect();
                let ses: Vec<f64> = est.iter().map(|e| e.se).collect();
                let draws = NormalDraws::new(
                    est.len(),
                    cfg.intersection.draws,
                    derive_seed(cfg.seed, tags::MC_DRAWS, index),
                );
                index += 1;
                for r in intersection_test_levels(&estimates, &ses, d.len(), &cfg.intersection.levels, &draws)? {
                    t.push(vec![
                        kind.to_string().into(),
                        name.clone().into(),
                        modalities.clone().into(),
                        r.alpha.into(),
                        r.k0.into(),
                        r.k.into(),
                        r.statistic.into(),
                        if r.rejected { "rejected" } else { "not rejected" }.into(),
                        r.ci.0.into(),
                        r.ci.1.into(),
                        r.ci_clamped.into(),
                    ]);
                }
            }
        }
    }
    out.mark("tests");
    out.table("intersection", &t)?;
    out.table("group_estimates", &group_table(&d, &quads, cfg, false)?)
}

pub fn test_sorted(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (d, _) = load_data(cfg)?;
    let s = &cfg.sorted;
    let selection = match s.selection {
        SelectionMode::FullGrid => Selection::FullGrid {
            grid: cfg.hyperopt.grid.clone(),
        },
        SelectionMode::Fixed => Selection::Fixed,
    };
    let mut splits = Table::new(&[
        "statistic",
        "split",
        "attempts",
        "group",
        "records",
        "predicted_mean",
        "estimate",
        "se",
    ]);
    let mut tests = Table::new(&["statistic", "split", "estimate", "se", "z", "p_value"]);
    let mut by_group = Table::new(&["statistic", "group", "median_predicted", "median_estimate", "median_se"]);
    let mut medians = Table::new(&[
        "statistic",
        "splits",
        "estimate",
        "se",
        "z",
        "p_value",
        "p_value_convention",
    ]);
    for statistic in cfg.statistics() {
        let run = sorted_groups_run(
            &d,
            &SortedGroupsConfig {
                groups: s.groups,
                splits: s.splits,
                main_fraction: s.main_fraction,
                statistic,
                learner: cfg.learner_config(cfg.learner),
                selection: selection.clone(),
                max_retries: s.max_retries,
                seed: derive_seed(cfg.seed, tags::SORTED_SPLIT, 0),
            },
        )?;
        out.mark(&format!("sorted {statistic}"));
        for sp in &run.splits {
            for (g, grp) in sp.groups.iter().enumerate() {
                splits.push(vec![
                    statistic.to_string().into(),
                    sp.split.into(),
                    sp.attempts.into(),
                    (g + 1).into(),
                    grp.n.into(),
                    grp.predicted_mean.into(),
                    grp.statistic.into(),
                    grp.se.into(),
                ]);
            }
            tests.push(vec![
                statistic.to_string().into(),
                sp.split.into(),
                sp.statistic.into(),
                sp.se.into(),
                sp.z.into(),
                sp.p_value.into(),
            ]);
        }
        for g in 0..s.groups {
            let col = |f: &dyn Fn(&pcp_core::inference::SortedGroup) -> f64| {
                median(&run.splits.iter().map(|sp| f(&sp.groups[g])).collect::<Vec<_>>())
            };
            by_group.push(vec![
                statistic.to_string().into(),
                (g + 1).into(),
                col(&|x| x.predicted_mean).into(),
                col(&|x| x.statistic).into(),
                col(&|x| x.se).into(),
            ]);
        }
        medians.push(vec![
            statistic.to_string().into(),
            run.splits.len().into(),
            run.median_statistic.into(),
            run.median_se.into(),
            run.median_z.into(),
            run.median_p_value.into(),
            run.p_value_convention.clone().into(),
        ]);
    }
    out.note(P_VALUE_CONVENTION);
    out.table("sorted_splits", &splits)?;
    out.table("sorted_tests", &tests)?;
    out.table("sorted_groups", &by_group)?;
    out.table("sorted_median", &medians)
}

pub fn importance(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (d, _) = load_data(cfg)?;
    let plan = cfg.split_plan();
    let mut loo = Table::new(&["learner", "omitted", "test_loss", "delta"]);
    let mut impurity = Table::new(&["learner", "feature", "score"]);
    let (train, validation, _) = split(&d, &plan)?;
    let encoder = Encoder::new(d.schema());
    for kind in [LearnerArg::Network, LearnerArg::Forest, LearnerArg::Boosted] {
        let lc = cfg.learner_config(kind);
        for e in feature_group_importance(&d, &lc, &plan)? {
            loo.push(vec![
                lc.kind().to_string().into(),
                e.omitted.into(),
                e.test_loss.into(),
                e.delta.into(),
            ]);
        }
        if kind != LearnerArg::Network {
            let model = train_learner(&lc, &train, Some(&validation), &encoder, Target::Joint)?;
            for (name, score) in impurity_importance(&model, d.schema())?.features {
                impurity.push(vec![lc.kind().to_string().into(), name.into(), score.into()]);
            }
        }
        out.mark(&format!("importance {}", lc.kind()));
    }
    out.table("importance", &loo)?;
    out.table("impurity", &impurity)
}

/// Concatenates the text tables listed in the manifests of earlier runs in
/// the output directory.
pub fn report(out: &mut Output) -> Result<()> {
    let dir = out.dir().to_path_buf();
    let mut manifests: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".manifest.json") && n != "report.manifest.json")
        .collect();
    manifests.sort();
    if manifests.is_empty() {
        return Err(Error::Invalid(format!("no run manifests in {}", dir.display())));
    }
    let mut text = String::new();
    for m in &manifests {
        let path = dir.join(m);
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let v: serde_json::Value = serde_json::from_str(&raw)?;
        let command = v["command"].as_str().unwrap_or("?");
        text.push_str(&format!(
            "# {command} (seed {}, learner {}, statistic {}, config {})\n\n",
            v["seed"],
            v["learner"].as_str().unwrap_or("?"),
            v["statistic"].as_str().unwrap_or("?"),
            v["config_fingerprint"].as_str().unwrap_or("?"),
        ));
        for f in v["files"].as_array().into_iter().flatten() {
            let name = f["name"].as_str().unwrap_or_default();
            if !name.ends_with(".txt") {
                continue;
            }
            let p = dir.join(name);
            let body = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            text.push_str(&format!("## {name}\n\n{body}\n"));
        }
    }
    out.write("report.txt", text.as_bytes())
}
