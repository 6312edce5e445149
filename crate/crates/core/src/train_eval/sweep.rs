use rayon::prelude::*;
use serde::Serialize;

use super::{train, EvalError, EvalReport, RunConfig};
use crate::data::{FoldSplit, LabeledImage};
use crate::loss::{ActivationKind, Encoding, LossKind};

/// Test E_deg of one (configuration, fold) run, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub config: RunConfig,
    pub fold: usize,
    pub e_deg: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub encoding: Encoding,
    pub activation: ActivationKind,
    pub loss: LossKind,
    /// Over the folds that finished; absent if none did.
    pub report: Option<EvalReport>,
    pub failed_folds: Vec<usize>,
    /// Lowest mean E_deg of the table.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SweepSummary>,
}

/// Trains all nine configurations (sharing the other settings of
/// `template`) on every fold, using at most `jobs` threads. Run `f` of a
/// configuration is seeded with `template.seed + f`. Failed runs are recorded
/// and the sweep carries on.
pub fn sweep(template: &RunConfig, dataset: &[LabeledImage], folds: &[FoldSplit], jobs: usize) -> Result<SweepResult, EvalError> {
    let configs = template.nine();
    let tasks: Vec<(RunConfig, &FoldSplit)> = configs
        .iter()
        .flat_map(|c| folds.iter().map(move |f| (RunConfig { seed: c.seed.wrapping_add(f.fold_index as u64), ..*c }, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let runs: Vec<SweepRun> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(cfg, fold)| {
                let e_deg = train(cfg, dataset, fold).map(|r| r.report.test_e_deg).map_err(|e| {
                    log::warn!("{cfg} fold {} failed: {e}", fold.fold_index);
                    e.to_string()
                });
                SweepRun { config: *cfg, fold: fold.fold_index, e_deg }
            })
            .collect()
    });

    let mut summary: Vec<SweepSummary> = configs
        .iter()
        .map(|c| {
            let mine = runs.iter().filter(|r| (r.config.encoding, r.config.activation, r.config.loss) == (c.encoding, c.activation, c.loss));
            let (ok, failed): (Vec<_>, Vec<_>) = mine.partition(|r| r.e_deg.is_ok());
            SweepSummary {
                encoding: c.encoding,
                activation: c.activation,
                loss: c.loss,
                report: EvalReport::from_folds(ok.iter().map(|r| *r.e_deg.as_ref().expect("ok run")).collect()).ok(),
                failed_folds: failed.iter().map(|r| r.fold).collect(),
                best: false,
            }
        })
        .collect();
    let best = summary
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.report.as_ref().map(|r| (i, r.mean)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    if let Some(i) = best {
        summary[i].best = true;
    }
    Ok(SweepResult { runs, summary })
}

impl SweepResult {
    /// One row per run: `encoding,activation,loss,fold,e_deg`. Failed runs
    /// leave `e_deg` empty.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| EvalError::Config(e.to_string());
        w.write_record(["encoding", "activation", "loss", "fold", "e_deg"]).map_err(io)?;
        for r in &self.runs {
            let e = r.e_deg.as_ref().map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.config.encoding.to_string(),
                r.config.activation.to_string(),
                r.config.loss.to_string(),
                r.fold.to_string(),
                e,
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Human-readable table: encoding, activation, loss, mean E_deg and
    /// the across-fold deviation, best row starred.
    pub fn table(&self) -> String {
        let mut out = format!("{:<9}{:<10}{:<11}{:>8}{:>8}\n", "Encoding", "Activ.", "Loss", "E_deg", "±");
        for s in &self.summary {
            let (mean, std) = s.report.as_ref().map_or(("failed".to_string(), String::new()), |r| (format!("{:.2}", r.mean), format!("{:.2}", r.std)));
            let star = if s.best { " *" } else { "" };
            out += &format!("{:<9}{:<10}{:<11}{:>8}{:>8}{star}\n", s.encoding.to_string(), s.activation.to_string(), s.loss.to_string(), mean, std);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, make_folds};

    #[test]
    fn nine_rows_and_a_single_best() {
        let data = generate_dataset(20, 32, 0).unwrap();
        let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
        let folds = make_folds(&ids, 2, (0.4, 0.1, 0.5), 0).unwrap();
        let template = RunConfig { epochs: 1, batch_size: 8, ..RunConfig::optimal() };
        let res = sweep(&template, &data, &folds, 2).unwrap();
        assert_eq!(res.summary.len(), 9);
        assert_eq!(res.runs.len(), 18);
        assert_eq!(res.summary.iter().filter(|s| s.best).count(), 1);
        let csv = res.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 19);
        assert!(csv.starts_with("encoding,activation,loss,fold,e_deg\n1N,cyclic,linear,0,"));
        for s in &res.summary {
            let r = s.report.as_ref().unwrap();
            assert_eq!(r.per_fold.len(), 2);
        }
        assert_eq!(res, sweep(&template, &data, &folds, 1).unwrap());
    }
}
