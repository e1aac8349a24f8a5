//! Argument parsing and the `simulate` / `run` commands.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ifwer_core::shrinkers::{default_refit_every, run_until_stop, ConePeelParams, Strategy};
use ifwer_core::simulation::{
    build_scorer, default_strategy, run_experiment, ExperimentConfig, Generator, GridSpec, Method, ScorerKind,
    TreeSpec, SUMMARY_HEADER,
};
use ifwer_core::{MaskingScheme, Session, SessionConfig};

use crate::dataset::Dataset;
use crate::error::{AppError, AppResult};

#[derive(Debug, Parser)]
#[command(name = "ifwer", version, about = "Interactive familywise error rate control with masked p-values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo experiment; writes one summary CSV row.
    Simulate(SimulateArgs),
    /// Automated session on a CSV dataset; prints rejected ids.
    Run(RunArgs),
    /// HTTP+JSON session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeKind {
    Tent,
    Railway,
    Gap,
    #[value(name = "gap_railway", alias = "gap-railway")]
    GapRailway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyKind {
    #[value(name = "cone_peel", alias = "cone-peel")]
    ConePeel,
    #[value(name = "subtree_prune", alias = "subtree-prune")]
    SubtreePrune,
    #[value(name = "lowest_score", alias = "lowest-score")]
    LowestScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    #[value(name = "neg_g", alias = "neg-g")]
    NegG,
    Em,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> ScorerKind {
        match s {
            ScorerArg::NegG => ScorerKind::NegG,
            ScorerArg::Em => ScorerKind::Em,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Setting {
    Grid,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodKind {
    Ifwer,
    Sidak,
    Holm,
    Bonferroni,
    Fallback,
}

/// Masking, level and shrinking options shared by `simulate` and `run`.
#[derive(Debug, Clone, Args)]
pub struct ProcedureArgs {
    #[arg(long, value_enum, default_value = "tent")]
    pub scheme: SchemeKind,
    /// Tent/railway parameter; defaults to alpha / 2.
    #[arg(long)]
    pub p_star: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub p_l: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_u: f64,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Defaults to subtree_prune on trees, cone_peel on 2-D covariates and
    /// lowest_score otherwise.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    /// Number of cone-peel sectors.
    #[arg(long, default_value_t = 5)]
    pub cones: usize,
    /// Fraction peeled per cone-peel step.
    #[arg(long, default_value_t = 0.05)]
    pub peel: f64,
    /// Hypotheses per lowest_score step.
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value = "neg_g")]
    pub scorer: ScorerArg,
    /// Randomized start when the level is already met before any exclusion.
    #[arg(long)]
    pub adjusted_start: bool,
}

impl ProcedureArgs {
    pub fn masking_scheme(&self) -> AppResult<MaskingScheme> {
        let p_star = self.p_star.unwrap_or(self.alpha / 2.0);
        let scheme = match self.scheme {
            SchemeKind::Tent => MaskingScheme::tent(p_star)?,
            SchemeKind::Railway => MaskingScheme::railway(p_star)?,
            SchemeKind::Gap => MaskingScheme::gap(self.p_l, self.p_u)?,
            SchemeKind::GapRailway => MaskingScheme::gap_railway(self.p_l, self.p_u)?,
        };
        Ok(scheme)
    }

    pub fn strategy(&self) -> Option<Strategy> {
        self.strategy.map(|s| match s {
            StrategyKind::ConePeel => Strategy::ConePeel(ConePeelParams {
                d: self.cones,
                delta: self.peel,
            }),
            StrategyKind::SubtreePrune => Strategy::SubtreePrune,
            StrategyKind::LowestScore => Strategy::LowestScore {
                batch_size: self.batch_size,
            },
        })
    }

    /// Validated session configuration; infeasible schemes fail here.
    pub fn session_config(&self, seed: u64) -> AppResult<SessionConfig> {
        let config = SessionConfig {
            k: self.k,
            adjusted_start: self.adjusted_start,
            rng_seed: seed,
            ..SessionConfig::new(self.masking_scheme()?, self.alpha)
        };
        config.validate()?;
        if let Some(s) = self.strategy() {
            if let Strategy::ConePeel(p) = s {
                p.validate()?;
            }
            if let Strategy::LowestScore { batch_size: 0 } = s {
                return Err(AppError::Usage("--batch-size must be at least 1".into()));
            }
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "grid")]
    pub setting: Setting,
    /// Non-null mean.
    #[arg(long, default_value_t = 3.0)]
    pub mu: f64,
    /// Null mean; negative values give conservative nulls.
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,
    /// Equi-correlation of the grid noise.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, value_enum, default_value = "ifwer")]
    pub method: MethodKind,
    /// Allowed failures for the fallback baseline.
    #[arg(long, default_value_t = 1)]
    pub fallback_v: usize,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Row label; defaults to the setting name.
    #[arg(long)]
    pub config_id: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn experiment(&self) -> AppResult<ExperimentConfig> {
        let proc = &self.procedure;
        let generator = match self.setting {
            Setting::Grid => Generator::Grid(GridSpec {
                mu_alt: self.mu,
                mu_null: self.mu0,
                rho: self.rho,
                ..GridSpec::default()
            }),
            Setting::Tree => {
                if self.rho != 0.0 {
                    return Err(AppError::Usage("--rho applies to the grid setting only".into()));
                }
                Generator::Tree(TreeSpec {
                    mu_alt: self.mu,
                    mu_null: self.mu0,
                    ..TreeSpec::default()
                })
            }
        };
        if self.setting == Setting::Grid && proc.strategy == Some(StrategyKind::SubtreePrune) {
            return Err(AppError::Usage("subtree_prune needs the tree setting".into()));
        }
        let method = match self.method {
            MethodKind::Ifwer => {
                proc.session_config(0)?;
                Method::Ifwer {
                    scheme: proc.masking_scheme()?,
                    strategy: proc.strategy(),
                    scorer: proc.scorer.into(),
                    k: proc.k,
                    adjusted_start: proc.adjusted_start,
                }
            }
            MethodKind::Sidak => Method::Sidak,
            MethodKind::Holm => Method::Holm,
            MethodKind::Bonferroni => Method::Bonferroni,
            MethodKind::Fallback => Method::Fallback { v: self.fallback_v },
        };
        let config = ExperimentConfig {
            config_id: self.config_id.clone().unwrap_or_else(|| match self.setting {
                Setting::Grid => "grid".into(),
                Setting::Tree => "tree".into(),
            }),
            generator,
            method,
            alpha: proc.alpha,
            reps: self.reps,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Runs the experiment and writes the header plus one summary row.
pub fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> AppResult<()> {
    let summary = run_experiment(&args.experiment()?)?;
    let text = format!("{SUMMARY_HEADER}\n{}\n", summary.csv_row());
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| AppError::io(path, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| AppError::io("<stdout>", e)),
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// CSV with columns id,p and covariates or a parent column.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the session journal.
    #[arg(long)]
    pub journal: Option<PathBuf>,
}

/// Outcome of an automated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rejected_ids: Vec<i64>,
    pub journal: String,
}

pub fn run_dataset(data: &Dataset, procedure: &ProcedureArgs, seed: u64) -> AppResult<RunOutput> {
    let config = procedure.session_config(seed)?;
    let mut session = Session::create(&data.pvalues, data.covariates.clone(), config)?;
    let dim = data.covariates.first().map_or(0, Vec::len);
    let strategy = procedure
        .strategy()
        .unwrap_or_else(|| default_strategy(data.tree.as_ref(), dim));
    let mut scorer = build_scorer(procedure.scorer.into(), data.tree.as_ref(), dim);
    run_until_stop(
        &mut session,
        &strategy,
        scorer.as_mut(),
        data.tree.as_ref(),
        default_refit_every(data.len()),
    )?;
    let rejected_ids = session
        .rejections()
        .unwrap_or_default()
        .iter()
        .map(|&i| data.ids[i])
        .collect();
    Ok(RunOutput {
        rejected_ids,
        journal: session.journal().to_string(),
    })
}

pub fn run(args: &RunArgs, stdout: &mut dyn Write) -> AppResult<()> {
    let data = Dataset::from_path(&args.data)?;
    let out = run_dataset(&data, &args.procedure, args.seed)?;
    if let Some(path) = &args.journal {
        std::fs::write(path, &out.journal).map_err(|e| AppError::io(path, e))?;
    }
    let mut text = String::new();
    for id in &out.rejected_ids {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| AppError::io("<stdout>", e))
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory for session files and journals; sessions found there are
    /// recovered at startup.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ifwer").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn simulate_flags_build_the_experiment() {
        let cli = parse(&[
            "simulate", "--setting", "grid", "--mu", "3", "--scheme", "tent", "--p-star", "0.1", "--alpha", "0.2",
            "--reps", "500", "--seed", "7",
        ]);
        let Command::Simulate(args) = cli.command else { panic!() };
        let exp = args.experiment().unwrap();
        assert_eq!(exp.reps, 500);
        assert_eq!(exp.method.scheme_label(), "tent(0.1)");
    }

    #[test]
    fn infeasible_scheme_is_a_configuration_error() {
        let cli = parse(&["simulate", "--scheme", "tent", "--p-star", "0.3", "--alpha", "0.2"]);
        let Command::Simulate(args) = cli.command else { panic!() };
        let err = args.experiment().unwrap_err();
        assert!(matches!(err, AppError::Core(ifwer_core::Error::Infeasible { .. })), "{err}");
    }

    #[test]
    fn p_star_defaults_to_half_alpha() {
        let cli = parse(&["simulate", "--alpha", "0.1"]);
        let Command::Simulate(args) = cli.command else { panic!() };
        assert_eq!(args.procedure.masking_scheme().unwrap(), MaskingScheme::tent(0.05).unwrap());
    }

    #[test]
    fn bad_flag_values_are_rejected() {
        let bad = |a: &[&str]| Cli::try_parse_from(std::iter::once("ifwer").chain(a.iter().copied())).is_err();
        assert!(bad(&["simulate", "--setting", "torus"]));
        assert!(bad(&["simulate", "--reps", "-1"]));
        let cli = parse(&["simulate", "--setting", "tree", "--rho", "0.5"]);
        let Command::Simulate(args) = cli.command else { panic!() };
        assert!(args.experiment().is_err());
        let cli = parse(&["simulate", "--strategy", "subtree_prune"]);
        let Command::Simulate(args) = cli.command else { panic!() };
        assert!(args.experiment().is_err());
    }

    #[test]
    fn toy_dataset_rejects_id_one() {
        let data = Dataset::from_reader("id,p\n1,0.01\n2,0.5\n3,0.9\n".as_bytes()).unwrap();
        let cli = parse(&["run", "--data", "x.csv", "--p-star", "0.2", "--alpha", "0.2"]);
        let Command::Run(args) = cli.command else { panic!() };
        let out = run_dataset(&data, &args.procedure, 0).unwrap();
        assert_eq!(out.rejected_ids, vec![1]);
        assert_eq!(out.journal.lines().count(), 3, "{}", out.journal);
    }
}
